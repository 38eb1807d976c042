use wiretap_amp::*;

const TABLE_N: [usize; 6] = [1, 2, 4, 8, 16, 32];

fn spec() -> QuadratureSpec {
    QuadratureSpec::default()
}

#[test]
fn merged_radii_limit_matches_cdf_difference_quotient() {
    let h = 1e-4;
    for (k, rho) in [(2usize, 1.0f64), (3, 0.4), (6, 2.5), (9, 1.7)] {
        let near = NoncentralChiSquare::new(k, rho * rho).unwrap();
        let far = NoncentralChiSquare::new(k, (rho + h) * (rho + h)).unwrap();
        for y in [0.5, 2.0, 4.0, 9.0] {
            let quotient = (near.cdf(y) - far.cdf(y)) / (h * (2.0 * rho + h));
            let limit = q_limit_pdf(k, rho * rho, y).unwrap();
            assert!((quotient - limit).abs() <= 1e-4, "k={k} rho={rho} y={y}: {quotient} vs {limit}");
        }
    }
}

#[test]
fn threshold_grows_with_eavesdropper_variance() {
    for n in TABLE_N {
        let values: Vec<f64> = [1.001, 1.5, 10.0, 1000.0]
            .iter()
            .map(|&s2| find_r_bar(&ChannelParams::new(n, 1.0, s2).unwrap(), 1e-6, &spec()).unwrap().r_bar)
            .collect();
        assert!(values.windows(2).all(|w| w[0] < w[1]), "n={n}: {values:?}");
    }
}

#[test]
fn scaled_threshold_climbs_toward_constant() {
    for s2 in [1.001, 1.5, 10.0] {
        let c = asymptotic_c(1.0, s2, 1e-9, &spec()).unwrap().c;
        let scaled: Vec<f64> = (1..=35)
            .map(|n| {
                let p = ChannelParams::new(n, 1.0, s2).unwrap();
                find_r_bar(&p, 1e-7, &spec()).unwrap().r_bar / (n as f64).sqrt()
            })
            .collect();
        assert!(scaled.windows(2).all(|w| w[0] < w[1]), "σ₂²={s2}");
        assert!(scaled[34] < c && c - scaled[34] < 0.01, "σ₂²={s2}: {} vs {c}", scaled[34]);
    }
}

#[test]
fn sufficient_radius_sits_below_threshold() {
    for s2 in [1000.0, 10.0, 1.5, 1.001] {
        for n in TABLE_N {
            let p = ChannelParams::new(n, 1.0, s2).unwrap();
            let bound = sufficient_radius(&p);
            let r_bar = find_r_bar(&p, 1e-6, &spec()).unwrap().r_bar;
            assert!(bound <= r_bar, "n={n} σ₂²={s2}: {bound} > {r_bar}");
        }
    }
}

#[test]
fn sphere_density_peaks_on_its_support_below_threshold() {
    for (n, s2, frac) in [(1, 10.0, 0.9), (2, 1.5, 1.0), (4, 3.0, 0.6)] {
        let p = ChannelParams::new(n, 1.0, s2).unwrap();
        let r = frac * find_r_bar(&p, 1e-8, &spec()).unwrap().feasible_radius();
        let pmf = RadialPmf::single_sphere(r).unwrap();
        let xi = SecrecyDensity::new(&p, &pmf, &spec()).unwrap();
        let top = xi.at(r).unwrap();
        for i in 0..40 {
            let x = r * i as f64 / 40.0;
            assert!(xi.at(x).unwrap() <= top + 1e-12, "n={n} x={x}");
        }
    }
}

#[test]
fn optimizer_improves_monotonically_and_levels_support() {
    let p = ChannelParams::new(2, 1.0, 1.5).unwrap();
    let cfg = OptimizerConfig::default();
    let mut previous = 0.0;
    for r in [1.0, 2.0, 2.5, 3.0] {
        let out = optimize(&p, r, &cfg).unwrap();
        assert!(out.converged);
        assert!(out.rate_history.windows(2).all(|w| w[1] >= w[0] - 1e-10), "R={r}");
        assert_eq!(*out.rate_history.last().unwrap(), out.rate);
        assert!(out.rate >= previous, "budget monotonicity at R={r}");
        previous = out.rate;

        let xi = SecrecyDensity::new(&p, &out.pmf, &spec()).unwrap();
        for &support in out.pmf.radii() {
            let v = xi.at(support).unwrap();
            assert!((v - out.rate).abs() <= cfg.kkt_tol, "R={r} at {support}: {v} vs {}", out.rate);
        }
    }
}

#[test]
fn certified_law_survives_independent_check() {
    let p = ChannelParams::new(2, 1.0, 1.5).unwrap();
    let out = optimize(&p, 2.5, &OptimizerConfig::default()).unwrap();
    let report = kkt_verify(&p, &out.pmf, 2.5, 1e-4, &spec()).unwrap();
    assert!(report.certified());
    assert!((report.capacity_estimate - out.rate).abs() < 1e-9);
    assert!(out.rate < gaussian_benchmark(&p, 2.5));
}
