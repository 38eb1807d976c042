//! Modified Bessel functions of the first kind and the ratio
//! `h_nu(x) = I_nu(x) / I_{nu-1}(x)`.
//!
//! Only the exponentially scaled value `e^{-x} I_nu(x)` is exported; every
//! quantity downstream needs ratios or logarithms, so the unscaled function is
//! never formed. The ratio itself is evaluated by continued fractions: the
//! Gauss fraction (from the three-term recurrence) for small and moderate
//! arguments, and Perron's fraction once `x` dominates the order, where it
//! converges in a handful of terms.

use statrs::function::gamma::ln_gamma;

use crate::error::{domain, Result};

/// Order of a modified Bessel function. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub fn new(nu: f64) -> Result<Self> {
        if !nu.is_finite() || nu < 0.0 {
            return domain(format!("Bessel order must be finite and >= 0, got {nu}"));
        }
        Ok(Self(nu))
    }

    /// The order `n / 2` attached to an `n`-dimensional isotropic problem.
    pub fn half_dim(n: usize) -> Self {
        Self(n as f64 / 2.0)
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `e^{-x} I_nu(x)`.
pub fn scaled_bessel_i(nu: BesselOrder, x: f64) -> Result<f64> {
    if !(x >= 0.0) || !x.is_finite() {
        return domain(format!("argument must be finite and >= 0, got {x}"));
    }
    Ok(scaled_i(nu.0, x))
}

/// `h_nu(x) = I_nu(x) / I_{nu-1}(x)` for `nu >= 1/2`, `x >= 0`.
pub fn h_ratio(nu: BesselOrder, x: f64) -> Result<f64> {
    if nu.0 < 0.5 {
        return domain(format!("h_nu requires nu >= 1/2, got {}", nu.0));
    }
    if !(x >= 0.0) || x.is_nan() {
        return domain(format!("h_nu requires x >= 0, got {x}"));
    }
    Ok(ratio(nu.0, x))
}

/// Closed-form envelope `(lower, upper)` around `h_nu(x)` for `nu > 1/2`:
///
/// ```text
/// x / (nu + sqrt(nu^2 + x^2))  <=  h_nu(x)  <=  x / (c + sqrt(c^2 + x^2)),   c = nu - 1/2
/// ```
pub fn h_ratio_bounds(nu: BesselOrder, x: f64) -> Result<(f64, f64)> {
    if nu.0 <= 0.5 {
        return domain(format!("h_nu bounds require nu > 1/2, got {}", nu.0));
    }
    if !(x >= 0.0) || x.is_nan() {
        return domain(format!("h_nu bounds require x >= 0, got {x}"));
    }
    if x.is_infinite() {
        return Ok((1.0, 1.0));
    }
    let c = nu.0 - 0.5;
    let upper = x / (c + c.hypot(x));
    let lower = x / (nu.0 + nu.0.hypot(x));
    Ok((lower, upper))
}

const CF_MAX_TERMS: usize = 100_000;
const TINY: f64 = 1e-300;

/// Modified Lentz evaluation of `b0 + a1/(b1 + a2/(b2 + ...))`.
fn lentz(b0: f64, mut term: impl FnMut(usize) -> (f64, f64)) -> f64 {
    let mut f = if b0 == 0.0 { TINY } else { b0 };
    let mut c = f;
    let mut d = 0.0;
    for k in 1..CF_MAX_TERMS {
        let (a, b) = term(k);
        d = b + a * d;
        if d == 0.0 {
            d = TINY;
        }
        c = b + a / c;
        if c == 0.0 {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() <= f64::EPSILON {
            break;
        }
    }
    f
}

/// Switch-over between the Gauss and Perron fractions. Both converge
/// everywhere; this only picks the one needing fewer terms.
fn use_perron(nu: f64, x: f64) -> bool {
    x > 20.0 + 0.5 * nu
}

/// `h_nu(x) / x`, finite at `x = 0` where it equals `1 / (2 nu)`. Requires `nu > 0`.
pub(crate) fn ratio_over_x(nu: f64, x: f64) -> f64 {
    let x = x.abs();
    if x.is_infinite() {
        return 0.0;
    }
    if use_perron(nu, x) {
        // I_nu/I_{nu-1} = x / (2nu + x - (2nu+1)x / (2nu+1+2x - (2nu+3)x / (2nu+2+2x - ...)))
        let den = lentz(2.0 * nu + x, |k| {
            let k = k as f64;
            (-(2.0 * nu + 2.0 * k - 1.0) * x, 2.0 * nu + k + 2.0 * x)
        });
        1.0 / den
    } else {
        // I_nu/I_{nu-1} = x / (2nu + x^2 / (2(nu+1) + x^2 / (2(nu+2) + ...)))
        let x2 = x * x;
        let den = lentz(2.0 * nu, |k| (x2, 2.0 * (nu + k as f64)));
        1.0 / den
    }
}

/// `h_nu(x)` for `nu > 0`; odd in `x`.
pub(crate) fn ratio(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return x.signum();
    }
    if nu == 0.5 {
        return x.tanh();
    }
    x * ratio_over_x(nu, x)
}

const SERIES_LIMIT: f64 = 30.0;

/// `e^{-x} I_nu(x)` for `nu >= -1/2`, `x >= 0`.
pub(crate) fn scaled_i(nu: f64, x: f64) -> f64 {
    debug_assert!(nu >= -0.5 && x >= 0.0);
    if x == 0.0 {
        return match nu {
            0.0 => 1.0,
            v if v < 0.0 => f64::INFINITY,
            _ => 0.0,
        };
    }
    if nu == -0.5 {
        return (2.0 / (std::f64::consts::PI * x)).sqrt() * 0.5 * (1.0 + (-2.0 * x).exp());
    }
    if nu == 0.5 {
        return (2.0 / (std::f64::consts::PI * x)).sqrt() * 0.5 * -(-2.0 * x).exp_m1();
    }
    if x <= SERIES_LIMIT {
        return (ln_series_g(nu, x) + nu * x.ln()).exp();
    }
    scaled_i_large(nu, x)
}

/// e^{-x} I_nu = e^{-x} I_{nu0} * h_{nu0+1} * ... * h_nu with nu0 the fractional part.
fn scaled_i_large(nu: f64, x: f64) -> f64 {
    let steps = nu.floor();
    let nu0 = nu - steps;
    let mut value = if nu0 == 0.5 {
        scaled_i(0.5, x)
    } else {
        scaled_i_asymptotic(nu0, x)
    };
    if steps >= 1.0 {
        let mut h = ratio(nu, x);
        value *= h;
        let mut order = nu - 1.0;
        while order > nu0 + 0.5 {
            h = 1.0 / (h + 2.0 * order / x);
            value *= h;
            order -= 1.0;
        }
    }
    value
}

/// Large-argument expansion of `e^{-x} I_nu(x)`; used for `nu < 1`, `x > 30`
/// where the smallest term is far below double precision.
fn scaled_i_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (8.0 * k as f64 * x);
        if next.abs() > term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

/// `ln(z^{-nu} e^{-z} I_nu(z))` from the power series; `nu > -1`.
fn ln_series_g(nu: f64, z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * (nu + k));
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
        k += 1.0;
    }
    -z - nu * std::f64::consts::LN_2 - ln_gamma(nu + 1.0) + sum.ln()
}

/// `ln(z^{-nu} e^{-z} I_nu(z))` for `nu >= -1/2`, `z >= 0`.
///
/// This entire function of `z` is what the noncentral chi and chi-square
/// densities need; it stays finite at `z = 0` for every order.
pub(crate) fn ln_scaled_i_over_pow(nu: f64, z: f64) -> f64 {
    debug_assert!(nu >= -0.5 && z >= 0.0);
    if nu == -0.5 {
        // z^{1/2} e^{-z} I_{-1/2}(z) = sqrt(2/pi) (1 + e^{-2z}) / 2
        return 0.5 * (2.0 / std::f64::consts::PI).ln() + (0.5 * (1.0 + (-2.0 * z).exp())).ln();
    }
    if z == 0.0 {
        return -nu * std::f64::consts::LN_2 - ln_gamma(nu + 1.0);
    }
    if z <= SERIES_LIMIT {
        ln_series_g(nu, z)
    } else {
        scaled_i(nu, z).ln() - nu * z.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order(nu: f64) -> BesselOrder {
        BesselOrder::new(nu).unwrap()
    }

    #[test]
    fn scaled_i0_at_zero_is_one() {
        assert_eq!(scaled_bessel_i(order(0.0), 0.0).unwrap(), 1.0);
        assert_eq!(scaled_bessel_i(order(3.0), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn scaled_half_order_closed_form() {
        let expect = (-1.0f64).exp() * (2.0 / std::f64::consts::PI).sqrt() * 1.0f64.sinh();
        let got = scaled_bessel_i(order(0.5), 1.0).unwrap();
        assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
        assert!((got - 0.344_951_313_888_245).abs() < 1e-14);
    }

    #[test]
    fn negative_arguments_are_rejected() {
        assert!(scaled_bessel_i(order(1.0), -1.0).is_err());
        assert!(BesselOrder::new(-0.1).is_err());
        assert!(h_ratio(order(0.25), 1.0).is_err());
        assert!(h_ratio(order(1.0), -2.0).is_err());
        assert!(h_ratio_bounds(order(0.5), 1.0).is_err());
    }

    #[test]
    fn h_half_is_tanh() {
        let h = h_ratio(order(0.5), 1.0).unwrap();
        assert!((h - 0.761594155955764888).abs() < 1e-15);
        assert_eq!(h_ratio(order(0.5), 0.0).unwrap(), 0.0);
        assert_eq!(h_ratio(order(7.0), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn h_is_below_linear_bound() {
        // h_{n/2}(x) <= x / n
        let h = h_ratio(BesselOrder::half_dim(4), 2.0).unwrap();
        assert!(h <= 0.5);
        for n in 1..40 {
            for &x in &[1e-6, 0.1, 1.0, 5.0, 33.0, 400.0] {
                let h = ratio(n as f64 / 2.0, x);
                assert!((0.0..=1.0).contains(&h));
                assert!(h <= (x / n as f64).min(1.0) * (1.0 + 1e-15));
            }
        }
    }

    #[test]
    fn perron_and_gauss_fractions_agree_at_switch() {
        for &nu in &[0.5, 1.0, 2.5, 8.0, 16.0, 40.0] {
            let x = 20.0 + 0.5 * nu;
            let perron = {
                let den = lentz(2.0 * nu + x, |k| {
                    let k = k as f64;
                    (-(2.0 * nu + 2.0 * k - 1.0) * x, 2.0 * nu + k + 2.0 * x)
                });
                x / den
            };
            let gauss = x / lentz(2.0 * nu, |k| (x * x, 2.0 * (nu + k as f64)));
            assert!((perron - gauss).abs() < 1e-14 * gauss, "nu={nu}: {perron} vs {gauss}");
        }
    }

    #[test]
    fn bounds_vanish_at_zero_and_approach_one() {
        assert_eq!(h_ratio_bounds(order(2.0), 0.0).unwrap(), (0.0, 0.0));
        let (lo, hi) = h_ratio_bounds(order(2.0), 1e8).unwrap();
        assert!(hi > 1.0 - 1e-7 && lo > 1.0 - 1e-7);
        let (lo, hi) = h_ratio_bounds(order(2.0), 3.0).unwrap();
        let h = h_ratio(order(2.0), 3.0).unwrap();
        assert!(lo <= h && h <= hi, "{lo} <= {h} <= {hi}");
    }

    #[test]
    fn series_and_recurrence_agree_at_switch() {
        for &nu in &[0.0, 1.0, 2.5, 15.0, 40.0] {
            for &x in &[SERIES_LIMIT, SERIES_LIMIT + 1e-9] {
                let series = ln_series_g(nu, x);
                let product = scaled_i_large(nu, x).ln() - nu * x.ln();
                assert!((series - product).abs() < 1e-12 * series.abs().max(1.0), "nu={nu}: {series} vs {product}");
            }
        }
    }

    #[test]
    fn ln_g_at_zero_matches_series_limit() {
        for &nu in &[0.0, 1.0, 4.5] {
            let at0 = ln_scaled_i_over_pow(nu, 0.0);
            let near = ln_scaled_i_over_pow(nu, 1e-9);
            assert!((at0 - near).abs() < 1e-8);
        }
    }

    // 50-digit reference values: (nu, x, e^{-x} I_nu(x), I_nu(x) / I_{nu-1}(x)).
    const REFERENCE: &[(f64, f64, f64, f64)] = &[
        (2.0, 10.0, 0.103_580_800_886_537_5, 0.854_185_308_323_681_6),
        (64.0, 700.0, 8.087_136_602_137_257e-4, 0.913_333_043_076_795_2),
        (64.0, 1.0, 1.577_753_720_620_326e-109, 7.812_030_554_365_379e-3),
        (3.5, 45.0, 0.051_972_098_395_912_55, 0.934_847_684_451_487_9),
        (20.0, 30.5, 1.158_157_915_501_660_2e-4, 0.543_437_281_497_515),
        (1.0, 1e-3, 4.995_003_123_542_213e-4, 4.999_999_375_000_104e-4),
        (16.0, 5.0, 1.079_009_570_213_206_2e-9, 0.152_807_853_424_352_86),
    ];

    #[test]
    fn matches_high_precision_reference() {
        for &(nu, x, scaled, ratio_ref) in REFERENCE {
            let got = scaled_bessel_i(order(nu), x).unwrap();
            assert!((got / scaled - 1.0).abs() < 1e-12, "I nu={nu} x={x}: {got} vs {scaled}");
            let h = h_ratio(order(nu), x).unwrap();
            assert!((h / ratio_ref - 1.0).abs() < 1e-13, "h nu={nu} x={x}: {h} vs {ratio_ref}");
        }
        let i0 = scaled_bessel_i(order(0.0), 700.0).unwrap();
        assert!((i0 / 0.015_081_295_651_531_358 - 1.0).abs() < 1e-12);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        fn half_integer() -> impl Strategy<Value = f64> {
            (1usize..=128).prop_map(|n| n as f64 / 2.0)
        }

        fn log_x() -> impl Strategy<Value = f64> {
            (-6.0f64..4.0).prop_map(|e| 10f64.powf(e))
        }

        proptest! {
            #[test]
            fn ratio_lies_in_unit_and_linear_envelope(nu in half_integer(), x in log_x()) {
                let h = ratio(nu, x);
                prop_assert!(h >= 0.0);
                prop_assert!(h <= (x / (2.0 * nu)).min(1.0) * (1.0 + 1e-14));
            }

            #[test]
            fn closed_form_envelope_brackets_ratio(n in 2usize..=128, x in log_x()) {
                let nu = BesselOrder::half_dim(n);
                let (lo, hi) = h_ratio_bounds(nu, x).unwrap();
                let h = h_ratio(nu, x).unwrap();
                prop_assert!(lo <= h * (1.0 + 1e-13) && h <= hi * (1.0 + 1e-13), "{} <= {} <= {}", lo, h, hi);
            }

            #[test]
            fn ratio_increases_with_argument(nu in half_integer(), x in log_x(), step in 1e-3f64..1.0) {
                let a = ratio(nu, x);
                let b = ratio(nu, x * (1.0 + step));
                prop_assert!(b >= a - 1e-12, "{} then {}", a, b);
            }

            #[test]
            fn three_term_recurrence_holds(nu in 1usize..=128, x in 1e-3f64..700.0) {
                // I_{nu-1} - I_{nu+1} = (2 nu / x) I_nu, all scaled by e^{-x}
                let nu = nu as f64 / 2.0;
                let below = scaled_i(nu - 1.0, x);
                let above = scaled_i(nu + 1.0, x);
                let mid = scaled_i(nu, x);
                let residual = (below - above - 2.0 * nu / x * mid).abs() / below;
                prop_assert!(residual <= 1e-10, "residual {}", residual);
            }
        }
    }
}
