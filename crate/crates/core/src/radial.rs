//! Radial laws of shifted Gaussian vectors.
//!
//! `‖x + Z‖²` for `Z ~ N(0, I_k)` is noncentral chi-square with `k` degrees of
//! freedom and noncentrality `λ = ‖x‖²`. Everything here works on that squared
//! scale; the chi-scale density used by the quadrature engine is the one
//! exception and is kept crate-private.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::bessel::ln_scaled_i_over_pow;
use crate::error::{domain, Result};

/// Hard cap on Poisson-mixture terms before switching to the Bessel form.
const MAX_MIXTURE_TERMS: usize = 10_000;
/// Terms smaller than this fraction of the running sum are dropped.
const MIXTURE_REL_CUTOFF: f64 = 1e-17;

/// Samples per independently seeded generator stream.
const SAMPLE_CHUNK: usize = 1 << 14;

/// Law of `‖x + Z‖²` with `Z ~ N(0, I_dof)` and `‖x‖² = lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoncentralChiSquare {
    dof: usize,
    lambda: f64,
}

impl NoncentralChiSquare {
    pub fn new(dof: usize, lambda: f64) -> Result<Self> {
        if dof == 0 {
            return domain("degrees of freedom must be >= 1");
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return domain(format!("noncentrality must be finite and >= 0, got {lambda}"));
        }
        Ok(Self { dof, lambda })
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn mean(&self) -> f64 {
        self.dof as f64 + self.lambda
    }

    pub fn variance(&self) -> f64 {
        2.0 * (self.dof as f64 + 2.0 * self.lambda)
    }

    /// Density at `y > 0`, from the Poisson mixture of central chi-squares.
    pub fn pdf(&self, y: f64) -> Result<f64> {
        check_positive(y)?;
        Ok(self.pdf_poisson(y))
    }

    /// `Σ_i Pois(i; λ/2) f_{χ²_{k+2i}}(y)`, summed outward from the largest
    /// term. Falls back to the Bessel form when the mixture is too wide.
    pub fn pdf_poisson(&self, y: f64) -> f64 {
        if y.is_infinite() {
            return 0.0;
        }
        let half_k = self.dof as f64 / 2.0;
        if self.lambda == 0.0 {
            return central_pdf(half_k, y);
        }
        // Ratio of consecutive terms: λy / (4 (i+1) (k/2+i)); start at its crossing of 1.
        let q = self.lambda * y / 4.0;
        let b = half_k + 1.0;
        let root = 0.5 * (-b + (b * b - 4.0 * (half_k - q)).max(0.0).sqrt());
        let mode = root.max(0.0).ceil() as usize;
        let ln_weight = |i: usize| {
            let i = i as f64;
            -0.5 * self.lambda + i * (0.5 * self.lambda).ln() - ln_gamma(i + 1.0)
        };
        let peak = (ln_weight(mode) + ln_central_pdf(half_k + mode as f64, y)).exp();
        if peak == 0.0 {
            return self.pdf_bessel(y);
        }
        let ratio = |i: usize| q / ((i as f64 + 1.0) * (half_k + i as f64));

        let mut sum = peak;
        let mut terms = 1usize;
        let mut term = peak;
        let mut i = mode;
        loop {
            term *= ratio(i);
            i += 1;
            sum += term;
            terms += 1;
            if term <= MIXTURE_REL_CUTOFF * sum {
                break;
            }
            if terms >= MAX_MIXTURE_TERMS {
                return self.pdf_bessel(y);
            }
        }
        term = peak;
        let mut i = mode;
        while i > 0 {
            i -= 1;
            term /= ratio(i);
            sum += term;
            terms += 1;
            if term <= MIXTURE_REL_CUTOFF * sum {
                break;
            }
            if terms >= MAX_MIXTURE_TERMS {
                return self.pdf_bessel(y);
            }
        }
        sum
    }

    /// `½ y^ν exp(-(√y - √λ)²/2) (√(λy))^{-ν} e^{-√(λy)} I_ν(√(λy))`, `ν = k/2 - 1`.
    pub fn pdf_bessel(&self, y: f64) -> f64 {
        if y.is_infinite() {
            return 0.0;
        }
        let nu = self.dof as f64 / 2.0 - 1.0;
        let gap = y.sqrt() - self.lambda.sqrt();
        let ln_pdf = -std::f64::consts::LN_2 + nu * y.ln() - 0.5 * gap * gap
            + ln_scaled_i_over_pow(nu, (self.lambda * y).sqrt());
        ln_pdf.exp()
    }

    /// `d/dy pdf(y) = ½ f_{k-2}(y) - ½ f_k(y)` at the same noncentrality; needs `k >= 3`.
    pub fn pdf_derivative(&self, y: f64) -> Result<f64> {
        if self.dof < 3 {
            return domain(format!("pdf derivative needs dof >= 3, got {}", self.dof));
        }
        check_positive(y)?;
        let lower = Self { dof: self.dof - 2, lambda: self.lambda };
        Ok(0.5 * lower.pdf_poisson(y) - 0.5 * self.pdf_poisson(y))
    }

    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        if y.is_infinite() {
            return 1.0;
        }
        self.poisson_sum(|a| gamma_lr(a, y / 2.0))
    }

    /// Survival function `1 - cdf(y)`, accurate in the upper tail.
    pub fn sf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 1.0;
        }
        if y.is_infinite() {
            return 0.0;
        }
        self.poisson_sum(|a| gamma_ur(a, y / 2.0))
    }

    /// `Σ_i Pois(i; λ/2) term(k/2 + i)` for terms bounded by one.
    fn poisson_sum(&self, term: impl Fn(f64) -> f64) -> f64 {
        let half_k = self.dof as f64 / 2.0;
        if self.lambda == 0.0 {
            return term(half_k);
        }
        let rate = 0.5 * self.lambda;
        let mode = rate.floor() as usize;
        let ln_w = |i: usize| -rate + i as f64 * rate.ln() - ln_gamma(i as f64 + 1.0);
        let w_mode = ln_w(mode).exp();
        let mut sum = w_mode * term(half_k + mode as f64);
        let mut w = w_mode;
        let mut i = mode;
        while w > 1e-20 {
            i += 1;
            w *= rate / i as f64;
            sum += w * term(half_k + i as f64);
        }
        let mut w = w_mode;
        let mut i = mode;
        while i > 0 && w > 1e-20 {
            w *= i as f64 / rate;
            i -= 1;
            sum += w * term(half_k + i as f64);
        }
        sum.min(1.0)
    }

    /// `count` draws, reproducible for a given seed regardless of thread count.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<f64> {
        let mut out = vec![0.0; count];
        let shift = self.lambda.sqrt();
        let rest = (self.dof > 1).then(|| ChiSquared::new((self.dof - 1) as f64).unwrap());
        out.par_chunks_mut(SAMPLE_CHUNK)
            .enumerate()
            .for_each(|(chunk, slot)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(chunk as u64);
                for v in slot.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let lead = (z + shift) * (z + shift);
                    *v = lead + rest.map_or(0.0, |d| d.sample(&mut rng));
                }
            });
        out
    }
}

fn check_positive(y: f64) -> Result<()> {
    if y > 0.0 {
        Ok(())
    } else {
        domain(format!("chi-square density needs y > 0, got {y}"))
    }
}

fn ln_central_pdf(half_k: f64, y: f64) -> f64 {
    (half_k - 1.0) * y.ln() - 0.5 * y - half_k * std::f64::consts::LN_2 - ln_gamma(half_k)
}

fn central_pdf(half_k: f64, y: f64) -> f64 {
    ln_central_pdf(half_k, y).exp()
}

/// Limit of the cdf-difference density `f_Q` as the two input radii merge:
/// noncentral chi-square with `k + 2` degrees of freedom.
pub fn q_limit_pdf(k: usize, rho_over_sigma_sq: f64, y: f64) -> Result<f64> {
    NoncentralChiSquare::new(k + 2, rho_over_sigma_sq)?.pdf(y)
}

pub fn sample_radial(d: &NoncentralChiSquare, count: usize, seed: u64) -> Vec<f64> {
    d.sample(count, seed)
}

/// Log-density of `‖μ e₁ + Z‖` for `Z ~ N(0, I_k)` at `r >= 0`:
/// `r^{k-1} e^{-(r-μ)²/2} g(μ r)` with `g(z) = z^{-ν} e^{-z} I_ν(z)`, `ν = k/2 - 1`.
pub(crate) fn ln_chi_pdf(k: usize, mu: f64, r: f64) -> f64 {
    if r == 0.0 {
        return if k == 1 { ln_chi_pdf_at_zero(mu) } else { f64::NEG_INFINITY };
    }
    let nu = k as f64 / 2.0 - 1.0;
    let gap = r - mu;
    (k as f64 - 1.0) * r.ln() - 0.5 * gap * gap + ln_scaled_i_over_pow(nu, mu * r)
}

fn ln_chi_pdf_at_zero(mu: f64) -> f64 {
    // k = 1: density of |μ + Z| at 0 is 2 φ(μ)
    0.5 * (2.0 / std::f64::consts::PI).ln() - 0.5 * mu * mu
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ncx2(k: usize, lambda: f64) -> NoncentralChiSquare {
        NoncentralChiSquare::new(k, lambda).unwrap()
    }

    #[test]
    fn two_dof_central_is_exponential() {
        for &y in &[0.1, 1.0, 3.0, 20.0] {
            let p = ncx2(2, 0.0).pdf(y).unwrap();
            assert!((p - (-y / 2.0f64).exp() / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(NoncentralChiSquare::new(0, 1.0).is_err());
        assert!(NoncentralChiSquare::new(2, -1.0).is_err());
        assert!(ncx2(2, 1.0).pdf(0.0).is_err());
        assert!(ncx2(2, 1.0).pdf_derivative(1.0).is_err());
        assert!(ncx2(3, 1.0).pdf_derivative(-1.0).is_err());
    }

    #[test]
    fn reference_density_values() {
        // mpmath, 50 digits
        let p = ncx2(4, 3.0).pdf(5.0).unwrap();
        assert!((p / 0.102_822_943_764_679_14 - 1.0).abs() < 1e-13, "{p}");
        let p = q_limit_pdf(2, 1.0, 3.0).unwrap();
        assert!((p / 0.144_631_194_566_181_26 - 1.0).abs() < 1e-13, "{p}");
    }

    #[test]
    fn q_limit_with_zero_shift_is_central() {
        for &y in &[0.5, 2.0, 9.0] {
            let p = q_limit_pdf(3, 0.0, y).unwrap();
            assert!((p - central_pdf(2.5, y)).abs() < 1e-15);
        }
    }

    #[test]
    fn derivative_vanishes_at_central_mode() {
        // χ²₄ has its mode at y = 2
        let d = ncx2(4, 0.0).pdf_derivative(2.0).unwrap();
        assert!(d.abs() < 1e-16);
    }

    #[test]
    fn derivative_matches_five_point_stencil() {
        let d = ncx2(6, 2.0);
        let y = 4.0;
        let h = 1e-3;
        let f = |t: f64| d.pdf(t).unwrap();
        let fd = (f(y - 2.0 * h) - 8.0 * f(y - h) + 8.0 * f(y + h) - f(y + 2.0 * h)) / (12.0 * h);
        let exact = d.pdf_derivative(y).unwrap();
        assert!(((fd - exact) / exact).abs() < 1e-6, "{fd} vs {exact}");
    }

    #[test]
    fn derivative_changes_sign_once() {
        let d = ncx2(8, 5.0);
        let signs: Vec<bool> = (1..2000)
            .map(|i| d.pdf_derivative(i as f64 * 0.02).unwrap() > 0.0)
            .collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 1);
    }

    #[test]
    fn cdf_and_sf_are_complementary() {
        let d = ncx2(5, 7.5);
        for &y in &[0.5, 4.0, 12.0, 30.0] {
            assert!((d.cdf(y) + d.sf(y) - 1.0).abs() < 1e-14);
        }
        assert!((d.cdf(1e4) - 1.0).abs() < 1e-8);
        assert_eq!(d.cdf(0.0), 0.0);
    }

    #[test]
    fn chi_density_matches_squared_scale() {
        // f_r(r) = 2 r f_{r²}(r²)
        for &(k, mu, r) in &[(1usize, 0.0, 0.3), (1, 2.0, 1.5), (3, 1.2, 2.0), (10, 5.0, 4.0)] {
            let lhs = ln_chi_pdf(k, mu, r).exp();
            let rhs = 2.0 * r * ncx2(k, mu * mu).pdf(r * r).unwrap();
            assert!((lhs / rhs - 1.0).abs() < 1e-12, "k={k}: {lhs} vs {rhs}");
        }
        let at0 = ln_chi_pdf(1, 0.7, 0.0).exp();
        let near = ln_chi_pdf(1, 0.7, 1e-9).exp();
        assert!((at0 - near).abs() < 1e-8);
    }

    #[test]
    fn sampling_is_deterministic_and_centered() {
        let d = ncx2(4, 9.0);
        let a = d.sample(50_000, 7);
        let b = sample_radial(&d, 50_000, 7);
        assert_eq!(a, b);
        assert_ne!(a, d.sample(50_000, 8));
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        let se = (d.variance() / a.len() as f64).sqrt();
        assert!((mean - 13.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn sampling_independent_of_thread_count() {
        let d = ncx2(3, 1.0);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| d.sample(100_000, 42));
        let many = d.sample(100_000, 42);
        assert_eq!(single, many);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn mixture_and_bessel_forms_agree(
                k in 1usize..=40,
                lambda in prop::sample::select(vec![0.0, 1.0, 10.0, 100.0]),
                e in -3.0f64..3.0,
            ) {
                let y = 10f64.powf(e);
                let d = ncx2(k, lambda);
                let a = d.pdf_poisson(y);
                let b = d.pdf_bessel(y);
                prop_assert!((a - b).abs() <= 1e-10 * b, "k={} λ={} y={}: {} vs {}", k, lambda, y, a, b);
            }

            #[test]
            fn cdf_is_nondecreasing(k in 1usize..=30, lambda in 0.0f64..50.0, y in 0.01f64..100.0, dy in 0.0f64..5.0) {
                let d = ncx2(k, lambda);
                prop_assert!(d.cdf(y + dy) >= d.cdf(y) - 1e-15);
            }

            #[test]
            fn larger_shift_dominates(k in 1usize..=30, l1 in 0.0f64..40.0, dl in 0.01f64..20.0, y in 0.01f64..100.0) {
                let near = ncx2(k, l1).cdf(y);
                let far = ncx2(k, l1 + dl).cdf(y);
                prop_assert!(near >= far - 1e-14);
            }
        }
    }
}
