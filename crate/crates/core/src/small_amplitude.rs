//! The small-amplitude regime.
//!
//! For radii up to a threshold `R̄_n(σ₁², σ₂²)` the input uniform on the sphere
//! of radius `R` is secrecy-capacity achieving. The threshold is the unique
//! zero of the increasing functional
//!
//! ```text
//! f(R) = ∫_{σ₁²}^{σ₂²} ( E h²(‖√s Z‖ R/s) + E h²(‖R e₁ + √s Z‖ R/s) - 1 ) / s² ds
//! ```
//!
//! with `h = h_{n/2}`. Below it the capacity has the integral form computed by
//! [`secrecy_capacity_small`].

use crate::bessel::ratio;
use crate::error::{Error, Result};
use crate::quad::{integrate_over_s, radial_expectation, QuadratureSpec};

/// Dimension and the two noise variances. `σ₁²` belongs to the legitimate
/// receiver and must be strictly smaller than the eavesdropper's `σ₂²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub n: usize,
    pub sigma1_sq: f64,
    pub sigma2_sq: f64,
}

impl ChannelParams {
    pub fn new(n: usize, sigma1_sq: f64, sigma2_sq: f64) -> Result<Self> {
        let p = Self { n, sigma1_sq, sigma2_sq };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParams("dimension n must be >= 1".into()));
        }
        if !(self.sigma1_sq > 0.0) || !self.sigma1_sq.is_finite() {
            return Err(Error::InvalidParams(format!(
                "sigma1_sq must be positive and finite, got {}",
                self.sigma1_sq
            )));
        }
        if !(self.sigma2_sq > self.sigma1_sq) || !self.sigma2_sq.is_finite() {
            return Err(Error::InvalidParams(format!(
                "need sigma1_sq < sigma2_sq < inf, got {} and {}",
                self.sigma1_sq, self.sigma2_sq
            )));
        }
        Ok(())
    }
}

/// Outcome of the threshold search. `f(bracket.0) <= 0 <= f(bracket.1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallAmplitudeResult {
    pub r_bar: f64,
    pub bracket: (f64, f64),
    /// `|f(r_bar)|`.
    pub residual: f64,
    /// Number of functional evaluations spent, including bracket expansion.
    pub iterations: usize,
}

impl SmallAmplitudeResult {
    /// Largest radius known to satisfy the threshold condition.
    pub fn feasible_radius(&self) -> f64 {
        self.bracket.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticConstant {
    pub c: f64,
    /// Value of the defining integral at `c`.
    pub residual: f64,
}

/// `E h²(‖x + √s Z‖ R/s)` with `‖x‖ = center`.
fn mean_sq_gain(n: usize, center: f64, r: f64, s: f64, spec: &QuadratureSpec) -> Result<f64> {
    let nu = n as f64 / 2.0;
    radial_expectation(n, center, s, |y| ratio(nu, y * r / s).powi(2), spec)
}

/// Integrand of `f` without the `1/s²` weight.
fn threshold_core(n: usize, r: f64, s: f64, spec: &QuadratureSpec) -> Result<f64> {
    Ok(mean_sq_gain(n, 0.0, r, s, spec)? + mean_sq_gain(n, r, r, s, spec)? - 1.0)
}

/// The functional whose zero is `R̄`. `f(0) = 1/σ₂² - 1/σ₁²` is returned exactly.
pub fn f_functional(p: &ChannelParams, r: f64, spec: &QuadratureSpec) -> Result<f64> {
    p.validate()?;
    check_radius(r)?;
    if r == 0.0 {
        return Ok(1.0 / p.sigma2_sq - 1.0 / p.sigma1_sq);
    }
    integrate_over_s(
        p.sigma1_sq,
        p.sigma2_sq,
        |s| Ok(threshold_core(p.n, r, s, spec)? / (s * s)),
        spec,
    )
}

fn check_radius(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("radius must be finite and >= 0, got {r}")))
    }
}

const MAX_DOUBLINGS: usize = 60;

/// Bisection for the zero of an increasing function with `f(0) < 0`, starting
/// from the guess `start` and doubling the upper end until the sign changes.
fn bisect_increasing<F>(mut f: F, f0: f64, start: f64, tol: f64) -> Result<SmallAmplitudeResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let mut evals = 0usize;
    let (mut lo, mut f_lo) = (0.0, f0);
    let mut hi = start;
    let mut f_hi = f(hi)?;
    evals += 1;
    let mut doublings = 0;
    while f_hi <= 0.0 {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::Bracket { doublings, upper: hi });
        }
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = f(hi)?;
        evals += 1;
        doublings += 1;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        evals += 1;
        if f_mid <= 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    // Linear interpolation inside the final bracket.
    let r_bar = if f_hi > f_lo { lo - f_lo * (hi - lo) / (f_hi - f_lo) } else { 0.5 * (lo + hi) };
    let r_bar = r_bar.clamp(lo, hi);
    let residual = f(r_bar)?.abs();
    evals += 1;
    Ok(SmallAmplitudeResult {
        r_bar,
        bracket: (lo, hi),
        residual,
        iterations: evals,
    })
}

/// `R̄_n(σ₁², σ₂²)`, to bracket width `tol`.
pub fn find_r_bar(p: &ChannelParams, tol: f64, spec: &QuadratureSpec) -> Result<SmallAmplitudeResult> {
    p.validate()?;
    let start = initial_guess(p.n, p.sigma1_sq);
    let f0 = 1.0 / p.sigma2_sq - 1.0 / p.sigma1_sq;
    bisect_increasing(|r| f_functional(p, r, spec), f0, start, tol)
}

fn initial_guess(n: usize, sigma_sq: f64) -> f64 {
    // R̄ stays within a small factor of σ √n for every variance pair.
    (n as f64 * sigma_sq).sqrt()
}

/// Closed-form radius below which the sphere input is provably optimal:
/// `σ₁² √(n (1/σ₁² - 1/σ₂²))`.
pub fn sufficient_radius(p: &ChannelParams) -> f64 {
    p.sigma1_sq * (p.n as f64 * (1.0 / p.sigma1_sq - 1.0 / p.sigma2_sq)).sqrt()
}

/// Relative slack, in units of `|f(0)|`, tolerated when checking `f(r) <= 0`.
/// It absorbs quadrature noise for radii returned by [`find_r_bar`].
const REGIME_SLACK: f64 = 1e-7;

/// Secrecy capacity in nats for `r <= R̄`:
/// `½ ∫ R² (1 - E h²(‖R e₁ + √s Z‖ R/s)) / s² ds`.
///
/// Radii outside the regime are refused with [`Error::Regime`].
pub fn secrecy_capacity_small(p: &ChannelParams, r: f64, spec: &QuadratureSpec) -> Result<f64> {
    p.validate()?;
    check_radius(r)?;
    if r == 0.0 {
        return Ok(0.0);
    }
    let f_value = f_functional(p, r, spec)?;
    let f0 = 1.0 / p.sigma1_sq - 1.0 / p.sigma2_sq;
    if f_value > REGIME_SLACK * f0 {
        return Err(Error::Regime { radius: r, f_value });
    }
    sphere_capacity_integral(p, r, spec)
}

/// The capacity integral without the regime check. Outside the regime this is
/// the secrecy density of the sphere input evaluated on its own support.
pub(crate) fn sphere_capacity_integral(p: &ChannelParams, r: f64, spec: &QuadratureSpec) -> Result<f64> {
    if r == 0.0 {
        return Ok(0.0);
    }
    let r2 = r * r;
    let v = integrate_over_s(
        p.sigma1_sq,
        p.sigma2_sq,
        |s| Ok(r2 * (1.0 - mean_sq_gain(p.n, r, r, s, spec)?) / (s * s)),
        spec,
    )?;
    Ok(0.5 * v)
}

/// Secrecy capacity of the Gaussian input under the matching average-power
/// constraint, in nats: `(n/2) ln((1 + R²/σ₁²) / (1 + R²/σ₂²))`.
pub fn gaussian_benchmark(p: &ChannelParams, r: f64) -> f64 {
    let r2 = r * r;
    0.5 * p.n as f64 * ((r2 / p.sigma1_sq).ln_1p() - (r2 / p.sigma2_sq).ln_1p())
}

/// The large-dimension equation for `c = lim R̄_n / √n`, evaluated at `c`.
pub fn asymptotic_integral(sigma1_sq: f64, sigma2_sq: f64, c: f64, spec: &QuadratureSpec) -> Result<f64> {
    let c2 = c * c;
    integrate_over_s(
        sigma1_sq,
        sigma2_sq,
        |s| {
            let at_origin = c2 / (0.5 * s.sqrt() + (0.25 * s + c2).sqrt()).powi(2);
            let spread = c2 * (c2 + s);
            let at_sphere = spread / (0.5 * s + (0.25 * s * s + spread).sqrt()).powi(2);
            Ok((at_origin + at_sphere - 1.0) / (s * s))
        },
        spec,
    )
}

/// `c(σ₁², σ₂²)`, the limit of `R̄_n / √n`, to tolerance `tol` in `c`.
pub fn asymptotic_c(sigma1_sq: f64, sigma2_sq: f64, tol: f64, spec: &QuadratureSpec) -> Result<AsymptoticConstant> {
    ChannelParams::new(1, sigma1_sq, sigma2_sq)?;
    let f0 = 1.0 / sigma2_sq - 1.0 / sigma1_sq;
    let found = bisect_increasing(
        |c| asymptotic_integral(sigma1_sq, sigma2_sq, c, spec),
        f0,
        sigma1_sq.sqrt(),
        tol,
    )?;
    Ok(AsymptoticConstant {
        c: found.r_bar,
        residual: found.residual,
    })
}

/// Point-to-point threshold `lim_{σ₂→∞} R̄_n(σ², σ₂²)`.
///
/// The limit is taken exactly: the outer integral runs to infinity, where its
/// integrand decays like `1/s²`.
pub fn r_bar_ptp(n: usize, sigma_sq: f64, tol: f64, spec: &QuadratureSpec) -> Result<SmallAmplitudeResult> {
    ChannelParams::new(n, sigma_sq, 2.0 * sigma_sq)?;
    bisect_increasing(
        |r| {
            if r == 0.0 {
                return Ok(-1.0 / sigma_sq);
            }
            integrate_over_s(
                sigma_sq,
                f64::INFINITY,
                |s| Ok(threshold_core(n, r, s, spec)? / (s * s)),
                spec,
            )
        },
        -1.0 / sigma_sq,
        initial_guess(n, sigma_sq),
        tol,
    )
}

/// MMSE threshold `lim_{ε→0} R̄_n(σ², σ² + ε)`.
///
/// Dividing `f` by the width of the variance interval and letting it shrink
/// leaves the integrand at `s = σ²`, so the limit is the zero of
/// `E h²(‖σZ‖R/σ²) + E h²(‖R e₁ + σZ‖R/σ²) - 1`.
pub fn r_bar_mmse(n: usize, sigma_sq: f64, tol: f64, spec: &QuadratureSpec) -> Result<SmallAmplitudeResult> {
    ChannelParams::new(n, sigma_sq, 2.0 * sigma_sq)?;
    bisect_increasing(
        |r| threshold_core(n, r, sigma_sq, spec),
        -1.0,
        initial_guess(n, sigma_sq),
        tol,
    )
}

/// Thresholds at two finite stand-ins for a limiting variance pair, next to the
/// exact limit. Reports how far the stand-ins are from converging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitGap {
    pub exact: f64,
    pub proxy: f64,
    pub recheck: f64,
}

impl LimitGap {
    /// `|proxy - recheck|`.
    pub fn proxy_spread(&self) -> f64 {
        (self.proxy - self.recheck).abs()
    }

    /// `|proxy - exact|`.
    pub fn proxy_error(&self) -> f64 {
        (self.proxy - self.exact).abs()
    }
}

/// Point-to-point limit against `σ₂² = 10³ σ²` and `10⁴ σ²`.
pub fn ptp_limit_gap(n: usize, sigma_sq: f64, tol: f64, spec: &QuadratureSpec) -> Result<LimitGap> {
    let exact = r_bar_ptp(n, sigma_sq, tol, spec)?.r_bar;
    let proxy = find_r_bar(&ChannelParams::new(n, sigma_sq, 1e3 * sigma_sq)?, tol, spec)?.r_bar;
    let recheck = find_r_bar(&ChannelParams::new(n, sigma_sq, 1e4 * sigma_sq)?, tol, spec)?.r_bar;
    Ok(LimitGap { exact, proxy, recheck })
}

/// MMSE limit against `σ₂² = σ²(1 + 10⁻³)` and `σ²(1 + 10⁻⁴)`.
pub fn mmse_limit_gap(n: usize, sigma_sq: f64, tol: f64, spec: &QuadratureSpec) -> Result<LimitGap> {
    let exact = r_bar_mmse(n, sigma_sq, tol, spec)?.r_bar;
    let proxy = find_r_bar(&ChannelParams::new(n, sigma_sq, sigma_sq * (1.0 + 1e-3))?, tol, spec)?.r_bar;
    let recheck = find_r_bar(&ChannelParams::new(n, sigma_sq, sigma_sq * (1.0 + 1e-4))?, tol, spec)?.r_bar;
    Ok(LimitGap { exact, proxy, recheck })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn params(n: usize, s1: f64, s2: f64) -> ChannelParams {
        ChannelParams::new(n, s1, s2).unwrap()
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(matches!(ChannelParams::new(1, 2.0, 1.0), Err(Error::InvalidParams(_))));
        assert!(ChannelParams::new(0, 1.0, 2.0).is_err());
        assert!(ChannelParams::new(1, 1.0, 1.0).is_err());
        assert!(ChannelParams::new(1, -1.0, 1.0).is_err());
        assert!(ChannelParams::new(1, 1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn functional_at_origin_is_exact() {
        let p = params(3, 1.0, 10.0);
        assert_eq!(f_functional(&p, 0.0, &spec()).unwrap(), 0.1 - 1.0);
    }

    #[test]
    fn functional_vanishes_near_tabulated_threshold() {
        let p = params(1, 1.0, 10.0);
        let below = f_functional(&p, 1.517, &spec()).unwrap();
        let above = f_functional(&p, 1.519, &spec()).unwrap();
        assert!(below < 0.0 && above > 0.0, "{below} {above}");
    }

    #[test]
    fn thresholds_match_table_cells() {
        for &(n, s2, expect) in &[(2usize, 1.5, 1.687), (8, 10.0, 4.646), (1, 10.0, 1.518)] {
            let got = find_r_bar(&params(n, 1.0, s2), 1e-4, &spec()).unwrap();
            assert!((got.r_bar - expect).abs() < 5e-4, "n={n} s2={s2}: {got:?}");
            let (lo, hi) = got.bracket;
            assert!(lo <= got.r_bar && got.r_bar <= hi && hi - lo <= 1e-4);
        }
    }

    #[test]
    fn small_capacity_zero_at_origin_and_below_benchmark() {
        let p = params(2, 1.0, 1.5);
        assert_eq!(secrecy_capacity_small(&p, 0.0, &spec()).unwrap(), 0.0);
        let cs = secrecy_capacity_small(&p, 1.0, &spec()).unwrap();
        let cg = gaussian_benchmark(&p, 1.0);
        assert!(cs > 0.0 && cs <= cg, "{cs} vs {cg}");
    }

    #[test]
    fn capacity_refused_outside_regime() {
        let p = params(2, 1.0, 1.5);
        let err = secrecy_capacity_small(&p, 2.5, &spec()).unwrap_err();
        assert!(matches!(err, Error::Regime { .. }));
    }

    #[test]
    fn benchmark_values() {
        let p = params(2, 1.0, 2.0);
        assert_eq!(gaussian_benchmark(&p, 0.0), 0.0);
        assert!((gaussian_benchmark(&p, 1.0) - (2.0f64 / 1.5).ln()).abs() < 1e-15);
        assert!((gaussian_benchmark(&p, 1.0) - 0.287_682).abs() < 1e-6);
    }

    #[test]
    fn sufficient_radius_values() {
        assert!((sufficient_radius(&params(4, 1.0, 2.0)) - 2f64.sqrt()).abs() < 1e-15);
        assert!((sufficient_radius(&params(1, 1.0, 1e6)) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn asymptotic_integral_vanishes_at_constant() {
        let v = asymptotic_integral(1.0, 1.5, 1.265_462_174_192_75, &spec()).unwrap();
        assert!(v.abs() < 1e-6, "{v}");
    }

    #[test]
    fn asymptotic_constant_for_moderate_ratio() {
        let c = asymptotic_c(1.0, 1.5, 1e-9, &spec()).unwrap();
        assert!((c.c - 1.265_46).abs() < 1e-5, "{c:?}");
    }

    #[test]
    fn limits_sit_beside_their_proxies() {
        let ptp = r_bar_ptp(1, 1.0, 1e-5, &spec()).unwrap().r_bar;
        assert!((ptp - 1.666).abs() < 5e-4, "{ptp}");
        let mmse = r_bar_mmse(1, 1.0, 1e-5, &spec()).unwrap().r_bar;
        assert!((mmse - 1.057).abs() < 5e-4, "{mmse}");
    }

    #[test]
    fn bracket_failure_is_reported() {
        let err = bisect_increasing(|_| Ok(-1.0), -1.0, 1.0, 1e-3).unwrap_err();
        assert!(matches!(err, Error::Bracket { doublings: 60, .. }));
    }
}
