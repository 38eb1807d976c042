//! Expectation engine.
//!
//! Every expectation over an `n`-dimensional Gaussian that this crate needs has
//! the form `E[φ(‖x + √s Z‖)]`, which reduces to a one-dimensional integral
//! against the noncentral chi density. Integrals are computed by globally
//! adaptive 21-point Gauss–Kronrod quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{domain, Error, Result};
use crate::radial::{ln_chi_pdf, NoncentralChiSquare};

/// Tolerances and Monte-Carlo settings shared by all integrals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            max_subdivisions: 2000,
            mc_samples: 1_000_000,
            seed: 0x5eed,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return domain("quadrature tolerances must be positive");
        }
        if self.max_subdivisions == 0 {
            return domain("max_subdivisions must be >= 1");
        }
        if self.mc_samples < 1000 {
            return domain("mc_samples must be >= 1000");
        }
        Ok(())
    }

    /// Same settings with both tolerances scaled by `factor`.
    pub fn tightened(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol * factor,
            ..*self
        }
    }
}

// QUADPACK qk21 abscissae and weights.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

const ROUNDING_FLOOR: f64 = 100.0 * f64::EPSILON;

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    /// Kronrod estimate of `∫|f|`, which sets the rounding floor.
    magnitude: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        // Largest error first; ties broken by position so the order is total.
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn gauss_kronrod<F>(f: &mut F, a: f64, b: f64) -> Result<Panel>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut kronrod = fc * WGK[10];
    let mut abs_k = kronrod.abs();
    let mut gauss = 0.0;
    let mut f1 = [0.0; 10];
    let mut f2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let lo = f(center - dx)?;
        let hi = f(center + dx)?;
        f1[j] = lo;
        f2[j] = hi;
        kronrod += WGK[j] * (lo + hi);
        abs_k += WGK[j] * (lo.abs() + hi.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (lo + hi);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        asc += WGK[j] * ((f1[j] - mean).abs() + (f2[j] - mean).abs());
    }
    let value = kronrod * half;
    let abs_k = abs_k * half.abs();
    let asc = asc * half.abs();
    let mut error = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && error != 0.0 {
        error = asc * (200.0 * error / asc).powf(1.5).min(1.0);
    }
    if abs_k > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * abs_k);
    }
    if !value.is_finite() {
        return domain(format!("integrand is not finite on [{a}, {b}]"));
    }
    Ok(Panel { a, b, value, error, magnitude: abs_k })
}

/// Adaptive integral of a fallible integrand over `[points[0], points.last()]`,
/// with the interior points used as initial breakpoints.
pub fn integrate_with_breaks<F>(mut f: F, points: &[f64], spec: &QuadratureSpec) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if points.len() < 2 {
        return domain("integration needs at least two points");
    }
    if points.windows(2).any(|w| !(w[0] < w[1])) || points.iter().any(|p| !p.is_finite()) {
        return domain("integration breakpoints must be finite and strictly increasing");
    }
    let mut heap = BinaryHeap::new();
    for w in points.windows(2) {
        heap.push(gauss_kronrod(&mut f, w[0], w[1])?);
    }
    let mut total: f64 = heap.iter().map(|p| p.value).sum();
    let mut error: f64 = heap.iter().map(|p| p.error).sum();
    let mut magnitude: f64 = heap.iter().map(|p| p.magnitude).sum();
    let mut splits = 0usize;
    loop {
        // When the integrand cancels, rel_tol * |I| can sit below what
        // double precision resolves; accept at the rounding floor.
        let floor = ROUNDING_FLOOR * magnitude;
        let target = spec.abs_tol.max(spec.rel_tol * total.abs()).max(floor);
        if error <= target {
            break;
        }
        if splits >= spec.max_subdivisions {
            return Err(Error::NonConvergence {
                lower: points[0],
                upper: points[points.len() - 1],
                estimate: total,
                error,
                subdivisions: splits,
            });
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if !(worst.a < mid && mid < worst.b) {
            // Panel at floating-point resolution; its error cannot shrink further.
            return Err(Error::NonConvergence {
                lower: points[0],
                upper: points[points.len() - 1],
                estimate: total,
                error,
                subdivisions: splits,
            });
        }
        let left = gauss_kronrod(&mut f, worst.a, mid)?;
        let right = gauss_kronrod(&mut f, mid, worst.b)?;
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        magnitude += left.magnitude + right.magnitude - worst.magnitude;
        heap.push(left);
        heap.push(right);
        splits += 1;
        if splits.is_multiple_of(64) {
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    // Sum in position order so the result does not depend on heap layout.
    let mut panels = heap.into_vec();
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    Ok(panels.iter().map(|p| p.value).sum())
}

/// Adaptive integral of `f` over the finite interval `[a, b]`.
pub fn integrate<F>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a == b {
        return Ok(0.0);
    }
    integrate_with_breaks(f, &[a, b], spec)
}

/// `∫_lower^upper g(s) ds` for the noise-variance integrals. `upper` may be
/// infinite.
///
/// All of these integrands decay like `1/s²`, so the integral is taken in
/// `t = 1/s`, which maps an infinite range onto a finite one.
pub fn integrate_over_s<F>(lower: f64, upper: f64, mut integrand: F, spec: &QuadratureSpec) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lower > 0.0) || !(upper > lower) || lower.is_infinite() {
        return domain(format!("need 0 < lower < upper, got [{lower}, {upper}]"));
    }
    let t_lo = if upper.is_infinite() { 0.0 } else { 1.0 / upper };
    let t_hi = 1.0 / lower;
    integrate(
        |t| {
            let s = 1.0 / t;
            Ok(integrand(s)? * s * s)
        },
        t_lo,
        t_hi,
        spec,
    )
}

/// Half-width, in units of the unit-variance chi scale, of the window that
/// carries all but a negligible fraction of the chi mass.
const CHI_WINDOW: f64 = 13.0;

/// `E[φ(‖x + √s Z‖)]` for `Z ~ N(0, I_n)` with `‖x‖ = center_norm`, for a
/// fallible `φ`.
pub fn try_radial_expectation<F>(
    n: usize,
    center_norm: f64,
    s: f64,
    mut phi: F,
    spec: &QuadratureSpec,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if n == 0 {
        return domain("dimension must be >= 1");
    }
    if !(s > 0.0) || !s.is_finite() {
        return domain(format!("noise variance must be positive, got {s}"));
    }
    if !(center_norm >= 0.0) || !center_norm.is_finite() {
        return domain(format!("center norm must be finite and >= 0, got {center_norm}"));
    }
    // ‖x + √s Z‖ = √s ‖x/√s + Z‖ and the unit-scale norm concentrates
    // within O(1) of sqrt(μ² + n).
    let sd = s.sqrt();
    let mu = center_norm / sd;
    let m = (mu * mu + n as f64).sqrt();
    let lo = (m - CHI_WINDOW).max(0.0);
    let hi = m + CHI_WINDOW;
    let mut points = vec![lo];
    for p in [m - 3.0, m, m + 3.0] {
        if p > lo {
            points.push(p);
        }
    }
    points.push(hi);
    integrate_with_breaks(
        |r| {
            let w = ln_chi_pdf(n, mu, r).exp();
            if w == 0.0 {
                return Ok(0.0);
            }
            Ok(w * phi(sd * r)?)
        },
        &points,
        spec,
    )
}

/// `E[φ(‖x + √s Z‖)]` for `Z ~ N(0, I_n)` with `‖x‖ = center_norm`.
pub fn radial_expectation<F>(n: usize, center_norm: f64, s: f64, phi: F, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    try_radial_expectation(n, center_norm, s, |r| Ok(phi(r)), spec)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Seeded Monte-Carlo counterpart of [`radial_expectation`].
pub fn mc_radial_expectation<F>(n: usize, center_norm: f64, s: f64, phi: F, spec: &QuadratureSpec) -> Result<McEstimate>
where
    F: Fn(f64) -> f64,
{
    spec.validate()?;
    if !(s > 0.0) {
        return domain(format!("noise variance must be positive, got {s}"));
    }
    let law = NoncentralChiSquare::new(n, center_norm * center_norm / s)?;
    let draws = law.sample(spec.mc_samples, spec.seed);
    let count = draws.len() as f64;
    let values: Vec<f64> = draws.iter().map(|q| phi((s * q).sqrt())).collect();
    let mean = values.iter().sum::<f64>() / count;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1.0);
    Ok(McEstimate {
        mean,
        std_error: (var / count).sqrt(),
        samples: draws.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::ratio;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| Ok(x.powi(5) - 3.0 * x), 0.0, 2.0, &spec()).unwrap();
        assert!((v - (64.0 / 6.0 - 6.0)).abs() < 1e-13);
    }

    #[test]
    fn peaked_integrand_needs_subdivision() {
        let f = |x: f64| Ok(1.0 / (1e-4 + (x - 0.3) * (x - 0.3)));
        let exact = 100.0 * ((0.7f64 / 0.01).atan() + (0.3f64 / 0.01).atan());
        let v = integrate(f, 0.0, 1.0, &spec()).unwrap();
        assert!((v / exact - 1.0).abs() < 1e-9, "{v} vs {exact}");
    }

    #[test]
    fn subdivision_limit_reports_non_convergence() {
        let tight = QuadratureSpec { max_subdivisions: 2, ..spec() };
        let err = integrate(|x| Ok((50.0 * x).sin() / (1e-3 + x)), 0.0, 10.0, &tight).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { subdivisions: 2, .. }));
    }

    #[test]
    fn inverse_square_over_s() {
        let v = integrate_over_s(1.0, 2.0, |s| Ok(1.0 / (s * s)), &spec()).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
        let v = integrate_over_s(1.0, 2.0, |_| Ok(0.0), &spec()).unwrap();
        assert_eq!(v, 0.0);
        let v = integrate_over_s(2.0, f64::INFINITY, |s| Ok(1.0 / (s * s)), &spec()).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
        assert!(integrate_over_s(2.0, 1.0, |_| Ok(1.0), &spec()).is_err());
    }

    #[test]
    fn total_probability_and_second_moment() {
        for &(n, c, s) in &[(1usize, 0.0, 1.0), (2, 1.0, 1.0), (7, 3.0, 0.5), (32, 10.0, 1.5)] {
            let one = radial_expectation(n, c, s, |_| 1.0, &spec()).unwrap();
            assert!((one - 1.0).abs() < 1e-10, "n={n}: {one}");
            let m2 = radial_expectation(n, c, s, |r| r * r, &spec()).unwrap();
            let exact = c * c + n as f64 * s;
            assert!((m2 / exact - 1.0).abs() < 1e-9, "n={n}: {m2} vs {exact}");
        }
    }

    #[test]
    fn matches_monte_carlo_for_squared_ratio() {
        let (n, r, s) = (2usize, 1.0, 1.0);
        let phi = |y: f64| ratio(1.0, y * r / s).powi(2);
        let q = radial_expectation(n, r, s, phi, &spec()).unwrap();
        let mc = mc_radial_expectation(n, r, s, phi, &spec()).unwrap();
        assert!((q - mc.mean).abs() < 3.0 * mc.std_error, "{q} vs {mc:?}");
    }

    #[test]
    fn doubling_subdivisions_is_stable() {
        let phi = |y: f64| ratio(2.0, 3.0 * y).powi(2);
        let a = radial_expectation(4, 3.0, 1.2, phi, &spec()).unwrap();
        let wide = QuadratureSpec { max_subdivisions: 4000, ..spec() };
        let b = radial_expectation(4, 3.0, 1.2, phi, &wide).unwrap();
        assert!((a - b).abs() <= 1e-8 * a.abs());
    }

    #[test]
    fn spec_validation() {
        assert!(spec().validate().is_ok());
        assert!(QuadratureSpec { rel_tol: 0.0, ..spec() }.validate().is_err());
        assert!(QuadratureSpec { mc_samples: 10, ..spec() }.validate().is_err());
    }
}
