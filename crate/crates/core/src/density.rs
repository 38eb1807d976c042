//! Secrecy density `Ξ(‖x‖; P)` of a shell input and the optimality checks
//! built on it.
//!
//! For an input law `P` over radii, `Ξ(x; P) = i₁(x; P) - i₂(x; P)` where
//! `i_j` is the relative entropy between the output law at receiver `j` given
//! input `x` and the output law induced by `P`. `P` is optimal under the
//! amplitude budget `R` iff `Ξ` equals the rate on the support and does not
//! exceed it on `[0, R]`.

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::bessel::{ln_scaled_i_over_pow, ratio, ratio_over_x};
use crate::error::{domain, Result};
use crate::quad::{integrate_over_s, radial_expectation, try_radial_expectation, QuadratureSpec};
use crate::small_amplitude::ChannelParams;

/// Discrete law over input-shell radii.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialPmf {
    radii: Vec<f64>,
    weights: Vec<f64>,
}

impl RadialPmf {
    /// Radii must be distinct, finite and non-negative, weights positive and
    /// summing to one within `1e-9`. Atoms are sorted by radius and weights
    /// renormalized.
    pub fn new(radii: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if radii.is_empty() || radii.len() != weights.len() {
            return domain("pmf needs matching, non-empty radii and weights");
        }
        if radii.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return domain("pmf radii must be finite and >= 0");
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return domain("pmf weights must be positive");
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return domain(format!("pmf weights sum to {total}, not 1"));
        }
        let mut atoms: Vec<(f64, f64)> = radii.into_iter().zip(weights).collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return domain("pmf radii must be distinct");
        }
        Ok(Self {
            radii: atoms.iter().map(|a| a.0).collect(),
            weights: atoms.iter().map(|a| a.1 / total).collect(),
        })
    }

    /// All mass on the sphere of radius `r`.
    pub fn single_sphere(r: f64) -> Result<Self> {
        Self::new(vec![r], vec![1.0])
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn max_radius(&self) -> f64 {
        *self.radii.last().expect("pmf is never empty")
    }

    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.radii.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Optimality diagnostics for a candidate law. All densities in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    /// `(radius, Ξ)` on the check grid and support, sorted by radius.
    pub density_at: Vec<(f64, f64)>,
    /// `Σ p_k Ξ(r_k)`, the secrecy rate of the law.
    pub capacity_estimate: f64,
    /// `max Ξ - capacity_estimate` over the ball.
    pub gap: f64,
    /// Radius attaining the maximum.
    pub argmax: f64,
    /// `max_k |Ξ(r_k) - capacity_estimate|`.
    pub support_residual: f64,
    pub tol: f64,
}

impl KktReport {
    /// Both optimality conditions hold within `tol`.
    pub fn certified(&self) -> bool {
        self.gap <= self.tol && self.support_residual <= self.tol
    }
}

/// One receiver's information density `i_j(x; P)` with per-law constants
/// precomputed.
struct InfoDensity {
    n: usize,
    sigma_sq: f64,
    /// Atom radii in units of this receiver's noise standard deviation.
    shifts: Vec<f64>,
    ln_weights: Vec<f64>,
    offset: f64,
}

impl InfoDensity {
    fn new(n: usize, sigma_sq: f64, pmf: &RadialPmf) -> Self {
        let sd = sigma_sq.sqrt();
        let half_n = n as f64 / 2.0;
        Self {
            n,
            sigma_sq,
            shifts: pmf.radii.iter().map(|r| r / sd).collect(),
            ln_weights: pmf.weights.iter().map(|w| w.ln()).collect(),
            offset: (1.0 - half_n) * std::f64::consts::LN_2 - ln_gamma(half_n),
        }
    }

    /// `ln Σ_k p_k exp(ρ μ_k - μ_k²/2) g(μ_k ρ)` with `g(z) = z^{-ν} e^{-z} I_ν(z)`.
    fn log_mixture(&self, rho: f64) -> f64 {
        let nu = self.n as f64 / 2.0 - 1.0;
        let mut best = f64::NEG_INFINITY;
        let mut terms = [0.0f64; 64];
        let mut spill = Vec::new();
        let count = self.shifts.len();
        let slots: &mut [f64] = if count <= terms.len() {
            &mut terms[..count]
        } else {
            spill.resize(count, 0.0);
            &mut spill
        };
        for (k, (&mu, &lw)) in self.shifts.iter().zip(&self.ln_weights).enumerate() {
            let a = lw + mu * (rho - 0.5 * mu) + ln_scaled_i_over_pow(nu, mu * rho);
            slots[k] = a;
            best = best.max(a);
        }
        best + slots.iter().map(|a| (a - best).exp()).sum::<f64>().ln()
    }

    /// `i_j(x) = c_n + μ_x²/2 - E[log_mixture(‖μ_x e₁ + Z‖)]`.
    fn at(&self, x: f64, spec: &QuadratureSpec) -> Result<f64> {
        let sd = self.sigma_sq.sqrt();
        let mean_log = radial_expectation(self.n, x, self.sigma_sq, |y| self.log_mixture(y / sd), spec)?;
        let mu = x / sd;
        Ok(self.offset + 0.5 * mu * mu - mean_log)
    }
}

/// `Ξ(·; P)` for a fixed law.
pub struct SecrecyDensity {
    legit: InfoDensity,
    eaves: InfoDensity,
    spec: QuadratureSpec,
}

impl SecrecyDensity {
    pub fn new(p: &ChannelParams, pmf: &RadialPmf, spec: &QuadratureSpec) -> Result<Self> {
        p.validate()?;
        spec.validate()?;
        // The difference of two O(1) integrals must be good to well below the
        // requested tolerance.
        let spec = spec.tightened(1e-3);
        Ok(Self {
            legit: InfoDensity::new(p.n, p.sigma1_sq, pmf),
            eaves: InfoDensity::new(p.n, p.sigma2_sq, pmf),
            spec,
        })
    }

    pub fn at(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) || !x.is_finite() {
            return domain(format!("input norm must be finite and >= 0, got {x}"));
        }
        Ok(self.legit.at(x, &self.spec)? - self.eaves.at(x, &self.spec)?)
    }

    /// `Σ p_k Ξ(r_k)`.
    pub fn rate(&self, pmf: &RadialPmf) -> Result<f64> {
        let values: Result<Vec<f64>> = pmf.radii.par_iter().map(|&r| self.at(r)).collect();
        Ok(values?.iter().zip(&pmf.weights).map(|(v, w)| v * w).sum())
    }
}

/// `Ξ(‖x‖; P)` for an arbitrary shell law, as `i₁ - i₂`.
pub fn xi_general(p: &ChannelParams, pmf: &RadialPmf, x_norm: f64, spec: &QuadratureSpec) -> Result<f64> {
    SecrecyDensity::new(p, pmf, spec)?.at(x_norm)
}

/// `Ξ(‖x‖)` for the input uniform on the sphere of radius `r_input`, through
/// the mismatched-estimation form
///
/// ```text
/// ½ ∫ E[ x² - 2 x R h(x‖Y‖/s) h(R‖Y‖/s) + R² h²(R‖Y‖/s) ] / s² ds,   Y = x e₁ + √s Z.
/// ```
///
/// Given `‖Y‖`, the direction of `Y` is von Mises–Fisher about `e₁`, whose
/// mean resultant is `h(x‖Y‖/s)`; that turns the squared error of the sphere
/// estimator into the radial integrand above.
pub fn xi_sphere(p: &ChannelParams, r_input: f64, x_norm: f64, spec: &QuadratureSpec) -> Result<f64> {
    p.validate()?;
    if !(r_input >= 0.0) || !(x_norm >= 0.0) || !r_input.is_finite() || !x_norm.is_finite() {
        return domain("radii must be finite and >= 0");
    }
    let nu = p.n as f64 / 2.0;
    let (r, x) = (r_input, x_norm);
    let v = integrate_over_s(
        p.sigma1_sq,
        p.sigma2_sq,
        |s| {
            let err = radial_expectation(
                p.n,
                x,
                s,
                |y| {
                    let own = ratio(nu, r * y / s);
                    x * x - 2.0 * x * r * ratio(nu, x * y / s) * own + r * r * own * own
                },
                spec,
            )?;
            Ok(err / (s * s))
        },
        spec,
    )?;
    Ok(0.5 * v)
}

/// `M(y) = ((R/y) h(R y/σ²) - 1) / σ²`, finite at `y = 0`.
fn curvature(nu: f64, r: f64, sigma_sq: f64, y: f64) -> f64 {
    let a = r / sigma_sq;
    (a * r * ratio_over_x(nu, a * y) - 1.0) / sigma_sq
}

fn single_radius(pmf: &RadialPmf) -> Result<f64> {
    if pmf.len() != 1 {
        return domain(format!(
            "derivative is available for single-sphere inputs only, got {} atoms",
            pmf.len()
        ));
    }
    Ok(pmf.radii[0])
}

/// `E[M₂(‖y e₁ + W‖)]`, `W ~ N(0, (σ₂² - σ₁²) I_{n+2})`.
fn smoothed_eaves(p: &ChannelParams, r: f64, y: f64, spec: &QuadratureSpec) -> Result<f64> {
    let nu = p.n as f64 / 2.0;
    radial_expectation(
        p.n + 2,
        y.abs(),
        p.sigma2_sq - p.sigma1_sq,
        |t| curvature(nu, r, p.sigma2_sq, t),
        spec,
    )
}

/// `dΞ/d‖x‖` for the single-sphere law:
/// `‖x‖ E[M̃₂(σ₁Q) - M₁(σ₁Q)]` with `Q² ~ χ²_{n+2}(‖x‖²/σ₁²)`.
pub fn xi_derivative(p: &ChannelParams, pmf: &RadialPmf, x_norm: f64, spec: &QuadratureSpec) -> Result<f64> {
    p.validate()?;
    let r = single_radius(pmf)?;
    if !(x_norm >= 0.0) || !x_norm.is_finite() {
        return domain(format!("input norm must be finite and >= 0, got {x_norm}"));
    }
    if x_norm == 0.0 {
        return Ok(0.0);
    }
    let nu = p.n as f64 / 2.0;
    let mean = try_radial_expectation(
        p.n + 2,
        x_norm,
        p.sigma1_sq,
        |y| Ok(smoothed_eaves(p, r, y, spec)? - curvature(nu, r, p.sigma1_sq, y)),
        spec,
    )?;
    Ok(x_norm * mean)
}

/// `G(y) = E[M₂(‖y e₁ + W‖)] - M₁(y)`, extended to negative `y` as an odd
/// function with `G(0) = 0`.
pub fn g_function(p: &ChannelParams, r: f64, y: f64, spec: &QuadratureSpec) -> Result<f64> {
    p.validate()?;
    if !(r >= 0.0) || !r.is_finite() || !y.is_finite() {
        return domain("G needs finite y and radius >= 0");
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let nu = p.n as f64 / 2.0;
    let value = smoothed_eaves(p, r, y, spec)? - curvature(nu, r, p.sigma1_sq, y.abs());
    Ok(if y > 0.0 { value } else { -value })
}

/// Samples of `G` on a grid of positive points and the number of strict sign
/// alternations among them.
#[derive(Debug, Clone, PartialEq)]
pub struct GDiagnostic {
    pub samples: Vec<(f64, f64)>,
    pub sign_changes: usize,
}

/// Minimum grid size for a sign-change count to mean anything.
pub const MIN_G_GRID: usize = 200;

pub fn diagnose_g(p: &ChannelParams, r: f64, grid: &[f64], spec: &QuadratureSpec) -> Result<GDiagnostic> {
    if grid.len() < MIN_G_GRID {
        return domain(format!("sign-change grid needs >= {MIN_G_GRID} points, got {}", grid.len()));
    }
    if grid[0] <= 0.0 || grid.windows(2).any(|w| !(w[0] < w[1])) {
        return domain("sign-change grid must be positive and strictly increasing");
    }
    let values: Result<Vec<f64>> = grid.par_iter().map(|&y| g_function(p, r, y, spec)).collect();
    let samples: Vec<(f64, f64)> = grid.iter().copied().zip(values?).collect();
    Ok(GDiagnostic {
        sign_changes: count_alternations(samples.iter().map(|s| s.1)),
        samples,
    })
}

/// Number of strict sign alternations of `G` on `grid`.
pub fn count_sign_changes_g(p: &ChannelParams, r: f64, grid: &[f64], spec: &QuadratureSpec) -> Result<usize> {
    Ok(diagnose_g(p, r, grid, spec)?.sign_changes)
}

fn count_alternations(values: impl Iterator<Item = f64>) -> usize {
    let mut last = 0.0f64;
    let mut changes = 0;
    for v in values {
        if v == 0.0 || v.is_nan() {
            continue;
        }
        if last != 0.0 && (v > 0.0) != (last > 0.0) {
            changes += 1;
        }
        last = v;
    }
    changes
}

/// Log-spaced positive grid covering where `G` can change sign.
pub fn default_g_grid(p: &ChannelParams, r: f64, points: usize) -> Vec<f64> {
    let scale = p.sigma1_sq.sqrt();
    let lo = 1e-3 * scale;
    let hi = 20.0 * (r + p.sigma2_sq.sqrt() * ((p.n + 2) as f64).sqrt());
    log_grid(lo, hi, points.max(MIN_G_GRID))
}

pub(crate) fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

/// Number of Chebyshev points in the optimality check grid.
pub const KKT_GRID: usize = 512;

/// Chebyshev–Lobatto points on `[0, r]`, endpoints included.
pub(crate) fn chebyshev_grid(r: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|j| 0.5 * r * (1.0 - (std::f64::consts::PI * j as f64 / (points - 1) as f64).cos()))
        .collect()
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Maximizer of `f` on `[a, b]` by golden-section search.
pub(crate) fn golden_max<F>(f: F, mut a: f64, mut b: f64, x_tol: f64) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    while b - a > x_tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d)?;
        }
    }
    let (fa, fb) = (f(a)?, f(b)?);
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    for cand in [(a, fa), (b, fb)] {
        if cand.1 > best.1 {
            best = cand;
        }
    }
    Ok(best)
}

/// Evaluates `Ξ` on the support and on a Chebyshev grid over `[0, r_budget]`,
/// refines every local maximum, and reports both optimality conditions.
pub fn kkt_verify(
    p: &ChannelParams,
    pmf: &RadialPmf,
    r_budget: f64,
    tol: f64,
    spec: &QuadratureSpec,
) -> Result<KktReport> {
    if !(r_budget > 0.0) || !r_budget.is_finite() {
        return domain(format!("budget must be positive, got {r_budget}"));
    }
    if pmf.max_radius() > r_budget * (1.0 + 1e-12) {
        return domain(format!(
            "pmf radius {} exceeds the budget {r_budget}",
            pmf.max_radius()
        ));
    }
    let xi = SecrecyDensity::new(p, pmf, spec)?;
    let support: Result<Vec<f64>> = pmf.radii.par_iter().map(|&r| xi.at(r)).collect();
    let support = support?;
    let capacity: f64 = support.iter().zip(&pmf.weights).map(|(v, w)| v * w).sum();
    let support_residual = support.iter().map(|v| (v - capacity).abs()).fold(0.0, f64::max);

    let grid = chebyshev_grid(r_budget, KKT_GRID);
    let values: Result<Vec<f64>> = grid.par_iter().map(|&x| xi.at(x)).collect();
    let values = values?;

    // Bracket every local maximum by its grid neighbours and refine.
    let last = grid.len() - 1;
    let peaks: Vec<usize> = (0..=last)
        .filter(|&i| {
            let left = i == 0 || values[i] >= values[i - 1];
            let right = i == last || values[i] >= values[i + 1];
            left && right
        })
        .collect();
    let x_tol = 1e-7 * r_budget;
    let refined: Result<Vec<(f64, f64)>> = peaks
        .par_iter()
        .map(|&i| {
            let a = grid[i.saturating_sub(1)];
            let b = grid[(i + 1).min(last)];
            golden_max(|x| xi.at(x), a, b, x_tol)
        })
        .collect();

    let mut density_at: Vec<(f64, f64)> = grid.into_iter().zip(values).collect();
    density_at.extend(pmf.radii.iter().copied().zip(support.iter().copied()));
    density_at.extend(refined?);
    density_at.sort_by(|a, b| a.0.total_cmp(&b.0));
    density_at.dedup_by(|a, b| a.0 == b.0);

    let (argmax, best) = density_at
        .iter()
        .copied()
        .fold((0.0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
    Ok(KktReport {
        density_at,
        capacity_estimate: capacity,
        gap: best - capacity,
        argmax,
        support_residual,
        tol,
    })
}
