//! Secrecy-rate maximization over shell laws beyond the small-amplitude regime.
//!
//! Each outer round re-weights the current atoms, lets each radius climb its
//! local peak of `Ξ`, and inserts the global maximizer of `Ξ` when it sits
//! above the rate. The loop stops once the optimality check certifies the law.

use rayon::prelude::*;

use crate::density::{golden_max, kkt_verify, KktReport, RadialPmf, SecrecyDensity};
use crate::error::{domain, Result};
use crate::quad::QuadratureSpec;
use crate::small_amplitude::ChannelParams;

/// How weights move at fixed radii.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightUpdate {
    /// `p_k ← p_k exp(η (Ξ_k - rate))`, renormalized.
    #[default]
    Multiplicative,
    /// `p ← Π_simplex(p + η (Ξ - rate))`.
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub grid_size: usize,
    pub kkt_tol: f64,
    pub max_outer_iters: usize,
    pub weight_update: WeightUpdate,
    pub spec: QuadratureSpec,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            grid_size: 256,
            kkt_tol: 1e-4,
            max_outer_iters: 200,
            weight_update: WeightUpdate::Multiplicative,
            spec: QuadratureSpec::default(),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 16 {
            return domain(format!("grid_size must be >= 16, got {}", self.grid_size));
        }
        if !(self.kkt_tol > 0.0) {
            return domain("kkt_tol must be positive");
        }
        if self.max_outer_iters == 0 {
            return domain("max_outer_iters must be >= 1");
        }
        self.spec.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOutcome {
    pub pmf: RadialPmf,
    pub report: KktReport,
    /// Secrecy rate of `pmf` in nats.
    pub rate: f64,
    /// Whether `report` certifies optimality within `kkt_tol`.
    pub converged: bool,
    pub iterations: usize,
    /// Rate after every accepted change, in order.
    pub rate_history: Vec<f64>,
}

/// Secrecy rate `Σ p_k Ξ(r_k; P)` of a shell law, in nats.
pub fn secrecy_rate(p: &ChannelParams, pmf: &RadialPmf, spec: &QuadratureSpec) -> Result<f64> {
    SecrecyDensity::new(p, pmf, spec)?.rate(pmf)
}

const WEIGHT_FLOOR: f64 = 1e-8;
const MULTIPLICATIVE_STEPS: usize = 60;
const TRANSFERS_PER_ATOM: usize = 40;
const TRANSFER_SEARCH: usize = 30;
const MIN_STEP: f64 = 1e-10;
const MAX_STEP: f64 = 1e8;
const SLACK: f64 = 1e-12;
const CLIMB_PITCHES: f64 = 8.0;

struct State<'a> {
    p: &'a ChannelParams,
    cfg: &'a OptimizerConfig,
    pmf: RadialPmf,
    rate: f64,
    step: f64,
    history: Vec<f64>,
}

impl State<'_> {
    fn density(&self, pmf: &RadialPmf) -> Result<SecrecyDensity> {
        SecrecyDensity::new(self.p, pmf, &self.cfg.spec)
    }

    fn support_values(&self, pmf: &RadialPmf) -> Result<Vec<f64>> {
        let xi = self.density(pmf)?;
        pmf.radii().par_iter().map(|&r| xi.at(r)).collect()
    }

    fn rate_of(&self, pmf: &RadialPmf) -> Result<f64> {
        Ok(dot(&self.support_values(pmf)?, pmf.weights()))
    }

    fn accept(&mut self, pmf: RadialPmf, rate: f64) {
        self.pmf = pmf;
        self.rate = rate;
        self.history.push(rate);
    }

    /// Ascent on weights at fixed radii until the support densities level out.
    ///
    /// Multiplicative steps come first. Near-duplicate radii make them crawl,
    /// so any remaining imbalance is settled by pairwise mass transfers.
    fn reweight(&mut self) -> Result<()> {
        if self.pmf.len() == 1 {
            return Ok(());
        }
        let level = 0.1 * self.cfg.kkt_tol;
        let mut values = self.support_values(&self.pmf)?;
        for _ in 0..MULTIPLICATIVE_STEPS {
            if spread(&values, self.pmf.weights()) <= level {
                return Ok(());
            }
            let rate = dot(&values, self.pmf.weights());
            loop {
                let trial = update_weights(self.pmf.weights(), &values, rate, self.step, self.cfg.weight_update);
                let candidate = RadialPmf::new(self.pmf.radii().to_vec(), trial)?;
                let trial_values = self.support_values(&candidate)?;
                let trial_rate = dot(&trial_values, candidate.weights());
                if trial_rate >= self.rate - SLACK {
                    self.accept(candidate, trial_rate);
                    values = trial_values;
                    self.step = (2.0 * self.step).min(MAX_STEP);
                    break;
                }
                self.step *= 0.5;
                if self.step < MIN_STEP {
                    return Ok(());
                }
            }
        }
        for _ in 0..TRANSFERS_PER_ATOM * self.pmf.len() {
            if self.pmf.len() == 1 || spread(&values, self.pmf.weights()) <= level {
                break;
            }
            match self.transfer(&values)? {
                Some(next) => values = next,
                None => break,
            }
        }
        Ok(())
    }

    /// Moves mass from the lowest-density atom to the highest one, as far as
    /// the rate keeps rising. The rate is concave along the move and its slope
    /// is the density gap between the two atoms, so a root search on that gap
    /// finds the best amount. Returns the new support densities if accepted.
    fn transfer(&mut self, values: &[f64]) -> Result<Option<Vec<f64>>> {
        let to = argmax(values);
        let from = argmax(&values.iter().map(|v| -v).collect::<Vec<_>>());
        if to == from {
            return Ok(None);
        }
        let radii = self.pmf.radii().to_vec();
        let weights = self.pmf.weights().to_vec();
        let shifted = |delta: f64| -> Result<RadialPmf> {
            let mut w = weights.clone();
            w[to] += delta;
            w[from] -= delta;
            let (r, w): (Vec<f64>, Vec<f64>) = radii.iter().copied().zip(w).filter(|a| a.1 > 0.0).unzip();
            RadialPmf::new(r, w)
        };
        let slope = |delta: f64| -> Result<f64> {
            let xi = self.density(&shifted(delta)?)?;
            Ok(xi.at(radii[to])? - xi.at(radii[from])?)
        };
        let full = weights[from];
        let (mut lo, mut hi) = (0.0, full);
        let (mut s_lo, mut s_hi) = (values[to] - values[from], slope(full)?);
        let delta = if s_hi >= 0.0 {
            full
        } else {
            // Illinois false position on the decreasing slope.
            let mut side = 0;
            let mut x = 0.5 * full;
            for _ in 0..TRANSFER_SEARCH {
                x = (lo * s_hi - hi * s_lo) / (s_hi - s_lo);
                let sx = slope(x)?;
                if sx > 0.0 {
                    lo = x;
                    s_lo = sx;
                    if side == -1 {
                        s_hi *= 0.5;
                    }
                    side = -1;
                } else {
                    hi = x;
                    s_hi = sx;
                    if side == 1 {
                        s_lo *= 0.5;
                    }
                    side = 1;
                }
                if hi - lo <= 1e-6 * full {
                    break;
                }
            }
            x
        };
        let candidate = shifted(delta)?;
        let next = self.support_values(&candidate)?;
        let rate = dot(&next, candidate.weights());
        if rate > self.rate + SLACK {
            self.accept(candidate, rate);
            Ok(Some(next))
        } else {
            Ok(None)
        }
    }

    /// Drops negligible atoms and fuses atoms closer than `budget / 10⁴`,
    /// keeping the change only if the rate does not fall.
    fn tidy(&mut self, budget: f64) -> Result<()> {
        let mut atoms: Vec<(f64, f64)> = self.pmf.atoms().filter(|a| a.1 >= WEIGHT_FLOOR).collect();
        if atoms.is_empty() {
            return Ok(());
        }
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(atoms.len());
        for (r, w) in atoms.drain(..) {
            match merged.last_mut() {
                Some(last) if r - last.0 < budget * 1e-4 => {
                    let total = last.1 + w;
                    last.0 = (last.0 * last.1 + r * w) / total;
                    last.1 = total;
                }
                _ => merged.push((r, w)),
            }
        }
        if merged.len() == self.pmf.len() {
            return Ok(());
        }
        let total: f64 = merged.iter().map(|a| a.1).sum();
        let candidate = RadialPmf::new(
            merged.iter().map(|a| a.0).collect(),
            merged.iter().map(|a| a.1 / total).collect(),
        )?;
        let rate = self.rate_of(&candidate)?;
        if rate >= self.rate - 1e-10 {
            self.accept(candidate, rate);
        }
        Ok(())
    }

    /// Moves each radius to the best peak of `Ξ` within a few grid pitches.
    fn climb(&mut self, budget: f64) -> Result<()> {
        let pitch = budget / (self.cfg.grid_size - 1) as f64;
        for k in 0..self.pmf.len() {
            let xi = self.density(&self.pmf)?;
            let r = self.pmf.radii()[k];
            let lo = (r - CLIMB_PITCHES * pitch).max(0.0);
            let hi = (r + CLIMB_PITCHES * pitch).min(budget);
            let cells = 2 * CLIMB_PITCHES as usize;
            let coarse: Vec<f64> = (0..=cells).map(|i| lo + (hi - lo) * i as f64 / cells as f64).collect();
            let values: Result<Vec<f64>> = coarse.par_iter().map(|&x| xi.at(x)).collect();
            let i = argmax(&values?);
            let (best, _) = golden_max(
                |x| xi.at(x),
                coarse[i.saturating_sub(1)],
                coarse[(i + 1).min(cells)],
                1e-9 * budget,
            )?;
            if (best - r).abs() <= 1e-12 * budget {
                continue;
            }
            let mut radii = self.pmf.radii().to_vec();
            radii[k] = best;
            if radii.iter().enumerate().any(|(j, &q)| j != k && q == best) {
                continue;
            }
            let candidate = RadialPmf::new(radii, self.pmf.weights().to_vec())?;
            let rate = self.rate_of(&candidate)?;
            if rate >= self.rate - SLACK {
                self.accept(candidate, rate);
            }
        }
        Ok(())
    }

    /// Moves the atom nearest to `x` onto it when one lies within `reach`.
    /// Keeps near-duplicate atoms from piling up around a drifting peak.
    fn shift_nearest(&mut self, x: f64, reach: f64) -> Result<bool> {
        let radii = self.pmf.radii();
        let k = argmax(&radii.iter().map(|r| -(r - x).abs()).collect::<Vec<_>>());
        if (radii[k] - x).abs() > reach || radii.contains(&x) {
            return Ok(false);
        }
        let mut moved = radii.to_vec();
        moved[k] = x;
        let candidate = RadialPmf::new(moved, self.pmf.weights().to_vec())?;
        let rate = self.rate_of(&candidate)?;
        if rate > self.rate + SLACK {
            self.accept(candidate, rate);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Mixes a new atom at `x` into the law with the best mixing weight.
    fn insert(&mut self, x: f64) -> Result<bool> {
        if self.pmf.radii().contains(&x) {
            return Ok(false);
        }
        let with = |t: f64| -> Result<RadialPmf> {
            let mut radii = self.pmf.radii().to_vec();
            let mut weights: Vec<f64> = self.pmf.weights().iter().map(|w| w * (1.0 - t)).collect();
            radii.push(x);
            weights.push(t);
            RadialPmf::new(radii, weights)
        };
        let (t, rate) = golden_max(|t| self.rate_of(&with(t)?), 1e-6, 0.999, 1e-4)?;
        if rate > self.rate + SLACK {
            let pmf = with(t)?;
            self.accept(pmf, rate);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    /// Grid maximizer of `Ξ` for the current law, refined between neighbours.
    fn best_candidate(&self, grid: &[f64]) -> Result<(f64, f64)> {
        let xi = self.density(&self.pmf)?;
        let values: Result<Vec<f64>> = grid.par_iter().map(|&x| xi.at(x)).collect();
        let values = values?;
        let i = argmax(&values);
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(grid.len() - 1)];
        golden_max(|x| xi.at(x), lo, hi, 1e-9 * grid[grid.len() - 1])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest deviation of the support densities from their weighted mean.
fn spread(values: &[f64], weights: &[f64]) -> f64 {
    let mean = dot(values, weights);
    values.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max)
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc })
        .0
}

fn update_weights(weights: &[f64], values: &[f64], rate: f64, step: f64, rule: WeightUpdate) -> Vec<f64> {
    match rule {
        WeightUpdate::Multiplicative => {
            let top = values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
            let raw: Vec<f64> = weights
                .iter()
                .zip(values)
                .map(|(w, v)| w * (step * (v - top)).exp())
                .collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|w| (w / total).max(f64::MIN_POSITIVE)).collect()
        }
        WeightUpdate::ProjectedGradient => {
            let moved: Vec<f64> = weights.iter().zip(values).map(|(w, v)| w + step * (v - rate)).collect();
            // Keep every atom alive so the law stays valid; tidy() drops it later.
            let kept: Vec<f64> = project_to_simplex(&moved)
                .into_iter()
                .map(|w| w.max(0.1 * WEIGHT_FLOOR))
                .collect();
            let total: f64 = kept.iter().sum();
            kept.into_iter().map(|w| w / total).collect()
        }
    }
}

/// Euclidean projection onto the probability simplex.
fn project_to_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut shift = 0.0;
    for (i, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - 1.0) / (i + 1) as f64;
        if u - candidate > 0.0 {
            shift = candidate;
        }
    }
    v.iter().map(|x| (x - shift).max(0.0)).collect()
}

/// Maximizes the secrecy rate over shell laws supported in `[0, r_budget]`.
///
/// Starts from the sphere at `r_budget`. Failure to certify optimality within
/// `max_outer_iters` rounds is reported through `converged`, not as an error.
pub fn optimize(p: &ChannelParams, r_budget: f64, cfg: &OptimizerConfig) -> Result<OptimizerOutcome> {
    p.validate()?;
    cfg.validate()?;
    if !(r_budget > 0.0) || !r_budget.is_finite() {
        return domain(format!("budget must be positive and finite, got {r_budget}"));
    }
    let start = RadialPmf::single_sphere(r_budget)?;
    let mut state = State {
        p,
        cfg,
        rate: 0.0,
        pmf: start.clone(),
        step: 1.0,
        history: Vec::new(),
    };
    let rate = state.rate_of(&start)?;
    state.accept(start, rate);

    let pitch = r_budget / (cfg.grid_size - 1) as f64;
    let grid: Vec<f64> = (0..cfg.grid_size)
        .map(|i| r_budget * i as f64 / (cfg.grid_size - 1) as f64)
        .collect();
    let mut iterations = 0;
    let mut report = None;
    while iterations < cfg.max_outer_iters {
        iterations += 1;
        state.reweight()?;
        state.tidy(r_budget)?;
        state.climb(r_budget)?;

        let (x, value) = state.best_candidate(&grid)?;
        if value > state.rate + 0.5 * cfg.kkt_tol && (state.shift_nearest(x, 2.0 * pitch)? || state.insert(x)?) {
            continue;
        }
        let check = kkt_verify(p, &state.pmf, r_budget, cfg.kkt_tol, &cfg.spec)?;
        let certified = check.certified();
        let argmax = check.argmax;
        let gap = check.gap;
        report = Some(check);
        if certified {
            break;
        }
        if gap > cfg.kkt_tol && !state.insert(argmax)? && state.pmf.len() == 1 {
            // Nothing left to improve on a lone atom that cannot be split.
            break;
        }
    }
    let report = match report {
        Some(r) if r.capacity_estimate == state.rate || r.certified() => r,
        _ => kkt_verify(p, &state.pmf, r_budget, cfg.kkt_tol, &cfg.spec)?,
    };
    Ok(OptimizerOutcome {
        converged: report.certified(),
        rate: state.rate,
        pmf: state.pmf,
        report,
        iterations,
        rate_history: state.history,
    })
}
