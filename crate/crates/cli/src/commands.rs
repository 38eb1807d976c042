use rayon::prelude::*;
use serde_json::{json, Value};
use wiretap_amp::{
    asymptotic_c, diagnose_g, default_g_grid, find_r_bar, gaussian_benchmark, kkt_verify, optimize, r_bar_mmse, r_bar_ptp,
    secrecy_capacity_small, sufficient_radius, ChannelParams, Error, OptimizerConfig, OptimizerOutcome,
    QuadratureSpec, RadialPmf, SmallAmplitudeResult,
};

use crate::output::{nats_to_bits, num, Artifact};
use crate::Regime;

const TABLE_N: [usize; 6] = [1, 2, 4, 8, 16, 32];
const TABLE_VARIANCES: [f64; 4] = [1000.0, 10.0, 1.5, 1.001];

pub fn rbar(p: &ChannelParams, tol: f64, spec: &QuadratureSpec) -> Result<Artifact, Error> {
    let found = find_r_bar(p, tol, spec)?;
    Ok(Artifact {
        schema: "wiretap-amp/rbar/v1",
        columns: vec!["n", "s1", "s2", "r_bar", "bracket_lo", "bracket_hi", "residual", "evaluations"],
        rows: vec![vec![
            p.n.to_string(),
            num(p.sigma1_sq),
            num(p.sigma2_sq),
            num(found.r_bar),
            num(found.bracket.0),
            num(found.bracket.1),
            num(found.residual),
            found.iterations.to_string(),
        ]],
        data: threshold_json(p, &found),
    })
}

fn threshold_json(p: &ChannelParams, found: &SmallAmplitudeResult) -> Value {
    json!({
        "n": p.n,
        "s1": p.sigma1_sq,
        "s2": p.sigma2_sq,
        "r_bar": found.r_bar,
        "bracket": [found.bracket.0, found.bracket.1],
        "residual": found.residual,
        "evaluations": found.iterations,
    })
}

/// Thresholds for every dimension in the reference grid, one row per variance
/// setting, with the two limiting rows first and last.
pub fn table1(sigma1_sq: f64, tol: f64, spec: &QuadratureSpec) -> Result<Artifact, Error> {
    let mut labels = vec!["ptp".to_string()];
    labels.extend(TABLE_VARIANCES.iter().map(|v| format!("s2={v}")));
    labels.push("mmse".to_string());

    let cells: Vec<(usize, usize)> = (0..labels.len())
        .flat_map(|row| TABLE_N.iter().map(move |&n| (row, n)))
        .collect();
    let values: Result<Vec<f64>, Error> = cells
        .par_iter()
        .map(|&(row, n)| {
            let found = match row {
                0 => r_bar_ptp(n, sigma1_sq, tol, spec)?,
                r if r == labels.len() - 1 => r_bar_mmse(n, sigma1_sq, tol, spec)?,
                r => find_r_bar(&ChannelParams::new(n, sigma1_sq, sigma1_sq * TABLE_VARIANCES[r - 1])?, tol, spec)?,
            };
            Ok(found.r_bar)
        })
        .collect();
    let values = values?;

    let rows: Vec<Vec<String>> = labels
        .iter()
        .zip(values.chunks(TABLE_N.len()))
        .map(|(label, chunk)| std::iter::once(label.clone()).chain(chunk.iter().map(|&v| num(v))).collect())
        .collect();
    let data: Vec<Value> = labels
        .iter()
        .zip(values.chunks(TABLE_N.len()))
        .map(|(label, chunk)| json!({ "row": label, "n": TABLE_N, "r_bar": chunk }))
        .collect();
    Ok(Artifact {
        schema: "wiretap-amp/rbar-table/v1",
        columns: vec!["row", "n=1", "n=2", "n=4", "n=8", "n=16", "n=32"],
        rows,
        data: json!({ "s1": sigma1_sq, "rows": data }),
    })
}

pub fn asymptotic(
    sigma1_sq: f64,
    sigma2_sq: f64,
    n_max: usize,
    tol: f64,
    spec: &QuadratureSpec,
) -> Result<Artifact, Error> {
    let limit = asymptotic_c(sigma1_sq, sigma2_sq, tol, spec)?;
    let series: Result<Vec<f64>, Error> = (1..=n_max)
        .into_par_iter()
        .map(|n| Ok(find_r_bar(&ChannelParams::new(n, sigma1_sq, sigma2_sq)?, tol, spec)?.r_bar))
        .collect();
    let series = series?;
    let scaled: Vec<f64> = series.iter().enumerate().map(|(i, r)| r / ((i + 1) as f64).sqrt()).collect();
    let rows = series
        .iter()
        .zip(&scaled)
        .enumerate()
        .map(|(i, (r, s))| vec![(i + 1).to_string(), num(*r), num(*s), num(limit.c)])
        .collect();
    Ok(Artifact {
        schema: "wiretap-amp/asymptotic/v1",
        columns: vec!["n", "r_bar", "r_bar_over_sqrt_n", "c"],
        rows,
        data: json!({
            "s1": sigma1_sq,
            "s2": sigma2_sq,
            "c": limit.c,
            "c_residual": limit.residual,
            "r_bar": series,
            "r_bar_over_sqrt_n": scaled,
        }),
    })
}

/// One capacity evaluation at a single budget.
pub struct CapacityPoint {
    pub radius: f64,
    pub regime: &'static str,
    pub capacity_nats: f64,
    pub gaussian_nats: f64,
    pub kkt_gap: f64,
    pub converged: bool,
    pub pmf: RadialPmf,
}

impl CapacityPoint {
    fn json(&self) -> Value {
        json!({
            "radius": self.radius,
            "regime": self.regime,
            "capacity_nats": self.capacity_nats,
            "capacity_bits": nats_to_bits(self.capacity_nats),
            "gaussian_nats": self.gaussian_nats,
            "gaussian_bits": nats_to_bits(self.gaussian_nats),
            "kkt_gap_nats": self.kkt_gap,
            "converged": self.converged,
            "pmf": pmf_json(&self.pmf),
        })
    }
}

fn pmf_json(pmf: &RadialPmf) -> Value {
    json!({ "radii": pmf.radii(), "weights": pmf.weights() })
}

fn pmf_cell(pmf: &RadialPmf) -> String {
    pmf.atoms()
        .map(|(r, w)| format!("{}:{}", num(r), num(w)))
        .collect::<Vec<_>>()
        .join(";")
}

fn from_optimizer(p: &ChannelParams, radius: f64, out: OptimizerOutcome) -> CapacityPoint {
    CapacityPoint {
        radius,
        regime: "optimizer",
        capacity_nats: out.rate,
        gaussian_nats: gaussian_benchmark(p, radius),
        kkt_gap: out.report.gap,
        converged: out.converged,
        pmf: out.pmf,
    }
}

pub fn capacity_at(
    p: &ChannelParams,
    radius: f64,
    r_bar: f64,
    regime: Regime,
    cfg: &OptimizerConfig,
) -> Result<CapacityPoint, Error> {
    if radius == 0.0 {
        return Ok(CapacityPoint {
            radius,
            regime: "closed-form",
            capacity_nats: 0.0,
            gaussian_nats: 0.0,
            kkt_gap: 0.0,
            converged: true,
            pmf: RadialPmf::single_sphere(0.0)?,
        });
    }
    let closed = |radius| -> Result<CapacityPoint, Error> {
        let capacity_nats = secrecy_capacity_small(p, radius, &cfg.spec)?;
        let pmf = RadialPmf::single_sphere(radius)?;
        let report = kkt_verify(p, &pmf, radius, cfg.kkt_tol, &cfg.spec)?;
        Ok(CapacityPoint {
            radius,
            regime: "closed-form",
            capacity_nats,
            gaussian_nats: gaussian_benchmark(p, radius),
            kkt_gap: report.gap,
            converged: report.certified(),
            pmf,
        })
    };
    match regime {
        Regime::ClosedForm => closed(radius),
        Regime::Optimizer => Ok(from_optimizer(p, radius, optimize(p, radius, cfg)?)),
        Regime::Auto if radius <= r_bar => match closed(radius) {
            // Within bisection noise of the threshold.
            Err(Error::Regime { .. }) => Ok(from_optimizer(p, radius, optimize(p, radius, cfg)?)),
            other => other,
        },
        Regime::Auto => Ok(from_optimizer(p, radius, optimize(p, radius, cfg)?)),
    }
}

pub fn capacity(p: &ChannelParams, r_bar: f64, points: &[CapacityPoint]) -> Artifact {
    let rows = points
        .iter()
        .map(|c| {
            vec![
                num(c.radius),
                c.regime.to_string(),
                num(nats_to_bits(c.capacity_nats)),
                num(nats_to_bits(c.gaussian_nats)),
                num(r_bar),
                (c.radius <= r_bar).to_string(),
                num(c.kkt_gap),
                c.converged.to_string(),
                pmf_cell(&c.pmf),
            ]
        })
        .collect();
    Artifact {
        schema: "wiretap-amp/capacity/v1",
        columns: vec![
            "radius",
            "regime",
            "capacity_bits",
            "gaussian_bits",
            "r_bar",
            "small_amplitude",
            "kkt_gap_nats",
            "converged",
            "pmf",
        ],
        rows,
        data: json!({
            "n": p.n,
            "s1": p.sigma1_sq,
            "s2": p.sigma2_sq,
            "r_bar": r_bar,
            "points": points.iter().map(CapacityPoint::json).collect::<Vec<_>>(),
        }),
    }
}

/// Optimized laws, one row per atom, for tracking how the support evolves
/// with the budget.
pub fn pmf_evolution(p: &ChannelParams, outcomes: &[(f64, OptimizerOutcome)]) -> Artifact {
    let mut rows = Vec::new();
    for (radius, out) in outcomes {
        for (k, (r, w)) in out.pmf.atoms().enumerate() {
            rows.push(vec![
                num(*radius),
                k.to_string(),
                num(r),
                num(w),
                num(nats_to_bits(out.rate)),
                num(out.report.gap),
                out.converged.to_string(),
            ]);
        }
    }
    let data: Vec<Value> = outcomes
        .iter()
        .map(|(radius, out)| {
            json!({
                "budget": radius,
                "rate_nats": out.rate,
                "rate_bits": nats_to_bits(out.rate),
                "kkt_gap_nats": out.report.gap,
                "support_residual_nats": out.report.support_residual,
                "converged": out.converged,
                "iterations": out.iterations,
                "pmf": pmf_json(&out.pmf),
            })
        })
        .collect();
    Artifact {
        schema: "wiretap-amp/optimize/v1",
        columns: vec!["budget", "atom", "radius", "weight", "rate_bits", "kkt_gap_nats", "converged"],
        rows,
        data: json!({ "n": p.n, "s1": p.sigma1_sq, "s2": p.sigma2_sq, "runs": data }),
    }
}

pub fn g_diagnostic(p: &ChannelParams, radius: f64, points: usize, spec: &QuadratureSpec) -> Result<Artifact, Error> {
    let grid = default_g_grid(p, radius, points);
    let diag = diagnose_g(p, radius, &grid, spec)?;
    let bound = sufficient_radius(p);
    let rows = diag.samples.iter().map(|&(y, g)| vec![num(y), num(g)]).collect();
    Ok(Artifact {
        schema: "wiretap-amp/diagnose-g/v1",
        columns: vec!["y", "g"],
        rows,
        data: json!({
            "n": p.n,
            "s1": p.sigma1_sq,
            "s2": p.sigma2_sq,
            "radius": radius,
            "sufficient_radius": bound,
            "within_sufficient_bound": radius < bound,
            "sign_changes": diag.sign_changes,
            "samples": diag.samples,
        }),
    })
}
