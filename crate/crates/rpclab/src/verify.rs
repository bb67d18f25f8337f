//! Property suites behind `rpclab verify`.

use anyhow::{bail, Result};
use rpclab_core::cascade::{
    bs_transition_probability, bs_u, check_rem_quasi_stationarity, set_partitions, LogNormalShift,
    Partition, ShiftDistribution, TwoPointShift, UnitShift,
};
use rpclab_core::parisi::{linear_functional, parisi_functional, solve_psi};
use rpclab_core::{AtomicMeasure, BoundaryFunction, CovarianceFunction, GridSpec};
use serde_json::{json, Value};

use crate::cli::VerifyArgs;
use crate::commands::{
    derivative_checks, derivative_table, resolve_model, setup, ModelConfig, Outcome,
};
use crate::config::resolve_grid;
use crate::output::{num, Check};
use crate::parallel;

pub const SUITES: [&str; 6] = ["overlap", "bs", "rem", "grem", "linearity", "derivatives"];

/// Inputs shared by the suites.
pub struct SuiteConfig {
    pub model: ModelConfig,
    pub spec: GridSpec,
    pub branching: Option<usize>,
    pub samples: Option<usize>,
    pub seed: u64,
}

impl SuiteConfig {
    fn measure_or(&self, default: &str) -> Result<AtomicMeasure> {
        Ok(match &self.model.measure {
            Some(m) => m.clone(),
            None => default.parse()?,
        })
    }
}

fn sigma_check(name: String, observed: f64, expected: f64, sigma: f64) -> Check {
    Check::new(name, (observed - expected).abs() <= 3.0 * sigma)
        .with("observed", num(observed))
        .with("expected", num(expected))
        .with("sigma", num(sigma))
}

/// Empirical `P(q_12 = q_l)` from coalescent chains against `x_l − x_{l−1}`.
pub fn overlap(c: &SuiteConfig) -> Result<(Vec<Value>, Vec<Check>)> {
    let x = c.measure_or("0.2:0.25,0.5:0.6,0.8:0.9,1:1")?;
    let n = c.samples.unwrap_or(100_000);
    let counts = parallel::overlap_level_counts(&x, n, c.seed)?;
    let (qs, xs) = x.levels();
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (i, &cnt) in counts.iter().enumerate() {
        let l = i + 1;
        let p = if l < xs.len() {
            xs[l] - xs[l - 1]
        } else {
            1.0 - xs[l - 1]
        };
        let freq = cnt as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        rows.push(json!({"suite": "overlap", "q": num(qs[l]), "frequency": num(freq), "probability": num(p)}));
        checks.push(sigma_check(
            format!("overlap: P(q12 = {})", qs[l]),
            freq,
            p,
            sigma,
        ));
    }
    Ok((rows, checks))
}

/// Coarsening probabilities of every partition of three and four
/// elements sum to one; `u(2, r) = 1 − r`.
pub fn bs() -> Result<(Vec<Value>, Vec<Check>)> {
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for n in [3usize, 4] {
        for r in [0.2, 0.5, 0.8] {
            let mut worst: f64 = 0.0;
            for labels in set_partitions(n) {
                let fine = Partition::from_labels(&labels)?;
                let total: f64 = fine
                    .coarsenings()
                    .iter()
                    .map(|c| bs_transition_probability(&fine, c, r))
                    .sum::<rpclab_core::Result<f64>>()?;
                worst = worst.max((total - 1.0).abs());
            }
            rows.push(json!({"suite": "bs", "n": n, "r": num(r), "max_sum_error": num(worst)}));
            checks.push(
                Check::new(
                    format!("bs: coarsenings of {n} elements sum to 1 at r = {r}"),
                    worst <= 1e-13,
                )
                .with("error", num(worst)),
            );
        }
    }
    for r in [0.2, 0.5, 0.8] {
        let e = (bs_u(2, r) - (1.0 - r)).abs();
        checks.push(Check::new(format!("bs: u(2, {r}) = 1 - r"), e <= 1e-12).with("error", num(e)));
    }
    Ok((rows, checks))
}

/// KS tests of REM quasi-stationarity for three shift laws.
pub fn rem(c: &SuiteConfig) -> Result<(Vec<Value>, Vec<Check>)> {
    let n = c.samples.unwrap_or(100_000);
    let points = c.branching.unwrap_or(100);
    let shifts: [&(dyn ShiftDistribution + Sync); 3] = [
        &UnitShift,
        &LogNormalShift { beta: 1.0 },
        &TwoPointShift { a: 1.0, b: 2.0 },
    ];
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (i, w) in shifts.iter().enumerate() {
        let rep = check_rem_quasi_stationarity(0.5, *w, n, points, c.seed.wrapping_add(i as u64))?;
        rows.push(json!({
            "suite": "rem",
            "shift": w.name(),
            "ks_statistic": num(rep.statistic),
            "p_value": num(rep.p_value),
        }));
        checks.push(
            Check::new(format!("rem: {} shift", w.name()), rep.passed)
                .with("p_value", num(rep.p_value)),
        );
    }
    Ok((rows, checks))
}

/// The cascade functional with `ψ_q` at `q ∈ {q_1, (q_1 + 1)/2, 1}`:
/// pairwise agreement and agreement with quadrature.
pub fn grem(c: &SuiteConfig) -> Result<(Vec<Value>, Vec<Check>)> {
    let x = c.measure_or("0.35:0.45,1:1")?;
    let b = c.branching.unwrap_or(100);
    let n = c.samples.unwrap_or(4000);
    let sol = solve_psi(&x, &c.model.cov(), &c.model.psi(), &c.spec)?;
    let q1 = x.atoms()[0].0;
    let mut ests = Vec::new();
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for q in [q1, 0.5 * (q1 + 1.0), 1.0] {
        let e = parallel::mc_psi_level(&sol, q, b, n, c.seed)?;
        rows.push(json!({
            "suite": "grem",
            "q": num(q),
            "estimate": num(e.estimate()),
            "stderr": num(e.stderr()),
            "truncation_band": num(e.truncation_band),
            "quadrature": num(sol.value()),
        }));
        checks.push(Check::new(
            format!("grem: level {q} agrees with quadrature"),
            e.agrees_with(sol.value(), 3.0),
        ));
        ests.push((q, e));
    }
    for i in 0..ests.len() {
        for j in i + 1..ests.len() {
            let (a, b) = (&ests[i].1, &ests[j].1);
            let diff = (a.estimate() - b.estimate()).abs();
            let allowed =
                3.0 * a.stderr().hypot(b.stderr()) + a.truncation_band + b.truncation_band;
            checks.push(
                Check::new(
                    format!("grem: levels {} and {} agree", ests[i].0, ests[j].0),
                    diff <= allowed,
                )
                .with("difference", num(diff))
                .with("allowed", num(allowed)),
            );
        }
    }
    Ok((rows, checks))
}

/// Linear boundary against `(β²/2) ∫ x dg` for both covariances.
pub fn linearity(c: &SuiteConfig) -> Result<(Vec<Value>, Vec<Check>)> {
    let x = c.measure_or("0.15:0.2,0.45:0.5,0.8:0.9,1:1")?;
    let beta = c.model.beta;
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for g in [CovarianceFunction::Linear, CovarianceFunction::HalfSquare] {
        let v = parisi_functional(&x, &g, &BoundaryFunction::Linear { beta }, &c.spec)?;
        let want = linear_functional(&x, &g, beta);
        let err = (v - want).abs();
        rows.push(json!({"suite": "linearity", "g": g.name(), "quadrature": num(v), "closed_form": num(want)}));
        checks.push(
            Check::new(format!("linearity: g = {}", g.name()), err <= 1e-6).with("error", num(err)),
        );
    }
    Ok((rows, checks))
}

pub fn derivatives(c: &SuiteConfig) -> Result<(Vec<Value>, Vec<Check>)> {
    let x = c.measure_or("0.2:0.3,0.55:0.7,1:1")?;
    let rows = derivative_table(&x, &c.model.cov(), &c.model.psi(), &c.spec, 1e-4)?;
    let out = rows
        .iter()
        .map(|r| {
            json!({
                "suite": "derivatives",
                "index": r.index,
                "q_derivative": r.q_derivative.map_or(Value::Null, num),
                "x_derivative": num(r.x_derivative),
                "fd_check_error": r.fd_error().map_or(Value::Null, num),
            })
        })
        .collect();
    Ok((out, derivative_checks(&x, &rows)))
}

pub fn run(a: &VerifyArgs) -> Result<Outcome> {
    let mut s = setup("verify", &a.io)?;
    let suite = s.r.get("suite", a.suite.clone(), "all".to_string())?;
    let model = resolve_model(&mut s.r, &a.model, None, 1.0, 0.3)?;
    let spec = resolve_grid(&mut s.r, a.grid.n_h, a.grid.n_y, a.grid.half_width)?;
    let branching = s.r.optional("branching", a.mc.branching)?;
    let samples = s.r.optional("samples", a.mc.samples)?;
    let seed = s.r.required("seed", a.mc.seed)?;
    let suites: Vec<&str> = if suite == "all" {
        SUITES.to_vec()
    } else if let Some(&name) = SUITES.iter().find(|&&n| n == suite) {
        vec![name]
    } else {
        bail!("unknown suite {suite:?} (one of {SUITES:?} or all)");
    };
    let cfg = SuiteConfig {
        model,
        spec,
        branching,
        samples,
        seed,
    };
    let (results, checks) = parallel::with_threads(s.threads, || -> Result<_> {
        let mut results = Vec::new();
        let mut checks = Vec::new();
        for name in suites {
            let (r, c) = match name {
                "overlap" => overlap(&cfg)?,
                "bs" => bs()?,
                "rem" => rem(&cfg)?,
                "grem" => grem(&cfg)?,
                "linearity" => linearity(&cfg)?,
                _ => derivatives(&cfg)?,
            };
            results.extend(r);
            checks.extend(c);
        }
        Ok((results, checks))
    })??;
    s.finish(results, checks, Vec::new())
}
