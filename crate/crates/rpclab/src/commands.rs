//! The subcommands. Each resolves its configuration, runs, and returns a
//! report; nothing here prints.

use std::path::PathBuf;

use anyhow::{anyhow, bail, ensure, Result};
use rayon::prelude::*;
use rpclab_core::backward::{q_derivative, x_derivative, BackwardField};
use rpclab_core::parisi::{parisi_functional, solve_psi};
use rpclab_core::variational::{
    at_beta, g_functional, kappa_term, self_consistent_q, MinimizeOptions, ModelParams,
};
use rpclab_core::{AtomicMeasure, BoundaryFunction, CovarianceFunction, GridSpec};
use serde_json::{json, Value};

use crate::cli::{
    AtLineArgs, DerivativesArgs, EvalArgs, Grid, Io, MinimizeArgs, Model, SimulateArgs,
    SkOracleArgs,
};
use crate::config::{read_config_file, resolve_grid, Format, GSelector, Resolver};
use crate::output::{columns_csv, num, nums, Check, Report};
use crate::parallel;

/// A finished command: the report plus where and how to write it.
pub struct Outcome {
    pub report: Report,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub threads: usize,
    /// Extra files (path, contents).
    pub extra: Vec<(PathBuf, String)>,
}

pub struct Setup {
    pub r: Resolver,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub threads: usize,
}

pub fn setup(command: &str, io: &Io) -> Result<Setup> {
    let file = match &io.config {
        Some(p) => read_config_file(p)?,
        None => Default::default(),
    };
    let mut r = Resolver::new(command, file);
    let output = r.optional("output", io.output.clone())?;
    let format = r.get("format", io.format, Format::Json)?;
    let threads = r.get("threads", io.threads, 0usize)?;
    Ok(Setup {
        r,
        output,
        format,
        threads,
    })
}

impl Setup {
    pub fn finish(
        self,
        results: Vec<Value>,
        checks: Vec<Check>,
        extra: Vec<(PathBuf, String)>,
    ) -> Result<Outcome> {
        let config = self.r.finish()?;
        Ok(Outcome {
            report: Report {
                config,
                results,
                checks,
            },
            output: self.output,
            format: self.format,
            threads: self.threads,
            extra,
        })
    }
}

pub struct ModelConfig {
    pub measure: Option<AtomicMeasure>,
    pub beta: f64,
    pub h: f64,
    pub g: GSelector,
}

impl ModelConfig {
    pub fn psi(&self) -> BoundaryFunction {
        BoundaryFunction::LogCosh {
            beta: self.beta,
            h: self.h,
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.beta, self.h)?)
    }

    pub fn cov(&self) -> CovarianceFunction {
        self.g.covariance()
    }

    pub fn measure(&self) -> Result<&AtomicMeasure> {
        self.measure
            .as_ref()
            .ok_or_else(|| anyhow!("--measure is required (flag or config key)"))
    }
}

pub fn resolve_model(
    r: &mut Resolver,
    m: &Model,
    default_measure: Option<&str>,
    beta: f64,
    h: f64,
) -> Result<ModelConfig> {
    let measure = match default_measure {
        Some(d) => Some(r.get("measure", m.measure.clone(), d.parse()?)?),
        None => r.optional("measure", m.measure.clone())?,
    };
    let beta = r.get("beta", m.beta, beta)?;
    let h = r.get("h", m.h, h)?;
    ensure!(
        beta >= 0.0 && beta.is_finite() && h.is_finite(),
        "need finite beta >= 0 and finite h"
    );
    let g = r.get("g", m.g, GSelector::Linear)?;
    Ok(ModelConfig {
        measure,
        beta,
        h,
        g,
    })
}

fn grid(r: &mut Resolver, g: &Grid) -> Result<GridSpec> {
    resolve_grid(r, g.n_h, g.n_y, g.half_width)
}

pub fn eval(a: &EvalArgs) -> Result<Outcome> {
    let mut s = setup("eval", &a.io)?;
    let model = resolve_model(&mut s.r, &a.model, None, 1.0, 0.0)?;
    let spec = grid(&mut s.r, &a.grid)?;
    let x = model.measure()?;
    let psi = model.psi();
    let p = parisi_functional(x, &model.cov(), &psi, &spec)?;
    let p_linear = match model.g {
        GSelector::Linear => p,
        _ => parisi_functional(x, &CovarianceFunction::Linear, &psi, &spec)?,
    };
    let params = model.params()?;
    let kappa = kappa_term(x, model.beta);
    let g_value = g_functional(x, &params, &spec)?;
    let results = vec![json!({
        "measure": x.to_string(),
        "g": model.g.name(),
        "parisi_functional": num(p),
        "g_functional": {
            "log_2": num(std::f64::consts::LN_2),
            "parisi_linear": num(p_linear),
            "kappa_term": num(kappa),
            "value": num(g_value),
        },
    })];
    s.finish(results, Vec::new(), Vec::new())
}

/// `|a − b| ≤ 3√(σ_a² + σ_b²)` plus both truncation bands.
fn mc_pair_check(
    name: String,
    a: &rpclab_core::cascade::McEstimate,
    b: &rpclab_core::cascade::McEstimate,
) -> Check {
    let diff = (a.estimate() - b.estimate()).abs();
    let allowed = 3.0 * a.stderr().hypot(b.stderr()) + a.truncation_band + b.truncation_band;
    Check::new(name, diff <= allowed)
        .with("difference", num(diff))
        .with("allowed", num(allowed))
}

fn mc_row(q: f64, e: &rpclab_core::cascade::McEstimate, quadrature: f64) -> Value {
    json!({
        "q": num(q),
        "branching": e.branching,
        "estimate": num(e.estimate()),
        "stderr": num(e.stderr()),
        "estimate_b": num(e.at_b.mean),
        "stderr_b": num(e.at_b.stderr),
        "truncation_band": num(e.truncation_band),
        "quadrature": num(quadrature),
    })
}

pub fn simulate(a: &SimulateArgs) -> Result<Outcome> {
    let mut s = setup("simulate", &a.io)?;
    let model = resolve_model(&mut s.r, &a.model, None, 1.0, 0.0)?;
    let spec = grid(&mut s.r, &a.grid)?;
    let branching = s.r.get("branching", a.mc.branching, 100usize)?;
    let samples = s.r.get("samples", a.mc.samples, 1000usize)?;
    let seed: u64 = s.r.required("seed", a.mc.seed)?;
    let levels =
        s.r.optional::<String>("levels", a.levels.clone())?
            .map(|v| parse_list(&v))
            .transpose()?;
    ensure!(samples >= 2, "need at least 2 samples");
    let x = model.measure()?;
    let sol = solve_psi(x, &model.cov(), &model.psi(), &spec)?;
    let quadrature = sol.value();
    let threads = s.threads;
    let (results, checks) = parallel::with_threads(threads, || -> Result<_> {
        let mut results = Vec::new();
        let mut checks = Vec::new();
        match &levels {
            None => {
                let e = parallel::mc_functional(
                    x,
                    &model.cov(),
                    &model.psi(),
                    branching,
                    samples,
                    seed,
                )?;
                results.push(mc_row(1.0, &e, quadrature));
                checks.push(
                    Check::new("mc agrees with quadrature", e.agrees_with(quadrature, 3.0))
                        .with("difference", num((e.estimate() - quadrature).abs())),
                );
            }
            Some(qs) => {
                let mut ests = Vec::new();
                for &q in qs {
                    ensure!((0.0..=1.0).contains(&q), "level {q} outside [0, 1]");
                    let e = parallel::mc_psi_level(&sol, q, branching, samples, seed)?;
                    results.push(mc_row(q, &e, quadrature));
                    checks.push(Check::new(
                        format!("level {q} agrees with quadrature"),
                        e.agrees_with(quadrature, 3.0),
                    ));
                    ests.push((q, e));
                }
                for i in 0..ests.len() {
                    for j in i + 1..ests.len() {
                        let name = format!("levels {} and {} agree", ests[i].0, ests[j].0);
                        checks.push(mc_pair_check(name, &ests[i].1, &ests[j].1));
                    }
                }
            }
        }
        Ok((results, checks))
    })??;
    s.finish(results, checks, Vec::new())
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| anyhow!("{v:?}: {e}")))
        .collect()
}

/// One row of the derivative table.
pub struct DerivativeRow {
    pub index: usize,
    pub q_derivative: Option<f64>,
    pub x_derivative: f64,
    pub fd_q: Option<f64>,
    pub fd_x: Option<f64>,
}

impl DerivativeRow {
    pub fn fd_error(&self) -> Option<f64> {
        let eq = self.q_derivative.zip(self.fd_q).map(|(a, b)| (a - b).abs());
        let ex = self.fd_x.map(|b| (self.x_derivative - b).abs());
        match (eq, ex) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0.0).max(b.unwrap_or(0.0))),
        }
    }
}

/// Exact derivatives of `P` in every `q_l` and `x_i`, with central
/// differences of step `step` (one-sided second order for `x_0`). A
/// difference is skipped when the shifted measure would be invalid.
pub fn derivative_table(
    x: &AtomicMeasure,
    g: &CovarianceFunction,
    psi: &BoundaryFunction,
    spec: &GridSpec,
    step: f64,
) -> Result<Vec<DerivativeRow>> {
    let sol = solve_psi(x, g, psi, spec)?;
    let field = BackwardField::new(&sol)?;
    let atoms = x.atoms().to_vec();
    let k = x.depth();
    let p = |v: &[(f64, f64)]| -> Option<f64> {
        let m = AtomicMeasure::new(v).ok()?;
        if !m.in_m_lt1() || m.depth() != k {
            return None;
        }
        parisi_functional(&m, g, psi, spec).ok()
    };
    let shifted = |i: usize, dq: f64, dx: f64| {
        let mut v = atoms.clone();
        v[i].0 += dq;
        v[i].1 += dx;
        v
    };
    let mut rows = Vec::with_capacity(k + 1);
    // x_0 lives on [0, q_1); grow it by putting mass at q = 0
    let fd_x0 = if atoms[0].0 > 0.0 {
        let with_zero = |d: f64| {
            let mut v = vec![(0.0, d)];
            v.extend_from_slice(&atoms);
            AtomicMeasure::new(&v)
                .ok()
                .and_then(|m| parisi_functional(&m, g, psi, spec).ok())
        };
        match (with_zero(step), with_zero(2.0 * step)) {
            (Some(a), Some(b)) => Some((4.0 * a - b - 3.0 * sol.value()) / (2.0 * step)),
            _ => None,
        }
    } else {
        None
    };
    rows.push(DerivativeRow {
        index: 0,
        q_derivative: None,
        x_derivative: x_derivative(&field, 0)?,
        fd_q: None,
        fd_x: fd_x0,
    });
    for l in 1..=k {
        let central = |plus: Option<f64>, minus: Option<f64>| {
            plus.zip(minus).map(|(a, b)| (a - b) / (2.0 * step))
        };
        rows.push(DerivativeRow {
            index: l,
            q_derivative: Some(q_derivative(&field, l)?),
            x_derivative: x_derivative(&field, l)?,
            fd_q: central(
                p(&shifted(l - 1, step, 0.0)),
                p(&shifted(l - 1, -step, 0.0)),
            ),
            fd_x: central(
                p(&shifted(l - 1, 0.0, step)),
                p(&shifted(l - 1, 0.0, -step)),
            ),
        });
    }
    Ok(rows)
}

pub const FD_TOLERANCE: f64 = 1e-5;

pub fn derivative_checks(x: &AtomicMeasure, rows: &[DerivativeRow]) -> Vec<Check> {
    rows.iter()
        .filter_map(|row| {
            row.fd_error().map(|e| {
                Check::new(
                    format!(
                        "{x}: derivatives at index {} match finite differences",
                        row.index
                    ),
                    e <= FD_TOLERANCE,
                )
                .with("error", num(e))
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

pub fn derivatives(a: &DerivativesArgs) -> Result<Outcome> {
    let mut s = setup("derivatives", &a.io)?;
    let model = resolve_model(&mut s.r, &a.model, None, 1.0, 0.0)?;
    let spec = grid(&mut s.r, &a.grid)?;
    let step = s.r.get("step", a.step, 1e-4)?;
    ensure!(step > 0.0 && step < 0.1, "step must lie in (0, 0.1)");
    let x = model.measure()?;
    let rows = derivative_table(x, &model.cov(), &model.psi(), &spec, step)?;
    let (qs, xs) = x.levels();
    let results = rows
        .iter()
        .map(|row| {
            json!({
                "index": row.index,
                "q": num(qs[row.index]),
                "x": num(xs[row.index]),
                "q_derivative": opt(row.q_derivative),
                "x_derivative": num(row.x_derivative),
                "fd_q": opt(row.fd_q),
                "fd_x": opt(row.fd_x),
                "fd_check_error": opt(row.fd_error()),
            })
        })
        .collect();
    let checks = derivative_checks(x, &rows);
    s.finish(results, checks, Vec::new())
}

pub fn minimize(a: &MinimizeArgs) -> Result<Outcome> {
    let mut s = setup("minimize", &a.io)?;
    let model = resolve_model(&mut s.r, &a.model, None, 1.0, 0.0)?;
    ensure!(model.measure.is_none(), "minimize takes no --measure");
    ensure!(
        model.g == GSelector::Linear,
        "G uses the linear cavity covariance; --g must be linear"
    );
    let spec = grid(&mut s.r, &a.grid)?;
    let d = MinimizeOptions::default();
    let k = s.r.get("k", a.k, 1usize)?;
    let opts = MinimizeOptions {
        starts: s.r.get("starts", a.starts, d.starts)?,
        max_iter: s.r.get("max-iter", a.max_iter, d.max_iter)?,
        tolerance: s.r.get("tolerance", a.tolerance, d.tolerance)?,
        seed: s.r.required("seed", a.seed)?,
        grid: spec,
        ..d
    };
    ensure!(k >= 1 && opts.starts >= 1, "need k >= 1 and starts >= 1");
    let params = model.params()?;
    let res = parallel::with_threads(s.threads, || parallel::minimize(&params, k, &opts))??;
    let starts: Vec<Value> = res
        .starts
        .iter()
        .map(|o| {
            json!({
                "initial": o.initial.to_string(),
                "initial_value": num(o.initial_value),
                "minimizer": o.minimizer.to_string(),
                "value": num(o.value),
                "iterations": o.iterations,
                "converged": o.converged,
                "gradient_norm": num(o.gradient_norm),
            })
        })
        .collect();
    let trace: Vec<Value> = res.trace.iter().map(|&(i, v)| json!([i, num(v)])).collect();
    let results = vec![json!({
        "k": k,
        "value": num(res.value),
        "minimizer": res.minimizer.to_string(),
        "gradient_norm": num(res.gradient_norm),
        "flagged": res.flagged,
        "dispersion": num(res.dispersion()),
        "stationarity": nums(&res.stationarity),
        "trace": trace,
        "starts": starts,
    })];
    let checks = vec![
        Check::new(
            "no start increased G",
            res.starts.iter().all(|o| o.value <= o.initial_value),
        ),
        Check::new("iteration cap not hit", !res.flagged),
    ];
    s.finish(results, checks, Vec::new())
}

pub fn at_line(a: &AtLineArgs) -> Result<Outcome> {
    let mut s = setup("at-line", &a.io)?;
    let hs: Vec<f64> = s.r.list("h", a.h.clone(), "0")?;
    let bracket: Vec<f64> = s.r.list("bracket", a.bracket.clone(), "0.5,6")?;
    let csv_path = s.r.optional("csv", a.csv.clone())?;
    if bracket.len() != 2 || !(bracket[0] < bracket[1]) {
        bail!("--bracket needs lo,hi with lo < hi");
    }
    if hs.iter().any(|h| !(*h >= 0.0)) {
        bail!("--h values must be >= 0");
    }
    let bracket = (bracket[0], bracket[1]);
    let line: Vec<(f64, Result<f64, String>)> = parallel::with_threads(s.threads, || {
        hs.par_iter()
            .map(|&h| (h, at_beta(h, bracket).map_err(|e| e.to_string())))
            .collect()
    })?;
    let results: Vec<Value> = line
        .iter()
        .map(|(h, b)| match b {
            Ok(b) => json!({"h": num(*h), "beta_at": num(*b), "error": Value::Null}),
            Err(e) => json!({"h": num(*h), "beta_at": Value::Null, "error": e}),
        })
        .collect();
    let mut checks = vec![Check::new(
        "every point bracketed",
        line.iter().all(|(_, b)| b.is_ok()),
    )];
    let mut sorted: Vec<(f64, f64)> = line
        .iter()
        .filter_map(|(h, b)| b.as_ref().ok().map(|b| (*h, *b)))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    checks.push(Check::new(
        "beta_at nondecreasing in h",
        sorted.windows(2).all(|w| w[1].1 >= w[0].1),
    ));
    let mut extra = Vec::new();
    if let Some(p) = csv_path {
        extra.push((p, columns_csv(&["h", "beta_at"], &results)?));
    }
    s.finish(results, checks, extra)
}

pub fn sk_oracle(a: &SkOracleArgs) -> Result<Outcome> {
    let mut s = setup("sk-oracle", &a.io)?;
    let model = resolve_model(&mut s.r, &a.model, None, 1.0, 0.0)?;
    ensure!(model.measure.is_none(), "sk-oracle takes no --measure");
    let spec = grid(&mut s.r, &a.grid)?;
    let spins = s.r.get("spins", a.spins, 12usize)?;
    let draws = s.r.get("draws", a.draws, 500usize)?;
    let seed: u64 = s.r.required("seed", a.seed)?;
    ensure!(draws >= 2, "need at least 2 draws");
    let params = model.params()?;
    let summary = parallel::with_threads(s.threads, || {
        parallel::sk_pressure(spins, &params, draws, seed)
    })??;
    let q_bar = self_consistent_q(&params);
    let rs = g_functional(&AtomicMeasure::dirac(q_bar)?, &params, &spec)?;
    let results = vec![json!({
        "spins": spins,
        "draws": draws,
        "estimate": num(summary.mean),
        "stderr": num(summary.stderr),
        "q_bar": num(q_bar),
        "replica_symmetric_g": num(rs),
    })];
    let checks = vec![Check::new(
        "estimate below replica-symmetric G within 3 sigma",
        summary.mean <= rs + 3.0 * summary.stderr,
    )];
    s.finish(results, checks, Vec::new())
}
