//! Parallel drivers over the core samplers. Work items carry their own
//! RNG streams and results are collected in index order, so the output does
//! not depend on the thread count.

use anyhow::Result;
use rayon::prelude::*;
use rpclab_core::cascade::{functional_sample, keys, sample_partition_chain, stream, McEstimate};
use rpclab_core::stats::{summarize, Summary};
use rpclab_core::variational::{
    combine_starts, minimize_from, sk_couplings, sk_log_partition, starting_points,
    MinimizationResult, MinimizeOptions, ModelParams,
};
use rpclab_core::{AtomicMeasure, BoundaryFunction, CovarianceFunction, PsiSolution};

/// Runs `f` with a pool of `threads` workers (0 lets rayon decide).
pub fn with_threads<T: Send, F: FnOnce() -> T + Send>(threads: usize, f: F) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()?;
    Ok(pool.install(f))
}

fn mc_at<F: Fn(f64) -> f64 + Sync>(
    x: &AtomicMeasure,
    g: &CovarianceFunction,
    f: &F,
    q: f64,
    branching: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let vals = (0..samples as u64)
        .into_par_iter()
        .map(|s| functional_sample(x, g, f, q, branching, seed, s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(McEstimate::from_samples(branching, &vals))
}

/// Same estimate as `cascade::mc_functional`, bit for bit.
pub fn mc_functional(
    x: &AtomicMeasure,
    g: &CovarianceFunction,
    psi: &BoundaryFunction,
    branching: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    mc_at(x, g, &|y| psi.value(y), 1.0, branching, samples, seed)
}

/// Same estimate as `cascade::mc_psi_level`.
pub fn mc_psi_level(
    sol: &PsiSolution,
    q: f64,
    branching: usize,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    let psi_q = sol.psi_grid_at(q);
    mc_at(
        sol.measure(),
        sol.covariance(),
        &|y| psi_q.eval(y),
        q,
        branching,
        samples,
        seed,
    )
}

/// Counts of the level index of `q_12` (`1..=K+1`, stored at `l − 1`) over
/// `samples` two-replica coalescent chains.
pub fn overlap_level_counts(x: &AtomicMeasure, samples: usize, seed: u64) -> Result<Vec<usize>> {
    let (qs, _) = x.levels();
    let levels = (0..samples as u64)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, &[keys::CHAIN, s]);
            let chain = sample_partition_chain(x, 2, &mut rng)?;
            let q12 = chain.overlaps[0][1];
            Ok(qs
                .iter()
                .position(|&q| q == q12)
                .expect("overlap is a level"))
        })
        .collect::<Result<Vec<usize>, rpclab_core::Error>>()?;
    let mut counts = vec![0; qs.len() - 1];
    for l in levels {
        counts[l - 1] += 1;
    }
    Ok(counts)
}

/// `variational::minimize` with the starts run in parallel.
pub fn minimize(
    params: &ModelParams,
    k: usize,
    opts: &MinimizeOptions,
) -> Result<MinimizationResult> {
    anyhow::ensure!(k >= 1, "k must be at least 1");
    let outcomes = starting_points(k, opts.starts.max(1), opts.seed)
        .into_par_iter()
        .map(|s| minimize_from(params, k, s, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(combine_starts(params, k, outcomes, opts)?)
}

/// `variational::sk_finite_n_pressure` with disorder draws in parallel:
/// the summary of `(1/N) log Z_N`.
pub fn sk_pressure(n: usize, params: &ModelParams, draws: usize, seed: u64) -> Result<Summary> {
    let vals = (0..draws as u64)
        .into_par_iter()
        .map(|d| sk_log_partition(&sk_couplings(n, seed, d), params).map(|v| v / n as f64))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(summarize(&vals))
}
