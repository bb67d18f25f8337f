mod common;

use common::{m, Lcg};
use rand::Rng;
use rpclab_core::backward::{
    chain_probability, enumerate_chains, forward_density, gaussian_expectation, gradient,
    log_partition_expectation, q_derivative, second_q_derivative, second_q_derivative_sk,
    tree_expectation, wick_derivative_oracle, x_derivative, BackwardField, LeafFunction,
    OverlapEvent,
};
use rpclab_core::cascade::{
    is_ultrametric, overlap_matrix, sample_cavity_field, sample_grem, stream,
};
use rpclab_core::parisi::{parisi_functional, solve_psi};
use rpclab_core::stats::summarize;
use rpclab_core::{AtomicMeasure, BoundaryFunction, CovarianceFunction, Error, GridSpec};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn spec() -> GridSpec {
    GridSpec::default()
}

fn p_of(atoms: &[(f64, f64)], g: &CovarianceFunction, psi: &BoundaryFunction) -> f64 {
    parisi_functional(&AtomicMeasure::new(atoms).unwrap(), g, psi, &spec()).unwrap()
}

fn shift_q(atoms: &[(f64, f64)], i: usize, d: f64) -> Vec<(f64, f64)> {
    let mut a = atoms.to_vec();
    a[i].0 += d;
    a
}

fn shift_x(atoms: &[(f64, f64)], i: usize, d: f64) -> Vec<(f64, f64)> {
    let mut a = atoms.to_vec();
    a[i].1 += d;
    a
}

#[test]
fn constant_boundary_is_untilted() {
    let x = m("0.15:0.2,0.45:0.5,0.8:0.9,1:1");
    for g in [CovarianceFunction::Linear, CovarianceFunction::HalfSquare] {
        let sol = solve_psi(&x, &g, &BoundaryFunction::Constant(0.3), &spec()).unwrap();
        for q in [0.15, 0.3, 0.45, 0.8, 1.0] {
            let d = forward_density(&sol, q).unwrap();
            let var = g.g(q);
            for (&y, &r) in d.ys.iter().zip(&d.rho) {
                let want = (-0.5 * y * y / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                assert!((r - want).abs() < 1e-10, "q {q} y {y}");
            }
            assert!(d.m.iter().all(|&v| v.abs() < 1e-14));
        }
    }
}

#[test]
fn densities_normalized_and_means_bounded() {
    let mut rng = Lcg(31);
    for _ in 0..6 {
        let x = rng.measure(3, 0.03);
        let beta = rng.range(0.4, 2.0);
        let psi = BoundaryFunction::LogCosh {
            beta,
            h: rng.range(-0.6, 0.6),
        };
        let sol = solve_psi(&x, &CovarianceFunction::Linear, &psi, &spec()).unwrap();
        let field = BackwardField::new(&sol).unwrap();
        let (qs, _) = x.levels();
        let mut probes: Vec<f64> = qs[1..].to_vec();
        probes.extend(qs.windows(2).skip(1).map(|w| 0.5 * (w[0] + w[1])));
        for q in probes {
            let d = field.tilted_density(q).unwrap();
            assert!(
                (d.integral() - 1.0).abs() < 1e-8,
                "{x} at {q}: {}",
                d.integral()
            );
            assert!(d.m.iter().all(|v| v.abs() <= beta + 1e-12));
            assert!(d.rho.iter().all(|&r| r >= 0.0));
        }
        for l in 1..=sol.depth() + 1 {
            assert!((field.expect(l, |_| 1.0) - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn linear_boundary_means_and_derivatives() {
    let x = m("0.2:0.3,0.6:0.65,1:1");
    let beta = 1.3;
    for g in [CovarianceFunction::Linear, CovarianceFunction::HalfSquare] {
        let sol = solve_psi(&x, &g, &BoundaryFunction::Linear { beta }, &spec()).unwrap();
        for q in [0.2, 0.4, 0.6, 0.9] {
            let d = forward_density(&sol, q).unwrap();
            assert!(d.m.iter().all(|&v| (v - beta).abs() < 1e-10));
        }
        let (qs, xs) = x.levels();
        let (dq, dx) = gradient(&sol).unwrap();
        for l in 1..=2 {
            let want = -0.5 * g.g_prime(qs[l]) * beta * beta * (xs[l] - xs[l - 1]);
            assert!((dq[l - 1] - want).abs() < 1e-9);
        }
        for i in 0..=2 {
            let want = 0.5 * beta * beta * (g.g(qs[i + 1]) - g.g(qs[i]));
            assert!((dx[i] - want).abs() < 1e-9);
        }
    }
}

#[test]
fn derivative_bounds_on_random_instances() {
    let mut rng = Lcg(4242);
    for n in 0..20 {
        let x = rng.measure(1 + n % 3, 0.02);
        let beta = rng.range(0.2, 2.5);
        let h = rng.range(-1.0, 1.0);
        let g = if n % 2 == 0 {
            CovarianceFunction::Linear
        } else {
            CovarianceFunction::HalfSquare
        };
        let sol = solve_psi(&x, &g, &BoundaryFunction::LogCosh { beta, h }, &spec()).unwrap();
        let (dq, dx) = gradient(&sol).unwrap();
        let (qs, xs) = x.levels();
        let c2 = 0.5 * beta * beta;
        for (j, d) in dq.iter().enumerate() {
            let l = j + 1;
            let lo = -c2 * (xs[l] - xs[l - 1]) * g.g_prime(qs[l]);
            assert!(
                *d <= 1e-12 && *d >= lo - 1e-12,
                "{x}: dq{l} = {d}, lower {lo}"
            );
        }
        for (i, d) in dx.iter().enumerate() {
            let hi = c2 * (g.g(qs[i + 1]) - g.g(qs[i]));
            assert!(
                *d >= -1e-12 && *d <= hi + 1e-12,
                "{x}: dx{i} = {d}, upper {hi}"
            );
        }
    }
}

#[test]
fn first_derivatives_match_finite_differences() {
    let cases = [
        ("0.35:0.45,1:1", 1.0, 0.3, CovarianceFunction::Linear),
        ("0.2:0.6,1:1", 1.6, -0.2, CovarianceFunction::HalfSquare),
        (
            "0.2:0.3,0.55:0.7,1:1",
            1.2,
            0.25,
            CovarianceFunction::Linear,
        ),
    ];
    let step = 1e-4;
    for (s, beta, h, g) in cases {
        let x = m(s);
        let psi = BoundaryFunction::LogCosh { beta, h };
        let sol = solve_psi(&x, &g, &psi, &spec()).unwrap();
        let field = BackwardField::new(&sol).unwrap();
        let atoms = x.atoms().to_vec();
        for l in 1..=x.depth() {
            let fd = (p_of(&shift_q(&atoms, l - 1, step), &g, &psi)
                - p_of(&shift_q(&atoms, l - 1, -step), &g, &psi))
                / (2.0 * step);
            let an = q_derivative(&field, l).unwrap();
            assert!((fd - an).abs() < 1e-5, "{s}: dq{l} {an} vs fd {fd}");
            let fd = (p_of(&shift_x(&atoms, l - 1, step), &g, &psi)
                - p_of(&shift_x(&atoms, l - 1, -step), &g, &psi))
                / (2.0 * step);
            let an = x_derivative(&field, l).unwrap();
            assert!((fd - an).abs() < 1e-5, "{s}: dx{l} {an} vs fd {fd}");
        }
        // x_0: put mass δ at q = 0; second-order one-sided difference
        let with_zero = |d: f64| {
            let mut a = vec![(0.0, d)];
            a.extend_from_slice(&atoms);
            p_of(&a, &g, &psi)
        };
        let p0 = sol.value();
        let fd = (4.0 * with_zero(step) - with_zero(2.0 * step) - 3.0 * p0) / (2.0 * step);
        let an = x_derivative(&field, 0).unwrap();
        assert!((fd - an).abs() < 1e-5, "{s}: dx0 {an} vs fd {fd}");
    }
}

#[test]
fn index_errors() {
    let x = m("0.3:0.4,1:1");
    let sol = solve_psi(
        &x,
        &CovarianceFunction::Linear,
        &BoundaryFunction::LogCosh { beta: 1.0, h: 0.0 },
        &spec(),
    )
    .unwrap();
    let field = BackwardField::new(&sol).unwrap();
    assert!(matches!(
        q_derivative(&field, 0),
        Err(Error::IndexOutOfRange { .. })
    ));
    assert!(matches!(
        q_derivative(&field, 2),
        Err(Error::IndexOutOfRange { .. })
    ));
    assert!(matches!(
        x_derivative(&field, 2),
        Err(Error::IndexOutOfRange { .. })
    ));
    assert!(matches!(
        second_q_derivative(&sol, 1, 2),
        Err(Error::IndexOutOfRange { .. })
    ));
    let half = solve_psi(
        &x,
        &CovarianceFunction::HalfSquare,
        &BoundaryFunction::LogCosh { beta: 1.0, h: 0.0 },
        &spec(),
    )
    .unwrap();
    assert!(matches!(
        second_q_derivative(&half, 1, 1),
        Err(Error::UnsupportedCovariance(_))
    ));
}

/// Draws leaves from the shifted Gibbs measure `ξ_α e^{ψ(κ_α(1))}` of
/// independent truncated cascades and records the leaf field `κ_α(1)`.
fn backward_leaf_fields(x: &AtomicMeasure, psi: &BoundaryFunction, b: usize, n: usize) -> Vec<f64> {
    (0..n as u64)
        .map(|s| {
            let real = sample_grem(x, b, s, 1 << 20).unwrap();
            let real = sample_cavity_field(&real, &CovarianceFunction::Linear, s);
            let kappa = real.fields.as_ref().unwrap().last().unwrap().clone();
            let lw: Vec<f64> = (0..real.leaves())
                .map(|a| real.leaf_log_weight(a) + psi.value(kappa[a]))
                .collect();
            let top = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = lw.iter().map(|v| (v - top).exp()).collect();
            let u: f64 = stream(s, &[99]).random::<f64>() * w.iter().sum::<f64>();
            let mut acc = 0.0;
            let pick = w.iter().position(|&v| {
                acc += v;
                acc > u
            });
            kappa[pick.unwrap_or(w.len() - 1)]
        })
        .collect()
}

#[test]
fn leaf_density_matches_reordered_cascades() {
    let x = m("0.4:0.35,1:1");
    let psi = BoundaryFunction::LogCosh { beta: 1.2, h: 0.3 };
    let sol = solve_psi(&x, &CovarianceFunction::Linear, &psi, &spec()).unwrap();
    let n = 20_000;
    let sample = backward_leaf_fields(&x, &psi, 100, n);

    let d = forward_density(&sol, 1.0).unwrap();
    let edges: Vec<f64> = (-6..=6).map(|k| 0.5 * k as f64).collect();
    let mut cum = vec![0.0; d.ys.len()];
    for j in 1..d.ys.len() {
        cum[j] = cum[j - 1] + 0.5 * (d.rho[j] + d.rho[j - 1]) * (d.ys[j] - d.ys[j - 1]);
    }
    let cdf = |y: f64| {
        let j = d.ys.partition_point(|&v| v <= y).clamp(1, d.ys.len() - 1);
        let t = (y - d.ys[j - 1]) / (d.ys[j] - d.ys[j - 1]);
        cum[j - 1] + t * (cum[j] - cum[j - 1])
    };
    let mut probs = vec![cdf(edges[0])];
    probs.extend(edges.windows(2).map(|w| cdf(w[1]) - cdf(w[0])));
    probs.push(1.0 - cdf(edges[edges.len() - 1]));
    let mut counts = vec![0usize; probs.len()];
    for v in &sample {
        counts[edges.partition_point(|&e| e <= *v)] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&probs)
        .map(|(&c, &p)| (c as f64 - p * n as f64).powi(2) / (p * n as f64))
        .sum();
    let pval = 1.0 - ChiSquared::new((probs.len() - 1) as f64).unwrap().cdf(stat);
    assert!(pval > 0.01, "χ² = {stat}, p = {pval}, {counts:?}");

    // the untilted Gaussian is rejected by the same sample
    let gauss = |y: f64| rpclab_core::stats::normal_cdf(y);
    let mut gp = vec![gauss(edges[0])];
    gp.extend(edges.windows(2).map(|w| gauss(w[1]) - gauss(w[0])));
    gp.push(1.0 - gauss(edges[edges.len() - 1]));
    let stat: f64 = counts
        .iter()
        .zip(&gp)
        .map(|(&c, &p)| (c as f64 - p * n as f64).powi(2) / (p * n as f64))
        .sum();
    // 13 degrees of freedom: the 1e-6 upper quantile is about 49
    assert!(stat > 60.0, "Gaussian χ² = {stat}");

    // the first level carries no tilt: κ(q_1) is shared by every leaf
    let first = forward_density(&sol, 0.4).unwrap();
    let var = 0.4;
    let j = first.ys.partition_point(|&y| y < 0.5);
    let want = (-0.5 * first.ys[j].powi(2) / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
    assert!((first.rho[j] - want).abs() < 1e-10);
}

/// Per realization: `Σ p_a p_b ψ′(κ_a) ψ′(κ_b)` over leaf pairs at each
/// overlap level `1..=K+1`, for the first `b` children of every node.
fn pair_sums(
    real: &rpclab_core::cascade::CascadeRealization,
    psi: &BoundaryFunction,
    b: usize,
) -> Vec<f64> {
    let k = real.depth();
    let full = real.branching;
    let kappa = &real.fields.as_ref().unwrap()[k];
    let kept: Vec<usize> = (0..real.leaves())
        .filter(|&a| (1..=k).all(|l| real.ancestor(a, l) % full < b))
        .collect();
    let lw: Vec<f64> = kept
        .iter()
        .map(|&a| real.leaf_log_weight(a) + psi.value(kappa[a]))
        .collect();
    let top = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|v| (v - top).exp()).collect();
    let z: f64 = w.iter().sum();
    let pu: Vec<f64> = w
        .iter()
        .zip(&kept)
        .map(|(p, &a)| p / z * psi.first(kappa[a]))
        .collect();
    // squared block sums at depth d: Σ_blocks (Σ_{a in block} p u)²
    let blocks = |d: usize| -> f64 {
        let mut acc = std::collections::BTreeMap::new();
        for (v, &a) in pu.iter().zip(&kept) {
            let key = if d == 0 { 0 } else { real.ancestor(a, d) };
            *acc.entry(key).or_insert(0.0) += v;
        }
        acc.values().map(|s| s * s).sum()
    };
    let sq: Vec<f64> = (0..=k).map(blocks).collect();
    let diag: f64 = pu.iter().map(|v| v * v).sum();
    let mut out: Vec<f64> = (1..=k).map(|l| sq[l - 1] - sq[l]).collect();
    out.push(diag);
    out
}

#[test]
fn overlap_moments_match_cascade_averages() {
    let psi = BoundaryFunction::LogCosh { beta: 1.1, h: 0.25 };
    for (s, b) in [("0.3:0.4,1:1", 100), ("0.25:0.2,0.6:0.45,1:1", 20)] {
        let x = m(s);
        let sol = solve_psi(&x, &CovarianceFunction::Linear, &psi, &spec()).unwrap();
        let field = BackwardField::new(&sol).unwrap();
        let (_, xs) = x.levels();
        let k = x.depth();
        let n = 10_000;
        let mut small = vec![Vec::with_capacity(n); k + 1];
        let mut large = vec![Vec::with_capacity(n); k + 1];
        for seed in 0..n as u64 {
            let real = sample_grem(&x, 2 * b, seed, 1 << 20).unwrap();
            let real = sample_cavity_field(&real, &CovarianceFunction::Linear, seed);
            for (l, v) in pair_sums(&real, &psi, b).into_iter().enumerate() {
                small[l].push(v);
            }
            for (l, v) in pair_sums(&real, &psi, 2 * b).into_iter().enumerate() {
                large[l].push(v);
            }
        }
        for l in 1..=k + 1 {
            let prob = if l <= k {
                xs[l] - xs[l - 1]
            } else {
                1.0 - xs[k]
            };
            let e1 = summarize(&small[l - 1]);
            let e2 = summarize(&large[l - 1]);
            let band = 2.0 * (e2.mean - e1.mean).abs() / prob;
            let est = e2.mean / prob;
            let target = field.overlap_moment(l);
            assert!(
                (est - target).abs() <= 3.0 * e2.stderr / prob + band,
                "{s} level {l}: {est} ± {} (band {band}) vs {target}",
                e2.stderr / prob
            );
        }
    }
}

#[test]
fn tree_expectations_reduce_to_one_replica_pair() {
    let x = m("0.2:0.3,0.55:0.7,1:1");
    let sol = solve_psi(
        &x,
        &CovarianceFunction::Linear,
        &BoundaryFunction::LogCosh { beta: 1.2, h: 0.25 },
        &spec(),
    )
    .unwrap();
    let field = BackwardField::new(&sol).unwrap();
    let xs = [0.0, 0.3, 0.7, 1.0];
    for l in 1..=3 {
        let ev = OverlapEvent::new(&[(0, 1, l)]);
        let p = tree_expectation(&sol, &[LeafFunction::One, LeafFunction::One], &ev).unwrap();
        assert!((p - (xs[l] - xs[l - 1])).abs() < 1e-12);
        let u = tree_expectation(&sol, &[LeafFunction::First, LeafFunction::First], &ev).unwrap();
        assert!((u - p * field.overlap_moment(l)).abs() < 1e-8, "level {l}");
    }
}

#[test]
fn enumerated_overlap_matrices_are_ultrametric() {
    let xs = [0.0, 0.25, 0.6, 0.85];
    let qs = [0.0, 0.1, 0.4, 0.7, 1.0];
    for n in [3, 4] {
        let chains = enumerate_chains(&xs, n).unwrap();
        let total: f64 = chains.iter().map(|c| c.1).sum();
        assert!((total - 1.0).abs() < 1e-13);
        for (chain, p) in &chains {
            assert!((chain_probability(&xs, chain).unwrap() - p).abs() < 1e-15);
            let q = overlap_matrix(chain, &qs);
            assert!(is_ultrametric(&q));
            // completion: the two smallest overlaps of every triple coincide
            for a in 0..n {
                for b in a + 1..n {
                    for c in b + 1..n {
                        let mut t = [q[a][b], q[a][c], q[b][c]];
                        t.sort_by(f64::total_cmp);
                        assert_eq!(t[0], t[1]);
                    }
                }
            }
        }
    }
}

#[test]
fn at_family_event_probabilities() {
    for mm in [0.2, 0.5, 0.9] {
        // x*_{m,r}: mass m at q̄, the rest at r (levels 1 and 2)
        let xs = [0.0, mm, 1.0];
        let prob = |n: usize, ev: &[(usize, usize, usize)]| -> f64 {
            let ev = OverlapEvent::new(ev);
            enumerate_chains(&xs, n)
                .unwrap()
                .iter()
                .filter(|c| ev.holds(&c.0))
                .map(|c| c.1)
                .sum()
        };
        assert!((prob(2, &[(0, 1, 2)]) - (1.0 - mm)).abs() < 1e-14);
        assert!((prob(3, &[(0, 1, 2), (1, 2, 2)]) - (2.0 - mm) * (1.0 - mm) / 2.0).abs() < 1e-14);
        let all_r = prob(4, &[(0, 1, 2), (2, 3, 2), (0, 2, 2)]);
        assert!((all_r - (3.0 - mm) * (2.0 - mm) * (1.0 - mm) / 6.0).abs() < 1e-14);
        let split = prob(4, &[(0, 1, 2), (2, 3, 2), (0, 2, 1)]);
        assert!((split - mm * (1.0 - mm).powi(2) / 6.0).abs() < 1e-14);
    }
}

#[test]
fn second_derivative_vanishes_for_linear_boundary() {
    let mut rng = Lcg(8);
    for _ in 0..4 {
        let x = rng.measure(2, 0.05);
        let sol = solve_psi(
            &x,
            &CovarianceFunction::Linear,
            &BoundaryFunction::Linear { beta: 1.4 },
            &spec(),
        )
        .unwrap();
        for (i, j) in [(1, 1), (1, 2), (2, 2)] {
            assert!(second_q_derivative(&sol, i, j).unwrap().abs() < 1e-10);
        }
    }
}

#[test]
fn second_derivatives_match_finite_differences() {
    let g = CovarianceFunction::Linear;
    let cases = [
        ("0.2:0.3,0.55:0.7,1:1", 1.2, 0.25),
        ("0.3:0.5,1:1", 1.5, 0.1),
    ];
    let h = 1e-3;
    for (s, beta, hf) in cases {
        let x = m(s);
        let psi = BoundaryFunction::LogCosh { beta, h: hf };
        let atoms = x.atoms().to_vec();
        let k = x.depth();
        let p = |di: usize, a: f64, dj: usize, b: f64| {
            let mut v = atoms.clone();
            v[di].0 += a;
            v[dj].0 += b;
            p_of(&v, &g, &psi)
        };
        for i in 1..=k {
            for j in i..=k {
                let an = second_q_derivative_sk(&x, beta, hf, i, j, &spec()).unwrap();
                let fd = if i == j {
                    (p(i - 1, h, 0, 0.0) - 2.0 * p(0, 0.0, 0, 0.0) + p(i - 1, -h, 0, 0.0)) / (h * h)
                } else {
                    (p(i - 1, h, j - 1, h) - p(i - 1, h, j - 1, -h) - p(i - 1, -h, j - 1, h)
                        + p(i - 1, -h, j - 1, -h))
                        / (4.0 * h * h)
                };
                assert!((an - fd).abs() < 1e-4, "{s} ({i},{j}): {an} vs {fd}");
                if i != j {
                    let swapped = second_q_derivative_sk(&x, beta, hf, j, i, &spec()).unwrap();
                    assert!((an - swapped).abs() < 1e-10);
                }
            }
        }
    }
}

#[test]
fn instability_limit_at_zero_field() {
    // ∂²_r G = ∂²_{q_2} P − (β²/2)(m − 1) vanishes at m = 1, so
    // lim_{m→1} ∂_m ∂²_r G = −lim ∂²_r G(m)/(1 − m)
    for beta in [0.6, 1.0, 1.4] {
        let r = 1e-4;
        let mm = 0.999;
        let x = AtomicMeasure::new(&[(0.0, mm), (r, 1.0)]).unwrap();
        let d2 = second_q_derivative_sk(&x, beta, 0.0, 2, 2, &spec()).unwrap();
        let d2r = d2 - 0.5 * beta * beta * (mm - 1.0);
        let limit = -d2r / (1.0 - mm);
        let want = -0.5 * beta * beta * (1.0 - beta * beta);
        assert!((limit - want).abs() < 5e-3, "β = {beta}: {limit} vs {want}");
    }
}

#[test]
fn wick_examples() {
    let psi = BoundaryFunction::LogCosh { beta: 1.0, h: 0.2 };
    let c = |_: f64| vec![vec![1.0, 0.4], vec![0.4, 0.8]];
    let zero = |_: f64| vec![vec![0.0, 0.0], vec![0.0, 0.0]];
    assert_eq!(
        wick_derivative_oracle(c, zero, 0.0, &[0.5, 0.5], &psi, 20).unwrap(),
        0.0
    );

    let beta = 1.7;
    let lin = BoundaryFunction::Linear { beta };
    let v = wick_derivative_oracle(
        |t| vec![vec![t]],
        |_| vec![vec![1.0]],
        0.6,
        &[2.0],
        &lin,
        20,
    )
    .unwrap();
    // the diagonal term gives β²/2 and the p² term removes it: log ξ e^{βκ}
    // has t-independent mean
    assert!(v.abs() < 1e-12, "{v}");

    let cov = |t: f64| vec![vec![1.0, t], vec![t, 1.0]];
    let dcov = |_: f64| vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let w = [0.3, 0.7];
    for t in [-0.5, 0.0, 0.3, 0.8] {
        let an = wick_derivative_oracle(cov, dcov, t, &w, &psi, 40).unwrap();
        let e = 1e-4;
        let fd = (log_partition_expectation(&cov(t + e), &w, &psi, 40).unwrap()
            - log_partition_expectation(&cov(t - e), &w, &psi, 40).unwrap())
            / (2.0 * e);
        assert!((an - fd).abs() < 1e-6, "t = {t}: {an} vs {fd}");
    }

    let bad = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
    assert_eq!(
        gaussian_expectation(&bad, 8, |_| 1.0).unwrap_err(),
        Error::NotPositiveSemiDefinite
    );
    assert!(log_partition_expectation(&cov(0.2), &[1.0], &psi, 8).is_err());
}

#[test]
fn inserted_moment_is_continuous() {
    let x = m("0.2:0.3,0.6:0.7,1:1");
    let sol = solve_psi(
        &x,
        &CovarianceFunction::Linear,
        &BoundaryFunction::LogCosh { beta: 1.3, h: 0.2 },
        &spec(),
    )
    .unwrap();
    let field = BackwardField::new(&sol).unwrap();
    for (a, b, l) in [(0.2, 0.6, 1usize), (0.6, 1.0, 2)] {
        let mut prev_gap = f64::INFINITY;
        for n in [8, 16, 32, 64] {
            let vals: Vec<f64> = (1..n)
                .map(|j| field.inserted_overlap_moment(a + (b - a) * j as f64 / n as f64))
                .collect();
            let gap = vals
                .windows(2)
                .map(|w| (w[1] - w[0]).abs())
                .fold(0.0, f64::max);
            assert!(gap < 0.75 * prev_gap, "n = {n}: {gap} vs {prev_gap}");
            prev_gap = gap;
        }
        assert!((field.inserted_overlap_moment(a + 1e-7) - field.overlap_moment(l)).abs() < 1e-5);
        assert!(
            (field.inserted_overlap_moment(b - 1e-7) - field.overlap_moment(l + 1)).abs() < 1e-5
        );
    }
}

#[test]
fn limit_differs_from_merged_evaluation() {
    // x^ε has a second atom at q_2 = 0.6 with mass ε; as ε → 0 the measure
    // tends to the one-atom measure, but the conditional overlap moment at
    // q_2 tends to the inserted value there, not to the merged-atom value.
    let psi = BoundaryFunction::LogCosh { beta: 1.5, h: 0.3 };
    let g = CovarianceFunction::Linear;
    let merged = m("0.2:0.5,1:1");
    let sol = solve_psi(&merged, &g, &psi, &spec()).unwrap();
    let field = BackwardField::new(&sol).unwrap();
    let at_merged = field.overlap_moment(1);
    let inserted = field.inserted_overlap_moment(0.6);

    let mut prev = f64::INFINITY;
    for eps in [1e-2, 1e-3, 1e-4] {
        let xe = AtomicMeasure::new(&[(0.2, 0.5), (0.6, 0.5 + eps), (1.0, 1.0)]).unwrap();
        let se = solve_psi(&xe, &g, &psi, &spec()).unwrap();
        let v = BackwardField::new(&se).unwrap().overlap_moment(2);
        let err = (v - inserted).abs();
        assert!(err < prev);
        prev = err;
    }
    assert!(prev < 1e-4);
    assert!(
        (inserted - at_merged).abs() > 0.05,
        "{inserted} vs {at_merged}"
    );
}
