use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CovStructure, ExpertMixture, TrainingSet};
use crate::error::{input, Error, Result};
use crate::linalg::{cholesky_lower, floor_eigenvalues, log_sum_exp};
use crate::rng::{stream, tag};

const CHUNK: usize = 2048;
const RESP_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EmConfig {
    pub k_init: usize,
    pub cov_structure: CovStructure,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    /// Relative eigenvalue floor applied to every covariance in the M-step.
    pub reg: f64,
    pub min_weight: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            k_init: 10,
            cov_structure: CovStructure::Full,
            seed: 0,
            max_iter: 300,
            tol: 1e-6,
            reg: 1e-8,
            min_weight: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub mixture: ExpertMixture,
    /// GLLiM log-likelihood after initialization and after every M-step.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Trace indices whose preceding M-step removed components.
    pub pruned_at: Vec<usize>,
}

struct Params {
    weights: Vec<f64>,
    theta_means: Vec<DVector<f64>>,
    theta_covs: Vec<DMatrix<f64>>,
    maps: Vec<DMatrix<f64>>,
    offsets: Vec<DVector<f64>>,
    noise_covs: Vec<DMatrix<f64>>,
}

/// Fit a forward mixture to `(θ, y)` pairs by EM on the joint density.
pub fn fit_em(data: &TrainingSet, cfg: &EmConfig) -> Result<EmFit> {
    let (n, l) = (data.len(), data.theta_dim());
    if n == 0 {
        return input("EM needs a nonempty training set");
    }
    if cfg.k_init == 0 {
        return input("k_init must be positive");
    }
    if n < cfg.k_init * (l + 1) {
        return input(format!(
            "{n} pairs are too few for {} components of θ-dimension {l}",
            cfg.k_init
        ));
    }
    if !(cfg.tol > 0.0) {
        return input("EM tolerance must be positive");
    }
    let labels = kmeans_pp(data, cfg.k_init, cfg.seed);
    let mut resp = vec![0.0; n * cfg.k_init];
    for (j, &c) in labels.iter().enumerate() {
        resp[j * cfg.k_init + c] = 1.0;
    }
    let (mut mix, _) = m_step(data, &resp, cfg.k_init, cfg)?;
    let mut trace = Vec::new();
    let mut pruned_at = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    loop {
        let (mut table, total) = log_joint_table(&mix, data);
        trace.push(total);
        if !total.is_finite() {
            return Err(Error::FitFailure {
                component: 0,
                reason: "non-finite log-likelihood".into(),
            });
        }
        if let [.., prev, last] = trace[..] {
            if (last - prev).abs() <= cfg.tol * prev.abs().max(1e-300) {
                converged = true;
                break;
            }
        }
        if iterations >= cfg.max_iter {
            break;
        }
        let k = mix.n_components();
        responsibilities_in_place(&mut table, k);
        let (next, pruned) = m_step(data, &table, k, cfg)?;
        if pruned {
            pruned_at.push(trace.len());
        }
        mix = next;
        iterations += 1;
    }
    Ok(EmFit {
        mixture: mix,
        loglik_trace: trace,
        iterations,
        converged,
        pruned_at,
    })
}

/// Per-pair, per-component `log π_k + log N(θ_j) + log N(y_j | θ_j)` (pair-major) and its total log-sum-exp.
pub(crate) fn log_joint_table(mix: &ExpertMixture, data: &TrainingSet) -> (Vec<f64>, f64) {
    let (n, l, d, k) = (
        data.len(),
        data.theta_dim(),
        data.obs_dim(),
        mix.n_components(),
    );
    let mut table = vec![0.0; n * k];
    table
        .par_chunks_mut(CHUNK * k)
        .enumerate()
        .for_each(|(ci, out)| {
            let j0 = ci * CHUNK;
            let m = out.len() / k;
            let th = DMatrix::from_column_slice(l, m, &data.theta_buf()[j0 * l..(j0 + m) * l]);
            let ys = DMatrix::from_column_slice(d, m, &data.y_buf()[j0 * d..(j0 + m) * d]);
            for c in 0..k {
                let g = mix.theta_gaussian(c);
                let mut w = &th - &g.mean * DMatrix::from_element(1, m, 1.0);
                g.chol.solve_lower_triangular_mut(&mut w);
                let mut r = &ys - &mix.maps()[c] * &th;
                for mut col in r.column_iter_mut() {
                    col -= &mix.offsets()[c];
                }
                mix.noise_chol(c).solve_lower_triangular_mut(&mut r);
                let base = mix.log_weight(c) + g.log_norm + mix.noise_log_norm(c);
                for j in 0..m {
                    out[j * k + c] =
                        base - 0.5 * (w.column(j).norm_squared() + r.column(j).norm_squared());
                }
            }
        });
    let total = table.chunks(k).map(log_sum_exp).sum::<f64>();
    (table, total)
}

fn responsibilities_in_place(table: &mut [f64], k: usize) {
    table.par_chunks_mut(k).for_each(|row| {
        crate::linalg::softmax_in_place(row);
    });
}

/// Weighted-moment M-step. Returns the new mixture and whether any component was pruned.
fn m_step(
    data: &TrainingSet,
    resp: &[f64],
    k: usize,
    cfg: &EmConfig,
) -> Result<(ExpertMixture, bool)> {
    let n = data.len();
    let l = data.theta_dim();
    let mass: Vec<f64> = (0..k)
        .map(|c| resp.iter().skip(c).step_by(k).sum())
        .collect();
    let keep: Vec<usize> = (0..k)
        .filter(|&c| mass[c] / n as f64 >= cfg.min_weight && mass[c] >= (l + 1) as f64)
        .collect();
    if keep.is_empty() {
        return Err(Error::FitFailure {
            component: 0,
            reason: "every component lost its support".into(),
        });
    }
    let comps: Vec<Result<_>> = keep
        .par_iter()
        .map(|&c| component_update(data, resp, k, c, mass[c], cfg))
        .collect();
    let mut p = Params {
        weights: Vec::new(),
        theta_means: Vec::new(),
        theta_covs: Vec::new(),
        maps: Vec::new(),
        offsets: Vec::new(),
        noise_covs: Vec::new(),
    };
    let total: f64 = keep.iter().map(|&c| mass[c]).sum();
    for (&c, comp) in keep.iter().zip(comps) {
        let (nu, gamma, a, b, sigma) = comp?;
        p.weights.push(mass[c] / total);
        p.theta_means.push(nu);
        p.theta_covs.push(gamma);
        p.maps.push(a);
        p.offsets.push(b);
        p.noise_covs.push(sigma);
    }
    let fix = 1.0 - p.weights.iter().sum::<f64>();
    let big = (0..p.weights.len())
        .max_by(|&a, &b| p.weights[a].total_cmp(&p.weights[b]))
        .unwrap_or(0);
    p.weights[big] += fix;
    let mix = ExpertMixture::new(
        p.weights,
        p.theta_means,
        p.theta_covs,
        p.maps,
        p.offsets,
        p.noise_covs,
        cfg.cov_structure,
    )
    .map_err(|e| match e {
        Error::Inversion { component, matrix } => Error::FitFailure {
            component,
            reason: format!("{matrix} is singular"),
        },
        other => other,
    })?;
    Ok((mix, keep.len() < k))
}

type Component = (
    DVector<f64>,
    DMatrix<f64>,
    DMatrix<f64>,
    DVector<f64>,
    DMatrix<f64>,
);

fn component_update(
    data: &TrainingSet,
    resp: &[f64],
    k: usize,
    c: usize,
    mass: f64,
    cfg: &EmConfig,
) -> Result<Component> {
    let (l, d) = (data.theta_dim(), data.obs_dim());
    let idx: Vec<usize> = (0..data.len())
        .filter(|&j| resp[j * k + c] > RESP_FLOOR)
        .collect();
    let w: Vec<f64> = idx.iter().map(|&j| resp[j * k + c]).collect();
    let wsum: f64 = w.iter().sum();
    let mut nu = DVector::zeros(l);
    let mut ybar = DVector::zeros(d);
    for (&j, &wj) in idx.iter().zip(&w) {
        for (i, v) in data.theta(j).iter().enumerate() {
            nu[i] += wj * v;
        }
        for (i, v) in data.y(j).iter().enumerate() {
            ybar[i] += wj * v;
        }
    }
    nu /= wsum;
    ybar /= wsum;
    let m = idx.len();
    let mut xs = DMatrix::zeros(l, m);
    let mut ys = DMatrix::zeros(d, m);
    for (col, (&j, &wj)) in idx.iter().zip(&w).enumerate() {
        let s = wj.sqrt();
        for (i, v) in data.theta(j).iter().enumerate() {
            xs[(i, col)] = s * (v - nu[i]);
        }
        for (i, v) in data.y(j).iter().enumerate() {
            ys[(i, col)] = s * (v - ybar[i]);
        }
    }
    let fail = |reason: &str| Error::FitFailure {
        component: c,
        reason: reason.into(),
    };
    let gamma = floor_eigenvalues(&((&xs * xs.transpose()) / wsum), cfg.reg);
    let lg = cholesky_lower(&gamma)
        .ok_or_else(|| fail("θ covariance is singular after regularization"))?;
    // Ã = C_yθ Γ̃⁻¹
    let c_ty = (&xs * ys.transpose()) / wsum;
    let a = lg
        .solve_lower_triangular(&c_ty)
        .and_then(|z| lg.tr_solve_lower_triangular(&z))
        .ok_or_else(|| fail("θ covariance is singular"))?
        .transpose();
    let b = &ybar - &a * &nu;
    let resid = &ys - &a * &xs;
    let sigma = match cfg.cov_structure {
        CovStructure::Full => floor_eigenvalues(&((&resid * resid.transpose()) / wsum), cfg.reg),
        CovStructure::Diagonal => {
            let diag = DVector::from_fn(d, |i, _| resid.row(i).norm_squared() / wsum);
            let floor = (cfg.reg * diag.sum() / d as f64).max(f64::MIN_POSITIVE);
            DMatrix::from_diagonal(&diag.map(|v| v.max(floor)))
        }
    };
    if cholesky_lower(&sigma).is_none() {
        return Err(fail("noise covariance is singular after regularization"));
    }
    debug_assert!(mass > 0.0);
    Ok((nu, gamma, a, b, sigma))
}

/// k-means++ seeding and Lloyd refinement on standardized concatenated `(θ, y)`.
fn kmeans_pp(data: &TrainingSet, k: usize, seed: u64) -> Vec<usize> {
    let (n, l, d) = (data.len(), data.theta_dim(), data.obs_dim());
    let dim = l + d;
    let mut z = vec![0.0; n * dim];
    for j in 0..n {
        z[j * dim..j * dim + l].copy_from_slice(data.theta(j));
        z[j * dim + l..(j + 1) * dim].copy_from_slice(data.y(j));
    }
    for i in 0..dim {
        let mean = (0..n).map(|j| z[j * dim + i]).sum::<f64>() / n as f64;
        let var = (0..n).map(|j| (z[j * dim + i] - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for j in 0..n {
            z[j * dim + i] = (z[j * dim + i] - mean) / sd;
        }
    }
    let row = |j: usize| &z[j * dim..(j + 1) * dim];
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut rng = stream(seed, &[tag::EM_INIT]);
    let mut centers: Vec<Vec<f64>> = vec![row(rng.random_range(0..n)).to_vec()];
    let mut best: Vec<f64> = (0..n).map(|j| dist2(row(j), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut p = n - 1;
            for (j, b) in best.iter().enumerate() {
                acc += b;
                if acc > u {
                    p = j;
                    break;
                }
            }
            p
        } else {
            rng.random_range(0..n)
        };
        centers.push(row(pick).to_vec());
        let c = centers.last().unwrap();
        best.par_iter_mut()
            .enumerate()
            .for_each(|(j, b)| *b = b.min(dist2(row(j), c)));
    }
    let mut labels = vec![0usize; n];
    for _ in 0..20 {
        let next: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|j| {
                let r = row(j);
                (0..k)
                    .min_by(|&a, &b| dist2(r, &centers[a]).total_cmp(&dist2(r, &centers[b])))
                    .unwrap()
            })
            .collect();
        let changed = next != labels;
        labels = next;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            counts[labels[j]] += 1;
            for (s, v) in sums[labels[j]].iter_mut().zip(row(j)) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }
    labels
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::{Distribution, Normal};

    fn linear_data(n: usize, seed: u64) -> TrainingSet {
        let mut rng = seeded(seed);
        let nrm = Normal::new(0.0, 1.0).unwrap();
        let mut ts = TrainingSet::new(1, 1, 0);
        for _ in 0..n {
            let t: f64 = nrm.sample(&mut rng);
            let e: f64 = 0.1 * nrm.sample(&mut rng);
            ts.push(&[t], &[2.0 * t + 1.0 + e]).unwrap();
        }
        ts
    }

    fn cfg(k: usize, seed: u64) -> EmConfig {
        EmConfig {
            k_init: k,
            seed,
            ..EmConfig::default()
        }
    }

    #[test]
    fn recovers_linear_map_against_ols() {
        let data = linear_data(500, 1);
        let fit = fit_em(&data, &cfg(1, 0)).unwrap();
        let (n, mut sx, mut sy, mut sxx, mut sxy) = (data.len() as f64, 0.0, 0.0, 0.0, 0.0);
        for j in 0..data.len() {
            let (x, y) = (data.theta(j)[0], data.y(j)[0]);
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
        }
        let slope = (sxy - sx * sy / n) / (sxx - sx * sx / n);
        let icpt = (sy - slope * sx) / n;
        let a = fit.mixture.maps()[0][(0, 0)];
        let b = fit.mixture.offsets()[0][0];
        assert!((a - slope).abs() < 1e-8 && (a - 2.0).abs() < 0.1);
        assert!((b - icpt).abs() < 1e-8 && (b - 1.0).abs() < 0.1);
    }

    #[test]
    fn zero_map_moment_matching() {
        let mut rng = seeded(2);
        let nrm = Normal::new(0.0, 1.0).unwrap();
        let mut ts = TrainingSet::new(2, 1, 0);
        for _ in 0..400 {
            let a: f64 = nrm.sample(&mut rng);
            let b: f64 = nrm.sample(&mut rng);
            ts.push(&[a + 1.0, 0.5 * a + b], &[nrm.sample(&mut rng)])
                .unwrap();
        }
        let fit = fit_em(&ts, &cfg(1, 0)).unwrap();
        let n = ts.len() as f64;
        let mut mean = [0.0; 2];
        for j in 0..ts.len() {
            mean[0] += ts.theta(j)[0] / n;
            mean[1] += ts.theta(j)[1] / n;
        }
        let mut cov = [[0.0; 2]; 2];
        for j in 0..ts.len() {
            let t = ts.theta(j);
            for r in 0..2 {
                for c in 0..2 {
                    cov[r][c] += (t[r] - mean[r]) * (t[c] - mean[c]) / n;
                }
            }
        }
        for r in 0..2 {
            assert!((fit.mixture.theta_means()[0][r] - mean[r]).abs() < 1e-6);
            for c in 0..2 {
                assert!((fit.mixture.theta_covs()[0][(r, c)] - cov[r][c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn separated_clusters_split_evenly() {
        let mut rng = seeded(3);
        let nrm = Normal::new(0.0, 1.0).unwrap();
        let mut ts = TrainingSet::new(1, 1, 0);
        let mut positive = 0usize;
        for i in 0..2000 {
            let centre = if i % 2 == 0 { -10.0 } else { 10.0 };
            let t: f64 = centre + nrm.sample(&mut rng);
            positive += (t > 0.0) as usize;
            ts.push(&[t], &[t + 0.3 * nrm.sample(&mut rng)]).unwrap();
        }
        let fit = fit_em(&ts, &cfg(2, 5)).unwrap();
        let oracle = positive as f64 / 2000.0;
        for w in fit.mixture.weights() {
            assert!((w - 0.5).abs() < 0.05);
        }
        let hi = fit
            .mixture
            .theta_means()
            .iter()
            .position(|m| m[0] > 0.0)
            .unwrap();
        assert!((fit.mixture.weights()[hi] - oracle).abs() < 0.01);
    }

    #[test]
    fn loglik_never_decreases() {
        for seed in 0..6 {
            let mut rng = seeded(100 + seed);
            let nrm = Normal::new(0.0, 1.0).unwrap();
            let mut ts = TrainingSet::new(2, 3, 0);
            for _ in 0..600 {
                let t: [f64; 2] = [nrm.sample(&mut rng) * 2.0, nrm.sample(&mut rng)];
                let y = [
                    (t[0]).sin() + 0.1 * nrm.sample(&mut rng),
                    t[0] * t[1] + 0.1 * nrm.sample(&mut rng),
                    t[1].exp() * 0.3 + 0.1 * nrm.sample(&mut rng),
                ];
                ts.push(&t, &y).unwrap();
            }
            let fit = fit_em(&ts, &cfg(4, seed)).unwrap();
            for i in 1..fit.loglik_trace.len() {
                if fit.pruned_at.contains(&i) {
                    continue;
                }
                let (a, b) = (fit.loglik_trace[i - 1], fit.loglik_trace[i]);
                assert!(
                    b >= a - 1e-8 * a.abs().max(1.0),
                    "seed {seed} iter {i}: {a} -> {b}"
                );
            }
            let direct = fit.mixture.gllim_loglik(&ts).unwrap();
            assert!((direct - fit.loglik_trace.last().unwrap()).abs() < 1e-9 * direct.abs());
        }
    }

    #[test]
    fn same_seed_same_fit() {
        let data = linear_data(300, 9);
        let a = fit_em(&data, &cfg(3, 4)).unwrap();
        let b = fit_em(&data, &cfg(3, 4)).unwrap();
        assert_eq!(a.mixture, b.mixture);
        assert_eq!(a.loglik_trace, b.loglik_trace);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let data = linear_data(5000, 10);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| fit_em(&data, &cfg(3, 1)).unwrap())
        };
        assert_eq!(run(1).mixture, run(4).mixture);
    }

    #[test]
    fn input_errors() {
        let empty = TrainingSet::new(1, 1, 0);
        assert!(matches!(fit_em(&empty, &cfg(1, 0)), Err(Error::Input(_))));
        let mut one = TrainingSet::new(1, 1, 0);
        one.push(&[0.0], &[0.0]).unwrap();
        assert!(fit_em(&one, &cfg(1, 0)).is_err());
        let data = linear_data(50, 0);
        assert!(fit_em(
            &data,
            &EmConfig {
                tol: 0.0,
                ..cfg(1, 0)
            }
        )
        .is_err());
    }

    #[test]
    fn gllim_loglik_matches_naive_sum() {
        let mut rng = seeded(12);
        let m = crate::mixtures::expert::tests::random_mixture(&mut rng, 3, 2, 2);
        let mut ts = TrainingSet::new(2, 2, 0);
        for _ in 0..25 {
            let t: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            ts.push(&t, &y).unwrap();
        }
        let mut naive = 0.0;
        for j in 0..ts.len() {
            let mut s = 0.0;
            for k in 0..3 {
                let gt =
                    crate::linalg::Gaussian::new(m.theta_means()[k].clone(), &m.theta_covs()[k])
                        .unwrap();
                let mean = &m.maps()[k] * DVector::from_column_slice(ts.theta(j)) + &m.offsets()[k];
                let gy = crate::linalg::Gaussian::new(mean, &m.noise_covs()[k]).unwrap();
                s += m.weights()[k] * gt.logpdf(ts.theta(j)).exp() * gy.logpdf(ts.y(j)).exp();
            }
            naive += s.ln();
        }
        assert!((m.gllim_loglik(&ts).unwrap() - naive).abs() < 1e-10 * naive.abs().max(1.0));
    }

    #[test]
    fn diagonal_structure_keeps_off_diagonals_zero() {
        let mut rng = seeded(30);
        let nrm = Normal::new(0.0, 1.0).unwrap();
        let mut ts = TrainingSet::new(1, 2, 0);
        for _ in 0..300 {
            let t: f64 = nrm.sample(&mut rng);
            ts.push(
                &[t],
                &[
                    t + 0.2 * nrm.sample(&mut rng),
                    -t + 0.2 * nrm.sample(&mut rng),
                ],
            )
            .unwrap();
        }
        let fit = fit_em(
            &ts,
            &EmConfig {
                cov_structure: CovStructure::Diagonal,
                ..cfg(2, 0)
            },
        )
        .unwrap();
        for s in fit.mixture.noise_covs() {
            assert_eq!(s[(0, 1)], 0.0);
            assert_eq!(s[(1, 0)], 0.0);
        }
    }
}
