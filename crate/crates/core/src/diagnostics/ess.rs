use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::linalg::{cholesky_lower, log_det_from_lower};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub ess: f64,
    /// Set for a chain with zero variance, whose ESS is reported as its length.
    pub degenerate: bool,
}

fn centered(chain: &[f64]) -> Vec<f64> {
    let n = chain.len() as f64;
    let mean = chain.iter().sum::<f64>() / n;
    chain.iter().map(|x| x - mean).collect()
}

fn autocov(x: &[f64], lag: usize) -> f64 {
    x[..x.len() - lag]
        .iter()
        .zip(&x[lag..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / x.len() as f64
}

/// Integrated-autocorrelation ESS truncated by the initial monotone sequence of
/// positive sums of adjacent autocovariance pairs.
pub fn ess_univariate(chain: &[f64]) -> Result<EssEstimate> {
    let n = chain.len();
    if n < 10 {
        return input(format!("ESS needs at least 10 draws, got {n}"));
    }
    if chain.iter().any(|v| !v.is_finite()) {
        return input("ESS of a chain with non-finite values");
    }
    let x = centered(chain);
    let g0 = autocov(&x, 0);
    let scale = chain.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if g0 <= (1e-14 * scale).powi(2) {
        return Ok(EssEstimate {
            ess: n as f64,
            degenerate: true,
        });
    }
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = autocov(&x, 2 * k) + autocov(&x, 2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev);
        sum += pair;
        prev = pair;
        k += 1;
    }
    let iact = (-1.0 + 2.0 * sum / g0).max(1.0 / (n as f64).log10());
    Ok(EssEstimate {
        ess: n as f64 / iact,
        degenerate: false,
    })
}

/// Batch-means multivariate ESS `n (det Λ / det Σ)^{1/d}` with batch size `⌊√n⌋`,
/// over the rows of an `n × d` sample matrix.
pub fn ess_multivariate(rows: &[Vec<f64>]) -> Result<f64> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return input("multivariate ESS needs a nonempty rectangular sample matrix");
    }
    let b = (n as f64).sqrt().floor() as usize;
    let a = if b == 0 { 0 } else { n / b };
    if n < 10 || n < 2 * b || a <= d {
        return input(format!(
            "{n} draws give {a} batches, too few for {d} parameters"
        ));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v / n as f64;
        }
    }
    let mut lambda = DMatrix::zeros(d, d);
    for r in rows {
        let z: Vec<f64> = r.iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..d {
            for j in 0..=i {
                lambda[(i, j)] += z[i] * z[j] / (n - 1) as f64;
            }
        }
    }
    let used = a * b;
    let mut grand = vec![0.0; d];
    let batch_means: Vec<Vec<f64>> = (0..a)
        .map(|k| {
            let mut bm = vec![0.0; d];
            for r in &rows[k * b..(k + 1) * b] {
                for (m, v) in bm.iter_mut().zip(r) {
                    *m += v / b as f64;
                }
            }
            for (g, v) in grand.iter_mut().zip(&bm) {
                *g += v * b as f64 / used as f64;
            }
            bm
        })
        .collect();
    let mut sigma = DMatrix::zeros(d, d);
    for bm in &batch_means {
        let z: Vec<f64> = bm.iter().zip(&grand).map(|(v, m)| v - m).collect();
        for i in 0..d {
            for j in 0..=i {
                sigma[(i, j)] += b as f64 * z[i] * z[j] / (a - 1) as f64;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            lambda[(j, i)] = lambda[(i, j)];
            sigma[(j, i)] = sigma[(i, j)];
        }
    }
    let (Some(ll), Some(ls)) = (cholesky_lower(&lambda), cholesky_lower(&sigma)) else {
        return input("sample or batch-means covariance is singular");
    };
    Ok(n as f64 * ((log_det_from_lower(&ll) - log_det_from_lower(&ls)) / d as f64).exp())
}

/// Monte Carlo standard error of the chain mean, `sd / √ESS`.
pub fn mc_standard_error(chain: &[f64]) -> Result<f64> {
    let est = ess_univariate(chain)?;
    let x = centered(chain);
    let var = x.iter().map(|v| v * v).sum::<f64>() / (x.len() - 1) as f64;
    Ok((var / est.ess).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        let mut x = rng.sample::<f64, _>(StandardNormal) / (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                x = rho * x + rng.sample::<f64, _>(StandardNormal);
                x
            })
            .collect()
    }

    #[test]
    fn iid_and_ar1() {
        let n = 100_000;
        let iid = ess_univariate(&ar1(n, 0.0, 1)).unwrap().ess;
        assert!((iid / n as f64 - 1.0).abs() < 0.1, "{iid}");
        let ar = ess_univariate(&ar1(n, 0.5, 2)).unwrap().ess;
        assert!((ar / (n as f64 / 3.0) - 1.0).abs() < 0.15, "{ar}");
    }

    #[test]
    fn constant_and_short() {
        let e = ess_univariate(&[2.5; 40]).unwrap();
        assert_eq!(
            e,
            EssEstimate {
                ess: 40.0,
                degenerate: true
            }
        );
        assert!(ess_univariate(&[1.0; 9]).is_err());
    }

    #[test]
    fn affine_invariance() {
        let x = ar1(5000, 0.7, 3);
        let y: Vec<f64> = x.iter().map(|v| -3.0 * v + 11.0).collect();
        let (a, b) = (
            ess_univariate(&x).unwrap().ess,
            ess_univariate(&y).unwrap().ess,
        );
        assert!((a - b).abs() < 1e-9 * a);
        let rows: Vec<Vec<f64>> = x.chunks(2).map(|c| c.to_vec()).collect();
        let mapped: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| vec![2.0 * r[0] + r[1] - 4.0, 0.5 * r[1] + 1.0])
            .collect();
        let (a, b) = (
            ess_multivariate(&rows).unwrap(),
            ess_multivariate(&mapped).unwrap(),
        );
        assert!((a - b).abs() < 1e-9 * a);
    }

    #[test]
    fn multivariate_matches_known_cases() {
        let n = 30_000;
        let cols: Vec<Vec<f64>> = (0..3).map(|s| ar1(n, 0.0, 10 + s)).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect();
        let m = ess_multivariate(&rows).unwrap();
        assert!((m / n as f64 - 1.0).abs() < 0.15, "{m}");

        let x = ar1(100_000, 0.5, 4);
        let uni = ess_univariate(&x).unwrap().ess;
        let rows: Vec<Vec<f64>> = x.iter().map(|v| vec![*v]).collect();
        let multi = ess_multivariate(&rows).unwrap();
        assert!((multi / uni - 1.0).abs() < 0.2, "{multi} vs {uni}");
    }

    #[test]
    fn multivariate_too_short() {
        let rows: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64]).collect();
        assert!(ess_multivariate(&rows).is_err());
        let rows: Vec<Vec<f64>> = (0..16).map(|i| vec![i as f64; 5]).collect();
        assert!(ess_multivariate(&rows).is_err());
    }
}
