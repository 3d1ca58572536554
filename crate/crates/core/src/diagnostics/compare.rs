use serde::{Deserialize, Serialize};

use crate::engine::SampleTable;
use crate::error::{input, Result};

/// Wasserstein-1 distance between two empirical distributions, `∫ |F_a − F_b|`.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    assert!(
        !a.is_empty() && !b.is_empty(),
        "empirical W1 needs samples on both sides"
    );
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        total += (next - prev) * (i as f64 / na - j as f64 / nb).abs();
        while i < a.len() && a[i] <= next {
            i += 1;
        }
        while j < b.len() && b[j] <= next {
            j += 1;
        }
        prev = next;
    }
    total
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = if x.len() > 1 {
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, v.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterComparison {
    pub name: String,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_delta: f64,
    pub sd_a: f64,
    pub sd_b: f64,
    pub sd_delta: f64,
    pub w1: f64,
}

pub fn compare_columns(name: &str, a: &[f64], b: &[f64]) -> ParameterComparison {
    let (mean_a, sd_a) = mean_sd(a);
    let (mean_b, sd_b) = mean_sd(b);
    ParameterComparison {
        name: name.to_string(),
        mean_a,
        mean_b,
        mean_delta: mean_b - mean_a,
        sd_a,
        sd_b,
        sd_delta: sd_b - sd_a,
        w1: wasserstein1(a, b),
    }
}

/// Compare every parameter column present in both tables, in the order of `a`.
pub fn compare_chains(a: &SampleTable, b: &SampleTable) -> Result<Vec<ParameterComparison>> {
    if a.is_empty() || b.is_empty() {
        return input("cannot compare an empty chain");
    }
    let out: Vec<_> = a
        .parameter_names()
        .into_iter()
        .filter_map(|name| Some(compare_columns(name, &a.column(name)?, &b.column(name)?)))
        .collect();
    if out.is_empty() {
        return input("the two chains share no parameter columns");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::seq::SliceRandom;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn w1_small_cases() {
        assert_eq!(wasserstein1(&[0.0], &[1.0]), 1.0);
        assert!((wasserstein1(&[0.0, 1.0], &[0.5]) - 0.5).abs() < 1e-15);
        assert!((wasserstein1(&[0.0, 2.0], &[0.0, 1.0, 2.0, 3.0]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn shifted_gaussians() {
        let mut rng = seeded(8);
        let n = 100_000;
        let a: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let b: Vec<f64> = (0..n)
            .map(|_| 0.5 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let w = wasserstein1(&a, &b);
        assert!((w - 0.5).abs() < 0.05, "{w}");
        assert!((w - wasserstein1(&b, &a)).abs() < 1e-12);
        let mut shuffled = a.clone();
        shuffled.shuffle(&mut rng);
        let c = compare_columns("x", &a, &shuffled);
        assert_eq!(c.w1, 0.0);
        assert!(c.mean_delta.abs() < 1e-12 && c.sd_delta.abs() < 1e-12);
    }

    #[test]
    fn tables() {
        let t = |rows: Vec<Vec<f64>>| SampleTable {
            columns: vec!["round".into(), "sweep".into(), "mu_1".into()],
            rows,
        };
        let a = t(vec![vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 2.0]]);
        let c = compare_chains(&a, &a).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].w1, 0.0);
        assert!(compare_chains(&a, &t(vec![])).is_err());
    }
}
