//! Small dense linear-algebra helpers shared by the mixture and model code.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Numerically stable `log(sum(exp(v)))`. Returns `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = v.iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

/// Normalize log-weights in place into probabilities; returns the log normalizer.
pub fn softmax_in_place(v: &mut [f64]) -> f64 {
    let lse = log_sum_exp(v);
    for x in v.iter_mut() {
        *x = (*x - lse).exp();
    }
    lse
}

/// Lower Cholesky factor, or `None` when the matrix is not numerically SPD.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().any(|x| !x.is_finite()) {
        return None;
    }
    let l = m.clone().cholesky()?.unpack();
    if l.diagonal().iter().all(|d| *d > 0.0 && d.is_finite()) {
        Some(l)
    } else {
        None
    }
}

pub fn is_spd(m: &DMatrix<f64>) -> bool {
    m.is_square() && cholesky_lower(m).is_some()
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Floor the eigenvalues of a symmetric matrix at `rel * trace / dim`.
pub fn floor_eigenvalues(m: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let n = m.nrows();
    let mut s = m.clone();
    symmetrize(&mut s);
    let floor = (rel * s.trace() / n as f64).max(f64::MIN_POSITIVE);
    let eig = s.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&e| e >= floor) {
        return s;
    }
    let vals = eig.eigenvalues.map(|e| e.max(floor));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    out
}

pub fn log_det_from_lower(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Inverse of an SPD matrix given its lower Cholesky factor.
pub fn spd_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .expect("triangular factor with positive diagonal");
    let mut inv = linv.transpose() * linv;
    symmetrize(&mut inv);
    inv
}

/// Multivariate Gaussian with a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct Gaussian {
    pub mean: DVector<f64>,
    pub chol: DMatrix<f64>,
    /// `-0.5 * (d log 2π + log|Σ|)`
    pub log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Option<Self> {
        let chol = cholesky_lower(cov)?;
        let d = mean.len() as f64;
        let log_norm = -0.5 * (d * LN_2PI + log_det_from_lower(&chol));
        Some(Self {
            mean,
            chol,
            log_norm,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Whitened residual `L⁻¹ (x − μ)` written into `buf`.
    pub fn whiten_into(&self, x: &[f64], buf: &mut DVector<f64>) {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = x[i] - self.mean[i];
        }
        forward_substitute(&self.chol, buf);
    }

    pub fn logpdf(&self, x: &[f64]) -> f64 {
        let mut buf = DVector::zeros(self.dim());
        self.whiten_into(x, &mut buf);
        self.log_norm - 0.5 * buf.norm_squared()
    }

    pub fn cov(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.chol * z
    }
}

/// In-place solve of `L x = b` for lower-triangular `L`.
pub fn forward_substitute(l: &DMatrix<f64>, b: &mut DVector<f64>) {
    let n = l.nrows();
    for i in 0..n {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * b[j];
        }
        b[i] = s / l[(i, i)];
    }
}

/// Scalar Gaussian log-density.
pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let r = x - mean;
    -0.5 * (LN_2PI + var.ln() + r * r / var)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        let v = [-1000.0, -1000.0];
        assert!((log_sum_exp(&v) - (-1000.0 + 2f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn gaussian_logpdf_matches_scalar_formula() {
        let g = Gaussian::new(
            DVector::from_element(1, 1.5),
            &DMatrix::from_element(1, 1, 4.0),
        )
        .unwrap();
        assert!((g.logpdf(&[0.3]) - normal_logpdf(0.3, 1.5, 4.0)).abs() < 1e-14);
    }

    #[test]
    fn eigen_floor_restores_definiteness() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(!is_spd(&m) || cholesky_lower(&m).unwrap()[(1, 1)] < 1e-7);
        let f = floor_eigenvalues(&m, 1e-8);
        assert!(is_spd(&f));
        assert!((f[(0, 0)] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn spd_inverse_is_inverse() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let l = cholesky_lower(&m).unwrap();
        let inv = spd_inverse(&l);
        let id = &m * inv;
        assert!((id - DMatrix::identity(3, 3)).abs().max() < 1e-12);
    }
}
