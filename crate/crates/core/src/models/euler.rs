use rand::Rng;
use rand_distr::StandardNormal;

/// An SDE `dX = a(X) dt + diag(b(X)) dW` with diagonal diffusion.
pub trait DiagonalSde {
    fn dim(&self) -> usize;
    fn drift(&self, x: &[f64], out: &mut [f64]);
    fn diffusion(&self, x: &[f64], out: &mut [f64]);
    /// Applied after every step, e.g. to keep the state in its domain.
    fn project(&self, _x: &mut [f64]) {}
}

/// One Euler–Maruyama step of size `h`, in place. `scratch` must hold `2 · dim` values.
pub fn euler_maruyama_step<S: DiagonalSde + ?Sized, R: Rng + ?Sized>(
    sde: &S,
    x: &mut [f64],
    h: f64,
    scratch: &mut [f64],
    rng: &mut R,
) {
    let d = sde.dim();
    let (a, b) = scratch[..2 * d].split_at_mut(d);
    sde.drift(x, a);
    sde.diffusion(x, b);
    let sh = h.sqrt();
    for i in 0..d {
        let z: f64 = rng.sample(StandardNormal);
        x[i] += a[i] * h + b[i] * sh * z;
    }
    sde.project(x);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    struct Ou {
        c1: f64,
        c2: f64,
        c3: f64,
    }
    impl DiagonalSde for Ou {
        fn dim(&self) -> usize {
            1
        }
        fn drift(&self, x: &[f64], out: &mut [f64]) {
            out[0] = self.c1 * (self.c2 - x[0]);
        }
        fn diffusion(&self, _: &[f64], out: &mut [f64]) {
            out[0] = self.c3;
        }
    }

    #[test]
    fn weak_order_one_on_ou_mean() {
        // the Euler mean recursion is deterministic, so the bias is computed exactly
        // and also checked by Monte Carlo at the coarsest step
        let sde = Ou {
            c1: 1.0,
            c2: 2.0,
            c3: 0.5,
        };
        let t_end = 2.0f64;
        let exact = sde.c2 * (1.0 - (-sde.c1 * t_end).exp());
        let mut bias = Vec::new();
        let mut em_means = Vec::new();
        for &h in &[0.1, 0.05, 0.025] {
            let n = (t_end / h).round() as usize;
            let mut m = 0.0;
            for _ in 0..n {
                m += sde.c1 * (sde.c2 - m) * h;
            }
            bias.push((m - exact).abs());
            em_means.push(m);
        }
        assert!(bias[0] > bias[1] && bias[1] > bias[2]);
        let logs: Vec<(f64, f64)> = [0.1f64, 0.05, 0.025]
            .iter()
            .zip(&bias)
            .map(|(h, b)| (h.ln(), b.ln()))
            .collect();
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / 3.0;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / 3.0;
        let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / logs.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((0.7..=1.3).contains(&slope), "slope {slope}");

        let mut rng = seeded(2);
        let reps = 200_000;
        let mut acc = 0.0;
        let mut scratch = [0.0; 2];
        for _ in 0..reps {
            let mut x = [0.0];
            for _ in 0..20 {
                euler_maruyama_step(&sde, &mut x, 0.1, &mut scratch, &mut rng);
            }
            acc += x[0];
        }
        let mc = acc / reps as f64;
        let se = 0.5 / (2.0f64).sqrt() / (reps as f64).sqrt();
        assert!(
            (mc - em_means[0]).abs() < 4.0 * se,
            "{mc} vs {}",
            em_means[0]
        );
    }
}
