//! Profiled negative log-likelihood of the latent-variable GP and its
//! analytic gradient with respect to the log-scales and the free latent
//! coordinates.

use faer::linalg::solvers::{DenseSolveCore, Llt, Solve};
use faer::{Mat, Side};

use super::kernel::{KernelMode, LatentMap, LATENT_FREE_PARAMS};
use crate::error::{Error, Result};
use crate::lattice::ClassLabel;
use crate::stiffness::ENTRY_COUNT;

/// Variance estimates below this are treated as an exactly fitted response.
pub const SIGMA2_FLOOR: f64 = 1e-12;
pub const LOG10_SCALE_BOUNDS: (f64, f64) = (-4.0, 4.0);
pub const LATENT_BOUNDS: (f64, f64) = (-4.0, 4.0);

/// Training inputs with standardized outputs.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub rho: Vec<f64>,
    pub class: Vec<ClassLabel>,
    pub y: Vec<[f64; ENTRY_COUNT]>,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn response(&self, i: usize) -> Vec<f64> {
        self.y.iter().map(|row| row[i]).collect()
    }
}

/// Layout of the optimization vector `[log10 φ…, z_B1, z_C1, z_C2, …]`.
#[derive(Clone, Copy, Debug)]
pub struct ParamLayout {
    pub mode: KernelMode,
}

impl ParamLayout {
    pub fn new(mode: KernelMode) -> Self {
        Self { mode }
    }

    pub fn len(&self) -> usize {
        self.mode.scale_count() + LATENT_FREE_PARAMS
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn scales(&self, theta: &[f64]) -> Vec<f64> {
        theta[..self.mode.scale_count()]
            .iter()
            .map(|v| 10f64.powf(*v))
            .collect()
    }

    pub fn latent(&self, theta: &[f64]) -> LatentMap {
        LatentMap::from_free(&theta[self.mode.scale_count()..])
    }

    pub fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let q = self.mode.scale_count();
        let mut lo = vec![LOG10_SCALE_BOUNDS.0; q];
        let mut hi = vec![LOG10_SCALE_BOUNDS.1; q];
        lo.push(0.0);
        hi.push(LATENT_BOUNDS.1);
        for _ in 1..LATENT_FREE_PARAMS {
            lo.push(LATENT_BOUNDS.0);
            hi.push(LATENT_BOUNDS.1);
        }
        (lo, hi)
    }

    /// Responses that share the correlation function with index `g`.
    pub fn group_responses(&self, g: usize) -> Vec<usize> {
        match self.mode {
            KernelMode::Sos => vec![g],
            KernelMode::Separable => (0..ENTRY_COUNT).collect(),
        }
    }
}

/// Correlation matrix without nugget.
pub fn correlation_matrix(set: &TrainingSet, latent: &LatentMap, phi: f64) -> Mat<f64> {
    let n = set.len();
    let z: Vec<[f64; 2]> = set.class.iter().map(|&c| latent.point(c)).collect();
    let mut r = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        r[(j, j)] = 1.0;
        for k in 0..j {
            let v = super::kernel::correlation(set.rho[j], z[j], set.rho[k], z[k], phi);
            r[(j, k)] = v;
            r[(k, j)] = v;
        }
    }
    r
}

/// Cholesky factor of `R0 + nugget·I`.
pub fn factorize(r0: &Mat<f64>, nugget: f64) -> Result<Llt<f64>> {
    let mut r = r0.clone();
    for j in 0..r.nrows() {
        r[(j, j)] += nugget;
    }
    r.llt(Side::Lower).map_err(|_| Error::NotPositiveDefinite { nugget })
}

pub fn log_det(llt: &Llt<f64>) -> f64 {
    let l = llt.L();
    (0..l.nrows()).map(|j| 2.0 * l[(j, j)].ln()).sum()
}

/// Generalized least-squares mean, profiled variance and the weights
/// `R⁻¹(d − 1γ)`.
#[derive(Clone, Debug)]
pub struct MeanVariance {
    pub gamma: f64,
    pub sigma2: f64,
    pub weights: Vec<f64>,
}

pub fn mle_mean_variance(llt: &Llt<f64>, d: &[f64]) -> Result<MeanVariance> {
    let n = d.len();
    if n < 2 {
        return Err(Error::Invalid("need at least two training points".into()));
    }
    let mut rhs = Mat::<f64>::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { d[i] });
    llt.solve_in_place(rhs.as_mut());
    let one_u: f64 = (0..n).map(|i| rhs[(i, 0)]).sum();
    let one_v: f64 = (0..n).map(|i| rhs[(i, 1)]).sum();
    let gamma = one_v / one_u;
    let weights: Vec<f64> = (0..n).map(|i| rhs[(i, 1)] - gamma * rhs[(i, 0)]).collect();
    let sigma2 = (d
        .iter()
        .zip(&weights)
        .map(|(di, ai)| (di - gamma) * ai)
        .sum::<f64>()
        / n as f64)
        .max(0.0);
    Ok(MeanVariance {
        gamma,
        sigma2,
        weights,
    })
}

/// Value and (optionally) gradient of the profiled negative log-likelihood.
pub fn neg_log_likelihood(
    set: &TrainingSet,
    layout: ParamLayout,
    theta: &[f64],
    nugget: f64,
    with_gradient: bool,
) -> Result<(f64, Vec<f64>)> {
    let n = set.len();
    let nf = n as f64;
    let scales = layout.scales(theta);
    let latent = layout.latent(theta);
    let q = scales.len();
    let mut value = 0.0;
    let mut grad = vec![0.0; if with_gradient { layout.len() } else { 0 }];
    // Σ_g W_g ∘ R0_g accumulated per class block.
    let mut blocks = [[0.0; ClassLabel::COUNT]; ClassLabel::COUNT];
    let cls: Vec<usize> = set.class.iter().map(|c| c.index()).collect();

    for (g, &phi) in scales.iter().enumerate() {
        let r0 = correlation_matrix(set, &latent, phi);
        let llt = factorize(&r0, nugget)?;
        let ld = log_det(&llt);
        let responses = layout.group_responses(g);
        let mut fits = Vec::with_capacity(responses.len());
        for &i in &responses {
            let mv = mle_mean_variance(&llt, &set.response(i))?;
            value += nf * mv.sigma2.max(SIGMA2_FLOOR).ln() + ld;
            fits.push(mv);
        }
        if !with_gradient {
            continue;
        }
        let rinv = llt.inverse();
        let count = responses.len() as f64;
        let active: Vec<(&[f64], f64)> = fits
            .iter()
            .filter(|mv| mv.sigma2 > SIGMA2_FLOOR)
            .map(|mv| (mv.weights.as_slice(), 1.0 / mv.sigma2))
            .collect();
        let mut dphi = 0.0;
        for j in 0..n {
            for k in 0..j {
                let mut w = count * rinv[(j, k)];
                for (a, inv_s2) in &active {
                    w -= a[j] * a[k] * inv_s2;
                }
                let m = w * r0[(j, k)];
                let dr = set.rho[j] - set.rho[k];
                dphi -= 2.0 * m * dr * dr;
                blocks[cls[j]][cls[k]] += m;
                blocks[cls[k]][cls[j]] += m;
            }
        }
        grad[g] = dphi * phi * std::f64::consts::LN_10;
    }

    if with_gradient {
        let pts = latent.points();
        let mut dz = [[0.0; 2]; ClassLabel::COUNT];
        for t in 0..ClassLabel::COUNT {
            for b in 0..ClassLabel::COUNT {
                for c in 0..2 {
                    dz[t][c] -= 4.0 * blocks[t][b] * (pts[t][c] - pts[b][c]);
                }
            }
        }
        grad[q] = dz[1][0];
        for t in 2..ClassLabel::COUNT {
            grad[q + 1 + 2 * (t - 2)] = dz[t][0];
            grad[q + 2 + 2 * (t - 2)] = dz[t][1];
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(n: usize, seed: u64) -> TrainingSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let class: Vec<ClassLabel> = (0..n).map(|i| ClassLabel::from_index(i % 10).unwrap()).collect();
        let y = rho
            .iter()
            .zip(&class)
            .map(|(r, c)| {
                let k = c.index() as f64;
                std::array::from_fn(|i| (r * (1.0 + 0.3 * i as f64) + 0.1 * k).sin() + 0.05 * rng.random::<f64>())
            })
            .collect();
        TrainingSet { rho, class, y }
    }

    /// Dense textbook evaluation of the GLS mean and variance.
    fn dense_oracle(r: &[Vec<f64>], d: &[f64]) -> (f64, f64) {
        let n = d.len();
        let a = nalgebra::DMatrix::from_fn(n, n, |i, j| r[i][j]);
        let inv = a.try_inverse().unwrap();
        let one = nalgebra::DVector::from_element(n, 1.0);
        let dv = nalgebra::DVector::from_column_slice(d);
        let gamma = (one.transpose() * &inv * &dv)[0] / (one.transpose() * &inv * &one)[0];
        let res = dv - one * gamma;
        let s2 = (res.transpose() * inv * &res)[0] / n as f64;
        (gamma, s2)
    }

    #[test]
    fn identity_correlation_gives_sample_moments() {
        let r0 = Mat::<f64>::identity(4, 4);
        let llt = factorize(&r0, 0.0).unwrap();
        let d = [1.0, 2.0, 4.0, 5.0];
        let mv = mle_mean_variance(&llt, &d).unwrap();
        assert!((mv.gamma - 3.0).abs() < 1e-14);
        assert!((mv.sigma2 - 2.5).abs() < 1e-14);
        let c = mle_mean_variance(&llt, &[0.7; 4]).unwrap();
        assert!((c.gamma - 0.7).abs() < 1e-14 && c.sigma2 < 1e-28);
    }

    #[test]
    fn mean_variance_matches_dense_oracle() {
        let set = random_set(5, 3);
        let latent = LatentMap::from_free(&[0.4; LATENT_FREE_PARAMS]);
        let r0 = correlation_matrix(&set, &latent, 3.0);
        let llt = factorize(&r0, 0.0).unwrap();
        let rows: Vec<Vec<f64>> = (0..5).map(|i| (0..5).map(|j| r0[(i, j)]).collect()).collect();
        let d = set.response(2);
        let (g, s2) = dense_oracle(&rows, &d);
        let mv = mle_mean_variance(&llt, &d).unwrap();
        assert!((mv.gamma - g).abs() < 1e-10 * g.abs().max(1.0));
        assert!((mv.sigma2 - s2).abs() < 1e-10 * s2.max(1e-12));
    }

    #[test]
    fn distant_points_reduce_to_variance_terms() {
        let set = TrainingSet {
            rho: vec![0.0, 1.0],
            class: vec![ClassLabel::A, ClassLabel::A],
            y: vec![[1.0; 6], [-1.0; 6]],
        };
        let layout = ParamLayout::new(KernelMode::Sos);
        let mut theta = vec![4.0; 6];
        theta.extend(vec![0.0; LATENT_FREE_PARAMS]);
        let (v, _) = neg_log_likelihood(&set, layout, &theta, 0.0, false).unwrap();
        // R = I: γ = 0, σ² = 1, so every term vanishes
        assert!(v.abs() < 1e-12, "{v}");
    }

    #[test]
    fn duplicate_inputs_without_nugget_fail() {
        let set = TrainingSet {
            rho: vec![0.5, 0.5, 0.2],
            class: vec![ClassLabel::C; 3],
            y: vec![[1.0; 6], [1.0; 6], [0.0; 6]],
        };
        let layout = ParamLayout::new(KernelMode::Separable);
        let theta = vec![0.0; layout.len()];
        assert!(matches!(
            neg_log_likelihood(&set, layout, &theta, 0.0, false),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(neg_log_likelihood(&set, layout, &theta, 1e-6, false).is_ok());
    }

    fn check_gradient(mode: KernelMode, seed: u64) {
        let set = random_set(10, seed);
        let layout = ParamLayout::new(mode);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let (lo, hi) = layout.bounds();
        let theta: Vec<f64> = (0..layout.len())
            .map(|i| {
                if i < mode.scale_count() {
                    rng.random_range(-0.5..1.5)
                } else {
                    rng.random_range(lo[i].max(-1.0)..hi[i].min(1.0))
                }
            })
            .collect();
        let nugget = 1e-6;
        let (_, g) = neg_log_likelihood(&set, layout, &theta, nugget, true).unwrap();
        for p in 0..theta.len() {
            let h = 1e-5;
            let mut tp = theta.clone();
            tp[p] += h;
            let mut tm = theta.clone();
            tm[p] -= h;
            let fp = neg_log_likelihood(&set, layout, &tp, nugget, false).unwrap().0;
            let fm = neg_log_likelihood(&set, layout, &tm, nugget, false).unwrap().0;
            let fd = (fp - fm) / (2.0 * h);
            let scale = g.iter().fold(1e-8f64, |m, v| m.max(v.abs()));
            assert!((g[p] - fd).abs() <= 1e-5 * scale, "param {p}: analytic {} vs fd {fd}", g[p]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_sos() {
        check_gradient(KernelMode::Sos, 11);
    }

    #[test]
    fn gradient_matches_finite_differences_separable() {
        check_gradient(KernelMode::Separable, 12);
    }
}
