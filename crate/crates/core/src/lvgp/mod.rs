//! Latent-variable Gaussian process surrogate for the six normalized stiffness
//! entries as functions of volume fraction and lattice class.
//!
//! Each class is embedded as a point in a 2-D latent space. Every response gets
//! its own volume-fraction scale in the sum-of-separable mode, while the
//! separable baseline shares one correlation function across all responses.

pub mod kernel;
pub mod likelihood;
pub mod metrics;
pub mod optim;

use std::fs;
use std::path::Path;

use log::{debug, info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kernel::{correlation, KernelMode, LatentMap, LatentPoint, LATENT_DIM};
use likelihood::{factorize, mle_mean_variance, neg_log_likelihood, ParamLayout, TrainingSet};

use crate::error::{Error, Result};
use crate::lattice::ClassLabel;
use crate::library::LibraryRecord;
use crate::stiffness::{StiffnessTensor, ENTRY_COUNT, ENTRY_NAMES};

const FORMAT_TAG: &str = "cellopt-lvgp-1";
pub const MIN_TRAINING_RECORDS: usize = 50;
pub const MIN_RESTARTS: usize = 8;
const LATENT_START_HALF_WIDTH: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub mode: KernelMode,
    pub restarts: usize,
    pub seed: u64,
    /// Initial nugget relative to the unit process variance.
    pub nugget: f64,
    pub max_nugget: f64,
    pub max_iterations: usize,
    pub f_tolerance: f64,
    /// Iterations every start gets before the field is narrowed.
    pub screen_iterations: usize,
    /// Starts carried on to full convergence after screening.
    pub refine_count: usize,
    /// Half-width of the box around the origin that latent starting points are drawn from.
    pub latent_start_half_width: f64,
    /// Add a zero-stiffness point at zero volume fraction for every class.
    pub void_anchors: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: KernelMode::Sos,
            restarts: 16,
            seed: 2024,
            nugget: 1e-4,
            max_nugget: 1e-2,
            max_iterations: 500,
            f_tolerance: 1e-8,
            screen_iterations: 40,
            refine_count: 3,
            latent_start_half_width: LATENT_START_HALF_WIDTH,
            void_anchors: true,
        }
    }
}

/// Everything needed to rebuild a trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub format: String,
    pub mode: KernelMode,
    pub latent: LatentMap,
    pub log10_scales: Vec<f64>,
    pub nugget: f64,
    pub output_mean: [f64; ENTRY_COUNT],
    pub output_scale: [f64; ENTRY_COUNT],
    /// Standardized-scale mean and process variance per response.
    pub gamma: [f64; ENTRY_COUNT],
    pub sigma2: [f64; ENTRY_COUNT],
    pub neg_log_likelihood: f64,
    pub train_rho: Vec<f64>,
    pub train_class: Vec<ClassLabel>,
    /// Normalized stiffness entries of the training points (unstandardized).
    pub train_outputs: Vec<[f64; ENTRY_COUNT]>,
}

/// A fitted surrogate; immutable and shareable across threads.
#[derive(Clone, Debug)]
pub struct TrainedSurrogate {
    params: SurrogateParams,
    scales: Vec<f64>,
    /// `R⁻¹(d_i − 1γ_i)` per response.
    weights: Vec<Vec<f64>>,
}

/// Prediction with partial derivatives, all in normalized stiffness units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictionGradient {
    pub value: [f64; ENTRY_COUNT],
    pub d_rho: [f64; ENTRY_COUNT],
    pub d_z: [[f64; LATENT_DIM]; ENTRY_COUNT],
}

fn standardize(records: &[[f64; ENTRY_COUNT]]) -> ([f64; ENTRY_COUNT], [f64; ENTRY_COUNT]) {
    let n = records.len() as f64;
    let mut mean = [0.0; ENTRY_COUNT];
    let mut scale = [1.0; ENTRY_COUNT];
    for i in 0..ENTRY_COUNT {
        mean[i] = records.iter().map(|r| r[i]).sum::<f64>() / n;
        let var = records.iter().map(|r| (r[i] - mean[i]).powi(2)).sum::<f64>() / n;
        if var.sqrt() > 1e-300 {
            scale[i] = var.sqrt();
        }
    }
    (mean, scale)
}

fn training_set(rho: &[f64], class: &[ClassLabel], outputs: &[[f64; ENTRY_COUNT]], mean: &[f64; 6], scale: &[f64; 6]) -> TrainingSet {
    TrainingSet {
        rho: rho.to_vec(),
        class: class.to_vec(),
        y: outputs
            .iter()
            .map(|r| std::array::from_fn(|i| (r[i] - mean[i]) / scale[i]))
            .collect(),
    }
}

/// Latin-hypercube starting points inside the start box.
fn latin_hypercube(rng: &mut ChaCha8Rng, count: usize, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let dims = lo.len();
    let mut points = vec![vec![0.0; dims]; count];
    for d in 0..dims {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(rng);
        for (k, p) in points.iter_mut().enumerate() {
            let u = (strata[k] as f64 + rng.random::<f64>()) / count as f64;
            p[d] = lo[d] + u * (hi[d] - lo[d]);
        }
    }
    points
}

struct RestartOutcome {
    theta: Vec<f64>,
    value: f64,
    nugget: f64,
    iterations: usize,
}

/// Smallest nugget at which the likelihood can be evaluated at `start`.
fn feasible_nugget(set: &TrainingSet, layout: ParamLayout, start: &[f64], cfg: &TrainConfig) -> Result<f64> {
    let mut nugget = cfg.nugget;
    loop {
        match neg_log_likelihood(set, layout, start, nugget, false) {
            Ok(_) => return Ok(nugget),
            Err(Error::NotPositiveDefinite { .. }) if nugget * 10.0 <= cfg.max_nugget * (1.0 + 1e-9) => nugget *= 10.0,
            Err(e) => return Err(e),
        }
    }
}

fn run_restart(
    set: &TrainingSet,
    layout: ParamLayout,
    start: &[f64],
    nugget: f64,
    max_iterations: usize,
    cfg: &TrainConfig,
) -> Result<RestartOutcome> {
    let (lo, hi) = layout.bounds();
    let opts = optim::LbfgsOptions {
        max_iterations,
        f_tolerance: cfg.f_tolerance,
        ..Default::default()
    };
    let objective = |theta: &[f64]| neg_log_likelihood(set, layout, theta, nugget, true).ok();
    let min = optim::minimize(objective, start, &lo, &hi, &opts).ok_or(Error::NotPositiveDefinite { nugget })?;
    debug!(
        "restart: nll {:.6} after {} iterations ({} evaluations), nugget {nugget:e}",
        min.f, min.iterations, min.evaluations
    );
    Ok(RestartOutcome {
        theta: min.x,
        value: min.f,
        nugget,
        iterations: min.iterations,
    })
}

fn best_of(outcomes: Vec<Result<RestartOutcome>>, restarts: usize) -> Result<Vec<RestartOutcome>> {
    let mut ok = Vec::new();
    let mut last_err = String::new();
    for out in outcomes {
        match out {
            Ok(o) => ok.push(o),
            Err(e) => {
                warn!("restart failed: {e}");
                last_err = e.to_string();
            }
        }
    }
    if ok.is_empty() {
        return Err(Error::TrainingFailed { restarts, last: last_err });
    }
    ok.sort_by(|a, b| a.value.total_cmp(&b.value));
    Ok(ok)
}

/// Fit the surrogate by multi-start maximum likelihood.
pub fn train(records: &[LibraryRecord], cfg: &TrainConfig) -> Result<TrainedSurrogate> {
    if records.len() < MIN_TRAINING_RECORDS {
        return Err(Error::Invalid(format!(
            "training needs at least {MIN_TRAINING_RECORDS} records, got {}",
            records.len()
        )));
    }
    for label in ClassLabel::ALL {
        if !records.iter().any(|r| r.class == label) {
            return Err(Error::Invalid(format!("training data has no records of class {label}")));
        }
    }
    if cfg.restarts < MIN_RESTARTS {
        return Err(Error::Invalid(format!("need at least {MIN_RESTARTS} restarts, got {}", cfg.restarts)));
    }
    let mut rho: Vec<f64> = records.iter().map(|r| r.volume_fraction).collect();
    let mut class: Vec<ClassLabel> = records.iter().map(|r| r.class).collect();
    let mut outputs: Vec<[f64; ENTRY_COUNT]> = records.iter().map(|r| r.stiffness.entries()).collect();
    if cfg.void_anchors {
        for label in ClassLabel::ALL {
            rho.push(0.0);
            class.push(label);
            outputs.push([0.0; ENTRY_COUNT]);
        }
    }
    let (mean, scale) = standardize(&outputs);
    let set = training_set(&rho, &class, &outputs, &mean, &scale);
    let layout = ParamLayout::new(cfg.mode);

    // Start box: moderate volume-fraction scales and latent points near the origin.
    let q = cfg.mode.scale_count();
    let mut start_lo = vec![-1.0; q];
    let mut start_hi = vec![3.0; q];
    start_lo.push(0.0);
    let half = cfg.latent_start_half_width;
    start_hi.push(half);
    for _ in 1..kernel::LATENT_FREE_PARAMS {
        start_lo.push(-half);
        start_hi.push(half);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts = latin_hypercube(&mut rng, cfg.restarts, &start_lo, &start_hi);
    info!("training {} surrogate on {} points with {} restarts", cfg.mode, set.len(), cfg.restarts);

    // Screen every start briefly, then carry the most promising to convergence.
    let screen = cfg.screen_iterations.min(cfg.max_iterations);
    let screened = best_of(
        starts
            .par_iter()
            .map(|s| run_restart(&set, layout, s, feasible_nugget(&set, layout, s, cfg)?, screen, cfg))
            .collect(),
        cfg.restarts,
    )?;
    let keep = cfg.refine_count.max(1).min(screened.len());
    let refined = best_of(
        screened[..keep]
            .par_iter()
            .map(|o| {
                let remaining = cfg.max_iterations.saturating_sub(o.iterations);
                if remaining == 0 || o.iterations < screen {
                    return Ok(RestartOutcome { theta: o.theta.clone(), ..*o });
                }
                run_restart(&set, layout, &o.theta, o.nugget, remaining, cfg)
            })
            .collect(),
        cfg.restarts,
    )?;
    let best = refined.into_iter().next().expect("best_of returns at least one outcome");
    info!("best negative log-likelihood {:.6} (nugget {:e})", best.value, best.nugget);

    let params = SurrogateParams {
        format: FORMAT_TAG.into(),
        mode: cfg.mode,
        latent: layout.latent(&best.theta),
        log10_scales: best.theta[..q].to_vec(),
        nugget: best.nugget,
        output_mean: mean,
        output_scale: scale,
        gamma: [0.0; ENTRY_COUNT],
        sigma2: [0.0; ENTRY_COUNT],
        neg_log_likelihood: best.value,
        train_rho: rho,
        train_class: class,
        train_outputs: outputs,
    };
    TrainedSurrogate::from_params(params)
}

impl TrainedSurrogate {
    /// Rebuild factorizations and cached weights.
    pub fn from_params(mut params: SurrogateParams) -> Result<Self> {
        if params.format != FORMAT_TAG {
            return Err(Error::Invalid(format!("unsupported model format `{}`", params.format)));
        }
        let n = params.train_rho.len();
        if params.train_class.len() != n || params.train_outputs.len() != n || n < 2 {
            return Err(Error::Invalid("inconsistent training arrays in model".into()));
        }
        if params.log10_scales.len() != params.mode.scale_count() {
            return Err(Error::Invalid("scale count does not match kernel mode".into()));
        }
        let latent = LatentMap::from_points(*params.latent.points())?;
        let set = training_set(
            &params.train_rho,
            &params.train_class,
            &params.train_outputs,
            &params.output_mean,
            &params.output_scale,
        );
        let layout = ParamLayout::new(params.mode);
        let scales: Vec<f64> = params.log10_scales.iter().map(|v| 10f64.powf(*v)).collect();
        let mut weights = vec![Vec::new(); ENTRY_COUNT];
        for (g, &phi) in scales.iter().enumerate() {
            let r0 = likelihood::correlation_matrix(&set, &latent, phi);
            let llt = factorize(&r0, params.nugget)?;
            for i in layout.group_responses(g) {
                let mv = mle_mean_variance(&llt, &set.response(i))?;
                params.gamma[i] = mv.gamma;
                params.sigma2[i] = mv.sigma2;
                weights[i] = mv.weights;
            }
        }
        Ok(Self {
            params,
            scales,
            weights,
        })
    }

    pub fn params(&self) -> &SurrogateParams {
        &self.params
    }

    pub fn mode(&self) -> KernelMode {
        self.params.mode
    }

    pub fn latent(&self) -> &LatentMap {
        &self.params.latent
    }

    pub fn latent_of_class(&self, class: ClassLabel) -> LatentPoint {
        self.params.latent.point(class)
    }

    /// Volume-fraction scale used by response `i`.
    pub fn scale(&self, i: usize) -> f64 {
        match self.params.mode {
            KernelMode::Sos => self.scales[i],
            KernelMode::Separable => self.scales[0],
        }
    }

    fn group_of(&self, i: usize) -> usize {
        match self.params.mode {
            KernelMode::Sos => i,
            KernelMode::Separable => 0,
        }
    }

    /// Normalized stiffness entries at `(rho, z)`.
    pub fn predict(&self, rho: f64, z: LatentPoint) -> [f64; ENTRY_COUNT] {
        self.evaluate(rho, z, false).value
    }

    pub fn predict_tensor(&self, rho: f64, z: LatentPoint) -> StiffnessTensor {
        StiffnessTensor::from_entries(self.predict(rho, z))
    }

    pub fn predict_class(&self, rho: f64, class: ClassLabel) -> [f64; ENTRY_COUNT] {
        self.predict(rho, self.latent_of_class(class))
    }

    pub fn predict_grad(&self, rho: f64, z: LatentPoint) -> PredictionGradient {
        self.evaluate(rho, z, true)
    }

    fn evaluate(&self, rho: f64, z: LatentPoint, with_grad: bool) -> PredictionGradient {
        let p = &self.params;
        let n = p.train_rho.len();
        let groups = self.scales.len();
        let mut acc = [[0.0f64; 4]; ENTRY_COUNT]; // value, d_rho, d_z1, d_z2
        let mut rg = vec![0.0; groups];
        for j in 0..n {
            let zj = p.latent.point(p.train_class[j]);
            let dz = [z[0] - zj[0], z[1] - zj[1]];
            let ez = (-(dz[0] * dz[0] + dz[1] * dz[1])).exp();
            if ez == 0.0 {
                continue;
            }
            let dr = rho - p.train_rho[j];
            for (g, r) in rg.iter_mut().enumerate() {
                *r = ez * (-self.scales[g] * dr * dr).exp();
            }
            for (i, a) in acc.iter_mut().enumerate() {
                let g = self.group_of(i);
                let w = rg[g] * self.weights[i][j];
                a[0] += w;
                if with_grad {
                    a[1] -= 2.0 * self.scales[g] * dr * w;
                    a[2] -= 2.0 * dz[0] * w;
                    a[3] -= 2.0 * dz[1] * w;
                }
            }
        }
        let mut out = PredictionGradient {
            value: [0.0; ENTRY_COUNT],
            d_rho: [0.0; ENTRY_COUNT],
            d_z: [[0.0; 2]; ENTRY_COUNT],
        };
        for i in 0..ENTRY_COUNT {
            let s = p.output_scale[i];
            out.value[i] = p.output_mean[i] + s * (p.gamma[i] + acc[i][0]);
            out.d_rho[i] = s * acc[i][1];
            out.d_z[i] = [s * acc[i][2], s * acc[i][3]];
        }
        out
    }

    /// Prior mean of each response, in normalized stiffness units.
    pub fn prior_mean(&self) -> [f64; ENTRY_COUNT] {
        std::array::from_fn(|i| self.params.output_mean[i] + self.params.output_scale[i] * self.params.gamma[i])
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.params)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_params(serde_json::from_str(&text)?)
    }

    /// `class,z1,z2` rows for all ten classes.
    pub fn write_latent_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["class", "z1", "z2"])?;
        for label in ClassLabel::ALL {
            let z = self.latent_of_class(label);
            w.write_record([label.to_string(), z[0].to_string(), z[1].to_string()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn describe(&self) -> String {
        let scales: Vec<String> = (0..ENTRY_COUNT)
            .map(|i| format!("{}: {:.3e}", ENTRY_NAMES[i], self.scale(i)))
            .collect();
        format!("{} kernel, nugget {:e}, scales [{}]", self.params.mode, self.params.nugget, scales.join(", "))
    }
}

/// Surrogate with fixed hyperparameters over smooth synthetic curves, for tests
/// that need a model but not a training run.
#[cfg(test)]
pub(crate) fn fixture_surrogate() -> TrainedSurrogate {
    let mut rho = Vec::new();
    let mut class = Vec::new();
    let mut outputs = Vec::new();
    for label in ClassLabel::ALL {
        let k = label.index() as f64;
        for j in 0..=8 {
            let r = j as f64 / 8.0;
            let soft = r.powf(1.2 + 0.15 * k);
            let c = StiffnessTensor::isotropic_plane_stress(1.0, 0.3).entries();
            let skew = if label.is_orthotropic() { 0.0 } else { 0.02 * r * (1.0 - r) };
            rho.push(r);
            class.push(label);
            outputs.push([
                c[0] * soft * (1.0 + 0.05 * k * (1.0 - r)),
                c[1] * soft,
                skew,
                c[3] * soft,
                -skew,
                c[5] * soft * (1.0 - 0.03 * k * (1.0 - r)),
            ]);
        }
    }
    let points = std::array::from_fn(|t| match t {
        0 => [0.0, 0.0],
        1 => [0.4, 0.0],
        _ => [0.3 * (t as f64).cos() * (1.0 + 0.1 * t as f64), 0.3 * (t as f64).sin() * (1.0 + 0.1 * t as f64)],
    });
    let (output_mean, output_scale) = standardize(&outputs);
    let params = SurrogateParams {
        format: FORMAT_TAG.into(),
        mode: KernelMode::Sos,
        latent: LatentMap::from_points(points).unwrap(),
        log10_scales: vec![0.7; ENTRY_COUNT],
        nugget: 1e-8,
        output_mean,
        output_scale,
        gamma: [0.0; ENTRY_COUNT],
        sigma2: [0.0; ENTRY_COUNT],
        neg_log_likelihood: 0.0,
        train_rho: rho,
        train_class: class,
        train_outputs: outputs,
    };
    TrainedSurrogate::from_params(params).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(class: ClassLabel, rho: f64, shift: bool) -> [f64; ENTRY_COUNT] {
        let k = if shift { class.index() as f64 } else { 0.0 };
        [
            rho * rho * (1.0 + 0.1 * k),
            0.3 * rho,
            0.01 * k * rho,
            rho.powf(1.5),
            0.0,
            0.2 * rho * rho,
        ]
    }

    fn toy_records(per_class: usize, shift: bool) -> Vec<LibraryRecord> {
        let mut out = Vec::new();
        for label in ClassLabel::ALL {
            for k in 0..per_class {
                let rho = 0.1 + 0.9 * k as f64 / (per_class - 1) as f64;
                out.push(LibraryRecord {
                    class: label,
                    width: 0.0,
                    volume_fraction: rho,
                    stiffness: StiffnessTensor::from_entries(curve(label, rho, shift)),
                });
            }
        }
        out
    }

    fn quick_config(mode: KernelMode) -> TrainConfig {
        TrainConfig {
            mode,
            restarts: 8,
            seed: 5,
            nugget: 1e-8,
            max_iterations: 200,
            void_anchors: false,
            ..Default::default()
        }
    }

    #[test]
    fn training_residuals_equal_nugget_times_weights() {
        // With R the noise-free correlation, the mean at training point j is
        // y_j − δ·[(R + δI)⁻¹(y − γ)]_j, i.e. exact interpolation up to the nugget.
        let recs = toy_records(6, true);
        let model = train(&recs, &quick_config(KernelMode::Sos)).unwrap();
        let p = model.params();
        for r in &recs {
            let j = (0..p.train_rho.len())
                .find(|&j| p.train_class[j] == r.class && p.train_rho[j] == r.volume_fraction)
                .unwrap();
            let y = model.predict_class(r.volume_fraction, r.class);
            for (i, (pred, t)) in y.iter().zip(r.stiffness.entries()).enumerate() {
                let expected = t - p.nugget * p.output_scale[i] * model.weights[i][j];
                assert!((pred - expected).abs() <= 1e-9 * t.abs().max(1.0), "{pred} vs {expected}");
            }
        }
    }

    #[test]
    fn identical_classes_collapse_in_latent_space() {
        let model = train(&toy_records(6, false), &quick_config(KernelMode::Separable)).unwrap();
        for a in ClassLabel::ALL {
            for b in ClassLabel::ALL {
                assert!(model.latent().distance(a, b) < 0.1, "{a}-{b}: {}", model.latent().distance(a, b));
            }
        }
    }

    #[test]
    fn far_latent_points_revert_to_prior_mean() {
        let model = train(&toy_records(6, true), &quick_config(KernelMode::Sos)).unwrap();
        let far = model.predict(0.5, [1e3, 1e3]);
        let prior = model.prior_mean();
        for i in 0..ENTRY_COUNT {
            assert!((far[i] - prior[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let model = fixture_surrogate();
        let h = 1e-4;
        for (rho, z) in [(0.31, [0.05, -0.12]), (0.77, [0.35, 0.2]), (0.52, [-0.2, 0.1])] {
            let g = model.predict_grad(rho, z);
            let (p, m) = (model.predict(rho + h, z), model.predict(rho - h, z));
            for i in 0..ENTRY_COUNT {
                let fd = (p[i] - m[i]) / (2.0 * h);
                assert!((fd - g.d_rho[i]).abs() <= 1e-6 * fd.abs().max(1e-3), "d_rho {i}: {} vs {fd}", g.d_rho[i]);
            }
            for k in 0..LATENT_DIM {
                let (mut zp, mut zm) = (z, z);
                zp[k] += h;
                zm[k] -= h;
                let (p, m) = (model.predict(rho, zp), model.predict(rho, zm));
                for i in 0..ENTRY_COUNT {
                    let fd = (p[i] - m[i]) / (2.0 * h);
                    assert!((fd - g.d_z[i][k]).abs() <= 1e-6 * fd.abs().max(1e-3), "d_z{k} {i}: {} vs {fd}", g.d_z[i][k]);
                }
            }
        }
    }

    #[test]
    fn constant_outputs_have_zero_gradient() {
        let mut recs = toy_records(6, false);
        for r in &mut recs {
            r.stiffness = StiffnessTensor::from_entries([0.4; 6]);
        }
        let model = train(&recs, &quick_config(KernelMode::Sos)).unwrap();
        let g = model.predict_grad(0.37, [0.2, -0.1]);
        for i in 0..ENTRY_COUNT {
            assert!((g.value[i] - 0.4).abs() < 1e-9);
            assert!(g.d_rho[i].abs() < 1e-9 && g.d_z[i][0].abs() < 1e-9 && g.d_z[i][1].abs() < 1e-9);
        }
    }

    #[test]
    fn serialization_round_trip() {
        let model = train(&toy_records(5, true), &quick_config(KernelMode::Separable)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        model.save_json(&path).unwrap();
        let back = TrainedSurrogate::load_json(&path).unwrap();
        assert_eq!(back.params(), model.params());
        assert_eq!(back.predict(0.42, [0.3, 0.1]), model.predict(0.42, [0.3, 0.1]));
        assert_eq!(model.latent_of_class(ClassLabel::A), [0.0, 0.0]);
        assert_eq!(model.latent_of_class(ClassLabel::B)[1], 0.0);
    }

    #[test]
    fn rejects_small_or_incomplete_data() {
        let recs = toy_records(6, true);
        assert!(train(&recs[..40], &quick_config(KernelMode::Sos)).is_err());
        let no_j: Vec<_> = recs.iter().filter(|r| r.class != ClassLabel::J).cloned().collect();
        assert!(train(&no_j, &quick_config(KernelMode::Sos)).is_err());
        let mut cfg = quick_config(KernelMode::Sos);
        cfg.restarts = 3;
        assert!(train(&recs, &cfg).is_err());
    }
}
