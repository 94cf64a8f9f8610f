//! Held-out accuracy and latent-space interpretability measures.

use std::path::Path;

use serde::Serialize;

use super::TrainedSurrogate;
use crate::error::{Error, Result};
use crate::lattice::ClassLabel;
use crate::library::LibraryRecord;
use crate::stiffness::{ENTRY_COUNT, ENTRY_NAMES};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntryMetrics {
    pub entry: String,
    pub mse: f64,
    pub rmse: f64,
    /// `None` when the truth column has zero variance.
    pub r2: Option<f64>,
}

/// MSE, RMSE and coefficient of determination.
pub fn regression_metrics(truth: &[f64], pred: &[f64]) -> Result<(f64, f64, Option<f64>)> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::Invalid("metrics need equally sized, non-empty columns".into()));
    }
    let n = truth.len() as f64;
    let sse: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p).powi(2)).sum();
    let mean = truth.iter().sum::<f64>() / n;
    let sst: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    let mse = sse / n;
    let r2 = if sst > 0.0 { Some(1.0 - sse / sst) } else { None };
    Ok((mse, mse.sqrt(), r2))
}

pub fn metrics(model: &TrainedSurrogate, test: &[LibraryRecord]) -> Result<Vec<EntryMetrics>> {
    if test.is_empty() {
        return Err(Error::Invalid("empty test set".into()));
    }
    let preds: Vec<[f64; ENTRY_COUNT]> = test.iter().map(|r| model.predict_class(r.volume_fraction, r.class)).collect();
    (0..ENTRY_COUNT)
        .map(|i| {
            let truth: Vec<f64> = test.iter().map(|r| r.stiffness.entries()[i]).collect();
            let pred: Vec<f64> = preds.iter().map(|p| p[i]).collect();
            let (mse, rmse, r2) = regression_metrics(&truth, &pred)?;
            Ok(EntryMetrics {
                entry: ENTRY_NAMES[i].into(),
                mse,
                rmse,
                r2,
            })
        })
        .collect()
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[EntryMetrics]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["entry", "mse", "rmse", "r2"])?;
    for m in rows {
        let r2 = m.r2.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        w.write_record([m.entry.clone(), m.mse.to_string(), m.rmse.to_string(), r2])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Ranks with ties sharing their average rank.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `None` if either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        let (a, b) = (rx[i] - mx, ry[i] - my);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Linear interpolation of a curve given by increasing abscissae.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&v| v < x);
    if k == 0 {
        return ys[0];
    }
    if k >= xs.len() {
        return ys[xs.len() - 1];
    }
    let t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

/// RMSE between two classes' stiffness-versus-volume-fraction curves over
/// their common volume-fraction range, pooled over all six entries.
pub fn class_curve_rmse(records: &[LibraryRecord], a: ClassLabel, b: ClassLabel, grid: usize) -> Result<f64> {
    let curve = |c: ClassLabel| {
        let mut pts: Vec<(f64, [f64; ENTRY_COUNT])> = records
            .iter()
            .filter(|r| r.class == c)
            .map(|r| (r.volume_fraction, r.stiffness.entries()))
            .collect();
        pts.sort_by(|p, q| p.0.total_cmp(&q.0));
        pts
    };
    let (ca, cb) = (curve(a), curve(b));
    if ca.len() < 2 || cb.len() < 2 {
        return Err(Error::Invalid(format!("classes {a} and {b} need at least two records each")));
    }
    let lo = ca[0].0.max(cb[0].0);
    let hi = ca[ca.len() - 1].0.min(cb[cb.len() - 1].0);
    if hi <= lo {
        return Err(Error::Invalid(format!("classes {a} and {b} have no common volume-fraction range")));
    }
    let xa: Vec<f64> = ca.iter().map(|p| p.0).collect();
    let xb: Vec<f64> = cb.iter().map(|p| p.0).collect();
    let mut sse = 0.0;
    for i in 0..ENTRY_COUNT {
        let ya: Vec<f64> = ca.iter().map(|p| p.1[i]).collect();
        let yb: Vec<f64> = cb.iter().map(|p| p.1[i]).collect();
        for k in 0..grid {
            let x = lo + (hi - lo) * k as f64 / (grid - 1).max(1) as f64;
            sse += (interpolate(&xa, &ya, x) - interpolate(&xb, &yb, x)).powi(2);
        }
    }
    Ok((sse / (grid * ENTRY_COUNT) as f64).sqrt())
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassPair {
    pub first: ClassLabel,
    pub second: ClassLabel,
    pub latent_distance: f64,
    pub curve_rmse: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Interpretability {
    pub pairs: Vec<ClassPair>,
    pub spearman: Option<f64>,
    /// Nearest other class in latent space, per class.
    pub nearest: Vec<(ClassLabel, ClassLabel)>,
}

impl Interpretability {
    pub fn mutual_nearest(&self, a: ClassLabel, b: ClassLabel) -> bool {
        let of = |c: ClassLabel| self.nearest.iter().find(|(k, _)| *k == c).map(|(_, n)| *n);
        of(a) == Some(b) && of(b) == Some(a)
    }
}

/// Compare latent distances with stiffness-curve distances over all 45 pairs.
pub fn latent_interpretability(model: &TrainedSurrogate, records: &[LibraryRecord]) -> Result<Interpretability> {
    let mut pairs = Vec::new();
    for (i, &a) in ClassLabel::ALL.iter().enumerate() {
        for &b in &ClassLabel::ALL[i + 1..] {
            pairs.push(ClassPair {
                first: a,
                second: b,
                latent_distance: model.latent().distance(a, b),
                curve_rmse: class_curve_rmse(records, a, b, 100)?,
            });
        }
    }
    let d: Vec<f64> = pairs.iter().map(|p| p.latent_distance).collect();
    let e: Vec<f64> = pairs.iter().map(|p| p.curve_rmse).collect();
    let nearest = ClassLabel::ALL
        .iter()
        .map(|&a| {
            let other = ClassLabel::ALL
                .iter()
                .copied()
                .filter(|&b| b != a)
                .min_by(|&x, &y| model.latent().distance(a, x).total_cmp(&model.latent().distance(a, y)))
                .unwrap_or(a);
            (a, other)
        })
        .collect();
    Ok(Interpretability {
        spearman: spearman(&d, &e),
        pairs,
        nearest,
    })
}
