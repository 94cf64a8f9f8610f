//! Run summaries and cross-run comparison.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::design::RunMode;
use super::stages::RunResult;
use crate::error::{Error, Result};
use crate::lattice::ClassLabel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassOmega {
    pub class: ClassLabel,
    pub omega1: f64,
}

/// Contents of a run's `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: RunMode,
    /// First angular frequency (rad/s) of the final design.
    pub omega1: f64,
    pub frequency_hz: f64,
    pub omega2: f64,
    pub mean_rho_tilde: f64,
    pub iterations: usize,
    pub repeated_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_end_omega1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage2_start_omega1: Option<f64>,
    /// Per-class results of a single-class sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub single_class: Vec<ClassOmega>,
}

impl RunSummary {
    pub fn from_run(run: &RunResult) -> Self {
        Self {
            mode: run.mode,
            omega1: run.omega1,
            frequency_hz: run.omega1 / std::f64::consts::TAU,
            omega2: run.omega2,
            mean_rho_tilde: run.design.mean_rho_tilde(),
            iterations: run.history.rows().len(),
            repeated_iterations: run.history.repeated_count(),
            stage1_end_omega1: run.stage_boundary.map(|b| b.0),
            stage2_start_omega1: run.stage_boundary.map(|b| b.1),
            single_class: run.sweep.iter().map(|&(class, omega1)| ClassOmega { class, omega1 }).collect(),
        }
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Write `history.csv`, `design.csv` and `summary.json` into `dir`.
pub fn write_run(dir: impl AsRef<Path>, run: &RunResult) -> Result<RunSummary> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    run.history.write_csv(dir.join("history.csv"))?;
    run.design.write_csv(dir.join("design.csv"))?;
    let summary = RunSummary::from_run(run);
    summary.write_json(dir.join("summary.json"))?;
    Ok(summary)
}

/// `(ω / ω_baseline − 1)·100`, rounded to two decimals.
pub fn improvement_percent(omega: f64, baseline: f64) -> f64 {
    ((omega / baseline - 1.0) * 100.0 * 100.0).round() / 100.0
}

/// Multiclass result against the single-class and single-scale baselines.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub multiclass: Option<f64>,
    pub single_class: Vec<ClassOmega>,
    pub best_single_class: Option<ClassOmega>,
    pub simp: Option<f64>,
    pub improvement_over_single_class: Option<f64>,
    pub improvement_over_simp: Option<f64>,
}

impl Comparison {
    pub fn from_summaries(summaries: &[RunSummary]) -> Result<Self> {
        let mut c = Comparison {
            multiclass: None,
            single_class: vec![],
            best_single_class: None,
            simp: None,
            improvement_over_single_class: None,
            improvement_over_simp: None,
        };
        for s in summaries {
            match s.mode {
                RunMode::Multiclass => {
                    if c.multiclass.replace(s.omega1).is_some() {
                        return Err(Error::Invalid("more than one multiclass run".into()));
                    }
                }
                RunMode::Simp => {
                    if c.simp.replace(s.omega1).is_some() {
                        return Err(Error::Invalid("more than one SIMP run".into()));
                    }
                }
                RunMode::Single(Some(class)) => c.single_class.push(ClassOmega { class, omega1: s.omega1 }),
                RunMode::Single(None) => c.single_class.extend(&s.single_class),
            }
        }
        c.single_class.sort_by_key(|r| r.class);
        if c.single_class.windows(2).any(|w| w[0].class == w[1].class) {
            return Err(Error::Invalid("a class appears in more than one single-class run".into()));
        }
        c.best_single_class = c.single_class.iter().copied().reduce(|a, b| if b.omega1 > a.omega1 { b } else { a });
        if let Some(m) = c.multiclass {
            c.improvement_over_single_class = c.best_single_class.map(|b| improvement_percent(m, b.omega1));
            c.improvement_over_simp = c.simp.map(|s| improvement_percent(m, s));
        }
        Ok(c)
    }

    /// Plain-text comparison table.
    pub fn table(&self) -> String {
        let mut out = format!("{:<24} {:>14} {:>12} {:>14}\n", "design", "omega1 (rad/s)", "f1 (Hz)", "multiclass gain");
        let mut row = |name: String, omega: f64, gain: Option<f64>| {
            let gain = gain.map(|g| format!("{g:+.2}%")).unwrap_or_default();
            out += &format!("{name:<24} {omega:>14.4} {:>12.4} {gain:>14}\n", omega / std::f64::consts::TAU);
        };
        if let Some(m) = self.multiclass {
            row("multiclass".into(), m, None);
        }
        if let Some(b) = self.best_single_class {
            row(format!("single-class (best: {})", b.class), b.omega1, self.improvement_over_single_class);
        }
        if let Some(s) = self.simp {
            row("single-scale (SIMP)".into(), s, self.improvement_over_simp);
        }
        for r in &self.single_class {
            let gain = self.multiclass.map(|m| improvement_percent(m, r.omega1));
            row(format!("  class {}", r.class), r.omega1, gain);
        }
        out
    }
}
