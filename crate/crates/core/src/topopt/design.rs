//! Design variables, optimization problem and run history.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::projection::Schedule;
use crate::error::{Error, Result};
use crate::fem::{Assembler, BoundarySpec, Mesh};
use crate::lattice::ClassLabel;
use crate::lvgp::{LatentMap, LatentPoint};
use crate::stiffness::BaseMaterial;

pub const RHO_MIN: f64 = 1e-6;
/// Fraction of each side's extent added to the latent bounding box.
pub const LATENT_MARGIN: f64 = 0.1;
pub const DEFAULT_FILTER_RADIUS: f64 = 1.5;
/// Allowed deviation of the mean projected density from the target.
pub const VOLUME_TOLERANCE: f64 = 1e-3;
/// Normalized design change below which a stage counts as settled.
pub const CHANGE_TOLERANCE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationLimits {
    pub stage1: usize,
    pub stage2: usize,
}

impl Default for IterationLimits {
    fn default() -> Self {
        Self {
            stage1: 100,
            stage2: 250,
        }
    }
}

/// A fully resolved frequency-maximization problem.
#[derive(Clone, Debug)]
pub struct Problem {
    pub mesh: Mesh,
    pub material: BaseMaterial,
    pub boundary: BoundarySpec,
    pub target_volume: f64,
    pub limits: IterationLimits,
    /// Sensitivity filter radius in element widths.
    pub filter_radius: f64,
    pub schedule: Schedule,
}

impl Problem {
    pub fn new(mesh: Mesh, material: BaseMaterial, boundary: BoundarySpec, target_volume: f64) -> Result<Self> {
        let p = Self {
            mesh,
            material,
            boundary,
            target_volume,
            limits: IterationLimits::default(),
            filter_radius: DEFAULT_FILTER_RADIUS,
            schedule: Schedule::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.material.validate()?;
        if !(self.target_volume > 0.0 && self.target_volume <= 1.0) {
            return Err(Error::Invalid(format!("target volume {} outside (0, 1]", self.target_volume)));
        }
        if self.limits.stage1 == 0 || self.limits.stage2 == 0 {
            return Err(Error::Invalid("iteration caps must be at least 1".into()));
        }
        if !(self.filter_radius > 0.0) {
            return Err(Error::Invalid(format!("filter radius {} must be positive", self.filter_radius)));
        }
        self.schedule.validate()
    }

    pub fn assembler(&self) -> Result<Assembler> {
        Assembler::new(self.mesh, self.boundary.clone(), self.material.density)
    }
}

/// Box for latent design variables: the class points' bounding box grown by
/// a margin on every side.
pub fn latent_bounds(latent: &LatentMap) -> (LatentPoint, LatentPoint) {
    let (mut lo, mut hi) = latent.bounding_box();
    for k in 0..2 {
        let pad = LATENT_MARGIN * (hi[k] - lo[k]).max(1e-3);
        lo[k] -= pad;
        hi[k] += pad;
    }
    (lo, hi)
}

/// Diagonal of the class points' bounding box, the initial penalty width.
pub fn latent_diagonal(latent: &LatentMap) -> f64 {
    let (lo, hi) = latent.bounding_box();
    ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
}

/// Per-element design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignField {
    pub rho: Vec<f64>,
    pub rho_tilde: Vec<f64>,
    pub z: Vec<LatentPoint>,
    /// Class of each element once latent coordinates are snapped.
    pub class: Vec<Option<ClassLabel>>,
}

impl DesignField {
    pub fn uniform(n: usize, rho: f64, z: LatentPoint, class: Option<ClassLabel>) -> Self {
        Self {
            rho: vec![rho; n],
            rho_tilde: vec![rho; n],
            z: vec![z; n],
            class: vec![class; n],
        }
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn mean_rho_tilde(&self) -> f64 {
        self.rho_tilde.iter().sum::<f64>() / self.len() as f64
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["element", "rho", "rho_tilde", "z1", "z2", "class"])?;
        for e in 0..self.len() {
            let class = self.class[e].map(|c| c.as_char().to_string()).unwrap_or_default();
            w.write_record([
                e.to_string(),
                self.rho[e].to_string(),
                self.rho_tilde[e].to_string(),
                self.z[e][0].to_string(),
                self.z[e][1].to_string(),
                class,
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path.as_ref())?;
        let mut d = DesignField {
            rho: vec![],
            rho_tilde: vec![],
            z: vec![],
            class: vec![],
        };
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != 6 {
                return Err(Error::Invalid(format!("design row {row} has {} fields, expected 6", rec.len())));
            }
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse()
                    .map_err(|_| Error::Invalid(format!("design row {row}: `{}` is not a number", &rec[i])))
            };
            if rec[0].parse::<usize>().ok() != Some(row) {
                return Err(Error::Invalid(format!("design row {row} has element id `{}`", &rec[0])));
            }
            d.rho.push(num(1)?);
            d.rho_tilde.push(num(2)?);
            d.z.push([num(3)?, num(4)?]);
            d.class.push(if rec[5].is_empty() { None } else { Some(rec[5].parse()?) });
        }
        if d.is_empty() {
            return Err(Error::Invalid("design file has no elements".into()));
        }
        Ok(d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageTag {
    Stage1,
    Stage2,
    Single,
    Simp,
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageTag::Stage1 => "stage1",
            StageTag::Stage2 => "stage2",
            StageTag::Single => "single",
            StageTag::Simp => "simp",
        })
    }
}

/// One optimization iteration. `eta` and `beta` are zero while projection is off.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    pub stage: StageTag,
    pub omega1: f64,
    pub omega2: f64,
    pub volume: f64,
    pub alpha: f64,
    pub eta: f64,
    pub beta: f64,
    /// Normalized change of the update that produced this design; zero for the first row.
    pub change: f64,
    pub repeated: bool,
}

/// Append-only, contiguously numbered iteration log.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunHistory {
    rows: Vec<HistoryRow>,
}

impl RunHistory {
    pub fn rows(&self) -> &[HistoryRow] {
        &self.rows
    }

    pub fn next_iter(&self) -> usize {
        self.rows.len()
    }

    pub fn push(&mut self, mut row: HistoryRow) {
        row.iter = self.rows.len();
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: &RunHistory) {
        for r in &other.rows {
            self.push(*r);
        }
    }

    pub fn stage_rows(&self, stage: StageTag) -> impl Iterator<Item = &HistoryRow> {
        self.rows.iter().filter(move |r| r.stage == stage)
    }

    pub fn repeated_count(&self) -> usize {
        self.rows.iter().filter(|r| r.repeated).count()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "iter,stage,omega1,omega2,vol,alpha,eta,beta,change,mult_flag").map_err(io)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:e},{:e},{:e},{:e},{},{},{:e},{}",
                r.iter,
                r.stage,
                r.omega1,
                r.omega2,
                r.volume,
                r.alpha,
                r.eta,
                r.beta,
                r.change,
                u8::from(r.repeated)
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Which optimization a run performs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RunMode {
    Multiclass,
    /// Fixed class everywhere; `None` sweeps all classes and keeps the best.
    Single(Option<ClassLabel>),
    Simp,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunMode::Multiclass => f.write_str("multiclass"),
            RunMode::Single(None) => f.write_str("single"),
            RunMode::Single(Some(c)) => write!(f, "single:{}", c.as_char()),
            RunMode::Simp => f.write_str("simp"),
        }
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiclass" => Ok(RunMode::Multiclass),
            "simp" => Ok(RunMode::Simp),
            "single" => Ok(RunMode::Single(None)),
            _ => match s.strip_prefix("single:") {
                Some(c) => Ok(RunMode::Single(Some(c.parse()?))),
                None => Err(Error::Invalid(format!(
                    "unknown mode `{s}` (expected multiclass, single, single:<class> or simp)"
                ))),
            },
        }
    }
}

impl From<RunMode> for String {
    fn from(m: RunMode) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for RunMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_numbering_is_contiguous() {
        let row = HistoryRow {
            iter: 99,
            stage: StageTag::Stage1,
            omega1: 1.0,
            omega2: 2.0,
            volume: 0.4,
            alpha: 1.0,
            eta: 0.0,
            beta: 0.0,
            change: 0.0,
            repeated: false,
        };
        let mut h = RunHistory::default();
        h.push(row);
        h.push(HistoryRow { repeated: true, ..row });
        let mut g = RunHistory::default();
        g.push(HistoryRow { stage: StageTag::Stage2, ..row });
        h.extend(&g);
        let iters: Vec<usize> = h.rows().iter().map(|r| r.iter).collect();
        assert_eq!(iters, [0, 1, 2]);
        assert_eq!(h.repeated_count(), 1);
        assert_eq!(h.stage_rows(StageTag::Stage2).count(), 1);
    }

    #[test]
    fn design_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = DesignField::uniform(3, 0.4, [0.1, -0.2], Some(ClassLabel::G));
        d.class[1] = None;
        d.rho_tilde[2] = 0.123456789012345;
        let path = dir.path().join("design.csv");
        d.write_csv(&path).unwrap();
        assert_eq!(DesignField::read_csv(&path).unwrap(), d);
    }

    #[test]
    fn mode_strings() {
        for s in ["multiclass", "simp", "single", "single:H"] {
            assert_eq!(s.parse::<RunMode>().unwrap().to_string(), s);
        }
        assert!("single:Q".parse::<RunMode>().is_err());
        assert!("both".parse::<RunMode>().is_err());
    }
}
