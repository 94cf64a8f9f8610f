//! Microstructure library: per-class volume-fraction sweeps, their homogenized
//! stiffness, a seeded train/test split and CSV/PGM persistence.

use std::fs;
use std::path::Path;

use log::{info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homogenization::{Homogenizer, DEFAULT_VOID_RATIO};
use crate::lattice::{Catalog, ClassLabel, Microstructure, CELL_RESOLUTION};
use crate::stiffness::{BaseMaterial, StiffnessTensor, ENTRY_NAMES};

pub const CSV_HEADER: [&str; 9] = ["class", "a", "vf", "C11", "C12", "C13", "C22", "C23", "C33"];
pub const MIN_SAMPLES_PER_CLASS: usize = 40;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LibraryConfig {
    pub samples_per_class: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub resolution: usize,
    pub void_ratio: f64,
    pub material: BaseMaterial,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self {
            samples_per_class: 80,
            seed: 2024,
            test_fraction: 0.2,
            resolution: CELL_RESOLUTION,
            void_ratio: DEFAULT_VOID_RATIO,
            material: BaseMaterial::default(),
        }
    }
}

impl LibraryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_class < MIN_SAMPLES_PER_CLASS {
            return Err(Error::Invalid(format!(
                "samples_per_class {} below {MIN_SAMPLES_PER_CLASS}",
                self.samples_per_class
            )));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Invalid(format!("test_fraction {} outside (0, 1)", self.test_fraction)));
        }
        self.material.validate()
    }
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count)
            .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
            .collect(),
    }
}

/// Geometry of every library sample, grouped by class in catalog order.
pub fn sample_library(config: &LibraryConfig, catalog: &Catalog) -> Result<Vec<Microstructure>> {
    config.validate()?;
    let jobs: Vec<(ClassLabel, f64)> = catalog
        .iter()
        .flat_map(|class| {
            let (lo, hi) = class.fraction_range();
            uniform_grid(lo, hi, config.samples_per_class)
                .into_iter()
                .map(move |t| (class.label(), t))
        })
        .collect();
    let realized: Vec<Option<Microstructure>> = jobs
        .par_iter()
        .map(|&(label, target)| match catalog.class(label).microstructure(target) {
            Ok(m) => Some(m),
            Err(e) => {
                warn!("skipping class {label} at vf {target:.4}: {e}");
                None
            }
        })
        .collect();
    Ok(realized.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryRecord {
    pub class: ClassLabel,
    pub width: f64,
    pub volume_fraction: f64,
    /// Normalized by the base Young's modulus.
    pub stiffness: StiffnessTensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LibraryDataset {
    pub records: Vec<LibraryRecord>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl LibraryDataset {
    /// Attach a seeded split holding out `round(test_fraction · n)` records.
    pub fn with_split(records: Vec<LibraryRecord>, seed: u64, test_fraction: f64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Invalid("library has no records".into()));
        }
        let n = records.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_test = ((test_fraction * n as f64).round() as usize).min(n - 1);
        let mut test = idx[..n_test].to_vec();
        let mut train = idx[n_test..].to_vec();
        test.sort_unstable();
        train.sort_unstable();
        Ok(Self {
            records,
            train,
            test,
        })
    }

    pub fn train_records(&self) -> Vec<LibraryRecord> {
        self.train.iter().map(|&i| self.records[i].clone()).collect()
    }

    pub fn test_records(&self) -> Vec<LibraryRecord> {
        self.test.iter().map(|&i| self.records[i].clone()).collect()
    }

    pub fn class_records(&self, class: ClassLabel) -> Vec<&LibraryRecord> {
        self.records.iter().filter(|r| r.class == class).collect()
    }
}

/// Homogenize every sample and attach the seeded split.
pub fn generate_library(config: &LibraryConfig, catalog: &Catalog) -> Result<(LibraryDataset, Vec<Microstructure>)> {
    let samples = sample_library(config, catalog)?;
    let homogenizer = Homogenizer::new(config.resolution, config.material.poisson_ratio, config.void_ratio)?;
    info!("homogenizing {} library cells", samples.len());
    let stiffness: Vec<Result<StiffnessTensor>> = samples
        .par_iter()
        .map(|m| homogenizer.homogenize_normalized(&m.bitmap))
        .collect();
    let mut records = Vec::with_capacity(samples.len());
    for (m, c) in samples.iter().zip(stiffness) {
        records.push(LibraryRecord {
            class: m.class,
            width: m.width,
            volume_fraction: m.volume_fraction,
            stiffness: c?,
        });
    }
    Ok((LibraryDataset::with_split(records, config.seed, config.test_fraction)?, samples))
}

pub fn write_records_csv(path: impl AsRef<Path>, records: &[LibraryRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        let mut row = vec![r.class.to_string(), r.width.to_string(), r.volume_fraction.to_string()];
        row.extend(r.stiffness.entries().iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_records_csv(path: impl AsRef<Path>) -> Result<Vec<LibraryRecord>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path)?;
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(CSV_HEADER.iter().copied()) {
        return Err(Error::Invalid(format!(
            "{}: expected header {}, found {}",
            path.display(),
            CSV_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::Invalid(format!("{}: row {}: bad {} value", path.display(), line + 2, CSV_HEADER[i]))
                })
        };
        let class: ClassLabel = row.get(0).unwrap_or("").parse()?;
        let entries = [num(3)?, num(4)?, num(5)?, num(6)?, num(7)?, num(8)?];
        out.push(LibraryRecord {
            class,
            width: num(1)?,
            volume_fraction: num(2)?,
            stiffness: StiffnessTensor::from_entries(entries),
        });
    }
    if out.is_empty() {
        return Err(Error::Invalid(format!("{}: no records", path.display())));
    }
    Ok(out)
}

/// Write `library.csv` and, when given, `bitmaps/<class>_<index>.pgm` with the
/// index counting samples within each class.
pub fn write_library(dir: impl AsRef<Path>, dataset: &LibraryDataset, samples: Option<&[Microstructure]>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_records_csv(dir.join("library.csv"), &dataset.records)?;
    if let Some(samples) = samples {
        let bdir = dir.join("bitmaps");
        fs::create_dir_all(&bdir).map_err(|e| Error::io(&bdir, e))?;
        let mut counters = [0usize; ClassLabel::COUNT];
        for m in samples {
            let k = &mut counters[m.class.index()];
            m.bitmap.write_pgm(bdir.join(format!("{}_{:03}.pgm", m.class, *k)))?;
            *k += 1;
        }
    }
    Ok(())
}

/// Pretty-printed summary of the library entry ranges, for logs.
pub fn describe(dataset: &LibraryDataset) -> String {
    let mut s = format!(
        "{} records ({} train / {} test)",
        dataset.records.len(),
        dataset.train.len(),
        dataset.test.len()
    );
    for (i, name) in ENTRY_NAMES.iter().enumerate() {
        let (lo, hi) = dataset.records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            let v = r.stiffness.entries()[i];
            (lo.min(v), hi.max(v))
        });
        s.push_str(&format!("; {name} [{lo:.4}, {hi:.4}]"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_uniform_and_inclusive() {
        let g = uniform_grid(0.1, 1.0, 10);
        for (k, v) in g.iter().enumerate() {
            assert!((v - 0.1 * (k + 1) as f64).abs() < 1e-12);
        }
        assert_eq!(uniform_grid(0.3, 0.5, 1), vec![0.3]);
    }

    fn toy_records(n: usize) -> Vec<LibraryRecord> {
        (0..n)
            .map(|i| LibraryRecord {
                class: ClassLabel::from_index(i % 10).unwrap(),
                width: 0.01 * i as f64,
                volume_fraction: (i as f64 + 1.0) / (n as f64 + 1.0),
                stiffness: StiffnessTensor::from_entries([i as f64, 0.1, 0.0, 0.2, 0.0, 0.3]),
            })
            .collect()
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let a = LibraryDataset::with_split(toy_records(800), 7, 0.2).unwrap();
        let b = LibraryDataset::with_split(toy_records(800), 7, 0.2).unwrap();
        let c = LibraryDataset::with_split(toy_records(800), 8, 0.2).unwrap();
        assert_eq!(a.test.len(), 160);
        assert_eq!(a, b);
        assert_ne!(a.test, c.test);
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        all.sort_unstable();
        assert!(all.iter().enumerate().all(|(i, &v)| i == v));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.csv");
        let recs = toy_records(12);
        write_records_csv(&path, &recs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("class,a,vf,C11,C12,C13,C22,C23,C33\n"));
        assert_eq!(read_records_csv(&path).unwrap(), recs);
    }

    #[test]
    fn empty_or_malformed_csv_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.csv");
        fs::write(&empty, "class,a,vf,C11,C12,C13,C22,C23,C33\n").unwrap();
        assert!(read_records_csv(&empty).is_err());
        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "class,a,vf\nA,0.1,0.2\n").unwrap();
        assert!(read_records_csv(&bad).is_err());
    }

    #[test]
    fn small_config_is_rejected() {
        let cfg = LibraryConfig {
            samples_per_class: 10,
            ..Default::default()
        };
        assert!(sample_library(&cfg, &Catalog::with_resolution(20)).is_err());
    }
}
