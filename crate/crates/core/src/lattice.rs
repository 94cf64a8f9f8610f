//! Parameterized lattice unit cells: the ten-class catalog, periodic
//! rasterization, volume-fraction inversion and edge-compatibility audits.
//!
//! Every class is a set of straight rods in the unit square. A pixel is solid
//! when its center lies within half the rod width of some rod, measured on the
//! torus so that rods leaving one edge re-enter on the opposite one. Sets of
//! pixels that sit at exactly the same distance from the rods (a whole pixel row
//! along an axis-aligned bar, for instance) would otherwise switch on all at
//! once; instead each such level set is spread over the width interval it
//! represents and switched on in symmetry orbits. This keeps the solid fraction
//! a fine-grained, monotone function of the width while preserving the mirror
//! symmetries of the class exactly.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bitmap::Bitmap;
use crate::error::{Error, Result};

/// Pixels per unit-cell edge.
pub const CELL_RESOLUTION: usize = 200;

/// Tolerance of [`LatticeClass::solve_width_for_vf`] on the volume fraction.
pub const VF_TOLERANCE: f64 = 1e-3;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
    J,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 10] = [
        ClassLabel::A,
        ClassLabel::B,
        ClassLabel::C,
        ClassLabel::D,
        ClassLabel::E,
        ClassLabel::F,
        ClassLabel::G,
        ClassLabel::H,
        ClassLabel::I,
        ClassLabel::J,
    ];

    pub const COUNT: usize = 10;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }

    /// Classes G and H are the only ones without two perpendicular mirror planes.
    pub fn is_orthotropic(self) -> bool {
        !matches!(self, ClassLabel::G | ClassLabel::H)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.trim().chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if c.is_ascii_alphabetic() => {
                let idx = (c.to_ascii_uppercase() as u8).wrapping_sub(b'A') as usize;
                Self::from_index(idx).ok_or_else(|| Error::UnknownClass(s.to_string()))
            }
            _ => Err(Error::UnknownClass(s.to_string())),
        }
    }
}

/// A straight rod in unit-cell coordinates; its width is `width_share` times
/// the class width parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct RodSegment {
    pub p0: [f64; 2],
    pub p1: [f64; 2],
    pub width_share: f64,
}

impl RodSegment {
    fn new(p0: [f64; 2], p1: [f64; 2]) -> Self {
        Self {
            p0,
            p1,
            width_share: 1.0,
        }
    }
}

fn rods_for(label: ClassLabel) -> Vec<RodSegment> {
    let h = |y: f64| RodSegment::new([0.0, y], [1.0, y]);
    let v = |x: f64| RodSegment::new([x, 0.0], [x, 1.0]);
    let diag = || RodSegment::new([0.0, 0.0], [1.0, 1.0]);
    let anti = || RodSegment::new([1.0, 0.0], [0.0, 1.0]);
    let cross = || vec![h(0.5), v(0.5)];
    let x_diagonals = || vec![diag(), anti()];
    match label {
        ClassLabel::A => cross(),
        ClassLabel::B => x_diagonals(),
        ClassLabel::C => vec![h(0.0), v(0.0)],
        ClassLabel::D => [cross(), vec![h(0.25), h(0.75)]].concat(),
        ClassLabel::E => [cross(), vec![v(0.25), v(0.75)]].concat(),
        ClassLabel::F => [cross(), x_diagonals()].concat(),
        ClassLabel::G => [cross(), vec![diag()]].concat(),
        ClassLabel::H => [cross(), vec![anti()]].concat(),
        ClassLabel::I => [x_diagonals(), vec![h(0.0), v(0.0)]].concat(),
        ClassLabel::J => [x_diagonals(), vec![h(0.5)]].concat(),
    }
}

/// One lattice class together with its precomputed fill order.
#[derive(Clone, Debug)]
pub struct LatticeClass {
    label: ClassLabel,
    rods: Vec<RodSegment>,
    resolution: usize,
    /// Pixel indices sorted by effective distance.
    order: Vec<u32>,
    /// Effective distance (cell units) of each entry of `order`; non-decreasing.
    thresholds: Vec<f64>,
    min_width: f64,
    max_width: f64,
}

impl LatticeClass {
    pub fn new(label: ClassLabel) -> Self {
        Self::with_resolution(label, CELL_RESOLUTION)
    }

    /// Build the class at an arbitrary even resolution (used for coarse checks).
    pub fn with_resolution(label: ClassLabel, resolution: usize) -> Self {
        assert!(resolution >= 4 && resolution.is_multiple_of(2), "resolution must be even and >= 4");
        let rods = rods_for(label);
        let n = resolution;
        // Work in half-pixel units: pixel centers sit on odd integers and the
        // rod endpoints (multiples of 1/4 cell) on integers, so the squared
        // distances below are exact ratios of integers.
        let scale = 2.0 * n as f64;
        let period = scale;
        let scaled: Vec<([f64; 2], [f64; 2], f64)> = rods
            .iter()
            .map(|r| {
                (
                    [r.p0[0] * scale, r.p0[1] * scale],
                    [r.p1[0] * scale, r.p1[1] * scale],
                    r.width_share,
                )
            })
            .collect();

        let mut dist2 = vec![f64::INFINITY; n * n];
        for iy in 0..n {
            let py = (2 * iy + 1) as f64;
            for ix in 0..n {
                let px = (2 * ix + 1) as f64;
                let mut best = f64::INFINITY;
                for &(a, b, share) in &scaled {
                    for sy in [-period, 0.0, period] {
                        for sx in [-period, 0.0, period] {
                            let d = segment_dist2([px - sx, py - sy], a, b) / (share * share);
                            if d < best {
                                best = d;
                            }
                        }
                    }
                }
                dist2[iy * n + ix] = best;
            }
        }

        // Orbit key shared by a pixel and its mirror images.
        let orbit_key = |idx: usize| -> u64 {
            let (ix, iy) = (idx % n, idx / n);
            let cx = ix.min(n - 1 - ix) as u64;
            let cy = iy.min(n - 1 - iy) as u64;
            let canonical = cy * (n as u64 / 2) + cx;
            let m = (n as u64 / 2) * (n as u64 / 2);
            (canonical * 7919) % m
        };

        let mut order: Vec<u32> = (0..(n * n) as u32).collect();
        order.sort_by(|&p, &q| {
            let (p, q) = (p as usize, q as usize);
            dist2[p]
                .total_cmp(&dist2[q])
                .then(orbit_key(p).cmp(&orbit_key(q)))
                .then(p.cmp(&q))
        });

        // Distinct exact distances, in cell units.
        let to_cell = |d2: f64| d2.sqrt() / scale;
        let mut levels: Vec<(usize, usize)> = Vec::new(); // [start, end) in `order`
        let mut start = 0;
        for i in 1..=order.len() {
            if i == order.len() || dist2[order[i] as usize] != dist2[order[start] as usize] {
                levels.push((start, i));
                start = i;
            }
        }
        let level_d: Vec<f64> = levels
            .iter()
            .map(|&(s, _)| to_cell(dist2[order[s] as usize]))
            .collect();

        let mut thresholds = vec![0.0; order.len()];
        for (j, &(s, e)) in levels.iter().enumerate() {
            let d = level_d[j];
            let lower = if j == 0 {
                match level_d.get(1) {
                    Some(&next) => (1.5 * d - 0.5 * next).max(0.0),
                    None => d,
                }
            } else {
                0.5 * (level_d[j - 1] + d)
            };
            let upper = if j + 1 < level_d.len() {
                0.5 * (d + level_d[j + 1])
            } else {
                d
            };
            // orbits within the level, in key order
            let mut orbits: Vec<(usize, usize)> = Vec::new();
            let mut os = s;
            for i in s + 1..=e {
                if i == e || orbit_key(order[i] as usize) != orbit_key(order[os] as usize) {
                    orbits.push((os, i));
                    os = i;
                }
            }
            let m = orbits.len() as f64;
            for (k, &(a, b)) in orbits.iter().enumerate() {
                let t = if j + 1 == level_d.len() {
                    d
                } else {
                    lower + (k + 1) as f64 / m * (upper - lower)
                };
                thresholds[a..b].iter_mut().for_each(|v| *v = t);
            }
        }

        let max_width = 2.0 * thresholds.last().copied().unwrap_or(0.0);
        let min_width = 3.0 / n as f64;
        Self {
            label,
            rods,
            resolution: n,
            order,
            thresholds,
            min_width,
            max_width,
        }
    }

    pub fn label(&self) -> ClassLabel {
        self.label
    }

    pub fn rods(&self) -> &[RodSegment] {
        &self.rods
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    /// Feasible width interval `[a_min, a_max]` in cell lengths. `a_max` is the
    /// smallest width that saturates the cell.
    pub fn width_range(&self) -> (f64, f64) {
        (self.min_width, self.max_width)
    }

    /// Achievable volume fractions `[vf(a_min), 1]`.
    pub fn fraction_range(&self) -> (f64, f64) {
        (self.count_fraction(self.min_width), 1.0)
    }

    fn check_width(&self, width: f64) -> Result<()> {
        if !(width >= self.min_width && width <= self.max_width) {
            return Err(Error::WidthOutOfRange {
                class: self.label.as_char(),
                width,
                min: self.min_width,
                max: self.max_width,
            });
        }
        Ok(())
    }

    fn solid_count(&self, width: f64) -> usize {
        let half = 0.5 * width;
        self.thresholds.partition_point(|&t| t <= half)
    }

    fn count_fraction(&self, width: f64) -> f64 {
        self.solid_count(width) as f64 / self.order.len() as f64
    }

    /// Solid fraction of the rasterized cell at the given width.
    pub fn fraction_at(&self, width: f64) -> Result<f64> {
        self.check_width(width)?;
        Ok(self.count_fraction(width))
    }

    pub fn rasterize(&self, width: f64) -> Result<Bitmap> {
        self.check_width(width)?;
        let n = self.resolution;
        let mut bmp = Bitmap::new(n, n);
        for &p in &self.order[..self.solid_count(width)] {
            let p = p as usize;
            bmp.set(p % n, p / n, true);
        }
        Ok(bmp)
    }

    /// Bisection on the rasterized volume fraction.
    pub fn solve_width_for_vf(&self, target: f64) -> Result<f64> {
        let (vf_min, vf_max) = self.fraction_range();
        let unachievable = || Error::UnachievableFraction {
            class: self.label.as_char(),
            target,
            min: vf_min,
            max: vf_max,
        };
        if !target.is_finite() || target < vf_min - VF_TOLERANCE || target > vf_max + VF_TOLERANCE {
            return Err(unachievable());
        }
        let (width, vf) = self.closest_width(target);
        if (vf - target).abs() <= VF_TOLERANCE {
            Ok(width)
        } else {
            Err(unachievable())
        }
    }

    /// Width whose rasterized fraction is closest to `target` among the
    /// bisection probes, with that fraction. Never fails; targets outside the
    /// achievable range land on the nearer end.
    pub fn closest_width(&self, target: f64) -> (f64, f64) {
        let (vf_min, vf_max) = self.fraction_range();
        if target <= vf_min + VF_TOLERANCE {
            return (self.min_width, vf_min);
        }
        if target >= vf_max - VF_TOLERANCE {
            return (self.max_width, vf_max);
        }
        let pixel = 1.0 / self.order.len() as f64;
        let (mut lo, mut hi) = (self.min_width, self.max_width);
        let mut best = (f64::INFINITY, lo, vf_min);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let vf = self.count_fraction(mid);
            let err = (vf - target).abs();
            if err < best.0 {
                best = (err, mid, vf);
            }
            if err <= 0.5 * pixel || hi - lo < 1e-15 {
                break;
            }
            if vf < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (best.1, best.2)
    }

    /// Rasterize at the width that realizes `target`.
    pub fn microstructure(&self, target: f64) -> Result<Microstructure> {
        let width = self.solve_width_for_vf(target)?;
        let bitmap = self.rasterize(width)?;
        Ok(Microstructure {
            class: self.label,
            width,
            volume_fraction: bitmap.solid_fraction(),
            bitmap,
        })
    }
}

/// Squared distance from `p` to segment `[a, b]`.
fn segment_dist2(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = ap[0] * d[0] + ap[1] * d[1];
    if t <= 0.0 {
        ap[0] * ap[0] + ap[1] * ap[1]
    } else if t >= len2 {
        let bp = [p[0] - b[0], p[1] - b[1]];
        bp[0] * bp[0] + bp[1] * bp[1]
    } else {
        let cross = ap[0] * d[1] - ap[1] * d[0];
        cross * cross / len2
    }
}

/// A realized unit cell.
#[derive(Clone, Debug)]
pub struct Microstructure {
    pub class: ClassLabel,
    pub width: f64,
    pub volume_fraction: f64,
    pub bitmap: Bitmap,
}

/// Cell edge shared by two neighboring microstructures, seen from the first.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum EdgeSide {
    Left,
    Right,
    Bottom,
    Top,
}

fn edge_pixels(bmp: &Bitmap, side: EdgeSide) -> Vec<bool> {
    let (w, h) = (bmp.width(), bmp.height());
    match side {
        EdgeSide::Left => (0..h).map(|y| bmp.get(0, y)).collect(),
        EdgeSide::Right => (0..h).map(|y| bmp.get(w - 1, y)).collect(),
        EdgeSide::Bottom => (0..w).map(|x| bmp.get(x, 0)).collect(),
        EdgeSide::Top => (0..w).map(|x| bmp.get(x, h - 1)).collect(),
    }
}

/// Overlap between the solid pixels on `side` of `first` and the facing edge of
/// `second`, normalized by the smaller of the two solid edge sets. Returns 0
/// when either edge carries no material.
pub fn boundary_compatibility(first: &Bitmap, second: &Bitmap, side: EdgeSide) -> Result<f64> {
    let opposite = match side {
        EdgeSide::Left => EdgeSide::Right,
        EdgeSide::Right => EdgeSide::Left,
        EdgeSide::Bottom => EdgeSide::Top,
        EdgeSide::Top => EdgeSide::Bottom,
    };
    let a = edge_pixels(first, side);
    let b = edge_pixels(second, opposite);
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "edge lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().filter(|&&s| s).count();
    let nb = b.iter().filter(|&&s| s).count();
    let both = a.iter().zip(&b).filter(|(&x, &y)| x && y).count();
    let denom = na.min(nb);
    Ok(if denom == 0 {
        0.0
    } else {
        both as f64 / denom as f64
    })
}

/// The full ten-class catalog.
#[derive(Clone, Debug)]
pub struct Catalog {
    classes: Vec<LatticeClass>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::with_resolution(CELL_RESOLUTION)
    }

    pub fn with_resolution(resolution: usize) -> Self {
        Self {
            classes: ClassLabel::ALL
                .iter()
                .map(|&l| LatticeClass::with_resolution(l, resolution))
                .collect(),
        }
    }

    pub fn class(&self, label: ClassLabel) -> &LatticeClass {
        &self.classes[label.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &LatticeClass> {
        self.classes.iter()
    }
}

impl Default for Catalog {
    fn default() -> Self {
        Self::new()
    }
}
