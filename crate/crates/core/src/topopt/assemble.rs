//! Full-structure raster from a class-labelled design.

use log::{info, warn};
use rayon::prelude::*;

use super::design::DesignField;
use crate::bitmap::Bitmap;
use crate::error::{Error, Result};
use crate::fem::Mesh;
use crate::lattice::{boundary_compatibility, Catalog, EdgeSide, VF_TOLERANCE};

/// Elements whose projected density falls below this are left empty.
pub const VOID_THRESHOLD: f64 = 0.06;

#[derive(Clone, Debug)]
pub struct AssembledStructure {
    pub bitmap: Bitmap,
    /// Elements whose class could not realize their density within the volume-fraction tolerance.
    pub clamped: usize,
    pub void_elements: usize,
    /// Mean and minimum edge compatibility over adjacent pairs where both cells carry material.
    pub compatibility_mean: f64,
    pub compatibility_min: f64,
}

/// Rasterize each element's class at its projected density and tile the
/// cells into one image, element (0, 0) at the lower left.
pub fn assemble_structure(mesh: &Mesh, design: &DesignField, catalog: &Catalog) -> Result<AssembledStructure> {
    let n = mesh.element_count();
    if design.len() != n {
        return Err(Error::Dimension(format!("design has {} elements, mesh has {n}", design.len())));
    }
    let res = catalog.class(crate::lattice::ClassLabel::A).resolution();
    let tiles: Vec<(Option<Bitmap>, bool)> = (0..n)
        .into_par_iter()
        .map(|e| -> Result<(Option<Bitmap>, bool)> {
            let rho = design.rho_tilde[e];
            if rho < VOID_THRESHOLD {
                return Ok((None, false));
            }
            let class = design.class[e].ok_or_else(|| Error::Invalid(format!("element {e} has no class")))?;
            let cell = catalog.class(class);
            let (width, vf) = cell.closest_width(rho);
            let clamped = (vf - rho).abs() > VF_TOLERANCE;
            if clamped {
                warn!("element {e}: class {class} cannot reach volume fraction {rho:.4}; using {vf:.4}");
            }
            Ok((Some(cell.rasterize(width)?), clamped))
        })
        .collect::<Result<_>>()?;

    let mut bitmap = Bitmap::new(mesh.nx * res, mesh.ny * res);
    for (e, (tile, _)) in tiles.iter().enumerate() {
        if let Some(t) = tile {
            bitmap.blit(t, (e % mesh.nx) * res, (e / mesh.nx) * res);
        }
    }

    let mut scores = Vec::new();
    for e in 0..n {
        let (ex, ey) = (e % mesh.nx, e / mesh.nx);
        let neighbours = [(ex + 1 < mesh.nx, e + 1, EdgeSide::Right), (ey + 1 < mesh.ny, e + mesh.nx, EdgeSide::Top)];
        for (exists, f, side) in neighbours {
            if let (true, Some(a), Some(b)) = (exists, &tiles[e].0, tiles.get(f).and_then(|t| t.0.as_ref())) {
                scores.push(boundary_compatibility(a, b, side)?);
            }
        }
    }
    let (mean, min) = if scores.is_empty() {
        (1.0, 1.0)
    } else {
        (scores.iter().sum::<f64>() / scores.len() as f64, scores.iter().copied().fold(1.0, f64::min))
    };
    let out = AssembledStructure {
        clamped: tiles.iter().filter(|t| t.1).count(),
        void_elements: tiles.iter().filter(|t| t.0.is_none()).count(),
        bitmap,
        compatibility_mean: mean,
        compatibility_min: min,
    };
    info!(
        "assembled {}×{} pixels: {} void cells, {} clamped, edge compatibility mean {:.3} min {:.3} over {} pairs",
        out.bitmap.width(),
        out.bitmap.height(),
        out.void_elements,
        out.clamped,
        mean,
        min,
        scores.len()
    );
    Ok(out)
}
