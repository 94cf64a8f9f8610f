//! Uniform rectangular mesh of four-node elements.
//!
//! Nodes are numbered row by row from the lower-left corner:
//! node `(ix, iy)` has id `iy * (nx + 1) + ix`. Elements follow the same
//! pattern, element `(ex, ey)` has id `ey * nx + ex`. Node `n` owns global
//! DOFs `2n` (x) and `2n + 1` (y).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub nx: usize,
    pub ny: usize,
    /// Domain width (m).
    pub lx: f64,
    /// Domain height (m).
    pub ly: f64,
}

impl Mesh {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Invalid(format!("mesh needs at least one element per direction, got {nx}×{ny}")));
        }
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::Invalid(format!("domain size must be positive, got {lx}×{ly}")));
        }
        Ok(Self { nx, ny, lx, ly })
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node_count(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn dof_count(&self) -> usize {
        2 * self.node_count()
    }

    pub fn node(&self, ix: usize, iy: usize) -> usize {
        iy * (self.nx + 1) + ix
    }

    pub fn node_position(&self, node: usize) -> [f64; 2] {
        let (ix, iy) = (node % (self.nx + 1), node / (self.nx + 1));
        [ix as f64 * self.dx(), iy as f64 * self.dy()]
    }

    /// Corner nodes counter-clockwise from the lower-left.
    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (ex, ey) = (e % self.nx, e / self.nx);
        [self.node(ex, ey), self.node(ex + 1, ey), self.node(ex + 1, ey + 1), self.node(ex, ey + 1)]
    }

    pub fn element_dofs(&self, e: usize) -> [usize; 8] {
        let n = self.element_nodes(e);
        std::array::from_fn(|k| 2 * n[k / 2] + k % 2)
    }

    pub fn element_center(&self, e: usize) -> [f64; 2] {
        let (ex, ey) = (e % self.nx, e / self.nx);
        [(ex as f64 + 0.5) * self.dx(), (ey as f64 + 0.5) * self.dy()]
    }

    /// Element reflected across the vertical mid-line.
    pub fn mirror_element(&self, e: usize) -> usize {
        let (ex, ey) = (e % self.nx, e / self.nx);
        ey * self.nx + (self.nx - 1 - ex)
    }

    /// Node closest to `(x, y)`; ties go to the lower node id.
    pub fn nearest_node(&self, x: f64, y: f64) -> Result<usize> {
        let eps = 1e-9 * self.lx.max(self.ly);
        if !(x >= -eps && x <= self.lx + eps && y >= -eps && y <= self.ly + eps) {
            return Err(Error::Invalid(format!(
                "point ({x}, {y}) lies outside the {}×{} domain",
                self.lx, self.ly
            )));
        }
        let snap = |v: f64, h: f64, n: usize| {
            let t = v / h;
            // round half down so ties pick the lower index
            let k = (t - 0.5).ceil().max(0.0) as usize;
            k.min(n)
        };
        Ok(self.node(snap(x, self.dx(), self.nx), snap(y, self.dy(), self.ny)))
    }
}
