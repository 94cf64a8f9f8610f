//! Supports and concentrated masses.

use serde::{Deserialize, Serialize};

use super::mesh::Mesh;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryPreset {
    /// Every node on the left and right edges fixed in both directions.
    ClampedBothEnds,
    /// The mid-height node of the left and right edges fixed in both directions.
    PinnedBothEnds,
    /// Every node on the left edge fixed in both directions.
    CantileverLeft,
}

impl std::str::FromStr for BoundaryPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clamped-both-ends" => Ok(Self::ClampedBothEnds),
            "pinned-both-ends" => Ok(Self::PinnedBothEnds),
            "cantilever-left" => Ok(Self::CantileverLeft),
            other => Err(Error::Invalid(format!("unknown boundary preset `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointMass {
    pub node: usize,
    /// kg
    pub mass: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundarySpec {
    fixed: Vec<usize>,
    masses: Vec<PointMass>,
}

impl BoundarySpec {
    pub fn new(mesh: &Mesh, fixed_dofs: &[usize], masses: &[PointMass]) -> Result<Self> {
        let mut spec = Self::default();
        spec.fix_dofs(mesh, fixed_dofs)?;
        for m in masses {
            spec.add_point_mass(mesh, m.node, m.mass)?;
        }
        Ok(spec)
    }

    pub fn from_preset(mesh: &Mesh, preset: BoundaryPreset) -> Self {
        let (nx, ny) = (mesh.nx, mesh.ny);
        let mut nodes = Vec::new();
        match preset {
            BoundaryPreset::ClampedBothEnds => {
                for iy in 0..=ny {
                    nodes.push(mesh.node(0, iy));
                    nodes.push(mesh.node(nx, iy));
                }
            }
            BoundaryPreset::PinnedBothEnds => {
                let mid = ny / 2;
                nodes.push(mesh.node(0, mid));
                nodes.push(mesh.node(nx, mid));
            }
            BoundaryPreset::CantileverLeft => {
                for iy in 0..=ny {
                    nodes.push(mesh.node(0, iy));
                }
            }
        }
        let mut spec = Self::default();
        spec.fix_nodes(mesh, &nodes).expect("preset nodes lie in the mesh");
        spec
    }

    pub fn fix_dofs(&mut self, mesh: &Mesh, dofs: &[usize]) -> Result<()> {
        if let Some(&d) = dofs.iter().find(|&&d| d >= mesh.dof_count()) {
            return Err(Error::Invalid(format!("fixed DOF {d} outside mesh with {} DOFs", mesh.dof_count())));
        }
        self.fixed.extend_from_slice(dofs);
        self.fixed.sort_unstable();
        self.fixed.dedup();
        Ok(())
    }

    /// Fix both translations of each node.
    pub fn fix_nodes(&mut self, mesh: &Mesh, nodes: &[usize]) -> Result<()> {
        let dofs: Vec<usize> = nodes.iter().flat_map(|&n| [2 * n, 2 * n + 1]).collect();
        self.fix_dofs(mesh, &dofs)
    }

    pub fn add_point_mass(&mut self, mesh: &Mesh, node: usize, mass: f64) -> Result<()> {
        if node >= mesh.node_count() {
            return Err(Error::Invalid(format!("point mass node {node} outside mesh")));
        }
        if !(mass >= 0.0 && mass.is_finite()) {
            return Err(Error::Invalid(format!("point mass must be non-negative, got {mass}")));
        }
        self.masses.push(PointMass { node, mass });
        Ok(())
    }

    pub fn fixed_dofs(&self) -> &[usize] {
        &self.fixed
    }

    pub fn point_masses(&self) -> &[PointMass] {
        &self.masses
    }

    pub fn total_point_mass(&self) -> f64 {
        self.masses.iter().map(|m| m.mass).sum()
    }

    /// Mirror image across the vertical mid-line of the mesh.
    pub fn is_mirror_symmetric(&self, mesh: &Mesh) -> bool {
        let mirror_node = |n: usize| {
            let (ix, iy) = (n % (mesh.nx + 1), n / (mesh.nx + 1));
            mesh.node(mesh.nx - ix, iy)
        };
        let mut fixed: Vec<usize> = self.fixed.iter().map(|&d| 2 * mirror_node(d / 2) + d % 2).collect();
        fixed.sort_unstable();
        let mut masses: Vec<(usize, u64)> = self.masses.iter().map(|m| (m.node, m.mass.to_bits())).collect();
        let mut mirrored: Vec<(usize, u64)> = self.masses.iter().map(|m| (mirror_node(m.node), m.mass.to_bits())).collect();
        masses.sort_unstable();
        mirrored.sort_unstable();
        fixed == self.fixed && masses == mirrored
    }
}

/// Map between all mesh DOFs and the unconstrained ones.
#[derive(Clone, Debug)]
pub struct DofMap {
    full_to_free: Vec<Option<usize>>,
    free_to_full: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh, bcs: &BoundarySpec) -> Self {
        let mut full_to_free = vec![None; mesh.dof_count()];
        let mut free_to_full = Vec::with_capacity(mesh.dof_count());
        let mut fixed = bcs.fixed_dofs().iter().peekable();
        for (d, slot) in full_to_free.iter_mut().enumerate() {
            if fixed.peek() == Some(&&d) {
                fixed.next();
                continue;
            }
            *slot = Some(free_to_full.len());
            free_to_full.push(d);
        }
        Self {
            full_to_free,
            free_to_full,
        }
    }

    pub fn free_count(&self) -> usize {
        self.free_to_full.len()
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.full_to_free[dof]
    }

    /// Scatter a free-DOF vector into a full vector with zeros at fixed DOFs.
    pub fn expand(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.full_to_free.len()];
        for (i, &d) in self.free_to_full.iter().enumerate() {
            full[d] = free[i];
        }
        full
    }
}
