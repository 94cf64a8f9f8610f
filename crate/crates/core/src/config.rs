//! JSON problem configuration.

use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{BoundaryPreset, BoundarySpec, Mesh};
use crate::stiffness::BaseMaterial;
use crate::topopt::{IterationLimits, Problem, Schedule};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<BoundaryPreset>,
    /// Nodes fixed in both directions, in addition to the preset.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed_nodes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fixed_dofs: Vec<usize>,
}

/// Concentrated mass at a physical location (m), attached to the nearest node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassConfig {
    pub x: f64,
    pub y: f64,
    /// kg
    pub mass: f64,
}

fn default_filter_radius() -> f64 {
    crate::topopt::design::DEFAULT_FILTER_RADIUS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub mesh: Mesh,
    #[serde(default)]
    pub material: BaseMaterial,
    pub boundary: BoundaryConfig,
    #[serde(default)]
    pub point_masses: Vec<MassConfig>,
    pub target_volume: f64,
    #[serde(default)]
    pub limits: IterationLimits,
    #[serde(default = "default_filter_radius")]
    pub filter_radius: f64,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub seed: u64,
}

impl ProblemConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.to_problem().map(|_| ())
    }

    /// Resolve masses to nodes and build the problem.
    pub fn to_problem(&self) -> Result<Problem> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "config schema version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mesh = Mesh::new(self.mesh.nx, self.mesh.ny, self.mesh.lx, self.mesh.ly)?;
        let mut bcs = match self.boundary.preset {
            Some(p) => BoundarySpec::from_preset(&mesh, p),
            None => BoundarySpec::default(),
        };
        bcs.fix_nodes(&mesh, &self.boundary.fixed_nodes)?;
        bcs.fix_dofs(&mesh, &self.boundary.fixed_dofs)?;
        if bcs.fixed_dofs().is_empty() {
            return Err(Error::Invalid("no supports: give a boundary preset or fixed nodes".into()));
        }
        for m in &self.point_masses {
            if !(m.mass >= 0.0 && m.mass.is_finite()) {
                return Err(Error::Invalid(format!("point mass {} kg must be finite and non-negative", m.mass)));
            }
            let node = mesh.nearest_node(m.x, m.y)?;
            let [nx, ny] = mesh.node_position(node);
            info!("mass {} kg at ({}, {}) attached to node {node} at ({nx}, {ny})", m.mass, m.x, m.y);
            bcs.add_point_mass(&mesh, node, m.mass)?;
        }
        let mut p = Problem::new(mesh, self.material, bcs, self.target_volume)?;
        if !(self.target_volume < 1.0) {
            return Err(Error::Invalid(format!("target volume {} must be below 1", self.target_volume)));
        }
        p.limits = self.limits;
        p.filter_radius = self.filter_radius;
        p.schedule = self.schedule.clone();
        p.validate()?;
        Ok(p)
    }
}
