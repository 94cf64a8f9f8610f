//! Eigenfrequency maximization with per-element volume fraction and class.
//!
//! Stage 1 optimizes density and latent coordinates together under a penalty
//! that pulls latent points toward trained classes. Latent coordinates are then
//! snapped to the nearest class and stage 2 refines the densities under a
//! projection continuation. Single-class and SIMP baselines share the stage-2
//! loop.

pub mod assemble;
pub mod design;
pub mod filter;
pub mod penalty;
pub mod projection;
pub mod report;
pub mod response;
pub mod stages;

pub use assemble::{assemble_structure, AssembledStructure};
pub use design::{DesignField, HistoryRow, IterationLimits, Problem, RunHistory, RunMode, StageTag};
pub use filter::ConeFilter;
pub use projection::{Phase, Projection, Schedule};
pub use report::{write_run, Comparison, RunSummary};
pub use response::{analyze, analyze_with, sensitivities, FrequencyAnalysis, LatentPenalty, MaterialModel, Sensitivities};
pub use stages::{project_to_classes, threshold_design, Optimizer, RunResult, StageOutcome};
