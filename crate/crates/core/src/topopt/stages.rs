//! Optimization stages and baselines.

use std::cell::Cell;
use std::path::PathBuf;

use log::{debug, info, warn};

use super::design::*;
use super::filter::ConeFilter;
use super::penalty::decayed_width;
use super::projection::Projection;
use super::response::{analyze_with, sensitivities, ElementResponse, FrequencyAnalysis, LatentPenalty, MaterialModel};
use crate::error::{Error, Result};
use crate::fem::eigen::EigenOptions;
use crate::fem::{write_matrix_market, Assembler, ElementState};
use crate::lattice::ClassLabel;
use crate::lvgp::{LatentMap, LatentPoint, TrainedSurrogate};
use crate::mma::{Mma, MmaSettings};

/// Stiffness and mass fraction given to void elements of a thresholded design.
/// Ill-conditioned near-void designs can stall the eigensolver above its
/// default bound; frequencies are still accurate to far better than the
/// optimizer needs.
pub const STALLED_RESIDUAL: f64 = 1e-6;

pub const VOID_FRACTION: f64 = 1e-9;

/// Result of one stage or one complete run.
#[derive(Clone, Debug)]
pub struct StageOutcome {
    pub design: DesignField,
    pub history: RunHistory,
    /// Analysis of the returned design.
    pub analysis: FrequencyAnalysis,
}

impl StageOutcome {
    pub fn omega1(&self) -> f64 {
        self.analysis.omega1()
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub mode: RunMode,
    pub design: DesignField,
    pub history: RunHistory,
    pub omega1: f64,
    pub omega2: f64,
    /// First frequency at the end of stage 1 and at the start of stage 2 (multiclass only).
    pub stage_boundary: Option<(f64, f64)>,
    /// Final first frequency per class when sweeping single-class designs.
    pub sweep: Vec<(ClassLabel, f64)>,
}

/// Owns the precomputed assembly and filter for one problem.
pub struct Optimizer<'a> {
    problem: &'a Problem,
    assembler: Assembler,
    filter: ConeFilter,
    /// Where to write the failing design if an analysis breaks down mid-run.
    pub dump_dir: Option<PathBuf>,
    /// Directory for `K.mtx` and `M.mtx` of the first analyzed design.
    pub matrix_dump: Option<PathBuf>,
    pub eigen: EigenOptions,
    dumped: Cell<bool>,
}

fn normalized_change(old: &[f64], new: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    (0..old.len())
        .map(|i| (new[i] - old[i]).abs() / (hi[i] - lo[i]))
        .fold(0.0, f64::max)
}

/// Two-sided volume constraint `|v − V*| ≤ tol`, scaled by `1/V*`.
fn volume_constraints(volume: f64, target: f64) -> [f64; 2] {
    [
        (volume - target - VOLUME_TOLERANCE) / target,
        (target - VOLUME_TOLERANCE - volume) / target,
    ]
}

/// Snap each element's latent coordinates to the nearest class point.
pub fn project_to_classes(design: &DesignField, latent: &LatentMap) -> DesignField {
    let mut out = design.clone();
    for e in 0..out.len() {
        let c = latent.nearest(out.z[e]);
        out.z[e] = latent.point(c);
        out.class[e] = Some(c);
    }
    out
}

/// Mark the `round(V*·N)` densest elements solid and the rest void; ties go
/// to the lower element index.
pub fn threshold_design(rho_tilde: &[f64], target: f64) -> Vec<bool> {
    let n = rho_tilde.len();
    let count = ((target * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rho_tilde[b].total_cmp(&rho_tilde[a]).then(a.cmp(&b)));
    let mut solid = vec![false; n];
    for &e in &order[..count] {
        solid[e] = true;
    }
    solid
}

impl<'a> Optimizer<'a> {
    pub fn new(problem: &'a Problem) -> Result<Self> {
        problem.validate()?;
        Ok(Self {
            problem,
            assembler: problem.assembler()?,
            filter: ConeFilter::new(&problem.mesh, problem.filter_radius),
            dump_dir: None,
            matrix_dump: None,
            eigen: EigenOptions {
                accept_residual: STALLED_RESIDUAL,
                ..Default::default()
            },
            dumped: Cell::new(false),
        })
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    pub fn assembler(&self) -> &Assembler {
        &self.assembler
    }

    fn n(&self) -> usize {
        self.problem.mesh.element_count()
    }

    fn write_matrices(&self, responses: &[ElementResponse]) -> Result<()> {
        let Some(dir) = &self.matrix_dump else { return Ok(()) };
        if self.dumped.replace(true) {
            return Ok(());
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let states: Vec<ElementState> = responses.iter().map(|r| r.state).collect();
        let (k, m) = self.assembler.assemble(&states)?;
        write_matrix_market(dir.join("K.mtx"), &k)?;
        write_matrix_market(dir.join("M.mtx"), &m)?;
        info!("wrote K.mtx and M.mtx ({} free DOFs) to {}", k.dim(), dir.display());
        Ok(())
    }

    fn analyze_or_dump(&self, responses: &[ElementResponse], design: &DesignField, what: &str) -> Result<FrequencyAnalysis> {
        self.write_matrices(responses)?;
        analyze_with(&self.assembler, responses, &self.eigen).map_err(|e| {
            if let Some(dir) = &self.dump_dir {
                let path = dir.join("failed_design.csv");
                match std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)).and_then(|()| design.write_csv(&path)) {
                    Ok(()) => warn!("{what}: analysis failed, design written to {}", path.display()),
                    Err(w) => warn!("{what}: analysis failed and the design could not be written: {w}"),
                }
            }
            Error::Invalid(format!("{what}: {e}"))
        })
    }

    /// Analysis of a design as given, with the lattice model and no latent penalty.
    pub fn evaluate_lattice(&self, surrogate: &TrainedSurrogate, design: &DesignField) -> Result<FrequencyAnalysis> {
        let model = MaterialModel::Lattice {
            surrogate,
            material: self.problem.material,
            penalty: None,
        };
        self.analyze_or_dump(&model.elements(&design.rho_tilde, &design.z), design, "evaluation")
    }

    /// Joint density and latent optimization from a uniform class-A design.
    pub fn stage1(&self, surrogate: &TrainedSurrogate) -> Result<StageOutcome> {
        let n = self.n();
        let p = self.problem;
        let latent = surrogate.latent();
        let points: Vec<LatentPoint> = latent.points().to_vec();
        let (zlo, zhi) = latent_bounds(latent);
        let alpha0 = latent_diagonal(latent);
        let start = latent.point(ClassLabel::A);

        let mut x: Vec<f64> = (0..3 * n)
            .map(|i| match i / n {
                0 => p.target_volume.max(RHO_MIN),
                k => start[k - 1].clamp(zlo[k - 1], zhi[k - 1]),
            })
            .collect();
        let lo: Vec<f64> = (0..3 * n).map(|i| if i < n { RHO_MIN } else { zlo[i / n - 1] }).collect();
        let hi: Vec<f64> = (0..3 * n).map(|i| if i < n { 1.0 } else { zhi[i / n - 1] }).collect();
        let mut mma = Mma::new(3 * n, 2, MmaSettings::default());
        let mut history = RunHistory::default();
        let (mut change, mut settled, mut omega0) = (0.0, 0, 0.0);

        for it in 0.. {
            let alpha = decayed_width(alpha0, it);
            let design = DesignField {
                rho: x[..n].to_vec(),
                rho_tilde: x[..n].to_vec(),
                z: (0..n).map(|e| [x[n + e], x[2 * n + e]]).collect(),
                class: vec![None; n],
            };
            let model = MaterialModel::Lattice {
                surrogate,
                material: p.material,
                penalty: Some(LatentPenalty { points: &points, alpha }),
            };
            let responses = model.elements(&design.rho_tilde, &design.z);
            let analysis = self.analyze_or_dump(&responses, &design, &format!("stage 1 iteration {it}"))?;
            let omega = analysis.omega1();
            if it == 0 {
                omega0 = omega;
            }
            let volume = design.mean_rho_tilde();
            history.push(HistoryRow {
                iter: it,
                stage: StageTag::Stage1,
                omega1: omega,
                omega2: analysis.omega2(),
                volume,
                alpha,
                eta: 0.0,
                beta: 0.0,
                change,
                repeated: analysis.repeated(),
            });
            debug!("stage 1 it {it}: ω1 {omega:.6e} vol {volume:.4} α {alpha:.4} change {change:.4}");
            if it > 0 && change < CHANGE_TOLERANCE {
                settled += 1;
            } else {
                settled = 0;
            }
            if settled >= 2 || it + 1 >= p.limits.stage1 {
                info!("stage 1 finished after {} iterations, ω1 = {omega:.6e}", it + 1);
                return Ok(StageOutcome {
                    design,
                    history,
                    analysis,
                });
            }

            let s = sensitivities(&self.assembler, &analysis, &responses);
            let mut df0 = Vec::with_capacity(3 * n);
            for field in [&s.d_rho, &s.d_z[0], &s.d_z[1]] {
                df0.extend(self.filter.apply(field).into_iter().map(|d| -d / omega0));
            }
            let g = volume_constraints(volume, p.target_volume);
            let dv = 1.0 / (n as f64 * p.target_volume);
            let dg: Vec<Vec<f64>> = [dv, -dv]
                .iter()
                .map(|&d| (0..3 * n).map(|i| if i < n { d } else { 0.0 }).collect())
                .collect();
            let next = mma.update(&x, &lo, &hi, &df0, &g, &dg)?;
            change = normalized_change(&x, &next, &lo, &hi);
            x = next;
        }
        unreachable!()
    }

    /// Density-only optimization under the projection continuation, with
    /// latent coordinates held fixed.
    fn density_stage(&self, tag: StageTag, model: MaterialModel<'_>, initial: DesignField) -> Result<StageOutcome> {
        let n = self.n();
        let p = self.problem;
        let mut x: Vec<f64> = initial.rho.iter().map(|r| r.clamp(RHO_MIN, 1.0)).collect();
        let (lo, hi) = (vec![RHO_MIN; n], vec![1.0; n]);
        let mut mma = Mma::new(n, 2, MmaSettings::default());
        let mut history = RunHistory::default();
        let (mut change, mut omega0) = (f64::INFINITY, 0.0);
        let final_phase = p.schedule.final_phase_start();

        for it in 0.. {
            let proj: Projection = p.schedule.at(it);
            let (rho_tilde, d_proj): (Vec<f64>, Vec<f64>) = x.iter().map(|&r| proj.apply(r)).unzip();
            let design = DesignField {
                rho: x.clone(),
                rho_tilde,
                z: initial.z.clone(),
                class: initial.class.clone(),
            };
            let responses = model.elements(&design.rho_tilde, &design.z);
            let analysis = self.analyze_or_dump(&responses, &design, &format!("{tag} iteration {it}"))?;
            let omega = analysis.omega1();
            if it == 0 {
                omega0 = omega;
            }
            let volume = design.mean_rho_tilde();
            history.push(HistoryRow {
                iter: it,
                stage: tag,
                omega1: omega,
                omega2: analysis.omega2(),
                volume,
                alpha: 0.0,
                eta: proj.eta,
                beta: proj.beta,
                change: if it == 0 { 0.0 } else { change },
                repeated: analysis.repeated(),
            });
            debug!("{tag} it {it}: ω1 {omega:.6e} vol {volume:.4} η {} β {} change {change:.4}", proj.eta, proj.beta);
            if (it >= final_phase && change < CHANGE_TOLERANCE) || it + 1 >= p.limits.stage2 {
                info!("{tag} finished after {} iterations, ω1 = {omega:.6e}", it + 1);
                return Ok(StageOutcome {
                    design,
                    history,
                    analysis,
                });
            }

            let s = sensitivities(&self.assembler, &analysis, &responses);
            let chained: Vec<f64> = s.d_rho.iter().zip(&d_proj).map(|(a, b)| a * b).collect();
            let df0: Vec<f64> = self.filter.apply(&chained).into_iter().map(|d| -d / omega0).collect();
            let g = volume_constraints(volume, p.target_volume);
            let dv = 1.0 / (n as f64 * p.target_volume);
            let dg = vec![d_proj.iter().map(|d| d * dv).collect(), d_proj.iter().map(|d| -d * dv).collect()];
            let next = mma.update(&x, &lo, &hi, &df0, &g, &dg)?;
            change = normalized_change(&x, &next, &lo, &hi);
            x = next;
        }
        unreachable!()
    }

    /// Stage 2 on a class-projected design.
    pub fn stage2(&self, surrogate: &TrainedSurrogate, design: DesignField) -> Result<StageOutcome> {
        if design.class.iter().any(Option::is_none) {
            return Err(Error::Invalid("stage 2 needs every element assigned to a class".into()));
        }
        let model = MaterialModel::Lattice {
            surrogate,
            material: self.problem.material,
            penalty: None,
        };
        self.density_stage(StageTag::Stage2, model, design)
    }

    /// Stage 1, class projection and stage 2.
    pub fn multiclass(&self, surrogate: &TrainedSurrogate) -> Result<RunResult> {
        let s1 = self.stage1(surrogate)?;
        let snapped = project_to_classes(&s1.design, surrogate.latent());
        let s2 = self.stage2(surrogate, snapped)?;
        let start = s2.history.rows()[0].omega1;
        let jump = (start / s1.omega1() - 1.0) * 100.0;
        info!("class projection moved ω1 from {:.6e} to {start:.6e} ({jump:+.2}%)", s1.omega1());
        let mut history = s1.history.clone();
        history.extend(&s2.history);
        Ok(RunResult {
            mode: RunMode::Multiclass,
            omega1: s2.omega1(),
            omega2: s2.analysis.omega2(),
            design: s2.design,
            history,
            stage_boundary: Some((s1.omega1(), start)),
            sweep: vec![],
        })
    }

    /// Density optimization with every element fixed to one class.
    pub fn single_class(&self, surrogate: &TrainedSurrogate, class: ClassLabel) -> Result<RunResult> {
        let initial = DesignField::uniform(self.n(), self.problem.target_volume, surrogate.latent_of_class(class), Some(class));
        let model = MaterialModel::Lattice {
            surrogate,
            material: self.problem.material,
            penalty: None,
        };
        let out = self.density_stage(StageTag::Single, model, initial)?;
        Ok(RunResult {
            mode: RunMode::Single(Some(class)),
            omega1: out.omega1(),
            omega2: out.analysis.omega2(),
            design: out.design,
            history: out.history,
            stage_boundary: None,
            sweep: vec![],
        })
    }

    /// Single-class runs for every class; returns the best with the full sweep attached.
    pub fn single_class_sweep(&self, surrogate: &TrainedSurrogate) -> Result<RunResult> {
        let mut best: Option<RunResult> = None;
        let mut sweep = Vec::new();
        for class in ClassLabel::ALL {
            let run = self.single_class(surrogate, class)?;
            info!("single class {class}: ω1 = {:.6e}", run.omega1);
            sweep.push((class, run.omega1));
            if best.as_ref().is_none_or(|b| run.omega1 > b.omega1) {
                best = Some(run);
            }
        }
        let mut best = best.expect("ten classes");
        best.sweep = sweep;
        Ok(best)
    }

    /// Single-scale SIMP design, thresholded to 0-1 at the target volume and re-analyzed.
    pub fn simp(&self) -> Result<RunResult> {
        let n = self.n();
        let model = MaterialModel::Simp {
            material: self.problem.material,
        };
        let initial = DesignField::uniform(n, self.problem.target_volume, [0.0; 2], None);
        let out = self.density_stage(StageTag::Simp, model, initial)?;
        let solid = threshold_design(&out.design.rho_tilde, self.problem.target_volume);
        let full = model.element(1.0, [0.0; 2]).state;
        let responses: Vec<ElementResponse> = solid
            .iter()
            .map(|&s| {
                let state = if s {
                    full
                } else {
                    ElementState {
                        stiffness: full.stiffness.map(|c| c * VOID_FRACTION),
                        mass_scale: VOID_FRACTION,
                    }
                };
                ElementResponse {
                    state,
                    d_stiffness_d_rho: [0.0; 6],
                    d_mass_d_rho: 0.0,
                    d_stiffness_d_z: [[0.0; 6]; 2],
                }
            })
            .collect();
        let mut design = out.design;
        design.rho_tilde = solid.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect();
        let analysis = self.analyze_or_dump(&responses, &design, "thresholded SIMP design")?;
        info!(
            "SIMP: continuous ω1 = {:.6e}, thresholded ω1 = {:.6e}",
            out.analysis.omega1(),
            analysis.omega1()
        );
        Ok(RunResult {
            mode: RunMode::Simp,
            omega1: analysis.omega1(),
            omega2: analysis.omega2(),
            design,
            history: out.history,
            stage_boundary: None,
            sweep: vec![],
        })
    }

    pub fn run(&self, mode: RunMode, surrogate: Option<&TrainedSurrogate>) -> Result<RunResult> {
        let need = || surrogate.ok_or_else(|| Error::Invalid(format!("mode {mode} needs a trained surrogate")));
        match mode {
            RunMode::Multiclass => self.multiclass(need()?),
            RunMode::Single(Some(c)) => self.single_class(need()?, c),
            RunMode::Single(None) => self.single_class_sweep(need()?),
            RunMode::Simp => self.simp(),
        }
    }
}
