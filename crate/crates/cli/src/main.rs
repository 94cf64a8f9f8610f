//! `cellopt`: library generation, surrogate training, optimization, assembly
//! and reporting from the command line.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use cellopt::bitmap::Bitmap;
use cellopt::config::ProblemConfig;
use cellopt::fem::Mesh;
use cellopt::lattice::{Catalog, CELL_RESOLUTION};
use cellopt::library::{self, LibraryConfig, LibraryDataset};
use cellopt::lvgp::{self, metrics, KernelMode, TrainConfig, TrainedSurrogate};
use cellopt::topopt::{assemble_structure, write_run, Comparison, DesignField, Optimizer, RunMode, RunSummary};

#[derive(Parser, Debug)]
#[command(name = "cellopt", version, about = "Multiclass lattice topology optimization for natural frequency")]
struct Cli {
    /// Worker threads for the parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate and homogenize the microstructure library.
    Genlib(GenlibArgs),
    /// Fit the latent-variable surrogate to a library.
    Train(TrainArgs),
    /// Run a multiclass, single-class or SIMP optimization.
    Optimize(OptimizeArgs),
    /// Rasterize a design into a full-structure bitmap.
    Assemble(AssembleArgs),
    /// Compare finished runs.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct GenlibArgs {
    /// Library settings (JSON); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the split seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write every sample as a PGM under `bitmaps/`.
    #[arg(long)]
    bitmaps: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kernel {
    Sos,
    Separable,
}

impl From<Kernel> for KernelMode {
    fn from(k: Kernel) -> Self {
        match k {
            Kernel::Sos => KernelMode::Sos,
            Kernel::Separable => KernelMode::Separable,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Library directory (containing `library.csv`) or a library CSV file.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "sos")]
    kernel: Kernel,
    /// Seed for the restart design and the train/test split.
    #[arg(long, default_value_t = TrainConfig::default().seed)]
    seed: u64,
    /// Held-out fraction of the library.
    #[arg(long, default_value_t = LibraryConfig::default().test_fraction)]
    test_fraction: f64,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Trained surrogate (`model.json`); not needed for `--mode simp`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// multiclass | single | single:<class> | simp
    #[arg(long, default_value = "multiclass")]
    mode: RunMode,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the first assembled stiffness and mass matrices as Matrix Market files.
    #[arg(long)]
    dump_matrices: bool,
    /// Pixels per element edge in `assembled.pgm`; 0 skips assembly.
    #[arg(long, default_value_t = CELL_RESOLUTION)]
    resolution: usize,
}

#[derive(Args, Debug)]
struct AssembleArgs {
    /// `design.csv` from a run directory.
    #[arg(long)]
    design: PathBuf,
    /// Problem config the design was optimized on.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = CELL_RESOLUTION)]
    resolution: usize,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Run directories containing `summary.json`.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Where to write the comparison JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Genlib(a) => genlib(a),
        Command::Train(a) => train(a),
        Command::Optimize(a) => optimize(a),
        Command::Assemble(a) => assemble(a),
        Command::Report(a) => report(a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn genlib(a: GenlibArgs) -> Result<()> {
    let mut cfg: LibraryConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => LibraryConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let t = Instant::now();
    let catalog = Catalog::with_resolution(cfg.resolution);
    let (dataset, samples) = library::generate_library(&cfg, &catalog)?;
    library::write_library(&a.out, &dataset, a.bitmaps.then_some(samples.as_slice()))?;
    std::fs::write(a.out.join("config.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    info!("{}", library::describe(&dataset));
    info!("library written to {} in {:.1?}", a.out.display(), t.elapsed());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let csv = if a.data.is_dir() { a.data.join("library.csv") } else { a.data.clone() };
    let records = library::read_records_csv(&csv)?;
    let dataset = LibraryDataset::with_split(records, a.seed, a.test_fraction)?;
    let cfg = TrainConfig {
        mode: a.kernel.into(),
        seed: a.seed,
        ..Default::default()
    };
    let t = Instant::now();
    let model = lvgp::train(&dataset.train_records(), &cfg)?;
    info!("trained in {:.1?}: {}", t.elapsed(), model.describe());

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    model.save_json(a.out.join("model.json"))?;
    model.write_latent_csv(a.out.join("latent.csv"))?;
    let rows = metrics::metrics(&model, &dataset.test_records())?;
    for r in &rows {
        info!("held-out {}: rmse {:.3e}, r2 {}", r.entry, r.rmse, r.r2.map_or("n/a".into(), |v| format!("{v:.6}")));
    }
    metrics::write_metrics_csv(a.out.join("metrics.csv"), &rows)?;
    let interp = metrics::latent_interpretability(&model, &dataset.records)?;
    info!(
        "latent spearman {}",
        interp.spearman.map_or("n/a".into(), |v| format!("{v:.4}"))
    );
    std::fs::write(a.out.join("interpretability.json"), serde_json::to_string_pretty(&interp)? + "\n")?;
    Ok(())
}

/// One pixel block per element, solid where the projected density is at least one half.
fn element_bitmap(mesh: &Mesh, design: &DesignField, res: usize) -> Bitmap {
    Bitmap::from_fn(mesh.nx * res, mesh.ny * res, |x, y| design.rho_tilde[(y / res) * mesh.nx + x / res] >= 0.5)
}

fn write_assembly(mesh: &Mesh, design: &DesignField, res: usize, out: &Path) -> Result<()> {
    if design.class.iter().all(Option::is_none) {
        element_bitmap(mesh, design, res).write_pgm(out)?;
        return Ok(());
    }
    let assembled = assemble_structure(mesh, design, &Catalog::with_resolution(res))?;
    let vf = assembled.bitmap.solid_fraction();
    let mean = design.mean_rho_tilde();
    info!("assembled volume fraction {vf:.4} against mean density {mean:.4}");
    if (vf - mean).abs() > 0.02 {
        warn!("assembled volume fraction {vf:.4} differs from mean density {mean:.4} by more than 0.02");
    }
    assembled.bitmap.write_pgm(out)?;
    Ok(())
}

fn optimize(a: OptimizeArgs) -> Result<()> {
    let cfg = ProblemConfig::load(&a.config)?;
    let problem = cfg.to_problem()?;
    let model = match (&a.model, a.mode) {
        (Some(p), _) => Some(TrainedSurrogate::load_json(p)?),
        (None, RunMode::Simp) => None,
        (None, m) => bail!("--mode {m} needs --model"),
    };
    let mut opt = Optimizer::new(&problem)?;
    opt.eigen.seed = a.seed.unwrap_or(cfg.seed);
    opt.dump_dir = Some(a.out.clone());
    if a.dump_matrices {
        opt.matrix_dump = Some(a.out.clone());
    }
    let t = Instant::now();
    let result = opt.run(a.mode, model.as_ref())?;
    let summary = write_run(&a.out, &result)?;
    info!(
        "{}: omega1 {:.6} rad/s ({:.4} Hz), mean density {:.4}, {} iterations in {:.1?}",
        a.mode,
        summary.omega1,
        summary.frequency_hz,
        summary.mean_rho_tilde,
        summary.iterations,
        t.elapsed()
    );
    if summary.repeated_iterations > 0 {
        warn!("{} iterations had a repeated first eigenvalue", summary.repeated_iterations);
    }
    if a.resolution > 0 {
        write_assembly(&problem.mesh, &result.design, a.resolution, &a.out.join("assembled.pgm"))?;
    }
    Ok(())
}

fn assemble(a: AssembleArgs) -> Result<()> {
    let cfg = ProblemConfig::load(&a.config)?;
    let design = DesignField::read_csv(&a.design)?;
    if a.resolution == 0 {
        bail!("--resolution must be positive");
    }
    write_assembly(&cfg.to_problem()?.mesh, &design, a.resolution, &a.out)
}

fn report(a: ReportArgs) -> Result<()> {
    let summaries = a
        .runs
        .iter()
        .map(|d| RunSummary::read_json(d.join("summary.json")).with_context(|| format!("run {}", d.display())))
        .collect::<Result<Vec<_>>>()?;
    let cmp = Comparison::from_summaries(&summaries)?;
    print!("{}", cmp.table());
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&cmp)? + "\n")
            .with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
