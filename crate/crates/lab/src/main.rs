use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use ceb_core::diffgrad::Covariance;
use ceb_core::evalkit::MixtureSpec;
use ceb_core::info::mutual_information;
use ceb_core::objectives::{Architecture, ObjectiveKind, ObjectiveSpec};
use ceb_core::robustness::{AttackSpec, Norm};
use ceb_core::tabular::{plane_sweep, SweepOptions, TabularObjective};
use ceb_core::Joint;
use ceb_lab::config::{parse_grid, step_grid};
use ceb_lab::pipelines::{
    attack_curve, attack_domain, calibration_report, ood_report, write_calibration_csv, write_curve_csv,
    write_scores_csv, OodSource,
};
use ceb_lab::plane::{read_plane_csv, rows_from_manifest, write_plane_csv};
use ceb_lab::sweep::write_run;
use ceb_lab::{
    emit_plane, load_run, run_memorization, run_sweep, Budget, DatasetConfig, ExperimentConfig, Manifest,
    MemorizationConfig, PlaneRow, RunSpec, Units,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ceb-lab", version, about = "Bottleneck training, sweeps and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the tabular solver over a ρ grid and write plane.csv.
    Tabular(TabularArgs),
    /// Train one model on the synthetic mixture task.
    Train(TrainArgs),
    /// Train every (objective, ρ, seed) point of a config.
    Sweep(SweepArgs),
    /// Accuracy under PGD across an ε grid.
    Attack(AttackArgs),
    /// Out-of-distribution detection with entropy and rate scores.
    Ood(OodArgs),
    /// Reliability bins and expected calibration error.
    Calibrate(CalibrateArgs),
    /// Train on fixed random labels and report whether models memorize.
    Memorize(MemorizeArgs),
    /// Re-emit plane points as CSV and SVG.
    Plane(PlaneArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitArg {
    Nats,
    Bits,
}

impl From<UnitArg> for Units {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Nats => Units::Nats,
            UnitArg::Bits => Units::Bits,
        }
    }
}

#[derive(Args)]
struct TabularArgs {
    /// Joint table as CSV (row = x, column = y) or JSON.
    #[arg(long)]
    joint: PathBuf,
    #[arg(long, default_value = "ceb")]
    objective: TabularObjective,
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    rho_min: f64,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    rho_max: f64,
    #[arg(long, default_value_t = 0.5)]
    rho_step: f64,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cardinality of Z; defaults to |Y|.
    #[arg(long)]
    z_cardinality: Option<usize>,
    #[arg(long, value_enum, default_value = "nats")]
    units: UnitArg,
    #[arg(long, default_value = "plane.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// Mixture spec as JSON; replaces the mixture flags below.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 500)]
    per_class: usize,
    #[arg(long, default_value_t = 100)]
    test_per_class: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 4.0)]
    separation: f64,
    #[arg(long, default_value_t = 0.0)]
    label_noise: f64,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

#[derive(Args)]
struct BudgetArgs {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    eval_every: Option<usize>,
}

impl BudgetArgs {
    fn apply(&self, b: &mut Budget) {
        if let Some(v) = self.steps {
            b.steps = v;
        }
        if let Some(v) = self.batch_size {
            b.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            b.learning_rate = v;
        }
        if let Some(v) = self.eval_every {
            b.eval_every = v;
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CovarianceArg {
    Diagonal,
    Full,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "vceb")]
    objective: ObjectiveKind,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    rho: f64,
    /// Denoising noise scale.
    #[arg(long)]
    lambda: Option<f64>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long)]
    latent_dim: Option<usize>,
    #[arg(long, value_enum)]
    covariance: Option<CovarianceArg>,
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Seeds to run; replaces the config's seed list.
    #[arg(long = "seed", required = true)]
    seeds: Vec<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L2,
    Linf,
}

#[derive(Args)]
struct AttackArgs {
    /// Run directory written by `train` or `sweep`, or its checkpoint.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value = "linf")]
    norm: NormArg,
    /// start:stop:count, inclusive.
    #[arg(long, default_value = "0:0.5:16")]
    eps_grid: String,
    #[arg(long, default_value_t = 7)]
    steps: usize,
    #[arg(long)]
    step_size: Option<f64>,
    #[arg(long)]
    target: Option<usize>,
    #[arg(long)]
    random_start: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Score the crafted examples on this run instead.
    #[arg(long)]
    transfer_to: Option<PathBuf>,
    /// Attack only the first N test examples.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value = "curve.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct OodArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "uniform")]
    source: OodSource,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "scores.csv")]
    out: PathBuf,
    #[arg(long, default_value = "detection.json")]
    metrics: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "calibration.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct MemorizeArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "seed", required = true)]
    seeds: Vec<u64>,
    #[arg(long)]
    examples: Option<usize>,
    #[command(flatten)]
    budget: BudgetArgs,
    #[arg(long, default_value = "memorization.json")]
    out: PathBuf,
}

#[derive(Args)]
struct PlaneArgs {
    /// A plane CSV in nats, as written by `tabular`.
    #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
    input: Option<PathBuf>,
    /// A sweep manifest; plots rate against the I(Y;Z) lower bound.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "nats")]
    units: UnitArg,
    /// I(X;Y) line to draw, in nats.
    #[arg(long)]
    ceiling: Option<f64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn tabular(a: TabularArgs) -> Result<bool> {
    let joint = Joint::load(&a.joint).with_context(|| format!("reading {}", a.joint.display()))?;
    let rhos = step_grid(a.rho_min, a.rho_max, a.rho_step)?;
    let opts = SweepOptions {
        restarts: a.restarts,
        seed: a.seed,
        z_cardinality: a.z_cardinality,
        ..SweepOptions::default()
    };
    let points = plane_sweep(&joint, &rhos, a.objective, &opts)?;
    let rows: Vec<PlaneRow> = points.iter().map(PlaneRow::from).collect();
    write_plane_csv(&rows, a.units.into(), fs::File::create(&a.out)?)?;
    eprintln!("I(X;Y) = {:.6} nats, {} points -> {}", mutual_information(&joint), rows.len(), a.out.display());
    Ok(points.iter().all(|p| p.error.is_none()))
}

fn train(a: TrainArgs) -> Result<bool> {
    let mut objective = ObjectiveSpec::new(a.objective, a.rho);
    objective.lambda = a.lambda;
    let mut architecture = Architecture::default();
    if let Some(d) = a.latent_dim {
        architecture.latent_dim = d;
    }
    if let Some(c) = a.covariance {
        architecture.covariance = match c {
            CovarianceArg::Diagonal => Covariance::Diagonal,
            CovarianceArg::Full => Covariance::Full,
        };
    }
    let mut training = Budget::default();
    a.budget.apply(&mut training);
    let mixture = match &a.data.dataset {
        Some(p) => serde_json::from_slice::<MixtureSpec>(&fs::read(p)?)
            .with_context(|| format!("reading {}", p.display()))?,
        None => MixtureSpec {
            classes: a.data.classes,
            per_class: a.data.per_class,
            dim: a.data.dim,
            separation: a.data.separation,
            label_noise: a.data.label_noise,
        },
    };
    let spec = RunSpec {
        objective,
        seed: a.seed,
        dataset: DatasetConfig {
            mixture,
            test_per_class: a.data.test_per_class,
            seed: a.data.data_seed,
        },
        architecture,
        training,
    };
    let data = spec.dataset.generate()?;
    let (_, metrics) = write_run(&spec, &data, &a.out)?;
    println!("{}", serde_json::to_string_pretty(&metrics)?);
    Ok(true)
}

fn sweep(a: SweepArgs) -> Result<bool> {
    let mut cfg = ExperimentConfig::load(&a.config)?;
    cfg.seeds = a.seeds;
    if let Some(out) = a.out {
        cfg.output_dir = out;
    }
    let manifest = run_sweep(&cfg, a.threads)?;
    for f in manifest.failures() {
        eprintln!("run {} failed: {}", f.id, f.error.as_deref().unwrap_or("unknown error"));
    }
    eprintln!(
        "{} runs, {} failed -> {}",
        manifest.runs.len(),
        manifest.failures().count(),
        cfg.output_dir.join(ceb_lab::sweep::MANIFEST_FILE).display()
    );
    Ok(manifest.all_ok())
}

/// A run directory, or a checkpoint file or stem inside one.
fn run_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        return path.to_path_buf();
    }
    path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn load(path: &Path) -> Result<(RunSpec, ceb_core::objectives::Model<f64>)> {
    load_run(&run_dir(path)).with_context(|| format!("loading model from {}", path.display()))
}

fn attack(a: AttackArgs) -> Result<bool> {
    let (spec, model) = load(&a.model)?;
    let (_, mut test) = spec.dataset.generate()?;
    if let Some(n) = a.limit {
        let idx: Vec<usize> = (0..n.min(test.len())).collect();
        test = test.subset(&idx);
    }
    let target_model = match &a.transfer_to {
        Some(dir) => load(dir)?.1,
        None => model.clone(),
    };
    let mut base = AttackSpec::new(
        match a.norm {
            NormArg::L2 => Norm::L2,
            NormArg::Linf => Norm::Linf,
        },
        0.0,
        a.steps,
    );
    base.step_size = a.step_size;
    base.target = a.target;
    base.seed = a.seed;
    base.random_start = a.random_start;
    base.domain = Some(attack_domain(&model, &test));
    let eps = parse_grid(&a.eps_grid)?;
    let curve = attack_curve(&model, &target_model, &test, &base, &eps)?;
    write_curve_csv(&curve, fs::File::create(&a.out)?)?;
    Ok(true)
}

fn ood(a: OodArgs) -> Result<bool> {
    let (spec, model) = load(&a.model)?;
    let (_, test) = spec.dataset.generate()?;
    let report = ood_report(&model, &test, a.source, a.seed)?;
    write_scores_csv(&report.scores, fs::File::create(&a.out)?)?;
    let summary = serde_json::json!({
        "source": report.source,
        "orientation": report.orientation,
        "H": report.entropy,
        "R": report.rate,
    });
    fs::write(&a.metrics, serde_json::to_vec_pretty(&summary)?)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(true)
}

fn calibrate(a: CalibrateArgs) -> Result<bool> {
    let (spec, model) = load(&a.model)?;
    let (_, test) = spec.dataset.generate()?;
    let curve = calibration_report(&model, &test)?;
    write_calibration_csv(&curve, fs::File::create(&a.out)?)?;
    println!("{}", serde_json::json!({ "ece": curve.ece }));
    Ok(true)
}

fn memorize(a: MemorizeArgs) -> Result<bool> {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_slice::<MemorizationConfig>(&fs::read(p)?)?,
        None => MemorizationConfig::default(),
    };
    cfg.seeds = a.seeds;
    if let Some(n) = a.examples {
        cfg.examples = n;
    }
    a.budget.apply(&mut cfg.training);
    let report = run_memorization(&cfg)?;
    fs::write(&a.out, serde_json::to_vec_pretty(&report)?)?;
    for r in &report.runs {
        println!(
            "{} rho={} seed={}: max train acc {:.3}, final {:.3}, learned={}, stayed at chance={}",
            r.objective, r.rho, r.seed, r.max_train_acc, r.final_train_acc, r.learned, r.stayed_at_chance
        );
    }
    Ok(true)
}

fn plane(a: PlaneArgs) -> Result<bool> {
    let rows = match (&a.input, &a.manifest) {
        (Some(p), _) => read_plane_csv(fs::File::open(p)?, Units::Nats)?,
        (None, Some(m)) => rows_from_manifest(&Manifest::load(m)?),
        (None, None) => bail!("either --input or --manifest is required"),
    };
    emit_plane(&rows, a.units.into(), a.ceiling, &a.out_dir)?;
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Tabular(a) => tabular(a),
        Command::Train(a) => train(a),
        Command::Sweep(a) => sweep(a),
        Command::Attack(a) => attack(a),
        Command::Ood(a) => ood(a),
        Command::Calibrate(a) => calibrate(a),
        Command::Memorize(a) => memorize(a),
        Command::Plane(a) => plane(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
