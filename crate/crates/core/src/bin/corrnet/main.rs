mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use config::RunConfig;
use corrnet::diff::gradcheck::{primitive_suite, CheckResult};
use corrnet::diff::Checkpoint;
use corrnet::geometry::io::{read_mesh, write_mesh, write_ply, VertexScalars};
use corrnet::network::check::end_to_end_gradcheck;
use corrnet::network::{Model, Preset, Variant};
use corrnet::synth::dataset::load_labels;
use corrnet::synth::{build_dataset, load_case_samples, Manifest};
use corrnet::trainer::ablation::{evaluate_model, load_test_cases};
use corrnet::trainer::run::RunMetadata;
use corrnet::trainer::{evaluate, run_ablation_suite, simulate, train_on_dataset, AblationConfig, MetricsReport, TrainConfig};

/// Learned bone-to-skin correspondence: synthetic data, training,
/// simulation and evaluation.
#[derive(Parser)]
#[command(name = "corrnet", version)]
struct Cli {
    /// Worker threads for data generation, batches and evaluation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with fold assignment.
    GenData(GenDataArgs),
    /// Train a model on every fold but the held-out one.
    Train(TrainArgs),
    /// Predict the post-operative skin mesh of one case.
    Simulate(SimulateArgs),
    /// Score predictions against ground truth.
    Evaluate(EvaluateArgs),
    /// Train and score all three correspondence variants over several seeds.
    Ablate(AblateArgs),
    /// Finite-difference check of every primitive and of the full model.
    Gradcheck(GradcheckArgs),
    /// Convert a mesh between PLY and OBJ (by file extension).
    Convert(ConvertArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[command(flatten)]
    cfg: ConfigArg,
    /// Dataset root to create.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of cases.
    #[arg(long)]
    cases: Option<usize>,
    /// Number of folds.
    #[arg(long)]
    folds: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Points sampled per surface.
    #[arg(long)]
    samples: Option<usize>,
    /// Bone segments per case (2 to 4).
    #[arg(long)]
    segments: Option<usize>,
}

/// Training flags shared by `train` and `ablate`.
#[derive(Args)]
struct TrainFlags {
    /// Dataset root.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Held-out fold.
    #[arg(long)]
    fold: Option<usize>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Cases per optimisation step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Network size: toy or full.
    #[arg(long, value_parser = parse_preset)]
    preset: Option<Preset>,
    /// Points per surface fed to the network.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: ConfigArg,
    #[command(flatten)]
    flags: TrainFlags,
    /// acmt, closest or no_corr.
    #[arg(long, value_parser = Variant::parse)]
    variant: Option<Variant>,
    /// Seed of the weight initialisation and the batch order.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Case directory holding skin.ply and samples.csv.
    #[arg(long)]
    case: PathBuf,
    /// Output mesh (.ply or .obj).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    cfg: ConfigArg,
    /// Dataset root; the held-out fold of the checkpoint is scored.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory for metrics and color-coded error meshes.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Score one predicted mesh instead (needs --gt and --labels).
    #[arg(long, requires_all = ["gt", "labels"], conflicts_with_all = ["data", "checkpoint"])]
    pred: Option<PathBuf>,
    /// Ground-truth mesh for --pred.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// labels.csv with a region per vertex, for --pred.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Also write per-case wall-clock seconds as JSON (not reproducible byte for byte).
    #[arg(long)]
    timing: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    cfg: ConfigArg,
    #[command(flatten)]
    flags: TrainFlags,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random instances per primitive.
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// Points per surface of the end-to-end toy model.
    #[arg(long, default_value_t = 32)]
    points: usize,
    /// Entries probed per parameter block end to end.
    #[arg(long, default_value_t = 8)]
    probes: usize,
}

#[derive(Args)]
struct ConvertArgs {
    /// Mesh to read (.ply or .obj).
    input: PathBuf,
    /// Mesh to write (.ply or .obj).
    output: PathBuf,
}

fn parse_preset(s: &str) -> std::result::Result<Preset, String> {
    match s {
        "toy" => Ok(Preset::Toy),
        "full" => Ok(Preset::Full),
        _ => Err(format!("unknown preset `{s}` (toy | full)")),
    }
}

fn required(p: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.ok_or_else(|| corrnet::Error::Config(format!("missing {what} (flag or [paths] in the config)")).into())
}

fn existing_dataset(root: &Path) -> Result<()> {
    if !root.join("manifest.json").is_file() {
        return Err(corrnet::Error::Config(format!("{} is not a dataset (no manifest.json)", root.display())).into());
    }
    Ok(())
}

fn existing_file(p: &Path) -> Result<()> {
    if !p.is_file() {
        return Err(corrnet::Error::Config(format!("{} does not exist", p.display())).into());
    }
    Ok(())
}

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| corrnet::Error::io(p, e))?;
    Ok(())
}

fn apply_train_flags(cfg: &mut RunConfig, f: &TrainFlags) {
    let t = &mut cfg.train;
    t.fold = f.fold.unwrap_or(t.fold);
    t.epochs = f.epochs.unwrap_or(t.epochs);
    t.batch_size = f.batch_size.unwrap_or(t.batch_size);
    t.lr = f.lr.unwrap_or(t.lr);
    if let Some(p) = f.preset {
        t.preset = p;
        if p == Preset::Full && f.points.is_none() {
            t.n_points = 4096;
        }
    }
    t.n_points = f.points.unwrap_or(t.n_points);
    if f.data.is_some() {
        cfg.paths.data = f.data.clone();
    }
    if f.out.is_some() {
        cfg.paths.out = f.out.clone();
    }
}

fn print_checks(results: &[CheckResult]) -> bool {
    let mut ok = true;
    for r in results {
        let status = if r.passed() { "ok" } else { "FAIL" };
        ok &= r.passed();
        println!("{status:4} {:<40} {:.3e} (tol {:.0e})", r.name, r.max_rel_err, r.tol);
    }
    ok
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.cfg.config.as_deref())?;
    let d = &mut cfg.data;
    d.cases = a.cases.unwrap_or(d.cases);
    d.folds = a.folds.unwrap_or(d.folds);
    d.seed = a.seed.unwrap_or(d.seed);
    d.samples = a.samples.unwrap_or(d.samples);
    cfg.generator.segments = a.segments.unwrap_or(cfg.generator.segments);
    let out = required(a.out.or(cfg.paths.data.clone()), "--out")?;
    cfg.generator.validate()?;
    let m = build_dataset(&out, d.cases, d.folds, &cfg.generator, d.samples, d.seed)?;
    RunMetadata::new("gen-data", &cfg, Some(&out))?.write(&out.join("run.json"))?;
    eprintln!("wrote {} cases in {} folds to {}", m.cases.len(), m.folds.len(), out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.cfg.config.as_deref())?;
    apply_train_flags(&mut cfg, &a.flags);
    cfg.train.variant = a.variant.unwrap_or(cfg.train.variant);
    cfg.train.seed = a.seed.unwrap_or(cfg.train.seed);
    let data = required(cfg.paths.data.clone(), "--data")?;
    let out = required(cfg.paths.out.clone(), "--out")?;
    existing_dataset(&data)?;
    cfg.train.validate()?;
    create_dir(&out)?;
    let every = (cfg.train.epochs / 20).max(1);
    let outcome = train_on_dataset(&cfg.train, &data, |e| {
        if e.epoch % every == 0 || e.epoch + 1 == cfg.train.epochs {
            eprintln!("epoch {:>4}  lr {:.0e}  loss {:.5e}", e.epoch, e.lr, e.total);
        }
    })?;
    outcome.checkpoint(&cfg.train).save(&out.join("checkpoint.bin"))?;
    corrnet::trainer::run::write_loss_csv(&out.join("loss.csv"), &outcome.curve)?;
    RunMetadata::new("train", &cfg, Some(&data))?.write(&out.join("run.json"))?;
    eprintln!("wrote {}", out.join("checkpoint.bin").display());
    Ok(())
}

fn load_model(path: &Path) -> Result<(Model, Checkpoint)> {
    existing_file(path)?;
    let ckpt = Checkpoint::load(path)?;
    Ok((Model::from_checkpoint(&ckpt)?, ckpt))
}

fn simulate_cmd(a: SimulateArgs) -> Result<()> {
    let (model, _) = load_model(&a.checkpoint)?;
    let skin = read_mesh(&a.case.join("skin.ply"))?;
    let samples = load_case_samples(&a.case)?;
    let sim = simulate(&model, &skin, &samples)?;
    write_mesh(&a.out, &sim.mesh)?;
    eprintln!("simulated {} in {:.3} s", a.case.display(), sim.seconds);
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.cfg.config.as_deref())?;
    if let Some(pred) = a.pred {
        let gt = a.gt.context("--gt is required with --pred")?;
        let labels = a.labels.context("--labels is required with --pred")?;
        let pred_mesh = read_mesh(&pred)?;
        let gt_mesh = read_mesh(&gt)?;
        let dir = labels.parent().unwrap_or(Path::new("."));
        if labels.file_name() != Some("labels.csv".as_ref()) {
            bail!(corrnet::Error::Config("--labels must point at a labels.csv".into()));
        }
        let (_, regions) = load_labels(dir)?;
        let m = evaluate(&pred.display().to_string(), &pred_mesh, &gt_mesh, &regions)?;
        print!("{}", MetricsReport::new(vec![m], vec![]).to_csv());
        return Ok(());
    }
    cfg.paths.data = a.data.or(cfg.paths.data);
    cfg.paths.checkpoint = a.checkpoint.or(cfg.paths.checkpoint);
    cfg.paths.out = a.out.or(cfg.paths.out);
    let data = required(cfg.paths.data.clone(), "--data")?;
    let ckpt_path = required(cfg.paths.checkpoint.clone(), "--checkpoint")?;
    let out = required(cfg.paths.out.clone(), "--out")?;
    existing_dataset(&data)?;
    let (model, ckpt) = load_model(&ckpt_path)?;
    let fold = Model::checkpoint_extra(&ckpt)?
        .get("train")
        .and_then(|t| serde_json::from_value::<TrainConfig>(t.clone()).ok())
        .map_or(cfg.train.fold, |t| t.fold);
    let manifest = Manifest::load(&data)?;
    let (_, test_names) = manifest.split(fold)?;
    create_dir(&out)?;
    let tests = load_test_cases(&data, &manifest, &test_names)?;
    let report = evaluate_model(&model, &tests)?;
    let mesh_dir = out.join("error_maps");
    create_dir(&mesh_dir)?;
    for (c, m) in tests.iter().zip(&report.cases) {
        let sim = simulate(&model, &c.skin, &c.samples)?;
        let scalars = VertexScalars {
            name: "deviation_mm".into(),
            values: m.vertex_errors.clone(),
            max: 3.0,
        };
        write_ply(&mesh_dir.join(format!("{}.ply", c.name)), &sim.mesh, Some(&scalars))?;
    }
    std::fs::write(out.join("metrics.csv"), report.to_csv()).map_err(|e| corrnet::Error::io(out.join("metrics.csv"), e))?;
    corrnet::trainer::run::write_report_json(&out.join("metrics.json"), &report)?;
    RunMetadata::new("evaluate", &cfg, Some(&data))?.write(&out.join("run.json"))?;
    for (c, s) in report.cases.iter().zip(&report.seconds) {
        eprintln!("{}: {:.4} mm, simulated in {s:.3} s", c.name, c.entire);
    }
    eprintln!("entire surface: {:.4} ± {:.4} mm over {} cases (fold {fold})", report.mean[6], report.std[6], report.cases.len());
    if let Some(t) = a.timing {
        corrnet::trainer::run::write_timing(&t, &report)?;
    }
    Ok(())
}

fn ablate_cmd(a: AblateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(a.cfg.config.as_deref())?;
    apply_train_flags(&mut cfg, &a.flags);
    if let Some(s) = a.seeds {
        cfg.ablation.seeds = s;
    }
    let data = required(cfg.paths.data.clone(), "--data")?;
    let out = required(cfg.paths.out.clone(), "--out")?;
    existing_dataset(&data)?;
    create_dir(&out)?;
    let acfg = AblationConfig {
        train: cfg.train.clone(),
        seeds: cfg.ablation.seeds.clone(),
    };
    let table = run_ablation_suite(&data, &acfg, |line| eprintln!("{line}"))?;
    corrnet::trainer::run::write_ablation(&out, &table)?;
    RunMetadata::new("ablate", &cfg, Some(&data))?.write(&out.join("run.json"))?;
    print!("{}", table.to_csv());
    let check = table.check_ordering(0.15);
    eprintln!(
        "acmt {:.4} / closest {:.4} / no_corr {:.4} mm; min gain over no_corr {:.1}%; ordering {}",
        check.acmt,
        check.closest,
        check.no_corr,
        100.0 * check.min_improvement,
        if check.holds { "holds" } else { "does not hold" }
    );
    Ok(())
}

fn gradcheck_cmd(a: GradcheckArgs) -> Result<()> {
    let mut results = primitive_suite(a.seeds)?;
    for v in Variant::ALL {
        results.extend(end_to_end_gradcheck(a.points, v, 1, a.probes)?);
    }
    if !print_checks(&results) {
        return Err(corrnet::Error::NonFinite("gradient check failed".into()).into());
    }
    Ok(())
}

fn convert_cmd(a: ConvertArgs) -> Result<()> {
    let mesh = read_mesh(&a.input)?;
    write_mesh(&a.output, &mesh)?;
    Ok(())
}

fn category(e: &anyhow::Error) -> &'static str {
    e.chain()
        .find_map(|c| c.downcast_ref::<corrnet::Error>())
        .map_or("runtime", corrnet::Error::category)
}

fn exit_code(category: &str) -> u8 {
    match category {
        "config" => 2,
        "invalid-input" => 3,
        "numeric" => 4,
        "io" => 5,
        "format" => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(j) = cli.jobs {
        if let Err(e) = set_jobs(j) {
            eprintln!("error[config]: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::Convert(a) => convert_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let cat = category(&e);
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{cat}]: {msg}");
            ExitCode::from(exit_code(cat))
        }
    }
}

#[cfg(feature = "parallel")]
fn set_jobs(jobs: usize) -> Result<()> {
    if jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_jobs(_: usize) -> Result<()> {
    Ok(())
}
