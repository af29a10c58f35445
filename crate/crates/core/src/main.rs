use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tempnet::accounting::{count_flops, count_params, describe};
use tempnet::autodiff::Fault;
use tempnet::config::{parse_extents, Config};
use tempnet::dataset::{read_clip, write_clip, LabeledClip, Manifest, Split};
use tempnet::eval::{evaluate, DEFAULT_THRESHOLD};
use tempnet::gradcheck::{gradcheck, reduced_config};
use tempnet::model::TempNet;
use tempnet::parallel::default_threads;
use tempnet::pipeline::{load_split, prepare};
use tempnet::synth::{generate_dataset, stratify, SceneConfig};
use tempnet::train::{train, TrainOptions};
use tempnet::{Error, ParamStore};

/// Marker written by `preprocess`; a data directory holding it contains
/// network-ready clips.
const PREPROCESSED_MARKER: &str = "preprocess.cfg";

#[derive(Parser)]
#[command(name = "tempnet", version, about = "Clip-wise event detection with a spatio-temporal 3D CNN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset.
    Gen(GenArgs),
    /// Materialize preprocessed clips for inspection or caching.
    Preprocess(PreprocessArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Evaluate a model on the test split.
    Eval(EvalArgs),
    /// Print parameter and FLOP totals.
    Count(ConfigArgs),
    /// Print the stage-by-stage shape, parameter and FLOP table.
    Describe(ConfigArgs),
    /// Compare analytic and finite-difference gradients of a network.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 892)]
    count: usize,
    #[arg(long, default_value_t = 0.5)]
    positive_ratio: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Frame size as HxW.
    #[arg(long)]
    hw: Option<String>,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Single-threaded execution.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ConfigArgs {
    /// Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Reduced network with attention when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Scale the sigmoid backward rule by 1.5, to check the checker.
    #[arg(long)]
    corrupt_gradient: bool,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn load_config(path: &Path) -> Result<Config, Failure> {
    Config::load(path).map_err(usage)
}

fn threads(deterministic: bool) -> usize {
    if deterministic {
        1
    } else {
        default_threads()
    }
}

fn is_preprocessed(dir: &Path) -> bool {
    dir.join(PREPROCESSED_MARKER).is_file()
}

/// Loads `split` as network inputs, preprocessing unless the directory was
/// written by `preprocess`.
fn samples(dir: &Path, split: Split, cfg: &Config, threads: usize) -> Result<Vec<tempnet::pipeline::Sample>, Failure> {
    let manifest = Manifest::load(dir)?;
    if !is_preprocessed(dir) {
        return Ok(load_split(&manifest, split, cfg, threads)?);
    }
    let mut out = Vec::new();
    for e in manifest.split(split) {
        let clip = read_clip(dir.join(&e.path))?;
        if clip.frames.shape() != cfg.net.input_shape {
            return Err(Error::InvalidShape {
                shape: clip.frames.shape().to_vec(),
                reason: format!("clip {} does not match the network input {:?}", e.id(), cfg.net.input_shape),
            }
            .into());
        }
        out.push(tempnet::pipeline::Sample {
            id: e.id(),
            input: clip.frames,
            label: e.label,
        });
    }
    if out.is_empty() {
        return Err(Error::EmptySplit(split.name().into()).into());
    }
    Ok(out)
}

fn run_gen(a: GenArgs) -> Result<(), Failure> {
    stratify(a.count, a.positive_ratio).map_err(usage)?;
    let scene = match &a.hw {
        Some(hw) => {
            let [h, w] = parse_extents::<2>("--hw", hw).map_err(usage)?;
            SceneConfig::scaled((h, w))
        }
        None => SceneConfig::default(),
    };
    scene.validate().map_err(usage)?;
    let manifest = generate_dataset(&a.out, a.count, a.positive_ratio, a.seed, &scene, default_threads())?;
    for split in Split::ALL {
        let (n, pos) = manifest.split(split).fold((0, 0), |(n, p), e| (n + 1, p + e.label as usize));
        println!("{split}: {n} clips, {pos} positive");
    }
    Ok(())
}

fn run_preprocess(a: PreprocessArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config)?;
    let manifest = Manifest::load(&a.data)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io { path: a.out.clone(), source: e })?;
    for e in &manifest.entries {
        let mut clip = read_clip(manifest.root.join(&e.path))?;
        clip.id = e.id();
        let frames = prepare(&clip, &cfg)?;
        write_clip(a.out.join(&e.path), &LabeledClip { frames, label: Some(e.label), id: clip.id })?;
    }
    let copy = Manifest { root: a.out.clone(), entries: manifest.entries.clone() };
    copy.save()?;
    let marker = a.out.join(PREPROCESSED_MARKER);
    std::fs::write(&marker, cfg.to_text()).map_err(|e| Error::Io { path: marker, source: e })?;
    println!("preprocessed {} clips to {:?}", manifest.entries.len(), cfg.net.input_shape);
    Ok(())
}

fn history_path(model: &Path) -> PathBuf {
    let mut name = model.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".history.tsv");
    model.with_file_name(name)
}

fn run_train(a: TrainArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config)?;
    let threads = threads(a.deterministic);
    let train_set = samples(&a.data, Split::Train, &cfg, threads)?;
    let val_set = samples(&a.data, Split::Val, &cfg, threads)?;
    let (net, init) = TempNet::build::<f32>(cfg.net.clone(), cfg.train.seed)?;
    eprintln!("training on {} clips, validating on {}, {threads} thread(s)", train_set.len(), val_set.len());
    let opts = TrainOptions { threads, target_val_accuracy: None };
    let outcome = train(&net, init, &train_set, &val_set, &cfg.train, &opts, |e| {
        eprintln!(
            "epoch {:3}  train_bce {:.4}  val_bce {:.4}  val_acc {:.3}",
            e.epoch, e.train_bce, e.val_bce, e.val_accuracy
        );
    })?;
    let mut params = outcome.params;
    params.set_metadata("config", cfg.to_text());
    params.save(&a.out)?;
    let history = history_path(&a.out);
    outcome.history.save(&history)?;
    println!("restored epoch {}; model {}, history {}", outcome.best_epoch, a.out.display(), history.display());
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<(), Failure> {
    let params = ParamStore::<f32>::load(&a.model)?;
    let text = params
        .metadata("config")
        .ok_or_else(|| Failure::Runtime(format!("{}: model carries no configuration", a.model.display())))?;
    let cfg = Config::parse(text)?;
    let threads = default_threads();
    let test = samples(&a.data, Split::Test, &cfg, threads)?;
    let net = TempNet::new(cfg.net.clone())?;
    let report = evaluate(&net, &params, &test, DEFAULT_THRESHOLD, threads)?;
    report.save(&a.report)?;
    let m = &report.metrics;
    let show = |v: Option<f64>| v.map_or("absent".to_string(), |v| format!("{v:.4}"));
    println!(
        "n {}  accuracy {}  precision {}  bce {:.4}  fn {}  fp {}  f1 {}",
        report.n,
        show(m.accuracy),
        show(m.precision),
        report.bce,
        report.fn_,
        report.fp,
        show(m.f1)
    );
    Ok(())
}

fn config_or_default(path: &Option<PathBuf>) -> Result<Config, Failure> {
    match path {
        Some(p) => load_config(p),
        None => Ok(Config::default()),
    }
}

fn run_count(a: ConfigArgs) -> Result<(), Failure> {
    let cfg = config_or_default(&a.config)?;
    println!("parameters {}", count_params(&cfg.net)?);
    println!("flops {}", count_flops(&cfg.net)?);
    Ok(())
}

fn run_describe(a: ConfigArgs) -> Result<(), Failure> {
    let cfg = config_or_default(&a.config)?;
    print!("{}", describe(&cfg.net)?);
    Ok(())
}

fn run_gradcheck(a: GradcheckArgs) -> Result<(), Failure> {
    if a.tolerance.is_nan() || a.tolerance < 0.0 {
        return Err(usage(format!("tolerance must be non-negative, got {}", a.tolerance)));
    }
    let net = match &a.config {
        Some(p) => load_config(p)?.net,
        None => reduced_config(true, false),
    };
    let fault = a.corrupt_gradient.then_some(Fault::SigmoidGradient);
    let report = gradcheck(&net, a.tolerance, 5, fault)?;
    print!("{}", report.to_text());
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("gradient check failed: max relative error {:.3e}", report.max_rel_error)))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Gen(a) => run_gen(a),
        Command::Preprocess(a) => run_preprocess(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Count(a) => run_count(a),
        Command::Describe(a) => run_describe(a),
        Command::Gradcheck(a) => run_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
