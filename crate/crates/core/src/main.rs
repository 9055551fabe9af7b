use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use linehough::pipeline::{self, PipelineConfig, PreprocessConfig, PreprocessMethod};
use linehough::prob::{self, Population, SamplingScenario};
use linehough::raster::{self, GrayImage};
use linehough::ridge::Polarity;
use linehough::synth::{self, BenchConfig, ModelSceneParams, SceneSpec};
use linehough::Method;

#[derive(Parser)]
#[command(name = "linehough", version, about = "Thin parallel line detection with region-segmented Hough transforms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn a grayscale PGM into a binary ridge or edge map.
    Preprocess(PreprocessArgs),
    /// Run the detection pipeline on a PGM image.
    Detect(DetectArgs),
    /// Render a synthetic scene and its ground truth.
    Synth(SynthArgs),
    /// Benchmark all three methods over a directory of scene specs.
    Bench(BenchArgs),
    /// Tabulate the sampling probability model.
    Prob(ProbArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PreMethod {
    Hessian,
    Canny,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolarityArg {
    Bright,
    Dark,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Standard,
    Random,
    Improved,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Standard => Method::Standard,
            MethodArg::Random => Method::Random,
            MethodArg::Improved => Method::Improved,
        }
    }
}

#[derive(Args)]
struct PreprocessArgs {
    input: PathBuf,
    #[arg(long, value_enum, default_value = "hessian")]
    method: PreMethod,
    /// Gaussian scale for the Hessian.
    #[arg(long)]
    sigma: Option<f64>,
    /// Hessian: fraction of the strongest response. Canny: high gradient threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Canny low gradient threshold.
    #[arg(long)]
    low: Option<f64>,
    #[arg(long, value_enum)]
    polarity: Option<PolarityArg>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    input: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Sampling seed of the randomized transforms.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; falls back to the config's output.report, then stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long)]
    overlay: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, required_unless_present = "model_seed", conflicts_with = "model_seed")]
    spec: Option<PathBuf>,
    /// Generate a model-conformant scene from this seed instead of a spec file.
    #[arg(long)]
    model_seed: Option<u64>,
    /// Where to save the generated spec when using --model-seed.
    #[arg(long, requires = "model_seed")]
    spec_out: Option<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    scenes: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ProbArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Monte Carlo trials per check; 0 skips the simulation.
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn at(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{}: {err}", path.display()))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn read_bytes(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::at(path, e))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::at(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::at(path, e))
}

fn emit(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_image(path: &Path) -> CliResult<GrayImage> {
    raster::read_pgm(&read_bytes(path)?).map_err(|e| CliError::at(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::at(path, e))
}

fn run_preprocess(args: PreprocessArgs) -> CliResult {
    let img = read_image(&args.input)?;
    let mut cfg = PreprocessConfig::default();
    match args.method {
        PreMethod::Hessian => {
            cfg.method = PreprocessMethod::Hessian;
            if let Some(t) = args.threshold {
                cfg.ridge.response_threshold = t;
            }
            if args.low.is_some() {
                return Err(CliError::Usage("--low only applies to --method canny".into()));
            }
        }
        PreMethod::Canny => {
            cfg.method = PreprocessMethod::Canny;
            if let Some(t) = args.threshold {
                cfg.canny_high = t;
                cfg.canny_low = t / 3.0;
            }
            if let Some(l) = args.low {
                cfg.canny_low = l;
            }
        }
    }
    if let Some(s) = args.sigma {
        cfg.ridge.sigma = s;
    }
    if let Some(p) = args.polarity {
        cfg.ridge.polarity = match p {
            PolarityArg::Bright => Polarity::BrightLine,
            PolarityArg::Dark => Polarity::DarkLine,
            PolarityArg::Both => Polarity::Both,
        };
    }
    let edges = pipeline::preprocess(&img, &cfg).map_err(|e| CliError::at(&args.input, e))?;
    write_bytes(&args.output, &raster::write_pgm(&edges.to_gray()))
}

fn run_detect(args: DetectArgs) -> CliResult {
    let mut cfg: PipelineConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = args.method {
        cfg = cfg.with_method(m.into());
    }
    if let Some(seed) = args.seed {
        cfg.hough.sampling.rng_seed = seed;
    }
    let config_path = args.config.as_deref().unwrap_or(Path::new("<default config>"));
    cfg.validate().map_err(|e| CliError::at(config_path, e))?;
    let img = read_image(&args.input)?;
    let report = pipeline::detect_pipeline(&img, &cfg).map_err(|e| CliError::at(&args.input, e))?;
    let report_path = args.output.or_else(|| cfg.output.report.clone().map(PathBuf::from));
    let csv_path = args.csv.or_else(|| cfg.output.csv.clone().map(PathBuf::from));
    let overlay_path = args.overlay.or_else(|| cfg.output.overlay.clone().map(PathBuf::from));
    emit(report_path.as_deref(), &report.to_json())?;
    if let Some(p) = csv_path {
        write_bytes(&p, report.lines_csv().as_bytes())?;
    }
    if let Some(p) = overlay_path {
        let overlay = raster::render_overlay(&img, &report.retained);
        write_bytes(&p, &raster::write_pgm(&overlay))?;
    }
    Ok(())
}

fn run_synth(args: SynthArgs) -> CliResult {
    let (spec, origin) = match (&args.spec, args.model_seed) {
        (Some(p), _) => (read_json::<SceneSpec>(p)?, p.clone()),
        (None, Some(seed)) => (
            synth::model_scene(seed, &ModelSceneParams::default()),
            PathBuf::from(format!("--model-seed {seed}")),
        ),
        (None, None) => return Err(CliError::Usage("one of --spec or --model-seed is required".into())),
    };
    let (img, truth) = synth::generate_scene(&spec).map_err(|e| CliError::at(&origin, e))?;
    write_bytes(&args.output, &raster::write_pgm(&img))?;
    if let Some(p) = &args.truth {
        write_bytes(p, truth.to_json().as_bytes())?;
    }
    if let Some(p) = &args.spec_out {
        write_bytes(p, spec.to_json().as_bytes())?;
    }
    Ok(())
}

fn load_scenes(dir: &Path) -> CliResult<Vec<(String, SceneSpec)>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::at(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::at(dir, e))?.path();
        if path.extension().is_some_and(|ext| ext == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::at(dir, "no *.json scene specs"));
    }
    let mut scenes = Vec::with_capacity(paths.len());
    for path in paths {
        let spec: SceneSpec = read_json(&path)?;
        spec.validate().map_err(|e| CliError::at(&path, e))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        scenes.push((id, spec));
    }
    Ok(scenes)
}

fn run_bench(args: BenchArgs) -> CliResult {
    let mut cfg: BenchConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => BenchConfig::default(),
    };
    if let Some(r) = args.repetitions {
        cfg.repetitions = r;
    }
    let scenes = load_scenes(&args.scenes)?;
    let records = synth::run_bench(&scenes, &cfg).map_err(|e| CliError::at(&args.scenes, e))?;
    emit(args.output.as_deref(), &synth::bench_csv(&records))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioSet {
    scenarios: Vec<SamplingScenario>,
    trials: Option<u64>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScenarioFile {
    One(SamplingScenario),
    Many(Vec<SamplingScenario>),
    Set(ScenarioSet),
}

const PROB_HEADER: &str = "scenario,total,n,m,i_c,experiments,k0,p_hit,p_hit_improved,p_miss,p_miss_improved,p_false,p_false_improved,mc_hit,mc_hit_se,mc_hit_ok,mc_hit_improved,mc_hit_improved_se,mc_hit_improved_ok";

fn mc_columns(out: &mut String, est: Option<Result<prob::Estimate, prob::ProbError>>, exact: f64) {
    match est {
        Some(Ok(e)) => {
            let ok = e.agrees_with(exact, 3.0);
            let _ = write!(out, ",{:.9},{:.9},{}", e.probability, e.std_error, ok);
        }
        _ => out.push_str(",na,na,na"),
    }
}

fn run_prob(args: ProbArgs) -> CliResult {
    let (scenarios, file_trials, file_seed) = match read_json::<ScenarioFile>(&args.scenario)? {
        ScenarioFile::One(s) => (vec![s], None, None),
        ScenarioFile::Many(v) => (v, None, None),
        ScenarioFile::Set(set) => (set.scenarios, set.trials, set.seed),
    };
    let trials = args.trials.or(file_trials).unwrap_or(100_000);
    let seed = args.seed.or(file_seed).unwrap_or(42);
    let mut out = String::from(PROB_HEADER);
    out.push('\n');
    for (i, s) in scenarios.iter().enumerate() {
        let sum = prob::summarize(s).map_err(|e| CliError::at(&args.scenario, format!("scenario {i}: {e}")))?;
        let _ = write!(
            out,
            "{i},{},{},{},{},{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            s.total,
            s.n,
            s.m,
            s.i_c,
            s.experiments,
            s.k0,
            sum.p_hit,
            sum.p_hit_improved,
            sum.p_miss,
            sum.p_miss_improved,
            sum.p_false,
            sum.p_false_improved,
        );
        let simulate = |pop| (trials > 0).then(|| prob::monte_carlo_hit(s, pop, trials, seed.wrapping_add(i as u64), 1));
        mc_columns(&mut out, simulate(Population::Whole), sum.p_hit);
        let segmented = simulate(Population::Segmented).filter(|r| !matches!(r, Err(prob::ProbError::Fractional { .. })));
        if let Some(Err(e)) = &segmented {
            return Err(CliError::at(&args.scenario, format!("scenario {i}: {e}")));
        }
        mc_columns(&mut out, segmented, sum.p_hit_improved);
        out.push('\n');
    }
    emit(args.output.as_deref(), &out)
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
        Command::Preprocess(a) => run_preprocess(a),
        Command::Detect(a) => run_detect(a),
        Command::Synth(a) => run_synth(a),
        Command::Bench(a) => run_bench(a),
        Command::Prob(a) => run_prob(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
