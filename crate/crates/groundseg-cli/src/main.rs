use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use groundseg::cloud::{Label, LabeledCloud};
use groundseg::pipeline;
use groundseg::synth::{self, TerrainSpec};
use groundseg_cli::config::{self, FlagOverrides, RunConfig};
use groundseg_cli::driver::{self, StageTimings};
use groundseg_cli::gradcheck;
use groundseg_cli::io;

/// Ground segmentation of LiDAR point clouds via per-segment Gaussian
/// process regression with input-dependent length-scales.
#[derive(Parser)]
#[command(name = "groundseg", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Label a point cloud and write the result as CSV.
    Segment(SegmentArgs),
    /// Generate a labeled synthetic frame from a terrain spec.
    Synth(SynthArgs),
    /// Score a labeled CSV against ground truth.
    Eval(EvalArgs),
    /// Time repeated pipeline runs on a synthetic frame.
    Bench(BenchArgs),
    /// Compare analytic training gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of angular segments.
    #[arg(long)]
    segments: Option<u32>,
    /// Ground-test deviation threshold.
    #[arg(long)]
    td: Option<f64>,
    /// Ground-test variance threshold (m^2).
    #[arg(long)]
    tv: Option<f64>,
    /// Inner radial cutoff (m).
    #[arg(long)]
    rmin: Option<f64>,
    /// Outer radial cutoff (m).
    #[arg(long)]
    rmax: Option<f64>,
    /// Worker threads for per-segment stages; 0 = one per core.
    #[arg(long)]
    jobs: Option<usize>,
    /// Random seed where a command draws randomness.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let flags = FlagOverrides {
            segments: self.segments,
            t_d: self.td,
            t_v: self.tv,
            r_min: self.rmin,
            r_max: self.rmax,
        };
        config::resolve(self.config.as_deref(), &flags, self.jobs, self.seed)
            .map_err(|e| Failure::input(e.to_string()))
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Auto,
    Pcd,
    Csv,
}

#[derive(Args)]
struct SegmentArgs {
    /// Input cloud (.pcd ASCII or .csv).
    input: PathBuf,
    /// Output CSV path.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    format: InputFormat,
    /// Force the CSV header interpretation instead of sniffing.
    #[arg(long)]
    has_header: Option<bool>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct SynthArgs {
    /// Terrain spec (JSON).
    spec: PathBuf,
    /// Output cloud path (.pcd).
    #[arg(long)]
    cloud: PathBuf,
    /// Output truth path (.csv).
    #[arg(long)]
    truth: PathBuf,
    /// Override the spec's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Labeled CSV produced by `segment`.
    predicted: PathBuf,
    /// Truth CSV produced by `synth`.
    truth: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Terrain spec (JSON) for the benchmark frame.
    spec: PathBuf,
    /// Timed repetitions (one extra warm-up run is excluded).
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Random training instances to draw.
    #[arg(long, default_value_t = 20)]
    segments: usize,
    #[arg(long, default_value_t = 15)]
    max_candidates: usize,
    #[arg(long, default_value_t = 6)]
    max_support: usize,
    /// Write the per-coordinate CSV here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Deliberately corrupt the analytic gradient (negative control).
    #[arg(long)]
    corrupt: bool,
}

/// Failure with its process exit code: 2 for usage/input problems, 1 for
/// check failures and internal errors.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn check(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<io::IoError> for Failure {
    fn from(e: io::IoError) -> Self {
        Failure::input(e.to_string())
    }
}

impl From<groundseg::Error> for Failure {
    fn from(e: groundseg::Error) -> Self {
        Failure::input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Segment(a) => cmd_segment(a),
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::Gradcheck(a) => cmd_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_cloud(
    path: &Path,
    format: InputFormat,
    has_header: Option<bool>,
) -> Result<io::LoadReport, Failure> {
    let is_pcd = match format {
        InputFormat::Pcd => true,
        InputFormat::Csv => false,
        InputFormat::Auto => path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("pcd")),
    };
    if is_pcd {
        Ok(io::load_pcd(path)?)
    } else {
        let header = match has_header {
            Some(h) => h,
            None => io::csv_has_header(path)?,
        };
        Ok(io::load_csv(path, header)?)
    }
}

#[derive(Serialize)]
struct LabelCounts {
    ground: usize,
    obstacle: usize,
    unassigned: usize,
}

fn count_labels(labeled: &LabeledCloud) -> LabelCounts {
    let mut c = LabelCounts {
        ground: 0,
        obstacle: 0,
        unassigned: 0,
    };
    for l in &labeled.labels {
        match l {
            Label::Ground => c.ground += 1,
            Label::Obstacle => c.obstacle += 1,
            Label::Unassigned => c.unassigned += 1,
        }
    }
    c
}

fn cmd_segment(args: SegmentArgs) -> Result<(), Failure> {
    // Config first: a bad key must fail before the cloud is read.
    let rc = args.cfg.resolve()?;
    let loaded = load_cloud(&args.input, args.format, args.has_header)?;
    let pool = driver::make_pool(rc.jobs).map_err(|e| Failure::check(e.to_string()))?;
    let (labeled, summary) = driver::run_frame(&loaded.cloud, &rc.pipeline, &pool)?;
    io::write_labeled(&args.output, &labeled, &loaded.cloud)?;

    #[derive(Serialize)]
    struct SegmentSummary {
        input: String,
        output: String,
        points: usize,
        dropped_non_finite: usize,
        excluded: usize,
        labels: LabelCounts,
        wall_ms: f64,
        timings: StageTimings,
        segments: Vec<driver::SegmentDiag>,
    }
    let out = SegmentSummary {
        input: args.input.display().to_string(),
        output: args.output.display().to_string(),
        points: summary.points,
        dropped_non_finite: loaded.dropped_non_finite,
        excluded: summary.excluded,
        labels: count_labels(&labeled),
        wall_ms: summary.timings.total_ms,
        timings: summary.timings,
        segments: summary.segments,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(())
}

fn read_spec(path: &Path, seed: Option<u64>) -> Result<TerrainSpec, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read spec {}: {e}", path.display())))?;
    let mut spec: TerrainSpec = serde_json::from_str(&text)
        .map_err(|e| Failure::input(format!("spec {}: {e}", path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let spec = read_spec(&args.spec, args.seed)?;
    let (cloud, labels) = synth::generate(&spec)?;
    io::write_pcd(&args.cloud, &cloud)?;
    io::write_truth(&args.truth, &cloud, &labels)?;

    #[derive(Serialize)]
    struct SynthSummary {
        points: usize,
        ground: usize,
        obstacle: usize,
        cloud: String,
        truth: String,
    }
    let ground = labels.iter().filter(|&&l| l == Label::Ground).count();
    let out = SynthSummary {
        points: cloud.len(),
        ground,
        obstacle: cloud.len() - ground,
        cloud: args.cloud.display().to_string(),
        truth: args.truth.display().to_string(),
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let predicted = io::load_labels(&args.predicted)?;
    let truth = io::load_labels(&args.truth)?;
    let mut labeled = LabeledCloud::unassigned(predicted.len());
    labeled.labels = predicted;
    // Per-segment breakdown needs segment ids, which label files do not
    // carry; the frame-level rates are unaffected.
    let metrics = pipeline::evaluate(&labeled, &truth)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&metrics).expect("serializable")
    );
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let rc = args.cfg.resolve()?;
    if args.reps == 0 {
        return Err(Failure::input("--reps must be >= 1"));
    }
    let spec = read_spec(&args.spec, args.cfg.seed)?;
    let (cloud, _) = synth::generate(&spec)?;
    let pool = driver::make_pool(rc.jobs).map_err(|e| Failure::check(e.to_string()))?;

    // Warm-up run, excluded from the statistics.
    driver::run_frame(&cloud, &rc.pipeline, &pool)?;
    let mut reps: Vec<StageTimings> = Vec::with_capacity(args.reps);
    for _ in 0..args.reps {
        let t = Instant::now();
        let (labeled, summary) = driver::run_frame(&cloud, &rc.pipeline, &pool)?;
        let mut timings = summary.timings;
        timings.total_ms = t.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(&labeled);
        reps.push(timings);
    }

    #[derive(Serialize)]
    struct BenchSummary {
        points: usize,
        jobs: usize,
        reps: Vec<StageTimings>,
        mean_ms: f64,
        min_ms: f64,
        stage_means: StageTimings,
    }
    let n = reps.len() as f64;
    let mean = |f: fn(&StageTimings) -> f64| reps.iter().map(f).sum::<f64>() / n;
    let out = BenchSummary {
        points: cloud.len(),
        jobs: rc.jobs,
        mean_ms: mean(|t| t.total_ms),
        min_ms: reps.iter().map(|t| t.total_ms).fold(f64::INFINITY, f64::min),
        stage_means: StageTimings {
            prepare_ms: mean(|t| t.prepare_ms),
            train_ms: mean(|t| t.train_ms),
            classify_ms: mean(|t| t.classify_ms),
            merge_ms: mean(|t| t.merge_ms),
            total_ms: mean(|t| t.total_ms),
        },
        reps,
    };
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), Failure> {
    if args.segments == 0 {
        return Err(Failure::input("--segments must be >= 1"));
    }
    let report = gradcheck::run(
        args.seed,
        args.segments,
        args.max_candidates,
        args.max_support,
        args.corrupt,
    );
    let csv = gradcheck::to_csv(&report);
    match &args.output {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| Failure::input(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    eprintln!("max relative error: {:.3e}", report.max_rel_error);
    if report.max_rel_error >= 1e-4 {
        return Err(Failure::check(
            "analytic gradient disagrees with finite differences",
        ));
    }
    Ok(())
}
