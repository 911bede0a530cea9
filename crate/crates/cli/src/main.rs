use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mala::agglomerate::{self, Bins, MergeFunction, MergeHistory};
use mala::bench;
use mala::io;
use mala::malis::{self, Pass};
use mala::metrics;
use mala::pipeline::{run_pipeline, PipelineConfig};
use mala::synth::SynthSpec;
use mala::watershed::{extract_fragments, Mode};
use mala::{Error, Result};

#[derive(Parser)]
#[command(name = "mala", version, about = "Affinity-based segmentation of 3D volumes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate Voronoi ground truth and matching affinities.
    Synth(SynthArgs),
    /// Extract watershed fragments from affinities.
    Watershed(WatershedArgs),
    /// Build the region adjacency graph and write a merge history.
    Agglomerate(AgglomerateArgs),
    /// Replay a merge history up to a threshold.
    Segment(SegmentArgs),
    /// Compare a segmentation with ground truth.
    Evaluate(EvaluateArgs),
    /// MALIS loss and gradient.
    Malis(MalisArgs),
    /// Time bucket-queue against binary-heap agglomeration.
    Bench(BenchArgs),
    /// Run all stages end to end.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON file with a full spec; the flags below override it.
    #[arg(long, env = "MALA_SYNTH_SPEC")]
    spec: Option<PathBuf>,
    /// Volume shape as z,y,x.
    #[arg(long, value_parser = parse_shape)]
    shape: Option<[usize; 3]>,
    #[arg(long)]
    regions: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    flip: Option<f64>,
    #[arg(long, env = "MALA_SEED")]
    seed: Option<u64>,
    /// Output directory; receives `gt` and `affinities`.
    #[arg(long, env = "MALA_OUT")]
    out: PathBuf,
}

#[derive(Args)]
struct WatershedArgs {
    #[arg(long)]
    affinities: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "MALA_MODE", default_value = "3d")]
    mode: Mode,
}

#[derive(Args)]
struct AgglomerateArgs {
    #[arg(long)]
    affinities: PathBuf,
    #[arg(long)]
    fragments: PathBuf,
    /// History CSV to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "MALA_MERGE_FUNCTION", default_value = "quantile:0.5")]
    merge_function: MergeFunction,
    /// Stop before the first merge scored at or above this value.
    #[arg(long, env = "MALA_THRESHOLD", default_value_t = 1.0)]
    threshold: f64,
    #[arg(long, env = "MALA_BINS", default_value_t = agglomerate::DEFAULT_BINS)]
    bins: usize,
    /// Use the binary-heap implementation.
    #[arg(long)]
    naive: bool,
}

#[derive(Args)]
struct SegmentArgs {
    #[arg(long)]
    fragments: PathBuf,
    #[arg(long)]
    history: PathBuf,
    #[arg(long, env = "MALA_THRESHOLD")]
    threshold: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, required_unless_present = "sweep")]
    segmentation: Option<PathBuf>,
    /// Count voxels whose ground-truth label is 0.
    #[arg(long)]
    include_background: bool,
    /// Write a per-threshold CSV; needs --fragments and --history.
    #[arg(long, requires_all = ["fragments", "history"])]
    sweep: Option<PathBuf>,
    #[arg(long)]
    fragments: Option<PathBuf>,
    #[arg(long)]
    history: Option<PathBuf>,
    /// Number of equal threshold steps in [0, 1].
    #[arg(long, default_value_t = 20)]
    steps: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PassArg {
    Constrained,
    Positive,
    Negative,
    Unconstrained,
}

#[derive(Args)]
struct MalisArgs {
    #[arg(long)]
    affinities: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Gradient volume to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "constrained")]
    pass: PassArg,
    /// Use the quadratic reference implementation.
    #[arg(long)]
    brute_force: bool,
    #[arg(long, env = "MALA_ORACLE_LIMIT", default_value_t = malis::ORACLE_LIMIT)]
    oracle_limit: usize,
}

#[derive(Args)]
struct BenchArgs {
    /// Ascending RAG edge counts.
    #[arg(long, value_delimiter = ',', default_value = "10000,100000,1000000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    repeats: usize,
    #[arg(long, env = "MALA_MERGE_FUNCTION", default_value = "quantile:0.5")]
    merge_function: MergeFunction,
    #[arg(long, env = "MALA_SEED", default_value_t = 0)]
    seed: u64,
    /// CSV output; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON config file; the flags below override it.
    #[arg(long, env = "MALA_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "MALA_MODE")]
    mode: Option<Mode>,
    #[arg(long, env = "MALA_MERGE_FUNCTION")]
    merge_function: Option<MergeFunction>,
    #[arg(long, env = "MALA_THRESHOLD")]
    threshold: Option<f64>,
    #[arg(long, env = "MALA_BINS")]
    bins: Option<usize>,
    #[arg(long, env = "MALA_ORACLE_LIMIT")]
    oracle_limit: Option<usize>,
    #[arg(long)]
    affinities: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    /// JSON file with a synth spec used as input.
    #[arg(long)]
    synth: Option<PathBuf>,
    #[arg(long, env = "MALA_OUT")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    include_background: bool,
}

fn parse_shape(s: &str) -> std::result::Result<[usize; 3], String> {
    let dims: Vec<usize> = s
        .split(',')
        .map(|d| d.trim().parse().map_err(|e| format!("{d:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    dims.try_into().map_err(|_| "expected three comma-separated dimensions z,y,x".to_string())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Io { path: "<stdout>".into(), source: e }),
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.into(), source })
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut spec = match &args.spec {
        Some(path) => read_json::<SynthSpec>(path)?,
        None => SynthSpec::clean([16, 16, 16], 4, 0),
    };
    spec.shape = args.shape.unwrap_or(spec.shape);
    spec.n_regions = args.regions.unwrap_or(spec.n_regions);
    spec.noise_sigma = args.sigma.unwrap_or(spec.noise_sigma);
    spec.flip_prob = args.flip.unwrap_or(spec.flip_prob);
    spec.seed = args.seed.unwrap_or(spec.seed);
    spec.validate()?;
    let (gt, aff) = spec.generate::<f32>()?;
    fs::create_dir_all(&args.out).map_err(|source| Error::Io { path: args.out.clone(), source })?;
    io::write_labels(&gt, args.out.join("gt"))?;
    io::write_affinities(&aff, args.out.join("affinities"))?;
    print_json(&spec)
}

fn watershed(args: WatershedArgs) -> Result<()> {
    let aff = io::read_affinities(&args.affinities)?;
    let fragments = extract_fragments(&aff, args.mode);
    io::write_labels(&fragments, &args.out)?;
    let count = fragments.labels().into_iter().filter(|&l| l != 0).count();
    print_json(&json!({ "mode": args.mode, "fragments": count }))
}

fn agglomerate_cmd(args: AgglomerateArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(Error::InvalidThreshold(args.threshold));
    }
    let aff = io::read_affinities(&args.affinities)?;
    let fragments = io::read_labels(&args.fragments)?;
    let rag = agglomerate::build_rag(&fragments, &aff, Bins::new(args.bins)?)?;
    let history = if args.naive {
        agglomerate::naive_agglomerate(&rag, args.merge_function, args.threshold)?
    } else {
        agglomerate::agglomerate(&rag, args.merge_function, args.threshold)?
    };
    history.save(&args.out)?;
    print_json(&json!({
        "nodes": rag.nodes().len(),
        "edges": rag.edges().len(),
        "merges": history.len(),
        "merge_function": args.merge_function,
    }))
}

fn segment(args: SegmentArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(Error::InvalidThreshold(args.threshold));
    }
    let fragments = io::read_labels(&args.fragments)?;
    let history = MergeHistory::load(&args.history)?;
    let segmentation = agglomerate::extract_segmentation(&fragments, &history, args.threshold);
    io::write_labels(&segmentation, &args.out)?;
    let count = segmentation.labels().into_iter().filter(|&l| l != 0).count();
    print_json(&json!({ "threshold": args.threshold, "segments": count }))
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let gt = io::read_labels(&args.gt)?;
    let ignore = !args.include_background;
    if let (Some(out), Some(fragments), Some(history)) = (&args.sweep, &args.fragments, &args.history) {
        let fragments = io::read_labels(fragments)?;
        let history = MergeHistory::load(history)?;
        let steps = args.steps.max(1);
        let mut csv = String::from("threshold,voi_split,voi_merge,voi_total,arand,cremi_score\n");
        for i in 0..=steps {
            let threshold = i as f64 / steps as f64;
            let seg = agglomerate::extract_segmentation(&fragments, &history, threshold);
            let r = metrics::evaluate(&seg, &gt, ignore)?;
            csv.push_str(&format!(
                "{threshold},{},{},{},{},{}\n",
                r.voi_split, r.voi_merge, r.voi_total, r.arand, r.cremi_score
            ));
        }
        write_text(out, &csv)?;
    }
    match &args.segmentation {
        Some(path) => print_json(&metrics::evaluate(&io::read_labels(path)?, &gt, ignore)?),
        None => Ok(()),
    }
}

fn malis_cmd(args: MalisArgs) -> Result<()> {
    let aff = io::read_affinities(&args.affinities)?.cast::<f64>();
    let gt = io::read_labels(&args.gt)?;
    let result = match (args.pass, args.brute_force) {
        (PassArg::Constrained, false) => malis::constrained_malis(&aff, &gt)?,
        (PassArg::Constrained, true) => malis::brute_force_constrained_malis_with_limit(&aff, &gt, args.oracle_limit)?,
        (pass, brute) => {
            let pass = match pass {
                PassArg::Positive => Pass::Positive,
                PassArg::Negative => Pass::Negative,
                _ => Pass::Unconstrained,
            };
            if brute {
                malis::brute_force_malis_with_limit(&aff, &gt, pass, args.oracle_limit)?
            } else {
                malis::malis_pass(&aff, &gt, pass)?
            }
        }
    };
    io::write_edges(&result.gradient, &args.out)?;
    let forest = malis::maximin_decompose(&aff, &gt)?;
    print_json(&json!({
        "loss": result.loss,
        "pos_pairs": forest.pos_pairs(),
        "neg_pairs": forest.neg_pairs(),
        "background_pairs": forest.background_pairs(),
        "maximin_edges": forest.edges.len(),
    }))
}

fn bench_cmd(args: BenchArgs) -> Result<()> {
    let rows = bench::bench_agglomeration(&args.sizes, args.repeats, args.merge_function, args.seed)?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|source| Error::Io { path: path.clone(), source })?;
            bench::write_bench_csv(&rows, file)
        }
        None => bench::write_bench_csv(&rows, std::io::stdout().lock()),
    }
}

fn pipeline(args: PipelineArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    config.mode = args.mode.unwrap_or(config.mode);
    config.merge_function = args.merge_function.unwrap_or(config.merge_function);
    config.threshold = args.threshold.unwrap_or(config.threshold);
    config.bins = args.bins.unwrap_or(config.bins);
    config.oracle_limit = args.oracle_limit.unwrap_or(config.oracle_limit);
    if let Some(path) = args.affinities {
        config.affinities = Some(path);
        config.synth = None;
    }
    if let Some(path) = &args.synth {
        config.synth = Some(read_json(path)?);
        config.affinities = None;
    }
    if args.gt.is_some() {
        config.ground_truth = args.gt;
    }
    if let Some(dir) = args.out_dir {
        config.output_dir = dir;
    }
    if args.include_background {
        config.ignore_gt_background = false;
    }
    print_json(&run_pipeline(&config)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Watershed(a) => watershed(a),
        Command::Agglomerate(a) => agglomerate_cmd(a),
        Command::Segment(a) => segment(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Malis(a) => malis_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Pipeline(a) => pipeline(a),
    }
}

fn report_error(kind: &str, message: String) {
    let body = json!({ "error": kind, "message": message });
    let _ = writeln!(std::io::stderr(), "{body}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("usage", e.to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
