//! Command-line interface.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::attribution::{self, AttributionResult, Baseline, Method, MAX_EXACT_FEATURES};
use crate::coalition::ScalingMode;
use crate::diagnostics::{self, CheckSettings};
use crate::error::{Error, Result};
use crate::harness::{run_comparison, ComparisonConfig, EvalCounter, CSV_HEADER};
use crate::network::{generate_random_model, load_model, random_input, Arch, Model};
use crate::tensor::Tensor;

/// Environment variable that forces single-threaded, fixed-order execution.
pub const STRICT_ENV: &str = "SHAPPROP_STRICT";

#[derive(Debug, Parser)]
#[command(
    name = "shapprop",
    version,
    about = "Shapley-value explanations for small feed-forward networks",
    long_about = "Shapley-value explanations for small feed-forward networks.\n\n\
        All randomness flows from --seed; when it is omitted a fresh seed is chosen \
        and printed to stderr. Set SHAPPROP_STRICT=1 to force single-threaded, \
        fixed-order execution."
)]
pub struct CliConfig {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explain one model output with one attribution method.
    Attribute(AttributeArgs),
    /// Benchmark methods against ground truth and write a CSV report.
    Compare(CompareArgs),
    /// Exact Shapley values by full subset enumeration (N <= 25).
    Oracle(OracleArgs),
    /// Write a randomly initialized model.
    GenModel(GenModelArgs),
    /// Run the Monte-Carlo checks of the moment-matching machinery.
    MomentsCheck(MomentsCheckArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input_source").required(true).args(["input", "input_seed"])))]
pub struct TargetArgs {
    /// Model file (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Input vector: JSON array or single-column CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Draw the input from a standard normal with this seed.
    #[arg(long)]
    pub input_seed: Option<u64>,
    /// Output unit to explain.
    #[arg(long = "class", default_value_t = 0)]
    pub class_index: usize,
    /// Baseline: `zero`, a constant, or a file holding a vector.
    #[arg(long, default_value = "zero")]
    pub baseline: String,
}

#[derive(Debug, Args)]
pub struct AttributeArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    /// exact_shapley, shapley_sampling, occlusion, gradient_x_input,
    /// integrated_gradients or dasp.
    #[arg(long)]
    pub method: Method,
    /// Number of coalition sizes for dasp (default: N).
    #[arg(long = "K")]
    pub k: Option<usize>,
    /// Permutations for shapley_sampling.
    #[arg(long, default_value_t = 1000)]
    pub permutations: usize,
    /// Integration steps for integrated_gradients.
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use the finite-population factor k(N-k)/(N-1) instead of the
    /// corrected k(M-k)/(M-1) with M = N-1.
    #[arg(long)]
    pub paper_verbatim_scaling: bool,
    /// Output file (JSON).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Benchmark configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Report file (CSV).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub target: TargetArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenModelArgs {
    /// Architecture, e.g. `18-32-relu-32-relu-1`.
    #[arg(long)]
    pub arch: String,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MomentsCheckArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 100)]
    pub cases: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses and validates arguments. `argv[0]` is the program name.
pub fn parse_cli<I, T>(argv: I) -> std::result::Result<CliConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    CliConfig::try_parse_from(argv)
}

pub fn strict_mode() -> bool {
    std::env::var(STRICT_ENV).is_ok_and(|v| v == "1")
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 66,
        _ => 1,
    }
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses a vector from a JSON array or a single-column CSV.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    if let Ok(v) = serde_json::from_str::<Vec<f64>>(text) {
        return Ok(v);
    }
    let mut out = Vec::new();
    for (idx, line) in text.lines().map(str::trim).enumerate() {
        if line.is_empty() {
            continue;
        }
        match line.parse::<f64>() {
            Ok(v) => out.push(v),
            // A header line is allowed.
            Err(_) if idx == 0 => {}
            Err(_) => {
                return Err(Error::Parse(format!(
                    "line {}: `{line}` is not a number",
                    idx + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("no values in vector file".into()));
    }
    Ok(out)
}

fn load_vector(path: &Path, model: &Model) -> Result<Tensor> {
    let values = parse_vector(&read_text(path)?)?;
    if values.len() != model.num_features() {
        return Err(Error::shape(format!(
            "{} holds {} values, model has {} features",
            path.display(),
            values.len(),
            model.num_features()
        )));
    }
    Tensor::new(model.input_shape().to_vec(), values)
}

fn parse_baseline(spec: &str, model: &Model) -> Result<Tensor> {
    let baseline = match spec {
        "zero" | "zeros" => Baseline::Zero,
        s => match s.parse::<f64>() {
            Ok(v) => Baseline::Constant(v),
            Err(_) => Baseline::Values(load_vector(Path::new(s), model)?),
        },
    };
    baseline.materialize(model)
}

struct Target {
    model: Model,
    x: Tensor,
    baseline: Tensor,
    class: usize,
}

fn load_target(args: &TargetArgs) -> Result<Target> {
    let model = load_model(&args.model)?;
    let x = match (&args.input, args.input_seed) {
        (Some(path), _) => load_vector(path, &model)?,
        (None, Some(seed)) => random_input(model.input_shape(), seed),
        (None, None) => unreachable!("clap enforces an input source"),
    };
    if args.class_index >= model.output_dim() {
        return Err(Error::InvalidArgument(format!(
            "class {} out of range for {} outputs",
            args.class_index,
            model.output_dim()
        )));
    }
    let baseline = parse_baseline(&args.baseline, &model)?;
    Ok(Target {
        model,
        x,
        baseline,
        class: args.class_index,
    })
}

/// Writes `contents` and reads it back to confirm the artifact is complete.
fn write_checked(path: &Path, contents: &str, validate: impl Fn(&str) -> Result<()>) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(contents.as_bytes())
        .and_then(|_| file.sync_all())
        .map_err(|e| Error::io(path, e))?;
    let back = read_text(path)?;
    if back != contents {
        return Err(Error::io(
            path,
            std::io::Error::other("file contents differ after write"),
        ));
    }
    validate(&back)
}

fn write_attribution(path: &Path, result: &AttributionResult) -> Result<()> {
    write_checked(path, &(result.to_json() + "\n"), |text| {
        serde_json::from_str::<AttributionResult>(text)
            .map(|_| ())
            .map_err(|e| Error::Parse(e.to_string()))
    })
}

fn attribute(args: &AttributeArgs) -> Result<()> {
    let t = load_target(&args.target)?;
    let counter = EvalCounter::new();
    let n = t.model.num_features();
    let scaling = if args.paper_verbatim_scaling {
        ScalingMode::PaperVerbatim
    } else {
        ScalingMode::Corrected
    };
    let result = match args.method {
        Method::ExactShapley => {
            check_oracle_size(n)?;
            attribution::exact_shapley(&t.model, &t.x, t.class, &t.baseline, &counter)?
        }
        Method::ShapleySampling => {
            let seed = resolve_seed(args.seed);
            attribution::shapley_sampling(
                &t.model,
                &t.x,
                t.class,
                args.permutations,
                seed,
                &t.baseline,
                &counter,
            )?
        }
        Method::Occlusion => {
            attribution::occlusion(&t.model, &t.x, t.class, &t.baseline, &counter)?
        }
        Method::GradientXInput => attribution::gradient_x_input(&t.model, &t.x, t.class, &counter)?,
        Method::IntegratedGradients => attribution::integrated_gradients(
            &t.model,
            &t.x,
            t.class,
            args.steps,
            &t.baseline,
            &counter,
        )?,
        Method::Dasp => attribution::dasp(
            &t.model,
            &t.x,
            t.class,
            args.k.unwrap_or(n),
            &t.baseline,
            scaling,
            &counter,
        )?,
    };
    debug_assert_eq!(result.eval_count, counter.total());
    write_attribution(&args.out, &result)
}

fn check_oracle_size(n: usize) -> Result<()> {
    if n > MAX_EXACT_FEATURES {
        eprintln!(
            "exact Shapley values for {n} features need 2^{n} = {} forward passes; \
             the oracle is limited to N <= {MAX_EXACT_FEATURES}. Use shapley_sampling instead.",
            1u128 << n.min(127)
        );
        return Err(Error::TooManyFeatures {
            n,
            max: MAX_EXACT_FEATURES,
        });
    }
    Ok(())
}

fn oracle(args: &OracleArgs) -> Result<()> {
    let t = load_target(&args.target)?;
    check_oracle_size(t.model.num_features())?;
    let result =
        attribution::exact_shapley(&t.model, &t.x, t.class, &t.baseline, &EvalCounter::new())?;
    write_attribution(&args.out, &result)
}

fn compare(args: &CompareArgs) -> Result<()> {
    let mut config = ComparisonConfig::from_json(&read_text(&args.config)?)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let report = run_comparison(&config)?;
    let expected_lines = report.rows.len() + 1;
    write_checked(&args.out, &report.to_csv(), |text| {
        let ok = text.lines().next() == Some(CSV_HEADER) && text.lines().count() == expected_lines;
        if ok {
            Ok(())
        } else {
            Err(Error::Parse("report failed validation after write".into()))
        }
    })
}

fn gen_model(args: &GenModelArgs) -> Result<()> {
    let arch: Arch = args.arch.parse()?;
    let seed = resolve_seed(args.seed);
    let model = generate_random_model(seed, &arch)?;
    write_checked(&args.out, &(model.to_json() + "\n"), |text| {
        Model::from_json(text).map(|_| ())
    })
}

fn moments_check(args: &MomentsCheckArgs) -> Result<()> {
    let settings = CheckSettings {
        samples: args.samples,
        cases: args.cases,
        seed: resolve_seed(args.seed),
    };
    let outcomes = diagnostics::run_all(&settings);
    let mut failed = 0;
    for o in &outcomes {
        println!(
            "[{}] {} ({})",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    if failed > 0 {
        return Err(Error::InvalidArgument(format!(
            "{failed} moment checks failed"
        )));
    }
    Ok(())
}

/// Runs a parsed command.
pub fn run(config: &CliConfig) -> Result<()> {
    let jobs = if strict_mode() { Some(1) } else { config.jobs };
    if let Some(jobs) = jobs {
        // Fails only if a pool already exists, in which case that one is used.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
    match &config.command {
        Command::Attribute(a) => attribute(a),
        Command::Compare(a) => compare(a),
        Command::Oracle(a) => oracle(a),
        Command::GenModel(a) => gen_model(a),
        Command::MomentsCheck(a) => moments_check(a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &str) -> std::result::Result<CliConfig, clap::Error> {
        parse_cli(std::iter::once("shapprop").chain(args.split_whitespace()))
    }

    #[test]
    fn attribute_dasp() {
        let c = parse(
            "attribute --model m.json --input x.json --method dasp --K 8 --class 0 --out r.json",
        )
        .unwrap();
        let Command::Attribute(a) = c.command else {
            panic!("wrong command")
        };
        assert_eq!(a.method, Method::Dasp);
        assert_eq!(a.k, Some(8));
        assert_eq!(a.target.class_index, 0);
        assert!(!a.paper_verbatim_scaling);
    }

    #[test]
    fn missing_model_is_usage_error() {
        let err = parse("attribute --method dasp").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = parse("attribute --model m.json --method dasp --out r.json").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = parse("attribute --model m.json --input x --method lrp --out r").unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn compare_parses() {
        let c = parse("compare --config bench.json --out report.csv").unwrap();
        assert!(matches!(c.command, Command::Compare(_)));
    }

    #[test]
    fn help_is_not_an_error_exit() {
        let err = parse("--help").unwrap_err();
        assert_eq!(err.exit_code(), 0);
        let help = err.to_string();
        for cmd in [
            "attribute",
            "compare",
            "oracle",
            "gen-model",
            "moments-check",
        ] {
            assert!(help.contains(cmd), "{cmd} missing from help");
        }
    }

    #[test]
    fn vector_formats() {
        assert_eq!(parse_vector("[1, 2.5, -3]").unwrap(), vec![1.0, 2.5, -3.0]);
        assert_eq!(
            parse_vector("x\n1\n2.5\n\n-3\n").unwrap(),
            vec![1.0, 2.5, -3.0]
        );
        assert!(parse_vector("1\nfoo\n").is_err());
        assert!(parse_vector("").is_err());
    }

    #[test]
    fn not_found_maps_to_66() {
        let err = load_model("/nonexistent/model.json").unwrap_err();
        assert_eq!(exit_code(&err), 66);
        assert_eq!(exit_code(&Error::Shape("x".into())), 1);
    }
}
