//! `errslice`: batch pipeline, stability experiments, tuple distances and
//! the HTTP service.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 labeler or
//! transport error.

use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use errslice_core::explanation::dmax;
use errslice_core::io::{load_dataset, load_tuple};
use errslice_core::labeling::{LabelingClient, RemoteClient, RemoteConfig, StubClient};
use errslice_core::model::SizeMode;
use errslice_core::pipeline::{format_group_table, pipeline_run_id, run_pipeline, LabelerChoice, PipelineConfig};
use errslice_core::stability::{convergence_experiment, ClusteringMode, ExperimentConfig};
use errslice_core::store::RunStore;

#[derive(Parser)]
#[command(name = "errslice", version, about = "Find, cluster and label high-loss evaluation slices")]
struct Cli {
    /// Print machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Slice, cluster and label a dataset, then print the group table.
    Pipeline(PipelineArgs),
    /// Run the dmax convergence experiment on a synthetic distribution.
    Stability(StabilityArgs),
    /// Distance between two explanation tuples stored as JSON.
    Dmax(DmaxArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    data: PathBuf,
    /// Loss quantile; the slice keeps records at or above it.
    #[arg(long, default_value_t = 0.98, value_parser = parse_quantile)]
    q: f64,
    /// Cluster count, or `auto`.
    #[arg(long, default_value = "auto", value_parser = parse_k)]
    k: ClusterCount,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16, value_parser = clap::value_parser!(u64).range(1..))]
    restarts: u64,
    /// Split clusters of 25 or more points before labeling.
    #[arg(long)]
    subcluster: bool,
    #[arg(long, default_value = "stub", value_parser = parse_labeler)]
    label: LabelerChoice,
    #[arg(long, default_value = "sentiment classification")]
    task: String,
    #[arg(long, default_value = "count")]
    size_mode: SizeMode,
    /// Run store directory; the run is written to `<out>/<run_id>/`.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

#[derive(Args)]
struct StabilityArgs {
    #[arg(long, default_value = "blobs3")]
    dist: String,
    #[arg(long, value_delimiter = ',', default_value = "256,1024,4096")]
    ns: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0.25)]
    gamma: f64,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value = "restarts")]
    mode: ClusteringMode,
    #[arg(long, default_value_t = 16)]
    restarts: usize,
    /// Fixed perturbation size instead of `floor(n^gamma)`.
    #[arg(long)]
    m_override: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for `stability.csv` and `summary.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DmaxArgs {
    #[arg(long)]
    tuple_a: PathBuf,
    #[arg(long)]
    tuple_b: PathBuf,
    #[arg(long, default_value = "count")]
    size_mode: SizeMode,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "runs")]
    store: PathBuf,
}

fn parse_quantile(s: &str) -> Result<f64, String> {
    let q: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..1.0).contains(&q) {
        Ok(q)
    } else {
        Err(format!("{q} is outside [0, 1)"))
    }
}

/// `None` stands for `auto`.
#[derive(Clone, Copy)]
struct ClusterCount(Option<usize>);

fn parse_k(s: &str) -> Result<ClusterCount, String> {
    if s == "auto" {
        return Ok(ClusterCount(None));
    }
    match s.parse::<usize>() {
        Ok(0) => Err("k must be positive".into()),
        Ok(k) => Ok(ClusterCount(Some(k))),
        Err(_) => Err(format!("expected a positive integer or `auto`, got {s:?}")),
    }
}

fn parse_labeler(s: &str) -> Result<LabelerChoice, String> {
    match s {
        "stub" => Ok(LabelerChoice::Stub),
        "remote" => Ok(LabelerChoice::Remote),
        other => Err(format!("unknown labeler {other:?} (expected stub|remote)")),
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Client(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Client(_) => 4,
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn pipeline(args: PipelineArgs, as_json: bool) -> Result<(), CliError> {
    let dataset = load_dataset(&args.data).map_err(data_err)?;
    let mut config = PipelineConfig {
        q: args.q,
        subcluster: args.subcluster,
        labeler: args.label,
        size_mode: args.size_mode,
        ..PipelineConfig::default()
    };
    config.kmeans.k = args.k.0;
    config.kmeans.seed = args.seed;
    config.kmeans.restarts = args.restarts as usize;
    config.prompt.task = args.task;
    let client: Box<dyn LabelingClient> = match args.label {
        LabelerChoice::Stub => Box::new(StubClient::new()),
        LabelerChoice::Remote => Box::new(RemoteClient::new(
            RemoteConfig::from_env().map_err(|e| CliError::Client(e.to_string()))?,
        )),
    };
    let output = run_pipeline(&dataset, &config, client.as_ref()).map_err(data_err)?;
    let run_id = pipeline_run_id(&dataset, &config);
    let store = RunStore::open(&args.out).map_err(data_err)?;
    store.save(&output.to_artifact(&run_id, &config)).map_err(data_err)?;
    let table = format_group_table(&output.groups, output.overall_accuracy);
    let run_dir = store.root().join(&run_id);
    std::fs::write(run_dir.join("table.txt"), &table).map_err(data_err)?;

    if as_json {
        print_json(&json!({
            "run_id": run_id,
            "run_dir": run_dir,
            "slice_size": output.slice.len(),
            "overall_accuracy": output.overall_accuracy,
            "groups": output.groups,
            "failures": output.failures,
        }));
    } else {
        print!("{table}");
        println!("run {run_id} written to {}", run_dir.display());
    }
    if !output.failures.is_empty() {
        let detail: Vec<String> = output.failures.iter().map(|(c, e)| format!("cluster {c}: {e}")).collect();
        return Err(CliError::Client(format!("labeling failed for {}", detail.join("; "))));
    }
    Ok(())
}

fn stability(args: StabilityArgs, as_json: bool) -> Result<(), CliError> {
    let config = ExperimentConfig {
        distribution: args.dist,
        ns: args.ns,
        trials: args.trials,
        gamma: args.gamma,
        m_override: args.m_override,
        k: args.k,
        mode: args.mode,
        restarts: args.restarts,
        seed: args.seed,
        ..ExperimentConfig::default()
    };
    let report = convergence_experiment(&config).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(dir) = &args.out {
        report.write_to(dir).map_err(data_err)?;
    }
    if as_json {
        print_json(&report.summary_json());
        return Ok(());
    }
    println!("{:>7}  {:>5}  {:>12}  {:>12}  {:>10}", "n", "m", "median dmax", "p90 dmax", "violations");
    for s in &report.per_n {
        println!(
            "{:>7}  {:>5}  {:>12.6}  {:>12.6}  {:>10}",
            s.n, s.m, s.median_dmax, s.p90_dmax, s.violations
        );
    }
    match report.kendall_tau {
        Some(t) => println!("kendall tau {t:.3}"),
        None => println!("kendall tau n/a"),
    }
    println!("bound violation rate {:.4}", report.violation_rate);
    Ok(())
}

fn dmax_cmd(args: DmaxArgs, as_json: bool) -> Result<(), CliError> {
    let a = load_tuple(&args.tuple_a).map_err(data_err)?;
    let b = load_tuple(&args.tuple_b).map_err(data_err)?;
    let d = dmax(&a, &b, args.size_mode).map_err(data_err)?;
    if as_json {
        print_json(&json!({ "dmax": d, "k": a.k(), "size_mode": args.size_mode }));
    } else {
        println!("{d}");
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(data_err)?;
    runtime
        .block_on(errslice_service::serve(addr, Path::new(&args.store)))
        .map_err(data_err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Pipeline(a) => pipeline(a, cli.json),
        Command::Stability(a) => stability(a, cli.json),
        Command::Dmax(a) => dmax_cmd(a, cli.json),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
