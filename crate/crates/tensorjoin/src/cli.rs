//! Command-line entry point: catalog loading, configuration resolution, the
//! query command, calibration, and the benchmark drivers.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::catalog::Catalog;
use crate::error::{Error, Result};
use crate::exec::{execute_with_oracle, Engine};
use crate::harness;
use crate::kernels::Precision;
use crate::planner::{calibrate, EngineConfig, PlanMode, PlanOptions};

pub const CONFIG_ENV: &str = "TENSORJOIN_CONFIG";
pub const DEFAULT_CONFIG_PATH: &str = "calibration.json";

#[derive(Debug, Parser)]
#[command(
    name = "tensorjoin",
    about = "Analytic query engine that runs joins and group-by aggregates as matrix multiplications"
)]
pub struct Cli {
    /// Directory of CSV tables (one table per file, name = file stem).
    #[arg(long, global = true, default_value = ".")]
    pub catalog: PathBuf,
    /// Calibration/config file; TENSORJOIN_CONFIG overrides the default.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Output::Human)]
    pub output: Output,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Output {
    Human,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Auto,
    ForceMatmul,
    ForceFallback,
    ForceSparse,
    ForceBlocked,
}

impl From<Mode> for PlanMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Auto => PlanMode::Auto,
            Mode::ForceMatmul => PlanMode::ForceMatmul,
            Mode::ForceFallback => PlanMode::ForceFallback,
            Mode::ForceSparse => PlanMode::ForceSparse,
            Mode::ForceBlocked => PlanMode::ForceBlocked,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PrecisionArg {
    Int4,
    Int8,
    Half,
    F32,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::Int4 => Precision::Int4,
            PrecisionArg::Int8 => Precision::Int8,
            PrecisionArg::Half => Precision::Half,
            PrecisionArg::F32 => Precision::F32,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan and execute one query (text, or @path to read from a file).
    Query(QueryArgs),
    /// Run the one-time sampling workloads and write the config file.
    Calibrate {
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Benchmark drivers.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    /// SQL text, or @path to read the query from a file.
    pub sql: String,
    /// Named parameter binding, repeatable: --param alpha=0.85
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    #[arg(long, value_enum, default_value_t = Mode::Auto)]
    pub mode: Mode,
    /// Print the chosen plan and cost estimate without executing.
    #[arg(long)]
    pub explain: bool,
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    /// Also run the brute-force oracle and report the error against it.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Random two-table microbenchmark.
    Micro {
        #[arg(long, default_value_t = 4096)]
        m: usize,
        /// Rows of the second table (defaults to m).
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 32)]
        k: usize,
        #[arg(long, value_enum, default_value_t = MicroQueryArg::Q1)]
        query: MicroQueryArg,
        #[arg(long, default_value_t = 0)]
        lo: i64,
        #[arg(long, default_value_t = 100)]
        hi: i64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Mode::Auto)]
        mode: Mode,
    },
    /// Entity-matching blocking joins over synthetic (or on-disk) tables.
    Em {
        #[arg(long, default_value_t = 3777)]
        rows_a: usize,
        #[arg(long, default_value_t = 2671)]
        rows_b: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Single attribute to block on (default: every synthetic attribute).
        #[arg(long)]
        attribute: Option<String>,
        /// Directory holding TABLE_A.csv and TABLE_B.csv to use instead of
        /// synthetic tables.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Mode::Auto)]
        mode: Mode,
    },
    /// PageRank over an edge-list file.
    Pagerank {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long, default_value_t = 50)]
        iters: usize,
        #[arg(long, default_value_t = 0.85)]
        alpha: f64,
        /// Also execute the scalar form of the update query as printed.
        #[arg(long)]
        literal_q3: bool,
        /// Write final ranks to this file (one "node rank" line each).
        #[arg(long)]
        ranks_out: Option<PathBuf>,
    },
    /// Half-precision error sweep over the matrix-multiplication query.
    Precision {
        #[arg(long, value_delimiter = ',', default_values_t = vec![1024usize, 2048, 4096])]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MicroQueryArg {
    Q1,
    Q3,
    Q4,
}

impl From<MicroQueryArg> for harness::MicroQuery {
    fn from(q: MicroQueryArg) -> Self {
        match q {
            MicroQueryArg::Q1 => harness::MicroQuery::Q1,
            MicroQueryArg::Q3 => harness::MicroQuery::Q3,
            MicroQueryArg::Q4 => harness::MicroQuery::Q4,
        }
    }
}

pub fn config_path(cli: &Cli) -> PathBuf {
    if let Some(path) = &cli.config {
        return path.clone();
    }
    if let Ok(env) = std::env::var(CONFIG_ENV) {
        return PathBuf::from(env);
    }
    PathBuf::from(DEFAULT_CONFIG_PATH)
}

/// Loads the config, calibrating once (at a reduced scale) when the file
/// does not exist yet.
pub fn load_or_calibrate_config(path: &Path) -> Result<EngineConfig> {
    if path.exists() {
        return EngineConfig::load(path);
    }
    eprintln!("no config at {}; running a one-time calibration", path.display());
    let profile = calibrate(0.25, 0)?;
    let config = EngineConfig::new(profile);
    config.save(path)?;
    Ok(config)
}

fn parse_params(raw: &[String]) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::new();
    for entry in raw {
        let (name, value) = entry.split_once('=').ok_or_else(|| {
            Error::Config(format!("--param expects NAME=VALUE, got `{entry}`"))
        })?;
        let value: f64 = value
            .parse()
            .map_err(|_| Error::Config(format!("parameter `{name}` has non-numeric value")))?;
        out.insert(name.to_string(), value);
    }
    Ok(out)
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Calibrate { scale, seed } => {
            let profile = calibrate(*scale, *seed)?;
            let config = EngineConfig::new(profile);
            let path = config_path(&cli);
            config.save(&path)?;
            match cli.output {
                Output::Json => println!("{}", serde_json::to_string_pretty(&config)?),
                Output::Human => {
                    println!("calibration written to {}", path.display());
                    println!("{}", serde_json::to_string_pretty(&config)?);
                }
            }
            Ok(())
        }
        Command::Query(args) => cmd_query(&cli, args),
        Command::Bench(bench) => cmd_bench(&cli, bench),
    }
}

fn cmd_query(cli: &Cli, args: &QueryArgs) -> Result<()> {
    let sql = if let Some(path) = args.sql.strip_prefix('@') {
        std::fs::read_to_string(path)?
    } else {
        args.sql.clone()
    };
    let config = load_or_calibrate_config(&config_path(cli))?;
    let catalog = Catalog::load_dir(&cli.catalog)?;
    let engine = Engine::new(catalog, config);
    let options = PlanOptions {
        mode: args.mode.into(),
        precision_override: args.precision.map(Into::into),
        params: parse_params(&args.params)?,
    };
    let plan = engine.plan_sql(&sql, &options)?;

    if args.explain {
        let summary = serde_json::json!({
            "pattern": plan.pattern.name(),
            "kernel": plan.kernel.name(),
            "precision": plan.precision.name(),
            "transform_site": format!("{:?}", plan.transform_site),
            "dims": plan.dims,
            "block_size": plan.block_size,
            "estimated_cost": plan.estimated_cost,
            "feasibility": plan.feasibility.as_ref().map(|f| serde_json::json!({
                "feasible": f.feasible,
                "chosen_type": f.chosen_type.map(|p| p.name()),
                "exact": f.exact,
                "max_result_bound": f.max_result_bound,
                "reason": f.reason,
            })),
        });
        println!("{}", serde_json::to_string_pretty(&summary)?);
        return Ok(());
    }

    let report = if args.verify {
        execute_with_oracle(&engine, &plan, &options.params)?
    } else {
        engine.execute(&plan, &options.params)?
    };
    match cli.output {
        Output::Json => println!("{}", report.to_json()?),
        Output::Human => {
            println!(
                "plan: {} | kernel {} | precision {} | estimated {:.6}s | measured {:.6}s",
                plan.pattern.name(),
                report.kernel,
                report.precision,
                report.estimated_cost.total,
                report.measured_total_seconds
            );
            if let Some(mape) = report.mape {
                println!("verified against oracle: MAPE {:.6}%", mape * 100.0);
            }
            print_table(&report.result);
        }
    }
    Ok(())
}

fn print_table(result: &crate::relational::ResultTable) {
    let header: Vec<&str> = result.schema.iter().map(|(n, _)| n.as_str()).collect();
    println!("{}", header.join(" | "));
    for row in &result.rows {
        let cells: Vec<String> = row.iter().map(ToString::to_string).collect();
        println!("{}", cells.join(" | "));
    }
    println!("({} rows)", result.rows.len());
}

fn cmd_bench(cli: &Cli, bench: &BenchCommand) -> Result<()> {
    let config = load_or_calibrate_config(&config_path(cli))?;
    match bench {
        BenchCommand::Micro {
            m,
            n,
            k,
            query,
            lo,
            hi,
            seed,
            mode,
        } => {
            let spec = harness::MicrobenchSpec {
                m: *m,
                n: n.unwrap_or(*m),
                k: *k,
                value_range: (*lo, *hi),
                seed: *seed,
                query: (*query).into(),
            };
            let report = harness::run_microbench(&spec, (*mode).into(), &config)?;
            let doc = serde_json::json!({
                "bench": "micro",
                "spec": spec,
                "kernel": report.kernel,
                "precision": report.precision,
                "rows": report.result.rows.len(),
                "mape": report.mape,
                "stages": report.stages,
                "measured_total_seconds": report.measured_total_seconds,
            });
            println!("{}", serde_json::to_string(&doc)?);
            Ok(())
        }
        BenchCommand::Em {
            rows_a,
            rows_b,
            seed,
            attribute,
            dir,
            mode,
        } => {
            let (a, b) = match dir {
                Some(dir) => {
                    let catalog = Catalog::load_dir(dir)?;
                    let a = catalog.get("TABLE_A")?.as_ref().clone();
                    let b = catalog.get("TABLE_B")?.as_ref().clone();
                    (a, b)
                }
                None => harness::gen_em_tables(*rows_a, *rows_b, *seed),
            };
            let attributes: Vec<String> = match attribute {
                Some(attr) => vec![attr.clone()],
                None => a
                    .schema
                    .iter()
                    .map(|(n, _)| n.clone())
                    .filter(|n| n != "ID" && n != "NAME")
                    .collect(),
            };
            for attr in attributes {
                let run = harness::run_em_blocking(
                    a.clone(),
                    b.clone(),
                    &attr,
                    (*mode).into(),
                    &config,
                )?;
                let doc = serde_json::json!({
                    "bench": "em",
                    "attribute": attr,
                    "kernel": run.report.kernel,
                    "candidate_pairs": run.candidate_pairs,
                    "oracle_pairs": run.oracle_pairs,
                    "measured_total_seconds": run.report.measured_total_seconds,
                });
                println!("{}", serde_json::to_string(&doc)?);
            }
            Ok(())
        }
        BenchCommand::Pagerank {
            edges,
            n,
            iters,
            alpha,
            literal_q3,
            ranks_out,
        } => {
            let spec = harness::GraphSpec {
                edge_path: edges.clone(),
                subsample_n: *n,
                alpha: *alpha,
                iterations: *iters,
                literal_q3: *literal_q3,
            };
            let run = harness::run_pagerank(&spec, &config)?;
            if let Some(path) = ranks_out {
                let mut text = String::new();
                for (node, rank) in &run.ranks {
                    text.push_str(&format!("{node} {rank}\n"));
                }
                std::fs::write(path, text)?;
            }
            for (query, report) in [
                ("pr_q1", &run.q1_report),
                ("pr_q2", &run.q2_report),
                ("pr_q3", &run.q3_report),
            ] {
                let doc = serde_json::json!({
                    "bench": "pagerank",
                    "query": query,
                    "kernel": report.kernel,
                    "rows": report.result.rows.len(),
                    "kernel_invocations": report.counters.gemm_calls,
                    "stages": report.stages,
                });
                println!("{}", serde_json::to_string(&doc)?);
            }
            if let Some(literal) = &run.literal_q3_report {
                let doc = serde_json::json!({
                    "bench": "pagerank",
                    "query": "pr_q3_literal_scalar",
                    "kernel": literal.kernel,
                    "rows": literal.result.rows.len(),
                });
                println!("{}", serde_json::to_string(&doc)?);
            }
            Ok(())
        }
        BenchCommand::Precision { dims, seed } => {
            let ranges = harness::standard_ranges();
            let cells = harness::precision_sweep(dims, &ranges, *seed)?;
            match cli.output {
                Output::Human => print!("{}", harness::format_sweep_table(dims, &cells)),
                Output::Json => {
                    for cell in &cells {
                        println!("{}", serde_json::to_string(cell)?);
                    }
                }
            }
            Ok(())
        }
    }
}
