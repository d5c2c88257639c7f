//! `pragma-dse`: command-line front end for the design-space exploration
//! pipeline.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use pragma_dse::context::KernelContext;
use pragma_dse::corpus;
use pragma_dse::dbgen::{build_database, summary_table, DbGenConfig, ExplorerConfig};
use pragma_dse::dse::{self, DseConfig, GnnSurrogate, SearchMode, SurrogateSpec, Surrogate};
use pragma_dse::frontend::KernelSource;
use pragma_dse::gnn::{ModelConfig, Task, Variant};
use pragma_dse::oracle::OracleConfig;
use pragma_dse::space::{DesignConfig, DEFAULT_FACTOR_CAP};
use pragma_dse::trainer::{self, Database, OptimizerKind, TrainConfig};

// tensors of a few hundred KB are freed and reallocated on every forward
// pass; glibc hands them back to the OS each time, mimalloc keeps them
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser, Debug)]
#[command(name = "pragma-dse", version, about = "Pragma design-space exploration with a GNN surrogate")]
struct Cli {
    /// Seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads where a step can fan out.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Root for default paths (`db/`, `models/`, `kernels/`).
    #[arg(long, global = true, env = "PRAGMA_DSE_HOME")]
    home: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a kernel's pragma candidates and space sizes, or enumerate it.
    Space(SpaceArgs),
    /// Print a kernel's program graph as node-link JSON.
    Graph(GraphArgs),
    /// Evaluate one design with the analytical cost model.
    Oracle(OracleArgs),
    /// Generate a design database with the three explorers.
    Dbgen(DbgenArgs),
    /// Train one surrogate model on a database.
    Train(TrainArgs),
    /// Predict design quality with trained models.
    Predict(PredictArgs),
    /// Model-driven search with rounds of database expansion.
    Dse(DseArgs),
    /// Summarise a database: counts, correlations, Pareto fronts.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct KernelOpts {
    /// Largest parallel or tile factor offered.
    #[arg(long, default_value_t = DEFAULT_FACTOR_CAP)]
    factor_cap: u64,
    /// Cost-model settings as `key = value` lines.
    #[arg(long)]
    oracle_config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SpaceArgs {
    /// Kernel source file, or the name of a bundled kernel.
    kernel: String,
    #[command(flatten)]
    opts: KernelOpts,
    /// Write every kept configuration as JSON lines instead.
    #[arg(long)]
    enumerate: bool,
    /// Stop enumerating after this many configurations.
    #[arg(long)]
    limit: Option<usize>,
    /// Output file (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GraphArgs {
    /// Kernel source file, or the name of a bundled kernel.
    kernel: String,
    #[command(flatten)]
    opts: KernelOpts,
    /// Design configuration JSON; placeholders are kept when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Kernel source file, or the name of a bundled kernel.
    kernel: String,
    #[command(flatten)]
    opts: KernelOpts,
    /// Design configuration JSON; unset slots take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DbgenArgs {
    /// Directory of `.mlk` kernels; the bundled corpus when omitted and no
    /// `kernels/` exists under the home directory.
    #[arg(long)]
    kernels: Option<PathBuf>,
    /// Database directory; existing records are kept.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    opts: KernelOpts,
    /// Oracle evaluations for the bottleneck explorer, per kernel.
    #[arg(long, default_value_t = 150)]
    budget: usize,
    /// Oracle evaluations for the hybrid explorer, per kernel.
    #[arg(long, default_value_t = 150)]
    hybrid_budget: usize,
    /// Oracle evaluations for the random explorer, per kernel.
    #[arg(long, default_value_t = 100)]
    random_budget: usize,
    /// Improvement in percent that triggers a neighbor sweep.
    #[arg(long, default_value_t = 10.0)]
    x_percent: f64,
    /// Neighbors evaluated per qualifying improvement.
    #[arg(long, default_value_t = 8)]
    p_neighbors: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TaskArg {
    Main,
    Bram,
    Classify,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Task {
        match t {
            TaskArg::Main => Task::Main,
            TaskArg::Bram => Task::Bram,
            TaskArg::Classify => Task::Classify,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Args, Debug, Clone)]
struct ModelOpts {
    /// Model variant m1..m7.
    #[arg(long, default_value = "m7", value_parser = parse_variant)]
    variant: Variant,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 64)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    /// Share of records used for training.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    optimizer: OptimizerArg,
    /// Momentum for `--optimizer sgd`.
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

impl ModelOpts {
    fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(usage(format!("--split must be in (0, 1), got {}", self.split)));
        }
        Ok(TrainConfig {
            epochs: self.epochs,
            learning_rate: self.lr,
            batch_size: self.batch_size,
            seed,
            split_fraction: self.split,
            nf: None,
            optimizer: match self.optimizer {
                OptimizerArg::Adam => OptimizerKind::Adam,
                OptimizerArg::Sgd => OptimizerKind::Sgd,
            },
            momentum: self.momentum,
        })
    }

    fn model_config(&self, task: Task) -> Result<ModelConfig> {
        let mut mc = ModelConfig::variant(self.variant, task);
        mc.hidden_dim = self.hidden_dim;
        mc.num_layers = self.layers;
        mc.validate().map_err(|e| usage(e.to_string()))?;
        Ok(mc)
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Database directory.
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Checkpoint file to write.
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    model: ModelOpts,
    /// Leave this kernel out of training entirely (repeatable).
    #[arg(long)]
    holdout: Vec<String>,
    /// Per-epoch metrics as CSV.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Directory holding main.json, bram.json and classify.json.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Kernel source file, or the name of a bundled kernel.
    #[arg(long)]
    kernel: String,
    #[command(flatten)]
    opts: KernelOpts,
    /// Design configuration JSON (repeatable); the default design when omitted.
    #[arg(long)]
    config: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Exhaustive,
    Ordered,
}

#[derive(Args, Debug)]
struct DseArgs {
    /// Database directory; validated designs are appended to it.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Kernel to search (repeatable); every database kernel when omitted.
    #[arg(long)]
    kernel: Vec<String>,
    /// Where the last round's models are written. With `--rounds 0` the
    /// models found here are used for a single search.
    #[arg(long)]
    models: Option<PathBuf>,
    /// Seconds per search.
    #[arg(long, default_value_t = 3600.0)]
    time_limit: f64,
    #[arg(long, default_value_t = 3)]
    rounds: usize,
    #[arg(long, default_value_t = 10)]
    top_m: usize,
    #[arg(long, default_value_t = 0.8)]
    util_threshold: f64,
    /// Configurations scored per search.
    #[arg(long, default_value_t = 20_000)]
    max_evals: u64,
    /// Force a traversal; picked from the space size by default.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Train without this kernel's records (repeatable).
    #[arg(long)]
    holdout: Vec<String>,
    #[command(flatten)]
    model: ModelOpts,
    /// Report JSON.
    #[arg(short, long)]
    output: PathBuf,
    /// Per-round best latencies as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Leave the database on disk unchanged.
    #[arg(long)]
    no_save: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Database directory.
    #[arg(long)]
    db: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

/// Marks an error as a usage problem (exit code 1).
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Space(a) => cmd_space(a),
        Command::Graph(a) => cmd_graph(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Dbgen(a) => cmd_dbgen(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::Predict(a) => cmd_predict(cli, a),
        Command::Dse(a) => cmd_dse(cli, a),
        Command::Report(a) => cmd_report(cli, a),
    }
}

fn home_path(cli: &Cli, explicit: &Option<PathBuf>, default: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cli.home.clone().unwrap_or_else(|| PathBuf::from(".")).join(default))
}

fn emit(output: &Option<PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(p) => write_file(p, text),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            if !text.ends_with('\n') {
                out.write_all(b"\n")?;
            }
            Ok(())
        }
    }
}

fn write_file(p: &Path, text: &str) -> Result<()> {
    if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(p, text).with_context(|| format!("writing {}", p.display()))
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("values serialise") + "\n"
}

fn load_source(kernel: &str) -> Result<KernelSource> {
    let path = Path::new(kernel);
    if path.exists() {
        let src = KernelSource::read(path).with_context(|| format!("reading {kernel}"))?;
        return src.with_context(|| format!("parsing {kernel}"));
    }
    if let Some(src) = corpus::source(kernel) {
        return Ok(src);
    }
    bail!("no kernel file or bundled kernel named `{kernel}`")
}

fn oracle_config(opts: &KernelOpts) -> Result<OracleConfig> {
    match &opts.oracle_config {
        None => Ok(OracleConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            OracleConfig::from_kv(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn context(kernel: &str, opts: &KernelOpts) -> Result<KernelContext> {
    let src = load_source(kernel)?;
    Ok(KernelContext::new(src, opts.factor_cap, oracle_config(opts)?)?)
}

fn read_config(p: &Path) -> Result<DesignConfig> {
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing design config {}", p.display()))
}

fn cmd_space(a: &SpaceArgs) -> Result<()> {
    let ctx = context(&a.kernel, &a.opts)?;
    if a.enumerate {
        let mut out = String::new();
        for p in ctx.space.enumerate().take(a.limit.unwrap_or(usize::MAX)) {
            out.push_str(&serde_json::to_string(&ctx.space.to_config(&p))?);
            out.push('\n');
        }
        return emit(&a.output, &out);
    }
    let order: Vec<&str> = dse::order_pragmas(&ctx.space).into_iter().map(|c| ctx.space.candidates[c].slot.as_str()).collect();
    let v = json!({
        "kernel": ctx.name(),
        "factor_cap": ctx.space.factor_cap,
        "candidates": ctx.space.candidates,
        "size_total": ctx.space.size_total.to_string(),
        "size_pruned": ctx.space.size_pruned.to_string(),
        "search_order": order,
    });
    emit(&a.output, &pretty(&v))
}

fn cmd_graph(a: &GraphArgs) -> Result<()> {
    let ctx = context(&a.kernel, &a.opts)?;
    let g = match &a.config {
        None => ctx.graph.clone(),
        Some(p) => {
            let cfg = read_config(p)?;
            let point = ctx.space.to_point_lenient(&cfg)?;
            ctx.instantiate_point(&point)
        }
    };
    emit(&a.output, &g.to_json())
}

fn cmd_oracle(a: &OracleArgs) -> Result<()> {
    let ctx = context(&a.kernel, &a.opts)?;
    // checked against the space: unset slots take defaults, foreign values are refused
    let point = match &a.config {
        Some(p) => ctx.space.to_point_lenient(&read_config(p)?)?,
        None => ctx.default_point(),
    };
    let r = ctx.oracle.synthesize(&ctx.space.to_config(&point))?;
    emit(&a.output, &pretty(&r))
}

fn read_kernel_dir(dir: &Path) -> Result<Vec<KernelSource>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mlk"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .mlk kernels in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            KernelSource::read(p)
                .with_context(|| format!("reading {}", p.display()))?
                .with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

fn cmd_dbgen(cli: &Cli, a: &DbgenArgs) -> Result<()> {
    if a.budget == 0 || !(a.x_percent > 0.0) {
        return Err(usage("--budget must be at least 1 and --x-percent positive"));
    }
    let sources = match (&a.kernels, &cli.home) {
        (Some(d), _) => read_kernel_dir(d)?,
        (None, Some(h)) if h.join("kernels").is_dir() => read_kernel_dir(&h.join("kernels"))?,
        _ => corpus::all(),
    };
    let oc = oracle_config(&a.opts)?;
    let contexts = sources
        .into_iter()
        .map(|s| KernelContext::new(s, a.opts.factor_cap, oc.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    let explorer = |budget| ExplorerConfig { budget, x_percent: a.x_percent, p_neighbors: a.p_neighbors, seed: cli.seed };
    let cfg = DbGenConfig {
        bottleneck: explorer(a.budget),
        hybrid: explorer(a.hybrid_budget),
        random: explorer(a.random_budget),
        jobs: cli.jobs,
    };
    let fresh = build_database(&contexts, &cfg)?;
    let out = home_path(cli, &a.out, "db");
    let db = if out.join("meta.json").exists() {
        let mut db = Database::open(&out)?;
        if db.settings != fresh.settings {
            bail!("{} was generated with different factor cap or cost-model settings", out.display());
        }
        let added = db.merge(&fresh)?;
        log::info!("{added} new records");
        db
    } else {
        fresh
    };
    db.save(&out)?;
    print!("{}", summary_table(&db));
    Ok(())
}

fn open_db(cli: &Cli, dir: &Option<PathBuf>) -> Result<(PathBuf, Database, BTreeMap<String, KernelContext>)> {
    let path = home_path(cli, dir, "db");
    let db = Database::open(&path)?;
    let contexts = db.contexts()?;
    Ok((path, db, contexts))
}

fn check_kernels(db: &Database, names: &[String]) -> Result<()> {
    for k in names {
        if !db.kernels.contains_key(k) {
            bail!("kernel `{k}` is not in the database");
        }
    }
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let (_, db, contexts) = open_db(cli, &a.db)?;
    check_kernels(&db, &a.holdout)?;
    let tc = a.model.train_config(cli.seed)?;
    let mc = a.model.model_config(a.task.into())?;
    let (pool, _) = trainer::split_holdout(&db, &a.holdout);
    let outcome = trainer::train_on_db(&db, &pool, &contexts, &tc, &mc)?;
    outcome.model.save(&a.output)?;
    if let Some(h) = &a.history {
        write_file(h, &trainer::history_csv(mc.task, &outcome.history))?;
    }
    let v = json!({
        "task": mc.task.name(),
        "best_epoch": outcome.best_epoch,
        "nf": outcome.model.nf,
        "train": outcome.train_metrics,
        "validation": outcome.val_metrics,
    });
    print!("{}", pretty(&v));
    Ok(())
}

fn cmd_predict(cli: &Cli, a: &PredictArgs) -> Result<()> {
    let dir = home_path(cli, &a.models, "models");
    let surrogate = GnnSurrogate::load(&dir)?;
    let ctx = context(&a.kernel, &a.opts)?;
    let configs = if a.config.is_empty() {
        vec![ctx.space.to_config(&ctx.default_point())]
    } else {
        a.config.iter().map(|p| read_config(p)).collect::<Result<_>>()?
    };
    let points = configs.iter().map(|c| ctx.space.to_point_lenient(c)).collect::<Result<Vec<_>, _>>()?;
    let preds = surrogate.predict(&ctx, &points)?;
    let nf = surrogate.main.nf;
    let rows: Vec<_> = points
        .iter()
        .zip(&preds)
        .map(|(p, pr)| {
            json!({
                "config": ctx.space.to_config(p),
                "valid_prob": pr.valid_prob,
                "valid": pr.valid_prob >= trainer::CLASSIFY_THRESHOLD,
                "latency_t": pr.latency_t,
                "latency": trainer::inverse_latency(pr.latency_t, nf) as u64,
                "util": pr.util,
            })
        })
        .collect();
    print!("{}", pretty(&json!({ "kernel": ctx.name(), "predictions": rows })));
    Ok(())
}

fn cmd_dse(cli: &Cli, a: &DseArgs) -> Result<()> {
    let (path, mut db, contexts) = open_db(cli, &a.db)?;
    let kernels = if a.kernel.is_empty() { db.kernels.keys().cloned().collect() } else { a.kernel.clone() };
    check_kernels(&db, &kernels)?;
    check_kernels(&db, &a.holdout)?;
    let dc = DseConfig {
        time_limit: a.time_limit,
        util_threshold: a.util_threshold,
        top_m: a.top_m,
        rounds: a.rounds,
        mode: a.mode.map(|m| match m {
            ModeArg::Exhaustive => SearchMode::Exhaustive,
            ModeArg::Ordered => SearchMode::Ordered,
        }),
        max_evals: a.max_evals,
        ..DseConfig::default()
    };
    dc.validate().map_err(|e| usage(e.to_string()))?;
    let spec = SurrogateSpec {
        train: a.model.train_config(cli.seed)?,
        main: a.model.model_config(Task::Main)?,
        bram: a.model.model_config(Task::Bram)?,
        classify: a.model.model_config(Task::Classify)?,
    };
    let models = home_path(cli, &a.models, "models");
    let al = dse::run_active_learning(&mut db, &contexts, &kernels, &a.holdout, &spec, &dc)?;
    let mut report = serde_json::to_value(&al.report)?;
    match &al.surrogate {
        Some(s) => s.save(&models)?,
        None if models.join(dse::MODEL_FILES[0].1).exists() => {
            let surrogate = GnnSurrogate::load(&models)?;
            let mut searches = BTreeMap::new();
            for k in &kernels {
                searches.insert(k.clone(), dse::search(&surrogate, &contexts[k], &dc)?);
            }
            report["search"] = serde_json::to_value(searches)?;
        }
        None => {}
    }
    write_file(&a.output, &pretty(&report))?;
    if let Some(c) = &a.csv {
        write_file(c, &al.report.to_csv())?;
    }
    if !a.no_save {
        db.save(&path)?;
    }
    Ok(())
}

fn cmd_report(cli: &Cli, a: &ReportArgs) -> Result<()> {
    let (_, db, _) = open_db(cli, &a.db)?;
    let best = db.best_latency();
    let summary: BTreeMap<String, serde_json::Value> = db
        .summary()
        .into_iter()
        .map(|(k, (t, v))| {
            let b = best.get(&k).copied();
            (k, json!({ "total": t, "valid": v, "best_latency": b }))
        })
        .collect();
    let max_latency = best.values().copied().max();
    let mut v = json!({ "records": db.len(), "kernels": summary });
    let valid = db.records.iter().filter(|r| r.result.valid).count();
    if let (Some(_), true) = (max_latency, valid >= 2) {
        let worst = db.records.iter().filter_map(|r| r.result.objectives.map(|o| o.latency)).max().unwrap_or(1);
        let nf = trainer::default_nf(worst);
        let (m, flags) = trainer::correlation_matrix(&db, nf)?;
        v["correlation"] = json!({
            "nf": nf,
            "labels": ["latency_t", "dsp", "lut", "ff", "bram"],
            "matrix": m,
            "degenerate": flags,
        });
    }
    let pareto: BTreeMap<String, serde_json::Value> = db
        .kernels
        .keys()
        .map(|k| {
            let recs: Vec<_> = db.records_of(k).filter(|r| r.result.valid).collect();
            let front: Vec<_> = dse::pareto_filter(&recs)
                .into_iter()
                .map(|r| json!({ "config": r.config, "objectives": r.result.objectives }))
                .collect();
            (k.clone(), json!(front))
        })
        .collect();
    v["pareto"] = json!(pareto);
    emit(&a.output, &pretty(&v))
}
