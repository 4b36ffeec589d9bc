//! `causeway` command line: build the graph and index, train the
//! refinement policy, answer questions and run ablation evaluations.
//!
//! Exit codes: 0 on success, 1 for bad input or usage, 2 when a
//! collaborator (language model or remote encoder) fails.

pub mod client;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use causeway_core::agent::{
    train, PolicyNet, PolicySnapshot, RefinementEnvironment, SyntheticBandit,
};
use causeway_core::config::{EncoderKind, EnvKind, Settings, TrainSettings};
use causeway_core::embedding::{
    EmbeddingError, Encoder, HashingEncoder, HttpEncoder, PassageRecord, VectorIndex,
};
use causeway_core::eval::{format_table, read_gold, run_eval, EvalError, GoldRecord};
use causeway_core::graph::{read_triples, verify_pair, CausalGraph, VerificationContext};
use causeway_core::llm::{LlmClient, LlmError, PromptStyle};
use causeway_core::pipeline::{Failure, Pipeline, PipelineEnv, PipelineError, StageFlags};
use causeway_core::retrieval::RetrievalError;
use causeway_core::verification::GenerationError;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Collaborator(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Input(_) => 1,
            Self::Collaborator(_) => 2,
        }
    }
}

fn input(context: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{context}: {e}"))
}

fn is_remote(e: &EmbeddingError) -> bool {
    matches!(e, EmbeddingError::RemoteEncoderFailure(_))
}

fn llm_error(e: LlmError) -> CliError {
    match e {
        LlmError::TemplateUnbound { .. } | LlmError::UnknownTemplate(_) | LlmError::InvalidTemperature(_) => {
            CliError::Input(e.to_string())
        }
        other => CliError::Collaborator(format!("language model: {other}")),
    }
}

fn pipeline_error(e: &PipelineError) -> CliError {
    let remote = match e {
        PipelineError::Llm(_) | PipelineError::Generation(GenerationError::Llm(_)) => true,
        PipelineError::Embedding(x) | PipelineError::Retrieval(RetrievalError::Embedding(x)) => is_remote(x),
        _ => false,
    };
    if remote {
        CliError::Collaborator(e.to_string())
    } else {
        CliError::Input(e.to_string())
    }
}

fn embedding_error(context: &str, e: EmbeddingError) -> CliError {
    if is_remote(&e) {
        CliError::Collaborator(format!("{context}: {e}"))
    } else {
        input(context, e)
    }
}

fn parse_serde<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "causeway", version, about = "Causal-graph retrieval with verified answers")]
pub struct Cli {
    /// Cassette file for replay and record modes; defaults to $CAUSEWAY_CASSETTE.
    #[arg(long, global = true)]
    cassette: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the causal graph from a triple file.
    Ingest(IngestArgs),
    /// Embed a passage file into a vector index.
    Index(IndexArgs),
    /// Train the query refinement policy.
    Train(TrainArgs),
    /// Answer one question.
    Ask(AskArgs),
    /// Evaluate stage configurations over a gold set.
    Eval(EvalArgs),
}

/// Pipeline settings: a TOML file plus per-key overrides.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML settings file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, alias = "max_hops")]
    max_hops: Option<usize>,
    #[arg(long, alias = "max_paths")]
    max_paths: Option<usize>,
    #[arg(long, alias = "theta_align")]
    theta_align: Option<f64>,
    #[arg(long, alias = "max_seeds")]
    max_seeds: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, alias = "theta_support")]
    theta_support: Option<f64>,
    #[arg(long, alias = "max_iterations")]
    max_iterations: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    #[arg(long)]
    lambda4: Option<f64>,
    /// hashing or http.
    #[arg(long, value_parser = parse_serde::<EncoderKind>)]
    encoder: Option<EncoderKind>,
    #[arg(long, alias = "encoder_url")]
    encoder_url: Option<String>,
    #[arg(long)]
    dimension: Option<usize>,
    /// structured or condensed.
    #[arg(long, alias = "prompt_style", value_parser = parse_serde::<PromptStyle>)]
    prompt_style: Option<PromptStyle>,
    /// Drop graph edges that were not verified at ingestion.
    #[arg(long, alias = "verified_only")]
    verified_only: bool,
}

macro_rules! apply {
    ($settings:ident, $args:ident: $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $settings.$field = v; })*
    };
}

impl ConfigArgs {
    fn settings(&self) -> Result<Settings, CliError> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path).map_err(|e| CliError::Input(e.to_string()))?,
            None => Settings::default(),
        };
        let a = self;
        apply!(s, a: k, max_hops, max_paths, theta_align, max_seeds, tau, delta, theta_support,
            max_iterations, lambda1, lambda2, lambda3, lambda4, encoder, dimension, prompt_style);
        s.verified_only |= self.verified_only;
        if let Some(url) = &self.encoder_url {
            s.encoder_url = Some(url.clone());
        }
        s.pipeline_config().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(s)
    }
}

fn encoder(s: &Settings) -> Result<Box<dyn Encoder>, CliError> {
    if s.dimension == 0 {
        return Err(CliError::Input("dimension must be positive".into()));
    }
    Ok(match s.encoder {
        EncoderKind::Hashing => Box::new(HashingEncoder::new(s.dimension)),
        EncoderKind::Http => {
            let url = s
                .encoder_url
                .clone()
                .ok_or_else(|| CliError::Input("encoder = \"http\" needs encoder_url".into()))?;
            Box::new(HttpEncoder::new(url, s.dimension))
        }
    })
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| input(path.display(), e))
}

fn create(path: &Path) -> Result<File, CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| input(parent.display(), e))?;
    }
    File::create(path).map_err(|e| input(path.display(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut f = create(path)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| input(path.display(), e))?;
    f.write_all(b"\n").map_err(|e| input(path.display(), e))
}

fn load_graph(path: &Path, settings: &Settings) -> Result<CausalGraph, CliError> {
    let graph = CausalGraph::read_json(open(path)?).map_err(|e| input(path.display(), e))?;
    Ok(if settings.verified_only { graph.verified_only() } else { graph })
}

fn load_index(path: &Path, encoder: &dyn Encoder) -> Result<VectorIndex, CliError> {
    let index = VectorIndex::read_jsonl(open(path)?).map_err(|e| input(path.display(), e))?;
    if index.dimension() != encoder.dimension() || index.encoder_name() != encoder.name() {
        return Err(CliError::Input(format!(
            "{} was built with {} ({}-d) but the configured encoder is {} ({}-d)",
            path.display(),
            index.encoder_name(),
            index.dimension(),
            encoder.name(),
            encoder.dimension()
        )));
    }
    Ok(index)
}

fn load_policy(path: &Path, encoder: &dyn Encoder) -> Result<PolicyNet, CliError> {
    let policy = PolicySnapshot::load(path)
        .and_then(|s| s.to_policy())
        .map_err(|e| input(path.display(), e))?;
    if policy.input_dim() != encoder.dimension() {
        return Err(CliError::Input(format!(
            "{} expects {}-d states but the encoder produces {}-d",
            path.display(),
            policy.input_dim(),
            encoder.dimension()
        )));
    }
    Ok(policy)
}

fn load_gold(path: &Path) -> Result<Vec<GoldRecord>, CliError> {
    read_gold(open(path)?).map_err(|e| input(path.display(), e))
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// JSONL triples: cause, effect, relation, confidence, source.
    #[arg(long)]
    triples: PathBuf,
    /// Graph JSON to write.
    #[arg(long)]
    out: PathBuf,
    /// Check each pair with the language model before adding it.
    #[arg(long)]
    verify: bool,
    #[arg(long, default_value = "general knowledge")]
    domain: String,
    #[arg(long, default_value = "unspecified")]
    dataset: String,
    #[arg(long, alias = "source_model", default_value = "unspecified")]
    source_model: String,
    #[command(flatten)]
    config: ConfigArgs,
}

fn ingest(args: &IngestArgs, cassette: Option<&Path>) -> Result<String, CliError> {
    let settings = args.config.settings()?;
    let enc = encoder(&settings)?;
    let triples = read_triples(open(&args.triples)?).map_err(|e| input(args.triples.display(), e))?;
    let total = triples.len();
    let client = if args.verify { Some(client::build(cassette)?) } else { None };
    let ctx = VerificationContext {
        domain: args.domain.clone(),
        dataset: args.dataset.clone(),
        source_model: args.source_model.clone(),
    };
    let mut graph = CausalGraph::new();
    let mut rejected = 0;
    for mut t in triples {
        if let Some(client) = &client {
            let verdict = verify_pair(client.as_ref(), &ctx, &t.cause, &t.effect).map_err(llm_error)?;
            if !verdict.correct {
                rejected += 1;
                continue;
            }
            if verdict.reoriented {
                std::mem::swap(&mut t.cause, &mut t.effect);
            }
            t.verified = true;
        }
        graph.add_triple(t).map_err(|e| input(args.triples.display(), e))?;
    }
    graph.embed_nodes(enc.as_ref()).map_err(|e| CliError::Collaborator(e.to_string()))?;
    let out = create(&args.out)?;
    graph.write_json(out).map_err(|e| input(args.out.display(), e))?;
    Ok(format!(
        "read {total} triples, rejected {rejected}; graph has {} nodes and {} edges",
        graph.node_count(),
        graph.edge_count()
    ))
}

#[derive(Debug, Args)]
struct IndexArgs {
    /// JSONL passages: id, text, source.
    #[arg(long)]
    passages: PathBuf,
    /// Index JSONL to write.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

fn index(args: &IndexArgs) -> Result<String, CliError> {
    let settings = args.config.settings()?;
    let enc = encoder(&settings)?;
    let mut records = Vec::new();
    for (n, line) in open(&args.passages)?.lines().enumerate() {
        let line = line.map_err(|e| input(args.passages.display(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: PassageRecord = serde_json::from_str(&line)
            .map_err(|e| input(format!("{} line {}", args.passages.display(), n + 1), e))?;
        records.push(r);
    }
    let index = VectorIndex::build(enc.as_ref(), records).map_err(|e| embedding_error("building index", e))?;
    let out = std::io::BufWriter::new(create(&args.out)?);
    index.write_jsonl(out).map_err(|e| input(args.out.display(), e))?;
    Ok(format!("indexed {} passages ({}-d, {})", index.len(), index.dimension(), index.encoder_name()))
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// TOML training settings.
    #[arg(long)]
    env: Option<PathBuf>,
    /// Override the environment kind: bandit or pipeline.
    #[arg(long, value_parser = parse_serde::<EnvKind>)]
    kind: Option<EnvKind>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long)]
    index: Option<PathBuf>,
    /// Gold JSONL whose questions drive the pipeline environment.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Policy JSON to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, alias = "steps_per_query")]
    steps_per_query: Option<usize>,
    #[arg(long, alias = "batch_size")]
    batch_size: Option<usize>,
    #[arg(long, alias = "learning_rate")]
    learning_rate: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Usage(format!("--{flag} is required for the pipeline environment")))
}

fn train_cmd(args: &TrainArgs, cassette: Option<&Path>) -> Result<String, CliError> {
    let settings = args.config.settings()?;
    let mut t = match &args.env {
        Some(path) => TrainSettings::load(path).map_err(|e| CliError::Input(e.to_string()))?,
        None => TrainSettings::default(),
    };
    let a = args;
    apply!(t, a: epochs, steps_per_query, batch_size, learning_rate, hidden, seed);
    if let Some(k) = args.kind {
        t.env = k;
    }
    let ppo = t.ppo();
    ppo.validate().map_err(|e| CliError::Input(e.to_string()))?;
    if t.hidden == 0 {
        return Err(CliError::Input("hidden must be positive".into()));
    }
    let enc = encoder(&settings)?;
    let policy = PolicyNet::new(enc.dimension(), t.hidden, t.init_seed);
    let agent_err = |e: causeway_core::agent::AgentError| match e {
        causeway_core::agent::AgentError::Environment(inner) => match inner.downcast::<Failure>() {
            Ok(f) => pipeline_error(&f.error),
            Err(other) => CliError::Collaborator(other.to_string()),
        },
        other => CliError::Input(other.to_string()),
    };
    let snapshot = match t.env {
        EnvKind::Bandit => {
            let mut env = SyntheticBandit::new(enc.dimension(), t.bandit_rewards);
            train(policy, &mut env as &mut dyn RefinementEnvironment, &ppo).map_err(agent_err)?
        }
        EnvKind::Pipeline => {
            let graph = load_graph(require(&args.graph, "graph")?, &settings)?;
            let index = load_index(require(&args.index, "index")?, enc.as_ref())?;
            let gold = load_gold(require(&args.gold, "gold")?)?;
            let client = client::build(cassette)?;
            let pipeline = Pipeline {
                config: settings.pipeline_config().map_err(|e| CliError::Input(e.to_string()))?,
                policy: None,
                graph: &graph,
                index: &index,
                encoder: enc.as_ref(),
                client: client.as_ref(),
            };
            let mut env = PipelineEnv::new(pipeline, gold.into_iter().map(|g| g.query).collect());
            train(policy, &mut env as &mut dyn RefinementEnvironment, &ppo).map_err(agent_err)?
        }
    };
    snapshot.save(&args.out).map_err(|e| input(args.out.display(), e))?;
    let last = snapshot.epoch_rewards.last().copied().unwrap_or(0.0);
    Ok(format!(
        "trained {} epochs; mean reward in the last epoch {last:.4}",
        snapshot.epoch_rewards.len()
    ))
}

#[derive(Debug, Args)]
struct AskArgs {
    /// The question.
    query: String,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Trained refinement policy; required when refinement is enabled.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// `full`, `baseline` or a comma list of stage names.
    #[arg(long)]
    stages: Option<String>,
    /// Write the pipeline state and history as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn ask(args: &AskArgs, cassette: Option<&Path>) -> Result<String, CliError> {
    let mut settings = args.config.settings()?;
    if let Some(s) = &args.stages {
        settings.stages = s.clone();
    }
    let config = settings.pipeline_config().map_err(|e| CliError::Input(e.to_string()))?;
    let enc = encoder(&settings)?;
    let graph = load_graph(&args.graph, &settings)?;
    let index = load_index(&args.index, enc.as_ref())?;
    let policy = args.policy.as_deref().map(|p| load_policy(p, enc.as_ref())).transpose()?;
    let client = client::build(cassette)?;
    let pipeline = Pipeline {
        config,
        policy: policy.as_ref(),
        graph: &graph,
        index: &index,
        encoder: enc.as_ref(),
        client: client.as_ref(),
    };
    match pipeline.run_query(&args.query) {
        Ok(outcome) => {
            if let Some(path) = &args.trace {
                write_json(path, &outcome)?;
            }
            Ok(outcome.answer)
        }
        Err(failure) => {
            if let Some(path) = &args.trace {
                write_json(
                    path,
                    &serde_json::json!({ "error": failure.error.to_string(), "state": failure.state }),
                )?;
            }
            Err(pipeline_error(&failure.error))
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Stage configuration to evaluate; repeat for an ablation table.
    /// Each value is `baseline`, `full` or a comma list of stage names.
    #[arg(long, default_values = ["baseline", "full"])]
    stages: Vec<String>,
    /// Directory for per-configuration JSON reports and the table.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

fn eval(args: &EvalArgs, cassette: Option<&Path>) -> Result<String, CliError> {
    let settings = args.config.settings()?;
    let config = settings.pipeline_config().map_err(|e| CliError::Input(e.to_string()))?;
    let flags = args
        .stages
        .iter()
        .map(|s| StageFlags::parse(s).map_err(CliError::Usage))
        .collect::<Result<Vec<_>, _>>()?;
    let enc = encoder(&settings)?;
    let graph = load_graph(&args.graph, &settings)?;
    let index = load_index(&args.index, enc.as_ref())?;
    let gold = load_gold(&args.gold)?;
    let policy = args.policy.as_deref().map(|p| load_policy(p, enc.as_ref())).transpose()?;
    let client: std::sync::Arc<dyn LlmClient> = client::build(cassette)?;
    let pipeline = Pipeline {
        config,
        policy: policy.as_ref(),
        graph: &graph,
        index: &index,
        encoder: enc.as_ref(),
        client: client.as_ref(),
    };
    let mut reports = Vec::new();
    for f in flags {
        let report = run_eval(&pipeline, &gold, f).map_err(|e| match e {
            EvalError::Query { failure, .. } => pipeline_error(&failure.error),
            other => CliError::Input(other.to_string()),
        })?;
        reports.push(report);
    }
    let table = format_table(&reports.iter().collect::<Vec<_>>());
    if let Some(dir) = &args.out {
        for r in &reports {
            write_json(&dir.join(format!("report-{}.json", r.stages.replace(',', "+"))), r)?;
        }
        let path = dir.join("table.txt");
        std::fs::write(&path, &table).map_err(|e| input(path.display(), e))?;
    }
    Ok(table.trim_end().to_string())
}

pub fn run(cli: &Cli) -> Result<String, CliError> {
    let cassette = cli.cassette.as_deref();
    match &cli.command {
        Command::Ingest(a) => ingest(a, cassette),
        Command::Index(a) => index(a),
        Command::Train(a) => train_cmd(a, cassette),
        Command::Ask(a) => ask(a, cassette),
        Command::Eval(a) => eval(a, cassette),
    }
}

/// Parses `args`, runs the command and maps the outcome to an exit code.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
