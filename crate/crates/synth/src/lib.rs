//! Synthetic fixtures for offline runs of the causeway pipeline.
//!
//! [`build_fixtures`] writes a small causal world, records every model
//! exchange that training and evaluation need into a replay cassette, and
//! trains the refinement policy that ships with it.

pub mod responder;
pub mod world;

use std::path::Path;
use std::sync::Arc;

use causeway_core::agent::{train, AgentError, PolicyNet, RefinementAction, RefinementEnvironment};
use causeway_core::config::{ConfigError, Settings, TrainSettings};
use causeway_core::embedding::{EmbeddingError, Encoder, HashingEncoder, VectorIndex};
use causeway_core::eval::{format_table, run_eval, EvalError};
use causeway_core::graph::{CausalGraph, GraphError};
use causeway_core::llm::{Cassette, CassetteClient, LlmError, PromptLibrary};
use causeway_core::pipeline::{Pipeline, PipelineEnv, StageFlags};

pub use responder::SimulatedResponder;
pub use world::World;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("serializing settings: {0}")]
    Toml(#[from] toml::ser::Error),
    #[error("training environment: {0}")]
    Environment(String),
}

#[derive(Debug, Clone)]
pub struct FixtureOptions {
    pub seed: u64,
    pub chains: usize,
    pub settings: Settings,
    pub train: TrainSettings,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            seed: 7,
            chains: 20,
            settings: Settings::default(),
            train: TrainSettings::default(),
        }
    }
}

/// The graph exactly as ingestion builds it: triples in file order, then
/// label embeddings.
pub fn build_graph(world: &World, encoder: &dyn Encoder) -> Result<CausalGraph, GraphError> {
    let mut graph = CausalGraph::new();
    for t in &world.triples {
        graph.add_triple(t.clone())?;
    }
    graph.embed_nodes(encoder)?;
    Ok(graph)
}

/// Writes the world, config files, cassette and trained policy into `dir`
/// and returns the baseline/full evaluation table.
pub fn build_fixtures(dir: &Path, opts: &FixtureOptions) -> Result<String, SynthError> {
    let world = World::generate(opts.seed, opts.chains);
    world.write(dir)?;
    std::fs::write(dir.join("config.toml"), toml::to_string(&opts.settings)?)?;
    std::fs::write(dir.join("env.toml"), toml::to_string(&opts.train)?)?;

    let config = opts.settings.pipeline_config()?;
    let encoder = HashingEncoder::new(opts.settings.dimension);
    let graph = build_graph(&world, &encoder)?;
    let index = VectorIndex::build(&encoder, world.passages.iter().cloned())?;

    let prompts = Arc::new(PromptLibrary::builtin());
    let responder = Arc::new(SimulatedResponder::new(prompts.clone(), world.lexicon()));
    let client = CassetteClient::record(prompts, Cassette::new(), responder);

    let queries: Vec<String> = world.gold.iter().map(|g| g.query.clone()).collect();
    let base = Pipeline {
        config,
        policy: None,
        graph: &graph,
        index: &index,
        encoder: &encoder,
        client: &client,
    };
    let mut env = PipelineEnv::new(Pipeline { config: base.config.clone(), ..base }, queries.clone());
    for q in 0..queries.len() {
        for a in RefinementAction::ALL {
            let r = env.reward(q, a).map_err(|e| SynthError::Environment(e.to_string()))?;
            log::info!("query {q} {a}: reward {r:.4}");
        }
    }
    let t = &opts.train;
    let policy = PolicyNet::new(encoder.dimension(), t.hidden, t.init_seed);
    let snapshot = train(policy, &mut env as &mut dyn RefinementEnvironment, &t.ppo())?;
    snapshot.save(&dir.join("policy.json"))?;
    let policy = snapshot.to_policy()?;

    let pipeline = Pipeline {
        policy: Some(&policy),
        ..base
    };
    let baseline = run_eval(&pipeline, &world.gold, StageFlags::BASELINE)?;
    let full = run_eval(&pipeline, &world.gold, StageFlags::FULL)?;
    client.snapshot().save(&dir.join("cassette.jsonl"))?;
    Ok(format_table(&[&baseline, &full]))
}
