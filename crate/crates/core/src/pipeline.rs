//! The closed answer loop: refine, retrieve, generate, verify, correct.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::agent::{
    compute_reward, normalize_components, ActMode, AgentError, EnvError, PolicyNet, RawComponents,
    RefinementAction, RefinementEnvironment, RewardWeights,
};
use crate::embedding::{EmbeddingError, Encoder, VectorIndex};
use crate::graph::CausalGraph;
use crate::llm::{refine_query, LlmClient, LlmError, PromptStyle, ABSTENTION};
use crate::metrics::{ccd, context_relevance, srs_multi};
use crate::retrieval::{subquery_merge, KnowledgeSet, RetrievalError, RetrievalParams};
use crate::verification::{
    generate, verify_answer, GenerationError, GenerationMode, GraphJudge, LexicalExtractor,
    Thresholds, VerificationReport,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("refinement is enabled but no policy is loaded")]
    MissingPolicy,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("policy: {0}")]
    Agent(#[from] AgentError),
    #[error("llm: {0}")]
    Llm(#[from] LlmError),
    #[error("retrieval: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("generation: {0}")]
    Generation(#[from] GenerationError),
    #[error("embedding: {0}")]
    Embedding(#[from] EmbeddingError),
}

/// Which optional modules run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFlags {
    pub refinement: bool,
    pub graph: bool,
    /// Strict regeneration when the causal check fails.
    pub rewriter: bool,
    /// Draft revision when the hallucination check fails.
    pub hallucination_correction: bool,
}

impl StageFlags {
    pub const BASELINE: Self = Self {
        refinement: false,
        graph: false,
        rewriter: false,
        hallucination_correction: false,
    };
    pub const FULL: Self = Self {
        refinement: true,
        graph: true,
        rewriter: true,
        hallucination_correction: true,
    };
    pub const NAMES: [&'static str; 4] = ["refinement", "graph", "rewriter", "hallucination_correction"];

    /// `baseline`, `full`, or a comma list of stage names.
    pub fn parse(spec: &str) -> Result<Self, String> {
        match spec.trim() {
            "baseline" | "" => return Ok(Self::BASELINE),
            "full" => return Ok(Self::FULL),
            _ => {}
        }
        let mut flags = Self::BASELINE;
        for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match name.replace('-', "_").as_str() {
                "refinement" => flags.refinement = true,
                "graph" => flags.graph = true,
                "rewriter" => flags.rewriter = true,
                "hallucination_correction" => flags.hallucination_correction = true,
                other => return Err(format!("unknown stage {other:?}; known: {}", Self::NAMES.join(", "))),
            }
        }
        Ok(flags)
    }

    pub fn label(&self) -> String {
        if *self == Self::BASELINE {
            return "baseline".into();
        }
        if *self == Self::FULL {
            return "full".into();
        }
        let on = [self.refinement, self.graph, self.rewriter, self.hallucination_correction];
        Self::NAMES
            .iter()
            .zip(on)
            .filter(|(_, o)| *o)
            .map(|(n, _)| *n)
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl Default for StageFlags {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub retrieval: RetrievalParams,
    pub thresholds: Thresholds,
    pub max_iterations: usize,
    pub reward: RewardWeights,
    pub stages: StageFlags,
    pub prompt_style: PromptStyle,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalParams::default(),
            thresholds: Thresholds::default(),
            max_iterations: 3,
            reward: RewardWeights::default(),
            stages: StageFlags::FULL,
            prompt_style: PromptStyle::Structured,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let t = &self.thresholds;
        for (name, v) in [
            ("tau", t.tau),
            ("delta", t.delta),
            ("theta_support", t.theta_support),
            ("theta_align", self.retrieval.theta_align),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(PipelineError::InvalidConfig(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.max_iterations == 0 {
            return Err(PipelineError::InvalidConfig("max_iterations must be at least 1".into()));
        }
        self.reward.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Refine,
    Retrieve,
    Generate,
    Verify,
    Rewrite,
    Fallback,
    Accept,
    Exhausted,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEvent {
    pub stage: Stage,
    pub summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Answered,
    Abstained,
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub mode: String,
    pub draft: String,
    pub report: VerificationReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineState {
    pub raw_query: String,
    pub action_taken: Option<RefinementAction>,
    pub refined_queries: Vec<String>,
    pub knowledge: KnowledgeSet,
    pub draft: Option<String>,
    pub report: Option<VerificationReport>,
    pub iteration: usize,
    pub rounds: Vec<Round>,
    pub history: Vec<HistoryEvent>,
    pub terminal: Option<Terminal>,
}

impl PipelineState {
    fn log(&mut self, stage: Stage, summary: impl Into<String>) {
        self.history.push(HistoryEvent {
            stage,
            summary: summary.into(),
        });
    }

    /// Stages in order, for quick assertions.
    pub fn stages(&self) -> Vec<Stage> {
        self.history.iter().map(|e| e.stage).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub answer: String,
    pub terminal: Terminal,
    pub state: PipelineState,
}

/// An error together with the history gathered before it.
#[derive(Debug, thiserror::Error)]
#[error("{error}")]
pub struct Failure {
    pub state: Box<PipelineState>,
    #[source]
    pub error: PipelineError,
}

/// Frozen collaborators plus configuration.
pub struct Pipeline<'a> {
    pub config: PipelineConfig,
    pub policy: Option<&'a PolicyNet>,
    pub graph: &'a CausalGraph,
    pub index: &'a VectorIndex,
    pub encoder: &'a dyn Encoder,
    pub client: &'a dyn LlmClient,
}

impl Pipeline<'_> {
    pub fn run_query(&self, query: &str) -> Result<Outcome, Failure> {
        self.run(query, None)
    }

    /// Runs with a fixed refinement action instead of asking the policy.
    pub fn run_with_action(&self, query: &str, action: RefinementAction) -> Result<Outcome, Failure> {
        self.run(query, Some(action))
    }

    fn run(&self, query: &str, forced: Option<RefinementAction>) -> Result<Outcome, Failure> {
        let mut state = PipelineState {
            raw_query: query.to_string(),
            ..PipelineState::default()
        };
        match self.drive(&mut state, query, forced) {
            Ok((answer, terminal)) => {
                state.terminal = Some(terminal);
                Ok(Outcome {
                    answer,
                    terminal,
                    state,
                })
            }
            Err(error) => {
                state.log(Stage::Error, error.to_string());
                Err(Failure {
                    state: Box::new(state),
                    error,
                })
            }
        }
    }

    fn refine(
        &self,
        state: &mut PipelineState,
        query: &str,
        forced: Option<RefinementAction>,
    ) -> Result<Vec<String>, PipelineError> {
        if !self.config.stages.refinement {
            return Ok(vec![query.to_string()]);
        }
        let action = match forced {
            Some(a) => a,
            None => {
                let policy = self.policy.ok_or(PipelineError::MissingPolicy)?;
                let s = self.encoder.embed(query)?.normalized();
                policy.act(s.values(), ActMode::Greedy)?.0
            }
        };
        state.action_taken = Some(action);
        match refine_query(self.client, query, action, self.config.prompt_style) {
            Ok(lines) => {
                state.log(Stage::Refine, format!("{action}: {}", lines.join(" | ")));
                Ok(lines)
            }
            Err(e @ LlmError::MalformedRefinement { .. }) => {
                state.log(Stage::Refine, format!("{action}: {e}; keeping the original query"));
                Ok(vec![query.to_string()])
            }
            Err(e) => Err(e.into()),
        }
    }

    fn drive(
        &self,
        state: &mut PipelineState,
        query: &str,
        forced: Option<RefinementAction>,
    ) -> Result<(String, Terminal), PipelineError> {
        self.config.validate()?;
        if query.trim().is_empty() {
            return Err(PipelineError::EmptyQuery);
        }
        let stages = self.config.stages;
        let refined = self.refine(state, query, forced)?;
        state.refined_queries = refined.clone();

        let empty = CausalGraph::new();
        let retrieval_graph = if stages.graph { self.graph } else { &empty };
        let knowledge = subquery_merge(&refined, retrieval_graph, self.index, self.encoder, &self.config.retrieval)?;
        state.log(
            Stage::Retrieve,
            format!(
                "{} passages, {} paths",
                knowledge.semantic().count(),
                knowledge.paths().count()
            ),
        );
        state.knowledge = knowledge;

        let th = &self.config.thresholds;
        let mut mode = GenerationMode::Normal;
        loop {
            state.iteration += 1;
            let draft = generate(self.client, query, &state.knowledge, &mode)?;
            state.log(Stage::Generate, format!("round {} ({})", state.iteration, mode.template()));
            let report = verify_answer(
                &draft,
                &state.knowledge,
                self.graph,
                self.encoder,
                &LexicalExtractor,
                &GraphJudge,
                th,
            )?;
            state.log(
                Stage::Verify,
                format!("s_causal={:.4} s_hallucination={:.4}", report.s_causal, report.s_hallucination),
            );
            state.rounds.push(Round {
                mode: mode.template().to_string(),
                draft: draft.clone(),
                report: report.clone(),
            });
            state.draft = Some(draft.clone());
            state.report = Some(report.clone());

            if draft.contains(ABSTENTION) {
                state.log(Stage::Accept, "abstained");
                return Ok((draft, Terminal::Abstained));
            }
            let hallucinated = report.s_hallucination > th.delta;
            let inconsistent = report.s_causal < th.tau;
            let next = if hallucinated && stages.hallucination_correction {
                let unsupported: Vec<String> = report
                    .per_claim
                    .iter()
                    .filter(|c| !c.supported)
                    .map(|c| c.claim.text.clone())
                    .collect();
                Some((
                    Stage::Rewrite,
                    GenerationMode::Rewrite {
                        draft: draft.clone(),
                        unsupported,
                    },
                ))
            } else if inconsistent && stages.rewriter {
                Some((Stage::Fallback, GenerationMode::Strict))
            } else {
                None
            };

            match next {
                None => {
                    state.log(Stage::Accept, format!("{:?}", report.decision).to_lowercase());
                    return Ok((draft, Terminal::Answered));
                }
                Some(_) if state.iteration >= self.config.max_iterations => {
                    let best = best_round(&state.rounds);
                    let chosen = state.rounds[best].clone();
                    state.log(Stage::Exhausted, format!("budget spent; keeping round {}", best + 1));
                    state.draft = Some(chosen.draft.clone());
                    state.report = Some(chosen.report);
                    return Ok((chosen.draft, Terminal::Exhausted));
                }
                Some((stage, next_mode)) => {
                    state.log(stage, format!("after round {}", state.iteration));
                    mode = next_mode;
                }
            }
        }
    }
}

/// Highest s_causal, then lowest s_hallucination, then earliest.
fn best_round(rounds: &[Round]) -> usize {
    let mut best = 0;
    for (i, r) in rounds.iter().enumerate().skip(1) {
        let b = &rounds[best].report;
        let better = r.report.s_causal > b.s_causal
            || (r.report.s_causal == b.s_causal && r.report.s_hallucination < b.s_hallucination);
        if better {
            best = i;
        }
    }
    best
}

/// Scores one finished run for the refinement reward.
pub fn reward_for(outcome: &Outcome, pipeline: &Pipeline<'_>) -> Result<f64, AgentError> {
    let st = &outcome.state;
    let raw = RawComponents {
        relevance: context_relevance(&st.raw_query, &st.knowledge, pipeline.encoder),
        causal_depth: ccd(&st.knowledge),
        similarity: srs_multi(&st.raw_query, &st.refined_queries, pipeline.encoder),
        hallucination: st.report.as_ref().map_or(1.0, |r| r.s_hallucination),
    };
    let n = normalize_components(raw, pipeline.config.retrieval.max_hops);
    compute_reward(&pipeline.config.reward, n.relevance, n.causal_depth, n.similarity, n.hallucination)
}

/// Training environment backed by the full pipeline. Each episode picks a
/// query at random; rewards are memoized per (query, action) since the
/// pipeline is deterministic.
pub struct PipelineEnv<'a> {
    pipeline: Pipeline<'a>,
    queries: Vec<String>,
    current: usize,
    memo: HashMap<(usize, RefinementAction), f64>,
}

impl<'a> PipelineEnv<'a> {
    pub fn new(mut pipeline: Pipeline<'a>, queries: Vec<String>) -> Self {
        pipeline.config.stages.refinement = true;
        Self {
            pipeline,
            queries,
            current: 0,
            memo: HashMap::new(),
        }
    }

    pub fn reward(&mut self, query: usize, action: RefinementAction) -> Result<f64, EnvError> {
        if let Some(r) = self.memo.get(&(query, action)) {
            return Ok(*r);
        }
        let outcome = self
            .pipeline
            .run_with_action(&self.queries[query], action)
            .map_err(|f| Box::new(f) as EnvError)?;
        let r = reward_for(&outcome, &self.pipeline)?;
        self.memo.insert((query, action), r);
        Ok(r)
    }
}

impl RefinementEnvironment for PipelineEnv<'_> {
    fn reset(&mut self, rng: &mut rand_chacha::ChaCha8Rng) -> Result<crate::embedding::Embedding, EnvError> {
        use rand::Rng;
        if self.queries.is_empty() {
            return Err("no training queries".into());
        }
        self.current = rng.random_range(0..self.queries.len());
        Ok(self.pipeline.encoder.embed(&self.queries[self.current])?.normalized())
    }

    fn step(&mut self, action: RefinementAction) -> Result<f64, EnvError> {
        self.reward(self.current, action)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{HashingEncoder, PassageRecord, DIMENSION};
    use crate::graph::TripleRecord;
    use crate::llm::{MockClient, PromptLibrary, GENERATE_NORMAL, GENERATE_REWRITE, GENERATE_STRICT};
    use crate::verification::Decision;
    use std::sync::Arc;

    struct World {
        graph: CausalGraph,
        index: VectorIndex,
        encoder: HashingEncoder,
    }

    fn world() -> World {
        let mut graph = CausalGraph::new();
        graph.add_triple(TripleRecord::new("smoking", "tar", "causes", 1.0)).unwrap();
        graph.add_triple(TripleRecord::new("tar", "cancer", "causes", 1.0)).unwrap();
        let encoder = HashingEncoder::new(DIMENSION);
        let index = VectorIndex::build(
            &encoder,
            [
                ("p1", "Smoking causes tar."),
                ("p2", "Tar causes cancer."),
                ("p3", "Cancer is studied widely."),
            ]
            .map(|(id, t)| PassageRecord {
                id: id.into(),
                text: t.into(),
                source: String::new(),
            }),
        )
        .unwrap();
        World { graph, index, encoder }
    }

    fn pipeline<'a>(w: &'a World, client: &'a dyn LlmClient, stages: StageFlags) -> Pipeline<'a> {
        Pipeline {
            config: PipelineConfig {
                stages,
                ..PipelineConfig::default()
            },
            policy: None,
            graph: &w.graph,
            index: &w.index,
            encoder: &w.encoder,
            client,
        }
    }

    fn mock<F>(f: F) -> MockClient
    where
        F: Fn(&crate::llm::CompletionRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    {
        MockClient::new(Arc::new(PromptLibrary::builtin()), f)
    }

    const GOOD: &str = "Smoking causes tar. Tar causes cancer.";
    const FABRICATED: &str = "Smoking causes tar. Moonlight sharpens violins. Glaciers hum quietly.";

    #[test]
    fn passing_draft_needs_one_generation() {
        let w = world();
        let m = mock(|_| Ok(GOOD.into()));
        let stages = StageFlags { refinement: false, ..StageFlags::FULL };
        let out = pipeline(&w, &m, stages).run_query("why does smoking cause cancer").unwrap();
        assert_eq!(m.calls_to(GENERATE_NORMAL), 1);
        assert_eq!(m.calls(), 1);
        assert_eq!(out.terminal, Terminal::Answered);
        assert_eq!(out.answer, GOOD);
    }

    #[test]
    fn hallucinated_then_fixed() {
        let w = world();
        let m = mock(|req| match req.template_name.as_str() {
            GENERATE_NORMAL => Ok(FABRICATED.into()),
            GENERATE_REWRITE => {
                assert!(req.get("unsupported_claims").unwrap().contains("Moonlight"));
                Ok(GOOD.into())
            }
            other => panic!("unexpected template {other}"),
        });
        let stages = StageFlags { refinement: false, ..StageFlags::FULL };
        let out = pipeline(&w, &m, stages).run_query("why does smoking cause cancer").unwrap();
        let gen_path: Vec<Stage> = out
            .state
            .stages()
            .into_iter()
            .filter(|s| matches!(s, Stage::Generate | Stage::Rewrite | Stage::Fallback))
            .collect();
        assert_eq!(gen_path, vec![Stage::Generate, Stage::Rewrite, Stage::Generate]);
        assert_eq!(out.state.report.as_ref().unwrap().decision, Decision::Accept);
        assert_eq!(out.terminal, Terminal::Answered);
    }

    #[test]
    fn single_round_budget_exhausts() {
        let w = world();
        let m = mock(|_| Ok(FABRICATED.into()));
        let mut p = pipeline(&w, &m, StageFlags { refinement: false, ..StageFlags::FULL });
        p.config.max_iterations = 1;
        let out = p.run_query("smoking").unwrap();
        assert_eq!(out.terminal, Terminal::Exhausted);
        assert_eq!(out.answer, FABRICATED);
        assert_eq!(m.calls(), 1);
    }

    #[test]
    fn reversed_claims_trigger_strict_regeneration() {
        let w = world();
        let m = mock(|req| match req.template_name.as_str() {
            GENERATE_NORMAL => Ok("Tar causes smoking. Cancer causes tar.".into()),
            GENERATE_STRICT => Ok(GOOD.into()),
            other => panic!("unexpected template {other}"),
        });
        let out = pipeline(&w, &m, StageFlags { refinement: false, ..StageFlags::FULL })
            .run_query("smoking")
            .unwrap();
        assert!(out.state.stages().contains(&Stage::Fallback));
        assert_eq!(out.answer, GOOD);
        assert_eq!(out.state.rounds[0].report.s_causal, 0.0);
    }

    #[test]
    fn baseline_never_refines_or_corrects() {
        let w = world();
        let m = mock(|_| Ok(FABRICATED.into()));
        let out = pipeline(&w, &m, StageFlags::BASELINE).run_query("smoking cancer").unwrap();
        assert_eq!(m.calls(), 1);
        assert!(out.state.knowledge.paths().next().is_none());
        assert!(out.state.report.unwrap().s_hallucination > 0.3);
        assert_eq!(out.terminal, Terminal::Answered);
    }

    #[test]
    fn malformed_refinement_keeps_query() {
        let w = world();
        let m = mock(|req| {
            if req.template_name == "simplify" {
                Ok("one\ntwo".into())
            } else {
                Ok(GOOD.into())
            }
        });
        let out = pipeline(&w, &m, StageFlags::FULL)
            .run_with_action("why does smoking cause cancer", RefinementAction::Simplify)
            .unwrap();
        assert_eq!(out.state.refined_queries, vec!["why does smoking cause cancer"]);
        assert_eq!(out.state.action_taken, Some(RefinementAction::Simplify));
    }

    #[test]
    fn errors_keep_history() {
        let w = world();
        let m = mock(|req| {
            if req.template_name == GENERATE_NORMAL {
                Err(LlmError::Scripted("provider down".into()))
            } else {
                Ok("What is smoking?\nWhat is tar?".into())
            }
        });
        let err = pipeline(&w, &m, StageFlags::FULL)
            .run_with_action("smoking", RefinementAction::Decompose)
            .unwrap_err();
        let stages = err.state.stages();
        assert_eq!(stages, vec![Stage::Refine, Stage::Retrieve, Stage::Error]);
        assert!(matches!(err.error, PipelineError::Generation(_)));
    }

    #[test]
    fn refinement_without_policy_is_an_error() {
        let w = world();
        let m = mock(|_| Ok(GOOD.into()));
        let err = pipeline(&w, &m, StageFlags::FULL).run_query("smoking").unwrap_err();
        assert!(matches!(err.error, PipelineError::MissingPolicy));
    }

    #[test]
    fn strict_with_nothing_retrieved_abstains() {
        let w = World {
            graph: CausalGraph::new(),
            index: VectorIndex::new(DIMENSION, "hashing"),
            encoder: HashingEncoder::new(DIMENSION),
        };
        let mut graph = CausalGraph::new();
        graph.add_triple(TripleRecord::new("x", "y", "causes", 1.0)).unwrap();
        let m = mock(|req| match req.template_name.as_str() {
            GENERATE_STRICT if req.get("knowledge") == Some("") => Ok(ABSTENTION.into()),
            _ => Ok("Y causes x.".into()),
        });
        let stages = StageFlags {
            refinement: false,
            graph: false,
            hallucination_correction: false,
            ..StageFlags::FULL
        };
        let mut p = pipeline(&w, &m, stages);
        p.graph = &graph;
        let out = p.run_query("what about y").unwrap();
        assert!(out.state.stages().contains(&Stage::Fallback));
        assert_eq!(out.terminal, Terminal::Abstained);
    }

    #[test]
    fn stage_parsing() {
        assert_eq!(StageFlags::parse("baseline").unwrap(), StageFlags::BASELINE);
        assert_eq!(StageFlags::parse("full").unwrap(), StageFlags::FULL);
        let f = StageFlags::parse("refinement,graph").unwrap();
        assert!(f.refinement && f.graph && !f.rewriter);
        assert_eq!(f.label(), "refinement,graph");
        assert!(StageFlags::parse("graph,bogus").is_err());
    }

    #[test]
    fn pipeline_env_memoizes() {
        let w = world();
        let m = mock(|req| match req.template_name.as_str() {
            "decompose" => Ok("What is smoking?\nWhat does tar cause?".into()),
            "expand" | "simplify" => Ok("Why does smoking cause cancer?".into()),
            _ => Ok(GOOD.into()),
        });
        let mut env = PipelineEnv::new(pipeline(&w, &m, StageFlags::FULL), vec!["why does smoking cause cancer".into()]);
        let r1 = env.reward(0, RefinementAction::Decompose).unwrap();
        let calls = m.calls();
        let r2 = env.reward(0, RefinementAction::Decompose).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(m.calls(), calls);
        assert!((0.0..=1.0).contains(&r1));
    }
}
