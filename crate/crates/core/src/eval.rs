//! Evaluation harness over a gold query set.

use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::metrics::{
    answer_correct, ccd, context_relevance, crc, gold_edge_set, groundedness, srs_multi, CorrectnessMode,
};
use crate::pipeline::{Failure, Pipeline, StageFlags, Terminal};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("gold file line {line}: {message}")]
    Gold { line: usize, message: String },
    #[error("gold io: {0}")]
    Io(#[from] std::io::Error),
    #[error("query {index} ({query:?}) failed: {failure}")]
    Query {
        index: usize,
        query: String,
        #[source]
        failure: Failure,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldRecord {
    #[serde(default)]
    pub id: Option<String>,
    pub query: String,
    pub answer: String,
    #[serde(default)]
    pub gold_edges: Vec<(String, String)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_passage_ids: Option<Vec<String>>,
}

impl GoldRecord {
    /// Multiple-choice records compare exactly; free text uses token F1.
    pub fn correctness_mode(&self) -> CorrectnessMode {
        if self.choices.as_ref().is_some_and(|c| !c.is_empty()) {
            CorrectnessMode::ExactChoice
        } else {
            CorrectnessMode::default()
        }
    }
}

pub fn read_gold<R: BufRead>(input: R) -> Result<Vec<GoldRecord>, EvalError> {
    let mut out = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GoldRecord = serde_json::from_str(&line).map_err(|e| EvalError::Gold {
            line: n + 1,
            message: e.to_string(),
        })?;
        if rec.query.trim().is_empty() || rec.answer.trim().is_empty() {
            return Err(EvalError::Gold {
                line: n + 1,
                message: "query and answer must be non-empty".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub id: String,
    pub query: String,
    pub action: Option<String>,
    pub terminal: Terminal,
    pub rounds: usize,
    pub crc: f64,
    pub ccd: f64,
    pub srs: f64,
    pub groundedness: f64,
    pub context_relevance: f64,
    pub s_causal: f64,
    pub s_hallucination: f64,
    pub hallucinated: bool,
    pub correct: bool,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub answer: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub crc: f64,
    pub ccd: f64,
    pub srs: f64,
    pub groundedness: f64,
    pub context_relevance: f64,
    pub hr: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub stages: String,
    pub records: usize,
    pub aggregate: Aggregate,
    pub per_query: Vec<QueryRow>,
}

fn mean(rows: &[QueryRow], f: impl Fn(&QueryRow) -> f64) -> f64 {
    if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(f).sum::<f64>() / rows.len() as f64
    }
}

fn rate(rows: &[QueryRow], f: impl Fn(&QueryRow) -> bool) -> f64 {
    mean(rows, |r| if f(r) { 1.0 } else { 0.0 })
}

impl Aggregate {
    /// Means of the per-query rows; HR and accuracy are rates over all
    /// queries, P/R/F1 are macro-averaged.
    pub fn from_rows(rows: &[QueryRow]) -> Self {
        Self {
            crc: mean(rows, |r| r.crc),
            ccd: mean(rows, |r| r.ccd),
            srs: mean(rows, |r| r.srs),
            groundedness: mean(rows, |r| r.groundedness),
            context_relevance: mean(rows, |r| r.context_relevance),
            hr: rate(rows, |r| r.hallucinated),
            accuracy: rate(rows, |r| r.correct),
            precision: mean(rows, |r| r.precision),
            recall: mean(rows, |r| r.recall),
            f1: mean(rows, |r| r.f1),
        }
    }
}

/// Runs every gold record through `pipeline` with `stages` applied.
pub fn run_eval(pipeline: &Pipeline<'_>, gold: &[GoldRecord], stages: StageFlags) -> Result<EvalReport, EvalError> {
    let mut config = pipeline.config.clone();
    config.stages = stages;
    let p = Pipeline { config, ..*pipeline };
    let delta = p.config.thresholds.delta;
    let mut rows = Vec::with_capacity(gold.len());
    for (i, rec) in gold.iter().enumerate() {
        let out = p.run_query(&rec.query).map_err(|failure| EvalError::Query {
            index: i,
            query: rec.query.clone(),
            failure,
        })?;
        let st = &out.state;
        let report = st.report.as_ref();
        let s_hallucination = report.map_or(0.0, |r| r.s_hallucination);
        let c = answer_correct(&out.answer, &rec.answer, rec.correctness_mode());
        rows.push(QueryRow {
            id: rec.id.clone().unwrap_or_else(|| format!("q{:03}", i + 1)),
            query: rec.query.clone(),
            action: st.action_taken.map(|a| a.name().to_string()),
            terminal: out.terminal,
            rounds: st.iteration,
            crc: crc(&st.knowledge, &gold_edge_set(&rec.gold_edges)),
            ccd: ccd(&st.knowledge),
            srs: srs_multi(&rec.query, &st.refined_queries, p.encoder),
            groundedness: groundedness(&out.answer, &st.knowledge, p.encoder),
            context_relevance: context_relevance(&rec.query, &st.knowledge, p.encoder),
            s_causal: report.map_or(1.0, |r| r.s_causal),
            s_hallucination,
            hallucinated: out.terminal != Terminal::Abstained && s_hallucination > delta,
            correct: c.correct,
            precision: c.precision,
            recall: c.recall,
            f1: c.f1,
            answer: out.answer.clone(),
        });
    }
    Ok(EvalReport {
        stages: stages.label(),
        records: rows.len(),
        aggregate: Aggregate::from_rows(&rows),
        per_query: rows,
    })
}

/// Aligned text table, one row per report.
pub fn format_table(reports: &[&EvalReport]) -> String {
    let header = ["Stages", "CRC", "CCD", "SRS", "Groundedness", "HR", "F1"];
    let rows: Vec<[String; 7]> = reports
        .iter()
        .map(|r| {
            let a = &r.aggregate;
            [
                r.stages.clone(),
                format!("{:.4}", a.crc),
                format!("{:.4}", a.ccd),
                format!("{:.4}", a.srs),
                format!("{:.4}", a.groundedness),
                format!("{:.4}", a.hr),
                format!("{:.4}", a.f1),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    let line = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{}", line(&header.map(String::from)));
    for row in &rows {
        let _ = writeln!(out, "{}", line(row));
    }
    out
}
