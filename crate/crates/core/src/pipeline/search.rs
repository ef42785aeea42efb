use std::cmp::Ordering;

use serde::Serialize;

use super::index::{DescriptorIndex, RerankerKind};
use crate::descriptor::GlobalDescriptor;
use crate::error::{check_dim, Error, Result};
use crate::exec::Exec;
use crate::qam::{qam_similarity, SolverConfig};
use crate::tensor::CfmTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Initial,
    Reranked,
    Expanded,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Initial => "initial",
            Stage::Reranked => "reranked",
            Stage::Expanded => "expanded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedEntry {
    pub id: String,
    pub score: f64,
    #[serde(skip)]
    pub position: usize,
}

/// Ranked `(image-id, score)` pairs.
///
/// Scores are non-increasing within the shortlist and within the tail; after
/// reranking the tail keeps its initial scores, which may exceed QAM scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedList {
    pub stage: Stage,
    pub entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    /// Shortlist size `N` for reranking.
    pub shortlist: usize,
    /// Number of top reranked images averaged into the expanded query.
    pub qe_depth: usize,
    pub reranker: RerankerKind,
    pub solver: SolverConfig,
    pub exec: Exec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            shortlist: 100,
            qe_depth: 5,
            reranker: RerankerKind::Fmp,
            solver: SolverConfig::default(),
            exec: Exec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shortlist == 0 || self.qe_depth == 0 {
            return Err(Error::Config("shortlist and qe-depth must be >= 1".into()));
        }
        self.solver.validate()
    }
}

fn by_score_then_id(a: &RankedEntry, b: &RankedEntry) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id))
}

fn search_with(index: &DescriptorIndex, q: &[f32], stage: Stage, exec: Exec) -> Result<RankedList> {
    check_dim(index.dim(), q.len())?;
    let mut entries = exec.map_range(index.len(), |i| RankedEntry {
        id: index.ids()[i].clone(),
        score: crate::vecmath::dot_f32(q, index.global(i)),
        position: i,
    });
    entries.sort_by(by_score_then_id);
    Ok(RankedList { stage, entries })
}

/// Exact inner-product ranking of every indexed image; ties by ascending id.
pub fn initial_search(index: &DescriptorIndex, q: &GlobalDescriptor, exec: Exec) -> Result<RankedList> {
    search_with(index, q.values(), Stage::Initial, exec)
}

/// Rescores the top `cfg.shortlist` entries of `initial` with QAM and reorders
/// them; entries past the shortlist keep their initial order and scores.
pub fn rerank(
    index: &DescriptorIndex,
    query: &CfmTensor,
    initial: &RankedList,
    cfg: &PipelineConfig,
) -> Result<RankedList> {
    cfg.validate()?;
    if cfg.reranker == RerankerKind::None {
        return Err(Error::Config("no reranker selected".into()));
    }
    if cfg.reranker != index.config().reranker {
        return Err(Error::Config(format!(
            "reranker {:?} requested but index holds {:?} regions",
            cfg.reranker,
            index.config().reranker
        )));
    }
    let sets = index
        .region_sets()
        .ok_or_else(|| Error::Config("index has no region sets".into()))?;
    if initial.is_empty() {
        return Err(Error::Validation("empty initial ranking".into()));
    }
    let q = index.rerank_query(query)?;
    let n = cfg.shortlist.min(initial.len());
    let (head, tail) = initial.entries.split_at(n);

    let rescored = cfg.exec.try_map(head, |e| -> Result<(RankedEntry, f64)> {
        let score = match &sets[e.position] {
            Some(set) => qam_similarity(&q, set, &cfg.solver)?,
            None => e.score,
        };
        Ok((
            RankedEntry {
                id: e.id.clone(),
                score,
                position: e.position,
            },
            e.score,
        ))
    })?;
    let mut rescored = rescored;
    rescored.sort_by(|(a, ia), (b, ib)| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| ib.total_cmp(ia))
            .then_with(|| a.id.cmp(&b.id))
    });
    let mut entries: Vec<RankedEntry> = rescored.into_iter().map(|(e, _)| e).collect();
    entries.extend_from_slice(tail);
    Ok(RankedList {
        stage: Stage::Reranked,
        entries,
    })
}

/// Averages `q` with the globals of the top `qe_depth` entries of `ranked`,
/// renormalizes, and searches the whole index again.
pub fn query_expansion(
    index: &DescriptorIndex,
    q: &GlobalDescriptor,
    ranked: &RankedList,
    cfg: &PipelineConfig,
) -> Result<RankedList> {
    check_dim(index.dim(), q.dim())?;
    if ranked.is_empty() {
        return Err(Error::Validation("empty ranking for query expansion".into()));
    }
    let mut acc = q.to_f64();
    for e in ranked.entries.iter().take(cfg.qe_depth) {
        acc.iter_mut()
            .zip(index.global(e.position))
            .for_each(|(a, &g)| *a += g as f64);
    }
    let count = 1 + cfg.qe_depth.min(ranked.len());
    acc.iter_mut().for_each(|a| *a /= count as f64);
    let expanded = GlobalDescriptor::normalized(&acc);
    search_with(index, expanded.values(), Stage::Expanded, cfg.exec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryOutcome {
    pub initial: RankedList,
    pub reranked: Option<RankedList>,
    pub expanded: Option<RankedList>,
}

impl QueryOutcome {
    /// The list produced by the last enabled stage.
    pub fn last(&self) -> &RankedList {
        self.expanded
            .as_ref()
            .or(self.reranked.as_ref())
            .unwrap_or(&self.initial)
    }
}

/// Runs initial search, then optionally reranking and query expansion.
/// Expansion uses the reranked list when reranking is enabled.
pub fn run_query(
    index: &DescriptorIndex,
    query: &CfmTensor,
    cfg: &PipelineConfig,
    with_rerank: bool,
    with_qe: bool,
) -> Result<QueryOutcome> {
    let q = index.query_descriptor(query)?;
    let initial = initial_search(index, &q, cfg.exec)?;
    let reranked = if with_rerank {
        Some(rerank(index, query, &initial, cfg)?)
    } else {
        None
    };
    let expanded = if with_qe {
        let base = reranked.as_ref().unwrap_or(&initial);
        Some(query_expansion(index, &q, base, cfg)?)
    } else {
        None
    };
    Ok(QueryOutcome {
        initial,
        reranked,
        expanded,
    })
}
