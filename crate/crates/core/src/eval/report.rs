use serde::Serialize;

use super::ap::{average_precision, mean_ap, QueryJudgment};
use crate::error::{Error, Result};
use crate::manifest::CorpusManifest;
use crate::pipeline::{run_query, DescriptorIndex, PipelineConfig, RankedList};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryReport {
    pub query: String,
    pub initial: f64,
    pub reranked: Option<f64>,
    pub expanded: Option<f64>,
}

/// Per-query AP and mAP for each enabled stage.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub queries: Vec<QueryReport>,
    pub initial_map: f64,
    pub reranked_map: Option<f64>,
    pub expanded_map: Option<f64>,
}

fn stage_map(reports: &[QueryReport], pick: impl Fn(&QueryReport) -> Option<f64>) -> Result<Option<f64>> {
    let aps: Option<Vec<f64>> = reports.iter().map(pick).collect();
    aps.map(|a| mean_ap(&a)).transpose()
}

/// Runs every manifest query that has relevance judgments through the pipeline.
pub fn evaluate(
    index: &DescriptorIndex,
    manifest: &CorpusManifest,
    cfg: &PipelineConfig,
    with_rerank: bool,
    with_qe: bool,
) -> Result<EvalReport> {
    let mut reports = Vec::new();
    for q in &manifest.queries {
        let Some(rel) = manifest.relevance.get(&q.id) else {
            continue;
        };
        let judgment = QueryJudgment::try_from(rel)?;
        if judgment.relevant.is_empty() {
            continue;
        }
        let tensor = manifest.load_query(q)?;
        let out = run_query(index, &tensor, cfg, with_rerank, with_qe)?;
        let ap = |l: &Option<RankedList>| l.as_ref().map(|l| average_precision(l, &judgment)).transpose();
        reports.push(QueryReport {
            query: q.id.clone(),
            initial: average_precision(&out.initial, &judgment)?,
            reranked: ap(&out.reranked)?,
            expanded: ap(&out.expanded)?,
        });
    }
    if reports.is_empty() {
        return Err(Error::Validation("no query has relevance judgments".into()));
    }
    Ok(EvalReport {
        initial_map: stage_map(&reports, |r| Some(r.initial))?.unwrap_or_default(),
        reranked_map: stage_map(&reports, |r| r.reranked)?,
        expanded_map: stage_map(&reports, |r| r.expanded)?,
        queries: reports,
    })
}
