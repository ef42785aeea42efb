use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::manifest::Relevance;
use crate::pipeline::RankedList;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryJudgment {
    pub relevant: HashSet<String>,
    pub junk: HashSet<String>,
}

impl QueryJudgment {
    pub fn new<I, J, S, T>(relevant: I, junk: J) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = T>,
        S: Into<String>,
        T: Into<String>,
    {
        let j = QueryJudgment {
            relevant: relevant.into_iter().map(Into::into).collect(),
            junk: junk.into_iter().map(Into::into).collect(),
        };
        if let Some(x) = j.relevant.intersection(&j.junk).next() {
            return Err(Error::Validation(format!("{x:?} is both relevant and junk")));
        }
        Ok(j)
    }
}

impl TryFrom<&Relevance> for QueryJudgment {
    type Error = Error;

    fn try_from(r: &Relevance) -> Result<Self> {
        QueryJudgment::new(r.relevant.iter().cloned(), r.junk.iter().cloned())
    }
}

/// Average precision with the Oxford buildings convention: junk items are
/// skipped entirely, and precision/recall are integrated with the trapezoid
/// rule starting from `(recall 0, precision 1)`. Relevant items missing from
/// the list add nothing.
pub fn average_precision_ids<'a>(
    ranked: impl IntoIterator<Item = &'a str>,
    j: &QueryJudgment,
) -> Result<f64> {
    if j.relevant.is_empty() {
        return Err(Error::UndefinedAp("no relevant items".into()));
    }
    let total = j.relevant.len() as f64;
    let mut ap = 0.0;
    let mut hits = 0usize;
    let mut rank = 0usize;
    let mut old_recall = 0.0;
    let mut old_precision = 1.0;
    for id in ranked {
        if j.junk.contains(id) {
            continue;
        }
        if j.relevant.contains(id) {
            hits += 1;
        }
        rank += 1;
        let recall = hits as f64 / total;
        let precision = hits as f64 / rank as f64;
        ap += (recall - old_recall) * (old_precision + precision) / 2.0;
        old_recall = recall;
        old_precision = precision;
    }
    Ok(ap)
}

pub fn average_precision(ranked: &RankedList, j: &QueryJudgment) -> Result<f64> {
    average_precision_ids(ranked.ids(), j)
}

pub fn mean_ap(aps: &[f64]) -> Result<f64> {
    if aps.is_empty() {
        return Err(Error::UndefinedAp("mean over zero queries".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}
