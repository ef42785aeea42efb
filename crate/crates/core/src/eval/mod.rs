//! Retrieval evaluation: Oxford-style AP/mAP, synthetic corpora, and
//! conversion of Oxford ground-truth files.

mod ap;
mod oxford;
mod report;
mod synthetic;

pub use ap::{average_precision, average_precision_ids, mean_ap, QueryJudgment};
pub use oxford::convert_oxford_gt;
pub use report::{evaluate, EvalReport, QueryReport};
pub use synthetic::{generate_synthetic, ClutterVocabulary, ObjectSignature, SyntheticCorpus, SyntheticSpec};
