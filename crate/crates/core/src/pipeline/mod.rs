//! The three retrieval stages over a persisted descriptor index: initial
//! inner-product search, QAM reranking of a shortlist, and query expansion.

mod index;
mod io;
mod search;

pub use index::{build_index, build_index_from_tensors, DescriptorIndex, ImageDescription, IndexConfig, RerankerKind};
pub use io::{read_descriptors, write_descriptors, DESCRIPTOR_MAGIC, INDEX_MAGIC};
pub use search::{
    initial_search, query_expansion, rerank, run_query, PipelineConfig, QueryOutcome, RankedEntry,
    RankedList, Stage,
};
