//! Corpus manifests: which tensors make up the database, the queries, and the
//! per-query relevance judgments. Stored as JSON with top-level keys
//! `entries`, `queries` and `relevance`. Relative tensor paths resolve against
//! the manifest's directory.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{read_tensor, CfmTensor, GridBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub tensor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestQuery {
    pub id: String,
    pub tensor: String,
    /// Crop box in feature-map grid coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<GridBox>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Relevance {
    pub relevant: Vec<String>,
    #[serde(default)]
    pub junk: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub queries: Vec<ManifestQuery>,
    #[serde(default)]
    pub relevance: BTreeMap<String, Relevance>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl CorpusManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: CorpusManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| Error::Format(format!("manifest encode: {e}")))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn resolve(&self, tensor: &str) -> PathBuf {
        let p = Path::new(tensor);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Validation(format!("duplicate image id {:?}", e.id)));
            }
        }
        let mut qseen = HashSet::new();
        for q in &self.queries {
            if !qseen.insert(q.id.as_str()) {
                return Err(Error::Validation(format!("duplicate query id {:?}", q.id)));
            }
        }
        let tensors = self.entries.iter().map(|e| (&e.id, &e.tensor));
        let queries = self.queries.iter().map(|q| (&q.id, &q.tensor));
        for (id, tensor) in tensors.chain(queries) {
            let path = self.resolve(tensor);
            if !path.is_file() {
                return Err(Error::Validation(format!(
                    "{id}: tensor file {} does not exist",
                    path.display()
                )));
            }
        }
        for (qid, rel) in &self.relevance {
            let relevant: HashSet<&String> = rel.relevant.iter().collect();
            if let Some(j) = rel.junk.iter().find(|j| relevant.contains(j)) {
                return Err(Error::Validation(format!(
                    "query {qid}: {j:?} is both relevant and junk"
                )));
            }
        }
        Ok(())
    }

    pub fn load_entry(&self, e: &ManifestEntry) -> Result<CfmTensor> {
        read_tensor(self.resolve(&e.tensor)).map_err(|err| err.context(format!("image {}", e.id)))
    }

    /// Reads a query tensor, applying its grid crop if present.
    pub fn load_query(&self, q: &ManifestQuery) -> Result<CfmTensor> {
        let t = read_tensor(self.resolve(&q.tensor))
            .map_err(|err| err.context(format!("query {}", q.id)))?;
        match q.crop {
            Some(b) => t.crop(b).map_err(|err| err.context(format!("query {}", q.id))),
            None => Ok(t),
        }
    }
}
