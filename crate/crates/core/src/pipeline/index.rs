use std::collections::HashMap;

use crate::aggregate::{global_descriptor, rmac, spoc, AggregationConfig, AggregationMethod, WhiteningModel};
use crate::descriptor::GlobalDescriptor;
use crate::error::{check_dim, Error, Result};
use crate::exec::Exec;
use crate::manifest::CorpusManifest;
use crate::regions::{fmp, ospp, BaseRegionSet, FmpConfig, OsppConfig};
use crate::tensor::CfmTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RerankerKind {
    None,
    Fmp,
    Ospp,
}

/// Everything that determines how an image is described, stored in the index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexConfig {
    pub aggregation: AggregationMethod,
    /// R-MAC scales for the global descriptor.
    pub scales: usize,
    pub reranker: RerankerKind,
    pub fmp: FmpConfig,
    pub ospp: OsppConfig,
}

impl Default for IndexConfig {
    fn default() -> Self {
        IndexConfig {
            aggregation: AggregationMethod::Rmac,
            scales: 3,
            reranker: RerankerKind::Fmp,
            fmp: FmpConfig::default(),
            ospp: OsppConfig::default(),
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 {
            return Err(Error::Config("scales must be >= 1".into()));
        }
        self.fmp.validate()?;
        self.ospp.validate()
    }

    pub fn aggregation_config(&self, whitening: &WhiteningModel) -> AggregationConfig {
        AggregationConfig {
            method: self.aggregation,
            scales: self.scales,
            whitening: Some(whitening.clone()),
        }
    }
}

/// Offline description of one database image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDescription {
    pub global: GlobalDescriptor,
    /// `None` when the image has no activated region (all-zero tensor).
    pub regions: Option<BaseRegionSet>,
}

pub(crate) fn describe(
    t: &CfmTensor,
    cfg: &IndexConfig,
    whitening: &WhiteningModel,
) -> Result<ImageDescription> {
    check_dim(whitening.input_dim(), t.channels())?;
    let global = global_descriptor(t, &cfg.aggregation_config(whitening))?;
    let regions = match cfg.reranker {
        RerankerKind::None => None,
        RerankerKind::Fmp => empty_as_none(fmp(t, &cfg.fmp).map(|r| r.regions))?,
        RerankerKind::Ospp => empty_as_none(ospp(t, &cfg.ospp, whitening))?,
    };
    Ok(ImageDescription { global, regions })
}

fn empty_as_none(r: Result<BaseRegionSet>) -> Result<Option<BaseRegionSet>> {
    match r {
        Ok(s) => Ok(Some(s)),
        Err(Error::EmptyRegions) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Global descriptors and base-region sets for a database, plus the whitening
/// model and configuration used to produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorIndex {
    pub(crate) config: IndexConfig,
    pub(crate) ids: Vec<String>,
    /// Tensor path each image was described from.
    pub(crate) sources: Vec<String>,
    pub(crate) dim: usize,
    pub(crate) globals: Vec<f32>,
    pub(crate) whitening: WhiteningModel,
    /// One entry per image when a reranker is configured.
    pub(crate) regions: Option<Vec<Option<BaseRegionSet>>>,
    pub(crate) positions: HashMap<String, usize>,
}

impl DescriptorIndex {
    pub(crate) fn assemble(
        config: IndexConfig,
        ids: Vec<String>,
        sources: Vec<String>,
        descriptions: Vec<ImageDescription>,
        whitening: WhiteningModel,
    ) -> Result<Self> {
        let dim = whitening.output_dim();
        let mut globals = Vec::with_capacity(ids.len() * dim);
        let mut regions = Vec::with_capacity(ids.len());
        for d in descriptions {
            check_dim(dim, d.global.dim())?;
            globals.extend_from_slice(d.global.values());
            regions.push(d.regions);
        }
        let regions = (config.reranker != RerankerKind::None).then_some(regions);
        Self::from_parts(config, ids, sources, dim, globals, whitening, regions)
    }

    pub(crate) fn from_parts(
        config: IndexConfig,
        ids: Vec<String>,
        sources: Vec<String>,
        dim: usize,
        globals: Vec<f32>,
        whitening: WhiteningModel,
        regions: Option<Vec<Option<BaseRegionSet>>>,
    ) -> Result<Self> {
        config.validate()?;
        if ids.is_empty() {
            return Err(Error::Validation("index has no images".into()));
        }
        check_dim(ids.len(), sources.len())?;
        check_dim(ids.len() * dim, globals.len())?;
        check_dim(whitening.output_dim(), dim)?;
        let mut positions = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if positions.insert(id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate image id {id:?}")));
            }
        }
        match (&regions, config.reranker) {
            (None, RerankerKind::None) => {}
            (Some(r), RerankerKind::Fmp | RerankerKind::Ospp) => {
                check_dim(ids.len(), r.len())?;
                let expected = match config.reranker {
                    RerankerKind::Fmp => whitening.input_dim(),
                    _ => dim,
                };
                for set in r.iter().flatten() {
                    check_dim(expected, set.dim())?;
                }
            }
            _ => {
                return Err(Error::Config(
                    "region sets do not match the configured reranker".into(),
                ))
            }
        }
        Ok(DescriptorIndex {
            config,
            ids,
            sources,
            dim,
            globals,
            whitening,
            regions,
            positions,
        })
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn source(&self, i: usize) -> &str {
        &self.sources[i]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.positions.get(id).copied()
    }

    pub fn global(&self, i: usize) -> &[f32] {
        &self.globals[i * self.dim..(i + 1) * self.dim]
    }

    pub fn whitening(&self) -> &WhiteningModel {
        &self.whitening
    }

    pub fn region_sets(&self) -> Option<&[Option<BaseRegionSet>]> {
        self.regions.as_deref()
    }

    /// Query descriptor in the space of the stored globals.
    pub fn query_descriptor(&self, t: &CfmTensor) -> Result<GlobalDescriptor> {
        check_dim(self.whitening.input_dim(), t.channels())?;
        global_descriptor(t, &self.config.aggregation_config(&self.whitening))
    }

    /// Query featurization matching the stored region sets: raw sum-pooling for
    /// FMP, whitened R-MAC over the OSPP grid for OSPP.
    pub fn rerank_query(&self, t: &CfmTensor) -> Result<GlobalDescriptor> {
        check_dim(self.whitening.input_dim(), t.channels())?;
        match self.config.reranker {
            RerankerKind::Fmp => Ok(spoc(t)),
            RerankerKind::Ospp => {
                let cfg = AggregationConfig::rmac(self.config.ospp.scales, self.whitening.clone());
                rmac(t, &cfg)
            }
            RerankerKind::None => Err(Error::Config("index has no reranker".into())),
        }
    }
}

/// Builds an index from a manifest's entries. The whitening model must come
/// from hold-out data. Any unreadable tensor aborts the build.
pub fn build_index(
    manifest: &CorpusManifest,
    cfg: &IndexConfig,
    whitening: &WhiteningModel,
    exec: Exec,
) -> Result<DescriptorIndex> {
    cfg.validate()?;
    if manifest.entries.is_empty() {
        return Err(Error::Validation("manifest has no entries to index".into()));
    }
    let descriptions = exec.try_map(&manifest.entries, |e| {
        manifest
            .load_entry(e)
            .and_then(|t| describe(&t, cfg, whitening))
            .map_err(|err| err.context(format!("image {}", e.id)))
    })?;
    DescriptorIndex::assemble(
        *cfg,
        manifest.entries.iter().map(|e| e.id.clone()).collect(),
        manifest
            .entries
            .iter()
            .map(|e| manifest.resolve(&e.tensor).to_string_lossy().into_owned())
            .collect(),
        descriptions,
        whitening.clone(),
    )
}

/// Builds an index from in-memory `(id, tensor)` pairs.
pub fn build_index_from_tensors(
    images: &[(String, CfmTensor)],
    cfg: &IndexConfig,
    whitening: &WhiteningModel,
    exec: Exec,
) -> Result<DescriptorIndex> {
    cfg.validate()?;
    if images.is_empty() {
        return Err(Error::Validation("nothing to index".into()));
    }
    let descriptions = exec.try_map(images, |(id, t)| {
        describe(t, cfg, whitening).map_err(|err| err.context(format!("image {id}")))
    })?;
    DescriptorIndex::assemble(
        *cfg,
        images.iter().map(|(id, _)| id.clone()).collect(),
        vec![String::new(); images.len()],
        descriptions,
        whitening.clone(),
    )
}
