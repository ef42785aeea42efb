//! `IDX1` index files and `DSC1` descriptor files.
//!
//! `IDX1` layout (all little-endian):
//!
//! ```text
//! "IDX1"
//! ids:       u32 N, then N x (u32 len, id bytes, u32 len, source-path bytes)
//! globals:   u32 N, u32 D', N*D' f32
//! whitening: u32 D, u32 D', D f32 mean, D'*D f32 projection, D' f32 eigenvalues
//! regions:   u32 M (0 without reranker, else N), then M x (u32 K, u32 dim, K*dim f32)
//!            K = 0 marks an image without activated regions
//! config:    u8 aggregation, u32 scales, u8 reranker, u32 fmp K, u32 fmp iterations,
//!            u64 fmp seed, u32 ospp scales, f64 ospp overlap
//! ```
//!
//! `DSC1` layout: `"DSC1"`, `u32 N`, `u32 D`, `N*D` f32.

use std::fs;
use std::path::Path;

use super::index::{DescriptorIndex, IndexConfig, RerankerKind};
use crate::aggregate::{AggregationMethod, WhiteningModel};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::regions::{BaseRegionSet, FmpConfig, OsppConfig, Provenance};

pub const INDEX_MAGIC: &[u8; 4] = b"IDX1";
pub const DESCRIPTOR_MAGIC: &[u8; 4] = b"DSC1";

fn encode_config(c: &IndexConfig, w: &mut Writer) {
    w.u8(match c.aggregation {
        AggregationMethod::Spoc => 0,
        AggregationMethod::Rmac => 1,
    });
    w.u32(c.scales as u32);
    w.u8(match c.reranker {
        RerankerKind::None => 0,
        RerankerKind::Fmp => 1,
        RerankerKind::Ospp => 2,
    });
    w.u32(c.fmp.clusters as u32);
    w.u32(c.fmp.max_iterations as u32);
    w.u64(c.fmp.seed);
    w.u32(c.ospp.scales as u32);
    w.u64(c.ospp.overlap.to_bits());
}

fn decode_config(r: &mut Reader<'_>) -> Result<IndexConfig> {
    let aggregation = match r.u8()? {
        0 => AggregationMethod::Spoc,
        1 => AggregationMethod::Rmac,
        v => return Err(Error::Format(format!("unknown aggregation code {v}"))),
    };
    let scales = r.u32()? as usize;
    let reranker = match r.u8()? {
        0 => RerankerKind::None,
        1 => RerankerKind::Fmp,
        2 => RerankerKind::Ospp,
        v => return Err(Error::Format(format!("unknown reranker code {v}"))),
    };
    let fmp = FmpConfig {
        clusters: r.u32()? as usize,
        max_iterations: r.u32()? as usize,
        seed: r.u64()?,
    };
    let ospp = OsppConfig {
        scales: r.u32()? as usize,
        overlap: f64::from_bits(r.u64()?),
    };
    Ok(IndexConfig {
        aggregation,
        scales,
        reranker,
        fmp,
        ospp,
    })
}

impl DescriptorIndex {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(INDEX_MAGIC);

        w.len_u32(self.ids.len())?;
        for (id, src) in self.ids.iter().zip(&self.sources) {
            w.str(id)?;
            w.str(src)?;
        }

        w.len_u32(self.ids.len())?;
        w.len_u32(self.dim)?;
        w.f32s(&self.globals);

        self.whitening.encode(&mut w);

        match &self.regions {
            None => w.u32(0),
            Some(sets) => {
                w.len_u32(sets.len())?;
                for set in sets {
                    match set {
                        Some(s) => {
                            w.len_u32(s.len())?;
                            w.len_u32(s.dim())?;
                            w.f32s(s.raw());
                        }
                        None => {
                            w.u32(0);
                            w.u32(0);
                        }
                    }
                }
            }
        }

        encode_config(&self.config, &mut w);
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(INDEX_MAGIC)?;

        r.section("ids");
        let n = r.u32()? as usize;
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        let mut sources = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            ids.push(r.str()?);
            sources.push(r.str()?);
        }

        r.section("globals");
        let gn = r.u32()? as usize;
        if gn != n {
            return Err(Error::Format(format!("globals section holds {gn} rows for {n} ids")));
        }
        let dim = r.u32()? as usize;
        let globals = r.f32s(n.saturating_mul(dim))?;

        r.section("whitening");
        let whitening = WhiteningModel::decode(&mut r)?;

        r.section("regions");
        let m = r.u32()? as usize;
        let mut sets = Vec::with_capacity(m.min(1 << 20));
        for _ in 0..m {
            let k = r.u32()? as usize;
            let d = r.u32()? as usize;
            if k == 0 {
                sets.push(None);
                continue;
            }
            let rows = r.f32s(k.saturating_mul(d))?;
            sets.push(Some(rows));
        }

        r.section("config");
        let config = decode_config(&mut r)?;
        r.finish()?;

        let provenance = match config.reranker {
            RerankerKind::Ospp => Provenance::Ospp,
            _ => Provenance::Fmp,
        };
        let regions = match config.reranker {
            RerankerKind::None => {
                if m != 0 {
                    return Err(Error::Format("region sets present without a reranker".into()));
                }
                None
            }
            _ => Some(
                sets.into_iter()
                    .map(|rows| {
                        rows.map(|rows| {
                            let dim = match config.reranker {
                                RerankerKind::Fmp => whitening.input_dim(),
                                _ => whitening.output_dim(),
                            };
                            BaseRegionSet::new(dim, rows, provenance)
                        })
                        .transpose()
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        DescriptorIndex::from_parts(config, ids, sources, dim, globals, whitening, regions)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(path.display().to_string()))
    }
}

pub fn write_descriptors<S: AsRef<[f32]>>(path: impl AsRef<Path>, rows: &[S]) -> Result<()> {
    let path = path.as_ref();
    let dim = rows.first().map_or(0, |r| r.as_ref().len());
    let mut w = Writer::default();
    w.bytes(DESCRIPTOR_MAGIC);
    w.len_u32(rows.len())?;
    w.len_u32(dim)?;
    for r in rows {
        let r = r.as_ref();
        if r.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.len(),
            });
        }
        w.f32s(r);
    }
    fs::write(path, w.buf).map_err(|e| Error::io(path, e))
}

pub fn read_descriptors(path: impl AsRef<Path>) -> Result<Vec<Vec<f32>>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader::new(&bytes);
    r.magic(DESCRIPTOR_MAGIC)?;
    let n = r.u32()? as usize;
    let d = r.u32()? as usize;
    r.section("descriptors");
    let mut rows = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let row = r.f32s(d)?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite value in row {}", rows.len())));
        }
        rows.push(row);
    }
    r.finish()?;
    Ok(rows)
}
