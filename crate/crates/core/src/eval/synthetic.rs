//! Planted-object corpora for end-to-end checks without a CNN.
//!
//! Relevant images contain a fixed object signature at a random position on
//! top of clutter; distractors contain clutter only. The query is the clean
//! signature itself. Clutter cells draw from a fixed vocabulary of background
//! patterns, so a hold-out corpus built with the same vocabulary sees the
//! same background statistics.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifest::{CorpusManifest, ManifestEntry, ManifestQuery, Relevance};
use crate::tensor::{write_tensor, CfmTensor};

/// Sparse positive `size x size x channels` activation pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSignature {
    pub size: usize,
    pub channels: usize,
    /// Row-major `size * size * channels` values.
    pub values: Vec<f32>,
}

impl ObjectSignature {
    /// `active` channels fire on random subsets of the patch cells.
    pub fn random(size: usize, channels: usize, active: usize, seed: u64) -> Result<Self> {
        if size == 0 || channels == 0 || active == 0 || active > channels {
            return Err(Error::Validation(format!(
                "signature needs size >= 1 and 1 <= active ({active}) <= channels ({channels})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cells = size * size;
        let mut values = vec![0.0f32; cells * channels];
        for d in sample(&mut rng, channels, active).into_vec() {
            let count = rng.gen_range(1..=cells.div_ceil(2));
            for cell in sample(&mut rng, cells, count).into_vec() {
                values[cell * channels + d] = rng.gen_range(0.5f32..1.5);
            }
        }
        Ok(ObjectSignature {
            size,
            channels,
            values,
        })
    }

    pub fn tensor(&self) -> CfmTensor {
        CfmTensor::new(self.size, self.size, self.channels, self.values.clone())
            .expect("signature values are nonnegative")
    }
}

/// Vocabulary of sparse background patterns placed at clutter cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ClutterVocabulary {
    pub channels: usize,
    /// Each pattern: `(channel, value)` pairs.
    pub patterns: Vec<Vec<(usize, f32)>>,
}

impl ClutterVocabulary {
    /// `count` patterns, each active on `per_pattern` random channels.
    pub fn random(channels: usize, count: usize, per_pattern: usize, seed: u64) -> Result<Self> {
        if count == 0 || per_pattern == 0 || per_pattern > channels {
            return Err(Error::Validation(format!(
                "clutter vocabulary needs count >= 1 and 1 <= per-pattern ({per_pattern}) <= channels ({channels})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let patterns = (0..count)
            .map(|_| {
                let mut p: Vec<(usize, f32)> = sample(&mut rng, channels, per_pattern)
                    .into_iter()
                    .map(|c| (c, rng.gen_range(0.5f32..1.5)))
                    .collect();
                p.sort_by_key(|&(c, _)| c);
                p
            })
            .collect();
        Ok(ClutterVocabulary { channels, patterns })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub height: usize,
    pub width: usize,
    pub object: ObjectSignature,
    /// Probability that a grid cell carries clutter activations.
    pub clutter_density: f64,
    pub clutter: ClutterVocabulary,
    /// Multiplicative jitter `v (1 + noise u)`, `u ~ U(-1, 1)`, applied to
    /// every planted object and clutter value.
    pub noise_scale: f64,
    pub relevant: usize,
    pub distractors: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Default planted-object corpus: 16x16x32 grid, 5x5 object on 16
    /// channels, clutter density 0.3 from 12 patterns of 8 channels, 20
    /// relevant images and 200 distractors. Object and vocabulary are both
    /// drawn from `seed`.
    pub fn planted(seed: u64) -> Self {
        SyntheticSpec {
            height: 16,
            width: 16,
            object: ObjectSignature::random(5, 32, 16, seed).expect("valid default object"),
            clutter_density: 0.3,
            clutter: ClutterVocabulary::random(32, 12, 8, seed).expect("valid default vocabulary"),
            noise_scale: 0.1,
            relevant: 20,
            distractors: 200,
            seed,
        }
    }

    /// Distractor-only corpus with the same clutter vocabulary, for fitting
    /// whitening.
    pub fn holdout(&self, images: usize) -> Self {
        SyntheticSpec { relevant: 0, distractors: images, seed: self.seed.wrapping_add(1000), ..self.clone() }
    }

    pub fn channels(&self) -> usize {
        self.object.channels
    }

    pub fn validate(&self) -> Result<()> {
        if self.object.size > self.height || self.object.size > self.width {
            return Err(Error::Validation(format!(
                "object of size {} does not fit a {}x{} grid",
                self.object.size, self.height, self.width
            )));
        }
        if !(0.0..=1.0).contains(&self.clutter_density) || self.noise_scale < 0.0 || self.noise_scale > 1.0 {
            return Err(Error::Validation("clutter density and noise scale must be in [0, 1]".into()));
        }
        if self.clutter.channels != self.channels() {
            return Err(Error::Validation("clutter vocabulary and object disagree on channels".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    /// Relevant images first (`rel_###`), then distractors (`dis_###`).
    pub images: Vec<(String, CfmTensor)>,
    pub query: CfmTensor,
    pub relevant: Vec<String>,
}

fn jitter(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> f32 {
    (1.0 + spec.noise_scale * rng.gen_range(-1.0..1.0)) as f32
}

fn clutter(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let d = spec.channels();
    let mut values = vec![0.0f32; spec.height * spec.width * d];
    for cell in 0..spec.height * spec.width {
        if !rng.gen_bool(spec.clutter_density) {
            continue;
        }
        let pattern = &spec.clutter.patterns[rng.gen_range(0..spec.clutter.patterns.len())];
        for &(c, v) in pattern {
            values[cell * d + c] = v * jitter(spec, rng);
        }
    }
    values
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (h, w, d, s) = (spec.height, spec.width, spec.channels(), spec.object.size);
    let mut images = Vec::with_capacity(spec.relevant + spec.distractors);
    let mut relevant = Vec::with_capacity(spec.relevant);

    for k in 0..spec.relevant {
        let mut values = clutter(spec, &mut rng);
        let top = rng.gen_range(0..=h - s);
        let left = rng.gen_range(0..=w - s);
        for y in 0..s {
            for x in 0..s {
                for c in 0..d {
                    let v = spec.object.values[(y * s + x) * d + c];
                    if v > 0.0 {
                        values[((top + y) * w + left + x) * d + c] = v * jitter(spec, &mut rng);
                    }
                }
            }
        }
        let id = format!("rel_{k:03}");
        relevant.push(id.clone());
        images.push((id, CfmTensor::new(h, w, d, values)?));
    }
    for k in 0..spec.distractors {
        let values = clutter(spec, &mut rng);
        images.push((format!("dis_{k:03}"), CfmTensor::new(h, w, d, values)?));
    }
    Ok(SyntheticCorpus {
        images,
        query: spec.object.tensor(),
        relevant,
    })
}

impl SyntheticCorpus {
    /// Writes `<id>.cfm` tensors, `query.cfm`, and `manifest.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<CorpusManifest> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.images.len());
        for (id, t) in &self.images {
            let file = format!("{id}.cfm");
            write_tensor(t, dir.join(&file))?;
            entries.push(ManifestEntry {
                id: id.clone(),
                tensor: file,
                label: None,
            });
        }
        write_tensor(&self.query, dir.join("query.cfm"))?;
        let manifest = CorpusManifest {
            entries,
            queries: vec![ManifestQuery {
                id: "query".into(),
                tensor: "query.cfm".into(),
                crop: None,
            }],
            relevance: [(
                "query".to_string(),
                Relevance {
                    relevant: self.relevant.clone(),
                    junk: vec![],
                },
            )]
            .into_iter()
            .collect(),
            base_dir: dir.to_path_buf(),
        };
        manifest.save(dir.join("manifest.json"))?;
        Ok(manifest)
    }
}
