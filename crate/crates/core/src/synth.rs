//! Synthetic claim/document embeddings with planted entailment structure.
//!
//! Each modality's sub-label decides how the document embedding relates to
//! the claim embedding:
//!
//! * entailed: the document is a lightly perturbed copy of the claim (cosine near 1)
//! * not entailed: the document is drawn independently (cosine near 0)
//! * refuted: the document is a perturbed negation of the claim (cosine near -1)
//!
//! Claims are additionally offset by a per-label center, so the sub-label is
//! recoverable from the claim segment alone as well. Centers depend only on
//! `structure_seed`; records only on `sample_seed`, so train and held-out
//! sets drawn with different sample seeds share one distribution.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::evec::{write_evec, EvecError, EvecStore};
use crate::label::{decompose, FactifyLabel};
use crate::manifest::{write_manifest, ManifestRecord};
use crate::pipeline::EmbeddingPaths;

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub records: usize,
    pub text_dim: usize,
    pub image_dim: usize,
    pub structure_seed: u64,
    pub sample_seed: u64,
    /// Per-coordinate std of the claim noise, relative to unit-variance centers.
    pub claim_noise: f64,
    /// Per-coordinate std of the perturbation applied to entailed/refuted documents.
    pub doc_noise: f64,
    pub id_prefix: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            records: 500,
            text_dim: 384,
            image_dim: 2048,
            structure_seed: 0,
            sample_seed: 1,
            claim_noise: 1.0,
            doc_noise: 0.5,
            id_prefix: "syn".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub manifest: Vec<ManifestRecord>,
    pub text_claims: EvecStore,
    pub text_docs: EvecStore,
    pub image_claims: EvecStore,
    pub image_docs: EvecStore,
}

struct Modality {
    centers: Vec<Vec<f64>>,
}

impl Modality {
    fn new(dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let centers = (0..3)
            .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        Self { centers }
    }

    fn sample(&self, label: usize, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> (Vec<f32>, Vec<f32>) {
        let center = &self.centers[label];
        let claim: Vec<f64> = center
            .iter()
            .map(|c| c + spec.claim_noise * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let doc: Vec<f64> = match label {
            0 => claim
                .iter()
                .map(|c| c + spec.doc_noise * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            1 => (0..claim.len())
                .map(|_| rng.sample::<f64, _>(StandardNormal) * (1.0 + spec.claim_noise))
                .collect(),
            _ => claim
                .iter()
                .map(|c| -c + spec.doc_noise * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        };
        let f = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect();
        (f(claim), f(doc))
    }
}

/// Records cycle through the five classes in canonical order.
pub fn generate(spec: &SynthSpec) -> Result<SynthData, EvecError> {
    let mut structure = ChaCha8Rng::seed_from_u64(spec.structure_seed);
    let text = Modality::new(spec.text_dim, &mut structure);
    let image = Modality::new(spec.image_dim, &mut structure);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.sample_seed);
    let mut data = SynthData {
        manifest: Vec::with_capacity(spec.records),
        text_claims: EvecStore::new(spec.text_dim)?,
        text_docs: EvecStore::new(spec.text_dim)?,
        image_claims: EvecStore::new(spec.image_dim)?,
        image_docs: EvecStore::new(spec.image_dim)?,
    };
    for i in 0..spec.records {
        let label = FactifyLabel::ALL[i % FactifyLabel::ALL.len()];
        let pair = decompose(label);
        let id = format!("{}-{i:05}", spec.id_prefix);
        let (tc, td) = text.sample(pair.text.index(), spec, &mut rng);
        let (ic, idoc) = image.sample(pair.image.index(), spec, &mut rng);
        data.text_claims.insert(id.clone(), tc)?;
        data.text_docs.insert(id.clone(), td)?;
        data.image_claims.insert(id.clone(), ic)?;
        data.image_docs.insert(id.clone(), idoc)?;
        let mut rec = ManifestRecord::new(id.clone(), Some(label));
        rec.claim_text = format!("synthetic claim {id}");
        rec.document_text = format!("synthetic document {id}");
        rec.claim_image = format!("images/{id}-claim.jpg");
        rec.document_image = format!("images/{id}-document.jpg");
        data.manifest.push(rec);
    }
    Ok(data)
}

impl SynthData {
    /// Writes `manifest.jsonl` and the four EVEC files into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<EmbeddingPaths, EvecError> {
        fs::create_dir_all(dir)?;
        write_manifest(&self.manifest, dir.join(MANIFEST_FILE))?;
        let paths = EmbeddingPaths::in_dir(dir);
        write_evec(&self.text_claims, &paths.text_claims)?;
        write_evec(&self.text_docs, &paths.text_docs)?;
        write_evec(&self.image_claims, &paths.image_claims)?;
        write_evec(&self.image_docs, &paths.image_docs)?;
        Ok(paths)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::cosine;

    fn small() -> SynthSpec {
        SynthSpec {
            records: 15,
            text_dim: 16,
            image_dim: 32,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_and_balanced() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a, b);
        for label in FactifyLabel::ALL {
            assert_eq!(
                a.manifest
                    .iter()
                    .filter(|r| r.category == Some(label))
                    .count(),
                3
            );
        }
        assert_eq!(a.text_claims.len(), 15);
        assert_eq!(a.image_docs.dim(), 32);
    }

    #[test]
    fn cosine_regimes_follow_sub_labels() {
        let spec = SynthSpec {
            records: 50,
            ..Default::default()
        };
        let data = generate(&spec).unwrap();
        for rec in &data.manifest {
            let pair = decompose(rec.category.unwrap());
            let c = cosine(
                &data.text_claims.embedding(&rec.id).unwrap(),
                &data.text_docs.embedding(&rec.id).unwrap(),
            )
            .unwrap();
            match pair.text.index() {
                0 => assert!(c > 0.8, "{c}"),
                1 => assert!(c.abs() < 0.3, "{c}"),
                _ => assert!(c < -0.8, "{c}"),
            }
        }
    }

    #[test]
    fn sample_seed_changes_records_not_centers() {
        let a = generate(&small()).unwrap();
        let b = generate(&SynthSpec {
            sample_seed: 9,
            ..small()
        })
        .unwrap();
        assert_ne!(a.text_claims, b.text_claims);
        assert_eq!(a.manifest.len(), b.manifest.len());
    }

    #[test]
    fn writes_readable_files() {
        let dir = tempfile::tempdir().unwrap();
        let data = generate(&small()).unwrap();
        let paths = data.write_to(dir.path()).unwrap();
        assert_eq!(
            crate::evec::read_evec(&paths.image_claims).unwrap(),
            data.image_claims
        );
        let m = crate::manifest::load_manifest(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(m, data.manifest);
    }
}
