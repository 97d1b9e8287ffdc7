//! Seeded synthetic embedding stores.
//!
//! Each identity owns an orthonormal frame: a center direction, a spoof
//! offset direction and `modes` style directions. Bona-fide utterances sit
//! at `center + mode_spread * style_j + noise` for a style `j` drawn
//! uniformly, so a test utterance only matches references recorded in the
//! same style. Spoofs sit at `center + spoof_offset * offset_dir + noise`:
//! close to the identity, equally far from every style.
//!
//! Noise is isotropic Gaussian with expected norm `noise`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::store::{Embedding, EmbeddingStore, Label, UtteranceRecord};

pub const FIXTURE_MODEL: &str = "synthetic-gaussian";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub identities: usize,
    pub bona_fide_per_identity: usize,
    pub spoof_per_identity: usize,
    pub dim: usize,
    pub modes: usize,
    pub mode_spread: f64,
    pub spoof_offset: f64,
    pub noise: f64,
    /// Identities are dealt round-robin over this many dataset tags.
    pub datasets: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            identities: 20,
            bona_fide_per_identity: 300,
            spoof_per_identity: 100,
            dim: 256,
            modes: 2,
            mode_spread: 0.8,
            spoof_offset: 0.55,
            noise: 0.12,
            datasets: 1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FixtureError {
    #[error("dim {dim} cannot hold {needed} orthogonal directions")]
    DimTooSmall { dim: usize, needed: usize },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Gram-Schmidt on fresh Gaussian draws.
fn orthonormal_frame(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(count);
    while frame.len() < count {
        let mut v = gaussian(rng, dim);
        for b in &frame {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            v.iter_mut().for_each(|x| *x /= norm);
            frame.push(v);
        }
    }
    frame
}

pub fn dataset_tag(config: &FixtureConfig, identity: usize) -> String {
    if config.datasets <= 1 {
        "synthetic".to_string()
    } else {
        format!("synthetic-{}", identity % config.datasets)
    }
}

pub fn generate(config: &FixtureConfig) -> Result<EmbeddingStore, FixtureError> {
    for (name, v) in [
        ("identities", config.identities),
        ("dim", config.dim),
        ("modes", config.modes),
        ("datasets", config.datasets),
    ] {
        if v == 0 {
            return Err(FixtureError::NonPositive(name));
        }
    }
    let needed = config.modes + 2;
    if config.dim < needed {
        return Err(FixtureError::DimTooSmall {
            dim: config.dim,
            needed,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise_scale = config.noise / (config.dim as f64).sqrt();
    let mut store = EmbeddingStore::new(FIXTURE_MODEL);

    for i in 0..config.identities {
        let identity = format!("id{i:03}");
        let dataset = dataset_tag(config, i);
        let frame = orthonormal_frame(&mut rng, config.dim, needed);
        let (center, offset_dir, styles) = (&frame[0], &frame[1], &frame[2..]);

        let mut emit = |rng: &mut ChaCha8Rng, base: &[f64], id: String, label: Label| {
            let values: Vec<f32> = base
                .iter()
                .map(|&b| (b + noise_scale * rng.sample::<f64, _>(StandardNormal)) as f32)
                .collect();
            let embedding = Embedding::new(values).expect("noisy unit-scale vector is valid");
            store
                .push(UtteranceRecord {
                    utterance_id: id,
                    identity_id: identity.clone(),
                    label,
                    dataset: dataset.clone(),
                    embedding,
                })
                .expect("generated ids are unique");
        };

        for j in 0..config.bona_fide_per_identity {
            let style = &styles[rng.random_range(0..config.modes)];
            let base: Vec<f64> = center
                .iter()
                .zip(style)
                .map(|(c, s)| c + config.mode_spread * s)
                .collect();
            emit(&mut rng, &base, format!("{identity}-bf-{j:05}"), Label::BonaFide);
        }
        let spoof_base: Vec<f64> = center
            .iter()
            .zip(offset_dir)
            .map(|(c, o)| c + config.spoof_offset * o)
            .collect();
        for j in 0..config.spoof_per_identity {
            emit(&mut rng, &spoof_base, format!("{identity}-sp-{j:05}"), Label::Spoof);
        }
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FixtureConfig {
        FixtureConfig {
            identities: 3,
            bona_fide_per_identity: 10,
            spoof_per_identity: 4,
            dim: 16,
            datasets: 2,
            ..FixtureConfig::default()
        }
    }

    #[test]
    fn shape_and_tags() {
        let s = generate(&small()).unwrap();
        assert_eq!(s.len(), 3 * 14);
        assert_eq!(s.dim(), Some(16));
        assert_eq!(s.datasets(), vec!["synthetic-0", "synthetic-1"]);
        let counts = s.identity_counts();
        assert_eq!(counts["id001"].bona_fide, 10);
        assert_eq!(counts["id001"].spoof, 4);
    }

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(generate(&small()).unwrap(), generate(&small()).unwrap());
        let other = FixtureConfig {
            seed: 1,
            ..small()
        };
        assert_ne!(generate(&small()).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn frame_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = orthonormal_frame(&mut rng, 8, 5);
        for (a, x) in f.iter().enumerate() {
            for (b, y) in f.iter().enumerate() {
                let d: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        let c = FixtureConfig {
            dim: 3,
            ..small()
        };
        assert_eq!(
            generate(&c),
            Err(FixtureError::DimTooSmall { dim: 3, needed: 4 })
        );
        let c = FixtureConfig {
            identities: 0,
            ..small()
        };
        assert_eq!(generate(&c), Err(FixtureError::NonPositive("identities")));
    }
}
