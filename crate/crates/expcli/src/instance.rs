//! Versioned JSON instance files and scenario construction from config.
//!
//! ```json
//! { "format": 1, "n": 2, "k": 2, "d": 4,
//!   "correct": [0, 1],
//!   "features": [[k*d row-major values], [k*d row-major values]],
//!   "theta0": [d values] }
//! ```
//!
//! `theta0` is optional and defaults to zeros.

use std::path::Path;

use nalgebra::DMatrix;
use rlvr_core::rng::{stream_rng, STREAM_SCENARIO};
use rlvr_core::scenarios::{self, cyclic_targets, DifficultyPreset, Scenario, ScenarioError};
use rlvr_core::{FeatureSet, PolicyParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Generator, ScenarioSection};

pub const INSTANCE_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read instance {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("instance {path}: {message}")]
    Malformed { path: String, message: String },
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub format: u32,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub correct: Vec<usize>,
    pub features: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
}

impl InstanceFile {
    pub fn from_scenario(sc: &Scenario) -> Self {
        let fs = &sc.features;
        Self {
            format: INSTANCE_FORMAT,
            n: fs.n(),
            k: fs.k(),
            d: fs.d(),
            correct: fs.all_correct().to_vec(),
            features: fs
                .all_features()
                .iter()
                .map(|x| (0..fs.k()).flat_map(|r| x.row(r).iter().copied().collect::<Vec<_>>()).collect())
                .collect(),
            theta0: Some(sc.theta0.theta().as_slice().to_vec()),
        }
    }

    pub fn into_scenario(self, origin: &str) -> Result<Scenario, InstanceError> {
        let bad = |message: String| InstanceError::Malformed { path: origin.to_string(), message };
        if self.format != INSTANCE_FORMAT {
            return Err(bad(format!("unsupported format {} (expected {INSTANCE_FORMAT})", self.format)));
        }
        if self.features.len() != self.n || self.correct.len() != self.n {
            return Err(bad(format!(
                "n = {} but {} feature blocks and {} correct indices",
                self.n,
                self.features.len(),
                self.correct.len()
            )));
        }
        let mut blocks = Vec::with_capacity(self.n);
        for (i, values) in self.features.iter().enumerate() {
            if values.len() != self.k * self.d {
                return Err(bad(format!("prompt {i}: expected {} values, got {}", self.k * self.d, values.len())));
            }
            blocks.push(DMatrix::from_row_slice(self.k, self.d, values));
        }
        let features = FeatureSet::new(blocks, self.correct).map_err(|e| bad(e.to_string()))?;
        let theta0 = match self.theta0 {
            Some(t) if t.len() != self.d => return Err(bad(format!("theta0 has length {}, expected {}", t.len(), self.d))),
            Some(t) => PolicyParams::from_slice(&t).map_err(|e| bad(e.to_string()))?,
            None => PolicyParams::zeros(self.d),
        };
        Ok(Scenario { features, theta0 })
    }
}

pub fn load_instance(path: &Path) -> Result<Scenario, InstanceError> {
    let origin = path.display().to_string();
    let text =
        std::fs::read_to_string(path).map_err(|source| InstanceError::Read { path: origin.clone(), source })?;
    let file: InstanceFile = serde_json::from_str(&text)
        .map_err(|e| InstanceError::Malformed { path: origin.clone(), message: e.to_string() })?;
    file.into_scenario(&origin)
}

pub fn instance_json(sc: &Scenario) -> String {
    let mut s = serde_json::to_string_pretty(&InstanceFile::from_scenario(sc)).expect("instance serializes");
    s.push('\n');
    s
}

/// Builds the scenario described by `[scenario]`.
pub fn build_scenario(s: &ScenarioSection) -> Result<Scenario, InstanceError> {
    let mut rng = stream_rng(s.seed, STREAM_SCENARIO, 0);
    let k = s.k.unwrap_or(4);
    let block_dim = s.block_dim.unwrap_or(4);
    let scale = s.scale.unwrap_or(1.0);
    let with_targets = |features: FeatureSet, targets: &Option<Vec<f64>>| -> Result<Scenario, InstanceError> {
        let theta0 = match targets {
            Some(t) => scenarios::difficulty_profile(&features, &cyclic_targets(features.n(), t))?,
            None => PolicyParams::zeros(features.d()),
        };
        Ok(Scenario { features, theta0 })
    };
    match s.generator {
        Generator::OrthogonalBlocks => {
            let fs = scenarios::orthogonal_blocks(s.n.unwrap_or(8), k, block_dim, scale, &mut rng)?;
            with_targets(fs, &s.targets)
        }
        Generator::CongruentBlocks => {
            let fs = scenarios::congruent_blocks(s.n.unwrap_or(8), k, block_dim, scale, &mut rng)?;
            with_targets(fs, &s.targets)
        }
        Generator::RandomFeatures => {
            let fs =
                scenarios::random_features(s.n.unwrap_or(8), k, s.d.unwrap_or(64), s.overlap.unwrap_or(0.0), &mut rng)?;
            Ok(Scenario { theta0: PolicyParams::zeros(fs.d()), features: fs })
        }
        Generator::DifficultyPreset => {
            let mut preset = DifficultyPreset::default();
            if let Some(n) = s.n {
                preset.n = n;
            }
            preset.k = k;
            preset.block_dim = block_dim;
            preset.scale = scale;
            if let Some(t) = &s.targets {
                preset.targets = t.clone();
            }
            Ok(preset.build(s.seed)?)
        }
        Generator::Instance => load_instance(s.path.as_deref().expect("validated")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn section(generator: Generator) -> ScenarioSection {
        ScenarioSection {
            generator,
            seed: 3,
            n: Some(3),
            k: Some(3),
            block_dim: Some(2),
            scale: None,
            d: Some(5),
            overlap: None,
            targets: None,
            path: None,
        }
    }

    #[test]
    fn round_trip_through_json() {
        let sc = build_scenario(&section(Generator::OrthogonalBlocks)).unwrap();
        let text = instance_json(&sc);
        let file: InstanceFile = serde_json::from_str(&text).unwrap();
        let back = file.into_scenario("mem").unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn wrong_format_rejected() {
        let sc = build_scenario(&section(Generator::RandomFeatures)).unwrap();
        let mut file = InstanceFile::from_scenario(&sc);
        file.format = 2;
        assert!(matches!(file.into_scenario("mem"), Err(InstanceError::Malformed { .. })));
    }

    #[test]
    fn short_block_rejected() {
        let sc = build_scenario(&section(Generator::RandomFeatures)).unwrap();
        let mut file = InstanceFile::from_scenario(&sc);
        file.features[1].pop();
        let msg = file.into_scenario("mem").unwrap_err().to_string();
        assert!(msg.contains("prompt 1"), "{msg}");
    }

    #[test]
    fn targets_set_initial_success() {
        let mut s = section(Generator::CongruentBlocks);
        s.targets = Some(vec![0.2, 0.8]);
        let sc = build_scenario(&s).unwrap();
        let p = rlvr_core::policy::prompt_stats(&sc.features, &sc.theta0, 2).unwrap();
        assert!((p.success - 0.2).abs() < 1e-9);
    }
}
