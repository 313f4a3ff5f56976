//! Run configuration: one JSON document covering backend selection,
//! sampling, pipeline, positions, integration and metric settings. Every
//! CLI flag overrides its file counterpart.

use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use seqconf::bci::{BciParams, BranchMode};
use seqconf::generator::http::HttpConfig;
use seqconf::generator::GenerationConfig;
use seqconf::mcsampler::DEFAULT_K;
use seqconf::pipeline::{PipelineParams, Strategy, TruncationRule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum GeneratorConfig {
    Simulated {
        world_path: PathBuf,
    },
    Http {
        #[serde(flatten)]
        http: HttpConfig,
    },
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::Simulated {
            world_path: PathBuf::from("world.json"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingSection {
    pub k: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    /// Samples per generator call; 0 means "one batched call of k".
    pub n_per_call: u32,
    pub request_logprobs: bool,
    pub top_logprobs_k: u32,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            temperature: 1.0,
            top_p: 1.0,
            max_tokens: 512,
            n_per_call: 0,
            request_logprobs: false,
            top_logprobs_k: 0,
        }
    }
}

impl SamplingSection {
    pub fn generation_config(&self, seed: Option<u64>) -> GenerationConfig {
        GenerationConfig {
            temperature: self.temperature,
            top_p: self.top_p,
            max_tokens: self.max_tokens,
            seed,
            n: if self.n_per_call == 0 {
                self.k
            } else {
                self.n_per_call
            },
            request_logprobs: self.request_logprobs,
            top_logprobs_k: self.top_logprobs_k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSection {
    pub m: u32,
    pub t: u32,
    pub strategy: Strategy,
    pub truncation_rule: TruncationRule,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            m: 2,
            t: 2,
            strategy: Strategy::Linear,
            truncation_rule: TruncationRule::SentenceFraction,
        }
    }
}

impl PipelineSection {
    pub fn params(&self, k: u32) -> PipelineParams {
        PipelineParams {
            k,
            m: self.m,
            t: self.t,
            strategy: self.strategy,
            truncation_rule: self.truncation_rule,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionStrategy {
    None,
    Paragraph,
    Periodic,
    Entropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PositionsSection {
    pub strategy: PositionStrategy,
    pub interval: usize,
    pub entropy_threshold: f64,
}

impl Default for PositionsSection {
    fn default() -> Self {
        Self {
            strategy: PositionStrategy::None,
            interval: 30,
            entropy_threshold: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BciSection {
    pub alpha: f64,
    pub width: u32,
    pub depth: u32,
    pub mode: BranchMode,
}

impl Default for BciSection {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            width: 0,
            depth: 0,
            mode: BranchMode::Rebranch,
        }
    }
}

impl BciSection {
    pub fn params(&self) -> BciParams {
        BciParams {
            alpha: self.alpha,
            width: self.width,
            depth: self.depth,
            mode: self.mode,
        }
    }
}

fn default_delta_grid() -> Vec<f64> {
    vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSection {
    pub num_bins: usize,
    pub delta_grid: Vec<f64>,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            num_bins: 10,
            delta_grid: default_delta_grid(),
        }
    }
}

impl MetricsSection {
    /// The threshold grid, always including 0.8.
    pub fn deltas(&self) -> Vec<f64> {
        let mut grid = self.delta_grid.clone();
        if !grid.iter().any(|d| (*d - 0.8).abs() < 1e-12) {
            grid.push(0.8);
        }
        grid.sort_by(|a, b| a.partial_cmp(b).expect("finite deltas"));
        grid
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IoSection {
    pub questions: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

/// The whole run configuration. Output locations stay out of this struct on
/// purpose: the manifest hashes the config, and runs into different
/// directories must hash identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub generator: GeneratorConfig,
    pub sampling: SamplingSection,
    pub pipeline: PipelineSection,
    pub positions: PositionsSection,
    pub bci: BciSection,
    pub metrics: MetricsSection,
    pub io: IoSection,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            generator: GeneratorConfig::default(),
            sampling: SamplingSection::default(),
            pipeline: PipelineSection::default(),
            positions: PositionsSection::default(),
            bci: BciSection::default(),
            metrics: MetricsSection::default(),
            io: IoSection::default(),
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.sampling.k, 30);
        assert_eq!(cfg.positions.interval, 30);
        assert_eq!(cfg.positions.entropy_threshold, 1e-10);
        assert_eq!(cfg.metrics.num_bins, 10);
        assert!(cfg.metrics.deltas().contains(&0.8));
        assert_eq!(cfg.workers, 1);
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = RunConfig::default();
        let json = cfg.canonical_json();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"sampling": {"k": 5}, "pipeline": {"m": 3}}"#).unwrap();
        assert_eq!(cfg.sampling.k, 5);
        assert_eq!(cfg.pipeline.m, 3);
        assert_eq!(cfg.pipeline.t, 2);
    }

    #[test]
    fn delta_grid_always_includes_point_eight() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"metrics": {"delta_grid": [0.5, 0.9]}}"#).unwrap();
        assert_eq!(cfg.metrics.deltas(), vec![0.5, 0.8, 0.9]);
    }
}
