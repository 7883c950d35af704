//! Flat `key = value` run configuration with dotted section keys.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PipelineError;
use crate::cae::ArchSpec;
use crate::imageio::{SynthSpec, MISSION_PATTERN};
use crate::rost::RostConfig;
use crate::vocab::{DescriptorParams, KmeansParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeaturePath {
    Cae,
    Baseline,
}

impl FeaturePath {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cae => "cae",
            Self::Baseline => "baseline",
        }
    }
}

impl fmt::Display for FeaturePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeaturePath {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cae" | "hybrid" => Ok(Self::Cae),
            "baseline" => Ok(Self::Baseline),
            other => Err(format!("unknown feature path {other:?} (expected cae or baseline)")),
        }
    }
}

/// Seed streams for each seeded component.
#[derive(Debug, Clone, Copy)]
pub enum SeedStream {
    Synth = 1,
    Cae = 2,
    Vocab = 3,
    Rost = 4,
}

/// Deterministic per-component seed from the global seed.
pub fn derive_seed(global: u64, stream: SeedStream) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(global);
    rng.set_stream(stream as u64);
    rng.next_u64()
}

pub const KEYS: &[&str] = &[
    "seed",
    "out",
    "run.features",
    "run.budget",
    "run.realtime_ms",
    "data.dir",
    "data.pattern",
    "data.labels",
    "synth.segments",
    "synth.anomalies",
    "synth.height",
    "synth.width",
    "synth.noise",
    "synth.seed",
    "cae.arch",
    "cae.epochs",
    "cae.learning_rate",
    "cae.weight_decay",
    "cae.batch_size",
    "cae.seed",
    "vocab.size",
    "vocab.max_iters",
    "vocab.tol",
    "vocab.seed",
    "vocab.grid",
    "vocab.patch",
    "vocab.bins",
    "rost.alpha",
    "rost.beta",
    "rost.gamma",
    "rost.cell_size",
    "rost.temporal_window",
    "rost.recent_bias",
    "rost.seed",
];

/// Raw key/value pairs, later entries overriding earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap(BTreeMap<String, String>);

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut map = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(PipelineError::Config(format!(
                    "line {}: expected `key = value`, got {raw:?}",
                    no + 1
                )));
            };
            map.set(k.trim(), v.trim())?;
        }
        Ok(map)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        if !KEYS.contains(&key) {
            return Err(PipelineError::Config(format!("unknown key {key:?}")));
        }
        self.0.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, PipelineError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| PipelineError::Config(format!("{key} = {v:?}: {e}")))
            })
            .transpose()
    }
}

/// Everything a pipeline run needs, with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub features: FeaturePath,
    /// Refinement iterations after each ingested frame.
    pub budget: usize,
    /// Wall-clock ingestion interval for the concurrent demonstration mode; 0 runs serialized.
    pub realtime_ms: u64,
    pub data_dir: Option<PathBuf>,
    pub data_pattern: String,
    pub labels: Option<PathBuf>,
    pub synth: Option<SynthSpec>,
    pub arch: ArchSpec,
    pub kmeans: KmeansParams,
    pub descriptor: DescriptorParams,
    pub rost: RostConfig,
}

impl PipelineConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self, PipelineError> {
        let seed = map.parsed("seed")?.unwrap_or(0u64);
        let out = map.get("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out"));
        let features = map
            .get("run.features")
            .map(str::parse)
            .transpose()
            .map_err(PipelineError::Config)?
            .unwrap_or(FeaturePath::Cae);

        let mut arch = match map.get("cae.arch").unwrap_or("paper") {
            "paper" => ArchSpec::paper_default(),
            "test" => ArchSpec::test_scale(),
            "tiny" => ArchSpec::tiny(),
            other => {
                return Err(PipelineError::Config(format!(
                    "cae.arch = {other:?}: expected paper, test or tiny"
                )))
            }
        };
        if let Some(v) = map.parsed("cae.epochs")? {
            arch.epochs = v;
        }
        if let Some(v) = map.parsed("cae.learning_rate")? {
            arch.learning_rate = v;
        }
        if let Some(v) = map.parsed("cae.weight_decay")? {
            arch.weight_decay = v;
        }
        if let Some(v) = map.parsed("cae.batch_size")? {
            arch.batch_size = v;
        }
        arch.seed = map.parsed("cae.seed")?.unwrap_or(derive_seed(seed, SeedStream::Cae));
        arch.validate().map_err(|e| PipelineError::Config(e.to_string()))?;

        let synth = match map.get("synth.segments") {
            None => None,
            Some(segments) => Some(SynthSpec {
                segments: SynthSpec::parse_segments(segments)
                    .map_err(|e| PipelineError::Config(e.to_string()))?,
                anomalies: match map.get("synth.anomalies") {
                    Some(a) if !a.is_empty() => SynthSpec::parse_anomalies(a)
                        .map_err(|e| PipelineError::Config(e.to_string()))?,
                    _ => Vec::new(),
                },
                height: map.parsed("synth.height")?.unwrap_or(arch.input.0),
                width: map.parsed("synth.width")?.unwrap_or(arch.input.1),
                noise_level: map.parsed("synth.noise")?.unwrap_or(0.05),
                seed: map.parsed("synth.seed")?.unwrap_or(derive_seed(seed, SeedStream::Synth)),
            }),
        };

        let mut kmeans = KmeansParams::new(
            map.parsed("vocab.size")?.unwrap_or(1000),
            map.parsed("vocab.seed")?.unwrap_or(derive_seed(seed, SeedStream::Vocab)),
        );
        if let Some(v) = map.parsed("vocab.max_iters")? {
            kmeans.max_iters = v;
        }
        if let Some(v) = map.parsed("vocab.tol")? {
            kmeans.tol = v;
        }
        let mut descriptor = DescriptorParams::default();
        if let Some(v) = map.parsed("vocab.grid")? {
            descriptor.grid = v;
        }
        if let Some(v) = map.parsed("vocab.patch")? {
            descriptor.patch = v;
        }
        if let Some(v) = map.parsed("vocab.bins")? {
            descriptor.bins = v;
        }

        let mut rost = RostConfig::new(kmeans.k);
        if let Some(v) = map.parsed("rost.alpha")? {
            rost.alpha = v;
        }
        if let Some(v) = map.parsed("rost.beta")? {
            rost.beta = v;
        }
        if let Some(v) = map.parsed("rost.gamma")? {
            rost.gamma = v;
        }
        if let Some(v) = map.parsed("rost.cell_size")? {
            rost.cell_size = v;
        }
        if let Some(v) = map.parsed("rost.temporal_window")? {
            rost.temporal_window = v;
        }
        if let Some(v) = map.parsed("rost.recent_bias")? {
            rost.recent_bias = v;
        }
        rost.seed = map.parsed("rost.seed")?.unwrap_or(derive_seed(seed, SeedStream::Rost));
        rost.validate().map_err(|e| PipelineError::Config(e.to_string()))?;

        Ok(Self {
            seed,
            out,
            features,
            budget: map.parsed("run.budget")?.unwrap_or(20),
            realtime_ms: map.parsed("run.realtime_ms")?.unwrap_or(0),
            data_dir: map.get("data.dir").map(PathBuf::from),
            data_pattern: map.get("data.pattern").unwrap_or(MISSION_PATTERN).to_string(),
            labels: map.get("data.labels").map(PathBuf::from),
            synth,
            arch,
            kmeans,
            descriptor,
            rost,
        })
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        Self::from_map(&ConfigMap::parse(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageio::TextureKind;

    #[test]
    fn defaults() {
        let c = PipelineConfig::parse("").unwrap();
        assert_eq!(c.features, FeaturePath::Cae);
        assert_eq!(c.budget, 20);
        assert_eq!(c.arch.input, (400, 400, 3));
        assert_eq!(c.kmeans.k, 1000);
        assert_eq!(c.rost.alpha, 0.1);
        assert_eq!(c.rost.beta, 25.0);
        assert_eq!(c.rost.gamma, 1e-7);
        assert_eq!(c.rost.vocab_size, 1000);
        assert!(c.synth.is_none());
    }

    #[test]
    fn parses_sections_comments_and_overrides() {
        let text = "# mission\nseed = 7\ncae.arch = test  # small\n\nrost.alpha=0.5\nsynth.segments = stripes:3,noise:2\nsynth.anomalies = 1:dark\nvocab.size = 16\n";
        let mut map = ConfigMap::parse(text).unwrap();
        map.set("run.features", "baseline").unwrap();
        let c = PipelineConfig::from_map(&map).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.arch.input, (64, 64, 3));
        assert_eq!(c.rost.alpha, 0.5);
        assert_eq!(c.rost.vocab_size, 16);
        assert_eq!(c.features, FeaturePath::Baseline);
        let s = c.synth.unwrap();
        assert_eq!(s.segments, vec![(TextureKind::Stripes, 3), (TextureKind::Noise, 2)]);
        assert_eq!((s.height, s.width), (64, 64));
        assert_eq!(s.seed, derive_seed(7, SeedStream::Synth));
        assert_ne!(c.rost.seed, c.kmeans.seed);
    }

    #[test]
    fn rejects_bad_input() {
        for text in ["nonsense", "rost.zeta = 1", "seed = x", "cae.arch = huge", "rost.alpha = -1", "run.features = sift"] {
            assert!(matches!(PipelineConfig::parse(text), Err(PipelineError::Config(_))), "{text}");
        }
    }
}
