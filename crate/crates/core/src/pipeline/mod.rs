//! End-to-end stages: synthesize, train the autoencoder, fit the vocabulary, stream words
//! through the topic model and evaluate against annotations.

mod config;

pub use config::{derive_seed, ConfigMap, FeaturePath, PipelineConfig, SeedStream, KEYS};

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use crate::cae::{self, CaeError, CaeNetwork};
use crate::eval::{self, EvalError, MiReport, PerplexityBins, TimelineRow};
use crate::imageio::{self, Frame, ImageIoError, LabelTrack};
use crate::rost::{self, PerplexityReport, RostError, RostModel};
use crate::vocab::{self, Codebook, FeatureVector, VocabError, WordObservation};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    ImageIo(#[from] ImageIoError),
    #[error(transparent)]
    Cae(#[from] CaeError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Rost(#[from] RostError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// 2 usage/config, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Cae(CaeError::Diverged { .. })
            | Self::Vocab(VocabError::Cae(CaeError::Diverged { .. }))
            | Self::Vocab(VocabError::TooFewDistinct { .. })
            | Self::Eval(EvalError::NonFinite { .. }) => 4,
            Self::Cae(CaeError::InvalidArch(_)) | Self::Rost(RostError::InvalidConfig(_)) => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// File locations under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub out: PathBuf,
}

impl Layout {
    pub fn new(out: &Path) -> Self {
        Self { out: out.to_path_buf() }
    }
    pub fn data_dir(&self) -> PathBuf {
        self.out.join("data")
    }
    pub fn cae_model(&self) -> PathBuf {
        self.out.join("cae.bin")
    }
    pub fn cae_loss(&self) -> PathBuf {
        self.out.join("loss.csv")
    }
    pub fn codebook(&self, f: FeaturePath) -> PathBuf {
        self.out.join(format!("vocab-{f}.bin"))
    }
    pub fn run_dir(&self, f: FeaturePath) -> PathBuf {
        self.out.join(f.as_str())
    }
    pub fn timeline(&self, f: FeaturePath) -> PathBuf {
        self.run_dir(f).join("timeline.csv")
    }
    pub fn perplexity(&self, f: FeaturePath) -> PathBuf {
        self.run_dir(f).join("perplexity.csv")
    }
    pub fn checkpoint(&self, f: FeaturePath) -> PathBuf {
        self.run_dir(f).join("model.rost")
    }
    pub fn words(&self, f: FeaturePath) -> PathBuf {
        self.run_dir(f).join("words.csv")
    }
    pub fn report(&self, f: FeaturePath) -> PathBuf {
        self.run_dir(f).join("report.json")
    }
    pub fn svg(&self, f: FeaturePath) -> PathBuf {
        self.run_dir(f).join("timeline.svg")
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| PipelineError::Data(format!("{}: cannot create directory: {e}", dir.display())))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::Data(format!("{what} not found: {}", path.display())))
    }
}

/// Writes the configured synthetic mission to `<out>/data`. Returns the frame count.
pub fn synth(cfg: &PipelineConfig) -> Result<usize> {
    let spec = cfg
        .synth
        .as_ref()
        .ok_or_else(|| PipelineError::Usage("no synthetic mission configured (set synth.segments)".into()))?;
    let (frames, labels) = imageio::generate_synthetic_mission(spec)?;
    let dir = Layout::new(&cfg.out).data_dir();
    create_dir(&dir)?;
    imageio::write_mission(&dir, &frames, &labels)?;
    log::info!("wrote {} frames to {}", frames.len(), dir.display());
    Ok(frames.len())
}

pub struct Dataset {
    pub frames: Vec<Frame<f32>>,
    pub labels: Option<LabelTrack>,
}

/// Frames from `data.dir` (or the synthesized `<out>/data`), resized to the network input.
pub fn load_dataset(cfg: &PipelineConfig) -> Result<Dataset> {
    let dir = cfg
        .data_dir
        .clone()
        .unwrap_or_else(|| Layout::new(&cfg.out).data_dir());
    if !dir.is_dir() {
        return Err(PipelineError::Data(format!(
            "dataset directory {} not found (set data.dir or run synth first)",
            dir.display()
        )));
    }
    let frames = imageio::load_sequence(&dir, &cfg.data_pattern)?;
    let (h, w, _) = cfg.arch.input;
    let frames = frames
        .into_par_iter()
        .map(|f| {
            if f.pixels.height() == h && f.pixels.width() == w {
                Ok(f)
            } else {
                imageio::resize_frame(&f, (h, w))
            }
        })
        .collect::<imageio::Result<Vec<_>>>()?;
    let labels_path = cfg.labels.clone().unwrap_or_else(|| dir.join("labels.csv"));
    let labels = if labels_path.exists() {
        Some(LabelTrack::read_csv(&labels_path)?)
    } else if cfg.labels.is_some() {
        return Err(PipelineError::Data(format!("labels not found: {}", labels_path.display())));
    } else {
        None
    };
    Ok(Dataset { frames, labels })
}

/// Trains from fresh weights and writes `cae.bin` and `loss.csv`.
pub fn train_cae(cfg: &PipelineConfig) -> Result<cae::TrainOutcome<f32>> {
    let data = load_dataset(cfg)?;
    let net = CaeNetwork::<f32>::new(cfg.arch.clone())?;
    log::info!(
        "training {} parameters on {} frames for {} epochs",
        net.num_parameters(),
        data.frames.len(),
        cfg.arch.epochs
    );
    let outcome = cae::train(net, &data.frames)?;
    let layout = Layout::new(&cfg.out);
    create_dir(&layout.out)?;
    cae::save_network(&outcome.network, &layout.cae_model())?;
    cae::write_loss_csv(&outcome.history, &layout.cae_loss())?;
    Ok(outcome)
}

fn load_trained_cae(cfg: &PipelineConfig) -> Result<CaeNetwork<f32>> {
    let path = Layout::new(&cfg.out).cae_model();
    require(&path, "trained autoencoder")?;
    let net: CaeNetwork<f32> = cae::load_network(&path)?;
    if net.arch.input != cfg.arch.input || net.arch.layers != cfg.arch.layers {
        return Err(PipelineError::Config(format!(
            "{} was trained for a different architecture",
            path.display()
        )));
    }
    Ok(net)
}

/// Per-frame descriptors for the configured feature path.
pub fn extract_features(
    cfg: &PipelineConfig,
    frames: &[Frame<f32>],
    net: Option<&CaeNetwork<f32>>,
) -> Result<Vec<Vec<FeatureVector<f32>>>> {
    let per_frame = frames
        .par_iter()
        .map(|f| -> Result<Vec<FeatureVector<f32>>> {
            Ok(match (cfg.features, net) {
                (FeaturePath::Cae, Some(net)) => vocab::slice_lca(&net.extract_lca(f)?, f.t),
                (FeaturePath::Cae, None) => {
                    return Err(PipelineError::Data("the cae feature path needs a trained autoencoder".into()))
                }
                (FeaturePath::Baseline, _) => vocab::baseline_descriptors(f, &cfg.descriptor)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_frame)
}

fn fit_codebook(cfg: &PipelineConfig, features: &[Vec<FeatureVector<f32>>]) -> Result<Codebook<f32>> {
    let pooled: Vec<&[f32]> = features.iter().flatten().map(|f| f.values.as_slice()).collect();
    let codebook = vocab::kmeans_fit(&pooled, &cfg.kmeans)?;
    log::info!(
        "fitted {} words over {} descriptors (inertia {:.4})",
        codebook.size(),
        pooled.len(),
        codebook.inertia
    );
    let layout = Layout::new(&cfg.out);
    create_dir(&layout.out)?;
    vocab::save_codebook(&codebook, &layout.codebook(cfg.features))?;
    Ok(codebook)
}

fn feature_network(cfg: &PipelineConfig) -> Result<Option<CaeNetwork<f32>>> {
    match cfg.features {
        FeaturePath::Cae => Ok(Some(load_trained_cae(cfg)?)),
        FeaturePath::Baseline => Ok(None),
    }
}

/// Clusters the pooled mission descriptors and writes `vocab-<features>.bin`.
pub fn fit_vocab(cfg: &PipelineConfig) -> Result<Codebook<f32>> {
    let data = load_dataset(cfg)?;
    let net = feature_network(cfg)?;
    let features = extract_features(cfg, &data.frames, net.as_ref())?;
    fit_codebook(cfg, &features)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub frames: usize,
    pub words: usize,
    pub topics: usize,
    pub scene_labels: Vec<usize>,
    pub perplexity: PerplexityReport,
    pub timeline: Vec<TimelineRow>,
}

fn ingest_serialized(model: &mut RostModel, words: &[Vec<WordObservation>], budget: usize) -> Result<()> {
    for frame in words {
        model.add_observations(frame)?;
        if model.total_words() > 0 {
            model.refine(budget)?;
        }
    }
    Ok(())
}

/// Demonstration mode: frames arrive every `interval` on this thread while a background
/// worker refines continuously. Not reproducible.
fn ingest_concurrent(model: RostModel, words: &[Vec<WordObservation>], interval: Duration) -> Result<RostModel> {
    let shared = Mutex::new(model);
    let done = AtomicBool::new(false);
    std::thread::scope(|s| -> Result<()> {
        s.spawn(|| {
            while !done.load(Ordering::Acquire) {
                let mut m = shared.lock().expect("model lock");
                if m.total_words() > 0 {
                    let _ = m.refine(1);
                }
                drop(m);
                std::thread::yield_now();
            }
        });
        let result = words.iter().try_for_each(|frame| {
            std::thread::sleep(interval);
            shared.lock().expect("model lock").add_observations(frame)
        });
        done.store(true, Ordering::Release);
        result.map_err(PipelineError::from)
    })?;
    Ok(shared.into_inner().expect("model lock"))
}

/// Streams every frame's words through the topic model and writes the timeline,
/// perplexity series, checkpoint and word list under `<out>/<features>/`.
pub fn run(cfg: &PipelineConfig) -> Result<RunSummary> {
    let layout = Layout::new(&cfg.out);
    let data = load_dataset(cfg)?;
    let net = feature_network(cfg)?;
    let features = extract_features(cfg, &data.frames, net.as_ref())?;
    let codebook_path = layout.codebook(cfg.features);
    let codebook = if codebook_path.exists() {
        vocab::load_codebook(&codebook_path)?
    } else {
        fit_codebook(cfg, &features)?
    };
    if codebook.size() != cfg.rost.vocab_size {
        return Err(PipelineError::Config(format!(
            "{} holds {} words but vocab.size is {}",
            codebook_path.display(),
            codebook.size(),
            cfg.rost.vocab_size
        )));
    }
    let words = features
        .par_iter()
        .map(|f| vocab::features_to_words(&codebook, f))
        .collect::<vocab::Result<Vec<_>>>()?;

    let model = RostModel::new(cfg.rost.clone())?;
    let model = if cfg.realtime_ms > 0 {
        ingest_concurrent(model, &words, Duration::from_millis(cfg.realtime_ms))?
    } else {
        let mut model = model;
        ingest_serialized(&mut model, &words, cfg.budget)?;
        model
    };

    let mut timeline = Vec::new();
    let mut scene_labels = Vec::with_capacity(model.times().len());
    for &t in model.times() {
        for (topic, proportion) in model.topic_proportions(t)? {
            timeline.push(TimelineRow { t, topic, proportion });
        }
        scene_labels.push(model.scene_label(t)?);
    }
    let perplexity = model.perplexity_report()?;

    create_dir(&layout.run_dir(cfg.features))?;
    eval::write_timeline_csv(&layout.timeline(cfg.features), &timeline)?;
    eval::write_perplexity_csv(&layout.perplexity(cfg.features), &perplexity.per_t)?;
    rost::save_checkpoint(&model, &layout.checkpoint(cfg.features))?;
    let flat: Vec<WordObservation> = words.iter().flatten().copied().collect();
    vocab::write_words_csv(&flat, &layout.words(cfg.features))?;
    log::info!(
        "{} frames, {} words, {} topics, mean perplexity {:.3}",
        model.times().len(),
        flat.len(),
        model.num_topics(),
        perplexity.mean
    );
    Ok(RunSummary {
        frames: model.times().len(),
        words: flat.len(),
        topics: model.num_topics(),
        scene_labels,
        perplexity,
        timeline,
    })
}

/// Reads the run outputs, compares them with the annotations and writes `report.json`
/// and `timeline.svg`.
pub fn evaluate(cfg: &PipelineConfig) -> Result<MiReport> {
    let layout = Layout::new(&cfg.out);
    let f = cfg.features;
    for (path, what) in [
        (layout.checkpoint(f), "topic model checkpoint"),
        (layout.perplexity(f), "perplexity series"),
        (layout.timeline(f), "topic timeline"),
    ] {
        require(&path, what)?;
    }
    let data = load_dataset(cfg)?;
    let labels = data
        .labels
        .ok_or_else(|| PipelineError::Data("no annotations found (set data.labels)".into()))?;
    let model = rost::load_checkpoint(&layout.checkpoint(f))?;
    let perplexity = eval::read_perplexity_csv(&layout.perplexity(f))?;
    let timeline = eval::read_timeline_csv(&layout.timeline(f))?;

    let scene_labels = model
        .times()
        .iter()
        .map(|&t| model.scene_label(t))
        .collect::<rost::Result<Vec<_>>>()?;
    let series: Vec<f64> = perplexity.iter().map(|p| p.1).collect();
    let bins = eval::bin_perplexity(&series)?;
    let mut report = eval::mi_report(&scene_labels, &labels, &bins, model.num_topics())?;

    if f == FeaturePath::Cae && layout.cae_model().exists() && data.frames.len() == labels.len() {
        let net = load_trained_cae(cfg)?;
        let errors = data
            .frames
            .par_iter()
            .map(|fr| net.reconstruction_error(fr).map(f64::from))
            .collect::<cae::Result<Vec<_>>>()?;
        let recon: PerplexityBins = eval::bin_perplexity(&errors)?;
        let predicted: Vec<usize> = recon.bins.iter().map(|b| b.index()).collect();
        let annotated: Vec<usize> = labels.interest.iter().map(|b| b.index()).collect();
        report.nmi_interest_reconstruction = Some(eval::normalized_mi(&predicted, &annotated)?);
    }

    std::fs::write(layout.report(f), report.to_json()?).map_err(EvalError::from)?;
    eval::timeline_svg(&timeline, &perplexity, &layout.svg(f))?;
    Ok(report)
}

/// Every stage in order: synthesis (when configured and no dataset directory is given),
/// autoencoder training (cae path), vocabulary, streaming run and evaluation.
pub fn report(cfg: &PipelineConfig) -> Result<MiReport> {
    if cfg.synth.is_some() && cfg.data_dir.is_none() {
        synth(cfg)?;
    }
    if cfg.features == FeaturePath::Cae {
        train_cae(cfg)?;
    }
    fit_vocab(cfg)?;
    run(cfg)?;
    evaluate(cfg)
}

/// Caps the global worker pool; call before any parallel work.
pub fn init_thread_pool(threads: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))
}
