//! Realtime spatio-temporal topic model.
//!
//! Words are bucketed into spatio-temporal cells. A word's topic prior comes from the
//! topic counts of the surrounding cells (a 3×3 spatial block over ±`temporal_window`
//! time steps), its likelihood from a Dirichlet-smoothed word distribution per topic. New
//! topics are born through a Chinese-restaurant-process outcome with weight `γ / |V|`, and
//! topics that lose their last word are retired. Refinement is a collapsed Gibbs sampler
//! biased toward the most recently ingested frame.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, ROST_MAGIC};

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::vocab::WordObservation;

#[derive(Debug, Error)]
pub enum RostError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("time index {0} was already ingested")]
    DuplicateTime(u64),
    #[error("word id {v} out of range for a vocabulary of {vocab_size}")]
    WordOutOfRange { v: usize, vocab_size: usize },
    #[error("observations for one frame carry different time indices ({0} and {1})")]
    MixedTimes(u64, u64),
    #[error("unknown time index {0}")]
    UnknownTime(u64),
    #[error("frame at time {0} has no words")]
    EmptyFrame(u64),
    #[error("the model holds no words")]
    EmptyModel,
    #[error("topic {topic} is not live (K = {live})")]
    DeadTopic { topic: usize, live: usize },
    #[error("checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = RostError> = std::result::Result<T, E>;

/// Hyperparameters and neighborhood geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct RostConfig {
    /// Topic smoothing within a neighborhood.
    pub alpha: f64,
    /// Word smoothing per topic.
    pub beta: f64,
    /// New-topic propensity.
    pub gamma: f64,
    pub vocab_size: usize,
    /// Word-grid positions per cell side.
    pub cell_size: usize,
    /// Neighborhoods span `t - window ..= t + window`.
    pub temporal_window: u64,
    /// Probability that a refinement step resamples the newest frame.
    pub recent_bias: f64,
    pub seed: u64,
    /// Fixed-K regime: exactly this many topics, no births and no retirements.
    pub fixed_topics: Option<usize>,
}

impl RostConfig {
    /// Terrain-style defaults: α = 0.1, β = 25, γ = 1e-7, 5×5 cells, ±1 frame, bias 0.5.
    pub fn new(vocab_size: usize) -> Self {
        Self {
            alpha: 0.1,
            beta: 25.0,
            gamma: 1e-7,
            vocab_size,
            cell_size: 5,
            temporal_window: 1,
            recent_bias: 0.5,
            seed: 0,
            fixed_topics: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(RostError::InvalidConfig(format!("{name} = {v} must be finite and > 0")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        positive("gamma", self.gamma)?;
        if self.vocab_size == 0 {
            return Err(RostError::InvalidConfig("vocabulary size must be positive".into()));
        }
        if self.cell_size == 0 {
            return Err(RostError::InvalidConfig("cell size must be at least 1".into()));
        }
        if !(self.recent_bias > 0.0 && self.recent_bias <= 1.0) {
            return Err(RostError::InvalidConfig(format!(
                "recent bias {} must lie in (0, 1]",
                self.recent_bias
            )));
        }
        if self.fixed_topics == Some(0) {
            return Err(RostError::InvalidConfig("fixed topic count must be positive".into()));
        }
        Ok(())
    }
}

/// Spatio-temporal bucket of a word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
    pub t: u64,
}

impl CellIndex {
    pub fn of(word: &WordObservation, cell_size: usize) -> Self {
        Self {
            row: word.row / cell_size,
            col: word.col / cell_size,
            t: word.t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct StoredWord {
    pub obs: WordObservation,
    pub cell: CellIndex,
    pub z: usize,
}

/// Per-frame perplexity series with its mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityReport {
    pub per_t: Vec<(u64, f64)>,
    pub mean: f64,
    pub std: f64,
}

/// Topic-model sufficient statistics and the sampler state.
#[derive(Debug, Clone)]
pub struct RostModel {
    config: RostConfig,
    /// Ingestion order of time indices; the last entry is the newest frame.
    times: Vec<u64>,
    frames: BTreeMap<u64, Vec<StoredWord>>,
    /// `word_topic[k][v]`
    word_topic: Vec<Vec<u32>>,
    topic_totals: Vec<u32>,
    /// Topic counts per cell; vectors may be shorter than K (missing entries are zero).
    cell_topic: HashMap<CellIndex, Vec<u32>>,
    total_words: usize,
    rng: ChaCha8Rng,
}

impl RostModel {
    pub fn new(config: RostConfig) -> Result<Self> {
        config.validate()?;
        let k = config.fixed_topics.unwrap_or(0);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            word_topic: vec![vec![0; config.vocab_size]; k],
            topic_totals: vec![0; k],
            config,
            times: Vec::new(),
            frames: BTreeMap::new(),
            cell_topic: HashMap::new(),
            total_words: 0,
            rng,
        })
    }

    pub fn config(&self) -> &RostConfig {
        &self.config
    }

    /// Current topic count K.
    pub fn num_topics(&self) -> usize {
        self.topic_totals.len()
    }

    pub fn total_words(&self) -> usize {
        self.total_words
    }

    /// Time indices in ingestion order.
    pub fn times(&self) -> &[u64] {
        &self.times
    }

    pub fn words_at(&self, t: u64) -> Result<Vec<(WordObservation, usize)>> {
        let frame = self.frames.get(&t).ok_or(RostError::UnknownTime(t))?;
        Ok(frame.iter().map(|w| (w.obs, w.z)).collect())
    }

    pub fn topic_totals(&self) -> &[u32] {
        &self.topic_totals
    }

    pub fn word_topic_counts(&self, k: usize) -> Option<&[u32]> {
        self.word_topic.get(k).map(Vec::as_slice)
    }

    fn can_grow(&self) -> bool {
        self.config.fixed_topics.is_none()
    }

    /// Topic counts summed over the 3×3 spatial block around `cell` (clipped at the grid
    /// edge) and every time index within ±`temporal_window`.
    pub fn neighborhood(&self, cell: CellIndex) -> Vec<f64> {
        let mut counts = vec![0.0; self.num_topics()];
        self.add_neighborhood(cell, &mut counts);
        counts
    }

    fn add_neighborhood(&self, cell: CellIndex, counts: &mut [f64]) {
        let w = self.config.temporal_window;
        let (t0, t1) = (cell.t.saturating_sub(w), cell.t.saturating_add(w));
        for t in t0..=t1 {
            for row in cell.row.saturating_sub(1)..=cell.row + 1 {
                for col in cell.col.saturating_sub(1)..=cell.col + 1 {
                    if let Some(c) = self.cell_topic.get(&CellIndex { row, col, t }) {
                        for (acc, &n) in counts.iter_mut().zip(c) {
                            *acc += n as f64;
                        }
                    }
                }
            }
        }
    }

    /// Dirichlet-smoothed `P(v | k)` for a live topic.
    fn word_likelihood(&self, k: usize, v: usize) -> f64 {
        let b = self.config.beta;
        (self.word_topic[k][v] as f64 + b)
            / (self.topic_totals[k] as f64 + self.config.vocab_size as f64 * b)
    }

    fn new_topic_weight(&self) -> f64 {
        self.config.gamma / self.config.vocab_size as f64
    }

    /// Unnormalized sampling weights for word `v` in `cell` from the current counts:
    /// `((n[k][v] + β) / (n[k] + |V|β)) · (N_k + α)` for each live topic, followed (when the
    /// topic count is not fixed) by the new-topic weight `γ / |V|` at index K.
    pub fn conditional(&self, v: usize, cell: CellIndex) -> Result<Vec<f64>> {
        self.check_word(v)?;
        let mut weights = Vec::with_capacity(self.num_topics() + 1);
        self.fill_conditional(v, cell, &mut weights);
        Ok(weights)
    }

    fn fill_conditional(&self, v: usize, cell: CellIndex, weights: &mut Vec<f64>) {
        weights.clear();
        weights.resize(self.num_topics(), 0.0);
        self.add_neighborhood(cell, weights);
        let alpha = self.config.alpha;
        for (k, w) in weights.iter_mut().enumerate() {
            *w = self.word_likelihood(k, v) * (*w + alpha);
        }
        if self.can_grow() {
            weights.push(self.new_topic_weight());
        }
    }

    fn check_word(&self, v: usize) -> Result<()> {
        if v >= self.config.vocab_size {
            return Err(RostError::WordOutOfRange {
                v,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    fn sample_index(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        let mut u = self.rng.random::<f64>() * total;
        for (i, &w) in weights.iter().enumerate() {
            if u < w {
                return i;
            }
            u -= w;
        }
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    fn increment(&mut self, v: usize, cell: CellIndex, k: usize) {
        if k == self.num_topics() {
            self.word_topic.push(vec![0; self.config.vocab_size]);
            self.topic_totals.push(0);
        }
        self.word_topic[k][v] += 1;
        self.topic_totals[k] += 1;
        let c = self.cell_topic.entry(cell).or_default();
        if c.len() <= k {
            c.resize(k + 1, 0);
        }
        c[k] += 1;
    }

    fn decrement(&mut self, v: usize, cell: CellIndex, k: usize) {
        self.word_topic[k][v] -= 1;
        self.topic_totals[k] -= 1;
        let c = self.cell_topic.get_mut(&cell).expect("cell of a stored word");
        c[k] -= 1;
    }

    /// Removes empty topic `k`, moving the last topic into its slot.
    fn retire(&mut self, k: usize) {
        let last = self.num_topics() - 1;
        debug_assert_eq!(self.topic_totals[k], 0);
        if k != last {
            self.word_topic.swap(k, last);
            self.topic_totals.swap(k, last);
            for c in self.cell_topic.values_mut() {
                if c.len() > last {
                    c.swap(k, last);
                } else if c.len() > k {
                    c[k] = 0;
                }
            }
            for frame in self.frames.values_mut() {
                for w in frame.iter_mut().filter(|w| w.z == last) {
                    w.z = k;
                }
            }
        }
        self.word_topic.pop();
        self.topic_totals.pop();
        for c in self.cell_topic.values_mut() {
            c.truncate(last);
        }
    }

    /// Ingests one frame's words, drawing each initial topic from the conditional given
    /// the words already stored. Every word must carry the same, not yet seen, `t`.
    pub fn add_observations(&mut self, words: &[WordObservation]) -> Result<()> {
        let Some(first) = words.first() else {
            return Ok(());
        };
        let t = first.t;
        if self.frames.contains_key(&t) {
            return Err(RostError::DuplicateTime(t));
        }
        for w in words {
            if w.t != t {
                return Err(RostError::MixedTimes(t, w.t));
            }
            self.check_word(w.v)?;
        }
        let mut stored = Vec::with_capacity(words.len());
        let mut weights = Vec::new();
        for &obs in words {
            let cell = CellIndex::of(&obs, self.config.cell_size);
            self.fill_conditional(obs.v, cell, &mut weights);
            let z = self.sample_index(&weights);
            self.increment(obs.v, cell, z);
            stored.push(StoredWord { obs, cell, z });
        }
        self.total_words += stored.len();
        self.times.push(t);
        self.frames.insert(t, stored);
        Ok(())
    }

    /// Runs `iterations` refinement steps. Each step picks the newest frame with
    /// probability `recent_bias`, otherwise a uniformly random ingested frame, and Gibbs
    /// resamples every word in it.
    pub fn refine(&mut self, iterations: usize) -> Result<()> {
        if self.total_words == 0 {
            return Err(RostError::EmptyModel);
        }
        for _ in 0..iterations {
            let newest = self.rng.random::<f64>() < self.config.recent_bias;
            let t = if newest {
                *self.times.last().unwrap()
            } else {
                self.times[self.rng.random_range(0..self.times.len())]
            };
            self.resample_frame(t);
        }
        Ok(())
    }

    /// One Gibbs pass over the words of frame `t`.
    pub fn resample_frame(&mut self, t: u64) {
        let Some(mut frame) = self.frames.remove(&t) else {
            return;
        };
        let mut weights = Vec::with_capacity(self.num_topics() + 1);
        for i in 0..frame.len() {
            let (v, cell, old) = (frame[i].obs.v, frame[i].cell, frame[i].z);
            self.decrement(v, cell, old);
            if self.can_grow() && self.topic_totals[old] == 0 {
                let last = self.num_topics() - 1;
                self.retire(old);
                // `retire` relabels stored frames only; fix up the detached one.
                if old != last {
                    for w in frame.iter_mut().filter(|w| w.z == last) {
                        w.z = old;
                    }
                }
            }
            self.fill_conditional(v, cell, &mut weights);
            let z = self.sample_index(&weights);
            self.increment(v, cell, z);
            frame[i].z = z;
        }
        self.frames.insert(t, frame);
    }

    /// `P(v | k)` over the whole vocabulary.
    pub fn word_topic_dist(&self, k: usize) -> Result<Vec<f64>> {
        if k >= self.num_topics() {
            return Err(RostError::DeadTopic {
                topic: k,
                live: self.num_topics(),
            });
        }
        Ok((0..self.config.vocab_size)
            .map(|v| self.word_likelihood(k, v))
            .collect())
    }

    fn argmax_lowest(weights: &[f64]) -> usize {
        let mut best = 0;
        for (k, &w) in weights.iter().enumerate().skip(1) {
            if w > weights[best] {
                best = k;
            }
        }
        best
    }

    /// MAP topic of every word at `t` under the full counts, excluding the new-topic outcome.
    pub fn map_word_labels(&self, t: u64) -> Result<Vec<(WordObservation, usize)>> {
        let frame = self.frames.get(&t).ok_or(RostError::UnknownTime(t))?;
        let mut weights = Vec::new();
        Ok(frame
            .iter()
            .map(|w| {
                self.fill_conditional(w.obs.v, w.cell, &mut weights);
                weights.truncate(self.num_topics());
                (w.obs, Self::argmax_lowest(&weights))
            })
            .collect())
    }

    /// Majority MAP label of the frame (ties to the lowest topic id).
    pub fn scene_label(&self, t: u64) -> Result<usize> {
        let labels = self.map_word_labels(t)?;
        if labels.is_empty() {
            return Err(RostError::EmptyFrame(t));
        }
        let ids: Vec<usize> = labels.into_iter().map(|(_, k)| k).collect();
        Ok(modal_label(&ids))
    }

    /// Fraction of the frame's MAP word labels assigned to each topic, for topics present.
    pub fn topic_proportions(&self, t: u64) -> Result<Vec<(usize, f64)>> {
        let labels = self.map_word_labels(t)?;
        if labels.is_empty() {
            return Ok(Vec::new());
        }
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for (_, k) in &labels {
            *counts.entry(*k).or_default() += 1;
        }
        let n = labels.len() as f64;
        Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect())
    }

    /// `p(w | X_t) = Σ_k P(w | k) · (N_k + α) / (Σ_j N_j + Kα)` with neighborhood counts
    /// taken at the word's cell; returns `exp(-mean log p)` over the frame.
    pub fn perplexity(&self, t: u64) -> Result<f64> {
        let frame = self.frames.get(&t).ok_or(RostError::UnknownTime(t))?;
        if frame.is_empty() {
            return Err(RostError::EmptyFrame(t));
        }
        let k_live = self.num_topics();
        let alpha = self.config.alpha;
        let probs: Vec<f64> = frame
            .iter()
            .map(|w| {
                let n = self.neighborhood(w.cell);
                let denom = n.iter().sum::<f64>() + k_live as f64 * alpha;
                (0..k_live)
                    .map(|k| self.word_likelihood(k, w.obs.v) * (n[k] + alpha) / denom)
                    .sum()
            })
            .collect();
        Ok(perplexity_from_probs(&probs))
    }

    pub fn perplexity_report(&self) -> Result<PerplexityReport> {
        let per_t = self
            .times
            .iter()
            .map(|&t| self.perplexity(t).map(|p| (t, p)))
            .collect::<Result<Vec<_>>>()?;
        let n = per_t.len().max(1) as f64;
        let mean = per_t.iter().map(|p| p.1).sum::<f64>() / n;
        let var = per_t.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n;
        Ok(PerplexityReport {
            per_t,
            mean,
            std: var.sqrt(),
        })
    }

    /// Recomputes every count from the stored assignments and compares.
    pub fn check_invariants(&self) -> Result<(), String> {
        let k = self.num_topics();
        if self.word_topic.len() != k {
            return Err(format!("{} word-topic rows for K = {k}", self.word_topic.len()));
        }
        let mut word_topic = vec![vec![0u32; self.config.vocab_size]; k];
        let mut cells: HashMap<CellIndex, Vec<u32>> = HashMap::new();
        let mut total = 0;
        for frame in self.frames.values() {
            for w in frame {
                if w.z >= k {
                    return Err(format!("word assigned to topic {} with K = {k}", w.z));
                }
                word_topic[w.z][w.obs.v] += 1;
                let c = cells.entry(w.cell).or_insert_with(|| vec![0; k]);
                c[w.z] += 1;
                total += 1;
            }
        }
        if total != self.total_words {
            return Err(format!("{total} stored words, counter says {}", self.total_words));
        }
        if word_topic != self.word_topic {
            return Err("word-topic counts disagree with assignments".into());
        }
        for (kk, row) in self.word_topic.iter().enumerate() {
            let s: u32 = row.iter().sum();
            if s != self.topic_totals[kk] {
                return Err(format!("topic {kk}: total {} but rows sum to {s}", self.topic_totals[kk]));
            }
            if self.can_grow() && s == 0 {
                return Err(format!("topic {kk} is live with no words"));
            }
        }
        let mut cell_sum = 0u64;
        for (cell, c) in &self.cell_topic {
            let expected = cells.get(cell);
            for kk in 0..k {
                let have = c.get(kk).copied().unwrap_or(0);
                let want = expected.map_or(0, |e| e[kk]);
                if have != want {
                    return Err(format!("cell {cell:?} topic {kk}: {have} vs {want}"));
                }
            }
            if c.len() > k && c[k..].iter().any(|&n| n != 0) {
                return Err(format!("cell {cell:?} counts a dead topic"));
            }
            cell_sum += c.iter().map(|&n| n as u64).sum::<u64>();
        }
        if cell_sum != total as u64 {
            return Err(format!("cell counts sum to {cell_sum}, expected {total}"));
        }
        Ok(())
    }
}

/// Most frequent label, ties to the lowest id. Panics on an empty slice.
pub fn modal_label(labels: &[usize]) -> usize {
    let max = *labels.iter().max().expect("non-empty labels");
    let mut votes = vec![0usize; max + 1];
    for &k in labels {
        votes[k] += 1;
    }
    let mut best = 0;
    for (k, &n) in votes.iter().enumerate() {
        if n > votes[best] {
            best = k;
        }
    }
    best
}

/// `exp(-(1/N) Σ ln p)` for a frame whose words have probabilities `probs`.
pub fn perplexity_from_probs(probs: &[f64]) -> f64 {
    let mean_log = probs.iter().map(|p| p.ln()).sum::<f64>() / probs.len() as f64;
    (-mean_log).exp()
}

#[cfg(test)]
mod tests;
