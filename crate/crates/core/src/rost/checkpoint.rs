//! Binary checkpoint of a topic model: configuration, counts, assignments and sampler
//! position. Cell counts and totals are rebuilt from the assignments on load and the
//! stored word-topic table is checked against them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CellIndex, Result, RostConfig, RostError, RostModel, StoredWord};
use crate::vocab::WordObservation;

pub const ROST_MAGIC: &[u8; 4] = b"ROST";

fn u32_of(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| RostError::Format(format!("{n} does not fit in 32 bits")))
}

pub fn save_checkpoint(model: &RostModel, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let c = &model.config;
    out.write_all(ROST_MAGIC)?;
    for v in [c.alpha, c.beta, c.gamma, c.recent_bias] {
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&u32_of(c.vocab_size)?.to_le_bytes())?;
    out.write_all(&u32_of(c.cell_size)?.to_le_bytes())?;
    out.write_all(&c.temporal_window.to_le_bytes())?;
    out.write_all(&c.seed.to_le_bytes())?;
    out.write_all(&u32_of(c.fixed_topics.unwrap_or(0))?.to_le_bytes())?;

    out.write_all(&u32_of(model.num_topics())?.to_le_bytes())?;
    for row in &model.word_topic {
        for &n in row {
            out.write_all(&n.to_le_bytes())?;
        }
    }

    out.write_all(&u32_of(model.times.len())?.to_le_bytes())?;
    for t in &model.times {
        let frame = &model.frames[t];
        out.write_all(&t.to_le_bytes())?;
        out.write_all(&u32_of(frame.len())?.to_le_bytes())?;
        for w in frame {
            for n in [w.obs.v, w.obs.row, w.obs.col, w.z] {
                out.write_all(&u32_of(n)?.to_le_bytes())?;
            }
        }
    }

    out.write_all(&model.rng.get_seed())?;
    out.write_all(&model.rng.get_stream().to_le_bytes())?;
    out.write_all(&model.rng.get_word_pos().to_le_bytes())?;
    out.flush()?;
    Ok(())
}

struct Cursor<R: Read>(R);

impl<R: Read> Cursor<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.0
            .read_exact(&mut b)
            .map_err(|_| RostError::Format("truncated checkpoint".into()))?;
        Ok(b)
    }
    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<RostModel> {
    let mut r = Cursor(BufReader::new(File::open(path)?));
    if &r.bytes::<4>()? != ROST_MAGIC {
        return Err(RostError::Format("bad magic".into()));
    }
    let (alpha, beta, gamma, recent_bias) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
    let vocab_size = r.u32()?;
    let cell_size = r.u32()?;
    let temporal_window = r.u64()?;
    let seed = r.u64()?;
    let fixed = r.u32()?;
    let config = RostConfig {
        alpha,
        beta,
        gamma,
        vocab_size,
        cell_size,
        temporal_window,
        recent_bias,
        seed,
        fixed_topics: (fixed > 0).then_some(fixed),
    };
    let mut model = RostModel::new(config)?;

    let k = r.u32()?;
    if let Some(f) = model.config.fixed_topics {
        if f != k {
            return Err(RostError::Format(format!("fixed K = {f} but {k} topics stored")));
        }
    }
    let mut stored_counts = vec![vec![0u32; vocab_size]; k];
    for row in stored_counts.iter_mut() {
        for n in row.iter_mut() {
            *n = r.u32()? as u32;
        }
    }
    model.word_topic = vec![vec![0; vocab_size]; k];
    model.topic_totals = vec![0; k];

    let n_frames = r.u32()?;
    for _ in 0..n_frames {
        let t = r.u64()?;
        let n = r.u32()?;
        let mut frame = Vec::with_capacity(n);
        for _ in 0..n {
            let (v, row, col, z) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
            if v >= vocab_size || z >= k {
                return Err(RostError::Format(format!("word {v} / topic {z} out of range")));
            }
            let obs = WordObservation { v, row, col, t };
            let cell = CellIndex::of(&obs, cell_size);
            model.increment(v, cell, z);
            frame.push(StoredWord { obs, cell, z });
        }
        if model.frames.insert(t, frame).is_some() {
            return Err(RostError::DuplicateTime(t));
        }
        model.total_words += n;
        model.times.push(t);
    }
    if stored_counts != model.word_topic {
        return Err(RostError::Format("word-topic counts disagree with assignments".into()));
    }

    let rng_seed = r.bytes::<32>()?;
    let stream = r.u64()?;
    let word_pos = u128::from_le_bytes(r.bytes()?);
    let mut rng = ChaCha8Rng::from_seed(rng_seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    model.rng = rng;

    let mut rest = Vec::new();
    r.0.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(RostError::Format(format!("{} trailing bytes", rest.len())));
    }
    model
        .check_invariants()
        .map_err(RostError::Format)?;
    Ok(model)
}
