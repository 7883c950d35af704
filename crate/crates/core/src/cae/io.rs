//! `CAE1` model files and `epoch,loss` CSV export.
//!
//! Layout (little-endian): magic `CAE1`; `u32` input height, width, channels; `u32` layer
//! count; per layer `u32` filter, stride, out-channels; `f64` weight decay and learning
//! rate; `u32` batch size and epochs; `u64` seed. Then `f32` parameters: for each layer
//! its filter (`[ky][kx][in][out]`) followed by its encoder bias, then every decoder bias
//! in layer order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{ArchSpec, CaeError, CaeNetwork, Layer, Result};
use crate::scalar::Scalar;

pub const CAE_MAGIC: &[u8; 4] = b"CAE1";

pub fn save_network<T: Scalar>(net: &CaeNetwork<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CAE_MAGIC);
    let a = &net.arch;
    for v in [a.input.0, a.input.1, a.input.2, a.layers.len()] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for l in &a.layers {
        for v in [l.filter, l.stride, l.out_channels] {
            buf.extend_from_slice(&(v as u32).to_le_bytes());
        }
    }
    buf.extend_from_slice(&a.weight_decay.to_le_bytes());
    buf.extend_from_slice(&a.learning_rate.to_le_bytes());
    buf.extend_from_slice(&(a.batch_size as u32).to_le_bytes());
    buf.extend_from_slice(&(a.epochs as u32).to_le_bytes());
    buf.extend_from_slice(&a.seed.to_le_bytes());

    let mut put = |vals: &[T]| {
        for &v in vals {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    };
    for (f, b) in net.filters.iter().zip(&net.encoder_bias) {
        put(&f.data);
        put(b);
    }
    for b in &net.decoder_bias {
        put(b);
    }
    let mut file = fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        let end = self.pos + N;
        let chunk = self
            .bytes
            .get(self.pos..end)
            .ok_or_else(|| CaeError::Format(format!("truncated at byte {}", self.pos)))?;
        self.pos = end;
        Ok(chunk.try_into().unwrap())
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take()?) as usize)
    }
}

pub fn load_network<T: Scalar>(path: &Path) -> Result<CaeNetwork<T>> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if &cur.take::<4>()? != CAE_MAGIC {
        return Err(CaeError::Format(format!("{}: bad magic, expected CAE1", path.display())));
    }
    let input = (cur.u32()?, cur.u32()?, cur.u32()?);
    let n = cur.u32()?;
    if n > 1024 {
        return Err(CaeError::Format(format!("implausible layer count {n}")));
    }
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        layers.push(Layer::new(cur.u32()?, cur.u32()?, cur.u32()?));
    }
    let weight_decay = f64::from_le_bytes(cur.take()?);
    let learning_rate = f64::from_le_bytes(cur.take()?);
    let batch_size = cur.u32()?;
    let epochs = cur.u32()?;
    let seed = u64::from_le_bytes(cur.take()?);
    let arch = ArchSpec {
        input,
        layers,
        weight_decay,
        learning_rate,
        batch_size,
        epochs,
        seed,
    };
    let mut net = CaeNetwork::<T>::zeros(arch).map_err(|e| CaeError::Format(e.to_string()))?;

    let mut fill = |vals: &mut [T]| -> Result<()> {
        for v in vals {
            *v = T::lit(f32::from_le_bytes(cur.take()?) as f64);
        }
        Ok(())
    };
    for l in 0..n {
        fill(&mut net.filters[l].data)?;
        fill(&mut net.encoder_bias[l])?;
    }
    for b in &mut net.decoder_bias {
        fill(b)?;
    }
    if cur.pos != bytes.len() {
        return Err(CaeError::Format(format!(
            "{} trailing bytes after parameters",
            bytes.len() - cur.pos
        )));
    }
    Ok(net)
}

pub fn write_loss_csv(history: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,loss\n");
    for (e, l) in history.iter().enumerate() {
        out.push_str(&format!("{e},{l}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_loss_csv(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(',')
                .nth(1)
                .and_then(|v| v.trim().parse().ok())
                .ok_or_else(|| CaeError::Format(format!("bad loss row {l:?}")))
        })
        .collect()
}
