//! `VOC1` codebook files and `t,row,col,word` CSV streams.
//!
//! Codebook layout (little-endian): magic `VOC1`, `u32` vocabulary size, `u32` dimension,
//! then `size × dimension` `f32` centroid values. Seed and inertia are not stored.

use std::fs;
use std::path::Path;

use super::{Codebook, Result, VocabError, WordObservation};
use crate::scalar::Scalar;

pub const VOCAB_MAGIC: &[u8; 4] = b"VOC1";

pub fn save_codebook<T: Scalar>(codebook: &Codebook<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + 4 * codebook.size() * codebook.dimension());
    buf.extend_from_slice(VOCAB_MAGIC);
    buf.extend_from_slice(&(codebook.size() as u32).to_le_bytes());
    buf.extend_from_slice(&(codebook.dimension() as u32).to_le_bytes());
    for c in &codebook.centroids {
        for &v in c {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_codebook<T: Scalar>(path: &Path) -> Result<Codebook<T>> {
    let bytes = fs::read(path)?;
    let bad = |why: &str| VocabError::Format(format!("{}: {why}", path.display()));
    if bytes.len() < 12 || &bytes[..4] != VOCAB_MAGIC {
        return Err(bad("bad magic, expected VOC1"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (size, dim) = (word(4), word(8));
    if size == 0 || dim == 0 {
        return Err(bad("empty codebook"));
    }
    if bytes.len() != 12 + 4 * size * dim {
        return Err(bad("length does not match header"));
    }
    let centroids = (0..size)
        .map(|k| {
            (0..dim)
                .map(|d| {
                    let o = 12 + 4 * (k * dim + d);
                    T::lit(f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as f64)
                })
                .collect()
        })
        .collect();
    Ok(Codebook {
        centroids,
        seed: 0,
        inertia: T::zero(),
    })
}

pub fn write_words_csv(words: &[WordObservation], path: &Path) -> Result<()> {
    let mut out = String::from("t,row,col,word\n");
    for w in words {
        out.push_str(&format!("{},{},{},{}\n", w.t, w.row, w.col, w.v));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_words_csv(path: &Path) -> Result<Vec<WordObservation>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("t,row,col,word") {
        return Err(VocabError::Format(format!("{}: missing t,row,col,word header", path.display())));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').map(str::trim).collect();
            let parse = |i: usize| -> Result<u64> {
                f.get(i)
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| VocabError::Format(format!("bad word row {l:?}")))
            };
            Ok(WordObservation {
                t: parse(0)?,
                row: parse(1)? as usize,
                col: parse(2)? as usize,
                v: parse(3)? as usize,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codebook_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.voc");
        let book = Codebook {
            centroids: vec![vec![0.5f32, -1.25, 3.0], vec![7.0, 8.0, 9.5]],
            seed: 4,
            inertia: 2.0,
        };
        save_codebook(&book, &path).unwrap();
        let back: Codebook<f32> = load_codebook(&path).unwrap();
        assert_eq!(back.centroids, book.centroids);
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..12], b"VOC1\x02\x00\x00\x00\x03\x00\x00\x00");
        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(load_codebook::<f32>(&path).is_err());
    }

    #[test]
    fn words_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let words = vec![
            WordObservation { v: 3, row: 0, col: 1, t: 0 },
            WordObservation { v: 63, row: 3, col: 3, t: 9 },
        ];
        write_words_csv(&words, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "t,row,col,word\n0,0,1,3\n9,3,3,63\n");
        assert_eq!(read_words_csv(&path).unwrap(), words);
    }
}
