//! Dataset ingestion, persistence, and synthetic data.
//!
//! # File formats
//!
//! Feature file (binary): magic `PHSH`, u16 version (1), u64 row count,
//! u64 column count, then row-major little-endian f32 values. CSV feature
//! files hold one comma-separated row per line.
//!
//! Label file (text): one line per item, non-negative integer labels
//! separated by spaces; single-label data is detected when every line has
//! exactly one token.
//!
//! Code file (binary): magic `PHCB`, u16 version (1), u64 row count,
//! u64 bit count, then the packed words row-major (little-endian u64,
//! ⌈m/64⌉ words per row, bit 1 ⇔ code +1).
//!
//! Model file (binary): magic `PHMD`, u16 version (1), projection shape
//! and values, scale parameters, encoder mode, and the optional kernel
//! map. Reals are stored as raw f64 bit patterns so a round trip is
//! bit-exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::encode::{EncoderMode, HashModel};
use crate::error::{Error, Result};
use crate::hashcore::CodeMatrix;
use crate::kernel::KernelMap;
use crate::linalg::Matrix;
use crate::pairwise::LabelData;
use crate::rng::Rng;

const FEATURE_MAGIC: &[u8; 4] = b"PHSH";
const CODE_MAGIC: &[u8; 4] = b"PHCB";
const MODEL_MAGIC: &[u8; 4] = b"PHMD";
const FORMAT_VERSION: u16 = 1;

/// On-disk feature layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Binary,
    Csv,
}

pub fn load_features(path: &Path, format: FeatureFormat) -> Result<Matrix> {
    match format {
        FeatureFormat::Binary => load_features_binary(path),
        FeatureFormat::Csv => load_features_csv(path),
    }
}

pub fn save_features(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for &v in m.values() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn load_features_binary(path: &Path) -> Result<Matrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != FEATURE_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = read_u16(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = read_u64(&mut r)? as usize;
    let d = read_u64(&mut r)? as usize;
    let mut data = Vec::with_capacity(n * d);
    let mut buf = [0u8; 4];
    for _ in 0..n * d {
        read_exact(&mut r, &mut buf)?;
        data.push(f32::from_le_bytes(buf) as f64);
    }
    Matrix::from_vec(n, d, data)
}

fn load_features_csv(path: &Path) -> Result<Matrix> {
    let r = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut cols = None;
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: format!("non-numeric cell {cell:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(c) = cols {
            if row.len() != c {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected {c} columns, got {}", row.len()),
                });
            }
        } else {
            cols = Some(row.len());
        }
        rows.push(row);
    }
    let cols = cols.unwrap_or(0);
    let n = rows.len();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    Matrix::from_vec(n, cols, data)
}

pub fn load_labels(path: &Path) -> Result<LabelData> {
    let r = BufReader::new(File::open(path)?);
    let mut sets: Vec<Vec<u32>> = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            return Err(Error::Parse {
                line: lineno + 1,
                message: "empty label line".into(),
            });
        }
        let set: Vec<u32> = trimmed
            .split_whitespace()
            .map(|tok| {
                tok.parse::<u32>().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    message: format!("non-integer label {tok:?}"),
                })
            })
            .collect::<Result<_>>()?;
        sets.push(set);
    }
    LabelData::new(sets)
}

pub fn save_labels(path: &Path, labels: &LabelData) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for i in 0..labels.len() {
        let line: Vec<String> = labels.item(i).iter().map(|l| l.to_string()).collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_codes(path: &Path, codes: &CodeMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CODE_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(codes.n() as u64).to_le_bytes())?;
    w.write_all(&(codes.bits() as u64).to_le_bytes())?;
    for &word in codes.packed_words() {
        w.write_all(&word.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_codes(path: &Path) -> Result<CodeMatrix> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != CODE_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = read_u16(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = read_u64(&mut r)? as usize;
    let m = read_u64(&mut r)? as usize;
    let words_per_row = m.div_ceil(64).max(1);
    let mut packed = Vec::with_capacity(n * words_per_row);
    let mut buf = [0u8; 8];
    for _ in 0..n * words_per_row {
        read_exact(&mut r, &mut buf)?;
        packed.push(u64::from_le_bytes(buf));
    }
    CodeMatrix::from_packed(n, m, packed)
}

pub fn save_model(path: &Path, model: &HashModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    write_matrix(&mut w, &model.projection)?;
    write_f64(&mut w, model.lambda)?;
    write_f64(&mut w, model.beta)?;
    let mode = match model.mode {
        EncoderMode::Linear => 0u8,
        EncoderMode::LeastSquares => 1u8,
    };
    w.write_all(&[mode])?;
    match &model.kernel {
        None => w.write_all(&[0u8])?,
        Some(k) => {
            w.write_all(&[1u8])?;
            write_matrix(&mut w, k.anchors())?;
            write_f64(&mut w, k.bandwidth())?;
            w.write_all(&(k.mean().len() as u64).to_le_bytes())?;
            for &v in k.mean() {
                write_f64(&mut w, v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<HashModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = read_u16(&mut r)?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let projection = read_matrix(&mut r)?;
    let lambda = read_f64(&mut r)?;
    let beta = read_f64(&mut r)?;
    let mode = match read_u8(&mut r)? {
        0 => EncoderMode::Linear,
        1 => EncoderMode::LeastSquares,
        other => {
            return Err(Error::Parse {
                line: 0,
                message: format!("unknown encoder mode tag {other}"),
            })
        }
    };
    let kernel = match read_u8(&mut r)? {
        0 => None,
        1 => {
            let anchors = read_matrix(&mut r)?;
            let bandwidth = read_f64(&mut r)?;
            let len = read_u64(&mut r)? as usize;
            let mut mean = Vec::with_capacity(len);
            for _ in 0..len {
                mean.push(read_f64(&mut r)?);
            }
            Some(KernelMap::from_parts(anchors, bandwidth, mean)?)
        }
        other => {
            return Err(Error::Parse {
                line: 0,
                message: format!("unknown kernel tag {other}"),
            })
        }
    };
    Ok(HashModel {
        projection,
        kernel,
        lambda,
        beta,
        mode,
    })
}

/// Synthetic labeled clusters for tests and end-to-end runs.
///
/// Class centers are the vertices of a regular simplex normalized to unit
/// norm and carried through a seeded random rotation (requires
/// classes ≤ dims; otherwise centers fall back to seeded random unit
/// vectors). Points are center + spread·N(0, I); item i gets class
/// i mod classes. Deterministic per seed.
pub fn synth_clusters(
    n: usize,
    dims: usize,
    classes: usize,
    spread: f64,
    seed: u64,
) -> Result<(Matrix, LabelData)> {
    if classes < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if dims == 0 || n == 0 {
        return Err(Error::InvalidArgument("n and dims must be positive".into()));
    }
    if spread < 0.0 || !spread.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "spread must be finite and >= 0, got {spread}"
        )));
    }
    let mut rng = Rng::new(seed);

    let centers = if classes <= dims {
        simplex_centers(&mut rng, dims, classes)
    } else {
        // Too many classes for a simplex in this dimension; random unit
        // directions still separate well for small class counts.
        let mut c = Matrix::zeros(classes, dims);
        for k in 0..classes {
            let mut v: Vec<f64> = (0..dims).map(|_| rng.next_gaussian()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            v.iter_mut().for_each(|x| *x /= norm);
            c.row_mut(k).copy_from_slice(&v);
        }
        c
    };

    let mut x = Matrix::zeros(n, dims);
    let mut classes_of = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % classes;
        classes_of.push(k as u32);
        let row = x.row_mut(i);
        for (j, r) in row.iter_mut().enumerate() {
            *r = centers.get(k, j) + spread * rng.next_gaussian();
        }
    }
    Ok((x, LabelData::from_single(&classes_of)))
}

/// Vertices of a regular simplex with `classes` corners, normalized to
/// unit norm and rotated by a seeded orthogonal matrix.
fn simplex_centers(rng: &mut Rng, dims: usize, classes: usize) -> Matrix {
    // e_k - 1/K in the first `classes` coordinates, normalized.
    let k = classes as f64;
    let norm = (1.0 - 1.0 / k).sqrt();
    let mut base = Matrix::zeros(classes, dims);
    for c in 0..classes {
        for j in 0..classes {
            let v = if c == j { 1.0 - 1.0 / k } else { -1.0 / k };
            base.set(c, j, v / norm);
        }
    }
    // Seeded random rotation via Gram-Schmidt on Gaussian vectors.
    let mut q = Matrix::zeros(dims, dims);
    for i in 0..dims {
        let mut v: Vec<f64> = (0..dims).map(|_| rng.next_gaussian()).collect();
        for j in 0..i {
            let qj = q.row(j);
            let dot: f64 = v.iter().zip(qj).map(|(a, b)| a * b).sum();
            for (vk, qk) in v.iter_mut().zip(qj) {
                *vk -= dot * qk;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-9 {
            // Degenerate draw; retry deterministically with fresh samples.
            let mut fresh: Vec<f64> = (0..dims).map(|_| rng.next_gaussian()).collect();
            for j in 0..i {
                let qj = q.row(j);
                let dot: f64 = fresh.iter().zip(qj).map(|(a, b)| a * b).sum();
                for (vk, qk) in fresh.iter_mut().zip(qj) {
                    *vk -= dot * qk;
                }
            }
            let n2 = fresh.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            fresh.iter_mut().for_each(|x| *x /= n2);
            q.row_mut(i).copy_from_slice(&fresh);
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
            q.row_mut(i).copy_from_slice(&v);
        }
    }
    base.matmul(&q).expect("shape by construction")
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        let got = r.read(&mut buf[filled..])?;
        if got == 0 {
            return Err(Error::Truncated);
        }
        filled += got;
    }
    Ok(())
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_bits().to_le_bytes())?;
    Ok(())
}

fn write_matrix<W: Write>(w: &mut W, m: &Matrix) -> Result<()> {
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for &v in m.values() {
        write_f64(w, v)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R) -> Result<Matrix> {
    let rows = read_u64(r)? as usize;
    let cols = read_u64(r)? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(read_f64(r)?);
    }
    Matrix::from_vec(rows, cols, data)
}
