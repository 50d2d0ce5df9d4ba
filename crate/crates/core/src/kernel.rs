//! Anchor-based Gaussian kernel feature map.
//!
//! Raw features are lifted to p dimensions through RBF responses against a
//! set of anchor rows, then centered by the training mean so no explicit
//! bias column is needed downstream.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// Pairs sampled by the bandwidth heuristic.
const BANDWIDTH_PAIRS: usize = 1000;
/// Fixed seed for the heuristic so fitting is deterministic per dataset.
const BANDWIDTH_SEED: u64 = 0x7061_6972_6873_6831;

/// Fitted kernel map: anchors, Gaussian bandwidth (σ²), and the training
/// mean of each kernel response column.
#[derive(Debug, Clone)]
pub struct KernelMap {
    anchors: Matrix,
    bandwidth: f64,
    mean: Vec<f64>,
}

impl KernelMap {
    pub fn anchors(&self) -> &Matrix {
        &self.anchors
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn from_parts(anchors: Matrix, bandwidth: f64, mean: Vec<f64>) -> Result<KernelMap> {
        if bandwidth <= 0.0 || !bandwidth.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive and finite, got {bandwidth}"
            )));
        }
        if mean.len() != anchors.rows() {
            return Err(Error::InvalidArgument(format!(
                "mean length {} does not match anchor count {}",
                mean.len(),
                anchors.rows()
            )));
        }
        Ok(KernelMap {
            anchors,
            bandwidth,
            mean,
        })
    }

    /// Output dimensionality (anchor count).
    pub fn output_dim(&self) -> usize {
        self.anchors.rows()
    }
}

/// Fits the map on training features. When `bandwidth` is not given it
/// defaults to the mean squared Euclidean distance over 1000 internally
/// seeded random training pairs; identical data therefore always yields
/// the identical bandwidth.
pub fn fit(x: &Matrix, anchor_idx: &[usize], bandwidth: Option<f64>) -> Result<KernelMap> {
    if anchor_idx.is_empty() {
        return Err(Error::InvalidArgument("empty anchor set".into()));
    }
    if let Some(&bad) = anchor_idx.iter().find(|&&a| a >= x.rows()) {
        return Err(Error::InvalidArgument(format!(
            "anchor index {bad} out of range for {} rows",
            x.rows()
        )));
    }
    let mut anchors = Matrix::zeros(anchor_idx.len(), x.cols());
    for (r, &a) in anchor_idx.iter().enumerate() {
        anchors.row_mut(r).copy_from_slice(x.row(a));
    }

    let bandwidth = match bandwidth {
        Some(b) => {
            if b <= 0.0 || !b.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "bandwidth must be positive and finite, got {b}"
                )));
            }
            b
        }
        None => mean_pair_distance_sq(x)?,
    };

    // Column means of the kernel responses over the training rows.
    let n = x.rows();
    let p = anchors.rows();
    let sums: Vec<f64> = (0..p)
        .into_par_iter()
        .map(|j| {
            let aj = anchors.row(j);
            let mut acc = 0.0;
            for i in 0..n {
                acc += gaussian(x.row(i), aj, bandwidth);
            }
            acc
        })
        .collect();
    let mean: Vec<f64> = sums.into_iter().map(|s| s / n as f64).collect();

    KernelMap::from_parts(anchors, bandwidth, mean)
}

/// Centered kernel features: entry (i, j) = k(x_i, a_j) − mean_j.
pub fn apply(map: &KernelMap, x: &Matrix) -> Result<Matrix> {
    if x.cols() != map.anchors.cols() {
        return Err(Error::DimensionMismatch {
            op: "kernel apply",
            lhs: (x.rows(), x.cols()),
            rhs: (map.anchors.rows(), map.anchors.cols()),
        });
    }
    let n = x.rows();
    let p = map.anchors.rows();
    let mut out = Matrix::zeros(n, p);
    out.values_mut()
        .par_chunks_mut(p)
        .enumerate()
        .for_each(|(i, row)| {
            let xi = x.row(i);
            for j in 0..p {
                row[j] = gaussian(xi, map.anchors.row(j), map.bandwidth) - map.mean[j];
            }
        });
    Ok(out)
}

fn gaussian(a: &[f64], b: &[f64], bandwidth: f64) -> f64 {
    let mut d2 = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        d2 += d * d;
    }
    (-d2 / (2.0 * bandwidth)).exp()
}

fn mean_pair_distance_sq(x: &Matrix) -> Result<f64> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "bandwidth heuristic needs at least two rows".into(),
        ));
    }
    let mut rng = Rng::new(BANDWIDTH_SEED);
    let mut sum = 0.0;
    for _ in 0..BANDWIDTH_PAIRS {
        let i = rng.below(n);
        let mut j = rng.below(n - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (x.row(i), x.row(j));
        let mut d2 = 0.0;
        for (u, v) in a.iter().zip(b) {
            let d = u - v;
            d2 += d * d;
        }
        sum += d2;
    }
    let mean = sum / BANDWIDTH_PAIRS as f64;
    if mean <= 0.0 {
        return Err(Error::InvalidArgument(
            "zero-variance data: set the bandwidth explicitly".into(),
        ));
    }
    Ok(mean)
}
