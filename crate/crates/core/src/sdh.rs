//! Batch-sequential symmetric discrete code learning.
//!
//! The learner approximates a scaled pairwise block λS_A by the product
//! H_A·Hᵀ of one shared discrete code matrix, sweeping the training rows
//! batch by batch. Within a batch the codes are refreshed by repeated
//! simultaneous sign updates (anchors held fixed), which makes the inner
//! objective trace monotone; anchors are refreshed after each batch. The
//! final projection is a regularized least-squares fit against the scaled
//! update target.

use rayon::prelude::*;
use serde::Serialize;

use crate::encode::{EncoderMode, HashModel};
use crate::error::{Error, Result};
use crate::hashcore::{sgn, sgn_matrix, CodeMatrix};
use crate::linalg::{default_ridge, ridge_solve, sym_eig, Matrix};
use crate::pairwise::{set_lambda, PairwiseBlock};
use crate::rng::Rng;

/// Training hyper-parameters. `new` fills the empirical defaults
/// (1000 anchors, batches of 100, beta 10, 20 outer and 3 inner
/// iterations).
#[derive(Debug, Clone)]
pub struct TrainConfig {
    /// Code length m.
    pub bits: usize,
    /// Anchor count p used when the pipeline samples anchors.
    pub anchors: usize,
    /// Batch size n_b.
    pub batch_size: usize,
    /// Convergence-smoothing constant beta >= 0.
    pub beta: f64,
    /// Outer iteration cap.
    pub outer_iters: usize,
    /// Inner iteration cap per batch.
    pub inner_iters: usize,
    pub seed: u64,
    /// Ridge for the projection fit; `None` picks 1e-6·trace(XᵀX)/d.
    pub ridge: Option<f64>,
}

impl TrainConfig {
    pub fn new(bits: usize) -> TrainConfig {
        TrainConfig {
            bits,
            anchors: 1000,
            batch_size: 100,
            beta: 10.0,
            outer_iters: 20,
            inner_iters: 3,
            seed: 0,
            ridge: None,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.bits == 0 {
            return Err(Error::InvalidArgument("bits must be >= 1".into()));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::InvalidArgument(format!(
                "batch size must satisfy 1 <= n_b <= n, got {} for n = {n}",
                self.batch_size
            )));
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "beta must be finite and >= 0, got {}",
                self.beta
            )));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::InvalidArgument(
                "iteration caps must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Cached spectral data of the anchor gram H_AᵀH_A.
#[derive(Debug, Clone)]
pub struct SpectralState {
    /// m×m gram, from exact ±1 dot products.
    pub gram: Matrix,
    /// Eigenvalues of the gram, descending.
    pub eigenvalues: Vec<f64>,
    /// Largest eigenvalue plus beta.
    pub gamma: f64,
}

/// Factors of the regression surrogate behind the linearized update
/// (used for self-checks; the solvers never materialize them).
#[derive(Debug, Clone)]
pub struct SurrogateFactors {
    pub z: Matrix,
    pub gamma_diag: Vec<f64>,
    pub gamma: f64,
    pub u: Matrix,
    pub delta: Vec<f64>,
}

/// Per-outer-iteration diagnostics record.
#[derive(Debug, Clone, Serialize)]
pub struct OuterRecord {
    pub iteration: usize,
    /// ‖H_l − H_{l−1}‖_F; absent for the initialization record.
    pub code_change: Option<f64>,
    /// ‖H_A·Hᵀ − λS_A‖_F at the end of the iteration.
    pub anchor_objective: f64,
    /// Summed pair loss, recorded by the loss-extension trainer only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_loss: Option<f64>,
}

/// Objective values of one inner loop.
#[derive(Debug, Clone, Serialize)]
pub struct InnerTrace {
    pub outer: usize,
    pub batch: usize,
    /// Bit index for per-bit learners; `None` for whole-row updates.
    pub bit: Option<usize>,
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Diagnostics {
    pub outer: Vec<OuterRecord>,
    pub inner: Vec<InnerTrace>,
    /// Outer iteration at which the code change reached zero, if any.
    pub converged_at: Option<usize>,
}

/// Spectral initialization: the projection rows are the top-m
/// eigenvectors of the symmetrized XᵀS_AᵀX_A, and the codes are the signs
/// of the projected features.
pub fn initialize(xk: &Matrix, s: &PairwiseBlock, bits: usize) -> Result<(Matrix, CodeMatrix)> {
    let d = xk.cols();
    if bits > d {
        return Err(Error::InvalidArgument(format!(
            "bits ({bits}) cannot exceed feature dimension ({d})"
        )));
    }
    if s.items() != xk.rows() {
        return Err(Error::DimensionMismatch {
            op: "initialize",
            lhs: (s.anchors(), s.items()),
            rhs: (xk.rows(), xk.cols()),
        });
    }
    let mut xa = Matrix::zeros(s.anchors(), d);
    for (r, &a) in s.anchor_idx.iter().enumerate() {
        xa.row_mut(r).copy_from_slice(xk.row(a));
    }
    // C = Xᵀ·S_Aᵀ·X_A, assembled as (S_A·X)ᵀ·X_A; sym_eig symmetrizes.
    let sx = s.block.matmul(xk)?;
    let c = sx.transpose().matmul(&xa)?;
    let eig = sym_eig(&c)?;
    let mut a0 = Matrix::zeros(bits, d);
    for k in 0..bits {
        for j in 0..d {
            a0.set(k, j, eig.eigenvectors.get(j, k));
        }
    }
    let h0 = sgn_matrix(&xk.matmul(&a0.transpose())?)?;
    Ok((a0, h0))
}

/// Gram and spectrum of the anchor codes; gamma = λ_max + beta.
pub fn spectral_state(h_a: &CodeMatrix, beta: f64) -> Result<SpectralState> {
    if h_a.n() == 0 {
        return Err(Error::InvalidArgument("empty anchor codes".into()));
    }
    let gram = code_gram(h_a);
    let eig = sym_eig(&gram)?;
    let gamma = eig.eigenvalues[0] + beta;
    Ok(SpectralState {
        gram,
        eigenvalues: eig.eigenvalues,
        gamma,
    })
}

/// Exact integer gram H_AᵀH_A widened to f64.
pub(crate) fn code_gram(h_a: &CodeMatrix) -> Matrix {
    let p = h_a.n();
    let m = h_a.bits();
    let mut g = vec![0i64; m * m];
    for a in 0..p {
        let row = h_a.row_signs(a);
        for i in 0..m {
            let ri = row[i] as i64;
            for j in i..m {
                g[i * m + j] += ri * row[j] as i64;
            }
        }
    }
    let mut out = Matrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            out.set(i, j, g[i * m + j] as f64);
            out.set(j, i, g[i * m + j] as f64);
        }
    }
    out
}

/// Builds the explicit surrogate factors for a full-rank anchor gram:
/// Δ_ii = sqrt(γΓ_ii/Λ_ii² − Γ_ii) and Z = Δ·Uᵀ (the orthogonal factor on
/// the left is pinned to the identity; it is not unique). The defining
/// identity γ(I − Zᵀ(ZZᵀ+Γ)⁻¹Z) = H_AᵀH_A is what callers verify.
pub fn construct_surrogate(
    h_a: &CodeMatrix,
    beta: f64,
    gamma_diag: &[f64],
) -> Result<SurrogateFactors> {
    let m = h_a.bits();
    if gamma_diag.len() != m {
        return Err(Error::InvalidArgument(format!(
            "need {m} diagonal weights, got {}",
            gamma_diag.len()
        )));
    }
    if gamma_diag.iter().any(|&g| g <= 0.0 || !g.is_finite()) {
        return Err(Error::InvalidArgument(
            "diagonal weights must be positive".into(),
        ));
    }
    let gram = code_gram(h_a);
    let eig = sym_eig(&gram)?;
    let lambda_max = eig.eigenvalues[0];
    let rank_tol = 1e-9 * lambda_max.max(1.0);
    if eig.eigenvalues.iter().any(|&l| l <= rank_tol) {
        return Err(Error::Singular);
    }
    let gamma = lambda_max + beta;
    let mut delta = Vec::with_capacity(m);
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        let radicand = gamma * gamma_diag[i] / lam - gamma_diag[i];
        if radicand < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "gamma {gamma} is below eigenvalue {lam}; surrogate undefined"
            )));
        }
        delta.push(radicand.sqrt());
    }
    let z = Matrix::diag(&delta).matmul(&eig.eigenvectors.transpose())?;
    Ok(SurrogateFactors {
        z,
        gamma_diag: gamma_diag.to_vec(),
        gamma,
        u: eig.eigenvectors,
        delta,
    })
}

/// One batch refresh: repeats the simultaneous sign update
/// H_b ← sgn(λS_Abᵀ·H_A + H_b(γI − H_AᵀH_A)) until the rows stop changing
/// or the cap is hit. The anchor codes are a fixed snapshot throughout.
///
/// Returns the inner objective after each iteration: the linearized
/// trace with the momentum quadratic accounted at its regression
/// optimum, Tr{H_t((γI−G)H_{t−1}ᵀ + λH_AᵀS_Ab)} − ½Tr{H_{t−1}(γI−G)H_{t−1}ᵀ}.
/// The correction term is constant over the update's candidates (so the
/// sign update still maximizes the returned value exactly), and it is
/// what makes the sequence non-decreasing: the bare trace alone can dip
/// when momentum dominates.
pub fn update_batch(
    h: &mut CodeMatrix,
    h_a: &CodeMatrix,
    s: &PairwiseBlock,
    idx: &[usize],
    state: &SpectralState,
    inner_cap: usize,
) -> Result<Vec<f64>> {
    let lambda = s.lambda.ok_or_else(|| {
        Error::InvalidArgument("pairwise block has no lambda; call set_lambda first".into())
    })?;
    let m = h.bits();
    let p = h_a.n();
    let nb = idx.len();
    if nb == 0 || inner_cap == 0 {
        return Ok(Vec::new());
    }
    for &i in idx {
        if i >= h.n() {
            return Err(Error::InvalidArgument(format!(
                "batch index {i} out of range for {} rows",
                h.n()
            )));
        }
    }

    // Data term λ·S_A(:,idx)ᵀ·H_A, fixed for the whole inner loop.
    let mut f = vec![0.0f64; nb * m];
    f.par_chunks_mut(m).enumerate().for_each(|(r, frow)| {
        let col = idx[r];
        for a in 0..p {
            let sval = s.block.get(a, col);
            if sval == 0.0 {
                continue;
            }
            let signs = h_a.row_signs(a);
            for (fj, &sg) in frow.iter_mut().zip(signs) {
                if sg > 0 {
                    *fj += sval;
                } else {
                    *fj -= sval;
                }
            }
        }
        for fj in frow.iter_mut() {
            *fj *= lambda;
        }
    });

    // B = γI − H_AᵀH_A.
    let mut b = vec![0.0f64; m * m];
    for k in 0..m {
        for j in 0..m {
            let g = state.gram.get(k, j);
            b[k * m + j] = if k == j { state.gamma - g } else { -g };
        }
    }

    let mut old: Vec<i8> = Vec::with_capacity(nb * m);
    for &i in idx {
        old.extend_from_slice(h.row_signs(i));
    }
    let mut new = old.clone();
    let mut trace = Vec::new();

    for _ in 0..inner_cap {
        // Momentum quadratic at the previous iterate, ½·Tr{H_prev·B·H_prevᵀ}.
        let mut momentum = 0.0;
        for r in 0..nb {
            let orow = &old[r * m..(r + 1) * m];
            for (k, &ok) in orow.iter().enumerate() {
                let mut acc = 0.0;
                for (j, &oj) in orow.iter().enumerate() {
                    let bkj = b[k * m + j];
                    if oj > 0 {
                        acc += bkj;
                    } else {
                        acc -= bkj;
                    }
                }
                if ok > 0 {
                    momentum += acc;
                } else {
                    momentum -= acc;
                }
            }
        }
        let mut objective = -0.5 * momentum;
        for r in 0..nb {
            let orow = &old[r * m..(r + 1) * m];
            for j in 0..m {
                let mut arg = f[r * m + j];
                for (k, &ok) in orow.iter().enumerate() {
                    let bkj = b[k * m + j];
                    if ok > 0 {
                        arg += bkj;
                    } else {
                        arg -= bkj;
                    }
                }
                new[r * m + j] = sgn(arg);
                objective += arg.abs();
            }
        }
        trace.push(objective);
        if new == old {
            break;
        }
        std::mem::swap(&mut old, &mut new);
    }

    // `old` holds the last applied iterate after the swap (or the
    // unchanged fixed point when the loop broke early).
    for (r, &i) in idx.iter().enumerate() {
        h.set_row(i, &old[r * m..(r + 1) * m]);
    }
    Ok(trace)
}

/// ‖H_A·Hᵀ − λS_A‖_F through packed popcount dot products.
pub fn anchor_objective(h_a: &CodeMatrix, h: &CodeMatrix, s: &PairwiseBlock, lambda: f64) -> f64 {
    let m = h.bits() as i64;
    let n = h.n();
    let row_sums: Vec<f64> = (0..h_a.n())
        .into_par_iter()
        .map(|a| {
            let pa = h_a.packed_row(a);
            let mut acc = 0.0;
            for i in 0..n {
                let dot = m - 2 * crate::hashcore::hamming(pa, h.packed_row(i)) as i64;
                let diff = dot as f64 - lambda * s.block.get(a, i);
                acc += diff * diff;
            }
            acc
        })
        .collect();
    row_sums.iter().sum::<f64>().sqrt()
}

/// Closed-form projection fit shared by the code learners:
/// A = (λH_AᵀS_A + (γI − H_AᵀH_A)Hᵀ)·X(XᵀX + ridge·I)⁻¹.
pub(crate) fn fit_projection(
    xk: &Matrix,
    s: &PairwiseBlock,
    h: &CodeMatrix,
    h_a: &CodeMatrix,
    lambda: f64,
    beta: f64,
    ridge: f64,
) -> Result<Matrix> {
    let state = spectral_state(h_a, beta)?;
    let m = h.bits();
    let hat = h_a.to_matrix().transpose();
    let t1 = hat.matmul(&s.block)?.scale(lambda);
    let mut gi = state.gram.scale(-1.0);
    for k in 0..m {
        gi.set(k, k, gi.get(k, k) + state.gamma);
    }
    let t2 = gi.matmul(&h.to_matrix().transpose())?;
    let target = t1.add(&t2)?;
    ridge_solve(xk, &target, ridge)
}

/// Runs the batch-sequential learner: seeded batch sweeps with anchor
/// refresh after every batch, stopping when an outer sweep leaves the
/// codes unchanged or the cap is reached, then fits the projection.
pub fn train(
    xk: &Matrix,
    s: &PairwiseBlock,
    cfg: &TrainConfig,
) -> Result<(HashModel, CodeMatrix, Diagnostics)> {
    let n = xk.rows();
    cfg.validate(n)?;
    if s.items() != n {
        return Err(Error::DimensionMismatch {
            op: "train",
            lhs: (s.anchors(), s.items()),
            rhs: (n, xk.cols()),
        });
    }
    let block;
    let s = if s.lambda.is_some() {
        s
    } else {
        block = set_lambda(s, cfg.bits);
        &block
    };
    let lambda = s.lambda.expect("lambda set above");

    let (_, mut h) = initialize(xk, s, cfg.bits)?;
    let mut h_a = h.select_rows(&s.anchor_idx)?;

    let mut diag = Diagnostics::default();
    diag.outer.push(OuterRecord {
        iteration: 0,
        code_change: None,
        anchor_objective: anchor_objective(&h_a, &h, s, lambda),
        true_loss: None,
    });

    let mut rng = Rng::new(cfg.seed);
    for l in 1..=cfg.outer_iters {
        let prev = h.clone();
        let perm = rng.permutation(n);
        for (bi, chunk) in perm.chunks(cfg.batch_size).enumerate() {
            let state = spectral_state(&h_a, cfg.beta)?;
            let objectives = update_batch(&mut h, &h_a, s, chunk, &state, cfg.inner_iters)?;
            diag.inner.push(InnerTrace {
                outer: l,
                batch: bi,
                bit: None,
                objectives,
            });
            h_a = h.select_rows(&s.anchor_idx)?;
        }
        let change = prev.code_change_norm(&h);
        diag.outer.push(OuterRecord {
            iteration: l,
            code_change: Some(change),
            anchor_objective: anchor_objective(&h_a, &h, s, lambda),
            true_loss: None,
        });
        if change == 0.0 {
            diag.converged_at = Some(l);
            break;
        }
    }

    let ridge = cfg.ridge.unwrap_or_else(|| default_ridge(xk));
    let projection = fit_projection(xk, s, &h, &h_a, lambda, cfg.beta, ridge)?;
    let model = HashModel {
        projection,
        kernel: None,
        lambda,
        beta: cfg.beta,
        mode: EncoderMode::Linear,
    };
    Ok((model, h, diag))
}
