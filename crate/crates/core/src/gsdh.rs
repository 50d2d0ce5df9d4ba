//! Greedy per-bit code learning and the generalized pairwise-loss
//! framework.
//!
//! Instead of refreshing whole rows, the greedy learner sweeps the code
//! columns one bit at a time against a residual target that fixes every
//! other bit, refreshing the anchor column after each bit. Because a
//! single bit's gram is the anchor count exactly, the linearized update
//! collapses to a scalar momentum term, so the same machinery also
//! minimizes arbitrary pairwise losses (squared-difference and hinge
//! flavors ship here) through a per-bit reduction of the loss to a
//! rank-one target.

use rayon::prelude::*;

use crate::encode::{EncoderMode, HashModel};
use crate::error::{Error, Result};
use crate::hashcore::{hamming, sgn, CodeMatrix};
use crate::linalg::{default_ridge, ridge_solve, Matrix};
use crate::pairwise::{set_lambda, PairwiseBlock};
use crate::rng::Rng;
use crate::sdh::{
    anchor_objective, fit_projection, initialize, Diagnostics, InnerTrace, OuterRecord,
    TrainConfig,
};

/// Pairwise loss minimized by the per-bit framework.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Default target: approximate λS_A by code products.
    PairwiseTarget,
    /// Squared difference between the Hamming distance and its target
    /// (0 for similar pairs, m for dissimilar ones).
    Bre,
    /// Squared distance for similar pairs, squared hinge at m/2 for
    /// dissimilar ones.
    Hinge,
}

/// Residual target for bit `j` over one batch:
/// S̃_Ab = S_A(:,idx) − Σ_{k≠j} h_A^k (h_b^k)ᵀ, with the code products
/// taken from exact integer dots.
pub fn residual_target(
    s: &PairwiseBlock,
    h_a: &CodeMatrix,
    h: &CodeMatrix,
    idx: &[usize],
    j: usize,
) -> Result<Matrix> {
    if j >= h.bits() {
        return Err(Error::InvalidArgument(format!(
            "bit {j} out of range for {} bits",
            h.bits()
        )));
    }
    let p = h_a.n();
    let nb = idx.len();
    let mut out = Matrix::zeros(p, nb);
    out.values_mut()
        .par_chunks_mut(nb)
        .enumerate()
        .for_each(|(a, row)| {
            let pa = h_a.packed_row(a);
            let haj = h_a.get(a, j) as i64;
            for (r, &i) in idx.iter().enumerate() {
                let dot = h.bits() as i64 - 2 * hamming(pa, h.packed_row(i)) as i64;
                let fixed = dot - haj * h.get(i, j) as i64;
                row[r] = s.block.get(a, i) - fixed as f64;
            }
        });
    Ok(out)
}

/// One per-bit batch refresh: repeats
/// h_b^j ← sgn(λ·S̃ᵀ·h_A^j + β·h_b^j) until the bit column stops changing
/// or the cap is hit, then writes the column back.
///
/// Returns the inner objective after each iteration, with the momentum
/// quadratic accounted at its regression optimum as in the whole-row
/// update; for a single bit that correction is the constant β·n_b/2.
#[allow(clippy::too_many_arguments)]
pub fn update_bit_batch(
    h: &mut CodeMatrix,
    h_a: &CodeMatrix,
    j: usize,
    s_tilde: &Matrix,
    idx: &[usize],
    lambda: f64,
    beta: f64,
    inner_cap: usize,
) -> Result<Vec<f64>> {
    let p = h_a.n();
    let nb = idx.len();
    if s_tilde.rows() != p || s_tilde.cols() != nb {
        return Err(Error::DimensionMismatch {
            op: "update_bit_batch",
            lhs: (s_tilde.rows(), s_tilde.cols()),
            rhs: (p, nb),
        });
    }
    if nb == 0 || inner_cap == 0 {
        return Ok(Vec::new());
    }

    // Data term λ·S̃ᵀ·h_A^j, fixed for the inner loop.
    let mut f = vec![0.0f64; nb];
    for a in 0..p {
        let row = s_tilde.row(a);
        if h_a.get(a, j) > 0 {
            for (fr, &v) in f.iter_mut().zip(row) {
                *fr += v;
            }
        } else {
            for (fr, &v) in f.iter_mut().zip(row) {
                *fr -= v;
            }
        }
    }
    for fr in f.iter_mut() {
        *fr *= lambda;
    }

    let mut old: Vec<i8> = idx.iter().map(|&i| h.get(i, j)).collect();
    let mut new = old.clone();
    let mut trace = Vec::new();
    for _ in 0..inner_cap {
        let mut objective = -0.5 * beta * nb as f64;
        for r in 0..nb {
            let arg = f[r] + beta * old[r] as f64;
            new[r] = sgn(arg);
            objective += arg.abs();
        }
        trace.push(objective);
        if new == old {
            break;
        }
        std::mem::swap(&mut old, &mut new);
    }
    for (r, &i) in idx.iter().enumerate() {
        h.set(i, j, old[r]);
    }
    Ok(trace)
}

/// Greedy per-bit training with the same sweep scaffolding, convergence
/// rule, and projection fit as the batch learner. With a single bit the
/// two learners produce identical trajectories.
pub fn train(
    xk: &Matrix,
    s: &PairwiseBlock,
    cfg: &TrainConfig,
) -> Result<(HashModel, CodeMatrix, Diagnostics)> {
    train_impl(xk, s, cfg, None)
}

/// Per-bit training against an arbitrary pairwise loss: every bit's
/// target comes from the loss reduction instead of the scaled pairwise
/// block, with unit scale. `PairwiseTarget` delegates to `train`.
pub fn train_with_loss(
    xk: &Matrix,
    s: &PairwiseBlock,
    cfg: &TrainConfig,
    kind: LossKind,
) -> Result<(HashModel, CodeMatrix, Diagnostics)> {
    match kind {
        LossKind::PairwiseTarget => train(xk, s, cfg),
        _ => train_impl(xk, s, cfg, Some(kind)),
    }
}

fn train_impl(
    xk: &Matrix,
    s: &PairwiseBlock,
    cfg: &TrainConfig,
    loss: Option<LossKind>,
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
    let m = cfg.bits;

    let (_, mut h) = initialize(xk, s, m)?;
    let mut h_a = h.select_rows(&s.anchor_idx)?;

    let mut diag = Diagnostics::default();
    diag.outer.push(OuterRecord {
        iteration: 0,
        code_change: None,
        anchor_objective: anchor_objective(&h_a, &h, s, lambda),
        true_loss: loss.map(|kind| true_pair_loss(kind, s, &h_a, &h)),
    });

    let mut rng = Rng::new(cfg.seed);
    for l in 1..=cfg.outer_iters {
        let prev = h.clone();
        let perm = rng.permutation(n);
        for (bi, chunk) in perm.chunks(cfg.batch_size).enumerate() {
            for j in 0..m {
                let (target, scale) = match loss {
                    None => (residual_target(s, &h_a, &h, chunk, j)?, lambda),
                    Some(kind) => (loss_block(kind, s, &h_a, &h, chunk, j)?, 1.0),
                };
                let objectives =
                    update_bit_batch(&mut h, &h_a, j, &target, chunk, scale, cfg.beta, cfg.inner_iters)?;
                diag.inner.push(InnerTrace {
                    outer: l,
                    batch: bi,
                    bit: Some(j),
                    objectives,
                });
                for (r, &a) in s.anchor_idx.iter().enumerate() {
                    h_a.set(r, j, h.get(a, j));
                }
            }
        }
        let change = prev.code_change_norm(&h);
        diag.outer.push(OuterRecord {
            iteration: l,
            code_change: Some(change),
            anchor_objective: anchor_objective(&h_a, &h, s, lambda),
            true_loss: loss.map(|kind| true_pair_loss(kind, s, &h_a, &h)),
        });
        if change == 0.0 {
            diag.converged_at = Some(l);
            break;
        }
    }

    let ridge = cfg.ridge.unwrap_or_else(|| default_ridge(xk));
    let projection = match loss {
        None => fit_projection(xk, s, &h, &h_a, lambda, cfg.beta, ridge)?,
        Some(kind) => fit_projection_loss(xk, s, &h, &h_a, kind, cfg.beta, ridge)?,
    };
    let model = HashModel {
        projection,
        kernel: None,
        lambda,
        beta: cfg.beta,
        mode: EncoderMode::Linear,
    };
    Ok((model, h, diag))
}

/// Pair loss evaluated at a given Hamming distance.
fn pair_loss(kind: LossKind, m: usize, s_val: f64, d_h: f64) -> f64 {
    match kind {
        LossKind::PairwiseTarget => unreachable!("no scalar loss for the pairwise target"),
        LossKind::Bre => {
            let target = if s_val < 0.0 { m as f64 } else { 0.0 };
            let e = target - d_h;
            e * e
        }
        LossKind::Hinge => {
            if s_val > 0.0 {
                d_h * d_h
            } else {
                let e = (0.5 * m as f64 - d_h).max(0.0);
                e * e
            }
        }
    }
}

/// Entry of the per-bit target −L_Ab: −(ℓ(+1) − ℓ(−1))/2, where ℓ(σ) is
/// the pair loss with the bit-j product at σ and every other bit fixed
/// (d_H = d₀ + (1 − σ)/2).
fn neg_l_entry(kind: LossKind, m: usize, s_val: f64, d0: f64) -> f64 {
    let plus = pair_loss(kind, m, s_val, d0);
    let minus = pair_loss(kind, m, s_val, d0 + 1.0);
    -(plus - minus) / 2.0
}

/// Per-bit loss reduction over one batch: the returned matrix plays the
/// role of λ·S̃ in the sign update, so one step of `update_bit_batch`
/// with unit scale minimizes the true summed loss over that bit.
pub fn loss_block(
    kind: LossKind,
    s: &PairwiseBlock,
    h_a: &CodeMatrix,
    h: &CodeMatrix,
    idx: &[usize],
    j: usize,
) -> Result<Matrix> {
    if matches!(kind, LossKind::PairwiseTarget) {
        return Err(Error::InvalidArgument(
            "loss_block needs a concrete loss kind (Bre or Hinge)".into(),
        ));
    }
    if j >= h.bits() {
        return Err(Error::InvalidArgument(format!(
            "bit {j} out of range for {} bits",
            h.bits()
        )));
    }
    let m = h.bits();
    let p = h_a.n();
    let nb = idx.len();
    let mut out = Matrix::zeros(p, nb);
    out.values_mut()
        .par_chunks_mut(nb)
        .enumerate()
        .for_each(|(a, row)| {
            let pa = h_a.packed_row(a);
            for (r, &i) in idx.iter().enumerate() {
                let d_full = hamming(pa, h.packed_row(i));
                let differs = (h_a.get(a, j) != h.get(i, j)) as usize;
                let d0 = (d_full - differs) as f64;
                row[r] = neg_l_entry(kind, m, s.block.get(a, i), d0);
            }
        });
    Ok(out)
}

/// Summed pair loss over the whole anchor block, from packed distances.
pub fn true_pair_loss(kind: LossKind, s: &PairwiseBlock, h_a: &CodeMatrix, h: &CodeMatrix) -> f64 {
    let m = h.bits();
    let n = h.n();
    let row_sums: Vec<f64> = (0..h_a.n())
        .into_par_iter()
        .map(|a| {
            let pa = h_a.packed_row(a);
            let mut acc = 0.0;
            for i in 0..n {
                let d = hamming(pa, h.packed_row(i)) as f64;
                acc += pair_loss(kind, m, s.block.get(a, i), d);
            }
            acc
        })
        .collect();
    row_sums.iter().sum()
}

/// Projection fit for the loss framework: row j of the target is
/// β·(h^j)ᵀ − (h_A^j)ᵀ·L_A^{(j)}, with L_A^{(j)} the per-bit reduction of
/// the loss over the full anchor block at the final codes.
fn fit_projection_loss(
    xk: &Matrix,
    s: &PairwiseBlock,
    h: &CodeMatrix,
    h_a: &CodeMatrix,
    kind: LossKind,
    beta: f64,
    ridge: f64,
) -> Result<Matrix> {
    let m = h.bits();
    let n = h.n();
    let p = h_a.n();
    let mut target = Matrix::zeros(m, n);
    for j in 0..m {
        let row: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| {
                let pi = h.packed_row(i);
                let mut acc = 0.0;
                for a in 0..p {
                    let d_full = hamming(h_a.packed_row(a), pi);
                    let differs = (h_a.get(a, j) != h.get(i, j)) as usize;
                    let d0 = (d_full - differs) as f64;
                    // −h_A^jᵀL_A accumulates through the negated entries.
                    acc += h_a.get(a, j) as f64 * neg_l_entry(kind, m, s.block.get(a, i), d0);
                }
                beta * h.get(i, j) as f64 + acc
            })
            .collect();
        target.row_mut(j).copy_from_slice(&row);
    }
    ridge_solve(xk, &target, ridge)
}
