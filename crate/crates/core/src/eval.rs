//! Retrieval evaluation: ranked-list metrics at a cutoff and Hamming-ball
//! metrics at a radius.
//!
//! Rankings sort the whole database by ascending Hamming distance with
//! ties broken by ascending database index, so every metric is
//! deterministic. Zero-denominator corners (no relevant item in the top
//! R, all-zero ideal gain, empty ball) all evaluate to 0.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hashcore::{hamming, CodeMatrix};
use crate::pairwise::LabelData;

/// Full database ranking for one query, with aligned relevance.
#[derive(Debug, Clone)]
pub struct RankedList {
    /// Database indices, best match first.
    pub order: Vec<usize>,
    /// Hamming distances aligned with `order`.
    pub distances: Vec<usize>,
    /// Graded relevance aligned with `order`.
    pub relevance: Vec<f64>,
    /// Binary relevance aligned with `order`.
    pub flags: Vec<bool>,
}

/// Ranks the database against one packed query row. `relevance[i]` is the
/// graded relevance of database item i; the binary flag is relevance > 0.
pub fn rank(query: &[u64], db: &CodeMatrix, relevance: &[f64]) -> Result<RankedList> {
    if relevance.len() != db.n() {
        return Err(Error::InvalidArgument(format!(
            "relevance length {} does not match database size {}",
            relevance.len(),
            db.n()
        )));
    }
    let mut order: Vec<usize> = (0..db.n()).collect();
    let dist: Vec<usize> = (0..db.n())
        .map(|i| hamming(query, db.packed_row(i)))
        .collect();
    order.sort_by_key(|&i| (dist[i], i));
    let distances: Vec<usize> = order.iter().map(|&i| dist[i]).collect();
    let rel: Vec<f64> = order.iter().map(|&i| relevance[i]).collect();
    let flags: Vec<bool> = rel.iter().map(|&r| r > 0.0).collect();
    Ok(RankedList {
        order,
        distances,
        relevance: rel,
        flags,
    })
}

/// Average precision at cutoff R: mean of the precision values at the
/// relevant ranks within the top R; 0 when nothing relevant shows up.
pub fn average_precision(ranked: &RankedList, cutoff: usize) -> f64 {
    let top = cutoff.min(ranked.flags.len());
    let mut hits = 0usize;
    let mut sum = 0.0;
    for k in 0..top {
        if ranked.flags[k] {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

/// Normalized discounted cumulative gain at cutoff R. The gain of rank 1
/// is undiscounted and rank k ≥ 2 is discounted by log₂(k), so ranks 1
/// and 2 carry full weight. Returns 0 when the ideal gain is 0.
pub fn ndcg(ranked: &RankedList, cutoff: usize) -> f64 {
    let top = cutoff.min(ranked.relevance.len());
    let actual = dcg(ranked.relevance.iter().copied().take(top));
    let mut ideal_rels = ranked.relevance.clone();
    ideal_rels.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let ideal = dcg(ideal_rels.into_iter().take(top));
    if ideal == 0.0 {
        0.0
    } else {
        actual / ideal
    }
}

fn dcg(rels: impl Iterator<Item = f64>) -> f64 {
    rels.enumerate()
        .map(|(i, rel)| {
            if i == 0 {
                rel
            } else {
                rel / ((i + 1) as f64).log2()
            }
        })
        .sum()
}

/// Mean relevance of the database items within Hamming radius r of the
/// query; 0 when the ball is empty.
pub fn acg(query: &[u64], db: &CodeMatrix, relevance: &[f64], radius: usize) -> f64 {
    let mut count = 0usize;
    let mut sum = 0.0;
    for i in 0..db.n() {
        if hamming(query, db.packed_row(i)) <= radius {
            count += 1;
            sum += relevance[i];
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Precision and recall of the Hamming ball of radius r: relevant items
/// in the ball over the ball size, and over the total relevant count.
/// Empty denominators give 0.
pub fn precision_recall_at_radius(
    query: &[u64],
    db: &CodeMatrix,
    flags: &[bool],
    radius: usize,
) -> (f64, f64) {
    let mut ball = 0usize;
    let mut hits = 0usize;
    for i in 0..db.n() {
        if hamming(query, db.packed_row(i)) <= radius {
            ball += 1;
            if flags[i] {
                hits += 1;
            }
        }
    }
    let total_relevant = flags.iter().filter(|&&f| f).count();
    let precision = if ball == 0 {
        0.0
    } else {
        hits as f64 / ball as f64
    };
    let recall = if total_relevant == 0 {
        0.0
    } else {
        hits as f64 / total_relevant as f64
    };
    (precision, recall)
}

/// Average precision restricted to the ranked Hamming ball of radius r
/// (the "within radius" protocol); 0 when the ball is empty.
pub fn average_precision_within_radius(ranked: &RankedList, radius: usize) -> f64 {
    let ball = ranked.distances.partition_point(|&d| d <= radius);
    average_precision(ranked, ball)
}

/// Metric bundle averaged over a query set.
#[derive(Debug, Clone, Serialize)]
pub struct RetrievalMetrics {
    pub map: f64,
    pub ndcg: f64,
    pub acg: f64,
    pub precision: f64,
    pub recall: f64,
    pub cutoff: usize,
    pub radius: usize,
}

/// Per-cutoff curves (index k-1 holds the value at cutoff k) plus the
/// optional within-ball mean average precision.
#[derive(Debug, Clone, Serialize)]
pub struct EvalCurves {
    pub precision_at: Vec<f64>,
    pub recall_at: Vec<f64>,
    pub map_at_radius: f64,
}

/// Graded relevance of one query against every database item: the
/// common-label count in multi-label mode, the share-a-label flag
/// otherwise.
fn relevance_row(
    q_labels: &LabelData,
    db_labels: &LabelData,
    q: usize,
    multi_label: bool,
) -> Vec<f64> {
    (0..db_labels.len())
        .map(|i| {
            let common = crate::pairwise::LabelData::common_labels_between(
                q_labels.item(q),
                db_labels.item(i),
            );
            if multi_label {
                common as f64
            } else if common > 0 {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Evaluates a query set against a database: per-query AP@R, NDCG@R,
/// ACG within radius, and ball precision/recall, averaged over queries.
pub fn evaluate(
    queries: &CodeMatrix,
    db: &CodeMatrix,
    query_labels: &LabelData,
    db_labels: &LabelData,
    cutoff: usize,
    radius: usize,
    multi_label: bool,
) -> Result<RetrievalMetrics> {
    check_eval_inputs(queries, db, query_labels, db_labels, cutoff)?;
    let per_query: Vec<[f64; 5]> = (0..queries.n())
        .into_par_iter()
        .map(|q| {
            let rel = relevance_row(query_labels, db_labels, q, multi_label);
            let ranked = rank(queries.packed_row(q), db, &rel).expect("aligned by construction");
            let flags: Vec<bool> = rel.iter().map(|&r| r > 0.0).collect();
            let (prec, rec) =
                precision_recall_at_radius(queries.packed_row(q), db, &flags, radius);
            [
                average_precision(&ranked, cutoff),
                ndcg(&ranked, cutoff),
                acg(queries.packed_row(q), db, &rel, radius),
                prec,
                rec,
            ]
        })
        .collect();
    let nq = queries.n() as f64;
    let mut sums = [0.0f64; 5];
    for row in &per_query {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    Ok(RetrievalMetrics {
        map: sums[0] / nq,
        ndcg: sums[1] / nq,
        acg: sums[2] / nq,
        precision: sums[3] / nq,
        recall: sums[4] / nq,
        cutoff,
        radius,
    })
}

/// Mean precision@k and recall@k curves for k = 1..=cutoff, plus the
/// mean within-ball average precision at the given radius.
pub fn evaluate_curves(
    queries: &CodeMatrix,
    db: &CodeMatrix,
    query_labels: &LabelData,
    db_labels: &LabelData,
    cutoff: usize,
    radius: usize,
    multi_label: bool,
) -> Result<EvalCurves> {
    check_eval_inputs(queries, db, query_labels, db_labels, cutoff)?;
    let per_query: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..queries.n())
        .into_par_iter()
        .map(|q| {
            let rel = relevance_row(query_labels, db_labels, q, multi_label);
            let ranked = rank(queries.packed_row(q), db, &rel).expect("aligned by construction");
            let total_relevant = ranked.flags.iter().filter(|&&f| f).count();
            let mut prec = Vec::with_capacity(cutoff);
            let mut rec = Vec::with_capacity(cutoff);
            let mut hits = 0usize;
            for k in 1..=cutoff {
                if k <= ranked.flags.len() && ranked.flags[k - 1] {
                    hits += 1;
                }
                prec.push(hits as f64 / k as f64);
                rec.push(if total_relevant == 0 {
                    0.0
                } else {
                    hits as f64 / total_relevant as f64
                });
            }
            let map_ball = average_precision_within_radius(&ranked, radius);
            (prec, rec, map_ball)
        })
        .collect();
    let nq = queries.n() as f64;
    let mut precision_at = vec![0.0; cutoff];
    let mut recall_at = vec![0.0; cutoff];
    let mut map_ball = 0.0;
    for (p, r, mb) in &per_query {
        for (acc, v) in precision_at.iter_mut().zip(p) {
            *acc += v;
        }
        for (acc, v) in recall_at.iter_mut().zip(r) {
            *acc += v;
        }
        map_ball += mb;
    }
    precision_at.iter_mut().for_each(|v| *v /= nq);
    recall_at.iter_mut().for_each(|v| *v /= nq);
    Ok(EvalCurves {
        precision_at,
        recall_at,
        map_at_radius: map_ball / nq,
    })
}

fn check_eval_inputs(
    queries: &CodeMatrix,
    db: &CodeMatrix,
    query_labels: &LabelData,
    db_labels: &LabelData,
    cutoff: usize,
) -> Result<()> {
    if queries.bits() != db.bits() {
        return Err(Error::DimensionMismatch {
            op: "evaluate",
            lhs: (queries.n(), queries.bits()),
            rhs: (db.n(), db.bits()),
        });
    }
    if queries.n() != query_labels.len() || db.n() != db_labels.len() {
        return Err(Error::InvalidArgument(format!(
            "label counts ({}, {}) do not match code counts ({}, {})",
            query_labels.len(),
            db_labels.len(),
            queries.n(),
            db.n()
        )));
    }
    if cutoff == 0 {
        return Err(Error::InvalidArgument("cutoff must be >= 1".into()));
    }
    if queries.n() == 0 || db.n() == 0 {
        return Err(Error::InvalidArgument(
            "need at least one query and one database item".into(),
        ));
    }
    Ok(())
}
