//! Binary hash code learning from pairwise supervision.
//!
//! The library learns compact ±1 codes whose pairwise products approximate
//! a scaled label-similarity matrix, by directly updating the discrete
//! codes: batch by batch with whole-row sign updates ([`sdh`]), or
//! greedily one bit at a time ([`gsdh`]), which also minimizes other
//! pairwise losses (squared distance-to-target, squared hinge) through a
//! per-bit reduction. Out-of-sample queries are encoded by a linear
//! projection over anchor-kernel features, and retrieval is evaluated
//! with ranked-list and Hamming-ball metrics over bit-packed codes.
//!
//! | Module | What it holds |
//! |--------|---------------|
//! | [`pairwise`] | anchor similarity blocks from single/multi-label data |
//! | [`kernel`] | anchor RBF feature map with centered responses |
//! | [`hashcore`] | ±1 / bit-packed dual code storage, popcount distance |
//! | [`sdh`] | batch-sequential whole-row code learner |
//! | [`gsdh`] | greedy per-bit learner and the pairwise-loss framework |
//! | [`encode`] | hash models, linear and least-squares query encoders |
//! | [`eval`] | AP/NDCG at a cutoff, ACG and precision/recall in a ball |
//! | [`data`] | dataset files, model/code persistence, synthetic clusters |
//! | [`linalg`] | dense matrices, symmetric eigensolver, ridge solves |
//! | [`selfcheck`] | identity and exhaustive-search verification battery |
//!
//! Everything seeded is reproducible byte-for-byte, independent of thread
//! count.

pub mod data;
pub mod encode;
pub mod error;
pub mod eval;
pub mod gsdh;
pub mod hashcore;
pub mod kernel;
pub mod linalg;
pub mod pairwise;
pub mod rng;
pub mod sdh;
pub mod selfcheck;

pub use error::{Error, Result};
