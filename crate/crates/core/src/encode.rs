//! Out-of-sample query encoding.

use crate::error::{Error, Result};
use crate::hashcore::{sgn_matrix, CodeMatrix};
use crate::kernel::{self, KernelMap};
use crate::linalg::{ridge_solve, Matrix};

/// Which procedure produced the projection held by a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderMode {
    /// Projection fitted by the code learner's closed form.
    Linear,
    /// Projection refitted by least squares on the learned codes.
    LeastSquares,
}

/// Everything needed to encode a query: the m×p projection, the kernel
/// map applied to raw features (absent when callers feed pre-kernelized
/// features), and the scale parameters the projection was fitted under.
#[derive(Debug, Clone)]
pub struct HashModel {
    pub projection: Matrix,
    pub kernel: Option<KernelMap>,
    pub lambda: f64,
    pub beta: f64,
    pub mode: EncoderMode,
}

impl HashModel {
    pub fn bits(&self) -> usize {
        self.projection.rows()
    }

    /// Attaches the kernel map used to lift raw query features.
    pub fn with_kernel(mut self, kernel: KernelMap) -> HashModel {
        self.kernel = Some(kernel);
        self
    }

    /// Replaces the projection with a least-squares refit on learned
    /// codes: W = Hᵀ·X(XᵀX + ridge·I)⁻¹.
    pub fn with_least_squares_encoder(
        &self,
        codes: &CodeMatrix,
        features: &Matrix,
        ridge: f64,
    ) -> Result<HashModel> {
        let w = least_squares_projection(codes, features, ridge)?;
        Ok(HashModel {
            projection: w,
            kernel: self.kernel.clone(),
            lambda: self.lambda,
            beta: self.beta,
            mode: EncoderMode::LeastSquares,
        })
    }
}

/// Encodes queries as sgn(φ(q)·Aᵀ) with the sign-of-zero = +1 convention.
/// `q` holds raw features when the model carries a kernel map, otherwise
/// features already in the projection's input space.
pub fn encode_linear(model: &HashModel, q: &Matrix) -> Result<CodeMatrix> {
    let feats = match &model.kernel {
        Some(map) => kernel::apply(map, q)?,
        None => q.clone(),
    };
    if feats.cols() != model.projection.cols() {
        return Err(Error::DimensionMismatch {
            op: "encode",
            lhs: (feats.rows(), feats.cols()),
            rhs: (model.projection.rows(), model.projection.cols()),
        });
    }
    let projected = feats.matmul(&model.projection.transpose())?;
    sgn_matrix(&projected)
}

/// Least-squares projection fitted on learned codes:
/// W = Hᵀ·X(XᵀX + ridge·I)⁻¹, shaped m×d.
pub fn least_squares_projection(
    codes: &CodeMatrix,
    features: &Matrix,
    ridge: f64,
) -> Result<Matrix> {
    if codes.n() != features.rows() {
        return Err(Error::DimensionMismatch {
            op: "least_squares_projection",
            lhs: (codes.n(), codes.bits()),
            rhs: (features.rows(), features.cols()),
        });
    }
    let ht = codes.to_matrix().transpose();
    ridge_solve(features, &ht, ridge)
}
