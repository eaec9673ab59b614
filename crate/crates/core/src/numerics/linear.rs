//! Inputs to a linear projection and the gradients that come back out of it.
//!
//! The encoder only ever touches its input through `X · W` and `Xᵀ · G`, so
//! it accepts anything implementing [`RowOperand`]. The gradient it returns
//! for the input is kept factored as `G · Wᵀ`, which is all a structured
//! input (sparse features plus a broadcast term) needs to compute its own
//! parameter gradients without ever forming the dense `N × F` matrix.

use super::dense::{dot, DenseMatrix};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

pub trait RowOperand {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// `self · w`
    fn project(&self, w: &DenseMatrix) -> Result<DenseMatrix>;
    /// `selfᵀ · g`
    fn project_transpose(&self, g: &DenseMatrix) -> Result<DenseMatrix>;
    fn to_dense(&self) -> DenseMatrix;
}

impl RowOperand for DenseMatrix {
    fn rows(&self) -> usize {
        DenseMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        DenseMatrix::cols(self)
    }

    fn project(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        self.matmul(w)
    }

    fn project_transpose(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        self.transpose_matmul(g)
    }

    fn to_dense(&self) -> DenseMatrix {
        self.clone()
    }
}

impl RowOperand for CsrMatrix {
    fn rows(&self) -> usize {
        CsrMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        CsrMatrix::cols(self)
    }

    fn project(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        self.matmul_dense(w)
    }

    fn project_transpose(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        self.transpose_matmul_dense(g)
    }

    fn to_dense(&self) -> DenseMatrix {
        CsrMatrix::to_dense(self)
    }
}

/// Gradient with respect to an `N × F` input.
#[derive(Clone, Debug)]
pub enum InputGradient {
    Dense(DenseMatrix),
    /// `left · rightᵀ` with `left: N × r` and `right: F × r`.
    Factored {
        left: DenseMatrix,
        right: DenseMatrix,
    },
}

impl InputGradient {
    pub fn factored(left: DenseMatrix, right: DenseMatrix) -> Result<Self> {
        if left.cols() != right.cols() {
            return Err(Error::shape(
                "InputGradient::factored",
                left.cols(),
                right.cols(),
            ));
        }
        Ok(InputGradient::Factored { left, right })
    }

    pub fn shape(&self) -> (usize, usize) {
        match self {
            InputGradient::Dense(d) => d.shape(),
            InputGradient::Factored { left, right } => (left.rows(), right.rows()),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            InputGradient::Dense(d) => d.clone(),
            InputGradient::Factored { left, right } => left
                .matmul_transpose(right)
                .expect("factor shapes checked at construction"),
        }
    }

    pub fn into_dense(self) -> DenseMatrix {
        match self {
            InputGradient::Dense(d) => d,
            f => f.to_dense(),
        }
    }

    /// `Σ_{i,f} G[i,f] · X[i,f]` over the stored entries of `x`.
    pub fn inner_with_sparse(&self, x: &CsrMatrix) -> f64 {
        let mut acc = 0.0;
        for r in 0..x.rows() {
            let (cols, vals) = x.row(r);
            match self {
                InputGradient::Dense(d) => {
                    let row = d.row(r);
                    for (&c, &v) in cols.iter().zip(vals) {
                        acc += v * row[c];
                    }
                }
                InputGradient::Factored { left, right } => {
                    let l = left.row(r);
                    for (&c, &v) in cols.iter().zip(vals) {
                        acc += v * dot(l, right.row(c));
                    }
                }
            }
        }
        acc
    }

    /// `Σ_i G[i, f]` for every column `f`.
    pub fn column_sums(&self) -> Vec<f64> {
        match self {
            InputGradient::Dense(d) => d.column_sums(),
            InputGradient::Factored { left, right } => right
                .matvec(&left.column_sums())
                .expect("factor shapes checked at construction"),
        }
    }

    /// `Σ_f G[i, f]` for every row `i`.
    pub fn row_sums(&self) -> Vec<f64> {
        match self {
            InputGradient::Dense(d) => d.row_sums(),
            InputGradient::Factored { left, right } => left
                .matvec(&right.column_sums())
                .expect("factor shapes checked at construction"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factored_reductions_match_dense() {
        let left = DenseMatrix::from_fn(4, 2, |r, c| (r as f64) - 0.5 * c as f64);
        let right = DenseMatrix::from_fn(3, 2, |r, c| 1.0 + (r * c) as f64);
        let g = InputGradient::factored(left, right).unwrap();
        let dense = InputGradient::Dense(g.to_dense());
        let x = CsrMatrix::from_dense(&DenseMatrix::from_fn(4, 3, |r, c| {
            ((r + c) % 2) as f64 * 1.5
        }));
        assert!((g.inner_with_sparse(&x) - dense.inner_with_sparse(&x)).abs() < 1e-12);
        for (a, b) in g.column_sums().iter().zip(dense.column_sums()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in g.row_sums().iter().zip(dense.row_sums()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
