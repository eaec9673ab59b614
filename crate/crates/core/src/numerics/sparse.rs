use serde::{Deserialize, Serialize};

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Binary, symmetric, self-looped neighbor lists in compressed-row form.
///
/// Every row is sorted and free of duplicates, `(i, j)` implies `(j, i)`, and
/// `(i, i)` is present exactly once for every node. The only way to build one
/// is through [`SparseAdjacency::from_edges`], which enforces all of that.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseAdjacency {
    node_count: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
}

impl SparseAdjacency {
    /// Builds the symmetrized, deduplicated, self-looped adjacency of an edge
    /// list. Direction and multiplicity of the input edges are discarded.
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut rows: Vec<Vec<usize>> = (0..node_count).map(|i| vec![i]).collect();
        for &(a, b) in edges {
            if a >= node_count || b >= node_count {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) out of range for {node_count} nodes"
                )));
            }
            rows[a].push(b);
            rows[b].push(a);
        }
        let mut row_offsets = Vec::with_capacity(node_count + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            col_indices.extend(row);
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            node_count,
            row_offsets,
            col_indices,
        })
    }

    /// Every stored `(i, j)` pair, self-loops included.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.node_count).flat_map(move |i| self.neighbors(i).iter().map(move |&j| (i, j)))
    }

    /// Rebuilding from the stored pairs returns an identical structure.
    pub fn symmetrized(&self) -> Self {
        let edges: Vec<_> = self.edges().collect();
        Self::from_edges(self.node_count, &edges).expect("stored edges are in range")
    }

    /// Relabels nodes so that node `i` of the result is node `order[i]` of `self`,
    /// matching [`DenseMatrix::gather_rows`] with the same `order`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.node_count {
            return Err(Error::shape(
                "SparseAdjacency::permuted",
                self.node_count,
                order.len(),
            ));
        }
        let mut new_index = vec![usize::MAX; self.node_count];
        for (new, &old) in order.iter().enumerate() {
            if old >= self.node_count || new_index[old] != usize::MAX {
                return Err(Error::InvalidArgument("order is not a permutation".into()));
            }
            new_index[old] = new;
        }
        let edges: Vec<_> = self
            .edges()
            .map(|(i, j)| (new_index[i], new_index[j]))
            .collect();
        Self::from_edges(self.node_count, &edges)
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Range of positions of row `i` in [`Self::col_indices`]. Per-edge arrays
    /// (attention weights and the like) are laid out in this order.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.row_offsets[i]..self.row_offsets[i + 1]
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    /// Number of stored directed pairs, self-loops included.
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    /// Unordered pairs `{i, j}` with `i != j`.
    pub fn undirected_edge_count(&self) -> usize {
        (self.nnz() - self.node_count) / 2
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors(i).binary_search(&j).is_ok()
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges().all(|(i, j)| self.contains(j, i))
    }

    pub fn has_all_self_loops(&self) -> bool {
        (0..self.node_count).all(|i| self.neighbors(i).iter().filter(|&&j| j == i).count() == 1)
    }

    pub fn rows_sorted_and_unique(&self) -> bool {
        (0..self.node_count).all(|i| self.neighbors(i).windows(2).all(|w| w[0] < w[1]))
    }

    /// Dense 0/1 matrix, for tests and small oracles.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.node_count, self.node_count);
        for (i, j) in self.edges() {
            m.set(i, j, 1.0);
        }
        m
    }
}

/// General sparse matrix in compressed-row form. Used for the bag-of-words
/// node features, which are overwhelmingly zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut row_offsets = Vec::with_capacity(m.rows() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for r in 0..m.rows() {
            for (c, &v) in m.row(r).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            rows: m.rows(),
            cols: m.cols(),
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Builds from per-row `(column, value)` lists. Columns in each row must be
    /// strictly increasing; zero values are dropped.
    pub fn from_row_entries(cols: usize, rows: &[Vec<(usize, f64)>]) -> Result<Self> {
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for (r, entries) in rows.iter().enumerate() {
            let mut prev: Option<usize> = None;
            for &(c, v) in entries {
                if c >= cols || prev.is_some_and(|p| p >= c) {
                    return Err(Error::InvalidArgument(format!(
                        "row {r}: column {c} out of order or out of range ({cols} columns)"
                    )));
                }
                prev = Some(c);
                if v != 0.0 {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                m.set(r, c, v);
            }
        }
        m
    }

    /// Same sparsity pattern with each stored value replaced by `f(value)`.
    /// Entries mapped to zero are dropped.
    pub fn map_values(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        let mut row_offsets = Vec::with_capacity(self.rows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_offsets.push(0);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let nv = f(v);
                if nv != 0.0 {
                    col_indices.push(c);
                    values.push(nv);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            rows: self.rows,
            cols: self.cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Each row scaled to unit L1 norm; all-zero rows are left as they are.
    pub fn row_normalized(&self) -> Self {
        let mut out = self.clone();
        for r in 0..self.rows {
            let range = self.row_offsets[r]..self.row_offsets[r + 1];
            let norm: f64 = self.values[range.clone()].iter().map(|v| v.abs()).sum();
            if norm > 0.0 {
                out.values[range].iter_mut().for_each(|v| *v /= norm);
            }
        }
        out
    }

    /// `out[i] = self[order[i]]`
    pub fn gather_rows(&self, order: &[usize]) -> Self {
        let mut row_offsets = Vec::with_capacity(order.len() + 1);
        let mut col_indices = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        row_offsets.push(0);
        for &r in order {
            let (cols, vals) = self.row(r);
            col_indices.extend_from_slice(cols);
            values.extend_from_slice(vals);
            row_offsets.push(col_indices.len());
        }
        Self {
            rows: order.len(),
            cols: self.cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// `self · w`
    pub fn matmul_dense(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        if w.rows() != self.cols {
            return Err(Error::shape(
                "CsrMatrix::matmul_dense",
                format!("rhs with {} rows", self.cols),
                w.rows(),
            ));
        }
        let mut out = DenseMatrix::zeros(self.rows, w.cols());
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let out_row = out.row_mut(r);
            for (&c, &v) in cols.iter().zip(vals) {
                super::dense::axpy(v, w.row(c), out_row);
            }
        }
        Ok(out)
    }

    /// `selfᵀ · g`
    pub fn transpose_matmul_dense(&self, g: &DenseMatrix) -> Result<DenseMatrix> {
        if g.rows() != self.rows {
            return Err(Error::shape(
                "CsrMatrix::transpose_matmul_dense",
                format!("rhs with {} rows", self.rows),
                g.rows(),
            ));
        }
        let mut out = DenseMatrix::zeros(self.cols, g.cols());
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let g_row = g.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                super::dense::axpy(v, g_row, out.row_mut(c));
            }
        }
        Ok(out)
    }

    /// Column-wise maximum over all rows, implicit zeros included, together
    /// with the first row index (in row order) attaining it.
    pub fn column_max(&self) -> Result<(Vec<f64>, Vec<usize>)> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidArgument(
                "max pooling over an empty matrix".into(),
            ));
        }
        let mut best = vec![f64::NEG_INFINITY; self.cols];
        let mut best_row = vec![usize::MAX; self.cols];
        // prefix[c] = number of leading rows 0..k that store column c, so the
        // first implicit zero of column c sits at row prefix[c].
        let mut prefix = vec![0usize; self.cols];
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                if prefix[c] == r {
                    prefix[c] = r + 1;
                }
                if v > best[c] {
                    best[c] = v;
                    best_row[c] = r;
                }
            }
        }
        for c in 0..self.cols {
            let first_zero = prefix[c];
            if first_zero < self.rows
                && (0.0 > best[c] || (0.0 == best[c] && first_zero < best_row[c]))
            {
                best[c] = 0.0;
                best_row[c] = first_zero;
            }
        }
        Ok((best, best_row))
    }

    pub fn column_mean(&self) -> Result<Vec<f64>> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidArgument(
                "average pooling over an empty matrix".into(),
            ));
        }
        let mut sums = vec![0.0; self.cols];
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                sums[c] += v;
            }
        }
        let n = self.rows as f64;
        Ok(sums.into_iter().map(|s| s / n).collect())
    }

    /// Per-row maximum over all columns (implicit zeros included) and its
    /// first column index.
    pub fn row_max(&self) -> Result<(Vec<f64>, Vec<usize>)> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidArgument(
                "max pooling over an empty matrix".into(),
            ));
        }
        let mut best = Vec::with_capacity(self.rows);
        let mut arg = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            let mut b = f64::NEG_INFINITY;
            let mut a = usize::MAX;
            for (&c, &v) in cols.iter().zip(vals) {
                if v > b {
                    b = v;
                    a = c;
                }
            }
            // first column not stored in this row
            let first_zero = cols
                .iter()
                .enumerate()
                .find(|&(k, &c)| k != c)
                .map_or(cols.len(), |(k, _)| k);
            if first_zero < self.cols && (0.0 > b || (0.0 == b && first_zero < a)) {
                b = 0.0;
                a = first_zero;
            }
            best.push(b);
            arg.push(a);
        }
        Ok((best, arg))
    }

    pub fn row_mean(&self) -> Result<Vec<f64>> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidArgument(
                "average pooling over an empty matrix".into(),
            ));
        }
        let n = self.cols as f64;
        Ok((0..self.rows)
            .map(|r| self.row(r).1.iter().sum::<f64>() / n)
            .collect())
    }
}
