//! Light graph convolution over the user–item bipartite graph.
//!
//! Nodes `0..m` are users and `m..m+n` are items. Propagation is linear,
//! `E⁽ᵏ⁺¹⁾ = Ã E⁽ᵏ⁾` with `Ã = D^{-1/2} A D^{-1/2}`, and the readout is the
//! mean of layers `0..=L`.

use crate::data::InteractionDataset;
use crate::error::TrainError;
use crate::matrix::{axpy, Matrix};

/// Symmetric normalized adjacency in CSR form.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    num_users: usize,
    num_items: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_dataset(dataset: &InteractionDataset) -> Self {
        let (m, n) = (dataset.num_users(), dataset.num_items());
        let mut degree = vec![0usize; m + n];
        let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); m + n];
        for u in 0..m {
            for &i in dataset.train_items(u) {
                neighbours[u].push(m + i);
                neighbours[m + i].push(u);
                degree[u] += 1;
                degree[m + i] += 1;
            }
        }
        let mut row_ptr = Vec::with_capacity(m + n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for (node, nbrs) in neighbours.iter_mut().enumerate() {
            nbrs.sort_unstable();
            for &other in nbrs.iter() {
                col_idx.push(other);
                values.push(1.0 / ((degree[node] * degree[other]) as f64).sqrt());
            }
            row_ptr.push(col_idx.len());
        }
        NormalizedAdjacency {
            num_users: m,
            num_items: n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of row `node` as `(column, weight)`.
    pub fn row(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[node]..self.row_ptr[node + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn to_dense(&self) -> Matrix {
        let mut out = Matrix::zeros(self.num_nodes(), self.num_nodes());
        for r in 0..self.num_nodes() {
            for (c, w) in self.row(r) {
                out.set(r, c, w);
            }
        }
        out
    }

    /// `Ã · x`.
    pub fn multiply(&self, x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for r in 0..self.num_nodes() {
            let dst = out.row_mut(r);
            for (c, w) in self.row(r) {
                axpy(w, x.row(c), dst);
            }
        }
        out
    }

    /// `(1/(L+1)) Σ_{k=0..L} Ãᵏ x`. Because `Ã` is symmetric this is also the
    /// adjoint used to pull gradients back to the base embeddings.
    pub fn layer_mean(&self, x: &Matrix, num_layers: usize) -> Result<Matrix, TrainError> {
        if x.rows() != self.num_nodes() {
            return Err(TrainError::DimensionMismatch(format!(
                "adjacency has {} nodes, embeddings have {} rows",
                self.num_nodes(),
                x.rows()
            )));
        }
        let mut acc = x.clone();
        let mut current = x.clone();
        for _ in 0..num_layers {
            current = self.multiply(&current);
            acc.add_scaled(&current, 1.0);
        }
        acc.scale(1.0 / (num_layers as f64 + 1.0));
        Ok(acc)
    }
}
