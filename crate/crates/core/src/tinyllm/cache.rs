use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::attention::{attend, AttentionOutput};

/// Keys and values of one layer, one row per cached position.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache {
    keys: Matrix,
    values: Matrix,
}

impl LayerCache {
    pub fn new(width: usize) -> Self {
        Self {
            keys: Matrix::zeros(0, width),
            values: Matrix::zeros(0, width),
        }
    }

    pub fn from_parts(keys: Matrix, values: Matrix) -> Result<Self> {
        if keys.rows() != values.rows() || keys.cols() != values.cols() {
            return Err(Error::InvalidDimensions(format!(
                "keys {}x{} vs values {}x{}",
                keys.rows(),
                keys.cols(),
                values.rows(),
                values.cols()
            )));
        }
        Ok(Self { keys, values })
    }

    pub fn len(&self) -> usize {
        self.keys.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.rows() == 0
    }

    pub fn keys(&self) -> &Matrix {
        &self.keys
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn append(&mut self, key: &[f32], value: &[f32]) {
        self.keys.push_row(key);
        self.values.push_row(value);
    }

    /// Copies of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            keys: self.keys.select_rows(rows),
            values: self.values.select_rows(rows),
        }
    }

    pub fn attend(&self, query: &[f32], heads: usize) -> AttentionOutput {
        attend(query, &self.keys, &self.values, heads, None)
    }
}

/// One decoding session's caches for every layer plus the position the next
/// token will occupy. After pruning the position keeps counting from the
/// original sequence length, not from the cache length.
#[derive(Debug, Clone, PartialEq)]
pub struct KvCaches {
    pub layers: Vec<LayerCache>,
    pub next_position: usize,
}

impl KvCaches {
    pub fn new(n_layers: usize, width: usize) -> Self {
        Self {
            layers: (0..n_layers).map(|_| LayerCache::new(width)).collect(),
            next_position: 0,
        }
    }

    /// Common cache length; errors if the layers disagree.
    pub fn len(&self) -> Result<usize> {
        let lens: Vec<usize> = self.layers.iter().map(LayerCache::len).collect();
        match lens.first() {
            Some(&first) if lens.iter().all(|&l| l == first) => Ok(first),
            None => Ok(0),
            _ => Err(Error::CacheMismatch(lens)),
        }
    }

    pub fn is_empty(&self) -> Result<bool> {
        self.len().map(|n| n == 0)
    }
}
