//! Single 2D feature map, stored row-major.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One 2D grid of activations. Values are stored row-major; all indexing in
/// the crate is `(row, col)`.
///
/// A map may be empty (zero rows or columns): pooling a fragment whose extent
/// is not much larger than the pooling factor legitimately leaves nothing for
/// some offsets. Maps built from images are always non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Map<S> {
    rows: usize,
    cols: usize,
    values: Vec<S>,
}

impl<S: Scalar> Map<S> {
    pub fn new(rows: usize, cols: usize, values: Vec<S>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::shape(format!(
                "map {}x{} needs {} values, got {}",
                rows,
                cols,
                rows * cols,
                values.len()
            )));
        }
        Ok(Map { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Map {
            rows,
            cols,
            values: vec![S::ZERO; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                values.push(f(r, c));
            }
        }
        Map { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> S {
        debug_assert!(row < self.rows && col < self.cols);
        self.values[row * self.cols + col]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut S {
        debug_assert!(row < self.rows && col < self.cols);
        &mut self.values[row * self.cols + col]
    }

    /// One full row as a slice.
    #[inline]
    pub fn row(&self, row: usize) -> &[S] {
        &self.values[row * self.cols..(row + 1) * self.cols]
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Element-wise copy into a possibly different scalar type.
    pub fn convert<T: Scalar>(&self) -> Map<T> {
        Map {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| T::from_f64(v.to_f64())).collect(),
        }
    }
}
