//! Fragments and the storage type that flows between layers.
//!
//! A pooling layer with factor `k` run densely over a whole image has `k*k`
//! valid alignments per spatial dimension pair. Each alignment yields its own
//! downsampled grid; we keep all of them as separate *fragments*. A fragment
//! remembers the `(row offset, col offset, factor)` of every pooling layer it
//! passed through — its lineage — which is enough to map any position inside
//! the fragment back to the full-resolution pixel it represents.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::map::Map;
use crate::scalar::Scalar;

/// One pooling layer traversal: which alignment this fragment took.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolStep {
    pub row_offset: usize,
    pub col_offset: usize,
    pub factor: usize,
}

/// Ordered pooling offsets accumulated by a fragment, outermost layer first.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OffsetLineage {
    steps: Vec<PoolStep>,
}

impl OffsetLineage {
    pub fn empty() -> Self {
        OffsetLineage { steps: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn steps(&self) -> &[PoolStep] {
        &self.steps
    }

    /// Copy of this lineage with one more pooling step appended.
    pub fn extended(&self, step: PoolStep) -> Result<Self> {
        if step.factor == 0 {
            return Err(Error::invalid("pooling factor must be >= 1"));
        }
        if step.row_offset >= step.factor || step.col_offset >= step.factor {
            return Err(Error::invalid(format!(
                "pooling offset ({}, {}) outside factor {}",
                step.row_offset, step.col_offset, step.factor
            )));
        }
        let mut steps = Vec::with_capacity(self.steps.len() + 1);
        steps.extend_from_slice(&self.steps);
        steps.push(step);
        Ok(OffsetLineage { steps })
    }

    /// Map a within-fragment position to the full-resolution grid.
    ///
    /// With steps `(r_1,k_1) .. (r_L,k_L)` the row is
    /// `r_1 + k_1*(r_2 + k_2*( ... (r_L + k_L*m) ... ))`, and the column is
    /// built the same way from the column offsets. With an empty lineage this
    /// is the identity.
    pub fn to_pixel(&self, m: usize, n: usize) -> (usize, usize) {
        let row = self
            .steps
            .iter()
            .rev()
            .fold(m, |acc, s| s.row_offset + s.factor * acc);
        let col = self
            .steps
            .iter()
            .rev()
            .fold(n, |acc, s| s.col_offset + s.factor * acc);
        (row, col)
    }

    /// Full-resolution coordinate of fragment position (0, 0).
    pub fn composite_offset(&self) -> (usize, usize) {
        self.to_pixel(0, 0)
    }

    /// Product of all pooling factors: the step between adjacent fragment
    /// positions measured in full-resolution pixels.
    pub fn stride(&self) -> usize {
        self.steps.iter().map(|s| s.factor).product()
    }
}

/// Free-function form of [`OffsetLineage::to_pixel`].
pub fn lineage_to_pixel(lineage: &OffsetLineage, m: usize, n: usize) -> (usize, usize) {
    lineage.to_pixel(m, n)
}

/// A stack of equally sized maps (one per channel) tagged with its lineage.
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentStack<S> {
    maps: Vec<Map<S>>,
    lineage: OffsetLineage,
}

impl<S: Scalar> FragmentStack<S> {
    pub fn new(maps: Vec<Map<S>>, lineage: OffsetLineage) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::invalid("fragment needs at least one map"))?;
        let (rows, cols) = (first.rows(), first.cols());
        if maps.iter().any(|m| m.rows() != rows || m.cols() != cols) {
            return Err(Error::shape("fragment maps must all share dimensions"));
        }
        Ok(FragmentStack { maps, lineage })
    }

    pub fn maps(&self) -> &[Map<S>] {
        &self.maps
    }

    pub fn map(&self, channel: usize) -> &Map<S> {
        &self.maps[channel]
    }

    pub fn n_maps(&self) -> usize {
        self.maps.len()
    }

    pub fn rows(&self) -> usize {
        self.maps[0].rows()
    }

    pub fn cols(&self) -> usize {
        self.maps[0].cols()
    }

    pub fn lineage(&self) -> &OffsetLineage {
        &self.lineage
    }

    pub fn convert<T: Scalar>(&self) -> FragmentStack<T> {
        FragmentStack {
            maps: self.maps.iter().map(|m| m.convert()).collect(),
            lineage: self.lineage.clone(),
        }
    }
}

/// Ordered collection of fragments: what one layer hands to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct Storage<S> {
    fragments: Vec<FragmentStack<S>>,
}

impl<S: Scalar> Storage<S> {
    /// Validates that all fragments agree on channel count and lineage depth.
    pub fn new(fragments: Vec<FragmentStack<S>>) -> Result<Self> {
        let first = fragments
            .first()
            .ok_or_else(|| Error::invalid("storage needs at least one fragment"))?;
        let n_maps = first.n_maps();
        let depth = first.lineage().len();
        for (i, f) in fragments.iter().enumerate() {
            if f.n_maps() != n_maps {
                return Err(Error::shape(format!(
                    "fragment {} has {} maps, expected {}",
                    i,
                    f.n_maps(),
                    n_maps
                )));
            }
            if f.lineage().len() != depth {
                return Err(Error::shape(format!(
                    "fragment {} has lineage depth {}, expected {}",
                    i,
                    f.lineage().len(),
                    depth
                )));
            }
        }
        Ok(Storage { fragments })
    }

    pub fn fragments(&self) -> &[FragmentStack<S>] {
        &self.fragments
    }

    pub fn fragment(&self, i: usize) -> &FragmentStack<S> {
        &self.fragments[i]
    }

    pub fn n_fragments(&self) -> usize {
        self.fragments.len()
    }

    pub fn n_maps(&self) -> usize {
        self.fragments[0].n_maps()
    }

    pub fn all_finite(&self) -> bool {
        self.fragments
            .iter()
            .all(|f| f.maps().iter().all(|m| m.all_finite()))
    }

    pub fn convert<T: Scalar>(&self) -> Storage<T> {
        Storage {
            fragments: self.fragments.iter().map(|f| f.convert()).collect(),
        }
    }
}

/// Wrap an input image as a storage with a single one-map fragment and an
/// empty lineage.
pub fn storage_from_image<S: Scalar>(image: Map<S>) -> Result<Storage<S>> {
    if image.rows() == 0 || image.cols() == 0 {
        return Err(Error::invalid("input image must be non-empty"));
    }
    let fragment = FragmentStack::new(vec![image], OffsetLineage::empty())?;
    Storage::new(vec![fragment])
}

/// Fragment count after pooling layers with the given factors: product of
/// squared factors.
pub fn expected_fragment_count(pool_factors: &[usize]) -> Result<usize> {
    if pool_factors.iter().any(|&k| k == 0) {
        return Err(Error::invalid("pooling factor must be >= 1"));
    }
    Ok(pool_factors.iter().map(|&k| k * k).product())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lineage(steps: &[(usize, usize, usize)]) -> OffsetLineage {
        let mut l = OffsetLineage::empty();
        for &(r, c, k) in steps {
            l = l
                .extended(PoolStep {
                    row_offset: r,
                    col_offset: c,
                    factor: k,
                })
                .unwrap();
        }
        l
    }

    /// Brute-force trace of the fragment decomposition: repeatedly take every
    /// `k`-aligned subgrid at the given offsets and report which original
    /// coordinate ends up at position `(m, n)` of the final subgrid.
    fn trace_original_coord(
        grid_rows: usize,
        grid_cols: usize,
        steps: &[(usize, usize, usize)],
        m: usize,
        n: usize,
    ) -> (usize, usize) {
        let mut coords: Vec<Vec<(usize, usize)>> = (0..grid_rows)
            .map(|r| (0..grid_cols).map(|c| (r, c)).collect())
            .collect();
        for &(r_off, c_off, k) in steps {
            let rows = coords.len();
            let cols = coords[0].len();
            let mut next: Vec<Vec<(usize, usize)>> = Vec::new();
            let mut r = r_off;
            while r < rows {
                let mut row = Vec::new();
                let mut c = c_off;
                while c < cols {
                    row.push(coords[r][c]);
                    c += k;
                }
                next.push(row);
                r += k;
            }
            coords = next;
        }
        coords[m][n]
    }

    #[test]
    fn storage_from_image_single_fragment() {
        let img = Map::from_fn(4, 4, |r, c| (r * 4 + c) as f64);
        let s = storage_from_image(img.clone()).unwrap();
        assert_eq!(s.n_fragments(), 1);
        assert_eq!(s.fragment(0).n_maps(), 1);
        assert_eq!(s.fragment(0).lineage().len(), 0);
        assert_eq!(s.fragment(0).map(0), &img);
    }

    #[test]
    fn storage_from_degenerate_image() {
        let img = Map::new(1, 1, vec![0.0f64]).unwrap();
        let s = storage_from_image(img).unwrap();
        assert_eq!(s.fragment(0).map(0).at(0, 0), 0.0);
    }

    #[test]
    fn storage_from_full_size_image() {
        let img = Map::<f64>::zeros(512, 512);
        let s = storage_from_image(img).unwrap();
        assert_eq!(s.n_fragments(), 1);
        assert_eq!(s.fragment(0).rows(), 512);
        assert_eq!(s.fragment(0).cols(), 512);
    }

    #[test]
    fn empty_image_rejected() {
        let img = Map::<f64>::zeros(0, 3);
        assert!(matches!(
            storage_from_image(img),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn fragment_counts() {
        assert_eq!(expected_fragment_count(&[2]).unwrap(), 4);
        assert_eq!(expected_fragment_count(&[]).unwrap(), 1);
        assert_eq!(expected_fragment_count(&[2, 2]).unwrap(), 16);
        assert!(expected_fragment_count(&[2, 0]).is_err());
    }

    #[test]
    fn lineage_identity_without_pooling() {
        assert_eq!(lineage(&[]).to_pixel(3, 5), (3, 5));
    }

    #[test]
    fn lineage_single_step() {
        let l = lineage(&[(1, 0, 2)]);
        assert_eq!(l.to_pixel(2, 0), (5, 0));
        // Independent trace through the actual offset decomposition.
        assert_eq!(trace_original_coord(8, 8, &[(1, 0, 2)], 2, 0), (5, 0));
    }

    #[test]
    fn lineage_two_steps() {
        let l = lineage(&[(0, 1, 2), (1, 0, 2)]);
        assert_eq!(l.to_pixel(0, 0), (2, 1));
        assert_eq!(
            trace_original_coord(8, 8, &[(0, 1, 2), (1, 0, 2)], 0, 0),
            (2, 1)
        );
    }

    #[test]
    fn lineage_matches_trace_exhaustively() {
        let steps = [(1, 0, 2), (0, 2, 3)];
        let l = lineage(&steps);
        for m in 0..2 {
            for n in 0..2 {
                assert_eq!(l.to_pixel(m, n), trace_original_coord(12, 12, &steps, m, n));
            }
        }
    }

    #[test]
    fn lineage_rejects_bad_offset() {
        let l = OffsetLineage::empty();
        assert!(l
            .extended(PoolStep {
                row_offset: 2,
                col_offset: 0,
                factor: 2
            })
            .is_err());
    }

    #[test]
    fn storage_rejects_mixed_channel_counts() {
        let f1 = FragmentStack::new(vec![Map::<f64>::zeros(2, 2)], OffsetLineage::empty()).unwrap();
        let f2 = FragmentStack::new(
            vec![Map::<f64>::zeros(2, 2), Map::<f64>::zeros(2, 2)],
            OffsetLineage::empty(),
        )
        .unwrap();
        assert!(Storage::new(vec![f1, f2]).is_err());
    }

    #[test]
    fn stride_is_product_of_factors() {
        assert_eq!(lineage(&[(0, 0, 2), (1, 1, 3)]).stride(), 6);
        assert_eq!(lineage(&[]).stride(), 1);
    }
}
