//! Per-pixel multi-class cross-entropy with optional class weights.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fragment::{FragmentStack, Storage};
use crate::map::Map;
use crate::scalar::Scalar;

/// Ground-truth class index per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelImage {
    rows: usize,
    cols: usize,
    labels: Vec<u16>,
    class_count: usize,
}

impl LabelImage {
    pub fn new(rows: usize, cols: usize, labels: Vec<u16>, class_count: usize) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(Error::shape("label image length does not match dimensions"));
        }
        if class_count == 0 {
            return Err(Error::invalid("class count must be >= 1"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= class_count) {
            return Err(Error::invalid(format!(
                "label {} exceeds class count {}",
                bad, class_count
            )));
        }
        Ok(LabelImage {
            rows,
            cols,
            labels,
            class_count,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.cols + col] as usize
    }

    /// Pixel count per class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut hist = vec![0usize; self.class_count];
        for &l in &self.labels {
            hist[l as usize] += 1;
        }
        hist
    }
}

/// Per-pixel argmax over a stack of class probability maps; ties go to the
/// lowest class index.
pub fn argmax_labels<S: Scalar>(probs: &[Map<S>]) -> Result<LabelImage> {
    let first = probs
        .first()
        .ok_or_else(|| Error::invalid("need at least one probability map"))?;
    let (rows, cols) = (first.rows(), first.cols());
    if probs.iter().any(|m| m.rows() != rows || m.cols() != cols) {
        return Err(Error::shape("probability maps must share dimensions"));
    }
    let mut labels = Vec::with_capacity(rows * cols);
    for p in 0..rows * cols {
        let mut best = 0usize;
        for (ch, map) in probs.iter().enumerate().skip(1) {
            if map.values()[p] > probs[best].values()[p] {
                best = ch;
            }
        }
        labels.push(best as u16);
    }
    LabelImage::new(rows, cols, labels, probs.len())
}

/// Numerically stable softmax, in place. Shared by the dense path, the loss
/// and the patch oracle so all three see bit-identical probabilities.
pub fn softmax_in_place<S: Scalar>(values: &mut [S]) {
    let mut max = values[0];
    for v in &values[1..] {
        max = max.maximum(*v);
    }
    let mut sum = S::ZERO;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in values.iter_mut() {
        *v = *v / sum;
    }
}

/// Weighted multi-class cross-entropy over a fragmented logit storage.
///
/// Every fragment position is mapped through its lineage to a full-resolution
/// pixel; positions that fall outside the target image (planner overshoot)
/// contribute nothing. For a covered pixel with true class `t` the
/// contribution is `-w_t ln p_t`; the loss is the mean over all pixels and
/// the returned delta, `w_t (p - onehot(t)) / n_pixels`, sits at the fragment
/// position that produced the pixel.
///
/// Errors if the covered positions do not tile the target exactly once; that
/// would mean the storage does not belong to a correctly planned pass.
pub fn mcce_loss_and_delta<S: Scalar>(
    logits: &Storage<S>,
    target: &LabelImage,
    class_weights: &[S],
) -> Result<(S, Storage<S>)> {
    let n_classes = class_weights.len();
    if logits.n_maps() != n_classes {
        return Err(Error::shape(format!(
            "loss expects {} logit channels, storage has {}",
            n_classes,
            logits.n_maps()
        )));
    }
    if class_weights.iter().any(|w| !(*w > S::ZERO)) {
        return Err(Error::invalid("class weights must be positive"));
    }
    if target.class_count() > n_classes {
        return Err(Error::invalid(format!(
            "target has {} classes but only {} weights given",
            target.class_count(),
            n_classes
        )));
    }

    let n_pixels = target.rows() * target.cols();
    let inv_n = S::ONE / S::from_usize(n_pixels);
    let mut covered = vec![false; n_pixels];
    let mut total = S::ZERO;
    let mut delta_fragments = Vec::with_capacity(logits.n_fragments());
    let mut probs = vec![S::ZERO; n_classes];

    for frag in logits.fragments() {
        let (rows, cols) = (frag.rows(), frag.cols());
        let mut delta_maps: Vec<Map<S>> = (0..n_classes).map(|_| Map::zeros(rows, cols)).collect();
        for m in 0..rows {
            for n in 0..cols {
                let (u, v) = frag.lineage().to_pixel(m, n);
                if u >= target.rows() || v >= target.cols() {
                    continue;
                }
                let slot = &mut covered[u * target.cols() + v];
                if *slot {
                    return Err(Error::internal(format!(
                        "pixel ({u}, {v}) produced by more than one fragment position"
                    )));
                }
                *slot = true;

                for (ch, p) in probs.iter_mut().enumerate() {
                    *p = frag.map(ch).at(m, n);
                }
                softmax_in_place(&mut probs);
                let t = target.at(u, v);
                let w = class_weights[t];
                total += -(w * probs[t].ln());
                for (ch, p) in probs.iter().enumerate() {
                    let indicator = if ch == t { S::ONE } else { S::ZERO };
                    *delta_maps[ch].at_mut(m, n) = w * (*p - indicator) * inv_n;
                }
            }
        }
        delta_fragments.push(FragmentStack::new(delta_maps, frag.lineage().clone())?);
    }

    if let Some(missing) = covered.iter().position(|&c| !c) {
        return Err(Error::internal(format!(
            "pixel ({}, {}) not covered by any fragment position",
            missing / target.cols(),
            missing % target.cols()
        )));
    }

    Ok((total * inv_n, Storage::new(delta_fragments)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragment::OffsetLineage;

    fn logit_storage(maps: Vec<Map<f64>>) -> Storage<f64> {
        Storage::new(vec![
            FragmentStack::new(maps, OffsetLineage::empty()).unwrap()
        ])
        .unwrap()
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let logits = logit_storage(vec![Map::zeros(1, 1), Map::zeros(1, 1)]);
        let target = LabelImage::new(1, 1, vec![0], 2).unwrap();
        let (loss, delta) = mcce_loss_and_delta(&logits, &target, &[1.0, 1.0]).unwrap();
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
        assert!((delta.fragment(0).map(0).at(0, 0) - (-0.5)).abs() < 1e-15);
        assert!((delta.fragment(0).map(1).at(0, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn saturated_correct_pixel_has_zero_loss_and_delta() {
        // Large logit margin in favour of the true class.
        let logits = logit_storage(vec![
            Map::new(1, 1, vec![60.0]).unwrap(),
            Map::new(1, 1, vec![-60.0]).unwrap(),
        ]);
        let target = LabelImage::new(1, 1, vec![0], 2).unwrap();
        let (loss, delta) = mcce_loss_and_delta(&logits, &target, &[1.0, 1.0]).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(delta.fragment(0).map(0).at(0, 0).abs() < 1e-12);
        assert!(delta.fragment(0).map(1).at(0, 0).abs() < 1e-12);
    }

    #[test]
    fn class_weight_scales_loss_and_delta_linearly() {
        let logits = logit_storage(vec![
            Map::new(1, 1, vec![0.3]).unwrap(),
            Map::new(1, 1, vec![-0.2]).unwrap(),
        ]);
        let target = LabelImage::new(1, 1, vec![1], 2).unwrap();
        let (l1, d1) = mcce_loss_and_delta(&logits, &target, &[1.0, 1.5]).unwrap();
        let (l2, d2) = mcce_loss_and_delta(&logits, &target, &[1.0, 3.0]).unwrap();
        assert!((2.0 * l1 - l2).abs() < 1e-12);
        for ch in 0..2 {
            let a = d1.fragment(0).map(ch).at(0, 0);
            let b = d2.fragment(0).map(ch).at(0, 0);
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn label_out_of_range_rejected() {
        assert!(LabelImage::new(1, 2, vec![0, 2], 2).is_err());
        // Target with more classes than weights.
        let logits = logit_storage(vec![Map::zeros(1, 1), Map::zeros(1, 1)]);
        let target = LabelImage::new(1, 1, vec![0], 3).unwrap();
        assert!(mcce_loss_and_delta(&logits, &target, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn non_positive_weight_rejected() {
        let logits = logit_storage(vec![Map::zeros(1, 1), Map::zeros(1, 1)]);
        let target = LabelImage::new(1, 1, vec![0], 2).unwrap();
        assert!(mcce_loss_and_delta(&logits, &target, &[1.0, 0.0]).is_err());
        assert!(mcce_loss_and_delta(&logits, &target, &[-1.0, 1.0]).is_err());
    }

    #[test]
    fn loss_is_mean_over_pixels() {
        let logits = logit_storage(vec![Map::zeros(2, 2), Map::zeros(2, 2)]);
        let target = LabelImage::new(2, 2, vec![0, 1, 0, 1], 2).unwrap();
        let (loss, _) = mcce_loss_and_delta(&logits, &target, &[1.0, 1.0]).unwrap();
        assert!((loss - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn softmax_normalizes() {
        let mut v = [1.0f64, 2.0, 3.0];
        softmax_in_place(&mut v);
        let sum: f64 = v.iter().sum();
        assert!((sum - 1.0).abs() < 1e-15);
        assert!(v[2] > v[1] && v[1] > v[0]);
    }
}
