//! Declarative network architecture and its patch-geometry validation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::conv::Activation;
use crate::error::{Error, Result};

/// One layer of an architecture description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        k_rows: usize,
        k_cols: usize,
        n_out: usize,
        activation: Activation,
    },
    Mpf {
        k: usize,
    },
    /// Fully connected head: hidden layer sizes, then a linear layer with one
    /// output per class. `hidden_activation` applies to the hidden layers.
    FcHead {
        hidden: Vec<usize>,
        classes: usize,
        hidden_activation: Activation,
    },
}

/// Network architecture: the classifier window and an ordered layer list
/// ending in exactly one fully connected head.
///
/// In patch mode the window must shrink to a 1x1 extent at the head, with
/// pooling layers dividing the extent exactly; architectures that do not are
/// rejected rather than silently floored. Even window sizes are accepted; the
/// window center is then taken at offset `(window - 1) / 2` (rounded down).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub window_rows: usize,
    pub window_cols: usize,
    pub layers: Vec<LayerSpec>,
}

/// Outcome of validating an [`ArchSpec`]: the patch-mode extent after every
/// layer, and the first failure if there is one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeometryReport {
    /// `(layer index, rows, cols, channels)` after each successfully applied layer.
    pub steps: Vec<(usize, usize, usize, usize)>,
    pub failure: Option<(usize, String)>,
}

impl GeometryReport {
    pub fn is_valid(&self) -> bool {
        self.failure.is_none()
    }
}

impl ArchSpec {
    /// Walk the layer list in patch mode and report the shape chain.
    pub fn validate(&self) -> GeometryReport {
        let mut steps = Vec::new();
        macro_rules! fail {
            ($idx:expr, $msg:expr) => {
                return GeometryReport {
                    steps,
                    failure: Some(($idx, $msg)),
                }
            };
        }

        if self.window_rows == 0 || self.window_cols == 0 {
            fail!(0, String::from("window must be at least 1x1"));
        }
        if self.layers.is_empty() {
            fail!(0, String::from("architecture has no layers"));
        }

        let (mut rows, mut cols) = (self.window_rows, self.window_cols);
        let mut channels = 1usize;
        for (idx, layer) in self.layers.iter().enumerate() {
            let is_last = idx + 1 == self.layers.len();
            match layer {
                LayerSpec::Conv {
                    k_rows,
                    k_cols,
                    n_out,
                    ..
                } => {
                    if is_last {
                        fail!(idx, String::from("last layer must be the head"));
                    }
                    if *k_rows == 0 || *k_cols == 0 || *n_out == 0 {
                        fail!(idx, String::from("conv dimensions must be >= 1"));
                    }
                    if rows < *k_rows || cols < *k_cols {
                        fail!(
                            idx,
                            format!("extent {rows}x{cols} smaller than {k_rows}x{k_cols} kernel")
                        );
                    }
                    rows -= k_rows - 1;
                    cols -= k_cols - 1;
                    channels = *n_out;
                }
                LayerSpec::Mpf { k } => {
                    if is_last {
                        fail!(idx, String::from("last layer must be the head"));
                    }
                    if *k == 0 {
                        fail!(idx, String::from("pooling factor must be >= 1"));
                    }
                    if rows % k != 0 || cols % k != 0 {
                        fail!(
                            idx,
                            format!("extent {rows}x{cols} not divisible by pooling factor {k}")
                        );
                    }
                    rows /= k;
                    cols /= k;
                }
                LayerSpec::FcHead {
                    hidden, classes, ..
                } => {
                    if !is_last {
                        fail!(idx, String::from("head must be the last layer"));
                    }
                    if *classes < 2 {
                        fail!(idx, String::from("head needs at least 2 classes"));
                    }
                    if hidden.iter().any(|&h| h == 0) {
                        fail!(idx, String::from("hidden sizes must be >= 1"));
                    }
                    if rows != 1 || cols != 1 {
                        fail!(idx, format!("extent at head is {rows}x{cols}, expected 1x1"));
                    }
                }
            }
            steps.push((idx, rows, cols, channels));
        }
        GeometryReport {
            steps,
            failure: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_valid()
    }

    /// Validate, turning a failure into an error.
    pub fn check(&self) -> Result<GeometryReport> {
        let report = self.validate();
        match &report.failure {
            Some((idx, msg)) => Err(Error::invalid(format!(
                "invalid architecture at layer {idx}: {msg}"
            ))),
            None => Ok(report),
        }
    }

    /// Pooling factors in layer order.
    pub fn pool_factors(&self) -> Vec<usize> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Mpf { k } => Some(*k),
                _ => None,
            })
            .collect()
    }

    /// Product of all pooling factors.
    pub fn stride(&self) -> usize {
        self.pool_factors().iter().product()
    }

    pub fn classes(&self) -> Option<usize> {
        self.layers.iter().rev().find_map(|l| match l {
            LayerSpec::FcHead { classes, .. } => Some(*classes),
            _ => None,
        })
    }

    /// Channel count entering the head for a valid architecture.
    pub fn head_input_channels(&self) -> usize {
        let mut channels = 1usize;
        for layer in &self.layers {
            if let LayerSpec::Conv { n_out, .. } = layer {
                channels = *n_out;
            }
        }
        channels
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn conv(k: usize, n_out: usize) -> LayerSpec {
        LayerSpec::Conv {
            k_rows: k,
            k_cols: k,
            n_out,
            activation: Activation::Tanh,
        }
    }

    fn head(hidden: Vec<usize>, classes: usize) -> LayerSpec {
        LayerSpec::FcHead {
            hidden,
            classes,
            hidden_activation: Activation::Tanh,
        }
    }

    #[test]
    fn window_32_chain_is_valid() {
        let arch = ArchSpec {
            window_rows: 32,
            window_cols: 32,
            layers: vec![
                conv(5, 8),
                LayerSpec::Mpf { k: 2 },
                conv(5, 8),
                LayerSpec::Mpf { k: 2 },
                conv(5, 8),
                head(vec![100], 2),
            ],
        };
        let report = arch.validate();
        assert!(report.is_valid(), "{:?}", report.failure);
        let extents: Vec<(usize, usize)> =
            report.steps.iter().map(|&(_, r, c, _)| (r, c)).collect();
        assert_eq!(
            extents,
            vec![(28, 28), (14, 14), (10, 10), (5, 5), (1, 1), (1, 1)]
        );
    }

    #[test]
    fn window_31_chain_fails_divisibility() {
        // 31 -> 25 after the 7x7 conv; 25 is not divisible by 2.
        let arch = ArchSpec {
            window_rows: 31,
            window_cols: 31,
            layers: vec![
                conv(7, 8),
                LayerSpec::Mpf { k: 2 },
                conv(5, 8),
                LayerSpec::Mpf { k: 2 },
                conv(5, 8),
                head(vec![100], 2),
            ],
        };
        let report = arch.validate();
        assert!(!report.is_valid());
        let (idx, msg) = report.failure.unwrap();
        assert_eq!(idx, 1);
        assert!(msg.contains("not divisible"));
    }

    #[test]
    fn pure_per_pixel_classifier_is_valid() {
        let arch = ArchSpec {
            window_rows: 1,
            window_cols: 1,
            layers: vec![head(vec![], 2)],
        };
        assert!(arch.is_valid());
    }

    #[test]
    fn head_must_be_last_and_unique() {
        let arch = ArchSpec {
            window_rows: 3,
            window_cols: 3,
            layers: vec![head(vec![], 2), conv(3, 4)],
        };
        assert!(!arch.is_valid());
    }

    #[test]
    fn extent_must_reach_one_by_one() {
        let arch = ArchSpec {
            window_rows: 5,
            window_cols: 5,
            layers: vec![conv(3, 4), head(vec![], 2)],
        };
        let report = arch.validate();
        let (_, msg) = report.failure.unwrap();
        assert!(msg.contains("3x3"));
    }

    #[test]
    fn accessors() {
        let arch = ArchSpec {
            window_rows: 12,
            window_cols: 12,
            layers: vec![
                conv(3, 4),
                LayerSpec::Mpf { k: 2 },
                conv(5, 6),
                head(vec![10], 3),
            ],
        };
        assert_eq!(arch.pool_factors(), vec![2]);
        assert_eq!(arch.stride(), 2);
        assert_eq!(arch.classes(), Some(3));
        assert_eq!(arch.head_input_channels(), 6);
    }
}
