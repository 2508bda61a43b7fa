//! Shared helpers for integration tests: randomized architectures, models
//! and images.
#![allow(dead_code)] // each test binary uses a different subset

use mpcnn_core::arch::{ArchSpec, LayerSpec};
use mpcnn_core::conv::Activation;
use mpcnn_core::map::Map;
use mpcnn_core::rng::SplitMix64;

/// Random architecture with `n_mpf` pooling layers (1 or 2) whose window
/// lands in `[8, 32]`. Construction works forward from the head constraint:
/// with kernels `a, b, c` and factors `k1, k2`,
/// `window = a - 1 + k1 * b` (one pooling layer) or
/// `window = a - 1 + k1 * (b - 1 + k2 * c)` (two).
pub fn random_arch(rng: &mut SplitMix64, n_mpf: usize) -> ArchSpec {
    assert!(n_mpf == 1 || n_mpf == 2);
    loop {
        let pick = |rng: &mut SplitMix64, lo: usize, hi: usize| lo + rng.next_below(hi - lo + 1);
        let k1 = pick(rng, 2, 3);
        let a = pick(rng, 2, 5);
        let maps_a = pick(rng, 1, 3);
        let maps_b = pick(rng, 1, 3);
        let classes = pick(rng, 2, 3);
        let hidden = match pick(rng, 0, 2) {
            0 => vec![],
            n => vec![pick(rng, 2, 6); n.min(1)],
        };

        let (window, layers) = if n_mpf == 1 {
            let b = pick(rng, 2, 6);
            let window = a - 1 + k1 * b;
            (
                window,
                vec![
                    LayerSpec::Conv {
                        k_rows: a,
                        k_cols: a,
                        n_out: maps_a,
                        activation: Activation::Tanh,
                    },
                    LayerSpec::Mpf { k: k1 },
                    LayerSpec::Conv {
                        k_rows: b,
                        k_cols: b,
                        n_out: maps_b,
                        activation: if pick(rng, 0, 1) == 0 {
                            Activation::Tanh
                        } else {
                            Activation::Logistic
                        },
                    },
                    LayerSpec::FcHead {
                        hidden: hidden.clone(),
                        classes,
                        hidden_activation: Activation::Tanh,
                    },
                ],
            )
        } else {
            let k2 = pick(rng, 2, 3);
            let b = pick(rng, 2, 4);
            let c = pick(rng, 2, 4);
            let window = a - 1 + k1 * (b - 1 + k2 * c);
            (
                window,
                vec![
                    LayerSpec::Conv {
                        k_rows: a,
                        k_cols: a,
                        n_out: maps_a,
                        activation: Activation::Tanh,
                    },
                    LayerSpec::Mpf { k: k1 },
                    LayerSpec::Conv {
                        k_rows: b,
                        k_cols: b,
                        n_out: maps_b,
                        activation: Activation::Tanh,
                    },
                    LayerSpec::Mpf { k: k2 },
                    LayerSpec::Conv {
                        k_rows: c,
                        k_cols: c,
                        n_out: pick(rng, 1, 2),
                        activation: Activation::Tanh,
                    },
                    LayerSpec::FcHead {
                        hidden,
                        classes,
                        hidden_activation: Activation::Tanh,
                    },
                ],
            )
        };

        if (8..=32).contains(&window) {
            let arch = ArchSpec {
                window_rows: window,
                window_cols: window,
                layers,
            };
            assert!(arch.is_valid(), "generator produced invalid arch");
            return arch;
        }
    }
}

pub fn random_image(rng: &mut SplitMix64, rows: usize, cols: usize) -> Map<f64> {
    Map::from_fn(rows, cols, |_, _| rng.next_f64())
}

/// Image size in `[lo.max(window), hi]`.
pub fn random_size(rng: &mut SplitMix64, window: usize, lo: usize, hi: usize) -> usize {
    let lo = lo.max(window);
    lo + rng.next_below(hi - lo + 1)
}

pub fn max_abs_diff(a: &Map<f64>, b: &Map<f64>) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
