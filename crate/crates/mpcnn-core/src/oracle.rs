//! Patch-by-patch reference implementation.
//!
//! This is the straightforward way to segment with a windowed classifier:
//! cut out the patch around every pixel and run the network on it. It redoes
//! all the work the dense pass shares between overlapping patches, which is
//! exactly why it exists — as an independent correctness oracle for the dense
//! implementation and as the baseline the speedup is measured against. It
//! deliberately performs no caching or restructuring of the computation.
//!
//! Both routes read the same parameter storage; nothing is copied through a
//! lossy path, so they agree to rounding error.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::ConvParams;
use crate::dense::DenseHeadParams;
use crate::error::{Error, Result};
use crate::geometry::reflect_index;
use crate::loss::softmax_in_place;
use crate::map::Map;
use crate::network::{LayerParams, Model};
use crate::pool::{mp_backward_patch, mp_forward_patch, PatchPoolRecord};
use crate::scalar::Scalar;

/// One extracted window and the image pixel it is centered on.
#[derive(Debug, Clone)]
pub struct Patch<S> {
    pub map: Map<S>,
    pub center: (usize, usize),
}

/// Cut the `window`-sized patch around `center`, mirroring past the image
/// border with the same reflection the dense pass uses for padding.
pub fn extract_patch<S: Scalar>(
    image: &Map<S>,
    center: (usize, usize),
    window: (usize, usize),
) -> Result<Patch<S>> {
    let (w_rows, w_cols) = window;
    if w_rows == 0 || w_cols == 0 {
        return Err(Error::invalid("window must be at least 1x1"));
    }
    if center.0 >= image.rows() || center.1 >= image.cols() {
        return Err(Error::invalid(format!(
            "patch center ({}, {}) outside {}x{} image",
            center.0,
            center.1,
            image.rows(),
            image.cols()
        )));
    }
    let near_r = (w_rows - 1) / 2;
    let near_c = (w_cols - 1) / 2;
    // Reflection can reach at most one dimension's length past the border.
    if near_r >= image.rows()
        || (w_rows - 1 - near_r) >= image.rows()
        || near_c >= image.cols()
        || (w_cols - 1 - near_c) >= image.cols()
    {
        return Err(Error::invalid(format!(
            "image {}x{} too small for a {}x{} window",
            image.rows(),
            image.cols(),
            w_rows,
            w_cols
        )));
    }
    let map = Map::from_fn(w_rows, w_cols, |r, c| {
        let src_r = reflect_index(center.0 as isize - near_r as isize + r as isize, image.rows());
        let src_c = reflect_index(center.1 as isize - near_c as isize + c as isize, image.cols());
        image.at(src_r, src_c)
    });
    Ok(Patch { map, center })
}

enum PatchLayerRecord<S> {
    Conv {
        input: Vec<Map<S>>,
        output: Vec<Map<S>>,
    },
    Pool {
        record: PatchPoolRecord,
    },
    Head {
        input: Vec<S>,
        sublayer_outputs: Vec<Vec<S>>,
    },
}

/// Naive valid cross-correlation on a plain map stack.
fn patch_conv<S: Scalar>(maps: &[Map<S>], params: &ConvParams<S>) -> Result<Vec<Map<S>>> {
    if maps.len() != params.n_in {
        return Err(Error::shape(format!(
            "patch conv expects {} maps, got {}",
            params.n_in,
            maps.len()
        )));
    }
    let (rows, cols) = (maps[0].rows(), maps[0].cols());
    if rows < params.k_rows || cols < params.k_cols {
        return Err(Error::shape(format!(
            "patch {}x{} smaller than {}x{} kernel",
            rows, cols, params.k_rows, params.k_cols
        )));
    }
    let out_rows = rows - params.k_rows + 1;
    let out_cols = cols - params.k_cols + 1;
    let mut out = Vec::with_capacity(params.n_out);
    for o in 0..params.n_out {
        let mut values = Vec::with_capacity(out_rows * out_cols);
        for m in 0..out_rows {
            for n in 0..out_cols {
                let mut acc = params.bias[o];
                for (i, map) in maps.iter().enumerate() {
                    for kr in 0..params.k_rows {
                        for kc in 0..params.k_cols {
                            acc += params.weight(o, i, kr, kc) * map.at(m + kr, n + kc);
                        }
                    }
                }
                values.push(params.activation.apply(acc));
            }
        }
        out.push(Map::new(out_rows, out_cols, values)?);
    }
    Ok(out)
}

fn patch_head<S: Scalar>(input: &[S], params: &DenseHeadParams<S>) -> Vec<Vec<S>> {
    let mut outputs = Vec::with_capacity(params.layers.len());
    let mut current = input.to_vec();
    for layer in &params.layers {
        let mut next = Vec::with_capacity(layer.n_out);
        for o in 0..layer.n_out {
            let mut acc = layer.bias[o];
            for (i, v) in current.iter().enumerate() {
                acc += layer.weights[o * layer.n_in + i] * *v;
            }
            next.push(layer.activation.apply(acc));
        }
        outputs.push(next.clone());
        current = next;
    }
    outputs
}

fn forward_patch_traced<S: Scalar>(
    patch: &Patch<S>,
    model: &Model<S>,
) -> Result<(Vec<S>, Vec<PatchLayerRecord<S>>)> {
    if patch.map.rows() != model.arch.window_rows || patch.map.cols() != model.arch.window_cols {
        return Err(Error::shape(format!(
            "patch is {}x{}, model window is {}x{}",
            patch.map.rows(),
            patch.map.cols(),
            model.arch.window_rows,
            model.arch.window_cols
        )));
    }
    let mut maps = vec![patch.map.clone()];
    let mut records = Vec::with_capacity(model.layers.len());
    let mut logits = Vec::new();
    for layer in &model.layers {
        match layer {
            LayerParams::Conv(p) => {
                let output = patch_conv(&maps, p)?;
                let input = core::mem::replace(&mut maps, output.clone());
                records.push(PatchLayerRecord::Conv { input, output });
            }
            LayerParams::Mpf { k } => {
                let (output, record) = mp_forward_patch(&maps, *k)?;
                maps = output;
                records.push(PatchLayerRecord::Pool { record });
            }
            LayerParams::Head(p) => {
                if maps.iter().any(|m| m.rows() != 1 || m.cols() != 1) {
                    return Err(Error::shape("patch extent at head is not 1x1"));
                }
                let input: Vec<S> = maps.iter().map(|m| m.at(0, 0)).collect();
                let sublayer_outputs = patch_head(&input, p);
                logits = sublayer_outputs.last().unwrap().clone();
                records.push(PatchLayerRecord::Head {
                    input,
                    sublayer_outputs,
                });
            }
        }
    }
    let mut probs = logits;
    softmax_in_place(&mut probs);
    Ok((probs, records))
}

/// Classify a single patch: class probabilities after softmax.
pub fn forward_patch<S: Scalar>(patch: &Patch<S>, model: &Model<S>) -> Result<Vec<S>> {
    forward_patch_traced(patch, model).map(|(probs, _)| probs)
}

/// Classical per-patch backpropagation.
///
/// The per-patch loss is `-w_t ln p_t / n_image_pixels`, so summing losses
/// and gradients over all patches of an image reproduces the dense
/// whole-image loss and gradient exactly. The returned gradient uses the same
/// flat order as [`crate::network::backward_dense`].
pub fn grad_patch<S: Scalar>(
    patch: &Patch<S>,
    label: usize,
    class_weights: &[S],
    model: &Model<S>,
    n_image_pixels: usize,
) -> Result<(S, Vec<S>)> {
    if label >= class_weights.len() {
        return Err(Error::invalid(format!(
            "label {} out of range for {} classes",
            label,
            class_weights.len()
        )));
    }
    if class_weights.iter().any(|w| !(*w > S::ZERO)) {
        return Err(Error::invalid("class weights must be positive"));
    }
    let (probs, records) = forward_patch_traced(patch, model)?;

    let w = class_weights[label];
    let inv_n = S::ONE / S::from_usize(n_image_pixels);
    let loss = -(w * probs[label].ln()) * inv_n;
    let delta_vec: Vec<S> = probs
        .iter()
        .enumerate()
        .map(|(ch, p)| {
            let indicator = if ch == label { S::ONE } else { S::ZERO };
            w * (*p - indicator) * inv_n
        })
        .collect();

    // Walk layers in reverse, mirroring the forward trace.
    let mut flat_rev: Vec<Vec<S>> = Vec::new();
    let mut delta_maps: Vec<Map<S>> = Vec::new();

    for (layer, record) in model.layers.iter().zip(&records).rev() {
        match (layer, record) {
            (
                LayerParams::Head(p),
                PatchLayerRecord::Head {
                    input,
                    sublayer_outputs,
                },
            ) => {
                let mut piece = Vec::new();
                let mut delta = delta_vec.clone();
                for (li, sub) in p.layers.iter().enumerate().rev() {
                    let layer_in: &[S] = if li == 0 {
                        input
                    } else {
                        &sublayer_outputs[li - 1]
                    };
                    let y = &sublayer_outputs[li];
                    let mut d_pre = Vec::with_capacity(sub.n_out);
                    for o in 0..sub.n_out {
                        d_pre.push(delta[o] * sub.activation.derivative_from_output(y[o]));
                    }
                    let mut gw = vec![S::ZERO; sub.weights.len()];
                    let mut gb = vec![S::ZERO; sub.n_out];
                    let mut d_prev = vec![S::ZERO; sub.n_in];
                    for o in 0..sub.n_out {
                        gb[o] = d_pre[o];
                        for i in 0..sub.n_in {
                            gw[o * sub.n_in + i] = d_pre[o] * layer_in[i];
                            d_prev[i] += d_pre[o] * sub.weights[o * sub.n_in + i];
                        }
                    }
                    // Sublayers flatten in forward order; collect reversed.
                    let mut block = gw;
                    block.extend_from_slice(&gb);
                    piece.push(block);
                    delta = d_prev;
                }
                piece.reverse();
                flat_rev.push(piece.concat());
                delta_maps = delta
                    .iter()
                    .map(|&d| Map::new(1, 1, vec![d]))
                    .collect::<Result<Vec<_>>>()?;
            }
            (LayerParams::Mpf { .. }, PatchLayerRecord::Pool { record }) => {
                delta_maps = mp_backward_patch(&delta_maps, record)?;
                flat_rev.push(Vec::new());
            }
            (LayerParams::Conv(p), PatchLayerRecord::Conv { input, output }) => {
                let mut gw = vec![S::ZERO; p.weights.len()];
                let mut gb = vec![S::ZERO; p.n_out];
                let (in_rows, in_cols) = (input[0].rows(), input[0].cols());
                let mut delta_in: Vec<Map<S>> =
                    (0..p.n_in).map(|_| Map::zeros(in_rows, in_cols)).collect();
                for o in 0..p.n_out {
                    let y_map = &output[o];
                    let d_map = &delta_maps[o];
                    for m in 0..d_map.rows() {
                        for n in 0..d_map.cols() {
                            let d_pre = d_map.at(m, n)
                                * p.activation.derivative_from_output(y_map.at(m, n));
                            gb[o] += d_pre;
                            for i in 0..p.n_in {
                                for kr in 0..p.k_rows {
                                    for kc in 0..p.k_cols {
                                        let w_idx = ((o * p.n_in + i) * p.k_rows + kr) * p.k_cols
                                            + kc;
                                        gw[w_idx] += d_pre * input[i].at(m + kr, n + kc);
                                        *delta_in[i].at_mut(m + kr, n + kc) +=
                                            d_pre * p.weights[w_idx];
                                    }
                                }
                            }
                        }
                    }
                }
                delta_maps = delta_in;
                let mut block = gw;
                block.extend_from_slice(&gb);
                flat_rev.push(block);
            }
            _ => return Err(Error::internal("patch trace does not match layer kind")),
        }
    }

    flat_rev.reverse();
    Ok((loss, flat_rev.concat()))
}

/// Segment a whole image the slow way: one patch per pixel. Used in
/// equivalence tests and as the benchmark baseline.
pub fn dense_via_patches<S: Scalar>(image: &Map<S>, model: &Model<S>) -> Result<Vec<Map<S>>> {
    let classes = model.classes();
    let window = (model.arch.window_rows, model.arch.window_cols);
    let mut out: Vec<Map<S>> = (0..classes)
        .map(|_| Map::zeros(image.rows(), image.cols()))
        .collect();
    for r in 0..image.rows() {
        for c in 0..image.cols() {
            let patch = extract_patch(image, (r, c), window)?;
            let probs = forward_patch(&patch, model)?;
            for (ch, p) in probs.iter().enumerate() {
                *out[ch].at_mut(r, c) = *p;
            }
        }
    }
    Ok(out)
}
