//! Fully connected head applied independently at every spatial position.
//!
//! In patch mode the classifier ends with ordinary fully connected layers on
//! a 1x1 spatial extent. Run densely, the same affine chain is applied to the
//! channel vector at every position of every fragment, leaving the spatial
//! geometry untouched. The final layer is always linear; softmax lives in the
//! loss.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::conv::Activation;
use crate::error::{Error, Result};
use crate::fragment::{FragmentStack, Storage};
use crate::map::Map;
use crate::scalar::Scalar;

/// One affine sublayer: `n_out x n_in` weight matrix (row-major) plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayerParams<S> {
    pub n_in: usize,
    pub n_out: usize,
    pub weights: Vec<S>,
    pub bias: Vec<S>,
    pub activation: Activation,
}

impl<S: Scalar> DenseLayerParams<S> {
    pub fn new(
        n_in: usize,
        n_out: usize,
        weights: Vec<S>,
        bias: Vec<S>,
        activation: Activation,
    ) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::invalid("dense layer dimensions must be >= 1"));
        }
        if weights.len() != n_out * n_in || bias.len() != n_out {
            return Err(Error::shape("dense layer parameter lengths do not match"));
        }
        Ok(DenseLayerParams {
            n_in,
            n_out,
            weights,
            bias,
            activation,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// The whole head: a chain of affine sublayers, final one linear.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseHeadParams<S> {
    pub layers: Vec<DenseLayerParams<S>>,
}

impl<S: Scalar> DenseHeadParams<S> {
    pub fn new(layers: Vec<DenseLayerParams<S>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("head needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].n_out != pair[1].n_in {
                return Err(Error::shape(format!(
                    "head layer dimensions do not chain: {} out vs {} in",
                    pair[0].n_out, pair[1].n_in
                )));
            }
        }
        if layers.last().unwrap().activation != Activation::Identity {
            return Err(Error::invalid(
                "final head layer must have identity activation",
            ));
        }
        Ok(DenseHeadParams { layers })
    }

    pub fn n_in(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_out(&self) -> usize {
        self.layers.last().unwrap().n_out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }
}

/// Gradients of one sublayer, same layout as its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads<S> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

fn apply_sublayer<S: Scalar>(
    input: &Storage<S>,
    layer: &DenseLayerParams<S>,
) -> Result<Storage<S>> {
    if input.n_maps() != layer.n_in {
        return Err(Error::shape(format!(
            "head expects {} channels, storage has {}",
            layer.n_in,
            input.n_maps()
        )));
    }
    let mut fragments = Vec::with_capacity(input.n_fragments());
    for frag in input.fragments() {
        let (rows, cols) = (frag.rows(), frag.cols());
        let cells = rows * cols;
        let mut maps: Vec<Vec<S>> = vec![Vec::with_capacity(cells); layer.n_out];
        for p in 0..cells {
            for (o, out) in maps.iter_mut().enumerate() {
                let mut acc = layer.bias[o];
                let w_row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                for (i, w) in w_row.iter().enumerate() {
                    acc += *w * frag.map(i).values()[p];
                }
                out.push(layer.activation.apply(acc));
            }
        }
        let maps = maps
            .into_iter()
            .map(|v| Map::new(rows, cols, v))
            .collect::<Result<Vec<_>>>()?;
        fragments.push(FragmentStack::new(maps, frag.lineage().clone())?);
    }
    Storage::new(fragments)
}

/// Forward pass. Returns the head output plus every sublayer's output (the
/// last entry is the returned storage itself); the backward pass needs them.
pub fn dense_head_forward<S: Scalar>(
    input: &Storage<S>,
    params: &DenseHeadParams<S>,
) -> Result<(Storage<S>, Vec<Storage<S>>)> {
    let mut outputs = Vec::with_capacity(params.layers.len());
    let mut current = apply_sublayer(input, &params.layers[0])?;
    outputs.push(current.clone());
    for layer in &params.layers[1..] {
        current = apply_sublayer(&current, layer)?;
        outputs.push(current.clone());
    }
    Ok((current, outputs))
}

/// Backward pass through the affine chain. Parameter gradients are summed
/// over every position of every fragment.
pub fn dense_head_backward<S: Scalar>(
    input: &Storage<S>,
    sublayer_outputs: &[Storage<S>],
    delta_out: &Storage<S>,
    params: &DenseHeadParams<S>,
) -> Result<(Storage<S>, Vec<DenseGrads<S>>)> {
    if sublayer_outputs.len() != params.layers.len() {
        return Err(Error::internal("head backward: trace length mismatch"));
    }
    let mut grads: Vec<DenseGrads<S>> = params
        .layers
        .iter()
        .map(|l| DenseGrads {
            weights: vec![S::ZERO; l.weights.len()],
            bias: vec![S::ZERO; l.bias.len()],
        })
        .collect();

    let mut delta = delta_out.clone();
    for (li, layer) in params.layers.iter().enumerate().rev() {
        let layer_input = if li == 0 {
            input
        } else {
            &sublayer_outputs[li - 1]
        };
        let layer_output = &sublayer_outputs[li];
        if delta.n_maps() != layer.n_out {
            return Err(Error::shape("head backward: delta channel mismatch"));
        }

        let mut prev_fragments = Vec::with_capacity(delta.n_fragments());
        for ((d_frag, in_frag), out_frag) in delta
            .fragments()
            .iter()
            .zip(layer_input.fragments())
            .zip(layer_output.fragments())
        {
            let (rows, cols) = (d_frag.rows(), d_frag.cols());
            if in_frag.rows() != rows || in_frag.cols() != cols {
                return Err(Error::shape("head backward: fragment shape mismatch"));
            }
            let cells = rows * cols;
            let mut delta_prev: Vec<Vec<S>> = vec![vec![S::ZERO; cells]; layer.n_in];
            let g = &mut grads[li];
            for p in 0..cells {
                for o in 0..layer.n_out {
                    let y = out_frag.map(o).values()[p];
                    let d_pre =
                        d_frag.map(o).values()[p] * layer.activation.derivative_from_output(y);
                    g.bias[o] += d_pre;
                    let w_row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    let gw_row = &mut g.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for i in 0..layer.n_in {
                        gw_row[i] += d_pre * in_frag.map(i).values()[p];
                        delta_prev[i][p] += d_pre * w_row[i];
                    }
                }
            }
            let maps = delta_prev
                .into_iter()
                .map(|v| Map::new(rows, cols, v))
                .collect::<Result<Vec<_>>>()?;
            prev_fragments.push(FragmentStack::new(maps, d_frag.lineage().clone())?);
        }
        delta = Storage::new(prev_fragments)?;
    }

    Ok((delta, grads))
}
