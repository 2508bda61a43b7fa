//! Whole-network composition: parameters, the dense whole-image forward and
//! backward passes, and defragmentation of the output back into an image.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::arch::{ArchSpec, LayerSpec};
use crate::conv::{conv_backward, conv_forward, ConvGrads, ConvParams};
use crate::dense::{
    dense_head_backward, dense_head_forward, DenseGrads, DenseHeadParams, DenseLayerParams,
};
use crate::error::{Error, Result};
use crate::fragment::{storage_from_image, Storage};
use crate::geometry::{mirror_pad, GeometryPlan};
use crate::loss::{mcce_loss_and_delta, softmax_in_place, LabelImage};
use crate::map::Map;
use crate::pool::{mpf_backward, mpf_forward, PoolIndexRecord};
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

/// Parameters of one network layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<S> {
    Conv(ConvParams<S>),
    Mpf { k: usize },
    Head(DenseHeadParams<S>),
}

/// A network: its architecture plus the parameters of every layer.
///
/// Parameters flatten to a single vector in a fixed order — layer order, and
/// within a layer all weights in `(out, in, kernel row, kernel col)` order
/// followed by the biases — shared by the optimizers, the serialized model
/// file and both gradient routes.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<S> {
    pub arch: ArchSpec,
    pub layers: Vec<LayerParams<S>>,
}

impl<S: Scalar> Model<S> {
    /// Build a model with all parameters zero.
    pub fn zeros(arch: ArchSpec) -> Result<Self> {
        Self::build(arch, |_fan_in, _| S::ZERO)
    }

    /// Seeded uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(arch: ArchSpec, seed: u64) -> Result<Self> {
        let mut rng = SplitMix64::new(seed);
        Self::build(arch, |fan_in, rng_needed| {
            if rng_needed {
                let a = 1.0 / libm::sqrt(fan_in as f64);
                S::from_f64(rng.uniform(-a, a))
            } else {
                S::ZERO
            }
        })
    }

    fn build(arch: ArchSpec, mut draw: impl FnMut(usize, bool) -> S) -> Result<Self> {
        arch.check()?;
        let mut channels = 1usize;
        let mut layers = Vec::with_capacity(arch.layers.len());
        for spec in &arch.layers {
            match spec {
                LayerSpec::Conv {
                    k_rows,
                    k_cols,
                    n_out,
                    activation,
                } => {
                    let fan_in = channels * k_rows * k_cols;
                    let weights = (0..n_out * channels * k_rows * k_cols)
                        .map(|_| draw(fan_in, true))
                        .collect();
                    let bias = (0..*n_out).map(|_| draw(fan_in, false)).collect();
                    layers.push(LayerParams::Conv(ConvParams::new(
                        channels,
                        *n_out,
                        *k_rows,
                        *k_cols,
                        weights,
                        bias,
                        *activation,
                    )?));
                    channels = *n_out;
                }
                LayerSpec::Mpf { k } => layers.push(LayerParams::Mpf { k: *k }),
                LayerSpec::FcHead {
                    hidden,
                    classes,
                    hidden_activation,
                } => {
                    let mut dims = vec![channels];
                    dims.extend_from_slice(hidden);
                    dims.push(*classes);
                    let mut sublayers = Vec::with_capacity(dims.len() - 1);
                    for w in dims.windows(2) {
                        let (n_in, n_out) = (w[0], w[1]);
                        let is_last = n_out == *dims.last().unwrap()
                            && sublayers.len() + 1 == dims.len() - 1;
                        let weights = (0..n_out * n_in).map(|_| draw(n_in, true)).collect();
                        let bias = (0..n_out).map(|_| draw(n_in, false)).collect();
                        sublayers.push(DenseLayerParams::new(
                            n_in,
                            n_out,
                            weights,
                            bias,
                            if is_last {
                                crate::conv::Activation::Identity
                            } else {
                                *hidden_activation
                            },
                        )?);
                    }
                    layers.push(LayerParams::Head(DenseHeadParams::new(sublayers)?));
                }
            }
        }
        Ok(Model { arch, layers })
    }

    pub fn classes(&self) -> usize {
        self.arch.classes().unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                LayerParams::Conv(p) => p.param_count(),
                LayerParams::Mpf { .. } => 0,
                LayerParams::Head(p) => p.param_count(),
            })
            .sum()
    }

    /// All parameters in canonical flat order.
    pub fn flatten(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            match layer {
                LayerParams::Conv(p) => {
                    out.extend_from_slice(&p.weights);
                    out.extend_from_slice(&p.bias);
                }
                LayerParams::Mpf { .. } => {}
                LayerParams::Head(p) => {
                    for l in &p.layers {
                        out.extend_from_slice(&l.weights);
                        out.extend_from_slice(&l.bias);
                    }
                }
            }
        }
        out
    }

    /// Overwrite all parameters from a canonical flat vector.
    pub fn set_from_flat(&mut self, flat: &[S]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(format!(
                "flat parameter vector has {} entries, model needs {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut pos = 0;
        let mut take = |n: usize, dst: &mut [S]| {
            dst.copy_from_slice(&flat[pos..pos + n]);
            pos += n;
        };
        for layer in self.layers.iter_mut() {
            match layer {
                LayerParams::Conv(p) => {
                    let nw = p.weights.len();
                    take(nw, &mut p.weights);
                    let nb = p.bias.len();
                    take(nb, &mut p.bias);
                }
                LayerParams::Mpf { .. } => {}
                LayerParams::Head(p) => {
                    for l in p.layers.iter_mut() {
                        let nw = l.weights.len();
                        take(nw, &mut l.weights);
                        let nb = l.bias.len();
                        take(nb, &mut l.bias);
                    }
                }
            }
        }
        Ok(())
    }

    /// Copy into a different scalar precision.
    pub fn convert<T: Scalar>(&self) -> Model<T> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerParams::Conv(p) => LayerParams::Conv(ConvParams {
                    n_in: p.n_in,
                    n_out: p.n_out,
                    k_rows: p.k_rows,
                    k_cols: p.k_cols,
                    weights: p.weights.iter().map(|v| T::from_f64(v.to_f64())).collect(),
                    bias: p.bias.iter().map(|v| T::from_f64(v.to_f64())).collect(),
                    activation: p.activation,
                }),
                LayerParams::Mpf { k } => LayerParams::Mpf { k: *k },
                LayerParams::Head(p) => LayerParams::Head(DenseHeadParams {
                    layers: p
                        .layers
                        .iter()
                        .map(|l| DenseLayerParams {
                            n_in: l.n_in,
                            n_out: l.n_out,
                            weights: l.weights.iter().map(|v| T::from_f64(v.to_f64())).collect(),
                            bias: l.bias.iter().map(|v| T::from_f64(v.to_f64())).collect(),
                            activation: l.activation,
                        })
                        .collect(),
                }),
            })
            .collect();
        Model {
            arch: self.arch.clone(),
            layers,
        }
    }
}

/// Per-layer data retained by the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub enum LayerRecord<S> {
    Conv {
        input: Storage<S>,
        output: Storage<S>,
    },
    Mpf {
        record: PoolIndexRecord,
    },
    Head {
        input: Storage<S>,
        sublayer_outputs: Vec<Storage<S>>,
    },
}

/// Everything [`backward_dense`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct Tape<S> {
    records: Vec<LayerRecord<S>>,
}

impl<S: Scalar> Tape<S> {
    /// The logit storage produced by the head.
    pub fn logits(&self) -> &Storage<S> {
        match self.records.last() {
            Some(LayerRecord::Head {
                sublayer_outputs, ..
            }) => sublayer_outputs.last().expect("head has sublayers"),
            _ => unreachable!("tape always ends with the head record"),
        }
    }
}

/// Softmax across channels at every position of every fragment.
fn softmax_storage<S: Scalar>(logits: &Storage<S>) -> Result<Storage<S>> {
    let n = logits.n_maps();
    let mut fragments = Vec::with_capacity(logits.n_fragments());
    let mut probs = vec![S::ZERO; n];
    for frag in logits.fragments() {
        let (rows, cols) = (frag.rows(), frag.cols());
        let mut maps: Vec<Map<S>> = (0..n).map(|_| Map::zeros(rows, cols)).collect();
        for p in 0..rows * cols {
            for (ch, slot) in probs.iter_mut().enumerate() {
                *slot = frag.map(ch).values()[p];
            }
            softmax_in_place(&mut probs);
            for (ch, v) in probs.iter().enumerate() {
                maps[ch].values_mut()[p] = *v;
            }
        }
        fragments.push(crate::fragment::FragmentStack::new(
            maps,
            frag.lineage().clone(),
        )?);
    }
    Storage::new(fragments)
}

/// Interleave fragment values back into full-resolution maps.
///
/// Every position of every fragment maps through its lineage to one pixel;
/// positions landing outside the original image (planner overshoot into the
/// padding) are dropped. Writing any pixel twice or leaving one unwritten is
/// an internal-consistency error.
pub fn defragment<S: Scalar>(storage: &Storage<S>, plan: &GeometryPlan) -> Result<Vec<Map<S>>> {
    let (rows, cols) = (plan.image_rows, plan.image_cols);
    let n_maps = storage.n_maps();
    let mut out: Vec<Map<S>> = (0..n_maps).map(|_| Map::zeros(rows, cols)).collect();
    let mut written = vec![false; rows * cols];

    for frag in storage.fragments() {
        for m in 0..frag.rows() {
            for n in 0..frag.cols() {
                let (u, v) = frag.lineage().to_pixel(m, n);
                if u >= rows || v >= cols {
                    continue;
                }
                let slot = &mut written[u * cols + v];
                if *slot {
                    return Err(Error::internal(format!(
                        "defragment: pixel ({u}, {v}) written twice"
                    )));
                }
                *slot = true;
                for (ch, map) in out.iter_mut().enumerate() {
                    *map.at_mut(u, v) = frag.map(ch).at(m, n);
                }
            }
        }
    }

    if let Some(missing) = written.iter().position(|&w| !w) {
        return Err(Error::internal(format!(
            "defragment: pixel ({}, {}) never written",
            missing / cols,
            missing % cols
        )));
    }
    Ok(out)
}

/// Dense forward pass: mirror-pad, run every layer over fragments, softmax,
/// defragment. Returns one probability map per class (image-sized) plus the
/// tape for [`backward_dense`].
pub fn forward_dense<S: Scalar>(
    image: &Map<S>,
    model: &Model<S>,
    plan: &GeometryPlan,
) -> Result<(Vec<Map<S>>, Tape<S>)> {
    if image.rows() != plan.image_rows || image.cols() != plan.image_cols {
        return Err(Error::shape(format!(
            "plan is for {}x{} images, got {}x{}",
            plan.image_rows,
            plan.image_cols,
            image.rows(),
            image.cols()
        )));
    }
    let padded = mirror_pad(image, plan.pad_top, plan.pad_bottom, plan.pad_left, plan.pad_right)?;
    let mut storage = storage_from_image(padded)?;
    let mut records = Vec::with_capacity(model.layers.len());

    for layer in &model.layers {
        match layer {
            LayerParams::Conv(p) => {
                let output = conv_forward(&storage, p)?;
                let input = core::mem::replace(&mut storage, output.clone());
                records.push(LayerRecord::Conv { input, output });
            }
            LayerParams::Mpf { k } => {
                let (output, record) = mpf_forward(&storage, *k)?;
                storage = output;
                records.push(LayerRecord::Mpf { record });
            }
            LayerParams::Head(p) => {
                let (output, sublayer_outputs) = dense_head_forward(&storage, p)?;
                let input = core::mem::replace(&mut storage, output);
                records.push(LayerRecord::Head {
                    input,
                    sublayer_outputs,
                });
            }
        }
        debug_assert!(storage.all_finite(), "non-finite values after a layer");
    }

    if !storage.all_finite() {
        return Err(Error::NonFinite(
            "logits contain NaN or infinity".into(),
        ));
    }

    let probs = softmax_storage(&storage)?;
    let prob_maps = defragment(&probs, plan)?;
    Ok((prob_maps, Tape { records }))
}

/// Parameter gradients of one layer, used to assemble the flat gradient.
enum LayerGrads<S> {
    Conv(ConvGrads<S>),
    None,
    Head(Vec<DenseGrads<S>>),
}

/// Dense backward pass: weighted cross-entropy against the target labels,
/// then backpropagation through head, pooling, and convolution layers in
/// reverse. Returns the loss and the gradient in canonical flat order.
pub fn backward_dense<S: Scalar>(
    model: &Model<S>,
    tape: &Tape<S>,
    target: &LabelImage,
    class_weights: &[S],
) -> Result<(S, Vec<S>)> {
    if target.rows() * target.cols() == 0 {
        return Err(Error::invalid("target image is empty"));
    }
    if tape.records.len() != model.layers.len() {
        return Err(Error::internal("tape does not match model layer count"));
    }

    let (loss, mut delta) = mcce_loss_and_delta(tape.logits(), target, class_weights)?;

    let mut grads: Vec<LayerGrads<S>> = Vec::with_capacity(model.layers.len());
    for (layer, record) in model.layers.iter().zip(&tape.records).rev() {
        match (layer, record) {
            (LayerParams::Head(p), LayerRecord::Head { input, sublayer_outputs }) => {
                let (d, g) = dense_head_backward(input, sublayer_outputs, &delta, p)?;
                delta = d;
                grads.push(LayerGrads::Head(g));
            }
            (LayerParams::Mpf { .. }, LayerRecord::Mpf { record }) => {
                delta = mpf_backward(&delta, record)?;
                grads.push(LayerGrads::None);
            }
            (LayerParams::Conv(p), LayerRecord::Conv { input, output }) => {
                let (d, g) = conv_backward(input, output, &delta, p)?;
                delta = d;
                grads.push(LayerGrads::Conv(g));
            }
            _ => return Err(Error::internal("tape record does not match layer kind")),
        }
    }
    grads.reverse();

    let mut flat = Vec::with_capacity(model.param_count());
    for g in &grads {
        match g {
            LayerGrads::Conv(g) => {
                flat.extend_from_slice(&g.weights);
                flat.extend_from_slice(&g.bias);
            }
            LayerGrads::None => {}
            LayerGrads::Head(layers) => {
                for l in layers {
                    flat.extend_from_slice(&l.weights);
                    flat.extend_from_slice(&l.bias);
                }
            }
        }
    }
    Ok((loss, flat))
}
