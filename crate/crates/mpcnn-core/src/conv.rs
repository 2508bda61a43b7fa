//! Convolutional layer over fragments.
//!
//! Filtering is valid-region cross-correlation (no kernel flip, no padding —
//! padding happens once at the image level). The same operation is applied to
//! every fragment independently; lineage is untouched. Gradients are summed
//! over all fragments.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fragment::{FragmentStack, Storage};
use crate::map::Map;
use crate::scalar::Scalar;

/// Per-layer nonlinearity. The derivative is computed from the stored layer
/// *output*, which avoids keeping pre-activation values around:
/// `tanh' = 1 - y^2`, `logistic' = y (1 - y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Logistic,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<S: Scalar>(self, x: S) -> S {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Logistic => S::ONE / (S::ONE + (-x).exp()),
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative_from_output<S: Scalar>(self, y: S) -> S {
        match self {
            Activation::Tanh => S::ONE - y * y,
            Activation::Logistic => y * (S::ONE - y),
            Activation::Identity => S::ONE,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Logistic => "logistic",
            Activation::Identity => "identity",
        }
    }
}

impl core::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "logistic" => Ok(Activation::Logistic),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

/// Fully connected convolutional layer: one `k_rows x k_cols` kernel per
/// (output map, input map) pair plus one bias per output map.
///
/// Weights are stored flat in `(out, in, kernel row, kernel col)` order; that
/// order is also the serialization and gradient-flattening order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<S> {
    pub n_in: usize,
    pub n_out: usize,
    pub k_rows: usize,
    pub k_cols: usize,
    pub weights: Vec<S>,
    pub bias: Vec<S>,
    pub activation: Activation,
}

impl<S: Scalar> ConvParams<S> {
    pub fn new(
        n_in: usize,
        n_out: usize,
        k_rows: usize,
        k_cols: usize,
        weights: Vec<S>,
        bias: Vec<S>,
        activation: Activation,
    ) -> Result<Self> {
        if n_in == 0 || n_out == 0 || k_rows == 0 || k_cols == 0 {
            return Err(Error::invalid("conv dimensions must all be >= 1"));
        }
        if weights.len() != n_out * n_in * k_rows * k_cols {
            return Err(Error::shape(format!(
                "conv weights length {} != {}",
                weights.len(),
                n_out * n_in * k_rows * k_cols
            )));
        }
        if bias.len() != n_out {
            return Err(Error::shape("conv bias length must equal n_out"));
        }
        Ok(ConvParams {
            n_in,
            n_out,
            k_rows,
            k_cols,
            weights,
            bias,
            activation,
        })
    }

    #[inline]
    fn weight_base(&self, out: usize, inp: usize) -> usize {
        ((out * self.n_in) + inp) * self.k_rows * self.k_cols
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize, kr: usize, kc: usize) -> S {
        self.weights[self.weight_base(out, inp) + kr * self.k_cols + kc]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Weight and bias gradients of one convolutional layer, same layout as the
/// parameters themselves.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<S> {
    pub weights: Vec<S>,
    pub bias: Vec<S>,
}

fn check_input_shapes<S: Scalar>(input: &Storage<S>, params: &ConvParams<S>) -> Result<()> {
    if input.n_maps() != params.n_in {
        return Err(Error::shape(format!(
            "conv expects {} input maps, storage has {}",
            params.n_in,
            input.n_maps()
        )));
    }
    for (i, frag) in input.fragments().iter().enumerate() {
        if frag.rows() < params.k_rows || frag.cols() < params.k_cols {
            return Err(Error::shape(format!(
                "fragment {} is {}x{}, smaller than the {}x{} kernel",
                i,
                frag.rows(),
                frag.cols(),
                params.k_rows,
                params.k_cols
            )));
        }
    }
    Ok(())
}

/// Forward pass. Output fragments shrink by `kernel - 1` per dimension and
/// keep their lineage.
pub fn conv_forward<S: Scalar>(input: &Storage<S>, params: &ConvParams<S>) -> Result<Storage<S>> {
    check_input_shapes(input, params)?;
    let mut out_fragments = Vec::with_capacity(input.n_fragments());
    for frag in input.fragments() {
        let out_rows = frag.rows() - params.k_rows + 1;
        let out_cols = frag.cols() - params.k_cols + 1;
        let mut maps = Vec::with_capacity(params.n_out);
        for o in 0..params.n_out {
            let mut pre = vec![params.bias[o]; out_rows * out_cols];
            for i in 0..params.n_in {
                let in_map = frag.map(i);
                for kr in 0..params.k_rows {
                    for kc in 0..params.k_cols {
                        let w = params.weight(o, i, kr, kc);
                        for m in 0..out_rows {
                            let in_row = in_map.row(m + kr);
                            let out_row = &mut pre[m * out_cols..(m + 1) * out_cols];
                            for (n, slot) in out_row.iter_mut().enumerate() {
                                *slot += w * in_row[n + kc];
                            }
                        }
                    }
                }
            }
            for v in pre.iter_mut() {
                *v = params.activation.apply(*v);
            }
            maps.push(Map::new(out_rows, out_cols, pre)?);
        }
        out_fragments.push(FragmentStack::new(maps, frag.lineage().clone())?);
    }
    Storage::new(out_fragments)
}

/// Backward pass. `output` must be the storage produced by [`conv_forward`]
/// on `input` (the activation derivative is reconstructed from it), and
/// `delta_out` the loss gradient with respect to that output. Parameter
/// gradients are accumulated across fragments.
pub fn conv_backward<S: Scalar>(
    input: &Storage<S>,
    output: &Storage<S>,
    delta_out: &Storage<S>,
    params: &ConvParams<S>,
) -> Result<(Storage<S>, ConvGrads<S>)> {
    check_input_shapes(input, params)?;
    if delta_out.n_fragments() != input.n_fragments()
        || output.n_fragments() != input.n_fragments()
    {
        return Err(Error::shape("conv backward: fragment count mismatch"));
    }
    if delta_out.n_maps() != params.n_out || output.n_maps() != params.n_out {
        return Err(Error::shape("conv backward: output channel mismatch"));
    }

    let mut grads = ConvGrads {
        weights: vec![S::ZERO; params.weights.len()],
        bias: vec![S::ZERO; params.n_out],
    };
    let mut in_fragments = Vec::with_capacity(input.n_fragments());

    for ((frag, out_frag), delta_frag) in input
        .fragments()
        .iter()
        .zip(output.fragments())
        .zip(delta_out.fragments())
    {
        let out_rows = frag.rows() - params.k_rows + 1;
        let out_cols = frag.cols() - params.k_cols + 1;
        if delta_frag.rows() != out_rows || delta_frag.cols() != out_cols {
            return Err(Error::shape(format!(
                "conv backward: delta fragment is {}x{}, expected {}x{}",
                delta_frag.rows(),
                delta_frag.cols(),
                out_rows,
                out_cols
            )));
        }

        let mut delta_in: Vec<Map<S>> = (0..params.n_in)
            .map(|_| Map::zeros(frag.rows(), frag.cols()))
            .collect();

        for o in 0..params.n_out {
            // Chain the activation derivative once per output element.
            let out_map = out_frag.map(o);
            let d_map = delta_frag.map(o);
            let mut d_pre = Vec::with_capacity(out_rows * out_cols);
            for (y, d) in out_map.values().iter().zip(d_map.values()) {
                d_pre.push(*d * params.activation.derivative_from_output(*y));
            }

            for d in &d_pre {
                grads.bias[o] += *d;
            }

            for i in 0..params.n_in {
                let in_map = frag.map(i);
                let din_map = &mut delta_in[i];
                for kr in 0..params.k_rows {
                    for kc in 0..params.k_cols {
                        let w_idx = params.weight_base(o, i) + kr * params.k_cols + kc;
                        let w = params.weights[w_idx];
                        let mut w_grad = S::ZERO;
                        for m in 0..out_rows {
                            let in_row = in_map.row(m + kr);
                            let d_row = &d_pre[m * out_cols..(m + 1) * out_cols];
                            for (n, d) in d_row.iter().enumerate() {
                                w_grad += *d * in_row[n + kc];
                            }
                            let din_cols = din_map.cols();
                            let din_row = &mut din_map.values_mut()
                                [(m + kr) * din_cols..(m + kr + 1) * din_cols];
                            for (n, d) in d_row.iter().enumerate() {
                                din_row[n + kc] += *d * w;
                            }
                        }
                        grads.weights[w_idx] += w_grad;
                    }
                }
            }
        }
        in_fragments.push(FragmentStack::new(delta_in, frag.lineage().clone())?);
    }

    Ok((Storage::new(in_fragments)?, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragment::storage_from_image;

    fn single_in_out(
        k: usize,
        weights: Vec<f64>,
        bias: f64,
        activation: Activation,
    ) -> ConvParams<f64> {
        ConvParams::new(1, 1, k, k, weights, vec![bias], activation).unwrap()
    }

    #[test]
    fn zero_kernel_gives_zero_output() {
        let input = storage_from_image(Map::from_fn(5, 5, |r, c| (r * c) as f64 + 0.5)).unwrap();
        let params = single_in_out(3, vec![0.0; 9], 0.0, Activation::Identity);
        let out = conv_forward(&input, &params).unwrap();
        assert_eq!(out.fragment(0).rows(), 3);
        assert_eq!(out.fragment(0).cols(), 3);
        assert!(out.fragment(0).map(0).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tanh_at_origin_is_zero() {
        let input = storage_from_image(Map::zeros(3, 3)).unwrap();
        let params = single_in_out(1, vec![1.0], 0.0, Activation::Tanh);
        let out = conv_forward(&input, &params).unwrap();
        assert!(out.fragment(0).map(0).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ones_kernel_sums_window() {
        let input = storage_from_image(Map::from_fn(4, 4, |_, _| 1.0)).unwrap();
        let params = single_in_out(3, vec![1.0; 9], 0.0, Activation::Identity);
        let out = conv_forward(&input, &params).unwrap();
        assert_eq!(out.fragment(0).rows(), 2);
        assert_eq!(out.fragment(0).cols(), 2);
        assert!(out.fragment(0).map(0).values().iter().all(|&v| v == 9.0));
    }

    #[test]
    fn fragment_smaller_than_kernel_is_shape_error() {
        let input = storage_from_image(Map::<f64>::zeros(2, 5)).unwrap();
        let params = single_in_out(3, vec![0.0; 9], 0.0, Activation::Identity);
        match conv_forward(&input, &params) {
            Err(Error::Shape(msg)) => assert!(msg.contains("fragment 0")),
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let input = storage_from_image(Map::<f64>::zeros(4, 4)).unwrap();
        let params = ConvParams::new(
            2,
            1,
            3,
            3,
            vec![0.0; 18],
            vec![0.0],
            Activation::Identity,
        )
        .unwrap();
        assert!(matches!(conv_forward(&input, &params), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_upstream_delta_gives_zero_gradients() {
        let input = storage_from_image(Map::from_fn(4, 4, |r, c| (r + 2 * c) as f64)).unwrap();
        let params = single_in_out(2, vec![0.3, -0.1, 0.2, 0.4], 0.1, Activation::Tanh);
        let output = conv_forward(&input, &params).unwrap();
        let zeros = Storage::new(vec![FragmentStack::new(
            vec![Map::zeros(3, 3)],
            output.fragment(0).lineage().clone(),
        )
        .unwrap()])
        .unwrap();
        let (delta_in, grads) = conv_backward(&input, &output, &zeros, &params).unwrap();
        assert!(delta_in
            .fragment(0)
            .map(0)
            .values()
            .iter()
            .all(|&v| v == 0.0));
        assert!(grads.weights.iter().all(|&v| v == 0.0));
        assert!(grads.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_by_one_kernel_closed_form() {
        // y = w*x (identity activation): dL/dw = sum(delta .* x), deltaIn = w*delta.
        let w = 0.7;
        let input = storage_from_image(Map::from_fn(3, 3, |r, c| (r * 3 + c) as f64 - 4.0)).unwrap();
        let params = single_in_out(1, vec![w], 0.0, Activation::Identity);
        let output = conv_forward(&input, &params).unwrap();
        let delta = storage_from_image(Map::from_fn(3, 3, |r, c| 0.1 * (r as f64) - 0.2 * (c as f64) + 0.05))
            .unwrap();
        let (delta_in, grads) = conv_backward(&input, &output, &delta, &params).unwrap();

        let expected_w_grad: f64 = input
            .fragment(0)
            .map(0)
            .values()
            .iter()
            .zip(delta.fragment(0).map(0).values())
            .map(|(x, d)| x * d)
            .sum();
        assert!((grads.weights[0] - expected_w_grad).abs() < 1e-12);
        for (din, d) in delta_in
            .fragment(0)
            .map(0)
            .values()
            .iter()
            .zip(delta.fragment(0).map(0).values())
        {
            assert!((din - w * d).abs() < 1e-12);
        }
    }

    #[test]
    fn duplicate_fragments_double_gradients() {
        let img = Map::from_fn(4, 4, |r, c| 0.2 * (r as f64) - 0.3 * (c as f64));
        let params = single_in_out(2, vec![0.5, -0.2, 0.1, 0.3], 0.05, Activation::Tanh);
        let one = storage_from_image(img.clone()).unwrap();
        let two = Storage::new(vec![
            one.fragment(0).clone(),
            one.fragment(0).clone(),
        ])
        .unwrap();

        let delta_map = Map::from_fn(3, 3, |r, c| 0.01 * ((r * 3 + c) as f64) - 0.04);
        let delta_one = Storage::new(vec![FragmentStack::new(
            vec![delta_map.clone()],
            OffsetLineage::empty(),
        )
        .unwrap()])
        .unwrap();
        let delta_two = Storage::new(vec![
            delta_one.fragment(0).clone(),
            delta_one.fragment(0).clone(),
        ])
        .unwrap();

        let out_one = conv_forward(&one, &params).unwrap();
        let out_two = conv_forward(&two, &params).unwrap();
        let (_, g1) = conv_backward(&one, &out_one, &delta_one, &params).unwrap();
        let (_, g2) = conv_backward(&two, &out_two, &delta_two, &params).unwrap();

        for (a, b) in g1.weights.iter().zip(&g2.weights) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        assert!((2.0 * g1.bias[0] - g2.bias[0]).abs() < 1e-12);
    }

    use crate::fragment::OffsetLineage;
}
