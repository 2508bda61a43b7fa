//! Model files: magic string and version, the architecture in config syntax,
//! then every layer's weights and biases as text tensor dumps in layer order
//! (weights before bias; head sublayers in order).
//!
//! ```text
//! MPCNN-MODEL 1
//! window 32 32
//! conv 5 5 8 tanh
//! ...
//! fc_head 100 2 tanh
//! params
//! <tensor dumps>
//! end
//! ```
//!
//! Conv weights dump as `k_rows x k_cols x (n_out * n_in)` (output-major),
//! conv bias as `1 x n_out x 1`; head sublayer weights as `n_out x n_in x 1`,
//! bias as `1 x n_out x 1`. All values carry 17 fractional digits, so a
//! save/load cycle is bit-exact and identical models produce identical files.

use std::fs;
use std::path::Path;

use mpcnn_core::network::{LayerParams, Model};

use crate::arch_config;
use crate::error::{core_config_err, io_err, AppError, Result};
use crate::tensor_dump::{read_tensor, write_tensor};

const MAGIC: &str = "MPCNN-MODEL 1";

pub fn save_model(path: &Path, model: &Model<f64>) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(arch_config::write_arch(&model.arch).as_bytes());
    out.extend_from_slice(b"params\n");
    for layer in &model.layers {
        match layer {
            LayerParams::Conv(p) => {
                write_tensor(&mut out, p.k_rows, p.k_cols, p.n_out * p.n_in, &p.weights)?;
                write_tensor(&mut out, 1, p.n_out, 1, &p.bias)?;
            }
            LayerParams::Mpf { .. } => {}
            LayerParams::Head(h) => {
                for l in &h.layers {
                    write_tensor(&mut out, l.n_out, l.n_in, 1, &l.weights)?;
                    write_tensor(&mut out, 1, l.n_out, 1, &l.bias)?;
                }
            }
        }
    }
    out.extend_from_slice(b"end\n");
    fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn load_model(path: &Path) -> Result<Model<f64>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let magic = lines
        .next()
        .ok_or_else(|| AppError::data(format!("{}: empty model file", path.display())))?;
    if magic.trim() != MAGIC {
        return Err(AppError::data(format!(
            "{}: not a model file (bad magic '{magic}')",
            path.display()
        )));
    }

    let mut arch_text = String::new();
    for line in lines.by_ref() {
        if line.trim() == "params" {
            break;
        }
        arch_text.push_str(line);
        arch_text.push('\n');
    }
    let arch = arch_config::parse_arch(&arch_text)
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;

    let rest: String = lines.collect::<Vec<_>>().join("\n");
    let mut tokens = rest.split_whitespace().take_while(|t| *t != "end");

    let mut model = Model::<f64>::zeros(arch).map_err(core_config_err)?;
    for layer in model.layers.iter_mut() {
        match layer {
            LayerParams::Conv(p) => {
                let (kr, kc, nm, weights) = read_tensor(&mut tokens)
                    .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
                if kr != p.k_rows || kc != p.k_cols || nm != p.n_out * p.n_in {
                    return Err(AppError::data(format!(
                        "{}: conv weight tensor {kr}x{kc}x{nm} does not match architecture",
                        path.display()
                    )));
                }
                p.weights = weights;
                let (_, nb, _, bias) = read_tensor(&mut tokens)
                    .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
                if nb != p.n_out {
                    return Err(AppError::data(format!(
                        "{}: conv bias length mismatch",
                        path.display()
                    )));
                }
                p.bias = bias;
            }
            LayerParams::Mpf { .. } => {}
            LayerParams::Head(h) => {
                for l in h.layers.iter_mut() {
                    let (no, ni, _, weights) = read_tensor(&mut tokens)
                        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
                    if no != l.n_out || ni != l.n_in {
                        return Err(AppError::data(format!(
                            "{}: head weight tensor {no}x{ni} does not match architecture",
                            path.display()
                        )));
                    }
                    l.weights = weights;
                    let (_, nb, _, bias) = read_tensor(&mut tokens)
                        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
                    if nb != l.n_out {
                        return Err(AppError::data(format!(
                            "{}: head bias length mismatch",
                            path.display()
                        )));
                    }
                    l.bias = bias;
                }
            }
        }
    }
    Ok(model)
}
