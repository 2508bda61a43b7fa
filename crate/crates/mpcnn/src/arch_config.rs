//! Architecture config files.
//!
//! Plain text, one directive per line, `#` comments allowed:
//!
//! ```text
//! window <rows> <cols>
//! conv <k_rows> <k_cols> <n_out> <activation>
//! mpf <k>
//! fc_head <hidden|-> <classes> <activation>
//! ```
//!
//! `window` must come first. Layers follow in network order. `hidden` is a
//! comma-separated list of hidden layer sizes, or `-` for none; `activation`
//! is one of `tanh`, `logistic`, `identity` and applies to hidden layers (the
//! final classifier layer is always linear, softmax comes from the loss).

use mpcnn_core::arch::{ArchSpec, LayerSpec};
use mpcnn_core::conv::Activation;

use crate::error::{AppError, Result};

pub fn parse_arch(text: &str) -> Result<ArchSpec> {
    let mut window: Option<(usize, usize)> = None;
    let mut layers = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let keyword = tokens.next().unwrap();
        let rest: Vec<&str> = tokens.collect();
        let bad = |msg: &str| AppError::config(format!("line {}: {msg}", lineno + 1));

        match keyword {
            "window" => {
                if rest.len() != 2 {
                    return Err(bad("window takes <rows> <cols>"));
                }
                let rows = rest[0].parse().map_err(|_| bad("bad window rows"))?;
                let cols = rest[1].parse().map_err(|_| bad("bad window cols"))?;
                window = Some((rows, cols));
            }
            "conv" => {
                if rest.len() != 4 {
                    return Err(bad("conv takes <k_rows> <k_cols> <n_out> <activation>"));
                }
                layers.push(LayerSpec::Conv {
                    k_rows: rest[0].parse().map_err(|_| bad("bad kernel rows"))?,
                    k_cols: rest[1].parse().map_err(|_| bad("bad kernel cols"))?,
                    n_out: rest[2].parse().map_err(|_| bad("bad map count"))?,
                    activation: parse_activation(rest[3])
                        .ok_or_else(|| bad("unknown activation"))?,
                });
            }
            "mpf" => {
                if rest.len() != 1 {
                    return Err(bad("mpf takes <k>"));
                }
                layers.push(LayerSpec::Mpf {
                    k: rest[0].parse().map_err(|_| bad("bad pooling factor"))?,
                });
            }
            "fc_head" => {
                if rest.len() != 3 {
                    return Err(bad("fc_head takes <hidden|-> <classes> <activation>"));
                }
                let hidden = if rest[0] == "-" {
                    Vec::new()
                } else {
                    rest[0]
                        .split(',')
                        .map(|t| t.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad("bad hidden sizes"))?
                };
                layers.push(LayerSpec::FcHead {
                    hidden,
                    classes: rest[1].parse().map_err(|_| bad("bad class count"))?,
                    hidden_activation: parse_activation(rest[2])
                        .ok_or_else(|| bad("unknown activation"))?,
                });
            }
            other => return Err(bad(&format!("unknown directive '{other}'"))),
        }
    }

    let (window_rows, window_cols) =
        window.ok_or_else(|| AppError::config("missing 'window' directive"))?;
    let arch = ArchSpec {
        window_rows,
        window_cols,
        layers,
    };
    if let Some((idx, msg)) = arch.validate().failure {
        return Err(AppError::config(format!(
            "invalid architecture at layer {idx}: {msg}"
        )));
    }
    Ok(arch)
}

fn parse_activation(s: &str) -> Option<Activation> {
    s.parse().ok()
}

/// Inverse of [`parse_arch`]; also embedded in model files.
pub fn write_arch(arch: &ArchSpec) -> String {
    let mut out = format!("window {} {}\n", arch.window_rows, arch.window_cols);
    for layer in &arch.layers {
        match layer {
            LayerSpec::Conv {
                k_rows,
                k_cols,
                n_out,
                activation,
            } => {
                out.push_str(&format!(
                    "conv {k_rows} {k_cols} {n_out} {}\n",
                    activation.as_str()
                ));
            }
            LayerSpec::Mpf { k } => out.push_str(&format!("mpf {k}\n")),
            LayerSpec::FcHead {
                hidden,
                classes,
                hidden_activation,
            } => {
                let hidden_str = if hidden.is_empty() {
                    "-".to_string()
                } else {
                    hidden
                        .iter()
                        .map(|h| h.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                };
                out.push_str(&format!(
                    "fc_head {hidden_str} {classes} {}\n",
                    hidden_activation.as_str()
                ));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const WINDOW32: &str = "\
# three conv banks with pooling on an even window
window 32 32
conv 5 5 8 tanh
mpf 2
conv 5 5 8 tanh
mpf 2
conv 5 5 8 tanh
fc_head 100 2 tanh
";

    #[test]
    fn parses_window32_example() {
        let arch = parse_arch(WINDOW32).unwrap();
        assert_eq!(arch.window_rows, 32);
        assert_eq!(arch.layers.len(), 6);
        assert!(arch.is_valid());
        assert_eq!(arch.classes(), Some(2));
    }

    #[test]
    fn roundtrips_through_writer() {
        let arch = parse_arch(WINDOW32).unwrap();
        let text = write_arch(&arch);
        let back = parse_arch(&text).unwrap();
        assert_eq!(back, arch);
    }

    #[test]
    fn rejects_invalid_geometry() {
        let text = "window 31 31\nconv 7 7 8 tanh\nmpf 2\nfc_head - 2 tanh\n";
        let err = parse_arch(text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("divisible"));
    }

    #[test]
    fn rejects_unknown_directive() {
        assert!(parse_arch("window 8 8\npool 2\nfc_head - 2 tanh\n").is_err());
    }

    #[test]
    fn empty_hidden_via_dash() {
        let text = "window 3 3\nconv 3 3 4 tanh\nfc_head - 2 logistic\n";
        let arch = parse_arch(text).unwrap();
        match arch.layers.last().unwrap() {
            LayerSpec::FcHead { hidden, .. } => assert!(hidden.is_empty()),
            _ => panic!(),
        }
    }
}
