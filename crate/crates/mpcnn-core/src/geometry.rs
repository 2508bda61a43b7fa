//! Mirror padding and dense-pass geometry planning.
//!
//! To classify every pixel, the image is padded so that a full window exists
//! around each one. Padding is mirrored without repeating the border pixel
//! (row -1 reads row 1, row -2 reads row 2, ...). The planner then simulates
//! the layer chain and, if the floor rule of pooling would drop a block that
//! some pixel's output lives in, or leave a fragment smaller than a later
//! kernel, grows the bottom/right padding until the dense pass is guaranteed
//! to produce exactly one value per original pixel.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::arch::{ArchSpec, LayerSpec};
use crate::error::{Error, Result};
use crate::map::Map;
use crate::scalar::Scalar;

/// Reflect an out-of-range index back into `[0, len)` without repeating the
/// edge element. Valid for excursions up to `len - 1`.
#[inline]
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i as usize >= len {
        2 * (len - 1) - i as usize
    } else {
        i as usize
    }
}

/// Mirror-pad a map. Each padding amount must be smaller than the
/// corresponding image dimension (reflection has nothing to read otherwise).
pub fn mirror_pad<S: Scalar>(
    image: &Map<S>,
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
) -> Result<Map<S>> {
    let (rows, cols) = (image.rows(), image.cols());
    if top >= rows || bottom >= rows || left >= cols || right >= cols {
        return Err(Error::invalid(format!(
            "padding ({top}, {bottom}, {left}, {right}) too large for {rows}x{cols} image"
        )));
    }
    Ok(Map::from_fn(rows + top + bottom, cols + left + right, |r, c| {
        let src_r = reflect_index(r as isize - top as isize, rows);
        let src_c = reflect_index(c as isize - left as isize, cols);
        image.at(src_r, src_c)
    }))
}

/// Padding plus the simulated fragment geometry of a dense pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeometryPlan {
    pub image_rows: usize,
    pub image_cols: usize,
    pub pad_top: usize,
    pub pad_bottom: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    /// Product of all pooling factors.
    pub stride: usize,
    /// Fragment `(rows, cols)` after each layer, in emission order.
    pub layer_shapes: Vec<Vec<(usize, usize)>>,
}

impl GeometryPlan {
    pub fn padded_rows(&self) -> usize {
        self.image_rows + self.pad_top + self.pad_bottom
    }

    pub fn padded_cols(&self) -> usize {
        self.image_cols + self.pad_left + self.pad_right
    }
}

/// One per-dimension simulation path: extent left, composite offset and
/// stride of the pooling alignments chosen so far.
#[derive(Clone, Copy)]
struct DimPath {
    extent: usize,
    offset: usize,
    stride: usize,
}

/// Check whether a padded extent survives the layer chain with every
/// fragment large enough for each layer, and still covers all `image_extent`
/// output positions at the head.
fn dim_chain_ok(arch: &ArchSpec, padded: usize, image_extent: usize, use_rows: bool) -> bool {
    let mut paths = vec![DimPath {
        extent: padded,
        offset: 0,
        stride: 1,
    }];
    for layer in &arch.layers {
        match layer {
            LayerSpec::Conv { k_rows, k_cols, .. } => {
                let k = if use_rows { *k_rows } else { *k_cols };
                for p in paths.iter_mut() {
                    if p.extent < k {
                        return false;
                    }
                    p.extent -= k - 1;
                }
            }
            LayerSpec::Mpf { k } => {
                let mut next = Vec::with_capacity(paths.len() * k);
                for p in &paths {
                    if p.extent < *k {
                        return false;
                    }
                    for r in 0..*k {
                        next.push(DimPath {
                            extent: (p.extent - r) / k,
                            offset: p.offset + p.stride * r,
                            stride: p.stride * k,
                        });
                    }
                }
                paths = next;
            }
            LayerSpec::FcHead { .. } => {}
        }
    }
    paths.iter().all(|p| {
        let needed = if p.offset < image_extent {
            (image_extent - 1 - p.offset) / p.stride + 1
        } else {
            0
        };
        p.extent >= needed
    })
}

/// Compute the padding and per-layer fragment shapes for running `arch`
/// densely over an `image_rows x image_cols` image.
///
/// Base padding of `window - 1` (split as evenly as the parity allows, the
/// larger half on the bottom/right) centers a window on every pixel; extra
/// bottom/right padding is added until the whole chain is feasible. Errors if
/// the image is too small to mirror the required padding.
pub fn plan_geometry(arch: &ArchSpec, image_rows: usize, image_cols: usize) -> Result<GeometryPlan> {
    arch.check()?;
    if image_rows == 0 || image_cols == 0 {
        return Err(Error::invalid("image must be at least 1x1"));
    }

    let solve_dim = |window: usize, image_extent: usize, use_rows: bool| -> Result<(usize, usize)> {
        let near = (window - 1) / 2;
        let far_base = window - 1 - near;
        // The floor rule can cost at most one stride of positions per pooling
        // chain; anything beyond window + 4*stride extra would be a bug.
        let limit = window + 4 * arch.stride() + 8;
        for extra in 0..=limit {
            if dim_chain_ok(
                arch,
                image_extent + near + far_base + extra,
                image_extent,
                use_rows,
            ) {
                return Ok((near, far_base + extra));
            }
        }
        Err(Error::internal(
            "geometry planner failed to find a feasible padding",
        ))
    };

    let (pad_top, pad_bottom) = solve_dim(arch.window_rows, image_rows, true)?;
    let (pad_left, pad_right) = solve_dim(arch.window_cols, image_cols, false)?;

    if pad_top >= image_rows
        || pad_bottom >= image_rows
        || pad_left >= image_cols
        || pad_right >= image_cols
    {
        return Err(Error::invalid(format!(
            "image {image_rows}x{image_cols} too small to mirror-pad for a {}x{} window",
            arch.window_rows, arch.window_cols
        )));
    }

    // Full 2D shape simulation with the chosen padding, fragment by fragment
    // in emission order.
    let mut shapes: Vec<(usize, usize)> = vec![(
        image_rows + pad_top + pad_bottom,
        image_cols + pad_left + pad_right,
    )];
    let mut layer_shapes = Vec::with_capacity(arch.layers.len());
    for layer in &arch.layers {
        match layer {
            LayerSpec::Conv { k_rows, k_cols, .. } => {
                for s in shapes.iter_mut() {
                    *s = (s.0 - (k_rows - 1), s.1 - (k_cols - 1));
                }
            }
            LayerSpec::Mpf { k } => {
                let mut next = Vec::with_capacity(shapes.len() * k * k);
                for &(rows, cols) in &shapes {
                    for r in 0..*k {
                        for c in 0..*k {
                            next.push(((rows - r) / k, (cols - c) / k));
                        }
                    }
                }
                shapes = next;
            }
            LayerSpec::FcHead { .. } => {}
        }
        layer_shapes.push(shapes.clone());
    }

    Ok(GeometryPlan {
        image_rows,
        image_cols,
        pad_top,
        pad_bottom,
        pad_left,
        pad_right,
        stride: arch.stride(),
        layer_shapes,
    })
}
