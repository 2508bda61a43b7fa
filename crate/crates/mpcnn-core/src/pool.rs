//! Max pooling: the fragment-expanding layer and the single-offset patch
//! variant.
//!
//! Run densely, a factor-`k` pooling layer has `k*k` valid alignments against
//! the input grid. `mpf_forward` emits one output fragment per alignment and
//! input fragment, multiplying the fragment count by `k*k`; partial blocks at
//! the far edges are dropped (floor rule). Every chosen maximum's position is
//! recorded so the backward pass can route deltas; an input element that won
//! under several alignments accumulates all of their deltas.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fragment::{FragmentStack, OffsetLineage, PoolStep, Storage};
use crate::map::Map;
use crate::scalar::Scalar;

/// Argmax bookkeeping for one [`mpf_forward`] call.
#[derive(Debug, Clone)]
pub struct PoolIndexRecord {
    pub k: usize,
    pub n_maps: usize,
    input_shapes: Vec<(usize, usize)>,
    input_lineages: Vec<OffsetLineage>,
    outputs: Vec<PoolOutputIndices>,
}

/// Indices for one output fragment: which input fragment it came from and,
/// for every pooled cell of every map, the winning position in input-fragment
/// coordinates (map-major, then row-major).
#[derive(Debug, Clone)]
pub struct PoolOutputIndices {
    pub source: usize,
    pub rows: usize,
    pub cols: usize,
    argmax: Vec<(usize, usize)>,
}

impl PoolIndexRecord {
    pub fn n_outputs(&self) -> usize {
        self.outputs.len()
    }

    pub fn output(&self, i: usize) -> &PoolOutputIndices {
        &self.outputs[i]
    }

    pub fn input_shapes(&self) -> &[(usize, usize)] {
        &self.input_shapes
    }
}

fn block_max<S: Scalar>(
    map: &Map<S>,
    row0: usize,
    col0: usize,
    k: usize,
) -> (S, (usize, usize)) {
    // First occurrence in row-major scan order wins ties.
    let mut best = map.at(row0, col0);
    let mut best_pos = (row0, col0);
    for r in row0..row0 + k {
        for c in col0..col0 + k {
            let v = map.at(r, c);
            if v > best {
                best = v;
                best_pos = (r, c);
            }
        }
    }
    (best, best_pos)
}

/// Dense pooling. Emits, per input fragment, one fragment for each of the
/// `k*k` offsets in row-major offset order `(0,0), (0,1), .., (k-1,k-1)`.
pub fn mpf_forward<S: Scalar>(
    input: &Storage<S>,
    k: usize,
) -> Result<(Storage<S>, PoolIndexRecord)> {
    if k == 0 {
        return Err(Error::invalid("pooling factor must be >= 1"));
    }
    for (i, frag) in input.fragments().iter().enumerate() {
        if frag.rows() < k || frag.cols() < k {
            return Err(Error::shape(format!(
                "fragment {} is {}x{}, smaller than pooling factor {}",
                i,
                frag.rows(),
                frag.cols(),
                k
            )));
        }
    }

    let n_maps = input.n_maps();
    let mut out_fragments = Vec::with_capacity(input.n_fragments() * k * k);
    let mut outputs = Vec::with_capacity(input.n_fragments() * k * k);

    for (fi, frag) in input.fragments().iter().enumerate() {
        for r_off in 0..k {
            for c_off in 0..k {
                let out_rows = (frag.rows() - r_off) / k;
                let out_cols = (frag.cols() - c_off) / k;
                let mut maps = Vec::with_capacity(n_maps);
                let mut argmax = Vec::with_capacity(n_maps * out_rows * out_cols);
                for ch in 0..n_maps {
                    let src = frag.map(ch);
                    let mut values = Vec::with_capacity(out_rows * out_cols);
                    for m in 0..out_rows {
                        for n in 0..out_cols {
                            let (v, pos) =
                                block_max(src, r_off + k * m, c_off + k * n, k);
                            values.push(v);
                            argmax.push(pos);
                        }
                    }
                    maps.push(Map::new(out_rows, out_cols, values)?);
                }
                let lineage = frag.lineage().extended(PoolStep {
                    row_offset: r_off,
                    col_offset: c_off,
                    factor: k,
                })?;
                out_fragments.push(FragmentStack::new(maps, lineage)?);
                outputs.push(PoolOutputIndices {
                    source: fi,
                    rows: out_rows,
                    cols: out_cols,
                    argmax,
                });
            }
        }
    }

    let record = PoolIndexRecord {
        k,
        n_maps,
        input_shapes: input
            .fragments()
            .iter()
            .map(|f| (f.rows(), f.cols()))
            .collect(),
        input_lineages: input
            .fragments()
            .iter()
            .map(|f| f.lineage().clone())
            .collect(),
        outputs,
    };

    Ok((Storage::new(out_fragments)?, record))
}

/// Scatter-add deltas back through the recorded argmax positions. The result
/// has the shapes (and lineages) of the storage that was pooled.
pub fn mpf_backward<S: Scalar>(
    delta_out: &Storage<S>,
    record: &PoolIndexRecord,
) -> Result<Storage<S>> {
    if delta_out.n_fragments() != record.outputs.len() {
        return Err(Error::internal(format!(
            "pool backward: {} delta fragments for {} recorded outputs",
            delta_out.n_fragments(),
            record.outputs.len()
        )));
    }
    if delta_out.n_maps() != record.n_maps {
        return Err(Error::internal("pool backward: channel count mismatch"));
    }

    let mut delta_in: Vec<Vec<Map<S>>> = record
        .input_shapes
        .iter()
        .map(|&(r, c)| (0..record.n_maps).map(|_| Map::zeros(r, c)).collect())
        .collect();

    for (frag, out) in delta_out.fragments().iter().zip(&record.outputs) {
        if frag.rows() != out.rows || frag.cols() != out.cols {
            return Err(Error::internal(format!(
                "pool backward: delta fragment is {}x{}, recorded {}x{}",
                frag.rows(),
                frag.cols(),
                out.rows,
                out.cols
            )));
        }
        let cells = out.rows * out.cols;
        for ch in 0..record.n_maps {
            let d_map = frag.map(ch);
            let target = &mut delta_in[out.source][ch];
            for (cell, &(ar, ac)) in out.argmax[ch * cells..(ch + 1) * cells].iter().enumerate() {
                let m = cell / out.cols.max(1);
                let n = cell % out.cols.max(1);
                *target.at_mut(ar, ac) += d_map.at(m, n);
            }
        }
    }

    let fragments = delta_in
        .into_iter()
        .zip(&record.input_lineages)
        .map(|(maps, lineage)| FragmentStack::new(maps, lineage.clone()))
        .collect::<Result<Vec<_>>>()?;
    Storage::new(fragments)
}

/// Argmax record of the single-offset pooling used in patch mode.
#[derive(Debug, Clone)]
pub struct PatchPoolRecord {
    pub k: usize,
    pub n_maps: usize,
    pub input_rows: usize,
    pub input_cols: usize,
    pub rows: usize,
    pub cols: usize,
    argmax: Vec<(usize, usize)>,
}

/// Conventional max pooling at offset (0,0) only, used by the patch oracle.
/// Equal to the first fragment [`mpf_forward`] emits for the same input.
pub fn mp_forward_patch<S: Scalar>(
    maps: &[Map<S>],
    k: usize,
) -> Result<(Vec<Map<S>>, PatchPoolRecord)> {
    if k == 0 {
        return Err(Error::invalid("pooling factor must be >= 1"));
    }
    let first = maps
        .first()
        .ok_or_else(|| Error::invalid("patch pooling needs at least one map"))?;
    if first.rows() < k || first.cols() < k {
        return Err(Error::shape(format!(
            "patch {}x{} smaller than pooling factor {}",
            first.rows(),
            first.cols(),
            k
        )));
    }
    let out_rows = first.rows() / k;
    let out_cols = first.cols() / k;
    let mut out = Vec::with_capacity(maps.len());
    let mut argmax = Vec::with_capacity(maps.len() * out_rows * out_cols);
    for map in maps {
        let mut values = Vec::with_capacity(out_rows * out_cols);
        for m in 0..out_rows {
            for n in 0..out_cols {
                let (v, pos) = block_max(map, k * m, k * n, k);
                values.push(v);
                argmax.push(pos);
            }
        }
        out.push(Map::new(out_rows, out_cols, values)?);
    }
    Ok((
        out,
        PatchPoolRecord {
            k,
            n_maps: maps.len(),
            input_rows: first.rows(),
            input_cols: first.cols(),
            rows: out_rows,
            cols: out_cols,
            argmax,
        },
    ))
}

/// Backward of [`mp_forward_patch`].
pub fn mp_backward_patch<S: Scalar>(
    deltas: &[Map<S>],
    record: &PatchPoolRecord,
) -> Result<Vec<Map<S>>> {
    if deltas.len() != record.n_maps {
        return Err(Error::internal("patch pool backward: channel mismatch"));
    }
    let cells = record.rows * record.cols;
    let mut out = Vec::with_capacity(deltas.len());
    for (ch, d_map) in deltas.iter().enumerate() {
        if d_map.rows() != record.rows || d_map.cols() != record.cols {
            return Err(Error::internal("patch pool backward: shape mismatch"));
        }
        let mut target = Map::zeros(record.input_rows, record.input_cols);
        for (cell, &(ar, ac)) in record.argmax[ch * cells..(ch + 1) * cells].iter().enumerate() {
            let m = cell / record.cols.max(1);
            let n = cell % record.cols.max(1);
            *target.at_mut(ar, ac) += d_map.at(m, n);
        }
        out.push(target);
    }
    Ok(out)
}
