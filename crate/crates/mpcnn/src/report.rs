//! CSV report writers. Summary values go in `#`-prefixed comment lines above
//! the header so the table itself stays a plain CSV.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use mpcnn_core::optim::TrainLog;

use crate::error::{io_err, Result};

fn opt_to_string(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Per-epoch training log: `epoch,meanLoss,valPixelError,acceptedAlphaMean,skippedSteps`.
pub fn write_epoch_log(path: &Path, log: &TrainLog) -> Result<()> {
    let mut out = String::from("epoch,meanLoss,valPixelError,acceptedAlphaMean,skippedSteps\n");
    for e in &log.epochs {
        out.push_str(&format!(
            "{},{:.12},{},{:.6},{}\n",
            e.epoch,
            e.mean_loss,
            opt_to_string(e.val_pixel_error),
            e.accepted_alpha_mean,
            e.skipped_steps
        ));
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone)]
pub struct DetectRow {
    pub id: String,
    pub split: String,
    pub defect_pixels: usize,
    pub flagged: bool,
    pub ground_truth: bool,
}

pub fn write_detect_report(
    path: &Path,
    threshold: usize,
    validation_error_pct: Option<f64>,
    test_error_pct: Option<f64>,
    rows: &[DetectRow],
) -> Result<()> {
    let mut f = File::create(path).map_err(|e| io_err(path, e))?;
    let mut out = format!("# threshold={threshold}\n");
    if let Some(v) = validation_error_pct {
        out.push_str(&format!("# validationErrorPercent={v:.4}\n"));
    }
    if let Some(v) = test_error_pct {
        out.push_str(&format!("# testErrorPercent={v:.4}\n"));
    }
    out.push_str("id,split,defectPixelCount,flagged,groundTruthFlag\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.id, r.split, r.defect_pixels, r.flagged, r.ground_truth
        ));
    }
    f.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub balanced_error: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub positive_class: usize,
    pub seed: u64,
    /// `confusion[true][pred]` over all test pixels.
    pub confusion: Vec<Vec<usize>>,
}

pub fn write_eval_report(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = format!(
        "# balancedError={:.6}\n# nPos={}\n# nNeg={}\n# positiveClass={}\n# seed={}\n",
        report.balanced_error, report.n_pos, report.n_neg, report.positive_class, report.seed
    );
    out.push_str("trueClass,predClass,pixelCount\n");
    for (t, row) in report.confusion.iter().enumerate() {
        for (p, count) in row.iter().enumerate() {
            out.push_str(&format!("{t},{p},{count}\n"));
        }
    }
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub dense_patches_per_sec: f64,
    pub patch_mode_patches_per_sec: f64,
    pub speedup_factor: f64,
    pub image_rows: usize,
    pub image_cols: usize,
    pub arch_id: String,
    pub precision: String,
}

pub fn write_bench_report(path: &Path, r: &BenchReport) -> Result<()> {
    let out = format!(
        "densePatchesPerSec,patchModePatchesPerSec,speedupFactor,imageRows,imageCols,archId,precision\n\
         {:.3},{:.3},{:.3},{},{},{},{}\n",
        r.dense_patches_per_sec,
        r.patch_mode_patches_per_sec,
        r.speedup_factor,
        r.image_rows,
        r.image_cols,
        r.arch_id,
        r.precision
    );
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

pub fn bench_table(r: &BenchReport) -> String {
    format!(
        "arch:      {}\n\
         image:     {}x{} ({})\n\
         dense:     {:>12.1} patches/s\n\
         patch:     {:>12.1} patches/s\n\
         speedup:   {:>12.1}x\n",
        r.arch_id,
        r.image_rows,
        r.image_cols,
        r.precision,
        r.dense_patches_per_sec,
        r.patch_mode_patches_per_sec,
        r.speedup_factor
    )
}
