//! Dataset manifests: CSV with columns `id,imagePath,labelPath,split`.
//! Paths are resolved relative to the manifest's directory.

use std::path::{Path, PathBuf};

use mpcnn_core::data::{Dataset, DatasetItem, Split};

use crate::error::{core_data_err, AppError, Result};
use crate::image_io::{load_image, load_label_image};

#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub id: String,
    pub image_path: PathBuf,
    pub label_path: Option<PathBuf>,
    pub split: Split,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?
        .clone();
    let expected = ["id", "imagePath", "labelPath", "split"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(AppError::data(format!(
            "{}: manifest header must be {}",
            path.display(),
            expected.join(",")
        )));
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
        if record.len() != 4 {
            return Err(AppError::data(format!(
                "{}: row has {} fields, expected 4",
                path.display(),
                record.len()
            )));
        }
        let label_field = record[2].trim();
        entries.push(ManifestEntry {
            id: record[0].trim().to_string(),
            image_path: base.join(record[1].trim()),
            label_path: if label_field.is_empty() {
                None
            } else {
                Some(base.join(label_field))
            },
            split: record[3]
                .trim()
                .parse()
                .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?,
        });
    }
    if entries.is_empty() {
        return Err(AppError::data(format!(
            "{}: manifest has no entries",
            path.display()
        )));
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    writer
        .write_record(["id", "imagePath", "labelPath", "split"])
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let rel = |p: &Path| -> String {
        p.strip_prefix(base)
            .unwrap_or(p)
            .to_string_lossy()
            .into_owned()
    };
    for e in entries {
        writer
            .write_record([
                e.id.as_str(),
                &rel(&e.image_path),
                &e.label_path.as_deref().map(rel).unwrap_or_default(),
                e.split.as_str(),
            ])
            .map_err(|er| AppError::data(format!("{}: {er}", path.display())))?;
    }
    writer
        .flush()
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))
}

/// Load every manifest entry into memory. All entries must carry labels
/// (training, evaluation and detection need per-pixel ground truth).
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let entries = read_manifest(path)?;
    let mut items = Vec::with_capacity(entries.len());
    for e in &entries {
        let image = load_image(&e.image_path)?;
        let label_path = e.label_path.as_ref().ok_or_else(|| {
            AppError::data(format!("manifest entry '{}' has no label image", e.id))
        })?;
        let labels = load_label_image(label_path)?;
        items.push(DatasetItem {
            id: e.id.clone(),
            image,
            labels,
            split: e.split,
        });
    }
    Dataset::new(items).map_err(core_data_err)
}
