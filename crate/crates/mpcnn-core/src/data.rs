//! Datasets: splitting, augmentation, downsampling, and a synthetic
//! two-texture segmentation task for desk-scale experiments.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::loss::LabelImage;
use crate::map::Map;
use crate::rng::SplitMix64;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl core::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid(format!("unknown split '{other}'"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetItem {
    pub id: String,
    pub image: Map<f64>,
    pub labels: LabelImage,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub items: Vec<DatasetItem>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(items: Vec<DatasetItem>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::invalid("dataset is empty"));
        }
        let mut class_count = 0;
        for item in &items {
            if item.image.rows() != item.labels.rows() || item.image.cols() != item.labels.cols() {
                return Err(Error::shape(format!(
                    "item '{}': image {}x{} vs labels {}x{}",
                    item.id,
                    item.image.rows(),
                    item.image.cols(),
                    item.labels.rows(),
                    item.labels.cols()
                )));
            }
            class_count = class_count.max(item.labels.class_count());
        }
        Ok(Dataset { items, class_count })
    }

    pub fn items_in(&self, split: Split) -> impl Iterator<Item = &DatasetItem> {
        self.items.iter().filter(move |i| i.split == split)
    }

    pub fn indices_in(&self, split: Split) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, i)| i.split == split)
            .map(|(idx, _)| idx)
            .collect()
    }
}

/// Apply one of the 8 symmetries of the square (index 0..8) to image and
/// labels together. Index = rotation count (0..4, clockwise quarter turns)
/// plus 4 if followed by a horizontal flip. Index 0 is the identity.
pub fn dihedral_augment(
    image: &Map<f64>,
    labels: &LabelImage,
    transform: usize,
) -> Result<(Map<f64>, LabelImage)> {
    if transform >= 8 {
        return Err(Error::invalid("dihedral transform index must be in 0..8"));
    }
    if image.rows() != labels.rows() || image.cols() != labels.cols() {
        return Err(Error::shape("image and labels must share dimensions"));
    }
    let rotations = transform % 4;
    let flip = transform >= 4;

    // Destination (r, c) -> source coordinates, built by composing the
    // inverse operations.
    let (mut rows, mut cols) = (image.rows(), image.cols());
    for _ in 0..rotations {
        core::mem::swap(&mut rows, &mut cols);
    }
    let src_of = |r: usize, c: usize| -> (usize, usize) {
        let (mut r, mut c) = (r, c);
        let (mut cur_rows, mut cur_cols) = (rows, cols);
        if flip {
            c = cur_cols - 1 - c;
        }
        // Undo each clockwise rotation: dst(r, c) = src(rows_src - 1 - c, r).
        for _ in 0..rotations {
            let (sr, sc) = (cur_cols - 1 - c, r);
            r = sr;
            c = sc;
            core::mem::swap(&mut cur_rows, &mut cur_cols);
        }
        (r, c)
    };

    let out_image = Map::from_fn(rows, cols, |r, c| {
        let (sr, sc) = src_of(r, c);
        image.at(sr, sc)
    });
    let mut out_labels = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let (sr, sc) = src_of(r, c);
            out_labels.push(labels.at(sr, sc) as u16);
        }
    }
    let out_labels = LabelImage::new(rows, cols, out_labels, labels.class_count())?;
    Ok((out_image, out_labels))
}

/// Block-mean downsampling; partial blocks at the far edges are dropped.
pub fn downsample<S: Scalar>(image: &Map<S>, factor: usize) -> Result<Map<S>> {
    if factor == 0 {
        return Err(Error::invalid("downsampling factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(image.clone());
    }
    let rows = image.rows() / factor;
    let cols = image.cols() / factor;
    let denom = S::from_usize(factor * factor);
    Ok(Map::from_fn(rows, cols, |r, c| {
        let mut sum = S::ZERO;
        for dr in 0..factor {
            for dc in 0..factor {
                sum += image.at(r * factor + dr, c * factor + dc);
            }
        }
        sum / denom
    }))
}

/// Majority vote per block; ties resolve to the lowest class index.
pub fn downsample_labels(labels: &LabelImage, factor: usize) -> Result<LabelImage> {
    if factor == 0 {
        return Err(Error::invalid("downsampling factor must be >= 1"));
    }
    if factor == 1 {
        return Ok(labels.clone());
    }
    let rows = labels.rows() / factor;
    let cols = labels.cols() / factor;
    let classes = labels.class_count();
    let mut out = Vec::with_capacity(rows * cols);
    let mut counts = vec![0usize; classes];
    for r in 0..rows {
        for c in 0..cols {
            counts.iter_mut().for_each(|x| *x = 0);
            for dr in 0..factor {
                for dc in 0..factor {
                    counts[labels.at(r * factor + dr, c * factor + dc)] += 1;
                }
            }
            let mut best = 0usize;
            for (cls, &n) in counts.iter().enumerate() {
                if n > counts[best] {
                    best = cls;
                }
            }
            out.push(best as u16);
        }
    }
    LabelImage::new(rows, cols, out, classes)
}

/// Assign splits by a seeded shuffle: `floor(n * fractions.0)` items train,
/// `floor(n * fractions.1)` validation, the rest test. Item order in the
/// returned dataset is unchanged.
pub fn split_dataset(
    items: Vec<(String, Map<f64>, LabelImage)>,
    fractions: (f64, f64),
    seed: u64,
) -> Result<Dataset> {
    if items.is_empty() {
        return Err(Error::invalid("cannot split an empty item list"));
    }
    if fractions.0 <= 0.0 || fractions.1 <= 0.0 || fractions.0 + fractions.1 > 1.0 {
        return Err(Error::invalid(
            "split fractions must be positive and sum to at most 1",
        ));
    }
    let n = items.len();
    let n_train = (n as f64 * fractions.0) as usize;
    let n_val = (n as f64 * fractions.1) as usize;

    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let mut splits = vec![Split::Test; n];
    for (rank, &idx) in order.iter().enumerate() {
        splits[idx] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Validation
        } else {
            Split::Test
        };
    }

    Dataset::new(
        items
            .into_iter()
            .zip(splits)
            .map(|((id, image, labels), split)| DatasetItem {
                id,
                image,
                labels,
                split,
            })
            .collect(),
    )
}

/// Synthetic segmentation task: each image holds a rectangle of one striped
/// texture inside a field of the other, plus noise. The two textures are
/// square-wave stripes of the same period and intensity levels, differing
/// only in orientation, so single-pixel intensity carries no class
/// information and the task genuinely requires spatial context. Labels are
/// exact. The rectangle covers roughly 40-60% of the image. Items are split
/// 50/25/25.
pub fn synth_texture_dataset(
    n_images: usize,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_images == 0 {
        return Err(Error::invalid("need at least one image"));
    }
    if rows < 8 || cols < 8 {
        return Err(Error::invalid("images must be at least 8x8"));
    }
    const PERIOD: usize = 4;
    const LEVEL_LO: f64 = 0.3;
    const LEVEL_HI: f64 = 0.7;
    const NOISE: f64 = 0.04;

    let mut rng = SplitMix64::new(seed);
    let mut items = Vec::with_capacity(n_images);
    for i in 0..n_images {
        // Similar rectangle area across images keeps the per-image class
        // prior stable, so per-image updates cannot chase the prior instead
        // of the texture.
        let frac_h = rng.uniform(0.62, 0.78);
        let frac_w = rng.uniform(0.62, 0.78);
        let rect_rows = ((rows as f64 * frac_h) as usize).clamp(1, rows);
        let rect_cols = ((cols as f64 * frac_w) as usize).clamp(1, cols);
        let r0 = rng.next_below(rows - rect_rows + 1);
        let c0 = rng.next_below(cols - rect_cols + 1);
        let phase_bg = rng.next_below(PERIOD);
        let phase_fg = rng.next_below(PERIOD);

        let mut labels = Vec::with_capacity(rows * cols);
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let inside =
                    r >= r0 && r < r0 + rect_rows && c >= c0 && c < c0 + rect_cols;
                labels.push(inside as u16);
                // Background: vertical stripes (value varies with column).
                // Rectangle: horizontal stripes.
                let stripe = if inside {
                    ((r + phase_fg) / (PERIOD / 2)) % 2 == 0
                } else {
                    ((c + phase_bg) / (PERIOD / 2)) % 2 == 0
                };
                let base = if stripe { LEVEL_HI } else { LEVEL_LO };
                let v = base + rng.uniform(-NOISE, NOISE);
                values.push(v.clamp(0.0, 1.0));
            }
        }
        items.push((
            format!("synth_{i:03}"),
            Map::new(rows, cols, values)?,
            LabelImage::new(rows, cols, labels, 2)?,
        ));
    }
    split_dataset(items, (0.5, 0.25), seed ^ 0x5eed_0001)
}
