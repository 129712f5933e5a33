//! IDX dataset loading, class filtering and seeded stratified splits.
//!
//! The IDX container is the MNIST distribution format: a big-endian `u32`
//! magic (`0x00000803` for images, `0x00000801` for labels), big-endian `u32`
//! dimensions, then raw bytes. Fashion-MNIST and EMNIST digits use the same
//! layout.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const IMAGE_SIDE: usize = 28;
pub const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const MAX_LABEL: u8 = 9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledImage {
    /// Position in the source file.
    pub index: usize,
    /// Row-major 28×28 intensities.
    pub pixels: Vec<u8>,
    pub label: u8,
}

impl LabeledImage {
    pub fn raw_features(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64).collect()
    }
}

fn format_err(path: &Path, field: &'static str, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        field,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path, field: &'static str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(path, field, "file ends inside the header"))
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Vec<LabeledImage>> {
    let images = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx(&images, images_path, &labels, labels_path)
}

/// Parses in-memory IDX buffers; the paths only label errors.
pub fn parse_idx(
    images: &[u8],
    images_path: &Path,
    labels: &[u8],
    labels_path: &Path,
) -> Result<Vec<LabeledImage>> {
    let magic = read_u32(images, 0, images_path, "magic")?;
    if magic != IMAGES_MAGIC {
        return Err(format_err(
            images_path,
            "magic",
            format!("expected {IMAGES_MAGIC:#010x}, found {magic:#010x}"),
        ));
    }
    let count = read_u32(images, 4, images_path, "count")? as usize;
    let rows = read_u32(images, 8, images_path, "rows")? as usize;
    let cols = read_u32(images, 12, images_path, "cols")? as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(format_err(
            images_path,
            "dimensions",
            format!("expected {IMAGE_SIDE}×{IMAGE_SIDE}, found {rows}×{cols}"),
        ));
    }
    let body = &images[16..];
    if body.len() != count * PIXELS {
        return Err(format_err(
            images_path,
            "data",
            format!(
                "header declares {count} images ({} bytes), body has {} bytes",
                count * PIXELS,
                body.len()
            ),
        ));
    }

    let label_magic = read_u32(labels, 0, labels_path, "magic")?;
    if label_magic != LABELS_MAGIC {
        return Err(format_err(
            labels_path,
            "magic",
            format!("expected {LABELS_MAGIC:#010x}, found {label_magic:#010x}"),
        ));
    }
    let label_count = read_u32(labels, 4, labels_path, "count")? as usize;
    if label_count != count {
        return Err(format_err(
            labels_path,
            "count",
            format!("{label_count} labels for {count} images"),
        ));
    }
    let label_body = &labels[8..];
    if label_body.len() != label_count {
        return Err(format_err(
            labels_path,
            "data",
            format!(
                "header declares {label_count} labels, body has {} bytes",
                label_body.len()
            ),
        ));
    }

    body.chunks_exact(PIXELS)
        .zip(label_body)
        .enumerate()
        .map(|(index, (pixels, &label))| {
            if label > MAX_LABEL {
                return Err(format_err(
                    labels_path,
                    "label",
                    format!("label {label} at index {index} exceeds {MAX_LABEL}"),
                ));
            }
            Ok(LabeledImage {
                index,
                pixels: pixels.to_vec(),
                label,
            })
        })
        .collect()
}

/// Serializes images and labels back into IDX buffers.
pub fn write_idx(images: &[LabeledImage]) -> (Vec<u8>, Vec<u8>) {
    let n = images.len() as u32;
    let mut img = Vec::with_capacity(16 + images.len() * PIXELS);
    for v in [IMAGES_MAGIC, n, IMAGE_SIDE as u32, IMAGE_SIDE as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    let mut lab = Vec::with_capacity(8 + images.len());
    lab.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    lab.extend_from_slice(&n.to_be_bytes());
    for im in images {
        img.extend_from_slice(&im.pixels);
        lab.push(im.label);
    }
    (img, lab)
}

/// Original label → contiguous class index, assigned in ascending label order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    labels: Vec<u8>,
}

impl ClassMap {
    pub fn new(classes: &[u8]) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Argument("class list is empty".into()));
        }
        let mut labels = classes.to_vec();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument(format!("duplicate classes in {classes:?}")));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > MAX_LABEL) {
            return Err(Error::Argument(format!("unknown class {bad}")));
        }
        Ok(Self { labels })
    }

    pub fn class_of(&self, label: u8) -> Option<usize> {
        self.labels.binary_search(&label).ok()
    }

    pub fn label_of(&self, class: usize) -> Option<u8> {
        self.labels.get(class).copied()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Filtered {
    pub items: Vec<LabeledImage>,
    pub class_map: ClassMap,
}

/// Keeps only the listed labels. Every listed label must occur in `data`.
pub fn filter_classes(data: &[LabeledImage], classes: &[u8]) -> Result<Filtered> {
    let class_map = ClassMap::new(classes)?;
    let items: Vec<LabeledImage> = data
        .iter()
        .filter(|im| class_map.class_of(im.label).is_some())
        .cloned()
        .collect();
    for &label in class_map.labels() {
        if !items.iter().any(|im| im.label == label) {
            return Err(Error::Argument(format!("unknown class {label}: no samples")));
        }
    }
    Ok(Filtered { items, class_map })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    pub test_fraction: f64,
    pub train_cap_per_class: Option<usize>,
    pub test_cap_per_class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<LabeledImage>,
    pub test: Vec<LabeledImage>,
    pub class_map: ClassMap,
}

impl DatasetSplit {
    pub fn class_counts(items: &[LabeledImage]) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for im in items {
            *counts.entry(im.label).or_insert(0) += 1;
        }
        counts
    }
}

/// Seeded stratified split with optional per-class caps.
pub fn split_and_cap(filtered: &Filtered, options: &SplitOptions, seed: u64) -> Result<DatasetSplit> {
    let f = options.test_fraction;
    if !(f > 0.0 && f < 1.0) {
        return Err(Error::Argument(format!("test fraction {f} must lie in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for &label in filtered.class_map.labels() {
        let mut members: Vec<&LabeledImage> =
            filtered.items.iter().filter(|im| im.label == label).collect();
        members.shuffle(&mut rng);
        let n_test = (members.len() as f64 * f).round() as usize;
        let (test_part, train_part) = members.split_at(n_test);

        let take = |part: &[&LabeledImage], cap: Option<usize>, which: &str| {
            let n = match cap {
                Some(c) if c > part.len() => {
                    log::warn!(
                        "{which} cap {c} exceeds the {} samples of class {label}; using all",
                        part.len()
                    );
                    part.len()
                }
                Some(c) => c,
                None => part.len(),
            };
            part[..n].iter().map(|&im| im.clone()).collect::<Vec<_>>()
        };
        test.extend(take(test_part, options.test_cap_per_class, "test"));
        train.extend(take(train_part, options.train_cap_per_class, "train"));
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok(DatasetSplit {
        train,
        test,
        class_map: filtered.class_map.clone(),
    })
}
