//! Instance datasets: the on-disk `index.json` format, synthetic suites and
//! the two-source merge.
//!
//! ```text
//! index.json
//! {
//!   "images":    [{"id", "file", "height", "width"}],
//!   "instances": [{"id", "image_id", "source": "general" | "fine",
//!                  "mask_file"?: path, "polygon"?: [[x, y], ...], "category"?}]
//! }
//! ```
//!
//! Paths are relative to the dataset directory. Mask files are 8-bit
//! single-channel images, nonzero = foreground. Polygons are in pixel
//! coordinates and rasterized by pixel-center containment.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageproc::{iou, rasterize_polygon};
use crate::par::{self, Parallelism};
use crate::types::{BinaryMask, ColorImage};

pub const INDEX_FILE: &str = "index.json";
pub const SYNTHETIC_SIZE: usize = 96;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    #[default]
    General,
    Fine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRecord {
    pub instance_id: String,
    pub image_id: String,
    pub mask: BinaryMask,
    pub source: Source,
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub file: String,
    pub image: Arc<ColorImage>,
}

/// Images keyed by id plus their instances, sorted by instance id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub images: BTreeMap<String, ImageRecord>,
    pub instances: Vec<InstanceRecord>,
}

impl Dataset {
    pub fn image(&self, id: &str) -> Result<&ColorImage> {
        self.images
            .get(id)
            .map(|r| r.image.as_ref())
            .ok_or_else(|| Error::Dataset(format!("unknown image `{id}`")))
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    fn sort(&mut self) {
        self.instances
            .sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct IndexFile {
    #[serde(default)]
    images: Vec<IndexImage>,
    #[serde(default)]
    instances: Vec<IndexInstance>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexImage {
    id: String,
    file: String,
    height: usize,
    width: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexInstance {
    id: String,
    image_id: String,
    #[serde(default)]
    source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mask_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    polygon: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
}

fn load_image(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            source: other,
        },
    })
}

/// Loads and validates a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let index_path = dir.join(INDEX_FILE);
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let index: IndexFile = serde_json::from_str(&text)?;

    let loaded = par::map_indexed(&index.images, Parallelism::default(), |_, entry| {
        let img = load_image(&dir.join(&entry.file))?.to_rgb8();
        let image = ColorImage::from_rgb8(&img);
        if image.dims() != (entry.height, entry.width) {
            return Err(Error::Dataset(format!(
                "image `{}` is {:?}, index says {}x{}",
                entry.id,
                image.dims(),
                entry.height,
                entry.width
            )));
        }
        Ok(ImageRecord {
            id: entry.id.clone(),
            file: entry.file.clone(),
            image: Arc::new(image),
        })
    });
    let mut images = BTreeMap::new();
    for rec in loaded {
        let rec = rec?;
        if images.insert(rec.id.clone(), rec).is_some() {
            return Err(Error::Dataset("duplicate image id".into()));
        }
    }

    let instances = par::map_indexed(&index.instances, Parallelism::default(), |_, entry| {
        let img = images
            .get(&entry.image_id)
            .ok_or_else(|| Error::instance(&entry.id, format!("unknown image `{}`", entry.image_id)))?;
        let (h, w) = img.image.dims();
        let mask = match (&entry.mask_file, &entry.polygon) {
            (Some(file), None) => {
                let path = dir.join(file);
                let gray = load_image(&path)
                    .map_err(|e| Error::instance(&entry.id, e.to_string()))?
                    .to_luma8();
                let (mw, mh) = gray.dimensions();
                if (mh as usize, mw as usize) != (h, w) {
                    return Err(Error::instance(
                        &entry.id,
                        format!("mask is {mh}x{mw}, image is {h}x{w}"),
                    ));
                }
                BinaryMask::from_vec(h, w, gray.pixels().map(|p| p.0[0] != 0).collect())?
            }
            (None, Some(poly)) => {
                let verts: Vec<(f64, f64)> = poly.iter().map(|v| (v[0], v[1])).collect();
                rasterize_polygon(&verts, h, w).map_err(|e| Error::instance(&entry.id, e.to_string()))?
            }
            _ => {
                return Err(Error::instance(
                    &entry.id,
                    "exactly one of mask_file and polygon is required",
                ))
            }
        };
        if mask.is_empty() {
            return Err(Error::instance(&entry.id, "mask is empty"));
        }
        Ok(InstanceRecord {
            instance_id: entry.id.clone(),
            image_id: entry.image_id.clone(),
            mask,
            source: entry.source,
            category: entry.category.clone(),
        })
    });
    let mut dataset = Dataset {
        images,
        instances: instances.into_iter().collect::<Result<_>>()?,
    };
    dataset.sort();
    Ok(dataset)
}

fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

/// Writes images and masks as PNG files plus `index.json`.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    for sub in ["images", "masks"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut index = IndexFile::default();
    for rec in dataset.images.values() {
        let file = format!("images/{}.png", file_stem(&rec.id));
        let path = dir.join(&file);
        rec.image.to_rgb8().save(&path).map_err(|e| Error::Image { path: path.clone(), source: e })?;
        index.images.push(IndexImage {
            id: rec.id.clone(),
            file,
            height: rec.image.height(),
            width: rec.image.width(),
        });
    }
    for inst in &dataset.instances {
        let file = format!("masks/{}.png", file_stem(&inst.instance_id));
        let path = dir.join(&file);
        mask_to_gray(&inst.mask)
            .save(&path)
            .map_err(|e| Error::Image { path: path.clone(), source: e })?;
        index.instances.push(IndexInstance {
            id: inst.instance_id.clone(),
            image_id: inst.image_id.clone(),
            source: inst.source,
            mask_file: Some(file),
            polygon: None,
            category: inst.category.clone(),
        });
    }
    let path = dir.join(INDEX_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&path, e))
}

pub fn mask_to_gray(mask: &BinaryMask) -> image::GrayImage {
    image::GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |x, y| {
        image::Luma([if mask.get(y as usize, x as usize) { 255 } else { 0 }])
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub iou_threshold: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self { iou_threshold: 0.80 }
    }
}

/// All fine records, plus every general record that no fine record on the
/// same image overlaps with IoU strictly above the threshold. Fine records
/// come first, each group in input order.
pub fn merge_sources(general: &[InstanceRecord], fine: &[InstanceRecord], cfg: &MergeConfig) -> Vec<InstanceRecord> {
    let mut by_image: BTreeMap<&str, Vec<&InstanceRecord>> = BTreeMap::new();
    for f in fine {
        by_image.entry(f.image_id.as_str()).or_default().push(f);
    }
    let duplicated = |g: &InstanceRecord| {
        by_image.get(g.image_id.as_str()).is_some_and(|fs| {
            fs.iter()
                .any(|f| iou(&g.mask, &f.mask).is_ok_and(|v| v > cfg.iou_threshold))
        })
    };
    fine.iter()
        .cloned()
        .chain(general.iter().filter(|g| !duplicated(g)).cloned())
        .collect()
}

/// Merges two datasets sharing an image space. Images are unioned (fine
/// wins on id collisions); instances follow [`merge_sources`].
pub fn merge_datasets(general: &Dataset, fine: &Dataset, cfg: &MergeConfig) -> Dataset {
    let mut images = general.images.clone();
    images.extend(fine.images.clone());
    let mut out = Dataset {
        images,
        instances: merge_sources(&general.instances, &fine.instances, cfg),
    };
    out.sort();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    TwoColorShapes,
    TexturedShapes,
}

impl FromStr for SuiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_color_shapes" => Ok(SuiteKind::TwoColorShapes),
            "textured_shapes" => Ok(SuiteKind::TexturedShapes),
            _ => Err(Error::InvalidArgument(format!("unknown suite kind `{s}`"))),
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SuiteKind::TwoColorShapes => "two_color_shapes",
            SuiteKind::TexturedShapes => "textured_shapes",
        })
    }
}

fn random_shape(rng: &mut ChaCha8Rng, size: usize) -> BinaryMask {
    let s = size as f64;
    loop {
        let cy = rng.random_range(0.3 * s..0.7 * s);
        let cx = rng.random_range(0.3 * s..0.7 * s);
        let r0 = rng.random_range(0.1 * s..0.23 * s);
        let mask = if rng.random_bool(0.5) {
            // rotated ellipse
            let a = r0 * rng.random_range(0.8..1.4);
            let b = r0 * rng.random_range(0.6..1.0);
            let t: f64 = rng.random_range(0.0..PI);
            let (st, ct) = t.sin_cos();
            BinaryMask::from_fn(size, size, |r, c| {
                let (y, x) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
                let u = x * ct + y * st;
                let v = -x * st + y * ct;
                (u / a).powi(2) + (v / b).powi(2) <= 1.0
            })
        } else {
            // star-convex blob with a few radial harmonics
            let harmonics: Vec<(f64, f64, f64)> = (2..=5)
                .map(|k| (k as f64, rng.random_range(0.0..0.35 / k as f64 * 2.0), rng.random_range(0.0..2.0 * PI)))
                .collect();
            BinaryMask::from_fn(size, size, |r, c| {
                let (y, x) = (r as f64 + 0.5 - cy, c as f64 + 0.5 - cx);
                let theta = y.atan2(x);
                let radius = r0 * (1.0 + harmonics.iter().map(|(k, a, p)| a * (k * theta + p).cos()).sum::<f64>());
                (x * x + y * y).sqrt() <= radius
            })
        };
        if mask.area() >= 80 {
            return mask;
        }
    }
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.random_range(0.0..255.0),
        rng.random_range(0.0..255.0),
        rng.random_range(0.0..255.0),
    ]
}

fn color_dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>().sqrt()
}

/// Pair of colors at least `min_dist` apart (0..255 RGB units).
fn contrasting_pair(rng: &mut ChaCha8Rng, min_dist: f64) -> ([f64; 3], [f64; 3]) {
    loop {
        let (a, b) = (random_color(rng), random_color(rng));
        if color_dist(a, b) >= min_dist {
            return (a, b);
        }
    }
}

fn to_u8(c: [f64; 3]) -> [u8; 3] {
    [
        c[0].round().clamp(0.0, 255.0) as u8,
        c[1].round().clamp(0.0, 255.0) as u8,
        c[2].round().clamp(0.0, 255.0) as u8,
    ]
}

/// Deterministic single-instance suite of `size`x`size` images.
///
/// `TwoColorShapes`: uniform foreground/background colors at least 120 RGB
/// units apart, plus Gaussian noise of σ = 5 per channel. `TexturedShapes`:
/// a striped foreground on a checkered background.
pub fn make_synthetic_suite_sized(kind: SuiteKind, n: usize, seed: u64, size: usize) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("suite needs at least one image".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 5.0).expect("valid sigma");
    let mut dataset = Dataset::default();
    for i in 0..n {
        let mask = random_shape(&mut rng, size);
        let image = match kind {
            SuiteKind::TwoColorShapes => {
                let (fg, bg) = contrasting_pair(&mut rng, 120.0);
                ColorImage::from_fn(size, size, |r, c| {
                    let base = if mask.get(r, c) { fg } else { bg };
                    to_u8([
                        base[0] + noise.sample(&mut rng),
                        base[1] + noise.sample(&mut rng),
                        base[2] + noise.sample(&mut rng),
                    ])
                })
            }
            SuiteKind::TexturedShapes => {
                let (fg_a, fg_b) = contrasting_pair(&mut rng, 40.0);
                let (bg_a, bg_b) = loop {
                    let pair = contrasting_pair(&mut rng, 40.0);
                    let far = [pair.0, pair.1]
                        .iter()
                        .all(|&b| color_dist(b, fg_a) >= 90.0 && color_dist(b, fg_b) >= 90.0);
                    if far {
                        break pair;
                    }
                };
                let period = rng.random_range(4..9usize);
                let cell = rng.random_range(3..7usize);
                let diagonal = rng.random_bool(0.5);
                ColorImage::from_fn(size, size, |r, c| {
                    let color = if mask.get(r, c) {
                        let phase = if diagonal { r + c } else { c };
                        if (phase / period) % 2 == 0 { fg_a } else { fg_b }
                    } else if (r / cell + c / cell) % 2 == 0 {
                        bg_a
                    } else {
                        bg_b
                    };
                    to_u8(color)
                })
            }
        };
        let image_id = format!("img_{i:04}");
        dataset.images.insert(
            image_id.clone(),
            ImageRecord {
                id: image_id.clone(),
                file: format!("images/{image_id}.png"),
                image: Arc::new(image),
            },
        );
        dataset.instances.push(InstanceRecord {
            instance_id: format!("inst_{i:04}"),
            image_id,
            mask,
            source: Source::General,
            category: Some(kind.to_string()),
        });
    }
    dataset.sort();
    Ok(dataset)
}

pub fn make_synthetic_suite(kind: SuiteKind, n: usize, seed: u64) -> Result<Dataset> {
    make_synthetic_suite_sized(kind, n, seed, SYNTHETIC_SIZE)
}
