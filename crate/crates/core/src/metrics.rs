//! Superpixel quality metrics and dataset-level mesh statistics.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::Image;
use crate::mesh::SuperpixelMesh;

/// Per-pixel ground-truth segment labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthSegmentation {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl GroundTruthSegmentation {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::invalid(format!(
                "{width}x{height} segmentation needs {} labels, got {}",
                width * height,
                labels.len()
            )));
        }
        Ok(Self { width, height, labels })
    }

    /// Berkeley `.seg` text format: header terminated by `data`, then rows of
    /// `segment row col_start col_end` (inclusive).
    pub fn from_seg(text: &str, path: &Path) -> Result<Self> {
        let mut width = None;
        let mut height = None;
        let mut lines = text.lines();
        for line in lines.by_ref() {
            let mut it = line.split_whitespace();
            match it.next() {
                Some("width") => width = it.next().and_then(|v| v.parse().ok()),
                Some("height") => height = it.next().and_then(|v| v.parse().ok()),
                Some("data") => break,
                _ => {}
            }
        }
        let (Some(w), Some(h)): (Option<usize>, Option<usize>) = (width, height) else {
            return Err(Error::format(path, "missing width/height header"));
        };
        let mut labels = vec![u32::MAX; w * h];
        for line in lines {
            let v: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::format(path, format!("bad data row `{line}`")))?;
            if v.is_empty() {
                continue;
            }
            let [seg, row, c0, c1] = v[..] else {
                return Err(Error::format(path, format!("bad data row `{line}`")));
            };
            if row >= h || c0 > c1 || c1 >= w {
                return Err(Error::format(path, format!("run out of bounds `{line}`")));
            }
            labels[row * w + c0..=row * w + c1].fill(seg as u32);
        }
        if labels.contains(&u32::MAX) {
            return Err(Error::format(path, "segmentation does not cover every pixel"));
        }
        Self::new(w, h, labels)
    }

    /// Gray label image: the raw 8/16-bit sample value is the segment id.
    pub fn from_label_image(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::format(path, e.to_string()))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let labels = match img {
            image::DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u32::from).collect(),
            image::DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(u32::from).collect(),
            other => {
                return Err(Error::format(
                    path,
                    format!("label image must be grayscale, got {:?}", other.color()),
                ));
            }
        };
        Self::new(w, h, labels)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e == "seg") {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            Self::from_seg(&text, path)
        } else {
            Self::from_label_image(path)
        }
    }
}

/// Achievable segmentation accuracy: fraction of pixels covered by each
/// cell's best-overlapping ground-truth segment.
pub fn asa(mesh: &SuperpixelMesh, gt: &GroundTruthSegmentation) -> Result<f64> {
    let dom = mesh.domain();
    if gt.width != dom.width || gt.height != dom.height {
        return Err(Error::invalid(format!(
            "ground truth is {}x{}, mesh domain is {}x{}",
            gt.width, gt.height, dom.width, dom.height
        )));
    }
    let mut hits = 0usize;
    let mut hist: HashMap<u32, usize> = HashMap::new();
    for i in 0..mesh.len() {
        let r = mesh.cell_rect(i);
        hist.clear();
        for y in r.y0..r.y1 {
            let row = (y - dom.y) * dom.width;
            for x in r.x0..r.x1 {
                *hist.entry(gt.labels[row + x - dom.x]).or_default() += 1;
            }
        }
        hits += hist.values().copied().max().unwrap_or(0);
    }
    Ok(hits as f64 / dom.area() as f64)
}

/// Explained variation: between-cell variance over total variance, with
/// squared deviations summed over channels. A constant image scores 1.
pub fn explained_variation(mesh: &SuperpixelMesh, image: &Image) -> Result<f64> {
    if image.width() != mesh.side() || image.height() != mesh.side() {
        return Err(Error::invalid(format!(
            "image is {}x{}, mesh side is {}",
            image.width(),
            image.height(),
            mesh.side()
        )));
    }
    let dom = mesh.domain();
    let n = dom.area() as f64;
    let mut between = 0.0;
    let mut total = 0.0;
    let mut energy = 0.0;
    for c in 0..image.channels() {
        let mut sum = 0.0;
        for y in dom.y..dom.y + dom.height {
            for x in dom.x..dom.x + dom.width {
                sum += image.get(c, x, y);
            }
        }
        let mu = sum / n;
        for y in dom.y..dom.y + dom.height {
            for x in dom.x..dom.x + dom.width {
                let v = image.get(c, x, y);
                total += (v - mu) * (v - mu);
                energy += v * v;
            }
        }
        for i in 0..mesh.len() {
            let r = mesh.cell_rect(i);
            let mut s = 0.0;
            for y in r.y0..r.y1 {
                for x in r.x0..r.x1 {
                    s += image.get(c, x, y);
                }
            }
            let area = r.area() as f64;
            let d = s / area - mu;
            between += area * d * d;
        }
    }
    // rounding noise on a flat image must not count as variance
    if total <= 1e-12 * energy {
        return Ok(1.0);
    }
    Ok(between / total)
}

/// Cell counts and size distribution over a set of meshes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshStats {
    pub count_mean: f64,
    pub count_std: f64,
    pub per_image_counts: Vec<usize>,
    /// Native cell side → number of unclipped cells.
    pub size_histogram: BTreeMap<usize, usize>,
    /// Cells whose area was reduced by a crop.
    pub clipped: usize,
}

pub fn mesh_stats(meshes: &[SuperpixelMesh]) -> Result<MeshStats> {
    if meshes.is_empty() {
        return Err(Error::invalid("no meshes to summarise"));
    }
    let counts: Vec<usize> = meshes.iter().map(|m| m.len()).collect();
    let (mean, std) = mean_std(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
    let mut size_histogram = BTreeMap::new();
    let mut clipped = 0;
    for m in meshes {
        for (i, c) in m.cells().iter().enumerate() {
            if m.is_clipped(i) {
                clipped += 1;
            } else {
                *size_histogram.entry(c.size).or_insert(0) += 1;
            }
        }
    }
    Ok(MeshStats {
        count_mean: mean,
        count_std: std,
        per_image_counts: counts,
        size_histogram,
        clipped,
    })
}

/// Mean and population standard deviation, using Neumaier-compensated sums.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / n;
    let var = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean))) / n;
    (mean, var.sqrt())
}

fn compensated_sum(it: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in it {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
