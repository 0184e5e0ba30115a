//! Quadtree tagging and adaptive superpixel mesh generation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{self, FilterMask, Threshold};
use crate::imageio::{Crop, Image};
use crate::wavelet::{forward_haar, WaveletPyramid};

/// Quadtree of refinement tags. `levels[s - 1]` is the `(N/2^s)²` grid of
/// scale `s`; the last level is the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagTree {
    side: usize,
    levels: Vec<Vec<bool>>,
}

impl TagTree {
    pub fn untagged(side: usize) -> Result<Self> {
        check_side(side)?;
        let levels = (1..=side.trailing_zeros() as usize)
            .map(|s| vec![false; (side >> s) * (side >> s)])
            .collect();
        Ok(Self { side, levels })
    }

    /// Build from primary tags and apply the ancestor closure.
    pub fn from_primary(side: usize, mut levels: Vec<Vec<bool>>) -> Result<Self> {
        check_side(side)?;
        if levels.len() != side.trailing_zeros() as usize {
            return Err(Error::invalid("tag level count does not match side"));
        }
        for (i, l) in levels.iter().enumerate() {
            let n = side >> (i + 1);
            if l.len() != n * n {
                return Err(Error::invalid(format!("tag scale {} has the wrong shape", i + 1)));
            }
        }
        close_ancestors(side, &mut levels);
        Ok(Self { side, levels })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn height(&self) -> usize {
        self.levels.len()
    }

    #[inline]
    pub fn is_tagged(&self, scale: usize, i: usize, j: usize) -> bool {
        let n = self.side >> scale;
        self.levels[scale - 1][j * n + i]
    }

    pub fn level(&self, scale: usize) -> &[bool] {
        &self.levels[scale - 1]
    }

    pub fn tagged_count(&self) -> usize {
        self.levels.iter().map(|l| l.iter().filter(|&&b| b).count()).sum()
    }

    /// Every tagged node's parent is tagged.
    pub fn is_closed(&self) -> bool {
        (1..self.height()).all(|s| {
            let n = self.side >> s;
            (0..n * n).all(|k| !self.levels[s - 1][k] || self.is_tagged(s + 1, (k % n) / 2, (k / n) / 2))
        })
    }
}

fn close_ancestors(side: usize, levels: &mut [Vec<bool>]) {
    for s in 1..levels.len() {
        let n = side >> s;
        let (lo, hi) = levels.split_at_mut(s);
        let (child, parent) = (&lo[s - 1], &mut hi[0]);
        for j in 0..n {
            for i in 0..n {
                if child[j * n + i] {
                    parent[(j / 2) * (n / 2) + i / 2] = true;
                }
            }
        }
    }
}

fn check_side(side: usize) -> Result<()> {
    if side < 2 || !side.is_power_of_two() {
        return Err(Error::invalid(format!("side {side} is not a power of two >= 2")));
    }
    Ok(())
}

/// Axis-aligned square cell of the adapted grid, in padded-canvas pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Cell {
    pub x: usize,
    pub y: usize,
    pub size: usize,
}

impl From<[usize; 3]> for Cell {
    fn from([x, y, size]: [usize; 3]) -> Self {
        Cell { x, y, size }
    }
}

impl From<Cell> for [usize; 3] {
    fn from(c: Cell) -> Self {
        [c.x, c.y, c.size]
    }
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn is_empty(&self) -> bool {
        self.x1 <= self.x0 || self.y1 <= self.y0
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) as f64 / 2.0, (self.y0 + self.y1) as f64 / 2.0)
    }

    fn intersect(&self, o: &Rect) -> Rect {
        Rect {
            x0: self.x0.max(o.x0),
            y0: self.y0.max(o.y0),
            x1: self.x1.min(o.x1).max(self.x0.max(o.x0)),
            y1: self.y1.min(o.y1).max(self.y0.max(o.y0)),
        }
    }
}

impl Cell {
    pub fn rect(&self) -> Rect {
        Rect {
            x0: self.x,
            y0: self.y,
            x1: self.x + self.size,
            y1: self.y + self.size,
        }
    }
}

/// Tiling of a padded square (optionally clipped to a crop rectangle) by
/// size-aligned power-of-two cells, ordered row-major by `(y, x)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelMesh {
    side: usize,
    crop: Option<Crop>,
    cells: Vec<Cell>,
}

impl SuperpixelMesh {
    /// Validated constructor: alignment, ordering, and exact tiling of the domain.
    pub fn new(side: usize, crop: Option<Crop>, cells: Vec<Cell>) -> Result<Self> {
        check_side(side)?;
        let crop = crop.filter(|c| !c.covers_square(side));
        if let Some(c) = crop {
            if c.width == 0 || c.height == 0 || c.x + c.width > side || c.y + c.height > side {
                return Err(Error::invalid("crop rectangle outside the mesh square"));
            }
        }
        let mesh = Self { side, crop, cells };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        let dom = self.domain_rect();
        let mut covered = vec![false; dom.area()];
        for (k, c) in self.cells.iter().enumerate() {
            if c.size == 0 || !c.size.is_power_of_two() || c.x % c.size != 0 || c.y % c.size != 0 {
                return Err(Error::invalid(format!("cell {k} {:?} is not size-aligned", c)));
            }
            if c.x + c.size > self.side || c.y + c.size > self.side {
                return Err(Error::invalid(format!("cell {k} exceeds the mesh square")));
            }
            if k > 0 && (self.cells[k - 1].y, self.cells[k - 1].x) >= (c.y, c.x) {
                return Err(Error::invalid("cells are not in row-major (y, x) order"));
            }
            let r = c.rect().intersect(&dom);
            if r.is_empty() {
                return Err(Error::invalid(format!("cell {k} lies outside the crop")));
            }
            for y in r.y0..r.y1 {
                for x in r.x0..r.x1 {
                    let p = (y - dom.y0) * (dom.x1 - dom.x0) + (x - dom.x0);
                    if covered[p] {
                        return Err(Error::invalid(format!("cell {k} overlaps another cell")));
                    }
                    covered[p] = true;
                }
            }
        }
        if covered.iter().any(|&b| !b) {
            return Err(Error::invalid("cells do not cover the mesh domain"));
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn crop(&self) -> Option<Crop> {
        self.crop
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Pixel region the mesh tiles: the crop, or the whole square.
    pub fn domain(&self) -> Crop {
        self.crop.unwrap_or(Crop {
            x: 0,
            y: 0,
            width: self.side,
            height: self.side,
        })
    }

    fn domain_rect(&self) -> Rect {
        let d = self.domain();
        Rect {
            x0: d.x,
            y0: d.y,
            x1: d.x + d.width,
            y1: d.y + d.height,
        }
    }

    /// Cell `i` clipped to the domain.
    pub fn cell_rect(&self, i: usize) -> Rect {
        self.cells[i].rect().intersect(&self.domain_rect())
    }

    pub fn cell_area(&self, i: usize) -> usize {
        self.cell_rect(i).area()
    }

    /// True when clipping changed the cell.
    pub fn is_clipped(&self, i: usize) -> bool {
        self.cell_area(i) != self.cells[i].size * self.cells[i].size
    }

    /// Cell index of every domain pixel, row-major over the domain.
    pub fn label_map(&self) -> Vec<u32> {
        let dom = self.domain_rect();
        let w = dom.x1 - dom.x0;
        let mut labels = vec![0u32; dom.area()];
        for i in 0..self.cells.len() {
            let r = self.cell_rect(i);
            for y in r.y0..r.y1 {
                let row = (y - dom.y0) * w;
                labels[row + r.x0 - dom.x0..row + r.x1 - dom.x0].fill(i as u32);
            }
        }
        labels
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&MeshFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: MeshFile = serde_json::from_str(s)?;
        f.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct MeshFile {
    side: usize,
    crop: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset: Option<[usize; 2]>,
    cells: Vec<Cell>,
}

impl From<&SuperpixelMesh> for MeshFile {
    fn from(m: &SuperpixelMesh) -> Self {
        MeshFile {
            side: m.side,
            crop: m.crop.map(|c| [c.width, c.height]),
            offset: m.crop.map(|c| [c.x, c.y]),
            cells: m.cells.clone(),
        }
    }
}

impl TryFrom<MeshFile> for SuperpixelMesh {
    type Error = Error;

    fn try_from(f: MeshFile) -> Result<Self> {
        let [x, y] = f.offset.unwrap_or([0, 0]);
        let crop = f.crop.map(|[width, height]| Crop { x, y, width, height });
        SuperpixelMesh::new(f.side, crop, f.cells)
    }
}

impl Serialize for SuperpixelMesh {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MeshFile::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for SuperpixelMesh {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let f = MeshFile::deserialize(d)?;
        f.try_into().map_err(serde::de::Error::custom)
    }
}

/// Union the masks' retained locations (any direction, any channel) and
/// close the result under ancestry.
pub fn build_tag_tree(masks: &[FilterMask]) -> Result<TagTree> {
    let first = masks.first().ok_or_else(|| Error::invalid("no filter masks given"))?;
    let side = first.side();
    if masks.iter().any(|m| m.side() != side || m.levels() != first.levels()) {
        return Err(Error::invalid("filter masks are not congruent"));
    }
    let levels = (1..=first.levels())
        .map(|s| {
            let n = side >> s;
            (0..n * n).map(|k| masks.iter().any(|m| m.any_at(s, k))).collect()
        })
        .collect();
    TagTree::from_primary(side, levels)
}

/// Recursive refinement from the root: a tagged node splits its region into
/// four quadrants, an untagged node becomes one cell.
pub fn generate_mesh(tree: &TagTree, side: usize) -> Result<SuperpixelMesh> {
    check_side(side)?;
    if tree.side() != side || tree.height() != side.trailing_zeros() as usize {
        return Err(Error::invalid(format!(
            "tag tree of height {} does not match side {side}",
            tree.height()
        )));
    }
    let mut cells = Vec::new();
    // (scale, i, j): region of size 2^scale at (i, j) · 2^scale
    let mut stack = vec![(tree.height(), 0usize, 0usize)];
    while let Some((s, i, j)) = stack.pop() {
        let size = 1usize << s;
        if s > 0 && tree.is_tagged(s, i, j) {
            for (di, dj) in [(1, 1), (0, 1), (1, 0), (0, 0)] {
                stack.push((s - 1, 2 * i + di, 2 * j + dj));
            }
        } else {
            cells.push(Cell {
                x: i * size,
                y: j * size,
                size,
            });
        }
    }
    cells.sort_unstable_by_key(|c| (c.y, c.x));
    Ok(SuperpixelMesh {
        side,
        crop: None,
        cells,
    })
}

/// Restrict a full-square mesh to `crop`, dropping cells outside it.
pub fn crop_mesh(mesh: &SuperpixelMesh, crop: Option<Crop>) -> Result<SuperpixelMesh> {
    let side = mesh.side;
    let Some(c) = crop.filter(|c| !c.covers_square(side)) else {
        return Ok(mesh.clone());
    };
    let dom = Rect {
        x0: c.x,
        y0: c.y,
        x1: c.x + c.width,
        y1: c.y + c.height,
    };
    let cells = mesh
        .cells
        .iter()
        .copied()
        .filter(|cell| !cell.rect().intersect(&dom).is_empty())
        .collect();
    SuperpixelMesh::new(side, Some(c), cells)
}

/// Mesh plus the per-channel threshold diagnostics that produced it.
#[derive(Debug, Clone)]
pub struct Superpixels {
    pub mesh: SuperpixelMesh,
    pub thresholds: Vec<Threshold>,
}

struct Prepared {
    side: usize,
    crop: Option<Crop>,
    pyramids: Vec<WaveletPyramid>,
    thresholds: Vec<Threshold>,
}

impl Prepared {
    fn new(image: &Image) -> Result<Self> {
        if !image.is_padded() {
            return Err(Error::invalid(format!(
                "{}x{} image must be padded to a power-of-two square",
                image.width(),
                image.height()
            )));
        }
        let mut pyramids = Vec::with_capacity(image.channels());
        let mut thresholds = Vec::with_capacity(image.channels());
        for c in 0..image.channels() {
            let p = forward_haar(&image.to_wavelet_channel(c)?)?;
            thresholds.push(filter::estimate_threshold(
                &p,
                filter::DEFAULT_REL_TOL,
                filter::DEFAULT_MAX_ITER,
            )?);
            pyramids.push(p);
        }
        Ok(Self {
            side: image.width(),
            crop: image.crop(),
            pyramids,
            thresholds,
        })
    }

    fn run(&self, lambda: f64) -> Result<Superpixels> {
        let mut masks = Vec::with_capacity(self.pyramids.len());
        let mut used = Vec::with_capacity(self.pyramids.len());
        for (p, t) in self.pyramids.iter().zip(&self.thresholds) {
            let t = t.with_multiplier(lambda, self.side)?;
            masks.push(filter::apply_threshold(p, &t)?);
            used.push(t);
        }
        let tree = build_tag_tree(&masks)?;
        let mesh = crop_mesh(&generate_mesh(&tree, self.side)?, self.crop)?;
        Ok(Superpixels { mesh, thresholds: used })
    }
}

/// Full pipeline on a padded image: transform, threshold and mask every
/// channel, union the tags, refine, and clip to the image's crop.
pub fn superpixel_image(image: &Image, lambda: f64) -> Result<SuperpixelMesh> {
    Ok(superpixel_image_detailed(image, lambda)?.mesh)
}

pub fn superpixel_image_detailed(image: &Image, lambda: f64) -> Result<Superpixels> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    Prepared::new(image)?.run(lambda)
}

const CALIBRATION_TOLERANCE: f64 = 0.05;
const MAX_MULTIPLIER: f64 = 1e12;

/// Find λ ≥ 1 whose mean cell count over `images` is within 5% of
/// `target_mean_count`, by doubling then bisection.
pub fn calibrate_multiplier(images: &[Image], target_mean_count: f64, iters: usize) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::invalid("no images to calibrate on"));
    }
    if target_mean_count.is_nan() || target_mean_count < 1.0 {
        return Err(Error::invalid(format!(
            "target count must be >= 1, got {target_mean_count}"
        )));
    }
    let prepared: Vec<Prepared> = images.par_iter().map(Prepared::new).collect::<Result<_>>()?;
    let mean_count = |lambda: f64| -> Result<f64> {
        let total: usize = prepared
            .par_iter()
            .map(|p| p.run(lambda).map(|s| s.mesh.len()))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        Ok(total as f64 / prepared.len() as f64)
    };
    let close = |count: f64| (count - target_mean_count).abs() <= CALIBRATION_TOLERANCE * target_mean_count;

    let at_unit = mean_count(1.0)?;
    if close(at_unit) {
        return Ok(1.0);
    }
    // a threshold that converged to zero ignores lambda, so the floor can stay high
    let floor = mean_count(MAX_MULTIPLIER)?;
    if at_unit < target_mean_count || (floor > target_mean_count && !close(floor)) {
        return Err(Error::UnreachableTarget {
            target: target_mean_count,
            at_unit,
            floor,
        });
    }

    let mut best = (1.0, at_unit);
    let mut consider = |lambda: f64, count: f64| {
        if (count - target_mean_count).abs() < (best.1 - target_mean_count).abs() {
            best = (lambda, count);
        }
    };

    let mut lo = 1.0;
    let mut hi = 2.0;
    loop {
        let c = mean_count(hi)?;
        consider(hi, c);
        if close(c) {
            return Ok(hi);
        }
        if c <= target_mean_count {
            break;
        }
        lo = hi;
        hi = (hi * 2.0).min(MAX_MULTIPLIER);
    }
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        let c = mean_count(mid)?;
        consider(mid, c);
        if close(c) {
            return Ok(mid);
        }
        if c > target_mean_count {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best.0)
}
