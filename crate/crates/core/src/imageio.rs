//! Image and dataset ingestion, padding and overlay rendering.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageEncoder};

use crate::error::{Error, Result};
use crate::mesh::SuperpixelMesh;
use crate::wavelet::ImageChannel;

/// Sub-rectangle of a padded image holding the original content.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Crop {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Crop {
    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn covers_square(&self, side: usize) -> bool {
        self.x == 0 && self.y == 0 && self.width == side && self.height == side
    }
}

/// Channel-planar float image with values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    crop: Option<Crop>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    Edge,
}

impl std::str::FromStr for PadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(PadMode::Zero),
            "edge" => Ok(PadMode::Edge),
            other => Err(Error::invalid(format!("unknown pad mode `{other}`"))),
        }
    }
}

impl Image {
    /// `data` is channel-planar: `data[c * width * height + y * width + x]`.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be >= 1"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "{width}x{height}x{channels} image needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite values"));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            crop: None,
        })
    }

    pub fn from_channels(width: usize, height: usize, channels: &[Vec<f64>]) -> Result<Self> {
        Self::new(width, height, channels.len(), channels.concat())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn crop(&self) -> Option<Crop> {
        self.crop
    }

    /// Drop crop metadata so the whole canvas counts as image content.
    pub fn uncropped(mut self) -> Self {
        self.crop = None;
        self
    }

    pub fn with_crop(mut self, crop: Crop) -> Result<Self> {
        if crop.width == 0 || crop.height == 0 || crop.x + crop.width > self.width || crop.y + crop.height > self.height
        {
            return Err(Error::invalid("crop rectangle outside image"));
        }
        self.crop = Some(crop);
        Ok(self)
    }

    /// Smallest power of two (≥ 2) covering both dimensions.
    pub fn padded_side(&self) -> usize {
        self.width.max(self.height).next_power_of_two().max(2)
    }

    /// Square with a power-of-two side, ready for the wavelet pipeline.
    pub fn is_padded(&self) -> bool {
        self.width == self.height && self.width >= 2 && self.width.is_power_of_two()
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn to_wavelet_channel(&self, c: usize) -> Result<ImageChannel> {
        if !self.is_padded() {
            return Err(Error::invalid(format!(
                "{}x{} image must be padded to a power-of-two square first",
                self.width, self.height
            )));
        }
        ImageChannel::new(self.width, self.channel(c).to_vec())
    }

    /// Region of the image counted as content: the crop, or the full canvas.
    pub fn content(&self) -> Crop {
        self.crop.unwrap_or(Crop {
            x: 0,
            y: 0,
            width: self.width,
            height: self.height,
        })
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Embed `image` into the smallest power-of-two square, margins split evenly
/// (odd extra pixel on the high side). The original rectangle is recorded as
/// the crop.
pub fn pad_image(image: &Image, mode: PadMode) -> Image {
    let side = image.padded_side();
    let (w, h) = (image.width, image.height);
    let ox = (side - w) / 2;
    let oy = (side - h) / 2;
    let mut data = vec![0.0; side * side * image.channels];
    for c in 0..image.channels {
        let plane = &mut data[c * side * side..(c + 1) * side * side];
        for y in 0..side {
            for x in 0..side {
                let inside = x >= ox && x < ox + w && y >= oy && y < oy + h;
                plane[y * side + x] = if inside {
                    image.get(c, x - ox, y - oy)
                } else {
                    match mode {
                        PadMode::Zero => 0.0,
                        PadMode::Edge => {
                            let sx = x.clamp(ox, ox + w - 1) - ox;
                            let sy = y.clamp(oy, oy + h - 1) - oy;
                            image.get(c, sx, sy)
                        }
                    }
                };
            }
        }
    }
    Image {
        width: side,
        height: side,
        channels: image.channels,
        data,
        crop: Some(Crop {
            x: ox,
            y: oy,
            width: w,
            height: h,
        }),
    }
}

/// Load an 8/16-bit grayscale or RGB PNG/PGM/PPM, scaled by the format's
/// maximum sample value. Alpha channels are dropped.
pub fn load_png_or_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory(&bytes).map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, samples): (usize, Vec<f64>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageLumaA8(b) => (1, b.into_raw().chunks(2).map(|p| p[0] as f64 / 255.0).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageLumaA16(b) => (1, b.into_raw().chunks(2).map(|p| p[0] as f64 / 65535.0).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw().into_iter().map(|v| v as f64 / 255.0).collect()),
        DynamicImage::ImageRgba8(b) => (
            3,
            b.into_raw()
                .chunks(4)
                .flat_map(|p| p[..3].iter().map(|&v| v as f64 / 255.0).collect::<Vec<_>>())
                .collect(),
        ),
        DynamicImage::ImageRgb16(b) => (3, b.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect()),
        DynamicImage::ImageRgba16(b) => (
            3,
            b.into_raw()
                .chunks(4)
                .flat_map(|p| p[..3].iter().map(|&v| v as f64 / 65535.0).collect::<Vec<_>>())
                .collect(),
        ),
        other => {
            return Err(Error::format(
                path,
                format!("unsupported pixel layout {:?}", other.color()),
            ));
        }
    };
    Image::new(w, h, channels, interleaved_to_planar(&samples, w * h, channels))
        .map_err(|e| Error::format(path, e.to_string()))
}

fn interleaved_to_planar(samples: &[f64], pixels: usize, channels: usize) -> Vec<f64> {
    if channels == 1 {
        return samples.to_vec();
    }
    let mut out = vec![0.0; samples.len()];
    for p in 0..pixels {
        for c in 0..channels {
            out[c * pixels + p] = samples[p * channels + c];
        }
    }
    out
}

const IDX_IMAGES_MAGIC: u32 = 2051;
const IDX_LABELS_MAGIC: u32 = 2049;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

/// Validated, in-memory MNIST-style IDX image/label pair.
pub struct IdxPair {
    images: Vec<u8>,
    labels: Vec<u8>,
    count: usize,
    rows: usize,
    cols: usize,
}

impl IdxPair {
    pub fn open(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Self> {
        let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
        let ib = std::fs::read(ip).map_err(|e| Error::io(ip, e))?;
        let lb = std::fs::read(lp).map_err(|e| Error::io(lp, e))?;

        if ib.len() < 16 || be_u32(&ib, 0) != IDX_IMAGES_MAGIC {
            return Err(Error::format(ip, "not an IDX image file (magic 2051)"));
        }
        if lb.len() < 8 || be_u32(&lb, 0) != IDX_LABELS_MAGIC {
            return Err(Error::format(lp, "not an IDX label file (magic 2049)"));
        }
        let count = be_u32(&ib, 4) as usize;
        let rows = be_u32(&ib, 8) as usize;
        let cols = be_u32(&ib, 12) as usize;
        if rows == 0 || cols == 0 {
            return Err(Error::format(ip, "zero image dimensions"));
        }
        let expected = 16 + count * rows * cols;
        if ib.len() != expected {
            return Err(Error::format(
                ip,
                format!(
                    "expected {expected} bytes for {count} images of {rows}x{cols}, found {}",
                    ib.len()
                ),
            ));
        }
        let label_count = be_u32(&lb, 4) as usize;
        if lb.len() != 8 + label_count {
            return Err(Error::format(lp, "label count does not match file length"));
        }
        if label_count != count {
            return Err(Error::format(lp, format!("{label_count} labels for {count} images")));
        }
        Ok(Self {
            images: ib,
            labels: lb,
            count,
            rows,
            cols,
        })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn get(&self, i: usize) -> Result<(Image, u8)> {
        if i >= self.count {
            return Err(Error::invalid(format!(
                "index {i} out of range for {} items",
                self.count
            )));
        }
        let px = self.rows * self.cols;
        let raw = &self.images[16 + i * px..16 + (i + 1) * px];
        let data = raw.iter().map(|&v| v as f64 / 255.0).collect();
        Ok((Image::new(self.cols, self.rows, 1, data)?, self.labels[8 + i]))
    }
}

/// MNIST / Fashion-MNIST IDX pair. Images are returned unpadded.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    limit: Option<usize>,
) -> Result<Vec<(Image, u8)>> {
    let pair = IdxPair::open(images_path, labels_path)?;
    let n = limit.map_or(pair.len(), |l| l.min(pair.len()));
    (0..n).map(|i| pair.get(i)).collect()
}

const CIFAR_ROW: usize = 1 + 3 * 32 * 32;

/// CIFAR-10 binary batch held in memory: rows of one label byte plus 3072
/// channel-planar RGB bytes.
pub struct CifarBatch {
    bytes: Vec<u8>,
}

impl CifarBatch {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.is_empty() || bytes.len() % CIFAR_ROW != 0 {
            return Err(Error::format(
                path,
                format!("length {} is not a positive multiple of {CIFAR_ROW}", bytes.len()),
            ));
        }
        Ok(Self { bytes })
    }

    pub fn len(&self) -> usize {
        self.bytes.len() / CIFAR_ROW
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn get(&self, i: usize) -> Result<(Image, u8)> {
        if i >= self.len() {
            return Err(Error::invalid(format!(
                "index {i} out of range for {} items",
                self.len()
            )));
        }
        let row = &self.bytes[i * CIFAR_ROW..(i + 1) * CIFAR_ROW];
        let data = row[1..].iter().map(|&v| v as f64 / 255.0).collect();
        Ok((Image::new(32, 32, 3, data)?, row[0]))
    }
}

pub fn load_cifar_batch(path: impl AsRef<Path>, limit: Option<usize>) -> Result<Vec<(Image, u8)>> {
    let batch = CifarBatch::open(path)?;
    let n = limit.map_or(batch.len(), |l| l.min(batch.len()));
    (0..n).map(|i| batch.get(i)).collect()
}

/// Rendering options for [`render_overlay`].
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayOptions {
    pub boundary: [u8; 3],
    pub centroids: bool,
    pub centroid_color: [u8; 3],
}

impl Default for OverlayOptions {
    fn default() -> Self {
        Self {
            boundary: [255, 0, 0],
            centroids: false,
            centroid_color: [0, 96, 255],
        }
    }
}

/// PNG of the image content with 1-pixel cell outlines. `image` is the padded
/// image the mesh was computed on; only the content rectangle is drawn.
pub fn render_overlay(image: &Image, mesh: &SuperpixelMesh, options: &OverlayOptions) -> Result<Vec<u8>> {
    if image.width() != mesh.side() || image.height() != mesh.side() {
        return Err(Error::invalid(format!(
            "image is {}x{}, mesh side is {}",
            image.width(),
            image.height(),
            mesh.side()
        )));
    }
    let dom = mesh.domain();
    let (w, h) = (dom.width, dom.height);
    let mut rgb = vec![0u8; w * h * 3];
    let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let src = if image.channels() == 3 { c } else { 0 };
                rgb[(y * w + x) * 3 + c] = to_u8(image.get(src, dom.x + x, dom.y + y));
            }
        }
    }
    let mut put = |x: usize, y: usize, col: [u8; 3]| {
        if x < w && y < h {
            rgb[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&col);
        }
    };
    for i in 0..mesh.len() {
        let r = mesh.cell_rect(i);
        let (x0, y0, x1, y1) = (r.x0 - dom.x, r.y0 - dom.y, r.x1 - dom.x, r.y1 - dom.y);
        for x in x0..x1 {
            put(x, y0, options.boundary);
            put(x, y1 - 1, options.boundary);
        }
        for y in y0..y1 {
            put(x0, y, options.boundary);
            put(x1 - 1, y, options.boundary);
        }
    }
    if options.centroids {
        for i in 0..mesh.len() {
            let r = mesh.cell_rect(i);
            let (cx, cy) = r.center();
            let (cx, cy) = (cx - dom.x as f64, cy - dom.y as f64);
            let radius = (0.15 * (r.area() as f64).sqrt()).max(0.5);
            let lo_x = (cx - radius).floor().max(0.0) as usize;
            let lo_y = (cy - radius).floor().max(0.0) as usize;
            let hi_x = ((cx + radius).ceil() as usize).min(w);
            let hi_y = ((cy + radius).ceil() as usize).min(h);
            for y in lo_y..hi_y {
                for x in lo_x..hi_x {
                    let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                    if dx * dx + dy * dy <= radius * radius {
                        put(x, y, options.centroid_color);
                    }
                }
            }
        }
    }

    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
        .write_image(&rgb, w as u32, h as u32, image::ExtendedColorType::Rgb8)
        .map_err(|e| Error::invalid(format!("png encoding failed: {e}")))?;
    Ok(out)
}

/// Write a single-channel `[0, 1]` plane as an 8-bit grayscale PNG.
pub fn encode_gray_png(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    let bytes: Vec<u8> = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut out = Vec::new();
    image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
        .write_image(&bytes, width as u32, height as u32, image::ExtendedColorType::L8)
        .map_err(|e| Error::invalid(format!("png encoding failed: {e}")))?;
    Ok(out)
}
