//! Orthonormal 2D Haar multiresolution transform.
//!
//! Coefficients follow the mean-normalized convention: the finest
//! approximation is initialised to `pixel / N`, and each decomposition step
//! maps a 2×2 block `(a, b; c, d)` to
//!
//! ```text
//! approx     = (a + b + c + d) / 2
//! horizontal = (a - b + c - d) / 2
//! vertical   = (a + b - c - d) / 2
//! diagonal   = (a - b - c + d) / 2
//! ```
//!
//! With that scaling the sum of squares of every coefficient equals the
//! mean square of the source channel, the final approximation is the channel
//! mean, and the detail energy is its variance.

use crate::error::{Error, Result};

/// One square, power-of-two intensity channel stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageChannel {
    side: usize,
    values: Vec<f64>,
}

impl ImageChannel {
    pub fn new(side: usize, values: Vec<f64>) -> Result<Self> {
        check_side(side)?;
        if values.len() != side * side {
            return Err(Error::invalid(format!(
                "channel of side {side} needs {} values, got {}",
                side * side,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("channel contains non-finite values"));
        }
        Ok(Self { side, values })
    }

    pub fn constant(side: usize, value: f64) -> Result<Self> {
        Self::new(side, vec![value; side * side])
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.side + x]
    }
}

/// Orientation of a detail coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Horizontal = 0,
    Vertical = 1,
    Diagonal = 2,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Horizontal, Direction::Vertical, Direction::Diagonal];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Detail coefficients at every scale plus the coarsest approximation.
///
/// `details[s - 1][d]` holds the `(N / 2^s)²` coefficients of scale `s`
/// and direction `d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletPyramid {
    side: usize,
    details: Vec<[Vec<f64>; 3]>,
    approx: f64,
}

impl WaveletPyramid {
    pub fn from_parts(side: usize, details: Vec<[Vec<f64>; 3]>, approx: f64) -> Result<Self> {
        check_side(side)?;
        let levels = side.trailing_zeros() as usize;
        if details.len() != levels {
            return Err(Error::invalid(format!(
                "pyramid of side {side} needs {levels} levels, got {}",
                details.len()
            )));
        }
        for (i, level) in details.iter().enumerate() {
            let n = side >> (i + 1);
            for grid in level {
                if grid.len() != n * n {
                    return Err(Error::invalid(format!(
                        "scale {} grid has {} entries, expected {}",
                        i + 1,
                        grid.len(),
                        n * n
                    )));
                }
            }
        }
        Ok(Self { side, details, approx })
    }

    /// All-zero pyramid for a channel of the given side.
    pub fn zeros(side: usize) -> Result<Self> {
        check_side(side)?;
        let levels = side.trailing_zeros() as usize;
        let details = (1..=levels)
            .map(|s| {
                let n = side >> s;
                [vec![0.0; n * n], vec![0.0; n * n], vec![0.0; n * n]]
            })
            .collect();
        Ok(Self {
            side,
            details,
            approx: 0.0,
        })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Number of decomposition levels `S = log2(N)`.
    pub fn levels(&self) -> usize {
        self.details.len()
    }

    /// Width of the coefficient grid at `scale` (1-based).
    pub fn grid_side(&self, scale: usize) -> usize {
        self.side >> scale
    }

    pub fn approx(&self) -> f64 {
        self.approx
    }

    pub fn set_approx(&mut self, v: f64) {
        self.approx = v;
    }

    pub fn detail(&self, scale: usize, dir: Direction) -> &[f64] {
        &self.details[scale - 1][dir.index()]
    }

    pub fn detail_mut(&mut self, scale: usize, dir: Direction) -> &mut [f64] {
        &mut self.details[scale - 1][dir.index()]
    }

    /// Iterator over every detail coefficient, finest scale first.
    pub fn details(&self) -> impl Iterator<Item = f64> + '_ {
        self.details
            .iter()
            .flat_map(|l| l.iter().flat_map(|g| g.iter().copied()))
    }

    pub fn detail_count(&self) -> usize {
        self.side * self.side - 1
    }

    /// Σ detail² + approx².
    pub fn energy(&self) -> f64 {
        self.details().map(|c| c * c).sum::<f64>() + self.approx * self.approx
    }

    pub(crate) fn levels_raw(&self) -> &[[Vec<f64>; 3]] {
        &self.details
    }
}

fn check_side(side: usize) -> Result<()> {
    if side < 2 || !side.is_power_of_two() {
        return Err(Error::invalid(format!("side {side} is not a power of two >= 2")));
    }
    Ok(())
}

pub fn forward_haar(channel: &ImageChannel) -> Result<WaveletPyramid> {
    let side = channel.side;
    check_side(side)?;
    let inv_n = 1.0 / side as f64;
    let mut approx: Vec<f64> = channel.values.iter().map(|v| v * inv_n).collect();
    let mut n = side;
    let mut details = Vec::with_capacity(side.trailing_zeros() as usize);

    while n > 1 {
        let h = n / 2;
        let mut next = vec![0.0; h * h];
        let mut dh = vec![0.0; h * h];
        let mut dv = vec![0.0; h * h];
        let mut dd = vec![0.0; h * h];
        for j in 0..h {
            let top = 2 * j * n;
            let bottom = top + n;
            for i in 0..h {
                let a = approx[top + 2 * i];
                let b = approx[top + 2 * i + 1];
                let c = approx[bottom + 2 * i];
                let d = approx[bottom + 2 * i + 1];
                let k = j * h + i;
                next[k] = 0.5 * (a + b + c + d);
                dh[k] = 0.5 * (a - b + c - d);
                dv[k] = 0.5 * (a + b - c - d);
                dd[k] = 0.5 * (a - b - c + d);
            }
        }
        details.push([dh, dv, dd]);
        approx = next;
        n = h;
    }

    Ok(WaveletPyramid {
        side,
        details,
        approx: approx[0],
    })
}

pub fn inverse_haar(pyramid: &WaveletPyramid) -> Result<ImageChannel> {
    let side = pyramid.side;
    check_side(side)?;
    if pyramid.levels() != side.trailing_zeros() as usize {
        return Err(Error::invalid("pyramid level count does not match its side"));
    }

    let mut approx = vec![pyramid.approx];
    for s in (1..=pyramid.levels()).rev() {
        let h = side >> s;
        let [dh, dv, dd] = &pyramid.details[s - 1];
        if dh.len() != h * h || dv.len() != h * h || dd.len() != h * h {
            return Err(Error::invalid(format!("scale {s} has inconsistent grid shape")));
        }
        let n = 2 * h;
        let mut fine = vec![0.0; n * n];
        for j in 0..h {
            for i in 0..h {
                let k = j * h + i;
                let (m, x, y, z) = (approx[k], dh[k], dv[k], dd[k]);
                fine[2 * j * n + 2 * i] = 0.5 * (m + x + y + z);
                fine[2 * j * n + 2 * i + 1] = 0.5 * (m - x + y - z);
                fine[(2 * j + 1) * n + 2 * i] = 0.5 * (m + x - y - z);
                fine[(2 * j + 1) * n + 2 * i + 1] = 0.5 * (m - x - y + z);
            }
        }
        approx = fine;
    }

    let n = side as f64;
    approx.iter_mut().for_each(|v| *v *= n);
    ImageChannel::new(side, approx)
}
