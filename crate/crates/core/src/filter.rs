//! Hard thresholding of detail coefficients with the universal threshold.
//!
//! The threshold is expressed in orthonormal-transform units (the units of a
//! Haar transform applied directly to pixel values), in which white noise of
//! pixel variance σ² has per-coefficient variance σ². Pyramid coefficients
//! are stored mean-normalized (`1/N` of that), so every comparison against a
//! threshold uses `N·|c|`. The remainder variance Σ c² over sub-threshold
//! coefficients is already a pixel-space variance and needs no rescaling.

use crate::error::{Error, Result};
use crate::wavelet::{Direction, WaveletPyramid};

pub const DEFAULT_REL_TOL: f64 = 1e-3;
pub const DEFAULT_MAX_ITER: usize = 100;

/// Outcome of the threshold iteration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Threshold {
    /// Effective threshold `multiplier · sqrt(2 σ² ln N²)`.
    pub value: f64,
    /// Remainder variance σ² the theoretical value was computed from.
    pub variance: f64,
    pub iterations: usize,
    pub multiplier: f64,
}

impl Threshold {
    /// Theoretical threshold before the multiplier.
    pub fn theoretical(&self, side: usize) -> f64 {
        universal_threshold(self.variance, side).unwrap_or(0.0)
    }

    /// Same iterate rescaled by `lambda`; `value` is recomputed from the variance.
    pub fn with_multiplier(&self, lambda: f64, side: usize) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "threshold multiplier must be >= 0, got {lambda}"
            )));
        }
        Ok(Self {
            value: lambda * universal_threshold(self.variance, side)?,
            multiplier: lambda,
            ..*self
        })
    }
}

/// Retained-coefficient mask congruent to a pyramid's detail grids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FilterMask {
    side: usize,
    levels: Vec<[Vec<bool>; 3]>,
}

impl FilterMask {
    pub fn from_levels(side: usize, levels: Vec<[Vec<bool>; 3]>) -> Result<Self> {
        if side < 2 || !side.is_power_of_two() {
            return Err(Error::invalid(format!("mask side {side} is not a power of two >= 2")));
        }
        if levels.len() != side.trailing_zeros() as usize {
            return Err(Error::invalid("mask level count does not match its side"));
        }
        for (i, l) in levels.iter().enumerate() {
            let n = side >> (i + 1);
            if l.iter().any(|g| g.len() != n * n) {
                return Err(Error::invalid(format!("mask scale {} has the wrong shape", i + 1)));
            }
        }
        Ok(Self { side, levels })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn levels(&self) -> usize {
        self.levels.len()
    }

    pub fn grid(&self, scale: usize, dir: Direction) -> &[bool] {
        &self.levels[scale - 1][dir.index()]
    }

    /// True when any of the three directions is retained at `(scale, k)`.
    #[inline]
    pub fn any_at(&self, scale: usize, k: usize) -> bool {
        self.levels[scale - 1].iter().any(|g| g[k])
    }

    pub fn retained_count(&self) -> usize {
        self.levels
            .iter()
            .flat_map(|l| l.iter())
            .map(|g| g.iter().filter(|&&b| b).count())
            .sum()
    }

    /// Elementwise `self ⊆ other`.
    pub fn is_subset_of(&self, other: &FilterMask) -> bool {
        self.side == other.side
            && self.levels.iter().zip(&other.levels).all(|(a, b)| {
                a.iter()
                    .zip(b)
                    .all(|(ga, gb)| ga.iter().zip(gb).all(|(&x, &y)| !x || y))
            })
    }
}

/// `sqrt(2 · variance · ln(N²))`.
pub fn universal_threshold(variance: f64, side: usize) -> Result<f64> {
    if !variance.is_finite() || variance < 0.0 {
        return Err(Error::invalid(format!(
            "variance must be finite and >= 0, got {variance}"
        )));
    }
    if side < 2 || !side.is_power_of_two() {
        return Err(Error::invalid(format!("side {side} is not a power of two >= 2")));
    }
    if variance == 0.0 {
        return Ok(0.0);
    }
    let n = side as f64;
    Ok((2.0 * variance * (n * n).ln()).sqrt())
}

/// Recursive estimate of the remainder variance and its universal threshold.
///
/// Starts from the full detail energy (the channel variance), then repeatedly
/// re-estimates σ² from coefficients whose rescaled magnitude lies strictly
/// below the current threshold. Stops on relative change `<= rel_tol`, on a
/// zero threshold, or when no coefficient lies below the threshold.
pub fn estimate_threshold(pyramid: &WaveletPyramid, rel_tol: f64, max_iter: usize) -> Result<Threshold> {
    if rel_tol.is_nan() || rel_tol <= 0.0 {
        return Err(Error::invalid(format!("rel_tol must be > 0, got {rel_tol}")));
    }
    if max_iter == 0 {
        return Err(Error::invalid("max_iter must be >= 1"));
    }
    let side = pyramid.side();
    let scale = side as f64;
    let coefs: Vec<f64> = pyramid.details().collect();

    let mut variance: f64 = coefs.iter().map(|c| c * c).sum();
    let mut t = universal_threshold(variance, side)?;
    let mut iterations = 1;

    loop {
        if t == 0.0 {
            break;
        }
        let mut below = 0usize;
        let mut energy = 0.0;
        for &c in &coefs {
            if (c * scale).abs() < t {
                below += 1;
                energy += c * c;
            }
        }
        if below == 0 {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NoConvergence {
                iterations,
                threshold: t,
            });
        }
        let next = universal_threshold(energy, side)?;
        iterations += 1;
        let converged = (next - t).abs() <= rel_tol * t;
        variance = energy;
        t = next;
        if converged {
            break;
        }
    }

    Ok(Threshold {
        value: t,
        variance,
        iterations,
        multiplier: 1.0,
    })
}

/// Hard-threshold mask: retain `c` when `N·|c| >= t.value` and `c != 0`.
pub fn apply_threshold(pyramid: &WaveletPyramid, t: &Threshold) -> Result<FilterMask> {
    if !t.value.is_finite() || t.value < 0.0 {
        return Err(Error::invalid(format!(
            "threshold must be finite and >= 0, got {}",
            t.value
        )));
    }
    let scale = pyramid.side() as f64;
    let levels = pyramid
        .levels_raw()
        .iter()
        .map(|l| {
            let keep = |g: &Vec<f64>| g.iter().map(|&c| c != 0.0 && (c * scale).abs() >= t.value).collect();
            [keep(&l[0]), keep(&l[1]), keep(&l[2])]
        })
        .collect();
    Ok(FilterMask {
        side: pyramid.side(),
        levels,
    })
}

/// Split a pyramid into its retained and remainder parts. The approximation
/// coefficient goes to the retained part.
pub fn split(pyramid: &WaveletPyramid, mask: &FilterMask) -> Result<(WaveletPyramid, WaveletPyramid)> {
    if mask.side != pyramid.side() || mask.levels() != pyramid.levels() {
        return Err(Error::invalid("mask shape does not match pyramid"));
    }
    let mut kept = pyramid.clone();
    let mut rest = pyramid.clone();
    rest.set_approx(0.0);
    for s in 1..=pyramid.levels() {
        for d in Direction::ALL {
            let m = mask.grid(s, d);
            for (k, &keep) in m.iter().enumerate() {
                if keep {
                    rest.detail_mut(s, d)[k] = 0.0;
                } else {
                    kept.detail_mut(s, d)[k] = 0.0;
                }
            }
        }
    }
    Ok((kept, rest))
}
