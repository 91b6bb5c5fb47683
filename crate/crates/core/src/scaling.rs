//! Normalizations and rescalings of the quenched log-probability.
//!
//! Everything here works on `S = log P`, centered by `μ = E[log ω(0,e1)]`
//! times the exact step count and scaled by the standard deviation `σ` of
//! `log ω(0,e1)`. With that convention `S − μ·steps` behaves like a
//! last-passage value near the axis: of order `2σ√(n k)` with fluctuations
//! of order `σ n^{1/2} k^{−1/6}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::EnvStats;
use crate::lattice::Site;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScalingError {
    #[error("σ must be positive, got {0}")]
    ZeroSigma(f64),
    #[error("normalization needs at least one step")]
    ZeroSteps,
    #[error("landscape pairs need x₂ < y₂, got x₂ = {x2}, y₂ = {y2}")]
    NotTimeOrdered { x2: f64, y2: f64 },
    #[error("n must be at least 2, got {0}")]
    SmallN(u64),
    #[error("exponent a must lie in (0, 1), got {0}")]
    ExponentRange(f64),
    #[error("k must be at least 1")]
    ZeroK,
}

/// Upper end of the admissible exponent range, `(3/7)(1 − 2/p)`.
pub fn admissible_exponent_bound(moment_order: f64) -> f64 {
    if moment_order.is_infinite() {
        3.0 / 7.0
    } else {
        3.0 / 7.0 * (1.0 - 2.0 / moment_order)
    }
}

/// `(n, a, stats)` with an admissibility check on `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub n: u64,
    pub a: f64,
    pub stats: EnvStats,
}

impl ScalingParams {
    pub fn new(n: u64, a: f64, stats: EnvStats) -> Result<Self, ScalingError> {
        if n < 2 {
            return Err(ScalingError::SmallN(n));
        }
        if !(a > 0.0 && a < 1.0) {
            return Err(ScalingError::ExponentRange(a));
        }
        if stats.sigma <= 0.0 {
            return Err(ScalingError::ZeroSigma(stats.sigma));
        }
        let params = Self { n, a, stats };
        if let Some(w) = params.admissibility_warning() {
            log::warn!("{w}");
        }
        Ok(params)
    }

    /// A warning when `a ≥ (3/7)(1 − 2/p)`; the limit theorems do not cover that range.
    pub fn admissibility_warning(&self) -> Option<String> {
        let bound = admissible_exponent_bound(self.stats.moment_order);
        (self.a >= bound).then(|| {
            format!(
                "exponent a = {} is outside the admissible range a < (3/7)(1 − 2/p) = {:.6} (p = {})",
                self.a, bound, self.stats.moment_order
            )
        })
    }

    pub fn axis_height(&self) -> u64 {
        axis_height(self.n, self.a)
    }
}

/// A point of the landscape plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub z1: f64,
    pub z2: f64,
}

impl PlanePoint {
    pub const fn new(z1: f64, z2: f64) -> Self {
        Self { z1, z2 }
    }
}

/// `⌊v⌋`, snapping values within 1e-9 (relative) of an integer onto it so
/// that e.g. `10000^0.5` lands on 100 rather than 99.
fn floor_snapped(v: f64) -> i64 {
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r as i64
    } else {
        v.floor() as i64
    }
}

/// Componentwise integer part, rounding toward −∞.
pub fn floor_map(z: &[f64]) -> Vec<i64> {
    z.iter().map(|&v| v.floor() as i64).collect()
}

/// `⌊n^a⌋`, the height of the axis target `(n, ⌊n^a⌋)`.
pub fn axis_height(n: u64, a: f64) -> u64 {
    floor_snapped((n as f64).powf(a)).max(0) as u64
}

/// `(z)_n = (z₂ n + 2 z₁ n^{1 − a/3}, ⌊z₂ n^a⌋)`.
pub fn grid_point(z: PlanePoint, n: u64, a: f64) -> (f64, i64) {
    let nf = n as f64;
    (
        z.z2 * nf + 2.0 * z.z1 * nf.powf(1.0 - a / 3.0),
        floor_snapped(z.z2 * nf.powf(a)),
    )
}

/// The lattice site `[(z)_n]`.
pub fn grid_site(z: PlanePoint, n: u64, a: f64) -> Site {
    let (first, second) = grid_point(z, n, a);
    Site::new(first.floor() as i64, second)
}

/// `Ŝ = (S − μ·steps) / σ`.
pub fn normalize(s_value: f64, steps: u64, stats: &EnvStats) -> Result<f64, ScalingError> {
    if stats.sigma <= 0.0 {
        return Err(ScalingError::ZeroSigma(stats.sigma));
    }
    if steps == 0 {
        return Err(ScalingError::ZeroSteps);
    }
    Ok((s_value - stats.mu * steps as f64) / stats.sigma)
}

/// Coefficient of the linear spatial correction `(y₁ − x₁) n^{a/3}`.
///
/// The spatial map `(z)_n` moves the target by `2 z₁ n^{1−a/3}`, which
/// shifts the centered value by `2 z₁ n^{a/3} − z₁²` after rescaling; only
/// a coefficient of 2 leaves the parabola `−(y₁ − x₁)²` as the sole
/// spatial dependence.
pub const SPATIAL_SHIFT_COEFF: f64 = 2.0;

/// `S_{n,a}(x,y) = n^{(a−3)/6} Ŝ − 2(y₂−x₂) n^{2a/3} − 2(y₁−x₁) n^{a/3}`.
pub fn landscape_rescale(
    x: PlanePoint,
    y: PlanePoint,
    s_hat: f64,
    n: u64,
    a: f64,
) -> Result<f64, ScalingError> {
    if !(x.z2 < y.z2) {
        return Err(ScalingError::NotTimeOrdered { x2: x.z2, y2: y.z2 });
    }
    let nf = n as f64;
    Ok(nf.powf((a - 3.0) / 6.0) * s_hat
        - 2.0 * (y.z2 - x.z2) * nf.powf(2.0 * a / 3.0)
        - SPATIAL_SHIFT_COEFF * (y.z1 - x.z1) * nf.powf(a / 3.0))
}

/// Centering `μ (n + k) + 2σ √(n^{1+a})` shared by the (i) and (iii) statistics.
fn axis_centering(n: u64, a: f64, stats: &EnvStats) -> f64 {
    let nf = n as f64;
    let k = axis_height(n, a) as f64;
    stats.mu * (nf + k) + 2.0 * stats.sigma * nf.powf(1.0 + a).sqrt()
}

/// Tracy–Widom statistic for the target `(n, ⌊n^a⌋)`:
/// `(S − μ(n+⌊n^a⌋) − 2σ√(n^{1+a})) / (σ n^{1/2 − a/6})`.
pub fn tw_statistic(s_value: f64, n: u64, a: f64, stats: &EnvStats) -> f64 {
    let nf = n as f64;
    (s_value - axis_centering(n, a, stats)) / (stats.sigma * nf.powf(0.5 - a / 6.0))
}

/// Fixed-k statistic for the target `(n, k)`: `(S − μ(n+k)) / (σ√n)`.
pub fn fixed_k_statistic(s_value: f64, n: u64, k: u64, stats: &EnvStats) -> Result<f64, ScalingError> {
    if k == 0 {
        return Err(ScalingError::ZeroK);
    }
    let nf = n as f64;
    Ok((s_value - stats.mu * (nf + k as f64)) / (stats.sigma * nf.sqrt()))
}

/// CLT-scale statistic for `(n, ⌊n^a⌋)`, which tends to 0:
/// `(S − μ(n+⌊n^a⌋) − 2σ√(n^{1+a})) / √n`.
pub fn diffusive_statistic(s_value: f64, n: u64, a: f64, stats: &EnvStats) -> f64 {
    (s_value - axis_centering(n, a, stats)) / (n as f64).sqrt()
}

/// `I_q(e1) = −μ`.
pub fn rate_at_axis(stats: &EnvStats) -> f64 {
    -stats.mu
}
