//! Exact directed dynamic programming on Z².
//!
//! For a site pair `x ≤ y` (componentwise) three path functionals are
//! computed over the up-right paths from `x` to `y`:
//!
//! * `S = log P_{x,ω}(X_{|y−x|₁} = y)`, the quenched log-probability. A walk
//!   reaching `y` in exactly `|y−x|₁` steps can only use up-right steps, so
//!   `S` is a log-sum over up-right paths of the product of step weights.
//! * `G = max_γ Σ log ω(z_i, step_i)`, the best single-path log-likelihood.
//!   The passage time is `T = −G`.
//! * `L = max_γ Σ_{z ∈ γ} τ_z` with vertex weights `τ_z = log ω(z, e1)`,
//!   both endpoints included.
//!
//! All three satisfy `G ≤ S ≤ G + log C(|y−x|₁, y₂−x₂)`.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::WeightOracle;

/// Enumeration cap for [`brute_force`].
pub const BRUTE_FORCE_MAX_STEPS: u64 = 22;

/// Default working-memory budget for a single sweep.
pub const DEFAULT_MEMORY_CAP: usize = 1 << 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpError {
    #[error("target {y} is not up-right of origin {x}")]
    NegativeDisplacement { x: Site, y: Site },
    #[error("{steps} steps exceeds the brute-force enumeration cap of {cap}")]
    EnumerationCap { steps: u64, cap: u64 },
    #[error("sweep of height {height} needs {needed} bytes, above the cap of {cap}")]
    MemoryCap { height: u64, needed: usize, cap: usize },
    #[error("direction {direction} has zero probability at {site}")]
    ZeroDirectedWeight { site: Site, direction: &'static str },
    #[error("target {target} lies outside the swept rectangle")]
    TargetOutsideRectangle { target: Site },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x1: i64,
    pub x2: i64,
}

impl Site {
    pub const ORIGIN: Site = Site { x1: 0, x2: 0 };

    #[inline]
    pub const fn new(x1: i64, x2: i64) -> Self {
        Self { x1, x2 }
    }

    #[inline]
    pub fn offset(self, dx: i64, dy: i64) -> Site {
        Site::new(self.x1 + dx, self.x2 + dy)
    }

    /// The displacement `y − self`, if both components are nonnegative.
    pub fn displacement_to(self, y: Site) -> Result<Displacement, DpError> {
        if y.x1 < self.x1 || y.x2 < self.x2 {
            return Err(DpError::NegativeDisplacement { x: self, y });
        }
        Ok(Displacement::new((y.x1 - self.x1) as u64, (y.x2 - self.x2) as u64))
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.x1, self.x2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Displacement {
    pub dx: u64,
    pub dy: u64,
}

impl Displacement {
    pub const fn new(dx: u64, dy: u64) -> Self {
        Self { dx, dy }
    }

    pub fn steps(&self) -> u64 {
        self.dx + self.dy
    }
}

/// Source of the two directed log-weights at each site.
///
/// Implemented by [`WeightOracle`]; tests plug in hand-built environments.
pub trait DirectedWeights {
    /// `(log ω(x, e1), log ω(x, e2))`.
    fn directed_log_weights(&self, x: Site) -> (f64, f64);
}

impl DirectedWeights for WeightOracle {
    #[inline]
    fn directed_log_weights(&self, x: Site) -> (f64, f64) {
        WeightOracle::directed_log_weights(self, x)
    }
}

impl<W: DirectedWeights + ?Sized> DirectedWeights for &W {
    #[inline]
    fn directed_log_weights(&self, x: Site) -> (f64, f64) {
        (**self).directed_log_weights(x)
    }
}

/// The triple `(S, G, L)` for one site pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathFunctionals {
    pub s: f64,
    pub g: f64,
    pub l: f64,
}

impl PathFunctionals {
    /// Passage time `T = −G`.
    pub fn passage_time(&self) -> f64 {
        -self.g
    }
}

/// Which functionals a sweep should evaluate. Skipped ones are reported as NaN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalSet {
    pub s: bool,
    pub g: bool,
    pub l: bool,
}

impl FunctionalSet {
    pub const ALL: FunctionalSet = FunctionalSet { s: true, g: true, l: true };
    pub const S_ONLY: FunctionalSet = FunctionalSet { s: true, g: false, l: false };
}

impl Default for FunctionalSet {
    fn default() -> Self {
        Self::ALL
    }
}

/// Numerically stable `log(e^a + e^b)`.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Number of up-right paths for a displacement, `C(dx + dy, dy)`.
pub fn path_count(d: Displacement) -> BigUint {
    let k = d.dx.min(d.dy);
    let n = d.steps();
    let mut acc = BigUint::from(1u32);
    // Each partial product is itself a binomial coefficient, so the division is exact.
    for i in 1..=k {
        acc = acc * BigUint::from(n - k + i) / BigUint::from(i);
    }
    acc
}

/// `log C(dx + dy, dy)` in floating point.
pub fn log_path_count(d: Displacement) -> f64 {
    let k = d.dx.min(d.dy);
    let n = d.steps();
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

/// One DP cell handed to a sweep visitor.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub site: Site,
    pub s: f64,
    pub g: f64,
    pub l: f64,
    /// `τ_site = log ω(site, e1)`.
    pub tau: f64,
    /// `log ω(site, e2)`.
    pub log_e2: f64,
}

impl Cell {
    pub fn functionals(&self) -> PathFunctionals {
        PathFunctionals { s: self.s, g: self.g, l: self.l }
    }
}

/// Bytes of working memory a sweep of the given height needs.
pub fn sweep_memory(height: u64) -> usize {
    (height as usize + 1) * 4 * std::mem::size_of::<f64>()
}

/// Column-major sweep over the rectangle `origin + [0, width] × [0, height]`.
///
/// Calls `visit` once per site, in column-major order, with the DP values
/// from `origin`. Working memory is `O(height)`; weights are regenerated
/// from `env` exactly once per site.
pub fn sweep_with<W, F>(
    env: &W,
    origin: Site,
    width: u64,
    height: u64,
    want: FunctionalSet,
    memory_cap: usize,
    mut visit: F,
) -> Result<(), DpError>
where
    W: DirectedWeights + ?Sized,
    F: FnMut(&Cell),
{
    let needed = sweep_memory(height);
    if needed > memory_cap {
        return Err(DpError::MemoryCap { height, needed, cap: memory_cap });
    }
    let rows = height as usize + 1;
    let nan = f64::NAN;
    let mut s = vec![nan; rows];
    let mut g = vec![nan; rows];
    let mut l = vec![nan; rows];
    // log ω(·, e1) of the previous column, per row.
    let mut left_e1 = vec![nan; rows];

    for i in 0..=width {
        let mut below_e2 = nan;
        for j in 0..rows {
            let site = origin.offset(i as i64, j as i64);
            let (tau, log_e2) = env.directed_log_weights(site);
            if !tau.is_finite() {
                return Err(DpError::ZeroDirectedWeight { site, direction: "e1" });
            }
            if !log_e2.is_finite() {
                return Err(DpError::ZeroDirectedWeight { site, direction: "e2" });
            }
            let (cs, cg, cl) = match (i, j) {
                (0, 0) => (0.0, 0.0, tau),
                (0, _) => (s[j - 1] + below_e2, g[j - 1] + below_e2, tau + l[j - 1]),
                (_, 0) => (s[0] + left_e1[0], g[0] + left_e1[0], tau + l[0]),
                _ => {
                    let from_left_s = s[j] + left_e1[j];
                    let from_below_s = s[j - 1] + below_e2;
                    let cs = if want.s { log_add_exp(from_left_s, from_below_s) } else { nan };
                    let cg = if want.g {
                        (g[j] + left_e1[j]).max(g[j - 1] + below_e2)
                    } else {
                        nan
                    };
                    let cl = if want.l { tau + l[j].max(l[j - 1]) } else { nan };
                    (cs, cg, cl)
                }
            };
            s[j] = cs;
            g[j] = cg;
            l[j] = cl;
            left_e1[j] = tau;
            below_e2 = log_e2;
            visit(&Cell { site, s: cs, g: cg, l: cl, tau, log_e2 });
        }
    }
    Ok(())
}

/// Values of a sweep at requested targets, plus optional per-row maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub origin: Site,
    pub width: u64,
    pub height: u64,
    pub targets: Vec<(Site, PathFunctionals)>,
    /// `M_j = max_x1 (|τ_(x1,j)| + |log ω((x1,j), e2)|)` over the rectangle, per row.
    pub row_maxima: Option<Vec<f64>>,
}

impl SweepResult {
    pub fn get(&self, target: Site) -> Option<PathFunctionals> {
        self.targets.iter().find(|(t, _)| *t == target).map(|(_, f)| *f)
    }
}

/// Sweeps the rectangle and collects the functionals at `targets`.
pub fn sweep<W: DirectedWeights + ?Sized>(
    env: &W,
    origin: Site,
    width: u64,
    height: u64,
    want: FunctionalSet,
    targets: &[Site],
    with_row_maxima: bool,
) -> Result<SweepResult, DpError> {
    for &t in targets {
        let d = origin.displacement_to(t).map_err(|_| DpError::TargetOutsideRectangle { target: t })?;
        if d.dx > width || d.dy > height {
            return Err(DpError::TargetOutsideRectangle { target: t });
        }
    }
    let mut found: Vec<Option<PathFunctionals>> = vec![None; targets.len()];
    let mut maxima = with_row_maxima.then(|| vec![0.0f64; height as usize + 1]);
    sweep_with(env, origin, width, height, want, DEFAULT_MEMORY_CAP, |cell| {
        if let Some(m) = maxima.as_mut() {
            let j = (cell.site.x2 - origin.x2) as usize;
            m[j] = m[j].max(cell.tau.abs() + cell.log_e2.abs());
        }
        for (slot, t) in found.iter_mut().zip(targets) {
            if *t == cell.site {
                *slot = Some(cell.functionals());
            }
        }
    })?;
    Ok(SweepResult {
        origin,
        width,
        height,
        targets: targets
            .iter()
            .zip(found)
            .map(|(t, f)| (*t, f.expect("target inside rectangle")))
            .collect(),
        row_maxima: maxima,
    })
}

/// `(S, G, L)` from `x` to `y` by one sweep of the enclosing rectangle.
pub fn compute_all<W: DirectedWeights + ?Sized>(
    env: &W,
    x: Site,
    y: Site,
    want: FunctionalSet,
) -> Result<PathFunctionals, DpError> {
    let d = x.displacement_to(y)?;
    let mut out = None;
    sweep_with(env, x, d.dx, d.dy, want, DEFAULT_MEMORY_CAP, |cell| {
        if cell.site == y {
            out = Some(cell.functionals());
        }
    })?;
    Ok(out.expect("target is the last swept cell"))
}

/// Quenched log-probability `S = log P_{x,ω}(X_{|y−x|₁} = y)`.
pub fn compute_s<W: DirectedWeights + ?Sized>(env: &W, x: Site, y: Site) -> Result<f64, DpError> {
    compute_all(env, x, y, FunctionalSet::S_ONLY).map(|f| f.s)
}

/// Best single-path log-likelihood `G`; the passage time is `−G`.
pub fn compute_g<W: DirectedWeights + ?Sized>(env: &W, x: Site, y: Site) -> Result<f64, DpError> {
    compute_all(env, x, y, FunctionalSet { s: false, g: true, l: false }).map(|f| f.g)
}

/// Vertex last-passage value `L` with weights `τ_z = log ω(z, e1)`.
pub fn compute_l<W: DirectedWeights + ?Sized>(env: &W, x: Site, y: Site) -> Result<f64, DpError> {
    compute_all(env, x, y, FunctionalSet { s: false, g: false, l: true }).map(|f| f.l)
}

/// Result of exhaustive path enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForce {
    pub functionals: PathFunctionals,
    pub paths_visited: u64,
}

/// Enumerates every up-right path from `x` to `y`. Test oracle for the DP.
pub fn brute_force<W: DirectedWeights + ?Sized>(env: &W, x: Site, y: Site) -> Result<BruteForce, DpError> {
    let d = x.displacement_to(y)?;
    if d.steps() > BRUTE_FORCE_MAX_STEPS {
        return Err(DpError::EnumerationCap { steps: d.steps(), cap: BRUTE_FORCE_MAX_STEPS });
    }
    let (w, h) = (d.dx as usize + 1, d.dy as usize + 1);
    let mut weights = Vec::with_capacity(w * h);
    for i in 0..w {
        for j in 0..h {
            weights.push(env.directed_log_weights(x.offset(i as i64, j as i64)));
        }
    }
    let at = |i: usize, j: usize| weights[i * h + j];

    let mut edge_sums = Vec::new();
    let mut best_vertex = f64::NEG_INFINITY;
    // Each path is a bitmask over `steps` positions marking up-steps.
    let steps = d.steps() as u32;
    for mask in 0u64..(1u64 << steps) {
        if mask.count_ones() as u64 != d.dy {
            continue;
        }
        let (mut i, mut j) = (0usize, 0usize);
        let mut edge = 0.0;
        let mut vertex = at(0, 0).0;
        for step in 0..steps {
            let (e1, e2) = at(i, j);
            if mask >> step & 1 == 1 {
                edge += e2;
                j += 1;
            } else {
                edge += e1;
                i += 1;
            }
            vertex += at(i, j).0;
        }
        edge_sums.push(edge);
        best_vertex = best_vertex.max(vertex);
    }
    let g = edge_sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s = g + edge_sums.iter().map(|e| (e - g).exp()).sum::<f64>().ln();
    Ok(BruteForce {
        functionals: PathFunctionals { s, g, l: best_vertex },
        paths_visited: edge_sums.len() as u64,
    })
}

/// Functional a geodesic optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeodesicKind {
    /// Edge weights `log ω(z, step)`.
    G,
    /// Vertex weights `τ_z`.
    L,
}

fn near_tie(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0)
}

/// An optimal up-right path from `x` to `y`, both endpoints included.
///
/// Built from the value-to-go table; at every step the e1 move is taken
/// whenever it is optimal (up to 1e-12 relative), so among tied optima the
/// path that goes right as early as possible is returned.
pub fn geodesic<W: DirectedWeights + ?Sized>(
    env: &W,
    x: Site,
    y: Site,
    which: GeodesicKind,
) -> Result<Vec<Site>, DpError> {
    let d = x.displacement_to(y)?;
    let (w, h) = (d.dx as usize + 1, d.dy as usize + 1);
    let idx = |i: usize, j: usize| i * h + j;
    let mut weights = vec![(0.0, 0.0); w * h];
    for i in 0..w {
        for j in 0..h {
            weights[idx(i, j)] = env.directed_log_weights(x.offset(i as i64, j as i64));
        }
    }
    // to_go[i,j] = best value from (i,j) to y.
    let mut to_go = vec![f64::NEG_INFINITY; w * h];
    for i in (0..w).rev() {
        for j in (0..h).rev() {
            let (e1, e2) = weights[idx(i, j)];
            let base = match which {
                GeodesicKind::G => 0.0,
                GeodesicKind::L => e1,
            };
            let right = (i + 1 < w).then(|| {
                to_go[idx(i + 1, j)] + if which == GeodesicKind::G { e1 } else { 0.0 }
            });
            let up = (j + 1 < h).then(|| {
                to_go[idx(i, j + 1)] + if which == GeodesicKind::G { e2 } else { 0.0 }
            });
            to_go[idx(i, j)] = base
                + match (right, up) {
                    (None, None) => 0.0,
                    (Some(r), None) => r,
                    (None, Some(u)) => u,
                    (Some(r), Some(u)) => r.max(u),
                };
        }
    }
    let mut path = Vec::with_capacity(w + h - 1);
    let (mut i, mut j) = (0usize, 0usize);
    path.push(x);
    while (i, j) != (w - 1, h - 1) {
        let (e1, e2) = weights[idx(i, j)];
        let go_right = if i + 1 == w {
            false
        } else if j + 1 == h {
            true
        } else {
            let (r, u) = match which {
                GeodesicKind::G => (to_go[idx(i + 1, j)] + e1, to_go[idx(i, j + 1)] + e2),
                GeodesicKind::L => (to_go[idx(i + 1, j)], to_go[idx(i, j + 1)]),
            };
            r >= u || near_tie(r, u)
        };
        if go_right {
            i += 1;
        } else {
            j += 1;
        }
        path.push(x.offset(i as i64, j as i64));
    }
    Ok(path)
}

/// Sum of the edge (`G`) or vertex (`L`) weights along a path.
pub fn path_value<W: DirectedWeights + ?Sized>(env: &W, path: &[Site], which: GeodesicKind) -> f64 {
    match which {
        GeodesicKind::G => path
            .windows(2)
            .map(|p| {
                let (e1, e2) = env.directed_log_weights(p[0]);
                if p[1].x1 > p[0].x1 {
                    e1
                } else {
                    e2
                }
            })
            .sum(),
        GeodesicKind::L => path.iter().map(|&z| env.directed_log_weights(z).0).sum(),
    }
}

/// `G − slack ≤ S ≤ G + log C(steps, dy) + slack`.
pub fn sandwich_check(f: &PathFunctionals, d: Displacement, slack: f64) -> bool {
    f.g - slack <= f.s && f.s <= f.g + log_path_count(d) + slack
}

/// `Y = |τ_z| + |log ω(z, e2)|` at a site.
#[inline]
pub fn site_excess<W: DirectedWeights + ?Sized>(env: &W, z: Site) -> f64 {
    let (tau, e2) = env.directed_log_weights(z);
    tau.abs() + e2.abs()
}

/// `M_j` over an explicit inclusive range of first coordinates.
pub fn row_maxima_range<W: DirectedWeights + ?Sized>(env: &W, x1_lo: i64, x1_hi: i64, j: i64) -> f64 {
    (x1_lo..=x1_hi)
        .map(|x1| site_excess(env, Site::new(x1, j)))
        .fold(0.0, f64::max)
}

/// `M_j^{(n)} = max_{0 ≤ x1 ≤ n} (|τ_(x1,j)| + |log ω((x1,j), e2)|)`.
pub fn row_maxima<W: DirectedWeights + ?Sized>(env: &W, n: u64, j: i64) -> f64 {
    row_maxima_range(env, 0, n as i64, j)
}

/// Upper bound on `|G(x,y) − L(x,y)|` for `y = x + d`.
///
/// Every path makes one up-step per row between `x₂` and `y₂`, and each
/// such step changes the difference between its edge sum and its vertex sum
/// by at most the row maximum; the vertex sum also carries the extra
/// endpoint term `τ_y`. The bound is the sum of `M_j` over rows
/// `x₂..=y₂` (first coordinates `min(0,x₁)..=max(n,y₁)`) plus the largest
/// `|τ|` on the target column between rows `x₂` and `y₂`.
pub fn coupling_bound<W: DirectedWeights + ?Sized>(env: &W, x: Site, d: Displacement, n: u64) -> f64 {
    let y = x.offset(d.dx as i64, d.dy as i64);
    let lo = x.x1.min(0);
    let hi = (n as i64).max(y.x1);
    let rows: f64 = (x.x2..=y.x2).map(|j| row_maxima_range(env, lo, hi, j)).sum();
    let endpoint = (x.x2..=y.x2)
        .map(|j| env.directed_log_weights(Site::new(y.x1, j)).0.abs())
        .fold(0.0, f64::max);
    rows + endpoint
}
