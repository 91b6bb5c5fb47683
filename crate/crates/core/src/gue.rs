//! GUE reference distributions.
//!
//! Matrices are normalized so that `E[H_ii²] = 1` and `E[|H_ij|²] = 1` for
//! `i < j`. With this normalization the largest eigenvalue of a `k × k`
//! sample sits near `2√k`, `n^{1/6}(λ_max − 2√n)` tends to Tracy–Widom GUE,
//! and the `1 × 1` case is a standard normal.
//!
//! Dense samples are reduced to real symmetric tridiagonal form by
//! Householder reflections. Large-`n` Tracy–Widom references skip the dense
//! stage entirely and sample the tridiagonal β = 2 Hermite ensemble. In both
//! cases the top eigenvalue is found by Sturm-count bisection.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::split_seed;
use crate::BUILD_ID;

/// Iteration cap for bisection.
pub const BISECTION_MAX_ITER: u32 = 200;

/// Absolute tolerance used when building references.
pub const REFERENCE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GueError {
    #[error("bisection did not reach tolerance {tol} within {iterations} iterations")]
    NonConvergence { tol: f64, iterations: u32 },
    #[error("{what} must be at least {min}, got {got}")]
    TooSmall { what: &'static str, min: u64, got: u64 },
    #[error("tolerance must be positive, got {0}")]
    Tolerance(f64),
    #[error("reference file: {0}")]
    Io(#[from] std::io::Error),
    #[error("reference file is malformed: {0}")]
    Format(String),
}

/// A dense Hermitian matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    k: usize,
    data: Vec<Complex64>,
}

impl HermitianMatrix {
    /// Builds a matrix from its real diagonal and strict upper triangle
    /// (row-major: (0,1), (0,2), ..., (1,2), ...).
    pub fn from_parts(diag: &[f64], upper: &[Complex64]) -> Self {
        let k = diag.len();
        assert_eq!(upper.len(), k * k.saturating_sub(1) / 2, "upper triangle size");
        let mut data = vec![Complex64::new(0.0, 0.0); k * k];
        let mut it = upper.iter();
        for i in 0..k {
            data[i * k + i] = Complex64::new(diag[i], 0.0);
            for j in (i + 1)..k {
                let v = *it.next().unwrap();
                data[i * k + j] = v;
                data[j * k + i] = v.conj();
            }
        }
        Self { k, data }
    }

    pub fn order(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.k + j]
    }

    pub fn is_hermitian(&self) -> bool {
        (0..self.k).all(|i| {
            self.get(i, i).im == 0.0 && (i + 1..self.k).all(|j| self.get(i, j) == self.get(j, i).conj())
        })
    }

    /// `Tr H² = Σ |H_ij|²`.
    pub fn trace_of_square(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// A real symmetric tridiagonal matrix with nonnegative off-diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len(), diag.len().saturating_sub(1), "off-diagonal length");
        assert!(off.iter().all(|&e| e >= 0.0), "off-diagonal entries must be nonnegative");
        Self { diag, off }
    }

    pub fn order(&self) -> usize {
        self.diag.len()
    }
}

/// Draws a `k × k` GUE matrix: `H_ii ~ N(0,1)`, `Re H_ij, Im H_ij ~ N(0,1/2)`.
pub fn sample_gue<R: Rng + ?Sized>(k: usize, rng: &mut R) -> HermitianMatrix {
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let diag: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    let upper: Vec<Complex64> = (0..k * k.saturating_sub(1) / 2)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * half, im * half)
        })
        .collect();
    HermitianMatrix::from_parts(&diag, &upper)
}

/// Householder reduction to real symmetric tridiagonal form.
///
/// Reflections give a Hermitian tridiagonal matrix with complex
/// sub-diagonal `b_j`; a diagonal unitary similarity then replaces each
/// `b_j` by `|b_j|`. The spectrum is unchanged.
pub fn householder_tridiagonalize(h: &HermitianMatrix) -> SymTridiagonal {
    let k = h.k;
    let mut a = h.data.clone();
    let at = |i: usize, j: usize| i * k + j;
    let zero = Complex64::new(0.0, 0.0);
    let mut v = vec![zero; k];
    let mut p = vec![zero; k];

    for j in 0..k.saturating_sub(2) {
        let lo = j + 1;
        let norm: f64 = (lo..k).map(|i| a[at(i, j)].norm_sqr()).sum::<f64>().sqrt();
        let tail: f64 = (lo + 1..k).map(|i| a[at(i, j)].norm_sqr()).sum();
        if tail == 0.0 {
            continue;
        }
        let x0 = a[at(lo, j)];
        let phase = if x0.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { x0 / x0.norm() };
        let alpha = -phase * norm;
        for i in lo..k {
            v[i] = a[at(i, j)];
        }
        v[lo] -= alpha;
        let vnorm: f64 = (lo..k).map(|i| v[i].norm_sqr()).sum::<f64>().sqrt();
        for vi in v[lo..k].iter_mut() {
            *vi /= vnorm;
        }
        // p = A22 v, K = v* p, w = p − K v; A22 ← A22 − 2 v w* − 2 w v*.
        for i in lo..k {
            p[i] = (lo..k).map(|c| a[at(i, c)] * v[c]).sum();
        }
        let kk: f64 = (lo..k).map(|i| (v[i].conj() * p[i]).re).sum();
        for i in lo..k {
            p[i] -= v[i] * kk;
        }
        for r in lo..k {
            for c in lo..k {
                a[at(r, c)] -= (v[r] * p[c].conj() + p[r] * v[c].conj()) * 2.0;
            }
        }
        for i in lo..k {
            a[at(i, j)] = zero;
            a[at(j, i)] = zero;
        }
        a[at(lo, j)] = alpha;
        a[at(j, lo)] = alpha.conj();
    }

    let diag = (0..k).map(|i| a[at(i, i)].re).collect();
    let off = (0..k.saturating_sub(1)).map(|i| a[at(i + 1, i)].norm()).collect();
    SymTridiagonal::new(diag, off)
}

/// Number of eigenvalues strictly below `lambda` (Sturm sequence / LDLᵀ pivots).
pub fn sturm_count(t: &SymTridiagonal, lambda: f64) -> usize {
    const PIVOT_GUARD: f64 = 1e-300;
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..t.diag.len() {
        let coupling = if i == 0 { 0.0 } else { t.off[i - 1] * t.off[i - 1] / q };
        q = t.diag[i] - lambda - coupling;
        if q.abs() < PIVOT_GUARD {
            q = -PIVOT_GUARD;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Largest eigenvalue to within `±tol`, by bisection on
/// `[min d − 2 max e, max d + 2 max e]`.
pub fn largest_eigenvalue(t: &SymTridiagonal, tol: f64) -> Result<f64, GueError> {
    if !(tol > 0.0) {
        return Err(GueError::Tolerance(tol));
    }
    let n = t.order();
    if n == 0 {
        return Err(GueError::TooSmall { what: "matrix order", min: 1, got: 0 });
    }
    if n == 1 {
        return Ok(t.diag[0]);
    }
    let max_e = t.off.iter().copied().fold(0.0, f64::max);
    let min_d = t.diag.iter().copied().fold(f64::INFINITY, f64::min);
    let max_d = t.diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (min_d - 2.0 * max_e, max_d + 2.0 * max_e);
    for _ in 0..BISECTION_MAX_ITER {
        if hi - lo <= 2.0 * tol {
            return Ok(0.5 * (lo + hi));
        }
        let mid = 0.5 * (lo + hi);
        if sturm_count(t, mid) == n {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(GueError::NonConvergence { tol, iterations: BISECTION_MAX_ITER })
}

/// Dumitriu–Edelman tridiagonal model for β = 2: diagonal `N(0,1)`,
/// off-diagonal entry `i` (1-based) `χ_{2(n−i)}/√2 = √Gamma(n−i, 1)`.
pub fn sample_gue_tridiagonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> SymTridiagonal {
    let diag: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let off: Vec<f64> = (1..n)
        .map(|i| {
            let g = Gamma::new((n - i) as f64, 1.0).expect("positive shape");
            g.sample(rng).sqrt()
        })
        .collect();
    SymTridiagonal::new(diag, off)
}

/// Which law a reference sample represents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceKind {
    /// `n^{1/6}(λ_max − 2√n)` from the tridiagonal sampler at matrix size `n`.
    TwGue { n: u64 },
    /// `λ_max` of dense `k × k` GUE samples.
    LambdaK { k: u64 },
    /// Standard normal draws.
    Normal,
}

/// Metadata header of a reference file; enough to regenerate it bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    #[serde(flatten)]
    pub kind: ReferenceKind,
    pub m: u64,
    pub seed: u64,
    pub build: String,
}

/// Sorted reference samples plus their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceEcdf {
    pub meta: ReferenceMeta,
    pub samples: Vec<f64>,
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split_seed(seed, index))
}

fn build_reference<F>(kind: ReferenceKind, m: u64, seed: u64, draw: F) -> Result<ReferenceEcdf, GueError>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64, GueError> + Sync,
{
    let mut samples = (0..m)
        .into_par_iter()
        .map(|i| draw(&mut sample_rng(seed, i)))
        .collect::<Result<Vec<f64>, GueError>>()?;
    samples.sort_by(f64::total_cmp);
    Ok(ReferenceEcdf {
        meta: ReferenceMeta { kind, m, seed, build: BUILD_ID.to_string() },
        samples,
    })
}

/// Tracy–Widom GUE reference: `m` draws of `n^{1/6}(λ_max − 2√n)` from the
/// tridiagonal sampler.
pub fn tw_reference(n: u64, m: u64, seed: u64) -> Result<ReferenceEcdf, GueError> {
    if n < 100 {
        return Err(GueError::TooSmall { what: "matrix size n", min: 100, got: n });
    }
    if m < 1000 {
        return Err(GueError::TooSmall { what: "sample count m", min: 1000, got: m });
    }
    let nf = n as f64;
    let scale = nf.powf(1.0 / 6.0);
    build_reference(ReferenceKind::TwGue { n }, m, seed, |rng| {
        let t = sample_gue_tridiagonal(n as usize, rng);
        Ok(scale * (largest_eigenvalue(&t, REFERENCE_TOL)? - 2.0 * nf.sqrt()))
    })
}

/// `λ_max` of a dense GUE sample.
pub fn dense_largest_eigenvalue<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<f64, GueError> {
    let h = sample_gue(k, rng);
    largest_eigenvalue(&householder_tridiagonalize(&h), REFERENCE_TOL)
}

/// Reference for `λ_k`: `m` dense `k × k` GUE samples.
pub fn lambda_k_reference(k: u64, m: u64, seed: u64) -> Result<ReferenceEcdf, GueError> {
    if k < 1 {
        return Err(GueError::TooSmall { what: "matrix order k", min: 1, got: k });
    }
    if m < 1000 {
        return Err(GueError::TooSmall { what: "sample count m", min: 1000, got: m });
    }
    build_reference(ReferenceKind::LambdaK { k }, m, seed, |rng| {
        dense_largest_eigenvalue(k as usize, rng)
    })
}

/// Standard normal reference sample.
pub fn normal_reference(m: u64, seed: u64) -> Result<ReferenceEcdf, GueError> {
    if m < 1000 {
        return Err(GueError::TooSmall { what: "sample count m", min: 1000, got: m });
    }
    build_reference(ReferenceKind::Normal, m, seed, |rng| Ok(rng.sample(StandardNormal)))
}

impl ReferenceEcdf {
    /// Rebuilds a reference from its metadata.
    pub fn regenerate(meta: &ReferenceMeta) -> Result<Self, GueError> {
        match meta.kind {
            ReferenceKind::TwGue { n } => tw_reference(n, meta.m, meta.seed),
            ReferenceKind::LambdaK { k } => lambda_k_reference(k, meta.m, meta.seed),
            ReferenceKind::Normal => normal_reference(meta.m, meta.seed),
        }
    }

    /// Writes the metadata header then one sample per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<(), GueError> {
        let mut w = BufWriter::new(File::create(path)?);
        let header = serde_json::to_string(&self.meta).map_err(|e| GueError::Format(e.to_string()))?;
        writeln!(w, "{header}")?;
        for v in &self.samples {
            writeln!(w, "{}", serde_json::to_string(v).map_err(|e| GueError::Format(e.to_string()))?)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<Self, GueError> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let header = lines.next().ok_or_else(|| GueError::Format("empty file".into()))??;
        let meta: ReferenceMeta =
            serde_json::from_str(&header).map_err(|e| GueError::Format(format!("header: {e}")))?;
        let mut samples = Vec::with_capacity(meta.m as usize);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let v: f64 = serde_json::from_str(&line)
                .map_err(|e| GueError::Format(format!("line {}: {e}", i + 2)))?;
            samples.push(v);
        }
        if samples.len() as u64 != meta.m {
            return Err(GueError::Format(format!(
                "header announces {} samples, found {}",
                meta.m,
                samples.len()
            )));
        }
        if samples.windows(2).any(|w| w[0] > w[1]) {
            return Err(GueError::Format("samples are not sorted".into()));
        }
        Ok(Self { meta, samples })
    }
}
