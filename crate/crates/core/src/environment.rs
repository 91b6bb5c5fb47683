//! Environment distributions and site-addressable sampling of ω.
//!
//! An environment assigns to every site `x ∈ Z²` a jump-probability vector
//! `ω(x, ·)` over the four unit directions. Sites are i.i.d. under every
//! family supported here. Values are never stored: a [`WeightOracle`]
//! regenerates `ω(x, ·)` from `(spec, master_seed, x)` on demand.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::Site;
use crate::rng::{mix64, SiteStream};
use crate::special::{digamma, trigamma};

/// Normalization tolerance for weight vectors.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("cannot parse environment spec `{input}`: {reason}")]
    Parse { input: String, reason: String },
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("weight vector entries must lie in (0, 1], got {0:?}")]
    EntryOutOfRange([f64; 4]),
    #[error("weight vector does not sum to 1 (sum = {0})")]
    NotNormalized(f64),
    #[error("mixing probability q must lie in (0, 1), got {0}")]
    MixingProbability(f64),
    #[error("moment order ≤ 2: shape θ = {0} violates A2 (E|log ω(0,e1)|^p < ∞ for some p > 2)")]
    MomentOrder(f64),
    #[error("log ω(0,e1) is almost surely constant; σ = 0")]
    Degenerate,
    #[error("statistics for {0} are not finite")]
    NonFinite(String),
}

/// One of the four nearest-neighbour steps `U = {±e1, ±e2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    E1,
    E2,
    W1,
    W2,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::E1, Direction::E2, Direction::W1, Direction::W2];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn offset(self) -> (i64, i64) {
        match self {
            Direction::E1 => (1, 0),
            Direction::E2 => (0, 1),
            Direction::W1 => (-1, 0),
            Direction::W2 => (0, -1),
        }
    }

    /// E1 and E2 are the up-right steps.
    pub fn is_directed(self) -> bool {
        matches!(self, Direction::E1 | Direction::E2)
    }
}

/// A probability vector over [`Direction`], indexed by `Direction::index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector([f64; 4]);

impl WeightVector {
    /// Checks nonnegativity, normalization, and positivity on E1/E2.
    pub fn new(p: [f64; 4]) -> Result<Self, EnvError> {
        if p.iter().any(|&v| !(0.0..=1.0).contains(&v)) || p[0] <= 0.0 || p[1] <= 0.0 {
            return Err(EnvError::EntryOutOfRange(p));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(EnvError::NotNormalized(sum));
        }
        Ok(Self(p))
    }

    #[inline]
    pub fn get(&self, e: Direction) -> f64 {
        self.0[e.index()]
    }

    pub fn as_array(&self) -> [f64; 4] {
        self.0
    }

    pub fn is_elliptic(&self) -> bool {
        self.0.iter().all(|&v| v > 0.0)
    }

    pub fn min_entry(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Distributional family of the i.i.d. site vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    /// `ω(x,e1) = B ~ Beta(α, β)`, `ω(x,e2) = 1 − B`; no westward mass.
    Beta { alpha: f64, beta: f64 },
    /// `ω(x,·) ~ Dirichlet(α)` in the order E1, E2, W1, W2.
    Dirichlet { alphas: [f64; 4] },
    /// `ω(x,·) = v1` with probability `q`, otherwise `v0`.
    TwoPoint { v0: WeightVector, v1: WeightVector, q: f64 },
    /// `ω(x,e1) = exp(−V)` with `V ~ Pareto(θ, v_min)`, rest split evenly.
    LogPareto { theta: f64, v_min: f64 },
}

/// A validated environment family plus the ellipticity flags it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub family: Family,
    pub elliptic: bool,
    /// `Some(κ)` when every entry of ω is a.s. at least κ > 0.
    pub uniformly_elliptic: Option<f64>,
}

fn positive(name: &'static str, value: f64) -> Result<f64, EnvError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(EnvError::NonPositive { name, value })
    }
}

impl EnvironmentSpec {
    /// Validates a family and fills in the ellipticity flags.
    pub fn new(family: Family) -> Result<Self, EnvError> {
        let (elliptic, uniformly_elliptic) = match &family {
            Family::Beta { alpha, beta } => {
                positive("alpha", *alpha)?;
                positive("beta", *beta)?;
                (false, None)
            }
            Family::Dirichlet { alphas } => {
                for a in alphas {
                    positive("alpha_i", *a)?;
                }
                (true, None)
            }
            Family::TwoPoint { v0, v1, q } => {
                let v0 = WeightVector::new(v0.as_array())?;
                let v1 = WeightVector::new(v1.as_array())?;
                if !v0.is_elliptic() || !v1.is_elliptic() {
                    return Err(EnvError::EntryOutOfRange(if v0.is_elliptic() {
                        v1.as_array()
                    } else {
                        v0.as_array()
                    }));
                }
                if !(*q > 0.0 && *q < 1.0) {
                    return Err(EnvError::MixingProbability(*q));
                }
                (true, Some(v0.min_entry().min(v1.min_entry())))
            }
            Family::LogPareto { theta, v_min } => {
                positive("theta", *theta)?;
                positive("v_min", *v_min)?;
                if *theta <= 2.0 {
                    return Err(EnvError::MomentOrder(*theta));
                }
                (true, None)
            }
        };
        Ok(Self {
            family,
            elliptic,
            uniformly_elliptic,
        })
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self, EnvError> {
        Self::new(Family::Beta { alpha, beta })
    }

    pub fn dirichlet(alphas: [f64; 4]) -> Result<Self, EnvError> {
        Self::new(Family::Dirichlet { alphas })
    }

    pub fn two_point(v0: [f64; 4], v1: [f64; 4], q: f64) -> Result<Self, EnvError> {
        Self::new(Family::TwoPoint {
            v0: WeightVector::new(v0)?,
            v1: WeightVector::new(v1)?,
            q,
        })
    }

    pub fn log_pareto(theta: f64, v_min: f64) -> Result<Self, EnvError> {
        Self::new(Family::LogPareto { theta, v_min })
    }

    /// Re-validates a spec, e.g. one that came through deserialization.
    pub fn validate(&self) -> Result<Self, EnvError> {
        Self::new(self.family.clone())
    }

    /// Whether westward steps have positive probability.
    pub fn has_westward_mass(&self) -> bool {
        !matches!(self.family, Family::Beta { .. })
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl fmt::Display for EnvironmentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            Family::Beta { alpha, beta } => write!(f, "beta:{alpha},{beta}"),
            Family::Dirichlet { alphas } => write!(f, "dirichlet:{}", join(alphas)),
            Family::TwoPoint { v0, v1, q } => write!(
                f,
                "twopoint:{}|{}|{q}",
                join(&v0.as_array()),
                join(&v1.as_array())
            ),
            Family::LogPareto { theta, v_min } => write!(f, "logpareto:{theta},{v_min}"),
        }
    }
}

impl FromStr for EnvironmentSpec {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parse_err = |reason: &str| EnvError::Parse {
            input: s.to_string(),
            reason: reason.to_string(),
        };
        let (name, args) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| parse_err("expected `<family>:<parameters>`"))?;
        let numbers = |part: &str, want: usize| -> Result<Vec<f64>, EnvError> {
            let v = part
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| parse_err(&e.to_string()))?;
            if v.len() != want {
                return Err(parse_err(&format!("expected {want} numbers, got {}", v.len())));
            }
            Ok(v)
        };
        let four = |v: Vec<f64>| [v[0], v[1], v[2], v[3]];
        match name.trim().to_ascii_lowercase().as_str() {
            "beta" => {
                let v = numbers(args, 2)?;
                Self::beta(v[0], v[1])
            }
            "dirichlet" => Self::dirichlet(four(numbers(args, 4)?)),
            "twopoint" => {
                let parts: Vec<&str> = args.split('|').collect();
                if parts.len() != 3 {
                    return Err(parse_err("expected `v0|v1|q`"));
                }
                let q = numbers(parts[2], 1)?[0];
                Self::two_point(four(numbers(parts[0], 4)?), four(numbers(parts[1], 4)?), q)
            }
            "logpareto" => {
                let v = numbers(args, 2)?;
                Self::log_pareto(v[0], v[1])
            }
            other => Err(parse_err(&format!("unknown family `{other}`"))),
        }
    }
}

/// Moments of `log ω(0,e1)` and the derived normalization constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvStats {
    /// E[log ω(0,e1)].
    pub mu: f64,
    /// Standard deviation of log ω(0,e1).
    pub sigma: f64,
    /// Largest q with E|log ω(0,e1)|^q < ∞; `f64::INFINITY` when all moments exist.
    pub moment_order: f64,
    /// Quenched rate along the axis, I_q(e1) = −μ.
    pub iq_axis: f64,
}

/// Closed-form moments of `log ω(0,e1)` for every supported family.
pub fn env_stats(spec: &EnvironmentSpec) -> Result<EnvStats, EnvError> {
    let (mu, var, moment_order) = match &spec.family {
        // log of a Beta(a, b) variable: mean ψ(a) − ψ(a+b), variance ψ'(a) − ψ'(a+b).
        Family::Beta { alpha, beta } => (
            digamma(*alpha) - digamma(alpha + beta),
            trigamma(*alpha) - trigamma(alpha + beta),
            f64::INFINITY,
        ),
        // The E1 marginal of Dirichlet(α) is Beta(α1, Σα − α1).
        Family::Dirichlet { alphas } => {
            let total: f64 = alphas.iter().sum();
            (
                digamma(alphas[0]) - digamma(total),
                trigamma(alphas[0]) - trigamma(total),
                f64::INFINITY,
            )
        }
        Family::TwoPoint { v0, v1, q } => {
            let l0 = v0.get(Direction::E1).ln();
            let l1 = v1.get(Direction::E1).ln();
            let mu = (1.0 - q) * l0 + q * l1;
            (mu, q * (1.0 - q) * (l1 - l0).powi(2), f64::INFINITY)
        }
        // log ω(0,e1) = −V, V Pareto(θ, v_min).
        Family::LogPareto { theta, v_min } => (
            -theta * v_min / (theta - 1.0),
            v_min * v_min * theta / ((theta - 1.0).powi(2) * (theta - 2.0)),
            *theta,
        ),
    };
    if !mu.is_finite() || !var.is_finite() {
        return Err(EnvError::NonFinite(spec.to_string()));
    }
    if var <= 0.0 {
        return Err(EnvError::Degenerate);
    }
    Ok(EnvStats {
        mu,
        sigma: var.sqrt(),
        moment_order,
        iq_axis: -mu,
    })
}

/// Draws `(x, ln x)` for `x ~ Gamma(shape, 1)`.
///
/// Marsaglia–Tsang for shape ≥ 1; shape < 1 uses the `U^{1/shape}` boost
/// evaluated in the log domain so that tiny variates do not underflow.
fn sample_gamma(shape: f64, rng: &mut SiteStream) -> (f64, f64) {
    if shape == 1.0 {
        let x = -rng.next_open01().ln();
        return (x, x.ln());
    }
    if shape < 1.0 {
        let (_, ln_boosted) = sample_gamma(shape + 1.0, rng);
        let ln_x = ln_boosted + rng.next_open01().ln() / shape;
        return (ln_x.exp(), ln_x);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.next_open01();
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 || u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
            let x = d * v;
            return (x, x.ln());
        }
    }
}

/// Log-weights of a normalized gamma vector: `ln(x_i / Σx)`.
fn normalized_log_gammas<const K: usize>(draws: [(f64, f64); K]) -> [f64; K] {
    let all_normal = draws.iter().all(|(x, _)| *x > 1e-300);
    let ln_total = if all_normal {
        draws.iter().map(|(x, _)| x).sum::<f64>().ln()
    } else {
        let m = draws.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
        m + draws.iter().map(|(_, l)| (l - m).exp()).sum::<f64>().ln()
    };
    draws.map(|(_, l)| l - ln_total)
}

/// Deterministic, site-addressable environment sampler.
#[derive(Debug, Clone)]
pub struct WeightOracle {
    spec: EnvironmentSpec,
    master_seed: u64,
    key: u64,
    // Cached per-family constants.
    two_point_logs: Option<([f64; 4], [f64; 4])>,
}

impl WeightOracle {
    pub fn new(spec: EnvironmentSpec, master_seed: u64) -> Self {
        let two_point_logs = match &spec.family {
            Family::TwoPoint { v0, v1, .. } => {
                Some((v0.as_array().map(f64::ln), v1.as_array().map(f64::ln)))
            }
            _ => None,
        };
        Self {
            spec,
            master_seed,
            key: mix64(master_seed ^ 0x7277_7265_5f65_6e76),
            two_point_logs,
        }
    }

    pub fn spec(&self) -> &EnvironmentSpec {
        &self.spec
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// `log ω(x, e)` for all four directions; `-inf` where the family has no mass.
    pub fn log_weights(&self, x: Site) -> [f64; 4] {
        let mut rng = SiteStream::new(self.key, x.x1, x.x2);
        match &self.spec.family {
            // Beta(1,1) is uniform; skipping the gamma pair saves three logarithms per site.
            Family::Beta { alpha, beta } if *alpha == 1.0 && *beta == 1.0 => {
                let u = rng.next_open01();
                [u.ln(), (-u).ln_1p(), f64::NEG_INFINITY, f64::NEG_INFINITY]
            }
            Family::Beta { alpha, beta } => {
                let [l1, l2] =
                    normalized_log_gammas([sample_gamma(*alpha, &mut rng), sample_gamma(*beta, &mut rng)]);
                [l1, l2, f64::NEG_INFINITY, f64::NEG_INFINITY]
            }
            Family::Dirichlet { alphas } => {
                normalized_log_gammas(alphas.map(|a| sample_gamma(a, &mut rng)))
            }
            Family::TwoPoint { q, .. } => {
                let (l0, l1) = self.two_point_logs.expect("cached for two-point family");
                if rng.next_open01() < *q {
                    l1
                } else {
                    l0
                }
            }
            Family::LogPareto { theta, v_min } => {
                let v = v_min * rng.next_open01().powf(-1.0 / theta);
                let rest = (-(-v).exp_m1()).ln() - 3f64.ln();
                [-v, rest, rest, rest]
            }
        }
    }

    /// `(log ω(x,e1), log ω(x,e2))`, the only two values the directed recursions need.
    #[inline]
    pub fn directed_log_weights(&self, x: Site) -> (f64, f64) {
        let l = self.log_weights(x);
        (l[0], l[1])
    }

    /// The jump-probability vector `ω(x, ·)`.
    pub fn weight_at(&self, x: Site) -> WeightVector {
        WeightVector(self.log_weights(x).map(f64::exp))
    }

    /// `log ω(x, e)`; `f64::NEG_INFINITY` when `ω(x, e) = 0`.
    pub fn log_weight(&self, x: Site, e: Direction) -> f64 {
        self.log_weights(x)[e.index()]
    }

    /// Vertex weight of the comparison LPP, `τ_x = log ω(x, e1)`.
    #[inline]
    pub fn tau(&self, x: Site) -> f64 {
        self.log_weights(x)[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn families() -> Vec<EnvironmentSpec> {
        vec![
            EnvironmentSpec::beta(1.0, 1.0).unwrap(),
            EnvironmentSpec::beta(0.4, 2.5).unwrap(),
            EnvironmentSpec::dirichlet([1.0, 1.0, 1.0, 1.0]).unwrap(),
            EnvironmentSpec::dirichlet([2.0, 0.5, 1.5, 3.0]).unwrap(),
            "twopoint:0.4,0.3,0.2,0.1|0.1,0.2,0.3,0.4|0.5".parse().unwrap(),
            EnvironmentSpec::log_pareto(3.0, 1.0).unwrap(),
        ]
    }

    #[test]
    fn validate_sets_flags() {
        let b = EnvironmentSpec::beta(1.0, 1.0).unwrap();
        assert!(!b.elliptic);
        let d = EnvironmentSpec::dirichlet([1.0; 4]).unwrap();
        assert!(d.elliptic);
        assert_eq!(d.uniformly_elliptic, None);
        let t: EnvironmentSpec = "twopoint:0.4,0.3,0.2,0.1|0.1,0.2,0.3,0.4|0.5".parse().unwrap();
        assert!(t.elliptic);
        assert_eq!(t.uniformly_elliptic, Some(0.1));
    }

    #[test]
    fn validate_rejects_bad_parameters() {
        let err = EnvironmentSpec::log_pareto(2.0, 1.0).unwrap_err();
        assert_eq!(err, EnvError::MomentOrder(2.0));
        assert!(err.to_string().contains("moment order ≤ 2"));
        assert!(err.to_string().contains("violates A2"));
        assert!(matches!(
            EnvironmentSpec::beta(0.0, 1.0),
            Err(EnvError::NonPositive { name: "alpha", .. })
        ));
        assert!(matches!(
            EnvironmentSpec::dirichlet([1.0, -1.0, 1.0, 1.0]),
            Err(EnvError::NonPositive { .. })
        ));
        assert!(matches!(
            "twopoint:0.4,0.3,0.2,0.2|0.1,0.2,0.3,0.4|0.5".parse::<EnvironmentSpec>(),
            Err(EnvError::NotNormalized(_))
        ));
        assert!(matches!(
            "twopoint:0.4,0.3,0.2,0.1|0.1,0.2,0.3,0.4|1".parse::<EnvironmentSpec>(),
            Err(EnvError::MixingProbability(_))
        ));
        assert!(matches!("gauss:1".parse::<EnvironmentSpec>(), Err(EnvError::Parse { .. })));
        assert!(matches!("beta:1".parse::<EnvironmentSpec>(), Err(EnvError::Parse { .. })));
    }

    #[test]
    fn text_form_round_trips() {
        for spec in families() {
            let text = spec.to_string();
            let back: EnvironmentSpec = text.parse().unwrap();
            assert_eq!(back, spec, "{text}");
        }
        assert_eq!(
            EnvironmentSpec::dirichlet([1.0; 4]).unwrap().to_string(),
            "dirichlet:1,1,1,1"
        );
    }

    #[test]
    fn weight_at_is_deterministic_and_normalized() {
        for spec in families() {
            let oracle = WeightOracle::new(spec.clone(), 17);
            for i in 0..200 {
                let x = Site::new(i % 13, i / 13);
                let w = oracle.weight_at(x);
                assert_eq!(w, oracle.weight_at(x));
                let sum: f64 = w.as_array().iter().sum();
                assert!((sum - 1.0).abs() < SUM_TOLERANCE, "{spec}: sum {sum}");
                assert!(w.get(Direction::E1) > 0.0 && w.get(Direction::E2) > 0.0);
                if spec.elliptic {
                    assert!(w.is_elliptic());
                }
            }
        }
    }

    #[test]
    fn beta_has_no_westward_mass() {
        let oracle = WeightOracle::new(EnvironmentSpec::beta(1.0, 1.0).unwrap(), 3);
        let x = Site::new(5, 2);
        let w = oracle.weight_at(x);
        assert_eq!(w.get(Direction::W1), 0.0);
        assert_eq!(w.get(Direction::W2), 0.0);
        assert_eq!(oracle.log_weight(x, Direction::W1), f64::NEG_INFINITY);
    }

    #[test]
    fn log_weight_of_known_vectors() {
        let spec: EnvironmentSpec = "twopoint:0.5,0.25,0.125,0.125|1e-9,0.5,0.25,0.249999999|0.5"
            .parse()
            .unwrap();
        let oracle = WeightOracle::new(spec, 1);
        let mut seen_half = false;
        for i in 0..50 {
            let l = oracle.log_weight(Site::new(i, 0), Direction::E1);
            if l > -1.0 {
                assert_abs_diff_eq!(l, -std::f64::consts::LN_2, epsilon = 1e-15);
                seen_half = true;
            }
        }
        assert!(seen_half);
    }

    #[test]
    fn env_stats_closed_forms() {
        let b = env_stats(&EnvironmentSpec::beta(1.0, 1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(b.mu, -1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(b.sigma, 1.0, epsilon = 1e-13);
        assert_eq!(b.iq_axis, -b.mu);
        let lp = env_stats(&EnvironmentSpec::log_pareto(3.0, 1.0).unwrap()).unwrap();
        assert_eq!(lp.moment_order, 3.0);
        assert_abs_diff_eq!(lp.mu, -1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(lp.sigma, 0.75f64.sqrt(), epsilon = 1e-15);
        let tp = env_stats(&"twopoint:0.4,0.3,0.2,0.1|0.1,0.2,0.3,0.4|0.5".parse().unwrap()).unwrap();
        assert_abs_diff_eq!(tp.mu, 0.5 * (0.4f64.ln() + 0.1f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(tp.sigma, 0.5 * 4f64.ln(), epsilon = 1e-15);
        assert!(matches!(
            env_stats(&"twopoint:0.4,0.3,0.2,0.1|0.4,0.2,0.3,0.1|0.5".parse().unwrap()),
            Err(EnvError::Degenerate)
        ));
    }

    /// Adaptive Simpson quadrature, used as an independent oracle.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
        rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
    }

    #[test]
    fn dirichlet_stats_match_quadrature_oracle() {
        // E1 marginal is Beta(1,3) with density 3(1−p)^2; substitute p = e^{-s}.
        let density_s = |s: f64| 3.0 * (1.0 - (-s).exp()).powi(2) * (-s).exp();
        let m1 = simpson(&|s| -s * density_s(s), 0.0, 60.0, 1e-12);
        let m2 = simpson(&|s| s * s * density_s(s), 0.0, 60.0, 1e-12);
        let s = env_stats(&EnvironmentSpec::dirichlet([1.0; 4]).unwrap()).unwrap();
        assert_abs_diff_eq!(m1, -11.0 / 6.0, epsilon = 1e-9);
        assert_abs_diff_eq!(s.mu, m1, epsilon = 1e-9);
        assert_abs_diff_eq!(s.sigma, (m2 - m1 * m1).sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(s.sigma, (49.0f64 / 36.0).sqrt(), epsilon = 1e-12);
    }
}
