//! Numerical checks of the inequalities behind the M = 1 argument:
//! majorization of σ over the induced variances η, the Šidák product bound,
//! the Marshall–Proschan consequence for φ_M, the resulting bound on
//! `E max X_i²`, and the dependent-versus-independent comparison for φ_M
//! with its three-component counterexample.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, validation, Error, Result};
use crate::model::VarianceSpec;
use crate::orthogonal::{induced_variances, InducedVariances, LinearMap, OrthogonalMatrix};
use crate::reconstruction::{
    estimate_error, estimate_retained, expected_max_quadrature, independent_error_quadrature,
    independent_retained_quadrature, monte_carlo, EstimateWithCI, QuadratureResult, DEFAULT_TOL,
};
use crate::rng::SeedSpec;
use crate::Scalar;

/// Standard-error multiple separating `holds`/`violated` from `inconclusive`.
pub const Z_THRESHOLD: f64 = 3.0;
pub const DEFAULT_MAJORIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorizationReport {
    /// `Σ_{i≤m} σ_i − Σ_{i≤m} η↓_i` for `m = 1..N−1`.
    pub partial_slacks: Vec<f64>,
    pub total_residual: f64,
    pub holds: bool,
}

impl MajorizationReport {
    pub fn min_slack(&self) -> f64 {
        self.partial_slacks.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Check `σ ≻ η` after sorting η descending.
pub fn check_majorization<S: Scalar>(
    spec: &VarianceSpec<S>,
    eta: &InducedVariances<S>,
    tol: f64,
) -> Result<MajorizationReport> {
    check_dim(spec.dim(), eta.eta.len())?;
    if !(tol > 0.0) {
        return Err(validation("tolerance must be positive"));
    }
    let mut sorted = eta.eta.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).expect("finite variances"));
    let (mut ps, mut pe) = (S::zero(), S::zero());
    let mut partial_slacks = Vec::with_capacity(spec.dim().saturating_sub(1));
    for (s, e) in spec.variances().iter().zip(&sorted).take(spec.dim() - 1) {
        ps = ps + *s;
        pe = pe + *e;
        partial_slacks.push((ps - pe).f64());
    }
    let total_residual = (spec.total() - eta.total()).f64();
    let holds = partial_slacks.iter().all(|s| *s >= -tol) && total_residual.abs() <= tol;
    Ok(MajorizationReport {
        partial_slacks,
        total_residual,
        holds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Violated,
    Inconclusive,
}

/// One side of an inequality: sampled or integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Evidence {
    Estimate(EstimateWithCI),
    Quadrature(QuadratureResult),
}

impl Evidence {
    pub fn value(&self) -> f64 {
        match self {
            Evidence::Estimate(e) => e.mean,
            Evidence::Quadrature(q) => q.value,
        }
    }

    /// Standard error for estimates, error bound for quadrature.
    pub fn uncertainty(&self) -> f64 {
        match self {
            Evidence::Estimate(e) => e.stderr,
            Evidence::Quadrature(q) => q.est_abs_error,
        }
    }
}

impl From<EstimateWithCI> for Evidence {
    fn from(e: EstimateWithCI) -> Self {
        Evidence::Estimate(e)
    }
}

impl From<QuadratureResult> for Evidence {
    fn from(q: QuadratureResult) -> Self {
        Evidence::Quadrature(q)
    }
}

/// Verdict on `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InequalityVerdict {
    pub lhs: Evidence,
    pub rhs: Evidence,
    pub margin: f64,
    #[serde(rename = "z")]
    pub z_score: f64,
    pub verdict: Verdict,
}

impl InequalityVerdict {
    /// z-rule: `holds` at `z ≥ 3`, `violated` at `z ≤ −3`. A zero combined
    /// uncertainty saturates `z` at `±f64::MAX` (or 0 for a zero margin).
    pub fn from_sides(lhs: Evidence, rhs: Evidence) -> Self {
        let margin = rhs.value() - lhs.value();
        let z_score = z_of(margin, lhs.uncertainty().hypot(rhs.uncertainty()));
        let verdict = if z_score >= Z_THRESHOLD {
            Verdict::Holds
        } else if z_score <= -Z_THRESHOLD {
            Verdict::Violated
        } else {
            Verdict::Inconclusive
        };
        Self {
            lhs,
            rhs,
            margin,
            z_score,
            verdict,
        }
    }
}

fn z_of(margin: f64, se: f64) -> f64 {
    if se > 0.0 {
        margin / se
    } else if margin == 0.0 {
        0.0
    } else {
        margin.signum() * f64::MAX
    }
}

/// Deterministic Schur-convexity check `E φ_M(X̃) ≤ E φ_M(Y)` for independent
/// components with variances η versus σ. Requires `σ ≻ η`; the verdict is
/// `holds` when the quadrature margin is at least `−2·tol`.
pub fn schur_consequence_check<S: Scalar>(
    spec: &VarianceSpec<S>,
    eta: &InducedVariances<S>,
    m: usize,
    tol: f64,
) -> Result<InequalityVerdict> {
    let major = check_majorization(spec, eta, DEFAULT_MAJORIZATION_TOL)?;
    if !major.holds {
        return Err(Error::Precondition(format!(
            "σ does not majorize η (min slack {:e}, total residual {:e})",
            major.min_slack(),
            major.total_residual
        )));
    }
    if m == 0 || m > spec.dim() {
        return Err(validation(format!("M must be in 1..={}", spec.dim())));
    }
    let lhs = independent_retained_quadrature(&eta.to_f64(), m, tol)?;
    let rhs = independent_retained_quadrature(&spec.to_f64(), m, tol)?;
    let mut v = InequalityVerdict::from_sides(lhs.into(), rhs.into());
    v.verdict = if v.margin >= -2.0 * tol {
        Verdict::Holds
    } else {
        Verdict::Violated
    };
    Ok(v)
}

/// `P(|N(0, v)| < t)`.
fn below(t: f64, v: f64) -> f64 {
    if v == 0.0 {
        1.0
    } else {
        libm::erf(t / (2.0 * v).sqrt())
    }
}

/// Šidák: `P(∩ {|X_i| < t}) ≥ Π P(|X̃_i| < t)` for each `t`. The product side
/// is analytic; the joint side is a Monte Carlo frequency whose standard
/// error uses the larger of the empirical and product-side Bernoulli
/// variances, so a zero hit count cannot produce a spurious violation.
pub fn sidak_check<S: Scalar>(
    spec: &VarianceSpec<S>,
    map: &LinearMap<S>,
    t_grid: &[f64],
    n: usize,
    seed: SeedSpec,
) -> Result<Vec<InequalityVerdict>> {
    if t_grid.is_empty() {
        return Err(validation("t grid is empty"));
    }
    if let Some(t) = t_grid.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        return Err(validation(format!("grid values must be positive, got {t}")));
    }
    if n < 2 {
        return Err(Error::EmptyBatch { min: 2, got: n });
    }
    let eta = induced_variances(map, spec)?.to_f64();
    let dim = spec.dim();
    let thresholds: Vec<S> = t_grid.iter().map(|t| S::of(*t)).collect();
    let moments = monte_carlo(spec, n, seed, t_grid.len(), |y, scratch, out| {
        let x = &mut scratch[..dim];
        map.apply_into(y, x);
        let peak = x.iter().fold(S::zero(), |m, v| m.max(v.abs()));
        for (o, t) in out.iter_mut().zip(&thresholds) {
            *o = if peak < *t { 1.0 } else { 0.0 };
        }
    });
    Ok(t_grid
        .iter()
        .zip(moments)
        .map(|(&t, mom)| {
            let product: f64 = eta.iter().map(|&v| below(t, v)).product();
            let mut joint = mom.estimate(seed);
            let p = joint.mean;
            joint.stderr = ((p * (1.0 - p)).max(product * (1.0 - product)) / n as f64).sqrt();
            InequalityVerdict::from_sides(
                QuadratureResult {
                    value: product,
                    est_abs_error: 0.0,
                }
                .into(),
                joint.into(),
            )
        })
        .collect())
}

/// `E max_i (T·Y)_i² ≤ E max_i Y_i²` for orthogonal `T`: sampled left side,
/// exact right side.
pub fn lemma1_check<S: Scalar>(
    spec: &VarianceSpec<S>,
    t: &OrthogonalMatrix<S>,
    n: usize,
    seed: SeedSpec,
) -> Result<InequalityVerdict> {
    let lhs = estimate_retained(spec, t.as_map(), 1, n, seed)?;
    let rhs = expected_max_quadrature(&spec.to_f64(), DEFAULT_TOL)?;
    Ok(InequalityVerdict::from_sides(lhs.into(), rhs.into()))
}

/// Cyclic differences `X_i = (Z_i − Z_{i+1})/√2` on three components.
/// Unit row norms, rank 2, not orthogonal.
pub fn van_handel_map<S: Scalar>() -> LinearMap<S> {
    let h = S::of(1.0 / SQRT_2);
    let z = S::zero();
    LinearMap::from_rows(vec![vec![h, -h, z], vec![z, h, -h], vec![-h, z, h]])
        .expect("constant map is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eq11Report {
    /// `E φ_M(X) ≤ E φ_M(X̃)`.
    pub verdict: InequalityVerdict,
    /// `E[m_term_error(X)]`; for `M = N − 1` this is `E min X_i²`.
    pub dependent_error: EstimateWithCI,
    /// `E[m_term_error(X̃)]` for independent components with variances η.
    pub independent_error: QuadratureResult,
}

/// Compare `E φ_M(map·Y)` (sampled) against `E φ_M(X̃)` (exact), where `X̃`
/// has independent components with the same variances.
pub fn eq11_check<S: Scalar>(
    map: &LinearMap<S>,
    spec: &VarianceSpec<S>,
    m: usize,
    n: usize,
    seed: SeedSpec,
) -> Result<Eq11Report> {
    if m == 0 || m > spec.dim() {
        return Err(validation(format!("M must be in 1..={}", spec.dim())));
    }
    let eta = induced_variances(map, spec)?;
    let eta64 = eta.to_f64();
    let total = eta.total().f64();
    let dependent_error = estimate_error(spec, map, m, n, seed)?;
    let lhs = EstimateWithCI {
        mean: total - dependent_error.mean,
        ..dependent_error
    };
    let independent_error = independent_error_quadrature(&eta64, m, DEFAULT_TOL)?;
    let rhs = QuadratureResult {
        value: total - independent_error.value,
        ..independent_error
    };
    Ok(Eq11Report {
        verdict: InequalityVerdict::from_sides(lhs.into(), rhs.into()),
        dependent_error,
        independent_error,
    })
}
