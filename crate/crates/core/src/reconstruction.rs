//! M-term reconstruction error: per-sample functionals, Monte Carlo
//! estimators with common random numbers, and exact oracles for
//! independent components.
//!
//! The oracles rest on the layer-cake identity
//! `E[sum of the N−M smallest W_i] = ∫₀^∞ E[(C(t) − M)₊] dt`, where
//! `C(t) = #{i : W_i > t}` is Poisson-binomial for independent `W_i = v_i Z_i²`.
//! Integration runs in `u = √t`, which removes the `√t` cusp at the origin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, validation, Error, Result};
use crate::model::{draw_chunk, VarianceSpec};
use crate::orthogonal::LinearMap;
use crate::quadrature::integrate;
use crate::rng::{self, SeedSpec};
use crate::Scalar;

pub const DEFAULT_TOL: f64 = 1e-8;
const MAX_SEGMENTS: usize = 4000;

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub mean: f64,
    pub stderr: f64,
    #[serde(rename = "n")]
    pub n_samples: usize,
    pub seed: SeedSpec,
}

impl EstimateWithCI {
    /// `mean ± k·stderr` contains `value`.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    #[serde(rename = "abs_err")]
    pub est_abs_error: f64,
}

fn check_terms(len: usize, m: usize) -> Result<()> {
    if m > len {
        Err(validation(format!("M = {m} exceeds dimension {len}")))
    } else {
        Ok(())
    }
}

fn sorted_squares<S: Scalar>(x: &[S], buf: &mut [S]) {
    for (b, v) in buf.iter_mut().zip(x) {
        *b = *v * *v;
    }
    buf.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite components"));
}

/// Sum of the `N − M` smallest squares, using `buf` (length `N`) as scratch.
#[inline]
pub fn m_term_error_with<S: Scalar>(x: &[S], m: usize, buf: &mut [S]) -> S {
    let buf = &mut buf[..x.len()];
    sorted_squares(x, buf);
    buf[..x.len() - m].iter().copied().sum()
}

/// Energy discarded when only the `m` largest-magnitude components of `x` are kept.
pub fn m_term_error_sample<S: Scalar>(x: &[S], m: usize) -> Result<S> {
    check_terms(x.len(), m)?;
    let mut buf = vec![S::zero(); x.len()];
    Ok(m_term_error_with(x, m, &mut buf))
}

/// Sum of the `m` largest squares: the retained energy.
pub fn phi_m<S: Scalar>(x: &[S], m: usize) -> Result<S> {
    if m == 0 {
        return Err(validation("phi_M needs M ≥ 1"));
    }
    check_terms(x.len(), m)?;
    let mut buf = vec![S::zero(); x.len()];
    sorted_squares(x, &mut buf);
    Ok(buf[x.len() - m..].iter().rev().copied().sum())
}

/// Indices of the `m` retained components; among equal magnitudes the
/// smaller index is kept first.
pub fn kept_components<S: Scalar>(x: &[S], m: usize) -> Result<Vec<usize>> {
    check_terms(x.len(), m)?;
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| {
        let (sa, sb) = (x[a] * x[a], x[b] * x[b]);
        sb.partial_cmp(&sa).expect("finite components").then(a.cmp(&b))
    });
    idx.truncate(m);
    Ok(idx)
}

/// Running mean and centred second moment (Chan et al. merge).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Moments {
    pub n: usize,
    pub mean: f64,
    pub m2: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        Self {
            n,
            mean: self.mean + d * nb / n as f64,
            m2: self.m2 + other.m2 + d * d * na * nb / n as f64,
        }
    }

    pub fn estimate(self, seed: SeedSpec) -> EstimateWithCI {
        let n = self.n as f64;
        let var = if self.n > 1 { self.m2 / (n - 1.0) } else { 0.0 };
        EstimateWithCI {
            mean: self.mean,
            stderr: (var.max(0.0) / n).sqrt(),
            n_samples: self.n,
            seed,
        }
    }
}

/// Evaluate `per_draw` on `n` draws of `Y` and return moments of each of its
/// `outputs` values. Chunks run in parallel; merging happens in chunk order,
/// so results do not depend on the worker count.
pub(crate) fn monte_carlo<S, F>(
    spec: &VarianceSpec<S>,
    n: usize,
    seed: SeedSpec,
    outputs: usize,
    per_draw: F,
) -> Vec<Moments>
where
    S: Scalar,
    F: Fn(&[S], &mut [S], &mut [f64]) + Sync,
{
    let dim = spec.dim();
    let sds = spec.std_devs();
    let parts: Vec<(u64, usize, usize)> = rng::chunks(n).collect();
    let per_chunk: Vec<Vec<Moments>> = parts
        .par_iter()
        .map(|&(c, _, rows)| {
            let mut raw = vec![0.0; rows * dim];
            draw_chunk(&sds, seed, c, &mut raw);
            let mut y = vec![S::zero(); dim];
            let mut scratch = vec![S::zero(); 2 * dim];
            let mut out = vec![0.0; outputs];
            let mut acc = vec![Moments::default(); outputs];
            for row in raw.chunks_exact(dim) {
                for (yi, r) in y.iter_mut().zip(row) {
                    *yi = S::of(*r);
                }
                per_draw(&y, &mut scratch, &mut out);
                for (a, o) in acc.iter_mut().zip(&out) {
                    a.push(*o);
                }
            }
            acc
        })
        .collect();
    per_chunk
        .into_iter()
        .fold(vec![Moments::default(); outputs], |acc, chunk| {
            acc.into_iter().zip(chunk).map(|(a, b)| a.merge(b)).collect()
        })
}

fn check_samples(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::EmptyBatch { min: 2, got: n })
    } else {
        Ok(())
    }
}

/// Monte Carlo estimate of `E[m_term_error(map · Y, M)]`.
pub fn estimate_error<S: Scalar>(
    spec: &VarianceSpec<S>,
    map: &LinearMap<S>,
    m: usize,
    n: usize,
    seed: SeedSpec,
) -> Result<EstimateWithCI> {
    check_dim(map.dim(), spec.dim())?;
    check_terms(spec.dim(), m)?;
    check_samples(n)?;
    let dim = spec.dim();
    let moments = monte_carlo(spec, n, seed, 1, |y, scratch, out| {
        let (x, buf) = scratch.split_at_mut(dim);
        map.apply_into(y, x);
        out[0] = m_term_error_with(x, m, buf).f64();
    });
    Ok(moments[0].estimate(seed))
}

/// Common-random-number estimate of `E[err_a − err_b]` on shared draws of `Y`.
pub fn paired_gap<S: Scalar>(
    spec: &VarianceSpec<S>,
    map_a: &LinearMap<S>,
    map_b: &LinearMap<S>,
    m: usize,
    n: usize,
    seed: SeedSpec,
) -> Result<EstimateWithCI> {
    check_dim(map_a.dim(), map_b.dim())?;
    check_dim(map_a.dim(), spec.dim())?;
    check_terms(spec.dim(), m)?;
    check_samples(n)?;
    let dim = spec.dim();
    let moments = monte_carlo(spec, n, seed, 1, |y, scratch, out| {
        let (x, buf) = scratch.split_at_mut(dim);
        map_a.apply_into(y, x);
        let ea = m_term_error_with(x, m, buf);
        map_b.apply_into(y, x);
        let eb = m_term_error_with(x, m, buf);
        out[0] = (ea - eb).f64();
    });
    Ok(moments[0].estimate(seed))
}

/// Estimate of `E[phi_M(map · Y)]`, computed as `Σ η − E[m_term_error]`.
/// `E Σ X_i² = Σ η` holds exactly, so only the error term is sampled; this
/// removes the (large) variance of the total energy from the estimate.
pub fn estimate_retained<S: Scalar>(
    spec: &VarianceSpec<S>,
    map: &LinearMap<S>,
    m: usize,
    n: usize,
    seed: SeedSpec,
) -> Result<EstimateWithCI> {
    if m == 0 {
        return Err(validation("phi_M needs M ≥ 1"));
    }
    let total = crate::orthogonal::induced_variances(map, spec)?.total().f64();
    let err = estimate_error(spec, map, m, n, seed)?;
    Ok(EstimateWithCI {
        mean: total - err.mean,
        ..err
    })
}

fn check_variances(v: &[f64], tol: f64) -> Result<()> {
    if v.is_empty() {
        return Err(validation("no variances"));
    }
    if v.iter().any(|x| !x.is_finite() || *x <= 0.0) {
        return Err(validation("variances must be finite and positive"));
    }
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(validation(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

/// `P(v Z² > u²)`.
#[inline]
fn exceed(u: f64, v: f64) -> f64 {
    libm::erfc(u / (2.0 * v).sqrt())
}

/// Upper bound on `∫_{U²}^∞ Σ_i P(v_i Z² > t) dt`, from `Q(a) ≤ φ(a)/a`.
fn tail_bound(v: &[f64], u: f64) -> f64 {
    v.iter().map(|&vi| 2.0 * vi * exceed(u, vi)).sum()
}

/// Integrate `2u·g(u)` over `[0, ∞)` where `g(u) ≤ Σ_i P(v_i Z² > u²)`.
fn layer_cake<G: Fn(f64) -> f64>(v: &[f64], tol: f64, g: G) -> Result<QuadratureResult> {
    let vmax = v.iter().copied().fold(0.0, f64::max);
    let mut upper = 8.0 * vmax.sqrt();
    while tail_bound(v, upper) > 0.25 * tol {
        upper *= 1.5;
    }
    let tail = tail_bound(v, upper);
    let (value, err) = integrate(|u| 2.0 * u * g(u), 0.0, upper, 0.75 * tol, MAX_SEGMENTS);
    let achieved = err + tail;
    if achieved > tol {
        return Err(Error::Convergence {
            requested: tol,
            achieved,
        });
    }
    Ok(QuadratureResult {
        value,
        est_abs_error: achieved,
    })
}

/// `E[(C − m)₊]` for a Poisson-binomial count with success probabilities `p`.
fn expected_excess(p: impl Iterator<Item = f64>, m: usize, pmf: &mut Vec<f64>) -> f64 {
    pmf.clear();
    pmf.push(1.0);
    for pi in p {
        pmf.push(0.0);
        for k in (1..pmf.len()).rev() {
            pmf[k] = pmf[k] * (1.0 - pi) + pmf[k - 1] * pi;
        }
        pmf[0] *= 1.0 - pi;
    }
    pmf.iter()
        .enumerate()
        .skip(m + 1)
        .map(|(k, q)| (k - m) as f64 * q)
        .sum()
}

/// Exact expected M-term error for independent components with the given
/// variances, to within `tol`.
pub fn independent_error_quadrature(
    variances: &[f64],
    m: usize,
    tol: f64,
) -> Result<QuadratureResult> {
    check_variances(variances, tol)?;
    check_terms(variances.len(), m)?;
    if m == variances.len() {
        return Ok(QuadratureResult {
            value: 0.0,
            est_abs_error: 0.0,
        });
    }
    layer_cake(variances, tol, |u| {
        let mut pmf = Vec::with_capacity(variances.len() + 1);
        expected_excess(variances.iter().map(|&v| exceed(u, v)), m, &mut pmf)
    })
}

/// `E[max_i W_i]` for independent `W_i = v_i Z_i²`.
pub fn expected_max_quadrature(variances: &[f64], tol: f64) -> Result<QuadratureResult> {
    check_variances(variances, tol)?;
    layer_cake(variances, tol, |u| {
        // 1 − Π(1 − p_i), without cancellation when every p_i is small.
        let log_all_below: f64 = variances.iter().map(|&v| libm::log1p(-exceed(u, v))).sum();
        -libm::expm1(log_all_below)
    })
}

/// Exact `E[phi_M]` for independent components: `Σ v − E[error]`, or the
/// expected maximum directly when `M = 1`.
pub fn independent_retained_quadrature(
    variances: &[f64],
    m: usize,
    tol: f64,
) -> Result<QuadratureResult> {
    if m == 0 {
        return Err(validation("phi_M needs M ≥ 1"));
    }
    if m == 1 {
        return expected_max_quadrature(variances, tol);
    }
    let err = independent_error_quadrature(variances, m, tol)?;
    Ok(QuadratureResult {
        value: variances.iter().sum::<f64>() - err.value,
        ..err
    })
}
