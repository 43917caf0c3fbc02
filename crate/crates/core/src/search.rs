//! Numerical exploration of K-L optimality: the baseline error of the
//! source basis, the exhaustive sweep over signed permutations, and a
//! multi-start minimization of the expected error over rotations.
//!
//! The minimization uses sample-average approximation: one frozen set of
//! source draws turns the expectation into a deterministic, piecewise-smooth
//! function of the Givens angles, which Nelder–Mead handles without
//! gradients. The winner is then compared with the identity on fresh draws
//! by a common-random-number paired estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::model::{sample_source, SampleBatch, VarianceSpec};
use crate::orthogonal::{
    compose_givens, haar_random, induced_variances, signed_permutations, to_givens, LinearMap,
    OrthogonalMatrix, RotationParams,
};
use crate::reconstruction::{
    independent_error_quadrature, m_term_error_with, paired_gap, EstimateWithCI, QuadratureResult,
    DEFAULT_TOL,
};
use crate::rng::SeedSpec;
use crate::Scalar;

/// Side length of the initial simplex, in radians.
const INITIAL_STEP: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct SearchConfig<S> {
    pub spec: VarianceSpec<S>,
    #[serde(rename = "M")]
    pub m: usize,
    pub restarts: usize,
    pub saa_samples: usize,
    pub refine_samples: usize,
    pub max_iters_per_restart: usize,
    pub simplex_tolerance: f64,
    pub seed: SeedSpec,
}

impl<S: Scalar> SearchConfig<S> {
    pub fn new(spec: VarianceSpec<S>, m: usize, seed: SeedSpec) -> Self {
        Self {
            spec,
            m,
            restarts: 20,
            saa_samples: 10_000,
            refine_samples: 1_000_000,
            max_iters_per_restart: 1_000,
            simplex_tolerance: 1e-8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m > self.spec.dim() {
            return Err(validation(format!("M = {} exceeds dimension {}", self.m, self.spec.dim())));
        }
        if self.restarts < 1 {
            return Err(validation("restarts must be at least 1"));
        }
        if self.saa_samples < 100 {
            return Err(validation("saa_samples must be at least 100"));
        }
        if self.refine_samples < self.saa_samples {
            return Err(validation("refine_samples must be at least saa_samples"));
        }
        if !(self.simplex_tolerance > 0.0) {
            return Err(validation("simplex_tolerance must be positive"));
        }
        Ok(())
    }
}

/// Best surrogate objective of one restart after iteration `iter`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub restart: usize,
    pub iter: usize,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct SearchResult<S> {
    pub best_params: RotationParams<S>,
    pub best_matrix: OrthogonalMatrix<S>,
    pub best_restart: usize,
    /// Exact `E(N, M, 0)`.
    pub baseline: QuadratureResult,
    /// Surrogate objective at `θ = 0` on the frozen set.
    pub baseline_surrogate: f64,
    /// `E[err(best) − err(identity)]` on fresh common draws.
    pub paired_gap: EstimateWithCI,
    /// `paired_gap.mean < −3·paired_gap.stderr`. Statistical evidence, not a disproof.
    pub conjecture_violation: bool,
    /// Some restart stopped at `max_iters_per_restart` before converging.
    pub budget_exhausted: bool,
    pub restarts: Vec<RestartSummary>,
    /// Per restart, the iterations at which the best objective changed
    /// (plus the first and last); objectives are non-increasing.
    pub trace: Vec<TraceRecord>,
}

/// `E(N, M, 0)`, the expected error in the source basis.
pub fn baseline_error<S: Scalar>(spec: &VarianceSpec<S>, m: usize) -> Result<QuadratureResult> {
    independent_error_quadrature(&spec.to_f64(), m, DEFAULT_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPSweep {
    pub baseline: QuadratureResult,
    pub count: usize,
    pub values: Vec<f64>,
    pub max_deviation: f64,
    /// Every value within `2·tol` of the baseline.
    pub all_equal: bool,
}

/// Error of every signed permutation, each evaluated exactly through its
/// induced variances (a permutation of σ).
pub fn sweep_class_p<S: Scalar>(spec: &VarianceSpec<S>, m: usize) -> Result<ClassPSweep> {
    let baseline = baseline_error(spec, m)?;
    let values = signed_permutations::<S>(spec.dim())?
        .map(|p| {
            let eta = induced_variances(p.as_map(), spec)?;
            Ok(independent_error_quadrature(&eta.to_f64(), m, DEFAULT_TOL)?.value)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_deviation = values
        .iter()
        .map(|v| (v - baseline.value).abs())
        .fold(0.0, f64::max);
    Ok(ClassPSweep {
        baseline,
        count: values.len(),
        all_equal: max_deviation <= 2.0 * DEFAULT_TOL,
        values,
        max_deviation,
    })
}

/// Mean M-term error of `map · y` over the rows of `batch`.
pub fn sample_average_error<S: Scalar>(batch: &SampleBatch<S>, map: &LinearMap<S>, m: usize) -> f64 {
    let dim = batch.dim;
    let mut x = vec![S::zero(); dim];
    let mut buf = vec![S::zero(); dim];
    let total: f64 = batch
        .rows()
        .map(|y| {
            map.apply_into(y, &mut x);
            m_term_error_with(&x, m, &mut buf).f64()
        })
        .sum();
    total / batch.n_rows as f64
}

/// Frozen-sample objective `θ ↦ mean error of T(θ)·y_k`.
pub struct Surrogate<'a, S> {
    batch: &'a SampleBatch<S>,
    m: usize,
}

impl<'a, S: Scalar> Surrogate<'a, S> {
    pub fn new(batch: &'a SampleBatch<S>, m: usize) -> Self {
        Self { batch, m }
    }

    pub fn eval(&self, angles: &[f64]) -> f64 {
        let params = RotationParams::new(self.batch.dim, angles.iter().map(|a| S::of(*a)).collect())
            .expect("optimizer keeps the angle count");
        self.eval_matrix(&compose_givens(&params))
    }

    pub fn eval_matrix(&self, t: &OrthogonalMatrix<S>) -> f64 {
        sample_average_error(self.batch, t.as_map(), self.m)
    }
}

struct Minimum {
    x: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<(usize, f64)>,
}

/// Nelder–Mead with standard coefficients. Converged when the objective
/// spread over the simplex is at most `tol` and its max-norm diameter at
/// most `√tol`.
fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, start: Vec<f64>, tol: f64, max_iters: usize) -> Minimum {
    let d = start.len();
    let f0 = f(&start);
    if d == 0 {
        return Minimum { x: start, f: f0, iterations: 0, converged: true, trace: vec![(0, f0)] };
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(d + 1);
    simplex.push((start.clone(), f0));
    for i in 0..d {
        let mut v = start.clone();
        v[i] += INITIAL_STEP;
        let fv = f(&v);
        simplex.push((v, fv));
    }
    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    // Stable sort keeps the start vertex first among ties.
    order(&mut simplex);
    let mut trace = vec![(0, simplex[0].1)];
    let mut iterations = 0;
    let mut converged = false;
    let along = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> {
        c.iter().zip(w).map(|(ci, wi)| ci + t * (wi - ci)).collect()
    };
    while iterations < max_iters {
        let spread = simplex[d].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= tol && diameter <= tol.sqrt() {
            converged = true;
            break;
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..d)
            .map(|k| simplex[..d].iter().map(|(v, _)| v[k]).sum::<f64>() / d as f64)
            .collect();
        let worst = simplex[d].0.clone();
        let reflected = along(&centroid, &worst, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = along(&centroid, &worst, -2.0);
            let fe = f(&expanded);
            simplex[d] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[d - 1].1 {
            simplex[d] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < simplex[d].1 {
                let c = along(&centroid, &worst, -0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = along(&centroid, &worst, 0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < simplex[d].1.min(fr) {
                simplex[d] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let shrunk = along(&best, &vertex.0, 0.5);
                    let fs = f(&shrunk);
                    *vertex = (shrunk, fs);
                }
            }
        }
        let prev = simplex[0].1;
        order(&mut simplex);
        if simplex[0].1 < prev {
            trace.push((iterations, simplex[0].1));
        }
    }
    let (x, fx) = simplex.swap_remove(0);
    if trace.last().map(|t| t.0) != Some(iterations) {
        trace.push((iterations, fx));
    }
    Minimum { x, f: fx, iterations, converged, trace }
}

/// Multi-start minimization of the frozen-sample error over SO(N), followed
/// by a paired comparison of the winner against the identity.
///
/// Restart 0 starts at `θ = 0`; restart `r > 0` starts at the Givens angles
/// of a Haar draw on substream `r`. All restarts share one frozen sample
/// set, so their objectives are comparable; ties go to the lower restart.
pub fn search_counterexample<S: Scalar>(config: &SearchConfig<S>) -> Result<SearchResult<S>> {
    config.validate()?;
    let dim = config.spec.dim();
    let baseline = baseline_error(&config.spec, config.m)?;
    let frozen = sample_source(&config.spec, config.saa_samples, config.seed.substream(0))?;
    let surrogate = Surrogate::new(&frozen, config.m);
    let baseline_surrogate = surrogate.eval_matrix(&OrthogonalMatrix::identity(dim));
    let starts = config.seed.substream(1);

    let runs: Vec<Minimum> = (0..config.restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                vec![0.0; dim * (dim - 1) / 2]
            } else {
                let h = haar_random::<f64>(dim, starts.substream(r as u64))
                    .expect("dimension is at least 1");
                to_givens(&h).angles().to_vec()
            };
            nelder_mead(
                |a| surrogate.eval(a),
                start,
                config.simplex_tolerance,
                config.max_iters_per_restart,
            )
        })
        .collect();

    let best_restart = runs
        .iter()
        .enumerate()
        .fold(0, |best, (r, run)| if run.f < runs[best].f { r } else { best });
    let best_params =
        RotationParams::new(dim, runs[best_restart].x.iter().map(|a| S::of(*a)).collect())?;
    let best_matrix = compose_givens(&best_params);
    let gap = paired_gap(
        &config.spec,
        best_matrix.as_map(),
        &LinearMap::identity(dim),
        config.m,
        config.refine_samples,
        config.seed.substream(2),
    )?;

    let restarts = runs
        .iter()
        .enumerate()
        .map(|(restart, run)| RestartSummary {
            restart,
            iterations: run.iterations,
            objective: run.f,
            converged: run.converged,
        })
        .collect();
    let trace = runs
        .iter()
        .enumerate()
        .flat_map(|(restart, run)| {
            run.trace.iter().map(move |&(iter, objective)| TraceRecord { restart, iter, objective })
        })
        .collect();
    Ok(SearchResult {
        best_params,
        best_matrix,
        best_restart,
        baseline,
        baseline_surrogate,
        conjecture_violation: gap.mean < -3.0 * gap.stderr,
        paired_gap: gap,
        budget_exhausted: runs.iter().any(|r| !r.converged),
        restarts,
        trace,
    })
}
