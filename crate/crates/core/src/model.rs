//! The Gaussian source vector `Y` and sampling of it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, validation, Error, Result};
use crate::orthogonal::LinearMap;
use crate::rng::{SeedSpec, CHUNK_ROWS};
use crate::Scalar;

/// Descending variance profile of the independent source components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<S>", into = "Vec<S>", bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct VarianceSpec<S> {
    variances: Vec<S>,
}

impl<S: Scalar> VarianceSpec<S> {
    pub fn new(variances: Vec<S>) -> Result<Self> {
        if variances.is_empty() {
            return Err(validation("variance profile is empty"));
        }
        for (i, v) in variances.iter().enumerate() {
            if !v.is_finite() || *v <= S::zero() {
                return Err(validation(format!(
                    "variance {i} must be finite and positive, got {v}"
                )));
            }
        }
        if let Some(i) = variances.windows(2).position(|w| w[0] < w[1]) {
            return Err(validation(format!(
                "variances must be sorted descending: entry {i} < entry {}",
                i + 1
            )));
        }
        Ok(Self { variances })
    }

    pub fn dim(&self) -> usize {
        self.variances.len()
    }

    pub fn variances(&self) -> &[S] {
        &self.variances
    }

    pub fn total(&self) -> S {
        self.variances.iter().copied().sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.variances.iter().map(|v| v.f64()).collect()
    }

    pub(crate) fn std_devs(&self) -> Vec<f64> {
        self.variances.iter().map(|v| v.f64().sqrt()).collect()
    }
}

impl<S: Scalar> TryFrom<Vec<S>> for VarianceSpec<S> {
    type Error = Error;

    fn try_from(v: Vec<S>) -> Result<Self> {
        Self::new(v)
    }
}

impl<S> From<VarianceSpec<S>> for Vec<S> {
    fn from(spec: VarianceSpec<S>) -> Self {
        spec.variances
    }
}

/// Row-major batch of draws; row `r` is one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch<S> {
    pub n_rows: usize,
    pub dim: usize,
    pub values: Vec<S>,
}

impl<S: Scalar> SampleBatch<S> {
    pub fn row(&self, r: usize) -> &[S] {
        &self.values[r * self.dim..(r + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[S]> {
        self.values.chunks_exact(self.dim)
    }

    /// Unbiased sample variance of column `col`.
    pub fn column_variance(&self, col: usize) -> f64 {
        let n = self.n_rows as f64;
        let mean = self.rows().map(|r| r[col].f64()).sum::<f64>() / n;
        self.rows()
            .map(|r| (r[col].f64() - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0)
    }
}

/// Fill `out` (row-major, `rows × sds.len()`) with counter chunk `chunk` of `seed`.
pub(crate) fn draw_chunk(sds: &[f64], seed: SeedSpec, chunk: u64, out: &mut [f64]) {
    let mut normals = seed.normals(chunk);
    for (x, sd) in out.iter_mut().zip(sds.iter().cycle()) {
        *x = sd * normals.next_normal();
    }
}

/// Draw `n` independent realizations of `Y`.
pub fn sample_source<S: Scalar>(
    spec: &VarianceSpec<S>,
    n: usize,
    seed: SeedSpec,
) -> Result<SampleBatch<S>> {
    if n == 0 {
        return Err(Error::EmptyBatch { min: 1, got: 0 });
    }
    let dim = spec.dim();
    let sds = spec.std_devs();
    let mut values = vec![S::zero(); n * dim];
    values
        .par_chunks_mut(CHUNK_ROWS * dim)
        .enumerate()
        .for_each(|(c, out)| {
            let mut buf = vec![0.0; out.len()];
            draw_chunk(&sds, seed, c as u64, &mut buf);
            for (o, b) in out.iter_mut().zip(&buf) {
                *o = S::of(*b);
            }
        });
    Ok(SampleBatch {
        n_rows: n,
        dim,
        values,
    })
}

/// Apply `map` to every row.
pub fn apply_map<S: Scalar>(map: &LinearMap<S>, batch: &SampleBatch<S>) -> Result<SampleBatch<S>> {
    check_dim(map.dim(), batch.dim)?;
    let mut values = vec![S::zero(); batch.values.len()];
    for (out, row) in values.chunks_exact_mut(batch.dim).zip(batch.rows()) {
        map.apply_into(row, out);
    }
    Ok(SampleBatch {
        n_rows: batch.n_rows,
        dim: batch.dim,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(VarianceSpec::new(vec![3.0, 2.0, 2.0, 1.0]).is_ok());
        assert!(VarianceSpec::<f64>::new(vec![]).is_err());
        assert!(VarianceSpec::new(vec![1.0, 2.0]).is_err());
        assert!(VarianceSpec::new(vec![1.0, 0.0]).is_err());
        assert!(VarianceSpec::new(vec![f64::NAN]).is_err());
        assert!(VarianceSpec::new(vec![f64::INFINITY, 1.0]).is_err());
    }

    #[test]
    fn spec_json() {
        let s: VarianceSpec<f64> = serde_json::from_str("[4, 1]").unwrap();
        assert_eq!(s.variances(), &[4.0, 1.0]);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[4.0,1.0]");
        assert!(serde_json::from_str::<VarianceSpec<f64>>("[1, 4]").is_err());
    }

    #[test]
    fn single_component() {
        let spec = VarianceSpec::new(vec![1.0f64]).unwrap();
        let b = sample_source(&spec, 4, SeedSpec::new(0, 0)).unwrap();
        assert_eq!((b.n_rows, b.dim, b.values.len()), (4, 1, 4));

        let big = sample_source(&spec, 200_000, SeedSpec::new(0, 0)).unwrap();
        let ms = big.values.iter().map(|x| x * x).sum::<f64>() / 200_000.0;
        assert!((ms - 1.0).abs() < 4.0 * (2.0f64 / 200_000.0).sqrt());
    }

    #[test]
    fn empty_batch_rejected() {
        let spec = VarianceSpec::new(vec![1.0f64]).unwrap();
        assert_eq!(
            sample_source(&spec, 0, SeedSpec::default()),
            Err(Error::EmptyBatch { min: 1, got: 0 })
        );
    }

    #[test]
    fn deterministic_and_scalar_consistent() {
        let spec = VarianceSpec::new(vec![2.0f64, 1.0, 0.5]).unwrap();
        let seed = SeedSpec::new(11, 3);
        let a = sample_source(&spec, 10_000, seed).unwrap();
        let b = sample_source(&spec, 10_000, seed).unwrap();
        assert_eq!(a, b);

        let spec32 = VarianceSpec::new(vec![2.0f32, 1.0, 0.5]).unwrap();
        let c = sample_source(&spec32, 10_000, seed).unwrap();
        for (x, y) in a.values.iter().zip(&c.values) {
            assert_eq!(*x as f32, *y);
        }
    }

    #[test]
    fn prefix_stable() {
        // Row r depends only on its chunk, so a longer batch extends a shorter one.
        let spec = VarianceSpec::new(vec![1.0f64, 1.0]).unwrap();
        let seed = SeedSpec::new(5, 0);
        let a = sample_source(&spec, 5000, seed).unwrap();
        let b = sample_source(&spec, 9000, seed).unwrap();
        assert_eq!(&a.values[..], &b.values[..a.values.len()]);
    }

    #[test]
    fn apply_identity_and_reflection() {
        let spec = VarianceSpec::new(vec![2.0f64, 1.0, 1.0]).unwrap();
        let b = sample_source(&spec, 100, SeedSpec::new(1, 1)).unwrap();
        let id = LinearMap::identity(3);
        assert_eq!(apply_map(&id, &b).unwrap(), b);

        let refl = LinearMap::from_rows(vec![
            vec![-1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let out = apply_map(&refl, &b).unwrap();
        for (o, i) in out.rows().zip(b.rows()) {
            assert_eq!(o[0], -i[0]);
            assert_eq!(&o[1..], &i[1..]);
        }
        assert!(apply_map(&LinearMap::<f64>::identity(2), &b).is_err());
    }
}
