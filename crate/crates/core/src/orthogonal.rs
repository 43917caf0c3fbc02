//! Square maps, orthogonal matrices and their Givens-angle chart.
//!
//! Chart convention: `G(i, j, θ)` is the identity except for
//! `G[i][i] = G[j][j] = cos θ`, `G[i][j] = −sin θ`, `G[j][i] = sin θ`
//! (counterclockwise in the `(i, j)` plane), and
//! `T(θ) = G(0,1,θ₀₁) · G(0,2,θ₀₂) ⋯ G(N−2,N−1,θ)` with pairs in
//! lexicographic order. The chart reaches SO(N) only; reflections are
//! reached by pre-composing with `diag(−1, 1, …, 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, validation, Error, Result};
use crate::model::VarianceSpec;
use crate::rng::SeedSpec;
use crate::Scalar;

/// Largest dimension [`signed_permutations`] will enumerate.
pub const SIGNED_PERMUTATION_CAP: usize = 5;

/// General real `N × N` map, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<S>>", into = "Vec<Vec<S>>", bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct LinearMap<S> {
    dim: usize,
    entries: Vec<S>,
}

impl<S: Scalar> LinearMap<S> {
    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![S::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = S::one();
        }
        Self { dim, entries }
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(validation("matrix has no rows"));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            check_dim(dim, row.len())?;
            entries.extend(row);
        }
        Self::from_row_major(dim, entries)
    }

    pub fn from_row_major(dim: usize, entries: Vec<S>) -> Result<Self> {
        check_dim(dim * dim, entries.len())?;
        if dim == 0 {
            return Err(validation("matrix dimension must be at least 1"));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(validation("matrix entries must be finite"));
        }
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[S] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        self.entries[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<S>> {
        self.entries.chunks_exact(self.dim).map(<[S]>::to_vec).collect()
    }

    /// `out = self · x`.
    #[inline]
    pub fn apply_into(&self, x: &[S], out: &mut [S]) {
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.dim)) {
            *o = row
                .iter()
                .zip(x)
                .fold(S::zero(), |acc, (a, b)| acc + *a * *b);
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        let n = self.dim;
        let mut entries = vec![S::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                for j in 0..n {
                    entries[i * n + j] = entries[i * n + j] + a * other.get(k, j);
                }
            }
        }
        Ok(Self { dim: n, entries })
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let entries = (0..n * n).map(|k| self.get(k % n, k / n)).collect();
        Self { dim: n, entries }
    }

    /// `max |(TᵀT − I)_ij|`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = (0..n).map(|k| (self.get(k, a) * self.get(k, b)).f64()).sum();
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Determinant by LU with partial pivoting.
    pub fn determinant(&self) -> S {
        let n = self.dim;
        let mut a = self.entries.clone();
        let mut det = S::one();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&r, &s| a[r * n + col].abs().partial_cmp(&a[s * n + col].abs()).unwrap())
                .unwrap();
            let p = a[pivot * n + col];
            if p == S::zero() {
                return S::zero();
            }
            if pivot != col {
                for j in 0..n {
                    a.swap(col * n + j, pivot * n + j);
                }
                det = -det;
            }
            det = det * p;
            for r in col + 1..n {
                let f = a[r * n + col] / p;
                for j in col..n {
                    a[r * n + j] = a[r * n + j] - f * a[col * n + j];
                }
            }
        }
        det
    }

    /// Exactly one `±1` per row and column, zeros elsewhere.
    pub fn is_signed_permutation(&self) -> bool {
        let n = self.dim;
        let mut col_hits = vec![0usize; n];
        for i in 0..n {
            let mut hits = 0;
            for j in 0..n {
                let e = self.get(i, j);
                if e.abs() == S::one() {
                    hits += 1;
                    col_hits[j] += 1;
                } else if e != S::zero() {
                    return false;
                }
            }
            if hits != 1 {
                return false;
            }
        }
        col_hits.iter().all(|&c| c == 1)
    }

    pub fn negate_row(&mut self, i: usize) {
        let n = self.dim;
        for e in &mut self.entries[i * n..(i + 1) * n] {
            *e = -*e;
        }
    }

    pub fn cast<T: Scalar>(&self) -> LinearMap<T> {
        LinearMap {
            dim: self.dim,
            entries: self.entries.iter().map(|e| T::of(e.f64())).collect(),
        }
    }
}

impl<S: Scalar> TryFrom<Vec<Vec<S>>> for LinearMap<S> {
    type Error = Error;

    fn try_from(rows: Vec<Vec<S>>) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl<S: Scalar> From<LinearMap<S>> for Vec<Vec<S>> {
    fn from(m: LinearMap<S>) -> Self {
        m.rows()
    }
}

/// A [`LinearMap`] known to satisfy `TᵀT = I` and `|det T| = 1` to within
/// the scalar's tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinearMap<S>", into = "LinearMap<S>", bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct OrthogonalMatrix<S>(LinearMap<S>);

impl<S: Scalar> OrthogonalMatrix<S> {
    pub fn new(map: LinearMap<S>) -> Result<Self> {
        let defect = map.orthogonality_defect();
        if defect > S::ORTHO_TOL {
            return Err(validation(format!(
                "matrix is not orthogonal: max |TᵀT − I| = {defect:e}"
            )));
        }
        let det = map.determinant().f64();
        if (det.abs() - 1.0).abs() > S::DET_TOL {
            return Err(validation(format!("|det| = {} is not 1", det.abs())));
        }
        Ok(Self(map))
    }

    pub fn identity(dim: usize) -> Self {
        Self(LinearMap::identity(dim))
    }

    pub fn as_map(&self) -> &LinearMap<S> {
        &self.0
    }

    pub fn into_map(self) -> LinearMap<S> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    /// Negating a row keeps the matrix orthogonal.
    pub fn negate_row(&mut self, i: usize) {
        self.0.negate_row(i);
    }
}

impl<S: Scalar> TryFrom<LinearMap<S>> for OrthogonalMatrix<S> {
    type Error = Error;

    fn try_from(m: LinearMap<S>) -> Result<Self> {
        Self::new(m)
    }
}

impl<S> From<OrthogonalMatrix<S>> for LinearMap<S> {
    fn from(m: OrthogonalMatrix<S>) -> Self {
        m.0
    }
}

impl<S> AsRef<LinearMap<S>> for OrthogonalMatrix<S> {
    fn as_ref(&self) -> &LinearMap<S> {
        &self.0
    }
}

impl<S> AsRef<LinearMap<S>> for LinearMap<S> {
    fn as_ref(&self) -> &LinearMap<S> {
        self
    }
}

/// Number of Givens angles for dimension `dim`.
pub const fn angle_count(dim: usize) -> usize {
    dim * dim.saturating_sub(1) / 2
}

/// Givens coordinates on SO(N), indexed by lexicographic pairs `(i, j)`, `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams<S>", bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct RotationParams<S> {
    dim: usize,
    angles: Vec<S>,
}

#[derive(Deserialize)]
struct RawParams<S> {
    dim: usize,
    angles: Vec<S>,
}

impl<S: Scalar> TryFrom<RawParams<S>> for RotationParams<S> {
    type Error = Error;

    fn try_from(raw: RawParams<S>) -> Result<Self> {
        Self::new(raw.dim, raw.angles)
    }
}

impl<S: Scalar> RotationParams<S> {
    pub fn new(dim: usize, angles: Vec<S>) -> Result<Self> {
        if dim == 0 {
            return Err(validation("dimension must be at least 1"));
        }
        if angles.len() != angle_count(dim) {
            return Err(validation(format!(
                "dimension {dim} needs {} angles, got {}",
                angle_count(dim),
                angles.len()
            )));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(validation("angles must be finite"));
        }
        Ok(Self { dim, angles })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            angles: vec![S::zero(); angle_count(dim)],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn angles(&self) -> &[S] {
        &self.angles
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> {
        let n = self.dim;
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }
}

/// `T(θ)`; zero angles are skipped, so `θ = 0` yields the identity bit for bit.
pub fn compose_givens<S: Scalar>(params: &RotationParams<S>) -> OrthogonalMatrix<S> {
    let n = params.dim;
    let mut t = LinearMap::identity(n);
    for ((i, j), &theta) in params.pairs().zip(&params.angles) {
        if theta == S::zero() {
            continue;
        }
        let (s, c) = theta.sin_cos();
        // T ← T · G(i, j, θ): columns i and j mix.
        for r in 0..n {
            let a = t.entries[r * n + i];
            let b = t.entries[r * n + j];
            t.entries[r * n + i] = c * a + s * b;
            t.entries[r * n + j] = c * b - s * a;
        }
    }
    OrthogonalMatrix(t)
}

/// Givens angles of a rotation; a matrix with determinant −1 has its first
/// row negated first. `compose_givens(to_givens(T))` reproduces `T` (or the
/// row-flipped `T`) to rounding.
pub fn to_givens<S: Scalar>(t: &OrthogonalMatrix<S>) -> RotationParams<S> {
    let n = t.dim();
    let mut a = t.0.clone();
    if a.determinant() < S::zero() {
        a.negate_row(0);
    }
    let mut angles = Vec::with_capacity(angle_count(n));
    for k in 0..n {
        for j in k + 1..n {
            let theta = a.get(j, k).atan2(a.get(k, k));
            angles.push(theta);
            let (s, c) = theta.sin_cos();
            // A ← G(k, j, θ)ᵀ · A: rows k and j mix, zeroing A[j][k].
            for col in 0..n {
                let x = a.entries[k * n + col];
                let y = a.entries[j * n + col];
                a.entries[k * n + col] = c * x + s * y;
                a.entries[j * n + col] = c * y - s * x;
            }
        }
    }
    RotationParams { dim: n, angles }
}

/// Haar-distributed draw from O(N): Gram–Schmidt on a Gaussian matrix,
/// which leaves the triangular factor with a positive diagonal.
pub fn haar_random<S: Scalar>(dim: usize, seed: SeedSpec) -> Result<OrthogonalMatrix<S>> {
    if dim == 0 {
        return Err(validation("dimension must be at least 1"));
    }
    let mut normals = seed.normals(0);
    // columns[c][r]
    let mut cols: Vec<Vec<f64>> = (0..dim)
        .map(|_| (0..dim).map(|_| normals.next_normal()).collect())
        .collect();
    for c in 0..dim {
        // Two passes of modified Gram–Schmidt for orthogonality at rounding level.
        for _ in 0..2 {
            for p in 0..c {
                let dot: f64 = cols[c].iter().zip(&cols[p]).map(|(x, y)| x * y).sum();
                let (head, tail) = cols.split_at_mut(c);
                for (x, y) in tail[0].iter_mut().zip(&head[p]) {
                    *x -= dot * y;
                }
            }
        }
        let norm = cols[c].iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut cols[c] {
            *x /= norm;
        }
    }
    let entries = (0..dim * dim)
        .map(|k| S::of(cols[k % dim][k / dim]))
        .collect();
    Ok(OrthogonalMatrix(LinearMap { dim, entries }))
}

/// All `2^dim · dim!` signed permutation matrices, without repetition.
pub fn signed_permutations<S: Scalar>(
    dim: usize,
) -> Result<impl Iterator<Item = OrthogonalMatrix<S>>> {
    if dim == 0 {
        return Err(validation("dimension must be at least 1"));
    }
    if dim > SIGNED_PERMUTATION_CAP {
        return Err(Error::CapExceeded {
            dim,
            limit: SIGNED_PERMUTATION_CAP,
        });
    }
    let perms: usize = (1..=dim).product();
    let signs = 1usize << dim;
    Ok((0..perms * signs).map(move |k| {
        let (mut rank, mask) = (k / signs, k % signs);
        // Lehmer code → permutation.
        let mut pool: Vec<usize> = (0..dim).collect();
        let mut entries = vec![S::zero(); dim * dim];
        for row in 0..dim {
            let f: usize = (1..dim - row).product();
            let col = pool.remove(rank / f);
            rank %= f;
            let sign = if mask >> row & 1 == 1 { -S::one() } else { S::one() };
            entries[row * dim + col] = sign;
        }
        OrthogonalMatrix(LinearMap { dim, entries })
    }))
}

/// Per-component variances of `map · Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "S: Scalar + Serialize", deserialize = "S: Scalar + Deserialize<'de>"))]
pub struct InducedVariances<S> {
    pub eta: Vec<S>,
}

impl<S: Scalar> InducedVariances<S> {
    pub fn total(&self) -> S {
        self.eta.iter().copied().sum()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.eta.iter().map(|v| v.f64()).collect()
    }
}

/// `η_i = Σ_j map[i][j]² σ_j`.
pub fn induced_variances<S: Scalar>(
    map: &LinearMap<S>,
    spec: &VarianceSpec<S>,
) -> Result<InducedVariances<S>> {
    check_dim(map.dim(), spec.dim())?;
    let eta = (0..map.dim())
        .map(|i| {
            map.row(i)
                .iter()
                .zip(spec.variances())
                .map(|(t, s)| *t * *t * *s)
                .sum()
        })
        .collect();
    Ok(InducedVariances { eta })
}

/// `D_ij = T_ij²`, doubly stochastic for orthogonal `T`.
pub fn squared_entry_matrix<S: Scalar>(t: &OrthogonalMatrix<S>) -> LinearMap<S> {
    LinearMap {
        dim: t.dim(),
        entries: t.0.entries.iter().map(|e| *e * *e).collect(),
    }
}

/// Largest deviation of any row or column sum from 1.
pub fn stochastic_defect<S: Scalar>(d: &LinearMap<S>) -> f64 {
    let n = d.dim();
    (0..n)
        .flat_map(|i| {
            let row: f64 = (0..n).map(|j| d.get(i, j).f64()).sum();
            let col: f64 = (0..n).map(|j| d.get(j, i).f64()).sum();
            [(row - 1.0).abs(), (col - 1.0).abs()]
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    use approx::assert_abs_diff_eq;

    use super::*;

    #[test]
    fn zero_angles_give_exact_identity() {
        let t = compose_givens(&RotationParams::<f64>::zeros(3));
        assert_eq!(t, OrthogonalMatrix::identity(3));
        for e in t.as_map().entries() {
            assert!(*e == 0.0 && e.is_sign_positive() || *e == 1.0);
        }
    }

    #[test]
    fn quarter_turn_in_the_plane() {
        let t = compose_givens(&RotationParams::new(2, vec![FRAC_PI_2]).unwrap());
        let expect = [0.0, -1.0, 1.0, 0.0];
        for (a, b) in t.as_map().entries().iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn wrong_angle_count() {
        assert!(RotationParams::new(3, vec![0.0f64; 2]).is_err());
        assert!(RotationParams::new(0, Vec::<f64>::new()).is_err());
        assert!(serde_json::from_str::<RotationParams<f64>>(r#"{"dim":3,"angles":[0,0]}"#).is_err());
        let p: RotationParams<f64> = serde_json::from_str(r#"{"dim":3,"angles":[0.1,0.2,0.3]}"#).unwrap();
        assert_eq!(p.angles(), &[0.1, 0.2, 0.3]);
        assert_eq!(
            serde_json::to_string(&p).unwrap(),
            r#"{"dim":3,"angles":[0.1,0.2,0.3]}"#
        );
    }

    #[test]
    fn random_angles_orthogonal_and_roundtrip() {
        for k in 0..100 {
            let mut g = SeedSpec::new(3, k).normals(0);
            let angles = (0..6).map(|_| 3.0 * g.next_normal()).collect();
            let t = compose_givens(&RotationParams::new(4, angles).unwrap());
            assert!(t.as_map().orthogonality_defect() <= 1e-12);
            assert_abs_diff_eq!(t.as_map().determinant(), 1.0, epsilon = 1e-12);
            let back = compose_givens(&to_givens(&t));
            for (a, b) in back.as_map().entries().iter().zip(t.as_map().entries()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn to_givens_handles_reflections() {
        for k in 0..20 {
            let t = haar_random::<f64>(5, SeedSpec::new(8, k)).unwrap();
            let mut flipped = t.clone();
            if t.as_map().determinant() < 0.0 {
                flipped.negate_row(0);
            }
            let back = compose_givens(&to_givens(&t));
            for (a, b) in back.as_map().entries().iter().zip(flipped.as_map().entries()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn haar_dim_one_is_a_sign() {
        let draws: Vec<f64> = (0..2000)
            .map(|k| haar_random::<f64>(1, SeedSpec::new(0, k)).unwrap().as_map().get(0, 0))
            .collect();
        assert!(draws.iter().all(|d| d.abs() == 1.0));
        let plus = draws.iter().filter(|d| **d > 0.0).count() as f64;
        // Binomial(2000, 1/2): sd ≈ 22.4.
        assert!((plus - 1000.0).abs() < 4.0 * 22.4);
    }

    #[test]
    fn haar_is_deterministic_and_valid() {
        let a = haar_random::<f64>(6, SeedSpec::new(1, 2)).unwrap();
        let b = haar_random::<f64>(6, SeedSpec::new(1, 2)).unwrap();
        assert_eq!(a, b);
        assert!(OrthogonalMatrix::new(a.into_map()).is_ok());
        assert!(haar_random::<f64>(0, SeedSpec::default()).is_err());
    }

    #[test]
    fn signed_permutation_counts() {
        for (dim, count) in [(1, 2), (2, 8), (3, 48), (4, 384), (5, 3840)] {
            let all: Vec<OrthogonalMatrix<f64>> = signed_permutations(dim).unwrap().collect();
            assert_eq!(all.len(), count);
            let distinct: HashSet<Vec<i8>> = all
                .iter()
                .map(|m| m.as_map().entries().iter().map(|e| *e as i8).collect())
                .collect();
            assert_eq!(distinct.len(), count);
            for m in &all {
                assert!(m.as_map().is_signed_permutation());
                assert_eq!(m.as_map().orthogonality_defect(), 0.0);
                assert_eq!(m.as_map().determinant().abs(), 1.0);
            }
        }
        assert!(matches!(
            signed_permutations::<f64>(6).err(),
            Some(Error::CapExceeded { dim: 6, limit: 5 })
        ));
    }

    #[test]
    fn induced_variance_examples() {
        let spec = VarianceSpec::new(vec![3.0, 2.0, 1.0]).unwrap();
        let eta = induced_variances(&LinearMap::identity(3), &spec).unwrap();
        assert_eq!(eta.eta, vec![3.0, 2.0, 1.0]);

        let spec = VarianceSpec::new(vec![2.0, 1.0]).unwrap();
        let r = compose_givens(&RotationParams::new(2, vec![FRAC_PI_4]).unwrap());
        let eta = induced_variances(r.as_map(), &spec).unwrap();
        assert_abs_diff_eq!(eta.eta[0], 1.5, epsilon = 1e-15);
        assert_abs_diff_eq!(eta.eta[1], 1.5, epsilon = 1e-15);

        assert!(induced_variances(&LinearMap::identity(2), &VarianceSpec::new(vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn squared_entries_doubly_stochastic() {
        let id = squared_entry_matrix(&OrthogonalMatrix::<f64>::identity(4));
        assert_eq!(id, LinearMap::identity(4));
        let r = compose_givens(&RotationParams::new(2, vec![FRAC_PI_4]).unwrap());
        for e in squared_entry_matrix(&r).entries() {
            assert_abs_diff_eq!(*e, 0.5, epsilon = 1e-15);
        }
        for k in 0..1000 {
            let t = haar_random::<f64>(5, SeedSpec::new(77, k)).unwrap();
            assert!(stochastic_defect(&squared_entry_matrix(&t)) <= 1e-10);
        }
    }

    #[test]
    fn orthogonal_rejects_general_maps() {
        let m = LinearMap::from_rows(vec![vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert!(OrthogonalMatrix::new(m).is_err());
        assert!(LinearMap::from_rows(vec![vec![1.0, f64::NAN], vec![0.0, 1.0]]).is_err());
        assert!(LinearMap::from_rows(vec![vec![1.0, 0.0], vec![0.0]]).is_err());
    }

    #[test]
    fn matrix_json_is_nested_rows() {
        let m = LinearMap::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(serde_json::to_string(&m).unwrap(), "[[1.0,2.0],[3.0,4.0]]");
        let back: LinearMap<f64> = serde_json::from_str("[[1,2],[3,4]]").unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<OrthogonalMatrix<f64>>("[[1,2],[3,4]]").is_err());
        assert!(serde_json::from_str::<OrthogonalMatrix<f64>>("[[0,-1],[1,0]]").is_ok());
    }

    #[test]
    fn f32_chart() {
        let p = RotationParams::new(3, vec![0.3f32, -1.2, 2.0]).unwrap();
        let t = compose_givens(&p);
        assert!(t.as_map().orthogonality_defect() <= f32::ORTHO_TOL);
        assert!(OrthogonalMatrix::new(t.into_map()).is_ok());
    }
}
