use klopt::inequality::van_handel_map;
use klopt::{
    apply_map, estimate_error, haar_random, independent_error_quadrature, paired_gap,
    sample_source, signed_permutations, LinearMap64, SeedSpec, VarianceSpec32, VarianceSpec64,
};

fn spec(v: &[f64]) -> VarianceSpec64 {
    VarianceSpec64::new(v.to_vec()).unwrap()
}

#[test]
fn column_variances_match_spec() {
    let n = 1_000_000;
    let batch = sample_source(&spec(&[4.0, 1.0]), n, SeedSpec::new(21, 0)).unwrap();
    for (col, sigma) in [4.0, 1.0].into_iter().enumerate() {
        // Var(s²) = 2σ⁴/(n − 1) for Gaussian data.
        let se = sigma * (2.0 / (n as f64 - 1.0)).sqrt();
        let s2 = batch.column_variance(col);
        assert!((s2 - sigma).abs() <= 3.0 * se, "column {col}: {s2} vs {sigma}");
    }
}

#[test]
fn orthogonal_maps_preserve_row_norms() {
    let s = spec(&[5.0, 3.0, 2.0, 1.0, 0.5]);
    let batch = sample_source(&s, 5000, SeedSpec::new(22, 0)).unwrap();
    for k in 0..10 {
        let t = haar_random::<f64>(5, SeedSpec::new(23, k)).unwrap();
        let out = apply_map(t.as_map(), &batch).unwrap();
        for (a, b) in out.rows().zip(batch.rows()) {
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((na - nb).abs() <= 1e-10 * nb);
        }
    }
}

#[test]
fn haar_second_moments() {
    let draws = 100_000;
    let mut sums = [[0.0f64; 4]; 9];
    for k in 0..draws {
        let t = haar_random::<f64>(3, SeedSpec::new(24, k)).unwrap();
        for (acc, &e) in sums.iter_mut().zip(t.as_map().entries()) {
            acc[0] += e;
            acc[1] += e * e;
            acc[2] += e * e * e * e;
        }
    }
    let n = draws as f64;
    for acc in sums {
        let mean = acc[0] / n;
        let sq = acc[1] / n;
        let se_mean = (sq / n).sqrt();
        let se_sq = ((acc[2] / n - sq * sq) / n).sqrt();
        assert!(mean.abs() <= 4.0 * se_mean, "mean {mean}");
        assert!((sq - 1.0 / 3.0).abs() <= 4.0 * se_sq, "mean square {sq}");
    }
}

#[test]
fn mc_matches_quadrature_three_units() {
    let s = spec(&[1.0, 1.0, 1.0]);
    let est = estimate_error(&s, &LinearMap64::identity(3), 2, 10_000_000, SeedSpec::new(25, 0)).unwrap();
    let q = independent_error_quadrature(&[1.0; 3], 2, 1e-8).unwrap();
    assert!(est.covers(q.value, 3.0), "{est:?} vs {q:?}");
    assert!((est.mean - 0.19).abs() < 0.005);
}

#[test]
fn mc_matches_quadrature_small_sweep() {
    let specs = [vec![2.0, 1.0], vec![3.0, 2.0, 1.0], vec![5.0, 1.0, 1.0, 0.2], vec![1.0; 5]];
    for (k, v) in specs.iter().enumerate() {
        let s = spec(v);
        let id = LinearMap64::identity(v.len());
        for m in 0..=v.len() {
            let est = estimate_error(&s, &id, m, 200_000, SeedSpec::new(26, k as u64)).unwrap();
            let q = independent_error_quadrature(v, m, 1e-8).unwrap();
            assert!(est.covers(q.value, 3.0), "σ={v:?} M={m}: {est:?} vs {q:?}");
        }
    }
}

#[test]
fn signed_permutations_pair_to_exact_zero() {
    let s = spec(&[3.0, 2.0, 1.0]);
    let id = LinearMap64::identity(3);
    for p in signed_permutations::<f64>(3).unwrap().step_by(5) {
        let g = paired_gap(&s, p.as_map(), &id, 1, 50_000, SeedSpec::new(27, 0)).unwrap();
        assert!(g.covers(0.0, 3.0));
        assert_eq!(g.mean, 0.0);
    }
}

#[test]
fn van_handel_gap_is_negative() {
    let s = spec(&[1.0, 1.0, 1.0]);
    let g = paired_gap(&s, &van_handel_map(), &LinearMap64::identity(3), 2, 10_000_000, SeedSpec::new(28, 0))
        .unwrap();
    assert!(g.mean + 3.0 * g.stderr < 0.0, "{g:?}");
    assert!((g.mean - (0.173 - 0.1928)).abs() < 0.002, "{g:?}");
}

#[test]
fn single_precision_agrees() {
    let s32 = VarianceSpec32::new(vec![3.0, 2.0, 1.0]).unwrap();
    let s64 = spec(&[3.0, 2.0, 1.0]);
    let seed = SeedSpec::new(29, 0);
    let a = estimate_error(&s32, &klopt::LinearMap32::identity(3), 1, 100_000, seed).unwrap();
    let b = estimate_error(&s64, &LinearMap64::identity(3), 1, 100_000, seed).unwrap();
    assert!((a.mean - b.mean).abs() < 1e-5 * b.mean);
}
