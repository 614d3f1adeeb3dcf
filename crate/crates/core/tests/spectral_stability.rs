use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trunctx_core::spectral::{decay_fit_min, DEFAULT_FLOOR};
use trunctx_core::stability::{fit_smallness, stability_samples, StabilitySample};
use trunctx_core::{
    assemble_truncated_hilbert, decay_fit, fit_stability, make_grid, picard_analysis,
    smallness_probe, stability_fit, trace_gap_probe, weighted_svd, Error, Grid, GridFn,
    IntervalDomain, OpKind, OpMatrix, WeightedOperator,
};

fn grid1(lo: f64, hi: f64, n: usize) -> Arc<Grid<f64>> {
    Arc::new(make_grid(IntervalDomain::new(lo, hi).unwrap(), &[n]).unwrap())
}

fn model_pair(n: usize) -> (Arc<Grid<f64>>, Arc<Grid<f64>>) {
    (grid1(-2.0, -1.0, n), grid1(0.0, 1.0, n))
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

#[test]
fn zero_and_identity_operators() {
    let j = grid1(0.0, 1.0, 12);
    let i = grid1(-2.0, -1.0, 9);
    let zero = OpMatrix::zeros(Arc::clone(&i), Arc::clone(&j));
    let s = weighted_svd(&zero).unwrap();
    assert!(s.values().iter().all(|v| *v == 0.0));
    let id = OpMatrix::identity(Arc::clone(&j));
    let s = weighted_svd(&id).unwrap();
    assert!(s.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
    assert_eq!(id.kind(), &OpKind::Identity);
}

#[test]
fn model_hilbert_svd_matches_gram_eigenvalues() {
    let (i, j) = model_pair(128);
    let a = assemble_truncated_hilbert(&i, &j).unwrap();
    let s = weighted_svd(&a).unwrap();
    // brute-force oracle: top eigenvalue of the weighted normal matrix
    let ws = a.source_weights();
    let wt = a.target_weights();
    let b = DMatrix::from_fn(128, 128, |r, c| {
        wt[r].sqrt() * a.entries()[(r, c)] / ws[c].sqrt()
    });
    let eig = SymmetricEigen::new(b.tr_mul(&b));
    let top = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max).sqrt();
    assert!((s.sigma_max() - top).abs() <= 1e-12 * top);
    // regression pin
    assert!((s.sigma_max() - 0.536_203_172_833_061).abs() <= 1e-12);

    let sigma1 = s.sigma_max();
    assert!((s.reconstruct() - a.entries()).amax() <= 1e-10 * sigma1);
    assert!(s.orthonormality_defect() <= 1e-10);
    assert!(s.left_orthonormality_defect() <= 1e-10);
    for k in 0..6 {
        let v = s.right_vector(k);
        let u = s.left_vector(k);
        let av = a.apply_raw(&v);
        let atu = a.adjoint_apply_raw(&u);
        let sk = s.values()[k];
        assert!((av - &u * sk).amax() <= 1e-10 * sigma1);
        assert!((atu - &v * sk).amax() <= 1e-10 * sigma1);
    }
    assert!(s.values().as_slice().windows(2).all(|w| w[0] >= w[1]));
}

// Resolutions small enough that every singular value stays above rounding level.
#[test]
fn smallest_singular_value_is_positive_at_coarse_resolutions() {
    let mut prev = f64::INFINITY;
    for n in [3, 4, 6, 8] {
        let (i, j) = model_pair(n);
        let s = weighted_svd(&assemble_truncated_hilbert(&i, &j).unwrap()).unwrap();
        assert!(s.sigma_min() > 1e-15, "n = {n}: {}", s.sigma_min());
        assert!(s.sigma_min() < prev);
        prev = s.sigma_min();
    }
}

#[test]
fn singular_vectors_follow_sign_convention() {
    let (i, j) = model_pair(64);
    let s = weighted_svd(&assemble_truncated_hilbert(&i, &j).unwrap()).unwrap();
    for k in 0..5 {
        let v = s.right_vector(k);
        let tiny = v.amax() * 1e-8;
        let first = v.iter().find(|x| x.abs() > tiny).unwrap();
        assert!(*first > 0.0);
    }
}

#[test]
fn singular_values_decay_exponentially() {
    let mut rates = Vec::new();
    for lo in [-1.5, -2.0, -3.0] {
        let i = grid1(lo, lo + 1.0, 256);
        let j = grid1(0.0, 1.0, 256);
        let s = weighted_svd(&assemble_truncated_hilbert(&i, &j).unwrap()).unwrap();
        let fit = decay_fit_min(s.values().as_slice(), DEFAULT_FLOOR, 3).unwrap();
        assert!(fit.r2.unwrap() >= 0.99, "{fit:?}");
        rates.push(fit.c);
    }
    assert!(rates.windows(2).all(|w| w[1] > w[0]), "{rates:?}");
}

#[test]
fn model_pair_has_fewer_than_eight_values_above_floor() {
    let (i, j) = model_pair(256);
    let s = weighted_svd(&assemble_truncated_hilbert(&i, &j).unwrap()).unwrap();
    assert!(matches!(
        decay_fit(s.values().as_slice(), DEFAULT_FLOOR),
        Err(Error::InsufficientData(_))
    ));
    let near = grid1(-1.5, -0.5, 256);
    let s = weighted_svd(&assemble_truncated_hilbert(&near, &j).unwrap()).unwrap();
    let fit = decay_fit(s.values().as_slice(), DEFAULT_FLOOR).unwrap();
    assert!(fit.r2.unwrap() >= 0.99);
}

#[test]
fn picard_coefficients() {
    let (i, j) = model_pair(128);
    let a = assemble_truncated_hilbert(&i, &j).unwrap();
    let s = weighted_svd(&a).unwrap();
    let u1 = s.left_fns(0).unwrap();
    let rows = picard_analysis(&u1, &s).unwrap();
    assert_eq!(rows[0].k, 1);
    assert!((rows[0].coefficient - 1.0).abs() < 1e-12);
    assert!(rows[1..].iter().all(|r| r.coefficient < 1e-12));

    let rows = picard_analysis(&[j.zeros()], &s).unwrap();
    assert!(rows.iter().all(|r| r.coefficient == 0.0));

    let h = j.sample(|x| (std::f64::consts::PI * x[0]).sin());
    let rows = picard_analysis(&[h], &s).unwrap();
    let pinned = [
        0.621_829_356_651_069_1,
        0.182_075_390_346_173_6,
        0.254_123_284_511_029_5,
        0.123_086_237_411_933_9,
        0.020_900_984_768_236_27,
    ];
    for (r, p) in rows.iter().zip(pinned) {
        assert!((r.coefficient - p).abs() <= 1e-9, "{r:?}");
    }
    assert!(picard_analysis(&[i.zeros()], &s).is_err());
}

fn stability_family(n: usize) -> (OpMatrix<f64>, Vec<GridFn<f64>>) {
    let (i, j) = model_pair(n);
    let hj = assemble_truncated_hilbert(&j, &i).unwrap();
    let s = weighted_svd(&hj).unwrap();
    let fam = (0..20)
        .map(|k| GridFn::new(Arc::clone(&j), s.right_vector(k)).unwrap())
        .collect();
    (hj, fam)
}

#[test]
fn stability_fit_on_singular_vectors_validates_on_combinations() {
    let (hj, fam) = stability_family(128);
    let mut fit = stability_fit(&hj, &fam).unwrap();
    assert_eq!(fit.training, 20);
    assert!(fit.c >= 1.0);
    let train = stability_samples(&hj, &fam).unwrap();
    assert_eq!(fit.validate(&train), 0);

    let j = Arc::clone(fam[0].grid());
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let holdout: Vec<GridFn<f64>> = (0..20)
        .map(|_| {
            let c = normals(&mut rng, 20);
            let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
            fam.iter()
                .zip(&c)
                .fold(j.zeros(), |acc, (v, ck)| acc.combine(1.0, v, ck / norm).unwrap())
        })
        .collect();
    let hs = stability_samples(&hj, &holdout).unwrap();
    assert_eq!(fit.validate(&hs), 0);
    // regression pin
    assert_eq!((fit.c, fit.sigma_tilde), (1.0, std::f64::consts::SQRT_2));
}

#[test]
fn stability_fit_is_homogeneous() {
    let j = grid1(0.0, 1.0, 64);
    let i = grid1(-2.0, -1.0, 64);
    let a = assemble_truncated_hilbert(&j, &i).unwrap();
    let g = j.sample(|x| (3.0 * x[0]).sin() + 0.5);
    let samples = stability_samples(&a, &[g.clone(), g.scaled(2.0)]).unwrap();
    assert!((samples[0].ratio() - samples[1].ratio()).abs() < 1e-12);
    let slack = |s: &StabilitySample| (s.h1 / s.data).ln();
    assert!((slack(&samples[0]) - slack(&samples[1])).abs() < 1e-12);

    let one = stability_fit(&a, &[j.sample(|_| 1.0)]).unwrap();
    let s = stability_samples(&a, &[j.sample(|_| 1.0)]).unwrap();
    assert!((s[0].ratio() - 1.0).abs() < 1e-12);
    assert!(one.holds(&s[0]));

    assert!(matches!(
        stability_fit(&a, &[j.zeros()]),
        Err(Error::InvalidParameter(_))
    ));
    assert!(fit_stability(&[]).is_err());
}

#[test]
fn smallness_probe_records() {
    let (i, j) = model_pair(128);
    let zero = smallness_probe(&j.zeros(), &i, &[0.1, 0.05]).unwrap();
    assert!(zero
        .iter()
        .all(|r| r.trace == 0.0 && r.data == 0.0 && r.source == 0.0));
    assert!(smallness_probe(&j.zeros(), &i, &[0.0]).is_err());
    assert!(matches!(
        smallness_probe(&j.zeros(), &grid1(0.5, 2.0, 8), &[0.1]),
        Err(Error::Disjointness(_))
    ));

    let (_, fam) = stability_family(128);
    let low = smallness_probe(&fam[0], &i, &[0.1]).unwrap()[0];
    let high = smallness_probe(&fam[19], &i, &[0.1]).unwrap()[0];
    assert!(high.data < low.data);
    assert!(high.trace < low.trace);
    // regression pins
    assert!((low.data - 0.536_203_172_833_061).abs() < 1e-12);
    assert!((low.trace - 0.788_308_373_167_820).abs() < 1e-9);

    let recs = smallness_probe(&fam[0], &i, &[0.1, 0.05, 0.025, 0.0125]).unwrap();
    let gaps: Vec<f64> = recs.iter().map(|r| (r.source - r.trace).abs()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn smallness_fit_holds_on_holdout_grid() {
    let (i, _) = model_pair(128);
    let (_, fam) = stability_family(128);
    let mut train = Vec::new();
    let mut holdout = Vec::new();
    for g in &fam {
        let recs = smallness_probe(g, &i, &[0.4, 0.2, 0.1, 0.05]).unwrap();
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            train.extend(recs.iter().map(|r| (eps, *r)));
        }
        let recs = smallness_probe(g, &i, &[0.3, 0.15, 0.075]).unwrap();
        for eps in [3e-2, 3e-3] {
            holdout.extend(recs.iter().map(|r| (eps, *r)));
        }
    }
    let mut fit = fit_smallness(&train).unwrap();
    assert_eq!(fit.validate(&train), 0);
    assert_eq!(fit.validate(&holdout), 0);
}

#[test]
fn trace_gap_rates() {
    let j = grid1(0.0, 1.0, 128);
    let deltas = [0.1, 0.05, 0.025, 0.0125];
    let flat = trace_gap_probe(&j.sample(|_| 1.0), &deltas, 0.2).unwrap();
    assert!(flat.p.unwrap() >= 0.9);
    assert!(flat.errors.windows(2).all(|w| w[1] < w[0]));

    let zero = trace_gap_probe(&j.zeros(), &deltas, 0.2).unwrap();
    assert!(zero.errors.iter().all(|e| *e == 0.0));
    assert!(zero.p.is_none());

    let saw = trace_gap_probe(&j.sample(|x| (8.0 * x[0]).fract()), &deltas, 0.2).unwrap();
    assert!(saw.errors[0] > flat.errors[0]);
    assert!((saw.errors[0] - 0.233_435_249_733_664).abs() < 1e-9);

    assert!(trace_gap_probe(&j.zeros(), &deltas, 0.6).is_err());
    assert!(trace_gap_probe(&j.zeros(), &deltas, 0.0).is_err());
}

#[test]
fn values_csv_has_header() {
    let (i, j) = model_pair(16);
    let s = weighted_svd(&assemble_truncated_hilbert(&i, &j).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("s.csv");
    s.write_values_csv(&p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("k,sigma\n1,"));
    assert_eq!(text.lines().count(), 17);
}

#[test]
fn f32_svd_of_small_operator() {
    let i: Arc<Grid<f32>> =
        Arc::new(make_grid(IntervalDomain::new(-2.0f32, -1.0).unwrap(), &[32]).unwrap());
    let j: Arc<Grid<f32>> =
        Arc::new(make_grid(IntervalDomain::new(0.0f32, 1.0).unwrap(), &[32]).unwrap());
    let s = weighted_svd(&assemble_truncated_hilbert(&i, &j).unwrap()).unwrap();
    assert!((s.sigma_max() - 0.5362).abs() < 1e-3);
}
