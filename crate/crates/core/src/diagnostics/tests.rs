use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::driver::{global_solve, RadiusSchedule, RunConfig, TauSchedule};
use crate::oracle::testing::{p, Abs, Square};
use crate::oracle::{ModelOrder, Oracle};
use crate::problems::{generate, oracle_of, Family};
use crate::types::{rng_from_seed, NormKind, Point, TrustRegion};

fn ball(center: &[f64], r: f64) -> TrustRegion {
    TrustRegion::new(p(center), r, NormKind::Euclidean).unwrap()
}

#[test]
fn z_star_examples() {
    let z = z_star_oracle(&Abs, &ball(&[0.3], 0.1)).unwrap();
    assert!((z.z[0] - 0.2).abs() <= 1e-6);
    assert_eq!(z.method, SearchMethod::Grid1D);
    let z = z_star_oracle(&Square(1), &ball(&[1.0], 0.5)).unwrap();
    assert!((z.z[0] - 0.5).abs() <= 1e-6);
    let z = z_star_oracle(&Abs, &ball(&[0.3], 0.5)).unwrap();
    assert!(z.z[0].abs() <= 1e-6);
    assert!(z.value <= 1e-6);
}

#[test]
fn z_star_in_two_and_three_dimensions() {
    let z = z_star_oracle(&Square(2), &ball(&[1.0, 1.0], 0.5)).unwrap();
    let expected = 1.0 - 0.5 / 2f64.sqrt();
    assert!((z.z[0] - expected).abs() <= 1e-6 && (z.z[1] - expected).abs() <= 1e-6, "{:?}", z.z);
    assert_eq!(z.method, SearchMethod::Grid2D);
    let z = z_star_oracle(&Square(3), &ball(&[0.1, 0.0, -0.1], 1.0)).unwrap();
    assert!(z.value <= 1e-10);
    assert_eq!(z.method, SearchMethod::Grid3D);
    assert!(z_star_oracle(&Square(4), &ball(&[0.0; 4], 1.0)).is_err());
    assert_eq!(grid_points_per_axis(4), None);
}

#[test]
fn multistart_handles_higher_dimensions() {
    let center = [1.0, -1.0, 0.5, 0.0, 2.0];
    let r = 0.5;
    let z = z_star_multistart(&Square(5), &ball(&center, r), 4, 1).unwrap();
    let c = DVector::from_row_slice(&center);
    let expected = &c * (1.0 - r / c.norm());
    assert!((z.z.as_vector() - expected).amax() <= 1e-6, "{:?}", z.z);
    assert_eq!(z.method, SearchMethod::MultiStartPolish);
}

#[test]
fn lambda_examples() {
    let l = lambda_p(&Abs, &ball(&[0.3], 0.1), 1).unwrap();
    assert!((l.lambda_value - 1.0).abs() <= 1e-6);
    let l = lambda_p(&Square(1), &ball(&[1.0], 0.5), 2).unwrap();
    assert!((l.lambda_value - 3.0).abs() <= 1e-6);
    assert_eq!(l.f_x, 1.0);
}

#[test]
fn z_star_never_loses_to_the_lattice() {
    let inst = generate(Family::SineGrowth, 1, 2, 0).unwrap();
    let o = oracle_of(&inst);
    let mut rng = rng_from_seed(3);
    for _ in 0..20 {
        let x: f64 = rng.random_range(-0.5..0.5);
        let r: f64 = rng.random_range(0.01..0.2);
        let region = ball(&[x], r);
        let l = lambda_p(&o, &region, 2).unwrap();
        assert!(l.lambda_value >= 0.0);
        assert!((l.z_star[0] - x).abs() <= r * (1.0 + 1e-12));
        for k in 0..=400 {
            let z = x - r + 2.0 * r * k as f64 / 400.0;
            let v = o.value(&p(&[z])).unwrap();
            assert!(l.f_z_star <= v + 1e-15, "x={x} r={r} z={z} fz*={} v={v} z*={:?}", l.f_z_star, l.z_star);
        }
    }
}

#[test]
fn lambda_grows_with_the_exponent_below_unit_radius() {
    let inst = generate(Family::MaxQuartic, 2, 4, 1).unwrap();
    let o = oracle_of(&inst);
    let mut rng = rng_from_seed(4);
    for _ in 0..10 {
        let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let region = ball(&x, rng.random_range(0.01..0.9));
        let l1 = lambda_p(&o, &region, 1).unwrap();
        let l2 = lambda_p(&o, &region, 2).unwrap();
        assert!(l2.lambda_value >= l1.lambda_value);
        assert!(l1.lambda_value > 0.0);
    }
}

#[test]
fn sine_growth_has_nearby_local_minima() {
    let inst = generate(Family::SineGrowth, 1, 1, 0).unwrap();
    let o = oracle_of(&inst);
    let minima = scan_local_minima(&o, 0.0, 0.2).unwrap();
    let xh = minima
        .iter()
        .copied()
        .filter(|x| *x > 0.0 && *x < 0.2)
        .fold(f64::INFINITY, f64::min);
    assert!(xh.is_finite());
    let delta = 1e-3 * xh * xh;
    let l = lambda_p(&o, &ball(&[xh], delta), 1).unwrap();
    assert!(l.lambda_value <= 1e-6, "{l:?}");
}

#[test]
fn property_probe_on_sine_growth_fails() {
    let inst = generate(Family::SineGrowth, 1, 1, 0).unwrap();
    let o = oracle_of(&inst);
    let opts = ProbeOptions {
        p: 1,
        box_radius: 0.2,
        num_samples: 50,
        seed: 1,
        scan_local_minima: true,
    };
    let probe = property_p_probe(&o, &Point::zeros(1), &opts).unwrap();
    assert!(probe.empirical_inf <= 1e-6);
    assert!(probe.witnesses.iter().any(|w| w.local_min));
    assert_eq!(probe.witnesses.len(), 5);
    assert!(probe.witnesses.windows(2).all(|w| w[0].lambda <= w[1].lambda));
}

#[test]
fn property_probe_on_quadratic_growth_holds() {
    let inst = generate(Family::MaxQuartic, 2, 2, 3).unwrap();
    let o = oracle_of(&inst);
    let opts = ProbeOptions {
        p: 2,
        box_radius: 0.1,
        num_samples: 40,
        seed: 2,
        scan_local_minima: false,
    };
    let probe = property_p_probe(&o, &Point::zeros(2), &opts).unwrap();
    assert!(probe.empirical_inf > 0.0);
    for s in &probe.samples {
        assert!(s.delta < s.x.distance(&Point::zeros(2), NormKind::Euclidean));
    }
    assert!(property_p_probe(&Square(3), &Point::zeros(3), &opts).is_err());
}

#[test]
fn hull_examples() {
    let v = DVector::from_vec(vec![1.0, -2.0]);
    let h = min_norm_hull_point(std::slice::from_ref(&v)).unwrap();
    assert_eq!(h.point, v);
    let h = min_norm_hull_point(&[DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)]).unwrap();
    assert!(h.norm() <= 1e-12);
    assert!(min_norm_hull_point(&[]).is_err());
    // Segment from (1, 1) to (1, -1): closest point (1, 0).
    let h = min_norm_hull_point(&[DVector::from_vec(vec![1.0, 1.0]), DVector::from_vec(vec![1.0, -1.0])]).unwrap();
    assert!((h.point[0] - 1.0).abs() <= 1e-12 && h.point[1].abs() <= 1e-12);
}

/// Exact min-norm point of the hull of vectors in R^3: by Caratheodory it
/// is the affine min-norm point of some subset of at most four vectors with
/// nonnegative affine weights.
fn hull_by_subsets(vs: &[DVector<f64>]) -> f64 {
    let m = vs.len();
    let mut best = f64::INFINITY;
    let mut subset = Vec::new();
    fn rec(
        vs: &[DVector<f64>],
        start: usize,
        subset: &mut Vec<usize>,
        best: &mut f64,
        m: usize,
    ) {
        if !subset.is_empty() {
            let k = subset.len();
            // min ||V w||^2 s.t. 1'w = 1 via the KKT system.
            let mut kkt = DMatrix::zeros(k + 1, k + 1);
            for (a, &i) in subset.iter().enumerate() {
                for (b, &j) in subset.iter().enumerate() {
                    kkt[(a, b)] = vs[i].dot(&vs[j]);
                }
                kkt[(a, k)] = 1.0;
                kkt[(k, a)] = 1.0;
            }
            let mut rhs = DVector::zeros(k + 1);
            rhs[k] = 1.0;
            if let Some(sol) = kkt.lu().solve(&rhs) {
                let w = sol.rows(0, k);
                if w.iter().all(|x| *x >= -1e-12) {
                    let pt = subset
                        .iter()
                        .zip(w.iter())
                        .fold(DVector::zeros(3), |acc, (&i, wi)| acc + &vs[i] * *wi);
                    *best = best.min(pt.norm());
                }
            }
        }
        if subset.len() == 4 {
            return;
        }
        for i in start..m {
            subset.push(i);
            rec(vs, i + 1, subset, best, m);
            subset.pop();
        }
    }
    rec(vs, 0, &mut subset, &mut best, m);
    best
}

#[test]
fn hull_matches_subset_enumeration() {
    let mut rng = rng_from_seed(21);
    for case in 0..10 {
        let offset = DVector::from_fn(3, |_, _| rng.random_range(-1.5..1.5));
        let vs: Vec<DVector<f64>> = (0..20)
            .map(|_| DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal)) * 0.5 + &offset)
            .collect();
        let h = min_norm_hull_point(&vs).unwrap();
        let exact = hull_by_subsets(&vs);
        assert!((h.norm() - exact).abs() <= 1e-6, "case {case}: {} vs {exact}", h.norm());
        assert!((h.norm().powi(2) - exact * exact).abs() <= 1e-10);
        let sum: f64 = h.weights.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-10);
        assert!(h.weights.iter().all(|w| *w >= -1e-12));
        let combo = vs
            .iter()
            .zip(&h.weights)
            .fold(DVector::zeros(3), |acc, (v, w)| acc + v * *w);
        assert!((combo - &h.point).amax() <= 1e-10);
    }
}

#[test]
fn criticality_examples() {
    let c = criticality_certificate(&Square(1), &p(&[0.0]), 0.1, 50, 1).unwrap();
    assert!(c.value <= 0.2);
    assert_eq!(c.samples, 51);
    let c = criticality_certificate(&Abs, &p(&[0.0]), 0.1, 50, 1).unwrap();
    assert!(c.value <= 0.1);
    let c = criticality_certificate(&Abs, &p(&[1.0]), 0.1, 50, 1).unwrap();
    assert!((c.value - 1.0).abs() <= 1e-12);
    assert!(criticality_certificate(&Abs, &p(&[0.0]), 0.0, 5, 1).is_err());
}

#[test]
fn remainder_of_a_quadratic_is_roundoff() {
    let opts = RemainderOptions {
        q: ModelOrder::Quadratic,
        samples_per_delta: 20,
        seed: 1,
        mode: RemainderMode::Branches,
    };
    let est = remainder_constant_estimator(&Square(2), &p(&[0.3, -0.2]), &[1.0, 0.1, 0.01, 1e-3], &opts).unwrap();
    assert_eq!(est.slope, None);
    assert!(est.k_hat <= 1e-6, "{est:?}");
    assert_eq!(est.levels.len(), 4);
    assert_eq!(est.mode, RemainderMode::Branches);
    assert!(remainder_constant_estimator(&Square(2), &p(&[0.0, 0.0]), &[1.0, 0.1, 0.01], &opts).is_err());
    assert!(remainder_constant_estimator(&Square(2), &p(&[0.0, 0.0]), &[1.0, 0.1, 0.2, 0.01], &opts).is_err());
}

#[test]
fn single_sample_remainder_of_a_square() {
    let r1 = single_sample_remainder(&Square(2), &p(&[0.5, 0.5]), ModelOrder::Linear, 0.1, 10, 1).unwrap();
    assert!((r1 - 0.01).abs() <= 1e-15);
    let r2 = single_sample_remainder(&Square(2), &p(&[0.5, 0.5]), ModelOrder::Quadratic, 0.1, 10, 1).unwrap();
    assert!(r2 <= 1e-15);
}

#[test]
fn lambda_bound_holds_on_the_toy_run() {
    let inst = generate(Family::ToyQuadratic, 1, 0, 0).unwrap();
    let o = oracle_of(&inst);
    let config = RunConfig {
        p: 2,
        q: ModelOrder::Quadratic,
        radii: RadiusSchedule::Geometric {
            delta0: 1.0,
            ratio: 0.1,
        },
        tau: TauSchedule::Constant(1e-5),
        j_max: 3,
        ..RunConfig::defaults(inst.default_x0())
    };
    let run = global_solve(&o, &config, None).unwrap();
    let certs = lambda_bound_certificate(&o, &config, &run, 0.0).unwrap();
    assert_eq!(certs.len(), 3);
    assert!(certs.iter().all(|c| c.holds), "{certs:?}");
}
