use std::collections::BTreeSet;
use std::f64::consts::PI;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use heatlab::complexes::{assemble_circle, assemble_torus, product_complex};
use heatlab::densities::de_rham_super_density;
use heatlab::invariance::{
    enumerate_brute_force, enumerate_monomials, kernel_scan, reflection_even, restriction, JetContext,
};
use heatlab::laplace::{canonicalize, euler_form, recompose, LaplaceCoefficients, MatJet};
use heatlab::linalg::SparseMat;
use heatlab::models::{integrate, ModelManifold, TwistForm};
use heatlab::spectral::{eigensolve, geometric_grid};
use heatlab::taylor::Taylor;
use heatlab::tensor::{curvature, MetricJet};
use heatlab::trig::TrigPoly;

const TAU: f64 = 2.0 * PI;

fn random_taylor(rng: &mut ChaCha8Rng, m: usize, order: usize, scale: f64) -> Taylor<f64> {
    let len = Taylor::<f64>::zeros(m, order).coeffs().len();
    Taylor::from_coeffs(m, order, (0..len).map(|_| rng.gen_range(-scale..scale)).collect())
}

fn random_ctaylor(rng: &mut ChaCha8Rng, m: usize, order: usize) -> Taylor<Complex64> {
    let len = Taylor::<f64>::zeros(m, order).coeffs().len();
    let c = (0..len).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    Taylor::from_coeffs(m, order, c)
}

/// Positive definite metric jet: identity plus a small symmetric perturbation.
fn random_metric(rng: &mut ChaCha8Rng, m: usize, order: usize) -> MetricJet {
    let mut g = vec![Taylor::<f64>::zeros(m, order); m * m];
    for i in 0..m {
        for j in i..m {
            let mut t = random_taylor(rng, m, order, 0.3);
            if i == j {
                t = t.add_scalar(1.0);
            }
            g[i * m + j] = t.clone();
            g[j * m + i] = t;
        }
    }
    MetricJet::new(m, g).expect("near-identity jet is positive definite")
}

fn random_twist_poly(rng: &mut ChaCha8Rng, periods: &[f64], bandwidth: i64) -> TrigPoly {
    let mut h = TrigPoly::zero(periods);
    for k in -bandwidth..=bandwidth {
        let c = Complex64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
        let key: Vec<i64> = if periods.len() == 1 { vec![k] } else { vec![k, rng.gen_range(-bandwidth..=bandwidth)] };
        let neg: Vec<i64> = key.iter().map(|x| -x).collect();
        let mode = TrigPoly::mode(periods, key.clone(), c);
        // real-valued: add the conjugate mode
        h = h.add(&mode).add(&TrigPoly::mode(periods, neg, c.conj()));
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig { rng_seed: RngSeed::Fixed(11), ..ProptestConfig::with_cases(100) })]

    #[test]
    fn curvature_symmetries_and_bianchi(seed in any::<u64>(), m in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pack = curvature(&random_metric(&mut rng, m, 2)).unwrap();
        prop_assert!(pack.symmetry_residual() < 1e-9);
    }

    #[test]
    fn curvature_scalars_are_coordinate_invariant(seed in any::<u64>(), m in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jet = random_metric(&mut rng, m, 2);
        let mut a: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-0.4..0.4)).collect();
        for i in 0..m {
            a[i * m + i] += 1.0;
        }
        let p = curvature(&jet).unwrap();
        let q = curvature(&jet.linear_change(&a).unwrap()).unwrap();
        for (x, y) in [(p.tau, q.tau), (p.norm_rho2, q.norm_rho2), (p.norm_r2, q.norm_r2)] {
            prop_assert!((x - y).abs() < 1e-8 * x.abs().max(1.0), "{} vs {}", x, y);
        }
    }

    #[test]
    fn product_jets_split(seed in any::<u64>(), m1 in 1usize..=2, m2 in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (j1, j2) = (random_metric(&mut rng, m1, 2), random_metric(&mut rng, m2, 2));
        let (p1, p2) = (curvature(&j1).unwrap(), curvature(&j2).unwrap());
        let p = curvature(&j1.block_diag(&j2)).unwrap();
        prop_assert!((p.tau - p1.tau - p2.tau).abs() < 1e-10);
        let m = m1 + m2;
        let first = |i: usize| i < m1;
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        let same = [b, c, d].iter().all(|&x| first(x) == first(a));
                        if !same {
                            prop_assert!(p.r(a, b, c, d).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn flat_factor_kills_euler_form(seed in any::<u64>(), m in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jet = random_metric(&mut rng, m, 2).block_diag(&MetricJet::euclidean(1, 2));
        prop_assert!(euler_form(&curvature(&jet).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn canonical_form_round_trip(seed in any::<u64>(), m in 1usize..=3, fiber in 1usize..=2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let jet = random_metric(&mut rng, m, 3);
        let mat = |rng: &mut ChaCha8Rng, order: usize| {
            MatJet::from_entries(fiber, (0..fiber * fiber).map(|_| random_ctaylor(rng, m, order)).collect()).unwrap()
        };
        let a: Vec<MatJet> = (0..m).map(|_| mat(&mut rng, 2)).collect();
        let b = mat(&mut rng, 1);
        let op = LaplaceCoefficients::new(&jet, a, b).unwrap();
        let back = recompose(&canonicalize(&op, &jet).unwrap()).unwrap();
        for (x, y) in op.a.iter().zip(&back.a) {
            prop_assert!(x.truncate(y.order()).sub(y).max_abs() < 1e-9);
        }
        prop_assert!(op.b.truncate(back.b.order()).sub(&back.b).max_abs() < 1e-9);
    }

    #[test]
    fn supertrace_densities_on_the_circle(seed in any::<u64>(), x in 0.0..TAU) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = random_twist_poly(&mut rng, &[TAU], 3);
        let tw = TwistForm::new(&[TAU], vec![theta.clone()]).unwrap();
        prop_assert!(de_rham_super_density(&tw, 0, &[x]).unwrap().abs() < 1e-15);
        // supertraced a_2 = θ'/√π
        let want = theta.d(0).eval(&[x]).re / PI.sqrt();
        prop_assert!((de_rham_super_density(&tw, 2, &[x]).unwrap() - want).abs() < 1e-10);
    }

    #[test]
    fn quadrature_is_exact_for_band_limited_integrands(seed in any::<u64>(), b in 1i64..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per = [TAU, 3.0];
        let f = random_twist_poly(&mut rng, &per, b).add(&TrigPoly::constant(&per, Complex64::new(0.7, 0.0)));
        let model = ModelManifold::flat_torus(per.to_vec()).with_nodes(vec![2 * b as usize + 2; 2]).unwrap();
        let v = integrate(&model, &|x| Ok(f.eval(x).re)).unwrap();
        let want = f.constant_part().re * per[0] * per[1];
        prop_assert!((v - want).abs() < 1e-12 * want.abs().max(1.0));
    }
}

/// Class components are 0 or of size in [0.3, 0.8], keeping the kernel gap clear.
fn random_closed_twist(rng: &mut ChaCha8Rng) -> TwistForm {
    let mut comp =
        || if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.3..0.8) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 } };
    let class = [comp(), comp()];
    TwistForm::random_closed(rng, &[TAU, TAU], &class, 1, 0.2).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig { rng_seed: RngSeed::Fixed(12), ..ProptestConfig::with_cases(10) })]

    #[test]
    fn chain_property_on_resolved_modes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = assemble_torus(&random_closed_twist(&mut rng), 6).unwrap();
        prop_assert!(ops.chain_residual() < 1e-9);
    }

    #[test]
    fn laplacians_are_built_from_the_chain_and_its_adjoint(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ops = assemble_torus(&random_closed_twist(&mut rng), 4).unwrap();
        for p in 0..3 {
            let n = ops.laplacian(p).rows();
            let mut want = SparseMat::zeros(n, n);
            if p < 2 {
                want = want.add(&ops.chain(p).adjoint().matmul(ops.chain(p)));
            }
            if p > 0 {
                want = want.add(&ops.chain(p - 1).matmul(&ops.chain(p - 1).adjoint()));
            }
            prop_assert!(ops.laplacian(p).add(&want.scale(Complex64::new(-1.0, 0.0))).max_abs() < 1e-12);
        }
    }

    #[test]
    fn duality_swaps_degrees_and_twist_sign(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tw = random_closed_twist(&mut rng);
        let b = eigensolve(&assemble_torus(&tw, 6).unwrap()).unwrap().betti().unwrap();
        let bm = eigensolve(&assemble_torus(&tw.neg(), 6).unwrap()).unwrap().betti().unwrap();
        prop_assert_eq!(b, vec![bm[2], bm[1], bm[0]]);
    }

    #[test]
    fn nonzero_class_kills_constants(seed in any::<u64>(), cx in 0.2f64..0.8, cy in -0.8f64..0.8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tw = TwistForm::random_closed(&mut rng, &[TAU, TAU], &[cx, cy], 1, 0.2).unwrap();
        prop_assert_eq!(eigensolve(&assemble_torus(&tw, 6).unwrap()).unwrap().betti().unwrap()[0], 0);
    }

    #[test]
    fn supertrace_is_constant_in_t(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = eigensolve(&assemble_torus(&random_closed_twist(&mut rng), 8).unwrap()).unwrap();
        let k = spec.kernel().unwrap();
        for t in geometric_grid(1.1 * spec.t_min(), 2.0, 12) {
            prop_assert!((spec.supertrace(t).unwrap() - k.index as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn supertrace_of_products_multiplies(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let circle = |rng: &mut ChaCha8Rng| {
            let c = rng.gen_range(-0.8..0.8);
            TwistForm::random_closed(rng, &[TAU], &[c], 2, 0.2).unwrap()
        };
        let (c1, c2) = (assemble_circle(&circle(&mut rng), 8).unwrap(), assemble_circle(&circle(&mut rng), 8).unwrap());
        let prod = eigensolve(&product_complex(&c1, &c2).unwrap()).unwrap();
        let (s1, s2) = (eigensolve(&c1).unwrap(), eigensolve(&c2).unwrap());
        let sup = |v: Vec<f64>| v.iter().enumerate().map(|(p, x)| if p % 2 == 0 { *x } else { -*x }).sum::<f64>();
        for t in [0.05, 0.3, 1.5] {
            let want = sup(s1.full_heat_trace(t)) * sup(s2.full_heat_trace(t));
            prop_assert!((sup(prod.full_heat_trace(t)) - want).abs() < 1e-10);
        }
    }
}

#[test]
fn volumes_of_models() {
    let s2 = ModelManifold::round_sphere(2, 1.0).volume().unwrap();
    assert!((s2 - 4.0 * PI).abs() < 1e-10);
    assert_eq!(ModelManifold::flat_torus(vec![2.0, 3.5]).volume().unwrap(), 7.0);
}

#[test]
fn enumerators_agree() {
    for (m, n) in [(2, 2), (2, 3), (3, 2), (3, 3), (4, 4)] {
        for (theta, boundary) in [(false, false), (true, false), (false, true), (true, true)] {
            let ctx = JetContext::new(m, theta, boundary);
            assert_eq!(enumerate_monomials(ctx, n).unwrap(), enumerate_brute_force(ctx, n).unwrap(), "{ctx:?} n={n}");
        }
    }
}

#[test]
fn restriction_is_surjective() {
    for (m, n) in [(3, 2), (3, 3), (4, 2), (4, 4)] {
        for (theta, boundary) in [(false, false), (true, false), (true, true)] {
            let ctx = JetContext::new(m, theta, boundary);
            let image: BTreeSet<_> = enumerate_monomials(ctx, n).unwrap().iter().filter_map(restriction).collect();
            let lower = enumerate_monomials(JetContext::new(m - 1, theta, boundary), n).unwrap();
            assert!(lower.iter().all(|mo| image.contains(mo)), "m={m} n={n} {ctx:?}");
        }
    }
}

#[test]
fn odd_order_metric_only_candidates_vanish() {
    for m in 2..=4 {
        for n in [1, 3] {
            assert!(reflection_even(JetContext::new(m, false, false), n).unwrap().is_empty(), "m={m} n={n}");
        }
    }
    // with the twist, odd orders do carry raw monomials
    assert!(!enumerate_monomials(JetContext::new(2, true, false), 1).unwrap().is_empty());
}

#[test]
fn scans_below_critical_order_are_empty() {
    for m in 2..=4 {
        for n in 0..m {
            assert!(
                kernel_scan(JetContext::new(m, true, false), n).unwrap().survivors.is_empty(),
                "interior m={m} n={n}"
            );
        }
        for n in 0..m - 1 {
            assert!(
                kernel_scan(JetContext::new(m, true, true), n).unwrap().survivors.is_empty(),
                "boundary m={m} n={n}"
            );
        }
    }
}
