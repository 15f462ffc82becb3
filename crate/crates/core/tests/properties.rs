use onsagerlab_core::besov::{besov_norm_estimate, lp_norm, shift_seminorm, ShiftSweep};
use onsagerlab_core::commutators::{commutator_integrals, product_commutator};
use onsagerlab_core::defect::{richardson, weak_energy_residual};
use onsagerlab_core::fieldsgen::{constant_state, WeierstrassSeries};
use onsagerlab_core::fit::loglog_fit;
use onsagerlab_core::grid::shift_field;
use onsagerlab_core::models::check_potential_identity;
use onsagerlab_core::mollify::{mollify, one_sided_time_average};
use onsagerlab_core::testfn::{SpaceFactor, TimeBump};
use onsagerlab_core::{Axes, Closure, Field, Grid, Over, PressureLaw, Shift, TestFunction};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn max_diff(a: &Field, b: &Field) -> f64 {
    assert_eq!(a.window(), b.window());
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Random trigonometric polynomial plus noise, sampled on `grid`.
fn random_field(grid: Grid, seed: u64, offset: f64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c: Vec<f64> = (0..6).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
    let noise: Vec<f64> = (0..grid.n_t() * grid.n_space())
        .map(|_| rand::Rng::gen_range(&mut rng, -0.1..0.1))
        .collect();
    let n = grid.n_space();
    let mut f = Field::sample(grid, |t, x| {
        offset
            + c[0] * (2.0 * PI * x[0]).sin()
            + c[1] * (2.0 * PI * (x[0] + x[1])).cos()
            + c[2] * (6.0 * PI * x[1]).sin()
            + c[3] * (2.0 * PI * t).cos()
            + c[4] * x[0] * (1.0 - x[0])
            + c[5]
    })
    .unwrap();
    f = Field::from_values(
        grid,
        1,
        f.values()
            .iter()
            .enumerate()
            .map(|(k, v)| v + noise[k % (grid.n_t() * n)])
            .collect(),
    )
    .unwrap();
    f
}

fn grid2() -> Grid {
    Grid::new(2, 32, 16, 0.5).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lp_norm_is_homogeneous(seed in 0u64..1000, lambda in -5.0f64..5.0, p in 1.0f64..4.0) {
        let f = random_field(grid2(), seed, 0.0);
        let a = lp_norm(&f.scale(lambda), p).unwrap();
        let b = lambda.abs() * lp_norm(&f, p).unwrap();
        prop_assert!(close(a, b, 1e-12));
    }

    #[test]
    fn increments_are_symmetric_under_inversion(seed in 0u64..1000, k1 in -8isize..8, k2 in -8isize..8) {
        prop_assume!(k1 != 0 || k2 != 0);
        let f = random_field(grid2(), seed, 0.0);
        let sh = Shift::space([k1, k2]);
        let a = shift_seminorm(&f, sh, 3.0).unwrap();
        let b = shift_seminorm(&f, sh.inverse(), 3.0).unwrap();
        prop_assert!(close(a, b, 1e-12));
    }

    #[test]
    fn besov_seminorm_is_homogeneous_and_shift_invariant(seed in 0u64..1000, lambda in 0.1f64..5.0, k1 in -8isize..8) {
        let g = Grid::new(1, 256, 8, 1.0).unwrap();
        let f = random_field(g, seed, 0.0);
        let sweep = ShiftSweep::standard(&g, Axes::Space).unwrap();
        let base = besov_norm_estimate(&f, 3.0, 0.5, &sweep).unwrap();
        let scaled = besov_norm_estimate(&f.scale(lambda), 3.0, 0.5, &sweep).unwrap();
        prop_assert!(close(scaled.seminorm, lambda * base.seminorm, 1e-12));
        let moved = besov_norm_estimate(&shift_field(&f, Shift::along_x(k1)).unwrap(), 3.0, 0.5, &sweep).unwrap();
        prop_assert!(close(moved.seminorm, base.seminorm, 1e-12));
    }

    #[test]
    fn mollification_commutes_with_lattice_shifts(seed in 0u64..1000, k1 in -8isize..8, k2 in -8isize..8, cells in 4.0f64..10.0) {
        let g = grid2();
        let f = random_field(g, seed, 0.0);
        let eps = cells * g.dx();
        let sh = Shift::space([k1, k2]);
        let a = mollify(&shift_field(&f, sh).unwrap(), eps, Axes::Space).unwrap();
        let b = shift_field(&mollify(&f, eps, Axes::Space).unwrap(), sh).unwrap();
        prop_assert!(max_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn mollification_is_linear_and_keeps_spatial_means(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = grid2();
        let f1 = random_field(g, seed, 0.0);
        let f2 = random_field(g, seed + 7, 1.0);
        let eps = 6.0 * g.dx();
        let comb = f1.zip_map(&f2, |x, y| a * x + b * y).unwrap();
        let lhs = mollify(&comb, eps, Axes::Space).unwrap();
        let m1 = mollify(&f1, eps, Axes::Space).unwrap();
        let m2 = mollify(&f2, eps, Axes::Space).unwrap();
        let rhs = m1.zip_map(&m2, |x, y| a * x + b * y).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-12);
        let before = f1.integrate(Over::Spacetime).unwrap();
        let after = m1.integrate(Over::Spacetime).unwrap();
        prop_assert!(close(before, after, 1e-12));
    }

    #[test]
    fn constants_survive_mollification_and_averaging(c in -10.0f64..10.0, cells in 4.0f64..7.0, h_steps in 4usize..9) {
        let g = Grid::new(2, 32, 32, 1.0).unwrap();
        let f = Field::constant(g, &[c]).unwrap();
        let m = mollify(&f, cells * g.dx(), Axes::Spacetime).unwrap();
        prop_assert!(m.values()[m.window().start * g.n_space()..m.window().end * g.n_space()].iter().all(|&v| close(v, c, 1e-14)));
        let av = one_sided_time_average(&f, h_steps as f64 * g.dt()).unwrap();
        prop_assert!(av.window().len() + h_steps - 1 == g.n_t());
        for i in av.window() {
            prop_assert!(av.slice(0, i).iter().all(|&v| close(v, c, 1e-14)));
        }
    }

    #[test]
    fn product_commutator_is_bilinear(seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let g = grid2();
        let f = random_field(g, seed, 2.0);
        let g1 = random_field(g, seed + 1, 0.0);
        let g2 = random_field(g, seed + 2, 0.0);
        let eps = 5.0 * g.dx();
        let comb = g1.zip_map(&g2, |x, y| a * x + b * y).unwrap();
        let lhs = product_commutator(&f, &comb, eps, Axes::Space).unwrap();
        let c1 = product_commutator(&f, &g1, eps, Axes::Space).unwrap();
        let c2 = product_commutator(&f, &g2, eps, Axes::Space).unwrap();
        let rhs = c1.zip_map(&c2, |x, y| a * x + b * y).unwrap();
        prop_assert!(max_diff(&lhs, &rhs) < 1e-11);
        // a constant factor commutes with averaging
        let k = Field::constant(g, &[a]).unwrap();
        prop_assert!(product_commutator(&k, &g1, eps, Axes::Space).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn potential_identity_holds(kappa in 0.1f64..3.0, gamma in 1.0f64..3.0, seed in 0u64..1000) {
        let law = PressureLaw::with_floor(kappa, gamma, 0.1).unwrap();
        let f = random_field(grid2(), seed, 0.0);
        let rho = f.map(|v| 1.5 + 0.4 * v.tanh());
        let worst = check_potential_identity(&law, &rho).unwrap();
        let scale = law.pressure(2.0).unwrap();
        prop_assert!(worst <= 1e-12 * (1.0 + scale));
    }

    #[test]
    fn remainders_are_linear_in_the_test_function(seed in 0u64..1000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let g = Grid::new(1, 64, 64, 1.0).unwrap();
        let law = PressureLaw::with_floor(1.0, 1.4, 0.1).unwrap();
        let rho = random_field(g, seed, 0.0).map(|v| 1.5 + 0.3 * v.tanh());
        let u = random_field(g, seed + 3, 0.0);
        let tb = TimeBump::new(0.5, 0.3).unwrap();
        let p1 = TestFunction::new(tb, SpaceFactor::Mode { k: [1, 0], sine: false }).unwrap();
        let p2 = TestFunction::new(tb, SpaceFactor::Bump { center: [0.3, 0.0], radius: 0.2 }).unwrap();
        let eps = 4.0 * g.dx();
        let comb = p1.combine(a, &p2, b);
        let r = commutator_integrals(&rho, &u, Closure::Compressible(&law), &comb, eps).unwrap();
        let r1 = commutator_integrals(&rho, &u, Closure::Compressible(&law), &p1, eps).unwrap();
        let r2 = commutator_integrals(&rho, &u, Closure::Compressible(&law), &p2, eps).unwrap();
        let scale = r1.total().abs() + r2.total().abs() + 1e-9;
        for (x, y, z) in [(r.r1, r1.r1, r2.r1), (r.r2, r1.r2, r2.r2), (r.r3.unwrap(), r1.r3.unwrap(), r2.r3.unwrap()), (r.s_int.unwrap(), r1.s_int.unwrap(), r2.s_int.unwrap())] {
            prop_assert!((x - a * y - b * z).abs() <= 1e-10 * scale.max(x.abs()));
        }
    }

    #[test]
    fn constant_states_have_no_defect(rho0 in 0.5f64..3.0, u1 in -2.0f64..2.0, u2 in -2.0f64..2.0, cells in 4.0f64..6.0) {
        let g = Grid::new(2, 32, 32, 1.0).unwrap();
        let law = PressureLaw::with_floor(1.0, 1.4, 0.1).unwrap();
        let st = constant_state(g, rho0, &[u1, u2]).unwrap();
        let phi = TestFunction::new(TimeBump::new(0.5, 0.25).unwrap(), SpaceFactor::Mode { k: [1, 1], sine: true }).unwrap();
        let r = commutator_integrals(&st.rho, &st.u, Closure::Compressible(&law), &phi, cells * g.dx()).unwrap();
        prop_assert_eq!(r.total(), 0.0);
        prop_assert_eq!(r.pointwise_sup, 0.0);
        prop_assert_eq!(weak_energy_residual(&st.rho, &st.u, Closure::Compressible(&law), &phi).unwrap(), 0.0);
    }

    #[test]
    fn loglog_fit_recovers_power_laws(c in 0.01f64..100.0, q in -2.0f64..3.0) {
        let xs: Vec<f64> = (0..6).map(|k| 0.01 * 2f64.powi(k)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(q)).collect();
        let fit = loglog_fit(&xs, &ys).unwrap();
        prop_assert!((fit.slope - q).abs() < 1e-10);
        prop_assert!(close(fit.predict(0.5), c * 0.5f64.powf(q), 1e-9));
    }

    #[test]
    fn richardson_is_exact_for_one_power(limit in -5.0f64..5.0, a in -5.0f64..5.0, q in 0.2f64..2.0, eps in 0.01f64..0.2) {
        let at = |e: f64| limit + a * e.powf(q);
        prop_assert!(close(richardson(at(eps), at(2.0 * eps), 2.0, q), limit, 1e-9));
    }

    #[test]
    fn weierstrass_stays_within_its_bound(alpha in 0.1f64..0.9, terms in 1usize..10, seed in 0u64..1000, x in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = WeierstrassSeries::new(alpha, terms, &mut rng).unwrap();
        prop_assert!(w.eval(x).abs() <= w.amplitude_bound() * (1.0 + 1e-12));
        prop_assert!(close(w.eval(x), w.eval(x + 1.0), 1e-9));
    }
}
