use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tubewave::damping::{evaluate_damping, DampingProfile};
use tubewave::geometry::{region_l2_norm, torus_distance, tube_mask, Field, ProductGrid, Region, TorusFactor};
use tubewave::operators::{
    apply_laplacian, apriori_report, fiber_decompose, LinearMap, SemiclassicalOperator, SigmaOptions, SpectralLaplacian,
};
use tubewave::spectral::FftPlan;
use tubewave::spectral_scan::fit_power_law;
use tubewave::wave_evolver::{dissipation_check, WaveEvolver, WaveState};
use tubewave::C64;

fn random_field(grid: &Arc<ProductGrid>, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.node_count()).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    Field::new(grid.clone(), values).unwrap()
}

fn smooth_random_field(grid: &Arc<ProductGrid>, seed: u64, modes: i64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, f64, C64)> = (0..6)
        .map(|_| {
            let k1 = rng.random_range(-modes..=modes) as f64;
            let k2 = rng.random_range(-modes..=modes) as f64;
            (k1, k2, C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        })
        .collect();
    let l = grid.axis_lengths();
    Field::from_fn(grid.clone(), |x| {
        terms.iter().map(|(k1, k2, a)| a * C64::from_polar(1.0, TAU * (k1 * x[0] / l[0] + k2 * x[1] / l[1]))).sum()
    })
}

fn rect_grid(n1: usize, n2: usize, l1: f64, l2: f64) -> Arc<ProductGrid> {
    Arc::new(ProductGrid::new(TorusFactor::circle(l1).unwrap(), TorusFactor::circle(l2).unwrap(), vec![n1, n2]).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn torus_distance_is_a_metric(
        dims in prop::collection::vec(0.5f64..10.0, 1..4),
        seed in any::<u64>(),
    ) {
        let factor = TorusFactor::new(dims.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut point = || dims.iter().map(|c| rng.random_range(-2.0 * c..2.0 * c)).collect::<Vec<f64>>();
        let (a, b, c) = (point(), point(), point());
        let d = |p: &[f64], q: &[f64]| torus_distance(p, q, &factor).unwrap();
        prop_assert!(d(&a, &a) < 1e-12);
        prop_assert!((d(&a, &b) - d(&b, &a)).abs() < 1e-12);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        prop_assert!(d(&a, &b) <= factor.diameter() + 1e-12);
    }

    #[test]
    fn tube_norms_nest(seed in any::<u64>(), beta in 0.01f64..3.0, grow in 0.0f64..2.0) {
        let grid = rect_grid(8, 32, TAU, TAU);
        let f = random_field(&grid, seed);
        let small = tube_mask(&grid, &[PI], beta).unwrap();
        let large = tube_mask(&grid, &[PI], beta + grow).unwrap();
        prop_assert!(small.region().is_subset_of(large.region()));
        prop_assert!(region_l2_norm(&f, small.region()).unwrap() <= region_l2_norm(&f, large.region()).unwrap());
    }

    #[test]
    fn parseval_on_the_whole_grid(seed in any::<u64>(), l1 in 1.0f64..10.0, l2 in 1.0f64..10.0) {
        let grid = rect_grid(16, 12, l1, l2);
        let f = random_field(&grid, seed);
        let norm = region_l2_norm(&f, &Region::whole(grid.clone())).unwrap();
        let mut coeffs = f.values().to_vec();
        FftPlan::new(grid.resolution()).forward(&mut coeffs);
        let spectral: f64 = coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.cell_volume() / grid.node_count() as f64;
        prop_assert!((norm * norm - spectral).abs() <= 1e-12 * spectral);
    }

    #[test]
    fn fiber_decomposition_preserves_norm(seed in any::<u64>(), l1 in 1.0f64..10.0) {
        let grid = rect_grid(16, 24, l1, TAU);
        let psi = random_field(&grid, seed);
        let dec = fiber_decompose(&psi).unwrap();
        let total: f64 = dec.coefficients.iter().map(|c| c.norm().powi(2)).sum();
        let direct = psi.norm().powi(2);
        prop_assert!((total - direct).abs() <= 1e-12 * direct);
        let back = dec.reconstruct().unwrap();
        prop_assert!(back.add_scaled(C64::new(-1.0, 0.0), &psi).unwrap().norm() <= 1e-12 * psi.norm());
    }

    #[test]
    fn laplacian_is_symmetric_and_nonpositive(seed in any::<u64>(), l1 in 1.0f64..10.0, l2 in 1.0f64..10.0) {
        let grid = rect_grid(16, 16, l1, l2);
        let lap = SpectralLaplacian::new(grid.clone());
        let f = random_field(&grid, seed);
        let g = random_field(&grid, seed.wrapping_add(1));
        let lf = apply_laplacian(&lap, &f).unwrap();
        let lg = apply_laplacian(&lap, &g).unwrap();
        let left = lf.inner(&g).unwrap();
        let right = f.inner(&lg).unwrap();
        let scale = lf.norm() * g.norm();
        prop_assert!((left - right).norm() <= 1e-12 * scale);
        prop_assert!(lf.inner(&f).unwrap().re <= 1e-12 * scale);
    }

    #[test]
    fn power_law_fit_is_scale_invariant(
        exponent in -3.0f64..3.0,
        c in 1e-3f64..1e3,
        factor in 1e-3f64..1e3,
    ) {
        let pts: Vec<(f64, f64)> = (4..=9).map(|j| {
            let h = 2f64.powi(-j);
            (h, c * h.powf(exponent))
        }).collect();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|(h, v)| (*h, v * factor)).collect();
        let a = fit_power_law(&pts).unwrap();
        let b = fit_power_law(&scaled).unwrap();
        prop_assert!((a.exponent - exponent).abs() <= 1e-10);
        prop_assert!((a.exponent - b.exponent).abs() <= 1e-10);
        prop_assert!((b.log_intercept - a.log_intercept - factor.ln()).abs() <= 1e-9);
    }

    #[test]
    fn energy_never_increases(seed in any::<u64>(), gamma in 0.5f64..3.0, level in 0.0f64..5.0) {
        let grid = rect_grid(16, 16, TAU, TAU);
        let profile = DampingProfile::power_law(gamma, vec![PI], PI / 2.0).unwrap();
        let b = evaluate_damping(&profile, &grid).unwrap().scale(C64::new(level, 0.0));
        let u = smooth_random_field(&grid, seed, 6);
        let v = smooth_random_field(&grid, seed ^ 0xabc, 6);
        let real = |f: Field| { let vals = f.values().iter().map(|z| C64::new(z.re, 0.0)).collect(); f.with_values(vals).unwrap() };
        let state = WaveState::new(real(u), real(v), 0.0).unwrap();
        let dt = 0.5 * WaveEvolver::max_dt(&grid);
        let (_, trace) = WaveEvolver::new(&b, dt).unwrap().run(&state, 200, 1).unwrap();
        for w in trace.samples.windows(2) {
            prop_assert!(w[1].energy <= w[0].energy * (1.0 + 1e-8));
        }
        prop_assert!(dissipation_check(&trace).unwrap().max_increase <= 1e-8);
    }
}

proptest! {
    // one thousand random (φ, h) pairs
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn apriori_estimates_hold(
        seed in any::<u64>(),
        h in 0.02f64..1.0,
        gamma in 0.25f64..3.0,
        smooth in any::<bool>(),
    ) {
        let grid = rect_grid(16, 16, TAU, TAU);
        let profile = DampingProfile::power_law(gamma, vec![PI], PI / 2.0).unwrap();
        let b = evaluate_damping(&profile, &grid).unwrap();
        let op = SemiclassicalOperator::new(h, SpectralLaplacian::new(grid.clone()), &b).unwrap();
        let phi = if smooth { smooth_random_field(&grid, seed, 7) } else { random_field(&grid, seed) };
        let r = apriori_report(&op, &phi).unwrap();
        let scale = r.pairing_bound.max(r.mass);
        prop_assert!((r.damping_term - r.imaginary_pairing).abs() <= 1e-10 * scale);
        prop_assert!(r.damping_term <= r.pairing_bound * (1.0 + 1e-10));
        prop_assert!(r.gradient_term <= (r.mass + r.pairing_bound) * (1.0 + 1e-10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    // For a unit right-hand side r, ‖A⁻¹r‖ <= 1/σ_min(A), with equality along
    // the bottom singular vector.
    #[test]
    fn sigma_bounds_direct_solves(seed in any::<u64>(), h in 0.05f64..0.8) {
        let grid = rect_grid(8, 16, TAU, TAU);
        let profile = DampingProfile::power_law(1.0, vec![PI], PI / 2.0).unwrap();
        let b = evaluate_damping(&profile, &grid).unwrap();
        let op = SemiclassicalOperator::new(h, SpectralLaplacian::new(grid.clone()), &b).unwrap();
        let options = SigmaOptions::default();
        let sigma = op.min_singular_value(&options).unwrap().value;
        let lu = op.to_dense().lu();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..4 {
            let r = DVector::from_fn(op.dim(), |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let r = &r / C64::new(r.norm(), 0.0);
            let x = lu.solve(&r).expect("invertible");
            prop_assert!(sigma * x.norm() <= 1.0 + options.tolerance);
        }
    }
}
