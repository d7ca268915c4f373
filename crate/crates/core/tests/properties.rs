use mimo_lab::channel::{steering_derivative, steering_vector, synthesize, AngleAxis, PathParams, PathSet};
use mimo_lab::estimation::{build_dictionaries, joint_select, sequential_select, DirectionGrid};
use mimo_lab::fim::{channel_jacobian, check_optimal_observation, crb_trace, direction_block, fisher_matrix, optimal_bound};
use mimo_lab::geometry::{upa, ArrayGeometry, Axis, Direction, Plane};
use mimo_lab::linalg::{self, CMatrix};
use mimo_lab::observation::{complex_gaussian, orthogonal_pilots, snr, ObservationSetup, PilotBasis};
use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use proptest::prelude::*;

fn direction() -> impl Strategy<Value = Direction> {
    (-3.0..3.0f64, -1.4..1.4f64).prop_map(|(az, el)| Direction::new(az, el).unwrap())
}

fn path() -> impl Strategy<Value = PathParams> {
    (0.1..3.0f64, 0.0..6.28f64, direction(), direction())
        .prop_map(|(rho, phi, doa, dod)| PathParams::new(rho, phi, doa, dod).unwrap())
}

/// Six elements at `±d` on each axis: `A Aᵀ` is a multiple of the identity.
fn three_axis_cross(d: f64) -> ArrayGeometry {
    let mut pos = DMatrix::zeros(3, 6);
    for axis in 0..3 {
        pos[(axis, 2 * axis)] = d;
        pos[(axis, 2 * axis + 1)] = -d;
    }
    ArrayGeometry::from_wavelength_positions(pos).unwrap()
}

#[test]
fn isotropic_array_has_direction_independent_information() {
    let g = three_axis_cross(0.4);
    let reference = direction_block(&g, &Direction::new(0.0, 0.0).unwrap());
    assert!((reference[(0, 0)] - reference[(1, 1)]).abs() < 1e-12);
    assert!(reference[(0, 1)].abs() < 1e-12);
    let mut spread: f64 = 0.0;
    for k in 0..50 {
        let t = k as f64 / 50.0;
        let d = Direction::new(-3.0 + 6.0 * t, -1.5 + 3.0 * ((7.0 * t) % 1.0)).unwrap();
        let b: Matrix2<f64> = direction_block(&g, &d);
        spread = spread.max((b - reference).norm() / reference.norm());
    }
    assert!(spread <= 1e-8, "spread {spread}");
}

#[test]
fn rank_one_combiner_is_not_optimal() {
    let g_r = upa(2, 2, 0.5, Plane::Yz).unwrap();
    let g_t = upa(3, 3, 0.5, Plane::Yz).unwrap();
    let p = PathParams::new(1.0, 0.2, Direction::new(0.4, 0.1).unwrap(), Direction::new(-0.3, 0.2).unwrap()).unwrap();
    let ps = PathSet::new(vec![p]).unwrap();
    let w = CMatrix::from_columns(&[steering_vector(&g_r, &p.doa)]);
    let s = ObservationSetup::new(linalg::identity(9), w, 1.0).unwrap();
    let residual = check_optimal_observation(&channel_jacobian(&ps, &g_r, &g_t), &s);
    assert!(residual > 0.1, "residual {residual}");
}

#[test]
fn pilots_spanning_the_tangent_space_are_optimal() {
    let g_r = upa(2, 2, 0.5, Plane::Yz).unwrap();
    let g_t = upa(3, 3, 0.5, Plane::Yz).unwrap();
    let p = PathParams::new(0.8, 1.0, Direction::new(0.2, -0.3).unwrap(), Direction::new(0.5, 0.1).unwrap()).unwrap();
    let ps = PathSet::new(vec![p]).unwrap();
    let span = CMatrix::from_columns(&[
        steering_vector(&g_t, &p.dod),
        steering_derivative(&g_t, &p.dod, AngleAxis::Azimuth),
        steering_derivative(&g_t, &p.dod, AngleAxis::Elevation),
    ]);
    let x = span.qr().q();
    let s = ObservationSetup::new(x, linalg::identity(4), 1.0).unwrap();
    let d = channel_jacobian(&ps, &g_r, &g_t);
    assert!(check_optimal_observation(&d, &s) <= 1e-10);
    let h = synthesize(&ps, &g_r, &g_t).vectorized();
    let crb = crb_trace(&d, &fisher_matrix(&d, &s).unwrap(), &h).unwrap();
    let floor = optimal_bound(1, snr(&s, &h).unwrap());
    assert!((crb.relative / floor - 1.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Restricting the observation never lowers the bound below `3P/SNR`,
    /// and dropping combiners never lowers it further.
    #[test]
    fn restricted_observation_is_bounded_by_the_floor(
        paths in prop::collection::vec(path(), 1..3),
        n_c in 1usize..6,
        n_s in 2usize..9,
        seed in 0u64..1000,
    ) {
        let g_r = upa(3, 2, 0.5, Plane::Yz).unwrap();
        let g_t = upa(3, 3, 0.5, Plane::Yz).unwrap();
        let ps = PathSet::new(paths).unwrap();
        let h = synthesize(&ps, &g_r, &g_t).vectorized();
        let d = channel_jacobian(&ps, &g_r, &g_t);
        let w_full = complex_gaussian(6, 6, 1.0, seed);
        let x = orthogonal_pilots(9, n_s, 1.0, PilotBasis::Dft).unwrap();
        let big = ObservationSetup::new(x.clone(), w_full.columns(0, n_c.max(2)).into_owned(), 0.5).unwrap();
        let small = ObservationSetup::new(x, w_full.columns(0, 1).into_owned(), 0.5).unwrap();
        let crb = |s: &ObservationSetup| crb_trace(&d, &fisher_matrix(&d, s).unwrap(), &h).unwrap();
        let (cb, cs) = (crb(&big), crb(&small));
        let floor = optimal_bound(ps.len(), snr(&big, &h).unwrap());
        if !cb.ill_conditioned {
            prop_assert!(cb.relative >= floor * (1.0 - 1e-9));
            if !cs.ill_conditioned {
                prop_assert!(cs.relative >= cb.relative * (1.0 - 1e-6));
            }
        }
    }

    /// Relabelling the antennas permutes `h` but leaves the bound unchanged.
    #[test]
    fn crb_is_invariant_to_antenna_order(p in path(), q in path(), shift in 1usize..6) {
        let g_r = upa(3, 2, 0.5, Plane::Yz).unwrap();
        let g_t = upa(2, 2, 0.5, Plane::Xy).unwrap();
        let a = g_r.scaled_positions() / (2.0 * std::f64::consts::PI);
        let mut cols: Vec<usize> = (0..6).collect();
        cols.rotate_left(shift);
        let g_r2 = ArrayGeometry::from_wavelength_positions(a.select_columns(cols.iter())).unwrap();
        let ps = PathSet::new(vec![p, q]).unwrap();
        let bound = |g: &ArrayGeometry| {
            let h = synthesize(&ps, g, &g_t).vectorized();
            let s = ObservationSetup::identity(6, 4, 0.3).unwrap();
            let d = channel_jacobian(&ps, g, &g_t);
            crb_trace(&d, &fisher_matrix(&d, &s).unwrap(), &h).unwrap()
        };
        let (b1, b2) = (bound(&g_r), bound(&g_r2));
        prop_assume!(!b1.ill_conditioned && !b2.ill_conditioned);
        prop_assert!((b1.relative - b2.relative).abs() <= 1e-8 * b1.relative);
    }

    /// The joint criterion is a global maximum, so it scores at least as
    /// high as the sequential pick.
    #[test]
    fn joint_pick_dominates_sequential(seed in 0u64..10_000, n_c in 1usize..5, n_s in 1usize..6) {
        let g_r = upa(2, 2, 0.5, Plane::Yz).unwrap();
        let g_t = upa(3, 2, 0.5, Plane::Yz).unwrap();
        let w = complex_gaussian(4, n_c, 1.0, seed);
        let x = orthogonal_pilots(6, n_s, 1.0, PilotBasis::Identity).unwrap();
        let s = ObservationSetup::new(x, w, 0.0).unwrap();
        let grid = DirectionGrid::front_hemisphere(30, 24, Axis::X, Axis::X).unwrap();
        let dict = build_dictionaries(&grid, &s, &g_r, &g_t).unwrap();
        let y = complex_gaussian(n_c, n_s, 1.0, seed + 1);
        let score = |i: usize, j: usize| {
            let v: Complex64 = dict.k_r.column(i).dotc(&(&y * dict.k_t.column(j)));
            v.norm()
        };
        let j = joint_select(&y, &dict).unwrap();
        let q = sequential_select(&y, &dict).unwrap();
        prop_assert!(score(j.doa, j.dod) >= score(q.doa, q.dod) * (1.0 - 1e-12));
        prop_assert_eq!(j.score_evaluations, (dict.m() * dict.n()) as u64);
        prop_assert_eq!(q.score_evaluations, (dict.m() + dict.n()) as u64);
    }
}
