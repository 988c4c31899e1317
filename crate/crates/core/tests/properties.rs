use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use turnpike_core::families::{fixed_endpoint_system, rng, stable_triple, uniform_matrix};
use turnpike_core::horizon::solve_free_endpoint;
use turnpike_core::linalg::{null_space, range_space, rank, svd_full};
use turnpike_core::riccati::{are_residual, solve_are_antistrong, velocity_projections};
use turnpike_core::steady::solve_steady;
use turnpike_core::subspace::{spectral_subspace, SpectralClass};
use turnpike_core::system::{GridSpec, SystemSpec};

fn low_rank(seed: u64) -> DMatrix<f64> {
    let mut r = rng(seed);
    let (rows, cols, k) = (r.gen_range(1..7), r.gen_range(1..7), r.gen_range(0..4));
    let mut m = uniform_matrix(&mut r, rows, k) * uniform_matrix(&mut r, k, cols);
    if r.gen_bool(0.3) {
        let i = r.gen_range(0..rows);
        m.row_mut(i).fill(0.0);
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs_and_splits_kernel_from_range(seed in any::<u64>()) {
        let m = low_rank(seed);
        let (u, s, v) = svd_full(&m);
        let rec = &u * DMatrix::from_diagonal(&s) * v.columns(0, s.len()).transpose();
        prop_assert!((rec - &m).amax() < 1e-12);
        let k = null_space(&m);
        let r = range_space(&m);
        prop_assert_eq!(k.ncols() + rank(&m), m.ncols());
        prop_assert_eq!(r.ncols(), rank(&m));
        prop_assert!(k.ncols() == 0 || (&m * &k).amax() < 1e-12);
        prop_assert!((&m - &r * (r.transpose() * &m)).amax() < 1e-12);
    }

    #[test]
    fn spectral_subspaces_fill_the_space(seed in any::<u64>(), n in 1usize..6) {
        let a = uniform_matrix(&mut rng(seed), n, n);
        let dims: usize = [SpectralClass::Neg, SpectralClass::Zero, SpectralClass::Pos]
            .iter()
            .map(|&c| spectral_subspace(&a, c).unwrap().dim)
            .sum();
        prop_assert_eq!(dims, n);
    }

    #[test]
    fn are_solution_is_symmetric_psd_and_stabilizing(seed in any::<u64>(), n in 1usize..6, m in 1usize..3) {
        let mut r = rng(seed);
        let (a, b, c) = stable_triple(&mut r, n, m, 2, -1.0);
        let res = solve_are_antistrong(&a, &b, &c).unwrap();
        let scale = 1.0 + res.e_hat.norm() * (a.norm() + res.e_hat.norm() * b.norm_squared()) + c.norm_squared();
        prop_assert!(are_residual(&a, &b, &c, &res.e_hat).amax() <= 1e-8 * scale);
        prop_assert!((&res.e_hat - res.e_hat.transpose()).amax() < 1e-10 * (1.0 + res.e_hat.amax()));
        let min_eig = res.e_hat.clone().symmetric_eigenvalues().min();
        prop_assert!(min_eig > -1e-8 * (1.0 + res.e_hat.amax()));
        let max_re = res.a_plus.clone().complex_eigenvalues().iter().map(|l| l.re).fold(f64::MIN, f64::max);
        prop_assert!(max_re <= 1e-7);
    }

    #[test]
    fn velocity_projections_are_complementary(seed in 0u64..200) {
        let sys = fixed_endpoint_system(seed, 3, 1, 1, 0.2);
        let res = solve_are_antistrong(&sys.a, &sys.b, &sys.c).unwrap();
        let proj = velocity_projections(&sys.a, &sys.b, &sys.c, &res).unwrap();
        let id = DMatrix::identity(3, 3);
        prop_assert!((&proj.p1 + &proj.p2 - &id).amax() < 1e-9);
        prop_assert!((&proj.p1 * &proj.p1 - &proj.p1).amax() < 1e-9 * proj.condition);
        prop_assert!((&proj.p1 * &proj.p2).amax() < 1e-9 * proj.condition);
    }

    #[test]
    fn steady_state_is_an_equilibrium(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let (a, b, c) = stable_triple(&mut r, n, 1, 2, 0.3);
        let z = turnpike_core::families::uniform_vector(&mut r, 2);
        let st = solve_steady(&a, &b, &c, &z).unwrap();
        prop_assert!((&a * &st.x_bar + &b * &st.u_bar).amax() < 1e-9 * (1.0 + st.x_bar.amax()));
    }

    #[test]
    fn free_endpoint_control_is_minus_bt_p(seed in any::<u64>(), horizon in 1.0f64..8.0) {
        let mut r = rng(seed);
        let (a, b, c) = stable_triple(&mut r, 3, 2, 2, 0.5);
        let z = turnpike_core::families::uniform_vector(&mut r, 2);
        let x0 = turnpike_core::families::uniform_vector(&mut r, 3);
        let sys = SystemSpec::new(a, b, c, z, x0.clone(), None).unwrap();
        let tr = solve_free_endpoint(&sys, &GridSpec::new(horizon, 400).unwrap()).unwrap();
        prop_assert!(tr.control_consistency(&sys.b) < 1e-10);
        prop_assert!((tr.x_at(0) - &x0).amax() < 1e-12);
        prop_assert!(tr.p_at(400).amax() < 1e-10);
    }
}
