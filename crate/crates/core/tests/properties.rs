use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;
use unduloid::bloch::{assemble, eigenvalues_near_zero, hermiticity_defect, BlochOperatorSpec};
use unduloid::chsolver::{fit_exponent, solve, CHSolution, GridSpec};
use unduloid::delaunay::{immerse, rho_bulge, rho_neck, solve_generating_curve, DelaunayParameter};
use unduloid::floquet::{
    determinant, forward_transform, hill_analyze, inverse_transform, relative_det_defect, WindowedSequence,
};
use unduloid::profile::solve_profile;

fn coarse_solution() -> &'static CHSolution {
    static SOL: OnceLock<CHSolution> = OnceLock::new();
    SOL.get_or_init(|| {
        let c = solve_generating_curve(DelaunayParameter::new(0.6).unwrap(), 1e-12).unwrap();
        let p = solve_profile(0.15, 1.0, 20.0, 1e-10).unwrap();
        solve(&c, &p, &GridSpec::resolved(&c, 0.15, 6.0), 1e-9).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unit_mean_curvature_everywhere(tau in 0.05f64..0.99, x in 0.0f64..1.0, theta in 0.0f64..(2.0 * PI)) {
        let c = solve_generating_curve(DelaunayParameter::new(tau).unwrap(), 1e-12).unwrap();
        let sample = immerse(&c, x * c.s_period, theta);
        prop_assert!((sample.h - 1.0).abs() < 1e-8, "H = {}", sample.h);
        let r = c.point(x * c.s_period).r;
        prop_assert!(r >= rho_neck(tau) - 1e-9 && r <= rho_bulge(tau) + 1e-9);
    }

    #[test]
    fn monodromy_is_unimodular(tau in 0.1f64..0.95, n in 0usize..6) {
        let c = solve_generating_curve(DelaunayParameter::new(tau).unwrap(), 1e-12).unwrap();
        let hill = hill_analyze(&c, n, 1e-6).unwrap();
        prop_assert!(relative_det_defect(&hill.monodromy) <= 1e-10, "det = {}", determinant(&hill.monodromy));
        // Exponents come in pairs ±μ modulo the lattice 2πi/T.
        let sum = hill.floquet_exponents[0] + hill.floquet_exponents[1];
        let lattice = 2.0 * PI / c.s_period;
        prop_assert!(sum.re.abs() < 1e-6);
        prop_assert!((sum.im / lattice - (sum.im / lattice).round()).abs() < 1e-6);
    }

    #[test]
    fn transform_inverts_on_the_lattice(
        coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..20),
        offset in 0.0f64..3.0,
        nu in -0.5f64..0.5,
    ) {
        let period = 3.0;
        let k_max = coeffs.len() as i64 - 1;
        let h = |s: f64| {
            let k = ((s - offset) / period).round() as usize;
            Complex64::new(coeffs[k].0, coeffs[k].1)
        };
        let seq = WindowedSequence::sample(h, offset, period, 0, k_max);
        let pair = forward_transform(&seq, nu, 32).unwrap();
        for (j, v) in seq.values.iter().enumerate() {
            let back = inverse_transform(&pair, seq.point(j)).unwrap();
            prop_assert!((back - v).norm() < 1e-10);
        }
    }

    #[test]
    fn profile_is_monotone_and_bounded(eps in 0.0f64..0.2) {
        let p = solve_profile(eps, 1.0, 20.0, 1e-10).unwrap();
        let rising = p.u.last().unwrap() > p.u.first().unwrap();
        for w in p.u.windows(2) {
            let step = if rising { w[1] - w[0] } else { w[0] - w[1] };
            prop_assert!(step >= -1e-12, "step {step:e}");
        }
        prop_assert!(p.u.iter().all(|u| u.abs() < 1.0 + eps));
    }

    #[test]
    fn exponent_fit_recovers_power_laws(p in 0.5f64..4.0, scale in 0.01f64..100.0) {
        let x = [0.1f64, 0.05, 0.025, 0.0125];
        let y: Vec<f64> = x.iter().map(|x| scale * x.powf(p)).collect();
        prop_assert!((fit_exponent(&x, &y) - p).abs() < 1e-9);
    }

    #[test]
    fn container_round_trip_is_exact(
        nr in 1usize..12,
        nz in 1usize..12,
        half_cell in any::<bool>(),
        seed in prop::collection::vec(-2.0f64..2.0, 1..8),
        ell in -1.0f64..1.0,
    ) {
        let nz = if half_cell { nz } else { nz + 1 };
        let grid = GridSpec { nr, nz, rmax: 2.5, t_period: 5.0, half_cell };
        let len = (nr + 1) * if half_cell { nz + 1 } else { nz };
        let sol = CHSolution {
            tau: 0.5,
            epsilon: 0.1,
            grid,
            u: (0..len).map(|k| seed[k % seed.len()] * (k as f64 + 1.0).ln()).collect(),
            ell,
            mass: -0.25,
            residual_norm: 1e-11,
            curve_ref: "property".into(),
            sigma_plus: 0.01,
            sigma_minus: 0.02,
            newton_history: vec![1.0, 1e-3, 1e-11],
        };
        let mut bytes = Vec::new();
        sol.encode(&mut bytes).unwrap();
        let back = CHSolution::decode_bytes(&bytes).unwrap();
        prop_assert_eq!(back.u, sol.u);
        prop_assert_eq!(back.grid, sol.grid);
        prop_assert_eq!(back.ell, sol.ell);
        prop_assert_eq!(back.newton_history, sol.newton_history);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn bloch_operators_are_hermitian(m in 0usize..5, zeta in 0.0f64..(2.0 * PI)) {
        let op = assemble(coarse_solution(), BlochOperatorSpec::new(m, zeta, 4).unwrap()).unwrap();
        prop_assert!(op.hermiticity_defect < 1e-12);
        prop_assert!(hermiticity_defect(&op.symmetric_form(0.0).unwrap()) < 1e-12);
        prop_assert!(op.b.iter().all(|&b| b > 0.0));
    }

    #[test]
    fn bands_are_even_in_the_quasimomentum(m in 0usize..3, zeta in 0.1f64..3.0) {
        let sol = coarse_solution();
        let a = eigenvalues_near_zero(&assemble(sol, BlochOperatorSpec::new(m, zeta, 4).unwrap()).unwrap(), 3).unwrap();
        let b = eigenvalues_near_zero(&assemble(sol, BlochOperatorSpec::new(m, 2.0 * PI - zeta, 4).unwrap()).unwrap(), 3).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}
