use brinkman_fourier::brinkman::{energy_identity_residual, solve_brinkman, BrinkmanSystem};
use brinkman_fourier::constitutive::{self, entropy_production_density};
use brinkman_fourier::envara::{derive_laws, gibbs_residual, FreeEnergyModel};
use brinkman_fourier::evolution::{step_coupled, step_density};
use brinkman_fourier::grid::{self, advect_upwind, divergence, gradient, inner, inner_vec};
use brinkman_fourier::inequalities::reverse_young_check;
use brinkman_fourier::{Grid, LocalThermoPoint, ModelParams, ScalarField, State, TimeStepConfig, VectorField};
use proptest::prelude::*;

fn grid_1d() -> impl Strategy<Value = Grid> {
    (4usize..40, 0.5f64..3.0).prop_map(|(n, l)| Grid::new_1d(n, l).unwrap())
}

fn grid_any() -> impl Strategy<Value = Grid> {
    prop_oneof![
        grid_1d(),
        (4usize..12, 4usize..12, 0.5f64..2.0, 0.5f64..2.0).prop_map(|(nx, ny, lx, ly)| Grid::new_2d(nx, ny, lx, ly).unwrap()),
    ]
}

fn field(g: Grid, lo: f64, hi: f64) -> impl Strategy<Value = ScalarField> {
    proptest::collection::vec(lo..hi, g.cells()).prop_map(move |v| ScalarField::from_values(g, v).unwrap())
}

fn vector(g: Grid) -> impl Strategy<Value = VectorField> {
    let n = g.cells();
    (proptest::collection::vec(-1.0f64..1.0, n), proptest::collection::vec(-1.0f64..1.0, n)).prop_map(move |(a, b)| {
        let comps = if g.dim() == 1 { vec![a] } else { vec![a, b] };
        VectorField::from_components(g, comps).unwrap()
    })
}

fn positive_pair() -> impl Strategy<Value = (f64, f64)> {
    (-4.0f64..4.0, -4.0f64..4.0).prop_map(|(a, b)| (a.exp(), b.exp()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn constitutive_relations_hold((rho, theta) in positive_pair(), k2 in 0.1f64..5.0) {
        let p = ModelParams::monatomic(k2);
        let pt = LocalThermoPoint::new(rho, theta).unwrap();
        let psi = constitutive::free_energy(pt, &p);
        let s = constitutive::entropy(pt, &p);
        let e = constitutive::internal_energy(pt, &p);
        let pr = constitutive::pressure(pt, &p);
        let scale = 1.0 + psi.abs() + e.abs() + (theta * s).abs();
        prop_assert!((psi - (e - theta * s)).abs() <= 1e-12 * scale);
        prop_assert!((pr - rho * constitutive::free_energy_drho(pt, &p) + psi).abs() <= 1e-12 * (scale + pr.abs()));
        prop_assert!((e - 1.5 * pr).abs() <= 1e-12 * e.abs());
        let back = constitutive::temperature_from_entropy(rho, s, &p).unwrap();
        prop_assert!((back - theta).abs() <= 1e-10 * theta);
    }

    #[test]
    fn derived_laws_match_closed_form((rho, theta) in (-2.0f64..2.0, -2.0f64..2.0).prop_map(|(a, b)| (a.exp(), b.exp()))) {
        let p = ModelParams::monatomic(1.0);
        let model = FreeEnergyModel::new("ideal", move |r, t| {
            constitutive::free_energy(LocalThermoPoint::new(r, t).unwrap(), &p)
        });
        let laws = derive_laws(&model, 1e-4).unwrap();
        let pt = LocalThermoPoint::new(rho, theta).unwrap();
        let s = constitutive::entropy(pt, &p);
        prop_assert!((laws.s(rho, theta) - s).abs() <= 1e-7 * (1.0 + s.abs()));
        let (g1, g2) = gibbs_residual(&laws, pt, 1e-4);
        prop_assert!(g1.abs() <= 1e-6 && g2.abs() <= 1e-6);
    }

    #[test]
    fn entropy_production_is_nonnegative(
        (rho, theta) in positive_pair(),
        gu in 0.0f64..10.0, us in 0.0f64..10.0, gt in 0.0f64..10.0,
    ) {
        let p = ModelParams::default();
        prop_assert!(entropy_production_density(theta, gu, us, rho, gt, &p).unwrap() >= 0.0);
    }

    #[test]
    fn reverse_young_holds((a, b) in positive_pair(), nu in 0.0f64..=1.0) {
        prop_assert!(reverse_young_check(a, b, nu).unwrap());
    }

    #[test]
    fn divergence_is_minus_adjoint_of_gradient((f, u) in grid_any().prop_flat_map(|g| (field(g, -1.0, 1.0), vector(g)))) {
        let lhs = inner_vec(&gradient(&f), &u);
        let rhs = -inner(&f, &divergence(&u));
        prop_assert!((lhs - rhs).abs() <= 1e-11 * (1.0 + lhs.abs()));
    }

    #[test]
    fn neumann_laplacian_is_symmetric_and_conservative((f, q) in grid_any().prop_flat_map(|g| (field(g, -1.0, 1.0), field(g, -1.0, 1.0)))) {
        let lf = grid::laplacian_neumann(&f);
        let lq = grid::laplacian_neumann(&q);
        prop_assert!((inner(&lf, &q) - inner(&f, &lq)).abs() <= 1e-9 * (1.0 + inner(&lf, &q).abs()));
        prop_assert!(grid::integrate(&lf).abs() <= 1e-9 * (1.0 + lf.values().iter().map(|v| v.abs()).sum::<f64>()));
        prop_assert!(inner(&lf, &f) <= 1e-12);
    }

    #[test]
    fn dirichlet_dissipation_matches_laplacian(f in grid_any().prop_flat_map(|g| field(g, -1.0, 1.0))) {
        let u = VectorField::from_components(*f.grid(), vec![f.values().to_vec(); f.grid().dim()]).unwrap();
        let lap = grid::laplacian_dirichlet(&u);
        let diss = grid::integrate(&grid::dissipation_density(&u));
        let expected = -inner_vec(&lap, &u);
        prop_assert!((diss - expected).abs() <= 1e-9 * (1.0 + diss.abs()));
    }

    #[test]
    fn upwind_transport_conserves((f, u) in grid_any().prop_flat_map(|g| (field(g, 0.1, 2.0), vector(g)))) {
        let a = advect_upwind(&f, &u);
        let scale: f64 = a.values().iter().map(|v| v.abs()).sum();
        prop_assert!(grid::integrate(&a).abs() <= 1e-12 * (1.0 + scale));
    }

    #[test]
    fn brinkman_energy_identity_and_linearity(
        (rho, theta) in grid_1d().prop_flat_map(|g| (field(g, 0.5, 2.0), field(g, 0.5, 2.0))),
        scale in 0.1f64..10.0,
    ) {
        let p = ModelParams::unit();
        let sys = BrinkmanSystem::new(rho.clone(), theta.clone(), p, 1e-13, 10_000).unwrap();
        let u = solve_brinkman(&sys).unwrap();
        prop_assert!(energy_identity_residual(&u, &sys) <= 1e-9);
        let scaled = BrinkmanSystem::new(rho, theta.map(|t| scale * t), p, 1e-13, 10_000).unwrap();
        let us = solve_brinkman(&scaled).unwrap();
        let diff = us.component(0).iter().zip(u.component(0)).map(|(a, b)| (a - scale * b).abs()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-9 * (1.0 + scale * u.max_abs()));
    }

    #[test]
    fn density_step_conserves_mass_and_positivity(
        (rho, u) in grid_any().prop_flat_map(|g| (field(g, 0.2, 2.0), vector(g))),
        eps in 0.0f64..0.1,
    ) {
        let g = *rho.grid();
        let p = ModelParams { eps, ..ModelParams::unit() };
        let cfg = TimeStepConfig { dt: 0.2 * g.min_spacing(), ..TimeStepConfig::default() };
        let state = State::new(rho.clone(), ScalarField::constant(g, 1.0), u, 0.0).unwrap();
        let next = step_density(&state, &cfg, &p).unwrap();
        let (m0, m1) = (grid::integrate(&rho), grid::integrate(&next));
        prop_assert!((m1 - m0).abs() <= 1e-12 * m0);
        prop_assert!(next.min() > 0.0);
    }

    #[test]
    fn coupled_step_keeps_state_admissible((rho, theta) in grid_1d().prop_flat_map(|g| (field(g, 0.5, 1.5), field(g, 0.5, 1.5)))) {
        let p = ModelParams::default();
        let cfg = TimeStepConfig { dt: 1e-3, ..TimeStepConfig::default() };
        let mut state = State::at_rest(rho, theta).unwrap();
        brinkman_fourier::evolution::equilibrate_velocity(&mut state, &p, &cfg, &brinkman_fourier::evolution::NoForcing).unwrap();
        let next = step_coupled(&state, &cfg, &p).unwrap();
        prop_assert!(next.rho.min() > 0.0 && next.theta.min() > 0.0);
        prop_assert!((next.mass() - state.mass()).abs() <= 1e-12 * state.mass());
        let e = |s: &State| grid::integrate(&s.rho.zip_map(&s.theta, |r, t| p.k1 * r * t));
        prop_assert!((e(&next) - e(&state)).abs() <= 1e-8 * e(&state));
    }
}
