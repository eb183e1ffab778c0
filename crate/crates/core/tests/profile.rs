use proptest::prelude::*;

use solwave::grid::Grid;
use solwave::nonlinearity::{HartreeKernel, Nonlinearity};
use solwave::profile::{
    closed_form_cubic_1d, export_profile, import_profile, mass_curve, solve_ground_state, tangent_basis,
    CubicFamily, ProfileFamily, SolvedFamily, SolverOptions,
};
use solwave::Error;

fn line() -> Grid {
    Grid::build(1, 512, 40.0).unwrap()
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `‖-η'' + μη - f(η)‖` with the Laplacian taken on the grid.
fn equation_residual(grid: &Grid, f: &Nonlinearity, mu: f64, eta: &[f64]) -> f64 {
    let field = solwave::grid::ComplexField::from_real(grid, eta).unwrap();
    let lap = grid.laplacian_real(eta);
    let fe = f.eval_f(&field);
    let r: Vec<f64> = (0..eta.len()).map(|i| -lap[i] + mu * eta[i] - fe.values()[i].re).collect();
    grid.dot(&r, &r).sqrt()
}

#[test]
fn solver_reproduces_the_sech_profile() {
    let g = line();
    for (mu, lambda) in [(1.0, 1.0), (0.6, 2.0), (1.7, 0.5)] {
        let solved = solve_ground_state(&Nonlinearity::cubic(lambda), mu, &g, &SolverOptions::default()).unwrap();
        let exact: Vec<f64> = g
            .axis()
            .iter()
            .map(|x| (2.0 * mu / lambda).sqrt() / (mu.sqrt() * x).cosh())
            .collect();
        assert!(max_dist(&solved.eta, &exact) < 1e-8, "mu {mu}, lambda {lambda}");
        assert!((solved.mass - 2.0 * mu.sqrt() / lambda).abs() < 1e-8);
    }
}

#[test]
fn closed_form_mass_slope() {
    let g = line();
    let family = CubicFamily::new(&g, 1.0).unwrap();
    for mu in [0.6, 1.0, 1.8] {
        let exact = mass_curve(&family, mu, None).unwrap();
        let fd = mass_curve(&family, mu, Some(1e-3)).unwrap();
        assert!((exact.m_prime - 1.0 / mu.sqrt()).abs() < 1e-12);
        assert!((fd.m_prime - exact.m_prime).abs() < 1e-6);
    }
}

#[test]
fn solved_family_slope_matches_the_closed_form() {
    let g = line();
    let family = SolvedFamily::new(&g, Nonlinearity::cubic(1.0)).unwrap();
    let curve = mass_curve(&family, 1.2, None).unwrap();
    assert!((curve.m - 2.0 * 1.2f64.sqrt()).abs() < 1e-8);
    assert!((curve.m_prime - 1.0 / 1.2f64.sqrt()).abs() < 1e-5);
    let p = family.profile(1.2).unwrap();
    assert!((p.mass_slope - 1.0 / 1.2f64.sqrt()).abs() < 1e-5);
}

#[test]
fn closed_form_rejects_bad_input() {
    assert!(closed_form_cubic_1d(1.0, 1.0, &Grid::build(2, 32, 8.0).unwrap()).is_err());
    assert!(closed_form_cubic_1d(-1.0, 1.0, &line()).is_err());
    assert!(closed_form_cubic_1d(1.0, 0.0, &line()).is_err());
}

#[test]
fn other_interactions_solve_their_equations() {
    let g = line();
    let cases = [
        Nonlinearity::TwoPower {
            beta: -0.2,
            lambda: 1.0,
            s1: 1.0,
            s2: 2.0,
        },
        Nonlinearity::Hartree {
            lambda: 2.0,
            kernel: HartreeKernel::Gaussian { width: 1.0 },
        },
        Nonlinearity::LocalPower { lambda: 1.0, s: 3.0 },
    ];
    for f in cases {
        let p = solve_ground_state(&f, 1.0, &g, &SolverOptions::default()).unwrap();
        let norm = g.dot(&p.eta, &p.eta).sqrt();
        assert!(equation_residual(&g, &f, 1.0, &p.eta) < 1e-8 * norm, "{f:?}");
        assert!(p.eta.iter().all(|&e| e >= -1e-10), "{f:?} changes sign");
        for i in 0..g.len() {
            assert!((p.eta[i] - p.eta[g.reflect_index(i)]).abs() < 1e-10);
        }
    }
}

#[test]
fn planar_profile_is_radial() {
    let g = Grid::build(2, 64, 12.0).unwrap();
    let f = Nonlinearity::LocalPower { lambda: 1.0, s: 1.0 };
    let p = solve_ground_state(&f, 1.0, &g, &SolverOptions::default()).unwrap();
    let norm = g.dot(&p.eta, &p.eta).sqrt();
    assert!(equation_residual(&g, &f, 1.0, &p.eta) < 1e-8 * norm);
    // Swapping the axes leaves a radial function unchanged.
    let n = g.points();
    for i in 0..n {
        for j in 0..n {
            assert!((p.eta[i * n + j] - p.eta[j * n + i]).abs() < 1e-10);
        }
    }
}

#[test]
fn tangent_vectors_pair_as_expected() {
    let g = line();
    let p = closed_form_cubic_1d(1.0, 1.0, &g).unwrap();
    let t = tangent_basis(&p);
    // ⟨∂_μ η, η⟩ = m'(μ) and ⟨i x η, -∂_x η⟩ vanishes in the real pairing.
    let d_mass = g.dot(&p.d_mu_eta, &p.eta);
    assert!((d_mass - p.mass_slope).abs() < 1e-8);
    let cross = g.pairing(t.boost[0].values(), t.trans[0].values()).re;
    assert!(cross.abs() < 1e-12);
    assert!((t.gauge.norm_l2() - p.norm()).abs() < 1e-14);
}

#[test]
fn export_import_round_trip() {
    let g = Grid::build(1, 64, 10.0).unwrap();
    let p = closed_form_cubic_1d(1.0, 1.0, &g).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("profile.txt");
    export_profile(&path, &p).unwrap();
    let rows = import_profile(&path).unwrap();
    assert_eq!(rows.len(), 64);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), 2);
        assert_eq!(row[0], g.axis()[i]);
        assert_eq!(row[1], p.eta[i]);
    }
    std::fs::write(&path, "1.0 nope\n").unwrap();
    assert!(matches!(import_profile(&path), Err(Error::Config(_))));
}

proptest! {
    #[test]
    fn frequency_inverts_mass(mu in 0.5f64..2.0, lambda in 0.3f64..3.0) {
        let family = CubicFamily::new(&line(), lambda).unwrap();
        let m = family.mass(mu).unwrap();
        let back = family.frequency_for_mass(m).unwrap();
        prop_assert!((back - mu).abs() < 1e-12 * mu);
    }

    #[test]
    fn mass_outside_the_interval_is_reported(scale in 1.05f64..3.0) {
        let family = CubicFamily::new(&line(), 1.0).unwrap();
        let top = family.mass(2.0).unwrap();
        let err = family.frequency_for_mass(top * scale).unwrap_err();
        let is_range = matches!(err, Error::MassOutOfRange { .. });
        prop_assert!(is_range);
    }
}
