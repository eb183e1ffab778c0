use solwave::diagnostics::{hamiltonian, mass};
use solwave::grid::{ComplexField, Grid, C64};
use solwave::nonlinearity::{HartreeKernel, Nonlinearity};
use solwave::potential::PotentialSpec;
use solwave::profile::closed_form_cubic_1d;
use solwave::propagator::{EvolutionState, Propagator, PropagatorConfig};
use solwave::Error;

fn config(dt: f64, stride: usize) -> PropagatorConfig {
    PropagatorConfig {
        dt,
        output_stride: stride,
        dealias: false,
    }
}

fn gaussian(grid: &Grid, width2: C64) -> ComplexField {
    ComplexField::from_fn(grid, |x| (-(x[0] * x[0]) / (2.0 * width2)).exp())
}

#[test]
fn free_gaussian_spreads_exactly() {
    let g = Grid::build(1, 1024, 60.0).unwrap();
    let sigma2 = C64::new(2.0, 0.0);
    let prop = Propagator::new(&g, &PotentialSpec::zero(1), &Nonlinearity::Zero, config(0.01, 100)).unwrap();
    let states = prop.evolve(&gaussian(&g, sigma2), 3.0).unwrap();
    assert_eq!(states.len(), 4);
    for s in &states {
        let w = sigma2 + C64::new(0.0, 2.0 * s.t);
        let amp = (sigma2 / w).sqrt();
        let exact = gaussian(&g, w).scaled(amp);
        assert!(s.psi.sub(&exact).unwrap().max_abs() < 1e-12, "t = {}", s.t);
    }
}

#[test]
fn ground_state_only_rotates() {
    let g = Grid::build(1, 512, 40.0).unwrap();
    let mu = 1.0;
    let eta = closed_form_cubic_1d(mu, 1.0, &g).unwrap().eta_field();
    let error_at = |dt: f64| {
        let prop = Propagator::new(&g, &PotentialSpec::zero(1), &Nonlinearity::cubic(1.0), config(dt, 1)).unwrap();
        let end = prop.evolve_with(&eta, 2.0, |_| Ok(())).unwrap();
        end.psi.sub(&eta.scaled(C64::from_polar(1.0, mu * end.t))).unwrap().norm_l2()
    };
    let (coarse, fine) = (error_at(2e-3), error_at(1e-3));
    assert!(fine < 1e-5, "error {fine}");
    let ratio = coarse / fine;
    assert!((3.8..4.2).contains(&ratio), "ratio {ratio}");
}

#[test]
fn reversed_scheme_undoes_the_flow() {
    let g = Grid::build(1, 256, 30.0).unwrap();
    let v = PotentialSpec::harmonic(1, 0.1).unwrap();
    let f = Nonlinearity::cubic(1.0);
    let psi0 = ComplexField::from_fn(&g, |x| C64::from_polar(1.2 / (x[0] - 1.0).cosh(), 0.3 * x[0]));
    let fwd = Propagator::new(&g, &v, &f, config(2e-3, 1000)).unwrap();
    let out = fwd.evolve_with(&psi0, 1.0, |_| Ok(())).unwrap();
    let back = fwd.reversed().unwrap();
    let mut state = EvolutionState { t: out.t, psi: out.psi };
    for _ in 0..500 {
        back.step(&mut state).unwrap();
    }
    assert!(state.psi.sub(&psi0).unwrap().max_abs() < 1e-11);
    assert!(state.t.abs() < 1e-12);
}

#[test]
fn mass_is_conserved_and_energy_nearly() {
    let g = Grid::build(1, 256, 30.0).unwrap();
    let v = PotentialSpec::harmonic(1, 0.1).unwrap();
    let cases = [
        Nonlinearity::Hartree {
            lambda: 1.0,
            kernel: HartreeKernel::Sech2 { width: 1.0 },
        },
        Nonlinearity::TwoPower {
            beta: -0.5,
            lambda: 1.0,
            s1: 1.0,
            s2: 2.0,
        },
    ];
    let psi0 = ComplexField::from_fn(&g, |x| C64::from_polar(1.0 / (x[0] + 2.0).cosh(), -0.2 * x[0]));
    for f in cases {
        let prop = Propagator::new(&g, &v, &f, config(1e-3, 500)).unwrap();
        let states = prop.evolve(&psi0, 2.0).unwrap();
        let (m0, h0) = (mass(&psi0), hamiltonian(&psi0, &v, &f));
        for s in &states {
            assert!((mass(&s.psi) - m0).abs() < 1e-12 * m0, "{f:?}");
            assert!((hamiltonian(&s.psi, &v, &f) - h0).abs() < 1e-5 * h0.abs().max(1.0), "{f:?}");
        }
    }
}

#[test]
fn dealiasing_removes_the_upper_third() {
    let g = Grid::build(1, 128, 10.0).unwrap();
    let mut cfg = config(1e-3, 1);
    cfg.dealias = true;
    let prop = Propagator::new(&g, &PotentialSpec::zero(1), &Nonlinearity::Zero, cfg).unwrap();
    let psi0 = ComplexField::from_fn(&g, |x| C64::new((-(x[0] * x[0]) * 20.0).exp(), 0.0));
    let end = prop.evolve(&psi0, 1e-3).unwrap().pop().unwrap();
    let mut spectrum = end.psi.values().to_vec();
    g.fft(&mut spectrum);
    let top = spectrum[64 - 10..64 + 10].iter().map(|c| c.norm()).fold(0.0, f64::max);
    assert!(top < 1e-12);
}

#[test]
fn invalid_configurations_are_rejected() {
    let g = Grid::build(1, 128, 40.0).unwrap();
    let steep = PotentialSpec::harmonic(1, 1.0).unwrap();
    let f = Nonlinearity::cubic(1.0);
    // max V = 400 on this box
    let err = Propagator::new(&g, &steep, &f, config(0.01, 1)).unwrap_err();
    assert!(matches!(err, Error::PhaseWrapGuard { value } if value >= std::f64::consts::PI));
    assert!(Propagator::new(&g, &steep, &f, config(1e-3, 1)).is_ok());
    let calm = PotentialSpec::zero(1);
    assert!(Propagator::new(&g, &calm, &f, config(0.0, 1)).is_err());
    assert!(Propagator::new(&g, &calm, &f, config(1e-3, 0)).is_err());
    assert!(Propagator::new(&g, &PotentialSpec::zero(2), &f, config(1e-3, 1)).is_err());
    let prop = Propagator::new(&g, &calm, &f, config(1e-2, 1)).unwrap();
    let psi = ComplexField::zeros(&g);
    assert!(matches!(prop.evolve(&psi, 0.015), Err(Error::InvalidParameter(_))));
    assert!(prop.evolve(&psi, -0.01).is_err());
    let other = ComplexField::zeros(&Grid::build(1, 64, 40.0).unwrap());
    assert!(matches!(prop.evolve(&other, 0.01), Err(Error::GridMismatch)));
}
