use solwave::diagnostics::{
    coercivity_spectrum, ehrenfest_residuals, energy_emu, hamiltonian, k_sigma, lyapunov, mass, mass_and_momentum,
    remainder_pairing,
};
use solwave::decomposition::ModulationState;
use solwave::grid::{apply_symmetry, ComplexField, Grid, C64};
use solwave::harness::experiments::skew_orthogonal_noise;
use solwave::nonlinearity::Nonlinearity;
use solwave::potential::PotentialSpec;
use solwave::profile::{closed_form_cubic_1d, SolitonProfile};
use solwave::propagator::{EvolutionState, Propagator, PropagatorConfig};
use solwave::Error;

fn profile() -> SolitonProfile {
    closed_form_cubic_1d(1.0, 1.0, &Grid::build(1, 512, 40.0).unwrap()).unwrap()
}

fn probe(grid: &Grid) -> ComplexField {
    ComplexField::from_fn(grid, |x| C64::new((-(x[0] - 0.7).powi(2)).exp(), 0.5 * x[0] * (-(x[0] * x[0])).exp()))
}

#[test]
fn mass_and_momentum_of_a_plane_wave_packet() {
    let g = Grid::build(1, 512, 40.0).unwrap();
    let k = 0.6;
    let psi = ComplexField::from_fn(&g, |x| C64::from_polar((-(x[0] * x[0]) / 2.0).exp(), k * x[0]));
    // ½∫e^{-x²} = √π/2
    let expected = std::f64::consts::PI.sqrt() / 2.0;
    let mm = mass_and_momentum(&psi);
    assert!((mm.mass - expected).abs() < 1e-12);
    assert!((mass(&psi) - mm.mass).abs() < 1e-15);
    assert!((mm.momentum[0] - k * expected).abs() < 1e-12);
}

#[test]
fn hamiltonian_of_the_sech_soliton() {
    let p = profile();
    let f = Nonlinearity::cubic(1.0);
    // ∫|η'|² = 4/3 and ∫η⁴/2 = 8/3 for η = √2 sech x.
    let h = hamiltonian(&p.eta_field(), &PotentialSpec::zero(1), &f);
    assert!((h - (0.5 * 4.0 / 3.0 - 0.5 * 8.0 / 3.0)).abs() < 1e-10);
}

#[test]
fn soliton_is_critical_for_the_shifted_energy() {
    let p = profile();
    let f = Nonlinearity::cubic(1.0);
    let eta = p.eta_field();
    let w = probe(&p.grid);
    let h = 1e-5;
    let plus = energy_emu(&eta.add_scaled(C64::new(h, 0.0), &w).unwrap(), p.mu, &f);
    let minus = energy_emu(&eta.add_scaled(C64::new(-h, 0.0), &w).unwrap(), p.mu, &f);
    let slope = (plus - minus) / (2.0 * h);
    assert!(slope.abs() < 1e-9, "slope {slope}");
}

#[test]
fn lyapunov_vanishes_on_the_family_and_grows_quadratically() {
    let p = profile();
    let f = Nonlinearity::cubic(1.0);
    let v = PotentialSpec::harmonic(1, 0.1).unwrap();
    let zero = ComplexField::zeros(&p.grid);
    assert!(lyapunov(&p, &zero, &[1.0], &v, &f).unwrap().abs() < 1e-14);
    let w = skew_orthogonal_noise(&p, 0.1, 2.0, 7).unwrap();
    let flat = PotentialSpec::zero(1);
    let big = lyapunov(&p, &w.scaled(C64::new(2e-2, 0.0)), &[1.0], &flat, &f).unwrap();
    let small = lyapunov(&p, &w.scaled(C64::new(1e-2, 0.0)), &[1.0], &flat, &f).unwrap();
    assert!(small > 0.0);
    let ratio = big / small;
    assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    // The well adds ⟨R_V η, w⟩ + ½⟨R_V w, w⟩.
    let w = w.scaled(C64::new(1e-2, 0.0));
    let eta = p.eta_field();
    let rv = v.sample_rv(&p.grid, &[1.0]);
    let weighted = ComplexField::new(
        &p.grid,
        eta.values().iter().zip(&rv).map(|(e, r)| e * r).collect(),
    )
    .unwrap();
    let linear = p.grid.pairing(weighted.values(), w.values()).re;
    let shift = lyapunov(&p, &w, &[1.0], &v, &f).unwrap() - small;
    let expected = linear + 0.5 * remainder_pairing(&w, &[1.0], &v);
    assert!((shift - expected).abs() < 1e-12, "{shift} vs {expected}");
}

#[test]
fn remainder_pairing_is_the_quadratic_moment() {
    let p = profile();
    let v = PotentialSpec::harmonic(1, 0.1).unwrap();
    let eta = p.eta_field();
    // ∫0.01 x² · 2 sech² x = 0.02 π²/6
    let expected = 0.02 * std::f64::consts::PI.powi(2) / 6.0;
    assert!((remainder_pairing(&eta, &[3.0], &v) - expected).abs() < 1e-10);
    assert_eq!(remainder_pairing(&eta, &[3.0], &PotentialSpec::zero(1)), 0.0);
}

#[test]
fn k_sigma_is_invariant_along_the_moving_frame() {
    // For V = 0, K_σ(S_σ u) = E_μ(u).
    let p = profile();
    let f = Nonlinearity::cubic(1.0);
    let u = p.eta_field().add(&probe(&p.grid).scaled(C64::new(0.1, 0.0))).unwrap();
    let sigma = ModulationState::new(vec![1.5], vec![-0.4], 0.8, p.mu).unwrap();
    let moved = apply_symmetry(&sigma.symmetry(), &u).unwrap();
    let k = k_sigma(&moved, &sigma, &PotentialSpec::zero(1), &f);
    assert!((k - energy_emu(&u, p.mu, &f)).abs() < 1e-10);
}

#[test]
fn projection_removes_the_soft_directions() {
    let p = closed_form_cubic_1d(1.0, 1.0, &Grid::build(1, 256, 30.0).unwrap()).unwrap();
    let f = Nonlinearity::cubic(1.0);
    let free = coercivity_spectrum(&p, &f, false, 2).unwrap();
    let held = coercivity_spectrum(&p, &f, true, 2).unwrap();
    assert!(free.plus[0] < -0.1, "negative direction {}", free.plus[0]);
    assert!(free.minus[0].abs() < 1e-6, "gauge zero mode {}", free.minus[0]);
    assert!(held.min() > 0.1);
    assert!(held.min() > free.min());
}

#[test]
fn ehrenfest_needs_three_samples() {
    let g = Grid::build(1, 64, 10.0).unwrap();
    let v = PotentialSpec::harmonic(1, 0.1).unwrap();
    let s = EvolutionState {
        t: 0.0,
        psi: probe(&g),
    };
    let err = ehrenfest_residuals(&[s.clone(), s], &v).unwrap_err();
    assert!(matches!(err, Error::SeriesTooShort(2)));
}

#[test]
fn ehrenfest_holds_along_a_run() {
    let g = Grid::build(1, 512, 40.0).unwrap();
    let v = PotentialSpec::harmonic(1, 0.1).unwrap();
    let f = Nonlinearity::cubic(1.0);
    let cfg = PropagatorConfig {
        dt: 1e-3,
        output_stride: 10,
        dealias: false,
    };
    let psi0 = ComplexField::from_fn(&g, |x| C64::from_polar(1.2 / (x[0] - 2.0).cosh(), 0.2 * x[0]));
    let states = Propagator::new(&g, &v, &f, cfg).unwrap().evolve(&psi0, 2.0).unwrap();
    let r = ehrenfest_residuals(&states, &v).unwrap();
    assert!(r.momentum < 1e-5 && r.position < 1e-5, "{r:?}");
}
