use proptest::prelude::*;

use solwave::decomposition::ModulationState;
use solwave::grid::{ComplexField, Grid};
use solwave::modulation::{
    alpha_from_series, classical_energy, derivative_series, effective_rhs, full_modulation_rhs, newtonian_rhs,
    rates_from_series, rk4_integrate, ClassicalState,
};
use solwave::nonlinearity::Nonlinearity;
use solwave::potential::{PotentialFamily, PotentialSpec};
use solwave::profile::closed_form_cubic_1d;
use solwave::Error;

fn start(a: f64, p: f64) -> ClassicalState {
    ClassicalState::new(vec![a], vec![p], 0.0, 1.0)
}

/// `a(t)` in the well `ε²x²`.
fn harmonic_position(eps: f64, a0: f64, p0: f64, t: f64) -> f64 {
    a0 * (2.0 * eps * t).cos() + p0 / eps * (2.0 * eps * t).sin()
}

#[test]
fn rk4_follows_the_harmonic_orbit_at_fourth_order() {
    let eps = 0.2;
    let v = PotentialSpec::harmonic(1, eps).unwrap();
    let init = start(1.5, 0.3);
    let error_at = |dt: f64| {
        let path = rk4_integrate(|s| newtonian_rhs(s, &v), &init, 20.0, dt).unwrap();
        path.iter()
            .map(|(t, s)| (s.a[0] - harmonic_position(eps, 1.5, 0.3, *t)).abs())
            .fold(0.0, f64::max)
    };
    let (coarse, fine) = (error_at(0.2), error_at(0.1));
    assert!(fine < 1e-6, "error {fine}");
    let ratio = coarse / fine;
    assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn phase_picks_up_the_classical_action() {
    // With V = 0: γ(t) = (μ + p²) t.
    let v = PotentialSpec::zero(1);
    let path = rk4_integrate(|s| newtonian_rhs(s, &v), &start(0.0, 0.4), 5.0, 0.05).unwrap();
    let (t, end) = path.last().unwrap();
    assert!((t - 5.0).abs() < 1e-12);
    assert!((end.gamma - 1.16 * 5.0).abs() < 1e-12);
    assert!((end.a[0] - 4.0).abs() < 1e-12);
    assert_eq!(path.len(), 101);
}

#[test]
fn effective_force_matches_newton_for_quadratics() {
    let g = Grid::build(1, 512, 40.0).unwrap();
    let profile = closed_form_cubic_1d(1.0, 1.0, &g).unwrap();
    let v = PotentialSpec::harmonic(1, 0.1).unwrap();
    let s = start(2.0, -0.3);
    let newton = newtonian_rhs(&s, &v);
    let averaged = effective_rhs(&s, &profile, &v);
    assert!((newton.p[0] - averaged.p[0]).abs() < 1e-12);
    assert_eq!(newton.a, averaged.a);
}

#[test]
fn rk4_rejects_bad_steps() {
    let v = PotentialSpec::zero(1);
    assert!(rk4_integrate(|s| newtonian_rhs(s, &v), &start(0.0, 0.0), 1.0, 0.0).is_err());
    assert!(rk4_integrate(|s| newtonian_rhs(s, &v), &start(0.0, 0.0), f64::NAN, 0.1).is_err());
}

#[test]
fn series_helpers_reject_short_or_uneven_input() {
    assert!(matches!(derivative_series(&[1.0; 4], 0.1), Err(Error::SeriesTooShort(4))));
    let states = vec![start(0.0, 0.0); 6];
    let even: Vec<f64> = (0..6).map(|k| k as f64 * 0.1).collect();
    assert!(matches!(rates_from_series(&even[..5], &states), Err(Error::LengthMismatch { .. })));
    let mut uneven = even.clone();
    uneven[3] += 0.01;
    assert!(matches!(rates_from_series(&uneven, &states), Err(Error::InvalidParameter(_))));
    assert!(matches!(rates_from_series(&even[..4], &states[..4]), Err(Error::SeriesTooShort(4))));
}

#[test]
fn newtonian_trajectory_has_no_alpha() {
    let v = PotentialSpec::new(1, PotentialFamily::EvenQuartic { c2: 1.0, c4: 0.5 }, 0.2).unwrap();
    let path = rk4_integrate(|s| newtonian_rhs(s, &v), &start(1.0, 0.2), 10.0, 0.01).unwrap();
    let (times, states): (Vec<f64>, Vec<ClassicalState>) = path.into_iter().step_by(5).unzip();
    let alpha = alpha_from_series(&times, &states, &v).unwrap();
    let worst = alpha.iter().map(|a| a.max_abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "alpha {worst}");
    let e0 = classical_energy(&states[0], &v);
    for s in &states {
        assert!((classical_energy(s, &v) - e0).abs() < 1e-9);
    }
}

#[test]
fn free_soliton_moves_along_a_straight_line() {
    let g = Grid::build(1, 512, 40.0).unwrap();
    let profile = closed_form_cubic_1d(1.0, 1.0, &g).unwrap();
    let sigma = ModulationState::new(vec![0.5], vec![0.3], 1.0, 1.0).unwrap();
    let w = ComplexField::zeros(&g);
    let rates = full_modulation_rhs(&sigma, &w, &profile, &PotentialSpec::zero(1), &Nonlinearity::cubic(1.0)).unwrap();
    assert!(rates.alpha.max_abs() < 1e-9, "{:?}", rates.alpha);
    assert!((rates.rate.a[0] - 0.6).abs() < 1e-9);
    assert!(rates.rate.p[0].abs() < 1e-9);
    assert!((rates.rate.gamma - 1.09).abs() < 1e-9);
    assert!(rates.rate.mu.abs() < 1e-9);
}

proptest! {
    #[test]
    fn five_point_rule_is_exact_on_quartics(
        c in prop::array::uniform5(-2.0f64..2.0),
        h in 0.01f64..0.5,
        n in 5usize..30,
    ) {
        let poly = |t: f64| c[0] + t * (c[1] + t * (c[2] + t * (c[3] + t * c[4])));
        let slope = |t: f64| c[1] + t * (2.0 * c[2] + t * (3.0 * c[3] + t * 4.0 * c[4]));
        let values: Vec<f64> = (0..n).map(|k| poly(k as f64 * h)).collect();
        let d = derivative_series(&values, h).unwrap();
        for (k, dk) in d.iter().enumerate() {
            let t = k as f64 * h;
            let scale = 1.0 + slope(t).abs() + poly(t).abs() / h;
            prop_assert!((dk - slope(t)).abs() < 1e-11 * scale, "k {}: {} vs {}", k, dk, slope(t));
        }
    }
}
