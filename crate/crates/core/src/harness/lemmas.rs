//! Seeded property sweeps of the remainder bounds and the scalar
//! inequalities behind them.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::potential::{convexity_margin, scalar_lemma_margins, PotentialFamily, PotentialSpec};

/// Margins below this count as violations.
pub const MARGIN_FLOOR: f64 = -1e-12;
/// Largest deviation tolerated in the equality cases.
pub const EQUALITY_TOL: f64 = 1e-14;

/// Bound on `ε|a|` used by the sweeps.
const CENTRE_BOUND: f64 = 3.0;

#[derive(Debug, Clone, Serialize)]
pub struct LemmaOutcome {
    pub name: String,
    pub samples: usize,
    pub min_margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EqualityOutcome {
    pub name: String,
    pub samples: usize,
    pub max_deviation: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub seed: u64,
    pub samples: usize,
    pub lemmas: Vec<LemmaOutcome>,
    pub equalities: Vec<EqualityOutcome>,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.lemmas.iter().all(|l| l.passed) && self.equalities.iter().all(|e| e.passed)
    }
}

struct Tally {
    name: &'static str,
    samples: usize,
    min: f64,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            samples: 0,
            min: f64::INFINITY,
        }
    }

    fn record(&mut self, margin: f64) {
        self.samples += 1;
        // NaN must not slip through as a pass.
        self.min = if margin.is_nan() { f64::NEG_INFINITY } else { self.min.min(margin) };
    }

    fn finish(self) -> LemmaOutcome {
        LemmaOutcome {
            name: self.name.to_string(),
            samples: self.samples,
            min_margin: self.min,
            passed: self.min >= MARGIN_FLOOR,
        }
    }
}

fn equality(name: &str, deviations: impl Iterator<Item = f64>) -> EqualityOutcome {
    let (samples, max_deviation) = deviations.fold((0, 0.0f64), |(n, m), d| {
        (n + 1, if d.is_nan() { f64::INFINITY } else { m.max(d.abs()) })
    });
    EqualityOutcome {
        name: name.to_string(),
        samples,
        max_deviation,
        passed: max_deviation <= EQUALITY_TOL,
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, d: usize, half: f64) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-half..half)).collect()
}

/// A random positive definite quadratic well with minimum 0, with a linear
/// term half of the time.
fn random_quadratic(rng: &mut ChaCha8Rng, d: usize, eps_v: f64) -> Result<PotentialSpec> {
    let b = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let a = b.transpose() * &b + DMatrix::identity(d, d) * rng.gen_range(0.05..1.0);
    let a: DMatrix<f64> = (&a + a.transpose()) * 0.5;
    let v = if rng.gen_bool(0.5) {
        uniform_vec(rng, d, 2.0)
    } else {
        vec![0.0; d]
    };
    let sol = a
        .clone()
        .lu()
        .solve(&DVector::from_column_slice(&v))
        .expect("positive definite");
    let c = 0.25 * sol.dot(&DVector::from_column_slice(&v));
    PotentialSpec::new(
        d,
        PotentialFamily::Quadratic {
            a: a.iter().cloned().collect(),
            v,
            c,
        },
        eps_v,
    )
}

fn random_quartic(rng: &mut ChaCha8Rng, d: usize, eps_v: f64) -> Result<PotentialSpec> {
    PotentialSpec::new(
        d,
        PotentialFamily::EvenQuartic {
            c2: rng.gen_range(0.1..2.0),
            c4: rng.gen_range(0.1..2.0),
        },
        eps_v,
    )
}

/// Random built-in potential, 1D or 2D, with the sample point `x` and a
/// centre `a` satisfying `ε|a| ≤ CENTRE_BOUND`.
fn random_setup(rng: &mut ChaCha8Rng, quadratic_only: bool) -> Result<(PotentialSpec, Vec<f64>, Vec<f64>)> {
    let d = if rng.gen_bool(0.5) { 1 } else { 2 };
    let eps_v = rng.gen_range(0.01..0.5);
    let spec = if quadratic_only || rng.gen_bool(0.5) {
        random_quadratic(rng, d, eps_v)?
    } else {
        random_quartic(rng, d, eps_v)?
    };
    let x: Vec<f64> = uniform_vec(rng, d, 10.0).into_iter().map(|y| y / eps_v).collect();
    let dir = uniform_vec(rng, d, 1.0);
    let n = dir.iter().map(|t| t * t).sum::<f64>().sqrt().max(1.0);
    let a: Vec<f64> = dir.iter().map(|t| 0.99 * t / n * CENTRE_BOUND / eps_v).collect();
    Ok((spec, x, a))
}

/// Runs every sweep with `samples` draws each, all from one seeded stream.
pub fn lemma_check(seed: u64, samples: usize) -> Result<LemmaReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut growing = Tally::new("remainder lower bound, r >= 2");
    let mut bounded = Tally::new("remainder lower bound, bounded centre");
    let mut grad_a = Tally::new("remainder centre-gradient upper bound");
    let mut rv_upper = Tally::new("remainder upper bound");
    let mut assumptions = Tally::new("potential growth assumptions");
    for _ in 0..samples {
        let (spec, x, a) = random_setup(&mut rng, false)?;
        growing.record(spec.lower_bound_margin(&x, &a, CENTRE_BOUND)?);
        let up = spec.upper_bound_margins(&x, &a, CENTRE_BOUND)?;
        grad_a.record(up.grad_a);
        rv_upper.record(up.rv);
        let y: Vec<f64> = x.iter().map(|x| spec.eps_v() * x).collect();
        for m in spec.assumption_margins(&y) {
            assumptions.record(m);
        }
        // The bounded-centre case needs r ≤ 2: the quadratic wells.
        let (spec, x, a) = random_setup(&mut rng, true)?;
        bounded.record(spec.lower_bound_margin_bounded(&x, &a, CENTRE_BOUND)?);
    }

    let mut maxmin = Tally::new("bracket power comparison");
    let mut convexity = Tally::new("convexity of |1+y|^r");
    let mut equivalence = Tally::new("weight equivalence");
    for _ in 0..samples {
        let y = rng.gen_range(-10.0..10.0);
        let b = rng.gen_range(0.0..=6.0);
        let m = scalar_lemma_margins(y, b, 2.0)?;
        maxmin.record(m.maxmin_low.min(m.maxmin_high));

        let y = rng.gen_range(-10.0..10.0);
        let r = rng.gen_range(2.0..=6.0);
        convexity.record(convexity_margin(y, r)?);

        let y = rng.gen_range(-10.0..10.0);
        let r = 6.0 - rng.gen_range(0.0..6.0);
        let m = scalar_lemma_margins(y, 0.0, r)?;
        equivalence.record(m.norm_equiv_low.min(m.norm_equiv_high));
    }

    let ys: Vec<f64> = (0..samples).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let equalities = vec![
        equality("convexity at r = 2", ys.iter().map(|&y| convexity_margin(y, 2.0).unwrap_or(f64::NAN))),
        equality(
            "bracket power comparison at b = 2",
            ys.iter().map(|&y| {
                scalar_lemma_margins(y, 2.0, 2.0).map_or(f64::NAN, |m| m.maxmin_low.abs().max(m.maxmin_high.abs()))
            }),
        ),
        equality(
            "weight equivalence at r = 2",
            ys.iter().map(|&y| {
                scalar_lemma_margins(y, 0.0, 2.0)
                    .map_or(f64::NAN, |m| m.norm_equiv_low.abs().max(m.norm_equiv_high.abs()))
            }),
        ),
    ];

    Ok(LemmaReport {
        seed,
        samples,
        lemmas: [growing, bounded, maxmin, convexity, grad_a, rv_upper, equivalence, assumptions]
            .into_iter()
            .map(Tally::finish)
            .collect(),
        equalities,
    })
}
