//! Self-consistency checks of the closed-form benchmark solutions.

use elastic_pinn::beam::{airy_potential_jet, biharmonic_check, BeamSpec};
use elastic_pinn::collocation::{sample_collocation, Fractions};
use elastic_pinn::exec::ExecConfig;
use elastic_pinn::loss::{evaluate, BeamProblem, FieldSource, LossWeights, PlateMode, PlateProblem, Problem};
use elastic_pinn::plate::{PlateSpec, RIGIDITY_TOLERANCE};
use elastic_pinn::{ActivationKind, Result};

pub const POINTS: usize = 1000;
/// Nondimensional residual tolerance for the beam identities.
pub const BEAM_TOL: f64 = 1e-10;
/// `|D Δ²w - q| / q0` tolerance.
pub const PLATE_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn pass(&self) -> bool {
        self.value <= self.tolerance
    }
}

/// Largest pointwise residual of every loss term under the oracle, in loss units.
fn term_maxima(problem: &dyn Problem, seed: u64) -> Result<Vec<f64>> {
    let points = sample_collocation(problem.domain(), POINTS, &Fractions::default(), seed)?.tagged_points();
    let exec = ExecConfig::sequential();
    let mut worst = vec![0.0f64; problem.term_names().len()];
    for p in &points {
        let r = evaluate(problem, FieldSource::Exact(problem.exact()), std::slice::from_ref(p), &exec, 0)?;
        for (w, t) in worst.iter_mut().zip(&r.terms) {
            *w = w.max(t.sqrt());
        }
    }
    Ok(worst)
}

pub fn beam(spec: &BeamSpec) -> Result<Vec<Check>> {
    let problem = BeamProblem::new(spec, &LossWeights::default())?;
    let mut checks: Vec<Check> = problem
        .term_names()
        .iter()
        .zip(term_maxima(&problem, 101)?)
        .map(|(n, v)| Check { name: format!("{n} residual"), value: v, tolerance: BEAM_TOL })
        .collect();
    let pts = sample_collocation(&spec.domain(), POINTS, &Fractions { interior: 1.0, segments: vec![0.0; 4] }, 102)?;
    let s = problem.scaling();
    // Δ²φ carries stress per length squared.
    let unit = s.reference / (s.length[0] * s.length[1]);
    let bih = biharmonic_check(|x, y| airy_potential_jet(spec, [x.value(), y.value()], 4), pts.interior()) / unit;
    checks.push(Check { name: "airy biharmonic".into(), value: bih, tolerance: BEAM_TOL });
    Ok(checks)
}

pub fn plate(spec: &PlateSpec) -> Result<Vec<Check>> {
    let problem = PlateProblem::new(spec, &LossWeights::default(), PlateMode::Mixed, ActivationKind::Tanh)?;
    let pts = sample_collocation(&spec.domain(), POINTS, &Fractions { interior: 1.0, segments: vec![0.0; 4] }, 103)?;
    let mut bih = 0.0f64;
    let mut derived = 0.0f64;
    let s = problem.scaling();
    for p in pts.interior() {
        let jets = spec.exact_jets(*p, 4);
        let q = spec.load_jet(*p, 0).value();
        bih = bih.max((spec.rigidity * jets[0].biharmonic() - q).abs() / spec.q0.abs());
        let from_w = spec.moments_from_deflection(&jets[0]);
        for (k, v) in from_w.iter().enumerate() {
            derived = derived.max((v - jets[k + 1].value()).abs() / s.fields[k + 1]);
        }
    }
    let mut checks = vec![
        Check { name: "navier biharmonic |D lap2 w - q|/q0".into(), value: bih, tolerance: PLATE_TOL },
        Check { name: "closed-form moments/shears vs derivatives of w".into(), value: derived, tolerance: BEAM_TOL },
    ];
    checks.extend(problem.term_names().iter().zip(term_maxima(&problem, 104)?).map(|(n, v)| Check {
        name: format!("{n} residual (mixed)"),
        value: v,
        tolerance: PLATE_TOL,
    }));
    checks.push(Check {
        name: "rigidity vs E t^3 / (12 (1 - nu^2))".into(),
        value: spec.rigidity_deviation(),
        tolerance: RIGIDITY_TOLERANCE,
    });
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_benchmarks_pass() {
        for c in beam(&BeamSpec::default()).unwrap().into_iter().chain(plate(&PlateSpec::default()).unwrap()) {
            assert!(c.pass(), "{c:?}");
        }
    }

    #[test]
    fn one_percent_rigidity_error_fails() {
        let spec = PlateSpec { rigidity: PlateSpec::default().rigidity * 1.01, ..PlateSpec::default() };
        let checks = plate(&spec).unwrap();
        let d = checks.iter().find(|c| c.name.starts_with("rigidity")).unwrap();
        assert!(!d.pass());
        assert!(checks.iter().filter(|c| !c.name.starts_with("rigidity")).all(Check::pass));
    }
}
