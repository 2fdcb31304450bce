//! Multi-objective PINN losses for the cantilever and plate benchmarks.
//!
//! Every term is a mean over its region of the squared, nondimensionalized
//! residual summed over components. Residuals are formed in physical units from
//! the field jets and divided by characteristic scales derived from the oracle.

use serde::{Deserialize, Serialize};

use crate::activation::ActivationKind;
use crate::beam::{beam_boundary_data, BeamBoundary, BeamSpec};
use crate::collocation::{BoundaryTag, CollocationSet, DomainSpec, Edge, Region};
use crate::elasticity::{divergence_residual, strain_from_gradient, stress_from_strain, SymTensor};
use crate::error::{Error, Result};
use crate::exec::ExecConfig;
use crate::jet::{coeff_count, jet_index, Jet2};
use crate::network::{seed_matrix, FieldBundle};
use crate::oracle::ExactFields;
use crate::plate::PlateSpec;
use crate::tape::{LinExpr, NodeId, ParamTape};

pub const BEAM_TERMS: [&str; 8] =
    ["equilibrium", "kinematic", "constitutive", "dirichlet", "traction", "data_u", "data_sigma", "data_eps"];
pub const PLATE_TERMS: [&str; 6] = ["pde", "dirichlet", "moment_bc", "data_w", "data_m", "data_q"];

/// Loss coefficients. `alpha` holds the data weights in field-group order:
/// `(u, σ, ε)` for the beam, `(w, M, Q)` for the plate. The plate uses only `phi`
/// among the physics weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub phi: f64,
    pub phi_e: f64,
    pub phi_c: f64,
    pub beta_u: f64,
    pub beta_t: f64,
    pub alpha: [f64; 3],
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { phi: 1.0, phi_e: 1.0, phi_c: 1.0, beta_u: 1.0, beta_t: 1.0, alpha: [1.0; 3] }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("phi", self.phi), ("phi_e", self.phi_e), ("phi_c", self.phi_c)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("weight {name} must be a finite non-negative number, got {v}")));
            }
        }
        let binary = [("beta_u", self.beta_u), ("beta_t", self.beta_t)]
            .into_iter()
            .chain(self.alpha.iter().enumerate().map(|(i, &v)| (["alpha[0]", "alpha[1]", "alpha[2]"][i], v)));
        for (name, v) in binary {
            if v != 0.0 && v != 1.0 {
                return Err(Error::config(format!("weight {name} must be 0 or 1, got {v}")));
            }
        }
        Ok(())
    }

    /// Weights in [`BEAM_TERMS`] order.
    pub fn beam_vector(&self) -> Vec<f64> {
        let [a_u, a_s, a_e] = self.alpha;
        vec![self.phi, self.phi_e, self.phi_c, self.beta_u, self.beta_t, a_u, a_s, a_e]
    }

    /// Weights in [`PLATE_TERMS`] order.
    pub fn plate_vector(&self) -> Vec<f64> {
        let [a_w, a_m, a_q] = self.alpha;
        vec![self.phi, self.beta_u, self.beta_t, a_w, a_m, a_q]
    }
}

/// Per-term loss values and their weighted total.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    pub terms: Vec<f64>,
    pub total: f64,
}

impl LossReport {
    /// Sums the weighted terms left to right.
    pub fn from_terms(epoch: usize, terms: Vec<f64>, weights: &[f64]) -> Self {
        let mut total = 0.0;
        for (w, t) in weights.iter().zip(&terms) {
            total += w * t;
        }
        LossReport { epoch, terms, total }
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.terms.iter().all(|t| t.is_finite())
    }
}

/// Coordinate map onto `[-1, 1]²` and one characteristic magnitude per field.
///
/// `length` is the physical extent of the domain and also sets the residual scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub origin: [f64; 2],
    pub length: [f64; 2],
    pub fields: Vec<f64>,
    /// Load-level reference: peak end traction (beam) or load amplitude (plate).
    pub reference: f64,
}

impl Scaling {
    /// Maps the domain box onto `[-1, 1]²`.
    pub fn normalize(&self, p: [f64; 2]) -> [f64; 2] {
        [2.0 * (p[0] - self.origin[0]) / self.length[0] - 1.0, 2.0 * (p[1] - self.origin[1]) / self.length[1] - 1.0]
    }

    pub fn denormalize(&self, q: [f64; 2]) -> [f64; 2] {
        [self.origin[0] + 0.5 * (q[0] + 1.0) * self.length[0], self.origin[1] + 0.5 * (q[1] + 1.0) * self.length[1]]
    }

    /// `∂x̂/∂x` and `∂ŷ/∂y` of [`Scaling::normalize`].
    pub fn input_gain(&self) -> [f64; 2] {
        [2.0 / self.length[0], 2.0 / self.length[1]]
    }

    pub fn to_nondimensional(&self, field: usize, value: f64) -> f64 {
        value / self.fields[field]
    }

    pub fn to_physical(&self, field: usize, value: f64) -> f64 {
        value * self.fields[field]
    }

    fn validate(&self) -> Result<()> {
        let all = self.length.iter().chain(&self.fields).chain(std::iter::once(&self.reference));
        for &v in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("characteristic scale must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Maximum `|field|` over a uniform grid on the domain; a field that vanishes
/// identically borrows the scale of `fallback[field]`.
pub fn characteristic_scales(
    exact: &dyn ExactFields,
    domain: &DomainSpec,
    fallback: &[Option<usize>],
    resolution: usize,
) -> Result<Vec<f64>> {
    let n_fields = exact.field_names().len();
    let mut max = vec![0.0f64; n_fields];
    let r = resolution.max(2);
    for i in 0..r {
        for j in 0..r {
            let x = domain.x_min + domain.width() * i as f64 / (r - 1) as f64;
            let y = domain.y_min + domain.height() * j as f64 / (r - 1) as f64;
            for (m, v) in max.iter_mut().zip(exact.values([x, y])) {
                *m = m.max(v.abs());
            }
        }
    }
    let peak = max.iter().copied().fold(0.0, f64::max);
    let mut scales = max.clone();
    for (f, s) in scales.iter_mut().enumerate() {
        if max[f] <= 1e-12 * peak {
            *s = fallback.get(f).copied().flatten().map_or(0.0, |g| max[g]);
        }
        if !(*s > 0.0 && s.is_finite()) {
            return Err(Error::config(format!("field '{}' has a zero characteristic scale", exact.field_names()[f])));
        }
    }
    Ok(scales)
}

const SCALE_GRID: usize = 101;

pub fn beam_scaling(spec: &BeamSpec) -> Result<Scaling> {
    let domain = spec.domain();
    // sigma_yy vanishes identically; it borrows the shear scale.
    let fallback = [None, None, None, Some(4), None, None, None, None];
    let fields = characteristic_scales(spec, &domain, &fallback, SCALE_GRID)?;
    let s = Scaling {
        origin: [domain.x_min, domain.y_min],
        length: [domain.width(), domain.height()],
        fields,
        reference: spec.shear_amplitude().abs(),
    };
    s.validate()?;
    Ok(s)
}

pub fn plate_scaling(spec: &PlateSpec) -> Result<Scaling> {
    let domain = spec.domain();
    let fields = characteristic_scales(spec, &domain, &[None; 6], SCALE_GRID)?;
    let s = Scaling {
        origin: [domain.x_min, domain.y_min],
        length: [domain.width(), domain.height()],
        fields,
        reference: spec.q0.abs(),
    };
    s.validate()?;
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    Interior,
    Boundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TermRegion {
    Interior,
    Dirichlet,
    Neumann,
}

#[derive(Clone, Copy, Debug)]
struct Handle {
    node: NodeId,
    order: usize,
    value_scale: f64,
    input_gain: [f64; 2],
}

/// Field jets and point data of one point group, as seen by a [`Problem`].
pub struct GroupCtx {
    pub group: Group,
    points: Vec<[f64; 2]>,
    edges: Vec<Option<Edge>>,
    tags: Vec<Option<BoundaryTag>>,
    handles: Vec<Option<Handle>>,
    targets: Vec<Vec<f64>>,
}

const FACTORIAL: [f64; 5] = [1.0, 1.0, 2.0, 6.0, 24.0];

impl GroupCtx {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    /// Physical partial derivative `∂^{i+j} f / ∂x^i ∂y^j` of field `f` at every point.
    pub fn d(&self, field: usize, i: usize, j: usize) -> LinExpr {
        let h = self.handles[field].expect("field not evaluated in this group");
        assert!(i + j <= h.order, "derivative order exceeds the evaluated jet order");
        let factor = h.value_scale
            * FACTORIAL[i]
            * FACTORIAL[j]
            * h.input_gain[0].powi(i as i32)
            * h.input_gain[1].powi(j as i32);
        LinExpr::channel(h.node, coeff_count(h.order), jet_index(i, j), factor, self.len())
    }

    pub fn v(&self, field: usize) -> LinExpr {
        self.d(field, 0, 0)
    }

    /// Oracle value of `field` at every point.
    pub fn target(&self, field: usize) -> LinExpr {
        LinExpr::constant(self.targets[field].clone())
    }

    /// `(field - oracle) / scale`.
    pub fn data_residual(&self, field: usize, scale: f64) -> LinExpr {
        (self.v(field) - self.target(field)) * (1.0 / scale)
    }

    pub fn map_points(&self, f: impl Fn([f64; 2], Option<Edge>) -> f64) -> Vec<f64> {
        self.points.iter().zip(&self.edges).map(|(p, e)| f(*p, *e)).collect()
    }

    /// 1 for boundary points whose segment tag satisfies `pred`, else 0.
    pub fn mask(&self, pred: fn(BoundaryTag) -> bool) -> Vec<f64> {
        self.tags.iter().map(|t| if t.is_some_and(pred) { 1.0 } else { 0.0 }).collect()
    }

    /// Outward unit normal components (zero for interior points).
    pub fn normals(&self) -> (Vec<f64>, Vec<f64>) {
        let n: Vec<[f64; 2]> = self.edges.iter().map(|e| e.map_or([0.0, 0.0], Edge::outward_normal)).collect();
        (n.iter().map(|v| v[0]).collect(), n.iter().map(|v| v[1]).collect())
    }
}

/// A benchmark's fields, loss terms, and residual formulas.
pub trait Problem: Sync {
    fn field_names(&self) -> &'static [&'static str];
    fn term_names(&self) -> &'static [&'static str];
    fn term_regions(&self) -> &'static [TermRegion];
    /// Weights in term order.
    fn weights(&self) -> Vec<f64>;
    fn domain(&self) -> &DomainSpec;
    fn scaling(&self) -> &Scaling;
    fn exact(&self) -> &dyn ExactFields;
    /// Jet order required for each field on `group`; `None` skips the field.
    fn orders(&self, group: Group) -> Vec<Option<usize>>;
    /// Nondimensional residual components per term (empty for terms not living on this group).
    fn residuals(&self, ctx: &GroupCtx) -> Vec<Vec<LinExpr>>;
}

/// Where field values come from: trainable networks or the closed-form oracle.
#[derive(Clone, Copy)]
pub enum FieldSource<'a> {
    Networks(&'a FieldBundle),
    Exact(&'a dyn ExactFields),
}

pub type TaggedPoint = (Region, [f64; 2]);

/// Checks that every term with a nonzero weight has points to live on.
pub fn check_regions<P: Problem + ?Sized>(problem: &P, points: &[TaggedPoint]) -> Result<()> {
    let counts = region_counts(problem.domain(), points);
    for ((name, region), w) in problem.term_names().iter().zip(problem.term_regions()).zip(problem.weights()) {
        if w != 0.0 && counts[*region as usize] == 0 {
            return Err(Error::config(format!(
                "loss term '{name}' is enabled but its {region:?} region has no points"
            )));
        }
    }
    Ok(())
}

fn region_counts(domain: &DomainSpec, points: &[TaggedPoint]) -> [usize; 3] {
    let mut c = [0usize; 3];
    for (r, _) in points {
        match r {
            Region::Interior => c[TermRegion::Interior as usize] += 1,
            Region::Segment(k) => {
                let tag = domain.segments[*k].tag;
                if tag.is_dirichlet() {
                    c[TermRegion::Dirichlet as usize] += 1;
                }
                if tag.is_neumann() {
                    c[TermRegion::Neumann as usize] += 1;
                }
            }
        }
    }
    c
}

/// `1 / N` for each term's region over `points`, or 0 when the region is empty.
pub fn term_norms<P: Problem + ?Sized>(problem: &P, points: &[TaggedPoint]) -> Vec<f64> {
    let counts = region_counts(problem.domain(), points);
    problem
        .term_regions()
        .iter()
        .map(|r| match counts[*r as usize] {
            0 => 0.0,
            n => 1.0 / n as f64,
        })
        .collect()
}

/// Tape of one chunk with the node of each term (absent when the chunk has no points for it).
pub struct Assembled {
    pub tape: ParamTape,
    pub terms: Vec<Option<NodeId>>,
}

impl Assembled {
    pub fn term_values(&self) -> Vec<f64> {
        self.terms.iter().map(|n| n.map_or(0.0, |n| self.tape.scalar(n))).collect()
    }

    /// Records `Σ w_t term_t`; `None` when no weighted term is present.
    pub fn total(&mut self, weights: &[f64]) -> Option<NodeId> {
        let pairs: Vec<(NodeId, f64)> =
            self.terms.iter().zip(weights).filter_map(|(n, &w)| n.map(|n| (n, w))).collect();
        (!pairs.is_empty()).then(|| self.tape.weighted_sum(&pairs))
    }
}

/// Records every term over `points`, normalizing term `t` by `norms[t]`.
pub fn assemble<P: Problem + ?Sized>(
    problem: &P,
    source: FieldSource<'_>,
    points: &[TaggedPoint],
    norms: &[f64],
) -> Result<Assembled> {
    let n_fields = problem.field_names().len();
    let n_terms = problem.term_names().len();
    let n_params = match source {
        FieldSource::Networks(b) => {
            if b.len() != n_fields {
                return Err(Error::ShapeMismatch(format!("expected {n_fields} field networks, got {}", b.len())));
            }
            b.param_len()
        }
        FieldSource::Exact(_) => 0,
    };
    let scaling = problem.scaling();
    let domain = problem.domain();
    let mut tape = ParamTape::new(n_params);
    let mut comps: Vec<Vec<NodeId>> = vec![Vec::new(); n_terms];

    for group in [Group::Interior, Group::Boundary] {
        let sel: Vec<&TaggedPoint> =
            points.iter().filter(|(r, _)| matches!(r, Region::Interior) == (group == Group::Interior)).collect();
        if sel.is_empty() {
            continue;
        }
        let pts: Vec<[f64; 2]> = sel.iter().map(|(_, p)| *p).collect();
        let (edges, tags): (Vec<_>, Vec<_>) = sel
            .iter()
            .map(|(r, _)| match r {
                Region::Interior => (None, None),
                Region::Segment(k) => (Some(domain.segments[*k].edge), Some(domain.segments[*k].tag)),
            })
            .unzip();
        let orders = problem.orders(group);
        let mut handles = vec![None; n_fields];
        match source {
            FieldSource::Networks(bundle) => {
                let normalized: Vec<[f64; 2]> = pts.iter().map(|p| scaling.normalize(*p)).collect();
                let mut inputs: [Option<NodeId>; 5] = [None; 5];
                for (f, order) in orders.iter().enumerate() {
                    let Some(order) = *order else { continue };
                    let input = *inputs[order].get_or_insert_with(|| {
                        let k = coeff_count(order);
                        tape.constant(2, normalized.len() * k, seed_matrix(&normalized, order))
                    });
                    let node = bundle.net(f).record(&mut tape, bundle.offset(f), input, order)?;
                    handles[f] =
                        Some(Handle { node, order, value_scale: scaling.fields[f], input_gain: scaling.input_gain() });
                }
            }
            FieldSource::Exact(exact) => {
                let mut cache: [Option<Vec<Vec<Jet2>>>; 5] = Default::default();
                for (f, order) in orders.iter().enumerate() {
                    let Some(order) = *order else { continue };
                    let jets = cache[order].get_or_insert_with(|| pts.iter().map(|p| exact.jets(*p, order)).collect());
                    let k = coeff_count(order);
                    let mut values = Vec::with_capacity(pts.len() * k);
                    for per_point in jets.iter() {
                        values.extend_from_slice(per_point[f].coeffs());
                    }
                    let node = tape.constant(1, pts.len() * k, values);
                    handles[f] = Some(Handle { node, order, value_scale: 1.0, input_gain: [1.0, 1.0] });
                }
            }
        }
        let mut targets = vec![Vec::with_capacity(pts.len()); n_fields];
        for p in &pts {
            for (t, v) in targets.iter_mut().zip(problem.exact().values(*p)) {
                t.push(v);
            }
        }
        let ctx = GroupCtx { group, points: pts, edges, tags, handles, targets };
        for (t, list) in problem.residuals(&ctx).into_iter().enumerate() {
            if norms[t] == 0.0 {
                continue;
            }
            for expr in list {
                let r = tape.lin_comb(expr);
                comps[t].push(tape.sum_squares(r, norms[t]));
            }
        }
    }

    let terms = comps
        .into_iter()
        .map(|c| match c.len() {
            0 => None,
            1 => Some(c[0]),
            _ => {
                let pairs: Vec<(NodeId, f64)> = c.into_iter().map(|n| (n, 1.0)).collect();
                Some(tape.weighted_sum(&pairs))
            }
        })
        .collect();
    Ok(Assembled { tape, terms })
}

struct ChunkResult {
    terms: Vec<f64>,
    grad: Option<Vec<f64>>,
}

fn eval_chunk<P: Problem + ?Sized>(
    problem: &P,
    source: FieldSource<'_>,
    points: &[TaggedPoint],
    norms: &[f64],
    want_grad: bool,
) -> Result<ChunkResult> {
    let mut asm = assemble(problem, source, points, norms)?;
    let terms = asm.term_values();
    let grad = if want_grad {
        let n = asm.tape.param_len();
        Some(match asm.total(&problem.weights()) {
            Some(total) => asm.tape.gradient(total)?,
            None => vec![0.0; n],
        })
    } else {
        None
    };
    Ok(ChunkResult { terms, grad })
}

fn reduce(parts: Vec<Result<ChunkResult>>, n_terms: usize) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let mut terms = vec![0.0; n_terms];
    let mut grad: Option<Vec<f64>> = None;
    for part in parts {
        let part = part?;
        terms.iter_mut().zip(&part.terms).for_each(|(a, b)| *a += b);
        if let Some(g) = part.grad {
            match grad.as_mut() {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => grad = Some(g),
            }
        }
    }
    Ok((terms, grad))
}

/// Full loss report over `points`, evaluated chunk by chunk.
pub fn evaluate<P: Problem + ?Sized>(
    problem: &P,
    source: FieldSource<'_>,
    points: &[TaggedPoint],
    exec: &ExecConfig,
    epoch: usize,
) -> Result<LossReport> {
    let norms = term_norms(problem, points);
    let parts = exec.map_chunks(points, |chunk| eval_chunk(problem, source, chunk, &norms, false));
    let (terms, _) = reduce(parts, norms.len())?;
    Ok(LossReport::from_terms(epoch, terms, &problem.weights()))
}

/// Loss over `points` and its gradient with respect to the flat bundle parameters.
pub fn loss_and_gradient<P: Problem + ?Sized>(
    problem: &P,
    bundle: &FieldBundle,
    points: &[TaggedPoint],
    exec: &ExecConfig,
) -> Result<(LossReport, Vec<f64>)> {
    let norms = term_norms(problem, points);
    let source = FieldSource::Networks(bundle);
    let parts = exec.map_chunks(points, |chunk| eval_chunk(problem, source, chunk, &norms, true));
    let (terms, grad) = reduce(parts, norms.len())?;
    let grad = grad.unwrap_or_else(|| vec![0.0; bundle.param_len()]);
    Ok((LossReport::from_terms(0, terms, &problem.weights()), grad))
}

// ---------------------------------------------------------------------------
// Cantilever beam.

const UX: usize = 0;
const UY: usize = 1;
const SXX: usize = 2;
const SYY: usize = 3;
const SXY: usize = 4;
const EXX: usize = 5;
const EYY: usize = 6;
const EXY: usize = 7;

const BEAM_REGIONS: [TermRegion; 8] = [
    TermRegion::Interior,
    TermRegion::Interior,
    TermRegion::Interior,
    TermRegion::Dirichlet,
    TermRegion::Neumann,
    TermRegion::Interior,
    TermRegion::Interior,
    TermRegion::Interior,
];

#[derive(Clone, Debug)]
pub struct BeamProblem {
    spec: BeamSpec,
    weights: LossWeights,
    scaling: Scaling,
    domain: DomainSpec,
    boundary: BeamBoundary,
}

impl BeamProblem {
    pub fn new(spec: &BeamSpec, weights: &LossWeights) -> Result<Self> {
        Self::with_scaling(spec, weights, beam_scaling(spec)?)
    }

    pub fn with_scaling(spec: &BeamSpec, weights: &LossWeights, scaling: Scaling) -> Result<Self> {
        spec.validate()?;
        weights.validate()?;
        scaling.validate()?;
        Ok(BeamProblem {
            spec: spec.clone(),
            weights: *weights,
            scaling,
            domain: spec.domain(),
            boundary: beam_boundary_data(spec),
        })
    }

    pub fn spec(&self) -> &BeamSpec {
        &self.spec
    }

    /// Divergence scales of the two equilibrium components.
    fn equilibrium_scales(&self) -> [f64; 2] {
        let s = &self.scaling.fields;
        let [lx, ly] = self.scaling.length;
        [(s[SXX] / lx).max(s[SXY] / ly), (s[SXY] / lx).max(s[SYY] / ly)]
    }

    /// Largest-term scales of `ε - ε(u)` for `xx, yy, xy`.
    fn kinematic_scales(&self) -> [f64; 3] {
        let s = &self.scaling.fields;
        let [lx, ly] = self.scaling.length;
        let (gx, gy) = (s[UX] / lx, s[UY] / ly);
        [s[EXX].max(gx), s[EYY].max(gy), s[EXY].max(0.5 * s[UX] / ly).max(0.5 * s[UY] / lx)]
    }

    /// Largest-term scales of `σ - C:ε(u)` for `xx, yy, xy`.
    fn constitutive_scales(&self) -> [f64; 3] {
        let s = &self.scaling.fields;
        let [lx, ly] = self.scaling.length;
        let (lambda, mu) = (self.spec.material.lambda, self.spec.material.mu);
        let (gx, gy) = (s[UX] / lx, s[UY] / ly);
        [
            s[SXX].max((lambda + 2.0 * mu) * gx).max(lambda * gy),
            s[SYY].max(lambda * gx).max((lambda + 2.0 * mu) * gy),
            s[SXY].max(mu * s[UX] / ly).max(mu * s[UY] / lx),
        ]
    }
}

impl Problem for BeamProblem {
    fn field_names(&self) -> &'static [&'static str] {
        &crate::beam::BEAM_FIELDS
    }

    fn term_names(&self) -> &'static [&'static str] {
        &BEAM_TERMS
    }

    fn term_regions(&self) -> &'static [TermRegion] {
        &BEAM_REGIONS
    }

    fn weights(&self) -> Vec<f64> {
        self.weights.beam_vector()
    }

    fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    fn exact(&self) -> &dyn ExactFields {
        &self.spec
    }

    fn orders(&self, group: Group) -> Vec<Option<usize>> {
        match group {
            Group::Interior => vec![Some(1), Some(1), Some(1), Some(1), Some(1), Some(0), Some(0), Some(0)],
            Group::Boundary => vec![Some(0), Some(0), Some(0), Some(0), Some(0), None, None, None],
        }
    }

    fn residuals(&self, ctx: &GroupCtx) -> Vec<Vec<LinExpr>> {
        let s = &self.scaling.fields;
        let n = ctx.len();
        let mut out = vec![Vec::new(); BEAM_TERMS.len()];
        match ctx.group {
            Group::Interior => {
                let [qx, qy] = self.equilibrium_scales();
                let [rx, ry] = divergence_residual(
                    ctx.d(SXX, 1, 0),
                    ctx.d(SXY, 0, 1),
                    ctx.d(SXY, 1, 0),
                    ctx.d(SYY, 0, 1),
                    [LinExpr::zero(n), LinExpr::zero(n)],
                );
                out[0] = vec![rx * (1.0 / qx), ry * (1.0 / qy)];

                let eps_u = strain_from_gradient(ctx.d(UX, 1, 0), ctx.d(UX, 0, 1), ctx.d(UY, 1, 0), ctx.d(UY, 0, 1));
                let sigma_u = stress_from_strain(&eps_u, &self.spec.material);
                let eps_fields = [EXX, EYY, EXY];
                let sigma_fields = [SXX, SYY, SXY];
                out[1] = eps_fields
                    .iter()
                    .zip(eps_u.into_array())
                    .zip(self.kinematic_scales())
                    .map(|((&f, e), k)| (ctx.v(f) - e) * (1.0 / k))
                    .collect();
                out[2] = sigma_fields
                    .iter()
                    .zip(sigma_u.into_array())
                    .zip(self.constitutive_scales())
                    .map(|((&f, e), k)| (ctx.v(f) - e) * (1.0 / k))
                    .collect();
                out[5] = [UX, UY].iter().map(|&f| ctx.data_residual(f, s[f])).collect();
                out[6] = sigma_fields.iter().map(|&f| ctx.data_residual(f, s[f])).collect();
                out[7] = eps_fields.iter().map(|&f| ctx.data_residual(f, s[f])).collect();
            }
            Group::Boundary => {
                let dm = ctx.mask(BoundaryTag::is_dirichlet);
                let clamp: Vec<[f64; 2]> = ctx
                    .map_points(|p, _| p[1])
                    .into_iter()
                    .zip(&dm)
                    .map(|(y, &m)| if m != 0.0 { self.boundary.clamp_displacement(y) } else { [0.0, 0.0] })
                    .collect();
                out[3] = [UX, UY]
                    .iter()
                    .enumerate()
                    .map(|(c, &f)| {
                        let target = LinExpr::constant(clamp.iter().map(|u| u[c]).collect());
                        ((ctx.v(f) - target) * (1.0 / s[f])).mul_pointwise(&dm)
                    })
                    .collect();

                let nm = ctx.mask(BoundaryTag::is_neumann);
                let (nx, ny) = ctx.normals();
                let tbar: Vec<[f64; 2]> = ctx
                    .map_points(|p, e| match e {
                        Some(edge) => self.boundary.traction(edge, p)[0],
                        None => 0.0,
                    })
                    .into_iter()
                    .zip(ctx.map_points(|p, e| e.map_or(0.0, |edge| self.boundary.traction(edge, p)[1])))
                    .map(|(a, b)| [a, b])
                    .collect();
                let sigma = SymTensor::new(ctx.v(SXX), ctx.v(SYY), ctx.v(SXY));
                let t = [
                    sigma.xx.clone().mul_pointwise(&nx) + sigma.xy.clone().mul_pointwise(&ny),
                    sigma.xy.mul_pointwise(&nx) + sigma.yy.mul_pointwise(&ny),
                ];
                // Each component is divided by its largest stress contribution on that edge.
                let component_scale = |i: usize, sa: f64, sb: f64| {
                    let k = (sa * nx[i].abs()).max(sb * ny[i].abs());
                    if k > 0.0 {
                        k
                    } else {
                        self.scaling.reference
                    }
                };
                let weights: [Vec<f64>; 2] = [
                    (0..n).map(|i| nm[i] / component_scale(i, s[SXX], s[SXY])).collect(),
                    (0..n).map(|i| nm[i] / component_scale(i, s[SXY], s[SYY])).collect(),
                ];
                out[4] = t
                    .into_iter()
                    .enumerate()
                    .map(|(c, tc)| {
                        let target = LinExpr::constant(tbar.iter().map(|v| v[c]).collect());
                        (tc - target).mul_pointwise(&weights[c])
                    })
                    .collect();
            }
        }
        out
    }
}

/// Beam loss over the whole set in a single tape: `(total, report, tape)`.
pub fn beam_loss(
    bundle: &FieldBundle,
    points: &CollocationSet,
    spec: &BeamSpec,
    weights: &LossWeights,
) -> Result<(f64, LossReport, ParamTape)> {
    single_tape(&BeamProblem::new(spec, weights)?, bundle, points)
}

fn single_tape<P: Problem>(
    problem: &P,
    bundle: &FieldBundle,
    points: &CollocationSet,
) -> Result<(f64, LossReport, ParamTape)> {
    let tagged = points.tagged_points();
    check_regions(problem, &tagged)?;
    let norms = term_norms(problem, &tagged);
    let mut asm = assemble(problem, FieldSource::Networks(bundle), &tagged, &norms)?;
    let report = LossReport::from_terms(0, asm.term_values(), &problem.weights());
    if asm.total(&problem.weights()).is_none() {
        let zero = asm.tape.constant(1, 1, vec![0.0]);
        asm.tape.weighted_sum(&[(zero, 0.0)]);
    }
    Ok((report.total, report, asm.tape))
}

// ---------------------------------------------------------------------------
// Kirchhoff plate.

const W: usize = 0;
const MXX: usize = 1;
const MYY: usize = 2;
const MXY: usize = 3;
const QX: usize = 4;
const QY: usize = 5;

const PLATE_REGIONS: [TermRegion; 6] = [
    TermRegion::Interior,
    TermRegion::Dirichlet,
    TermRegion::Neumann,
    TermRegion::Interior,
    TermRegion::Interior,
    TermRegion::Interior,
];

/// How the plate's domain residual is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PlateMode {
    /// `Δ²w - q/D` from fourth-order jets of the deflection network.
    Direct,
    /// Moment-deflection, shear-moment, and shear-equilibrium relations at second order.
    Mixed,
    /// Mixed for piecewise-linear activations, direct otherwise.
    #[default]
    Auto,
}

impl PlateMode {
    pub fn resolve(self, activation: ActivationKind) -> PlateMode {
        match self {
            PlateMode::Auto if activation.is_piecewise_linear() => PlateMode::Mixed,
            PlateMode::Auto => PlateMode::Direct,
            m => m,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlateProblem {
    spec: PlateSpec,
    weights: LossWeights,
    scaling: Scaling,
    domain: DomainSpec,
    mode: PlateMode,
    warnings: Vec<String>,
}

impl PlateProblem {
    /// `mode` is resolved against the activation of the deflection network.
    pub fn new(spec: &PlateSpec, weights: &LossWeights, mode: PlateMode, activation: ActivationKind) -> Result<Self> {
        Self::with_scaling(spec, weights, mode, activation, plate_scaling(spec)?)
    }

    pub fn with_scaling(
        spec: &PlateSpec,
        weights: &LossWeights,
        mode: PlateMode,
        activation: ActivationKind,
        scaling: Scaling,
    ) -> Result<Self> {
        let mut warnings = spec.validate()?;
        weights.validate()?;
        scaling.validate()?;
        let mode = mode.resolve(activation);
        if mode == PlateMode::Direct && activation.is_piecewise_linear() {
            warnings
                .push(format!("direct residual with {activation} activation: fourth derivatives vanish identically"));
        }
        Ok(PlateProblem { spec: spec.clone(), weights: *weights, scaling, domain: spec.domain(), mode, warnings })
    }

    pub fn spec(&self) -> &PlateSpec {
        &self.spec
    }

    pub fn mode(&self) -> PlateMode {
        self.mode
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

impl Problem for PlateProblem {
    fn field_names(&self) -> &'static [&'static str] {
        &crate::plate::PLATE_FIELDS
    }

    fn term_names(&self) -> &'static [&'static str] {
        &PLATE_TERMS
    }

    fn term_regions(&self) -> &'static [TermRegion] {
        &PLATE_REGIONS
    }

    fn weights(&self) -> Vec<f64> {
        self.weights.plate_vector()
    }

    fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    fn scaling(&self) -> &Scaling {
        &self.scaling
    }

    fn exact(&self) -> &dyn ExactFields {
        &self.spec
    }

    fn orders(&self, group: Group) -> Vec<Option<usize>> {
        match (group, self.mode) {
            (Group::Interior, PlateMode::Mixed) => {
                vec![Some(2), Some(1), Some(1), Some(1), Some(1), Some(1)]
            }
            (Group::Interior, _) => vec![Some(4), Some(0), Some(0), Some(0), Some(0), Some(0)],
            (Group::Boundary, _) => vec![Some(0), Some(0), Some(0), None, None, None],
        }
    }

    fn residuals(&self, ctx: &GroupCtx) -> Vec<Vec<LinExpr>> {
        let s = &self.scaling.fields;
        let (d, nu) = (self.spec.rigidity, self.spec.material.nu);
        let q0 = self.scaling.reference;
        let mut out = vec![Vec::new(); PLATE_TERMS.len()];
        match ctx.group {
            Group::Interior => {
                let q = ctx.map_points(|p, _| crate::plate::sinusoidal_load(&self.spec, p[0], p[1]));
                out[0] = if self.mode == PlateMode::Mixed {
                    let (wxx, wyy, wxy) = (ctx.d(W, 2, 0), ctx.d(W, 0, 2), ctx.d(W, 1, 1));
                    let m_w = [(wxx.clone() + wyy.clone() * nu) * -d, (wyy + wxx * nu) * -d, wxy * (-d * (1.0 - nu))];
                    let mut r: Vec<LinExpr> =
                        [MXX, MYY, MXY].iter().zip(m_w).map(|(&f, m)| (ctx.v(f) - m) * (1.0 / s[f])).collect();
                    r.push((ctx.v(QX) - (ctx.d(MXX, 1, 0) + ctx.d(MXY, 0, 1))) * (1.0 / s[QX]));
                    r.push((ctx.v(QY) - (ctx.d(MXY, 1, 0) + ctx.d(MYY, 0, 1))) * (1.0 / s[QY]));
                    r.push((ctx.d(QX, 1, 0) + ctx.d(QY, 0, 1) + LinExpr::constant(q)) * (1.0 / q0));
                    r
                } else {
                    let bih = ctx.d(W, 4, 0) + ctx.d(W, 2, 2) * 2.0 + ctx.d(W, 0, 4);
                    let rhs = LinExpr::constant(q.iter().map(|v| v / d).collect());
                    vec![(bih - rhs) * (d / q0)]
                };
                out[3] = vec![ctx.data_residual(W, s[W])];
                out[4] = [MXX, MYY, MXY].iter().map(|&f| ctx.data_residual(f, s[f])).collect();
                out[5] = [QX, QY].iter().map(|&f| ctx.data_residual(f, s[f])).collect();
            }
            Group::Boundary => {
                let dm = ctx.mask(BoundaryTag::is_dirichlet);
                out[1] = vec![(ctx.v(W) * (1.0 / s[W])).mul_pointwise(&dm)];
                // Normal moment on axis-aligned edges: n_x² M_xx + n_y² M_yy (the M_xy term carries n_x n_y = 0).
                let nm = ctx.mask(BoundaryTag::is_neumann);
                let (nx, ny) = ctx.normals();
                let cx: Vec<f64> = nx.iter().zip(&nm).map(|(n, m)| n * n * m / s[MXX]).collect();
                let cy: Vec<f64> = ny.iter().zip(&nm).map(|(n, m)| n * n * m / s[MYY]).collect();
                out[2] = vec![ctx.v(MXX).mul_pointwise(&cx) + ctx.v(MYY).mul_pointwise(&cy)];
            }
        }
        out
    }
}

/// Plate loss over the whole set in a single tape: `(total, report, tape)`.
pub fn plate_loss(
    bundle: &FieldBundle,
    points: &CollocationSet,
    spec: &PlateSpec,
    weights: &LossWeights,
    mode: PlateMode,
) -> Result<(f64, LossReport, ParamTape)> {
    let activation = bundle.net(W).spec().activation;
    single_tape(&PlateProblem::new(spec, weights, mode, activation)?, bundle, points)
}
