//! End-loaded cantilever in plane stress and its Airy closed-form solution.

use serde::{Deserialize, Serialize};

use crate::collocation::{BoundaryTag, DomainSpec, Edge, Segment};
use crate::elasticity::{ElasticFields, MaterialParams, PlaneMode, SymTensor};
use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::oracle::{constant, seeds, ExactFields};

pub const BEAM_FIELDS: [&str; 8] = ["u_x", "u_y", "sigma_xx", "sigma_yy", "sigma_xy", "eps_xx", "eps_yy", "eps_xy"];

/// Beam occupying `0 <= x <= L`, `-a <= y <= a`, loaded at `x = 0` and clamped at `x = L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamSpec {
    pub length: f64,
    pub half_height: f64,
    pub thickness: f64,
    pub load: f64,
    pub material: MaterialParams,
}

impl Default for BeamSpec {
    fn default() -> Self {
        BeamSpec {
            length: 3.0,
            half_height: 0.5,
            thickness: 0.001,
            load: 10.0,
            material: MaterialParams::new(1e9, 0.25, PlaneMode::PlaneStress).expect("valid default material"),
        }
    }
}

impl BeamSpec {
    /// Checks positivity; returns warnings for soft modeling assumptions.
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [("length", self.length), ("half_height", self.half_height), ("thickness", self.thickness)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("beam {name} must be positive, got {v}")));
            }
        }
        if !self.load.is_finite() {
            return Err(Error::invalid("beam load must be finite"));
        }
        let mut warnings = Vec::new();
        if self.thickness > 0.1 * self.half_height {
            warnings.push(format!(
                "thickness {} is not small against half-height {}; plane stress is questionable",
                self.thickness, self.half_height
            ));
        }
        if self.material.mode != PlaneMode::PlaneStress {
            warnings.push("the Airy solution used here assumes plane stress".to_string());
        }
        Ok(warnings)
    }

    /// `P / (4 E a³ b)`, the common factor of the displacement polynomials.
    fn k(&self) -> f64 {
        let a = self.half_height;
        self.load / (4.0 * self.material.e * a * a * a * self.thickness)
    }

    /// Peak shear stress `3P / (4ab)`, reached on the neutral axis.
    pub fn shear_amplitude(&self) -> f64 {
        3.0 * self.load / (4.0 * self.half_height * self.thickness)
    }

    pub fn domain(&self) -> DomainSpec {
        let seg = |name: &str, edge, tag| Segment { name: name.to_string(), edge, tag };
        DomainSpec {
            x_min: 0.0,
            x_max: self.length,
            y_min: -self.half_height,
            y_max: self.half_height,
            segments: vec![
                seg("loaded_end", Edge::Left, BoundaryTag::Neumann),
                seg("clamped_end", Edge::Right, BoundaryTag::Dirichlet),
                seg("bottom", Edge::Bottom, BoundaryTag::Neumann),
                seg("top", Edge::Top, BoundaryTag::Neumann),
            ],
        }
    }

    /// Jets of the eight fields in [`BEAM_FIELDS`] order.
    pub fn airy_jets(&self, point: [f64; 2], order: usize) -> [Jet2; 8] {
        let (x, y) = seeds(point, order);
        let (a, b, p, nu) = (self.half_height, self.thickness, self.load, self.material.nu);
        let l = self.length;
        let k = self.k();
        let c = |v| constant(v, order);
        let xy = x * y;
        let yy = y * y;
        let parabola = c(1.0) - yy * (1.0 / (a * a));

        let u_x = x * xy * (3.0 * k) - yy * y * ((2.0 + nu) * k) + y * (6.0 * (1.0 + nu) * k * a * a - 3.0 * k * l * l);
        let u_y = xy * y * (-3.0 * nu * k) - x * x * x * k + x * (3.0 * k * l * l) + c(-2.0 * k * l * l * l);
        let eps_xx = xy * (6.0 * k);
        let eps_yy = xy * (-6.0 * nu * k);
        let eps_xy = parabola * (3.0 * p * (1.0 + nu) / (4.0 * self.material.e * a * b));
        let sigma_xx = xy * (3.0 * p / (2.0 * a * a * a * b));
        let sigma_yy = c(0.0);
        let sigma_xy = parabola * self.shear_amplitude();
        [u_x, u_y, sigma_xx, sigma_yy, sigma_xy, eps_xx, eps_yy, eps_xy]
    }
}

pub fn airy_potential(spec: &BeamSpec, x: f64, y: f64) -> f64 {
    airy_potential_jet(spec, [x, y], 0).value()
}

/// `φ = -3P/(4ab)·xy + P/(4a³b)·xy³` as a jet.
pub fn airy_potential_jet(spec: &BeamSpec, point: [f64; 2], order: usize) -> Jet2 {
    let (x, y) = seeds(point, order);
    let (a, b, p) = (spec.half_height, spec.thickness, spec.load);
    let xy = x * y;
    xy * (-3.0 * p / (4.0 * a * b)) + xy * y * y * (p / (4.0 * a * a * a * b))
}

pub fn airy_fields(spec: &BeamSpec, x: f64, y: f64) -> ElasticFields {
    let v = spec.airy_jets([x, y], 0).map(|j| j.value());
    ElasticFields {
        u: [v[0], v[1]],
        stress: SymTensor::new(v[2], v[3], v[4]),
        strain: SymTensor::new(v[5], v[6], v[7]),
        body: [0.0, 0.0],
    }
}

/// Prescribed boundary data of the cantilever.
#[derive(Clone, Debug)]
pub struct BeamBoundary {
    spec: BeamSpec,
}

pub fn beam_boundary_data(spec: &BeamSpec) -> BeamBoundary {
    BeamBoundary { spec: spec.clone() }
}

impl BeamBoundary {
    /// Parabolic shear traction on the loaded end `x = 0`.
    pub fn end_traction(&self, y: f64) -> [f64; 2] {
        let a = self.spec.half_height;
        [0.0, -self.spec.shear_amplitude() * (1.0 - y * y / (a * a))]
    }

    /// Traction on the faces `y = ±a`.
    pub fn face_traction(&self) -> [f64; 2] {
        [0.0, 0.0]
    }

    /// Airy displacement on the clamped end `x = L`.
    pub fn clamp_displacement(&self, y: f64) -> [f64; 2] {
        airy_fields(&self.spec, self.spec.length, y).u
    }

    /// Prescribed traction at a point of a Neumann edge.
    pub fn traction(&self, edge: Edge, point: [f64; 2]) -> [f64; 2] {
        match edge {
            Edge::Left => self.end_traction(point[1]),
            _ => self.face_traction(),
        }
    }
}

/// Maximum `|Δ²φ|` over `points`, using order-4 jets of the potential.
pub fn biharmonic_check<F>(potential: F, points: &[[f64; 2]]) -> f64
where
    F: Fn(&Jet2, &Jet2) -> Jet2,
{
    points
        .iter()
        .map(|&p| {
            let (x, y) = seeds(p, 4);
            potential(&x, &y).biharmonic().abs()
        })
        .fold(0.0, f64::max)
}

impl ExactFields for BeamSpec {
    fn field_names(&self) -> &'static [&'static str] {
        &BEAM_FIELDS
    }

    fn jets(&self, point: [f64; 2], order: usize) -> Vec<Jet2> {
        self.airy_jets(point, order).to_vec()
    }
}
