//! Simply supported rectangular Kirchhoff plate under a product-sine load.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::collocation::{BoundaryTag, DomainSpec, Edge, Segment};
use crate::elasticity::{MaterialParams, PlaneMode};
use crate::error::{Error, Result};
use crate::jet::Jet2;
use crate::oracle::{seeds, ExactFields};

pub const PLATE_FIELDS: [&str; 6] = ["w", "m_xx", "m_yy", "m_xy", "q_xx", "q_yy"];

/// Relative tolerance between the stated rigidity and `Et³/(12(1-ν²))`.
pub const RIGIDITY_TOLERANCE: f64 = 1e-3;

/// Plate over `[0, a] x [0, b]`; lengths in m, load in Pa, rigidity in N·m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateSpec {
    pub a: f64,
    pub b: f64,
    pub thickness: f64,
    pub q0: f64,
    pub rigidity: f64,
    pub material: MaterialParams,
}

impl Default for PlateSpec {
    fn default() -> Self {
        PlateSpec {
            a: 2.0,
            b: 3.0,
            thickness: 0.01,
            q0: 980.6,
            rigidity: 17957.0,
            material: MaterialParams::new(202_017.03e6, 0.25, PlaneMode::PlaneStress).expect("valid default material"),
        }
    }
}

pub fn flexural_rigidity(e: f64, thickness: f64, nu: f64) -> f64 {
    e * thickness.powi(3) / (12.0 * (1.0 - nu * nu))
}

pub fn sinusoidal_load(spec: &PlateSpec, x: f64, y: f64) -> f64 {
    spec.q0 * (PI * x / spec.a).sin() * (PI * y / spec.b).sin()
}

/// Single-term Navier deflection `q0 / (π⁴ D (1/a² + 1/b²)²) sin(πx/a) sin(πy/b)`.
pub fn navier_solution(spec: &PlateSpec, x: f64, y: f64) -> f64 {
    spec.amplitude() * (PI * x / spec.a).sin() * (PI * y / spec.b).sin()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentsShears {
    pub m_xx: f64,
    pub m_yy: f64,
    pub m_xy: f64,
    pub q_xx: f64,
    pub q_yy: f64,
}

/// Moments `M = -D(∂²w ...)` and shears `Q = -D ∇(Δw)` of the Navier deflection, in closed form.
pub fn derived_moments_shears(spec: &PlateSpec, x: f64, y: f64) -> MomentsShears {
    let v = spec.exact_jets([x, y], 0).map(|j| j.value());
    MomentsShears { m_xx: v[1], m_yy: v[2], m_xy: v[3], q_xx: v[4], q_yy: v[5] }
}

impl PlateSpec {
    /// Hard checks on geometry and load; warnings for a rigidity inconsistent with `E`, `t`, `ν`.
    pub fn validate(&self) -> Result<Vec<String>> {
        for (name, v) in [("a", self.a), ("b", self.b), ("thickness", self.thickness), ("rigidity", self.rigidity)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("plate {name} must be positive, got {v}")));
            }
        }
        if !self.q0.is_finite() {
            return Err(Error::invalid("plate load amplitude must be finite"));
        }
        let mut warnings = Vec::new();
        let dev = self.rigidity_deviation();
        if dev > RIGIDITY_TOLERANCE {
            warnings.push(format!(
                "rigidity {} differs from E t^3 / (12 (1 - nu^2)) = {} by {:.3}%",
                self.rigidity,
                self.computed_rigidity(),
                100.0 * dev
            ));
        }
        Ok(warnings)
    }

    pub fn computed_rigidity(&self) -> f64 {
        flexural_rigidity(self.material.e, self.thickness, self.material.nu)
    }

    /// `|D - Et³/(12(1-ν²))| / Et³/(12(1-ν²))`.
    pub fn rigidity_deviation(&self) -> f64 {
        let d = self.computed_rigidity();
        (self.rigidity - d).abs() / d
    }

    fn s(&self) -> f64 {
        1.0 / (self.a * self.a) + 1.0 / (self.b * self.b)
    }

    /// Center deflection of the Navier solution.
    pub fn amplitude(&self) -> f64 {
        self.q0 / (PI.powi(4) * self.rigidity * self.s() * self.s())
    }

    pub fn domain(&self) -> DomainSpec {
        let seg = |name: &str, edge| Segment { name: name.to_string(), edge, tag: BoundaryTag::Both };
        DomainSpec {
            x_min: 0.0,
            x_max: self.a,
            y_min: 0.0,
            y_max: self.b,
            segments: vec![
                seg("x_0", Edge::Left),
                seg("x_a", Edge::Right),
                seg("y_0", Edge::Bottom),
                seg("y_b", Edge::Top),
            ],
        }
    }

    pub fn load_jet(&self, point: [f64; 2], order: usize) -> Jet2 {
        let (x, y) = seeds(point, order);
        (x * (PI / self.a)).sin() * (y * (PI / self.b)).sin() * self.q0
    }

    /// Jets of the six fields in [`PLATE_FIELDS`] order, each from its closed form.
    pub fn exact_jets(&self, point: [f64; 2], order: usize) -> [Jet2; 6] {
        let (x, y) = seeds(point, order);
        let (a, b, d, nu) = (self.a, self.b, self.rigidity, self.material.nu);
        let (ax, ay) = (x * (PI / a), y * (PI / b));
        let (sx, cx, sy, cy) = (ax.sin(), ax.cos(), ay.sin(), ay.cos());
        let w0 = self.amplitude();
        let ss = sx * sy;
        let w = ss * w0;
        let m_xx = ss * (d * w0 * PI * PI * (1.0 / (a * a) + nu / (b * b)));
        let m_yy = ss * (d * w0 * PI * PI * (nu / (a * a) + 1.0 / (b * b)));
        let m_xy = cx * cy * (-d * (1.0 - nu) * w0 * PI * PI / (a * b));
        let q_xx = cx * sy * (self.q0 / (PI * a * self.s()));
        let q_yy = sx * cy * (self.q0 / (PI * b * self.s()));
        [w, m_xx, m_yy, m_xy, q_xx, q_yy]
    }

    /// Moments and shears obtained by differentiating a deflection jet (order >= 3 for shears).
    pub fn moments_from_deflection(&self, w: &Jet2) -> [f64; 5] {
        let (d, nu) = (self.rigidity, self.material.nu);
        let (wxx, wyy, wxy) = (w.partial(2, 0), w.partial(0, 2), w.partial(1, 1));
        let mut out = [-d * (wxx + nu * wyy), -d * (wyy + nu * wxx), -d * (1.0 - nu) * wxy, 0.0, 0.0];
        if w.order() >= 3 {
            out[3] = -d * (w.partial(3, 0) + w.partial(1, 2));
            out[4] = -d * (w.partial(2, 1) + w.partial(0, 3));
        }
        out
    }
}

/// Prescribed simply supported edge data: zero deflection and zero normal moment.
#[derive(Clone, Debug)]
pub struct PlateBoundary;

pub fn plate_boundary_data(_spec: &PlateSpec) -> PlateBoundary {
    PlateBoundary
}

impl PlateBoundary {
    pub fn deflection(&self, _point: [f64; 2]) -> f64 {
        0.0
    }

    /// Normal bending moment prescribed on an edge (`M_xx` on `x` edges, `M_yy` on `y` edges).
    pub fn normal_moment(&self, _edge: Edge, _point: [f64; 2]) -> f64 {
        0.0
    }
}

impl ExactFields for PlateSpec {
    fn field_names(&self) -> &'static [&'static str] {
        &PLATE_FIELDS
    }

    fn jets(&self, point: [f64; 2], order: usize) -> Vec<Jet2> {
        self.exact_jets(point, order).to_vec()
    }
}
