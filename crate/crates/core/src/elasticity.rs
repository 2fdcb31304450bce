//! Plane linear elasticity: material constants and the kinematic, constitutive,
//! and equilibrium relations.
//!
//! The relations are written once over [`FieldAlgebra`] so the same code runs on
//! plain numbers, on oracle values, and on tape expressions during training.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet2;

/// Anything that supports the linear operations the elasticity relations need.
pub trait FieldAlgebra: Clone + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {}

impl<T> FieldAlgebra for T where T: Clone + Add<Output = T> + Sub<Output = T> + Mul<f64, Output = T> {}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlaneMode {
    PlaneStress,
    PlaneStrain,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub e: f64,
    pub nu: f64,
    pub lambda: f64,
    pub mu: f64,
    pub mode: PlaneMode,
}

impl MaterialParams {
    pub fn new(e: f64, nu: f64, mode: PlaneMode) -> Result<Self> {
        let (lambda, mu) = lame_from_engineering(e, nu, mode)?;
        Ok(MaterialParams { e, nu, lambda, mu, mode })
    }
}

/// `(λ, μ)` from Young's modulus and Poisson's ratio; plane stress uses the reduced `λ`.
pub fn lame_from_engineering(e: f64, nu: f64, mode: PlaneMode) -> Result<(f64, f64)> {
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::invalid(format!("Young's modulus must be positive, got {e}")));
    }
    if !(nu > -1.0 && nu < 0.5) {
        return Err(Error::invalid(format!("Poisson ratio must lie in (-1, 0.5), got {nu}")));
    }
    let mu = e / (2.0 * (1.0 + nu));
    let lambda = match mode {
        PlaneMode::PlaneStrain => e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu)),
        PlaneMode::PlaneStress => e * nu / (1.0 - nu * nu),
    };
    Ok((lambda, mu))
}

/// Symmetric 2x2 tensor; the off-diagonal entry is stored once.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymTensor<T> {
    pub xx: T,
    pub yy: T,
    pub xy: T,
}

impl<T> SymTensor<T> {
    pub fn new(xx: T, yy: T, xy: T) -> Self {
        SymTensor { xx, yy, xy }
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> SymTensor<U> {
        SymTensor { xx: f(self.xx), yy: f(self.yy), xy: f(self.xy) }
    }

    /// Components in the order `xx, yy, xy`.
    pub fn into_array(self) -> [T; 3] {
        [self.xx, self.yy, self.xy]
    }
}

/// Displacement, strain, stress, and body force at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElasticFields {
    pub u: [f64; 2],
    pub strain: SymTensor<f64>,
    pub stress: SymTensor<f64>,
    pub body: [f64; 2],
}

/// Small-strain tensor from the displacement gradient components.
pub fn strain_from_gradient<T: FieldAlgebra>(dux_dx: T, dux_dy: T, duy_dx: T, duy_dy: T) -> SymTensor<T> {
    SymTensor { xx: dux_dx, yy: duy_dy, xy: (dux_dy + duy_dx) * 0.5 }
}

/// Strain at the expansion point of displacement jets.
pub fn strain_from_displacement(u: &[Jet2; 2]) -> Result<SymTensor<f64>> {
    if u[0].order() < 1 || u[1].order() < 1 {
        return Err(Error::invalid("strain needs displacement jets of order >= 1"));
    }
    Ok(strain_from_gradient(u[0].partial(1, 0), u[0].partial(0, 1), u[1].partial(1, 0), u[1].partial(0, 1)))
}

/// Isotropic Hooke's law `σ = λ tr(ε) I + 2μ ε` with the material's `λ`.
pub fn stress_from_strain<T: FieldAlgebra>(eps: &SymTensor<T>, mat: &MaterialParams) -> SymTensor<T> {
    let tr = eps.xx.clone() + eps.yy.clone();
    SymTensor {
        xx: tr.clone() * mat.lambda + eps.xx.clone() * (2.0 * mat.mu),
        yy: tr * mat.lambda + eps.yy.clone() * (2.0 * mat.mu),
        xy: eps.xy.clone() * (2.0 * mat.mu),
    }
}

/// `div σ + B` from the four stress derivatives that enter it.
pub fn divergence_residual<T: FieldAlgebra>(dsxx_dx: T, dsxy_dy: T, dsxy_dx: T, dsyy_dy: T, body: [T; 2]) -> [T; 2] {
    let [bx, by] = body;
    [dsxx_dx + dsxy_dy + bx, dsxy_dx + dsyy_dy + by]
}

/// Equilibrium residual at the expansion point of stress jets.
pub fn equilibrium_residual(sigma: &SymTensor<Jet2>, body: [f64; 2]) -> Result<[f64; 2]> {
    if sigma.xx.order() < 1 || sigma.yy.order() < 1 || sigma.xy.order() < 1 {
        return Err(Error::invalid("equilibrium needs stress jets of order >= 1"));
    }
    Ok(divergence_residual(
        sigma.xx.partial(1, 0),
        sigma.xy.partial(0, 1),
        sigma.xy.partial(1, 0),
        sigma.yy.partial(0, 1),
        body,
    ))
}

/// Cauchy traction `σ·n̂` for a unit normal.
pub fn traction(sigma: &SymTensor<f64>, normal: [f64; 2]) -> Result<[f64; 2]> {
    let norm = normal[0].hypot(normal[1]);
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("normal must have unit length, got |n| = {norm}")));
    }
    Ok([sigma.xx * normal[0] + sigma.xy * normal[1], sigma.xy * normal[0] + sigma.yy * normal[1]])
}
