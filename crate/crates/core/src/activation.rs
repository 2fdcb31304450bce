use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Element-wise nonlinearity applied on hidden layers. Output layers are always linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Tanh,
    Sigmoid,
    Relu,
    Linear,
}

/// Highest derivative order the Taylor tables provide (jets need order + 1 for adjoints).
pub(crate) const MAX_TAYLOR: usize = 5;

const FACTORIAL: [f64; MAX_TAYLOR + 1] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0];

// d^m/dz^m tanh(z) as a polynomial in t = tanh(z), lowest power first.
const TANH_DERIVS: [&[f64]; MAX_TAYLOR + 1] = [
    &[0.0, 1.0],
    &[1.0, 0.0, -1.0],
    &[0.0, -2.0, 0.0, 2.0],
    &[-2.0, 0.0, 8.0, 0.0, -6.0],
    &[0.0, 16.0, 0.0, -40.0, 0.0, 24.0],
    &[16.0, 0.0, -136.0, 0.0, 240.0, 0.0, -120.0],
];

// d^m/dz^m sigmoid(z) as a polynomial in s = sigmoid(z).
const SIGMOID_DERIVS: [&[f64]; MAX_TAYLOR + 1] = [
    &[0.0, 1.0],
    &[0.0, 1.0, -1.0],
    &[0.0, 1.0, -3.0, 2.0],
    &[0.0, 1.0, -7.0, 12.0, -6.0],
    &[0.0, 1.0, -15.0, 50.0, -60.0, 24.0],
    &[0.0, 1.0, -31.0, 180.0, -390.0, 360.0, -120.0],
];

fn horner(poly: &[f64], t: f64) -> f64 {
    poly.iter().rev().fold(0.0, |acc, &c| acc * t + c)
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 4] =
        [ActivationKind::Tanh, ActivationKind::Sigmoid, ActivationKind::Relu, ActivationKind::Linear];

    pub fn apply(self, z: f64) -> f64 {
        match self {
            ActivationKind::Tanh => tanh(z),
            ActivationKind::Sigmoid => sigmoid(z),
            ActivationKind::Relu => z.max(0.0),
            ActivationKind::Linear => z,
        }
    }

    /// Writes the Taylor coefficients `f^(m)(z) / m!` for `m = 0..out.len()`.
    ///
    /// ReLU uses the subgradient convention `relu'(0) = 0`; all its higher
    /// derivatives are exactly zero.
    pub(crate) fn taylor(self, z: f64, out: &mut [f64]) {
        self.taylor_at(z, self.apply(z), out);
    }

    /// [`taylor`](Self::taylor) with the already computed value `y = apply(z)`.
    pub(crate) fn taylor_at(self, z: f64, y: f64, out: &mut [f64]) {
        debug_assert!(out.len() <= MAX_TAYLOR + 1);
        match self {
            ActivationKind::Tanh => {
                let t = y;
                for (m, slot) in out.iter_mut().enumerate() {
                    *slot = horner(TANH_DERIVS[m], t) / FACTORIAL[m];
                }
            }
            ActivationKind::Sigmoid => {
                let s = y;
                for (m, slot) in out.iter_mut().enumerate() {
                    *slot = horner(SIGMOID_DERIVS[m], s) / FACTORIAL[m];
                }
            }
            ActivationKind::Relu => {
                out.fill(0.0);
                if let Some(v) = out.first_mut() {
                    *v = z.max(0.0);
                }
                if out.len() > 1 && z > 0.0 {
                    out[1] = 1.0;
                }
            }
            ActivationKind::Linear => {
                out.fill(0.0);
                if let Some(v) = out.first_mut() {
                    *v = z;
                }
                if out.len() > 1 {
                    out[1] = 1.0;
                }
            }
        }
    }

    /// True when every derivative of order >= 2 vanishes identically.
    pub fn is_piecewise_linear(self) -> bool {
        matches!(self, ActivationKind::Relu | ActivationKind::Linear)
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Tanh => "tanh",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Relu => "relu",
            ActivationKind::Linear => "linear",
        }
    }
}

/// `tanh` through `exp`, with `expm1` near zero to keep relative accuracy.
fn tanh(z: f64) -> f64 {
    let a = z.abs();
    let t = if a < 0.5 {
        let e = (2.0 * a).exp_m1();
        e / (e + 2.0)
    } else {
        1.0 - 2.0 / ((2.0 * a).exp() + 1.0)
    };
    t.copysign(z)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(ActivationKind::Tanh),
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "relu" => Ok(ActivationKind::Relu),
            "linear" => Ok(ActivationKind::Linear),
            other => Err(Error::invalid(format!("unknown activation '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tanh_matches_libm() {
        for i in -4000..=4000 {
            let z = i as f64 * 5e-3 + 1e-4;
            let (a, b) = (tanh(z), z.tanh());
            assert!((a - b).abs() <= 4.0 * f64::EPSILON * b.abs().max(f64::MIN_POSITIVE), "{z}: {a} vs {b}");
        }
        assert_eq!(tanh(0.0), 0.0);
        assert_eq!(tanh(800.0), 1.0);
        assert_eq!(tanh(-800.0), -1.0);
        assert!(tanh(f64::NAN).is_nan());
    }

    fn central(f: impl Fn(f64) -> f64, z: f64, h: f64) -> f64 {
        (f(z + h) - f(z - h)) / (2.0 * h)
    }

    #[test]
    fn taylor_coefficients_match_successive_differences() {
        // Each coefficient's derivative must equal (m+1) times the next one.
        for kind in [ActivationKind::Tanh, ActivationKind::Sigmoid] {
            for &z in &[-1.3, -0.2, 0.0, 0.4, 1.7] {
                let mut a = [0.0; MAX_TAYLOR + 1];
                kind.taylor(z, &mut a);
                assert!((a[0] - kind.apply(z)).abs() < 1e-15);
                for m in 0..MAX_TAYLOR {
                    let coeff_m = |s: f64| {
                        let mut b = [0.0; MAX_TAYLOR + 1];
                        kind.taylor(s, &mut b);
                        b[m]
                    };
                    let fd = central(coeff_m, z, 1e-5);
                    let expected = (m as f64 + 1.0) * a[m + 1];
                    assert!(
                        (fd - expected).abs() < 1e-7 * (1.0 + expected.abs()),
                        "{kind} m={m} z={z}: fd={fd} exact={expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn tanh_and_sigmoid_at_origin() {
        let mut a = [0.0; 3];
        ActivationKind::Tanh.taylor(0.0, &mut a);
        assert_eq!(a, [0.0, 1.0, 0.0]);
        ActivationKind::Sigmoid.taylor(0.0, &mut a);
        assert_eq!(a[0], 0.5);
        assert_eq!(a[1], 0.25);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut a = [9.0; 4];
        ActivationKind::Relu.taylor(0.0, &mut a);
        assert_eq!(a, [0.0; 4]);
        ActivationKind::Relu.taylor(2.0, &mut a);
        assert_eq!(a, [2.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn parses_names() {
        assert_eq!("TANH".parse::<ActivationKind>().unwrap(), ActivationKind::Tanh);
        assert!("swish".parse::<ActivationKind>().is_err());
    }
}
