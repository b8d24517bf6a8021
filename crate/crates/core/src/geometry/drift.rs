use super::{ManifoldKind, ModelManifold};
use crate::error::{invalid, Result};
use crate::linalg::{Point, Vector};

/// Drift vector field `Z` of the generator `L = Δ + Z`.
#[derive(Clone, Debug, PartialEq)]
pub enum DriftField {
    Zero,
    /// `Z(x) = -rate * x` on flat kinds (Ornstein-Uhlenbeck drift).
    RadialLinear { rate: f64 },
    /// `Z = grad <coef, x> = coef` on flat kinds.
    LinearPotential { coef: Vector },
    /// `Z = grad(coef * x_{d+1})` on spheres and caps.
    HeightPotential { coef: f64 },
}

impl DriftField {
    pub fn is_zero(&self) -> bool {
        match self {
            DriftField::Zero => true,
            DriftField::RadialLinear { rate } => *rate == 0.0,
            DriftField::LinearPotential { coef } => coef.norm() == 0.0,
            DriftField::HeightPotential { coef } => *coef == 0.0,
        }
    }

    pub(crate) fn validate(&self, m: &ModelManifold) -> Result<()> {
        let flat = m.is_flat();
        let spherical = matches!(m.kind, ManifoldKind::Sphere { .. } | ManifoldKind::SphericalCap { .. });
        match self {
            DriftField::Zero => Ok(()),
            DriftField::RadialLinear { rate } if flat && rate.is_finite() => Ok(()),
            DriftField::LinearPotential { coef } if flat && coef.len() == m.ambient_dim() && coef.is_finite() => Ok(()),
            DriftField::HeightPotential { coef } if spherical && coef.is_finite() => Ok(()),
            _ => invalid(format!("drift {self:?} is not available on {}", m.kind.name())),
        }
    }

    pub fn value(&self, m: &ModelManifold, x: &Point) -> Vector {
        match self {
            DriftField::Zero => Vector::zeros(x.len()),
            DriftField::RadialLinear { rate } => *x * (-rate),
            DriftField::LinearPotential { coef } => *coef,
            DriftField::HeightPotential { coef } => m.coordinate_gradient(x, x.len() - 1) * *coef,
        }
    }

    /// Covariant derivative `grad_u Z` at `x`.
    pub fn covariant_derivative(&self, m: &ModelManifold, x: &Point, u: &Vector) -> Vector {
        match self {
            DriftField::Zero | DriftField::LinearPotential { .. } => Vector::zeros(x.len()),
            DriftField::RadialLinear { rate } => *u * (-rate),
            DriftField::HeightPotential { coef } => {
                let a = m.sphere_radius().expect("validated");
                *u * (-coef * x[x.len() - 1] / (a * a))
            }
        }
    }

    /// `sup |Z|` over `M̄`, or `None` if unbounded.
    pub fn sup_norm(&self, m: &ModelManifold) -> Option<f64> {
        match self {
            DriftField::Zero => Some(0.0),
            DriftField::LinearPotential { coef } => Some(coef.norm()),
            DriftField::RadialLinear { rate } => {
                if *rate == 0.0 {
                    return Some(0.0);
                }
                match m.kind {
                    ManifoldKind::Ball { radius } => Some(rate.abs() * radius),
                    ManifoldKind::Annulus { outer, .. } => Some(rate.abs() * outer),
                    _ => None,
                }
            }
            DriftField::HeightPotential { coef } => {
                let max_sin = match m.kind {
                    ManifoldKind::SphericalCap { angle, .. } if angle < std::f64::consts::FRAC_PI_2 => angle.sin(),
                    _ => 1.0,
                };
                Some(coef.abs() * max_sin)
            }
        }
    }

    /// `sup <grad_u Z, u>` over `M̄` and unit `u`.
    pub(crate) fn max_derivative(&self, m: &ModelManifold) -> f64 {
        match self {
            DriftField::Zero | DriftField::LinearPotential { .. } => 0.0,
            DriftField::RadialLinear { rate } => -*rate,
            DriftField::HeightPotential { coef } => {
                let a = m.sphere_radius().expect("validated");
                let zmin = match m.kind {
                    ManifoldKind::SphericalCap { angle, .. } => a * angle.cos(),
                    _ => -a,
                };
                // <grad_u Z, u> = -coef z / a^2 for unit u
                (-coef * a).max(-coef * zmin) / (a * a)
            }
        }
    }
}
