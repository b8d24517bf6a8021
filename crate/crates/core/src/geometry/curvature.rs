use super::{ManifoldKind, ModelManifold};
use serde::Serialize;

/// Closed-form curvature bounds of a model manifold with its drift.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvatureData {
    /// Smallest `K` with `Ric - grad Z >= -K`.
    pub k: f64,
    /// `II >= -sigma`, `sigma >= 0`.
    pub sigma: f64,
    /// `II <= gamma`.
    pub gamma: f64,
    /// Upper bound of the sectional curvature.
    pub sect_upper: f64,
}

impl CurvatureData {
    pub(crate) fn of(m: &ModelManifold) -> Self {
        let d1 = m.dim as f64 - 1.0;
        let (ric_min, sect_upper) = match m.kind {
            ManifoldKind::Sphere { radius } | ManifoldKind::SphericalCap { radius, .. } => {
                (d1 / (radius * radius), 1.0 / (radius * radius))
            }
            ManifoldKind::Hyperbolic { radius } => (-d1 / (radius * radius), -1.0 / (radius * radius)),
            _ => (0.0, 0.0),
        };
        let k = m.drift.max_derivative(m) - ric_min;
        let (lo, hi) = match m.kind {
            ManifoldKind::Ball { radius } => (1.0 / radius, 1.0 / radius),
            ManifoldKind::Annulus { inner, outer } => (-1.0 / inner, 1.0 / outer),
            ManifoldKind::SphericalCap { radius, angle } => {
                let c = 1.0 / (angle.tan() * radius);
                (c, c)
            }
            _ => (0.0, 0.0),
        };
        // Clean -0.0 so that reports are stable.
        let clean = |v: f64| if v == 0.0 { 0.0 } else { v };
        Self { k: clean(k), sigma: clean((-lo).max(0.0)), gamma: clean(hi), sect_upper: clean(sect_upper) }
    }
}
