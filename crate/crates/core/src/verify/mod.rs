//! Numerical checks of the transport, contraction and semigroup
//! inequalities. Every check turns simulated data into an
//! [`InequalityReport`] whose verdict follows one statistical policy.

mod boundary;
mod constants;
mod contraction;
mod semigroup;
mod talagrand;
#[cfg(test)]
mod tests;

pub use boundary::{
    check_sff_asymptotics, check_variance_expansion, SffOptions, SffReport, VarianceFit, SFF_COEFFICIENT, VARIANCE_COEFFICIENT,
};
pub use constants::{explicit_constants, inf_over_r, variable_constant, ExplicitConstants, InfOverR, PsiBounds, VariableConstants};
pub use contraction::{check_marginal_contraction, ContractionInput};
pub use semigroup::{check_gradient_estimate, check_logsobolev, check_poincare};
pub use talagrand::{
    check_composite, check_endpoint_talagrand, check_nonconvex, check_pathspace_talagrand, check_variable_coefficient,
    NonconvexInput,
};

pub use crate::numerics::chi;

use crate::diffusion::SimConfig;
use crate::par_map;
use crate::pathlaw::LOW_ESS_SHARE;
use crate::transport::SolverOptions;
use crate::Result;
use serde::Serialize;
use std::collections::BTreeMap;

/// Width of the pass band in combined standard errors.
pub const PASS_SIGMAS: f64 = 3.0;
/// Width beyond which a violation is a failure.
pub const FAIL_SIGMAS: f64 = 5.0;
/// Relative slack for rounding in exact comparisons such as `0 <= 0`.
pub const ROUNDING_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Pass iff `lhs <= rhs + 3 se`, fail iff `lhs > rhs + 5 se`.
pub fn verdict(lhs: f64, rhs: f64, se: f64) -> Verdict {
    if !(lhs.is_finite() && rhs.is_finite() && se.is_finite()) {
        return Verdict::Inconclusive;
    }
    let slack = ROUNDING_SLACK * (lhs.abs() + rhs.abs());
    if lhs <= rhs + PASS_SIGMAS * se + slack {
        Verdict::Pass
    } else if lhs > rhs + FAIL_SIGMAS * se + slack {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    }
}

/// Raw and same-law baseline transport values behind an adjusted LHS.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BaselineInfo {
    pub raw: f64,
    pub raw_se: f64,
    pub baseline: f64,
    pub baseline_se: f64,
    /// `max(raw^p - baseline^p, 0)`.
    pub adjusted_power: f64,
    /// `max(raw - baseline, 0)`.
    pub adjusted_linear: f64,
    pub method: String,
}

/// Numbers of the run on the refined grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefinedRun {
    pub n_steps: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub se_lhs: f64,
    pub se_rhs: f64,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Kish effective sample size of the reweighted ensemble.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ess_share: Option<f64>,
    /// Verdict agreement between `n` and `2n` steps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_stable: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub refined: Option<RefinedRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<BaselineInfo>,
    /// Covariance-aware standard error of `rhs - lhs` for checks whose two
    /// sides share one ensemble; the verdict uses it in place of the
    /// independent combination.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_margin: Option<f64>,
    /// Named constants and auxiliary estimates.
    pub values: BTreeMap<String, f64>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InequalityReport {
    pub name: String,
    /// The inequality being checked, in plain notation.
    pub anchor: String,
    pub lhs: f64,
    pub rhs: f64,
    pub se_lhs: f64,
    pub se_rhs: f64,
    /// `rhs - lhs`.
    pub margin: f64,
    pub verdict: Verdict,
    pub diagnostics: Diagnostics,
}

impl InequalityReport {
    pub fn new(name: &str, anchor: &str, lhs: f64, rhs: f64, se_lhs: f64, se_rhs: f64) -> Self {
        let mut r = Self {
            name: name.to_string(),
            anchor: anchor.to_string(),
            lhs,
            rhs,
            se_lhs,
            se_rhs,
            margin: rhs - lhs,
            verdict: Verdict::Inconclusive,
            diagnostics: Diagnostics::default(),
        };
        r.update_verdict();
        r
    }

    /// Combined standard error used by the verdict.
    pub fn combined_se(&self) -> f64 {
        self.diagnostics.se_margin.unwrap_or_else(|| self.se_lhs.hypot(self.se_rhs))
    }

    /// Recomputes the verdict from the numbers and the diagnostics: a low
    /// effective sample size or an unstable grid verdict make it
    /// inconclusive.
    pub fn update_verdict(&mut self) {
        self.margin = self.rhs - self.lhs;
        let mut v = verdict(self.lhs, self.rhs, self.combined_se());
        if self.diagnostics.ess_share.is_some_and(|s| s < LOW_ESS_SHARE) {
            v = Verdict::Inconclusive;
        }
        if self.diagnostics.grid_stable == Some(false) {
            v = Verdict::Inconclusive;
        }
        self.verdict = v;
    }

    pub fn with_value(mut self, key: &str, v: f64) -> Self {
        self.diagnostics.values.insert(key.to_string(), v);
        self
    }

    /// `|rhs - lhs|` within the pass band: the inequality is sharp at this
    /// resolution.
    pub fn near_equality(&self) -> bool {
        let slack = ROUNDING_SLACK * (self.lhs.abs() + self.rhs.abs());
        self.margin.is_finite() && self.margin.abs() <= PASS_SIGMAS * self.combined_se() + slack
    }

    /// Margin in units of the combined standard error.
    pub fn sigmas(&self) -> f64 {
        let se = self.combined_se();
        if se > 0.0 {
            self.margin / se
        } else if self.margin == 0.0 {
            0.0
        } else {
            self.margin.signum() * f64::INFINITY
        }
    }
}

/// Simulation and solver settings shared by the checks.
#[derive(Clone, Debug)]
pub struct CheckOptions {
    pub sim: SimConfig,
    pub solver: SolverOptions,
    /// Repeat checks with `rho_inf` on the LHS at `2 n_steps`.
    pub grid_refinement: bool,
    /// Compare `W_p^p` with `rhs^p` instead of `W_p` with `rhs`.
    pub power_scale: bool,
}

impl CheckOptions {
    pub fn new(sim: SimConfig) -> Self {
        let solver = SolverOptions { seed: sim.seed, ..SolverOptions::default() };
        Self { sim, solver, grid_refinement: true, power_scale: true }
    }

    pub(crate) fn refined(&self) -> Self {
        let mut o = self.clone();
        o.sim.n_steps *= 2;
        o
    }
}

/// A check to run as part of a batch.
pub type Job<'a> = Box<dyn Fn() -> Result<Vec<InequalityReport>> + Send + Sync + 'a>;

/// Runs independent checks concurrently; results keep the job order.
pub fn run_jobs(jobs: &[Job<'_>]) -> Vec<Result<Vec<InequalityReport>>> {
    par_map(jobs, |j| j())
}

/// Attaches the refined-grid run to `coarse` and sets the stability flag.
pub(crate) fn attach_refined(coarse: &mut InequalityReport, fine: &InequalityReport, n_steps: usize) {
    coarse.diagnostics.grid_stable = Some(coarse.verdict == fine.verdict);
    coarse.diagnostics.refined = Some(RefinedRun {
        n_steps,
        lhs: fine.lhs,
        rhs: fine.rhs,
        se_lhs: fine.se_lhs,
        se_rhs: fine.se_rhs,
        verdict: fine.verdict,
    });
    coarse.update_verdict();
}
