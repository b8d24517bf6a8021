//! Runs a resolved experiment and writes its report files.

use crate::config::{Experiment, ResolvedCheck, Task};
use motc::diffusion::{simulate, Record};
use motc::verify::{
    check_composite, check_endpoint_talagrand, check_gradient_estimate, check_logsobolev, check_marginal_contraction,
    check_nonconvex, check_pathspace_talagrand, check_poincare, check_sff_asymptotics, check_variable_coefficient,
    check_variance_expansion, explicit_constants, InequalityReport, Verdict,
};
use serde::Serialize;
use serde_json::{json, Value};
use std::fs;
use std::io::BufWriter;
use std::path::Path;

/// Result of one configured check.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub label: String,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub reports: Vec<InequalityReport>,
    /// Fitted curves and constants that are not inequalities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
    pub errors: usize,
}

impl Counts {
    pub fn of(outcomes: &[CheckOutcome]) -> Self {
        let mut c = Counts::default();
        for o in outcomes {
            if o.error.is_some() {
                c.errors += 1;
            }
            for r in &o.reports {
                match r.verdict {
                    Verdict::Pass => c.pass += 1,
                    Verdict::Fail => c.fail += 1,
                    Verdict::Inconclusive => c.inconclusive += 1,
                }
            }
        }
        c
    }

    /// 0 when nothing failed, 1 on a failed check, 2 when a check could
    /// not run.
    pub fn exit_code(&self) -> u8 {
        if self.errors > 0 {
            2
        } else if self.fail > 0 {
            1
        } else {
            0
        }
    }
}

fn run_task(c: &ResolvedCheck, m: &motc::geometry::ModelManifold) -> motc::Result<(Vec<InequalityReport>, Option<Value>)> {
    let o = &c.opts;
    let one = |r: motc::Result<InequalityReport>| r.map(|r| (vec![r], None));
    match &c.task {
        Task::EndpointTalagrand { o: x, f } => one(check_endpoint_talagrand(m, x, f, o)),
        Task::PathspaceTalagrand { start, density } => one(check_pathspace_talagrand(m, start, density, o)),
        Task::Contraction { input, p } => one(check_marginal_contraction(m, input, *p, o)),
        Task::Composite { points, masses, density, c_mu } => check_composite(m, points, masses, density, *c_mu, o).map(|r| (r, None)),
        Task::VariableCoefficient { start, density, pair } => {
            check_variable_coefficient(m, start, density, *pair, o).map(|r| (r, None))
        }
        Task::Nonconvex(input) => check_nonconvex(m, input, o).map(|r| (r, None)),
        Task::LogSobolev { o: x, f } => one(check_logsobolev(m, x, f, o)),
        Task::Poincare { o: x, f } => one(check_poincare(m, x, f, o)),
        Task::Gradient { o: x, f, h } => one(check_gradient_estimate(m, x, f, *h, o)),
        Task::Sff { o: x, f, opts } => {
            let s = check_sff_asymptotics(m, x, f, opts)?;
            let details = serde_json::to_value(&s).ok();
            Ok((vec![s.report()], details))
        }
        Task::Variance { o: x, f, opts } => {
            let v = check_variance_expansion(m, x, f, opts)?;
            let details = serde_json::to_value(&v).ok();
            Ok((v.reports(), details))
        }
        Task::ProfileConstants { name, profile, t } => {
            let s = profile.summary();
            let k = m.curvature_constants().k.max(0.0);
            let z = m.drift_sup().unwrap_or(f64::INFINITY);
            let cons = explicit_constants(profile, k, z, *t);
            let exact = |name: &str, anchor: &str, lhs: f64, rhs: f64| InequalityReport::new(name, anchor, lhs, rhs, 0.0, 0.0);
            let d = profile.d as f64;
            let reports = vec![
                exact("profile-alpha", "r/d <= alpha", profile.r / d, s.alpha),
                exact("profile-phi-r", "phi(r) <= d r / 2", s.phi_r, d * profile.r / 2.0),
                exact("profile-dphi-0", "|phi'(0) - 1| <= 1e-8", (s.dphi_0 - 1.0).abs(), 1e-8),
            ];
            let details = json!({ "profile": name, "summary": s, "constants": cons, "T": t, "k": k, "z_sup": z });
            Ok((reports, Some(details)))
        }
    }
}

pub fn run_checks(exp: &Experiment) -> Vec<CheckOutcome> {
    motc::par_map(&exp.checks, |c| {
        let (reports, details, error) = match run_task(c, &exp.manifold) {
            Ok((r, d)) => (r, d, None),
            Err(e) => (Vec::new(), None, Some(e.to_string())),
        };
        CheckOutcome { label: c.label.clone(), kind: c.kind.clone(), error, reports, details }
    })
}

/// The deterministic part of the output: no timestamps or host data.
pub fn report_json(exp: &Experiment, outcomes: &[CheckOutcome]) -> Value {
    let m = &exp.manifold;
    let k = m.curvature_constants();
    json!({
        "name": exp.name,
        "manifold": { "kind": m.kind().name(), "dim": m.dim(), "K": k.k },
        "sim": exp.sim,
        "summary": Counts::of(outcomes),
        "checks": outcomes,
    })
}

pub const SUMMARY_HEADER: [&str; 12] =
    ["label", "type", "name", "verdict", "near_equality", "lhs", "rhs", "se", "margin", "sigmas", "grid_stable", "error"];

/// One row per report; a check that could not run gets one row with its error.
pub fn summary_rows(outcomes: &[CheckOutcome]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for o in outcomes {
        if let Some(e) = &o.error {
            rows.push(vec![o.label.clone(), o.kind.clone(), String::new(), "error".into(), String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), String::new(), e.clone()]);
        }
        for r in &o.reports {
            rows.push(vec![
                o.label.clone(),
                o.kind.clone(),
                r.name.clone(),
                r.verdict.as_str().into(),
                r.near_equality().to_string(),
                fmt_f(r.lhs),
                fmt_f(r.rhs),
                fmt_f(r.combined_se()),
                fmt_f(r.margin),
                fmt_f(r.sigmas()),
                r.diagnostics.grid_stable.map(|g| g.to_string()).unwrap_or_default(),
                String::new(),
            ]);
        }
    }
    rows
}

fn fmt_f(x: f64) -> String {
    format!("{x:e}")
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()
}

/// Simulates and writes the configured raw ensembles.
pub fn write_ensembles(exp: &Experiment, dir: &Path) -> Result<Vec<String>, String> {
    let mut written = Vec::new();
    for job in &exp.ensembles {
        let record = if job.full { Record::Full } else { Record::Endpoint };
        let ens = simulate(&exp.manifold, &job.start, &job.sim, &record).map_err(|e| format!("ensemble {}: {e}", job.file))?;
        let path = dir.join(&job.file);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
        }
        let file = fs::File::create(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut w = BufWriter::new(file);
        let res = if job.csv { motc::io::write_ensemble_csv(&mut w, &ens) } else { motc::io::write_ensemble(&mut w, &ens) };
        res.map_err(|e| format!("{}: {e}", path.display()))?;
        written.push(job.file.clone());
    }
    Ok(written)
}

/// Writes `report.json`, `summary.csv`, the ensembles and `metadata.json`.
pub fn write_outputs(exp: &Experiment, outcomes: &[CheckOutcome], dir: &Path, mut metadata: Value) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))?;
    let report = report_json(exp, outcomes);
    let text = serde_json::to_string_pretty(&report).map_err(|e| e.to_string())? + "\n";
    fs::write(dir.join("report.json"), text).map_err(|e| format!("report.json: {e}"))?;
    write_csv(&dir.join("summary.csv"), &SUMMARY_HEADER, &summary_rows(outcomes)).map_err(|e| format!("summary.csv: {e}"))?;
    let files = write_ensembles(exp, dir)?;
    metadata["ensembles"] = json!(files);
    let text = serde_json::to_string_pretty(&metadata).map_err(|e| e.to_string())? + "\n";
    fs::write(dir.join("metadata.json"), text).map_err(|e| format!("metadata.json: {e}"))?;
    Ok(())
}
