//! Monte Carlo experiment runner: repeated draw / assign / estimate cycles
//! with bias, spread, mean standard errors, and empirical coverage per
//! estimator, plus comparison of a finished report against a reference
//! table.
//!
//! Replications are independent tasks seeded from the master seed and the
//! replication index; aggregation walks the results in replication order
//! with compensated summation, so reports are byte-identical regardless of
//! worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::TrialData;
use crate::dgp::{self, DgpSpec};
use crate::error::{Error, Result};
use crate::estimators::{build_estimator, EstimatorKind};
use crate::rng::rng_from;
use crate::schemes::{assign_next, build_scheme, AssignmentState, SchemeSpec};
use crate::variance;

/// One full simulation experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub dgp: DgpSpec,
    pub scheme: SchemeSpec,
    pub reps: usize,
    pub alpha: f64,
    pub estimators: Vec<EstimatorKind>,
    pub master_seed: u64,
    /// Per-stratum balance values to use in place of the scheme's own
    /// (e.g. an empirical estimate for schemes without known theory).
    pub q_override: Option<Vec<f64>>,
}

impl ExperimentPlan {
    pub fn new(dgp: DgpSpec, scheme: SchemeSpec, reps: usize, master_seed: u64) -> Self {
        ExperimentPlan {
            dgp,
            scheme,
            reps,
            alpha: 0.05,
            estimators: EstimatorKind::all_six().to_vec(),
            master_seed,
            q_override: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidParameter("need at least one replication".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter("alpha must lie in (0,1)".into()));
        }
        if self.estimators.is_empty() {
            return Err(Error::InvalidParameter("no estimators selected".into()));
        }
        Ok(())
    }

    /// Per-stratum q values available to the variance recipes.
    pub fn q_values(&self) -> Option<Vec<f64>> {
        let k = self.dgp.model.num_strata();
        match &self.q_override {
            Some(q) if q.len() == 1 => Some(vec![q[0]; k]),
            Some(q) => Some(q.clone()),
            None => self.scheme.q_per_stratum(k),
        }
    }
}

/// Aggregates for one estimator across replications.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimator: String,
    pub reps_used: usize,
    pub failures: usize,
    /// Monte Carlo bias of the point estimator.
    pub bias: f64,
    /// Monte Carlo standard deviation of the point estimates.
    pub sd: f64,
    /// True only when a single replication made the spread undefined.
    pub sd_degenerate: bool,
    pub se_new: Option<f64>,
    pub se_ols: f64,
    pub se_hw: f64,
    pub cp_new: Option<f64>,
    pub cp_ols: f64,
    pub cp_hw: f64,
    pub bias_mc_se: f64,
    pub sd_mc_se: f64,
    pub cp_new_mc_se: Option<f64>,
    pub cp_ols_mc_se: f64,
    pub cp_hw_mc_se: f64,
}

/// A finished experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub model: usize,
    pub scheme: String,
    pub pi: f64,
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub master_seed: u64,
    pub true_tau: f64,
    pub true_tau_mc_se: f64,
    pub rows: Vec<EstimatorReport>,
}

struct RepOutcome {
    tau: Option<f64>,
    se_new: Option<f64>,
    se_ols: Option<f64>,
    se_hw: Option<f64>,
}

/// Neumaier compensated summation, so aggregation order never shows up in
/// the output bytes.
#[derive(Default, Clone, Copy)]
struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        self.comp += if self.sum.abs() >= v.abs() {
            (self.sum - t) + v
        } else {
            (v - t) + self.sum
        };
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.comp
    }
}

/// Reproduces the observed trial of one replication of a plan.
pub fn draw_replication(plan: &ExperimentPlan, rep: usize) -> Result<TrialData> {
    let trial = dgp::draw(&plan.dgp, crate::rng::derive_seed(plan.master_seed, 0xd6, rep as u64));
    let scheme = build_scheme(&plan.scheme);
    let mut state = AssignmentState::new();
    let mut r = rng_from(plan.master_seed, 0xa5, rep as u64);
    let profiles = trial.profiles();
    let mut assignments = Vec::with_capacity(profiles.len());
    for profile in &profiles {
        let a = assign_next(scheme.as_ref(), &mut state, profile, &mut r).map_err(|e| {
            match e {
                Error::ProfileMismatch(m) => Error::IncompatibleSchemeProfile(m),
                other => other,
            }
        })?;
        assignments.push(a);
    }
    Ok(trial.observe(&assignments, plan.scheme.pi_target))
}

/// Runs the experiment. Deterministic given the plan, independent of the
/// rayon worker count.
pub fn run(plan: &ExperimentPlan) -> Result<SimulationReport> {
    plan.validate()?;
    // Surface scheme/profile incompatibilities before spawning workers.
    {
        let scheme = build_scheme(&plan.scheme);
        let probe = dgp::draw(&DgpSpec { n: 1, ..plan.dgp }, 0);
        let profiles = probe.profiles();
        scheme
            .validate_profile(&profiles[0])
            .map_err(|e| match e {
                Error::ProfileMismatch(m) => Error::IncompatibleSchemeProfile(m),
                other => other,
            })?;
    }

    let q = plan.q_values();
    let truth = dgp::true_tau(&plan.dgp);
    let z = variance::z_quantile(plan.alpha);
    let kinds = &plan.estimators;

    let reps: Vec<Vec<RepOutcome>> = (0..plan.reps)
        .into_par_iter()
        .map(|rep| {
            let data = match draw_replication(plan, rep) {
                Ok(d) => d,
                // A malformed replication (e.g. an empty stratum under
                // simple randomization) fails every estimator.
                Err(_) => {
                    return kinds
                        .iter()
                        .map(|_| RepOutcome {
                            tau: None,
                            se_new: None,
                            se_ols: None,
                            se_hw: None,
                        })
                        .collect()
                }
            };
            kinds
                .iter()
                .map(|kind| {
                    let est = build_estimator(kind);
                    let tau = match est.estimate(&data) {
                        Ok(t) => t,
                        Err(_) => {
                            return RepOutcome {
                                tau: None,
                                se_new: None,
                                se_ols: None,
                                se_hw: None,
                            }
                        }
                    };
                    let se_new = match variance::se_new(kind, &data, q.as_deref()) {
                        Ok(se) => Some(se),
                        Err(_) => None,
                    };
                    let (se_ols, se_hw) = match variance::se_classical(kind, &data) {
                        Ok(pair) => (Some(pair.0), Some(pair.1)),
                        Err(_) => (None, None),
                    };
                    RepOutcome { tau: Some(tau), se_new, se_ols, se_hw }
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::with_capacity(kinds.len());
    for (ix, kind) in kinds.iter().enumerate() {
        let mut taus: Vec<f64> = Vec::with_capacity(plan.reps);
        let mut sum_se_new = Kahan::default();
        let mut n_se_new = 0usize;
        let mut cover_new = 0usize;
        let mut sum_se_ols = Kahan::default();
        let mut sum_se_hw = Kahan::default();
        let mut n_se_cls = 0usize;
        let mut cover_ols = 0usize;
        let mut cover_hw = 0usize;
        let mut failures = 0usize;
        for rep in &reps {
            let o = &rep[ix];
            let Some(tau) = o.tau else {
                failures += 1;
                continue;
            };
            taus.push(tau);
            if let Some(se) = o.se_new {
                sum_se_new.add(se);
                n_se_new += 1;
                if (tau - truth.value).abs() <= z * se {
                    cover_new += 1;
                }
            }
            if let (Some(ols), Some(hw)) = (o.se_ols, o.se_hw) {
                sum_se_ols.add(ols);
                sum_se_hw.add(hw);
                n_se_cls += 1;
                if (tau - truth.value).abs() <= z * ols {
                    cover_ols += 1;
                }
                if (tau - truth.value).abs() <= z * hw {
                    cover_hw += 1;
                }
            }
        }
        let used = taus.len();
        if used == 0 {
            return Err(Error::InvalidParameter(format!(
                "estimator {} failed in every replication",
                kind.name()
            )));
        }
        let mut mean = Kahan::default();
        for &t in &taus {
            mean.add(t);
        }
        let mean = mean.total() / used as f64;
        let (sd, sd_degenerate) = if used >= 2 {
            let mut ss = Kahan::default();
            for &t in &taus {
                ss.add((t - mean) * (t - mean));
            }
            ((ss.total() / (used as f64 - 1.0)).sqrt(), false)
        } else {
            (0.0, true)
        };
        let bias = mean - truth.value;
        let cp = |covered: usize, total: usize| covered as f64 / total as f64;
        let cp_se = |p: f64, total: usize| (p * (1.0 - p) / total as f64).sqrt();
        let (se_new, cp_new, cp_new_mc_se) = if n_se_new > 0 {
            let p = cp(cover_new, n_se_new);
            (
                Some(sum_se_new.total() / n_se_new as f64),
                Some(p),
                Some(cp_se(p, n_se_new)),
            )
        } else {
            (None, None, None)
        };
        if n_se_cls == 0 {
            return Err(Error::InvalidParameter(format!(
                "classical standard errors failed in every replication for {}",
                kind.name()
            )));
        }
        let p_ols = cp(cover_ols, n_se_cls);
        let p_hw = cp(cover_hw, n_se_cls);
        rows.push(EstimatorReport {
            estimator: kind.name().to_string(),
            reps_used: used,
            failures,
            bias,
            sd,
            sd_degenerate,
            se_new,
            se_ols: sum_se_ols.total() / n_se_cls as f64,
            se_hw: sum_se_hw.total() / n_se_cls as f64,
            cp_new,
            cp_ols: p_ols,
            cp_hw: p_hw,
            bias_mc_se: sd / (used as f64).sqrt(),
            sd_mc_se: if sd_degenerate {
                0.0
            } else {
                sd / (2.0 * (used as f64 - 1.0)).sqrt()
            },
            cp_new_mc_se,
            cp_ols_mc_se: cp_se(p_ols, n_se_cls),
            cp_hw_mc_se: cp_se(p_hw, n_se_cls),
        });
    }

    Ok(SimulationReport {
        schema_version: 1,
        model: plan.dgp.model.index(),
        scheme: build_scheme(&plan.scheme).name().to_string(),
        pi: plan.scheme.pi_target,
        n: plan.dgp.n,
        reps: plan.reps,
        alpha: plan.alpha,
        master_seed: plan.master_seed,
        true_tau: truth.value,
        true_tau_mc_se: truth.mc_se,
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

impl SimulationReport {
    pub const CSV_HEADER: &'static str = "model,scheme,pi,n,reps,alpha,seed,estimator,\
        reps_used,failures,bias,sd,se_new,se_ols,se_hw,cp_new,cp_ols,cp_hw,\
        bias_mc_se,sd_mc_se,cp_new_mc_se,cp_ols_mc_se,cp_hw_mc_se,sd_degenerate";

    /// Rows in CSV form (shortest round-trip float formatting, `-` for
    /// unavailable cells).
    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    self.model,
                    self.scheme,
                    self.pi,
                    self.n,
                    self.reps,
                    self.alpha,
                    self.master_seed,
                    r.estimator,
                    r.reps_used,
                    r.failures,
                    r.bias,
                    r.sd,
                    fmt_opt(r.se_new),
                    r.se_ols,
                    r.se_hw,
                    fmt_opt(r.cp_new),
                    r.cp_ols,
                    r.cp_hw,
                    r.bias_mc_se,
                    r.sd_mc_se,
                    fmt_opt(r.cp_new_mc_se),
                    r.cp_ols_mc_se,
                    r.cp_hw_mc_se,
                    r.sd_degenerate
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for row in self.csv_rows() {
            out.push_str(&row);
            out.push('\n');
        }
        out
    }

    pub fn row(&self, estimator: &str) -> Option<&EstimatorReport> {
        self.rows.iter().find(|r| r.estimator == estimator)
    }
}

// ---------------------------------------------------------------------------
// Reference-table comparison
// ---------------------------------------------------------------------------

/// One row of a reference results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRow {
    pub model: usize,
    pub scheme: String,
    pub pi: f64,
    pub estimator: String,
    pub bias: f64,
    pub sd: f64,
    pub se_new: Option<f64>,
    pub se_ols: f64,
    pub se_hw: f64,
    pub cp_new: Option<f64>,
    pub cp_ols: f64,
    pub cp_hw: f64,
}

/// Absolute tolerances per column family.
#[derive(Debug, Clone, Copy)]
pub struct CompareTolerances {
    pub bias: f64,
    pub sd: f64,
    pub se: f64,
    pub cp: f64,
}

impl Default for CompareTolerances {
    /// Sized for a 2000-replication run against a 10^4-replication
    /// reference: roughly three combined Monte Carlo standard errors on the
    /// noisiest cells.
    fn default() -> Self {
        CompareTolerances { bias: 0.15, sd: 0.12, se: 0.12, cp: 0.04 }
    }
}

#[derive(Debug, Clone)]
pub struct CellDiff {
    pub model: usize,
    pub scheme: String,
    pub pi: f64,
    pub estimator: String,
    pub column: &'static str,
    pub reference: Option<f64>,
    pub actual: Option<f64>,
    pub abs_diff: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default)]
pub struct CompareSummary {
    pub cells: Vec<CellDiff>,
}

impl CompareSummary {
    pub fn all_pass(&self) -> bool {
        self.cells.iter().all(|c| c.pass)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CellDiff> {
        self.cells.iter().filter(|c| !c.pass)
    }
}

fn key_of(model: usize, scheme: &str, pi: f64, estimator: &str) -> String {
    format!("{model}|{scheme}|{:.4}|{estimator}", pi)
}

/// Per-cell absolute differences of finished reports against a reference
/// table. Every reference row must be matched by a report row; unavailable
/// cells must be unavailable on both sides.
pub fn compare(
    reports: &[SimulationReport],
    reference: &[ReferenceRow],
    tol: &CompareTolerances,
) -> Result<CompareSummary> {
    if reference.is_empty() {
        return Err(Error::KeyMismatch("reference table is empty".into()));
    }
    let mut summary = CompareSummary::default();
    for r in reference {
        let report = reports
            .iter()
            .find(|rep| {
                rep.model == r.model
                    && rep.scheme == r.scheme
                    && (rep.pi - r.pi).abs() < 5e-5
            })
            .ok_or_else(|| {
                Error::KeyMismatch(format!(
                    "no report for model {} scheme {} pi {:.4}",
                    r.model, r.scheme, r.pi
                ))
            })?;
        let row = report.row(&r.estimator).ok_or_else(|| {
            Error::KeyMismatch(format!(
                "report lacks estimator {} for {}",
                r.estimator,
                key_of(r.model, &r.scheme, r.pi, &r.estimator)
            ))
        })?;
        let mut push = |column: &'static str,
                        reference: Option<f64>,
                        actual: Option<f64>,
                        tolerance: f64| {
            let (abs_diff, pass) = match (reference, actual) {
                (Some(a), Some(b)) => {
                    let d = (a - b).abs();
                    (Some(d), d <= tolerance)
                }
                (None, None) => (None, true),
                _ => (None, false),
            };
            summary.cells.push(CellDiff {
                model: r.model,
                scheme: r.scheme.clone(),
                pi: r.pi,
                estimator: r.estimator.clone(),
                column,
                reference,
                actual,
                abs_diff,
                tolerance,
                pass,
            });
        };
        push("bias", Some(r.bias), Some(row.bias), tol.bias);
        push("sd", Some(r.sd), Some(row.sd), tol.sd);
        push("se_new", r.se_new, row.se_new, tol.se);
        push("se_ols", Some(r.se_ols), Some(row.se_ols), tol.se);
        push("se_hw", Some(r.se_hw), Some(row.se_hw), tol.se);
        push("cp_new", r.cp_new, row.cp_new, tol.cp);
        push("cp_ols", Some(r.cp_ols), Some(row.cp_ols), tol.cp);
        push("cp_hw", Some(r.cp_hw), Some(row.cp_hw), tol.cp);
    }
    Ok(summary)
}

/// Parses a reference table in CSV form with the header
/// `model,scheme,pi,estimator,bias,sd,se_new,se_ols,se_hw,cp_new,cp_ols,cp_hw`
/// and `-` marking unavailable cells.
pub fn parse_reference_csv(text: &str) -> Result<Vec<ReferenceRow>> {
    let mut rows = Vec::new();
    let mut lines = text.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, l)) if l.trim().is_empty() || l.trim_start().starts_with('#') => {}
            Some((_, l)) => break l,
            None => return Err(Error::KeyMismatch("reference table is empty".into())),
        }
    };
    let expected = "model,scheme,pi,estimator,bias,sd,se_new,se_ols,se_hw,cp_new,cp_ols,cp_hw";
    if header.trim() != expected {
        return Err(Error::InvalidParameter(format!(
            "reference header must be '{expected}'"
        )));
    }
    for (lineno, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 12 {
            return Err(Error::InvalidParameter(format!(
                "reference line {}: expected 12 fields, got {}",
                lineno + 1,
                f.len()
            )));
        }
        let bad = |what: &str| {
            Error::InvalidParameter(format!("reference line {}: bad {what}", lineno + 1))
        };
        let num = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let opt = |s: &str, what: &str| -> Result<Option<f64>> {
            if s == "-" {
                Ok(None)
            } else {
                num(s, what).map(Some)
            }
        };
        rows.push(ReferenceRow {
            model: f[0].parse().map_err(|_| bad("model"))?,
            scheme: f[1].to_string(),
            pi: num(f[2], "pi")?,
            estimator: f[3].to_string(),
            bias: num(f[4], "bias")?,
            sd: num(f[5], "sd")?,
            se_new: opt(f[6], "se_new")?,
            se_ols: num(f[7], "se_ols")?,
            se_hw: num(f[8], "se_hw")?,
            cp_new: opt(f[9], "cp_new")?,
            cp_ols: num(f[10], "cp_ols")?,
            cp_hw: num(f[11], "cp_hw")?,
        });
    }
    Ok(rows)
}
