//! Trial data containers and stratum bookkeeping.
//!
//! [`TrialData`] holds one trial's observed outcomes, binary assignments,
//! dense stratum labels in `1..=K`, and an `n x p` matrix of additional
//! baseline covariates. All types are immutable after construction and safe
//! to share across parallel workers.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Observed data for one two-arm trial.
#[derive(Debug, Clone)]
pub struct TrialData {
    /// Observed outcomes, length n.
    pub y: Vec<f64>,
    /// Binary assignments (1 = treatment), length n.
    pub a: Vec<u8>,
    /// Stratum labels in `1..=K`, length n.
    pub b: Vec<usize>,
    /// Additional baseline covariates, n rows, p >= 0 columns.
    pub x: Array2<f64>,
    /// Target treatment proportion in (0, 1).
    pub pi_target: f64,
}

impl TrialData {
    pub fn new(y: Vec<f64>, a: Vec<u8>, b: Vec<usize>, x: Array2<f64>, pi_target: f64) -> Self {
        TrialData { y, a, b, x, pi_target }
    }

    /// Constructs and rejects data with any error-level violation.
    pub fn checked(
        y: Vec<f64>,
        a: Vec<u8>,
        b: Vec<usize>,
        x: Array2<f64>,
        pi_target: f64,
    ) -> Result<Self> {
        let data = TrialData::new(y, a, b, x, pi_target);
        let report = validate(&data);
        if let Some(v) = report.errors().next() {
            return Err(Error::InvalidData(v.message.clone()));
        }
        Ok(data)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of covariate columns.
    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Number of strata, taken as the largest label present.
    pub fn num_strata(&self) -> usize {
        self.b.iter().copied().max().unwrap_or(0)
    }

    pub fn n_treated(&self) -> usize {
        self.a.iter().filter(|&&a| a == 1).count()
    }

    /// Outcome vector as an array, for regression design assembly.
    pub fn y_array(&self) -> Array1<f64> {
        Array1::from_vec(self.y.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

/// One violated invariant found by [`validate`].
#[derive(Debug, Clone)]
pub struct Violation {
    pub severity: Severity,
    pub message: String,
}

/// Report-style validation output; empty means valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors().next().is_none()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Violation> {
        self.violations
            .iter()
            .filter(|v| v.severity == Severity::Warning)
    }

    fn error(&mut self, message: String) {
        self.violations.push(Violation { severity: Severity::Error, message });
    }

    fn warning(&mut self, message: String) {
        self.violations.push(Violation { severity: Severity::Warning, message });
    }
}

/// Checks every structural invariant of `data` and reports the violations.
///
/// A covariate column that is constant within every stratum is flagged as a
/// warning: such a column is linearly representable by the stratum indicators
/// and must be removed by the caller before fitting stratum-adjusted
/// regressions.
pub fn validate(data: &TrialData) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = data.y.len();

    if data.a.len() != n || data.b.len() != n || data.x.nrows() != n {
        report.error(format!(
            "length mismatch: y has {n} entries, a has {}, b has {}, x has {} rows",
            data.a.len(),
            data.b.len(),
            data.x.nrows()
        ));
        return report;
    }
    if n == 0 {
        report.error("trial has no units".to_string());
        return report;
    }

    if !(data.pi_target > 0.0 && data.pi_target < 1.0) {
        report.error(format!(
            "target proportion must lie in (0,1), got {}",
            data.pi_target
        ));
    }

    for (i, &a) in data.a.iter().enumerate() {
        if a > 1 {
            report.error(format!("assignment not binary: unit {i} has value {a}"));
            break;
        }
    }

    let k = data.num_strata();
    if data.b.iter().any(|&b| b == 0) {
        report.error("stratum labels must start at 1".to_string());
    } else {
        let mut seen = vec![false; k + 1];
        for &b in &data.b {
            seen[b] = true;
        }
        for (label, present) in seen.iter().enumerate().skip(1) {
            if !present {
                report.error(format!("empty stratum: label {label} never occurs"));
            }
        }
    }

    for j in 0..data.x.ncols() {
        let col = data.x.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            report.error(format!("covariate column {j} is constant"));
            continue;
        }
        if !report.is_valid() {
            continue;
        }
        let mut constant_within_all = true;
        for stratum in 1..=k {
            let mut it = data
                .b
                .iter()
                .zip(col.iter())
                .filter(|(&b, _)| b == stratum)
                .map(|(_, &v)| v);
            if let Some(v0) = it.next() {
                if it.any(|v| v != v0) {
                    constant_within_all = false;
                    break;
                }
            }
        }
        if constant_within_all {
            report.warning(format!(
                "covariate column {j} is constant within every stratum; \
                 it is collinear with the stratum indicators and should be removed"
            ));
        }
    }

    if report.is_valid() {
        let treated = data.n_treated();
        if treated == 0 || treated == n {
            report.error("one arm is empty in the pooled sample".to_string());
        }
    }

    report
}

/// Per-stratum counts and arm means for a working response and covariates.
#[derive(Debug, Clone)]
pub struct StratumSummary {
    pub k: usize,
    pub n_k: usize,
    pub n_k1: usize,
    pub n_k0: usize,
    /// Stratum share n_k / n.
    pub p_nk: f64,
    /// Realized treated proportion n_k1 / n_k.
    pub pi_k: f64,
    pub rbar_k1: f64,
    pub rbar_k0: f64,
    /// Stratum mean of each covariate column (all units).
    pub xbar_k: Vec<f64>,
    pub xbar_k1: Vec<f64>,
    pub xbar_k0: Vec<f64>,
}

/// Pooled (all-strata) counts and means returned alongside the summaries.
#[derive(Debug, Clone)]
pub struct PooledSummary {
    pub n: usize,
    pub n1: usize,
    pub n0: usize,
    pub rbar_1: f64,
    pub rbar_0: f64,
    pub xbar: Vec<f64>,
    pub xbar_1: Vec<f64>,
    pub xbar_0: Vec<f64>,
}

/// Per-stratum and pooled arm means of the working response `r` and of every
/// covariate column.
///
/// Errors with [`Error::EmptyArmInStratum`] when any stratum lacks treated or
/// control units, which signals that stratified estimators are undefined.
pub fn summarize(data: &TrialData, r: &[f64]) -> Result<(Vec<StratumSummary>, PooledSummary)> {
    let n = data.n();
    if r.len() != n {
        return Err(Error::InvalidData(format!(
            "working response has length {} but the trial has {n} units",
            r.len()
        )));
    }
    let k = data.num_strata();
    let p = data.p();

    let mut summaries = Vec::with_capacity(k);
    let mut pooled = PooledSummary {
        n,
        n1: 0,
        n0: 0,
        rbar_1: 0.0,
        rbar_0: 0.0,
        xbar: vec![0.0; p],
        xbar_1: vec![0.0; p],
        xbar_0: vec![0.0; p],
    };

    for stratum in 1..=k {
        let mut s = StratumSummary {
            k: stratum,
            n_k: 0,
            n_k1: 0,
            n_k0: 0,
            p_nk: 0.0,
            pi_k: 0.0,
            rbar_k1: 0.0,
            rbar_k0: 0.0,
            xbar_k: vec![0.0; p],
            xbar_k1: vec![0.0; p],
            xbar_k0: vec![0.0; p],
        };
        for i in 0..n {
            if data.b[i] != stratum {
                continue;
            }
            s.n_k += 1;
            for j in 0..p {
                s.xbar_k[j] += data.x[[i, j]];
            }
            if data.a[i] == 1 {
                s.n_k1 += 1;
                s.rbar_k1 += r[i];
                for j in 0..p {
                    s.xbar_k1[j] += data.x[[i, j]];
                }
            } else {
                s.n_k0 += 1;
                s.rbar_k0 += r[i];
                for j in 0..p {
                    s.xbar_k0[j] += data.x[[i, j]];
                }
            }
        }
        if s.n_k1 == 0 || s.n_k0 == 0 {
            return Err(Error::EmptyArmInStratum { stratum });
        }
        s.p_nk = s.n_k as f64 / n as f64;
        s.pi_k = s.n_k1 as f64 / s.n_k as f64;
        s.rbar_k1 /= s.n_k1 as f64;
        s.rbar_k0 /= s.n_k0 as f64;
        for j in 0..p {
            s.xbar_k[j] /= s.n_k as f64;
            s.xbar_k1[j] /= s.n_k1 as f64;
            s.xbar_k0[j] /= s.n_k0 as f64;
        }

        pooled.n1 += s.n_k1;
        pooled.n0 += s.n_k0;
        pooled.rbar_1 += s.n_k1 as f64 * s.rbar_k1;
        pooled.rbar_0 += s.n_k0 as f64 * s.rbar_k0;
        for j in 0..p {
            pooled.xbar[j] += s.n_k as f64 * s.xbar_k[j];
            pooled.xbar_1[j] += s.n_k1 as f64 * s.xbar_k1[j];
            pooled.xbar_0[j] += s.n_k0 as f64 * s.xbar_k0[j];
        }
        summaries.push(s);
    }

    pooled.rbar_1 /= pooled.n1 as f64;
    pooled.rbar_0 /= pooled.n0 as f64;
    for j in 0..p {
        pooled.xbar[j] /= n as f64;
        pooled.xbar_1[j] /= pooled.n1 as f64;
        pooled.xbar_0[j] /= pooled.n0 as f64;
    }

    Ok((summaries, pooled))
}
