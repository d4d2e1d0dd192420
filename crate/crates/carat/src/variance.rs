//! Sample-analog variance components, estimator-specific standard error
//! recipes, classical OLS / sandwich standard errors, and confidence
//! intervals.
//!
//! The component estimators follow the displayed sample analogs literally:
//! within-arm stratum variances divide by the arm count, not the count minus
//! one. A dof-corrected variant is available through
//! [`components_with_options`] for sensitivity checks.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{summarize, TrialData};
use crate::error::{Error, Result};
use crate::estimators::{build_estimator, designs::TREATMENT_COL, EstimatorKind};
use crate::linalg;

/// The four sample-analog variance components for one residual construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VarianceComponents {
    /// Within-stratum component.
    pub tilde: f64,
    /// Between-stratum treatment-effect heterogeneity component.
    pub h: f64,
    /// Allocation-imbalance component; needs per-stratum q.
    pub a_term: Option<f64>,
    /// Unequal-allocation penalty; needs q unless the target allocation is
    /// exactly 1/2, where the prefactor vanishes identically.
    pub pi_term: Option<f64>,
    /// The per-stratum q values used, when supplied.
    pub q_used: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DofMode {
    /// Divide within-arm variances by the arm count (the displayed analogs).
    #[default]
    Plain,
    /// Divide by count minus one, for sensitivity checks.
    Corrected,
}

/// Evaluates the four displayed sample analogs for working response `r`.
///
/// `q` supplies per-stratum balance parameters (length K); when absent the
/// q-dependent components are left out.
pub fn components(
    data: &TrialData,
    r: &[f64],
    q: Option<&[f64]>,
) -> Result<VarianceComponents> {
    components_with_options(data, r, q, DofMode::Plain)
}

pub fn components_with_options(
    data: &TrialData,
    r: &[f64],
    q: Option<&[f64]>,
    dof: DofMode,
) -> Result<VarianceComponents> {
    let (summaries, pooled) = summarize(data, r)?;
    let k = summaries.len();
    if let Some(qs) = q {
        if qs.len() != k {
            return Err(Error::InvalidParameter(format!(
                "expected {k} per-stratum q values, got {}",
                qs.len()
            )));
        }
        for (i, &qk) in qs.iter().enumerate() {
            let upper = data.pi_target * (1.0 - data.pi_target);
            if !(0.0..=upper + 1e-12).contains(&qk) {
                return Err(Error::InvalidParameter(format!(
                    "q for stratum {} must lie in [0, {upper}], got {qk}",
                    i + 1
                )));
            }
        }
    }
    let pi = data.pi_target;
    let n = data.n();

    // Within-arm sums of squared deviations per stratum.
    let mut ss1 = vec![0.0f64; k];
    let mut ss0 = vec![0.0f64; k];
    for i in 0..n {
        let s = &summaries[data.b[i] - 1];
        if data.a[i] == 1 {
            let d = r[i] - s.rbar_k1;
            ss1[data.b[i] - 1] += d * d;
        } else {
            let d = r[i] - s.rbar_k0;
            ss0[data.b[i] - 1] += d * d;
        }
    }

    let mut tilde = 0.0;
    let mut h = 0.0;
    let mut a_sum = 0.0;
    let mut pi_sum = 0.0;
    for (j, s) in summaries.iter().enumerate() {
        let (d1, d0) = match dof {
            DofMode::Plain => (s.n_k1 as f64, s.n_k0 as f64),
            DofMode::Corrected => {
                if s.n_k1 < 2 || s.n_k0 < 2 {
                    return Err(Error::InsufficientStratumOccupancy {
                        stratum: s.k,
                        needed: 2,
                    });
                }
                ((s.n_k1 - 1) as f64, (s.n_k0 - 1) as f64)
            }
        };
        tilde += s.p_nk * (ss1[j] / d1) / pi + s.p_nk * (ss0[j] / d0) / (1.0 - pi);

        let dev1 = s.rbar_k1 - pooled.rbar_1;
        let dev0 = s.rbar_k0 - pooled.rbar_0;
        let contrast = dev1 - dev0;
        h += s.p_nk * contrast * contrast;

        if let Some(qs) = q {
            let lever = dev1 / pi + dev0 / (1.0 - pi);
            a_sum += s.p_nk * qs[j] * lever * lever;
            pi_sum += s.p_nk * qs[j] * contrast * contrast;
        }
    }

    let pi_prefactor = {
        let d = 1.0 - 2.0 * pi;
        d * d / (pi * pi * (1.0 - pi) * (1.0 - pi))
    };
    let a_term = q.map(|_| a_sum);
    let pi_term = if pi == 0.5 {
        Some(0.0)
    } else {
        q.map(|_| pi_prefactor * pi_sum)
    };

    Ok(VarianceComponents {
        tilde,
        h,
        a_term,
        pi_term,
        q_used: q.map(<[f64]>::to_vec),
    })
}

/// The proposed standard error for an estimator kind:
/// sqrt((sum of the recipe's components) / n).
///
/// Errors with [`Error::MissingQ`] when the recipe needs a q-dependent
/// component and no q is available; those are the pairs for which no
/// consistent variance estimator is known.
pub fn se_new(kind: &EstimatorKind, data: &TrialData, q: Option<&[f64]>) -> Result<f64> {
    let est = build_estimator(kind);
    let r = est.working_residuals(data)?;
    let comp = components(data, &r, q)?;
    let recipe = est.recipe();
    let mut total = comp.tilde + comp.h;
    if recipe.a_term {
        total += comp.a_term.ok_or(Error::MissingQ)?;
    }
    if recipe.pi_term {
        total += comp.pi_term.ok_or(Error::MissingQ)?;
    }
    Ok((total / data.n() as f64).sqrt())
}

/// Classical OLS and Huber-White standard errors of the treatment
/// coefficient in the estimator's defining regression.
pub fn se_classical(kind: &EstimatorKind, data: &TrialData) -> Result<(f64, f64)> {
    let est = build_estimator(kind);
    let design = est.design(data)?;
    let fit = linalg::fit(&design, &data.y_array())?;
    let c = TREATMENT_COL;
    let se_ols = linalg::ols_vcov(&fit)[[c, c]].max(0.0).sqrt();
    let se_hw = linalg::hw_vcov(&fit, &design)[[c, c]].max(0.0).sqrt();
    Ok((se_ols, se_hw))
}

/// Standard normal quantile z_{1 - alpha/2}.
pub fn z_quantile(alpha: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    normal.inverse_cdf(1.0 - alpha / 2.0)
}

/// Normal-quantile confidence interval tau_hat +/- z se.
pub fn confidence_interval(tau_hat: f64, se: f64, alpha: f64) -> (f64, f64) {
    let z = z_quantile(alpha);
    (tau_hat - z * se, tau_hat + z * se)
}

/// Point estimate with every available standard error and the
/// normal-quantile interval built on the proposed one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResult {
    pub kind: EstimatorKind,
    pub tau_hat: f64,
    pub se_new: Option<f64>,
    pub se_ols: f64,
    pub se_hw: f64,
    pub ci_new: Option<(f64, f64)>,
    pub n: usize,
}

/// Full estimation pipeline for one of the six named estimators.
pub fn estimate(
    kind: &EstimatorKind,
    data: &TrialData,
    q: Option<&[f64]>,
    alpha: f64,
) -> Result<EstimateResult> {
    let est = build_estimator(kind);
    let tau_hat = est.estimate(data)?;
    let se_new = match se_new(kind, data, q) {
        Ok(se) => Some(se),
        Err(Error::MissingQ) => None,
        Err(e) => return Err(e),
    };
    let (se_ols, se_hw) = se_classical(kind, data)?;
    let ci_new = se_new.map(|se| confidence_interval(tau_hat, se, alpha));
    Ok(EstimateResult {
        kind: kind.clone(),
        tau_hat,
        se_new,
        se_ols,
        se_hw,
        ci_new,
        n: data.n(),
    })
}
