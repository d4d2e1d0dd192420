//! The six regression-based treatment effect estimators and the general
//! class of covariate-adjusted estimators they belong to.
//!
//! Each estimator is evaluated in closed form; its defining regression is
//! available through [`Estimator::design`] for cross-checks and classical
//! standard errors. The closed form and the regression coefficient agree to
//! floating-point accuracy, which the test suite exercises aggressively.

pub mod designs;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{summarize, TrialData};
use crate::error::{Error, Result};
use crate::linalg::solve_small;

/// Stratum weighting used by the general covariate-adjusted estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Weighting {
    /// Pooled arm means, no stratification.
    Pooled,
    /// Weights proportional to pi_k (1 - pi_k) p_nk.
    OmegaWeights,
    /// Weights equal to the stratum shares p_nk.
    StratumShares,
}

/// Which estimator is being used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Difference in means.
    Diff,
    /// Stratum-indicator regression (fixed effects).
    Adj,
    /// Stratified difference in means (treatment-by-stratum interactions).
    Interact,
    /// Covariate regression without stratum indicators.
    StarDiff,
    /// ANCOVA: stratum indicators plus covariates.
    StarAdj,
    /// Full interaction regression with arm-specific covariate slopes.
    StarInteract,
    /// General adjusted estimator with supplied adjustment vectors.
    General {
        eta1: Vec<f64>,
        eta0: Vec<f64>,
        weighting: Weighting,
    },
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Diff => "diff",
            EstimatorKind::Adj => "adj",
            EstimatorKind::Interact => "interact",
            EstimatorKind::StarDiff => "star",
            EstimatorKind::StarAdj => "star_adj",
            EstimatorKind::StarInteract => "star_interact",
            EstimatorKind::General { .. } => "general",
        }
    }

    /// Looks up one of the six named estimators.
    pub fn from_name(name: &str) -> Option<EstimatorKind> {
        match name {
            "diff" => Some(EstimatorKind::Diff),
            "adj" => Some(EstimatorKind::Adj),
            "interact" => Some(EstimatorKind::Interact),
            "star" => Some(EstimatorKind::StarDiff),
            "star_adj" | "star-adj" => Some(EstimatorKind::StarAdj),
            "star_interact" | "star-interact" => Some(EstimatorKind::StarInteract),
            _ => None,
        }
    }

    /// The six named estimators in presentation order.
    pub fn all_six() -> [EstimatorKind; 6] {
        [
            EstimatorKind::Diff,
            EstimatorKind::Adj,
            EstimatorKind::Interact,
            EstimatorKind::StarDiff,
            EstimatorKind::StarAdj,
            EstimatorKind::StarInteract,
        ]
    }

    /// Whether the estimator adjusts for the additional covariates.
    pub fn uses_covariates(&self) -> bool {
        matches!(
            self,
            EstimatorKind::StarDiff
                | EstimatorKind::StarAdj
                | EstimatorKind::StarInteract
                | EstimatorKind::General { .. }
        )
    }
}

/// Which variance components enter the estimator's standard error, beyond the
/// within-stratum and between-stratum terms that every recipe includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarianceRecipe {
    /// Include the allocation-imbalance term (requires q).
    pub a_term: bool,
    /// Include the unequal-allocation penalty term (requires q unless
    /// the target allocation is exactly 1/2).
    pub pi_term: bool,
}

/// Sample projection coefficients shared by the adjusted estimators.
#[derive(Debug, Clone)]
pub struct RegressionCoefficients {
    /// Pooled projection coefficient of Y on X.
    pub gamma_hat: Vec<f64>,
    /// Within-arm, stratum-centered coefficient for the treatment arm.
    pub beta_hat_1: Vec<f64>,
    /// Within-arm, stratum-centered coefficient for the control arm.
    pub beta_hat_0: Vec<f64>,
    /// ANCOVA coefficient.
    pub beta_hat_adj: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

struct ArmMeans {
    n1: usize,
    n0: usize,
    ybar1: f64,
    ybar0: f64,
    xbar: Vec<f64>,
    xbar1: Vec<f64>,
    xbar0: Vec<f64>,
}

fn arm_means(data: &TrialData) -> Result<ArmMeans> {
    let n = data.n();
    let p = data.p();
    let mut m = ArmMeans {
        n1: 0,
        n0: 0,
        ybar1: 0.0,
        ybar0: 0.0,
        xbar: vec![0.0; p],
        xbar1: vec![0.0; p],
        xbar0: vec![0.0; p],
    };
    for i in 0..n {
        for j in 0..p {
            m.xbar[j] += data.x[[i, j]];
        }
        if data.a[i] == 1 {
            m.n1 += 1;
            m.ybar1 += data.y[i];
            for j in 0..p {
                m.xbar1[j] += data.x[[i, j]];
            }
        } else {
            m.n0 += 1;
            m.ybar0 += data.y[i];
            for j in 0..p {
                m.xbar0[j] += data.x[[i, j]];
            }
        }
    }
    if m.n1 == 0 || m.n0 == 0 {
        return Err(Error::EmptyArm);
    }
    m.ybar1 /= m.n1 as f64;
    m.ybar0 /= m.n0 as f64;
    for j in 0..p {
        m.xbar[j] /= n as f64;
        m.xbar1[j] /= m.n1 as f64;
        m.xbar0[j] /= m.n0 as f64;
    }
    Ok(m)
}

/// Lenient per-stratum tallies: arm means are kept even when the other arm is
/// empty, so omega-weighted estimators can zero out such strata.
struct LenientStratum {
    n_k: usize,
    n_k1: usize,
    n_k0: usize,
    ybar1: f64,
    ybar0: f64,
    xbar: Vec<f64>,
    xbar1: Vec<f64>,
    xbar0: Vec<f64>,
}

fn lenient_strata(data: &TrialData) -> Vec<LenientStratum> {
    let k = data.num_strata();
    let p = data.p();
    let mut out: Vec<LenientStratum> = (0..k)
        .map(|_| LenientStratum {
            n_k: 0,
            n_k1: 0,
            n_k0: 0,
            ybar1: 0.0,
            ybar0: 0.0,
            xbar: vec![0.0; p],
            xbar1: vec![0.0; p],
            xbar0: vec![0.0; p],
        })
        .collect();
    for i in 0..data.n() {
        let s = &mut out[data.b[i] - 1];
        s.n_k += 1;
        for j in 0..p {
            s.xbar[j] += data.x[[i, j]];
        }
        if data.a[i] == 1 {
            s.n_k1 += 1;
            s.ybar1 += data.y[i];
            for j in 0..p {
                s.xbar1[j] += data.x[[i, j]];
            }
        } else {
            s.n_k0 += 1;
            s.ybar0 += data.y[i];
            for j in 0..p {
                s.xbar0[j] += data.x[[i, j]];
            }
        }
    }
    for s in &mut out {
        if s.n_k1 > 0 {
            s.ybar1 /= s.n_k1 as f64;
            for j in 0..p {
                s.xbar1[j] /= s.n_k1 as f64;
            }
        }
        if s.n_k0 > 0 {
            s.ybar0 /= s.n_k0 as f64;
            for j in 0..p {
                s.xbar0[j] /= s.n_k0 as f64;
            }
        }
        if s.n_k > 0 {
            for j in 0..p {
                s.xbar[j] /= s.n_k as f64;
            }
        }
    }
    out
}

/// Difference-in-means estimator.
pub fn tau_diff(data: &TrialData) -> Result<f64> {
    let m = arm_means(data)?;
    Ok(m.ybar1 - m.ybar0)
}

/// Omega weights for the stratum-indicator regression. Strata with an empty
/// arm get weight zero.
pub fn omega_weights(data: &TrialData) -> Result<Vec<f64>> {
    let n = data.n() as f64;
    let strata = lenient_strata(data);
    let mut w: Vec<f64> = strata
        .iter()
        .map(|s| {
            if s.n_k == 0 {
                return 0.0;
            }
            let pi_k = s.n_k1 as f64 / s.n_k as f64;
            pi_k * (1.0 - pi_k) * s.n_k as f64 / n
        })
        .collect();
    let total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllWeightsZero);
    }
    for wi in &mut w {
        *wi /= total;
    }
    Ok(w)
}

/// Stratum-indicator regression estimator: the omega-weighted stratified
/// difference in means.
pub fn tau_adj(data: &TrialData) -> Result<f64> {
    let w = omega_weights(data)?;
    let strata = lenient_strata(data);
    Ok(strata
        .iter()
        .zip(&w)
        .filter(|(_, &wk)| wk > 0.0)
        .map(|(s, &wk)| wk * (s.ybar1 - s.ybar0))
        .sum())
}

/// Stratified difference in means, weighted by stratum shares.
pub fn tau_interact(data: &TrialData) -> Result<f64> {
    let (summaries, _) = summarize(data, &data.y)?;
    let n = data.n() as f64;
    Ok(summaries
        .iter()
        .map(|s| (s.n_k as f64 / n) * (s.rbar_k1 - s.rbar_k0))
        .sum())
}

/// Pooled covariance of the covariates with themselves and with a response.
fn pooled_gram(data: &TrialData) -> (Array2<f64>, Vec<f64>, Vec<f64>) {
    let n = data.n();
    let p = data.p();
    let nf = n as f64;
    let mut xbar = vec![0.0; p];
    let mut ybar = 0.0;
    for i in 0..n {
        ybar += data.y[i];
        for j in 0..p {
            xbar[j] += data.x[[i, j]];
        }
    }
    ybar /= nf;
    for m in &mut xbar {
        *m /= nf;
    }
    let mut sxx = Array2::<f64>::zeros((p, p));
    let mut sxy = vec![0.0; p];
    for i in 0..n {
        for a in 0..p {
            let da = data.x[[i, a]] - xbar[a];
            sxy[a] += da * (data.y[i] - ybar);
            for b in a..p {
                sxx[[a, b]] += da * (data.x[[i, b]] - xbar[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            sxx[[a, b]] = sxx[[b, a]];
        }
    }
    for a in 0..p {
        for b in 0..p {
            sxx[[a, b]] /= nf;
        }
        sxy[a] /= nf;
    }
    (sxx, sxy, xbar)
}

/// Pooled projection coefficient of Y on X.
pub fn gamma_hat(data: &TrialData) -> Result<Vec<f64>> {
    if data.p() == 0 {
        return Ok(Vec::new());
    }
    let (sxx, sxy, _) = pooled_gram(data);
    solve_small(&sxx, &sxy)
}

/// Covariate regression estimator without stratum indicators, in closed form.
pub fn tau_star(data: &TrialData) -> Result<f64> {
    if data.p() == 0 {
        return Err(Error::NoCovariates);
    }
    let m = arm_means(data)?;
    let (sxx, sxy, xbar) = pooled_gram(data);
    let gamma = solve_small(&sxx, &sxy)?;
    let p = data.p();
    let d1: Vec<f64> = (0..p).map(|j| m.xbar1[j] - xbar[j]).collect();
    let d0: Vec<f64> = (0..p).map(|j| m.xbar0[j] - xbar[j]).collect();
    let adj1: f64 = (0..p).map(|j| d1[j] * gamma[j]).sum();
    let adj0: f64 = (0..p).map(|j| d0[j] * gamma[j]).sum();
    let sxx_inv_d0 = solve_small(&sxx, &d0)?;
    let denom = 1.0 + (0..p).map(|j| d1[j] * sxx_inv_d0[j]).sum::<f64>();
    Ok(((m.ybar1 - adj1) - (m.ybar0 - adj0)) / denom)
}

/// ANCOVA estimator with its covariate coefficient.
pub fn tau_star_adj(data: &TrialData) -> Result<(f64, Vec<f64>)> {
    let (summaries, _) = summarize(data, &data.y)?;
    let p = data.p();
    if p == 0 {
        return Ok((tau_adj(data)?, Vec::new()));
    }
    let n = data.n();
    let nf = n as f64;

    // omega weights and the unnormalized weight total.
    let mut w_raw: Vec<f64> = Vec::with_capacity(summaries.len());
    for s in &summaries {
        w_raw.push(s.pi_k * (1.0 - s.pi_k) * s.p_nk);
    }
    let w_total: f64 = w_raw.iter().sum();
    if w_total <= 0.0 {
        return Err(Error::AllWeightsZero);
    }

    // Stratum-centered Gram matrices.
    let mut sxx = Array2::<f64>::zeros((p, p));
    let mut sxy = vec![0.0; p];
    for i in 0..n {
        let s = &summaries[data.b[i] - 1];
        for a in 0..p {
            let da = data.x[[i, a]] - s.xbar_k[a];
            let yc = data.y[i]
                - (s.pi_k * s.rbar_k1 + (1.0 - s.pi_k) * s.rbar_k0);
            sxy[a] += da * yc;
            for b in a..p {
                sxx[[a, b]] += da * (data.x[[i, b]] - s.xbar_k[b]);
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            sxx[[a, b]] = sxx[[b, a]];
        }
    }
    for a in 0..p {
        for b in 0..p {
            sxx[[a, b]] /= nf;
        }
        sxy[a] /= nf;
    }

    // Omega-weighted arm differences of Y and X.
    let mut tau_y = 0.0;
    let mut tau_x = vec![0.0; p];
    for (s, &wr) in summaries.iter().zip(&w_raw) {
        let w = wr / w_total;
        tau_y += w * (s.rbar_k1 - s.rbar_k0);
        for j in 0..p {
            tau_x[j] += w * (s.xbar_k1[j] - s.xbar_k0[j]);
        }
    }

    let mut m = sxx.clone();
    let mut rhs = sxy.clone();
    for a in 0..p {
        rhs[a] -= w_total * tau_y * tau_x[a];
        for b in 0..p {
            m[[a, b]] -= w_total * tau_x[a] * tau_x[b];
        }
    }
    let beta = solve_small(&m, &rhs)?;
    let tau = tau_y - (0..p).map(|j| tau_x[j] * beta[j]).sum::<f64>();
    Ok((tau, beta))
}

/// Within-arm, stratum-centered covariate coefficient for one arm.
fn beta_arm(data: &TrialData, arm: u8) -> Result<Vec<f64>> {
    let p = data.p();
    let n = data.n();
    let k = data.num_strata();
    // Arm-specific stratum means.
    let mut count = vec![0usize; k];
    let mut ymean = vec![0.0f64; k];
    let mut xmean = vec![vec![0.0f64; p]; k];
    for i in 0..n {
        if data.a[i] != arm {
            continue;
        }
        let s = data.b[i] - 1;
        count[s] += 1;
        ymean[s] += data.y[i];
        for j in 0..p {
            xmean[s][j] += data.x[[i, j]];
        }
    }
    for s in 0..k {
        if count[s] < 2 {
            return Err(Error::InsufficientStratumOccupancy { stratum: s + 1, needed: 2 });
        }
        ymean[s] /= count[s] as f64;
        for j in 0..p {
            xmean[s][j] /= count[s] as f64;
        }
    }
    let n_arm: usize = count.iter().sum();
    let mut sxx = Array2::<f64>::zeros((p, p));
    let mut sxy = vec![0.0; p];
    for i in 0..n {
        if data.a[i] != arm {
            continue;
        }
        let s = data.b[i] - 1;
        for a in 0..p {
            let da = data.x[[i, a]] - xmean[s][a];
            sxy[a] += da * (data.y[i] - ymean[s]);
            for b in a..p {
                sxx[[a, b]] += da * (data.x[[i, b]] - xmean[s][b]);
            }
        }
    }
    let nf = n_arm as f64;
    for a in 0..p {
        for b in 0..a {
            sxx[[a, b]] = sxx[[b, a]];
        }
    }
    for a in 0..p {
        for b in 0..p {
            sxx[[a, b]] /= nf;
        }
        sxy[a] /= nf;
    }
    solve_small(&sxx, &sxy)
}

/// Interaction regression estimator with its arm-specific coefficients.
pub fn tau_star_interact(data: &TrialData) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let p = data.p();
    if p == 0 {
        return Ok((tau_interact(data)?, Vec::new(), Vec::new()));
    }
    let (summaries, _) = summarize(data, &data.y)?;
    for s in &summaries {
        if s.n_k1 < 2 || s.n_k0 < 2 {
            return Err(Error::InsufficientStratumOccupancy { stratum: s.k, needed: 2 });
        }
    }
    let beta1 = beta_arm(data, 1)?;
    let beta0 = beta_arm(data, 0)?;
    let mut tau = 0.0;
    for s in &summaries {
        let adj1: f64 = (0..p)
            .map(|j| (s.xbar_k1[j] - s.xbar_k[j]) * beta1[j])
            .sum();
        let adj0: f64 = (0..p)
            .map(|j| (s.xbar_k0[j] - s.xbar_k[j]) * beta0[j])
            .sum();
        tau += s.p_nk * ((s.rbar_k1 - adj1) - (s.rbar_k0 - adj0));
    }
    Ok((tau, beta1, beta0))
}

/// General adjusted estimator with caller-supplied adjustment vectors.
pub fn tau_general(
    data: &TrialData,
    eta1: &[f64],
    eta0: &[f64],
    weighting: Weighting,
) -> Result<f64> {
    let p = data.p();
    if eta1.len() != p || eta0.len() != p {
        return Err(Error::InvalidParameter(format!(
            "adjustment vectors must have length {p}"
        )));
    }
    match weighting {
        Weighting::Pooled => {
            let m = arm_means(data)?;
            let adj1: f64 = (0..p).map(|j| (m.xbar1[j] - m.xbar[j]) * eta1[j]).sum();
            let adj0: f64 = (0..p).map(|j| (m.xbar0[j] - m.xbar[j]) * eta0[j]).sum();
            Ok((m.ybar1 - adj1) - (m.ybar0 - adj0))
        }
        Weighting::OmegaWeights | Weighting::StratumShares => {
            let (summaries, _) = summarize(data, &data.y)?;
            let weights: Vec<f64> = match weighting {
                Weighting::OmegaWeights => omega_weights(data)?,
                _ => summaries.iter().map(|s| s.p_nk).collect(),
            };
            let mut tau = 0.0;
            for (s, &w) in summaries.iter().zip(&weights) {
                let adj1: f64 = (0..p)
                    .map(|j| (s.xbar_k1[j] - s.xbar_k[j]) * eta1[j])
                    .sum();
                let adj0: f64 = (0..p)
                    .map(|j| (s.xbar_k0[j] - s.xbar_k[j]) * eta0[j])
                    .sum();
                tau += w * ((s.rbar_k1 - adj1) - (s.rbar_k0 - adj0));
            }
            Ok(tau)
        }
    }
}

/// All sample projection coefficients in one pass.
pub fn regression_coefficients(data: &TrialData) -> Result<RegressionCoefficients> {
    let gamma = gamma_hat(data)?;
    let (_, beta_adj) = tau_star_adj(data)?;
    let (_, beta1, beta0) = tau_star_interact(data)?;
    Ok(RegressionCoefficients {
        gamma_hat: gamma,
        beta_hat_1: beta1,
        beta_hat_0: beta0,
        beta_hat_adj: beta_adj,
    })
}

// ---------------------------------------------------------------------------
// Strategy objects and registry
// ---------------------------------------------------------------------------

/// One treatment effect estimation strategy: point estimate, working
/// residuals for the non-parametric variance, the variance recipe, and the
/// defining regression design.
pub trait Estimator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Point estimate of the treatment effect.
    fn estimate(&self, data: &TrialData) -> Result<f64>;

    /// Working response fed to the variance components
    /// (outcomes minus the estimator's covariate adjustment).
    fn working_residuals(&self, data: &TrialData) -> Result<Vec<f64>>;

    /// Which optional variance components the estimator's recipe includes.
    fn recipe(&self) -> VarianceRecipe;

    /// Defining regression design; the treatment coefficient is column
    /// [`designs::TREATMENT_COL`].
    fn design(&self, data: &TrialData) -> Result<Array2<f64>>;
}

macro_rules! plain_outcome_residuals {
    () => {
        fn working_residuals(&self, data: &TrialData) -> Result<Vec<f64>> {
            Ok(data.y.clone())
        }
    };
}

struct DiffEstimator;
struct AdjEstimator;
struct InteractEstimator;
struct StarDiffEstimator;
struct StarAdjEstimator;
struct StarInteractEstimator;
struct GeneralEstimator {
    eta1: Vec<f64>,
    eta0: Vec<f64>,
    weighting: Weighting,
}

impl Estimator for DiffEstimator {
    fn name(&self) -> &'static str {
        "diff"
    }
    fn estimate(&self, data: &TrialData) -> Result<f64> {
        tau_diff(data)
    }
    plain_outcome_residuals!();
    fn recipe(&self) -> VarianceRecipe {
        VarianceRecipe { a_term: true, pi_term: false }
    }
    fn design(&self, data: &TrialData) -> Result<Array2<f64>> {
        Ok(designs::design_diff(data))
    }
}

impl Estimator for AdjEstimator {
    fn name(&self) -> &'static str {
        "adj"
    }
    fn estimate(&self, data: &TrialData) -> Result<f64> {
        tau_adj(data)
    }
    plain_outcome_residuals!();
    fn recipe(&self) -> VarianceRecipe {
        VarianceRecipe { a_term: false, pi_term: true }
    }
    fn design(&self, data: &TrialData) -> Result<Array2<f64>> {
        Ok(designs::design_adj(data))
    }
}

impl Estimator for InteractEstimator {
    fn name(&self) -> &'static str {
        "interact"
    }
    fn estimate(&self, data: &TrialData) -> Result<f64> {
        tau_interact(data)
    }
    plain_outcome_residuals!();
    fn recipe(&self) -> VarianceRecipe {
        VarianceRecipe { a_term: false, pi_term: false }
    }
    fn design(&self, data: &TrialData) -> Result<Array2<f64>> {
        Ok(designs::design_interact(data))
    }
}

impl Estimator for StarDiffEstimator {
    fn name(&self) -> &'static str {
        "star"
    }
    fn estimate(&self, data: &TrialData) -> Result<f64> {
        tau_star(data)
    }
    fn working_residuals(&self, data: &TrialData) -> Result<Vec<f64>> {
        let gamma = gamma_hat(data)?;
        Ok(adjusted_outcomes(data, &gamma))
    }
    fn recipe(&self) -> VarianceRecipe {
        VarianceRecipe { a_term: true, pi_term: false }
    }
    fn design(&self, data: &TrialData) -> Result<Array2<f64>> {
        Ok(designs::design_star(data))
    }
}

impl Estimator for StarAdjEstimator {
    fn name(&self) -> &'static str {
        "star_adj"
    }
    fn estimate(&self, data: &TrialData) -> Result<f64> {
        Ok(tau_star_adj(data)?.0)
    }
    fn working_residuals(&self, data: &TrialData) -> Result<Vec<f64>> {
        let (_, beta) = tau_star_adj(data)?;
        Ok(adjusted_outcomes(data, &beta))
    }
    fn recipe(&self) -> VarianceRecipe {
        VarianceRecipe { a_term: false, pi_term: true }
    }
    fn design(&self, data: &TrialData) -> Result<Array2<f64>> {
        Ok(designs::design_star_adj(data))
    }
}

impl Estimator for StarInteractEstimator {
    fn name(&self) -> &'static str {
        "star_interact"
    }
    fn estimate(&self, data: &TrialData) -> Result<f64> {
        Ok(tau_star_interact(data)?.0)
    }
    fn working_residuals(&self, data: &TrialData) -> Result<Vec<f64>> {
        // Per-stratum blend (1 - pi_k) beta(1) + pi_k beta(0), using the
        // unit's own stratum.
        let p = data.p();
        if p == 0 {
            return Ok(data.y.clone());
        }
        let (_, beta1, beta0) = tau_star_interact(data)?;
        let (summaries, _) = summarize(data, &data.y)?;
        let blends: Vec<Vec<f64>> = summaries
            .iter()
            .map(|s| {
                (0..p)
                    .map(|j| (1.0 - s.pi_k) * beta1[j] + s.pi_k * beta0[j])
                    .collect()
            })
            .collect();
        Ok((0..data.n())
            .map(|i| {
                let blend = &blends[data.b[i] - 1];
                data.y[i]
                    - (0..p).map(|j| data.x[[i, j]] * blend[j]).sum::<f64>()
            })
            .collect())
    }
    fn recipe(&self) -> VarianceRecipe {
        VarianceRecipe { a_term: false, pi_term: false }
    }
    fn design(&self, data: &TrialData) -> Result<Array2<f64>> {
        Ok(designs::design_star_interact(data))
    }
}

impl Estimator for GeneralEstimator {
    fn name(&self) -> &'static str {
        "general"
    }
    fn estimate(&self, data: &TrialData) -> Result<f64> {
        tau_general(data, &self.eta1, &self.eta0, self.weighting)
    }
    fn working_residuals(&self, data: &TrialData) -> Result<Vec<f64>> {
        let p = data.p();
        let pi = data.pi_target;
        let blend: Vec<f64> = (0..p)
            .map(|j| (1.0 - pi) * self.eta1[j] + pi * self.eta0[j])
            .collect();
        Ok(adjusted_outcomes(data, &blend))
    }
    fn recipe(&self) -> VarianceRecipe {
        match self.weighting {
            Weighting::Pooled => VarianceRecipe { a_term: true, pi_term: false },
            Weighting::OmegaWeights => VarianceRecipe { a_term: false, pi_term: true },
            Weighting::StratumShares => VarianceRecipe { a_term: false, pi_term: false },
        }
    }
    fn design(&self, _data: &TrialData) -> Result<Array2<f64>> {
        Err(Error::InvalidParameter(
            "the general estimator has no single defining regression".to_string(),
        ))
    }
}

fn adjusted_outcomes(data: &TrialData, coef: &[f64]) -> Vec<f64> {
    let p = data.p();
    (0..data.n())
        .map(|i| data.y[i] - (0..p).map(|j| data.x[[i, j]] * coef[j]).sum::<f64>())
        .collect()
}

/// Instantiates the strategy object for an estimator kind.
pub fn build_estimator(kind: &EstimatorKind) -> Box<dyn Estimator> {
    match kind {
        EstimatorKind::Diff => Box::new(DiffEstimator),
        EstimatorKind::Adj => Box::new(AdjEstimator),
        EstimatorKind::Interact => Box::new(InteractEstimator),
        EstimatorKind::StarDiff => Box::new(StarDiffEstimator),
        EstimatorKind::StarAdj => Box::new(StarAdjEstimator),
        EstimatorKind::StarInteract => Box::new(StarInteractEstimator),
        EstimatorKind::General { eta1, eta0, weighting } => Box::new(GeneralEstimator {
            eta1: eta1.clone(),
            eta0: eta0.clone(),
            weighting: *weighting,
        }),
    }
}

/// Names of the six named estimators, in presentation order.
pub fn estimator_names() -> [&'static str; 6] {
    ["diff", "adj", "interact", "star", "star_adj", "star_interact"]
}

#[cfg(test)]
mod tests;
