//! Design matrices for the defining regressions of each estimator.
//!
//! Every estimator in this crate has a closed form and an equivalent
//! regression; these builders produce the regression designs so the two
//! routes can be cross-checked and so classical OLS / sandwich standard
//! errors can be extracted. The treatment coefficient always sits in
//! column 1.
//!
//! Interactions are centered: stratum indicators at their sample shares and
//! covariates at their sample means, so the treatment coefficient retains
//! its effect interpretation.

use ndarray::Array2;

use crate::data::TrialData;

/// Column index of the treatment indicator in every design built here.
pub const TREATMENT_COL: usize = 1;

fn stratum_shares(data: &TrialData) -> Vec<f64> {
    let k = data.num_strata();
    let n = data.n() as f64;
    let mut shares = vec![0.0; k];
    for &b in &data.b {
        shares[b - 1] += 1.0;
    }
    for s in &mut shares {
        *s /= n;
    }
    shares
}

fn covariate_means(data: &TrialData) -> Vec<f64> {
    let p = data.p();
    let n = data.n() as f64;
    let mut means = vec![0.0; p];
    for i in 0..data.n() {
        for j in 0..p {
            means[j] += data.x[[i, j]];
        }
    }
    for m in &mut means {
        *m /= n;
    }
    means
}

/// Y ~ 1 + A.
pub fn design_diff(data: &TrialData) -> Array2<f64> {
    let n = data.n();
    let mut m = Array2::zeros((n, 2));
    for i in 0..n {
        m[[i, 0]] = 1.0;
        m[[i, 1]] = f64::from(data.a[i]);
    }
    m
}

/// Y ~ 1 + A + I_1..I_{K-1}.
pub fn design_adj(data: &TrialData) -> Array2<f64> {
    let n = data.n();
    let k = data.num_strata();
    let mut m = Array2::zeros((n, 2 + k.saturating_sub(1)));
    for i in 0..n {
        m[[i, 0]] = 1.0;
        m[[i, 1]] = f64::from(data.a[i]);
        let b = data.b[i];
        if b < k {
            m[[i, 1 + b]] = 1.0;
        }
    }
    m
}

/// Y ~ 1 + A + I_1..I_{K-1} + A (I_1 - p_1) .. A (I_{K-1} - p_{K-1}).
pub fn design_interact(data: &TrialData) -> Array2<f64> {
    let n = data.n();
    let k = data.num_strata();
    let shares = stratum_shares(data);
    let km1 = k.saturating_sub(1);
    let mut m = Array2::zeros((n, 2 + 2 * km1));
    for i in 0..n {
        m[[i, 0]] = 1.0;
        let a = f64::from(data.a[i]);
        m[[i, 1]] = a;
        let b = data.b[i];
        for s in 1..k {
            let ind = if b == s { 1.0 } else { 0.0 };
            m[[i, 1 + s]] = ind;
            m[[i, 1 + km1 + s]] = a * (ind - shares[s - 1]);
        }
    }
    m
}

/// Y ~ 1 + A + X.
pub fn design_star(data: &TrialData) -> Array2<f64> {
    let n = data.n();
    let p = data.p();
    let mut m = Array2::zeros((n, 2 + p));
    for i in 0..n {
        m[[i, 0]] = 1.0;
        m[[i, 1]] = f64::from(data.a[i]);
        for j in 0..p {
            m[[i, 2 + j]] = data.x[[i, j]];
        }
    }
    m
}

/// Y ~ 1 + A + I_1..I_{K-1} + X  (ANCOVA).
pub fn design_star_adj(data: &TrialData) -> Array2<f64> {
    let n = data.n();
    let k = data.num_strata();
    let p = data.p();
    let km1 = k.saturating_sub(1);
    let mut m = Array2::zeros((n, 2 + km1 + p));
    for i in 0..n {
        m[[i, 0]] = 1.0;
        m[[i, 1]] = f64::from(data.a[i]);
        let b = data.b[i];
        if b < k {
            m[[i, 1 + b]] = 1.0;
        }
        for j in 0..p {
            m[[i, 2 + km1 + j]] = data.x[[i, j]];
        }
    }
    m
}

/// Y ~ 1 + A + I_k + A (I_k - p_k) + X + A (X - Xbar).
pub fn design_star_interact(data: &TrialData) -> Array2<f64> {
    let n = data.n();
    let k = data.num_strata();
    let p = data.p();
    let shares = stratum_shares(data);
    let xbar = covariate_means(data);
    let km1 = k.saturating_sub(1);
    let mut m = Array2::zeros((n, 2 + 2 * km1 + 2 * p));
    for i in 0..n {
        m[[i, 0]] = 1.0;
        let a = f64::from(data.a[i]);
        m[[i, 1]] = a;
        let b = data.b[i];
        for s in 1..k {
            let ind = if b == s { 1.0 } else { 0.0 };
            m[[i, 1 + s]] = ind;
            m[[i, 1 + km1 + s]] = a * (ind - shares[s - 1]);
        }
        for j in 0..p {
            m[[i, 2 + 2 * km1 + j]] = data.x[[i, j]];
            m[[i, 2 + 2 * km1 + p + j]] = a * (data.x[[i, j]] - xbar[j]);
        }
    }
    m
}
