//! Dense least-squares kernel and coefficient covariance estimators.
//!
//! The solver is Householder QR with column pivoting rather than normal
//! equations: saturated interaction designs are routinely near-collinear, and
//! the pivoted factorization is what decides `RankDeficient` behavior.
//! Columns are scaled to unit max-abs before factorization and coefficients
//! unscaled on return, so stratum indicators and raw covariates on very
//! different scales factor stably.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Relative diagonal threshold below which a pivot is treated as collinear.
/// Corresponds to a scaled condition number of roughly 1e12.
const PIVOT_TOL: f64 = 1e-12;

/// A fitted least-squares regression.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Fitted coefficients, length q.
    pub coef: Array1<f64>,
    /// Residuals y - X beta, length n.
    pub resid: Array1<f64>,
    /// Inverse Gram matrix (X'X)^-1, q x q.
    pub xtx_inv: Array2<f64>,
    /// Residual degrees of freedom n - q.
    pub dof: usize,
}

impl OlsFit {
    pub fn rss(&self) -> f64 {
        self.resid.iter().map(|e| e * e).sum()
    }
}

/// Least-squares fit of `y` on the columns of `design`.
pub fn fit(design: &Array2<f64>, y: &Array1<f64>) -> Result<OlsFit> {
    let n = design.nrows();
    let q = design.ncols();
    if y.len() != n {
        return Err(Error::InvalidData(format!(
            "design has {n} rows but the response has {} entries",
            y.len()
        )));
    }
    if n <= q {
        return Err(Error::TooFewRows { rows: n, cols: q });
    }

    // Scale columns to unit max-abs.
    let mut scale = vec![0.0f64; q];
    for j in 0..q {
        let s = design.column(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if s == 0.0 {
            return Err(Error::RankDeficient { column: j });
        }
        scale[j] = s;
    }
    let mut r = Array2::<f64>::zeros((n, q));
    for j in 0..q {
        for i in 0..n {
            r[[i, j]] = design[[i, j]] / scale[j];
        }
    }
    let mut qty: Vec<f64> = y.to_vec();
    let mut perm: Vec<usize> = (0..q).collect();

    let mut r00 = 0.0f64;
    for k in 0..q {
        // Pivot on the largest remaining column norm.
        let mut best = k;
        let mut best_norm2 = -1.0;
        for j in k..q {
            let norm2: f64 = (k..n).map(|i| r[[i, j]] * r[[i, j]]).sum();
            if norm2 > best_norm2 {
                best_norm2 = norm2;
                best = j;
            }
        }
        if best != k {
            for i in 0..n {
                let tmp = r[[i, k]];
                r[[i, k]] = r[[i, best]];
                r[[i, best]] = tmp;
            }
            perm.swap(k, best);
        }

        let norm = best_norm2.max(0.0).sqrt();
        if k == 0 {
            r00 = norm;
        }
        if norm <= PIVOT_TOL * r00 {
            return Err(Error::RankDeficient { column: perm[k] });
        }

        // Householder reflection zeroing rows k+1.. of column k.
        let alpha = if r[[k, k]] >= 0.0 { -norm } else { norm };
        let mut v = vec![0.0f64; n - k];
        v[0] = r[[k, k]] - alpha;
        for i in k + 1..n {
            v[i - k] = r[[i, k]];
        }
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        r[[k, k]] = alpha;
        for i in k + 1..n {
            r[[i, k]] = 0.0;
        }
        if vtv > 0.0 {
            for j in k + 1..q {
                let dot: f64 = (k..n).map(|i| v[i - k] * r[[i, j]]).sum();
                let f = 2.0 * dot / vtv;
                for i in k..n {
                    r[[i, j]] -= f * v[i - k];
                }
            }
            let dot: f64 = (k..n).map(|i| v[i - k] * qty[i]).sum();
            let f = 2.0 * dot / vtv;
            for i in k..n {
                qty[i] -= f * v[i - k];
            }
        }
    }

    // Back substitution for R z = (Q'y)[..q].
    let mut z = vec![0.0f64; q];
    for k in (0..q).rev() {
        let mut s = qty[k];
        for j in k + 1..q {
            s -= r[[k, j]] * z[j];
        }
        z[k] = s / r[[k, k]];
    }
    let mut coef = Array1::<f64>::zeros(q);
    for k in 0..q {
        coef[perm[k]] = z[k] / scale[perm[k]];
    }

    // R^-1 by back substitution on the identity, then (X'X)^-1.
    let mut rinv = Array2::<f64>::zeros((q, q));
    for col in 0..q {
        for k in (0..=col).rev() {
            let mut s = if k == col { 1.0 } else { 0.0 };
            for j in k + 1..=col {
                s -= r[[k, j]] * rinv[[j, col]];
            }
            rinv[[k, col]] = s / r[[k, k]];
        }
    }
    let mut xtx_inv = Array2::<f64>::zeros((q, q));
    for a in 0..q {
        for b in 0..q {
            let mut g = 0.0;
            for c in 0..q {
                g += rinv[[a, c]] * rinv[[b, c]];
            }
            let (i, j) = (perm[a], perm[b]);
            xtx_inv[[i, j]] = g / (scale[i] * scale[j]);
        }
    }

    let fitted = design.dot(&coef);
    let resid = y - &fitted;

    Ok(OlsFit { coef, resid, xtx_inv, dof: n - q })
}

/// Classical homoskedastic coefficient covariance (RSS / dof) (X'X)^-1.
pub fn ols_vcov(fit: &OlsFit) -> Array2<f64> {
    let sigma2 = fit.rss() / fit.dof as f64;
    &fit.xtx_inv * sigma2
}

/// Heteroskedasticity-robust sandwich covariance
/// (X'X)^-1 X' diag(e_i^2) X (X'X)^-1, HC0 convention (no dof correction).
pub fn hw_vcov(fit: &OlsFit, design: &Array2<f64>) -> Array2<f64> {
    let n = design.nrows();
    let q = design.ncols();
    let mut meat = Array2::<f64>::zeros((q, q));
    for i in 0..n {
        let e2 = fit.resid[i] * fit.resid[i];
        for a in 0..q {
            let xa = design[[i, a]] * e2;
            for b in a..q {
                meat[[a, b]] += xa * design[[i, b]];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            meat[[a, b]] = meat[[b, a]];
        }
    }
    fit.xtx_inv.dot(&meat).dot(&fit.xtx_inv)
}

/// Solves a small dense symmetric system by Gaussian elimination with partial
/// pivoting. Used for the p x p Gram systems in the closed-form estimators.
pub(crate) fn solve_small(a: &Array2<f64>, b: &[f64]) -> Result<Vec<f64>> {
    let p = a.nrows();
    if p == 0 {
        return Ok(Vec::new());
    }
    let mut m = a.clone();
    let mut rhs = b.to_vec();
    let scale: f64 = (0..p).map(|i| m[[i, i]].abs()).fold(0.0, f64::max).max(1.0);
    for k in 0..p {
        let mut piv = k;
        for i in k + 1..p {
            if m[[i, k]].abs() > m[[piv, k]].abs() {
                piv = i;
            }
        }
        if m[[piv, k]].abs() <= 1e-13 * scale {
            return Err(Error::SingularGram);
        }
        if piv != k {
            for j in 0..p {
                let tmp = m[[k, j]];
                m[[k, j]] = m[[piv, j]];
                m[[piv, j]] = tmp;
            }
            rhs.swap(k, piv);
        }
        for i in k + 1..p {
            let f = m[[i, k]] / m[[k, k]];
            for j in k..p {
                m[[i, j]] -= f * m[[k, j]];
            }
            rhs[i] -= f * rhs[k];
        }
    }
    for k in (0..p).rev() {
        let mut s = rhs[k];
        for j in k + 1..p {
            s -= m[[k, j]] * rhs[j];
        }
        rhs[k] = s / m[[k, k]];
    }
    Ok(rhs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    /// Independent normal-equations oracle: forms X'X and X'y explicitly and
    /// solves by plain Gaussian elimination.
    fn normal_equations_oracle(design: &Array2<f64>, y: &Array1<f64>) -> Vec<f64> {
        let n = design.nrows();
        let q = design.ncols();
        let mut xtx = vec![vec![0.0f64; q]; q];
        let mut xty = vec![0.0f64; q];
        for i in 0..n {
            for a in 0..q {
                xty[a] += design[[i, a]] * y[i];
                for b in 0..q {
                    xtx[a][b] += design[[i, a]] * design[[i, b]];
                }
            }
        }
        // Gaussian elimination with partial pivoting.
        for k in 0..q {
            let mut piv = k;
            for i in k + 1..q {
                if xtx[i][k].abs() > xtx[piv][k].abs() {
                    piv = i;
                }
            }
            xtx.swap(k, piv);
            xty.swap(k, piv);
            for i in k + 1..q {
                let f = xtx[i][k] / xtx[k][k];
                for j in k..q {
                    xtx[i][j] -= f * xtx[k][j];
                }
                xty[i] -= f * xty[k];
            }
        }
        let mut out = vec![0.0f64; q];
        for k in (0..q).rev() {
            let mut s = xty[k];
            for j in k + 1..q {
                s -= xtx[k][j] * out[j];
            }
            out[k] = s / xtx[k][k];
        }
        out
    }

    fn random_system(n: usize, q: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = crate::rng::rng(seed);
        let mut design = Array2::<f64>::zeros((n, q));
        for i in 0..n {
            design[[i, 0]] = 1.0;
            for j in 1..q {
                design[[i, j]] = rng.gen_range(-3.0..3.0);
            }
        }
        let y = Array1::from_shape_fn(n, |_| rng.gen_range(-5.0..5.0));
        (design, y)
    }

    #[test]
    fn intercept_only_mean_fit() {
        let design = Array2::from_shape_vec((2, 1), vec![1.0, 1.0]).unwrap();
        let y = Array1::from_vec(vec![2.0, 4.0]);
        let fit = fit(&design, &y).unwrap();
        assert_abs_diff_eq!(fit.coef[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.resid[0], -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.resid[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_interpolation_zero_residuals() {
        let (design, _) = random_system(10, 3, 1);
        let truth = Array1::from_vec(vec![1.5, -2.0, 0.5]);
        let y = design.dot(&truth);
        let fit = fit(&design, &y).unwrap();
        for e in fit.resid.iter() {
            assert_abs_diff_eq!(*e, 0.0, epsilon = 1e-10);
        }
        let v = ols_vcov(&fit);
        let h = hw_vcov(&fit, &design);
        for a in 0..3 {
            for b in 0..3 {
                assert_abs_diff_eq!(v[[a, b]], 0.0, epsilon = 1e-12);
                assert_abs_diff_eq!(h[[a, b]], 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn coefficients_match_normal_equations_oracle() {
        for seed in 0..5 {
            let (design, y) = random_system(20, 4, 100 + seed);
            let fit = fit(&design, &y).unwrap();
            let oracle = normal_equations_oracle(&design, &y);
            for j in 0..4 {
                assert_abs_diff_eq!(fit.coef[j], oracle[j], epsilon = 1e-10);
            }
            // Normal equations: design' resid = 0.
            let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            for j in 0..4 {
                let g: f64 = (0..20).map(|i| design[[i, j]] * fit.resid[i]).sum();
                assert!(g.abs() <= 1e-8 * ynorm.max(1.0));
            }
        }
    }

    #[test]
    fn vcov_matches_oracle() {
        let (design, y) = random_system(20, 4, 7);
        let f = fit(&design, &y).unwrap();
        // s^2 (X'X)^-1 with an independently inverted Gram matrix.
        let q = 4;
        let mut xtx = Array2::<f64>::zeros((q, q));
        for i in 0..20 {
            for a in 0..q {
                for b in 0..q {
                    xtx[[a, b]] += design[[i, a]] * design[[i, b]];
                }
            }
        }
        // Invert column by column through the oracle solver.
        let mut inv = Array2::<f64>::zeros((q, q));
        for c in 0..q {
            let mut e = vec![0.0; q];
            e[c] = 1.0;
            let col = solve_small(&xtx, &e).unwrap();
            for r in 0..q {
                inv[[r, c]] = col[r];
            }
        }
        let s2 = f.rss() / f.dof as f64;
        let v = ols_vcov(&f);
        for a in 0..q {
            for b in 0..q {
                assert_abs_diff_eq!(v[[a, b]], s2 * inv[[a, b]], epsilon = 1e-10);
                assert_abs_diff_eq!(f.xtx_inv[[a, b]], inv[[a, b]], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn hw_matches_triple_product_oracle() {
        let (design, y) = random_system(20, 4, 8);
        let f = fit(&design, &y).unwrap();
        let q = 4;
        let mut meat = Array2::<f64>::zeros((q, q));
        for i in 0..20 {
            let e2 = f.resid[i] * f.resid[i];
            for a in 0..q {
                for b in 0..q {
                    meat[[a, b]] += e2 * design[[i, a]] * design[[i, b]];
                }
            }
        }
        let oracle = f.xtx_inv.dot(&meat).dot(&f.xtx_inv);
        let h = hw_vcov(&f, &design);
        for a in 0..q {
            for b in 0..q {
                assert_abs_diff_eq!(h[[a, b]], oracle[[a, b]], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn hw_equals_ols_for_equal_squared_residuals() {
        // With all e_i^2 = c, HC0 equals c (X'X)^-1 = ols_vcov * dof / n.
        let design = Array2::from_shape_vec(
            (4, 2),
            vec![1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0],
        )
        .unwrap();
        let y = Array1::from_vec(vec![1.0, -1.0, -1.0, 1.0]);
        let f = fit(&design, &y).unwrap();
        for e in f.resid.iter() {
            assert_abs_diff_eq!(e.abs(), 1.0, epsilon = 1e-12);
        }
        let h = hw_vcov(&f, &design);
        let v = ols_vcov(&f);
        let dof_over_n = f.dof as f64 / 4.0;
        for a in 0..2 {
            for b in 0..2 {
                assert_abs_diff_eq!(h[[a, b]], v[[a, b]] * dof_over_n, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn column_rescaling_scales_coefficient_inversely() {
        let (design, y) = random_system(25, 3, 9);
        let base = fit(&design, &y).unwrap();
        let mut scaled = design.clone();
        let c = 250.0;
        for i in 0..25 {
            scaled[[i, 2]] *= c;
        }
        let f2 = fit(&scaled, &y).unwrap();
        assert_abs_diff_eq!(f2.coef[2], base.coef[2] / c, epsilon = 1e-10);
        assert_abs_diff_eq!(f2.coef[0], base.coef[0], epsilon = 1e-9);
        assert_abs_diff_eq!(f2.coef[1], base.coef[1], epsilon = 1e-9);
        for i in 0..25 {
            assert_abs_diff_eq!(f2.resid[i], base.resid[i], epsilon = 1e-9);
        }
        // SE of the untouched coefficients is unchanged.
        let v1 = ols_vcov(&base);
        let v2 = ols_vcov(&f2);
        assert_abs_diff_eq!(v1[[1, 1]], v2[[1, 1]], epsilon = 1e-9);
        assert_abs_diff_eq!(v2[[2, 2]].sqrt(), v1[[2, 2]].sqrt() / c, epsilon = 1e-10);
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let mut rng = crate::rng::rng(11);
        let n = 12;
        let mut design = Array2::<f64>::zeros((n, 3));
        for i in 0..n {
            design[[i, 0]] = 1.0;
            design[[i, 1]] = rng.gen_range(-1.0..1.0);
            design[[i, 2]] = 2.0 * design[[i, 1]] - 3.0;
        }
        let y = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0));
        assert!(matches!(
            fit(&design, &y),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn too_few_rows_errors() {
        let design = Array2::from_shape_vec((2, 2), vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let y = Array1::from_vec(vec![1.0, 2.0]);
        assert_eq!(
            fit(&design, &y).unwrap_err(),
            Error::TooFewRows { rows: 2, cols: 2 }
        );
    }
}
