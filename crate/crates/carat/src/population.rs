//! Exact finite-population evaluation of the population-level formulas:
//! asymptotic variance components, projection coefficients, the
//! variance-decomposition identity, and the efficiency differences between
//! estimators. Every expectation is a finite weighted sum, so all checks are
//! exact up to floating-point roundoff.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::TrialData;
use crate::error::{Error, Result};
use crate::estimators::{build_estimator, EstimatorKind};
use crate::linalg::solve_small;
use crate::rng::rng_from;
use crate::schemes::{assign_next, build_scheme, AssignmentState, SchemeSpec, UnitProfile};
use crate::variance;

/// One support point of the superpopulation.
#[derive(Debug, Clone)]
pub struct Atom {
    pub prob: f64,
    pub y1: f64,
    pub y0: f64,
    pub x: Vec<f64>,
    pub stratum: usize,
}

/// A discrete superpopulation with a target allocation.
#[derive(Debug, Clone)]
pub struct FinitePopulation {
    pub atoms: Vec<Atom>,
    pub pi: f64,
}

/// The four asymptotic variance components of a transformed outcome.
#[derive(Debug, Clone, Copy)]
pub struct PopComponents {
    pub tilde: f64,
    pub h: f64,
    pub a_term: f64,
    pub pi_term: f64,
    /// Uncentered counterpart of `tilde` (used by the identity check).
    pub plain: f64,
}

impl PopComponents {
    pub fn sum_tilde_h_a(&self) -> f64 {
        self.tilde + self.h + self.a_term
    }
}

/// Population projection coefficients.
#[derive(Debug, Clone)]
pub struct PopulationQuantities {
    pub gamma1: Vec<f64>,
    pub gamma0: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta1: Vec<f64>,
    pub beta0: Vec<f64>,
    pub beta_adj: Vec<f64>,
    pub beta_interact: Vec<f64>,
    /// Stratum-centered covariate covariance.
    pub sigma_xx_tilde: Array2<f64>,
    /// Pooled-centered covariate covariance.
    pub sigma_xx: Array2<f64>,
}

impl FinitePopulation {
    pub fn new(atoms: Vec<Atom>, pi: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidParameter("population has no atoms".into()));
        }
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::InvalidParameter("pi must lie in (0,1)".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        if atoms.iter().any(|a| a.prob <= 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "atom probabilities must be positive and sum to one".into(),
            ));
        }
        let k = atoms.iter().map(|a| a.stratum).max().unwrap();
        for s in 1..=k {
            if !atoms.iter().any(|a| a.stratum == s) {
                return Err(Error::InvalidParameter(format!(
                    "stratum {s} has zero probability"
                )));
            }
        }
        Ok(FinitePopulation { atoms, pi })
    }

    pub fn num_strata(&self) -> usize {
        self.atoms.iter().map(|a| a.stratum).max().unwrap_or(0)
    }

    pub fn p(&self) -> usize {
        self.atoms.first().map_or(0, |a| a.x.len())
    }

    /// True average treatment effect.
    pub fn tau(&self) -> f64 {
        self.atoms.iter().map(|a| a.prob * (a.y1 - a.y0)).sum()
    }

    pub fn stratum_probs(&self) -> Vec<f64> {
        let mut p = vec![0.0; self.num_strata()];
        for a in &self.atoms {
            p[a.stratum - 1] += a.prob;
        }
        p
    }

    /// Transformed outcome r(a) = y(a) - x' eta at one atom.
    fn r(&self, atom: &Atom, arm: u8, eta: &[f64]) -> f64 {
        let y = if arm == 1 { atom.y1 } else { atom.y0 };
        y - atom.x.iter().zip(eta).map(|(x, e)| x * e).sum::<f64>()
    }

    /// Exact evaluation of the four variance components for the transformed
    /// outcome r(a) = y(a) - x' eta with per-stratum balance parameters `q`.
    pub fn components(&self, eta: &[f64], q: &[f64]) -> Result<PopComponents> {
        let k = self.num_strata();
        if q.len() != k {
            return Err(Error::InvalidParameter(format!(
                "expected {k} q values, got {}",
                q.len()
            )));
        }
        let pi = self.pi;
        let p_strata = self.stratum_probs();

        let mean = |arm: u8| -> f64 {
            self.atoms
                .iter()
                .map(|a| a.prob * self.r(a, arm, eta))
                .sum()
        };
        let stratum_mean = |arm: u8, s: usize| -> f64 {
            self.atoms
                .iter()
                .filter(|a| a.stratum == s)
                .map(|a| a.prob * self.r(a, arm, eta))
                .sum::<f64>()
                / p_strata[s - 1]
        };

        let (mu1, mu0) = (mean(1), mean(0));
        let mut var1 = 0.0;
        let mut var0 = 0.0;
        let mut var1_tilde = 0.0;
        let mut var0_tilde = 0.0;
        for a in &self.atoms {
            let r1 = self.r(a, 1, eta);
            let r0 = self.r(a, 0, eta);
            var1 += a.prob * (r1 - mu1) * (r1 - mu1);
            var0 += a.prob * (r0 - mu0) * (r0 - mu0);
            let m1 = stratum_mean(1, a.stratum);
            let m0 = stratum_mean(0, a.stratum);
            var1_tilde += a.prob * (r1 - m1) * (r1 - m1);
            var0_tilde += a.prob * (r0 - m0) * (r0 - m0);
        }

        let mut h = 0.0;
        let mut a_term = 0.0;
        let mut pi_sum = 0.0;
        for s in 1..=k {
            let d1 = stratum_mean(1, s) - mu1;
            let d0 = stratum_mean(0, s) - mu0;
            let pk = p_strata[s - 1];
            let contrast = d1 - d0;
            h += pk * contrast * contrast;
            let lever = d1 / pi + d0 / (1.0 - pi);
            a_term += pk * q[s - 1] * lever * lever;
            pi_sum += pk * q[s - 1] * contrast * contrast;
        }
        let pre = {
            let d = 1.0 - 2.0 * pi;
            d * d / (pi * pi * (1.0 - pi) * (1.0 - pi))
        };

        Ok(PopComponents {
            tilde: var1_tilde / pi + var0_tilde / (1.0 - pi),
            h,
            a_term,
            pi_term: pre * pi_sum,
            plain: var1 / pi + var0 / (1.0 - pi),
        })
    }

    /// Residual of the variance-decomposition identity: the centered
    /// three-component sum against the uncentered variance minus the
    /// balance correction. Exact populations drive this to roundoff.
    pub fn lemma1_residual(&self, eta: &[f64], q: &[f64]) -> Result<f64> {
        let c = self.components(eta, q)?;
        let pi = self.pi;
        let p_strata = self.stratum_probs();
        let k = self.num_strata();

        let mean = |arm: u8| -> f64 {
            self.atoms
                .iter()
                .map(|a| a.prob * self.r(a, arm, eta))
                .sum()
        };
        let (mu1, mu0) = (mean(1), mean(0));
        let mut correction = 0.0;
        for s in 1..=k {
            let m1 = self
                .atoms
                .iter()
                .filter(|a| a.stratum == s)
                .map(|a| a.prob * self.r(a, 1, eta))
                .sum::<f64>()
                / p_strata[s - 1];
            let m0 = self
                .atoms
                .iter()
                .filter(|a| a.stratum == s)
                .map(|a| a.prob * self.r(a, 0, eta))
                .sum::<f64>()
                / p_strata[s - 1];
            let lever = (m1 - mu1) / pi + (m0 - mu0) / (1.0 - pi);
            correction += p_strata[s - 1] * (pi * (1.0 - pi) - q[s - 1]) * lever * lever;
        }
        let lhs = c.sum_tilde_h_a();
        let rhs = c.plain - correction;
        Ok((lhs - rhs).abs())
    }

    /// Exact projection coefficients.
    pub fn quantities(&self) -> Result<PopulationQuantities> {
        let p = self.p();
        let pi = self.pi;
        if p == 0 {
            let e = Vec::new();
            return Ok(PopulationQuantities {
                gamma1: e.clone(),
                gamma0: e.clone(),
                gamma: e.clone(),
                beta1: e.clone(),
                beta0: e.clone(),
                beta_adj: e.clone(),
                beta_interact: e,
                sigma_xx_tilde: Array2::zeros((0, 0)),
                sigma_xx: Array2::zeros((0, 0)),
            });
        }
        let p_strata = self.stratum_probs();
        let k = self.num_strata();

        let mut mu_x = vec![0.0; p];
        let mut mu_y = [0.0f64; 2];
        for a in &self.atoms {
            for j in 0..p {
                mu_x[j] += a.prob * a.x[j];
            }
            mu_y[1] += a.prob * a.y1;
            mu_y[0] += a.prob * a.y0;
        }
        let mut mu_x_k = vec![vec![0.0; p]; k];
        let mut mu_y_k = vec![[0.0f64; 2]; k];
        for a in &self.atoms {
            let s = a.stratum - 1;
            for j in 0..p {
                mu_x_k[s][j] += a.prob * a.x[j] / p_strata[s];
            }
            mu_y_k[s][1] += a.prob * a.y1 / p_strata[s];
            mu_y_k[s][0] += a.prob * a.y0 / p_strata[s];
        }

        let mut sigma_xx = Array2::<f64>::zeros((p, p));
        let mut sigma_xy1 = vec![0.0; p];
        let mut sigma_xy0 = vec![0.0; p];
        let mut sigma_xx_tilde = Array2::<f64>::zeros((p, p));
        let mut sigma_xy1_tilde = vec![0.0; p];
        let mut sigma_xy0_tilde = vec![0.0; p];
        for a in &self.atoms {
            let s = a.stratum - 1;
            for i in 0..p {
                let dx = a.x[i] - mu_x[i];
                let dxt = a.x[i] - mu_x_k[s][i];
                sigma_xy1[i] += a.prob * dx * (a.y1 - mu_y[1]);
                sigma_xy0[i] += a.prob * dx * (a.y0 - mu_y[0]);
                sigma_xy1_tilde[i] += a.prob * dxt * (a.y1 - mu_y_k[s][1]);
                sigma_xy0_tilde[i] += a.prob * dxt * (a.y0 - mu_y_k[s][0]);
                for j in 0..p {
                    sigma_xx[[i, j]] += a.prob * dx * (a.x[j] - mu_x[j]);
                    sigma_xx_tilde[[i, j]] += a.prob * dxt * (a.x[j] - mu_x_k[s][j]);
                }
            }
        }

        let gamma1 = solve_small(&sigma_xx, &sigma_xy1)?;
        let gamma0 = solve_small(&sigma_xx, &sigma_xy0)?;
        let beta1 = solve_small(&sigma_xx_tilde, &sigma_xy1_tilde)?;
        let beta0 = solve_small(&sigma_xx_tilde, &sigma_xy0_tilde)?;
        let mix = |w1: f64, a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| w1 * x + (1.0 - w1) * y).collect()
        };
        Ok(PopulationQuantities {
            gamma: mix(pi, &gamma1, &gamma0),
            gamma1,
            gamma0,
            beta_adj: mix(pi, &beta1, &beta0),
            beta_interact: mix(1.0 - pi, &beta1, &beta0),
            beta1,
            beta0,
            sigma_xx_tilde,
            sigma_xx,
        })
    }

    /// Asymptotic variance of an estimator kind under per-stratum balance
    /// parameters `q`, evaluated by the component recipe at the population
    /// level.
    pub fn asymptotic_variance(&self, kind: &EstimatorKind, q: &[f64]) -> Result<f64> {
        let quant = self.quantities()?;
        let zero = vec![0.0; self.p()];
        let (eta, a_term, pi_term): (&[f64], bool, bool) = match kind {
            EstimatorKind::Diff => (&zero, true, false),
            EstimatorKind::Adj => (&zero, false, true),
            EstimatorKind::Interact => (&zero, false, false),
            EstimatorKind::StarDiff => (&quant.gamma, true, false),
            EstimatorKind::StarAdj => (&quant.beta_adj, false, true),
            EstimatorKind::StarInteract => (&quant.beta_interact, false, false),
            EstimatorKind::General { .. } => {
                return Err(Error::InvalidParameter(
                    "asymptotic variance of the general estimator depends on its limits"
                        .into(),
                ))
            }
        };
        let c = self.components(eta, q)?;
        let mut v = c.tilde + c.h;
        if a_term {
            v += c.a_term;
        }
        if pi_term {
            v += c.pi_term;
        }
        Ok(v)
    }
}

/// One efficiency difference computed along both routes: the closed-form
/// display and the literal difference of the two asymptotic-variance
/// recipes.
#[derive(Debug, Clone, Copy)]
pub struct DeltaPair {
    pub display: f64,
    pub recipe: f64,
}

/// The four efficiency differences.
#[derive(Debug, Clone, Copy)]
pub struct Deltas {
    pub star_minus_diff: DeltaPair,
    pub adjstar_minus_adj: DeltaPair,
    pub interactstar_minus_interact: DeltaPair,
    pub interactstar_minus_adjstar: DeltaPair,
}

/// Evaluates the four efficiency-difference displays from exact moments and,
/// independently, as differences of asymptotic-variance recipes.
pub fn pop_deltas(pop: &FinitePopulation, q: &[f64]) -> Result<Deltas> {
    let p = pop.p();
    if p == 0 {
        return Err(Error::InvalidParameter(
            "efficiency differences need at least one covariate".into(),
        ));
    }
    let quant = pop.quantities()?;
    let pi = pop.pi;
    let inv = 1.0 / (pi * (1.0 - pi));
    let p_strata = pop.stratum_probs();
    let k = pop.num_strata();

    let quad = |m: &Array2<f64>, a: &[f64], b: &[f64]| -> f64 {
        let mut out = 0.0;
        for i in 0..p {
            for j in 0..p {
                out += a[i] * m[[i, j]] * b[j];
            }
        }
        out
    };

    // Display route: star vs diff.
    let mut mu_x = vec![0.0; p];
    let mut mu_y = [0.0f64; 2];
    for a in &pop.atoms {
        for j in 0..p {
            mu_x[j] += a.prob * a.x[j];
        }
        mu_y[1] += a.prob * a.y1;
        mu_y[0] += a.prob * a.y0;
    }
    let mut big_m = Array2::<f64>::zeros((p, p));
    let mut small_m = vec![0.0; p];
    for s in 1..=k {
        let ps = p_strata[s - 1];
        let c = 1.0 - q[s - 1] * inv;
        let mut dx = vec![0.0; p];
        let mut dy = [0.0f64; 2];
        for a in pop.atoms.iter().filter(|a| a.stratum == s) {
            for j in 0..p {
                dx[j] += a.prob * a.x[j] / ps;
            }
            dy[1] += a.prob * a.y1 / ps;
            dy[0] += a.prob * a.y0 / ps;
        }
        for j in 0..p {
            dx[j] -= mu_x[j];
        }
        let ylever = (1.0 - pi) * (dy[1] - mu_y[1]) + pi * (dy[0] - mu_y[0]);
        for i in 0..p {
            small_m[i] += ps * c * dx[i] * ylever;
            for j in 0..p {
                big_m[[i, j]] += ps * c * dx[i] * dx[j];
            }
        }
    }
    let gdiff: Vec<f64> = quant
        .gamma1
        .iter()
        .zip(&quant.gamma0)
        .map(|(a, b)| a - b)
        .collect();
    let star_display = -inv
        * (quad(&quant.sigma_xx, &quant.gamma, &quant.gamma)
            - 2.0 * (2.0 * pi - 1.0) * quad(&quant.sigma_xx, &quant.gamma, &gdiff)
            + quad(&big_m, &quant.gamma, &quant.gamma)
            - 2.0 * quant.gamma.iter().zip(&small_m).map(|(g, m)| g * m).sum::<f64>());

    // Display route: adjusted pairs.
    let bdiff: Vec<f64> = quant
        .beta1
        .iter()
        .zip(&quant.beta0)
        .map(|(a, b)| a - b)
        .collect();
    let adj_display = -inv * quad(&quant.sigma_xx_tilde, &quant.beta_adj, &quant.beta_adj)
        + 2.0 * (2.0 * pi - 1.0) * inv
            * quad(&quant.sigma_xx_tilde, &quant.beta_adj, &bdiff);
    let interact_display =
        -inv * quad(&quant.sigma_xx_tilde, &quant.beta_interact, &quant.beta_interact);
    let dba: Vec<f64> = quant
        .beta_interact
        .iter()
        .zip(&quant.beta_adj)
        .map(|(a, b)| a - b)
        .collect();
    let pi_r_adj = pop.components(&quant.beta_adj, q)?.pi_term;
    let cross_display = -inv * quad(&quant.sigma_xx_tilde, &dba, &dba) - pi_r_adj;

    // Recipe route.
    let av = |kind: &EstimatorKind| pop.asymptotic_variance(kind, q);
    let star_recipe = av(&EstimatorKind::StarDiff)? - av(&EstimatorKind::Diff)?;
    let adj_recipe = av(&EstimatorKind::StarAdj)? - av(&EstimatorKind::Adj)?;
    let interact_recipe = av(&EstimatorKind::StarInteract)? - av(&EstimatorKind::Interact)?;
    let cross_recipe = av(&EstimatorKind::StarInteract)? - av(&EstimatorKind::StarAdj)?;

    Ok(Deltas {
        star_minus_diff: DeltaPair { display: star_display, recipe: star_recipe },
        adjstar_minus_adj: DeltaPair { display: adj_display, recipe: adj_recipe },
        interactstar_minus_interact: DeltaPair {
            display: interact_display,
            recipe: interact_recipe,
        },
        interactstar_minus_adjstar: DeltaPair {
            display: cross_display,
            recipe: cross_recipe,
        },
    })
}

// ---------------------------------------------------------------------------
// Sampling-based consistency probes
// ---------------------------------------------------------------------------

/// Outcome of a finite-sample probe of one (estimator, scheme) pair.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub kind: EstimatorKind,
    pub n: usize,
    pub reps: usize,
    /// Monte Carlo mean of n * (proposed SE)^2.
    pub mean_n_se2_new: f64,
    /// Monte Carlo mean of n * (classical OLS SE)^2.
    pub mean_n_se2_ols: f64,
    /// Exact asymptotic variance of the estimator.
    pub asymptotic_variance: f64,
    /// |mean_n_se2_new - asymptotic_variance| / asymptotic_variance.
    pub rel_error_new: f64,
    /// sqrt(n) times the Monte Carlo bias of the point estimator.
    pub sqrt_n_bias: f64,
    /// Monte Carlo standard error of `mean_n_se2_new`.
    pub mc_se_new: f64,
    /// Monte Carlo standard error of `mean_n_se2_ols`.
    pub mc_se_ols: f64,
}

/// Draws a trial of `n` iid units from the population.
pub fn sample_trial(
    pop: &FinitePopulation,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, Vec<UnitProfile>) {
    let cumulative: Vec<f64> = pop
        .atoms
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a.prob;
            Some(*acc)
        })
        .collect();
    let mut atom_ix = Vec::with_capacity(n);
    let mut profiles = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let ix = cumulative.partition_point(|&c| c < u).min(pop.atoms.len() - 1);
        atom_ix.push(ix);
        profiles.push(UnitProfile::stratum_only(pop.atoms[ix].stratum));
    }
    (atom_ix, profiles)
}

fn observed_trial(
    pop: &FinitePopulation,
    atom_ix: &[usize],
    assignments: &[u8],
) -> TrialData {
    let n = atom_ix.len();
    let p = pop.p();
    let mut y = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let mut x = Array2::<f64>::zeros((n, p));
    for (i, &ix) in atom_ix.iter().enumerate() {
        let atom = &pop.atoms[ix];
        y.push(if assignments[i] == 1 { atom.y1 } else { atom.y0 });
        b.push(atom.stratum);
        for j in 0..p {
            x[[i, j]] = atom.x[j];
        }
    }
    TrialData::new(y, assignments.to_vec(), b, x, pop.pi)
}

/// Simulates iid sampling plus scheme assignment and compares the mean
/// scaled squared standard errors to the exact asymptotic variance.
pub fn consistency_probe(
    pop: &FinitePopulation,
    scheme_spec: &SchemeSpec,
    kind: &EstimatorKind,
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<ProbeReport> {
    let q = scheme_spec
        .q_per_stratum(pop.num_strata())
        .ok_or(Error::MissingQ)?;
    let asymptotic = pop.asymptotic_variance(kind, &q)?;
    let scheme = build_scheme(scheme_spec);
    let est = build_estimator(kind);

    let rows: Vec<Result<(f64, f64, f64)>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut r = rng_from(seed, 0x9c, rep as u64);
            let (atom_ix, profiles) = sample_trial(pop, n, &mut r);
            let mut state = AssignmentState::new();
            let mut assignments = Vec::with_capacity(n);
            for profile in &profiles {
                assignments.push(assign_next(scheme.as_ref(), &mut state, profile, &mut r)?);
            }
            let data = observed_trial(pop, &atom_ix, &assignments);
            let tau = est.estimate(&data)?;
            let se_new = variance::se_new(kind, &data, Some(&q))?;
            let (se_ols, _) = variance::se_classical(kind, &data)?;
            Ok((tau, se_new, se_ols))
        })
        .collect();

    let nf = n as f64;
    let mut taus = Vec::with_capacity(reps);
    let mut n_se2_new = Vec::with_capacity(reps);
    let mut n_se2_ols = Vec::with_capacity(reps);
    for row in rows {
        let (tau, se_new, se_ols) = row?;
        taus.push(tau);
        n_se2_new.push(nf * se_new * se_new);
        n_se2_ols.push(nf * se_ols * se_ols);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let sd = |v: &[f64], m: f64| {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
    };
    let m_new = mean(&n_se2_new);
    let m_ols = mean(&n_se2_ols);
    let m_tau = mean(&taus);
    Ok(ProbeReport {
        kind: kind.clone(),
        n,
        reps,
        mean_n_se2_new: m_new,
        mean_n_se2_ols: m_ols,
        asymptotic_variance: asymptotic,
        rel_error_new: (m_new - asymptotic).abs() / asymptotic,
        sqrt_n_bias: nf.sqrt() * (m_tau - pop.tau()),
        mc_se_new: sd(&n_se2_new, m_new) / (reps as f64).sqrt(),
        mc_se_ols: sd(&n_se2_ols, m_ols) / (reps as f64).sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Random population generation for property tests
// ---------------------------------------------------------------------------

/// Bounds for [`random_population`].
#[derive(Debug, Clone, Copy)]
pub struct PopulationBounds {
    pub max_strata: usize,
    pub max_atoms: usize,
    pub max_p: usize,
}

impl Default for PopulationBounds {
    fn default() -> Self {
        PopulationBounds { max_strata: 4, max_atoms: 12, max_p: 3 }
    }
}

/// Draws a random well-posed population: probabilities at least 0.01,
/// outcomes in [-10, 10], positive stratum-centered outcome variances in
/// both arms, and a well-conditioned stratum-centered covariate covariance.
pub fn random_population(rng: &mut ChaCha8Rng, bounds: PopulationBounds) -> FinitePopulation {
    loop {
        let k = rng.gen_range(1..=bounds.max_strata);
        let p = rng.gen_range(0..=bounds.max_p);
        let min_atoms = (2 * k).max(p + 2);
        if min_atoms > bounds.max_atoms {
            continue;
        }
        let m = rng.gen_range(min_atoms..=bounds.max_atoms);
        let mut atoms = Vec::with_capacity(m);
        for i in 0..m {
            // Two atoms per stratum guaranteed up front.
            let stratum = if i < 2 * k { i / 2 + 1 } else { rng.gen_range(1..=k) };
            atoms.push(Atom {
                prob: rng.gen_range(0.01..1.0),
                y1: rng.gen_range(-10.0..10.0),
                y0: rng.gen_range(-10.0..10.0),
                x: (0..p).map(|_| rng.gen_range(-10.0..10.0)).collect(),
                stratum,
            });
        }
        let total: f64 = atoms.iter().map(|a| a.prob).sum();
        for a in &mut atoms {
            a.prob /= total;
        }
        if atoms.iter().any(|a| a.prob < 0.01) {
            continue;
        }
        let pi = *[0.5, 2.0 / 3.0, 0.4][..].get(rng.gen_range(0..3)).unwrap();
        let Ok(pop) = FinitePopulation::new(atoms, pi) else {
            continue;
        };
        // Positive stratum-centered outcome variance in both arms.
        let zero = vec![0.0; p];
        let q0 = vec![0.0; k];
        let Ok(c) = pop.components(&zero, &q0) else {
            continue;
        };
        if c.tilde < 1e-3 {
            continue;
        }
        // Well-conditioned covariate covariances.
        if p > 0 && pop.quantities().is_err() {
            continue;
        }
        return pop;
    }
}

/// Uniform per-stratum q vector at a fraction of the upper bound.
pub fn uniform_q(pop: &FinitePopulation, fraction: f64) -> Vec<f64> {
    vec![fraction * pop.pi * (1.0 - pop.pi); pop.num_strata()]
}
