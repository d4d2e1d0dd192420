//! Sequential treatment-assignment procedures.
//!
//! Each procedure implements [`AssignmentScheme`] and is registered by name
//! in [`SCHEME_REGISTRY`], so configuration and the command line can select
//! variants at runtime. Assignment is inherently sequential: a scheme
//! computes the treatment probability for the next unit from the running
//! [`AssignmentState`], a seeded generator draws the coin, and the state is
//! updated. Given the same spec, profiles, and seed the emitted sequence is
//! bit-reproducible across platforms.

mod block;
mod efron;
mod hu_hu;
mod pocock_simon;
mod simple;
mod urn;

pub use block::StratifiedBlock;
pub use efron::StratifiedEfron;
pub use hu_hu::HuHu;
pub use pocock_simon::PocockSimon;
pub use simple::Simple;
pub use urn::StratifiedWeiUrn;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng, rng_from};

/// Stratum label plus margin levels for one unit awaiting assignment.
/// All labels are 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitProfile {
    pub stratum: usize,
    pub margins: Vec<usize>,
}

impl UnitProfile {
    pub fn stratum_only(stratum: usize) -> Self {
        UnitProfile { stratum, margins: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Tally {
    pub n: u64,
    pub n1: u64,
}

impl Tally {
    fn record(&mut self, assigned: u8) {
        self.n += 1;
        self.n1 += u64::from(assigned);
    }

    /// Running imbalance against the target proportion.
    pub fn imbalance(&self, pi: f64) -> f64 {
        self.n1 as f64 - pi * self.n as f64
    }
}

/// Position within the current permuted block of one stratum.
#[derive(Debug, Clone, Copy, Default)]
pub struct BlockPos {
    pub filled: u32,
    pub treated: u32,
}

/// Urn composition of one stratum.
#[derive(Debug, Clone, Copy)]
pub struct UrnMass {
    pub treat: f64,
    pub control: f64,
}

/// Running counts for the assignment sequence emitted so far.
#[derive(Debug, Clone, Default)]
pub struct AssignmentState {
    pub overall: Tally,
    pub stratum: Vec<Tally>,
    /// One tally vector per margin factor, indexed by level.
    pub margins: Vec<Vec<Tally>>,
    pub block: Vec<BlockPos>,
    pub urn: Vec<Option<UrnMass>>,
}

impl AssignmentState {
    pub fn new() -> Self {
        AssignmentState::default()
    }

    pub fn stratum_tally(&self, stratum: usize) -> Tally {
        self.stratum.get(stratum - 1).copied().unwrap_or_default()
    }

    pub fn margin_tally(&self, margin: usize, level: usize) -> Tally {
        self.margins
            .get(margin)
            .and_then(|m| m.get(level - 1))
            .copied()
            .unwrap_or_default()
    }

    pub fn block_pos(&self, stratum: usize) -> BlockPos {
        self.block.get(stratum - 1).copied().unwrap_or_default()
    }

    fn record(&mut self, profile: &UnitProfile, assigned: u8) {
        self.overall.record(assigned);
        let s = profile.stratum - 1;
        if self.stratum.len() <= s {
            self.stratum.resize(s + 1, Tally::default());
        }
        self.stratum[s].record(assigned);
        if self.margins.len() < profile.margins.len() {
            self.margins.resize(profile.margins.len(), Vec::new());
        }
        for (m, &level) in profile.margins.iter().enumerate() {
            let lv = level - 1;
            if self.margins[m].len() <= lv {
                self.margins[m].resize(lv + 1, Tally::default());
            }
            self.margins[m][lv].record(assigned);
        }
    }
}

/// One sequential randomization procedure.
pub trait AssignmentScheme: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether unit profiles must carry margin levels.
    fn requires_margins(&self) -> bool {
        false
    }

    fn validate_profile(&self, profile: &UnitProfile) -> Result<()> {
        if profile.stratum == 0 {
            return Err(Error::ProfileMismatch("stratum labels are 1-based".into()));
        }
        if self.requires_margins() && profile.margins.is_empty() {
            return Err(Error::ProfileMismatch(format!(
                "{} needs margin levels in the unit profile",
                self.name()
            )));
        }
        Ok(())
    }

    /// Probability that the next unit is assigned to treatment.
    fn treat_prob(&self, state: &AssignmentState, profile: &UnitProfile) -> f64;

    /// Scheme-specific bookkeeping beyond the common tallies.
    fn post_update(&self, _state: &mut AssignmentState, _profile: &UnitProfile, _assigned: u8) {}

    /// The stratum balance parameter the theory pins down for this design,
    /// uniform over strata; `None` when it must be estimated empirically.
    fn q_known(&self) -> Option<f64>;
}

/// Assigns the next unit and updates the state.
pub fn assign_next(
    scheme: &dyn AssignmentScheme,
    state: &mut AssignmentState,
    profile: &UnitProfile,
    rng: &mut ChaCha8Rng,
) -> Result<u8> {
    scheme.validate_profile(profile)?;
    let p = scheme.treat_prob(state, profile);
    let assigned = u8::from(rng.gen::<f64>() < p);
    state.record(profile, assigned);
    scheme.post_update(state, profile, assigned);
    Ok(assigned)
}

/// Runs the scheme over a whole enrollment sequence with a fresh seeded
/// generator. Deterministic given (spec, profiles, seed).
pub fn assign_all(spec: &SchemeSpec, profiles: &[UnitProfile], seed: u64) -> Result<Vec<u8>> {
    let scheme = build_scheme(spec);
    let mut state = AssignmentState::new();
    let mut r = rng(seed);
    let mut out = Vec::with_capacity(profiles.len());
    for profile in profiles {
        out.push(assign_next(scheme.as_ref(), &mut state, profile, &mut r)?);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Specs and the registry
// ---------------------------------------------------------------------------

/// Which randomization procedure, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SchemeKind {
    Simple,
    StratifiedBlock {
        block_size: usize,
    },
    StratifiedEfron {
        kappa: f64,
    },
    StratifiedWeiUrn {
        alpha: f64,
        beta: f64,
    },
    PocockSimon {
        biased_coin_p: f64,
        weights: Vec<f64>,
    },
    HuHu {
        biased_coin_p: f64,
        w_overall: f64,
        w_stratum: f64,
        w_margins: Vec<f64>,
    },
}

/// A randomization procedure with its target allocation and, when theory
/// provides it, the per-stratum balance parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub kind: SchemeKind,
    pub pi_target: f64,
    /// Balance level q, uniform over strata. Populated from theory by
    /// [`SchemeSpec::new`]; can be overridden with an empirical estimate.
    pub q_known: Option<f64>,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind, pi_target: f64) -> Result<Self> {
        if !(pi_target > 0.0 && pi_target < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "target proportion must lie in (0,1), got {pi_target}"
            )));
        }
        match &kind {
            SchemeKind::StratifiedBlock { block_size } => {
                if *block_size == 0 {
                    return Err(Error::InvalidParameter("block size must be positive".into()));
                }
                let treat = *block_size as f64 * pi_target;
                if (treat - treat.round()).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "block size {block_size} times target {pi_target} must be an integer"
                    )));
                }
            }
            SchemeKind::StratifiedEfron { kappa } => {
                if !(0.0..=1.0).contains(kappa) {
                    return Err(Error::InvalidParameter("kappa must lie in [0,1]".into()));
                }
            }
            SchemeKind::StratifiedWeiUrn { alpha, beta } => {
                if *alpha < 0.0 || *beta < 0.0 {
                    return Err(Error::InvalidParameter(
                        "urn masses must be non-negative".into(),
                    ));
                }
            }
            SchemeKind::PocockSimon { biased_coin_p, weights } => {
                if !(0.5..=1.0).contains(biased_coin_p) {
                    return Err(Error::InvalidParameter(
                        "biased coin probability must lie in [0.5, 1]".into(),
                    ));
                }
                if weights.is_empty() || weights.iter().any(|w| *w < 0.0) {
                    return Err(Error::InvalidParameter(
                        "margin weights must be non-negative and non-empty".into(),
                    ));
                }
            }
            SchemeKind::HuHu { biased_coin_p, w_overall, w_stratum, w_margins } => {
                if !(0.5..=1.0).contains(biased_coin_p) {
                    return Err(Error::InvalidParameter(
                        "biased coin probability must lie in [0.5, 1]".into(),
                    ));
                }
                if *w_overall < 0.0 || *w_stratum < 0.0 || w_margins.iter().any(|w| *w < 0.0) {
                    return Err(Error::InvalidParameter(
                        "imbalance weights must be non-negative".into(),
                    ));
                }
            }
            SchemeKind::Simple => {}
        }
        let mut spec = SchemeSpec { kind, pi_target, q_known: None };
        spec.q_known = build_scheme(&spec).q_known();
        if let Some(q) = spec.q_known {
            debug_assert!(q >= 0.0 && q <= pi_target * (1.0 - pi_target) + 1e-12);
        }
        Ok(spec)
    }

    /// Overrides the balance parameter, e.g. with an empirical estimate.
    pub fn with_q(mut self, q: f64) -> Result<Self> {
        let upper = self.pi_target * (1.0 - self.pi_target);
        if !(0.0..=upper + 1e-12).contains(&q) {
            return Err(Error::InvalidParameter(format!(
                "q must lie in [0, {upper}], got {q}"
            )));
        }
        self.q_known = Some(q);
        Ok(self)
    }

    /// Per-stratum q values for `k` strata, when known.
    pub fn q_per_stratum(&self, k: usize) -> Option<Vec<f64>> {
        self.q_known.map(|q| vec![q; k])
    }
}

/// Instantiates the strategy object for a spec.
pub fn build_scheme(spec: &SchemeSpec) -> Box<dyn AssignmentScheme> {
    let pi = spec.pi_target;
    match &spec.kind {
        SchemeKind::Simple => Box::new(Simple::new(pi)),
        SchemeKind::StratifiedBlock { block_size } => {
            Box::new(StratifiedBlock::new(pi, *block_size))
        }
        SchemeKind::StratifiedEfron { kappa } => Box::new(StratifiedEfron::new(pi, *kappa)),
        SchemeKind::StratifiedWeiUrn { alpha, beta } => {
            Box::new(StratifiedWeiUrn::new(pi, *alpha, *beta))
        }
        SchemeKind::PocockSimon { biased_coin_p, weights } => {
            Box::new(PocockSimon::new(pi, *biased_coin_p, weights.clone()))
        }
        SchemeKind::HuHu { biased_coin_p, w_overall, w_stratum, w_margins } => Box::new(
            HuHu::new(pi, *biased_coin_p, *w_overall, *w_stratum, w_margins.clone()),
        ),
    }
}

/// Optional parameters accepted when building a scheme by name. Unset fields
/// fall back to the documented defaults.
#[derive(Debug, Clone, Default)]
pub struct SchemeParams {
    pub block_size: Option<usize>,
    pub efron_kappa: Option<f64>,
    pub urn_alpha: Option<f64>,
    pub urn_beta: Option<f64>,
    pub biased_coin_p: Option<f64>,
    /// Pocock-Simon margin weights, or Hu-Hu margin weights.
    pub margin_weights: Option<Vec<f64>>,
    pub w_overall: Option<f64>,
    pub w_stratum: Option<f64>,
    /// Number of margin factors, used to size default weight vectors.
    pub num_margins: Option<usize>,
}

pub struct SchemeDescriptor {
    pub name: &'static str,
    pub summary: &'static str,
    pub make_kind: fn(&SchemeParams) -> SchemeKind,
}

/// The by-name scheme registry used by configuration and the CLI.
pub static SCHEME_REGISTRY: &[SchemeDescriptor] = &[
    SchemeDescriptor {
        name: "simple",
        summary: "independent coin flips at the target proportion",
        make_kind: |_| SchemeKind::Simple,
    },
    SchemeDescriptor {
        name: "block",
        summary: "stratified permuted blocks (default block size 6)",
        make_kind: |p| SchemeKind::StratifiedBlock { block_size: p.block_size.unwrap_or(6) },
    },
    SchemeDescriptor {
        name: "efron",
        summary: "stratified biased coin (default kappa 0.5)",
        make_kind: |p| SchemeKind::StratifiedEfron { kappa: p.efron_kappa.unwrap_or(0.5) },
    },
    SchemeDescriptor {
        name: "urn",
        summary: "stratified adaptive urn (defaults alpha 1, beta 1)",
        make_kind: |p| SchemeKind::StratifiedWeiUrn {
            alpha: p.urn_alpha.unwrap_or(1.0),
            beta: p.urn_beta.unwrap_or(1.0),
        },
    },
    SchemeDescriptor {
        name: "minimization",
        summary: "margin-based minimization (defaults p 0.75, equal weights)",
        make_kind: |p| {
            let m = p.num_margins.unwrap_or(2);
            SchemeKind::PocockSimon {
                biased_coin_p: p.biased_coin_p.unwrap_or(0.75),
                weights: p
                    .margin_weights
                    .clone()
                    .unwrap_or_else(|| vec![1.0 / m as f64; m]),
            }
        },
    },
    SchemeDescriptor {
        name: "huhu",
        summary: "overall/margin/stratum-weighted biased coin (defaults p 0.75, weights 1/3 each)",
        make_kind: |p| {
            let m = p.num_margins.unwrap_or(2);
            SchemeKind::HuHu {
                biased_coin_p: p.biased_coin_p.unwrap_or(0.75),
                w_overall: p.w_overall.unwrap_or(1.0 / 3.0),
                w_stratum: p.w_stratum.unwrap_or(1.0 / 3.0),
                w_margins: p
                    .margin_weights
                    .clone()
                    .unwrap_or_else(|| vec![1.0 / (3.0 * m as f64); m]),
            }
        },
    },
];

pub fn scheme_names() -> Vec<&'static str> {
    SCHEME_REGISTRY.iter().map(|d| d.name).collect()
}

/// Builds a spec from a registry name and optional parameters.
pub fn spec_from_name(name: &str, pi_target: f64, params: &SchemeParams) -> Result<SchemeSpec> {
    let descriptor = SCHEME_REGISTRY
        .iter()
        .find(|d| d.name == name)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "unknown scheme '{name}'; available: {}",
                scheme_names().join(", ")
            ))
        })?;
    SchemeSpec::new((descriptor.make_kind)(params), pi_target)
}

// ---------------------------------------------------------------------------
// Empirical balance estimation
// ---------------------------------------------------------------------------

/// Empirical estimate of the per-stratum balance parameter for one stratum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QEstimate {
    pub stratum: usize,
    pub q_hat: f64,
    pub mc_se: f64,
}

/// Monte Carlo estimate of the balance parameter of each stratum:
/// the variance of the final within-stratum imbalance, normalized by n and
/// the stratum probability, over independent runs of the scheme on iid
/// profile draws from `atoms` (profile, probability) pairs.
pub fn estimate_q(
    spec: &SchemeSpec,
    atoms: &[(f64, UnitProfile)],
    n: usize,
    reps: usize,
    seed: u64,
) -> Result<Vec<QEstimate>> {
    if reps < 100 {
        return Err(Error::InvalidParameter(
            "need at least 100 replications to estimate q".into(),
        ));
    }
    if atoms.is_empty() {
        return Err(Error::InvalidParameter("no profile atoms supplied".into()));
    }
    let total: f64 = atoms.iter().map(|(w, _)| *w).sum();
    if total <= 0.0 || atoms.iter().any(|(w, _)| *w < 0.0) {
        return Err(Error::InvalidParameter(
            "atom probabilities must be non-negative with a positive sum".into(),
        ));
    }
    let k = atoms.iter().map(|(_, p)| p.stratum).max().unwrap();
    let mut p_stratum = vec![0.0f64; k];
    for (w, profile) in atoms {
        p_stratum[profile.stratum - 1] += w / total;
    }
    if p_stratum.iter().any(|&p| p <= 0.0) {
        return Err(Error::InvalidParameter(
            "every stratum label up to the maximum must have positive probability".into(),
        ));
    }
    let cumulative: Vec<f64> = atoms
        .iter()
        .scan(0.0, |acc, (w, _)| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();

    let scheme = build_scheme(spec);
    let pi = spec.pi_target;
    let d_finals: Vec<Result<Vec<f64>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut r = rng_from(seed, 0x71, rep as u64);
            let mut state = AssignmentState::new();
            for _ in 0..n {
                let u: f64 = r.gen();
                let idx = cumulative.partition_point(|&c| c < u).min(atoms.len() - 1);
                let profile = &atoms[idx].1;
                assign_next(scheme.as_ref(), &mut state, profile, &mut r)?;
            }
            Ok((1..=k).map(|s| state.stratum_tally(s).imbalance(pi)).collect())
        })
        .collect();

    let mut per_stratum: Vec<Vec<f64>> = vec![Vec::with_capacity(reps); k];
    for rep in d_finals {
        let ds = rep?;
        for (s, d) in ds.into_iter().enumerate() {
            per_stratum[s].push(d);
        }
    }

    Ok(per_stratum
        .into_iter()
        .enumerate()
        .map(|(s, ds)| {
            let m = ds.iter().sum::<f64>() / reps as f64;
            let var =
                ds.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (reps as f64 - 1.0);
            let q_hat = var / (n as f64 * p_stratum[s]);
            let mc_se = q_hat * (2.0 / (reps as f64 - 1.0)).sqrt();
            QEstimate { stratum: s + 1, q_hat, mc_se }
        })
        .collect())
}

#[cfg(test)]
mod tests;
