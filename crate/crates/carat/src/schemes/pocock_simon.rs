use crate::error::{Error, Result};

use super::{AssignmentScheme, AssignmentState, UnitProfile};

/// Margin-based minimization.
///
/// For a new unit, each candidate arm's imbalance is the weighted sum over
/// the unit's margin levels of |(n1 + d1)(1 - pi) - (n0 + d0) pi|, where
/// (n1, n0) are the arm counts among previously assigned units sharing that
/// margin level and (d1, d0) is the candidate increment. The arm minimizing
/// total imbalance is assigned with the biased-coin probability; exact ties
/// fall back to the target proportion.
pub struct PocockSimon {
    pi: f64,
    biased_coin_p: f64,
    weights: Vec<f64>,
}

impl PocockSimon {
    pub fn new(pi: f64, biased_coin_p: f64, weights: Vec<f64>) -> Self {
        PocockSimon { pi, biased_coin_p, weights }
    }

    fn imbalance(&self, state: &AssignmentState, profile: &UnitProfile, arm: u8) -> f64 {
        let (d1, d0) = if arm == 1 { (1.0, 0.0) } else { (0.0, 1.0) };
        profile
            .margins
            .iter()
            .enumerate()
            .map(|(m, &level)| {
                let t = state.margin_tally(m, level);
                let n1 = t.n1 as f64 + d1;
                let n0 = (t.n - t.n1) as f64 + d0;
                self.weights[m] * (n1 * (1.0 - self.pi) - n0 * self.pi).abs()
            })
            .sum()
    }
}

const TIE_EPS: f64 = 1e-12;

impl AssignmentScheme for PocockSimon {
    fn name(&self) -> &'static str {
        "minimization"
    }

    fn requires_margins(&self) -> bool {
        true
    }

    fn validate_profile(&self, profile: &UnitProfile) -> Result<()> {
        if profile.stratum == 0 {
            return Err(Error::ProfileMismatch("stratum labels are 1-based".into()));
        }
        if profile.margins.len() != self.weights.len() {
            return Err(Error::ProfileMismatch(format!(
                "minimization has {} margin weights but the profile carries {} margins",
                self.weights.len(),
                profile.margins.len()
            )));
        }
        Ok(())
    }

    fn treat_prob(&self, state: &AssignmentState, profile: &UnitProfile) -> f64 {
        let imb_treat = self.imbalance(state, profile, 1);
        let imb_control = self.imbalance(state, profile, 0);
        if imb_treat < imb_control - TIE_EPS {
            self.biased_coin_p
        } else if imb_control < imb_treat - TIE_EPS {
            1.0 - self.biased_coin_p
        } else {
            self.pi
        }
    }

    fn q_known(&self) -> Option<f64> {
        // Imbalances are dependent across strata; no per-stratum balance
        // parameter is available for this design.
        None
    }
}
