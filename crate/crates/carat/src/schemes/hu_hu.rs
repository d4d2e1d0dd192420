use crate::error::{Error, Result};

use super::{AssignmentScheme, AssignmentState, UnitProfile};

/// Biased-coin design balancing overall, margin, and within-stratum
/// imbalances simultaneously.
///
/// A candidate arm's score is the weighted sum of squared post-assignment
/// imbalances, each measured against the target proportion:
/// w_o D_overall^2 + sum_m w_m D_margin^2 + w_s D_stratum^2. The arm with
/// the smaller score is assigned with the biased-coin probability; ties fall
/// back to the target proportion.
pub struct HuHu {
    pi: f64,
    biased_coin_p: f64,
    w_overall: f64,
    w_stratum: f64,
    w_margins: Vec<f64>,
}

impl HuHu {
    pub fn new(
        pi: f64,
        biased_coin_p: f64,
        w_overall: f64,
        w_stratum: f64,
        w_margins: Vec<f64>,
    ) -> Self {
        HuHu { pi, biased_coin_p, w_overall, w_stratum, w_margins }
    }

    fn score(&self, state: &AssignmentState, profile: &UnitProfile, arm: u8) -> f64 {
        let inc = f64::from(arm);
        let post = |n1: u64, n: u64| (n1 as f64 + inc) - self.pi * (n as f64 + 1.0);

        let o = state.overall;
        let mut score = self.w_overall * post(o.n1, o.n).powi(2);
        for (m, &level) in profile.margins.iter().enumerate() {
            let t = state.margin_tally(m, level);
            score += self.w_margins[m] * post(t.n1, t.n).powi(2);
        }
        let s = state.stratum_tally(profile.stratum);
        score += self.w_stratum * post(s.n1, s.n).powi(2);
        score
    }
}

const TIE_EPS: f64 = 1e-12;

impl AssignmentScheme for HuHu {
    fn name(&self) -> &'static str {
        "huhu"
    }

    fn requires_margins(&self) -> bool {
        true
    }

    fn validate_profile(&self, profile: &UnitProfile) -> Result<()> {
        if profile.stratum == 0 {
            return Err(Error::ProfileMismatch("stratum labels are 1-based".into()));
        }
        if profile.margins.len() != self.w_margins.len() {
            return Err(Error::ProfileMismatch(format!(
                "design has {} margin weights but the profile carries {} margins",
                self.w_margins.len(),
                profile.margins.len()
            )));
        }
        Ok(())
    }

    fn treat_prob(&self, state: &AssignmentState, profile: &UnitProfile) -> f64 {
        let score_treat = self.score(state, profile, 1);
        let score_control = self.score(state, profile, 0);
        if score_treat < score_control - TIE_EPS {
            self.biased_coin_p
        } else if score_control < score_treat - TIE_EPS {
            1.0 - self.biased_coin_p
        } else {
            self.pi
        }
    }

    fn q_known(&self) -> Option<f64> {
        // Positive stratum weight forces strong balance within strata.
        Some(0.0)
    }
}
