use super::{AssignmentScheme, AssignmentState, UnitProfile};

/// Stratified biased-coin design, generalized to unequal target allocation.
///
/// With running within-stratum imbalance D measured against the target:
/// P(treat) = pi when D = 0, pi (1 - kappa) when D > 0, and
/// pi + (1 - pi) kappa when D < 0. At pi = 1/2 the default kappa = 0.5
/// recovers the classic 0.75 / 0.25 biased coin.
pub struct StratifiedEfron {
    pi: f64,
    kappa: f64,
}

impl StratifiedEfron {
    pub fn new(pi: f64, kappa: f64) -> Self {
        StratifiedEfron { pi, kappa }
    }
}

const IMBALANCE_EPS: f64 = 1e-9;

impl AssignmentScheme for StratifiedEfron {
    fn name(&self) -> &'static str {
        "efron"
    }

    fn treat_prob(&self, state: &AssignmentState, profile: &UnitProfile) -> f64 {
        let d = state.stratum_tally(profile.stratum).imbalance(self.pi);
        if d > IMBALANCE_EPS {
            self.pi * (1.0 - self.kappa)
        } else if d < -IMBALANCE_EPS {
            self.pi + (1.0 - self.pi) * self.kappa
        } else {
            self.pi
        }
    }

    fn q_known(&self) -> Option<f64> {
        // The biased coin achieves strong balance within strata.
        Some(0.0)
    }
}
