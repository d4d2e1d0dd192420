use super::{AssignmentScheme, AssignmentState, UnitProfile, UrnMass};

/// Stratified adaptive urn.
///
/// Each stratum's urn starts with `alpha * pi` treatment mass and
/// `alpha * (1 - pi)` control mass; the draw probability is proportional to
/// mass and each draw adds `beta` mass to the opposite type. A degenerate
/// urn (zero total mass) falls back to the target proportion.
pub struct StratifiedWeiUrn {
    pi: f64,
    alpha: f64,
    beta: f64,
}

impl StratifiedWeiUrn {
    pub fn new(pi: f64, alpha: f64, beta: f64) -> Self {
        StratifiedWeiUrn { pi, alpha, beta }
    }

    fn initial(&self) -> UrnMass {
        UrnMass { treat: self.alpha * self.pi, control: self.alpha * (1.0 - self.pi) }
    }
}

impl AssignmentScheme for StratifiedWeiUrn {
    fn name(&self) -> &'static str {
        "urn"
    }

    fn treat_prob(&self, state: &AssignmentState, profile: &UnitProfile) -> f64 {
        let mass = state
            .urn
            .get(profile.stratum - 1)
            .copied()
            .flatten()
            .unwrap_or_else(|| self.initial());
        let total = mass.treat + mass.control;
        if total <= 0.0 {
            self.pi
        } else {
            mass.treat / total
        }
    }

    fn post_update(&self, state: &mut AssignmentState, profile: &UnitProfile, assigned: u8) {
        let s = profile.stratum - 1;
        if state.urn.len() <= s {
            state.urn.resize(s + 1, None);
        }
        let mass = state.urn[s].get_or_insert_with(|| self.initial());
        if assigned == 1 {
            mass.control += self.beta;
        } else {
            mass.treat += self.beta;
        }
    }

    fn q_known(&self) -> Option<f64> {
        // Between zero and pi (1 - pi); estimated empirically.
        None
    }
}
