use super::{AssignmentScheme, AssignmentState, UnitProfile};

/// Independent coin flips at the target proportion.
pub struct Simple {
    pi: f64,
}

impl Simple {
    pub fn new(pi: f64) -> Self {
        Simple { pi }
    }
}

impl AssignmentScheme for Simple {
    fn name(&self) -> &'static str {
        "simple"
    }

    fn treat_prob(&self, _state: &AssignmentState, _profile: &UnitProfile) -> f64 {
        self.pi
    }

    fn q_known(&self) -> Option<f64> {
        Some(self.pi * (1.0 - self.pi))
    }
}
