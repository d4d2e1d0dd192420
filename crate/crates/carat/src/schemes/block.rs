use super::{AssignmentScheme, AssignmentState, BlockPos, UnitProfile};

/// Stratified permuted-block randomization.
///
/// Within each stratum, consecutive blocks of `block_size` slots hold exactly
/// `block_size * pi` treated units in uniformly random order. Drawing the
/// next slot of a shuffled block is equivalent to a coin with probability
/// (remaining treated slots) / (remaining slots), which is how the sequence
/// is generated here.
pub struct StratifiedBlock {
    pi: f64,
    block_size: u32,
    treat_per_block: u32,
}

impl StratifiedBlock {
    pub fn new(pi: f64, block_size: usize) -> Self {
        let treat = (block_size as f64 * pi).round() as u32;
        StratifiedBlock { pi, block_size: block_size as u32, treat_per_block: treat }
    }
}

impl AssignmentScheme for StratifiedBlock {
    fn name(&self) -> &'static str {
        "block"
    }

    fn treat_prob(&self, state: &AssignmentState, profile: &UnitProfile) -> f64 {
        let pos = state.block_pos(profile.stratum);
        let remaining = (self.block_size - pos.filled) as f64;
        let remaining_treat = (self.treat_per_block - pos.treated) as f64;
        debug_assert!(remaining > 0.0);
        let _ = self.pi;
        remaining_treat / remaining
    }

    fn post_update(&self, state: &mut AssignmentState, profile: &UnitProfile, assigned: u8) {
        let s = profile.stratum - 1;
        if state.block.len() <= s {
            state.block.resize(s + 1, BlockPos::default());
        }
        let pos = &mut state.block[s];
        pos.filled += 1;
        pos.treated += u32::from(assigned);
        if pos.filled == self.block_size {
            *pos = BlockPos::default();
        }
    }

    fn q_known(&self) -> Option<f64> {
        // Permuted blocks achieve strong balance within strata.
        Some(0.0)
    }
}
