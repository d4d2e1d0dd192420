//! Regenerates the frozen true-effect constants.
//! cargo run -p carat --release --example oracle_tau

use carat::dgp::{integrate_true_tau, Model};

fn main() {
    for (model, draws, seed) in [
        (Model::M2, 10_000_000u64, 20_240_501u64),
        (Model::M3, 40_000_000u64, 20_240_502u64),
    ] {
        let t = integrate_true_tau(model, draws, seed);
        println!(
            "{} {} {} {:.15e} {:.15e}",
            model.index(),
            seed,
            draws,
            t.value,
            t.mc_se
        );
    }
}
