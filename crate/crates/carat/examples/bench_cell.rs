use std::time::Instant;

use carat::dgp::{DgpSpec, Model};
use carat::schemes::{spec_from_name, SchemeParams};
use carat::sim::{run, ExperimentPlan};

fn main() {
    for (model, scheme, pi) in [
        (Model::M1, "simple", 0.5),
        (Model::M1, "minimization", 0.5),
        (Model::M3, "block", 2.0 / 3.0),
    ] {
        let t = Instant::now();
        let plan = ExperimentPlan::new(
            DgpSpec::new(model, 1000),
            spec_from_name(scheme, pi, &SchemeParams::default()).unwrap(),
            2000,
            7,
        );
        let report = run(&plan).unwrap();
        let diff = report.row("diff").unwrap();
        println!(
            "{:?} {scheme} pi={pi}: {:.2?}  sd(diff)={:.3} se_new={:?} cp_new={:?}",
            model,
            t.elapsed(),
            diff.sd,
            diff.se_new.map(|x| (x * 1000.0).round() / 1000.0),
            diff.cp_new
        );
    }
}
