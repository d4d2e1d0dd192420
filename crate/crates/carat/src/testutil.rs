//! Random well-posed trial instances for tests and the acceptance suite.

use ndarray::Array2;
use rand::Rng;

use crate::data::TrialData;
use crate::rng::rng;

/// Draws a random trial with n units, k strata, and p continuous covariates
/// in which every stratum has at least two units in each arm. Outcomes carry
/// a mildly nonlinear signal in the covariates plus stratum effects so
/// adjusted estimators have something to adjust for.
pub fn random_trial(n: usize, k: usize, p: usize, pi: f64, seed: u64) -> TrialData {
    assert!(n >= 4 * k.max(1), "need room for two units per arm per stratum");
    let mut r = rng(seed);
    loop {
        let mut b = Vec::with_capacity(n);
        // Two units per arm per stratum up front, rest random.
        for stratum in 1..=k {
            for _ in 0..4 {
                b.push(stratum);
            }
        }
        while b.len() < n {
            b.push(r.gen_range(1..=k));
        }
        let mut a = Vec::with_capacity(n);
        for i in 0..n {
            if i < 4 * k {
                a.push(u8::from(i % 4 < 2));
            } else {
                a.push(u8::from(r.gen_bool(pi)));
            }
        }
        // Shuffle jointly so unit order carries no structure.
        for i in (1..n).rev() {
            let j = r.gen_range(0..=i);
            b.swap(i, j);
            a.swap(i, j);
        }

        let mut xv = Vec::with_capacity(n * p);
        for _ in 0..n * p {
            xv.push(r.gen_range(-2.0..2.0));
        }
        let x = Array2::from_shape_vec((n, p), xv).unwrap();

        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let stratum_effect = 1.5 * b[i] as f64;
            let mut v = stratum_effect + r.gen_range(-1.0..1.0);
            for j in 0..p {
                let c = 0.5 + j as f64;
                v += c * x[[i, j]] + 0.3 * x[[i, j]] * x[[i, j]];
                if a[i] == 1 {
                    v += 0.4 * c * x[[i, j]];
                }
            }
            if a[i] == 1 {
                v += 2.0 + 0.5 * b[i] as f64;
            }
            y.push(v);
        }

        let data = TrialData::new(y, a, b, x, pi);
        let ok = (1..=k).all(|s| {
            let t = (0..n).filter(|&i| data.b[i] == s && data.a[i] == 1).count();
            let c = (0..n).filter(|&i| data.b[i] == s && data.a[i] == 0).count();
            t >= 2 && c >= 2
        });
        if ok {
            return data;
        }
    }
}
