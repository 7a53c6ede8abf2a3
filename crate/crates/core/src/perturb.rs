//! Perturbed-leader action oracle: exponential perturbation plus a
//! budget-constrained argmax over pure strategies.
//!
//! The perturbation is exponential with rate `eta` (mean `1/eta`); the
//! bound's `(log N + 1)/eta` term only comes out under the rate reading,
//! so that is the one implemented.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::game::DefenderAction;

/// One fresh draw of the additive noise vector z.
#[derive(Debug, Clone)]
pub struct PerturbationVector {
    pub z: Vec<f64>,
}

/// Draws `n` i.i.d. exponential(eta) values.
pub fn sample_perturbation<R: Rng>(n: usize, eta: f64, rng: &mut R) -> Result<PerturbationVector> {
    if n == 0 {
        return Err(Error::invalid_parameter("n", "must be >= 1".to_string()));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid_parameter(
            "eta",
            format!("must be > 0, got {eta}"),
        ));
    }
    let exp = Exp::new(eta).expect("eta checked above");
    Ok(PerturbationVector {
        z: (0..n).map(|_| exp.sample(rng)).collect(),
    })
}

/// Covers exactly the `k` largest entries of `scores`, ties going to the
/// lowest index. With exponential noise added to nonnegative estimates the
/// top-k set also maximizes `v . scores` over all coverages of size <= k.
pub fn best_response(scores: &[f64], k: usize) -> Result<DefenderAction> {
    let n = scores.len();
    if k > n {
        return Err(Error::invalid_parameter(
            "k",
            format!("budget {k} exceeds {n} targets"),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".to_string()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if k > 0 && k < n {
        // Partial selection keeps the resampling loop cheap; the full sort
        // is only needed for the first k slots.
        order.select_nth_unstable_by(k - 1, |&a, &b| {
            scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b))
        });
    }
    Ok(DefenderAction::from_indices(n, &order[..k]))
}
