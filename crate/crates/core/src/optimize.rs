//! Optimization-to-decision reduction: minimize `mu` subject to
//! `sum x_i P_i <= mu I` and `sum x_i C_i >= I` by binary search over a
//! geometric grid of guesses.
//!
//! The grid is `mu_lower (1 + eps)^k` for `k = 0 .. K_grid` with
//! `K_grid = ceil(ln(mu_upper/mu_lower) / ln(1 + eps))`, anchored at
//! `mu_lower` exactly. A guess `mu` is tested by running the decision solver
//! at accuracy `eps/3` on the rescaled instance with packing matrices
//! `(1 - eps/3) mu^{-1} P_i`; feasibility of guesses is monotone in `mu`, so
//! the binary search finds the unique smallest feasible grid point. An
//! infeasible answer one grid step below it certifies `mu <= (1 + eps)
//! mu_OPT`.
//!
//! The returned `x` is the decision witness divided by
//! `lambda_min(sum x_i C_i)`, making the covering constraint hold exactly;
//! the packing constraint then holds within the oracle's feasible slack
//! `(1 + eps/3)/(1 - eps/3) <= 1 + eps`. The final decision answer is
//! re-checked once through [`crate::verify::check_feasibility_certificate`]
//! as a safety net.

use crate::decision::{solve_decision, Resolution, SolverConfig};
use crate::instance::MixedInstance;
use crate::scalar::Scalar;
use crate::symmat::weighted_sum;
use crate::verify::check_feasibility_certificate;
use crate::{Error, Result};

/// Answer of the optimization reduction.
#[derive(Debug, Clone)]
pub struct OptimizationResult<T> {
    /// Smallest feasible grid point; `mu <= (1 + eps) mu_OPT`.
    pub mu: T,
    /// Rescaled witness: `sum x_i C_i >= I` exactly,
    /// `sum x_i P_i <= (1 + eps) mu I`.
    pub x: Vec<T>,
    /// Number of decision-oracle invocations.
    pub oracle_calls: u64,
    /// Audit log of `(mu_guess, answer tag)` in the order tested.
    pub guesses: Vec<(T, &'static str)>,
}

/// Minimizes `mu` by binary search over decision guesses. `mu_range`
/// overrides the bracket from [`MixedInstance::mu_bounds`]; it is required
/// when every covering matrix is singular (infinite upper bound).
pub fn solve<T: Scalar>(
    inst: &MixedInstance<T>,
    eps: T,
    cfg: &SolverConfig<T>,
    mu_range: Option<(T, T)>,
) -> Result<OptimizationResult<T>> {
    if !(eps > T::zero()) || !eps.is_finite() {
        return Err(Error::config(format!("eps must be positive, got {eps}")));
    }
    let (mu_lo, mu_hi) = match mu_range {
        Some((lo, hi)) => (lo, hi),
        None => inst.mu_bounds()?,
    };
    if !(mu_lo > T::zero()) || !mu_lo.is_finite() {
        return Err(Error::config(format!(
            "mu lower bound must be positive and finite, got {mu_lo}"
        )));
    }
    if !mu_hi.is_finite() {
        return Err(Error::config(
            "mu upper bound is infinite (every covering matrix is singular); \
             pass an explicit mu_range",
        ));
    }
    if mu_hi < mu_lo {
        return Err(Error::config(format!(
            "empty mu range [{mu_lo}, {mu_hi}]"
        )));
    }

    let ratio = (mu_hi / mu_lo).to_f64_lossy();
    let k_grid = (ratio.ln() / (T::one() + eps).to_f64_lossy().ln())
        .ceil()
        .max(0.0) as u64;
    let grid_point = |k: u64| mu_lo * (T::one() + eps).powi(k as i32);

    let mut dec_cfg = cfg.clone();
    dec_cfg.eps = eps / T::c(3.0);

    let mut oracle_calls: u64 = 0;
    let mut guesses: Vec<(T, &'static str)> = Vec::new();
    // Tests one guess; returns the witness on a feasible answer.
    let mut test = |mu: T| -> Result<Option<Vec<T>>> {
        let scaled = inst.scale_for_guess(mu, eps)?;
        let out = solve_decision(&scaled, &dec_cfg)?;
        oracle_calls += 1;
        guesses.push((mu, out.tag()));
        match out.resolution {
            Resolution::Feasible { x } => Ok(Some(x)),
            Resolution::Infeasible { .. } => Ok(None),
            Resolution::IterationLimit { detail, .. } => Err(Error::SolverFailure(format!(
                "decision oracle hit its iteration limit at guess mu = {mu}: {detail}"
            ))),
        }
    };

    // Establish the binary-search invariant: `hi` is feasible.
    let mut hi = k_grid;
    let mut best = match test(grid_point(hi))? {
        Some(x) => x,
        None => {
            return Err(Error::SolverFailure(format!(
                "internal consistency: guess mu_upper = {} reported infeasible; \
                 the supplied range does not contain mu_OPT",
                grid_point(hi)
            )))
        }
    };
    let mut lo = 0u64;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match test(grid_point(mid))? {
            Some(x) => {
                best = x;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    let mu = grid_point(hi);

    // Safety net: the final decision answer must satisfy its own feasibility
    // certificate on the rescaled instance at the run's internal accuracy.
    let scaled = inst.scale_for_guess(mu, eps)?;
    let report = check_feasibility_certificate(&scaled, &best, dec_cfg.eps / T::c(3.0))?;
    if !report.passed {
        return Err(Error::SolverFailure(format!(
            "internal consistency: final answer fails its feasibility certificate \
             (margin {})",
            report.margin
        )));
    }

    // Rescale so the covering constraint holds exactly.
    let psi = weighted_sum(inst.covering(), &best)?;
    let (lmin, _) = crate::symmat::lambda_extremes(&psi)?;
    if !(lmin > T::zero()) {
        return Err(Error::SolverFailure(
            "internal consistency: feasible witness has singular covering aggregate".into(),
        ));
    }
    let x = best.iter().map(|&v| v / lmin).collect();

    Ok(OptimizationResult {
        mu,
        x,
        oracle_calls,
        guesses,
    })
}
