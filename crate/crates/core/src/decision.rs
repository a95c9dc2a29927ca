//! The core decision solver: multiplicative-weights iterations over the
//! matrix exponential potentials.
//!
//! Starting from `x_i = 1/(d lambda_max(P_i))`, each iteration computes the
//! normalized gradients `gradP_i = <P_i, Y>/Tr Y` and `gradC_i = <C_i, Z>/Tr Z`
//! (`Y = exp(Phi)`, `Z = exp(-Psi)` for the aggregates `Phi = sum x_i P_i`,
//! `Psi = sum x_i C_i`), selects the update set
//! `W = {i : gradP_i <= (1 - eps/2) gradC_i}`, and grows `x_i` by the factor
//! `1 + alpha delta_i` with `delta_i = (1 - gradP_i/gradC_i)/2` on `W`. The
//! loop ends when either aggregate reaches the threshold `K` (Feasible) or
//! `W` empties (Infeasible, with the trace-normalized pair `(Y, Z)` as
//! witness).
//!
//! The caller's `eps` is rescaled internally to `eps/3`; the Feasible output
//! then satisfies `lambda_max(Phi) <= (1 + eps) lambda_min(Psi)`.
//!
//! Exact mode performs two dense eigendecompositions per iteration and logs
//! the potential `(1-eps) smax(Phi) - smin(Psi)`; approximate mode replaces
//! them with Lanczos termination checks and sketched gradients from the
//! oracle layer.

use std::cell::RefCell;
use std::io::Write;

use crate::expo_oracle::{
    default_sketch_columns, gradients_from_eigs, lanczos_top_eig, sketched_gradients,
    CoveringExpOperator, DefaultCoveringSolver, ExpOracleConfig,
};
use crate::instance::MixedInstance;
use crate::scalar::{log_sum_exp, Scalar};
use crate::symmat::{eig_sym, weighted_sum, SymMatrix};
use crate::{Error, Result};

pub use crate::expo_oracle::Mode;

/// Largest admissible accuracy; larger requests are clamped (or accepted
/// as-is when `clamp_eps` is off).
pub const EPS_MAX: f64 = 1.0 / 20.0;

/// Decision-solver configuration.
#[derive(Debug, Clone)]
pub struct SolverConfig<T> {
    /// Target accuracy; admissible range `[(nd)^{-3}, 1/20]`.
    pub eps: T,
    pub mode: Mode,
    /// Overrides the threshold `K = 4 ln(n d rho) / eps_internal`.
    pub k_override: Option<T>,
    /// Covering matrices commute: drop the width from the threshold,
    /// `K = 4 ln(n d) / eps_internal`.
    pub commuting_covering: bool,
    /// Safety cap; `None` uses ten times the explicit iteration bound.
    pub max_iters: Option<u64>,
    pub seed: u64,
    /// Record the potential in the iterate state (exact mode only).
    pub log_potential: bool,
    /// Clamp `eps` down to 1/20 when the caller exceeds it. Disabled only by
    /// diagnostics that need to run at a coarser accuracy than the clamp.
    pub clamp_eps: bool,
    /// Sketch width override for approximate mode.
    pub sketch_columns: Option<usize>,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        SolverConfig {
            eps: T::c(0.05),
            mode: Mode::Exact,
            k_override: None,
            commuting_covering: false,
            max_iters: None,
            seed: 0,
            log_potential: true,
            clamp_eps: true,
            sketch_columns: None,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn with_eps(eps: T) -> Self {
        SolverConfig {
            eps,
            ..Self::default()
        }
    }
}

/// One iteration's view of the solver, handed to observers just before the
/// multiplicative step is applied.
#[derive(Debug, Clone)]
pub struct IterateState<T> {
    pub t: u64,
    pub x: Vec<T>,
    pub k: T,
    pub alpha: T,
    pub grad_p: Vec<T>,
    pub grad_c: Vec<T>,
    pub w: Vec<usize>,
    /// Step sizes in `[0, 1/2]`, zero off `w`.
    pub delta: Vec<T>,
    /// `(1-eps) smax(Phi) - smin(Psi)`; `None` in approximate mode or when
    /// logging is off.
    pub potential: Option<T>,
    /// Phase index `floor(log2(Tr Y / Tr Z))`; `None` in approximate mode.
    pub phase: Option<i64>,
    /// `lambda_max(Phi)`, `lambda_min(Psi)`; NaN in approximate mode.
    pub lambda_max_phi: T,
    pub lambda_min_psi: T,
}

/// Terminal answer of a decision run.
#[derive(Debug, Clone)]
pub enum Resolution<T> {
    Feasible { x: Vec<T> },
    /// Witness pair, trace-normalized (`Y/Tr Y`, `Z/Tr Z`): the certificate
    /// inequality only involves the normalized traces, and the raw
    /// exponentials overflow at solver-scale thresholds.
    Infeasible { y: SymMatrix<T>, z: SymMatrix<T> },
    IterationLimit { x: Vec<T>, detail: String },
}

#[derive(Debug, Clone)]
pub struct DecisionOutcome<T> {
    pub resolution: Resolution<T>,
    pub iterations: u64,
    /// Number of distinct phases observed (exact mode; 0 in approximate mode).
    pub phase_count: u64,
    pub k_threshold: T,
    pub eps_internal: T,
    /// Final aggregate extremes, computed exactly at exit.
    pub lambda_max_phi: T,
    pub lambda_min_psi: T,
}

impl<T: Scalar> DecisionOutcome<T> {
    pub fn tag(&self) -> &'static str {
        match self.resolution {
            Resolution::Feasible { .. } => "feasible",
            Resolution::Infeasible { .. } => "infeasible",
            Resolution::IterationLimit { .. } => "iteration-limit",
        }
    }

    pub fn x(&self) -> Option<&[T]> {
        match &self.resolution {
            Resolution::Feasible { x } | Resolution::IterationLimit { x, .. } => Some(x),
            Resolution::Infeasible { .. } => None,
        }
    }
}

/// Per-iteration callback; `observe` runs after the update set and step sizes
/// are known but before the step is applied.
pub trait IterationObserver<T> {
    fn observe(&mut self, state: &IterateState<T>);
}

/// Observer that writes one tab-separated line per iteration:
/// `t phase lambda_max_phi lambda_min_psi potential |W|`.
pub struct TraceSink<W> {
    writer: W,
    pub error: Option<std::io::Error>,
}

impl<W: Write> TraceSink<W> {
    pub fn new(writer: W) -> Self {
        TraceSink {
            writer,
            error: None,
        }
    }
}

impl<T: Scalar, W: Write> IterationObserver<T> for TraceSink<W> {
    fn observe(&mut self, state: &IterateState<T>) {
        if self.error.is_some() {
            return;
        }
        let phase = state
            .phase
            .map_or_else(|| "nan".to_string(), |s| s.to_string());
        let potential = state
            .potential
            .map_or_else(|| "nan".to_string(), |p| format!("{p:.12e}"));
        if let Err(e) = writeln!(
            self.writer,
            "{}\t{}\t{:.12e}\t{:.12e}\t{}\t{}",
            state.t,
            phase,
            state.lambda_max_phi,
            state.lambda_min_psi,
            potential,
            state.w.len()
        ) {
            self.error = Some(e);
        }
    }
}

struct NoopObserver;
impl<T> IterationObserver<T> for NoopObserver {
    fn observe(&mut self, _state: &IterateState<T>) {}
}

// ---------------------------------------------------------------------------
// Standalone operations
// ---------------------------------------------------------------------------

/// Gradients per the configured mode: exact normalized trace products, or
/// the oracle layer's sketched estimates (`stream` selects the sketch).
pub fn compute_gradients<T: Scalar>(
    inst: &MixedInstance<T>,
    x: &[T],
    cfg: &ExpOracleConfig<T>,
    stream: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    sketched_gradients(inst, x, cfg, stream)
}

/// Update set `W = {i : gradP_i <= (1 - eps/2) gradC_i}` (boundary included).
pub fn update_set<T: Scalar>(grad_p: &[T], grad_c: &[T], eps: T) -> Vec<usize> {
    let factor = T::one() - eps / T::c(2.0);
    (0..grad_p.len())
        .filter(|&i| grad_p[i] <= factor * grad_c[i])
        .collect()
}

/// Step sizes `delta_i = (1 - gradP_i/gradC_i)/2` on `W`, zero elsewhere.
/// When `gradC_i = 0`, membership already forces `gradP_i = 0` and the step
/// size is defined as zero.
pub fn step_sizes<T: Scalar>(grad_p: &[T], grad_c: &[T], w: &[usize]) -> Vec<T> {
    let half = T::c(0.5);
    let mut delta = vec![T::zero(); grad_p.len()];
    for &i in w {
        if grad_c[i] > T::zero() {
            let d = half * (T::one() - grad_p[i] / grad_c[i]);
            delta[i] = d.max(T::zero()).min(half);
        }
    }
    delta
}

/// Multiplicative step `x_i <- x_i (1 + alpha delta_i)`.
pub fn step<T: Scalar>(x: &[T], delta: &[T], alpha: T) -> Vec<T> {
    x.iter()
        .zip(delta)
        .map(|(&xi, &di)| xi * (T::one() + alpha * di))
        .collect()
}

/// Exact-mode termination test: `lambda_max(Phi) >= K` or
/// `lambda_min(Psi) >= K` (packing checked first).
pub fn termination_check_exact<T: Scalar>(
    inst: &MixedInstance<T>,
    x: &[T],
    k: T,
) -> Result<bool> {
    let phi = weighted_sum(inst.packing(), x)?;
    let (_, lmax) = crate::symmat::lambda_extremes(&phi)?;
    if lmax >= k {
        return Ok(true);
    }
    let psi = weighted_sum(inst.covering(), x)?;
    let (lmin, _) = crate::symmat::lambda_extremes(&psi)?;
    Ok(lmin >= k)
}

/// Termination test for the configured mode. Approximate mode uses Lanczos
/// (eta = 1/2) on `Phi` and on the covering exponential operator, triggering
/// inside the relaxed window `[K, 2K]`; a degraded Lanczos run falls back to
/// the exact test.
pub fn termination_check<T: Scalar>(
    inst: &MixedInstance<T>,
    x: &[T],
    k: T,
    cfg: &ExpOracleConfig<T>,
) -> Result<bool> {
    if cfg.mode == Mode::Exact {
        return termination_check_exact(inst, x, k);
    }
    let eta = T::c(0.5);
    let np = inst.n_p();
    let packing = inst.packing();
    let pack_res = lanczos_top_eig(
        |v, out| {
            for o in out.iter_mut() {
                *o = T::zero();
            }
            for (m, &xi) in packing.iter().zip(x) {
                if xi != T::zero() {
                    m.matvec_add(v, xi, out);
                }
            }
        },
        np,
        eta,
        cfg.seed ^ 0x7465_726d,
    )?;
    if pack_res.degraded {
        return termination_check_exact(inst, x, k);
    }
    // estimate <= lambda_max, so crossing K certifies lambda_max >= K; the
    // (1 - eta) guarantee ensures the trigger fires by lambda_max = 2K.
    if pack_res.estimate >= k {
        return Ok(true);
    }

    // Covering side: lambda_max(B) = exp(-lambda_min(Psi)/2) for the
    // operator B ~ exp(-Psi/2); a (1 - eta)-accurate estimate locates
    // lambda_min(Psi) within an additive 2 ln 2.
    let cov_op = CoveringExpOperator::new(inst, x, cfg)?;
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let cov_res = lanczos_top_eig(
        |v, out| match cov_op.apply(v) {
            Ok(w) => out.copy_from_slice(&w),
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                for o in out.iter_mut() {
                    *o = T::zero();
                }
            }
        },
        inst.n_c(),
        eta,
        cfg.seed ^ 0x636f_7665,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if cov_res.degraded || cov_res.estimate <= T::zero() {
        return termination_check_exact(inst, x, k);
    }
    let two = T::c(2.0);
    let lower = -two * cov_res.estimate.ln() - two * two.ln();
    Ok(lower >= k)
}

/// Potential `(1-eps) smax(Phi) - smin(Psi)
///  = (1-eps) ln Tr exp(Phi) + ln Tr exp(-Psi)`,
/// evaluated through log-sum-exp of the eigenvalues (overflow-safe).
pub fn potential<T: Scalar>(inst: &MixedInstance<T>, x: &[T], eps: T) -> Result<T> {
    let phi = weighted_sum(inst.packing(), x)?;
    let psi = weighted_sum(inst.covering(), x)?;
    let ev_phi = eig_sym(&phi)?.eigenvalues;
    let ev_psi = eig_sym(&psi)?.eigenvalues;
    Ok(potential_from_eigenvalues(&ev_phi, &ev_psi, eps))
}

fn potential_from_eigenvalues<T: Scalar>(ev_phi: &[T], ev_psi: &[T], eps: T) -> T {
    let neg: Vec<T> = ev_psi.iter().map(|&l| -l).collect();
    (T::one() - eps) * log_sum_exp(ev_phi) + log_sum_exp(&neg)
}

/// Phase index `s = floor(log2(Tr Y / Tr Z))`.
pub fn phase_index<T: Scalar>(inst: &MixedInstance<T>, x: &[T]) -> Result<i64> {
    let phi = weighted_sum(inst.packing(), x)?;
    let psi = weighted_sum(inst.covering(), x)?;
    let ev_phi = eig_sym(&phi)?.eigenvalues;
    let ev_psi = eig_sym(&psi)?.eigenvalues;
    Ok(phase_from_eigenvalues(&ev_phi, &ev_psi))
}

fn phase_from_eigenvalues<T: Scalar>(ev_phi: &[T], ev_psi: &[T]) -> i64 {
    let neg: Vec<T> = ev_psi.iter().map(|&l| -l).collect();
    let log_ratio = log_sum_exp(ev_phi) - log_sum_exp(&neg);
    (log_ratio.to_f64_lossy() / std::f64::consts::LN_2).floor() as i64
}

/// Explicit iteration ceiling assembled from the phase and per-phase counts:
/// `ceil(log2(n e^{2K})) * [200 ln(n d rho)/eps * ln(K d) + 96 ln(K d)/(eps alpha)]`
/// with `alpha = 1/(8K)`, all in the solver's internal `eps`.
pub fn explicit_iteration_bound(n: usize, d: usize, rho: f64, eps: f64, k: f64) -> f64 {
    let phases = ((n as f64).ln() + 2.0 * k) / std::f64::consts::LN_2;
    let lnkd = (k * d as f64).ln().max(1.0);
    let ndrho = (n as f64) * (d as f64) * rho;
    let alpha = 1.0 / (8.0 * k);
    phases.ceil() * (200.0 * ndrho.ln() / eps * lnkd + 96.0 * lnkd / (eps * alpha))
}

// ---------------------------------------------------------------------------
// The solver loop
// ---------------------------------------------------------------------------

/// Decision solve with the default (no-op) observer.
pub fn solve_decision<T: Scalar>(
    inst: &MixedInstance<T>,
    cfg: &SolverConfig<T>,
) -> Result<DecisionOutcome<T>> {
    solve_decision_with_observer(inst, cfg, &mut NoopObserver)
}

/// Decision solve reporting every iteration to `observer`.
pub fn solve_decision_with_observer<T: Scalar>(
    inst: &MixedInstance<T>,
    cfg: &SolverConfig<T>,
    observer: &mut dyn IterationObserver<T>,
) -> Result<DecisionOutcome<T>> {
    let d = inst.d();
    let n = inst.n();
    let nd = (n * d) as f64;

    // Admissible accuracy range. The lower bound (nd)^{-3} only binds when it
    // is below the clamp value; for tiny instances the nominal range
    // [(nd)^{-3}, 1/20] is empty, so no floor applies there.
    let eps_f = cfg.eps.to_f64_lossy();
    let eps_lo = {
        let f = nd.powi(-3);
        if f <= EPS_MAX {
            f
        } else {
            0.0
        }
    };
    if !(eps_f.is_finite()) || eps_f <= 0.0 {
        return Err(Error::config(format!("eps must be positive, got {eps_f}")));
    }
    if eps_f < eps_lo {
        return Err(Error::config(format!(
            "eps = {eps_f} is below the admissible floor {eps_lo}; \
             use an exact interior-point solver for accuracies this fine"
        )));
    }
    let eps = if eps_f > EPS_MAX && cfg.clamp_eps {
        T::c(EPS_MAX)
    } else {
        cfg.eps
    };
    // Internal rescaling: run at eps/3, report against the caller's eps.
    let eps_int = eps / T::c(3.0);

    let rho = inst.width()?;
    let k = match cfg.k_override {
        Some(k) => k,
        None => {
            let arg = if cfg.commuting_covering {
                nd
            } else {
                nd * rho.to_f64_lossy()
            };
            T::c(4.0) * T::c(arg.max(2.0).ln()) / eps_int
        }
    };
    if k <= T::zero() {
        return Err(Error::config("threshold K must be positive"));
    }
    let alpha = T::one() / (T::c(8.0) * k);

    let bound = explicit_iteration_bound(
        n,
        d,
        rho.to_f64_lossy(),
        eps_int.to_f64_lossy(),
        k.to_f64_lossy(),
    );
    let max_iters = cfg
        .max_iters
        .unwrap_or_else(|| (10.0 * bound).min(u64::MAX as f64 / 2.0) as u64);

    let oracle_cfg = ExpOracleConfig {
        mode: cfg.mode,
        delta: T::c(1e-6),
        seed: cfg.seed,
        sketch_columns: cfg
            .sketch_columns
            .unwrap_or_else(|| default_sketch_columns(n, d, eps_int)),
        k_threshold: k,
        covering_solver: Some(std::sync::Arc::new(DefaultCoveringSolver::default())),
    };

    let mut x: Vec<T> = inst
        .lambda_max_packing()
        .iter()
        .map(|&l| T::one() / (T::c(d as f64) * l))
        .collect();

    let mut t: u64 = 0;
    let mut first_phase: Option<i64> = None;
    let mut last_phase: i64 = 0;
    let exact = cfg.mode == Mode::Exact;

    let finish = |resolution: Resolution<T>,
                  t: u64,
                  x_final: &[T],
                  first_phase: Option<i64>,
                  last_phase: i64|
     -> Result<DecisionOutcome<T>> {
        let phi = weighted_sum(inst.packing(), x_final)?;
        let psi = weighted_sum(inst.covering(), x_final)?;
        let (_, lmax_phi) = crate::symmat::lambda_extremes(&phi)?;
        let (lmin_psi, _) = crate::symmat::lambda_extremes(&psi)?;
        let phase_count = match first_phase {
            Some(f) => (last_phase - f + 1).max(0) as u64,
            None => 0,
        };
        Ok(DecisionOutcome {
            resolution,
            iterations: t,
            phase_count,
            k_threshold: k,
            eps_internal: eps_int,
            lambda_max_phi: lmax_phi,
            lambda_min_psi: lmin_psi,
        })
    };

    loop {
        let (grad_p, grad_c, lmax_phi, lmin_psi, pot, phase, norm_y, norm_z);
        if exact {
            let phi = weighted_sum(inst.packing(), &x)?;
            let psi = weighted_sum(inst.covering(), &x)?;
            let eig_phi = eig_sym(&phi)?;
            let eig_psi = eig_sym(&psi)?;
            lmax_phi = eig_phi.eigenvalues[eig_phi.n() - 1];
            lmin_psi = eig_psi.eigenvalues[0];
            if lmax_phi >= k || lmin_psi >= k {
                return finish(
                    Resolution::Feasible { x: x.clone() },
                    t,
                    &x,
                    first_phase,
                    last_phase,
                );
            }
            let (gp, gc) = gradients_from_eigs(inst, &eig_phi, &eig_psi)?;
            grad_p = gp;
            grad_c = gc;
            pot = if cfg.log_potential {
                Some(potential_from_eigenvalues(
                    &eig_phi.eigenvalues,
                    &eig_psi.eigenvalues,
                    eps_int,
                ))
            } else {
                None
            };
            let s = phase_from_eigenvalues(&eig_phi.eigenvalues, &eig_psi.eigenvalues);
            phase = Some(s);
            first_phase.get_or_insert(s);
            last_phase = s;
            let lse_y = log_sum_exp(&eig_phi.eigenvalues);
            let neg: Vec<T> = eig_psi.eigenvalues.iter().map(|&l| -l).collect();
            let lse_z = log_sum_exp(&neg);
            norm_y = Some((eig_phi, lse_y));
            norm_z = Some((eig_psi, lse_z));
        } else {
            if termination_check(inst, &x, k, &oracle_cfg)? {
                return finish(
                    Resolution::Feasible { x: x.clone() },
                    t,
                    &x,
                    first_phase,
                    last_phase,
                );
            }
            let (gp, gc) = sketched_gradients(inst, &x, &oracle_cfg, t)?;
            grad_p = gp;
            grad_c = gc;
            lmax_phi = T::nan();
            lmin_psi = T::nan();
            pot = None;
            phase = None;
            norm_y = None;
            norm_z = None;
        }

        let w = update_set(&grad_p, &grad_c, eps_int);
        if w.is_empty() {
            // Infeasibility witness: the trace-normalized exponentials of the
            // current aggregates (recomputed densely in approximate mode).
            let (y, z) = match (norm_y, norm_z) {
                (Some((eig_phi, lse_y)), Some((eig_psi, lse_z))) => (
                    eig_phi.apply_spectral(|l| (l - lse_y).exp()),
                    eig_psi.apply_spectral(|l| (-l - lse_z).exp()),
                ),
                _ => {
                    let eig_phi = eig_sym(&weighted_sum(inst.packing(), &x)?)?;
                    let eig_psi = eig_sym(&weighted_sum(inst.covering(), &x)?)?;
                    let lse_y = log_sum_exp(&eig_phi.eigenvalues);
                    let neg: Vec<T> = eig_psi.eigenvalues.iter().map(|&l| -l).collect();
                    let lse_z = log_sum_exp(&neg);
                    (
                        eig_phi.apply_spectral(|l| (l - lse_y).exp()),
                        eig_psi.apply_spectral(|l| (-l - lse_z).exp()),
                    )
                }
            };
            return finish(Resolution::Infeasible { y, z }, t, &x, first_phase, last_phase);
        }

        let delta = step_sizes(&grad_p, &grad_c, &w);
        observer.observe(&IterateState {
            t,
            x: x.clone(),
            k,
            alpha,
            grad_p,
            grad_c,
            w,
            delta: delta.clone(),
            potential: pot,
            phase,
            lambda_max_phi: lmax_phi,
            lambda_min_psi: lmin_psi,
        });
        x = step(&x, &delta, alpha);
        t += 1;
        if t >= max_iters {
            let detail = format!(
                "no termination after {t} iterations (explicit bound {bound:.3e})"
            );
            return finish(
                Resolution::IterationLimit { x: x.clone(), detail },
                t,
                &x.clone(),
                first_phase,
                last_phase,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmat::SparseSymMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sp(n: usize, t: Vec<(usize, usize, f64)>) -> SparseSymMatrix<f64> {
        SparseSymMatrix::new(n, t).unwrap()
    }

    fn scalar_instance(p: f64, c: f64) -> MixedInstance<f64> {
        MixedInstance::new(vec![sp(1, vec![(0, 0, p)])], vec![sp(1, vec![(0, 0, c)])]).unwrap()
    }

    /// Random PSD instance; `cover_shift` adds a multiple of the identity to
    /// every covering matrix (a positive shift makes the instance clearly
    /// feasible).
    fn random_instance_shifted(
        n: usize,
        d: usize,
        seed: u64,
        cover_shift: f64,
    ) -> MixedInstance<f64> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |scale: f64, shift: f64| {
            let g: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>() - 0.5).collect();
            let mut m = crate::symmat::SymMatrix::zeros(n);
            for j in 0..n {
                for k in j..n {
                    let mut s = 0.0;
                    for l in 0..n {
                        s += g[j * n + l] * g[k * n + l];
                    }
                    m.set(j, k, scale * s + if j == k { shift } else { 0.0 });
                }
            }
            SparseSymMatrix::from_dense(&m)
        };
        let packing: Vec<_> = (0..d).map(|_| draw(1.0, 0.0)).collect();
        let covering: Vec<_> = (0..d).map(|_| draw(1.2, cover_shift)).collect();
        MixedInstance::new(packing, covering).unwrap()
    }

    fn random_instance(n: usize, d: usize, seed: u64) -> MixedInstance<f64> {
        random_instance_shifted(n, d, seed, 0.0)
    }

    #[test]
    fn scalar_infeasible() {
        let inst = scalar_instance(2.0, 1.0);
        let out = solve_decision(&inst, &SolverConfig::with_eps(0.05)).unwrap();
        match out.resolution {
            Resolution::Infeasible { ref y, ref z } => {
                // witness inequality (1-eps) <C,Z>/TrZ < <P,Y>/TrY
                let gy = 2.0 * y.get(0, 0) / y.trace();
                let gz = 1.0 * z.get(0, 0) / z.trace();
                assert!(0.95 * gz < gy);
            }
            ref other => panic!("expected infeasible, got {other:?}"),
        }
        // W empties on the very first iteration for this instance.
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn scalar_feasible() {
        let inst = scalar_instance(1.0, 2.0);
        let out = solve_decision(&inst, &SolverConfig::with_eps(0.05)).unwrap();
        match out.resolution {
            Resolution::Feasible { ref x } => {
                assert!(x[0] > 0.0);
                // 1*x <= (1+eps) * 2*x trivially
                assert!(out.lambda_max_phi <= (1.0 + 0.05) * out.lambda_min_psi);
            }
            ref other => panic!("expected feasible, got {other:?}"),
        }
    }

    #[test]
    fn identity_instance_infeasible() {
        let id = sp(2, vec![(0, 0, 1.0), (1, 1, 1.0)]);
        let inst = MixedInstance::new(vec![id.clone()], vec![id]).unwrap();
        let out = solve_decision(&inst, &SolverConfig::with_eps(0.05)).unwrap();
        assert_eq!(out.tag(), "infeasible");
    }

    #[test]
    fn gradient_examples() {
        let cfg = ExpOracleConfig::exact(1.0);
        // x = 0, P = {I_3} -> gradP = [1]
        let id = sp(3, vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let inst = MixedInstance::new(vec![id.clone()], vec![id.clone()]).unwrap();
        let (gp, _) = compute_gradients(&inst, &[0.0], &cfg, 0).unwrap();
        assert!((gp[0] - 1.0).abs() < 1e-12);

        // d = 2, P = {diag(1,0), diag(0,1)}, x = 0 -> gradP = [1/2, 1/2]
        let p1 = sp(2, vec![(0, 0, 1.0)]);
        let p2 = sp(2, vec![(1, 1, 1.0)]);
        let c = sp(2, vec![(0, 0, 1.0), (1, 1, 1.0)]);
        let inst = MixedInstance::new(vec![p1, p2], vec![c.clone(), c]).unwrap();
        let (gp, _) = compute_gradients(&inst, &[0.0, 0.0], &cfg, 0).unwrap();
        assert!((gp[0] - 0.5).abs() < 1e-12 && (gp[1] - 0.5).abs() < 1e-12);

        // scalar P = {[3]}, x = [1] -> gradP = [3]
        let inst = scalar_instance(3.0, 1.0);
        let (gp, _) = compute_gradients(&inst, &[1.0], &cfg, 0).unwrap();
        assert!((gp[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn update_set_examples() {
        let eps = 0.05;
        assert!(update_set(&[1.0], &[1.0], eps).is_empty());
        assert_eq!(update_set(&[0.0], &[1.0], eps), vec![0]);
        // boundary inclusion
        assert_eq!(update_set(&[1.0 - eps / 2.0], &[1.0], eps), vec![0]);
    }

    #[test]
    fn step_examples() {
        let alpha = 0.01;
        // delta = 0 everywhere -> unchanged
        assert_eq!(step(&[1.0, 2.0], &[0.0, 0.0], alpha), vec![1.0, 2.0]);
        // gradP = 0 -> delta = 1/2
        let d = step_sizes(&[0.0], &[1.0], &[0]);
        assert_eq!(d, vec![0.5]);
        assert_eq!(step(&[1.0], &d, alpha), vec![1.0 * (1.0 + alpha / 2.0)]);
        // ratio 1/2 -> delta = 1/4
        let d = step_sizes(&[0.5f64], &[1.0], &[0]);
        assert!((d[0] - 0.25).abs() < 1e-15);
        // both gradients zero -> delta = 0
        let d = step_sizes(&[0.0], &[0.0], &[0]);
        assert_eq!(d, vec![0.0]);
    }

    #[test]
    fn termination_examples() {
        let k = 10.0;
        // initial point: Phi <= I, continue
        let inst = scalar_instance(1.0, 1.0);
        assert!(!termination_check_exact(&inst, &[1.0], k).unwrap());
        // scalar P = [1], x = [K] -> terminate
        assert!(termination_check_exact(&inst, &[k], k).unwrap());
        // covering side: C = [1], x = [K+1] -> terminate
        let inst2 = scalar_instance(0.1, 1.0);
        assert!(termination_check_exact(&inst2, &[k + 1.0], k).unwrap());
    }

    #[test]
    fn potential_examples() {
        let eps = 0.05;
        // x = 0 -> (1-eps) ln n + ln n
        let id = sp(3, vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let inst = MixedInstance::new(vec![id.clone()], vec![id]).unwrap();
        let f = potential(&inst, &[0.0], eps).unwrap();
        let expect = (1.0 - eps) * 3.0f64.ln() + 3.0f64.ln();
        assert!((f - expect).abs() < 1e-12);
        // scalar P = C = [1], x = [1] -> (1-eps) - 1
        let inst = scalar_instance(1.0, 1.0);
        let f = potential(&inst, &[1.0], eps).unwrap();
        assert!((f - ((1.0 - eps) - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn phase_examples() {
        // x = 0, n_p = n_c -> ratio 1 -> s = 0
        let id = sp(2, vec![(0, 0, 1.0), (1, 1, 1.0)]);
        let inst = MixedInstance::new(vec![id.clone()], vec![id]).unwrap();
        assert_eq!(phase_index(&inst, &[0.0]).unwrap(), 0);
        // scalar with Tr Y / Tr Z = e^{a+c} = 5 -> s = 2
        let a = 5.0f64.ln();
        let inst = MixedInstance::new(
            vec![sp(1, vec![(0, 0, a)])],
            vec![sp(1, vec![(0, 0, 1e-12)])],
        )
        .unwrap();
        assert_eq!(phase_index(&inst, &[1.0]).unwrap(), 2);
    }

    /// Collects the exact-mode instrumentation for property checks.
    struct Collector {
        potentials: Vec<f64>,
        phases: Vec<i64>,
        xs: Vec<Vec<f64>>,
        /// Largest first-order directional value of the step; the update rule
        /// only moves along nonincreasing directions of the potential.
        worst_step: f64,
    }

    impl IterationObserver<f64> for Collector {
        fn observe(&mut self, s: &IterateState<f64>) {
            self.potentials.push(s.potential.unwrap());
            self.phases.push(s.phase.unwrap());
            self.xs.push(s.x.clone());
            let mut v = 0.0;
            for i in 0..s.x.len() {
                v += s.alpha
                    * s.delta[i]
                    * s.x[i]
                    * ((1.0 + s.delta[i]) * s.grad_p[i] - (1.0 - s.delta[i]) * s.grad_c[i]);
            }
            self.worst_step = self.worst_step.max(v);
        }
    }

    #[test]
    fn full_run_invariants_random_instance() {
        // Covering side shifted by 3 I so the instance is clearly feasible
        // and the run produces a nontrivial trajectory to check.
        let inst = random_instance_shifted(4, 3, 42, 3.0);
        let mut coll = Collector {
            potentials: Vec::new(),
            phases: Vec::new(),
            xs: Vec::new(),
            worst_step: f64::MIN,
        };
        let cfg = SolverConfig::with_eps(0.05);
        let out = solve_decision_with_observer(&inst, &cfg, &mut coll).unwrap();
        assert_eq!(out.tag(), "feasible");
        assert!(!coll.potentials.is_empty());
        let n = 4.0;
        let rho = inst.width().unwrap();
        let tol = (n * 3.0 * rho).powi(-15) + 1e-9;
        // initial potential <= 3 ln n; ceiling 4 ln n; per-step increase bounded
        assert!(coll.potentials[0] <= 3.0 * n.ln() + 1e-9);
        for win in coll.potentials.windows(2) {
            assert!(win[1] <= win[0] + tol, "potential rose: {} -> {}", win[0], win[1]);
        }
        for &f in &coll.potentials {
            assert!(f <= 4.0 * n.ln() + 1e-6);
        }
        // phases nondecreasing
        for win in coll.phases.windows(2) {
            assert!(win[1] >= win[0]);
        }
        // iterates nondecreasing entrywise
        for win in coll.xs.windows(2) {
            for (a, b) in win[0].iter().zip(&win[1]) {
                assert!(b >= a);
            }
        }
        // step-direction nonpositivity at each observed iteration
        assert!(coll.worst_step <= 1e-12);
        // iteration count within the explicit bound
        let bound = explicit_iteration_bound(
            4,
            3,
            rho,
            out.eps_internal,
            out.k_threshold,
        );
        assert!((out.iterations as f64) <= bound);
    }

    #[test]
    fn feasible_guarantee_internal_eps() {
        let inst = random_instance(4, 4, 7);
        let cfg = SolverConfig::with_eps(0.05);
        let out = solve_decision(&inst, &cfg).unwrap();
        if let Resolution::Feasible { .. } = out.resolution {
            let bound = (1.0 + 3.0 * out.eps_internal) * out.lambda_min_psi;
            assert!(out.lambda_max_phi <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn eps_clamped_above() {
        let inst = random_instance(3, 2, 9);
        let mut cfg = SolverConfig::with_eps(0.3);
        let out = solve_decision(&inst, &cfg).unwrap();
        assert!((out.eps_internal - EPS_MAX / 3.0).abs() < 1e-15);
        // with clamping off the requested eps is used as-is
        cfg.clamp_eps = false;
        let out = solve_decision(&inst, &cfg).unwrap();
        assert!((out.eps_internal - 0.1).abs() < 1e-15);
    }

    #[test]
    fn eps_below_floor_rejected() {
        let inst = random_instance(4, 4, 9);
        // (nd)^{-3} = 16^{-3} ~ 2.4e-4
        match solve_decision(&inst, &SolverConfig::with_eps(1e-6)) {
            Err(Error::Config(_)) => {}
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn commuting_covering_threshold() {
        let inst = scalar_instance(1.0, 2.0);
        let mut cfg = SolverConfig::with_eps(0.05);
        cfg.commuting_covering = true;
        let out = solve_decision(&inst, &cfg).unwrap();
        // K = 4 ln(max(nd, 2)) / eps_int, width-free
        let expect = 4.0 * 2.0f64.ln() / out.eps_internal;
        assert!((out.k_threshold - expect).abs() < 1e-9);
    }

    #[test]
    fn iteration_limit_reported() {
        let inst = scalar_instance(1.0, 2.0);
        let mut cfg = SolverConfig::with_eps(0.05);
        cfg.max_iters = Some(3);
        let out = solve_decision(&inst, &cfg).unwrap();
        assert_eq!(out.tag(), "iteration-limit");
        assert_eq!(out.iterations, 3);
    }

    #[test]
    fn trace_sink_format() {
        let inst = scalar_instance(1.0, 2.0);
        let mut cfg = SolverConfig::with_eps(0.05);
        cfg.max_iters = Some(5);
        let mut buf = Vec::new();
        {
            let mut sink = TraceSink::new(&mut buf);
            solve_decision_with_observer(&inst, &cfg, &mut sink).unwrap();
        }
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        for line in lines {
            assert_eq!(line.split('\t').count(), 6);
        }
    }

    #[test]
    fn approximate_mode_scalar_tags() {
        let mut cfg = SolverConfig::with_eps(0.05);
        cfg.mode = Mode::Approximate;
        cfg.sketch_columns = Some(64);
        // A smaller threshold keeps this scalar smoke test fast; the tags do
        // not depend on K.
        cfg.k_override = Some(20.0);
        let out = solve_decision(&scalar_instance(2.0, 1.0), &cfg).unwrap();
        assert_eq!(out.tag(), "infeasible");
        let out = solve_decision(&scalar_instance(1.0, 2.0), &cfg).unwrap();
        assert_eq!(out.tag(), "feasible");
        // feasible answer still meets the guarantee (checked exactly)
        assert!(out.lambda_max_phi <= (1.0 + 3.0 * out.eps_internal) * out.lambda_min_psi);
    }

    #[test]
    fn determinism() {
        let inst = random_instance(3, 2, 5);
        let cfg = SolverConfig::with_eps(0.05);
        let a = solve_decision(&inst, &cfg).unwrap();
        let b = solve_decision(&inst, &cfg).unwrap();
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.x(), b.x());
    }
}
