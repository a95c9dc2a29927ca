//! Certificate checking and executable oracles for the matrix inequalities
//! underpinning the solver's analysis.
//!
//! Each oracle either checks a terminal certificate (feasibility /
//! infeasibility) or evaluates an inequality "gap" that the theory asserts is
//! nonnegative; fuzz suites assert the gaps stay above a small negative
//! tolerance. All functions here are pure and deterministic.

use crate::instance::MixedInstance;
use crate::scalar::Scalar;
use crate::symmat::{eig_sym, weighted_sum, SymMatrix};
use crate::{Error, Result};

/// Relative tolerance for certificate margins.
pub const CERT_TOL: f64 = 1e-9;

/// Outcome of a certificate or inequality check.
#[derive(Debug, Clone)]
pub struct CertificateReport<T> {
    /// `margin >= -tolerance` (or strictly positive where the underlying
    /// inequality is strict; see `detail`).
    pub passed: bool,
    pub lhs: T,
    pub rhs: T,
    pub margin: T,
    pub detail: String,
}

/// Checks `lambda_max(sum x_i P_i) <= (1 + 3 eps) lambda_min(sum x_i C_i)`,
/// the guarantee attached to every Feasible answer (with `eps` the solver's
/// internal accuracy).
pub fn check_feasibility_certificate<T: Scalar>(
    inst: &MixedInstance<T>,
    x: &[T],
    eps: T,
) -> Result<CertificateReport<T>> {
    if x.len() != inst.d() {
        return Err(Error::DimMismatch(x.len(), inst.d()));
    }
    if x.iter().any(|&v| v < T::zero() || !v.is_finite()) {
        return Err(Error::input("certificate x must be nonnegative and finite"));
    }
    let phi = weighted_sum(inst.packing(), x)?;
    let psi = weighted_sum(inst.covering(), x)?;
    let (_, lmax_phi) = crate::symmat::lambda_extremes(&phi)?;
    let (lmin_psi, _) = crate::symmat::lambda_extremes(&psi)?;
    let lhs = lmax_phi;
    let rhs = (T::one() + T::c(3.0) * eps) * lmin_psi;
    let margin = rhs - lhs;
    let tol = T::c(CERT_TOL) * rhs.abs().max(T::one());
    Ok(CertificateReport {
        passed: margin >= -tol,
        lhs,
        rhs,
        margin,
        detail: format!(
            "feasibility: lambda_max(Phi) = {lhs} vs (1 + 3 eps) lambda_min(Psi) = {rhs}"
        ),
    })
}

/// Checks the infeasibility witness inequality
/// `(1 - eps) <C_i, Z>/Tr Z < <P_i, Y>/Tr Y` for all `i` (strict).
pub fn check_infeasibility_witness<T: Scalar>(
    inst: &MixedInstance<T>,
    y: &SymMatrix<T>,
    z: &SymMatrix<T>,
    eps: T,
) -> Result<CertificateReport<T>> {
    if y.n() != inst.n_p() {
        return Err(Error::DimMismatch(y.n(), inst.n_p()));
    }
    if z.n() != inst.n_c() {
        return Err(Error::DimMismatch(z.n(), inst.n_c()));
    }
    let tr_y = y.trace();
    let tr_z = z.trace();
    if tr_y <= T::zero() || tr_z <= T::zero() {
        return Err(Error::input(
            "witness matrices must have positive trace",
        ));
    }
    let factor = T::one() - eps;
    let mut worst_margin = T::infinity();
    let mut worst = (T::zero(), T::zero());
    for i in 0..inst.d() {
        let gp = inst.packing()[i].trace_product_dense(y)? / tr_y;
        let gc = inst.covering()[i].trace_product_dense(z)? / tr_z;
        let margin = gp - factor * gc;
        if margin < worst_margin {
            worst_margin = margin;
            worst = (factor * gc, gp);
        }
    }
    Ok(CertificateReport {
        passed: worst_margin > T::zero(),
        lhs: worst.0,
        rhs: worst.1,
        margin: worst_margin,
        detail: format!(
            "infeasibility witness (strict): worst (1 - eps)<C,Z>/TrZ = {} vs <P,Y>/TrY = {}",
            worst.0, worst.1
        ),
    })
}

/// Symmetrized dense product `(S T + (S T)^T)/2`; exact when the true product
/// is symmetric.
fn sym_product<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let rows = a.matmul_full(b)?;
    Ok(SymMatrix::from_rows(a.n(), &rows))
}

/// Gap of the matrix Cauchy-Schwarz inequality
/// `(sum c_i M_i)^2 <= Kcap sum c_i^2 M_i`:
/// returns `lambda_min(Kcap sum c_i^2 M_i - (sum c_i M_i)^2)`, which the
/// inequality asserts is nonnegative whenever `sum M_i <= Kcap I`.
pub fn matrix_cauchy_schwarz_gap<T: Scalar>(
    ms: &[SymMatrix<T>],
    cs: &[T],
    kcap: T,
) -> Result<T> {
    if ms.len() != cs.len() {
        return Err(Error::DimMismatch(ms.len(), cs.len()));
    }
    if ms.is_empty() {
        return Err(Error::input("need at least one matrix"));
    }
    if cs.iter().any(|&c| c < T::zero() || !c.is_finite()) {
        return Err(Error::input("coefficients must be nonnegative and finite"));
    }
    let n = ms[0].n();
    let mut total = SymMatrix::zeros(n);
    let mut s1 = SymMatrix::zeros(n);
    let mut s2 = SymMatrix::zeros(n);
    for (m, &c) in ms.iter().zip(cs) {
        if m.n() != n {
            return Err(Error::DimMismatch(m.n(), n));
        }
        total = total.add(m)?;
        s1 = s1.add(&m.scale(c))?;
        s2 = s2.add(&m.scale(c * c))?;
    }
    let (_, lmax_total) = crate::symmat::lambda_extremes(&total)?;
    let tol = T::c(1e-8) * kcap.abs().max(T::one());
    if lmax_total > kcap + tol {
        return Err(Error::input(format!(
            "precondition sum M_i <= Kcap I violated: lambda_max = {lmax_total} > {kcap}"
        )));
    }
    let square = sym_product(&s1, &s1)?;
    let diff = s2.scale(kcap).sub(&square)?;
    let (lmin, _) = crate::symmat::lambda_extremes(&diff)?;
    Ok(lmin)
}

/// Gap of the extended Lieb-Thirring inequality for `A > 0`, `B >= 0`,
/// `alpha in [0, 1]`:
/// `<B^2, A> - <B^{1/2} A^alpha B^{1/2}, B^{1/2} A^{1-alpha} B^{1/2}> >= 0`.
/// Fractional powers are taken in the eigenbasis with eigenvalues clamped
/// below at 1e-14 (A may be numerically borderline positive definite).
pub fn lieb_thirring_gap<T: Scalar>(
    a: &SymMatrix<T>,
    b: &SymMatrix<T>,
    alpha: T,
) -> Result<T> {
    if a.n() != b.n() {
        return Err(Error::DimMismatch(a.n(), b.n()));
    }
    if alpha < T::zero() || alpha > T::one() {
        return Err(Error::input(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    let eig_a = eig_sym(a)?;
    if eig_a.eigenvalues[0] <= T::zero() {
        return Err(Error::input(format!(
            "A must be positive definite: lambda_min = {}",
            eig_a.eigenvalues[0]
        )));
    }
    let clamp = T::c(1e-14);
    let a_alpha = eig_a.apply_spectral(|l| l.max(clamp).powf(alpha));
    let a_rest = eig_a.apply_spectral(|l| l.max(clamp).powf(T::one() - alpha));
    let eig_b = eig_sym(b)?;
    let b_half = eig_b.apply_spectral(|l| l.max(T::zero()).sqrt());
    let m1 = sym_product(&sym_product(&b_half, &a_alpha)?, &b_half)?;
    let m2 = sym_product(&sym_product(&b_half, &a_rest)?, &b_half)?;
    let b_sq = sym_product(b, b)?;
    let lhs = crate::symmat::trace_product(&b_sq, a)?;
    let rhs = crate::symmat::trace_product(&m1, &m2)?;
    Ok(lhs - rhs)
}

/// The divided-difference kernel `nu(beta, gamma) =
/// (e^{-beta} - e^{-gamma}) / (gamma - beta)`, with the diagonal branch
/// `e^{-beta}` taken when `|gamma - beta| <= 1e-12 max(1, |gamma|)`.
pub fn nu<T: Scalar>(beta: T, gamma: T) -> Result<T> {
    if beta < T::zero() || gamma < T::zero() {
        return Err(Error::input(format!(
            "nu requires nonnegative arguments, got ({beta}, {gamma})"
        )));
    }
    let diff = gamma - beta;
    if diff.abs() <= T::c(1e-12) * gamma.abs().max(T::one()) {
        return Ok((-beta).exp());
    }
    Ok(((-beta).exp() - (-gamma).exp()) / diff)
}

/// Sandwich check `0 <= nu(beta, gamma) <= (e^{-beta} + e^{-gamma})/2`
/// with slack 1e-12.
pub fn nu_bound_check<T: Scalar>(beta: T, gamma: T) -> Result<bool> {
    let v = nu(beta, gamma)?;
    let upper = ((-beta).exp() + (-gamma).exp()) / T::c(2.0);
    let slack = T::c(1e-12);
    Ok(v >= -slack && v <= upper + slack)
}

/// One iteration's aggregate and step matrices:
/// `Phi = sum x_i P_i`, `Psi = sum x_i C_i`,
/// `A = sum alpha delta_i x_i P_i`, `B = sum alpha delta_i x_i C_i`,
/// `G = sum alpha delta_i^2 x_i P_i`, `H = sum alpha delta_i^2 x_i C_i`.
#[derive(Debug, Clone)]
pub struct PotentialProbe<T> {
    pub phi: SymMatrix<T>,
    pub psi: SymMatrix<T>,
    pub a: SymMatrix<T>,
    pub b: SymMatrix<T>,
    pub g: SymMatrix<T>,
    pub h: SymMatrix<T>,
}

/// [`probe_iteration`] output: the probe matrices plus one report per checked
/// invariant.
#[derive(Debug, Clone)]
pub struct ProbeReport<T> {
    pub probe: PotentialProbe<T>,
    pub checks: Vec<CertificateReport<T>>,
    pub passed: bool,
}

fn ordering_check<T: Scalar>(
    name: &str,
    small: &SymMatrix<T>,
    large: &SymMatrix<T>,
) -> Result<CertificateReport<T>> {
    let diff = large.sub(small)?;
    let (lmin, _) = crate::symmat::lambda_extremes(&diff)?;
    let scale = small
        .frobenius_norm()
        .max(large.frobenius_norm())
        .max(T::one());
    let tol = T::c(CERT_TOL) * scale;
    Ok(CertificateReport {
        passed: lmin >= -tol,
        lhs: T::zero(),
        rhs: lmin,
        margin: lmin,
        detail: format!("{name}: lambda_min of the difference = {lmin}"),
    })
}

/// Assembles one iteration's probe matrices and checks the step-matrix
/// orderings `A <= (alpha/2) Phi`, `B <= (alpha/2) Psi`, `H <= B/2`,
/// `A <= I/2`, `A^2 <= G`, PSD-ness of all six, and the running entry bound
/// (every entry of `Psi`, `B`, `H` has magnitude at most `K n d rho` with
/// `K = 1/(8 alpha)`).
pub fn probe_iteration<T: Scalar>(
    inst: &MixedInstance<T>,
    x: &[T],
    delta: &[T],
    alpha: T,
) -> Result<ProbeReport<T>> {
    let d = inst.d();
    if x.len() != d {
        return Err(Error::DimMismatch(x.len(), d));
    }
    if delta.len() != d {
        return Err(Error::DimMismatch(delta.len(), d));
    }
    if alpha <= T::zero() {
        return Err(Error::input("alpha must be positive"));
    }
    let step1: Vec<T> = x
        .iter()
        .zip(delta)
        .map(|(&xi, &di)| alpha * di * xi)
        .collect();
    let step2: Vec<T> = x
        .iter()
        .zip(delta)
        .map(|(&xi, &di)| alpha * di * di * xi)
        .collect();
    let probe = PotentialProbe {
        phi: weighted_sum(inst.packing(), x)?,
        psi: weighted_sum(inst.covering(), x)?,
        a: weighted_sum(inst.packing(), &step1)?,
        b: weighted_sum(inst.covering(), &step1)?,
        g: weighted_sum(inst.packing(), &step2)?,
        h: weighted_sum(inst.covering(), &step2)?,
    };

    let mut checks = Vec::new();
    for (name, m) in [
        ("Phi PSD", &probe.phi),
        ("Psi PSD", &probe.psi),
        ("A PSD", &probe.a),
        ("B PSD", &probe.b),
        ("G PSD", &probe.g),
        ("H PSD", &probe.h),
    ] {
        let zero = SymMatrix::zeros(m.n());
        checks.push(ordering_check(name, &zero, m)?);
    }
    let half_alpha = alpha / T::c(2.0);
    checks.push(ordering_check(
        "A <= (alpha/2) Phi",
        &probe.a,
        &probe.phi.scale(half_alpha),
    )?);
    checks.push(ordering_check(
        "B <= (alpha/2) Psi",
        &probe.b,
        &probe.psi.scale(half_alpha),
    )?);
    checks.push(ordering_check(
        "H <= B/2",
        &probe.h,
        &probe.b.scale(T::c(0.5)),
    )?);
    checks.push(ordering_check(
        "A <= I/2",
        &probe.a,
        &SymMatrix::identity(probe.a.n()).scale(T::c(0.5)),
    )?);
    let a_sq = sym_product(&probe.a, &probe.a)?;
    checks.push(ordering_check("A^2 <= G", &a_sq, &probe.g)?);

    // Entry bound: while the solver runs, no entry of Psi, B, H exceeds
    // K n d rho in magnitude.
    let k = T::one() / (T::c(8.0) * alpha);
    let rho = inst.width()?;
    let cap = k * T::c((inst.n() * d) as f64) * rho;
    let worst = probe
        .psi
        .max_abs_entry()
        .max(probe.b.max_abs_entry())
        .max(probe.h.max_abs_entry());
    let margin = cap - worst;
    checks.push(CertificateReport {
        passed: margin >= -T::c(CERT_TOL) * cap.max(T::one()),
        lhs: worst,
        rhs: cap,
        margin,
        detail: format!("entry bound: max |entry| = {worst} vs K n d rho = {cap}"),
    });

    let passed = checks.iter().all(|c| c.passed);
    Ok(ProbeReport {
        probe,
        checks,
        passed,
    })
}

/// Gap of the large-coordinate damping inequality: with
/// `S = {j : y_j <= T + c}`, `l = min_j v_j`, `u = max_j v_j`,
/// returns `(1 + (n u / l) e^{-c}) sum_{j in S} e^{-y_j} v_j -
/// sum_{j} e^{-y_j} v_j`, asserted nonnegative when `min_j y_j < T` and
/// `l > 0`.
pub fn totsum_goodsum_gap<T: Scalar>(y: &[T], v: &[T], t: T, c: T) -> Result<T> {
    if y.len() != v.len() {
        return Err(Error::DimMismatch(y.len(), v.len()));
    }
    if y.is_empty() {
        return Err(Error::input("vectors must be nonempty"));
    }
    let l = v.iter().cloned().fold(T::infinity(), T::min);
    let u = v.iter().cloned().fold(T::neg_infinity(), T::max);
    if l <= T::zero() {
        return Err(Error::input(format!(
            "weights must be strictly positive, got minimum {l}"
        )));
    }
    let y_min = y.iter().cloned().fold(T::infinity(), T::min);
    if !(y_min < t) {
        return Err(Error::input(format!(
            "need min_j y_j < T, got min {y_min} vs T = {t}"
        )));
    }
    let n = T::c(y.len() as f64);
    let mut good = T::zero();
    let mut total = T::zero();
    for (&yj, &vj) in y.iter().zip(v) {
        let term = (-yj).exp() * vj;
        total = total + term;
        if yj <= t + c {
            good = good + term;
        }
    }
    let factor = T::one() + (n * u / l) * (-c).exp();
    Ok(factor * good - total)
}

/// Checks the scalar Gronwall-type bound for `u' = -beta u - c`:
/// integrates the ODE numerically (RK4) and verifies
/// `u(t) >= e^{-beta t} u(0) - (c/beta)(1 - e^{-beta t})` at 100 sample
/// points in `[0, t_max]`; returns the worst margin.
pub fn gronwall_check<T: Scalar>(beta: T, c: T, u0: T, t_max: T) -> Result<CertificateReport<T>> {
    if beta <= T::zero() {
        return Err(Error::input("beta must be positive"));
    }
    if !(t_max > T::zero()) {
        return Err(Error::input("t_max must be positive"));
    }
    let samples = 100usize;
    let substeps = 20usize;
    let h = t_max / T::c((samples * substeps) as f64);
    let deriv = |u: T| -beta * u - c;
    let mut u = u0;
    let mut t = T::zero();
    let mut worst = T::infinity();
    let mut worst_at = (u0, u0);
    for _ in 0..samples {
        for _ in 0..substeps {
            let k1 = deriv(u);
            let k2 = deriv(u + h / T::c(2.0) * k1);
            let k3 = deriv(u + h / T::c(2.0) * k2);
            let k4 = deriv(u + h * k3);
            u = u + h / T::c(6.0) * (k1 + T::c(2.0) * k2 + T::c(2.0) * k3 + k4);
            t = t + h;
        }
        let decay = (-beta * t).exp();
        let bound = decay * u0 - (c / beta) * (T::one() - decay);
        let margin = u - bound;
        if margin < worst {
            worst = margin;
            worst_at = (u, bound);
        }
    }
    let scale = u0.abs().max((c / beta).abs()).max(T::one());
    Ok(CertificateReport {
        passed: worst >= -T::c(1e-9) * scale,
        lhs: worst_at.1,
        rhs: worst_at.0,
        margin: worst,
        detail: format!("Gronwall bound: worst margin {worst} over [0, {t_max}]"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmat::SparseSymMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sp(n: usize, t: Vec<(usize, usize, f64)>) -> SparseSymMatrix<f64> {
        SparseSymMatrix::new(n, t).unwrap()
    }

    fn scalar_instance(p: f64, c: f64) -> MixedInstance<f64> {
        MixedInstance::new(vec![sp(1, vec![(0, 0, p)])], vec![sp(1, vec![(0, 0, c)])]).unwrap()
    }

    /// Random PSD matrix `G G^T` with standard-normal entries.
    fn random_psd(n: usize, rng: &mut ChaCha8Rng) -> SymMatrix<f64> {
        let g: Vec<f64> = (0..n * n)
            .map(|_| {
                let u1: f64 = 1.0 - rng.gen::<f64>();
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let mut m = SymMatrix::zeros(n);
        for j in 0..n {
            for k in j..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += g[j * n + l] * g[k * n + l];
                }
                m.set(j, k, s);
            }
        }
        m
    }

    #[test]
    fn feasibility_certificate_examples() {
        let r = check_feasibility_certificate(&scalar_instance(1.0, 2.0), &[1.0], 0.05).unwrap();
        assert!(r.passed); // 1 <= 1.15 * 2
        assert!((r.rhs - 2.3).abs() < 1e-12);
        let r = check_feasibility_certificate(&scalar_instance(2.0, 1.0), &[1.0], 0.05).unwrap();
        assert!(!r.passed); // 2 > 1.15
        assert!(r.margin < 0.0);
    }

    #[test]
    fn feasibility_certificate_rejects_negative_x() {
        match check_feasibility_certificate(&scalar_instance(1.0, 1.0), &[-1.0], 0.05) {
            Err(Error::Input(_)) => {}
            other => panic!("expected input error, got {other:?}"),
        }
    }

    #[test]
    fn infeasibility_witness_examples() {
        let y = SymMatrix::from_diag(&[1.0f64]);
        let z = SymMatrix::from_diag(&[1.0f64]);
        let r =
            check_infeasibility_witness(&scalar_instance(2.0, 1.0), &y, &z, 0.05).unwrap();
        assert!(r.passed); // 0.95 * 1 < 2
        let r =
            check_infeasibility_witness(&scalar_instance(1.0, 2.0), &y, &z, 0.05).unwrap();
        assert!(!r.passed); // 1.9 > 1
    }

    #[test]
    fn infeasibility_witness_zero_trace_rejected() {
        let y = SymMatrix::zeros(1);
        let z = SymMatrix::from_diag(&[1.0f64]);
        match check_infeasibility_witness(&scalar_instance(1.0, 1.0), &y, &z, 0.05) {
            Err(Error::Input(_)) => {}
            other => panic!("expected input error, got {other:?}"),
        }
    }

    #[test]
    fn cauchy_schwarz_single_matrix() {
        // Reduces to M^2 <= lambda_max(M) * M, a spectral fact.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_psd(4, &mut rng);
        let (_, lmax) = crate::symmat::lambda_extremes(&m).unwrap();
        let gap = matrix_cauchy_schwarz_gap(&[m], &[1.0], lmax).unwrap();
        assert!(gap >= -1e-8, "gap {gap}");
    }

    #[test]
    fn cauchy_schwarz_zero_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = random_psd(3, &mut rng);
        let (_, lmax) = crate::symmat::lambda_extremes(&m).unwrap();
        let gap = matrix_cauchy_schwarz_gap(&[m], &[0.0], lmax).unwrap();
        assert!(gap.abs() < 1e-12);
    }

    #[test]
    fn cauchy_schwarz_precondition() {
        let m = SymMatrix::from_diag(&[5.0f64, 1.0]);
        match matrix_cauchy_schwarz_gap(&[m], &[1.0], 1.0) {
            Err(Error::Input(_)) => {}
            other => panic!("expected input error, got {other:?}"),
        }
    }

    #[test]
    fn cauchy_schwarz_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.gen_range(2..=8);
            let count = rng.gen_range(1..=4);
            let ms: Vec<_> = (0..count).map(|_| random_psd(n, &mut rng)).collect();
            let cs: Vec<f64> = (0..count).map(|_| rng.gen::<f64>() * 2.0).collect();
            let mut total = SymMatrix::zeros(n);
            for m in &ms {
                total = total.add(m).unwrap();
            }
            let (_, kcap) = crate::symmat::lambda_extremes(&total).unwrap();
            let gap = matrix_cauchy_schwarz_gap(&ms, &cs, kcap).unwrap();
            assert!(gap >= -1e-8, "gap {gap}");
        }
    }

    #[test]
    fn lieb_thirring_endpoint_alpha_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_psd(4, &mut rng).add(&SymMatrix::identity(4)).unwrap();
        let b = random_psd(4, &mut rng);
        let gap = lieb_thirring_gap(&a, &b, 1.0).unwrap();
        assert!(gap.abs() < 1e-8, "gap {gap}");
    }

    #[test]
    fn lieb_thirring_commuting() {
        // Diagonal A and B: scalar AM-GM per entry.
        let a = SymMatrix::from_diag(&[0.5f64, 2.0, 3.0]);
        let b = SymMatrix::from_diag(&[1.0f64, 0.2, 4.0]);
        let gap = lieb_thirring_gap(&a, &b, 0.3).unwrap();
        assert!(gap >= -1e-10, "gap {gap}");
    }

    #[test]
    fn lieb_thirring_requires_positive_definite() {
        let a = SymMatrix::from_diag(&[1.0f64, 0.0]);
        let b = SymMatrix::identity(2);
        match lieb_thirring_gap(&a, &b, 0.5) {
            Err(Error::Input(_)) => {}
            other => panic!("expected input error, got {other:?}"),
        }
    }

    #[test]
    fn lieb_thirring_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.gen_range(2..=8);
            let a = random_psd(n, &mut rng)
                .add(&SymMatrix::identity(n).scale(0.1))
                .unwrap();
            let b = random_psd(n, &mut rng);
            let alpha: f64 = rng.gen();
            let gap = lieb_thirring_gap(&a, &b, alpha).unwrap();
            assert!(gap >= -1e-8, "gap {gap} at alpha {alpha}");
        }
    }

    #[test]
    fn nu_examples() {
        assert!((nu(1.0, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let v = nu(0.0, 2.0f64.ln()).unwrap();
        assert!((v - 0.5 / 2.0f64.ln()).abs() < 1e-12);
        match nu(-1.0, 1.0) {
            Err(Error::Input(_)) => {}
            other => panic!("expected input error, got {other:?}"),
        }
    }

    #[test]
    fn nu_sandwich_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10_000 {
            let b = rng.gen::<f64>() * 50.0;
            let g = rng.gen::<f64>() * 50.0;
            assert!(nu_bound_check(b, g).unwrap(), "sandwich failed at ({b}, {g})");
        }
    }

    #[test]
    fn probe_zero_delta_trivial() {
        let inst = scalar_instance(1.0, 2.0);
        let r = probe_iteration(&inst, &[0.7], &[0.0], 0.01).unwrap();
        assert!(r.passed);
        assert!(r.probe.a.frobenius_norm() == 0.0);
        assert!(r.probe.h.frobenius_norm() == 0.0);
    }

    #[test]
    fn probe_scalar_equality_case() {
        // delta = 1/2: A = (alpha/2) x P exactly attains A <= (alpha/2) Phi.
        let inst = scalar_instance(1.0, 2.0);
        let alpha = 0.01;
        let r = probe_iteration(&inst, &[0.7], &[0.5], alpha).unwrap();
        assert!(r.passed);
        assert!((r.probe.a.get(0, 0) - alpha / 2.0 * 0.7).abs() < 1e-15);
    }

    #[test]
    fn probes_pass_along_a_full_solve() {
        use crate::decision::{solve_decision_with_observer, IterateState, IterationObserver, SolverConfig};

        struct Probes {
            data: Vec<(Vec<f64>, Vec<f64>, f64)>,
        }
        impl IterationObserver<f64> for Probes {
            fn observe(&mut self, s: &IterateState<f64>) {
                self.data.push((s.x.clone(), s.delta.clone(), s.alpha));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let packing: Vec<_> = (0..2)
            .map(|_| SparseSymMatrix::from_dense(&random_psd(4, &mut rng)))
            .collect();
        let covering: Vec<_> = (0..2)
            .map(|_| {
                SparseSymMatrix::from_dense(
                    &random_psd(4, &mut rng)
                        .add(&SymMatrix::identity(4).scale(2.0))
                        .unwrap(),
                )
            })
            .collect();
        let inst = MixedInstance::new(packing, covering).unwrap();
        let mut probes = Probes { data: Vec::new() };
        let cfg = SolverConfig::with_eps(0.05);
        solve_decision_with_observer(&inst, &cfg, &mut probes).unwrap();
        assert!(!probes.data.is_empty());
        // probing every iteration is slow; sample a spread
        let stride = (probes.data.len() / 25).max(1);
        for (x, delta, alpha) in probes.data.iter().step_by(stride) {
            let r = probe_iteration(&inst, x, delta, *alpha).unwrap();
            assert!(r.passed, "probe failed: {:?}", r.checks.iter().find(|c| !c.passed));
        }
    }

    #[test]
    fn totsum_goodsum_examples() {
        // all y_j < T: S covers everything, gap is the slack factor times sum
        let gap = totsum_goodsum_gap(&[0.0, 0.5], &[1.0, 1.0], 1.0, 2.0).unwrap();
        assert!(gap >= 0.0);
        // n = 1
        let gap = totsum_goodsum_gap(&[0.0], &[3.0], 1.0, 0.5).unwrap();
        assert!(gap >= 0.0);
        // preconditions
        assert!(totsum_goodsum_gap(&[2.0], &[1.0], 1.0, 0.5).is_err());
        assert!(totsum_goodsum_gap(&[0.0], &[0.0], 1.0, 0.5).is_err());
    }

    #[test]
    fn totsum_goodsum_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=16);
            let y: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 10.0).collect();
            let v: Vec<f64> = (0..n).map(|_| 0.1 + rng.gen::<f64>() * 5.0).collect();
            let t = y.iter().cloned().fold(f64::INFINITY, f64::min) + 0.1 + rng.gen::<f64>() * 5.0;
            let c = rng.gen::<f64>() * 5.0;
            let gap = totsum_goodsum_gap(&y, &v, t, c).unwrap();
            assert!(gap >= -1e-12, "gap {gap}");
        }
    }

    #[test]
    fn gronwall_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let beta = 0.1 + rng.gen::<f64>() * 3.0;
            let c = rng.gen::<f64>() * 2.0;
            let u0 = rng.gen::<f64>() * 5.0;
            let r = gronwall_check(beta, c, u0, 5.0).unwrap();
            assert!(r.passed, "margin {}", r.margin);
        }
    }
}
