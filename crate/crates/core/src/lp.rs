//! Specialization to mixed positive linear programs: the same iteration as
//! the matrix solver with diagonal aggregates, so `Y` and `Z` become
//! entrywise exponentials of `P x` and `-C x` and no eigendecomposition is
//! ever needed.
//!
//! An LP instance is a pair of nonnegative `n x d` matrices `(P, C)`; it
//! embeds into the matrix problem as the diagonal instance
//! `P_i = diag(P_{:i})`, `C_i = diag(C_{:i})`, and `solve_decision_lp`
//! agrees with the matrix path on that embedding (same answer tag, `x`
//! within 1e-9 relative).
//!
//! Files: either MPSDP-v1 with diagonal matrices, or the compact `MPLP 1`
//! format (`dims <d> <n>` followed by `P <nnz>` / `C <nnz>` triplet blocks
//! of `row col value` into the `n x d` matrices).

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::decision::{
    explicit_iteration_bound, step, step_sizes, update_set, DecisionOutcome, Resolution,
    SolverConfig, EPS_MAX,
};
use crate::instance::{parse_tok, MixedInstance, NonemptyLines};
use crate::scalar::{log_sum_exp, softmax, Scalar};
use crate::symmat::{SparseSymMatrix, SymMatrix};
use crate::{Error, Result};

/// Mixed positive LP instance: nonnegative `n x d` packing and covering
/// matrices, stored column-major (gradients iterate over columns).
#[derive(Debug, Clone)]
pub struct LpInstance<T> {
    n: usize,
    d: usize,
    p: Vec<T>,
    c: Vec<T>,
}

impl<T: Scalar> LpInstance<T> {
    /// `p` and `c` are column-major `n x d` entry lists.
    pub fn new(n: usize, d: usize, p: Vec<T>, c: Vec<T>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::input("dimensions must be positive"));
        }
        if p.len() != n * d {
            return Err(Error::DimMismatch(p.len(), n * d));
        }
        if c.len() != n * d {
            return Err(Error::DimMismatch(c.len(), n * d));
        }
        for (name, m) in [("P", &p), ("C", &c)] {
            for (idx, &v) in m.iter().enumerate() {
                if !v.is_finite() || v < T::zero() {
                    return Err(Error::input(format!(
                        "{name} entry ({}, {}) = {v} must be nonnegative and finite",
                        idx % n,
                        idx / n
                    )));
                }
            }
        }
        for i in 0..d {
            if p[i * n..(i + 1) * n].iter().all(|&v| v == T::zero()) {
                return Err(Error::input(format!(
                    "column {} of P has no positive entry",
                    i + 1
                )));
            }
        }
        Ok(LpInstance { n, d, p, c })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p_col(&self, i: usize) -> &[T] {
        &self.p[i * self.n..(i + 1) * self.n]
    }
    pub fn c_col(&self, i: usize) -> &[T] {
        &self.c[i * self.n..(i + 1) * self.n]
    }

    fn col_max(col: &[T]) -> T {
        col.iter()
            .cloned()
            .fold(T::neg_infinity(), |a, b| if b > a { b } else { a })
    }

    /// Width of the diagonal embedding: `max_i max(C_{:i}) / max(P_{:i})`,
    /// clamped to `>= 1`.
    pub fn width(&self) -> T {
        let mut rho = T::one();
        for i in 0..self.d {
            let r = Self::col_max(self.c_col(i)) / Self::col_max(self.p_col(i));
            if r > rho {
                rho = r;
            }
        }
        rho
    }

    /// Diagonal matrix embedding into the matrix problem.
    pub fn to_mixed(&self) -> Result<MixedInstance<T>> {
        let diag = |col: &[T]| -> Result<SparseSymMatrix<T>> {
            let triplets: Vec<(usize, usize, T)> = col
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != T::zero())
                .map(|(j, &v)| (j, j, v))
                .collect();
            SparseSymMatrix::new(self.n, triplets)
        };
        let packing = (0..self.d)
            .map(|i| diag(self.p_col(i)))
            .collect::<Result<Vec<_>>>()?;
        let covering = (0..self.d)
            .map(|i| diag(self.c_col(i)))
            .collect::<Result<Vec<_>>>()?;
        MixedInstance::new(packing, covering)
    }

    /// Extracts an LP instance from a diagonal matrix instance; errors if any
    /// constraint matrix has an off-diagonal entry or `n_p != n_c`.
    pub fn from_mixed(inst: &MixedInstance<T>) -> Result<Self> {
        if inst.n_p() != inst.n_c() {
            return Err(Error::input(
                "diagonal embedding requires equal packing/covering dimensions",
            ));
        }
        let n = inst.n();
        let d = inst.d();
        let extract = |mats: &[SparseSymMatrix<T>], name: &str| -> Result<Vec<T>> {
            let mut out = vec![T::zero(); n * d];
            for (i, m) in mats.iter().enumerate() {
                for &(r, c, v) in m.triplets() {
                    if r != c {
                        return Err(Error::input(format!(
                            "{name}_{} has off-diagonal entry ({r}, {c}); not an LP instance",
                            i + 1
                        )));
                    }
                    out[i * n + r] = out[i * n + r] + v;
                }
            }
            Ok(out)
        };
        let p = extract(inst.packing(), "P")?;
        let c = extract(inst.covering(), "C")?;
        LpInstance::new(n, d, p, c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse(BufReader::new(file))
    }

    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut lines = NonemptyLines::new(reader);
        let (lineno, header) = lines.next_required("header")?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks != ["MPLP", "1"] {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 'MPLP 1' header, got '{header}'"),
            });
        }
        let (lineno, dims) = lines.next_required("dims line")?;
        let toks: Vec<&str> = dims.split_whitespace().collect();
        if toks.len() != 3 || toks[0] != "dims" {
            return Err(Error::Parse {
                line: lineno,
                msg: "expected 'dims <d> <n>'".into(),
            });
        }
        let d: usize = parse_tok(toks[1], lineno)?;
        let n: usize = parse_tok(toks[2], lineno)?;
        if d == 0 || n == 0 {
            return Err(Error::Parse {
                line: lineno,
                msg: "all dimensions must be positive".into(),
            });
        }
        let mut read_matrix = |tag: &str| -> Result<Vec<T>> {
            let (lineno, header) = lines.next_required(&format!("{tag} block header"))?;
            let toks: Vec<&str> = header.split_whitespace().collect();
            if toks.len() != 2 || toks[0] != tag {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("expected '{tag} <nnz>', got '{header}'"),
                });
            }
            let nnz: usize = parse_tok(toks[1], lineno)?;
            let mut out = vec![T::zero(); n * d];
            for _ in 0..nnz {
                let (lineno, entry) = lines.next_required("triplet line")?;
                let toks: Vec<&str> = entry.split_whitespace().collect();
                if toks.len() != 3 {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("expected '<row> <col> <value>', got '{entry}'"),
                    });
                }
                let r: usize = parse_tok(toks[0], lineno)?;
                let c: usize = parse_tok(toks[1], lineno)?;
                let v: f64 = parse_tok(toks[2], lineno)?;
                if r >= n || c >= d {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("triplet ({r}, {c}) out of range for {n} x {d}"),
                    });
                }
                out[c * n + r] = out[c * n + r] + T::c(v);
            }
            Ok(out)
        };
        let p = read_matrix("P")?;
        let c = read_matrix("C")?;
        if let Some((lineno, extra)) = lines.next()? {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("unexpected trailing content '{extra}'"),
            });
        }
        LpInstance::new(n, d, p, c)
    }

    pub fn store(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        self.write(&mut file)
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "MPLP 1")?;
        writeln!(w, "dims {} {}", self.d, self.n)?;
        for (tag, m) in [("P", &self.p), ("C", &self.c)] {
            let nnz = m.iter().filter(|&&v| v != T::zero()).count();
            writeln!(w, "{tag} {nnz}")?;
            for i in 0..self.d {
                for j in 0..self.n {
                    let v = m[i * self.n + j];
                    if v != T::zero() {
                        writeln!(w, "{j} {i} {v:.17e}")?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// LP potential `(1 - eps) lse(P x) + lse(-C x)`; matches the matrix
/// potential on the diagonal embedding.
pub fn lp_potential<T: Scalar>(lp: &LpInstance<T>, x: &[T], eps: T) -> Result<T> {
    let (px, cx) = aggregates(lp, x)?;
    let neg: Vec<T> = cx.iter().map(|&v| -v).collect();
    Ok((T::one() - eps) * log_sum_exp(&px) + log_sum_exp(&neg))
}

fn aggregates<T: Scalar>(lp: &LpInstance<T>, x: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if x.len() != lp.d {
        return Err(Error::DimMismatch(x.len(), lp.d));
    }
    let mut px = vec![T::zero(); lp.n];
    let mut cx = vec![T::zero(); lp.n];
    for i in 0..lp.d {
        let xi = x[i];
        if xi == T::zero() {
            continue;
        }
        for (j, (&pv, &cv)) in lp.p_col(i).iter().zip(lp.c_col(i)).enumerate() {
            px[j] = px[j] + xi * pv;
            cx[j] = cx[j] + xi * cv;
        }
    }
    Ok((px, cx))
}

fn vec_max<T: Scalar>(v: &[T]) -> T {
    v.iter()
        .cloned()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a })
}

fn vec_min<T: Scalar>(v: &[T]) -> T {
    v.iter()
        .cloned()
        .fold(T::infinity(), |a, b| if b < a { b } else { a })
}

/// Decision solver for LP instances: the same control flow as the matrix
/// solver with all spectral quantities replaced by their entrywise
/// counterparts. Always runs the entrywise (exact) path; `cfg.mode` is
/// ignored because the diagonal exponentials are already cheap and exact.
pub fn solve_decision_lp<T: Scalar>(
    lp: &LpInstance<T>,
    cfg: &SolverConfig<T>,
) -> Result<DecisionOutcome<T>> {
    let n = lp.n;
    let d = lp.d;
    let nd = (n * d) as f64;

    let eps_f = cfg.eps.to_f64_lossy();
    let eps_lo = {
        let f = nd.powi(-3);
        if f <= EPS_MAX {
            f
        } else {
            0.0
        }
    };
    if !eps_f.is_finite() || eps_f <= 0.0 {
        return Err(Error::config(format!("eps must be positive, got {eps_f}")));
    }
    if eps_f < eps_lo {
        return Err(Error::config(format!(
            "eps = {eps_f} is below the admissible floor {eps_lo}"
        )));
    }
    let eps = if eps_f > EPS_MAX && cfg.clamp_eps {
        T::c(EPS_MAX)
    } else {
        cfg.eps
    };
    let eps_int = eps / T::c(3.0);

    let rho = lp.width();
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

    let mut x: Vec<T> = (0..d)
        .map(|i| T::one() / (T::c(d as f64) * vec_max(lp.p_col(i))))
        .collect();

    let mut t: u64 = 0;
    let mut first_phase: Option<i64> = None;
    let mut last_phase: i64 = 0;

    let finish = |resolution: Resolution<T>,
                  t: u64,
                  x_final: &[T],
                  first_phase: Option<i64>,
                  last_phase: i64|
     -> Result<DecisionOutcome<T>> {
        let (px, cx) = aggregates(lp, x_final)?;
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
            lambda_max_phi: vec_max(&px),
            lambda_min_psi: vec_min(&cx),
        })
    };

    loop {
        let (px, cx) = aggregates(lp, &x)?;
        let lmax = vec_max(&px);
        let lmin = vec_min(&cx);
        if lmax >= k || lmin >= k {
            return Ok(finish(
                Resolution::Feasible { x: x.clone() },
                t,
                &x,
                first_phase,
                last_phase,
            )?);
        }

        let yw = softmax(&px);
        let neg: Vec<T> = cx.iter().map(|&v| -v).collect();
        let zw = softmax(&neg);
        let mut grad_p = vec![T::zero(); d];
        let mut grad_c = vec![T::zero(); d];
        for i in 0..d {
            let mut gp = T::zero();
            let mut gc = T::zero();
            for (j, (&pv, &cv)) in lp.p_col(i).iter().zip(lp.c_col(i)).enumerate() {
                gp = gp + pv * yw[j];
                gc = gc + cv * zw[j];
            }
            grad_p[i] = gp;
            grad_c[i] = gc;
        }

        let s = ((log_sum_exp(&px) - log_sum_exp(&neg)).to_f64_lossy()
            / std::f64::consts::LN_2)
            .floor() as i64;
        first_phase.get_or_insert(s);
        last_phase = s;

        let w = update_set(&grad_p, &grad_c, eps_int);
        if w.is_empty() {
            // Diagonal witness pair, trace-normalized.
            let y = SymMatrix::from_diag(&yw);
            let z = SymMatrix::from_diag(&zw);
            return Ok(finish(
                Resolution::Infeasible { y, z },
                t,
                &x,
                first_phase,
                last_phase,
            )?);
        }
        let delta = step_sizes(&grad_p, &grad_c, &w);
        x = step(&x, &delta, alpha);
        t += 1;
        if t >= max_iters {
            let detail =
                format!("no termination after {t} iterations (explicit bound {bound:.3e})");
            return Ok(finish(
                Resolution::IterationLimit { x: x.clone(), detail },
                t,
                &x.clone(),
                first_phase,
                last_phase,
            )?);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decision::solve_decision;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_lp(p: f64, c: f64) -> LpInstance<f64> {
        LpInstance::new(1, 1, vec![p], vec![c]).unwrap()
    }

    fn random_lp(n: usize, d: usize, seed: u64) -> LpInstance<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Keep every P column supported.
        let p: Vec<f64> = (0..n * d).map(|_| 0.05 + rng.gen::<f64>()).collect();
        let c: Vec<f64> = (0..n * d).map(|_| rng.gen::<f64>() * 1.5).collect();
        LpInstance::new(n, d, p, c).unwrap()
    }

    #[test]
    fn validation() {
        assert!(LpInstance::new(1, 1, vec![-1.0], vec![1.0]).is_err());
        // P column with no positive entry
        assert!(LpInstance::new(2, 1, vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(LpInstance::new(2, 1, vec![1.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn scalar_examples() {
        let out = solve_decision_lp(&scalar_lp(2.0, 1.0), &SolverConfig::with_eps(0.05)).unwrap();
        assert_eq!(out.tag(), "infeasible");
        let out = solve_decision_lp(&scalar_lp(1.0, 2.0), &SolverConfig::with_eps(0.05)).unwrap();
        assert_eq!(out.tag(), "feasible");
        // Feasible guarantee: max Px <= (1 + 3 eps_int) min Cx
        assert!(out.lambda_max_phi <= (1.0 + 3.0 * out.eps_internal) * out.lambda_min_psi);
    }

    #[test]
    fn potential_examples() {
        let eps = 0.05;
        // x = 0 -> (1 - eps) ln n + ln n
        let lp = random_lp(3, 2, 1);
        let f = lp_potential(&lp, &[0.0, 0.0], eps).unwrap();
        let expect = (1.0 - eps) * 3.0f64.ln() + 3.0f64.ln();
        assert!((f - expect).abs() < 1e-12);
        // n = 1 -> (1 - eps) [Px] - [Cx]
        let lp = scalar_lp(2.0, 3.0);
        let f = lp_potential(&lp, &[0.5], eps).unwrap();
        assert!((f - ((1.0 - eps) * 1.0 - 1.5)).abs() < 1e-12);
    }

    #[test]
    fn potential_matches_matrix_path_on_embedding() {
        let lp = random_lp(4, 3, 7);
        let inst = lp.to_mixed().unwrap();
        let x = [0.3, 0.9, 0.1];
        let f_lp = lp_potential(&lp, &x, 0.05).unwrap();
        let f_sdp = crate::decision::potential(&inst, &x, 0.05).unwrap();
        assert!((f_lp - f_sdp).abs() < 1e-10, "{f_lp} vs {f_sdp}");
    }

    #[test]
    fn agreement_with_matrix_path() {
        let cfg = SolverConfig::with_eps(0.05);
        for seed in 0..5 {
            let lp = random_lp(4, 3, 100 + seed);
            let inst = lp.to_mixed().unwrap();
            let a = solve_decision_lp(&lp, &cfg).unwrap();
            let b = solve_decision(&inst, &cfg).unwrap();
            assert_eq!(a.tag(), b.tag(), "seed {seed}");
            if let (Some(xa), Some(xb)) = (a.x(), b.x()) {
                for (va, vb) in xa.iter().zip(xb) {
                    let rel = (va - vb).abs() / vb.abs().max(1e-300);
                    assert!(rel <= 1e-9, "seed {seed}: {va} vs {vb}");
                }
            }
        }
    }

    #[test]
    fn roundtrip_mplp_format() {
        let lp = random_lp(3, 2, 9);
        let mut buf = Vec::new();
        lp.write(&mut buf).unwrap();
        let lp2 = LpInstance::<f64>::parse(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(lp.p, lp2.p);
        assert_eq!(lp.c, lp2.c);
    }

    #[test]
    fn parse_errors_with_line_numbers() {
        let bad = "MPLP 1\ndims 1 1\nP 1\n0 0 1.0\nC 1\n0 5 1.0\n";
        match LpInstance::<f64>::parse(std::io::Cursor::new(bad)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 6),
            other => panic!("expected parse error, got {other:?}"),
        }
        let bad = "MPSDP 1\n";
        assert!(LpInstance::<f64>::parse(std::io::Cursor::new(bad)).is_err());
    }

    #[test]
    fn from_mixed_requires_diagonal() {
        let m = crate::symmat::SparseSymMatrix::new(2, vec![(0, 1, 1.0), (0, 0, 2.0), (1, 1, 2.0)])
            .unwrap();
        let id = crate::symmat::SparseSymMatrix::new(2, vec![(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let inst = MixedInstance::new(vec![m], vec![id]).unwrap();
        assert!(LpInstance::from_mixed(&inst).is_err());
        let lp = random_lp(3, 2, 4);
        let back = LpInstance::from_mixed(&lp.to_mixed().unwrap()).unwrap();
        assert_eq!(lp.p, back.p);
        assert_eq!(lp.c, back.c);
    }
}
