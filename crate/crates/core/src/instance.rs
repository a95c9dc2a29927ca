//! Problem data model for mixed positive SDP instances: validation, width,
//! `mu` bounds for the optimization binary search, guess rescaling, and the
//! MPSDP-v1 file format.
//!
//! Packing and covering matrices may live in different dimensions (`n_p` vs
//! `n_c`); the combined `n = max(n_p, n_c)` enters only threshold and error
//! exponents.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::expo_oracle::lanczos_top_eig;
use crate::scalar::Scalar;
use crate::symmat::{eig_sym, SparseSymMatrix};
use crate::{Error, Result};

/// Dimension above which load-time PSD validation switches from a full
/// eigendecomposition to a randomized Lanczos probe.
const PSD_DENSE_LIMIT: usize = 512;

/// A mixed packing/covering instance `{P_i}, {C_i}`. Immutable after
/// construction; construction validates PSD-ness and `lambda_max(P_i) > 0`.
#[derive(Debug, Clone)]
pub struct MixedInstance<T> {
    d: usize,
    n_p: usize,
    n_c: usize,
    packing: Vec<SparseSymMatrix<T>>,
    covering: Vec<SparseSymMatrix<T>>,
    // Cached top eigenvalues, used by initialization and width.
    lam_max_p: Vec<T>,
    lam_max_c: Vec<T>,
}

/// Summary quantities of an instance: width, combined dimension, and the
/// `mu` range bracketing the optimal value.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceStats<T> {
    pub rho: T,
    pub n: usize,
    pub mu_lower: T,
    pub mu_upper: T,
}

impl<T: Scalar> MixedInstance<T> {
    pub fn new(
        packing: Vec<SparseSymMatrix<T>>,
        covering: Vec<SparseSymMatrix<T>>,
    ) -> Result<Self> {
        if packing.is_empty() || packing.len() != covering.len() {
            return Err(Error::input(format!(
                "need equal nonempty matrix lists, got {} packing and {} covering",
                packing.len(),
                covering.len()
            )));
        }
        let d = packing.len();
        let n_p = packing[0].n();
        let n_c = covering[0].n();
        let mut lam_max_p = Vec::with_capacity(d);
        let mut lam_max_c = Vec::with_capacity(d);
        for (i, m) in packing.iter().enumerate() {
            if m.n() != n_p {
                return Err(Error::DimMismatch(m.n(), n_p));
            }
            let (lmin, lmax) = psd_probe(m, i, "P")?;
            check_psd(lmin, lmax, i, "P")?;
            if lmax <= T::zero() {
                return Err(Error::input(format!(
                    "packing matrix P_{} has lambda_max = 0; initialization divides by it",
                    i + 1
                )));
            }
            lam_max_p.push(lmax);
        }
        for (i, m) in covering.iter().enumerate() {
            if m.n() != n_c {
                return Err(Error::DimMismatch(m.n(), n_c));
            }
            let (lmin, lmax) = psd_probe(m, i, "C")?;
            check_psd(lmin, lmax, i, "C")?;
            lam_max_c.push(lmax);
        }
        Ok(MixedInstance {
            d,
            n_p,
            n_c,
            packing,
            covering,
            lam_max_p,
            lam_max_c,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn n_p(&self) -> usize {
        self.n_p
    }
    pub fn n_c(&self) -> usize {
        self.n_c
    }
    /// Combined dimension `n = max(n_p, n_c)`.
    pub fn n(&self) -> usize {
        self.n_p.max(self.n_c)
    }
    pub fn packing(&self) -> &[SparseSymMatrix<T>] {
        &self.packing
    }
    pub fn covering(&self) -> &[SparseSymMatrix<T>] {
        &self.covering
    }
    pub fn lambda_max_packing(&self) -> &[T] {
        &self.lam_max_p
    }
    pub fn lambda_max_covering(&self) -> &[T] {
        &self.lam_max_c
    }

    /// Width `rho = max_i lambda_max(C_i) / lambda_max(P_i)`, clamped to `>= 1`.
    pub fn width(&self) -> Result<T> {
        let mut rho = T::one();
        for i in 0..self.d {
            let lp = self.lam_max_p[i];
            if lp <= T::zero() {
                return Err(Error::input(format!(
                    "lambda_max(P_{}) = 0 while computing width",
                    i + 1
                )));
            }
            let r = self.lam_max_c[i] / lp;
            if r > rho {
                rho = r;
            }
        }
        Ok(rho)
    }

    /// `(mu_lower, mu_upper)` bracketing the optimal `mu`:
    /// `mu_upper = min_i lambda_max(P_i) / lambda_min(C_i)` and
    /// `mu_lower = min_i Tr(P_i) / max_i Tr(C_i)`. When every `C_i` is
    /// singular the upper bound is `+inf` and the caller must supply a range.
    pub fn mu_bounds(&self) -> Result<(T, T)> {
        let mut mu_upper = T::infinity();
        for (i, c) in self.covering.iter().enumerate() {
            let eig = eig_sym(&c.to_dense())?;
            let lmin = eig.eigenvalues[0];
            if lmin > T::zero() {
                let r = self.lam_max_p[i] / lmin;
                if r < mu_upper {
                    mu_upper = r;
                }
            }
        }
        let min_tr_p = self
            .packing
            .iter()
            .map(|m| m.trace())
            .fold(T::infinity(), |a, b| if b < a { b } else { a });
        let max_tr_c = self
            .covering
            .iter()
            .map(|m| m.trace())
            .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
        let mu_lower = if max_tr_c > T::zero() {
            min_tr_p / max_tr_c
        } else {
            T::infinity()
        };
        Ok((mu_lower, mu_upper))
    }

    pub fn stats(&self) -> Result<InstanceStats<T>> {
        let (mu_lower, mu_upper) = self.mu_bounds()?;
        Ok(InstanceStats {
            rho: self.width()?,
            n: self.n(),
            mu_lower,
            mu_upper,
        })
    }

    /// Instance for the binary-search guess `mu`: packing matrices become
    /// `(1 - eps/3) * mu^{-1} * P_i`; covering matrices are unchanged
    /// bit-exactly.
    pub fn scale_for_guess(&self, mu: T, eps: T) -> Result<Self> {
        if mu <= T::zero() {
            return Err(Error::input(format!("guess mu must be positive, got {mu}")));
        }
        let s = (T::one() - eps / T::c(3.0)) / mu;
        Ok(MixedInstance {
            d: self.d,
            n_p: self.n_p,
            n_c: self.n_c,
            packing: self.packing.iter().map(|m| m.scale(s)).collect(),
            covering: self.covering.clone(),
            lam_max_p: self.lam_max_p.iter().map(|&l| l * s).collect(),
            lam_max_c: self.lam_max_c.clone(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::parse(BufReader::new(file))
    }

    pub fn parse(reader: impl BufRead) -> Result<Self> {
        let mut lines = NonemptyLines::new(reader);
        let (lineno, header) = lines.next_required("header")?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks != ["MPSDP", "1"] {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 'MPSDP 1' header, got '{header}'"),
            });
        }
        let (lineno, dims) = lines.next_required("dims line")?;
        let toks: Vec<&str> = dims.split_whitespace().collect();
        if toks.len() != 4 || toks[0] != "dims" {
            return Err(Error::Parse {
                line: lineno,
                msg: "expected 'dims <d> <n_p> <n_c>'".into(),
            });
        }
        let d: usize = parse_tok(toks[1], lineno)?;
        let n_p: usize = parse_tok(toks[2], lineno)?;
        let n_c: usize = parse_tok(toks[3], lineno)?;
        if d == 0 || n_p == 0 || n_c == 0 {
            return Err(Error::Parse {
                line: lineno,
                msg: "all dimensions must be positive".into(),
            });
        }
        let mut packing = Vec::with_capacity(d);
        let mut covering = Vec::with_capacity(d);
        for i in 1..=d {
            packing.push(read_block(&mut lines, "P", i, n_p)?);
            covering.push(read_block(&mut lines, "C", i, n_c)?);
        }
        if let Some((lineno, extra)) = lines.next()? {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("unexpected trailing content '{extra}'"),
            });
        }
        MixedInstance::new(packing, covering)
    }

    pub fn store(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        self.write(&mut file)
    }

    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "MPSDP 1")?;
        writeln!(w, "dims {} {} {}", self.d, self.n_p, self.n_c)?;
        for i in 0..self.d {
            write_block(w, "P", i + 1, &self.packing[i])?;
            write_block(w, "C", i + 1, &self.covering[i])?;
        }
        Ok(())
    }
}

fn write_block<T: Scalar>(
    w: &mut impl Write,
    tag: &str,
    i: usize,
    m: &SparseSymMatrix<T>,
) -> Result<()> {
    writeln!(w, "{tag} {i} {}", m.nnz())?;
    for &(r, c, v) in m.triplets() {
        writeln!(w, "{r} {c} {v:.17e}")?;
    }
    Ok(())
}

fn check_psd<T: Scalar>(lmin: T, lmax: T, i: usize, tag: &str) -> Result<()> {
    let scale = if lmax > T::one() { lmax } else { T::one() };
    if lmin < -T::c(1e-8) * scale {
        return Err(Error::input(format!(
            "{tag}_{} is not PSD: lambda_min = {lmin}",
            i + 1
        )));
    }
    Ok(())
}

/// `(lambda_min, lambda_max)` of a constraint matrix. Full eigendecomposition
/// up to [`PSD_DENSE_LIMIT`]; above that, a seeded Lanczos probe on a shifted
/// operator bounds both extremes.
fn psd_probe<T: Scalar>(m: &SparseSymMatrix<T>, i: usize, tag: &str) -> Result<(T, T)> {
    if m.n() <= PSD_DENSE_LIMIT {
        let eig = eig_sym(&m.to_dense())?;
        return Ok((eig.eigenvalues[0], eig.eigenvalues[m.n() - 1]));
    }
    let n = m.n();
    // Gershgorin-style magnitude cap makes sigma*I - M and sigma*I + M PSD.
    let mut row_abs = vec![T::zero(); n];
    for &(r, c, v) in m.triplets() {
        row_abs[r] = row_abs[r] + v.abs();
        if r != c {
            row_abs[c] = row_abs[c] + v.abs();
        }
    }
    let sigma = row_abs
        .iter()
        .fold(T::zero(), |a, &b| if b > a { b } else { a });
    let seed = 0x9d5d_c0de ^ (i as u64);
    let eta = T::c(0.01);
    // lambda_max(M) = sigma - lambda_min(sigma I - M); probe via top of sigma I + M.
    let top = lanczos_top_eig(
        |v, out| {
            for (o, &x) in out.iter_mut().zip(v) {
                *o = sigma * x;
            }
            m.matvec_add(v, T::one(), out);
        },
        n,
        eta,
        seed,
    )?;
    let lmax = top.estimate - sigma;
    let bottom = lanczos_top_eig(
        |v, out| {
            for (o, &x) in out.iter_mut().zip(v) {
                *o = sigma * x;
            }
            m.matvec_add(v, -T::one(), out);
        },
        n,
        eta,
        seed.wrapping_add(1),
    )?;
    let lmin = sigma - bottom.estimate;
    let _ = tag;
    Ok((lmin, lmax))
}

pub(crate) fn parse_tok<F: std::str::FromStr>(tok: &str, line: usize) -> Result<F> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse '{tok}'"),
    })
}

fn read_block<T: Scalar>(
    lines: &mut NonemptyLines<impl BufRead>,
    tag: &str,
    i: usize,
    n: usize,
) -> Result<SparseSymMatrix<T>> {
    let (lineno, header) = lines.next_required(&format!("{tag} {i} block header"))?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 3 || toks[0] != tag || toks[1] != i.to_string() {
        return Err(Error::Parse {
            line: lineno,
            msg: format!("expected '{tag} {i} <nnz>', got '{header}'"),
        });
    }
    let nnz: usize = parse_tok(toks[2], lineno)?;
    let mut triplets = Vec::with_capacity(nnz);
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
        if r > c {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("triplet row {r} > col {c}; store the upper triangle"),
            });
        }
        if c >= n {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("triplet col {c} out of range for dimension {n}"),
            });
        }
        triplets.push((r, c, T::c(v)));
    }
    SparseSymMatrix::new(n, triplets).map_err(|e| Error::Parse {
        line: 0,
        msg: e.to_string(),
    })
}

/// Line iterator that skips blanks and '#' comments, tracking line numbers.
pub(crate) struct NonemptyLines<R> {
    reader: R,
    lineno: usize,
}

impl<R: BufRead> NonemptyLines<R> {
    pub(crate) fn new(reader: R) -> Self {
        NonemptyLines { reader, lineno: 0 }
    }

    pub(crate) fn next(&mut self) -> Result<Option<(usize, String)>> {
        loop {
            let mut buf = String::new();
            let read = self.reader.read_line(&mut buf)?;
            if read == 0 {
                return Ok(None);
            }
            self.lineno += 1;
            let content = match buf.split('#').next() {
                Some(c) => c.trim(),
                None => "",
            };
            if !content.is_empty() {
                return Ok(Some((self.lineno, content.to_string())));
            }
        }
    }

    pub(crate) fn next_required(&mut self, what: &str) -> Result<(usize, String)> {
        self.next()?.ok_or_else(|| Error::Parse {
            line: self.lineno + 1,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmat::SymMatrix;

    fn sp(n: usize, t: Vec<(usize, usize, f64)>) -> SparseSymMatrix<f64> {
        SparseSymMatrix::new(n, t).unwrap()
    }

    fn scalar_instance(p: f64, c: f64) -> MixedInstance<f64> {
        MixedInstance::new(
            vec![sp(1, vec![(0, 0, p)])],
            vec![sp(1, vec![(0, 0, c)])],
        )
        .unwrap()
    }

    #[test]
    fn width_examples() {
        // C_i = P_i -> width 1
        let inst = MixedInstance::new(
            vec![sp(2, vec![(0, 0, 1.0), (1, 1, 2.0)])],
            vec![sp(2, vec![(0, 0, 1.0), (1, 1, 2.0)])],
        )
        .unwrap();
        assert!((inst.width().unwrap() - 1.0).abs() < 1e-12);

        assert!((scalar_instance(1.0, 3.0).width().unwrap() - 3.0).abs() < 1e-12);

        // P = diag(2, 0), C = diag(0, 5) -> 5/2
        let inst = MixedInstance::new(
            vec![sp(2, vec![(0, 0, 2.0)])],
            vec![sp(2, vec![(1, 1, 5.0)])],
        )
        .unwrap();
        assert!((inst.width().unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn width_clamped_below_at_one() {
        // ratio 0.5 clamps to 1
        assert!((scalar_instance(2.0, 1.0).width().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_packing_rejected() {
        let r = MixedInstance::new(vec![sp(1, vec![])], vec![sp(1, vec![(0, 0, 1.0)])]);
        assert!(r.is_err());
    }

    #[test]
    fn zero_covering_permitted() {
        let inst = MixedInstance::new(vec![sp(2, vec![(0, 0, 1.0)])], vec![sp(2, vec![])]);
        assert!(inst.is_ok());
    }

    #[test]
    fn non_psd_rejected() {
        let r = MixedInstance::new(
            vec![sp(2, vec![(0, 1, 1.0)])], // eigenvalues +-1
            vec![sp(2, vec![(0, 0, 1.0)])],
        );
        assert!(r.is_err());
    }

    #[test]
    fn mu_bounds_examples() {
        // scalar P = [2], C = [1] -> (2, 2); mu_OPT = 2 analytically.
        let (lo, hi) = scalar_instance(2.0, 1.0).mu_bounds().unwrap();
        assert!((lo - 2.0).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);

        // P_i = C_i = I_n -> (1, 1)
        let id = |n: usize| sp(n, (0..n).map(|j| (j, j, 1.0)).collect());
        let inst = MixedInstance::new(vec![id(3), id(3)], vec![id(3), id(3)]).unwrap();
        let (lo, hi) = inst.mu_bounds().unwrap();
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);

        // P = diag(4,4), C = diag(1,2) -> (8/3, 4)
        let inst = MixedInstance::new(
            vec![sp(2, vec![(0, 0, 4.0), (1, 1, 4.0)])],
            vec![sp(2, vec![(0, 0, 1.0), (1, 1, 2.0)])],
        )
        .unwrap();
        let (lo, hi) = inst.mu_bounds().unwrap();
        assert!((lo - 8.0 / 3.0).abs() < 1e-12 && (hi - 4.0).abs() < 1e-12);
    }

    #[test]
    fn mu_upper_infinite_when_all_covering_singular() {
        let inst = MixedInstance::new(
            vec![sp(2, vec![(0, 0, 1.0), (1, 1, 1.0)])],
            vec![sp(2, vec![(0, 0, 1.0)])], // singular covering
        )
        .unwrap();
        let (_, hi) = inst.mu_bounds().unwrap();
        assert!(hi.is_infinite());
    }

    #[test]
    fn mu_bounds_sandwich_diagonal() {
        // Per-coordinate instance: P_i = p_i E_ii, C_i = c_i E_ii so
        // mu_OPT = max_i p_i / c_i analytically.
        let p = [2.0, 5.0, 1.0];
        let c = [1.0, 4.0, 2.0];
        let packing: Vec<_> = (0..3).map(|i| sp(3, vec![(i, i, p[i])])).collect();
        let covering: Vec<_> = (0..3).map(|i| sp(3, vec![(i, i, c[i])])).collect();
        let inst = MixedInstance::new(packing, covering).unwrap();
        let mu_opt: f64 = (0..3).map(|i| p[i] / c[i]).fold(0.0, f64::max);
        let (lo, hi) = inst.mu_bounds().unwrap();
        assert!(lo <= mu_opt + 1e-12 && mu_opt <= hi + 1e-12);
    }

    #[test]
    fn chained_mu_range_bound() {
        // mu_upper / mu_lower <= n * max lambda_max(C) / min lambda_min(C)
        // on nonsingular covering instances.
        let inst = MixedInstance::new(
            vec![
                sp(2, vec![(0, 0, 3.0), (1, 1, 1.0)]),
                sp(2, vec![(0, 0, 1.0), (1, 1, 2.0)]),
            ],
            vec![
                sp(2, vec![(0, 0, 1.0), (1, 1, 4.0)]),
                sp(2, vec![(0, 0, 2.0), (1, 1, 1.0)]),
            ],
        )
        .unwrap();
        let (lo, hi) = inst.mu_bounds().unwrap();
        let bound = 2.0 * 4.0 / 1.0;
        assert!(hi / lo <= bound * (1.0 + 1e-9));
    }

    #[test]
    fn scale_for_guess_examples() {
        let inst = scalar_instance(2.0, 1.0);
        // mu = 1, eps -> 0: unchanged
        let s = inst.scale_for_guess(1.0, 0.0).unwrap();
        assert_eq!(s.packing()[0], inst.packing()[0]);
        // P = [2], mu = 2, eps = 0.03 -> [0.99]
        let s = inst.scale_for_guess(2.0, 0.03).unwrap();
        assert!((s.packing()[0].triplets()[0].2 - 0.99).abs() < 1e-15);
        // covering preserved bit-exactly
        assert_eq!(s.covering()[0], inst.covering()[0]);
        // invalid mu
        assert!(inst.scale_for_guess(0.0, 0.03).is_err());
    }

    #[test]
    fn scale_for_guess_multiplicative() {
        let inst = scalar_instance(2.0, 1.0);
        let eps = 0.04;
        let twice = inst
            .scale_for_guess(3.0, eps)
            .unwrap()
            .scale_for_guess(5.0, eps)
            .unwrap();
        let once = inst
            .scale_for_guess(15.0 / (1.0 - eps / 3.0), eps)
            .unwrap();
        let a = twice.packing()[0].triplets()[0].2;
        let b = once.packing()[0].triplets()[0].2;
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn roundtrip_via_format() {
        let inst = MixedInstance::new(
            vec![
                sp(2, vec![(0, 0, 1.5), (0, 1, -0.25), (1, 1, 2.0)]),
                sp(2, vec![(1, 1, 1e-3)]),
                sp(2, vec![(0, 0, 3.0)]),
            ],
            vec![
                sp(3, vec![(0, 0, 1.0), (2, 2, 0.5)]),
                sp(3, vec![(0, 2, 0.125), (0, 0, 1.0), (2, 2, 1.0)]),
                sp(3, vec![]),
            ],
        )
        .unwrap();
        let mut buf = Vec::new();
        inst.write(&mut buf).unwrap();
        let back = MixedInstance::<f64>::parse(&buf[..]).unwrap();
        assert_eq!(back.d(), inst.d());
        for i in 0..inst.d() {
            let a = back.packing()[i].to_dense();
            let b = inst.packing()[i].to_dense();
            assert!(a.sub(&b).unwrap().frobenius_norm() < 1e-15);
            let a = back.covering()[i].to_dense();
            let b = inst.covering()[i].to_dense();
            assert!(a.sub(&b).unwrap().frobenius_norm() < 1e-15);
        }
    }

    #[test]
    fn minimal_file_parses() {
        let text = "# comment\nMPSDP 1\ndims 1 1 1\nP 1 1\n0 0 2.0\nC 1 1\n0 0 1.0\n";
        let inst = MixedInstance::<f64>::parse(text.as_bytes()).unwrap();
        assert_eq!(inst.d(), 1);
        assert_eq!(inst.packing()[0].triplets()[0].2, 2.0);
    }

    #[test]
    fn lower_triangle_triplet_rejected_with_line() {
        let text = "MPSDP 1\ndims 1 2 2\nP 1 1\n1 0 2.0\nC 1 0\n";
        match MixedInstance::<f64>::parse(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_header_rejected() {
        assert!(MixedInstance::<f64>::parse("MPLP 1\n".as_bytes()).is_err());
    }

    #[test]
    fn psd_probe_matches_dense_path() {
        let m = sp(4, vec![(0, 0, 2.0), (1, 1, 1.0), (0, 1, 0.5), (3, 3, 4.0)]);
        let eig = eig_sym(&m.to_dense()).unwrap();
        let (lmin, lmax) = psd_probe(&m, 0, "P").unwrap();
        assert!((lmin - eig.eigenvalues[0]).abs() < 1e-10);
        assert!((lmax - eig.eigenvalues[3]).abs() < 1e-10);
        let _ = SymMatrix::<f64>::identity(1);
    }
}
