//! Symmetric-matrix kernel: storage, eigendecomposition, exact matrix
//! exponential, trace products, extremal eigenvalues, Loewner-order checks.
//!
//! The dense representation is authoritative; [`SparseSymMatrix`] is an
//! input/accumulation format. All operations are pure functions on immutable
//! inputs.
//!
//! The eigensolver is Householder tridiagonalization followed by implicit QL
//! with Wilkinson shifts, with a fixed tie-breaking and sign convention so
//! that decompositions are deterministic given the input.

use crate::scalar::Scalar;
use crate::{Error, Result};

/// Dense symmetric `n x n` real matrix. Storage enforces symmetry: every
/// write mirrors `(j, k)` into `(k, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    // Row-major full storage.
    data: Vec<T>,
}

impl<T: Scalar> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1, "dimension must be positive");
        SymMatrix {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for j in 0..n {
            m.data[j * n + j] = T::one();
        }
        m
    }

    pub fn from_diag(diag: &[T]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (j, &v) in diag.iter().enumerate() {
            m.data[j * m.n + j] = v;
        }
        m
    }

    /// Builds from a row-major slice, symmetrizing as `(M + M^T) / 2`.
    pub fn from_rows(n: usize, rows: &[T]) -> Self {
        assert_eq!(rows.len(), n * n);
        let mut m = Self::zeros(n);
        let half = T::c(0.5);
        for j in 0..n {
            for k in 0..n {
                m.data[j * n + k] = (rows[j * n + k] + rows[k * n + j]) * half;
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> T {
        self.data[j * self.n + k]
    }

    /// Sets both `(j, k)` and `(k, j)`.
    #[inline]
    pub fn set(&mut self, j: usize, k: usize, v: T) {
        self.data[j * self.n + k] = v;
        self.data[k * self.n + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, j: usize, k: usize, v: T) {
        self.data[j * self.n + k] = self.data[j * self.n + k] + v;
        if j != k {
            self.data[k * self.n + j] = self.data[k * self.n + j] + v;
        }
    }

    pub fn trace(&self) -> T {
        (0..self.n).fold(T::zero(), |acc, j| acc + self.get(j, j))
    }

    pub fn frobenius_norm(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    pub fn max_abs_entry(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &v| if v.abs() > acc { v.abs() } else { acc })
    }

    pub fn scale(&self, s: T) -> Self {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimMismatch(self.n, other.n));
        }
        Ok(SymMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-T::one()))
    }

    pub fn matvec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.n);
        let mut out = vec![T::zero(); self.n];
        for j in 0..self.n {
            let row = &self.data[j * self.n..(j + 1) * self.n];
            let mut acc = T::zero();
            for k in 0..self.n {
                acc = acc + row[k] * v[k];
            }
            out[j] = acc;
        }
        out
    }

    /// Symmetric product of two symmetric matrices need not be symmetric;
    /// this returns the full product row-major for callers that need it.
    pub fn matmul_full(&self, other: &Self) -> Result<Vec<T>> {
        if self.n != other.n {
            return Err(Error::DimMismatch(self.n, other.n));
        }
        let n = self.n;
        let mut out = vec![T::zero(); n * n];
        for j in 0..n {
            for l in 0..n {
                let a = self.data[j * n + l];
                if a == T::zero() {
                    continue;
                }
                for k in 0..n {
                    out[j * n + k] = out[j * n + k] + a * other.data[l * n + k];
                }
            }
        }
        Ok(out)
    }

    /// `R A R^T` for an `m x n` row-major `R`.
    pub fn congruence(&self, r: &[T], m: usize) -> Self {
        let n = self.n;
        assert_eq!(r.len(), m * n);
        // tmp = R A  (m x n)
        let mut tmp = vec![T::zero(); m * n];
        for i in 0..m {
            for l in 0..n {
                let a = r[i * n + l];
                if a == T::zero() {
                    continue;
                }
                for k in 0..n {
                    tmp[i * n + k] = tmp[i * n + k] + a * self.data[l * n + k];
                }
            }
        }
        let mut out = SymMatrix::zeros(m);
        for i in 0..m {
            for j in 0..=i {
                let mut acc = T::zero();
                for k in 0..n {
                    acc = acc + tmp[i * n + k] * r[j * n + k];
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    fn check_finite(&self) -> Result<()> {
        for j in 0..self.n {
            for k in 0..self.n {
                if !self.get(j, k).is_finite() {
                    return Err(Error::NonFinite(j, k));
                }
            }
        }
        Ok(())
    }

    /// Solves `self * w = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        if rhs.len() != self.n {
            return Err(Error::DimMismatch(rhs.len(), self.n));
        }
        let n = self.n;
        let mut a = self.data.clone();
        let mut b = rhs.to_vec();
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].abs();
            for r in col + 1..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == T::zero() {
                return Err(Error::SolverFailure("singular matrix in dense solve".into()));
            }
            if piv != col {
                for k in 0..n {
                    a.swap(col * n + k, piv * n + k);
                }
                b.swap(col, piv);
            }
            let d = a[col * n + col];
            for r in col + 1..n {
                let f = a[r * n + col] / d;
                if f == T::zero() {
                    continue;
                }
                for k in col..n {
                    a[r * n + k] = a[r * n + k] - f * a[col * n + k];
                }
                b[r] = b[r] - f * b[col];
            }
        }
        for col in (0..n).rev() {
            let mut acc = b[col];
            for k in col + 1..n {
                acc = acc - a[col * n + k] * b[k];
            }
            b[col] = acc / a[col * n + col];
        }
        Ok(b)
    }
}

/// Eigendecomposition `M = Q diag(eigenvalues) Q^T` with eigenvalues sorted
/// ascending and each eigenvector's largest-magnitude entry nonnegative.
#[derive(Debug, Clone)]
pub struct EigDecomposition<T> {
    n: usize,
    pub eigenvalues: Vec<T>,
    // Row-major n x n; column j is the eigenvector for eigenvalues[j].
    basis: Vec<T>,
}

impl<T: Scalar> EigDecomposition<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn basis_entry(&self, row: usize, col: usize) -> T {
        self.basis[row * self.n + col]
    }

    pub fn eigenvector(&self, col: usize) -> Vec<T> {
        (0..self.n).map(|r| self.basis_entry(r, col)).collect()
    }

    /// `Q f(Lambda) Q^T`.
    pub fn apply_spectral(&self, f: impl Fn(T) -> T) -> SymMatrix<T> {
        let n = self.n;
        let fv: Vec<T> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = SymMatrix::zeros(n);
        for j in 0..n {
            for k in 0..=j {
                let mut acc = T::zero();
                for l in 0..n {
                    acc = acc + fv[l] * self.basis[j * n + l] * self.basis[k * n + l];
                }
                out.set(j, k, acc);
            }
        }
        out
    }

    pub fn reconstruct(&self) -> SymMatrix<T> {
        self.apply_spectral(|l| l)
    }
}

/// Eigendecomposition of a dense symmetric matrix. Deterministic given `M`.
pub fn eig_sym<T: Scalar>(m: &SymMatrix<T>) -> Result<EigDecomposition<T>> {
    m.check_finite()?;
    let n = m.n;
    let mut z = m.data.clone();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(n, &mut z, &mut d, &mut e);
    tql2(n, &mut z, &mut d, &mut e)?;

    // Sort ascending with stable index tie-breaking.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap().then(a.cmp(&b)));
    let eigenvalues: Vec<T> = order.iter().map(|&i| d[i]).collect();
    let mut basis = vec![T::zero(); n * n];
    for (col, &src) in order.iter().enumerate() {
        // Sign convention: largest-magnitude entry nonnegative (first such
        // index on ties).
        let mut best = T::zero();
        let mut sign = T::one();
        for r in 0..n {
            let v = z[r * n + src];
            if v.abs() > best {
                best = v.abs();
                sign = if v < T::zero() { -T::one() } else { T::one() };
            }
        }
        for r in 0..n {
            basis[r * n + col] = z[r * n + src] * sign;
        }
    }
    Ok(EigDecomposition {
        n,
        eigenvalues,
        basis,
    })
}

// Householder reduction to tridiagonal form, accumulating transformations.
// Classic tred2 (EISPACK / JAMA lineage).
fn tred2<T: Scalar>(n: usize, z: &mut [T], d: &mut [T], e: &mut [T]) {
    for j in 0..n {
        d[j] = z[(n - 1) * n + j];
    }
    for i in (1..n).rev() {
        let l = i;
        let mut h = T::zero();
        let mut scale = T::zero();
        if l > 1 {
            for k in 0..l {
                scale = scale + d[k].abs();
            }
        }
        if scale == T::zero() {
            e[i] = if l > 0 { d[l - 1] } else { T::zero() };
            for j in 0..l {
                d[j] = z[(l - 1) * n + j];
                z[i * n + j] = T::zero();
                z[j * n + i] = T::zero();
            }
        } else {
            for k in 0..l {
                d[k] = d[k] / scale;
                h = h + d[k] * d[k];
            }
            let mut f = d[l - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h = h - f * g;
            d[l - 1] = f - g;
            for j in 0..l {
                e[j] = T::zero();
            }
            for j in 0..l {
                f = d[j];
                z[j * n + i] = f;
                g = e[j] + z[j * n + j] * f;
                for k in j + 1..l {
                    g = g + z[k * n + j] * d[k];
                    e[k] = e[k] + z[k * n + j] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..l {
                e[j] = e[j] / h;
                f = f + e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..l {
                e[j] = e[j] - hh * d[j];
            }
            for j in 0..l {
                f = d[j];
                g = e[j];
                for k in j..l {
                    z[k * n + j] = z[k * n + j] - f * e[k] - g * d[k];
                }
                d[j] = z[(l - 1) * n + j];
                z[i * n + j] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 1..n {
        z[(n - 1) * n + (i - 1)] = z[(i - 1) * n + (i - 1)];
        z[(i - 1) * n + (i - 1)] = T::one();
        let h = d[i];
        if h != T::zero() {
            for k in 0..i {
                d[k] = z[k * n + i] / h;
            }
            for j in 0..i {
                let mut g = T::zero();
                for k in 0..i {
                    g = g + z[k * n + i] * z[k * n + j];
                }
                for k in 0..i {
                    z[k * n + j] = z[k * n + j] - g * d[k];
                }
            }
        }
        for k in 0..i {
            z[k * n + i] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = z[(n - 1) * n + j];
        z[(n - 1) * n + j] = T::zero();
    }
    z[(n - 1) * n + (n - 1)] = T::one();
    e[0] = T::zero();
}

// Implicit QL with shifts on the tridiagonal form, accumulating eigenvectors.
fn tql2<T: Scalar>(n: usize, z: &mut [T], d: &mut [T], e: &mut [T]) -> Result<()> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();

    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    for l in 0..n {
        let cand = d[l].abs() + e[l].abs();
        if cand > tst1 {
            tst1 = cand;
        }
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0usize;
            loop {
                iter += 1;
                if iter > 200 {
                    return Err(Error::SolverFailure(
                        "eigensolver failed to converge".into(),
                    ));
                }
                let g = d[l];
                let two = T::c(2.0);
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = (p * p + T::one()).sqrt();
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for i in l + 2..n {
                    d[i] = d[i] - h;
                }
                f = f + h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g2 = c * e[i];
                    h = c * p;
                    r = (p * p + e[i] * e[i]).sqrt();
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g2;
                    d[i + 1] = h + s * (c * g2 + s * d[i]);
                    for k in 0..n {
                        h = z[k * n + (i + 1)];
                        z[k * n + (i + 1)] = s * z[k * n + i] + c * h;
                        z[k * n + i] = c * z[k * n + i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;

                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = T::zero();
    }
    Ok(())
}

/// Exact matrix exponential via the spectral decomposition.
pub fn mat_exp<T: Scalar>(m: &SymMatrix<T>) -> Result<SymMatrix<T>> {
    let eig = eig_sym(m)?;
    let max_exp_arg = T::max_value().ln() * T::c(0.99);
    for &l in &eig.eigenvalues {
        if l > max_exp_arg {
            return Err(Error::ExpOverflow(l.to_f64_lossy()));
        }
    }
    Ok(eig.apply_spectral(|l| l.exp()))
}

/// `<A, B> = Tr[A B] = sum_{j,k} A_{jk} B_{jk}` for symmetric A, B.
pub fn trace_product<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> Result<T> {
    if a.n != b.n {
        return Err(Error::DimMismatch(a.n, b.n));
    }
    Ok(a.data
        .iter()
        .zip(&b.data)
        .fold(T::zero(), |acc, (&x, &y)| acc + x * y))
}

/// Smallest and largest eigenvalues of `M`.
pub fn lambda_extremes<T: Scalar>(m: &SymMatrix<T>) -> Result<(T, T)> {
    let eig = eig_sym(m)?;
    Ok((eig.eigenvalues[0], eig.eigenvalues[m.n - 1]))
}

/// Loewner comparison `A <= B` up to `tol`: true iff `lambda_min(B - A) >= -tol`.
pub fn loewner_leq<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>, tol: T) -> Result<bool> {
    let diff = b.sub(a)?;
    let (lmin, _) = lambda_extremes(&diff)?;
    Ok(lmin >= -tol)
}

/// Default Loewner tolerance: `1e-9` scaled by `max(1, ||B - A||_F)`.
pub fn loewner_default_tol<T: Scalar>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> T {
    let scale = match b.sub(a) {
        Ok(d) => d.frobenius_norm(),
        Err(_) => T::one(),
    };
    let one = T::one();
    T::c(1e-9) * if scale > one { scale } else { one }
}

/// Sparse symmetric matrix in upper-triangular triplet form: entries with
/// `row <= col`; the mirror entry is implied.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix<T> {
    n: usize,
    triplets: Vec<(usize, usize, T)>,
}

impl<T: Scalar> SparseSymMatrix<T> {
    pub fn new(n: usize, triplets: Vec<(usize, usize, T)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::input("dimension must be positive"));
        }
        let mut seen = std::collections::HashSet::new();
        for &(r, c, v) in &triplets {
            if r > c || c >= n {
                return Err(Error::input(format!(
                    "triplet ({r}, {c}) out of range for upper-triangular n={n}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite(r, c));
            }
            if !seen.insert((r, c)) {
                return Err(Error::input(format!("duplicate triplet ({r}, {c})")));
            }
        }
        Ok(SparseSymMatrix { n, triplets })
    }

    pub fn zeros(n: usize) -> Self {
        SparseSymMatrix {
            n,
            triplets: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }

    pub fn triplets(&self) -> &[(usize, usize, T)] {
        &self.triplets
    }

    pub fn to_dense(&self) -> SymMatrix<T> {
        let mut m = SymMatrix::zeros(self.n);
        for &(r, c, v) in &self.triplets {
            m.set(r, c, v);
        }
        m
    }

    pub fn from_dense(m: &SymMatrix<T>) -> Self {
        let mut triplets = Vec::new();
        for r in 0..m.n {
            for c in r..m.n {
                let v = m.get(r, c);
                if v != T::zero() {
                    triplets.push((r, c, v));
                }
            }
        }
        SparseSymMatrix { n: m.n, triplets }
    }

    pub fn scale(&self, s: T) -> Self {
        SparseSymMatrix {
            n: self.n,
            triplets: self
                .triplets
                .iter()
                .map(|&(r, c, v)| (r, c, v * s))
                .collect(),
        }
    }

    pub fn trace(&self) -> T {
        self.triplets
            .iter()
            .filter(|&&(r, c, _)| r == c)
            .fold(T::zero(), |acc, &(_, _, v)| acc + v)
    }

    /// `out += s * (self * v)` with the implied symmetric mirror.
    pub fn matvec_add(&self, v: &[T], s: T, out: &mut [T]) {
        for &(r, c, val) in &self.triplets {
            out[r] = out[r] + s * val * v[c];
            if r != c {
                out[c] = out[c] + s * val * v[r];
            }
        }
    }

    /// `<self, D> = Tr[self * D]` against a dense symmetric matrix.
    pub fn trace_product_dense(&self, d: &SymMatrix<T>) -> Result<T> {
        if self.n != d.n {
            return Err(Error::DimMismatch(self.n, d.n));
        }
        let two = T::c(2.0);
        Ok(self.triplets.iter().fold(T::zero(), |acc, &(r, c, v)| {
            let w = if r == c { T::one() } else { two };
            acc + w * v * d.get(r, c)
        }))
    }

    /// Quadratic form `v^T self v`.
    pub fn quad_form(&self, v: &[T]) -> T {
        let two = T::c(2.0);
        self.triplets.iter().fold(T::zero(), |acc, &(r, c, val)| {
            let w = if r == c { T::one() } else { two };
            acc + w * val * v[r] * v[c]
        })
    }

    pub fn lambda_max(&self) -> Result<T> {
        let (_, lmax) = lambda_extremes(&self.to_dense())?;
        Ok(lmax)
    }
}

/// Accumulates `sum_i coeff_i * M_i` densely (dimension taken from the first
/// matrix; all must agree).
pub fn weighted_sum<T: Scalar>(
    mats: &[SparseSymMatrix<T>],
    coeffs: &[T],
) -> Result<SymMatrix<T>> {
    assert_eq!(mats.len(), coeffs.len());
    let n = mats
        .first()
        .ok_or_else(|| Error::input("empty matrix list"))?
        .n;
    let mut out = SymMatrix::zeros(n);
    for (m, &c) in mats.iter().zip(coeffs) {
        if m.n != n {
            return Err(Error::DimMismatch(m.n, n));
        }
        if c == T::zero() {
            continue;
        }
        for &(r, col, v) in &m.triplets {
            out.add_to(r, col, c * v);
        }
    }
    Ok(out)
}
