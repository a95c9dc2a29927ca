//! Seeded test-instance generators backing the CLI `gen` command.
//!
//! Every family is deterministic given `(n, d, seed)` and produces a valid
//! instance (the constructor re-validates). Families:
//!
//! - `random-psd`: random PSD packing and covering matrices;
//! - `diagonal`: simultaneously diagonal packing and covering matrices
//!   (also loadable as an LP instance via the diagonal embedding);
//! - `pure-packing`: scalar covering matrices (dimension 1), so the covering
//!   gradient is constant across iterations;
//! - `pure-covering`: scalar packing matrices, the mirror case;
//! - `commuting`: random PSD packing with simultaneously diagonal covering
//!   (the width-free threshold case);
//! - `laplacian`: covering matrices are Laplacians of random connected
//!   graphs shifted by [`LAPLACIAN_SHIFT`] `* I` to clear the all-ones
//!   kernel.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::instance::MixedInstance;
use crate::scalar::Scalar;
use crate::symmat::{SparseSymMatrix, SymMatrix};
use crate::{Error, Result};

/// Identity shift added to Laplacian covering matrices so they are
/// nonsingular (a graph Laplacian annihilates the all-ones vector).
pub const LAPLACIAN_SHIFT: f64 = 1e-6;

/// Instance family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    RandomPsd,
    Diagonal,
    PurePacking,
    PureCovering,
    Commuting,
    Laplacian,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::RandomPsd,
        Family::Diagonal,
        Family::PurePacking,
        Family::PureCovering,
        Family::Commuting,
        Family::Laplacian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::RandomPsd => "random-psd",
            Family::Diagonal => "diagonal",
            Family::PurePacking => "pure-packing",
            Family::PureCovering => "pure-covering",
            Family::Commuting => "commuting",
            Family::Laplacian => "laplacian",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| {
                Error::input(format!(
                    "unknown family '{s}'; expected one of: {}",
                    Family::ALL.map(Family::as_str).join(", ")
                ))
            })
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random PSD matrix `G G^T / n` with standard-normal `G`.
fn random_psd<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> SparseSymMatrix<T> {
    let g: Vec<f64> = (0..n * n).map(|_| standard_normal(rng)).collect();
    let mut m = SymMatrix::zeros(n);
    for j in 0..n {
        for k in j..n {
            let mut s = 0.0;
            for l in 0..n {
                s += g[j * n + l] * g[k * n + l];
            }
            m.set(j, k, T::c(s / n as f64));
        }
    }
    SparseSymMatrix::from_dense(&m)
}

/// Diagonal matrix with entries in `[lo, hi)`.
fn random_diag<T: Scalar>(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> SparseSymMatrix<T> {
    let triplets = (0..n)
        .map(|j| (j, j, T::c(lo + (hi - lo) * rng.gen::<f64>())))
        .collect();
    SparseSymMatrix::new(n, triplets).expect("diagonal triplets are valid")
}

/// Laplacian of a random connected graph on `n` vertices (random spanning
/// tree plus extra random edges), shifted by [`LAPLACIAN_SHIFT`] `* I`.
fn random_laplacian<T: Scalar>(n: usize, rng: &mut ChaCha8Rng) -> SparseSymMatrix<T> {
    let mut adj = vec![false; n * n];
    let add_edge = |adj: &mut Vec<bool>, a: usize, b: usize| {
        if a != b {
            adj[a * n + b] = true;
            adj[b * n + a] = true;
        }
    };
    // Spanning tree: attach each vertex to a uniformly random earlier one.
    for v in 1..n {
        let u = rng.gen_range(0..v);
        add_edge(&mut adj, u, v);
    }
    // Extra edges with probability 2/n each.
    for a in 0..n {
        for b in (a + 1)..n {
            if rng.gen::<f64>() < 2.0 / n as f64 {
                add_edge(&mut adj, a, b);
            }
        }
    }
    let mut triplets = Vec::new();
    for a in 0..n {
        let deg = (0..n).filter(|&b| adj[a * n + b]).count();
        triplets.push((a, a, T::c(deg as f64 + LAPLACIAN_SHIFT)));
        for b in (a + 1)..n {
            if adj[a * n + b] {
                triplets.push((a, b, T::c(-1.0)));
            }
        }
    }
    SparseSymMatrix::new(n, triplets).expect("laplacian triplets are valid")
}

/// Deterministic seeded instance of the given family.
pub fn generate<T: Scalar>(
    family: Family,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<MixedInstance<T>> {
    if n == 0 || d == 0 {
        return Err(Error::input("n and d must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (packing, covering): (Vec<_>, Vec<_>) = match family {
        Family::RandomPsd => (
            (0..d).map(|_| random_psd(n, &mut rng)).collect(),
            (0..d).map(|_| random_psd::<T>(n, &mut rng).scale(T::c(1.5))).collect(),
        ),
        Family::Diagonal => (
            (0..d).map(|_| random_diag(n, 0.1, 1.1, &mut rng)).collect(),
            (0..d).map(|_| random_diag(n, 0.05, 1.55, &mut rng)).collect(),
        ),
        Family::PurePacking => (
            (0..d).map(|_| random_psd(n, &mut rng)).collect(),
            (0..d).map(|_| random_diag(1, 0.5, 1.5, &mut rng)).collect(),
        ),
        Family::PureCovering => (
            (0..d).map(|_| random_diag(1, 0.5, 1.5, &mut rng)).collect(),
            (0..d).map(|_| random_psd(n, &mut rng)).collect(),
        ),
        Family::Commuting => (
            (0..d).map(|_| random_psd(n, &mut rng)).collect(),
            (0..d).map(|_| random_diag(n, 0.05, 1.55, &mut rng)).collect(),
        ),
        Family::Laplacian => (
            (0..d).map(|_| random_psd(n, &mut rng)).collect(),
            (0..d).map(|_| random_laplacian(n, &mut rng)).collect(),
        ),
    };
    MixedInstance::new(packing, covering)
}

/// Comment lines documenting the construction, for inclusion in generated
/// files.
pub fn family_comments(family: Family, n: usize, d: usize, seed: u64) -> Vec<String> {
    let mut out = vec![format!(
        "family {} n {n} d {d} seed {seed}",
        family.as_str()
    )];
    match family {
        Family::PurePacking => out.push(
            "covering matrices are scalars, so the covering gradient is constant".into(),
        ),
        Family::Laplacian => out.push(format!(
            "covering matrices are connected-graph Laplacians plus {LAPLACIAN_SHIFT} * I \
             (kernel shift)"
        )),
        _ => {}
    }
    out
}
