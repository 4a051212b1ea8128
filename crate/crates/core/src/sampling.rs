//! Seeded Gaussian sampling.
//!
//! Every random stream is a ChaCha20 generator keyed by `(master_seed,
//! substream)` with the ChaCha stream word set to the replicate index, so a
//! replicate's draws never depend on which thread ran it or in what order.
//! Standard normals come from `rand_distr::StandardNormal` (ziggurat); both
//! crates are pinned in the manifest so golden outputs stay stable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_with_tol, Matrix};

const SYMMETRY_TOL: f64 = 1e-12;
const PIVOT_TOL: f64 = 1e-12;

/// Symmetric covariance matrix with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    matrix: Matrix,
}

impl CovarianceSpec {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.rows() != matrix.cols() || matrix.rows() == 0 {
            return Err(Error::Dimension(format!(
                "covariance must be square and non-empty, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        if matrix.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance has non-finite entries".into()));
        }
        let (row, col, gap) = matrix.max_asymmetry();
        if gap > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { row, col, gap });
        }
        for i in 0..matrix.rows() {
            if !(matrix[(i, i)] > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "covariance diagonal entry {i} must be positive, got {}",
                    matrix[(i, i)]
                )));
            }
        }
        Ok(Self { matrix })
    }

    /// Unit-variance matrix with the given off-diagonal correlations.
    pub fn correlation(dim: usize, pairs: &[(usize, usize, f64)]) -> Result<Self> {
        let mut m = Matrix::identity(dim);
        for &(i, j, rho) in pairs {
            if i >= dim || j >= dim || i == j {
                return Err(Error::Dimension(format!("bad correlation pair ({i}, {j})")));
            }
            m[(i, j)] = rho;
            m[(j, i)] = rho;
        }
        Self::new(m)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: Matrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[(i, j)]
    }
}

/// Identifies one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Generator for one named sub-stream of this seed. Distinct
    /// `substream` values give disjoint key material.
    pub fn rng(&self, substream: u64) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&substream.to_le_bytes());
        key[16..24].copy_from_slice(b"cfforge1");
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Lower-triangular `L` with `L Lᵀ = spec.matrix`.
pub fn cholesky_lower(spec: &CovarianceSpec) -> Result<Matrix> {
    cholesky_with_tol(&spec.matrix, PIVOT_TOL)
        .map_err(|(pivot, value)| Error::NotPositiveDefinite { pivot, value })
}

#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Fills an `n × dim` matrix with rows `L z`, `z` i.i.d. standard normal,
/// drawn row by row from `rng`.
pub fn sample_mvn_with<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &CovarianceSpec,
    n: usize,
) -> Result<Matrix> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let l = cholesky_lower(spec)?;
    let dim = spec.dim();
    let mut out = Matrix::zeros(n, dim);
    let mut z = vec![0.0; dim];
    for i in 0..n {
        z.iter_mut().for_each(|v| *v = standard_normal(rng));
        for r in 0..dim {
            let mut s = 0.0;
            for c in 0..=r {
                s += l[(r, c)] * z[c];
            }
            out[(i, r)] = s;
        }
    }
    Ok(out)
}

/// `n` i.i.d. draws from `N(0, spec)`; a pure function of its arguments.
pub fn sample_mvn(seed: SeedSpec, spec: &CovarianceSpec, n: usize) -> Result<Matrix> {
    let mut rng = seed.rng(0);
    sample_mvn_with(&mut rng, spec, n)
}
