//! Dense symmetric linear algebra: a symmetric matrix type, a cyclic Jacobi
//! eigensolver, and a clamped positive-semidefinite square root.
//!
//! Dimensions in this crate stay in the low hundreds, so the Jacobi method is
//! preferred over faster factorisations: it preserves symmetry exactly and
//! delivers eigenpairs at close to machine precision.

use crate::error::{Error, Result};

/// Dense symmetric matrix, row-major storage.
///
/// Symmetry is enforced at construction by averaging mirrored entries, and
/// every mutation keeps both triangles in sync.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    /// Builds a matrix from row-major entries, symmetrising via
    /// `(a_ij + a_ji) / 2`.
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("matrix dimension must be >= 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::InvalidInput(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        let mut data = entries;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let avg = 0.5 * (data[i * dim + j] + data[j * dim + i]);
                data[i * dim + j] = avg;
                data[j * dim + i] = avg;
            }
        }
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    /// Rank-one accumulation `self += w * v vᵀ`.
    pub fn add_outer(&mut self, v: &[f64], w: f64) {
        debug_assert_eq!(v.len(), self.dim);
        for i in 0..self.dim {
            let wi = w * v[i];
            for j in 0..self.dim {
                self.data[i * self.dim + j] += wi * v[j];
            }
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets `a_ij` and `a_ji` together.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.dim);
        let mut out = vec![0.0; self.dim];
        for i in 0..self.dim {
            let row = &self.data[i * self.dim..(i + 1) * self.dim];
            out[i] = dot(row, v);
        }
        out
    }

    pub fn scaled(&self, s: f64) -> SymMatrix {
        SymMatrix { dim: self.dim, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.check_same_dim(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(SymMatrix { dim: self.dim, data })
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        self.check_same_dim(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(SymMatrix { dim: self.dim, data })
    }

    /// Congruence product `s · self · s` for symmetric `s`, symmetrised
    /// against rounding.
    pub fn conjugate_by(&self, s: &SymMatrix) -> Result<SymMatrix> {
        self.check_same_dim(s)?;
        let d = self.dim;
        // t = self * s
        let mut t = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += self.data[i * d + k] * s.data[k * d + j];
                }
                t[i * d + j] = acc;
            }
        }
        // out = s * t
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for k in 0..d {
                    acc += s.data[i * d + k] * t[k * d + j];
                }
                out[i * d + j] = acc;
            }
        }
        SymMatrix::new(d, out)
    }

    fn check_same_dim(&self, other: &SymMatrix) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::InvalidInput(format!(
                "dimension mismatch: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }
}

/// Eigendecomposition of a symmetric matrix: `a = Σ_k values[k] · v_k v_kᵀ`
/// with orthonormal `vectors[k]` and `values` ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl SymEigen {
    /// Reassembles `Σ f(λ_k) v_k v_kᵀ`.
    pub fn assemble(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.vectors[0].len();
        let mut m = SymMatrix::zeros(d);
        for (lam, v) in self.values.iter().zip(&self.vectors) {
            m.add_outer(v, f(*lam));
        }
        // exact symmetry regardless of accumulation order
        for i in 0..d {
            for j in (i + 1)..d {
                let avg = 0.5 * (m.data[i * d + j] + m.data[j * d + i]);
                m.data[i * d + j] = avg;
                m.data[j * d + i] = avg;
            }
        }
        m
    }
}

/// Full eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps run until the off-diagonal Frobenius mass drops below
/// `1e-14 · ‖a‖_F` (or vanishes), which leaves reconstruction errors near
/// machine precision for the dimensions used here.
pub fn sym_eig(a: &SymMatrix) -> Result<SymEigen> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let d = a.dim;
    let mut m = a.data.clone();
    // q holds eigenvectors as columns, row-major
    let mut q = vec![0.0; d * d];
    for i in 0..d {
        q[i * d + i] = 1.0;
    }

    let fro = a.frobenius_norm();
    let tol = 1e-14 * fro;
    const MAX_SWEEPS: usize = 64;

    for _ in 0..MAX_SWEEPS {
        let off: f64 = {
            let mut s = 0.0;
            for i in 0..d {
                for j in (i + 1)..d {
                    s += 2.0 * m[i * d + j] * m[i * d + j];
                }
            }
            s.sqrt()
        };
        if off <= tol {
            break;
        }
        for p in 0..d.saturating_sub(1) {
            for r in (p + 1)..d {
                let apq = m[p * d + r];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[r * d + r];
                // Classic Jacobi rotation annihilating m[p][r].
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + r];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + r] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[r * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[r * d + k] = s * mpk + c * mqk;
                }
                // The (p,r) entry is zero by construction; pin it to kill
                // residue from the two-pass update.
                m[p * d + r] = 0.0;
                m[r * d + p] = 0.0;

                for k in 0..d {
                    let qkp = q[k * d + p];
                    let qkq = q[k * d + r];
                    q[k * d + p] = c * qkp - s * qkq;
                    q[k * d + r] = s * qkp + c * qkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[i * d + i].partial_cmp(&m[j * d + j]).unwrap());

    let values = order.iter().map(|&i| m[i * d + i]).collect();
    let vectors = order
        .iter()
        .map(|&col| (0..d).map(|row| q[row * d + col]).collect())
        .collect();
    Ok(SymEigen { values, vectors })
}

/// Symmetric PSD square root.
///
/// Eigenvalues in `[-tol, 0)` with `tol = 1e-10 · max|λ|` are treated as
/// rounding debris and clamped to zero; anything below that is an error.
pub fn psd_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    let eig = sym_eig(a)?;
    let max_abs = eig.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-10 * max_abs;
    for &lam in &eig.values {
        if lam < -tol {
            return Err(Error::NotPsd { eigenvalue: lam, tolerance: tol });
        }
    }
    Ok(eig.assemble(|lam| lam.max(0.0).sqrt()))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(y.len(), x.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub(crate) fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}
