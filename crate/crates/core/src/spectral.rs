//! Complex Hermitian linear-algebra kernels.

use nalgebra::DVector;

use crate::{CMatrix, CVector, Error, Result, C64};

/// Relative singular-value threshold below which a direction counts as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Largest dimension handled by a dense eigendecomposition; above it the
/// dominant pair comes from shifted power iteration.
pub const DENSE_EIG_LIMIT: usize = 256;

const HERMITIAN_TOL: f64 = 1e-10;
const PSD_TOL: f64 = 1e-8;
const PD_TOL: f64 = 1e-12;
const POWER_ITER_TOL: f64 = 1e-12;
const POWER_ITER_MAX: usize = 10_000;

/// Square complex matrix checked to be Hermitian at construction and stored
/// exactly Hermitian (`(M + M^H) / 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::invalid("Hermitian matrix must be square and non-empty"));
        }
        if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::invalid("matrix entries must be finite"));
        }
        let scale = inf_norm(&m);
        let skew = inf_norm(&(&m - m.adjoint()));
        if skew > HERMITIAN_TOL * scale {
            return Err(Error::invalid(format!(
                "matrix is not Hermitian (skew {skew:e} vs norm {scale:e})"
            )));
        }
        Ok(Self((&m + m.adjoint()) * C64::from(0.5)))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `Re(g^H M g)`.
    pub fn quadratic_form(&self, g: &CVector) -> f64 {
        g.dotc(&(&self.0 * g)).re
    }
}

/// Max row sum of moduli.
pub fn inf_norm(m: &CMatrix) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigen-decomposition with eigenvalues sorted in descending order;
/// eigenvectors are the matching columns.
pub fn hermitian_eigen(m: &HermitianMatrix) -> (Vec<f64>, CMatrix) {
    let eig = m.0.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// Rotates `v` so that its first entry of largest modulus is real and
/// non-negative.
pub fn canonical_phase(v: &mut CVector) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].norm() > v[best].norm() {
            best = i;
        }
    }
    let m = v[best].norm();
    if m > 0.0 {
        let rot = v[best].conj() / m;
        v.iter_mut().for_each(|z| *z *= rot);
    }
}

/// `|<a, b>| / (|a| |b|)`; beamformers are equivalent up to a unit scalar.
pub fn alignment(a: &CVector, b: &CVector) -> f64 {
    let den = a.norm() * b.norm();
    if den == 0.0 {
        0.0
    } else {
        a.dotc(b).norm() / den
    }
}

/// Dominant eigenvalue and unit eigenvector.
#[derive(Debug, Clone, PartialEq)]
pub struct EigPair {
    pub value: f64,
    pub vector: CVector,
    /// Set when `M = 0`; the vector is then `e_1`.
    pub degenerate: bool,
}

/// Largest eigenpair of a Hermitian PSD matrix.
///
/// Ties between equal top eigenvalues are broken by the decomposition's
/// ordering, so the vector is not unique in that case.
pub fn dominant_eigpair(m: &HermitianMatrix) -> Result<EigPair> {
    let n = m.dim();
    if m.0.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        let mut e1 = CVector::zeros(n);
        e1[0] = C64::new(1.0, 0.0);
        return Ok(EigPair {
            value: 0.0,
            vector: e1,
            degenerate: true,
        });
    }
    let (value, mut vector) = if n <= DENSE_EIG_LIMIT {
        let (values, vectors) = hermitian_eigen(m);
        let top = values[0];
        let bottom = values[n - 1];
        if bottom < -PSD_TOL * top.abs().max(bottom.abs()) {
            return Err(Error::invalid(format!(
                "matrix is not PSD (eigenvalues span {bottom:e}..{top:e})"
            )));
        }
        (top, vectors.column(0).into_owned())
    } else {
        power_iteration(m)
    };
    canonical_phase(&mut vector);
    Ok(EigPair {
        value,
        vector,
        degenerate: false,
    })
}

fn power_iteration(m: &HermitianMatrix) -> (f64, CVector) {
    let n = m.dim();
    // Gershgorin lower bound; shift so the iterated matrix is PSD.
    let lower = (0..n)
        .map(|i| {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| m.0[(i, j)].norm()).sum();
            m.0[(i, i)].re - off
        })
        .fold(f64::INFINITY, f64::min);
    let shift = (-lower).max(0.0);
    let mut v = CVector::from_element(n, C64::new(1.0 / (n as f64).sqrt(), 0.0));
    let mut lambda = m.quadratic_form(&v);
    for _ in 0..POWER_ITER_MAX {
        let mv = &m.0 * &v;
        let residual = (&mv - &v * C64::from(lambda)).norm();
        if residual <= POWER_ITER_TOL * lambda.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        let next = mv + &v * C64::from(shift);
        let norm = next.norm();
        if norm == 0.0 {
            break;
        }
        v = next / C64::from(norm);
        lambda = m.quadratic_form(&v);
    }
    (lambda, v)
}

/// Orthogonal projector with the number of directions it removes.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    pub matrix: CMatrix,
    pub rank_deflated: usize,
}

impl Projector {
    pub fn identity(n: usize) -> Self {
        Self {
            matrix: CMatrix::identity(n, n),
            rank_deflated: 0,
        }
    }

    pub fn apply(&self, x: &CVector) -> CVector {
        &self.matrix * x
    }

    pub fn apply_matrix(&self, x: &CMatrix) -> CMatrix {
        &self.matrix * x
    }
}

/// Left singular subspace of `b` with singular values above `tol * s_max`.
pub fn column_space_basis(b: &CMatrix, tol: f64) -> (CMatrix, Vec<f64>) {
    let n = b.nrows();
    if b.ncols() == 0 || b.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return (CMatrix::zeros(n, 0), Vec::new());
    }
    let svd = b.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let s = svd.singular_values;
    let smax = s.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > tol * smax).collect();
    let sv = keep.iter().map(|&i| s[i]).collect();
    if keep.is_empty() {
        return (CMatrix::zeros(n, 0), sv);
    }
    let basis = CMatrix::from_columns(
        &keep.iter().map(|&i| u.column(i).into_owned()).collect::<Vec<_>>(),
    );
    (basis, sv)
}

/// `P = I - U1 U1^H`, the projector onto the orthogonal complement of the
/// numerical column space of `b`.
pub fn null_space_projector(b: &CMatrix, tol: f64) -> Result<Projector> {
    let n = b.nrows();
    if n == 0 {
        return Err(Error::invalid("projector dimension must be >= 1"));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::invalid("rank tolerance must be positive"));
    }
    let (u1, _) = column_space_basis(b, tol);
    let r = u1.ncols();
    let p = CMatrix::identity(n, n) - &u1 * u1.adjoint();
    Ok(Projector {
        matrix: (&p + p.adjoint()) * C64::from(0.5),
        rank_deflated: r,
    })
}

/// Unit maximizer of `g^H Num g / g^H Den g` for positive definite `Den`.
///
/// With `Den = L L^H`, the problem becomes the Hermitian eigenproblem of
/// `L^-1 Num L^-H`, and `g = L^-H y` for its dominant eigenvector `y`.
pub fn generalized_dominant_eigvec(num: &HermitianMatrix, den: &HermitianMatrix) -> Result<CVector> {
    let n = num.dim();
    if den.dim() != n {
        return Err(Error::invalid("numerator and denominator dimensions differ"));
    }
    let den_eigs = den.0.symmetric_eigenvalues();
    let dmax = den_eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dmin = den_eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(dmax > 0.0 && dmin >= PD_TOL * dmax) {
        return Err(Error::invalid(format!(
            "denominator is not positive definite (eigenvalues {dmin:e}..{dmax:e})"
        )));
    }
    let chol = den
        .0
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("Cholesky factorization of the denominator failed"))?;
    let l = chol.l();
    let x = l
        .solve_lower_triangular(num.matrix())
        .ok_or_else(|| Error::invalid("singular Cholesky factor"))?;
    let c = l
        .solve_lower_triangular(&x.adjoint())
        .ok_or_else(|| Error::invalid("singular Cholesky factor"))?;
    let pair = dominant_eigpair(&HermitianMatrix::new(c)?)?;
    let mut g = l
        .adjoint()
        .solve_upper_triangular(&pair.vector)
        .ok_or_else(|| Error::invalid("singular Cholesky factor"))?;
    let norm = g.norm();
    g /= C64::from(norm);
    canonical_phase(&mut g);
    Ok(g)
}

/// `g^H Num g / g^H Den g`.
pub fn generalized_rayleigh_quotient(num: &HermitianMatrix, den: &HermitianMatrix, g: &CVector) -> f64 {
    num.quadratic_form(g) / den.quadratic_form(g)
}

/// Unit basis vector.
pub fn unit_vector(n: usize, i: usize) -> CVector {
    let mut e = DVector::zeros(n);
    e[i] = C64::new(1.0, 0.0);
    e
}
