//! Tolerance-aware dense kernels shared by every other module: numeric rank,
//! Moore-Penrose pseudoinverse, inertia counts of symmetric matrices, the
//! inverse square root of an SPD matrix and the structural predicates for
//! symplectic, orthogonal and Lagrangian matrices.
//!
//! Rank decisions come in two flavours. The plain kernels ([`numeric_rank`],
//! [`pseudoinverse`], [`negative_index`]) cut singular values relative to the
//! largest singular value of their own argument. The `*_ref` variants take an
//! explicit reference magnitude instead, which is what the index computations
//! need when a block of a normalized frame is itself tiny (a 1x1 block equal to
//! `1e-16` has full rank relative to itself, but rank zero relative to the
//! frame it was cut from).

use nalgebra::DMatrix;
use nalgebra_lapack::{SymmetricEigen, SVD};

// the LAPACK backend is linked through this crate
use openblas_src as _;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type RealMatrix = DMatrix<f64>;
pub type ComplexMatrix = DMatrix<Complex64>;

/// Numerical tolerances. All three must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    /// Relative singular-value cut used by every rank decision.
    pub rank_rtol: f64,
    /// Absolute tolerance for structural identities (isotropy, symplecticity).
    pub struct_atol: f64,
    /// Angles closer than this to a snapping target are snapped (radians).
    pub angle_atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_rtol: 1e-10,
            struct_atol: 1e-9,
            angle_atol: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if ok(self.rank_rtol) && ok(self.struct_atol) && ok(self.angle_atol) {
            Ok(())
        } else {
            Err(Error::PreconditionViolated(format!(
                "tolerances must be strictly positive: {self:?}"
            )))
        }
    }

    /// Default tolerances, with `rank_rtol` overridden by `OSK_TOL_RANK` when set.
    pub fn from_env() -> Result<Self> {
        let mut tol = Self::default();
        if let Ok(raw) = std::env::var("OSK_TOL_RANK") {
            tol.rank_rtol = raw.trim().parse().map_err(|_| {
                Error::PreconditionViolated(format!("OSK_TOL_RANK is not a number: {raw:?}"))
            })?;
        }
        tol.validate()?;
        Ok(tol)
    }
}

/// Canonical skew matrix `[[0, I], [-I, 0]]` of size `2n`.
pub fn canonical_j(n: usize) -> RealMatrix {
    let mut j = RealMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        j[(i, n + i)] = 1.0;
        j[(n + i, i)] = -1.0;
    }
    j
}

fn singular_values(a: &RealMatrix) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut s: Vec<f64> = SVD::new(a.clone())
        .expect("LAPACK SVD failed")
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Singular values of `a`, sorted in decreasing order.
pub fn sorted_singular_values(a: &RealMatrix) -> Vec<f64> {
    singular_values(a)
}

fn rank_threshold(a: &RealMatrix, reference: f64, tol: &Tolerances) -> f64 {
    tol.rank_rtol * a.nrows().max(a.ncols()) as f64 * reference
}

/// Number of singular values above `rank_rtol * max(rows, cols) * sigma_max`.
pub fn numeric_rank(a: &RealMatrix, tol: &Tolerances) -> usize {
    let s = singular_values(a);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    let thr = rank_threshold(a, smax, tol);
    s.iter().filter(|&&x| x > thr).count()
}

/// Numeric rank with the cut taken relative to `reference` (at least the
/// largest singular value is *not* assumed to be significant).
pub fn numeric_rank_ref(a: &RealMatrix, reference: f64, tol: &Tolerances) -> usize {
    let thr = rank_threshold(a, reference, tol);
    singular_values(a).iter().filter(|&&x| x > thr).count()
}

fn pinv_with_threshold(a: &RealMatrix, thr_of: impl Fn(f64) -> f64) -> RealMatrix {
    let (m, n) = a.shape();
    if a.is_empty() {
        return RealMatrix::zeros(n, m);
    }
    let svd = SVD::new(a.clone()).expect("LAPACK SVD failed");
    let u = &svd.u;
    let vt = &svd.vt;
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let thr = thr_of(smax);
    let mut out = RealMatrix::zeros(n, m);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > thr && s > 0.0 {
            // out += v_k * u_k^T / s
            let vk = vt.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    out
}

/// Moore-Penrose pseudoinverse, rank-truncated at the [`numeric_rank`] cut.
pub fn pseudoinverse(a: &RealMatrix, tol: &Tolerances) -> RealMatrix {
    let dim = a.nrows().max(a.ncols()) as f64;
    pinv_with_threshold(a, |smax| tol.rank_rtol * dim * smax)
}

/// Pseudoinverse truncated at the [`numeric_rank_ref`] cut.
pub fn pseudoinverse_ref(a: &RealMatrix, reference: f64, tol: &Tolerances) -> RealMatrix {
    let dim = a.nrows().max(a.ncols()) as f64;
    pinv_with_threshold(a, |_| tol.rank_rtol * dim * reference)
}

fn check_symmetric(p: &RealMatrix, tol: &Tolerances) -> Result<RealMatrix> {
    if !p.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "expected a square matrix, got {}x{}",
            p.nrows(),
            p.ncols()
        )));
    }
    let asym = (p - p.transpose()).amax();
    let scale = p.amax().max(1.0);
    if asym > tol.struct_atol * scale {
        return Err(Error::NonSymmetric { asymmetry: asym });
    }
    Ok((p + p.transpose()) * 0.5)
}

/// Eigenvalues of the symmetrized matrix, ascending.
pub fn symmetric_eigenvalues(p: &RealMatrix) -> Vec<f64> {
    let sym = (p + p.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Inertia of a symmetric matrix relative to an explicit magnitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inertia {
    pub negative: usize,
    pub positive: usize,
    pub zero: usize,
    /// Smallest |eigenvalue| classified as zero, if any.
    pub smallest_excluded: Option<f64>,
}

/// Inertia with eigenvalues inside `rank_rtol * dim * reference` treated as zero.
pub fn inertia_ref(p: &RealMatrix, reference: f64, tol: &Tolerances) -> Result<Inertia> {
    let sym = check_symmetric(p, tol)?;
    let thr = rank_threshold(&sym, reference, tol);
    let ev = symmetric_eigenvalues(&sym);
    let mut out = Inertia {
        negative: 0,
        positive: 0,
        zero: 0,
        smallest_excluded: None,
    };
    for &l in &ev {
        if l < -thr {
            out.negative += 1;
        } else if l > thr {
            out.positive += 1;
        } else {
            out.zero += 1;
            let a = l.abs();
            out.smallest_excluded = Some(out.smallest_excluded.map_or(a, |m: f64| m.min(a)));
        }
    }
    Ok(out)
}

/// Number of eigenvalues below `-rank_rtol * dim * ||P||`.
///
/// The cut matches [`numeric_rank`] for symmetric input, so
/// `negative_index(P) + negative_index(-P) == numeric_rank(P)`.
pub fn negative_index(p: &RealMatrix, tol: &Tolerances) -> Result<usize> {
    let sym = check_symmetric(p, tol)?;
    let norm = symmetric_eigenvalues(&sym)
        .iter()
        .fold(0.0_f64, |m, l| m.max(l.abs()));
    if norm == 0.0 {
        return Ok(0);
    }
    Ok(inertia_ref(&sym, norm, tol)?.negative)
}

/// `G^{-1/2}` for a symmetric positive definite `G`.
pub fn inv_sqrt_spd(g: &RealMatrix, tol: &Tolerances) -> Result<RealMatrix> {
    let sym = check_symmetric(g, tol)?;
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > tol.struct_atol) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
    }
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let q = &eig.eigenvectors;
    let k = q * RealMatrix::from_diagonal(&d) * q.transpose();
    Ok((&k + k.transpose()) * 0.5)
}

fn even_square(s: &RealMatrix) -> Result<usize> {
    let (r, c) = s.shape();
    if r != c || r % 2 != 0 || r == 0 {
        return Err(Error::ShapeMismatch(format!(
            "expected a 2n x 2n matrix, got {r}x{c}"
        )));
    }
    Ok(r / 2)
}

/// `S^T J S = J` to `struct_atol` (scaled by `max(1, ||S||^2)`).
pub fn is_symplectic(s: &RealMatrix, tol: &Tolerances) -> Result<bool> {
    let n = even_square(s)?;
    let j = canonical_j(n);
    let res = (s.transpose() * &j * s - &j).amax();
    let scale = s.amax().powi(2).max(1.0);
    Ok(res <= tol.struct_atol * scale)
}

/// `S^T S = I` to `struct_atol`.
pub fn is_orthogonal(s: &RealMatrix, tol: &Tolerances) -> Result<bool> {
    if !s.is_square() {
        return Err(Error::ShapeMismatch(format!(
            "expected a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let res = (s.transpose() * s - RealMatrix::identity(s.nrows(), s.ncols())).amax();
    Ok(res <= tol.struct_atol)
}

/// `Y^T J Y = 0` (relative to `||Y||^2`) and `rank Y = n`.
pub fn is_lagrangian_frame(y: &RealMatrix, tol: &Tolerances) -> Result<bool> {
    let (r, c) = y.shape();
    if c == 0 || r != 2 * c {
        return Err(Error::ShapeMismatch(format!(
            "expected a 2n x n matrix, got {r}x{c}"
        )));
    }
    let j = canonical_j(c);
    let scale = y.amax().powi(2).max(f64::MIN_POSITIVE);
    let iso = (y.transpose() * j * y).amax();
    Ok(iso <= tol.struct_atol * scale.max(1.0) && numeric_rank(y, tol) == c)
}

/// Converts a real matrix to a complex one.
pub fn to_complex(a: &RealMatrix) -> ComplexMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Eigenvalues of a general complex matrix through the complex Schur form.
pub fn complex_eigenvalues(a: &ComplexMatrix) -> Result<Vec<Complex64>> {
    if a.nrows() == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let n = a.nrows();
    let ni = n as i32;
    // column-major, as LAPACK expects
    let mut buf: Vec<Complex64> = a.as_slice().to_vec();
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut vl = vec![Complex64::new(0.0, 0.0); 1];
    let mut vr = vec![Complex64::new(0.0, 0.0); 1];
    let mut rwork = vec![0.0; 2 * n];
    let mut info = 0;
    let mut query = vec![Complex64::new(0.0, 0.0); 1];
    unsafe {
        lapack::zgeev(
            b'N', b'N', ni, &mut buf, ni, &mut w, &mut vl, 1, &mut vr, 1,
            &mut query, -1, &mut rwork, &mut info,
        );
    }
    let lwork = (query[0].re as usize).max(2 * n);
    let mut work = vec![Complex64::new(0.0, 0.0); lwork];
    unsafe {
        lapack::zgeev(
            b'N', b'N', ni, &mut buf, ni, &mut w, &mut vl, 1, &mut vr, 1,
            &mut work, lwork as i32, &mut rwork, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::IllConditioned(format!("zgeev failed with info {info}")));
    }
    Ok(w)
}

/// Spectral norm estimate used for relative residuals.
pub fn max_abs(a: &ComplexMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}
