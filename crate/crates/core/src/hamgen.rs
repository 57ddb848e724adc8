//! Test-path generators: rotations, conjoined bases of linear Hamiltonian
//! systems `y' = J H(t) y`, principal paths, members of `F(Phi)` and the
//! constructive path with prescribed oscillation numbers.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::compidx::comparative_index;
use crate::error::{Error, Result};
use crate::lagrangian::{
    wronskian, FrameEvaluator, LagrangianFrame, SampledLagrangianPath, SymplecticPath,
};
use crate::matlib::{
    canonical_j, inv_sqrt_spd, numeric_rank_ref, pseudoinverse_ref, sorted_singular_values,
    RealMatrix, Tolerances,
};
use crate::oscnum::oscillation_numbers;

type Rows = Vec<Vec<f64>>;

fn from_rows(rows: &Rows) -> Result<RealMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if rows.iter().any(|x| x.len() != c) {
        return Err(Error::ShapeMismatch("ragged matrix rows".into()));
    }
    Ok(RealMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn to_rows(m: &RealMatrix) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub freq: f64,
    pub cos: Rows,
    pub sin: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HamiltonianKind {
    Constant { h: Rows },
    /// `H(t) = h0 + sum_k (cos(w_k t) C_k + sin(w_k t) S_k)`.
    Trig {
        h0: Rows,
        #[serde(default)]
        terms: Vec<TrigTerm>,
    },
}

/// Coefficient matrix of the system `y' = J H(t) y`, JSON-loadable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    pub n: usize,
    #[serde(flatten)]
    pub kind: HamiltonianKind,
    pub interval: [f64; 2],
    /// Times where `H` may jump; the integration grid contains them.
    #[serde(default)]
    pub breakpoints: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Compiled {
    Constant(RealMatrix),
    Trig(RealMatrix, Vec<(f64, RealMatrix, RealMatrix)>),
}

impl HamiltonianSpec {
    pub fn constant(h: &RealMatrix, interval: (f64, f64)) -> Self {
        Self {
            n: h.nrows() / 2,
            kind: HamiltonianKind::Constant { h: to_rows(h) },
            interval: [interval.0, interval.1],
            breakpoints: Vec::new(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s)
            .map_err(|e| Error::PreconditionViolated(format!("Hamiltonian spec: {e}")))?;
        spec.compile(&Tolerances::default())?;
        Ok(spec)
    }

    fn compile(&self, tol: &Tolerances) -> Result<Compiled> {
        let m = 2 * self.n;
        let check = |x: RealMatrix| -> Result<RealMatrix> {
            if x.shape() != (m, m) {
                return Err(Error::ShapeMismatch(format!(
                    "H blocks must be {m}x{m}, got {:?}",
                    x.shape()
                )));
            }
            let asym = (&x - x.transpose()).amax();
            if asym > tol.struct_atol * x.amax().max(1.0) {
                return Err(Error::NonSymmetric { asymmetry: asym });
            }
            Ok(x)
        };
        let [a, b] = self.interval;
        if self.n == 0 || !(a.is_finite() && b.is_finite() && a < b) {
            return Err(Error::PreconditionViolated(format!(
                "need n >= 1 and a finite interval a < b, got n = {} and [{a}, {b}]",
                self.n
            )));
        }
        Ok(match &self.kind {
            HamiltonianKind::Constant { h } => Compiled::Constant(check(from_rows(h)?)?),
            HamiltonianKind::Trig { h0, terms } => Compiled::Trig(
                check(from_rows(h0)?)?,
                terms
                    .iter()
                    .map(|k| Ok((k.freq, check(from_rows(&k.cos)?)?, check(from_rows(&k.sin)?)?)))
                    .collect::<Result<_>>()?,
            ),
        })
    }

    /// `c H(t)`: every coefficient multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let sc = |rows: &Rows| -> Rows { rows.iter().map(|r| r.iter().map(|v| c * v).collect()).collect() };
        let kind = match &self.kind {
            HamiltonianKind::Constant { h } => HamiltonianKind::Constant { h: sc(h) },
            HamiltonianKind::Trig { h0, terms } => HamiltonianKind::Trig {
                h0: sc(h0),
                terms: terms
                    .iter()
                    .map(|t| TrigTerm { freq: t.freq, cos: sc(&t.cos), sin: sc(&t.sin) })
                    .collect(),
            },
        };
        Self { kind, ..self.clone() }
    }

    /// `H(t)`.
    pub fn h(&self, t: f64) -> Result<RealMatrix> {
        Ok(self.compile(&Tolerances::default())?.at(t))
    }
}

impl Compiled {
    fn at(&self, t: f64) -> RealMatrix {
        match self {
            Self::Constant(h) => h.clone(),
            Self::Trig(h0, terms) => {
                let mut h = h0.clone();
                for (w, c, s) in terms {
                    let (sn, cs) = (w * t).sin_cos();
                    h += c * cs + s * sn;
                }
                h
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    A,
    B,
}

/// Block path with `j`-th block `(sin(w_j t), cos(w_j t))`, interleaved so
/// that `X = diag(sin)` and `U = diag(cos)`.
pub fn rotation_path(
    speeds: &[f64],
    interval: (f64, f64),
    nodes: usize,
    tol: &Tolerances,
) -> Result<SampledLagrangianPath> {
    if speeds.is_empty() || speeds.iter().any(|w| !w.is_finite()) {
        return Err(Error::PreconditionViolated("speeds must be finite and nonempty".into()));
    }
    let w = speeds.to_vec();
    let n = w.len();
    let f = move |t: f64| {
        let mut y = RealMatrix::zeros(2 * n, n);
        for (j, wj) in w.iter().enumerate() {
            let (s, c) = (wj * t).sin_cos();
            y[(j, j)] = s;
            y[(n + j, j)] = c;
        }
        Ok(y)
    };
    SampledLagrangianPath::from_fn(uniform_grid(interval, nodes)?, f, tol)
}

/// `Phi(t)` of the rotation flow with the given speeds.
pub fn rotation_flow(speeds: &[f64], interval: (f64, f64), nodes: usize, tol: &Tolerances) -> Result<SymplecticPath> {
    let w = speeds.to_vec();
    let n = w.len();
    SymplecticPath::from_fn(
        uniform_grid(interval, nodes)?,
        move |t| {
            let mut m = RealMatrix::zeros(2 * n, 2 * n);
            for (j, wj) in w.iter().enumerate() {
                let (s, c) = (wj * t).sin_cos();
                m[(j, j)] = c;
                m[(j, n + j)] = s;
                m[(n + j, j)] = -s;
                m[(n + j, n + j)] = c;
            }
            Ok(m)
        },
        tol,
    )
}

pub fn uniform_grid(interval: (f64, f64), nodes: usize) -> Result<Vec<f64>> {
    let (a, b) = interval;
    if nodes < 2 || !(a < b) {
        return Err(Error::PreconditionViolated(format!(
            "need at least 2 nodes on a < b, got {nodes} on [{a}, {b}]"
        )));
    }
    let mut g: Vec<f64> = (0..nodes)
        .map(|k| a + (b - a) * k as f64 / (nodes - 1) as f64)
        .collect();
    g[nodes - 1] = b;
    Ok(g)
}

/// One step of the fourth-order Gauss-Magnus method with the (2, 2) Pade
/// approximant of `exp`. For `y' = J H y` the step matrix is symplectic, and
/// the step from `t + dt` back to `t` is its exact inverse.
fn step(h: &Compiled, j: &RealMatrix, t: f64, y: &RealMatrix, dt: f64) -> RealMatrix {
    let c = 3f64.sqrt() / 6.0;
    let a1 = j * h.at(t + (0.5 - c) * dt);
    let a2 = j * h.at(t + (0.5 + c) * dt);
    let omega = (&a1 + &a2) * (0.5 * dt) + (&a2 * &a1 - &a1 * &a2) * (3f64.sqrt() * dt * dt / 12.0);
    let m = y.nrows();
    let id = RealMatrix::identity(m, m);
    let o2 = &omega * &omega / 12.0;
    let num = &id + &omega * 0.5 + &o2;
    let den = &id - &omega * 0.5 + &o2;
    den.lu().solve(&(num * y)).unwrap_or_else(|| RealMatrix::from_element(y.nrows(), y.ncols(), f64::NAN))
}

fn isotropy_defect(y: &RealMatrix, j: &RealMatrix) -> RealMatrix {
    y.transpose() * j * y
}

/// Removes the isotropy defect `A = Y^T J Y` by `Y += J Y G^{-1} A / 2`,
/// `G = Y^T Y`, which cancels it to first order; iterated.
fn reproject(y: &mut RealMatrix, j: &RealMatrix, tol: &Tolerances, t: f64) -> Result<()> {
    for _ in 0..6 {
        let a = isotropy_defect(y, j);
        let scale = y.amax().max(1.0).powi(2);
        if a.amax() <= 0.1 * tol.struct_atol * scale {
            return Ok(());
        }
        let g = y.transpose() * &*y;
        let gi = g.try_inverse().ok_or_else(|| Error::StepFailure {
            t,
            reason: "frame lost rank".into(),
        })?;
        let corr = j * &*y * gi * a * 0.5;
        *y += corr;
    }
    let res = isotropy_defect(y, j).amax();
    if res <= tol.struct_atol * y.amax().max(1.0).powi(2) {
        Ok(())
    } else {
        Err(Error::StepFailure {
            t,
            reason: format!("isotropy residual {res:.3e} after re-projection"),
        })
    }
}

/// Replaces `Y` by `Y (Y^T Y)^{-1/2}` once its columns drift far from
/// orthonormal. The plane is unchanged.
fn condition(y: &mut RealMatrix, tol: &Tolerances) -> Result<()> {
    let sv = sorted_singular_values(y);
    let (hi, lo) = (sv[0], *sv.last().unwrap());
    if hi > 1e3 || lo < 1e-3 {
        let k = inv_sqrt_spd(&(y.transpose() * &*y), tol)?;
        *y = &*y * k;
    }
    Ok(())
}

fn grid_for(spec: &HamiltonianSpec, steps: usize) -> Result<Vec<f64>> {
    let [a, b] = spec.interval;
    let mut cuts: Vec<f64> = spec.breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(|p, q| p.total_cmp(q));
    cuts.dedup();
    let mut edges = vec![a];
    edges.extend(cuts);
    edges.push(b);
    let mut grid = vec![a];
    for w in edges.windows(2) {
        let m = ((steps as f64 * (w[1] - w[0]) / (b - a)).round() as usize).max(1);
        for k in 1..=m {
            grid.push(if k == m { w[1] } else { w[0] + (w[1] - w[0]) * k as f64 / m as f64 });
        }
    }
    Ok(grid)
}

/// Conjoined basis with `Y(at) = init`, integrated by Gauss-Magnus steps on
/// a uniform grid (per breakpoint piece) of about `steps` steps. The
/// evaluator re-integrates from the nearest node.
pub fn integrate_from(
    spec: &HamiltonianSpec,
    init: &LagrangianFrame,
    at: Endpoint,
    steps: usize,
    tol: &Tolerances,
) -> Result<SampledLagrangianPath> {
    let n = spec.n;
    if init.n() != n {
        return Err(Error::ShapeMismatch(format!("initial frame has n = {}, system n = {n}", init.n())));
    }
    let h = Arc::new(spec.compile(tol)?);
    let j = canonical_j(n);
    let grid = grid_for(spec, steps.max(1))?;
    let m = grid.len();
    let mut frames = vec![RealMatrix::zeros(2 * n, n); m];
    let order: Vec<usize> = match at {
        Endpoint::A => (0..m).collect(),
        Endpoint::B => (0..m).rev().collect(),
    };
    let mut y = init.matrix().clone();
    frames[order[0]] = y.clone();
    for w in order.windows(2) {
        let (i0, i1) = (w[0], w[1]);
        let t0 = grid[i0];
        y = step(&h, &j, t0, &y, grid[i1] - t0);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::StepFailure { t: t0, reason: "non-finite state".into() });
        }
        reproject(&mut y, &j, tol, grid[i1])?;
        condition(&mut y, tol)?;
        frames[i1] = y.clone();
    }
    let nodes = Arc::new(grid.clone());
    let stored = Arc::new(frames.clone());
    let tol2 = *tol;
    let max_dt = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let evaluator: FrameEvaluator = Arc::new(move |t: f64| {
        let i = match nodes.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(i) => return Ok(stored[i].clone()),
            Err(i) => {
                if i == 0 {
                    0
                } else if i >= nodes.len() || t - nodes[i - 1] <= nodes[i] - t {
                    i - 1
                } else {
                    i
                }
            }
        };
        let t0 = nodes[i];
        let sub = ((t - t0).abs() / (0.25 * max_dt)).ceil().max(1.0) as usize;
        let dt = (t - t0) / sub as f64;
        let mut y = stored[i].clone();
        for k in 0..sub {
            y = step(&h, &j, t0 + k as f64 * dt, &y, dt);
        }
        reproject(&mut y, &j, &tol2, t)?;
        Ok(y)
    });
    SampledLagrangianPath::new(grid, frames, Some(evaluator), tol)
}

/// Conjoined basis with `Y(a) = init`.
pub fn integrate_conjoined_basis(
    spec: &HamiltonianSpec,
    init: &LagrangianFrame,
    steps: usize,
    tol: &Tolerances,
) -> Result<SampledLagrangianPath> {
    integrate_from(spec, init, Endpoint::A, steps, tol)
}

/// The family `F(Phi)` of paths `Phi(t) C`.
#[derive(Clone)]
pub enum PhiFamily {
    /// `Phi` is the fundamental matrix of a Hamiltonian system.
    Flow { spec: HamiltonianSpec, steps: usize },
    /// `Phi` is given pointwise.
    Matrix(SymplecticPath),
}

impl PhiFamily {
    pub fn n(&self) -> usize {
        match self {
            Self::Flow { spec, .. } => spec.n,
            Self::Matrix(p) => p.n,
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        match self {
            Self::Flow { spec, .. } => (spec.interval[0], spec.interval[1]),
            Self::Matrix(p) => (p.nodes[0], *p.nodes.last().unwrap()),
        }
    }

    /// The member `Y` with `Y(at) = c`.
    pub fn member(&self, c: &LagrangianFrame, at: Endpoint, tol: &Tolerances) -> Result<SampledLagrangianPath> {
        match self {
            Self::Flow { spec, steps } => integrate_from(spec, c, at, *steps, tol),
            Self::Matrix(phi) => {
                let t0 = match at {
                    Endpoint::A => phi.nodes[0],
                    Endpoint::B => *phi.nodes.last().unwrap(),
                };
                let base = phi.at(t0)?.inverse().matrix() * c.matrix();
                let c_exact = c.matrix().clone();
                let frames = phi
                    .nodes
                    .iter()
                    .zip(&phi.mats)
                    .map(|(&t, m)| if t == t0 { c_exact.clone() } else { m.matrix() * &base })
                    .collect();
                let phi2 = phi.clone();
                let evaluator = phi.evaluator.as_ref().map(|_| {
                    Arc::new(move |t: f64| {
                        if t == t0 {
                            Ok(c_exact.clone())
                        } else {
                            Ok(phi2.at(t)?.matrix() * &base)
                        }
                    }) as FrameEvaluator
                });
                SampledLagrangianPath::new(phi.nodes.clone(), frames, evaluator, tol)
            }
        }
    }
}

/// `(Y_a, Y_b)` with `Y_a(a) = E = Y_b(b)`.
pub fn principal_paths(
    phi: &PhiFamily,
    tol: &Tolerances,
) -> Result<(SampledLagrangianPath, SampledLagrangianPath)> {
    let e = crate::lagrangian::vertical_plane(phi.n());
    Ok((phi.member(&e, Endpoint::A, tol)?, phi.member(&e, Endpoint::B, tol)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rectangle {
    pub l_min: i64,
    pub l_max: i64,
    pub r_min: i64,
    pub r_max: i64,
}

/// Admissible `(l, r)` rectangle `[N(Y_a), N(Y_b)] x [N*(Y_b), N*(Y_a)]`.
pub fn admissible_rectangle(phi: &PhiFamily, tol: &Tolerances) -> Result<Rectangle> {
    let (ya, yb) = principal_paths(phi, tol)?;
    let (na, nsa) = oscillation_numbers(&ya, tol)?;
    let (nb, nsb) = oscillation_numbers(&yb, tol)?;
    Ok(Rectangle {
        l_min: na,
        l_max: nb,
        r_min: nsb,
        r_max: nsa,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub ell: i64,
    pub r: i64,
    pub endpoint: Endpoint,
    pub p: i64,
    pub q: i64,
    pub w: i64,
    pub rectangle: Rectangle,
}

#[derive(Debug, Clone)]
pub struct PrescribedPath {
    pub path: SampledLagrangianPath,
    pub provenance: Provenance,
}

/// Orthogonal `L` with `R = L diag(I_w, 0) L^T`, unit eigenvectors first
/// (ties keep eigenvector order).
fn projector_basis(r: &RealMatrix) -> RealMatrix {
    let eig = nalgebra_lapack::SymmetricEigen::new(r.clone());
    let n = r.nrows();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        let (a, b) = (eig.eigenvalues[i] > 0.5, eig.eigenvalues[j] > 0.5);
        b.cmp(&a).then(i.cmp(&j))
    });
    RealMatrix::from_fn(n, n, |row, c| eig.eigenvectors[(row, idx[c])])
}

/// `D = L diag(-I_neg, I_pos, 0) L^T`.
fn signature_matrix(l: &RealMatrix, neg: usize, pos: usize) -> RealMatrix {
    let n = l.nrows();
    let d = RealMatrix::from_fn(n, n, |i, j| {
        if i != j {
            0.0
        } else if i < neg {
            -1.0
        } else if i < neg + pos {
            1.0
        } else {
            0.0
        }
    });
    l * d * l.transpose()
}

/// A member of `F(Phi)` with `N = ell` and `N* = r`. For `ell >= r` it is
/// fixed at `a` with `X(a) = I`, otherwise at `b` with `X(b) = I`.
pub fn prescribed_oscillation_path(
    phi: &PhiFamily,
    ell: i64,
    r: i64,
    tol: &Tolerances,
) -> Result<PrescribedPath> {
    prescribed_oscillation_path_at(phi, ell, r, None, tol)
}

/// As `prescribed_oscillation_path`; for `ell == r` the endpoint may be
/// chosen (`None` means `a`).
pub fn prescribed_oscillation_path_at(
    phi: &PhiFamily,
    ell: i64,
    r: i64,
    endpoint: Option<Endpoint>,
    tol: &Tolerances,
) -> Result<PrescribedPath> {
    let n = phi.n();
    let (ya, yb) = principal_paths(phi, tol)?;
    let (na, nsa) = oscillation_numbers(&ya, tol)?;
    let (nb, nsb) = oscillation_numbers(&yb, tol)?;
    let rect = Rectangle {
        l_min: na,
        l_max: nb,
        r_min: nsb,
        r_max: nsa,
    };
    if ell < na || ell > nb || r < nsb || r > nsa {
        return Err(Error::OutOfRange {
            ell,
            r,
            l_min: na,
            l_max: nb,
            r_min: nsb,
            r_max: nsa,
        });
    }
    let p = ell - na;
    let q = r - nsb;
    let w = numeric_rank_ref(
        &wronskian(&ya.first().normalized(tol)?, &yb.first().normalized(tol)?)?,
        1.0,
        tol,
    ) as i64;
    let at = match endpoint {
        _ if ell > r => Endpoint::A,
        _ if ell < r => Endpoint::B,
        Some(e) => e,
        None => Endpoint::A,
    };
    // the other principal path, read at the chosen endpoint
    let (other, (neg, pos)) = match at {
        Endpoint::A => (yb.first().normalized(tol)?, (q, w - p)),
        Endpoint::B => (ya.last().normalized(tol)?, (w - q, p)),
    };
    if neg < 0 || pos < 0 || neg + pos > w {
        return Err(Error::ConstructionFailed(format!(
            "inconsistent counts p = {p}, q = {q}, w = {w}"
        )));
    }
    let (xo, uo) = (other.x(), other.u());
    let xd = pseudoinverse_ref(&xo, 1.0, tol);
    let proj = &xo * &xd;
    let graph = &proj * &uo * &xd;
    let l = projector_basis(&proj);
    let d = signature_matrix(&l, neg as usize, pos as usize);
    let lower = &d + (&graph + graph.transpose()) * 0.5;
    let c = LagrangianFrame::from_blocks(&RealMatrix::identity(n, n), &lower, tol)?;
    let path = phi.member(&c, at, tol)?;
    let (got_l, got_r) = oscillation_numbers(&path, tol)?;
    if (got_l, got_r) != (ell, r) {
        return Err(Error::ConstructionFailed(format!(
            "constructed path has (N, N*) = ({got_l}, {got_r}), wanted ({ell}, {r})"
        )));
    }
    Ok(PrescribedPath {
        path,
        provenance: Provenance {
            ell,
            r,
            endpoint: at,
            p,
            q,
            w,
            rectangle: rect,
        },
    })
}

/// Random symmetric matrix with entries of size about `scale`.
pub fn random_symmetric<R: Rng>(rng: &mut R, m: usize, scale: f64) -> RealMatrix {
    let a = RealMatrix::from_fn(m, m, |_, _| rng.random_range(-scale..scale));
    (&a + a.transpose()) * 0.5
}

/// Random Lagrangian plane from a Gaussian `2n x n` matrix `(X; U)`,
/// projected onto isotropy by the unitary QR factor of `X + iU`. With
/// probability `p_defect` the upper block is forced to be singular.
pub fn random_lagrangian_plane<R: Rng>(
    rng: &mut R,
    n: usize,
    p_defect: f64,
    tol: &Tolerances,
) -> LagrangianFrame {
    if rng.random_bool(p_defect) {
        // X = Q diag(0.., 1..) has a kernel of random dimension k
        let k = rng.random_range(1..=n);
        let q = random_orthogonal(rng, n);
        let mut x = RealMatrix::zeros(n, n);
        let mut u = RealMatrix::zeros(n, n);
        for i in 0..n {
            if i < k {
                u[(i, i)] = 1.0;
            } else {
                x[(i, i)] = 1.0;
            }
        }
        let sym = random_symmetric(rng, n, 1.0);
        let x = &q * x;
        let u = &sym * &x + &q * u;
        if let Ok(f) = LagrangianFrame::from_blocks(&x, &u, tol) {
            return f;
        }
    }
    // the unitary QR factor of X + iU is an orthonormal Lagrangian frame
    let g = RealMatrix::from_fn(2 * n, n, |_, _| StandardNormal.sample(rng));
    let w = crate::matlib::ComplexMatrix::from_fn(n, n, |i, k| {
        num_complex::Complex64::new(g[(i, k)], g[(n + i, k)])
    });
    let q = w.qr().q();
    let mut y = RealMatrix::zeros(2 * n, n);
    for i in 0..n {
        for k in 0..n {
            y[(i, k)] = q[(i, k)].re;
            y[(n + i, k)] = q[(i, k)].im;
        }
    }
    // exact by construction; a user tolerance must not reject it
    LagrangianFrame::from_unchecked(y)
}

pub fn random_orthogonal<R: Rng>(rng: &mut R, n: usize) -> RealMatrix {
    let g = RealMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    g.qr().q()
}

/// Random trigonometric Hamiltonian. With `nonnegative`, `H = M(t)^T M(t)`
/// is built from a trigonometric `M` and stored as an expanded sum.
pub fn random_hamiltonian<R: Rng>(
    rng: &mut R,
    n: usize,
    interval: (f64, f64),
    nonnegative: bool,
) -> HamiltonianSpec {
    let m = 2 * n;
    let kind = if nonnegative {
        // M(t) = M0 + cos(w t) M1: M^T M expands to constant, cos w t, cos 2 w t
        let w: f64 = rng.random_range(0.5..1.5);
        let m0 = RealMatrix::from_fn(m, m, |_, _| rng.random_range(-0.8..0.8));
        let m1 = RealMatrix::from_fn(m, m, |_, _| rng.random_range(-0.4..0.4));
        let sym = |a: RealMatrix| (&a + a.transpose()) * 0.5;
        let h0 = m0.transpose() * &m0 + m1.transpose() * &m1 * 0.5;
        let c1 = sym(m0.transpose() * &m1 * 2.0);
        let c2 = m1.transpose() * &m1 * 0.5;
        let zero = RealMatrix::zeros(m, m);
        HamiltonianKind::Trig {
            h0: to_rows(&h0),
            terms: vec![
                TrigTerm { freq: w, cos: to_rows(&c1), sin: to_rows(&zero) },
                TrigTerm { freq: 2.0 * w, cos: to_rows(&c2), sin: to_rows(&zero) },
            ],
        }
    } else {
        let h0 = random_symmetric(rng, m, 1.0);
        let terms = (0..rng.random_range(1..=2))
            .map(|_| TrigTerm {
                freq: rng.random_range(0.5..2.0),
                cos: to_rows(&random_symmetric(rng, m, 0.5)),
                sin: to_rows(&random_symmetric(rng, m, 0.5)),
            })
            .collect();
        HamiltonianKind::Trig { h0: to_rows(&h0), terms }
    };
    HamiltonianSpec {
        n,
        kind,
        interval: [interval.0, interval.1],
        breakpoints: Vec::new(),
    }
}

/// `mu(Y, Yhat)` and `mu*(Y, Yhat)` as signed integers.
pub fn mu_pair(y: &LagrangianFrame, yhat: &LagrangianFrame, tol: &Tolerances) -> Result<(i64, i64)> {
    let c = comparative_index(y, yhat, tol)?;
    Ok((c.mu as i64, c.mu_star as i64))
}
