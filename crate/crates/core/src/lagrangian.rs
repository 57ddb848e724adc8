//! Lagrangian frames, sampled Lagrangian paths and the orthogonal symplectic
//! frame `Z_Y` attached to every frame.
//!
//! A path is a strictly increasing time grid with one frame per node. An
//! optional evaluator `t -> Y(t)` lets the angle tracker and the partition
//! builder insert nodes wherever the sampling is too coarse; grid-only paths
//! fail loudly instead.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matlib::{
    canonical_j, inv_sqrt_spd, is_lagrangian_frame, is_orthogonal, is_symplectic, numeric_rank,
    RealMatrix, Tolerances,
};

/// A real `2n x n` matrix with `Y^T J Y = 0` and full column rank.
#[derive(Debug, Clone, PartialEq)]
pub struct LagrangianFrame {
    y: RealMatrix,
}

impl LagrangianFrame {
    pub fn new(y: RealMatrix, tol: &Tolerances) -> Result<Self> {
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::NotLagrangian("non-finite entries".into()));
        }
        if !is_lagrangian_frame(&y, tol)? {
            let j = canonical_j(y.ncols());
            let iso = (y.transpose() * j * &y).amax();
            return Err(Error::NotLagrangian(format!(
                "isotropy residual {iso:.3e}, rank {} of {}",
                numeric_rank(&y, tol),
                y.ncols()
            )));
        }
        Ok(Self { y })
    }

    /// Stacks `X` over `U`.
    pub fn from_blocks(x: &RealMatrix, u: &RealMatrix, tol: &Tolerances) -> Result<Self> {
        if x.shape() != u.shape() || !x.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "blocks must be n x n, got {:?} and {:?}",
                x.shape(),
                u.shape()
            )));
        }
        let n = x.nrows();
        let mut y = RealMatrix::zeros(2 * n, n);
        y.view_mut((0, 0), (n, n)).copy_from(x);
        y.view_mut((n, 0), (n, n)).copy_from(u);
        Self::new(y, tol)
    }

    pub(crate) fn from_unchecked(y: RealMatrix) -> Self {
        Self { y }
    }

    pub fn n(&self) -> usize {
        self.y.ncols()
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.y
    }

    pub fn into_matrix(self) -> RealMatrix {
        self.y
    }

    /// Upper block `X`.
    pub fn x(&self) -> RealMatrix {
        let n = self.n();
        self.y.view((0, 0), (n, n)).into_owned()
    }

    /// Lower block `U`.
    pub fn u(&self) -> RealMatrix {
        let n = self.n();
        self.y.view((n, 0), (n, n)).into_owned()
    }

    /// `K_Y = (Y^T Y)^{-1/2}`.
    pub fn normalizer(&self, tol: &Tolerances) -> Result<RealMatrix> {
        inv_sqrt_spd(&(self.y.transpose() * &self.y), tol)
    }

    /// `Y K_Y`, a frame with orthonormal columns spanning the same plane.
    pub fn normalized(&self, tol: &Tolerances) -> Result<LagrangianFrame> {
        Ok(Self {
            y: &self.y * self.normalizer(tol)?,
        })
    }

    /// `Y C` for an invertible `n x n` matrix `C`.
    pub fn mul_right(&self, c: &RealMatrix, tol: &Tolerances) -> Result<LagrangianFrame> {
        if c.shape() != (self.n(), self.n()) {
            return Err(Error::ShapeMismatch(format!(
                "right factor must be {0}x{0}",
                self.n()
            )));
        }
        if numeric_rank(c, tol) < self.n() {
            return Err(Error::SingularFactor { t: f64::NAN });
        }
        LagrangianFrame::new(&self.y * c, tol)
    }
}

/// The vertical plane `E = (0, I)^T`.
pub fn vertical_plane(n: usize) -> LagrangianFrame {
    assert!(n >= 1, "dimension must be positive");
    let mut y = RealMatrix::zeros(2 * n, n);
    for i in 0..n {
        y[(n + i, i)] = 1.0;
    }
    LagrangianFrame { y }
}

/// Wronskian `W(Y, Yhat) = Y^T J Yhat`.
pub fn wronskian(y: &LagrangianFrame, yhat: &LagrangianFrame) -> Result<RealMatrix> {
    if y.n() != yhat.n() {
        return Err(Error::ShapeMismatch(format!(
            "frames of dimension {} and {}",
            y.n(),
            yhat.n()
        )));
    }
    let n = y.n();
    // Y^T J Yhat = X^T Uhat - U^T Xhat
    let x = y.y.view((0, 0), (n, n));
    let u = y.y.view((n, 0), (n, n));
    let xh = yhat.y.view((0, 0), (n, n));
    let uh = yhat.y.view((n, 0), (n, n));
    Ok(x.transpose() * uh - u.transpose() * xh)
}

/// A real `2n x 2n` matrix with `S^T J S = J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMatrix {
    s: RealMatrix,
}

impl SymplecticMatrix {
    pub fn new(s: RealMatrix, tol: &Tolerances) -> Result<Self> {
        if !is_symplectic(&s, tol)? {
            let n = s.nrows() / 2;
            let j = canonical_j(n);
            let res = (s.transpose() * &j * &s - &j).amax();
            return Err(Error::NotSymplectic(format!("residual {res:.3e}")));
        }
        Ok(Self { s })
    }

    pub(crate) fn from_unchecked(s: RealMatrix) -> Self {
        Self { s }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            s: RealMatrix::identity(2 * n, 2 * n),
        }
    }

    /// The block rotation `[[cos a I, sin a I], [-sin a I, cos a I]]`.
    pub fn rotation(n: usize, alpha: f64) -> Self {
        let (s, c) = alpha.sin_cos();
        let mut m = RealMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            m[(i, i)] = c;
            m[(n + i, n + i)] = c;
            m[(i, n + i)] = s;
            m[(n + i, i)] = -s;
        }
        Self { s: m }
    }

    pub fn n(&self) -> usize {
        self.s.nrows() / 2
    }

    pub fn matrix(&self) -> &RealMatrix {
        &self.s
    }

    pub fn into_matrix(self) -> RealMatrix {
        self.s
    }

    /// Block `(i, j)` with `i, j` in `{1, 2}`.
    pub fn block(&self, i: usize, j: usize) -> RealMatrix {
        let n = self.n();
        self.s.view(((i - 1) * n, (j - 1) * n), (n, n)).into_owned()
    }

    /// `S^{-1} = -J S^T J`.
    pub fn inverse(&self) -> SymplecticMatrix {
        let j = canonical_j(self.n());
        Self {
            s: -(&j * self.s.transpose() * &j),
        }
    }

    pub fn mul(&self, other: &SymplecticMatrix) -> SymplecticMatrix {
        Self {
            s: &self.s * &other.s,
        }
    }

    /// `S E`, the image of the vertical plane.
    pub fn apply_vertical(&self) -> RealMatrix {
        let n = self.n();
        self.s.view((0, n), (2 * n, n)).into_owned()
    }

    pub fn is_orthogonal(&self, tol: &Tolerances) -> bool {
        is_orthogonal(&self.s, tol).unwrap_or(false)
    }
}

/// `Z_Y = [J Y K_Y, Y K_Y]`, symplectic and orthogonal.
pub fn z_frame(y: &LagrangianFrame, tol: &Tolerances) -> Result<SymplecticMatrix> {
    let n = y.n();
    let yk = y.matrix() * y.normalizer(tol)?;
    let jyk = canonical_j(n) * &yk;
    let mut z = RealMatrix::zeros(2 * n, 2 * n);
    z.view_mut((0, 0), (2 * n, n)).copy_from(&jyk);
    z.view_mut((0, n), (2 * n, n)).copy_from(&yk);
    Ok(SymplecticMatrix { s: z })
}

/// `S = Z_{SE} L` with `L` symplectic and lower block triangular.
pub fn factor_symplectic(
    s: &SymplecticMatrix,
    tol: &Tolerances,
) -> Result<(SymplecticMatrix, SymplecticMatrix)> {
    let se = LagrangianFrame::from_unchecked(s.apply_vertical());
    let z = z_frame(&se, tol)?;
    let l = SymplecticMatrix {
        s: z.s.transpose() * &s.s,
    };
    Ok((z, l))
}

/// Symplectic and lower block triangular, `[[P, 0], [K, P^{-T}]]`.
pub fn is_lower_block_triangular(s: &SymplecticMatrix, tol: &Tolerances) -> bool {
    s.block(1, 2).amax() <= tol.struct_atol * s.matrix().amax().max(1.0)
}

pub type FrameEvaluator = Arc<dyn Fn(f64) -> Result<RealMatrix> + Send + Sync>;
pub type MatrixEvaluator = Arc<dyn Fn(f64) -> Result<RealMatrix> + Send + Sync>;

fn check_grid(nodes: &[f64]) -> Result<()> {
    if nodes.is_empty() {
        return Err(Error::InvalidPath("empty time grid".into()));
    }
    if let Some(bad) = nodes.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidPath(format!("non-finite time {bad}")));
    }
    if let Some(w) = nodes.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::InvalidPath(format!(
            "times not strictly increasing: {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// A Lagrangian path sampled on a strictly increasing grid.
#[derive(Clone)]
pub struct SampledLagrangianPath {
    n: usize,
    nodes: Vec<f64>,
    frames: Vec<LagrangianFrame>,
    evaluator: Option<FrameEvaluator>,
    tol: Tolerances,
}

impl std::fmt::Debug for SampledLagrangianPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SampledLagrangianPath")
            .field("n", &self.n)
            .field("nodes", &self.nodes.len())
            .field("interval", &self.interval())
            .field("evaluator", &self.evaluator.is_some())
            .finish()
    }
}

impl SampledLagrangianPath {
    /// Validates the grid, every frame, and evaluator consistency at the nodes.
    pub fn new(
        nodes: Vec<f64>,
        frames: Vec<RealMatrix>,
        evaluator: Option<FrameEvaluator>,
        tol: &Tolerances,
    ) -> Result<Self> {
        check_grid(&nodes)?;
        if frames.len() != nodes.len() {
            return Err(Error::InvalidPath(format!(
                "{} nodes but {} frames",
                nodes.len(),
                frames.len()
            )));
        }
        let n = frames[0].ncols();
        let mut checked = Vec::with_capacity(frames.len());
        for (i, f) in frames.into_iter().enumerate() {
            if f.shape() != (2 * n, n) {
                return Err(Error::InvalidPath(format!(
                    "frame {i} has shape {:?}, expected ({}, {n})",
                    f.shape(),
                    2 * n
                )));
            }
            let frame = LagrangianFrame::new(f, tol)
                .map_err(|e| Error::InvalidPath(format!("frame {i} (t = {}): {e}", nodes[i])))?;
            checked.push(frame);
        }
        if let Some(ev) = &evaluator {
            for (t, f) in nodes.iter().zip(&checked) {
                let y = ev(*t)?;
                let diff = (&y - f.matrix()).amax();
                if y.shape() != f.matrix().shape() || diff > tol.struct_atol * f.matrix().amax().max(1.0)
                {
                    return Err(Error::InvalidPath(format!(
                        "evaluator disagrees with frame at t = {t} by {diff:.3e}"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            nodes,
            frames: checked,
            evaluator,
            tol: *tol,
        })
    }

    /// Samples `f` on `nodes` and keeps `f` as the evaluator.
    pub fn from_fn(
        nodes: Vec<f64>,
        f: impl Fn(f64) -> Result<RealMatrix> + Send + Sync + 'static,
        tol: &Tolerances,
    ) -> Result<Self> {
        let f: FrameEvaluator = Arc::new(f);
        let frames = nodes.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        Self::new(nodes, frames, Some(f), tol)
    }

    /// Constant path equal to `y` on the given grid.
    pub fn constant(nodes: Vec<f64>, y: &LagrangianFrame, tol: &Tolerances) -> Result<Self> {
        let m = y.matrix().clone();
        Self::from_fn(nodes, move |_| Ok(m.clone()), tol)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn frames(&self) -> &[LagrangianFrame] {
        &self.frames
    }

    pub fn evaluator(&self) -> Option<&FrameEvaluator> {
        self.evaluator.as_ref()
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.nodes[0], *self.nodes.last().unwrap())
    }

    pub fn first(&self) -> &LagrangianFrame {
        &self.frames[0]
    }

    pub fn last(&self) -> &LagrangianFrame {
        self.frames.last().unwrap()
    }

    /// Frame at `t`: a node value when `t` is a node, else the evaluator.
    pub fn frame_at(&self, t: f64) -> Result<LagrangianFrame> {
        if let Ok(i) = self.nodes.binary_search_by(|x| x.total_cmp(&t)) {
            return Ok(self.frames[i].clone());
        }
        let ev = self.evaluator.as_ref().ok_or(Error::EvaluatorMissing)?;
        LagrangianFrame::new(ev(t)?, &self.tol)
    }

    /// Inserts midpoints into segments failing `accept` until every segment
    /// passes or `max_depth` bisections of the original segment were used.
    pub fn refine(
        &self,
        accept: &dyn Fn(f64, &LagrangianFrame, f64, &LagrangianFrame) -> bool,
        max_depth: usize,
    ) -> Result<Self> {
        let mut nodes = vec![self.nodes[0]];
        let mut frames = vec![self.frames[0].clone()];
        for k in 0..self.nodes.len() - 1 {
            let mut stack = vec![(
                self.nodes[k + 1],
                self.frames[k + 1].clone(),
                0usize,
            )];
            while let Some((t1, f1, depth)) = stack.pop() {
                let t0 = *nodes.last().unwrap();
                let f0 = frames.last().unwrap();
                if accept(t0, f0, t1, &f1) {
                    nodes.push(t1);
                    frames.push(f1);
                    continue;
                }
                let ev = self.evaluator.as_ref().ok_or(Error::EvaluatorMissing)?;
                if depth >= max_depth {
                    return Err(Error::RefinementExhausted {
                        t0,
                        t1,
                        reason: "segment criterion still failing at max depth".into(),
                    });
                }
                let tm = 0.5 * (t0 + t1);
                let fm = LagrangianFrame::new(ev(tm)?, &self.tol)?;
                stack.push((t1, f1, depth + 1));
                stack.push((tm, fm, depth + 1));
            }
        }
        Ok(Self {
            n: self.n,
            nodes,
            frames,
            evaluator: self.evaluator.clone(),
            tol: self.tol,
        })
    }

    /// Inserts `factor - 1` equally spaced nodes into every segment.
    pub fn densify(&self, factor: usize) -> Result<Self> {
        if factor <= 1 {
            return Ok(self.clone());
        }
        let ev = self.evaluator.as_ref().ok_or(Error::EvaluatorMissing)?;
        let mut nodes = Vec::with_capacity((self.nodes.len() - 1) * factor + 1);
        let mut frames = Vec::with_capacity(nodes.capacity());
        for k in 0..self.nodes.len() - 1 {
            let (t0, t1) = (self.nodes[k], self.nodes[k + 1]);
            nodes.push(t0);
            frames.push(self.frames[k].clone());
            for j in 1..factor {
                let t = t0 + (t1 - t0) * j as f64 / factor as f64;
                if t > t0 && t < t1 {
                    nodes.push(t);
                    frames.push(LagrangianFrame::new(ev(t)?, &self.tol)?);
                }
            }
        }
        nodes.push(*self.nodes.last().unwrap());
        frames.push(self.last().clone());
        Ok(Self {
            n: self.n,
            nodes,
            frames,
            evaluator: self.evaluator.clone(),
            tol: self.tol,
        })
    }

    /// The sub-path on the node range `first..=last`.
    pub fn restrict(&self, first: usize, last: usize) -> Result<Self> {
        if first >= last || last >= self.nodes.len() {
            return Err(Error::InvalidPath(format!(
                "invalid node range {first}..={last}"
            )));
        }
        Ok(Self {
            n: self.n,
            nodes: self.nodes[first..=last].to_vec(),
            frames: self.frames[first..=last].to_vec(),
            evaluator: self.evaluator.clone(),
            tol: self.tol,
        })
    }

    /// Same plane at every node, resampled on `nodes` (must lie in the
    /// interval; off-grid times need the evaluator).
    pub fn resample(&self, nodes: &[f64]) -> Result<Self> {
        check_grid(nodes)?;
        let frames = nodes
            .iter()
            .map(|&t| self.frame_at(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n: self.n,
            nodes: nodes.to_vec(),
            frames,
            evaluator: self.evaluator.clone(),
            tol: self.tol,
        })
    }

    /// Applies `f` node-wise and to the evaluator.
    fn map_frames(
        &self,
        f: Arc<dyn Fn(f64, &RealMatrix) -> Result<RealMatrix> + Send + Sync>,
    ) -> Result<Self> {
        let frames = self
            .nodes
            .iter()
            .zip(&self.frames)
            .map(|(&t, y)| f(t, y.matrix()))
            .collect::<Result<Vec<_>>>()?;
        let evaluator = self.evaluator.clone().map(|ev| {
            let f = f.clone();
            Arc::new(move |t: f64| {
                let y = ev(t)?;
                f(t, &y)
            }) as FrameEvaluator
        });
        Self::new(self.nodes.clone(), frames, evaluator, &self.tol)
    }
}

/// A symplectic transformation: constant, or a function of time.
#[derive(Clone)]
pub enum SymplecticSource {
    Constant(SymplecticMatrix),
    Function(MatrixEvaluator),
}

impl SymplecticSource {
    pub fn at(&self, t: f64) -> Result<RealMatrix> {
        match self {
            Self::Constant(s) => Ok(s.matrix().clone()),
            Self::Function(f) => f(t),
        }
    }
}

/// Node-wise `S(t)^{-1} Y(t)`; the result is revalidated.
pub fn transform_path(
    path: &SampledLagrangianPath,
    s: &SymplecticSource,
) -> Result<SampledLagrangianPath> {
    let n = path.n();
    let s = s.clone();
    let tol = path.tol;
    path.map_frames(Arc::new(move |t, y| {
        let m = s.at(t)?;
        if m.shape() != (2 * n, 2 * n) {
            return Err(Error::ShapeMismatch(format!(
                "transform must be {0}x{0}, got {1:?}",
                2 * n,
                m.shape()
            )));
        }
        let sm = SymplecticMatrix::new(m, &tol)?;
        Ok(sm.inverse().matrix() * y)
    }))
}

/// Node-wise `L(t) Y(t)` (left multiplication, no inverse).
pub fn apply_left(
    path: &SampledLagrangianPath,
    s: &SymplecticSource,
) -> Result<SampledLagrangianPath> {
    let s = s.clone();
    path.map_frames(Arc::new(move |t, y| Ok(s.at(t)? * y)))
}

/// Node-wise `Y(t) C(t)` for invertible `C(t)`.
pub fn multiply_right(
    path: &SampledLagrangianPath,
    c: Arc<dyn Fn(f64) -> RealMatrix + Send + Sync>,
) -> Result<SampledLagrangianPath> {
    let n = path.n();
    let tol = path.tol;
    path.map_frames(Arc::new(move |t, y| {
        let ct = c(t);
        if ct.shape() != (n, n) {
            return Err(Error::ShapeMismatch(format!("right factor must be {n}x{n}")));
        }
        if numeric_rank(&ct, &tol) < n {
            return Err(Error::SingularFactor { t });
        }
        Ok(y * ct)
    }))
}

/// A path of symplectic matrices on a grid, optionally with an evaluator.
#[derive(Clone)]
pub struct SymplecticPath {
    pub n: usize,
    pub nodes: Vec<f64>,
    pub mats: Vec<SymplecticMatrix>,
    pub evaluator: Option<Arc<dyn Fn(f64) -> Result<SymplecticMatrix> + Send + Sync>>,
}

impl SymplecticPath {
    pub fn at(&self, t: f64) -> Result<SymplecticMatrix> {
        if let Ok(i) = self.nodes.binary_search_by(|x| x.total_cmp(&t)) {
            return Ok(self.mats[i].clone());
        }
        let ev = self.evaluator.as_ref().ok_or(Error::EvaluatorMissing)?;
        ev(t)
    }

    /// Validated path from a closure, sampled on `nodes`.
    pub fn from_fn(
        nodes: Vec<f64>,
        f: impl Fn(f64) -> Result<RealMatrix> + Send + Sync + 'static,
        tol: &Tolerances,
    ) -> Result<Self> {
        check_grid(&nodes)?;
        let tol = *tol;
        let f = Arc::new(move |t: f64| SymplecticMatrix::new(f(t)?, &tol));
        let mats = nodes.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        let n = mats[0].n();
        Ok(Self {
            n,
            nodes,
            mats,
            evaluator: Some(f),
        })
    }

    /// `t -> Z_{Y(t)}` along a Lagrangian path.
    pub fn z_of(path: &SampledLagrangianPath) -> Result<Self> {
        let tol = path.tol;
        let mats = path
            .frames()
            .iter()
            .map(|y| z_frame(y, &tol))
            .collect::<Result<Vec<_>>>()?;
        let evaluator = path.evaluator.clone().map(|ev| {
            Arc::new(move |t: f64| {
                let y = LagrangianFrame::new(ev(t)?, &tol)?;
                z_frame(&y, &tol)
            }) as Arc<dyn Fn(f64) -> Result<SymplecticMatrix> + Send + Sync>
        });
        Ok(Self {
            n: path.n(),
            nodes: path.nodes.clone(),
            mats,
            evaluator,
        })
    }

    /// `t -> Z_{Y(t)}^T Z_{Yhat(t)}` on the union of both grids.
    pub fn relative_z(y: &SampledLagrangianPath, yhat: &SampledLagrangianPath) -> Result<Self> {
        let (y, yhat) = common_grid(y, yhat)?;
        let tol = y.tol;
        let mats = y
            .frames()
            .iter()
            .zip(yhat.frames())
            .map(|(a, b)| Ok(z_frame(a, &tol)?.inverse().mul(&z_frame(b, &tol)?)))
            .collect::<Result<Vec<_>>>()?;
        let evaluator = match (y.evaluator.clone(), yhat.evaluator.clone()) {
            (Some(ea), Some(eb)) => Some(Arc::new(move |t: f64| {
                let a = z_frame(&LagrangianFrame::new(ea(t)?, &tol)?, &tol)?;
                let b = z_frame(&LagrangianFrame::new(eb(t)?, &tol)?, &tol)?;
                Ok(SymplecticMatrix::from_unchecked(a.matrix().transpose() * b.matrix()))
            })
                as Arc<dyn Fn(f64) -> Result<SymplecticMatrix> + Send + Sync>),
            _ => None,
        };
        Ok(Self {
            n: y.n(),
            nodes: y.nodes.clone(),
            mats,
            evaluator,
        })
    }
}

/// Resamples both paths onto the union of their grids. Both must share the
/// interval; missing node values require the owning path's evaluator.
pub fn common_grid(
    y: &SampledLagrangianPath,
    yhat: &SampledLagrangianPath,
) -> Result<(SampledLagrangianPath, SampledLagrangianPath)> {
    if y.n() != yhat.n() {
        return Err(Error::ShapeMismatch(format!(
            "paths of dimension {} and {}",
            y.n(),
            yhat.n()
        )));
    }
    let (a0, b0) = y.interval();
    let (a1, b1) = yhat.interval();
    let scale = (b0 - a0).abs().max(1.0);
    if (a0 - a1).abs() > 1e-12 * scale || (b0 - b1).abs() > 1e-12 * scale {
        return Err(Error::InvalidPath(format!(
            "paths live on different intervals [{a0}, {b0}] and [{a1}, {b1}]"
        )));
    }
    if y.nodes() == yhat.nodes() {
        return Ok((y.clone(), yhat.clone()));
    }
    let union = union_nodes(y.nodes(), yhat.nodes());
    Ok((y.resample(&union)?, yhat.resample(&union)?))
}

/// Sorted union of two grids; points closer than `1e-14 (b - a)` merge.
pub fn union_nodes(a: &[f64], b: &[f64]) -> Vec<f64> {
    let lo = a[0].min(b[0]);
    let hi = a[a.len() - 1].max(b[b.len() - 1]);
    let scale = (hi - lo).abs().max(1.0);
    let mut union: Vec<f64> = a.iter().chain(b).copied().collect();
    union.sort_by(|p, q| p.total_cmp(q));
    union.dedup_by(|p, q| (*p - *q).abs() <= 1e-14 * scale);
    union
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn col(v: &[f64]) -> RealMatrix {
        RealMatrix::from_column_slice(v.len(), 1, v)
    }

    fn rotation_path(nodes: Vec<f64>) -> SampledLagrangianPath {
        SampledLagrangianPath::from_fn(nodes, |t| Ok(col(&[t.sin(), t.cos()])), &tol()).unwrap()
    }

    fn random_frame(rng: &mut ChaCha8Rng, n: usize) -> LagrangianFrame {
        // Z_{(I, S)} for symmetric S
        let a = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let s = &a + a.transpose();
        let c = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0))
            + RealMatrix::identity(n, n) * 3.0;
        let y = LagrangianFrame::from_blocks(&RealMatrix::identity(n, n), &s, &tol()).unwrap();
        y.mul_right(&c, &tol()).unwrap()
    }

    fn random_symplectic(rng: &mut ChaCha8Rng, n: usize) -> SymplecticMatrix {
        // product of a lower and an upper unit-triangular symplectic factor
        let sym = |rng: &mut ChaCha8Rng| {
            let a = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            &a + a.transpose()
        };
        let mut lo = RealMatrix::identity(2 * n, 2 * n);
        lo.view_mut((n, 0), (n, n)).copy_from(&sym(rng));
        let mut up = RealMatrix::identity(2 * n, 2 * n);
        up.view_mut((0, n), (n, n)).copy_from(&sym(rng));
        SymplecticMatrix::new(lo * up, &tol()).unwrap()
    }

    #[test]
    fn vertical_plane_shape() {
        let e1 = vertical_plane(1);
        assert_eq!(e1.matrix(), &col(&[0.0, 1.0]));
        let e2 = vertical_plane(2);
        assert_eq!(e2.x(), RealMatrix::zeros(2, 2));
        assert_eq!(e2.u(), RealMatrix::identity(2, 2));
        assert!(is_lagrangian_frame(e2.matrix(), &tol()).unwrap());
    }

    #[test]
    fn wronskian_examples() {
        let t = tol();
        let e = vertical_plane(1);
        assert_eq!(wronskian(&e, &e).unwrap()[(0, 0)], 0.0);
        let h = LagrangianFrame::new(col(&[1.0, 0.0]), &t).unwrap();
        assert_eq!(wronskian(&e, &h).unwrap()[(0, 0)], -1.0);
        let th = 0.7_f64;
        let r = LagrangianFrame::new(col(&[th.cos(), th.sin()]), &t).unwrap();
        assert_relative_eq!(wronskian(&h, &r).unwrap()[(0, 0)], th.sin(), epsilon = 1e-15);
        assert!(wronskian(&e, &vertical_plane(2)).is_err());
    }

    #[test]
    fn wronskian_antisymmetry_and_congruence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..5 {
            let y = random_frame(&mut rng, n);
            let yh = random_frame(&mut rng, n);
            let w = wronskian(&y, &yh).unwrap();
            assert!((&w + wronskian(&yh, &y).unwrap().transpose()).amax() < 1e-12);
            let c1 = RealMatrix::identity(n, n) * 2.0
                + RealMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
            let c2 = RealMatrix::identity(n, n) * 2.0
                + RealMatrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
            let lhs = wronskian(&y.mul_right(&c1, &tol()).unwrap(), &yh.mul_right(&c2, &tol()).unwrap())
                .unwrap();
            let rhs = c1.transpose() * &w * &c2;
            assert!((lhs - rhs).amax() < 1e-10);
        }
    }

    #[test]
    fn z_frame_examples() {
        let t = tol();
        assert_relative_eq!(
            z_frame(&vertical_plane(3), &t).unwrap().matrix().clone(),
            RealMatrix::identity(6, 6)
        );
        let a = 0.9_f64;
        let y = LagrangianFrame::new(col(&[a.sin(), a.cos()]), &t).unwrap();
        let z = z_frame(&y, &t).unwrap();
        let expect = RealMatrix::from_row_slice(2, 2, &[a.cos(), a.sin(), -a.sin(), a.cos()]);
        assert_relative_eq!(z.matrix().clone(), expect, epsilon = 1e-15);
    }

    #[test]
    fn z_frame_properties_random() {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..6 {
            for _ in 0..20 {
                let y = random_frame(&mut rng, n);
                let z = z_frame(&y, &t).unwrap();
                assert!(is_symplectic(z.matrix(), &t).unwrap());
                assert!(is_orthogonal(z.matrix(), &t).unwrap());
                let j = canonical_j(n);
                assert!((z.matrix() * &j - &j * z.matrix()).amax() < 1e-12);
                let yk = y.matrix() * y.normalizer(&t).unwrap();
                assert!((z.apply_vertical() - yk).amax() < t.struct_atol);
            }
        }
    }

    #[test]
    fn factor_symplectic_examples() {
        let t = tol();
        let (z, l) = factor_symplectic(&SymplecticMatrix::identity(2), &t).unwrap();
        assert_relative_eq!(z.matrix().clone(), RealMatrix::identity(4, 4), epsilon = 1e-15);
        assert_relative_eq!(l.matrix().clone(), RealMatrix::identity(4, 4), epsilon = 1e-15);
        // orthogonal symplectic: L = I
        let rot = SymplecticMatrix::rotation(2, 0.4);
        let (z, l) = factor_symplectic(&rot, &t).unwrap();
        assert!((l.matrix() - RealMatrix::identity(4, 4)).amax() < 1e-12);
        assert!((z.matrix() - rot.matrix()).amax() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 1..5 {
            for _ in 0..20 {
                let s = random_symplectic(&mut rng, n);
                let (z, l) = factor_symplectic(&s, &t).unwrap();
                assert!((z.matrix() * l.matrix() - s.matrix()).amax() < t.struct_atol * s.matrix().amax());
                assert!(is_lower_block_triangular(&l, &t));
                assert!(is_symplectic(l.matrix(), &t).unwrap());
            }
        }
    }

    #[test]
    fn path_validation() {
        let t = tol();
        let e = vertical_plane(1).into_matrix();
        let bad = SampledLagrangianPath::new(vec![0.0, 0.0], vec![e.clone(), e.clone()], None, &t);
        assert!(matches!(bad, Err(Error::InvalidPath(_))));
        let short = SampledLagrangianPath::new(vec![0.0, 1.0], vec![e.clone()], None, &t);
        assert!(short.is_err());
        let notlag = SampledLagrangianPath::new(vec![0.0], vec![RealMatrix::zeros(2, 1)], None, &t);
        assert!(notlag.is_err());
        let ev: FrameEvaluator = Arc::new(|_| Ok(col(&[1.0, 0.0])));
        let inconsistent = SampledLagrangianPath::new(vec![0.0], vec![e], Some(ev), &t);
        assert!(inconsistent.is_err());
    }

    #[test]
    fn refine_examples() {
        let nodes = vec![0.0, 1.5 * PI];
        let path = rotation_path(nodes.clone());
        // angle of Z_Y is 2t; require steps below pi/2
        let crit = |t0: f64, _: &LagrangianFrame, t1: f64, _: &LagrangianFrame| 2.0 * (t1 - t0) < PI / 2.0;
        let refined = path.refine(&crit, 10).unwrap();
        assert!(refined.nodes().len() >= 7);
        let again = refined.refine(&crit, 10).unwrap();
        assert_eq!(again.nodes(), refined.nodes());

        let grid_only = SampledLagrangianPath::new(
            path.nodes().to_vec(),
            path.frames().iter().map(|f| f.matrix().clone()).collect(),
            None,
            &tol(),
        )
        .unwrap();
        assert!(matches!(grid_only.refine(&crit, 10), Err(Error::EvaluatorMissing)));
        assert!(matches!(
            path.refine(&crit, 1),
            Err(Error::RefinementExhausted { .. })
        ));
    }

    #[test]
    fn transform_examples() {
        let t = tol();
        let path = rotation_path((0..9).map(|k| k as f64 * 0.3).collect());
        let same = transform_path(&path, &SymplecticSource::Constant(SymplecticMatrix::identity(1))).unwrap();
        for (a, b) in same.frames().iter().zip(path.frames()) {
            assert_eq!(a, b);
        }
        // Z_Y^{-1} Y = E K_Y^{-1}
        let ev = path.evaluator().unwrap().clone();
        let zsrc = SymplecticSource::Function(Arc::new(move |s| {
            let y = LagrangianFrame::new(ev(s)?, &Tolerances::default())?;
            Ok(z_frame(&y, &Tolerances::default())?.into_matrix())
        }));
        let v = transform_path(&path, &zsrc).unwrap();
        for f in v.frames() {
            assert!(f.x().amax() < 1e-14);
            assert_relative_eq!(f.u()[(0, 0)], 1.0, epsilon = 1e-14);
        }
        let scaled = multiply_right(&path, Arc::new(|_| RealMatrix::from_element(1, 1, 2.0))).unwrap();
        assert_relative_eq!(scaled.frames()[3].matrix().clone(), path.frames()[3].matrix() * 2.0);
        let singular = multiply_right(&path, Arc::new(|_| RealMatrix::zeros(1, 1)));
        assert!(matches!(singular, Err(Error::SingularFactor { .. })));
        let _ = t;
    }

    #[test]
    fn common_grid_merges() {
        let a = rotation_path(vec![0.0, 0.5, 1.0]);
        let b = rotation_path(vec![0.0, 0.25, 1.0]);
        let (ra, rb) = common_grid(&a, &b).unwrap();
        assert_eq!(ra.nodes(), &[0.0, 0.25, 0.5, 1.0]);
        assert_eq!(ra.nodes(), rb.nodes());
        let c = rotation_path(vec![0.0, 2.0]);
        assert!(common_grid(&a, &c).is_err());
    }
}
