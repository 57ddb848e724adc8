//! Lidskii angles of symplectic matrices and their continuous tracking.
//!
//! A tracked branch is stored as a principal angle `theta` in `[0, 2pi)` plus
//! an integer winding `m`, so `phi = theta + 2 pi m`. The floor and ceiling
//! integers then come out exactly: `q = m`, and `q* = m - 1` when
//! `theta == 0`, else `m`.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lagrangian::{z_frame, LagrangianFrame, SymplecticMatrix, SymplecticPath};
use crate::matlib::{complex_eigenvalues, max_abs, numeric_rank_ref, ComplexMatrix, Tolerances};

/// `W_S = (S11 - i S12)^{-1} (S11 + i S12)`.
pub fn ws_matrix(s: &SymplecticMatrix, tol: &Tolerances) -> Result<ComplexMatrix> {
    let n = s.n();
    let s11 = s.block(1, 1);
    let s12 = s.block(1, 2);
    let a = ComplexMatrix::from_fn(n, n, |i, j| Complex64::new(s11[(i, j)], -s12[(i, j)]));
    let b = ComplexMatrix::from_fn(n, n, |i, j| Complex64::new(s11[(i, j)], s12[(i, j)]));
    let lu = a.clone().lu();
    let w = lu
        .solve(&b)
        .ok_or_else(|| Error::IllConditioned("S11 - i S12 is singular".into()))?;
    let res = max_abs(&(&a * &w - &b)) / max_abs(&b).max(1.0);
    if !res.is_finite() || res > tol.struct_atol {
        return Err(Error::IllConditioned(format!(
            "S11 - i S12 solve residual {res:.3e}"
        )));
    }
    Ok(w)
}

fn principal(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Distance on the circle.
pub fn circle_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Signed displacement `b - a` wrapped to `(-pi, pi]`.
fn wrapped(a: f64, b: f64) -> f64 {
    let d = (b - a).rem_euclid(TAU);
    if d > PI {
        d - TAU
    } else {
        d
    }
}

/// Number of angles of `S` sitting on a multiple of `2 pi`: the defect of
/// `S12`, with the rank cut relative to `max(1, |S|)`.
pub fn zero_angle_count(s: &SymplecticMatrix, tol: &Tolerances) -> usize {
    let s12 = s.block(1, 2);
    let scale = s.matrix().amax().max(1.0);
    s.n() - numeric_rank_ref(&s12, scale, tol)
}

/// Sorted principal Lidskii angles in `[0, 2pi)`. The angles nearest zero,
/// as many as the defect of `S12`, are snapped to exactly 0.
pub fn instantaneous_angles(s: &SymplecticMatrix, tol: &Tolerances) -> Result<Vec<f64>> {
    let w = ws_matrix(s, tol)?;
    let mut th: Vec<f64> = complex_eigenvalues(&w)?
        .into_iter()
        .map(|z| principal(z.arg()))
        .collect();
    let k = zero_angle_count(s, tol);
    let mut order: Vec<usize> = (0..th.len()).collect();
    order.sort_by(|&i, &j| circle_dist(th[i], 0.0).total_cmp(&circle_dist(th[j], 0.0)));
    for &i in order.iter().take(k) {
        th[i] = 0.0;
    }
    th.sort_by(|a, b| a.total_cmp(b));
    Ok(th)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IntervalKind {
    /// `[2 pi q, 2 pi (q + 1))`
    LeftClosed,
    /// `(2 pi q, 2 pi (q + 1)]`
    RightClosed,
}

/// Half the sum of the angle representatives in the requested window.
pub fn arg_interval_sum(
    s: &SymplecticMatrix,
    kind: IntervalKind,
    q_offset: i64,
    tol: &Tolerances,
) -> Result<f64> {
    let base = TAU * q_offset as f64;
    let sum: f64 = instantaneous_angles(s, tol)?
        .into_iter()
        .map(|th| match kind {
            IntervalKind::RightClosed if th == 0.0 => base + TAU,
            _ => base + th,
        })
        .sum();
    Ok(0.5 * sum)
}

/// `(mu, mu*)` from the Lidskii angles of `Z_Yhat`, `Z_Y` and `Z_Yhat^{-1} Z_Y`.
pub fn mu_via_lidskii(
    y: &LagrangianFrame,
    yhat: &LagrangianFrame,
    tol: &Tolerances,
) -> Result<(usize, usize)> {
    let n = y.n();
    let zy = z_frame(y, tol)?;
    let zh = z_frame(yhat, tol)?;
    let rel = zh.inverse().mul(&zy);
    let mut out = [0usize; 2];
    for (slot, kind) in [IntervalKind::LeftClosed, IntervalKind::RightClosed]
        .into_iter()
        .enumerate()
    {
        let v = (arg_interval_sum(&zh, kind, 0, tol)? - arg_interval_sum(&zy, kind, 0, tol)?
            + arg_interval_sum(&rel, kind, 0, tol)?)
            / PI;
        let v = if slot == 0 { v } else { n as f64 - v };
        let r = v.round();
        if (v - r).abs() >= 0.05 || r < 0.0 || r > n as f64 {
            return Err(Error::ResidualTooLarge {
                what: format!("mu via Lidskii angles ({kind:?})"),
                residual: (v - r).abs(),
            });
        }
        out[slot] = r as usize;
    }
    Ok((out[0], out[1]))
}

#[derive(Debug, Clone, Copy)]
pub struct TrackOptions {
    pub branch_step_bound: f64,
    pub max_depth: usize,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            branch_step_bound: PI / 2.0,
            max_depth: 24,
        }
    }
}

/// Continuous Lidskii angle branches along a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AngleTrace {
    pub nodes: Vec<f64>,
    pub angles: Vec<Vec<f64>>,
    pub q: Vec<Vec<i64>>,
    pub q_star: Vec<Vec<i64>>,
    /// Number of branches on a multiple of `2 pi` at each node.
    pub zero_count: Vec<usize>,
}

impl AngleTrace {
    pub fn n(&self) -> usize {
        self.angles.first().map_or(0, |a| a.len())
    }

    pub fn q_sum(&self, node: usize) -> i64 {
        self.q[node].iter().sum()
    }

    pub fn q_star_sum(&self, node: usize) -> i64 {
        self.q_star[node].iter().sum()
    }

    /// `sum q(b) - sum q(a)`.
    pub fn q_change(&self) -> i64 {
        self.q_sum(self.nodes.len() - 1) - self.q_sum(0)
    }

    /// `sum q*(b) - sum q*(a)`.
    pub fn q_star_change(&self) -> i64 {
        self.q_star_sum(self.nodes.len() - 1) - self.q_star_sum(0)
    }

    /// Index of the node equal to `t`, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        self.nodes.binary_search_by(|x| x.total_cmp(&t)).ok()
    }

    /// Columns `t, phi_1..phi_n, q_1..q_n, qstar_1..qstar_n`.
    pub fn to_csv(&self) -> String {
        let n = self.n();
        let mut out = String::from("t");
        for prefix in ["phi", "q", "qstar"] {
            for j in 1..=n {
                let _ = write!(out, ",{prefix}_{j}");
            }
        }
        out.push('\n');
        for k in 0..self.nodes.len() {
            let _ = write!(out, "{:?}", self.nodes[k]);
            for v in &self.angles[k] {
                let _ = write!(out, ",{v:?}");
            }
            for v in self.q[k].iter().chain(&self.q_star[k]) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Branches {
    theta: Vec<f64>,
    wind: Vec<i64>,
}

impl Branches {
    fn phi(&self) -> Vec<f64> {
        self.theta
            .iter()
            .zip(&self.wind)
            .map(|(t, m)| t + TAU * *m as f64)
            .collect()
    }
}

enum Step {
    Accepted(Branches),
    Rejected,
}

/// Greedy nearest-on-circle assignment of `cand` to the current branches.
fn match_step(
    prev: &Branches,
    cand: &[f64],
    bound: f64,
    tol: &Tolerances,
) -> Step {
    let n = cand.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (j, &p) in prev.theta.iter().enumerate() {
        for (i, &c) in cand.iter().enumerate() {
            pairs.push((circle_dist(p, c), j, i));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut branch_used = vec![false; n];
    let mut cand_used = vec![false; n];
    let mut next = Branches {
        theta: vec![0.0; n],
        wind: vec![0; n],
    };
    let mut assigned = 0;
    for &(d, j, i) in &pairs {
        if branch_used[j] || cand_used[i] {
            continue;
        }
        if d >= bound {
            return Step::Rejected;
        }
        // a different, distinct candidate equally close makes the choice a guess
        let ambiguous = (0..n).any(|i2| {
            i2 != i
                && !cand_used[i2]
                && circle_dist(cand[i2], cand[i]) > tol.angle_atol
                && (circle_dist(prev.theta[j], cand[i2]) - d).abs() < tol.angle_atol
        });
        if ambiguous {
            return Step::Rejected;
        }
        branch_used[j] = true;
        cand_used[i] = true;
        let phi_prev = prev.theta[j] + TAU * prev.wind[j] as f64;
        let phi_new = phi_prev + wrapped(prev.theta[j], cand[i]);
        next.theta[j] = cand[i];
        next.wind[j] = ((phi_new - cand[i]) / TAU).round() as i64;
        assigned += 1;
        if assigned == n {
            break;
        }
    }
    Step::Accepted(next)
}

fn initial_branches(theta: Vec<f64>) -> Branches {
    let n = theta.len();
    Branches {
        theta,
        wind: vec![0; n],
    }
}

/// Tracks continuous branches of the Lidskii angles of `S(t)`, inserting
/// nodes through the evaluator wherever a step is too large or ambiguous.
pub fn track_angles(
    path: &SymplecticPath,
    opts: &TrackOptions,
    tol: &Tolerances,
) -> Result<AngleTrace> {
    let n = path.n;
    // with every step below pi/n the branch sums do not depend on the matching
    let bound = opts.branch_step_bound.min(PI / n as f64);
    let mut trace = AngleTrace {
        nodes: Vec::new(),
        angles: Vec::new(),
        q: Vec::new(),
        q_star: Vec::new(),
        zero_count: Vec::new(),
    };
    let push = |trace: &mut AngleTrace, t: f64, b: &Branches| {
        trace.nodes.push(t);
        trace.angles.push(b.phi());
        trace.q.push(b.wind.clone());
        trace.q_star.push(
            b.theta
                .iter()
                .zip(&b.wind)
                .map(|(th, m)| if *th == 0.0 { m - 1 } else { *m })
                .collect(),
        );
        trace.zero_count.push(b.theta.iter().filter(|t| **t == 0.0).count());
    };

    let mut cur = initial_branches(instantaneous_angles(&path.mats[0], tol)?);
    push(&mut trace, path.nodes[0], &cur);
    for k in 0..path.nodes.len() - 1 {
        let t_end = path.nodes[k + 1];
        let end_angles = instantaneous_angles(&path.mats[k + 1], tol)?;
        let mut stack = vec![(t_end, end_angles, 0usize)];
        let mut t_cur = path.nodes[k];
        while let Some((t1, cand, depth)) = stack.pop() {
            let direct = match match_step(&cur, &cand, bound, tol) {
                Step::Accepted(next) => Some(next),
                Step::Rejected => None,
            };
            let Some(ev) = path.evaluator.as_ref() else {
                // grid-only input: accept what the samples show, never guess
                match direct {
                    Some(next) => {
                        cur = next;
                        t_cur = t1;
                        push(&mut trace, t1, &cur);
                        continue;
                    }
                    None => {
                        return Err(Error::RefinementExhausted {
                            t0: t_cur,
                            t1,
                            reason: "angle step exceeds the bound and the path has no evaluator"
                                .into(),
                        })
                    }
                }
            };
            if depth >= opts.max_depth {
                match direct {
                    Some(next) => {
                        cur = next;
                        t_cur = t1;
                        push(&mut trace, t1, &cur);
                        continue;
                    }
                    None => return Err(Error::AmbiguousMatching { t0: t_cur, t1 }),
                }
            }
            let tm = 0.5 * (t_cur + t1);
            if !(tm > t_cur && tm < t1) {
                return Err(Error::AmbiguousMatching { t0: t_cur, t1 });
            }
            let mid = instantaneous_angles(&ev(tm)?, tol)?;
            // a step counts only if the two half steps transport the same
            // winding total; this catches branches that alias past a node
            if let Some(next) = &direct {
                if let Step::Accepted(h1) = match_step(&cur, &mid, bound, tol) {
                    if let Step::Accepted(h2) = match_step(&h1, &cand, bound, tol) {
                        if h2.wind.iter().sum::<i64>() == next.wind.iter().sum::<i64>() {
                            push(&mut trace, tm, &h1);
                            push(&mut trace, t1, &h2);
                            cur = h2;
                            t_cur = t1;
                            continue;
                        }
                    }
                }
            }
            stack.push((t1, cand, depth + 1));
            stack.push((tm, mid, depth + 1));
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compidx::comparative_index;
    use crate::lagrangian::{vertical_plane, SampledLagrangianPath};
    use crate::matlib::{canonical_j, RealMatrix};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn col(v: &[f64]) -> RealMatrix {
        RealMatrix::from_column_slice(v.len(), 1, v)
    }

    fn rot2(a: f64, b: f64) -> SymplecticMatrix {
        // block-diagonal pair of rotations, interleaved coordinates (x1, x2, u1, u2)
        let mut m = RealMatrix::zeros(4, 4);
        for (i, ang) in [a, b].into_iter().enumerate() {
            let (s, c) = ang.sin_cos();
            m[(i, i)] = c;
            m[(i, 2 + i)] = s;
            m[(2 + i, i)] = -s;
            m[(2 + i, 2 + i)] = c;
        }
        SymplecticMatrix::new(m, &tol()).unwrap()
    }

    #[test]
    fn ws_examples() {
        let t = tol();
        let w = ws_matrix(&SymplecticMatrix::identity(3), &t).unwrap();
        assert!(max_abs(&(w - ComplexMatrix::identity(3, 3))) < 1e-15);
        let a = 0.37;
        let w = ws_matrix(&SymplecticMatrix::rotation(1, a), &t).unwrap();
        let e = Complex64::from_polar(1.0, 2.0 * a);
        assert!((w[(0, 0)] - e).norm() < 1e-14);
        // S12 = 0
        let mut m = RealMatrix::identity(4, 4);
        m[(0, 0)] = 2.0;
        m[(2, 2)] = 0.5;
        m[(2, 0)] = 1.0;
        let w = ws_matrix(&SymplecticMatrix::new(m, &t).unwrap(), &t).unwrap();
        assert!(max_abs(&(w - ComplexMatrix::identity(2, 2))) < 1e-14);
        assert!(ws_matrix(&SymplecticMatrix::from_unchecked(RealMatrix::zeros(2, 2)), &t).is_err());
    }

    #[test]
    fn ws_unitary_symmetric_random() {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in 1..5 {
            for _ in 0..30 {
                let a = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                let mut lo = RealMatrix::identity(2 * n, 2 * n);
                lo.view_mut((n, 0), (n, n)).copy_from(&(&a + a.transpose()));
                let s = SymplecticMatrix::new(
                    SymplecticMatrix::rotation(n, rng.random_range(0.0..3.0)).matrix() * lo,
                    &t,
                )
                .unwrap();
                let w = ws_matrix(&s, &t).unwrap();
                let id = ComplexMatrix::identity(n, n);
                assert!(max_abs(&(&w * w.adjoint() - id)) < t.struct_atol);
                assert!(max_abs(&(&w - w.transpose())) < t.struct_atol);
            }
        }
    }

    #[test]
    fn instantaneous_examples() {
        let t = tol();
        assert_eq!(instantaneous_angles(&SymplecticMatrix::identity(2), &t).unwrap(), vec![0.0, 0.0]);
        let a = instantaneous_angles(&SymplecticMatrix::rotation(1, PI / 4.0), &t).unwrap();
        assert_relative_eq!(a[0], PI / 2.0, epsilon = 1e-12);
        let a = instantaneous_angles(&rot2(PI / 4.0, PI / 3.0), &t).unwrap();
        assert_relative_eq!(a[0], PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(a[1], 2.0 * PI / 3.0, epsilon = 1e-12);
        // a half turn gives an angle exactly on the 2 pi grid
        let a = instantaneous_angles(&rot2(PI, 0.5), &t).unwrap();
        assert_eq!(a[0], 0.0);
    }

    #[test]
    fn arg_sum_examples() {
        let t = tol();
        let id = SymplecticMatrix::identity(3);
        assert_eq!(arg_interval_sum(&id, IntervalKind::LeftClosed, 0, &t).unwrap(), 0.0);
        assert_relative_eq!(
            arg_interval_sum(&id, IntervalKind::RightClosed, 0, &t).unwrap(),
            3.0 * PI
        );
        let r = SymplecticMatrix::rotation(1, PI / 4.0);
        for kind in [IntervalKind::LeftClosed, IntervalKind::RightClosed] {
            assert_relative_eq!(arg_interval_sum(&r, kind, 0, &t).unwrap(), PI / 4.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn mu_examples() {
        let t = tol();
        let e = vertical_plane(2);
        assert_eq!(mu_via_lidskii(&e, &e, &t).unwrap(), (0, 0));
        let e1 = vertical_plane(1);
        let h = LagrangianFrame::new(col(&[1.0, 0.0]), &t).unwrap();
        assert_eq!(mu_via_lidskii(&e1, &h, &t).unwrap(), (1, 1));
    }

    #[test]
    fn mu_matches_comparative_index_random() {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for n in 1..5 {
            for _ in 0..60 {
                let frame = |rng: &mut ChaCha8Rng| {
                    let a = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                    let mut s = &a + a.transpose();
                    if rng.random_bool(0.3) {
                        s.row_mut(0).fill(0.0);
                        s.column_mut(0).fill(0.0);
                    }
                    let mut y = RealMatrix::zeros(2 * n, n);
                    if rng.random_bool(0.5) {
                        y.view_mut((0, 0), (n, n)).copy_from(&RealMatrix::identity(n, n));
                        y.view_mut((n, 0), (n, n)).copy_from(&s);
                    } else {
                        y.view_mut((0, 0), (n, n)).copy_from(&s);
                        y.view_mut((n, 0), (n, n)).copy_from(&RealMatrix::identity(n, n));
                    }
                    LagrangianFrame::new(y, &t).unwrap()
                };
                let y = frame(&mut rng);
                let yh = frame(&mut rng);
                let ci = comparative_index(&y, &yh, &t).unwrap();
                let ml = mu_via_lidskii(&y, &yh, &t).unwrap();
                assert_eq!(ml, (ci.mu, ci.mu_star));
            }
        }
    }

    fn rotation_z(speeds: Vec<f64>, nodes: Vec<f64>) -> SymplecticPath {
        let n = speeds.len();
        SymplecticPath::from_fn(
            nodes,
            move |t| {
                let mut y = RealMatrix::zeros(2 * n, n);
                for (j, w) in speeds.iter().enumerate() {
                    y[(j, j)] = (w * t).sin();
                    y[(n + j, j)] = (w * t).cos();
                }
                Ok(z_frame(&LagrangianFrame::new(y, &Tolerances::default())?, &Tolerances::default())?
                    .into_matrix())
            },
            &tol(),
        )
        .unwrap()
    }

    #[test]
    fn constant_path_trace() {
        let s = SymplecticMatrix::rotation(2, 0.4).into_matrix();
        let p = SymplecticPath::from_fn(vec![0.0, 1.0, 2.0], move |_| Ok(s.clone()), &tol()).unwrap();
        let tr = track_angles(&p, &TrackOptions::default(), &tol()).unwrap();
        assert!(tr.nodes.len() >= 3);
        assert_eq!(tr.q_change(), 0);
        assert_eq!(tr.q_star_change(), 0);
    }

    #[test]
    fn rotation_trace() {
        let b = 1.5 * PI;
        let p = rotation_z(vec![1.0], vec![0.0, b]);
        let tr = track_angles(&p, &TrackOptions::default(), &tol()).unwrap();
        assert!(tr.nodes.len() > 2);
        let last = tr.nodes.len() - 1;
        assert_relative_eq!(tr.angles[last][0], 2.0 * b, epsilon = 1e-9);
        assert_eq!((tr.q[0][0], tr.q[last][0]), (0, 1));
        assert_eq!((tr.q_star[0][0], tr.q_star[last][0]), (-1, 1));
        for k in 0..tr.nodes.len() {
            let phi = tr.angles[k][0];
            assert!(phi >= TAU * tr.q[k][0] as f64 && phi < TAU * (tr.q[k][0] + 1) as f64);
        }
        let csv = tr.to_csv();
        assert!(csv.starts_with("t,phi_1,q_1,qstar_1\n"));
    }

    #[test]
    fn two_speed_trace() {
        let b = 1.5 * PI;
        let p = rotation_z(vec![1.0, 2.0], vec![0.0, 0.3, b]);
        let tr = track_angles(&p, &TrackOptions::default(), &tol()).unwrap();
        // branches 2t and 4t: q changes 1 + 3, q* changes 2 + 3 (4t ends on 6 pi)
        assert_eq!(tr.q_change(), 4);
        assert_eq!(tr.q_star_change(), 5);
        let dense = rotation_z(vec![1.0, 2.0], (0..=40).map(|k| b * k as f64 / 40.0).collect());
        let tr2 = track_angles(&dense, &TrackOptions::default(), &tol()).unwrap();
        assert_eq!((tr2.q_change(), tr2.q_star_change()), (4, 5));
    }

    #[test]
    fn defect_identity_along_rotation() {
        let t = tol();
        let path = SampledLagrangianPath::from_fn(
            (0..=30).map(|k| k as f64 * 0.1 * PI).collect(),
            |s| Ok(col(&[s.sin(), s.cos()])),
            &t,
        )
        .unwrap();
        let z = SymplecticPath::z_of(&path).unwrap();
        let tr = track_angles(&z, &TrackOptions::default(), &t).unwrap();
        for (k, &tk) in tr.nodes.iter().enumerate() {
            let x = path.frame_at(tk).unwrap().normalized(&t).unwrap().x();
            let def = 1 - numeric_rank_ref(&x, 1.0, &t) as i64;
            assert_eq!(tr.q_sum(k) - tr.q_star_sum(k), def, "t = {tk}");
        }
    }

    #[test]
    fn grid_only_coarse_path_fails() {
        let p = rotation_z(vec![1.0], vec![0.0, 1.5 * PI]);
        let p = SymplecticPath {
            evaluator: None,
            ..p
        };
        assert!(matches!(
            track_angles(&p, &TrackOptions::default(), &tol()),
            Err(Error::RefinementExhausted { .. })
        ));
        let _ = canonical_j(1);
    }
}
