//! Oscillation numbers `N` and dual oscillation numbers `N*` of a Lagrangian
//! path, by three independent routes:
//!
//! * Lidskii: endpoint change of the tracked `q` (resp. `q*`) sums of `Z_Y(t)`.
//! * partition: telescoping comparative indices against a system `R_k(t) E`
//!   satisfying the constant-rank conditions on every segment.
//! * rank drop: one-sided rank changes of `X(t)`, valid for monotone paths.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::compidx::comparative_index;
use crate::error::{Error, Result};
use crate::lagrangian::{
    apply_left, transform_path, union_nodes, wronskian, z_frame, FrameEvaluator,
    LagrangianFrame, SampledLagrangianPath, SymplecticPath, SymplecticSource,
};
use crate::lidskii::{track_angles, AngleTrace, TrackOptions};
use crate::matlib::{canonical_j, numeric_rank_ref, sorted_singular_values, RealMatrix, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Route {
    Lidskii,
    Partition,
    RankDrop,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub nodes: usize,
    pub segments: Option<usize>,
    pub segment_ranks: Vec<(usize, usize)>,
    pub change_points: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OscillationResult {
    pub value: i64,
    pub route: Route,
    #[serde(skip)]
    pub trace: Option<AngleTrace>,
    pub diagnostics: Diagnostics,
}

/// Rank of the upper block of the normalized frame.
pub fn rank_x(y: &LagrangianFrame, tol: &Tolerances) -> Result<usize> {
    Ok(numeric_rank_ref(&y.normalized(tol)?.x(), 1.0, tol))
}

/// Tracks the Lidskii angles of `Z_Y(t)` along the path.
pub fn lidskii_trace(
    path: &SampledLagrangianPath,
    opts: &TrackOptions,
    tol: &Tolerances,
) -> Result<AngleTrace> {
    track_angles(&SymplecticPath::z_of(path)?, opts, tol)
}

/// `(N, N*)` by the Lidskii route, sharing one trace.
pub fn oscillation_numbers(path: &SampledLagrangianPath, tol: &Tolerances) -> Result<(i64, i64)> {
    let tr = lidskii_trace(path, &TrackOptions::default(), tol)?;
    Ok((tr.q_change(), tr.q_star_change()))
}

fn lidskii_result(tr: AngleTrace, value: i64) -> OscillationResult {
    OscillationResult {
        value,
        route: Route::Lidskii,
        diagnostics: Diagnostics {
            nodes: tr.nodes.len(),
            ..Default::default()
        },
        trace: Some(tr),
    }
}

pub fn oscillation_number(path: &SampledLagrangianPath, tol: &Tolerances) -> Result<OscillationResult> {
    let tr = lidskii_trace(path, &TrackOptions::default(), tol)?;
    let v = tr.q_change();
    Ok(lidskii_result(tr, v))
}

pub fn dual_oscillation_number(
    path: &SampledLagrangianPath,
    tol: &Tolerances,
) -> Result<OscillationResult> {
    let tr = lidskii_trace(path, &TrackOptions::default(), tol)?;
    let v = tr.q_star_change();
    Ok(lidskii_result(tr, v))
}

/// The symplectic family `R_k(t)` used on one segment.
#[derive(Clone)]
pub enum RFamily {
    /// `R_k(t) = Z_{Y(t)} R_alpha`.
    ZRotation { alpha: f64 },
    /// An explicit symplectic function of time.
    Explicit(SymplecticSource),
}

impl std::fmt::Debug for RFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::ZRotation { alpha } => write!(f, "ZRotation({alpha})"),
            Self::Explicit(_) => write!(f, "Explicit"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PartitionSegment {
    pub t0: f64,
    pub t1: f64,
    /// Times at which the rank conditions are checked, `t0` and `t1` included.
    pub samples: Vec<f64>,
    pub family: RFamily,
}

#[derive(Debug, Clone)]
pub struct PartitionSystem {
    pub segments: Vec<PartitionSegment>,
}

impl PartitionSystem {
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out = vec![self.segments[0].t0];
        out.extend(self.segments.iter().map(|s| s.t1));
        out
    }
}

/// `R_k(t) E` for the family at a frame.
fn r_e(family: &RFamily, y: &LagrangianFrame, t: f64, tol: &Tolerances) -> Result<RealMatrix> {
    let n = y.n();
    match family {
        RFamily::ZRotation { alpha } => {
            let (s, c) = alpha.sin_cos();
            let yk = y.normalized(tol)?.into_matrix();
            Ok(canonical_j(n) * &yk * s + yk * c)
        }
        RFamily::Explicit(src) => {
            let m = src.at(t)?;
            if m.shape() != (2 * n, 2 * n) {
                return Err(Error::ShapeMismatch(format!(
                    "R_k must be {0}x{0}",
                    2 * n
                )));
            }
            Ok(m.view((0, n), (2 * n, n)).into_owned())
        }
    }
}

/// `(rank W(R_k E, Y), rank of the upper block of R_k E)` on normalized frames.
fn segment_ranks(
    family: &RFamily,
    y: &LagrangianFrame,
    t: f64,
    tol: &Tolerances,
) -> Result<(usize, usize)> {
    let re = LagrangianFrame::new(r_e(family, y, t, tol)?, tol)?.normalized(tol)?;
    let yn = y.normalized(tol)?;
    let w = wronskian(&re, &yn)?;
    Ok((
        numeric_rank_ref(&w, 1.0, tol),
        numeric_rank_ref(&re.x(), 1.0, tol),
    ))
}

/// Checks the constant-rank conditions; returns the ranks per segment.
pub fn validate_partition(
    path: &SampledLagrangianPath,
    ps: &PartitionSystem,
    tol: &Tolerances,
) -> Result<Vec<(usize, usize)>> {
    let (a, b) = path.interval();
    if ps.segments.is_empty() {
        return Err(Error::InvalidPartition {
            segment: 0,
            reason: "no segments".into(),
        });
    }
    let first = &ps.segments[0];
    let last = &ps.segments[ps.segments.len() - 1];
    if first.t0 != a || last.t1 != b {
        return Err(Error::InvalidPartition {
            segment: 0,
            reason: format!("segments cover [{}, {}], path is on [{a}, {b}]", first.t0, last.t1),
        });
    }
    let mut out = Vec::with_capacity(ps.segments.len());
    for (k, seg) in ps.segments.iter().enumerate() {
        if k > 0 && ps.segments[k - 1].t1 != seg.t0 || seg.t1 <= seg.t0 {
            return Err(Error::InvalidPartition {
                segment: k,
                reason: "segments are not contiguous and increasing".into(),
            });
        }
        if seg.samples.first() != Some(&seg.t0) || seg.samples.last() != Some(&seg.t1) {
            return Err(Error::InvalidPartition {
                segment: k,
                reason: "samples must start at t_k and end at t_(k+1)".into(),
            });
        }
        let mut ranks: Option<(usize, usize)> = None;
        for &t in &seg.samples {
            let y = path.frame_at(t)?;
            let r = segment_ranks(&seg.family, &y, t, tol)?;
            match ranks {
                None => ranks = Some(r),
                Some(r0) if r0.0 != r.0 => {
                    return Err(Error::InvalidPartition {
                        segment: k,
                        reason: format!(
                            "rank W(R_k E, Y) changes from {} to {} at t = {t}",
                            r0.0, r.0
                        ),
                    })
                }
                Some(r0) if r0.1 != r.1 => {
                    return Err(Error::InvalidPartition {
                        segment: k,
                        reason: format!(
                            "rank of the upper block of R_k E changes from {} to {} at t = {t}",
                            r0.1, r.1
                        ),
                    })
                }
                _ => {}
            }
        }
        out.push(ranks.expect("segment has samples"));
    }
    Ok(out)
}

fn partition_sum(
    path: &SampledLagrangianPath,
    ps: &PartitionSystem,
    dual: bool,
    tol: &Tolerances,
) -> Result<OscillationResult> {
    let ranks = validate_partition(path, ps, tol)?;
    let mut total = 0i64;
    for seg in &ps.segments {
        let at = |t: f64| -> Result<(i64, i64)> {
            let y = path.frame_at(t)?;
            let re = LagrangianFrame::new(r_e(&seg.family, &y, t, tol)?, tol)?;
            let ci = comparative_index(&y, &re, tol)?;
            Ok((ci.mu as i64, ci.mu_star as i64))
        };
        let (m0, s0) = at(seg.t0)?;
        let (m1, s1) = at(seg.t1)?;
        total += if dual { s0 - s1 } else { m1 - m0 };
    }
    Ok(OscillationResult {
        value: total,
        route: Route::Partition,
        trace: None,
        diagnostics: Diagnostics {
            nodes: ps.segments.iter().map(|s| s.samples.len()).sum(),
            segments: Some(ps.segments.len()),
            segment_ranks: ranks,
            change_points: Vec::new(),
        },
    })
}

pub fn oscillation_number_partition(
    path: &SampledLagrangianPath,
    ps: &PartitionSystem,
    tol: &Tolerances,
) -> Result<OscillationResult> {
    partition_sum(path, ps, false, tol)
}

pub fn dual_oscillation_number_partition(
    path: &SampledLagrangianPath,
    ps: &PartitionSystem,
    tol: &Tolerances,
) -> Result<OscillationResult> {
    partition_sum(path, ps, true, tol)
}

/// Rotation angles tried for `R_alpha`, coarse ones first.
fn alpha_candidates() -> Vec<f64> {
    let mut out = vec![PI / 2.0, PI / 4.0, 3.0 * PI / 4.0];
    for den in [8u32, 16] {
        for k in (1..den).step_by(2) {
            out.push(PI * k as f64 / den as f64);
        }
    }
    out
}

/// Upper block of `Z_Y R_alpha E` on the normalized frame: `sin a U + cos a X`.
fn rotated_upper(y: &LagrangianFrame, alpha: f64, tol: &Tolerances) -> Result<RealMatrix> {
    let yn = y.normalized(tol)?;
    let (s, c) = alpha.sin_cos();
    Ok(yn.u() * s + yn.x() * c)
}

fn spectral_norm(a: &RealMatrix) -> f64 {
    sorted_singular_values(a).first().copied().unwrap_or(0.0)
}

fn min_singular(a: &RealMatrix) -> f64 {
    sorted_singular_values(a).last().copied().unwrap_or(0.0)
}

/// Builds a partition with `R_k(t) = Z_{Y(t)} R_alpha` per segment, the
/// upper block of `R_k E` kept nonsingular with a margin between samples.
pub fn build_partition(path: &SampledLagrangianPath, tol: &Tolerances) -> Result<PartitionSystem> {
    let (a, b) = path.interval();
    let min_gap = 1e-9 * (b - a).abs().max(f64::MIN_POSITIVE);
    let alphas = alpha_candidates();
    let mut times: Vec<f64> = path.nodes().to_vec();
    let mut frames: Vec<LagrangianFrame> = path.frames().to_vec();
    if times.len() == 1 {
        return Err(Error::ConstructionFailed("path has a single node".into()));
    }
    let pair_ok = |alpha: f64, f0: &LagrangianFrame, f1: &LagrangianFrame| -> Result<bool> {
        let b0 = rotated_upper(f0, alpha, tol)?;
        let b1 = rotated_upper(f1, alpha, tol)?;
        let gap = spectral_norm(&(&b1 - &b0));
        let floor = 1e3 * tol.rank_rtol * f0.n() as f64;
        Ok(min_singular(&b0) > gap.max(floor) && min_singular(&b1) > gap.max(floor))
    };
    let mut segments = Vec::new();
    let mut i0 = 0usize;
    while i0 + 1 < times.len() {
        let mut best: Option<(f64, usize)> = None;
        for &alpha in &alphas {
            let mut j = i0;
            while j + 1 < times.len() && pair_ok(alpha, &frames[j], &frames[j + 1])? {
                j += 1;
            }
            if j > i0 && best.is_none_or(|(_, bj)| j > bj) {
                best = Some((alpha, j));
            }
            if j + 1 == times.len() {
                break;
            }
        }
        match best {
            Some((alpha, j)) => {
                segments.push(PartitionSegment {
                    t0: times[i0],
                    t1: times[j],
                    samples: times[i0..=j].to_vec(),
                    family: RFamily::ZRotation { alpha },
                });
                i0 = j;
            }
            None => {
                let ev = path.evaluator().ok_or_else(|| {
                    Error::ConstructionFailed(format!(
                        "no rotation fits [{}, {}] and the path has no evaluator",
                        times[i0],
                        times[i0 + 1]
                    ))
                })?;
                let tm = 0.5 * (times[i0] + times[i0 + 1]);
                if times[i0 + 1] - times[i0] < min_gap {
                    return Err(Error::ConstructionFailed(format!(
                        "segment [{}, {}] cannot be refined further",
                        times[i0],
                        times[i0 + 1]
                    )));
                }
                let fm = LagrangianFrame::new(ev(tm)?, tol)?;
                times.insert(i0 + 1, tm);
                frames.insert(i0 + 1, fm);
            }
        }
    }
    Ok(PartitionSystem { segments })
}

/// Path-derived wrapper: builds the partition and evaluates both numbers.
pub fn partition_numbers(path: &SampledLagrangianPath, tol: &Tolerances) -> Result<(i64, i64)> {
    let ps = build_partition(path, tol)?;
    Ok((
        oscillation_number_partition(path, &ps, tol)?.value,
        dual_oscillation_number_partition(path, &ps, tol)?.value,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Finite-difference derivative of the path at `t`, with an error estimate
/// from the half-step comparison.
fn derivative(path: &SampledLagrangianPath, idx: usize) -> Result<(RealMatrix, f64)> {
    let nodes = path.nodes();
    let t = nodes[idx];
    let (a, b) = path.interval();
    if let Some(ev) = path.evaluator() {
        let mut h = 1e-4 * (b - a);
        if idx > 0 {
            h = h.min(t - nodes[idx - 1]);
        }
        if idx + 1 < nodes.len() {
            h = h.min(nodes[idx + 1] - t);
        }
        let d = |h: f64| -> Result<RealMatrix> {
            // one-sided at the ends, central inside
            if idx == 0 {
                Ok((ev(t + h)? - ev(t)?) / h)
            } else if idx + 1 == nodes.len() {
                Ok((ev(t)? - ev(t - h)?) / h)
            } else {
                Ok((ev(t + h)? - ev(t - h)?) / (2.0 * h))
            }
        };
        let d1 = d(h)?;
        let d2 = d(0.5 * h)?;
        let err = (&d1 - &d2).amax();
        return Ok((d2, err));
    }
    let y = |i: usize| path.frames()[i].matrix().clone();
    if nodes.len() < 2 {
        return Ok((RealMatrix::zeros(y(0).nrows(), y(0).ncols()), 0.0));
    }
    let (i0, i1) = if idx == 0 {
        (0, 1)
    } else if idx + 1 == nodes.len() {
        (idx - 1, idx)
    } else {
        (idx - 1, idx + 1)
    };
    Ok(((y(i1) - y(i0)) / (nodes[i1] - nodes[i0]), 0.0))
}

/// The form `Y'^T J Y` must be positive semidefinite at every node.
pub fn check_monotone(path: &SampledLagrangianPath, sign: f64, tol: &Tolerances) -> Result<()> {
    let n = path.n();
    let j = canonical_j(n);
    for (i, (&t, y)) in path.nodes().iter().zip(path.frames()).enumerate() {
        let (dy, err) = derivative(path, i)?;
        let f = dy.transpose() * &j * y.matrix() * sign;
        let f = (&f + f.transpose()) * 0.5;
        let scale = dy.amax().max(1.0) * y.matrix().amax().max(1.0);
        let min = crate::matlib::symmetric_eigenvalues(&f)
            .first()
            .copied()
            .unwrap_or(0.0);
        let allow = tol.struct_atol * scale + 4.0 * err * y.matrix().amax().max(1.0) * n as f64;
        if min < -allow {
            return Err(Error::NotMonotone { t, eigenvalue: min });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankChange {
    pub t: f64,
    /// `rank(t-) - rank(t)`
    pub left_drop: usize,
    /// `rank(t+) - rank(t)`
    pub right_rise: usize,
}

type BlockFn<'a> = dyn Fn(f64) -> Result<RealMatrix> + 'a;

fn svals_desc(m: &RealMatrix) -> Vec<f64> {
    sorted_singular_values(m)
}

fn golden_min(f: &dyn Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, xtol: f64) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut best = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    for _ in 0..200 {
        if hi - lo <= xtol {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        }
        if f1 < best.1 {
            best = (x1, f1);
        }
        if f2 < best.1 {
            best = (x2, f2);
        }
    }
    // the bracket ends may hold the minimum when it sits on an endpoint
    for x in [lo, hi] {
        let fx = f(x)?;
        if fx < best.1 {
            best = (x, fx);
        }
    }
    Ok(best.0)
}

/// Locates the points in `[a, b]` where singular values of the block `f(t)`
/// vanish, scanning `grid` (refined through `f` when the values move fast),
/// and reports the one-sided rank changes there.
pub fn locate_rank_changes(
    f: &BlockFn<'_>,
    grid: &[f64],
    can_refine: bool,
    tol: &Tolerances,
) -> Result<Vec<RankChange>> {
    let a = grid[0];
    let b = *grid.last().unwrap();
    let len = b - a;
    let mut ts: Vec<f64> = grid.to_vec();
    let mut sv: Vec<Vec<f64>> = ts.iter().map(|&t| Ok(svals_desc(&f(t)?))).collect::<Result<_>>()?;
    let n = sv[0].len();
    let abs_thr = tol.rank_rtol * n as f64;
    if can_refine {
        let mut i = 0;
        while i + 1 < ts.len() {
            let jump = sv[i]
                .iter()
                .zip(&sv[i + 1])
                .map(|(p, q)| (p - q).abs())
                .fold(0.0, f64::max);
            if jump > 0.05 && ts[i + 1] - ts[i] > 1e-9 * len {
                let tm = 0.5 * (ts[i] + ts[i + 1]);
                ts.insert(i + 1, tm);
                sv.insert(i + 1, svals_desc(&f(tm)?));
            } else {
                i += 1;
            }
        }
    }
    let m = ts.len();
    // candidate brackets: sampled local minima that come close to zero
    let mut brackets: Vec<(usize, f64, f64)> = Vec::new();
    for k in 0..n {
        for i in 0..m {
            let v = sv[i][k];
            let left = if i > 0 { sv[i - 1][k] } else { f64::INFINITY };
            let right = if i + 1 < m { sv[i + 1][k] } else { f64::INFINITY };
            if v > 0.1 || v > left || v > right {
                continue;
            }
            let flat = left.min(v).max(right.min(v)) <= abs_thr
                && (i == 0 || left <= abs_thr)
                && (i + 1 == m || right <= abs_thr);
            if flat && !(i == 0 || i + 1 == m) {
                continue;
            }
            let lo = ts[i.saturating_sub(1)];
            let hi = ts[(i + 1).min(m - 1)];
            brackets.push((k, lo, hi));
        }
    }
    let mut points: Vec<f64> = Vec::new();
    for (k, lo, hi) in brackets {
        let t = if can_refine {
            let g = |t: f64| -> Result<f64> { Ok(svals_desc(&f(t)?)[k]) };
            golden_min(&g, lo, hi, 1e-13 * len.max(1e-300))?
        } else {
            // only the sampled point is available
            let i = ts.iter().position(|&x| x >= lo).unwrap_or(0);
            let j = ts.iter().rposition(|&x| x <= hi).unwrap_or(m - 1);
            (i..=j)
                .min_by(|&p, &q| sv[p][k].total_cmp(&sv[q][k]))
                .map(|p| ts[p])
                .unwrap_or(lo)
        };
        points.push(t);
    }
    points.sort_by(|p, q| p.total_cmp(q));
    points.dedup_by(|p, q| (*p - *q).abs() <= 1e-6 * len);
    let near_end = 1e-9 * len;
    let mut out = Vec::new();
    for t in points {
        let t = if (t - a).abs() <= near_end {
            a
        } else if (b - t).abs() <= near_end {
            b
        } else {
            t
        };
        let s0 = svals_desc(&f(t)?);
        let h = if can_refine {
            let mut h = 1e-5 * len;
            if t > a {
                h = h.min(0.5 * (t - a));
            }
            if t < b {
                h = h.min(0.5 * (b - t));
            }
            Some(h)
        } else {
            None
        };
        let neighbour = |dir: f64| -> Result<Option<Vec<f64>>> {
            if (dir < 0.0 && t <= a) || (dir > 0.0 && t >= b) {
                return Ok(None);
            }
            match h {
                Some(h) => Ok(Some(svals_desc(&f(t + dir * h)?))),
                None => {
                    let i = ts.iter().position(|&x| x == t).unwrap_or(0);
                    let j = if dir < 0.0 { i.checked_sub(1) } else { Some(i + 1).filter(|&j| j < m) };
                    Ok(j.map(|j| sv[j].clone()))
                }
            }
        };
        let count = |side: Option<Vec<f64>>| -> usize {
            side.map_or(0, |s| {
                let vanish_here = s0.iter().filter(|&&x| x <= abs_thr).count();
                let vanish_side = s.iter().filter(|&&x| x <= abs_thr).count();
                // a value counts as vanishing at t when it is tiny next to its neighbour
                let relative = (0..n)
                    .filter(|&k| s[k] > abs_thr && s0[k] < 1e-3 * s[k])
                    .count();
                relative.max(vanish_here.saturating_sub(vanish_side))
            })
        };
        let left_drop = count(neighbour(-1.0)?);
        let right_rise = count(neighbour(1.0)?);
        if left_drop > 0 || right_rise > 0 {
            out.push(RankChange {
                t,
                left_drop,
                right_rise,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankDropReport {
    pub count: i64,
    pub changes: Vec<RankChange>,
}

/// Sums the one-sided rank changes: drops on `(a, b]` for the left side,
/// rises on `[a, b)` for the right side.
pub fn sum_rank_changes(changes: &[RankChange], a: f64, b: f64, side: Side) -> i64 {
    changes
        .iter()
        .map(|c| match side {
            Side::Left if c.t > a => c.left_drop as i64,
            Side::Right if c.t < b => c.right_rise as i64,
            _ => 0,
        })
        .sum()
}

/// Oscillation number (left) or dual (right) of a monotone path from the
/// rank changes of `X(t)`. Needs the evaluator to localize the changes.
pub fn rank_drop_count(
    path: &SampledLagrangianPath,
    side: Side,
    tol: &Tolerances,
) -> Result<RankDropReport> {
    check_monotone(path, 1.0, tol)?;
    // a drop strictly between two nodes is invisible in the node ranks
    if path.evaluator().is_none() {
        return Err(Error::EvaluatorMissing);
    }
    let tol2 = *tol;
    let p = path.clone();
    let f = move |t: f64| -> Result<RealMatrix> { Ok(p.frame_at(t)?.normalized(&tol2)?.x()) };
    let changes = locate_rank_changes(&f, path.nodes(), path.evaluator().is_some(), tol)?;
    let (a, b) = path.interval();
    Ok(RankDropReport {
        count: sum_rank_changes(&changes, a, b, side),
        changes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub name: String,
    pub lhs: i64,
    pub rhs: i64,
    pub holds: bool,
    pub terms: BTreeMap<String, i64>,
}

impl IdentityReport {
    pub fn new(name: &str, lhs: i64, rhs: i64, terms: &[(&str, i64)]) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs == rhs,
            terms: terms.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

/// `N` and `N*` add up over `[a, c]` and `[c, b]`, with `c` the node `split`.
pub fn verify_interval_additivity(
    path: &SampledLagrangianPath,
    split: usize,
    tol: &Tolerances,
) -> Result<Vec<IdentityReport>> {
    let last = path.nodes().len() - 1;
    let (n, ns) = oscillation_numbers(path, tol)?;
    let (n1, ns1) = oscillation_numbers(&path.restrict(0, split)?, tol)?;
    let (n2, ns2) = oscillation_numbers(&path.restrict(split, last)?, tol)?;
    Ok(vec![
        IdentityReport::new("interval additivity", n, n1 + n2, &[("N[a,c]", n1), ("N[c,b]", n2)]),
        IdentityReport::new(
            "interval additivity dual",
            ns,
            ns1 + ns2,
            &[("N*[a,c]", ns1), ("N*[c,b]", ns2)],
        ),
    ])
}

/// `N + rank X(b) = N* + rank X(a)`.
pub fn verify_duality(path: &SampledLagrangianPath, tol: &Tolerances) -> Result<IdentityReport> {
    let (n, ns) = oscillation_numbers(path, tol)?;
    let ra = rank_x(path.first(), tol)? as i64;
    let rb = rank_x(path.last(), tol)? as i64;
    Ok(IdentityReport::new(
        "duality",
        n + rb,
        ns + ra,
        &[("N", n), ("N*", ns), ("rank X(a)", ra), ("rank X(b)", rb)],
    ))
}

/// `Y = Pi diag{Y1, Y2}`: upper block `diag{X1, X2}`, lower `diag{U1, U2}`.
pub fn block_diag_frame(y1: &RealMatrix, y2: &RealMatrix) -> RealMatrix {
    let (n1, n2) = (y1.ncols(), y2.ncols());
    let n = n1 + n2;
    let mut y = RealMatrix::zeros(2 * n, n);
    y.view_mut((0, 0), (n1, n1)).copy_from(&y1.view((0, 0), (n1, n1)));
    y.view_mut((n1, n1), (n2, n2)).copy_from(&y2.view((0, 0), (n2, n2)));
    y.view_mut((n, 0), (n1, n1)).copy_from(&y1.view((n1, 0), (n1, n1)));
    y.view_mut((n + n1, n1), (n2, n2)).copy_from(&y2.view((n2, 0), (n2, n2)));
    y
}

/// The interleaved block-diagonal path on the union of both grids.
pub fn block_diag_path(
    p1: &SampledLagrangianPath,
    p2: &SampledLagrangianPath,
) -> Result<SampledLagrangianPath> {
    let (a1, b1) = p1.interval();
    let (a2, b2) = p2.interval();
    if a1 != a2 || b1 != b2 {
        return Err(Error::InvalidPath("block paths must share the interval".into()));
    }
    let nodes = union_nodes(p1.nodes(), p2.nodes());
    let q1 = p1.resample(&nodes)?;
    let q2 = p2.resample(&nodes)?;
    let frames = q1
        .frames()
        .iter()
        .zip(q2.frames())
        .map(|(f1, f2)| block_diag_frame(f1.matrix(), f2.matrix()))
        .collect();
    let evaluator = match (p1.evaluator().cloned(), p2.evaluator().cloned()) {
        (Some(e1), Some(e2)) => {
            Some(Arc::new(move |t: f64| Ok(block_diag_frame(&e1(t)?, &e2(t)?))) as FrameEvaluator)
        }
        _ => None,
    };
    SampledLagrangianPath::new(nodes, frames, evaluator, p1.tolerances())
}

/// `N(Y) = N(Y1) + N(Y2)` and the dual version.
pub fn verify_block_diag(
    p1: &SampledLagrangianPath,
    p2: &SampledLagrangianPath,
    tol: &Tolerances,
) -> Result<Vec<IdentityReport>> {
    let y = block_diag_path(p1, p2)?;
    let (n, ns) = oscillation_numbers(&y, tol)?;
    let (n1, ns1) = oscillation_numbers(p1, tol)?;
    let (n2, ns2) = oscillation_numbers(p2, tol)?;
    Ok(vec![
        IdentityReport::new("block-diag", n, n1 + n2, &[("N(Y)", n), ("N(Y1)", n1), ("N(Y2)", n2)]),
        IdentityReport::new(
            "block-diag dual",
            ns,
            ns1 + ns2,
            &[("N*(Y)", ns), ("N*(Y1)", ns1), ("N*(Y2)", ns2)],
        ),
    ])
}

/// `t -> S(t) E` along a symplectic path.
pub fn image_of_vertical(s: &SymplecticPath, inverse: bool, tol: &Tolerances) -> Result<SampledLagrangianPath> {
    let pick = move |m: &crate::lagrangian::SymplecticMatrix| {
        if inverse {
            m.inverse().apply_vertical()
        } else {
            m.apply_vertical()
        }
    };
    let frames = s.mats.iter().map(pick).collect();
    let evaluator = s.evaluator.clone().map(|ev| {
        Arc::new(move |t: f64| Ok(pick(&ev(t)?))) as FrameEvaluator
    });
    SampledLagrangianPath::new(s.nodes.clone(), frames, evaluator, tol)
}

/// `N(SE) + N(S^{-1}E) = rank S12(a) - rank S12(b)` and the dual version.
pub fn verify_se_inverse(s: &SymplecticPath, tol: &Tolerances) -> Result<Vec<IdentityReport>> {
    let se = image_of_vertical(s, false, tol)?;
    let si = image_of_vertical(s, true, tol)?;
    let (n1, ns1) = oscillation_numbers(&se, tol)?;
    let (n2, ns2) = oscillation_numbers(&si, tol)?;
    let ra = rank_x(se.first(), tol)? as i64;
    let rb = rank_x(se.last(), tol)? as i64;
    Ok(vec![
        IdentityReport::new(
            "SE and inverse",
            n1 + n2,
            ra - rb,
            &[("N(SE)", n1), ("N(S^-1 E)", n2), ("rank S12(a)", ra), ("rank S12(b)", rb)],
        ),
        IdentityReport::new(
            "SE and inverse dual",
            ns1 + ns2,
            rb - ra,
            &[("N*(SE)", ns1), ("N*(S^-1 E)", ns2), ("rank S12(a)", ra), ("rank S12(b)", rb)],
        ),
    ])
}

fn source_of(s: &SymplecticPath) -> SymplecticSource {
    let s = s.clone();
    SymplecticSource::Function(Arc::new(move |t| Ok(s.at(t)?.into_matrix())))
}

/// `N(S^{-1} Y) = N(Z_{SE}^{-1} Y)` and the dual version.
pub fn verify_transform_invariance(
    path: &SampledLagrangianPath,
    s: &SymplecticPath,
    tol: &Tolerances,
) -> Result<Vec<IdentityReport>> {
    let lhs = transform_path(path, &source_of(s))?;
    let tol2 = *tol;
    let s2 = s.clone();
    let zse = SymplecticSource::Function(Arc::new(move |t| {
        let se = LagrangianFrame::new(s2.at(t)?.apply_vertical(), &tol2)?;
        Ok(z_frame(&se, &tol2)?.into_matrix())
    }));
    let rhs = transform_path(path, &zse)?;
    let (n1, ns1) = oscillation_numbers(&lhs, tol)?;
    let (n2, ns2) = oscillation_numbers(&rhs, tol)?;
    Ok(vec![
        IdentityReport::new("transform invariance", n1, n2, &[("N(S^-1 Y)", n1), ("N(Z_SE^-1 Y)", n2)]),
        IdentityReport::new(
            "transform invariance dual",
            ns1,
            ns2,
            &[("N*(S^-1 Y)", ns1), ("N*(Z_SE^-1 Y)", ns2)],
        ),
    ])
}

/// `N(L Y) = N(Y)` for lower block triangular symplectic `L(t)`, and dual.
pub fn verify_lower_triangular_invariance(
    path: &SampledLagrangianPath,
    l: &SymplecticPath,
    tol: &Tolerances,
) -> Result<Vec<IdentityReport>> {
    for (t, m) in l.nodes.iter().zip(&l.mats) {
        if !crate::lagrangian::is_lower_block_triangular(m, tol) {
            return Err(Error::PreconditionViolated(format!(
                "L is not lower block triangular at t = {t}"
            )));
        }
    }
    let ly = apply_left(path, &source_of(l))?;
    let (n1, ns1) = oscillation_numbers(&ly, tol)?;
    let (n2, ns2) = oscillation_numbers(path, tol)?;
    Ok(vec![
        IdentityReport::new("lower triangular", n1, n2, &[("N(LY)", n1), ("N(Y)", n2)]),
        IdentityReport::new("lower triangular dual", ns1, ns2, &[("N*(LY)", ns1), ("N*(Y)", ns2)]),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{multiply_right, vertical_plane, SymplecticMatrix};

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn col(v: &[f64]) -> RealMatrix {
        RealMatrix::from_column_slice(v.len(), 1, v)
    }

    fn rotation(speed: f64, nodes: usize) -> SampledLagrangianPath {
        let b = 1.5 * PI;
        SampledLagrangianPath::from_fn(
            (0..nodes).map(|k| b * k as f64 / (nodes - 1) as f64).collect(),
            move |t| Ok(col(&[(speed * t).sin(), (speed * t).cos()])),
            &tol(),
        )
        .unwrap()
    }

    #[test]
    fn rotation_numbers_all_routes() {
        let t = tol();
        let p = rotation(1.0, 7);
        assert_eq!(oscillation_number(&p, &t).unwrap().value, 1);
        assert_eq!(dual_oscillation_number(&p, &t).unwrap().value, 2);
        let ps = build_partition(&p, &t).unwrap();
        validate_partition(&p, &ps, &t).unwrap();
        assert_eq!(oscillation_number_partition(&p, &ps, &t).unwrap().value, 1);
        assert_eq!(dual_oscillation_number_partition(&p, &ps, &t).unwrap().value, 2);
        let left = rank_drop_count(&p, Side::Left, &t).unwrap();
        assert_eq!(left.count, 1, "{:?}", left.changes);
        let right = rank_drop_count(&p, Side::Right, &t).unwrap();
        assert_eq!(right.count, 2, "{:?}", right.changes);
    }

    #[test]
    fn constant_path_is_zero() {
        let t = tol();
        let y = LagrangianFrame::new(col(&[0.6, 0.8]), &t).unwrap();
        let p = SampledLagrangianPath::constant(vec![0.0, 1.0, 2.0], &y, &t).unwrap();
        assert_eq!(oscillation_numbers(&p, &t).unwrap(), (0, 0));
        let ps = build_partition(&p, &t).unwrap();
        assert_eq!(ps.segments.len(), 1);
        assert_eq!(partition_numbers(&p, &t).unwrap(), (0, 0));
        assert_eq!(rank_drop_count(&p, Side::Left, &t).unwrap().count, 0);
        assert_eq!(rank_drop_count(&p, Side::Right, &t).unwrap().count, 0);
        let e = SampledLagrangianPath::constant(vec![0.0, 1.0], &vertical_plane(2), &t).unwrap();
        assert_eq!(oscillation_numbers(&e, &t).unwrap(), (0, 0));
        assert_eq!(rank_drop_count(&e, Side::Right, &t).unwrap().count, 0);
        assert!(verify_duality(&e, &t).unwrap().holds);
    }

    #[test]
    fn right_multiplication_invariance() {
        let t = tol();
        let p = rotation(1.0, 9);
        let q = multiply_right(&p, Arc::new(|_| RealMatrix::from_element(1, 1, 5.0))).unwrap();
        assert_eq!(oscillation_numbers(&q, &t).unwrap(), (1, 2));
    }

    #[test]
    fn invalid_partition_rejected() {
        let t = tol();
        let p = rotation(1.0, 9);
        // R = identity: R E = E, W(E, Y) = -X changes rank at t = pi
        let ps = PartitionSystem {
            segments: vec![PartitionSegment {
                t0: 0.0,
                t1: 1.5 * PI,
                samples: p.nodes().to_vec(),
                family: RFamily::Explicit(SymplecticSource::Constant(SymplecticMatrix::identity(1))),
            }],
        };
        assert!(matches!(
            oscillation_number_partition(&p, &ps, &t),
            Err(Error::InvalidPartition { segment: 0, .. })
        ));
    }

    #[test]
    fn duality_and_block_diag() {
        let t = tol();
        let p1 = rotation(1.0, 9);
        let p2 = rotation(2.0, 13);
        let r = verify_duality(&p1, &t).unwrap();
        assert!(r.holds);
        assert_eq!((r.lhs, r.rhs), (2, 2));
        let reps = verify_block_diag(&p1, &p2, &t).unwrap();
        assert!(reps.iter().all(|r| r.holds), "{reps:?}");
        assert_eq!(reps[0].lhs, 4);
        assert_eq!(reps[1].lhs, 5);
        let y = LagrangianFrame::new(col(&[0.6, 0.8]), &t).unwrap();
        let c = SampledLagrangianPath::constant(p1.nodes().to_vec(), &y, &t).unwrap();
        let reps = verify_block_diag(&p1, &c, &t).unwrap();
        assert_eq!((reps[0].lhs, reps[0].rhs), (1, 1));
    }

    #[test]
    fn se_inverse_examples() {
        let t = tol();
        let p = rotation(1.0, 9);
        let z = SymplecticPath::z_of(&p).unwrap();
        let reps = verify_se_inverse(&z, &t).unwrap();
        assert!(reps.iter().all(|r| r.holds), "{reps:?}");
        let s = SymplecticMatrix::rotation(1, 0.3).into_matrix();
        let c = SymplecticPath::from_fn(vec![0.0, 1.0], move |_| Ok(s.clone()), &t).unwrap();
        let reps = verify_se_inverse(&c, &t).unwrap();
        assert!(reps.iter().all(|r| r.holds && r.lhs == 0));
    }

    #[test]
    fn transform_invariance_examples() {
        let t = tol();
        let p = rotation(1.0, 9);
        let s = SymplecticPath::from_fn(
            p.nodes().to_vec(),
            |x| {
                let mut m = RealMatrix::identity(2, 2);
                m[(0, 0)] = 2.0 + x.sin();
                m[(1, 1)] = 1.0 / (2.0 + x.sin());
                m[(0, 1)] = 0.5 * x.cos() * m[(0, 0)];
                Ok(m)
            },
            &t,
        )
        .unwrap();
        let reps = verify_transform_invariance(&p, &s, &t).unwrap();
        assert!(reps.iter().all(|r| r.holds), "{reps:?}");
        let l = SymplecticPath::from_fn(
            p.nodes().to_vec(),
            |x| {
                let mut m = RealMatrix::identity(2, 2);
                m[(0, 0)] = 1.5 + x.cos();
                m[(1, 1)] = 1.0 / (1.5 + x.cos());
                m[(1, 0)] = x.sin();
                Ok(m)
            },
            &t,
        )
        .unwrap();
        let reps = verify_lower_triangular_invariance(&p, &l, &t).unwrap();
        assert!(reps.iter().all(|r| r.holds), "{reps:?}");
    }

    #[test]
    fn interval_additivity() {
        let t = tol();
        let p = rotation(1.0, 13);
        let whole = oscillation_numbers(&p, &t).unwrap();
        for c in 1..12 {
            let l = oscillation_numbers(&p.restrict(0, c).unwrap(), &t).unwrap();
            let r = oscillation_numbers(&p.restrict(c, 12).unwrap(), &t).unwrap();
            assert_eq!((l.0 + r.0, l.1 + r.1), whole);
        }
    }

    #[test]
    fn non_monotone_rejected() {
        let t = tol();
        let p = SampledLagrangianPath::from_fn(
            (0..9).map(|k| k as f64 * 0.5).collect(),
            |s| Ok(col(&[(-s).sin(), (-s).cos()])),
            &t,
        )
        .unwrap();
        assert!(matches!(rank_drop_count(&p, Side::Left, &t), Err(Error::NotMonotone { .. })));
    }
}
