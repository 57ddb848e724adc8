//! Maslov index `Mas(Y, Yhat)` and dual `Mas*(Y, Yhat)` of two Lagrangian
//! paths: by tracking the Lidskii angles of `Z_Y^T Z_Yhat` (the default), and
//! by counting eigenvalues of the unitary `Gamma(t)` on short arcs at `-1`.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::hamgen::mu_pair;
use crate::error::{Error, Result};
use crate::lagrangian::{
    common_grid, vertical_plane, wronskian, z_frame, FrameEvaluator, LagrangianFrame,
    MatrixEvaluator, SampledLagrangianPath, SymplecticMatrix, SymplecticPath, SymplecticSource,
};
use crate::lidskii::{circle_dist, track_angles, ws_matrix, AngleTrace, TrackOptions};
use crate::matlib::{complex_eigenvalues, max_abs, numeric_rank_ref, ComplexMatrix, RealMatrix, Tolerances};
use crate::oscnum::{check_monotone, oscillation_numbers, locate_rank_changes, sum_rank_changes, IdentityReport, RankChange, Side};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaSample {
    pub t: f64,
    #[serde(skip)]
    pub gamma: ComplexMatrix,
    /// Sorted eigen-angles in `[0, 2pi)`.
    pub eigen_angles: Vec<f64>,
}

fn cplx(re: &RealMatrix, im: &RealMatrix, sign: f64) -> ComplexMatrix {
    ComplexMatrix::from_fn(re.nrows(), re.ncols(), |i, j| {
        Complex64::new(re[(i, j)], sign * im[(i, j)])
    })
}

/// `right * left^{-1}`, with a residual check.
fn solve_right(num: &ComplexMatrix, den: &ComplexMatrix, tol: &Tolerances, what: &str) -> Result<ComplexMatrix> {
    // num den^{-1} = (den^H \ num^H)^H
    let dh = den.adjoint();
    let x = dh
        .clone()
        .lu()
        .solve(&num.adjoint())
        .ok_or_else(|| Error::IllConditioned(format!("{what} is singular")))?
        .adjoint();
    let res = max_abs(&(&x * den - num)) / max_abs(num).max(1.0);
    if !res.is_finite() || res > tol.struct_atol {
        return Err(Error::IllConditioned(format!("{what} inversion residual {res:.3e}")));
    }
    Ok(x)
}

/// `Gamma = -[X + iU][X - iU]^{-1} [Xh - iUh][Xh + iUh]^{-1}`, on the
/// normalized frames (it does not depend on right factors).
pub fn gamma_matrix(y: &LagrangianFrame, yhat: &LagrangianFrame, tol: &Tolerances) -> Result<ComplexMatrix> {
    if y.n() != yhat.n() {
        return Err(Error::ShapeMismatch(format!("frames of dimension {} and {}", y.n(), yhat.n())));
    }
    let y = y.normalized(tol)?;
    let yh = yhat.normalized(tol)?;
    let (x, u, xh, uh) = (y.x(), y.u(), yh.x(), yh.u());
    let first = solve_right(&cplx(&x, &u, 1.0), &cplx(&x, &u, -1.0), tol, "X - iU")?;
    let second = solve_right(&cplx(&xh, &uh, -1.0), &cplx(&xh, &uh, 1.0), tol, "Xh + iUh")?;
    Ok(-(first * second))
}

/// Eigen-angles of `Gamma` shifted by `pi`, so that `-1` sits at 0. As many
/// angles as the defect of `W(Y, Yhat)` are snapped to exactly 0.
fn shifted_angles(gamma: &ComplexMatrix, y: &LagrangianFrame, yhat: &LagrangianFrame, tol: &Tolerances) -> Result<(Vec<f64>, usize)> {
    let mut psi: Vec<f64> = complex_eigenvalues(gamma)?
        .into_iter()
        .map(|z| (z.arg() - PI).rem_euclid(TAU))
        .map(|p| if p >= TAU { 0.0 } else { p })
        .collect();
    let w = wronskian(&y.normalized(tol)?, &yhat.normalized(tol)?)?;
    let k = y.n() - numeric_rank_ref(&w, 1.0, tol);
    let mut order: Vec<usize> = (0..psi.len()).collect();
    order.sort_by(|&i, &j| circle_dist(psi[i], 0.0).total_cmp(&circle_dist(psi[j], 0.0)));
    for &i in order.iter().take(k) {
        psi[i] = 0.0;
    }
    psi.sort_by(|a, b| a.total_cmp(b));
    Ok((psi, k))
}

pub fn gamma_sample(t: f64, y: &LagrangianFrame, yhat: &LagrangianFrame, tol: &Tolerances) -> Result<GammaSample> {
    let gamma = gamma_matrix(y, yhat, tol)?;
    let mut eigen_angles: Vec<f64> = complex_eigenvalues(&gamma)?
        .into_iter()
        .map(|z| z.arg().rem_euclid(TAU))
        .map(|p| if p >= TAU { 0.0 } else { p })
        .collect();
    eigen_angles.sort_by(|a, b| a.total_cmp(b));
    Ok(GammaSample { t, gamma, eigen_angles })
}

/// Best cyclic matching of two sorted angle lists on the circle: returns the
/// shift and the largest matched distance.
fn cyclic_match(a: &[f64], b: &[f64]) -> (usize, f64) {
    let n = a.len();
    (0..n)
        .map(|s| {
            let d = (0..n).map(|j| circle_dist(a[j], b[(j + s) % n])).fold(0.0, f64::max);
            (s, d)
        })
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .unwrap_or((0, 0.0))
}

/// Largest distance between the eigen-angle multisets of `Gamma(t)` and
/// `-W_S(t)`, `S = Z_Y^T Z_Yhat`.
pub fn similarity_defect(y: &LagrangianFrame, yhat: &LagrangianFrame, tol: &Tolerances) -> Result<f64> {
    let g = gamma_sample(0.0, y, yhat, tol)?;
    let s = z_frame(y, tol)?.inverse().mul(&z_frame(yhat, tol)?);
    let w = ws_matrix(&s, tol)?;
    let mut neg: Vec<f64> = complex_eigenvalues(&w)?
        .into_iter()
        .map(|z| (-z).arg().rem_euclid(TAU))
        .collect();
    neg.sort_by(|a, b| a.total_cmp(b));
    Ok(cyclic_match(&g.eigen_angles, &neg).1)
}

/// `(Mas, Mas*)` with the shared trace of `Z_Y^T Z_Yhat`.
pub fn maslov_trace(
    y: &SampledLagrangianPath,
    yhat: &SampledLagrangianPath,
    tol: &Tolerances,
) -> Result<AngleTrace> {
    track_angles(&SymplecticPath::relative_z(y, yhat)?, &TrackOptions::default(), tol)
}

pub fn maslov_indices(
    y: &SampledLagrangianPath,
    yhat: &SampledLagrangianPath,
    tol: &Tolerances,
) -> Result<(i64, i64)> {
    let tr = maslov_trace(y, yhat, tol)?;
    Ok((tr.q_change(), tr.q_star_change()))
}

pub fn maslov_index(y: &SampledLagrangianPath, yhat: &SampledLagrangianPath, tol: &Tolerances) -> Result<i64> {
    Ok(maslov_trace(y, yhat, tol)?.q_change())
}

pub fn dual_maslov_index(y: &SampledLagrangianPath, yhat: &SampledLagrangianPath, tol: &Tolerances) -> Result<i64> {
    Ok(maslov_trace(y, yhat, tol)?.q_star_change())
}

/// The transformed path `t -> Z_{Y(t)}^{-1} Yhat(t)` on the common grid.
pub fn relative_path(
    y: &SampledLagrangianPath,
    yhat: &SampledLagrangianPath,
) -> Result<SampledLagrangianPath> {
    let (y, yhat) = common_grid(y, yhat)?;
    let tol = *y.tolerances();
    let frames = y
        .frames()
        .iter()
        .zip(yhat.frames())
        .map(|(a, b)| Ok(z_frame(a, &tol)?.matrix().transpose() * b.matrix()))
        .collect::<Result<Vec<_>>>()?;
    let evaluator = match (y.evaluator().cloned(), yhat.evaluator().cloned()) {
        (Some(ea), Some(eb)) => Some(Arc::new(move |t: f64| {
            let a = LagrangianFrame::new(ea(t)?, &tol)?;
            Ok(z_frame(&a, &tol)?.matrix().transpose() * eb(t)?)
        }) as FrameEvaluator),
        _ => None,
    };
    SampledLagrangianPath::new(y.nodes().to_vec(), frames, evaluator, &tol)
}

/// The constant vertical path on the grid of `like`.
pub fn vertical_path(like: &SampledLagrangianPath) -> Result<SampledLagrangianPath> {
    let n = like.n();
    let e = vertical_plane(n);
    let m = e.matrix().clone();
    SampledLagrangianPath::new(
        like.nodes().to_vec(),
        vec![m.clone(); like.nodes().len()],
        Some(Arc::new(move |_| Ok(m.clone())) as FrameEvaluator),
        like.tolerances(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossingReport {
    pub mas: i64,
    pub mas_star: i64,
    /// Partition points `t_0 < ... < t_p`.
    pub breakpoints: Vec<f64>,
    pub eps: Vec<f64>,
    /// Some count included an eigenvalue snapped onto `-1`.
    pub snapping_decided: bool,
}

struct Sample {
    t: f64,
    psi: Vec<f64>,
    snapped: usize,
}

fn sample_at(
    t: f64,
    y: &LagrangianFrame,
    yhat: &LagrangianFrame,
    tol: &Tolerances,
) -> Result<Sample> {
    let g = gamma_matrix(y, yhat, tol)?;
    let (psi, snapped) = shifted_angles(&g, y, yhat, tol)?;
    Ok(Sample { t, psi, snapped })
}

fn ell(psi: &[f64], eps: f64) -> i64 {
    psi.iter().filter(|&&p| p < eps).count() as i64
}

fn ell_star(psi: &[f64], eps: f64) -> i64 {
    psi.iter().filter(|&&p| p == 0.0 || p > TAU - eps).count() as i64
}

/// Swept arcs per eigenvalue, unwrapped around the start sample.
fn swept_arcs(chain: &[&[f64]]) -> Vec<(f64, f64)> {
    let n = chain[0].len();
    let mut arcs: Vec<(f64, f64)> = chain[0].iter().map(|&p| (p, p)).collect();
    let mut cur: Vec<f64> = chain[0].to_vec();
    let mut pos: Vec<usize> = (0..n).collect();
    for w in chain.windows(2) {
        let (s, _) = cyclic_match(w[0], w[1]);
        for j in 0..n {
            let from = w[0][pos[j]];
            let to_idx = (pos[j] + s) % n;
            let to = w[1][to_idx];
            let mut d = (to - from).rem_euclid(TAU);
            if d > PI {
                d -= TAU;
            }
            cur[j] += d;
            arcs[j].0 = arcs[j].0.min(cur[j]);
            arcs[j].1 = arcs[j].1.max(cur[j]);
            pos[j] = to_idx;
        }
    }
    arcs
}

/// Distance from the point `x` (mod 2pi) to the arc `[lo, hi]`.
fn dist_to_arc(x: f64, lo: f64, hi: f64) -> f64 {
    if hi - lo >= TAU {
        return 0.0;
    }
    let r = (x - lo).rem_euclid(TAU);
    if r <= hi - lo {
        0.0
    } else {
        (r - (hi - lo)).min(TAU - r)
    }
}

fn clearance(eps: f64, arcs: &[(f64, f64)]) -> f64 {
    arcs.iter()
        .flat_map(|&(lo, hi)| [dist_to_arc(eps, lo, hi), dist_to_arc(-eps, lo, hi)])
        .fold(f64::INFINITY, f64::min)
}

/// Picks `eps` for a segment: half the smallest distance of the unsnapped
/// sampled angles to `-1`, unless that point is swept; then the clearest
/// point of a fine grid on `(0, pi)`.
fn choose_eps(samples: &[&Sample], arcs: &[(f64, f64)], tol: &Tolerances) -> Option<f64> {
    let floor = 10.0 * tol.angle_atol;
    let delta = samples
        .iter()
        .flat_map(|s| s.psi.iter())
        .filter(|&&p| p != 0.0)
        .map(|&p| circle_dist(p, 0.0))
        .fold(PI, f64::min);
    let first = (0.5 * delta).max(floor);
    if first < PI && clearance(first, arcs) > floor {
        return Some(first);
    }
    (1..512)
        .map(|k| PI * k as f64 / 512.0)
        .map(|e| (e, clearance(e, arcs)))
        .filter(|&(_, c)| c > floor)
        .max_by(|p, q| p.1.total_cmp(&q.1))
        .map(|(e, _)| e)
}

/// Maslov index from its crossing-arc definition.
pub fn maslov_crossing_oracle(
    y: &SampledLagrangianPath,
    yhat: &SampledLagrangianPath,
    tol: &Tolerances,
) -> Result<CrossingReport> {
    let (y, yhat) = common_grid(y, yhat)?;
    let n = y.n();
    let bound = 0.5 * (PI / 2.0).min(PI / n as f64);
    let ev = match (y.evaluator().cloned(), yhat.evaluator().cloned()) {
        (Some(a), Some(b)) => Some((a, b)),
        _ => None,
    };
    let tol2 = *tol;
    let eval = |t: f64| -> Result<Sample> {
        let (ea, eb) = ev.as_ref().ok_or(Error::EvaluatorMissing)?;
        sample_at(
            t,
            &LagrangianFrame::new(ea(t)?, &tol2)?,
            &LagrangianFrame::new(eb(t)?, &tol2)?,
            &tol2,
        )
    };
    let mut stack: Vec<Sample> = y
        .frames()
        .iter()
        .zip(yhat.frames())
        .zip(y.nodes())
        .rev()
        .map(|((a, b), &t)| sample_at(t, a, b, tol))
        .collect::<Result<_>>()?;
    let mut report = CrossingReport {
        mas: 0,
        mas_star: 0,
        breakpoints: Vec::new(),
        eps: Vec::new(),
        snapping_decided: false,
    };
    let len = y.interval().1 - y.interval().0;
    let mut left = stack.pop().expect("path has nodes");
    report.breakpoints.push(left.t);
    while let Some(right) = stack.pop() {
        let direct = cyclic_match(&left.psi, &right.psi).1;
        let mid = if ev.is_some() {
            Some(eval(0.5 * (left.t + right.t))?)
        } else {
            None
        };
        let mut ok = direct <= bound;
        let arcs = if let Some(m) = &mid {
            ok &= cyclic_match(&left.psi, &m.psi).1 <= bound && cyclic_match(&m.psi, &right.psi).1 <= bound;
            // the total transport through the midpoint must match the direct step
            let via = transport(&[&left.psi, &m.psi, &right.psi]);
            ok &= (via - transport(&[&left.psi, &right.psi])).abs() < 1e-6;
            swept_arcs(&[&left.psi, &m.psi, &right.psi])
        } else {
            swept_arcs(&[&left.psi, &right.psi])
        };
        let samples: Vec<&Sample> = match &mid {
            Some(m) => vec![&left, m, &right],
            None => vec![&left, &right],
        };
        let eps = if ok { choose_eps(&samples, &arcs, tol) } else { None };
        match eps {
            Some(e) => {
                report.mas += ell(&right.psi, e) - ell(&left.psi, e);
                report.mas_star += ell_star(&left.psi, e) - ell_star(&right.psi, e);
                report.snapping_decided |= left.snapped > 0 || right.snapped > 0;
                report.eps.push(e);
                report.breakpoints.push(right.t);
                left = right;
            }
            None => {
                let m = match mid {
                    Some(m) if right.t - left.t > 1e-12 * len => m,
                    _ => {
                        return Err(Error::PartitionNotFound { t0: left.t, t1: right.t });
                    }
                };
                stack.push(right);
                stack.push(m);
            }
        }
    }
    Ok(report)
}

/// Total unwrapped displacement along a chain of samples.
fn transport(chain: &[&[f64]]) -> f64 {
    let mut total = 0.0;
    for w in chain.windows(2) {
        let n = w[0].len();
        let (s, _) = cyclic_match(w[0], w[1]);
        for j in 0..n {
            let mut d = (w[1][(j + s) % n] - w[0][j]).rem_euclid(TAU);
            if d > PI {
                d -= TAU;
            }
            total += d;
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneMaslovReport {
    pub mas: i64,
    pub mas_star: i64,
    pub changes: Vec<RankChange>,
    pub mas_angles: i64,
    pub mas_star_angles: i64,
    pub agrees: bool,
}

/// Maslov indices of a monotone pair from the rank changes of `W(Y, Yhat)`.
/// `Z(t) E = Y(t) P(t)` is checked at the nodes, and `Z^{-1} Yhat` must be
/// monotone.
pub fn monotone_maslov(
    y: &SampledLagrangianPath,
    yhat: &SampledLagrangianPath,
    z: &SymplecticSource,
    p: &MatrixEvaluator,
    tol: &Tolerances,
) -> Result<MonotoneMaslovReport> {
    let (yc, yhc) = common_grid(y, yhat)?;
    let n = yc.n();
    for (&t, f) in yc.nodes().iter().zip(yc.frames()) {
        let zt = SymplecticMatrix::new(z.at(t)?, tol)?;
        let pt = p(t)?;
        let ze = zt.apply_vertical();
        let yp = f.matrix() * pt;
        let residual = (&ze - &yp).amax();
        if residual > tol.struct_atol * ze.amax().max(yp.amax()).max(1.0) {
            return Err(Error::FrameMismatch { t, residual });
        }
    }
    let bar = crate::lagrangian::transform_path(&yhc, z)?;
    check_monotone(&bar, 1.0, tol)?;
    let tol2 = *tol;
    let (ya, yb) = (yc.clone(), yhc.clone());
    let f = move |t: f64| -> Result<RealMatrix> {
        wronskian(&ya.frame_at(t)?.normalized(&tol2)?, &yb.frame_at(t)?.normalized(&tol2)?)
    };
    let can_refine = yc.evaluator().is_some() && yhc.evaluator().is_some();
    let changes = locate_rank_changes(&f, yc.nodes(), can_refine, tol)?;
    let (a, b) = yc.interval();
    let mas = sum_rank_changes(&changes, a, b, Side::Left);
    let mas_star = sum_rank_changes(&changes, a, b, Side::Right);
    let (ma, msa) = maslov_indices(&yc, &yhc, tol)?;
    debug_assert_eq!(n, yhc.n());
    Ok(MonotoneMaslovReport {
        mas,
        mas_star,
        changes,
        mas_angles: ma,
        mas_star_angles: msa,
        agrees: mas == ma && mas_star == msa,
    })
}

/// `monotone_maslov` with `Z = Z_Y` and `P = K_Y`.
pub fn monotone_maslov_canonical(
    y: &SampledLagrangianPath,
    yhat: &SampledLagrangianPath,
    tol: &Tolerances,
) -> Result<MonotoneMaslovReport> {
    let tol2 = *tol;
    let (y1, y2) = (y.clone(), y.clone());
    let z = SymplecticSource::Function(Arc::new(move |t| {
        Ok(z_frame(&y1.frame_at(t)?, &tol2)?.into_matrix())
    }));
    let p: MatrixEvaluator = Arc::new(move |t| y2.frame_at(t)?.normalizer(&tol2));
    monotone_maslov(y, yhat, &z, &p, tol)
}

/// `Mas(Y, Yh) = Mas(E, Yh) - Mas(E, Y) + mu(Yh(a), Y(a)) - mu(Yh(b), Y(b))`
/// and the dual version with `mu*` and the endpoints swapped.
pub fn verify_maslov_comparison(
    y: &SampledLagrangianPath,
    yhat: &SampledLagrangianPath,
    tol: &Tolerances,
) -> Result<Vec<IdentityReport>> {
    let (y, yhat) = common_grid(y, yhat)?;
    let e = vertical_path(&y)?;
    let (m, ms) = maslov_indices(&y, &yhat, tol)?;
    let (me_h, mes_h) = maslov_indices(&e, &yhat, tol)?;
    let (me_y, mes_y) = maslov_indices(&e, &y, tol)?;
    let (mu_a, mus_a) = mu_pair(yhat.first(), y.first(), tol)?;
    let (mu_b, mus_b) = mu_pair(yhat.last(), y.last(), tol)?;
    Ok(vec![
        IdentityReport::new(
            "maslov comparison",
            m,
            me_h - me_y + mu_a - mu_b,
            &[("Mas(Y,Yh)", m), ("Mas(E,Yh)", me_h), ("Mas(E,Y)", me_y), ("mu(a)", mu_a), ("mu(b)", mu_b)],
        ),
        IdentityReport::new(
            "maslov comparison dual",
            ms,
            mes_h - mes_y + mus_b - mus_a,
            &[
                ("Mas*(Y,Yh)", ms),
                ("Mas*(E,Yh)", mes_h),
                ("Mas*(E,Y)", mes_y),
                ("mu*(a)", mus_a),
                ("mu*(b)", mus_b),
            ],
        ),
    ])
}

/// Flipping `Mas*(Y, Yh) = -Mas(Yh, Y)` and the rank identity
/// `Mas* - Mas = rank W(b) - rank W(a)`.
pub fn verify_maslov_identities(
    y: &SampledLagrangianPath,
    yhat: &SampledLagrangianPath,
    tol: &Tolerances,
) -> Result<Vec<IdentityReport>> {
    let (y, yhat) = common_grid(y, yhat)?;
    let (m, ms) = maslov_indices(&y, &yhat, tol)?;
    let (m_rev, _) = maslov_indices(&yhat, &y, tol)?;
    let rank_w = |a: &LagrangianFrame, b: &LagrangianFrame| -> Result<i64> {
        let w = wronskian(&a.normalized(tol)?, &b.normalized(tol)?)?;
        Ok(numeric_rank_ref(&w, 1.0, tol) as i64)
    };
    let wa = rank_w(y.first(), yhat.first())?;
    let wb = rank_w(y.last(), yhat.last())?;
    let (n_t, ns_t) = oscillation_numbers(&relative_path(&y, &yhat)?, tol)?;
    Ok(vec![
        IdentityReport::new("flipping", ms, -m_rev, &[("Mas*(Y,Yh)", ms), ("Mas(Yh,Y)", m_rev)]),
        IdentityReport::new(
            "rank difference",
            ms - m,
            wb - wa,
            &[("Mas*", ms), ("Mas", m), ("rank W(b)", wb), ("rank W(a)", wa)],
        ),
        IdentityReport::new("transformed path", m, n_t, &[("Mas", m), ("N(Z_Y^-1 Yh)", n_t)]),
        IdentityReport::new("transformed path dual", ms, ns_t, &[("Mas*", ms), ("N*(Z_Y^-1 Yh)", ns_t)]),
    ])
}

/// Maslov angle route against the crossing oracle.
pub fn verify_crossing_agreement(
    y: &SampledLagrangianPath,
    yhat: &SampledLagrangianPath,
    tol: &Tolerances,
) -> Result<Vec<IdentityReport>> {
    let (m, ms) = maslov_indices(y, yhat, tol)?;
    let c = maslov_crossing_oracle(y, yhat, tol)?;
    Ok(vec![
        IdentityReport::new("crossing oracle", m, c.mas, &[("angles", m), ("crossings", c.mas)]),
        IdentityReport::new(
            "crossing oracle dual",
            ms,
            c.mas_star,
            &[("angles", ms), ("crossings", c.mas_star)],
        ),
    ])
}

/// Comparison theorem: `N(Y) - N(Yh) = mu(Y(b), Yh(b)) - mu(Y(a), Yh(a)) +
/// N(Z_Yh^{-1} Y)`, and the dual with `mu*` and the endpoints swapped.
pub fn verify_comparison(
    y: &SampledLagrangianPath,
    yhat: &SampledLagrangianPath,
    tol: &Tolerances,
) -> Result<Vec<IdentityReport>> {
    let (y, yhat) = common_grid(y, yhat)?;
    let (n, ns) = oscillation_numbers(&y, tol)?;
    let (nh, nsh) = oscillation_numbers(&yhat, tol)?;
    let (nt, nst) = oscillation_numbers(&relative_path(&yhat, &y)?, tol)?;
    let (mu_a, mus_a) = mu_pair(y.first(), yhat.first(), tol)?;
    let (mu_b, mus_b) = mu_pair(y.last(), yhat.last(), tol)?;
    Ok(vec![
        IdentityReport::new(
            "comparison",
            n - nh,
            mu_b - mu_a + nt,
            &[("N(Y)", n), ("N(Yh)", nh), ("mu(a)", mu_a), ("mu(b)", mu_b), ("N(Z_Yh^-1 Y)", nt)],
        ),
        IdentityReport::new(
            "comparison dual",
            ns - nsh,
            mus_a - mus_b + nst,
            &[("N*(Y)", ns), ("N*(Yh)", nsh), ("mu*(a)", mus_a), ("mu*(b)", mus_b), ("N*(Z_Yh^-1 Y)", nst)],
        ),
    ])
}

/// Separation identities for two members of one family `F(Phi)`.
pub fn verify_separation(
    y: &SampledLagrangianPath,
    yhat: &SampledLagrangianPath,
    tol: &Tolerances,
) -> Result<Vec<IdentityReport>> {
    let (y, yhat) = common_grid(y, yhat)?;
    let (n, ns) = oscillation_numbers(&y, tol)?;
    let (nh, nsh) = oscillation_numbers(&yhat, tol)?;
    let (mu_a, mus_a) = mu_pair(y.first(), yhat.first(), tol)?;
    let (mu_b, mus_b) = mu_pair(y.last(), yhat.last(), tol)?;
    Ok(vec![
        IdentityReport::new(
            "separation",
            n - nh,
            mu_b - mu_a,
            &[("N(Y)", n), ("N(Yh)", nh), ("mu(a)", mu_a), ("mu(b)", mu_b)],
        ),
        IdentityReport::new(
            "separation dual",
            ns - nsh,
            mus_a - mus_b,
            &[("N*(Y)", ns), ("N*(Yh)", nsh), ("mu*(a)", mus_a), ("mu*(b)", mus_b)],
        ),
    ])
}

/// Principal-path equalities and the estimates for a member `Y`:
/// `N(Y_a) = N*(Y_b)`, `N(Y_b) = N*(Y_a)`, `N(Y_b) - N(Y_a) = rank W(Y_a, Y_b)`,
/// `N(Y_a) <= N(Y) <= N(Y_b)` and `N*(Y_b) <= N*(Y) <= N*(Y_a)`.
pub fn verify_principal(
    ya: &SampledLagrangianPath,
    yb: &SampledLagrangianPath,
    member: Option<&SampledLagrangianPath>,
    tol: &Tolerances,
) -> Result<Vec<IdentityReport>> {
    let (na, nsa) = oscillation_numbers(ya, tol)?;
    let (nb, nsb) = oscillation_numbers(yb, tol)?;
    let w = wronskian(&ya.first().normalized(tol)?, &yb.first().normalized(tol)?)?;
    let rw = numeric_rank_ref(&w, 1.0, tol) as i64;
    let mut out = vec![
        IdentityReport::new("N(Ya) = N*(Yb)", na, nsb, &[]),
        IdentityReport::new("N(Yb) = N*(Ya)", nb, nsa, &[]),
        IdentityReport::new("N(Yb) - N(Ya) = rank W", nb - na, rw, &[("N(Yb)", nb), ("N(Ya)", na)]),
    ];
    if let Some(y) = member {
        let (n, ns) = oscillation_numbers(y, tol)?;
        let inside = |lo: i64, v: i64, hi: i64| if lo <= v && v <= hi { v } else { lo - 1 };
        out.push(IdentityReport::new("estimate", inside(na, n, nb), n, &[("N(Ya)", na), ("N(Yb)", nb)]));
        out.push(IdentityReport::new(
            "estimate dual",
            inside(nsb, ns, nsa),
            ns,
            &[("N*(Yb)", nsb), ("N*(Ya)", nsa)],
        ));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

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

    fn frame(v: &[f64]) -> LagrangianFrame {
        LagrangianFrame::new(col(v), &tol()).unwrap()
    }

    #[test]
    fn gamma_examples() {
        let t = tol();
        let y = frame(&[0.3, 0.7]);
        let g = gamma_matrix(&y, &y, &t).unwrap();
        assert!((g[(0, 0)] + Complex64::new(1.0, 0.0)).norm() < 1e-12);
        let e = vertical_plane(1);
        for s in [0.0, 0.4, 2.0, 4.0] {
            let g = gamma_matrix(&e, &frame(&[f64::sin(s), f64::cos(s)]), &t).unwrap();
            let want = -Complex64::from_polar(1.0, 2.0 * s);
            assert!((g[(0, 0)] - want).norm() < 1e-12, "s = {s}");
        }
    }

    #[test]
    fn gamma_unitary_and_similar() {
        let t = tol();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..5 {
            for _ in 0..40 {
                let mk = |rng: &mut ChaCha8Rng| {
                    let a = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                    let s = &a + a.transpose();
                    let q = z_frame(
                        &LagrangianFrame::from_blocks(&RealMatrix::identity(n, n), &s, &t).unwrap(),
                        &t,
                    )
                    .unwrap();
                    let b = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
                    let s2 = &b + b.transpose();
                    let f = LagrangianFrame::from_blocks(&s2, &RealMatrix::identity(n, n), &t).unwrap();
                    LagrangianFrame::new(q.matrix() * f.matrix(), &t).unwrap()
                };
                let y = mk(&mut rng);
                let yh = mk(&mut rng);
                let g = gamma_matrix(&y, &yh, &t).unwrap();
                let id = ComplexMatrix::identity(n, n);
                assert!(max_abs(&(&g * g.adjoint() - id)) < 1e-9);
                assert!(similarity_defect(&y, &yh, &t).unwrap() < 10.0 * t.angle_atol);
            }
        }
    }

    #[test]
    fn rotation_against_vertical() {
        let t = tol();
        let p = rotation(1.0, 9);
        let e = vertical_path(&p).unwrap();
        assert_eq!(maslov_indices(&e, &p, &t).unwrap(), (1, 2));
        assert_eq!(maslov_indices(&e, &p, &t).unwrap(), oscillation_numbers(&p, &t).unwrap());
        let c = maslov_crossing_oracle(&e, &p, &t).unwrap();
        assert_eq!((c.mas, c.mas_star), (1, 2), "{c:?}");
        assert!(c.snapping_decided);
        assert_eq!(maslov_indices(&p, &p, &t).unwrap(), (0, 0));
        let c = maslov_crossing_oracle(&p, &p, &t).unwrap();
        assert_eq!((c.mas, c.mas_star), (0, 0));
    }

    #[test]
    fn right_multipliers_do_not_matter() {
        let t = tol();
        let p = rotation(1.0, 9);
        let q = crate::lagrangian::multiply_right(&p, Arc::new(|s| col(&[2.0 + s.sin()]))).unwrap();
        let e = vertical_path(&p).unwrap();
        let e2 = crate::lagrangian::multiply_right(&e, Arc::new(|_| col(&[3.0]))).unwrap();
        assert_eq!(maslov_indices(&e2, &q, &t).unwrap(), (1, 2));
    }

    #[test]
    fn identities_on_rotation_pairs() {
        let t = tol();
        let p1 = rotation(1.0, 9);
        let p2 = rotation(2.0, 17);
        for (a, b) in [(&p1, &p2), (&p2, &p1), (&p1, &p1)] {
            let mut reps = verify_maslov_identities(a, b, &t).unwrap();
            reps.extend(verify_maslov_comparison(a, b, &t).unwrap());
            reps.extend(verify_crossing_agreement(a, b, &t).unwrap());
            assert!(reps.iter().all(|r| r.holds), "{reps:#?}");
        }
    }

    #[test]
    fn monotone_examples() {
        let t = tol();
        let p = rotation(1.0, 9);
        let e = vertical_path(&p).unwrap();
        let id = SymplecticSource::Constant(SymplecticMatrix::identity(1));
        let pe: MatrixEvaluator = Arc::new(|_| Ok(RealMatrix::identity(1, 1)));
        let r = monotone_maslov(&e, &p, &id, &pe, &t).unwrap();
        assert_eq!((r.mas, r.mas_star), (1, 2), "{r:?}");
        assert!(r.agrees);
        let r = monotone_maslov(&e, &e, &id, &pe, &t).unwrap();
        assert_eq!((r.mas, r.mas_star), (0, 0));
        let r = monotone_maslov_canonical(&e, &p, &t).unwrap();
        assert!(r.agrees && r.mas == 1);
        let bad: MatrixEvaluator = Arc::new(|_| Ok(RealMatrix::identity(1, 1) * 2.0));
        assert!(matches!(monotone_maslov(&e, &p, &id, &bad, &t), Err(Error::FrameMismatch { .. })));
    }
}
