//! Randomized property suites. Every trial draws from its own ChaCha stream
//! of the suite seed, so a trial can be replayed alone and reports do not
//! depend on the thread count.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::compidx::{
    check_prop_duality, check_prop_lower_triangular, check_prop_right_mult, comparative_index,
};
use crate::error::{Error, Result};
use crate::hamgen::{
    admissible_rectangle, integrate_conjoined_basis, integrate_from, prescribed_oscillation_path_at,
    principal_paths, random_hamiltonian, random_lagrangian_plane, random_symmetric, Endpoint,
    HamiltonianSpec, PhiFamily,
};
use crate::lagrangian::{common_grid, z_frame, LagrangianFrame, SampledLagrangianPath, SymplecticMatrix};
use crate::lidskii::mu_via_lidskii;
use crate::maslov::{
    maslov_crossing_oracle, maslov_indices, monotone_maslov_canonical, similarity_defect,
    verify_comparison, verify_crossing_agreement, verify_maslov_comparison,
    verify_maslov_identities, verify_principal, verify_separation, vertical_path,
};
use crate::matlib::{RealMatrix, Tolerances};
use crate::oscnum::{
    check_monotone, oscillation_numbers, partition_numbers, rank_drop_count, verify_block_diag,
    verify_duality, verify_interval_additivity, IdentityReport, Side,
};

/// Suite names accepted by [`run_suite`].
pub const SUITES: &[&str] = &[
    "compidx-props",
    "duality",
    "routes",
    "maslov-identities",
    "separation",
    "comparison",
    "distribution",
    "monotone",
    "similarity",
    "additivity",
    "grid",
];

#[derive(Debug, Clone)]
pub struct SuiteConfig {
    pub trials: usize,
    pub seed: u64,
    /// Fixed dimension; otherwise drawn from `1..=n_max`.
    pub n: Option<usize>,
    pub n_max: Option<usize>,
    /// Run only this trial index.
    pub only_trial: Option<usize>,
    pub threads: usize,
    pub tol: Tolerances,
}

impl SuiteConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            n: None,
            n_max: None,
            only_trial: None,
            threads: std::thread::available_parallelism().map_or(1, |p| p.get()),
            tol: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FailureDump {
    pub trial: usize,
    pub n: usize,
    pub error: Option<String>,
    /// Identities that did not hold.
    pub reports: Vec<IdentityReport>,
    /// Generator output needed to rebuild the instance.
    pub instance: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub trials: usize,
    pub seed: u64,
    /// Identities checked over all trials.
    pub checks: usize,
    pub stats: BTreeMap<String, i64>,
    pub failures: Vec<FailureDump>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// State of one trial.
struct Trial {
    n: usize,
    reports: Vec<IdentityReport>,
    instance: Map<String, Value>,
    stats: BTreeMap<String, i64>,
    tol: Tolerances,
}

impl Trial {
    fn check(&mut self, r: IdentityReport) {
        self.reports.push(r);
    }

    fn check_all(&mut self, rs: Vec<IdentityReport>) {
        self.reports.extend(rs);
    }

    fn flag(&mut self, name: &str, ok: bool) {
        self.check(IdentityReport::new(name, ok as i64, 1, &[]));
    }

    fn record(&mut self, key: &str, v: impl Serialize) {
        self.instance.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    fn bump(&mut self, key: &str, by: i64) {
        *self.stats.entry(key.into()).or_default() += by;
    }
}

type TrialFn = fn(&mut ChaCha8Rng, &mut Trial) -> Result<()>;

fn suite_fn(name: &str) -> Option<(TrialFn, usize)> {
    Some(match name {
        "compidx-props" => (compidx_trial as TrialFn, 5),
        "duality" => (duality_trial, 4),
        "routes" => (routes_trial, 3),
        "maslov-identities" => (maslov_trial, 3),
        "separation" => (separation_trial, 3),
        "comparison" => (comparison_trial, 3),
        "distribution" => (distribution_trial, 3),
        "monotone" => (monotone_trial, 3),
        "similarity" => (similarity_trial, 3),
        "additivity" => (additivity_trial, 4),
        "grid" => (grid_trial, 3),
        _ => return None,
    })
}

/// Runs a named suite. Unknown names are a precondition error.
pub fn run_suite(name: &str, cfg: &SuiteConfig) -> Result<SuiteReport> {
    let (f, default_max) = suite_fn(name).ok_or_else(|| {
        Error::PreconditionViolated(format!("unknown suite {name:?}; known: {}", SUITES.join(", ")))
    })?;
    cfg.tol.validate()?;
    let n_max = cfg.n_max.unwrap_or(default_max).max(1);
    let indices: Vec<usize> = match cfg.only_trial {
        Some(k) => vec![k],
        None => (0..cfg.trials).collect(),
    };
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<(Trial, Option<Error>)>>> =
        Mutex::new((0..indices.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..cfg.threads.max(1).min(indices.len().max(1)) {
            s.spawn(|| loop {
                let slot = next.fetch_add(1, Ordering::Relaxed);
                if slot >= indices.len() {
                    break;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(indices[slot] as u64);
                let n = cfg.n.unwrap_or_else(|| rng.random_range(1..=n_max));
                let mut trial = Trial {
                    n,
                    reports: Vec::new(),
                    instance: Map::new(),
                    stats: BTreeMap::new(),
                    tol: cfg.tol,
                };
                let err = f(&mut rng, &mut trial).err();
                results.lock().unwrap()[slot] = Some((trial, err));
            });
        }
    });
    let mut report = SuiteReport {
        suite: name.into(),
        trials: indices.len(),
        seed: cfg.seed,
        checks: 0,
        stats: BTreeMap::new(),
        failures: Vec::new(),
    };
    for (slot, r) in results.into_inner().unwrap().into_iter().enumerate() {
        let (trial, err) = r.expect("every trial ran");
        report.checks += trial.reports.len();
        for (k, v) in &trial.stats {
            *report.stats.entry(k.clone()).or_default() += v;
        }
        let bad: Vec<_> = trial.reports.into_iter().filter(|r| !r.holds).collect();
        if err.is_some() || !bad.is_empty() {
            let mut instance = trial.instance;
            instance.insert("seed".into(), json!(cfg.seed));
            instance.insert("stream".into(), json!(indices[slot]));
            report.failures.push(FailureDump {
                trial: indices[slot],
                n: trial.n,
                error: err.map(|e| e.to_string()),
                reports: bad,
                instance: Value::Object(instance),
            });
        }
    }
    Ok(report)
}

// ---- generators -------------------------------------------------------

fn random_interval(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let a: f64 = rng.random_range(-1.0..1.0);
    (a, a + rng.random_range(1.5..4.0))
}

fn steps_for(interval: (f64, f64)) -> usize {
    (40.0 * (interval.1 - interval.0)).ceil() as usize
}

fn frame_rows(f: &LagrangianFrame) -> Vec<Vec<f64>> {
    let m = f.matrix();
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Conjoined basis of a random system started from a random plane.
fn random_flow(
    rng: &mut ChaCha8Rng,
    t: &mut Trial,
    tag: &str,
    n: usize,
    interval: (f64, f64),
    nonnegative: bool,
) -> Result<(HamiltonianSpec, SampledLagrangianPath)> {
    let spec = random_hamiltonian(rng, n, interval, nonnegative);
    let init = random_lagrangian_plane(rng, n, 0.3, &t.tol);
    t.record(&format!("{tag}_hamiltonian"), &spec);
    t.record(&format!("{tag}_init"), frame_rows(&init));
    let path = integrate_conjoined_basis(&spec, &init, steps_for(interval), &t.tol)?;
    Ok((spec, path))
}

fn random_pair(
    rng: &mut ChaCha8Rng,
    t: &mut Trial,
) -> Result<(SampledLagrangianPath, SampledLagrangianPath)> {
    let iv = random_interval(rng);
    let n = t.n;
    let (_, y) = random_flow(rng, t, "y", n, iv, false)?;
    let (_, yh) = random_flow(rng, t, "yhat", n, iv, false)?;
    Ok((y, yh))
}

/// Families are drawn with damped coefficients: members built at one end are
/// read at the other, so rank decisions there see `cond(Phi)^2` rounding.
fn random_phi(rng: &mut ChaCha8Rng, t: &mut Trial) -> PhiFamily {
    let iv = random_interval(rng);
    let spec = random_hamiltonian(rng, t.n, iv, false).scaled(0.75);
    t.record("phi_hamiltonian", &spec);
    PhiFamily::Flow { spec, steps: steps_for(iv) }
}

fn random_invertible(rng: &mut ChaCha8Rng, n: usize) -> RealMatrix {
    loop {
        let c = RealMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        if c.clone().svd(false, false).singular_values.min() > 0.2 {
            return c;
        }
    }
}

/// `[[K, 0], [K^{-T} S, K^{-T}]]` with `S` symmetric.
fn random_lower_triangular(rng: &mut ChaCha8Rng, n: usize) -> SymplecticMatrix {
    let k = random_invertible(rng, n);
    let kit = k.clone().try_inverse().expect("invertible").transpose();
    let s = random_symmetric(rng, n, 1.0);
    let mut m = RealMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&k);
    m.view_mut((n, 0), (n, n)).copy_from(&(&kit * s));
    m.view_mut((n, n), (n, n)).copy_from(&kit);
    SymplecticMatrix::new(m, &Tolerances { struct_atol: 1e-7, ..Tolerances::default() })
        .expect("lower triangular symplectic")
}

// ---- trials -----------------------------------------------------------

fn compidx_trial(rng: &mut ChaCha8Rng, t: &mut Trial) -> Result<()> {
    let (n, tol) = (t.n, t.tol);
    let y = random_lagrangian_plane(rng, n, 0.3, &tol);
    let yh = random_lagrangian_plane(rng, n, 0.3, &tol);
    t.record("y", frame_rows(&y));
    t.record("yhat", frame_rows(&yh));
    let b = comparative_index(&y, &yh, &tol)?;
    t.flag("bounds", b.mu <= n && b.mu_star <= n);
    let (c1, c2) = (random_invertible(rng, n), random_invertible(rng, n));
    t.flag("right multiplication", check_prop_right_mult(&y, &yh, &c1, &c2, &tol)?);
    let l = random_lower_triangular(rng, n);
    t.flag("lower triangular", check_prop_lower_triangular(&y, &yh, &l, &tol)?);
    t.flag("duality", check_prop_duality(&y, &yh, &z_frame(&y, &tol)?, &tol)?);
    let (mu, mu_star) = mu_via_lidskii(&y, &yh, &tol)?;
    t.check(IdentityReport::new("mu via lidskii", b.mu as i64, mu as i64, &[]));
    t.check(IdentityReport::new("mu* via lidskii", b.mu_star as i64, mu_star as i64, &[]));
    Ok(())
}

fn duality_trial(rng: &mut ChaCha8Rng, t: &mut Trial) -> Result<()> {
    let iv = random_interval(rng);
    let n = t.n;
    let (_, y) = random_flow(rng, t, "y", n, iv, false)?;
    t.check(verify_duality(&y, &t.tol)?);
    Ok(())
}

fn routes_trial(rng: &mut ChaCha8Rng, t: &mut Trial) -> Result<()> {
    let iv = random_interval(rng);
    let n = t.n;
    let monotone = rng.random_bool(0.5);
    let (_, y) = random_flow(rng, t, "y", n, iv, monotone)?;
    let tol = t.tol;
    let (l, ls) = oscillation_numbers(&y, &tol)?;
    let (p, ps) = partition_numbers(&y, &tol)?;
    t.check(IdentityReport::new("partition route", l, p, &[]));
    t.check(IdentityReport::new("partition route dual", ls, ps, &[]));
    if monotone && check_monotone(&y, 1.0, &tol).is_ok() {
        t.bump("monotone instances", 1);
        let left = rank_drop_count(&y, Side::Left, &tol)?.count;
        let right = rank_drop_count(&y, Side::Right, &tol)?.count;
        t.check(IdentityReport::new("rank-drop route", l, left, &[]));
        t.check(IdentityReport::new("rank-drop route dual", ls, right, &[]));
    }
    let (_, yh) = random_flow(rng, t, "yhat", n, iv, false)?;
    t.check_all(verify_crossing_agreement(&y, &yh, &tol)?);
    Ok(())
}

fn maslov_trial(rng: &mut ChaCha8Rng, t: &mut Trial) -> Result<()> {
    let (y, yh) = random_pair(rng, t)?;
    t.check_all(verify_maslov_identities(&y, &yh, &t.tol)?);
    Ok(())
}

fn similarity_trial(rng: &mut ChaCha8Rng, t: &mut Trial) -> Result<()> {
    let (y, yh) = random_pair(rng, t)?;
    let (y, yh) = common_grid(&y, &yh)?;
    let mut worst = 0.0f64;
    for (a, b) in y.frames().iter().zip(yh.frames()) {
        worst = worst.max(similarity_defect(a, b, &t.tol)?);
    }
    t.record("worst_defect", worst);
    t.flag("similarity within 1e-8", worst <= 1e-8);
    Ok(())
}

fn separation_trial(rng: &mut ChaCha8Rng, t: &mut Trial) -> Result<()> {
    let phi = random_phi(rng, t);
    let tol = t.tol;
    let at = if rng.random_bool(0.5) { Endpoint::A } else { Endpoint::B };
    let c1 = random_lagrangian_plane(rng, t.n, 0.3, &tol);
    let c2 = random_lagrangian_plane(rng, t.n, 0.3, &tol);
    t.record("c1", frame_rows(&c1));
    t.record("c2", frame_rows(&c2));
    let y = phi.member(&c1, at, &tol)?;
    let yh = phi.member(&c2, at, &tol)?;
    t.check_all(verify_separation(&y, &yh, &tol)?);
    let (ya, yb) = principal_paths(&phi, &tol)?;
    t.check_all(verify_principal(&ya, &yb, Some(&y), &tol)?);
    Ok(())
}

fn comparison_trial(rng: &mut ChaCha8Rng, t: &mut Trial) -> Result<()> {
    let (y, yh) = random_pair(rng, t)?;
    t.check_all(verify_comparison(&y, &yh, &t.tol)?);
    t.check_all(verify_maslov_comparison(&y, &yh, &t.tol)?);
    Ok(())
}

fn distribution_trial(rng: &mut ChaCha8Rng, t: &mut Trial) -> Result<()> {
    let phi = random_phi(rng, t);
    let tol = t.tol;
    let rect = admissible_rectangle(&phi, &tol)?;
    t.record("rectangle", &rect);
    let id = RealMatrix::identity(t.n, t.n);
    let is_id = |x: RealMatrix| (x - &id).amax() <= tol.struct_atol;
    for ell in rect.l_min..=rect.l_max {
        for r in rect.r_min..=rect.r_max {
            let mut endpoints = vec![None];
            if ell == r {
                endpoints.push(Some(Endpoint::B));
            }
            for e in endpoints {
                let got = prescribed_oscillation_path_at(&phi, ell, r, e, &tol)?;
                let (l2, r2) = oscillation_numbers(&got.path, &tol)?;
                let name = format!("prescribed ({ell}, {r})");
                t.check(IdentityReport::new(&name, ell, l2, &[("N*", r2)]));
                t.check(IdentityReport::new(&format!("{name} dual"), r, r2, &[("N", l2)]));
                if ell >= r && e.is_none() {
                    t.flag(&format!("{name} X(a) = I"), is_id(got.path.first().x()));
                }
                if ell < r || e == Some(Endpoint::B) {
                    t.flag(&format!("{name} X(b) = I"), is_id(got.path.last().x()));
                }
                t.bump("pairs", 1);
            }
        }
    }
    let out = prescribed_oscillation_path_at(&phi, rect.l_max + 1, rect.r_min, None, &tol);
    t.flag("outside rectangle rejected", matches!(out, Err(Error::OutOfRange { .. })));
    Ok(())
}

fn monotone_trial(rng: &mut ChaCha8Rng, t: &mut Trial) -> Result<()> {
    let iv = random_interval(rng);
    let n = t.n;
    let (_, y) = random_flow(rng, t, "y", n, iv, true)?;
    let tol = t.tol;
    let (l, ls) = oscillation_numbers(&y, &tol)?;
    t.check(IdentityReport::new("rank drop", l, rank_drop_count(&y, Side::Left, &tol)?.count, &[]));
    t.check(IdentityReport::new(
        "rank drop dual",
        ls,
        rank_drop_count(&y, Side::Right, &tol)?.count,
        &[],
    ));
    let e = vertical_path(&y)?;
    let m = monotone_maslov_canonical(&e, &y, &tol)?;
    t.check(IdentityReport::new("monotone maslov", m.mas_angles, m.mas, &[]));
    t.check(IdentityReport::new("monotone maslov dual", m.mas_star_angles, m.mas_star, &[]));
    t.check(IdentityReport::new("Mas(E, Y) = N(Y)", m.mas, l, &[]));
    Ok(())
}

fn additivity_trial(rng: &mut ChaCha8Rng, t: &mut Trial) -> Result<()> {
    let n = t.n.max(2);
    let n1 = rng.random_range(1..n);
    let iv = random_interval(rng);
    let (_, p1) = random_flow(rng, t, "block1", n1, iv, false)?;
    let (_, p2) = random_flow(rng, t, "block2", n - n1, iv, false)?;
    t.check_all(verify_block_diag(&p1, &p2, &t.tol)?);
    let split = rng.random_range(1..p1.nodes().len() - 1);
    t.record("split", split);
    t.check_all(verify_interval_additivity(&p1, split, &t.tol)?);
    Ok(())
}

/// Every integer the routes return, before and after doubling the grid.
fn integers(
    y: &SampledLagrangianPath,
    yh: &SampledLagrangianPath,
    tol: &Tolerances,
) -> Result<Vec<(&'static str, i64)>> {
    let (l, ls) = oscillation_numbers(y, tol)?;
    let (p, ps) = partition_numbers(y, tol)?;
    let (m, ms) = maslov_indices(y, yh, tol)?;
    let c = maslov_crossing_oracle(y, yh, tol)?;
    Ok(vec![
        ("N", l),
        ("N*", ls),
        ("N partition", p),
        ("N* partition", ps),
        ("Mas", m),
        ("Mas*", ms),
        ("Mas crossing", c.mas),
        ("Mas* crossing", c.mas_star),
    ])
}

fn grid_trial(rng: &mut ChaCha8Rng, t: &mut Trial) -> Result<()> {
    let (y, yh) = random_pair(rng, t)?;
    let tol = t.tol;
    let base = integers(&y, &yh, &tol)?;
    let fine = integers(&y.densify(2)?, &yh.densify(2)?, &tol)?;
    for ((name, a), (_, b)) in base.into_iter().zip(fine) {
        t.check(IdentityReport::new(&format!("{name} under densify(2)"), a, b, &[]));
    }
    // a monotone path also exercises the rank-drop route
    let iv = y.interval();
    let (spec, m) = random_flow(rng, t, "monotone", t.n, iv, true)?;
    let fine = integrate_from(&spec, m.first(), Endpoint::A, 2 * steps_for(iv), &tol)?;
    for side in [Side::Left, Side::Right] {
        let a = rank_drop_count(&m, side, &tol)?.count;
        let b = rank_drop_count(&fine, side, &tol)?.count;
        t.check(IdentityReport::new(&format!("rank drop {side:?} under doubled steps"), a, b, &[]));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(trials: usize) -> SuiteConfig {
        let mut c = SuiteConfig::new(trials, 42);
        c.threads = 2;
        c
    }

    #[test]
    fn unknown_suite_is_rejected() {
        assert!(matches!(run_suite("nope", &cfg(1)), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn every_suite_runs_clean() {
        for name in SUITES {
            let r = run_suite(name, &cfg(3)).unwrap();
            assert!(r.passed(), "{name}: {:#?}", r.failures);
            assert!(r.checks > 0, "{name}");
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let mut a = cfg(4);
        a.threads = 1;
        let mut b = cfg(4);
        b.threads = 3;
        let ra = serde_json::to_string(&run_suite("duality", &a).unwrap()).unwrap();
        let rb = serde_json::to_string(&run_suite("duality", &b).unwrap()).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn single_trial_replay() {
        let mut c = cfg(5);
        c.only_trial = Some(3);
        let r = run_suite("compidx-props", &c).unwrap();
        assert_eq!(r.trials, 1);
        assert!(r.passed());
    }
}

#[cfg(test)]
mod stress {
    use super::*;

    /// Larger run over several seeds; `cargo test -- --ignored stress`.
    #[test]
    #[ignore]
    fn many_seeds() {
        let mut bad = Vec::new();
        for seed in [1u64, 7, 1234] {
            for name in SUITES.iter().filter(|s| std::env::var("OSK_STRESS").map_or(true, |v| v.split(',').any(|x| x == **s))) {
                let trials = if *name == "distribution" { 40 } else { 300 };
                let r = run_suite(name, &SuiteConfig::new(trials, seed)).unwrap();
                if !r.passed() {
                    bad.push(format!("seed {seed} {name}: {:?}", r.failures[0]));
                }
            }
        }
        assert!(bad.is_empty(), "{bad:#?}");
    }
}
