//! Acceptance criteria 1 to 10. Prints one PASS/FAIL line per criterion and
//! fails at the end if any criterion failed. Run with `--nocapture` to see
//! the lines on success.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use osk_core::hamgen::rotation_path;
use osk_core::maslov::{maslov_crossing_oracle, maslov_indices, monotone_maslov_canonical, vertical_path};
use osk_core::oscnum::{oscillation_numbers, partition_numbers, rank_drop_count, Side};
use osk_core::suites::{run_suite, SuiteConfig, SuiteReport};
use osk_core::Tolerances;

struct Line {
    id: usize,
    ok: bool,
    detail: String,
}

fn suite(name: &str, trials: usize, n: Option<usize>, n_max: Option<usize>) -> SuiteReport {
    let mut cfg = SuiteConfig::new(trials, 42);
    cfg.n = n;
    cfg.n_max = n_max;
    run_suite(name, &cfg).expect("known suite")
}

fn summary(r: &SuiteReport) -> String {
    let mut s = format!("{} trials={} checks={} failures={}", r.suite, r.trials, r.checks, r.failures.len());
    for (k, v) in &r.stats {
        s.push_str(&format!(" {k}={v}"));
    }
    if let Some(f) = r.failures.first() {
        s.push_str(&format!("; first failure: trial {} {:?} {:?}", f.trial, f.error, f.reports));
    }
    s
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let t0 = Instant::now();
    let v = f();
    (v, t0.elapsed())
}

fn criterion_1() -> Line {
    let tol = Tolerances::default();
    let ((got, want), dt) = timed(|| {
        let y = rotation_path(&[1.0], (0.0, 1.5 * PI), 25, &tol).unwrap();
        let e = vertical_path(&y).unwrap();
        let (n, ns) = oscillation_numbers(&y, &tol).unwrap();
        let (pn, pns) = partition_numbers(&y, &tol).unwrap();
        let rd = rank_drop_count(&y, Side::Left, &tol).unwrap().count;
        let rds = rank_drop_count(&y, Side::Right, &tol).unwrap().count;
        let (m, ms) = maslov_indices(&e, &y, &tol).unwrap();
        let c = maslov_crossing_oracle(&e, &y, &tol).unwrap();
        let mono = monotone_maslov_canonical(&e, &y, &tol).unwrap();
        (
            vec![n, ns, pn, pns, rd, rds, m, ms, c.mas, c.mas_star, mono.mas, mono.mas_star],
            vec![1, 2, 1, 2, 1, 2, 1, 2, 1, 2, 1, 2],
        )
    });
    Line {
        id: 1,
        ok: got == want && dt < Duration::from_secs(1),
        detail: format!(
            "rotation (N, N*, partition, rank drop, Mas angles, crossings, monotone) = {got:?} in {dt:.2?}"
        ),
    }
}

fn criterion_2() -> Line {
    let (reports, dt) = timed(|| (1..=5).map(|n| suite("compidx-props", 500, Some(n), None)).collect::<Vec<_>>());
    let ok = reports.iter().all(|r| r.passed()) && dt < Duration::from_secs(30);
    let detail = reports.iter().map(summary).collect::<Vec<_>>().join(" | ");
    Line { id: 2, ok, detail: format!("{detail} in {dt:.2?}") }
}

fn suite_line(id: usize, name: &str, trials: usize, n_max: usize, limit: Option<Duration>) -> (Line, SuiteReport) {
    let (r, dt) = timed(|| suite(name, trials, None, Some(n_max)));
    let ok = r.passed() && limit.is_none_or(|l| dt < l);
    (Line { id, ok, detail: format!("{} in {dt:.2?}", summary(&r)) }, r)
}

#[test]
fn acceptance_criteria() {
    let mut lines = vec![criterion_1(), criterion_2()];
    lines.push(suite_line(3, "duality", 200, 4, None).0);
    let (mut l4, r4) = suite_line(4, "routes", 100, 3, Some(Duration::from_secs(120)));
    // the monotone half must actually exercise the rank-drop route
    l4.ok &= r4.stats.get("monotone instances").copied().unwrap_or(0) > 0;
    lines.push(l4);
    lines.push(suite_line(5, "similarity", 100, 3, None).0);
    lines.push(suite_line(6, "maslov-identities", 100, 3, None).0);
    let (a, _) = suite_line(7, "comparison", 100, 3, None);
    let (b, _) = suite_line(7, "separation", 100, 3, None);
    lines.push(Line { id: 7, ok: a.ok && b.ok, detail: format!("{} | {}", a.detail, b.detail) });
    lines.push(suite_line(8, "distribution", 20, 3, Some(Duration::from_secs(120))).0);
    lines.push(suite_line(9, "additivity", 100, 4, None).0);
    lines.push(suite_line(10, "grid", 100, 3, None).0);

    println!();
    for l in &lines {
        println!("criterion {:>2} {}: {}", l.id, if l.ok { "PASS" } else { "FAIL" }, l.detail);
    }
    let failed: Vec<usize> = lines.iter().filter(|l| !l.ok).map(|l| l.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
