use std::path::Path;

use serde_json::{json, Map, Value};

use osk_core::compidx::comparative_index;
use osk_core::hamgen::{prescribed_oscillation_path_at, Endpoint, PhiFamily};
use osk_core::lidskii::{mu_via_lidskii, TrackOptions};
use osk_core::maslov::{maslov_crossing_oracle, maslov_indices, vertical_path};
use osk_core::oscnum::{
    build_partition, check_monotone, lidskii_trace, oscillation_number_partition,
    dual_oscillation_number_partition, rank_drop_count, Side,
};
use osk_core::pathio::{load_frame, load_path, save_path, to_json};
use osk_core::suites::{run_suite, SuiteConfig};
use osk_core::Tolerances;

use crate::source::Source;
use crate::svg::angle_plot;
use crate::{CliError, CliResult};

/// Writes to stdout; a closed pipe (`osk ... | head`) ends output quietly.
fn out(body: &str) {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(body.as_bytes()).and_then(|()| stdout.flush());
}

fn emit(v: &Value) {
    out(&(to_json(v) + "\n"));
}

fn write(p: &Path, body: &str) -> CliResult<()> {
    std::fs::write(p, body).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
}

fn pair(a: i64, b: i64, names: [&str; 2]) -> Value {
    json!({ names[0]: a, names[1]: b })
}

pub fn compute(src: &Source, against: Option<&str>, tol: &Tolerances, verbose: u8) -> CliResult<()> {
    let y = src.load(tol)?.path;
    let (a, b) = y.interval();
    let mut routes = Map::new();
    let mut diag = Map::new();
    let mut disagreements = Vec::new();

    let trace = lidskii_trace(&y, &TrackOptions::default(), tol)?;
    let (n_val, ns_val) = (trace.q_change(), trace.q_star_change());
    routes.insert("lidskii".into(), pair(n_val, ns_val, ["N", "N_star"]));
    diag.insert("nodes".into(), json!(y.nodes().len()));
    diag.insert("trace_nodes".into(), json!(trace.nodes.len()));

    let mut check = |route: &str, got: (i64, i64), want: (i64, i64)| {
        if got != want {
            disagreements.push(format!("{route} gives {got:?}, expected {want:?}"));
        }
    };

    match build_partition(&y, tol).and_then(|sys| {
        let p = oscillation_number_partition(&y, &sys, tol)?;
        let ps = dual_oscillation_number_partition(&y, &sys, tol)?;
        Ok((sys.segments.len(), p.value, ps.value))
    }) {
        Ok((segments, p, ps)) => {
            routes.insert("partition".into(), pair(p, ps, ["N", "N_star"]));
            diag.insert("partition_segments".into(), json!(segments));
            check("partition", (p, ps), (n_val, ns_val));
        }
        Err(e) => {
            diag.insert("partition_skipped".into(), json!(e.to_string()));
        }
    }

    match check_monotone(&y, 1.0, tol).and_then(|()| {
        Ok((rank_drop_count(&y, Side::Left, tol)?, rank_drop_count(&y, Side::Right, tol)?))
    }) {
        Ok((left, right)) => {
            routes.insert("rank_drop".into(), pair(left.count, right.count, ["N", "N_star"]));
            diag.insert("rank_changes".into(), serde_json::to_value(&left.changes).unwrap_or(Value::Null));
            check("rank_drop", (left.count, right.count), (n_val, ns_val));
        }
        Err(e) => {
            diag.insert("rank_drop_skipped".into(), json!(e.to_string()));
        }
    }

    let mut out = json!({
        "n": y.n(),
        "interval": [a, b],
        "N": n_val,
        "N_star": ns_val,
    });
    if let Some(reference) = against {
        let e_ref = reference == "e";
        let yr = if e_ref {
            vertical_path(&y)?
        } else {
            load_path(
                &std::fs::read_to_string(reference)
                    .map_err(|e| CliError::Validation(format!("{reference}: {e}")))?,
                tol,
            )?
        };
        let (m, ms) = maslov_indices(&yr, &y, tol)?;
        routes.insert("maslov_angles".into(), pair(m, ms, ["Mas", "Mas_star"]));
        match maslov_crossing_oracle(&yr, &y, tol) {
            Ok(c) => {
                routes.insert("crossing".into(), pair(c.mas, c.mas_star, ["Mas", "Mas_star"]));
                diag.insert("crossing_segments".into(), json!(c.breakpoints.len().saturating_sub(1)));
                diag.insert("snapping_decided".into(), json!(c.snapping_decided));
                check("crossing", (c.mas, c.mas_star), (m, ms));
            }
            Err(e) => {
                diag.insert("crossing_skipped".into(), json!(e.to_string()));
            }
        }
        if e_ref {
            // Z_E is the identity, so Mas(E, Y) = N(Y) and Mas*(E, Y) = N*(Y)
            check("Mas(E, Y) against N(Y)", (m, ms), (n_val, ns_val));
        }
        out["Mas"] = json!(m);
        out["Mas_star"] = json!(ms);
    }
    diag.insert("tolerances".into(), serde_json::to_value(tol).unwrap_or(Value::Null));
    out["routes"] = Value::Object(routes);
    out["agreement"] = json!(disagreements.is_empty());
    out["diagnostics"] = Value::Object(diag);
    emit(&out);
    if verbose > 0 {
        eprintln!("{} nodes, trace refined to {}", y.nodes().len(), trace.nodes.len());
    }
    if disagreements.is_empty() {
        Ok(())
    } else {
        Err(CliError::Disagreement(disagreements.join("; ")))
    }
}

pub fn verify(suite: &str, cfg: &SuiteConfig, dump_dir: &Path, verbose: u8) -> CliResult<()> {
    let report = run_suite(suite, cfg)?;
    emit(&serde_json::to_value(&report).unwrap_or(Value::Null));
    if report.passed() {
        return Ok(());
    }
    std::fs::create_dir_all(dump_dir)?;
    for f in &report.failures {
        let file = dump_dir.join(format!("{suite}-seed{}-trial{}.json", cfg.seed, f.trial));
        write(&file, &to_json(f))?;
        if verbose > 0 {
            eprintln!("wrote {}", file.display());
        }
    }
    Err(CliError::Disagreement(format!(
        "{} of {} trials failed; replay with --seed {} --trial <k>",
        report.failures.len(),
        report.trials,
        cfg.seed
    )))
}

pub fn angles(src: &Source, csv: Option<&Path>, svg: Option<&Path>, tol: &Tolerances) -> CliResult<()> {
    let y = src.load(tol)?.path;
    let trace = lidskii_trace(&y, &TrackOptions::default(), tol)?;
    let body = trace.to_csv();
    match csv {
        Some(p) => write(p, &body)?,
        None => out(&body),
    }
    if let Some(p) = svg {
        write(p, &angle_plot(&trace))?;
    }
    Ok(())
}

pub fn gen(
    src: &Source,
    prescribed: Option<(i64, i64)>,
    endpoint: Option<&str>,
    dest: Option<&Path>,
    tol: &Tolerances,
) -> CliResult<()> {
    let body = match prescribed {
        None => {
            let loaded = src.load(tol)?;
            save_path(&loaded.path, Some(loaded.meta))
        }
        Some((ell, r)) => {
            let mut rng = src.rng();
            let spec = src.hamiltonian(&mut rng)?;
            let iv = (spec.interval[0], spec.interval[1]);
            let steps = src
                .steps
                .unwrap_or_else(|| (40.0 * (iv.1 - iv.0)).ceil() as usize);
            let phi = PhiFamily::Flow {
                spec: spec.clone(),
                steps,
            };
            let at = endpoint.map(|e| if e == "b" { Endpoint::B } else { Endpoint::A });
            let got = prescribed_oscillation_path_at(&phi, ell, r, at, tol)?;
            let meta = json!({
                "generator": "prescribed",
                "seed": src.seed,
                "steps": steps,
                "hamiltonian": serde_json::to_value(&spec).unwrap_or(Value::Null),
                "provenance": serde_json::to_value(&got.provenance).unwrap_or(Value::Null),
            });
            save_path(&got.path, Some(meta))
        }
    };
    match dest {
        Some(p) => write(p, &body),
        None => {
            out(&(body + "\n"));
            Ok(())
        }
    }
}

pub fn compare_index(y: &Path, yhat: &Path, tol: &Tolerances) -> CliResult<()> {
    let read = |p: &Path| -> CliResult<_> {
        let s = std::fs::read_to_string(p).map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
        Ok(load_frame(&s, tol)?)
    };
    let (a, b) = (read(y)?, read(yhat)?);
    let c = comparative_index(&a, &b, tol)?;
    let (mu, mu_star) = mu_via_lidskii(&a, &b, tol)?;
    let agree = (mu, mu_star) == (c.mu, c.mu_star);
    let mut out = serde_json::to_value(c).unwrap_or(Value::Null);
    out["lidskii"] = json!({"mu": mu, "mu_star": mu_star});
    out["agreement"] = json!(agree);
    emit(&out);
    if agree {
        Ok(())
    } else {
        Err(CliError::Disagreement(format!(
            "comparative index ({}, {}) but Lidskii angles give ({mu}, {mu_star})",
            c.mu, c.mu_star
        )))
    }
}
