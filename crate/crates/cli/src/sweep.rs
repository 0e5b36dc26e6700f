//! Cartesian parameter sweeps: each combination runs in its own
//! subdirectory, a summary CSV collects (parameters, outcome, t*, t1,
//! final energy drift). Per-run failures are recorded and the sweep
//! continues.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use nonlocal_shear::runner;
use nonlocal_shear::scenario::{apply_override, Scenario};

struct SweepAxis {
    path: String,
    values: Vec<String>,
}

fn parse_axes(specs: &[String]) -> anyhow::Result<Vec<SweepAxis>> {
    let mut axes = Vec::new();
    for spec in specs {
        let (path, values) = spec
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("--sweep expects PATH=V1,V2,..., got `{spec}`"))?;
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if values.is_empty() || values.iter().any(|v| v.is_empty()) {
            return Err(anyhow::anyhow!("--sweep `{spec}` has empty values"));
        }
        axes.push(SweepAxis {
            path: path.to_string(),
            values,
        });
    }
    Ok(axes)
}

fn cartesian(axes: &[SweepAxis]) -> Vec<Vec<(String, String)>> {
    let mut combos: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(combos.len() * axis.values.len());
        for combo in &combos {
            for value in &axis.values {
                let mut extended = combo.clone();
                extended.push((axis.path.clone(), value.clone()));
                next.push(extended);
            }
        }
        combos = next;
    }
    combos
}

struct SweepRow {
    run_id: usize,
    assignments: Vec<(String, String)>,
    outcome: String,
    exit_class: i32,
    t_star: Option<f64>,
    t1: Option<f64>,
    drift: Option<f64>,
    error: Option<String>,
}

pub fn cmd_sweep(
    scenario_path: &Path,
    sweep_specs: &[String],
    set: &[String],
    output_dir: Option<&Path>,
    jobs: usize,
    strict: bool,
) -> anyhow::Result<i32> {
    let axes = parse_axes(sweep_specs)?;
    let combos = cartesian(&axes);
    let out_dir = output_dir.map(Path::to_path_buf).unwrap_or_else(|| {
        let stem = scenario_path
            .file_stem()
            .map(|s| s.to_string_lossy().to_string())
            .unwrap_or_else(|| "sweep".into());
        PathBuf::from(format!("{stem}_sweep"))
    });
    std::fs::create_dir_all(&out_dir)?;

    let base_text = std::fs::read_to_string(scenario_path)?;
    let base_doc: serde_json::Value = serde_json::from_str(&base_text)?;

    let next_index = AtomicUsize::new(0);
    let rows: Mutex<Vec<SweepRow>> = Mutex::new(Vec::new());
    let jobs = crate::effective_jobs(jobs).min(combos.len().max(1));

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let idx = next_index.fetch_add(1, Ordering::Relaxed);
                if idx >= combos.len() {
                    break;
                }
                let row = run_one(&base_doc, &combos[idx], set, strict, idx, &out_dir);
                rows.lock().expect("sweep lock").push(row);
            });
        }
    });

    let mut rows = rows.into_inner().expect("sweep lock");
    rows.sort_by_key(|r| r.run_id);

    let summary_path = out_dir.join("summary.csv");
    let mut file = std::io::BufWriter::new(std::fs::File::create(&summary_path)?);
    let axis_names: Vec<&str> = axes.iter().map(|a| a.path.as_str()).collect();
    writeln!(
        file,
        "run_id,{},outcome,exit_class,t_star,t1,energy_drift,error",
        axis_names.join(",")
    )?;
    let mut failures = 0usize;
    for row in &rows {
        if row.error.is_some() {
            failures += 1;
        }
        let values: Vec<String> = row.assignments.iter().map(|(_, v)| v.clone()).collect();
        writeln!(
            file,
            "{},{},{},{},{},{},{},{}",
            row.run_id,
            values.join(","),
            row.outcome,
            row.exit_class,
            row.t_star.map(|v| format!("{v:.12e}")).unwrap_or_default(),
            row.t1.map(|v| format!("{v:.12e}")).unwrap_or_default(),
            row.drift.map(|v| format!("{v:.12e}")).unwrap_or_default(),
            row.error
                .as_deref()
                .unwrap_or("")
                .replace(['\n', '\r'], " | ")
                .replace(',', ";"),
        )?;
    }
    file.flush()?;

    println!("sweep: {} runs, {} failed", rows.len(), failures);
    for row in &rows {
        let params: Vec<String> = row
            .assignments
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        println!(
            "  run {:04} [{}] -> {}",
            row.run_id,
            params.join(", "),
            row.error.as_deref().unwrap_or(&row.outcome)
        );
    }
    println!("summary: {}", summary_path.display());
    Ok(if failures == 0 { 0 } else { 1 })
}

fn run_one(
    base_doc: &serde_json::Value,
    combo: &[(String, String)],
    set: &[String],
    strict: bool,
    run_id: usize,
    out_dir: &Path,
) -> SweepRow {
    let assignments = combo.to_vec();
    let run_dir = out_dir.join(format!("run_{run_id:04}"));
    type RunStats = (String, i32, Option<f64>, Option<f64>, Option<f64>);
    let result = (|| -> anyhow::Result<RunStats> {
        let mut doc = base_doc.clone();
        for entry in set {
            let (key, value) = entry
                .split_once('=')
                .ok_or_else(|| anyhow::anyhow!("--set expects PATH=VALUE, got `{entry}`"))?;
            apply_override(&mut doc, key, value)?;
        }
        for (path, value) in combo {
            apply_override(&mut doc, path, value)?;
        }
        if strict {
            apply_override(&mut doc, "strict", "true")?;
        }
        let scenario = Scenario::from_value(doc)?;
        let artifacts = runner::run_scenario(&scenario, Some(&run_dir))?;
        Ok((
            artifacts.report.outcome.clone(),
            artifacts.exit_class,
            artifacts.report.t_star,
            artifacts.report.levine.as_ref().map(|l| l.t1),
            Some(artifacts.report.energy.drift),
        ))
    })();
    match result {
        Ok((outcome, exit_class, t_star, t1, drift)) => SweepRow {
            run_id,
            assignments,
            outcome,
            exit_class,
            t_star,
            t1,
            drift,
            error: None,
        },
        Err(err) => SweepRow {
            run_id,
            assignments,
            outcome: "error".into(),
            exit_class: 1,
            t_star: None,
            t1: None,
            drift: None,
            error: Some(format!("{err:#}")),
        },
    }
}
