//! Comparison harness: fan several systems over a worker pool, then merge
//! the results into a combined CSV and overlay plots.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use tikhoflow_core::diagnostics::{Column, TrajectorySample};
use tikhoflow_core::report::{line_chart_loglog, write_combined_csv, Series};

use crate::config::RunSetup;
use crate::pipeline::{self, PhaseError};
use crate::CliError;

const OVERLAY_COLUMNS: [Column; 3] =
    [Column::FGap, Column::DistMinnormSq, Column::GradNormSq];

pub struct MemberResult {
    pub label: String,
    pub outcome: Result<Vec<TrajectorySample>, PhaseError>,
}

pub struct CompareSummary {
    pub results: Vec<MemberResult>,
    pub combined_csv: PathBuf,
    pub overlays: Vec<PathBuf>,
}

impl CompareSummary {
    pub fn failed_count(&self) -> usize {
        self.results.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// All members must describe the same experiment: one problem, one start,
/// one horizon. Everything else (system, schedule, tolerances) may vary.
fn check_shared(members: &[RunSetup]) -> Result<(), CliError> {
    let shared_keys = [
        "problem.name",
        "problem.a",
        "problem.A",
        "problem.b",
        "problem.dim",
        "run.x0",
        "run.t0",
        "run.t_end",
    ];
    let first = &members[0];
    for m in &members[1..] {
        for key in shared_keys {
            if first.echo.get(key) != m.echo.get(key) {
                return Err(CliError::Config(format!(
                    "comparison members disagree on {key}: {:?} ({}) vs {:?} ({})",
                    first.echo.get(key),
                    first.label,
                    m.echo.get(key),
                    m.label,
                )));
            }
        }
    }
    Ok(())
}

/// Makes duplicated labels unique by suffixing an index, so a system can be
/// compared against itself without the outputs colliding.
fn disambiguate_labels(members: &mut [RunSetup]) {
    let mut seen: Vec<String> = Vec::new();
    for m in members.iter_mut() {
        if seen.contains(&m.label) {
            let mut k = 2;
            let mut candidate = format!("{}_{k}", m.label);
            while seen.contains(&candidate) {
                k += 1;
                candidate = format!("{}_{k}", m.label);
            }
            m.label = candidate;
            m.echo.insert("run.label".into(), m.label.clone());
        }
        seen.push(m.label.clone());
    }
}

pub fn execute(
    mut members: Vec<RunSetup>,
    workers: usize,
    out_dir: &Path,
) -> Result<CompareSummary, CliError> {
    if members.len() < 2 {
        return Err(CliError::Config(format!(
            "compare needs at least two systems, got {}",
            members.len()
        )));
    }
    check_shared(&members)?;
    disambiguate_labels(&mut members);

    let n = members.len();
    let workers = workers.clamp(1, n);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<Vec<TrajectorySample>, PhaseError>>>> =
        (0..n).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let member = &members[i];
                let dir = out_dir.join(&member.label);
                let outcome = match pipeline::execute(member, &dir) {
                    Ok(output) => Ok(output.rows),
                    Err(e) => {
                        let _ = pipeline::write_failed_manifest(member, &e, &dir);
                        Err(e)
                    }
                };
                *slots[i].lock().unwrap() = Some(outcome);
            });
        }
    });

    let results: Vec<MemberResult> = members
        .iter()
        .zip(slots)
        .map(|(m, slot)| MemberResult {
            label: m.label.clone(),
            outcome: slot.into_inner().unwrap().expect("worker filled every slot"),
        })
        .collect();

    if results.iter().all(|r| r.outcome.is_err()) {
        let first = results[0].outcome.as_ref().unwrap_err();
        return Err(CliError::Runtime(format!(
            "every comparison member failed; first failure ({}): {first}",
            results[0].label
        )));
    }

    let groups: Vec<(String, Vec<TrajectorySample>)> = results
        .iter()
        .filter_map(|r| {
            r.outcome
                .as_ref()
                .ok()
                .map(|rows| (r.label.clone(), rows.clone()))
        })
        .collect();

    let io_err = |what: &str, e: std::io::Error| {
        CliError::Runtime(format!("compare output {what}: {e}"))
    };
    fs::create_dir_all(out_dir).map_err(|e| io_err("dir", e))?;

    let combined_csv = out_dir.join("compare.csv");
    let mut body = Vec::new();
    write_combined_csv(&mut body, &groups).map_err(|e| io_err("compare.csv", e))?;
    fs::write(&combined_csv, body).map_err(|e| io_err("compare.csv", e))?;

    let mut overlays = Vec::new();
    for column in OVERLAY_COLUMNS {
        let series: Vec<Series> = groups
            .iter()
            .map(|(label, rows)| Series {
                label: label.clone(),
                points: rows.iter().map(|s| (s.t, column.value(s))).collect(),
            })
            .collect();
        let svg = line_chart_loglog(
            &format!("{} across systems", column.name()),
            "t",
            column.name(),
            &series,
        );
        let path = out_dir.join(format!("{}.svg", column.name()));
        fs::write(&path, svg).map_err(|e| io_err("overlay", e))?;
        overlays.push(path);
    }

    Ok(CompareSummary { results, combined_csv, overlays })
}
