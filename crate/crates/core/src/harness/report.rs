//! Report files: `report.csv` (machine-readable), `report.txt` (aligned
//! table plus failures) and `timing.csv` (wall-clock, which is the only
//! output that differs between identical runs).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{CompareRow, HarnessError, TaskFailure};

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn ks(rows: &[CompareRow]) -> Vec<usize> {
    rows.first().map(|r| r.report.ndcg_at.keys().copied().collect()).unwrap_or_default()
}

fn header(ks: &[usize]) -> Vec<String> {
    let mut h: Vec<String> = ["engine", "policy", "n_tasks", "failures", "mrr"].map(String::from).into();
    h.extend(ks.iter().map(|k| format!("ndcg@{k}")));
    h.extend(["policy_calls", "calls_per_task", "rel_improvement"].map(String::from));
    h
}

fn cells(row: &CompareRow, ks: &[usize]) -> Vec<String> {
    let mut c = vec![
        row.engine.to_string(),
        row.policy.clone(),
        row.report.n_tasks.to_string(),
        row.failures.len().to_string(),
        format!("{:.6}", row.report.mrr),
    ];
    c.extend(ks.iter().map(|k| format!("{:.6}", row.report.ndcg_at.get(k).copied().unwrap_or(f64::NAN))));
    c.push(row.policy_calls.to_string());
    c.push(format!("{:.4}", row.calls_per_task));
    c.push(format!("{:+.4}", row.relative_improvement));
    c
}

pub fn render_table(rows: &[CompareRow]) -> String {
    let ks = ks(rows);
    let mut grid = vec![header(&ks)];
    grid.extend(rows.iter().map(|r| cells(r, &ks)));
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|j| grid.iter().map(|row| row[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in grid.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(j, (cell, w))| if j < 2 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

/// Writes the three report files into `dir`.
pub fn write_reports(dir: &Path, rows: &[CompareRow]) -> Result<(), HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let ks = ks(rows);

    let mut csv = header(&ks).join(",");
    csv.push('\n');
    for r in rows {
        let line: Vec<String> = cells(r, &ks).iter().map(|c| csv_field(c)).collect();
        csv.push_str(&line.join(","));
        csv.push('\n');
    }
    fs::write(dir.join("report.csv"), csv).map_err(io)?;

    let mut txt = render_table(rows);
    let failed: Vec<(&CompareRow, &TaskFailure)> = rows.iter().flat_map(|r| r.failures.iter().map(move |f| (r, f))).collect();
    if !failed.is_empty() {
        let _ = writeln!(txt, "\nfailed tasks ({}):", failed.len());
        for (r, f) in failed {
            let _ = writeln!(txt, "  [{}={}] #{} {}: {}", r.engine, r.policy, f.index, f.task_id, f.error);
        }
    }
    fs::write(dir.join("report.txt"), txt).map_err(io)?;

    let mut timing = String::from("engine,policy,wall_clock_s\n");
    for r in rows {
        let _ = writeln!(timing, "{},{},{:.3}", r.engine, csv_field(&r.policy), r.wall_clock.as_secs_f64());
    }
    fs::write(dir.join("timing.csv"), timing).map_err(io)
}
