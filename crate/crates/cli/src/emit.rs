//! Report files: metric tables, traces, plots, gains and the run manifest.
//!
//! Nothing written here depends on wall-clock time or hash-map order, so a
//! rerun with the same config and seed reproduces every file byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use agc_core::{Channel, FeedbackGain, GainMask, Matrix, ResponseMetrics, Settling};
use sha2::{Digest, Sha256};

use crate::compare::{delf_label, ComparisonReport, Tuning};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::svg::{LineChart, Series};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TableKind {
    Undershoot,
    Settling,
    Overshoot,
}

impl TableKind {
    const ALL: [TableKind; 3] = [TableKind::Undershoot, TableKind::Settling, TableKind::Overshoot];

    fn stem(self) -> &'static str {
        match self {
            TableKind::Undershoot => "undershoot",
            TableKind::Settling => "settling",
            TableKind::Overshoot => "overshoot",
        }
    }

    fn title(self) -> &'static str {
        match self {
            TableKind::Undershoot => "Peak undershoot (Hz)",
            TableKind::Settling => "Settling time (s)",
            TableKind::Overshoot => "Peak overshoot (Hz)",
        }
    }

    fn cell(self, m: &ResponseMetrics) -> String {
        match self {
            TableKind::Undershoot => fmt_hz(m.peak_undershoot),
            TableKind::Overshoot => fmt_hz(m.peak_overshoot),
            TableKind::Settling => match m.settling_time {
                Settling::At(t) => format!("{t:.3}"),
                Settling::NotSettled => "not settled".into(),
            },
        }
    }
}

/// Six decimals, the precision shared by tables and `.dat` traces.
pub fn fmt_hz(v: f64) -> String {
    format!("{v:.6}")
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

/// `area1`, or `area1_2` for the second scenario loading area 1.
pub fn scenario_tag(report: &ComparisonReport, idx: usize) -> String {
    let area = report.scenarios[idx].disturbance_area;
    let earlier = report.scenarios[..idx]
        .iter()
        .filter(|s| s.disturbance_area == area)
        .count();
    if earlier == 0 {
        format!("area{}", area.number())
    } else {
        format!("area{}_{}", area.number(), earlier + 1)
    }
}

fn delf_tag(report: &ComparisonReport, idx: usize, channel: Channel) -> String {
    let base = delf_label(channel, report.scenarios[idx].disturbance_area);
    let tag = scenario_tag(report, idx);
    match tag.split_once('_') {
        Some((_, n)) => format!("{base}_{n}"),
        None => base,
    }
}

fn table_csv(report: &ComparisonReport, idx: usize, kind: TableKind) -> String {
    let mut out = String::from("response");
    for c in &report.controllers {
        out.push(',');
        out.push_str(&c.name);
    }
    out.push('\n');
    for channel in Channel::ALL {
        out.push_str(&delf_label(channel, report.scenarios[idx].disturbance_area));
        for c in &report.controllers {
            let m = report.metrics(&c.name, idx, channel).expect("complete report");
            out.push(',');
            out.push_str(&kind.cell(m));
        }
        out.push('\n');
    }
    out
}

/// Writes `{undershoot,settling,overshoot}_areaN.csv` per scenario and `summary.md`.
pub fn emit_tables(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    let mut summary = String::from("# Frequency response comparison\n\n");
    let _ = writeln!(
        summary,
        "Settling band: ±{} Hz. Controllers: {}.\n",
        report.settling_band,
        report
            .controllers
            .iter()
            .map(|c| format!("`{}` ({})", c.name, c.kind))
            .collect::<Vec<_>>()
            .join(", ")
    );

    for idx in 0..report.scenarios.len() {
        let s = &report.scenarios[idx];
        let tag = scenario_tag(report, idx);
        let _ = writeln!(
            summary,
            "## Load step of {} p.u. in area {} ({tag})\n",
            s.disturbance_magnitude,
            s.disturbance_area.number()
        );
        for kind in TableKind::ALL {
            let csv = table_csv(report, idx, kind);
            let path = dir.join(format!("{}_{tag}.csv", kind.stem()));
            write_file(&path, csv.as_bytes())?;
            written.push(path);

            let _ = writeln!(summary, "### {}\n", kind.title());
            for (i, line) in csv.lines().enumerate() {
                let cells: Vec<&str> = line.split(',').collect();
                let _ = writeln!(summary, "| {} |", cells.join(" | "));
                if i == 0 {
                    let _ = writeln!(summary, "|{}", "---|".repeat(cells.len()));
                }
            }
            summary.push('\n');
        }
    }

    summary.push_str("## Tuned gains\n\n");
    for c in &report.controllers {
        let _ = writeln!(summary, "### {} ({})\n", c.name, c.kind);
        match &c.tuning {
            Tuning::Swarm { best_fitness, evaluations, .. } => {
                let _ = writeln!(summary, "Swarm fitness (summed ISE): {best_fitness:.6e} after {evaluations} evaluations.\n");
            }
            Tuning::Riccati { residual, iterations, newton_steps } => {
                let _ = writeln!(
                    summary,
                    "Riccati residual {residual:.3e} ({iterations} integration steps, {newton_steps} Newton steps).\n"
                );
            }
        }
        summary.push_str("```\n");
        summary.push_str(&gain_csv(c.gain.matrix()));
        summary.push_str("```\n\n");
    }

    let path = dir.join("summary.md");
    write_file(&path, summary.as_bytes())?;
    written.push(path);
    Ok(written)
}

/// Two-column `t value` trace.
pub fn dat_trace(times: &[f64], values: impl Iterator<Item = f64>) -> String {
    let mut out = String::new();
    for (t, v) in times.iter().zip(values) {
        let _ = writeln!(out, "{t:.6} {}", fmt_hz(v));
    }
    out
}

/// One SVG per (scenario, channel) overlaying all controllers, plus `.dat` traces.
pub fn emit_plots(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    if report.runs.is_empty() {
        return Ok(written);
    }
    ensure_dir(dir)?;
    for idx in 0..report.scenarios.len() {
        let s = &report.scenarios[idx];
        for channel in Channel::ALL {
            let tag = delf_tag(report, idx, channel);
            let mut series = Vec::new();
            for c in &report.controllers {
                let Some(run) = report.run(&c.name, idx) else { continue };
                let traj = &run.trajectory;
                let path = dir.join(format!("{tag}_{}.dat", c.name));
                write_file(&path, dat_trace(&traj.times, traj.channel(channel)).as_bytes())?;
                written.push(path);
                series.push(Series {
                    label: &c.name,
                    points: traj.times.iter().copied().zip(traj.channel(channel)).collect(),
                });
            }
            if series.is_empty() {
                continue;
            }
            let title = format!(
                "Δf{} vs t, {}% load step in area {}",
                channel.area().number(),
                s.disturbance_magnitude * 100.0,
                s.disturbance_area.number()
            );
            let y_label = format!("Δf{} (Hz)", channel.area().number());
            let chart = LineChart {
                title: &title,
                x_label: "t (s)",
                y_label: &y_label,
                series,
            };
            let path = dir.join(format!("{tag}.svg"));
            write_file(&path, chart.render().as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Full-state CSV per (controller, scenario).
pub fn emit_trajectories(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for run in &report.runs {
        let path = dir.join(format!(
            "traj_{}_{}.csv",
            run.controller,
            scenario_tag(report, run.scenario_index)
        ));
        let mut buf = Vec::new();
        run.trajectory
            .write_csv(&mut buf)
            .map_err(|e| CliError::io("formatting trajectory", e))?;
        write_file(&path, &buf)?;
        written.push(path);
    }
    Ok(written)
}

/// 2 × 11 comma-separated gain, shortest round-trip decimals.
pub fn gain_csv(k: &Matrix) -> String {
    let mut out = String::new();
    for r in 0..k.rows() {
        let row: Vec<String> = k.row(r).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_gain_csv(text: &str, path: &Path) -> Result<FeedbackGain, CliError> {
    let err = |message: String| CliError::GainFile {
        path: path.to_path_buf(),
        message,
    };
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| err(format!("line {}: `{}`: {e}", n + 1, v.trim())))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        if row.len() != 11 {
            return Err(err(format!("line {}: expected 11 columns, got {}", n + 1, row.len())));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(err(format!("line {}: non-finite entry", n + 1)));
        }
        rows.push(row);
    }
    if rows.len() != 2 {
        return Err(err(format!("expected 2 rows, got {}", rows.len())));
    }
    FeedbackGain::full(Matrix::from_rows(&rows)).map_err(|e| err(e.to_string()))
}

pub fn read_gain_file(path: &Path) -> Result<FeedbackGain, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    parse_gain_csv(&text, path)
}

/// `gain_<name>.csv` for every controller and `convergence_<name>.csv` for swarms.
pub fn emit_gains(report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    for c in &report.controllers {
        let path = dir.join(format!("gain_{}.csv", c.name));
        write_file(&path, gain_csv(c.gain.matrix()).as_bytes())?;
        written.push(path);
        if let Tuning::Swarm { history, .. } = &c.tuning {
            let path = dir.join(format!("convergence_{}.csv", c.name));
            write_file(&path, convergence_lines(history).as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}

/// `iter,gbest_fitness` lines, iterations counted from 1.
pub fn convergence_lines(history: &[f64]) -> String {
    let mut out = String::from("iter,gbest_fitness\n");
    for (i, f) in history.iter().enumerate() {
        let _ = writeln!(out, "{},{f:e}", i + 1);
    }
    out
}

pub fn config_hash(cfg: &RunConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical().as_bytes()))
}

pub fn emit_manifest(cfg: &RunConfig, report: &ComparisonReport, dir: &Path) -> Result<PathBuf, CliError> {
    ensure_dir(dir)?;
    let mut out = String::new();
    let _ = writeln!(out, "config_sha256 = {}", config_hash(cfg));
    let _ = writeln!(out, "seed = {}", cfg.seed);
    let _ = writeln!(out, "settling_band_hz = {}", cfg.settling_band);
    let _ = writeln!(out, "scenarios = {}", report.scenarios.len());
    for c in &report.controllers {
        let mask = match c.gain.mask() {
            GainMask::Full => "full",
            GainMask::IntegralOnly => "integral_only",
        };
        let _ = writeln!(out, "\n[controller {}]\nkind = {}\nmask = {mask}", c.name, c.kind);
        match &c.tuning {
            Tuning::Swarm { best_fitness, evaluations, .. } => {
                let _ = writeln!(out, "best_fitness = {best_fitness:e}\nevaluations = {evaluations}");
            }
            Tuning::Riccati { residual, iterations, newton_steps } => {
                let _ = writeln!(
                    out,
                    "care_residual = {residual:e}\nintegration_steps = {iterations}\nnewton_steps = {newton_steps}"
                );
            }
        }
        out.push_str("gain =\n");
        out.push_str(&gain_csv(c.gain.matrix()));
    }
    let path = dir.join("run-manifest");
    write_file(&path, out.as_bytes())?;
    Ok(path)
}

/// Every output of a comparison run.
pub fn emit_all(cfg: &RunConfig, report: &ComparisonReport, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut written = emit_tables(report, dir)?;
    written.extend(emit_plots(report, dir)?);
    written.extend(emit_trajectories(report, dir)?);
    written.extend(emit_gains(report, dir)?);
    written.push(emit_manifest(cfg, report, dir)?);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compare::run_comparison;
    use crate::config::parse_config;

    fn small_report(extra: &str) -> (RunConfig, ComparisonReport) {
        let text = format!(
            "seed = 1\n[pso]\npopulation = 4\niterations = 2\n[fitness]\nhorizon = 5.0\n{extra}"
        );
        let cfg = parse_config(&text).unwrap();
        let report = run_comparison(&cfg, &mut ()).unwrap();
        (cfg, report)
    }

    #[test]
    fn single_controller_table_has_one_data_column() {
        let (_, report) = small_report(
            "[[controllers]]\nkind = \"lqr_pi\"\n[[scenarios]]\narea = 1\nhorizon = 10.0\n",
        );
        let dir = tempfile::tempdir().unwrap();
        emit_tables(&report, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("undershoot_area1.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "response,lqr_pi");
        assert!(lines[1].starts_with("delf11,"));
        assert!(lines[2].starts_with("delf21,"));
        assert_eq!(lines[1].split(',').count(), 2);
    }

    #[test]
    fn repeated_area_gets_distinct_files() {
        let (_, report) = small_report(
            "[[controllers]]\nkind = \"lqr_pi\"\n[[scenarios]]\narea = 2\nhorizon = 10.0\n[[scenarios]]\narea = 2\nmagnitude = 0.02\nhorizon = 10.0\n",
        );
        let dir = tempfile::tempdir().unwrap();
        emit_all(&parse_config("").unwrap(), &report, dir.path()).unwrap();
        assert!(dir.path().join("overshoot_area2.csv").exists());
        assert!(dir.path().join("overshoot_area2_2.csv").exists());
        assert!(dir.path().join("delf12_2.svg").exists());
        assert!(dir.path().join("delf22_2_lqr_pi.dat").exists());
    }

    #[test]
    fn empty_report_writes_no_plots() {
        let (_, mut report) = small_report("[[controllers]]\nkind = \"lqr_pi\"\n[[scenarios]]\narea = 1\nhorizon = 10.0\n");
        report.runs.clear();
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_plots(&report, &dir.path().join("plots")).unwrap().is_empty());
        assert!(!dir.path().join("plots").exists());
    }

    #[test]
    fn gain_csv_round_trips() {
        let (_, report) = small_report("[[controllers]]\nkind = \"lqr_pi\"\n[[scenarios]]\narea = 1\nhorizon = 10.0\n");
        let g = &report.controllers[0].gain;
        let text = gain_csv(g.matrix());
        let back = parse_gain_csv(&text, Path::new("k.csv")).unwrap();
        assert_eq!(back.matrix(), g.matrix());
        assert!(parse_gain_csv("1,2,3\n", Path::new("k.csv")).is_err());
        let bad = parse_gain_csv(&text.replace(",", ";"), Path::new("k.csv")).unwrap_err();
        assert_eq!(bad.exit_code(), 3);
    }

    #[test]
    fn dat_starts_at_zero_state() {
        let (_, report) = small_report("[[controllers]]\nkind = \"lqr_pi\"\n[[scenarios]]\narea = 1\nhorizon = 10.0\n");
        let dir = tempfile::tempdir().unwrap();
        emit_plots(&report, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("delf11_lqr_pi.dat")).unwrap();
        assert_eq!(text.lines().next().unwrap(), "0.000000 0.000000");
        assert_eq!(text.lines().count(), 2001);
    }

    #[test]
    fn convergence_stream_format() {
        assert_eq!(convergence_lines(&[2.0, 1.5]), "iter,gbest_fitness\n1,2e0\n2,1.5e0\n");
    }
}
