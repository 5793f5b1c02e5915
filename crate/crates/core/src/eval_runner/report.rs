//! Tabular and graphical output of a sweep.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{RunResult, SweepReport};
use crate::frames::Vec3;
use crate::sim_data::Provenance;
use crate::{NavError, Result};

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| NavError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| NavError::io(path, e))
}

fn header(provenance: Option<&Provenance>) -> String {
    provenance.map(|p| p.comment() + "\n").unwrap_or_default()
}

/// One row per scenario and method.
pub fn write_scenarios_csv(report: &SweepReport, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
    let mut out = header(provenance);
    out.push_str("mission,duration,start,method,vel_rmse,pos_rmse,afpe\n");
    for r in &report.runs {
        let id = &report.mission_ids[r.scenario.mission];
        for (name, m) in [
            ("st_aided", &r.st_aided.metrics),
            ("pure_ins", &r.pure_ins.metrics),
            ("no_outage", &r.reference),
        ] {
            let _ = writeln!(
                out,
                "{id},{},{},{name},{},{},{}",
                r.scenario.t_duration, r.scenario.t_init, m.vel_rmse, m.pos_rmse, m.afpe
            );
        }
    }
    write_text(path, &out)
}

/// Cell means and improvement percentages per mission and duration.
pub fn write_summary_csv(report: &SweepReport, path: &Path, provenance: Option<&Provenance>) -> Result<()> {
    let mut out = header(provenance);
    out.push_str(
        "mission,duration,st_vel_rmse,ins_vel_rmse,vel_improvement_pct,\
         st_pos_rmse,ins_pos_rmse,pos_improvement_pct,st_afpe,ins_afpe,afpe_improvement_pct\n",
    );
    for c in &report.summary {
        let imp = c.improvement();
        let (a, b) = (&c.st_aided, &c.pure_ins);
        let _ = writeln!(
            out,
            "{},{},{},{},{:.2},{},{},{:.2},{},{},{:.2}",
            c.mission,
            c.duration,
            a.vel_rmse,
            b.vel_rmse,
            imp.vel_rmse,
            a.pos_rmse,
            b.pos_rmse,
            imp.pos_rmse,
            a.afpe,
            b.afpe,
            imp.afpe
        );
    }
    write_text(path, &out)
}

/// North/east plot of ground truth and both methods over the scoring window.
pub fn svg_trajectory(run: &RunResult, mission_id: &str) -> String {
    const SIZE: f64 = 480.0;
    const MARGIN: f64 = 40.0;
    let series: [(&str, &str, &[(f64, Vec3)]); 3] = [
        ("ground truth", "#222222", &run.gt_track),
        ("predicted DVL", "#1f77b4", &run.st_aided.track),
        ("INS only", "#d62728", &run.pure_ins.track),
    ];
    let (mut min_e, mut max_e, mut min_n, mut max_n) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for (_, _, track) in &series {
        for (_, p) in track.iter() {
            min_n = min_n.min(p.x);
            max_n = max_n.max(p.x);
            min_e = min_e.min(p.y);
            max_e = max_e.max(p.y);
        }
    }
    let span = (max_e - min_e).max(max_n - min_n).max(1.0);
    let scale = (SIZE - 2.0 * MARGIN) / span;
    let x = |e: f64| MARGIN + (e - min_e) * scale;
    let y = |n: f64| SIZE - MARGIN - (n - min_n) * scale;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="12">{} outage {} s at t={} s (east right, north up, {:.1} m across)</text>"#,
        mission_id, run.scenario.t_duration, run.scenario.t_init, span
    );
    for (i, (label, color, track)) in series.iter().enumerate() {
        let points: Vec<String> = track
            .iter()
            .map(|(_, p)| format!("{:.2},{:.2}", x(p.y), y(p.x)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = SIZE - 12.0 - 14.0 * (2 - i) as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{MARGIN}" y="{ly}" font-family="sans-serif" font-size="11" fill="{color}">{label}</text>"#
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dvl_model::{beam_directions, DvlErrorParams, DEFAULT_BEAM_PITCH};
    use crate::eval_runner::{sweep, EvalConfig, PersistLastPredictor};
    use crate::sim_data::{corpus_specs, generate_mission, ImuNoiseParams};

    #[test]
    fn writes_tables_and_plot() {
        let geom = beam_directions(DEFAULT_BEAM_PITCH).unwrap();
        let spec = corpus_specs(1, 140.0, 2).remove(0);
        let m = generate_mission("lawn", &spec, &ImuNoiseParams::default(), &DvlErrorParams::default(), &geom, 1)
            .unwrap();
        let cfg = EvalConfig {
            durations: vec![30.0],
            n_starts: 1,
            ..Default::default()
        };
        let rep = sweep(&[m], &PersistLastPredictor, &geom, &cfg, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let prov = Provenance {
            config_hash: "abc".into(),
            seed: 0,
        };
        let rows = dir.path().join("scenarios.csv");
        let summary = dir.path().join("summary.csv");
        write_scenarios_csv(&rep, &rows, Some(&prov)).unwrap();
        write_summary_csv(&rep, &summary, None).unwrap();
        let rows = fs::read_to_string(rows).unwrap();
        assert!(rows.starts_with("# config_hash=abc,seed=0\nmission,duration"));
        assert_eq!(rows.lines().count(), 2 + 3);
        let summary = fs::read_to_string(summary).unwrap();
        assert_eq!(summary.lines().count(), 2);
        let svg = svg_trajectory(&rep.runs[0], "lawn");
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 3);
    }
}
