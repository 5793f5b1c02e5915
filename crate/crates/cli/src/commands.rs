//! The four subcommands as library functions.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dvlnav::eval_runner::{svg_trajectory, sweep, write_scenarios_csv, write_summary_csv, SweepReport};
use dvlnav::set_transformer::{StModel, StWeights, TrainReport, TrainingWindow};
use dvlnav::sim_data::{build_windows, export_mission, generate_mission, ingest_external, MissionRecord};
use dvlnav::{NavError, Result};
use rayon::prelude::*;

use crate::config::{Manifest, Resolved};

pub const WEIGHTS_FILE: &str = "weights.json";
pub const LOSS_FILE: &str = "loss.csv";
pub const SCENARIOS_FILE: &str = "scenarios.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPORT_FILE: &str = "report.md";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| NavError::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| NavError::io(path, e))
}

/// Per-mission noise seed derived from the run seed.
fn mission_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64 + 1)
}

/// Generates every mission of the corpus and writes its CSVs and the
/// manifest to `dir`. Returns the files written.
pub fn simulate(r: &Resolved, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let ids = r.mission_ids();
    let missions = r
        .config
        .corpus
        .missions
        .par_iter()
        .enumerate()
        .map(|(i, spec)| {
            generate_mission(
                &ids[i],
                spec,
                &r.config.imu_noise,
                &r.config.dvl.errors,
                &r.geometry,
                mission_seed(r.seed, i),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let provenance = r.provenance();
    let mut files = Vec::with_capacity(3 * missions.len() + 1);
    for m in &missions {
        files.extend(export_mission(m, dir, Some(&provenance))?);
    }
    let manifest = dir.join(Manifest::FILE);
    write(&manifest, &r.manifest().to_toml()?)?;
    files.push(manifest);
    Ok(files)
}

/// Reads the named missions from a directory written by [`simulate`] or
/// laid out the same way.
pub fn load_missions(dir: &Path, ids: &[String]) -> Result<Vec<MissionRecord>> {
    ids.par_iter()
        .map(|id| {
            let path = |kind: &str| dir.join(format!("{id}_{kind}.csv"));
            let mut m = ingest_external(&path("imu"), &path("dvl"), &path("gt"))?;
            m.id = id.clone();
            Ok(m)
        })
        .collect()
}

/// Training windows of the manifest's training missions.
pub fn training_windows(r: &Resolved, data_dir: &Path) -> Result<Vec<TrainingWindow>> {
    let manifest = Manifest::load(data_dir)?;
    let missions = load_missions(data_dir, &manifest.train_missions)?;
    let mut windows = Vec::new();
    for m in &missions {
        windows.extend(build_windows(m, r.windows)?);
    }
    Ok(windows)
}

/// Trains the network and writes the weights and the per-epoch loss history.
pub fn train(r: &Resolved, data_dir: &Path) -> Result<TrainReport> {
    let windows = training_windows(r, data_dir)?;
    let (weights, report) = dvlnav::set_transformer::train(&windows, &r.hyper, r.seed)?;
    create_dir(&r.out)?;
    write(&r.out.join(WEIGHTS_FILE), &weights.to_json_tagged(&r.hash))?;
    let mut csv = r.provenance().comment();
    csv.push_str("\nepoch,train_loss,val_mse\n");
    for e in &report.history {
        let _ = writeln!(csv, "{},{},{}", e.epoch, e.train_loss, e.val_mse);
    }
    write(&r.out.join(LOSS_FILE), &csv)?;
    Ok(report)
}

/// Runs the outage sweep on the manifest's evaluation missions.
pub fn evaluate(r: &Resolved, data_dir: &Path, weights: &Path, svg: bool) -> Result<SweepReport> {
    let model = StModel::new(StWeights::load(weights)?);
    let manifest = Manifest::load(data_dir)?;
    let missions = load_missions(data_dir, &manifest.eval_missions)?;
    let report = sweep(&missions, &model, &r.geometry, &r.eval, r.seed)?;
    create_dir(&r.out)?;
    let provenance = r.provenance();
    write_scenarios_csv(&report, &r.out.join(SCENARIOS_FILE), Some(&provenance))?;
    write_summary_csv(&report, &r.out.join(SUMMARY_FILE), Some(&provenance))?;
    if svg {
        let plots = r.out.join("plots");
        create_dir(&plots)?;
        for run in &report.runs {
            let id = &report.mission_ids[run.scenario.mission];
            let name = format!("{id}_{}s_at_{}s.svg", run.scenario.t_duration, run.scenario.t_init);
            let body = format!(
                "<!-- config_hash={},seed={} -->\n{}",
                r.hash,
                r.seed,
                svg_trajectory(run, id)
            );
            write(&plots.join(name), &body)?;
        }
    }
    Ok(report)
}

/// Renders `summary.csv` from an evaluation directory as a Markdown table,
/// writes it to `report.md` and returns it.
pub fn report(out: &Path) -> Result<String> {
    let path = out.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| NavError::io(&path, e))?;
    let mut lines = text.lines();
    let mut provenance = None;
    let mut header = None;
    let mut consumed = 0;
    for line in lines.by_ref() {
        consumed += 1;
        if let Some(comment) = line.strip_prefix('#') {
            provenance = Some(comment.trim().to_string());
        } else {
            header = Some(line);
            break;
        }
    }
    let header: Vec<&str> = header
        .ok_or_else(|| NavError::Schema {
            path: path.clone(),
            msg: "missing header".into(),
        })?
        .split(',')
        .collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| NavError::Schema {
            path: path.clone(),
            msg: format!("missing column `{name}`"),
        })
    };
    let cols = [
        "mission",
        "duration",
        "st_vel_rmse",
        "ins_vel_rmse",
        "vel_improvement_pct",
        "st_pos_rmse",
        "ins_pos_rmse",
        "pos_improvement_pct",
        "st_afpe",
        "ins_afpe",
        "afpe_improvement_pct",
    ]
    .iter()
    .map(|c| col(c))
    .collect::<Result<Vec<_>>>()?;

    let mut md = String::new();
    if let Some(p) = provenance {
        let _ = writeln!(md, "<!-- {p} -->");
    }
    md.push_str("# Outage evaluation\n\n");
    md.push_str(
        "| Mission | Outage [s] | Vel RMSE ST [m/s] | Vel RMSE INS [m/s] | Δ vel [%] \
         | Pos RMSE ST [m] | Pos RMSE INS [m] | Δ pos [%] | AFPE ST [m] | AFPE INS [m] | Δ AFPE [%] |\n",
    );
    md.push_str(&format!("|{}\n", "---|".repeat(cols.len())));
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(NavError::Data {
                path: path.clone(),
                line: consumed + n + 1,
                msg: format!("expected {} fields, found {}", header.len(), cells.len()),
            });
        }
        let row: Vec<String> = cols
            .iter()
            .enumerate()
            .map(|(j, &c)| match (j, cells[c].parse::<f64>()) {
                (0 | 1, _) | (_, Err(_)) => cells[c].to_string(),
                (4 | 7 | 10, Ok(v)) => format!("{v:.1}"),
                (_, Ok(v)) => format!("{v:.3}"),
            })
            .collect();
        let _ = writeln!(md, "| {} |", row.join(" | "));
    }
    write(&out.join(REPORT_FILE), &md)?;
    Ok(md)
}
