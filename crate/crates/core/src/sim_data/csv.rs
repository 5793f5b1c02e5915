//! CSV recording format.
//!
//! * IMU: `t,fx,fy,fz,wx,wy,wz` (s, m/s², rad/s) at 100 Hz
//! * DVL: `t,b1,b2,b3,b4,vx,vy,vz,valid` (s, m/s ×7, 0/1) at 1 Hz; beam
//!   cells may be empty
//! * Ground truth: `t,vn,ve,vd,roll,pitch,yaw,pn,pe,pd` (s, m/s, rad, m)
//!
//! Lines starting with `#` are comments. Files written here begin with one
//! comment line carrying the configuration hash and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::Vector4;

use super::{MissionRecord, DVL_RATE_HZ, IMU_RATE_HZ};
use crate::dvl_model::DvlMeasurement;
use crate::frames::{Rotation, Vec3};
use crate::strapdown::{ImuSample, NavState};
use crate::{NavError, Result};

const IMU_COLUMNS: [&str; 7] = ["t", "fx", "fy", "fz", "wx", "wy", "wz"];
const DVL_COLUMNS: [&str; 9] = ["t", "b1", "b2", "b3", "b4", "vx", "vy", "vz", "valid"];
const GT_COLUMNS: [&str; 10] = ["t", "vn", "ve", "vd", "roll", "pitch", "yaw", "pn", "pe", "pd"];

/// Identifies the configuration that produced a file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    pub fn comment(&self) -> String {
        format!("# config_hash={},seed={}", self.config_hash, self.seed)
    }
}

fn write_table(
    path: &Path,
    provenance: Option<&Provenance>,
    header: &[&str],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let io = |e: std::io::Error| NavError::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    if let Some(p) = provenance {
        writeln!(out, "{}", p.comment()).map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| NavError::io(path, std::io::Error::other(e));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

fn fmt(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| v.to_string()).collect()
}

/// Writes `<id>_imu.csv`, `<id>_dvl.csv` and `<id>_gt.csv` into `dir`.
pub fn export_mission(mission: &MissionRecord, dir: &Path, provenance: Option<&Provenance>) -> Result<[PathBuf; 3]> {
    let paths = [
        dir.join(format!("{}_imu.csv", mission.id)),
        dir.join(format!("{}_dvl.csv", mission.id)),
        dir.join(format!("{}_gt.csv", mission.id)),
    ];
    write_table(
        &paths[0],
        provenance,
        &IMU_COLUMNS,
        mission.imu.iter().map(|s| {
            fmt(&[s.t, s.f_b.x, s.f_b.y, s.f_b.z, s.omega_b.x, s.omega_b.y, s.omega_b.z])
        }),
    )?;
    write_table(
        &paths[1],
        provenance,
        &DVL_COLUMNS,
        mission.dvl.iter().map(|m| {
            let mut row = vec![m.t.to_string()];
            match m.beams {
                Some(b) => row.extend(fmt(b.as_slice())),
                None => row.extend(std::iter::repeat_n(String::new(), 4)),
            }
            let v = &m.body_velocity;
            row.extend(fmt(&[v.x, v.y, v.z]));
            row.push(if m.valid { "1" } else { "0" }.into());
            row
        }),
    )?;
    write_table(
        &paths[2],
        provenance,
        &GT_COLUMNS,
        mission.ground_truth.iter().map(|s| {
            let (roll, pitch, yaw) = s.c_bn.to_euler();
            fmt(&[
                s.t, s.v_n.x, s.v_n.y, s.v_n.z, roll, pitch, yaw, s.p_n.x, s.p_n.y, s.p_n.z,
            ])
        }),
    )?;
    Ok(paths)
}

/// Parsed numeric table: one entry per data row with its 1-based file line.
struct Table {
    rows: Vec<(usize, Vec<Option<f64>>)>,
}

fn read_table(path: &Path, columns: &[&str], optional: &[&str]) -> Result<Table> {
    let file = File::open(path).map_err(|e| NavError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let schema = |msg: String| NavError::Schema {
        path: path.to_path_buf(),
        msg,
    };
    let header = reader
        .headers()
        .map_err(|e| schema(format!("unreadable header: {e}")))?
        .clone();
    let index: Vec<usize> = columns
        .iter()
        .map(|c| {
            header
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| schema(format!("missing column `{c}`")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| NavError::Data {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let values = columns
            .iter()
            .zip(&index)
            .map(|(name, &i)| {
                let cell = record.get(i).unwrap_or("");
                if cell.is_empty() && optional.contains(name) {
                    return Ok(None);
                }
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Some)
                    .ok_or_else(|| NavError::Data {
                        path: path.to_path_buf(),
                        line,
                        msg: format!("column `{name}`: cannot parse {cell:?} as a finite number"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((line, values));
    }
    Ok(Table { rows })
}

/// Timestamps must strictly increase and average to `rate_hz` within 1 %.
fn check_timing(path: &Path, table: &Table, rate_hz: f64) -> Result<()> {
    for pair in table.rows.windows(2) {
        let (_, a) = &pair[0];
        let (line, b) = &pair[1];
        if b[0] <= a[0] {
            return Err(NavError::Data {
                path: path.to_path_buf(),
                line: *line,
                msg: format!("timestamp {} does not increase (previous {})", b[0].unwrap(), a[0].unwrap()),
            });
        }
    }
    let n = table.rows.len();
    if n < 2 {
        return Err(NavError::Data {
            path: path.to_path_buf(),
            line: table.rows.first().map_or(1, |r| r.0),
            msg: "need at least two rows".into(),
        });
    }
    let span = table.rows[n - 1].1[0].unwrap() - table.rows[0].1[0].unwrap();
    let rate = (n - 1) as f64 / span;
    if ((rate - rate_hz) / rate_hz).abs() > 0.01 {
        return Err(NavError::Data {
            path: path.to_path_buf(),
            line: table.rows[n - 1].0,
            msg: format!("mean rate {rate:.4} Hz deviates from {rate_hz} Hz by more than 1%"),
        });
    }
    Ok(())
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>> {
    let table = read_table(path, &IMU_COLUMNS, &[])?;
    check_timing(path, &table, IMU_RATE_HZ)?;
    Ok(table
        .rows
        .iter()
        .map(|(_, v)| {
            let v: Vec<f64> = v.iter().map(|x| x.unwrap()).collect();
            ImuSample {
                t: v[0],
                f_b: Vec3::new(v[1], v[2], v[3]),
                omega_b: Vec3::new(v[4], v[5], v[6]),
            }
        })
        .collect())
}

pub fn read_dvl_csv(path: &Path) -> Result<Vec<DvlMeasurement>> {
    let table = read_table(path, &DVL_COLUMNS, &["b1", "b2", "b3", "b4"])?;
    check_timing(path, &table, DVL_RATE_HZ)?;
    table
        .rows
        .iter()
        .map(|(line, v)| {
            let beams = match (v[1], v[2], v[3], v[4]) {
                (Some(a), Some(b), Some(c), Some(d)) => Some(Vector4::new(a, b, c, d)),
                (None, None, None, None) => None,
                _ => {
                    return Err(NavError::Data {
                        path: path.to_path_buf(),
                        line: *line,
                        msg: "beam columns must be all present or all empty".into(),
                    })
                }
            };
            let valid = match v[8].unwrap() {
                1.0 => true,
                0.0 => false,
                x => {
                    return Err(NavError::Data {
                        path: path.to_path_buf(),
                        line: *line,
                        msg: format!("column `valid` must be 0 or 1, got {x}"),
                    })
                }
            };
            Ok(DvlMeasurement {
                t: v[0].unwrap(),
                beams,
                body_velocity: Vec3::new(v[5].unwrap(), v[6].unwrap(), v[7].unwrap()),
                valid,
                predicted: false,
            })
        })
        .collect()
}

pub fn read_gt_csv(path: &Path) -> Result<Vec<NavState>> {
    let table = read_table(path, &GT_COLUMNS, &[])?;
    check_timing(path, &table, IMU_RATE_HZ)?;
    Ok(table
        .rows
        .iter()
        .map(|(_, v)| {
            let v: Vec<f64> = v.iter().map(|x| x.unwrap()).collect();
            NavState::new(
                v[0],
                Vec3::new(v[1], v[2], v[3]),
                Rotation::from_euler(v[4], v[5], v[6]),
                Vec3::new(v[7], v[8], v[9]),
            )
        })
        .collect())
}

/// Loads a recording. Ground truth must start one IMU period before the
/// first IMU sample and cover every IMU epoch; DVL epochs must fall inside
/// the IMU span.
pub fn ingest_external(imu_path: &Path, dvl_path: &Path, gt_path: &Path) -> Result<MissionRecord> {
    let imu = read_imu_csv(imu_path)?;
    let dvl = read_dvl_csv(dvl_path)?;
    let ground_truth = read_gt_csv(gt_path)?;
    let dt = 1.0 / IMU_RATE_HZ;
    let misaligned = |path: &Path, msg: String| NavError::Schema {
        path: path.to_path_buf(),
        msg,
    };
    if (imu[0].t - dt - ground_truth[0].t).abs() > 0.01 * dt {
        return Err(misaligned(
            gt_path,
            format!(
                "ground truth starts at {} but the first IMU sample at {} implies {}",
                ground_truth[0].t,
                imu[0].t,
                imu[0].t - dt
            ),
        ));
    }
    if ground_truth.len() != imu.len() + 1 {
        return Err(misaligned(
            gt_path,
            format!("expected {} ground-truth rows for {} IMU rows", imu.len() + 1, imu.len()),
        ));
    }
    let (first, last) = (imu[0].t, imu[imu.len() - 1].t);
    if let Some(m) = dvl.iter().find(|m| m.t < first - 1e-9 || m.t > last + 1e-9) {
        return Err(misaligned(dvl_path, format!("DVL epoch {} outside the IMU span", m.t)));
    }
    let id = imu_path
        .file_stem()
        .and_then(|s| s.to_str())
        .map(|s| s.strip_suffix("_imu").unwrap_or(s).to_string())
        .unwrap_or_else(|| "mission".into());
    Ok(MissionRecord {
        id,
        imu_dt: dt,
        dvl_period: 1.0 / DVL_RATE_HZ,
        imu,
        dvl,
        ground_truth,
    })
}
