use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DatasetMeta, Frame, Result, TrajectoryDataset, TrajectoryError, VehicleId, VehicleTrack, DT_TOLERANCE};

pub const CANONICAL_HEADER: [&str; 11] = [
    "vehicle_id",
    "t",
    "x",
    "y",
    "vx",
    "vy",
    "ax",
    "ay",
    "lane_id",
    "length",
    "width",
];

/// JSON written next to every canonical CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub dt: f64,
    pub lane_count: u32,
    pub lane_centers_y: Vec<f64>,
    pub source: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ego_ids: Vec<VehicleId>,
}

/// `tracks.csv` -> `tracks.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrajectoryError + '_ {
    move |source| TrajectoryError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes the canonical CSV and its sidecar. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_canonical_csv(ds: &TrajectoryDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "{}", CANONICAL_HEADER.join(",")).map_err(io_err(path))?;
    for track in &ds.tracks {
        for f in &track.frames {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                track.vehicle_id, f.t, f.x, f.y, f.vx, f.vy, f.ax, f.ay, f.lane_id, track.length, track.width
            )
            .map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))?;

    let sidecar = Sidecar {
        dt: ds.dt,
        lane_count: ds.lane_count,
        lane_centers_y: ds.lane_centers_y.clone(),
        source: ds.meta.source.clone(),
        ego_ids: ds.meta.ego_ids.clone(),
    };
    let side = sidecar_path(path);
    let text = serde_json::to_string_pretty(&sidecar)?;
    std::fs::write(&side, text + "\n").map_err(io_err(&side))?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(raw: &str, row: usize, column: &str) -> Result<T> {
    raw.trim().parse().map_err(|_| TrajectoryError::BadValue {
        row,
        column: column.to_string(),
        value: raw.to_string(),
    })
}

/// Reads a canonical CSV. When a sidecar is present it supplies `dt` and the
/// lane layout; otherwise both are inferred from the rows.
pub fn parse_canonical_csv(path: &Path) -> Result<TrajectoryDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => TrajectoryError::Io {
                path: path.display().to_string(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
            },
            _ => TrajectoryError::Csv(e),
        })?;
    let headers = reader.headers()?.clone();
    let mut index = [0usize; 11];
    for (slot, name) in index.iter_mut().zip(CANONICAL_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| TrajectoryError::MissingColumn(name.to_string()))?;
    }

    // Insertion order of first appearance is kept for the track list.
    let mut order: Vec<VehicleId> = Vec::new();
    let mut tracks: BTreeMap<VehicleId, VehicleTrack> = BTreeMap::new();
    let mut last_row: BTreeMap<VehicleId, usize> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let get = |k: usize| record.get(index[k]).unwrap_or("");
        let vehicle_id: VehicleId = parse_field(get(0), row, CANONICAL_HEADER[0])?;
        let mut vals = [0.0f64; 7];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = parse_field(get(j + 1), row, CANONICAL_HEADER[j + 1])?;
        }
        let lane_id: u32 = parse_field(get(8), row, CANONICAL_HEADER[8])?;
        let length: f64 = parse_field(get(9), row, CANONICAL_HEADER[9])?;
        let width: f64 = parse_field(get(10), row, CANONICAL_HEADER[10])?;
        let frame = Frame {
            t: vals[0],
            x: vals[1],
            y: vals[2],
            vx: vals[3],
            vy: vals[4],
            ax: vals[5],
            ay: vals[6],
            lane_id,
        };
        let track = tracks.entry(vehicle_id).or_insert_with(|| {
            order.push(vehicle_id);
            VehicleTrack {
                vehicle_id,
                frames: Vec::new(),
                length,
                width,
            }
        });
        if let Some(prev) = track.frames.last() {
            if frame.t <= prev.t {
                return Err(TrajectoryError::NonMonotonicTime { vehicle_id, row });
            }
        }
        track.frames.push(frame);
        last_row.insert(vehicle_id, row);
    }
    if tracks.is_empty() {
        return Err(TrajectoryError::EmptyFile);
    }
    let tracks: Vec<VehicleTrack> = order.iter().map(|id| tracks.remove(id).unwrap()).collect();

    let side = sidecar_path(path);
    let sidecar: Option<Sidecar> = if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(io_err(&side))?;
        Some(serde_json::from_str(&text)?)
    } else {
        None
    };

    let dt = match &sidecar {
        Some(s) => s.dt,
        None => infer_dt(&tracks)?,
    };
    check_spacing(&tracks, dt, &last_row)?;

    let (lane_count, lane_centers_y) = match &sidecar {
        Some(s) => (s.lane_count, s.lane_centers_y.clone()),
        None => infer_lanes(&tracks)?,
    };
    let ds = TrajectoryDataset {
        tracks,
        dt,
        lane_count,
        lane_centers_y,
        meta: DatasetMeta {
            source: sidecar
                .as_ref()
                .map(|s| s.source.clone())
                .unwrap_or_else(|| "canonical".into()),
            si_units: true,
            ego_ids: sidecar.map(|s| s.ego_ids).unwrap_or_default(),
        },
    };
    ds.validate()?;
    Ok(ds)
}

fn infer_dt(tracks: &[VehicleTrack]) -> Result<f64> {
    tracks
        .iter()
        .find(|t| t.frames.len() >= 2)
        .map(|t| t.frames[1].t - t.frames[0].t)
        .ok_or(TrajectoryError::InvalidDt(f64::NAN))
}

fn check_spacing(tracks: &[VehicleTrack], dt: f64, last_row: &BTreeMap<VehicleId, usize>) -> Result<()> {
    for track in tracks {
        for pair in track.frames.windows(2) {
            let step = pair[1].t - pair[0].t;
            if (step - dt).abs() > DT_TOLERANCE {
                return Err(TrajectoryError::InconsistentDt {
                    vehicle_id: track.vehicle_id,
                    row: last_row.get(&track.vehicle_id).copied().unwrap_or(0),
                    expected: dt,
                    found: step,
                });
            }
        }
    }
    Ok(())
}

/// Lane count from the highest lane id; centers from the mean `y` per lane.
pub(crate) fn infer_lanes(tracks: &[VehicleTrack]) -> Result<(u32, Vec<f64>)> {
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for f in tracks.iter().flat_map(|t| &t.frames) {
        let e = sums.entry(f.lane_id).or_insert((0.0, 0));
        e.0 += f.y;
        e.1 += 1;
    }
    let lane_count = sums.keys().next_back().map_or(0, |m| m + 1);
    let mut centers = Vec::with_capacity(lane_count as usize);
    for lane in 0..lane_count {
        let (sum, n) = sums.get(&lane).ok_or(TrajectoryError::UnknownLaneCenter(lane))?;
        centers.push(sum / *n as f64);
    }
    Ok((lane_count, centers))
}
