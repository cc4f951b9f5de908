//! Schema adapters for HighD-like and NGSIM-like track exports.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;

use super::{
    DatasetMeta, Frame, Result, TrajectoryDataset, TrajectoryError, VehicleId, VehicleTrack, MIN_TRACK_FRAMES,
};

pub const HIGHD_RATE_HZ: f64 = 25.0;
pub const NGSIM_RATE_HZ: f64 = 10.0;
pub const FEET_TO_METERS: f64 = 0.3048;

const DEFAULT_LENGTH: f64 = 4.5;
const DEFAULT_WIDTH: f64 = 1.8;

struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers = reader.headers()?.iter().map(str::to_string).collect();
        let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
        if rows.is_empty() {
            return Err(TrajectoryError::EmptyFile);
        }
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.optional(name)
            .ok_or_else(|| TrajectoryError::MissingColumn(name.to_string()))
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn value<T: std::str::FromStr>(&self, row: usize, col: usize) -> Result<T> {
        let raw = self.rows[row].get(col).unwrap_or("");
        raw.parse().map_err(|_| TrajectoryError::BadValue {
            row: row + 2,
            column: self.headers[col].clone(),
            value: raw.to_string(),
        })
    }
}

/// One parsed row before grouping. `frame` is the native frame index.
struct RawRow {
    row: usize,
    frame: i64,
    frame_data: Frame,
    native_lane: i64,
}

struct RawTrack {
    rows: Vec<RawRow>,
    length: f64,
    width: f64,
}

/// Sorts each vehicle's rows by frame index, rejects duplicated indices and
/// gaps, drops tracks too short to use, and remaps native lane ids to
/// `0..n` ordered by mean lateral position.
fn assemble(mut raw: BTreeMap<VehicleId, RawTrack>, dt: f64, source: &str) -> Result<TrajectoryDataset> {
    for (id, track) in raw.iter_mut() {
        track.rows.sort_by_key(|r| r.frame);
        for pair in track.rows.windows(2) {
            if pair[1].frame <= pair[0].frame {
                return Err(TrajectoryError::NonMonotonicTime {
                    vehicle_id: *id,
                    row: pair[1].row,
                });
            }
            if pair[1].frame != pair[0].frame + 1 {
                return Err(TrajectoryError::InconsistentDt {
                    vehicle_id: *id,
                    row: pair[1].row,
                    expected: dt,
                    found: (pair[1].frame - pair[0].frame) as f64 * dt,
                });
            }
        }
    }
    raw.retain(|id, track| {
        let keep = track.rows.len() >= MIN_TRACK_FRAMES;
        if !keep {
            warn!("dropping vehicle {id}: only {} frames", track.rows.len());
        }
        keep
    });
    if raw.is_empty() {
        return Err(TrajectoryError::EmptyFile);
    }

    let mut lane_sums: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    for r in raw.values().flat_map(|t| &t.rows) {
        let e = lane_sums.entry(r.native_lane).or_insert((0.0, 0));
        e.0 += r.frame_data.y;
        e.1 += 1;
    }
    let mut lanes: Vec<(i64, f64)> = lane_sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    lanes.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let remap: BTreeMap<i64, u32> = lanes.iter().enumerate().map(|(i, (k, _))| (*k, i as u32)).collect();

    let tracks = raw
        .into_iter()
        .map(|(vehicle_id, track)| VehicleTrack {
            vehicle_id,
            frames: track
                .rows
                .iter()
                .map(|r| Frame {
                    t: r.frame as f64 * dt,
                    lane_id: remap[&r.native_lane],
                    ..r.frame_data
                })
                .collect(),
            length: track.length,
            width: track.width,
        })
        .collect();
    let ds = TrajectoryDataset {
        tracks,
        dt,
        lane_count: lanes.len() as u32,
        lane_centers_y: lanes.iter().map(|(_, c)| *c).collect(),
        meta: DatasetMeta {
            source: source.to_string(),
            si_units: true,
            ego_ids: Vec::new(),
        },
    };
    ds.validate()?;
    Ok(ds)
}

/// HighD-style `tracks.csv`: frame index at 25 Hz, SI values. When `width`
/// and `height` (vehicle length and width in HighD terms) are present the
/// bounding-box corner is moved to the vehicle center. Tracks driving toward
/// negative `x` are rotated by 180 degrees so every vehicle travels along +x.
pub fn import_highd_like(path: &Path) -> Result<TrajectoryDataset> {
    let table = Table::read(path)?;
    let c_frame = table.column("frame")?;
    let c_id = table.column("id")?;
    let c_x = table.column("x")?;
    let c_y = table.column("y")?;
    let c_vx = table.column("xVelocity")?;
    let c_vy = table.column("yVelocity")?;
    let c_ax = table.column("xAcceleration")?;
    let c_ay = table.column("yAcceleration")?;
    let c_lane = table.column("laneId")?;
    let c_len = table.optional("width");
    let c_wid = table.optional("height");

    let mut raw: BTreeMap<VehicleId, RawTrack> = BTreeMap::new();
    for row in 0..table.rows.len() {
        let id: VehicleId = table.value(row, c_id)?;
        let length = match c_len {
            Some(c) => table.value(row, c)?,
            None => DEFAULT_LENGTH,
        };
        let width = match c_wid {
            Some(c) => table.value(row, c)?,
            None => DEFAULT_WIDTH,
        };
        let (dx, dy) = if c_len.is_some() && c_wid.is_some() {
            (0.5 * length, 0.5 * width)
        } else {
            (0.0, 0.0)
        };
        let frame_data = Frame {
            t: 0.0,
            x: table.value::<f64>(row, c_x)? + dx,
            y: table.value::<f64>(row, c_y)? + dy,
            vx: table.value(row, c_vx)?,
            vy: table.value(row, c_vy)?,
            ax: table.value(row, c_ax)?,
            ay: table.value(row, c_ay)?,
            lane_id: 0,
        };
        let entry = raw.entry(id).or_insert_with(|| RawTrack {
            rows: Vec::new(),
            length,
            width,
        });
        entry.rows.push(RawRow {
            row: row + 2,
            frame: table.value(row, c_frame)?,
            frame_data,
            native_lane: table.value(row, c_lane)?,
        });
    }
    for track in raw.values_mut() {
        let mean_vx = track.rows.iter().map(|r| r.frame_data.vx).sum::<f64>() / track.rows.len() as f64;
        if mean_vx < 0.0 {
            for r in &mut track.rows {
                let f = &mut r.frame_data;
                f.x = -f.x;
                f.y = -f.y;
                f.vx = -f.vx;
                f.vy = -f.vy;
                f.ax = -f.ax;
                f.ay = -f.ay;
            }
        }
    }
    assemble(raw, 1.0 / HIGHD_RATE_HZ, "highd")
}

/// First derivative by central differences, one-sided at the ends.
fn differentiate(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|k| match k {
            _ if n < 2 => 0.0,
            0 => (values[1] - values[0]) / dt,
            k if k == n - 1 => (values[k] - values[k - 1]) / dt,
            k => (values[k + 1] - values[k - 1]) / (2.0 * dt),
        })
        .collect()
}

/// NGSIM-style export in feet at 10 Hz. `Local_Y` runs along the road and
/// becomes `x`; `Local_X` grows toward the right-hand side of travel and
/// becomes `-y`. Per-axis velocity and acceleration are derived from the
/// converted positions since the schema carries scalar speed only.
pub fn import_ngsim_like(path: &Path) -> Result<TrajectoryDataset> {
    let table = Table::read(path)?;
    let c_id = table.column("Vehicle_ID")?;
    let c_frame = table.column("Frame_ID")?;
    let c_lx = table.column("Local_X")?;
    let c_ly = table.column("Local_Y")?;
    table.column("v_Vel")?;
    table.column("v_Acc")?;
    let c_lane = table.column("Lane_ID")?;
    let c_len = table.optional("v_Length");
    let c_wid = table.optional("v_Width");

    let mut raw: BTreeMap<VehicleId, RawTrack> = BTreeMap::new();
    for row in 0..table.rows.len() {
        let id: VehicleId = table.value(row, c_id)?;
        let length = match c_len {
            Some(c) => table.value::<f64>(row, c)? * FEET_TO_METERS,
            None => DEFAULT_LENGTH,
        };
        let width = match c_wid {
            Some(c) => table.value::<f64>(row, c)? * FEET_TO_METERS,
            None => DEFAULT_WIDTH,
        };
        let frame_data = Frame {
            t: 0.0,
            x: table.value::<f64>(row, c_ly)? * FEET_TO_METERS,
            y: -table.value::<f64>(row, c_lx)? * FEET_TO_METERS,
            vx: 0.0,
            vy: 0.0,
            ax: 0.0,
            ay: 0.0,
            lane_id: 0,
        };
        let entry = raw.entry(id).or_insert_with(|| RawTrack {
            rows: Vec::new(),
            length,
            width,
        });
        entry.rows.push(RawRow {
            row: row + 2,
            frame: table.value(row, c_frame)?,
            frame_data,
            native_lane: table.value(row, c_lane)?,
        });
    }
    let dt = 1.0 / NGSIM_RATE_HZ;
    for track in raw.values_mut() {
        track.rows.sort_by_key(|r| r.frame);
        let xs: Vec<f64> = track.rows.iter().map(|r| r.frame_data.x).collect();
        let ys: Vec<f64> = track.rows.iter().map(|r| r.frame_data.y).collect();
        let vxs = differentiate(&xs, dt);
        let vys = differentiate(&ys, dt);
        let axs = differentiate(&vxs, dt);
        let ays = differentiate(&vys, dt);
        for (k, r) in track.rows.iter_mut().enumerate() {
            r.frame_data.vx = vxs[k];
            r.frame_data.vy = vys[k];
            r.frame_data.ax = axs[k];
            r.frame_data.ay = ays[k];
        }
    }
    assemble(raw, dt, "ngsim")
}
