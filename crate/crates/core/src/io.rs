//! CSV readers and writers for truth, reports, tracks, metrics and dumps.
//!
//! Floats are written in shortest round-trip form, so identical values always
//! give identical bytes.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dynamics::WeightedCloud;
use crate::error::{Error, Result};
use crate::eval::{StepMetrics, TrackStep};
use crate::gmm::{GaussianMixture, Peak};
use crate::scenario::GroundTruth;
use crate::terrain::TerrainMap;
use crate::types::{NoiseSpec, Report, TargetState};

#[derive(Debug, Serialize, Deserialize)]
struct TruthRow {
    step: usize,
    vehicle_id: u32,
    x: f64,
    y: f64,
    speed: f64,
    heading: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReportRow {
    step: usize,
    obs_id: usize,
    x: f64,
    y: f64,
    speed: f64,
    heading: f64,
    sx: f64,
    sy: f64,
    ss: f64,
    sh: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    step: usize,
    n_hat: f64,
    peak_idx: i64,
    peak_x: Option<f64>,
    peak_y: Option<f64>,
    peak_mass: Option<f64>,
}

#[derive(Debug, Serialize)]
struct MixtureRow {
    step: usize,
    comp: usize,
    weight: f64,
    mx: f64,
    my: f64,
    cxx: f64,
    cxy: f64,
    cyy: f64,
}

#[derive(Debug, Serialize)]
struct ParticleRow {
    step: usize,
    x: f64,
    y: f64,
    speed: f64,
    heading: f64,
    weight: f64,
}

fn row_error(line: u64, e: impl std::fmt::Display) -> Error {
    Error::parse(line as usize, e.to_string())
}

fn records<T: for<'de> Deserialize<'de>, R: Read>(reader: R) -> Result<Vec<(u64, T)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let rec: T = rec?;
        out.push((out.len() as u64 + 2, rec));
    }
    Ok(out)
}

pub fn write_truth<W: Write>(truth: &GroundTruth, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (step, alive) in truth.states.iter().enumerate() {
        for (id, s) in alive {
            w.serialize(TruthRow {
                step,
                vehicle_id: *id,
                x: s.x,
                y: s.y,
                speed: s.speed,
                heading: s.heading,
            })?;
        }
    }
    if truth.states.iter().all(Vec::is_empty) {
        w.write_record(["step", "vehicle_id", "x", "y", "speed", "heading"])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a truth CSV. The step count is one past the largest step present;
/// `dt` is not stored in the file and is left at zero.
pub fn read_truth<R: Read>(reader: R) -> Result<GroundTruth> {
    let rows: Vec<(u64, TruthRow)> = records(reader)?;
    let steps = rows.iter().map(|(_, r)| r.step + 1).max().unwrap_or(0);
    let mut states = vec![Vec::new(); steps];
    for (line, r) in rows {
        if !(r.x.is_finite() && r.y.is_finite() && r.speed.is_finite() && r.heading.is_finite()) {
            return Err(row_error(line, "non-finite state"));
        }
        states[r.step].push((r.vehicle_id, TargetState::new(r.x, r.y, r.speed, r.heading)));
    }
    for s in &mut states {
        s.sort_by_key(|(id, _)| *id);
    }
    Ok(GroundTruth { dt: 0.0, states })
}

pub fn write_reports<W: Write>(reports: &[Vec<Report>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut any = false;
    for (step, batch) in reports.iter().enumerate() {
        for (obs_id, r) in batch.iter().enumerate() {
            let [sx, sy, ss, sh] = r.noise.as_array();
            let o = r.observed;
            w.serialize(ReportRow {
                step,
                obs_id,
                x: o.x,
                y: o.y,
                speed: o.speed,
                heading: o.heading,
                sx,
                sy,
                ss,
                sh,
            })?;
            any = true;
        }
    }
    if !any {
        w.write_record([
            "step", "obs_id", "x", "y", "speed", "heading", "sx", "sy", "ss", "sh",
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a report CSV grouped by step, with at least `min_steps` groups.
/// Within a step, reports keep their `obs_id` order.
pub fn read_reports<R: Read>(reader: R, min_steps: usize) -> Result<Vec<Vec<Report>>> {
    let rows: Vec<(u64, ReportRow)> = records(reader)?;
    let steps = rows
        .iter()
        .map(|(_, r)| r.step + 1)
        .max()
        .unwrap_or(0)
        .max(min_steps);
    let mut out: Vec<Vec<(usize, Report)>> = vec![Vec::new(); steps];
    for (line, r) in rows {
        if ![r.x, r.y, r.speed, r.heading].iter().all(|v| v.is_finite()) {
            return Err(row_error(line, "non-finite observation"));
        }
        let noise = NoiseSpec::new(r.sx, r.sy, r.ss, r.sh).map_err(|e| row_error(line, e))?;
        let observed = TargetState::new(r.x, r.y, r.speed, r.heading);
        out[r.step].push((r.obs_id, Report::new(r.step, observed, noise)));
    }
    Ok(out
        .into_iter()
        .map(|mut b| {
            b.sort_by_key(|(id, _)| *id);
            b.into_iter().map(|(_, r)| r).collect()
        })
        .collect())
}

/// One row per peak, or a single `peak_idx = -1` row when a step has none.
pub fn write_tracks<W: Write>(tracks: &[TrackStep], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for t in tracks {
        if t.peaks.is_empty() {
            w.serialize(TrackRow {
                step: t.step,
                n_hat: t.n_hat,
                peak_idx: -1,
                peak_x: None,
                peak_y: None,
                peak_mass: None,
            })?;
        }
        for (i, p) in t.peaks.iter().enumerate() {
            w.serialize(TrackRow {
                step: t.step,
                n_hat: t.n_hat,
                peak_idx: i as i64,
                peak_x: Some(p.x),
                peak_y: Some(p.y),
                peak_mass: Some(p.mass),
            })?;
        }
    }
    if tracks.is_empty() {
        w.write_record(["step", "n_hat", "peak_idx", "peak_x", "peak_y", "peak_mass"])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a track CSV into one entry per step from 0 to the largest step.
pub fn read_tracks<R: Read>(reader: R) -> Result<Vec<TrackStep>> {
    let rows: Vec<(u64, TrackRow)> = records(reader)?;
    let steps = rows.iter().map(|(_, r)| r.step + 1).max().unwrap_or(0);
    let mut out: Vec<TrackStep> = (0..steps)
        .map(|step| TrackStep {
            step,
            n_hat: 0.0,
            peaks: Vec::new(),
        })
        .collect();
    for (line, r) in rows {
        let t = &mut out[r.step];
        t.n_hat = r.n_hat;
        if r.peak_idx < 0 {
            continue;
        }
        match (r.peak_x, r.peak_y, r.peak_mass) {
            (Some(x), Some(y), Some(m)) => t.peaks.push(Peak::new(x, y, m)),
            _ => return Err(row_error(line, "peak row without position or mass")),
        }
    }
    Ok(out)
}

/// Columns `err_v<id>` follow the union of vehicle ids, ascending.
pub fn write_metrics<W: Write>(metrics: &[StepMetrics], writer: W) -> Result<()> {
    let mut ids: Vec<u32> = metrics
        .iter()
        .flat_map(|m| m.errors.iter().map(|(id, _)| *id))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "step".to_string(),
        "n_true".to_string(),
        "n_hat".to_string(),
    ];
    header.extend(ids.iter().map(|id| format!("err_v{id}")));
    w.write_record(&header)?;
    for m in metrics {
        let mut rec = vec![
            m.step.to_string(),
            m.n_true.to_string(),
            m.n_hat.to_string(),
        ];
        rec.extend(
            ids.iter()
                .map(|&id| m.error(id).map(|e| e.to_string()).unwrap_or_default()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Appends the components of one step's mixture.
pub fn write_mixture<W: Write>(
    w: &mut csv::Writer<W>,
    step: usize,
    mixture: &GaussianMixture,
) -> Result<()> {
    for (comp, c) in mixture.components.iter().enumerate() {
        w.serialize(MixtureRow {
            step,
            comp,
            weight: c.weight,
            mx: c.mean[0],
            my: c.mean[1],
            cxx: c.cov[0][0],
            cxy: c.cov[0][1],
            cyy: c.cov[1][1],
        })?;
    }
    Ok(())
}

/// Appends every particle of one step.
pub fn write_particles<W: Write>(
    w: &mut csv::Writer<W>,
    step: usize,
    cloud: &WeightedCloud,
) -> Result<()> {
    for (s, weight) in cloud.iter() {
        w.serialize(ParticleRow {
            step,
            x: s.x,
            y: s.y,
            speed: s.speed,
            heading: s.heading,
            weight,
        })?;
    }
    Ok(())
}

/// Particle mass binned onto the terrain grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    mass: Vec<f64>,
}

impl Heatmap {
    pub fn new(map: &TerrainMap) -> Self {
        Self {
            width: map.width(),
            height: map.height(),
            mass: vec![0.0; map.width() * map.height()],
        }
    }

    /// Adds the cloud's mass; particles outside the map are ignored.
    pub fn accumulate(&mut self, map: &TerrainMap, cloud: &WeightedCloud) {
        for (s, w) in cloud.iter() {
            if let Some((ix, iy)) = map.cell_index(s.x, s.y) {
                self.mass[iy * self.width + ix] += w;
            }
        }
    }

    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.mass[iy * self.width + ix]
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Sparse CSV `ix,iy,mass` over non-empty cells, row 0 at the south.
    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["ix", "iy", "mass"])?;
        for iy in 0..self.height {
            for ix in 0..self.width {
                let m = self.get(ix, iy);
                if m > 0.0 {
                    w.write_record([ix.to_string(), iy.to_string(), m.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Parses `key=value` lines, ignoring blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(i + 1, format!("expected key=value, got {line:?}")))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terrain::TerrainClass;

    fn truth() -> GroundTruth {
        GroundTruth {
            dt: 5.0,
            states: vec![
                vec![(0, TargetState::new(1.5, 2.0, 3.0, 0.1))],
                vec![
                    (0, TargetState::new(2.5, 2.0, 3.0, 0.1)),
                    (2, TargetState::new(-1.0, 0.3, 0.0, -3.0)),
                ],
            ],
        }
    }

    #[test]
    fn truth_round_trip() {
        let mut buf = Vec::new();
        write_truth(&truth(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("step,vehicle_id,x,y,speed,heading\n"));
        let back = read_truth(buf.as_slice()).unwrap();
        assert_eq!(back.states, truth().states);
    }

    #[test]
    fn reports_round_trip_and_pad() {
        let r = |step, x| Report::new(step, TargetState::new(x, 0.0, 1.0, 0.5), NoiseSpec::REPORT);
        let reports = vec![vec![r(0, 1.0), r(0, 2.0)], vec![], vec![r(2, 3.0)]];
        let mut buf = Vec::new();
        write_reports(&reports, &mut buf).unwrap();
        assert!(buf.starts_with(b"step,obs_id,x,y,speed,heading,sx,sy,ss,sh\n"));
        assert_eq!(read_reports(buf.as_slice(), 0).unwrap(), reports);
        assert_eq!(read_reports(buf.as_slice(), 5).unwrap().len(), 5);
    }

    #[test]
    fn bad_report_row_names_line() {
        let text = "step,obs_id,x,y,speed,heading,sx,sy,ss,sh\n0,0,1,2,3,0,50,50,1,0.3\n1,0,1,2,3,0,-5,50,1,0.3\n";
        match read_reports(text.as_bytes(), 0) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_step_gets_sentinel_row() {
        let tracks = vec![
            TrackStep {
                step: 0,
                n_hat: 0.0,
                peaks: vec![],
            },
            TrackStep {
                step: 1,
                n_hat: 1.25,
                peaks: vec![Peak::new(10.0, 20.0, 1.25)],
            },
        ];
        let mut buf = Vec::new();
        write_tracks(&tracks, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            text,
            "step,n_hat,peak_idx,peak_x,peak_y,peak_mass\n0,0.0,-1,,,\n1,1.25,0,10.0,20.0,1.25\n"
        );
        assert_eq!(read_tracks(buf.as_slice()).unwrap(), tracks);
    }

    #[test]
    fn metrics_leave_absent_errors_blank() {
        let m = vec![
            StepMetrics {
                step: 0,
                n_true: 2,
                n_hat: 1.5,
                errors: vec![(0, Some(12.5)), (1, None)],
            },
            StepMetrics {
                step: 1,
                n_true: 1,
                n_hat: 1.0,
                errors: vec![(1, Some(3.0))],
            },
        ];
        let mut buf = Vec::new();
        write_metrics(&m, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "step,n_true,n_hat,err_v0,err_v1\n0,2,1.5,12.5,\n1,1,1,,3\n"
        );
    }

    #[test]
    fn heatmap_bins_mass() {
        let map = TerrainMap::uniform(4, 4, 10.0, (0.0, 0.0), TerrainClass::Field).unwrap();
        let cloud = WeightedCloud::new(
            vec![
                TargetState::new(5.0, 5.0, 0.0, 0.0),
                TargetState::new(6.0, 4.0, 0.0, 0.0),
                TargetState::new(35.0, 15.0, 0.0, 0.0),
                TargetState::new(99.0, 0.0, 0.0, 0.0),
            ],
            vec![0.25, 0.25, 0.5, 1.0],
        )
        .unwrap();
        let mut h = Heatmap::new(&map);
        h.accumulate(&map, &cloud);
        assert_eq!(h.get(0, 0), 0.5);
        assert_eq!(h.get(3, 1), 0.5);
        assert_eq!(h.total(), 1.0);
    }

    #[test]
    fn key_values() {
        let kv = parse_key_values("# c\na=1\n\n b = x y \n").unwrap();
        assert_eq!(
            kv,
            vec![("a".into(), "1".into()), ("b".into(), "x y".into())]
        );
        assert!(matches!(
            parse_key_values("a=1\nnope"),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
