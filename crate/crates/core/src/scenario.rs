//! Ground-truth simulation of scripted vehicles, observer report generation,
//! and a synthetic terrain map generator.
//!
//! Scenario file format (`#` starts a comment):
//!
//! ```text
//! dt = 5
//! steps = 169
//! p_fn = 0.1
//! sigma_r = 50, 50, 1, 0.3927
//! vehicle 0
//! appear = 0
//! disappear = 140
//! speed_mean = 8.3
//! speed_std = 0.1
//! waypoints = 500,5000; 5500,5000; 5000,5500
//! ```

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::sensing::sample_report;
use crate::terrain::{TerrainClass, TerrainMap, TerrainProbabilities};
use crate::types::{NoiseSpec, Report, TargetState};

/// Scripted route of one vehicle. It exists during `[appear_step, disappear_step)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleScript {
    pub id: u32,
    pub appear_step: usize,
    pub disappear_step: usize,
    pub waypoints: Vec<(f64, f64)>,
    pub mean_speed: f64,
    pub speed_std: f64,
}

impl VehicleScript {
    pub fn validate(&self) -> Result<()> {
        if self.appear_step >= self.disappear_step {
            return Err(Error::invalid(format!(
                "vehicle {}: appear step {} must precede disappear step {}",
                self.id, self.appear_step, self.disappear_step
            )));
        }
        if self.waypoints.len() < 2 {
            return Err(Error::invalid(format!(
                "vehicle {}: needs at least two waypoints",
                self.id
            )));
        }
        if self
            .waypoints
            .iter()
            .any(|(x, y)| !(x.is_finite() && y.is_finite()))
        {
            return Err(Error::NonFinite("waypoint"));
        }
        if !(self.mean_speed >= 0.0
            && self.speed_std >= 0.0
            && self.mean_speed.is_finite()
            && self.speed_std.is_finite())
        {
            return Err(Error::invalid(format!(
                "vehicle {}: speeds must be non-negative",
                self.id
            )));
        }
        Ok(())
    }

    pub fn is_alive(&self, step: usize) -> bool {
        (self.appear_step..self.disappear_step).contains(&step)
    }
}

/// Scenario description: timing, observation settings and vehicle scripts.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dt: f64,
    pub steps: usize,
    pub p_fn: f64,
    pub sigma_r: NoiseSpec,
    pub vehicles: Vec<VehicleScript>,
}

/// Map dimensions the bundled scenario is laid out for.
pub const BUNDLED_MAP: (usize, usize, f64) = (400, 400, 25.0);

impl Scenario {
    /// Three vehicles on the road network of `genmap(400, 400, 25, _)`:
    /// 841 s in 5 s steps, one vehicle appearing at 101 s and two leaving at
    /// 687 s and 702 s. Vehicle 0 cuts ~700 m diagonally across the field next
    /// to the central crossroads. Routes are invented; the map is synthetic.
    pub fn bundled() -> Self {
        let dt = 5.0;
        let vehicle =
            |id: u32, appear: f64, disappear: f64, waypoints: Vec<(f64, f64)>| VehicleScript {
                id,
                appear_step: time_to_step(appear, dt),
                disappear_step: time_to_step(disappear, dt),
                waypoints,
                mean_speed: 8.3,
                speed_std: 0.1,
            };
        Self {
            dt,
            steps: steps_for_duration(841.0, dt),
            p_fn: 0.1,
            sigma_r: NoiseSpec::REPORT,
            vehicles: vec![
                vehicle(
                    0,
                    0.0,
                    702.0,
                    vec![
                        (500.0, 5000.0),
                        (5500.0, 5000.0),
                        (5000.0, 5500.0),
                        (5000.0, 9500.0),
                    ],
                ),
                vehicle(
                    1,
                    0.0,
                    687.0,
                    vec![
                        (2000.0, 2000.0),
                        (2000.0, 8000.0),
                        (8000.0, 8000.0),
                        (8000.0, 2000.0),
                    ],
                ),
                vehicle(
                    2,
                    101.0,
                    845.0,
                    vec![
                        (9500.0, 5000.0),
                        (8000.0, 5000.0),
                        (8000.0, 2000.0),
                        (2000.0, 2000.0),
                    ],
                ),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if self.steps == 0 {
            return Err(Error::invalid("steps must be positive"));
        }
        if !(0.0..1.0).contains(&self.p_fn) {
            return Err(Error::invalid(format!(
                "p_fn must lie in [0, 1), got {}",
                self.p_fn
            )));
        }
        if self.vehicles.is_empty() {
            return Err(Error::invalid("scenario has no vehicles"));
        }
        let mut ids = BTreeSet::new();
        for v in &self.vehicles {
            v.validate()?;
            if !ids.insert(v.id) {
                return Err(Error::invalid(format!("duplicate vehicle id {}", v.id)));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut dt = None;
        let mut steps = None;
        let mut p_fn = None;
        let mut sigma_r = None;
        let mut vehicles: Vec<(usize, PartialVehicle)> = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("vehicle") {
                if !rest.is_empty() && !rest.starts_with(char::is_whitespace) {
                    return Err(Error::parse(line_no, format!("unrecognized line {line:?}")));
                }
                let id = rest.trim().parse().map_err(|_| {
                    Error::parse(line_no, format!("bad vehicle id {:?}", rest.trim()))
                })?;
                vehicles.push((
                    line_no,
                    PartialVehicle {
                        id,
                        ..Default::default()
                    },
                ));
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(line_no, format!("expected key = value, got {line:?}"))
            })?;
            let key = key.trim();
            let value = value.trim();
            let num = |name: &str| -> Result<f64> {
                value.parse().map_err(|_| {
                    Error::parse(line_no, format!("cannot parse {name} from {value:?}"))
                })
            };
            let int = |name: &str| -> Result<usize> {
                value.parse().map_err(|_| {
                    Error::parse(line_no, format!("cannot parse {name} from {value:?}"))
                })
            };
            match (vehicles.last_mut(), key) {
                (None, "dt") => dt = Some(num("dt")?),
                (None, "steps") => steps = Some(int("steps")?),
                (None, "p_fn") => p_fn = Some(num("p_fn")?),
                (None, "sigma_r") => {
                    let vals = parse_list(value).map_err(|m| Error::parse(line_no, m))?;
                    let arr: [f64; 4] = vals
                        .try_into()
                        .map_err(|_| Error::parse(line_no, "sigma_r needs four values"))?;
                    sigma_r = Some(
                        NoiseSpec::from_array(arr)
                            .map_err(|e| Error::parse(line_no, e.to_string()))?,
                    );
                }
                (Some((_, v)), "appear") => v.appear = Some(int("appear")?),
                (Some((_, v)), "disappear") => v.disappear = Some(int("disappear")?),
                (Some((_, v)), "speed_mean") => v.speed_mean = Some(num("speed_mean")?),
                (Some((_, v)), "speed_std") => v.speed_std = Some(num("speed_std")?),
                (Some((_, v)), "waypoints") => {
                    let mut pts = Vec::new();
                    for pair in value.split(';').map(str::trim).filter(|p| !p.is_empty()) {
                        let xy = parse_list(pair).map_err(|m| Error::parse(line_no, m))?;
                        if xy.len() != 2 {
                            return Err(Error::parse(
                                line_no,
                                format!("waypoint {pair:?} is not an x,y pair"),
                            ));
                        }
                        pts.push((xy[0], xy[1]));
                    }
                    v.waypoints = Some(pts);
                }
                (_, other) => return Err(Error::parse(line_no, format!("unknown key {other:?}"))),
            }
        }

        let missing = |name: &str| Error::parse(0, format!("missing required key {name:?}"));
        let scenario = Scenario {
            dt: dt.ok_or_else(|| missing("dt"))?,
            steps: steps.ok_or_else(|| missing("steps"))?,
            p_fn: p_fn.unwrap_or(0.1),
            sigma_r: sigma_r.unwrap_or(NoiseSpec::REPORT),
            vehicles: vehicles
                .into_iter()
                .map(|(line, v)| v.finish(line))
                .collect::<Result<_>>()?,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let s = self.sigma_r.as_array();
        let _ = writeln!(out, "dt = {}", self.dt);
        let _ = writeln!(out, "steps = {}", self.steps);
        let _ = writeln!(out, "p_fn = {}", self.p_fn);
        let _ = writeln!(out, "sigma_r = {}, {}, {}, {}", s[0], s[1], s[2], s[3]);
        for v in &self.vehicles {
            let _ = writeln!(out, "\nvehicle {}", v.id);
            let _ = writeln!(out, "appear = {}", v.appear_step);
            let _ = writeln!(out, "disappear = {}", v.disappear_step);
            let _ = writeln!(out, "speed_mean = {}", v.mean_speed);
            let _ = writeln!(out, "speed_std = {}", v.speed_std);
            let pts: Vec<String> = v
                .waypoints
                .iter()
                .map(|(x, y)| format!("{x},{y}"))
                .collect();
            let _ = writeln!(out, "waypoints = {}", pts.join("; "));
        }
        out
    }
}

#[derive(Default)]
struct PartialVehicle {
    id: u32,
    appear: Option<usize>,
    disappear: Option<usize>,
    speed_mean: Option<f64>,
    speed_std: Option<f64>,
    waypoints: Option<Vec<(f64, f64)>>,
}

impl PartialVehicle {
    fn finish(self, line: usize) -> Result<VehicleScript> {
        let need =
            |name: &str| Error::parse(line, format!("vehicle {} is missing {name:?}", self.id));
        let v = VehicleScript {
            id: self.id,
            appear_step: self.appear.ok_or_else(|| need("appear"))?,
            disappear_step: self.disappear.ok_or_else(|| need("disappear"))?,
            mean_speed: self.speed_mean.ok_or_else(|| need("speed_mean"))?,
            speed_std: self.speed_std.unwrap_or(0.0),
            waypoints: self.waypoints.clone().ok_or_else(|| need("waypoints"))?,
        };
        v.validate()
            .map_err(|e| Error::parse(line, e.to_string()))?;
        Ok(v)
    }
}

fn parse_list(value: &str) -> std::result::Result<Vec<f64>, String> {
    value
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| format!("cannot parse number from {t:?}"))
        })
        .collect()
}

/// Step whose time `step * dt` is nearest to `seconds`.
pub fn time_to_step(seconds: f64, dt: f64) -> usize {
    (seconds / dt).round() as usize
}

/// Number of simulated instants in a run of `duration` seconds, counting t = 0.
pub fn steps_for_duration(duration: f64, dt: f64) -> usize {
    (duration / dt).floor() as usize + 1
}

/// True vehicle states, one list per step, ordered by vehicle id.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub dt: f64,
    pub states: Vec<Vec<(u32, TargetState)>>,
}

impl GroundTruth {
    pub fn steps(&self) -> usize {
        self.states.len()
    }

    pub fn at(&self, step: usize) -> &[(u32, TargetState)] {
        self.states.get(step).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vehicle_ids(&self) -> Vec<u32> {
        let ids: BTreeSet<u32> = self.states.iter().flatten().map(|(id, _)| *id).collect();
        ids.into_iter().collect()
    }

    pub fn alive_count(&self, step: usize) -> usize {
        self.at(step).len()
    }
}

/// Position along a waypoint polyline.
struct Cursor<'a> {
    waypoints: &'a [(f64, f64)],
    segment: usize,
    pos: (f64, f64),
}

impl<'a> Cursor<'a> {
    fn new(waypoints: &'a [(f64, f64)]) -> Self {
        Self {
            waypoints,
            segment: 0,
            pos: waypoints[0],
        }
    }

    fn finished(&self) -> bool {
        self.segment + 1 >= self.waypoints.len()
    }

    /// Tangent of the current segment, or of the last one once finished.
    fn heading(&self) -> f64 {
        let mut i = self.segment.min(self.waypoints.len() - 2);
        // Skip zero-length segments.
        while i + 2 < self.waypoints.len() && self.waypoints[i] == self.waypoints[i + 1] {
            i += 1;
        }
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        (b.1 - a.1).atan2(b.0 - a.0)
    }

    fn advance(&mut self, mut distance: f64) {
        while distance > 0.0 && !self.finished() {
            let target = self.waypoints[self.segment + 1];
            let dx = target.0 - self.pos.0;
            let dy = target.1 - self.pos.1;
            let remaining = dx.hypot(dy);
            if distance < remaining {
                let f = distance / remaining;
                self.pos = (self.pos.0 + f * dx, self.pos.1 + f * dy);
                return;
            }
            distance -= remaining;
            self.pos = target;
            self.segment += 1;
        }
    }
}

/// Move every scripted vehicle along its route for `steps` steps.
///
/// Each alive step draws a speed `N(mean_speed, speed_std)` clamped at zero;
/// the vehicle covers `speed * dt` before the next step. A vehicle that reaches
/// its last waypoint stops there (speed 0) until it disappears.
pub fn simulate(
    scripts: &[VehicleScript],
    dt: f64,
    steps: usize,
    stream: &Stream,
) -> Result<GroundTruth> {
    if scripts.is_empty() {
        return Err(Error::invalid("no vehicle scripts"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::invalid(format!("dt must be positive, got {dt}")));
    }
    for s in scripts {
        s.validate()?;
    }
    let mut order: Vec<&VehicleScript> = scripts.iter().collect();
    order.sort_by_key(|s| s.id);

    let mut states = vec![Vec::new(); steps];
    for script in order {
        let mut rng = stream.substream(u64::from(script.id));
        let mut cursor = Cursor::new(&script.waypoints);
        for (step, slot) in states
            .iter_mut()
            .enumerate()
            .take(script.disappear_step.min(steps))
        {
            if step < script.appear_step {
                continue;
            }
            let noise: f64 = rng.sample(StandardNormal);
            let speed = if cursor.finished() {
                0.0
            } else {
                (script.mean_speed + script.speed_std * noise).max(0.0)
            };
            slot.push((
                script.id,
                TargetState::new(cursor.pos.0, cursor.pos.1, speed, cursor.heading()),
            ));
            cursor.advance(speed * dt);
        }
    }
    Ok(GroundTruth { dt, states })
}

/// Observer reports for every step. Each alive vehicle is reported with
/// probability `1 - p_fn`; reports within a step are shuffled.
pub fn generate_reports(
    truth: &GroundTruth,
    p_fn: f64,
    noise: &NoiseSpec,
    stream: &Stream,
) -> Result<Vec<Vec<Report>>> {
    if !(0.0..1.0).contains(&p_fn) {
        return Err(Error::invalid(format!(
            "p_fn must lie in [0, 1), got {p_fn}"
        )));
    }
    let mut out = Vec::with_capacity(truth.steps());
    for (step, alive) in truth.states.iter().enumerate() {
        let step_stream = stream.substream(step as u64);
        let mut reports = Vec::with_capacity(alive.len());
        for (id, state) in alive {
            let mut rng = step_stream.substream(u64::from(*id));
            if rng.uniform() < 1.0 - p_fn {
                reports.push(sample_report(state, noise, step, &mut rng));
            }
        }
        reports.shuffle(&mut step_stream.derive("order"));
        out.push(reports);
    }
    Ok(out)
}

/// Synthetic terrain: a horizontal and a vertical road crossing at the map
/// center, a rectangular ring road through 20% and 80% of the extent, field
/// bands along every road, random field patches, and forest elsewhere.
///
/// Road geometry depends only on the dimensions; the seed only places field
/// patches. Road width grows until roads cover at least 5% of the map. At
/// least four patches are placed, and more until fields cover at least 25%.
pub fn genmap(width: usize, height: usize, cell_size: f64, stream: &Stream) -> Result<TerrainMap> {
    if width == 0 || height == 0 || !(cell_size > 0.0) {
        return Err(Error::invalid("map dimensions must be positive"));
    }
    let n = width * height;
    let mut road_width = 1usize;
    let mut cells = loop {
        let cells = road_layout(width, height, road_width);
        let roads = cells.iter().filter(|c| **c == TerrainClass::Road).count();
        if roads as f64 >= 0.05 * n as f64 || road_width >= width.max(height) {
            break cells;
        }
        road_width += 1;
    };

    // Field bands hugging the roads.
    let band = 3 * road_width;
    let road_mask: Vec<bool> = cells.iter().map(|c| *c == TerrainClass::Road).collect();
    let near_road = dilate(&road_mask, width, height, band);
    for (c, near) in cells.iter_mut().zip(&near_road) {
        if *near && *c == TerrainClass::Forest {
            *c = TerrainClass::Field;
        }
    }

    let mut rng = stream.derive("fields");
    let target_fields = (0.25 * n as f64).ceil() as usize;
    let count_fields =
        |cells: &[TerrainClass]| cells.iter().filter(|c| **c == TerrainClass::Field).count();
    let min_dim = width.min(height) as f64;
    let mut attempts = 0;
    while (attempts < MIN_PATCHES || count_fields(&cells) < target_fields) && attempts < 10_000 {
        attempts += 1;
        let cx = rng.uniform() * width as f64;
        let cy = rng.uniform() * height as f64;
        let rx = (0.03 + 0.07 * rng.uniform()) * min_dim + 1.0;
        let ry = (0.03 + 0.07 * rng.uniform()) * min_dim + 1.0;
        let angle = rng.uniform() * PI;
        let (sin, cos) = angle.sin_cos();
        let reach = rx.max(ry).ceil() as isize;
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let x = cx.floor() as isize + dx;
                let y = cy.floor() as isize + dy;
                if x < 0 || y < 0 || x >= width as isize || y >= height as isize {
                    continue;
                }
                let px = x as f64 + 0.5 - cx;
                let py = y as f64 + 0.5 - cy;
                let u = (px * cos + py * sin) / rx;
                let v = (-px * sin + py * cos) / ry;
                if u * u + v * v <= 1.0 {
                    let c = &mut cells[y as usize * width + x as usize];
                    if *c == TerrainClass::Forest {
                        *c = TerrainClass::Field;
                    }
                }
            }
        }
    }
    TerrainMap::new(
        width,
        height,
        cell_size,
        (0.0, 0.0),
        cells,
        TerrainProbabilities::default(),
    )
}

const MIN_PATCHES: usize = 4;

/// Roads of the given width (in cells) on a forest background.
fn road_layout(width: usize, height: usize, road_width: usize) -> Vec<TerrainClass> {
    let mut cells = vec![TerrainClass::Forest; width * height];
    let half_lo = road_width / 2;
    let half_hi = road_width - half_lo;
    let span =
        |center: usize, limit: usize| center.saturating_sub(half_lo)..(center + half_hi).min(limit);
    let paint_row = |cells: &mut Vec<TerrainClass>, cy: usize, x0: usize, x1: usize| {
        for y in span(cy, height) {
            for x in x0..x1.min(width) {
                cells[y * width + x] = TerrainClass::Road;
            }
        }
    };
    let (mid_x, mid_y) = (width / 2, height / 2);
    let (lo_x, hi_x) = (width / 5, (4 * width) / 5);
    let (lo_y, hi_y) = (height / 5, (4 * height) / 5);

    paint_row(&mut cells, mid_y, 0, width);
    paint_row(&mut cells, lo_y, lo_x, hi_x + half_hi);
    paint_row(&mut cells, hi_y, lo_x, hi_x + half_hi);
    for cx in [mid_x, lo_x, hi_x] {
        let (y0, y1) = if cx == mid_x {
            (0, height)
        } else {
            (lo_y, hi_y + half_hi)
        };
        for y in y0..y1.min(height) {
            for x in span(cx, width) {
                cells[y * width + x] = TerrainClass::Road;
            }
        }
    }
    cells
}

/// Cells within Chebyshev distance `radius` of any set cell.
fn dilate(mask: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    // Separable: rows then columns, via prefix counts.
    let pass = |src: &[bool], len: usize, count: usize, idx: &dyn Fn(usize, usize) -> usize| {
        let mut out = vec![false; src.len()];
        for line in 0..count {
            let mut prefix = vec![0usize; len + 1];
            for i in 0..len {
                prefix[i + 1] = prefix[i] + usize::from(src[idx(line, i)]);
            }
            for i in 0..len {
                let lo = i.saturating_sub(radius);
                let hi = (i + radius + 1).min(len);
                out[idx(line, i)] = prefix[hi] > prefix[lo];
            }
        }
        out
    };
    let rows = pass(mask, width, height, &|line, i| line * width + i);
    pass(&rows, height, width, &|line, i| i * width + line)
}
