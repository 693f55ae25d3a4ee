//! Discrete terrain maps and the per-class traversal probabilities used to
//! weight particles.
//!
//! Text format:
//!
//! ```text
//! width height cell_size origin_x origin_y
//! pT road field forest          (optional)
//! RRFFT...                      (height rows, north first)
//! ```
//!
//! `R` is road, `F` field and `T` forest (trees). Whitespace between cell
//! characters is ignored. The origin is the south-west corner of the grid.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TerrainClass {
    Road,
    Field,
    Forest,
}

impl TerrainClass {
    pub const ALL: [TerrainClass; 3] = [
        TerrainClass::Road,
        TerrainClass::Field,
        TerrainClass::Forest,
    ];

    pub fn symbol(self) -> char {
        match self {
            TerrainClass::Road => 'R',
            TerrainClass::Field => 'F',
            TerrainClass::Forest => 'T',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'R' => Some(TerrainClass::Road),
            'F' => Some(TerrainClass::Field),
            'T' => Some(TerrainClass::Forest),
            _ => None,
        }
    }
}

/// Probability that a vehicle chooses to travel in each terrain class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainProbabilities {
    pub road: f64,
    pub field: f64,
    pub forest: f64,
}

impl Default for TerrainProbabilities {
    fn default() -> Self {
        Self {
            road: 0.66,
            field: 0.33,
            forest: 0.01,
        }
    }
}

impl TerrainProbabilities {
    pub fn new(road: f64, field: f64, forest: f64) -> Result<Self> {
        for (name, p) in [("road", road), ("field", field), ("forest", forest)] {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::invalid(format!(
                    "p_T({name}) must lie in (0, 1], got {p}"
                )));
            }
        }
        Ok(Self {
            road,
            field,
            forest,
        })
    }

    #[inline]
    pub fn get(&self, class: TerrainClass) -> f64 {
        match class {
            TerrainClass::Road => self.road,
            TerrainClass::Field => self.field,
            TerrainClass::Forest => self.forest,
        }
    }
}

/// Immutable terrain grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainMap {
    width: usize,
    height: usize,
    cell_size: f64,
    origin_x: f64,
    origin_y: f64,
    /// Row-major, row 0 is the southern-most row.
    cells: Vec<TerrainClass>,
    p_t: TerrainProbabilities,
}

impl TerrainMap {
    /// Build a map from cells listed row by row starting at the southern edge.
    pub fn new(
        width: usize,
        height: usize,
        cell_size: f64,
        origin: (f64, f64),
        cells: Vec<TerrainClass>,
        p_t: TerrainProbabilities,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("map dimensions must be positive"));
        }
        if !(cell_size.is_finite() && cell_size > 0.0) {
            return Err(Error::invalid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(Error::NonFinite("map origin"));
        }
        if cells.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        Ok(Self {
            width,
            height,
            cell_size,
            origin_x: origin.0,
            origin_y: origin.1,
            cells,
            p_t,
        })
    }

    /// A map filled with a single class.
    pub fn uniform(
        width: usize,
        height: usize,
        cell_size: f64,
        origin: (f64, f64),
        class: TerrainClass,
    ) -> Result<Self> {
        Self::new(
            width,
            height,
            cell_size,
            origin,
            vec![class; width * height],
            TerrainProbabilities::default(),
        )
    }

    pub fn load(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());

        let (header_line, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                header_line,
                format!(
                    "header needs 5 fields (width height cell_size origin_x origin_y), got {}",
                    fields.len()
                ),
            ));
        }
        let width: usize = parse_field(header_line, fields[0], "width")?;
        let height: usize = parse_field(header_line, fields[1], "height")?;
        let cell_size: f64 = parse_field(header_line, fields[2], "cell_size")?;
        let origin_x: f64 = parse_field(header_line, fields[3], "origin_x")?;
        let origin_y: f64 = parse_field(header_line, fields[4], "origin_y")?;
        if width == 0 || height == 0 || !(cell_size > 0.0) {
            return Err(Error::parse(
                header_line,
                "dimensions and cell size must be positive",
            ));
        }

        let mut p_t = TerrainProbabilities::default();
        let mut rows_north_first: Vec<Vec<TerrainClass>> = Vec::with_capacity(height);
        let mut last_line = header_line;
        for (line_no, line) in lines {
            last_line = line_no;
            if rows_north_first.is_empty() && line.starts_with("pT") {
                let vals: Vec<&str> = line.split_whitespace().skip(1).collect();
                if vals.len() != 3 {
                    return Err(Error::parse(line_no, "pT line needs three probabilities"));
                }
                let road = parse_field(line_no, vals[0], "p_T(road)")?;
                let field = parse_field(line_no, vals[1], "p_T(field)")?;
                let forest = parse_field(line_no, vals[2], "p_T(forest)")?;
                p_t = TerrainProbabilities::new(road, field, forest)
                    .map_err(|e| Error::parse(line_no, e.to_string()))?;
                continue;
            }
            if rows_north_first.len() == height {
                return Err(Error::parse(line_no, format!("more than {height} rows")));
            }
            let mut row = Vec::with_capacity(width);
            for c in line.chars().filter(|c| !c.is_whitespace()) {
                let class = TerrainClass::from_symbol(c).ok_or_else(|| {
                    Error::parse(line_no, format!("unknown cell character {c:?}"))
                })?;
                row.push(class);
            }
            if row.len() != width {
                return Err(Error::parse(
                    line_no,
                    format!("row has {} cells, header says {width}", row.len()),
                ));
            }
            rows_north_first.push(row);
        }
        if rows_north_first.len() != height {
            return Err(Error::parse(
                last_line,
                format!("expected {height} rows, found {}", rows_north_first.len()),
            ));
        }

        let cells = rows_north_first.into_iter().rev().flatten().collect();
        Self::new(width, height, cell_size, (origin_x, origin_y), cells, p_t)
    }

    /// Serialize in the text format accepted by [`TerrainMap::load`].
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height + 64);
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            self.width, self.height, self.cell_size, self.origin_x, self.origin_y
        );
        let _ = writeln!(
            out,
            "pT {} {} {}",
            self.p_t.road, self.p_t.field, self.p_t.forest
        );
        for iy in (0..self.height).rev() {
            out.extend(self.row(iy).iter().map(|c| c.symbol()));
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn origin(&self) -> (f64, f64) {
        (self.origin_x, self.origin_y)
    }
    pub fn probabilities(&self) -> &TerrainProbabilities {
        &self.p_t
    }

    pub fn with_probabilities(mut self, p_t: TerrainProbabilities) -> Self {
        self.p_t = p_t;
        self
    }

    /// Extent in meters as `(east-west, north-south)`.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.cell_size,
            self.height as f64 * self.cell_size,
        )
    }

    /// Cells of one row, `iy = 0` being the southern edge.
    pub fn row(&self, iy: usize) -> &[TerrainClass] {
        &self.cells[iy * self.width..(iy + 1) * self.width]
    }

    pub fn cell(&self, ix: usize, iy: usize) -> TerrainClass {
        self.cells[iy * self.width + ix]
    }

    /// Center of cell `(ix, iy)` in world coordinates.
    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin_x + (ix as f64 + 0.5) * self.cell_size,
            self.origin_y + (iy as f64 + 0.5) * self.cell_size,
        )
    }

    /// Grid index containing `(x, y)`, or `None` outside the map.
    pub fn cell_index(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin_x) / self.cell_size).floor();
        let fy = ((y - self.origin_y) / self.cell_size).floor();
        // NaN fails both comparisons and lands outside.
        if fx >= 0.0 && fy >= 0.0 && fx < self.width as f64 && fy < self.height as f64 {
            Some((fx as usize, fy as usize))
        } else {
            None
        }
    }

    /// Terrain class at a position. Anything outside the grid is forest.
    #[inline]
    pub fn classify(&self, x: f64, y: f64) -> TerrainClass {
        match self.cell_index(x, y) {
            Some((ix, iy)) => self.cell(ix, iy),
            None => TerrainClass::Forest,
        }
    }

    #[inline]
    pub fn terrain_weight(&self, x: f64, y: f64) -> f64 {
        self.p_t.get(self.classify(x, y))
    }

    /// Fraction of cells of each class, in `TerrainClass::ALL` order.
    pub fn class_fractions(&self) -> [f64; 3] {
        let mut counts = [0usize; 3];
        for c in &self.cells {
            counts[*c as usize] += 1;
        }
        let n = self.cells.len() as f64;
        counts.map(|c| c as f64 / n)
    }
}

impl FromStr for TerrainMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::load(s)
    }
}

fn parse_field<T: FromStr>(line: usize, token: &str, name: &str) -> Result<T> {
    token
        .parse()
        .map_err(|_| Error::parse(line, format!("cannot parse {name} from {token:?}")))
}
