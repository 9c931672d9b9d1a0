//! Grid codebook: the discretisation of position and walking direction into
//! space tokens.
//!
//! The scene rectangle is split into `rows × cols` cells and every cell into
//! five orientation bins (four cardinal sectors plus a static bin), giving a
//! vocabulary of `rows × cols × 5` tokens.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of orientation bins per grid cell.
pub const ORIENTATION_BINS: usize = 5;

/// Default speed (scene units per second) below which an observation is static.
pub const DEFAULT_STATIC_THRESHOLD: f64 = 0.1;

/// Orientation sector of an observation.
///
/// The cardinal sectors are 90° wide and centred on the axes. On an exact
/// diagonal the bin with the lower index wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Orientation {
    East = 0,
    North = 1,
    West = 2,
    South = 3,
    Static = 4,
}

impl Orientation {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Orientation::East),
            1 => Some(Orientation::North),
            2 => Some(Orientation::West),
            3 => Some(Orientation::South),
            4 => Some(Orientation::Static),
            _ => None,
        }
    }

    /// Classifies a velocity vector. Comparisons are done on components so
    /// that the diagonal ties are resolved exactly.
    pub fn of_velocity(vx: f64, vy: f64, static_threshold: f64) -> Self {
        let speed = vx.hypot(vy);
        if !(speed >= static_threshold) || speed == 0.0 {
            return Orientation::Static;
        }
        let (ax, ay) = (vx.abs(), vy.abs());
        if ax > ay {
            if vx > 0.0 {
                Orientation::East
            } else {
                Orientation::West
            }
        } else if ay > ax {
            if vy > 0.0 {
                Orientation::North
            } else {
                Orientation::South
            }
        } else {
            // diagonal: the two adjacent sectors tie, lower index wins
            match (vx > 0.0, vy > 0.0) {
                (true, true) => Orientation::East,
                (false, true) => Orientation::North,
                (false, false) => Orientation::West,
                (true, false) => Orientation::East,
            }
        }
    }
}

/// Axis-aligned scene rectangle in scene units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Bounds {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self { min_x, min_y, max_x, max_y }
    }

    pub fn unit() -> Self {
        Self::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    /// Smallest rectangle holding every point, padded by `margin` on each side.
    pub fn enclosing<I: IntoIterator<Item = (f64, f64)>>(points: I, margin: f64) -> Option<Self> {
        let mut it = points.into_iter();
        let (x0, y0) = it.next()?;
        let mut b = Bounds::new(x0, y0, x0, y0);
        for (x, y) in it {
            b.min_x = b.min_x.min(x);
            b.min_y = b.min_y.min(y);
            b.max_x = b.max_x.max(x);
            b.max_y = b.max_y.max(y);
        }
        b.min_x -= margin;
        b.min_y -= margin;
        b.max_x += margin;
        b.max_y += margin;
        Some(b)
    }
}

/// What to do with a position that falls outside the scene rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutOfBounds {
    /// Snap to the nearest boundary cell and flag the token.
    #[default]
    Clamp,
    Reject,
}

/// A space token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Token {
    pub cell: u32,
    /// Set when the position was outside the bounds and got clamped.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    rows: usize,
    cols: usize,
    bounds: Bounds,
    static_threshold: f64,
    #[serde(default)]
    out_of_bounds: OutOfBounds,
}

impl Codebook {
    pub fn new(rows: usize, cols: usize, bounds: Bounds, static_threshold: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid_config("grid rows and cols must be at least 1"));
        }
        let finite = [bounds.min_x, bounds.min_y, bounds.max_x, bounds.max_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(bounds.width() > 0.0) || !(bounds.height() > 0.0) {
            return Err(Error::invalid_config(format!(
                "degenerate scene bounds {bounds:?}"
            )));
        }
        if !(static_threshold >= 0.0) || !static_threshold.is_finite() {
            return Err(Error::invalid_config("static speed threshold must be >= 0"));
        }
        let vocab = rows
            .checked_mul(cols)
            .and_then(|v| v.checked_mul(ORIENTATION_BINS))
            .filter(|&v| v <= u32::MAX as usize)
            .ok_or_else(|| Error::invalid_config("codebook vocabulary too large"))?;
        debug_assert!(vocab > 0);
        Ok(Self { rows, cols, bounds, static_threshold, out_of_bounds: OutOfBounds::Clamp })
    }

    pub fn with_out_of_bounds(mut self, policy: OutOfBounds) -> Self {
        self.out_of_bounds = policy;
        self
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn static_threshold(&self) -> f64 {
        self.static_threshold
    }

    pub fn out_of_bounds(&self) -> OutOfBounds {
        self.out_of_bounds
    }

    /// Vocabulary size `V = rows × cols × 5`.
    pub fn vocab_size(&self) -> usize {
        self.rows * self.cols * ORIENTATION_BINS
    }

    /// Flattens `(row, col, orientation)` into a token index.
    pub fn cell_index(&self, row: usize, col: usize, orientation: Orientation) -> u32 {
        debug_assert!(row < self.rows && col < self.cols);
        ((row * self.cols + col) * ORIENTATION_BINS + orientation.index()) as u32
    }

    /// Inverse of [`Codebook::cell_index`].
    pub fn decompose(&self, cell: u32) -> Option<(usize, usize, Orientation)> {
        let cell = cell as usize;
        if cell >= self.vocab_size() {
            return None;
        }
        let orient = Orientation::from_index(cell % ORIENTATION_BINS)?;
        let rc = cell / ORIENTATION_BINS;
        Some((rc / self.cols, rc % self.cols, orient))
    }

    /// Centre of the grid cell holding `cell`.
    pub fn cell_center(&self, cell: u32) -> Option<(f64, f64)> {
        let (row, col, _) = self.decompose(cell)?;
        let cw = self.bounds.width() / self.cols as f64;
        let ch = self.bounds.height() / self.rows as f64;
        Some((
            self.bounds.min_x + (col as f64 + 0.5) * cw,
            self.bounds.min_y + (row as f64 + 0.5) * ch,
        ))
    }

    /// Maps a position and velocity to a space token.
    pub fn tokenize(&self, position: (f64, f64), velocity: (f64, f64)) -> Result<Token> {
        let (x, y) = position;
        if !x.is_finite() || !y.is_finite() || !velocity.0.is_finite() || !velocity.1.is_finite() {
            return Err(Error::invalid_input("non-finite position or velocity"));
        }
        let inside = self.bounds.contains(x, y);
        if !inside && self.out_of_bounds == OutOfBounds::Reject {
            return Err(Error::invalid_input(format!(
                "position ({x}, {y}) outside scene bounds"
            )));
        }
        let col = axis_bin(x, self.bounds.min_x, self.bounds.width(), self.cols);
        let row = axis_bin(y, self.bounds.min_y, self.bounds.height(), self.rows);
        let orient = Orientation::of_velocity(velocity.0, velocity.1, self.static_threshold);
        Ok(Token { cell: self.cell_index(row, col, orient), clamped: !inside })
    }
}

fn axis_bin(v: f64, min: f64, extent: f64, bins: usize) -> usize {
    let f = ((v - min) / extent * bins as f64).floor();
    if f <= 0.0 {
        0
    } else {
        (f as usize).min(bins - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_sizes() {
        let b = Bounds::new(0.0, 0.0, 640.0, 480.0);
        assert_eq!(Codebook::new(40, 40, b, 0.1).unwrap().vocab_size(), 8000);
        assert_eq!(Codebook::new(120, 120, b, 0.1).unwrap().vocab_size(), 72000);
        assert_eq!(Codebook::new(1, 1, Bounds::unit(), 0.0).unwrap().vocab_size(), 5);
    }

    #[test]
    fn degenerate_bounds_rejected() {
        let flat = Bounds::new(0.0, 0.0, 1.0, 0.0);
        assert!(matches!(Codebook::new(2, 2, flat, 0.1), Err(Error::InvalidConfig(_))));
        assert!(Codebook::new(0, 2, Bounds::unit(), 0.1).is_err());
        assert!(Codebook::new(2, 2, Bounds::unit(), -1.0).is_err());
    }

    #[test]
    fn axis_aligned_and_static() {
        let cb = Codebook::new(3, 3, Bounds::unit(), 0.1).unwrap();
        let t = cb.tokenize((0.5, 0.5), (1.0, 0.0)).unwrap();
        assert_eq!(cb.decompose(t.cell), Some((1, 1, Orientation::East)));
        assert!(!t.clamped);
        for dir in [(0.05, 0.0), (0.0, -0.05), (-0.03, 0.04)] {
            let t = cb.tokenize((0.5, 0.5), dir).unwrap();
            assert_eq!(cb.decompose(t.cell).unwrap().2, Orientation::Static);
        }
    }

    #[test]
    fn diagonal_ties_go_to_lower_bin() {
        // each 45° boundary sits between two sectors; enumerate them and
        // check the winner is the lower-indexed neighbour
        let cases = [
            ((1.0, 1.0), [Orientation::East, Orientation::North]),
            ((-1.0, 1.0), [Orientation::North, Orientation::West]),
            ((-1.0, -1.0), [Orientation::West, Orientation::South]),
            ((1.0, -1.0), [Orientation::East, Orientation::South]),
        ];
        for ((vx, vy), neighbours) in cases {
            let got = Orientation::of_velocity(vx, vy, 0.1);
            let expect = *neighbours.iter().min_by_key(|o| o.index()).unwrap();
            assert_eq!(got, expect, "velocity ({vx}, {vy})");
            // nudging off the diagonal lands in one of the two neighbours
            for eps in [1e-9, -1e-9] {
                let o = Orientation::of_velocity(vx + eps, vy, 0.1);
                assert!(neighbours.contains(&o));
            }
        }
    }

    #[test]
    fn out_of_bounds_policies() {
        let cb = Codebook::new(4, 4, Bounds::unit(), 0.1).unwrap();
        let t = cb.tokenize((1.5, -0.2), (0.0, 1.0)).unwrap();
        assert!(t.clamped);
        assert_eq!(cb.decompose(t.cell), Some((0, 3, Orientation::North)));
        let strict = cb.with_out_of_bounds(OutOfBounds::Reject);
        assert!(strict.tokenize((1.5, -0.2), (0.0, 1.0)).is_err());
        // upper edge is inside and maps to the last cell
        let t = strict.tokenize((1.0, 1.0), (0.0, 0.0)).unwrap();
        assert_eq!(strict.decompose(t.cell), Some((3, 3, Orientation::Static)));
    }

    #[test]
    fn tokenize_is_total_on_a_lattice() {
        let cb = Codebook::new(5, 7, Bounds::new(-2.0, 3.0, 8.0, 9.0), 0.2).unwrap();
        let mut seen = std::collections::HashSet::new();
        for i in 0..=40 {
            for j in 0..=40 {
                let p = (-2.0 + 10.0 * i as f64 / 40.0, 3.0 + 6.0 * j as f64 / 40.0);
                for v in [(1.0, 0.2), (0.0, 1.0), (-3.0, 0.5), (0.1, -2.0), (0.0, 0.0)] {
                    let a = cb.tokenize(p, v).unwrap();
                    assert_eq!(a, cb.tokenize(p, v).unwrap());
                    assert!((a.cell as usize) < cb.vocab_size());
                    seen.insert(a.cell);
                }
            }
        }
        assert_eq!(seen.len(), cb.vocab_size());
    }
}
