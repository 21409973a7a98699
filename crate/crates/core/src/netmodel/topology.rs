//! Hexagonal macro-cell layout with optional toroidal (wrap-around) distances.
//!
//! Cells are addressed by axial hex coordinates `(q, r)`; a cell centre sits at
//! `isd * (q + r/2, r*sqrt(3)/2)`. Wrap-around is supported for cluster sizes
//! `N = i² + ij + j²` whose spiral layout forms a complete residue system of
//! the cluster lattice (1, 3, 4, 7, 19, ...).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn polar(radius: f64, degrees: f64) -> Self {
        let rad = degrees.to_radians();
        Self::new(radius * rad.cos(), radius * rad.sin())
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Axial coordinates of the first `n` cells of a hexagonal spiral around the origin.
pub fn spiral_axial(n: usize) -> Vec<(i64, i64)> {
    const WALK: [(i64, i64); 6] = [(-1, 1), (-1, 0), (0, -1), (1, -1), (1, 0), (0, 1)];
    let mut cells = vec![(0, 0)];
    let mut ring = 1i64;
    while cells.len() < n {
        let mut cur = (ring, 0);
        for d in WALK {
            for _ in 0..ring {
                cells.push(cur);
                cur = (cur.0 + d.0, cur.1 + d.1);
            }
        }
        ring += 1;
    }
    cells.truncate(n);
    cells
}

fn axial_to_point(isd: f64, q: i64, r: i64) -> Point {
    Point::new(isd * (q as f64 + r as f64 / 2.0), isd * (r as f64) * SQRT3 / 2.0)
}

#[derive(Debug, Clone)]
struct WrapLattice {
    g1: Point,
    g2: Point,
    inv_det: f64,
}

impl WrapLattice {
    fn reduce(&self, d: Point) -> Point {
        // lattice coordinates of d, then search the nearest images around the rounded point
        let a = (d.x * self.g2.y - d.y * self.g2.x) * self.inv_det;
        let b = (self.g1.x * d.y - self.g1.y * d.x) * self.inv_det;
        let (a0, b0) = (a.round(), b.round());
        let mut best = d;
        let mut best_norm = f64::INFINITY;
        for da in -2..=2 {
            for db in -2..=2 {
                let (ca, cb) = (a0 + da as f64, b0 + db as f64);
                let img = Point::new(
                    d.x - ca * self.g1.x - cb * self.g2.x,
                    d.y - ca * self.g1.y - cb * self.g2.y,
                );
                let n = img.norm();
                if n < best_norm {
                    best_norm = n;
                    best = img;
                }
            }
        }
        best
    }
}

/// Macro-site geometry shared by all BSs and users of one drop.
#[derive(Debug, Clone)]
pub struct HexLayout {
    isd: f64,
    centers: Vec<Point>,
    wrap: Option<WrapLattice>,
}

impl HexLayout {
    pub fn new(num_cells: usize, isd_km: f64, wraparound: bool) -> Result<Self> {
        let axial = spiral_axial(num_cells);
        let centers = axial.iter().map(|&(q, r)| axial_to_point(isd_km, q, r)).collect();
        let wrap = if wraparound {
            Some(Self::lattice_for(&axial, isd_km)?)
        } else {
            None
        };
        Ok(Self { isd: isd_km, centers, wrap })
    }

    fn lattice_for(axial: &[(i64, i64)], isd: f64) -> Result<WrapLattice> {
        let n = axial.len() as i64;
        let gen = (1..=n)
            .flat_map(|i| (0..=i).map(move |j| (i, j)))
            .find(|&(i, j)| i * i + i * j + j * j == n)
            .ok_or_else(|| {
                Error::InvalidConfig(format!("wrap-around needs a cluster size i²+ij+j², got {n}"))
            })?;
        let (i, j) = gen;
        // residue class of each cell in Z² / <(i,j), (-j,i+j)>
        let class = |q: i64, r: i64| {
            (((i + j) * q + j * r).rem_euclid(n), (i * r - j * q).rem_euclid(n))
        };
        let mut seen = std::collections::HashSet::new();
        for &(q, r) in axial {
            if !seen.insert(class(q, r)) {
                return Err(Error::InvalidConfig(format!(
                    "{n}-cell spiral layout does not tile the wrap-around torus"
                )));
            }
        }
        let g1 = axial_to_point(isd, i, j);
        let g2 = axial_to_point(isd, -j, i + j);
        let det = g1.x * g2.y - g1.y * g2.x;
        Ok(WrapLattice { g1, g2, inv_det: 1.0 / det })
    }

    pub fn centers(&self) -> &[Point] {
        &self.centers
    }

    /// Circumradius of a cell.
    pub fn cell_radius(&self) -> f64 {
        self.isd / SQRT3
    }

    pub fn isd(&self) -> f64 {
        self.isd
    }

    /// Lattice translation vectors of the wrap-around torus, if enabled.
    pub fn wrap_vectors(&self) -> Option<(Point, Point)> {
        self.wrap.as_ref().map(|w| (w.g1, w.g2))
    }

    /// Distance between two points, measured on the torus when wrap-around is on.
    pub fn distance(&self, a: Point, b: Point) -> f64 {
        let d = a - b;
        match &self.wrap {
            Some(w) => w.reduce(d).norm(),
            None => d.norm(),
        }
    }

    /// True if `offset` (relative to a cell centre) lies inside that hexagon.
    pub fn in_cell(&self, offset: Point) -> bool {
        (0..6).all(|k| {
            let u = Point::polar(1.0, 60.0 * k as f64);
            offset.x * u.x + offset.y * u.y <= self.isd / 2.0
        })
    }
}
