//! Finite-difference lattice, discrete operators, quadrature and masks.
//!
//! Nodes are stored row-major: node `(i, j)` lives at index `j * nx + i` and
//! sits at `origin + (i h, j h)`. Differences are forward differences; a
//! difference that leaves the rectangle (Neumann) or touches a masked node is
//! zero, which makes the discrete energy an exact function of node values.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in the plane.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Neumann,
    Periodic,
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 2 nodes per axis, got {nx}x{ny}")]
    TooSmall { nx: usize, ny: usize },
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("periodic grids cannot carry a mask")]
    PeriodicMask,
    #[error("mask has {got} entries, grid has {expected} nodes")]
    MaskLength { got: usize, expected: usize },
    #[error("mask contains no inside nodes")]
    EmptyMask,
    #[error("field has {got} values, grid has {expected} nodes")]
    FieldLength { got: usize, expected: usize },
    #[error("target grid is coarser than the source ({from_nx}x{from_ny} -> {to_nx}x{to_ny})")]
    Coarser {
        from_nx: usize,
        from_ny: usize,
        to_nx: usize,
        to_ny: usize,
    },
    #[error("target grid covers a different rectangle or boundary mode")]
    ExtentMismatch,
    #[error("shape size must be positive, got {0}")]
    BadRadius(f64),
}

/// Rectangular lattice with uniform spacing `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    h: f64,
    origin: Point,
    boundary: Boundary,
    mask: Option<Vec<bool>>,
    inside: usize,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, h: f64, boundary: Boundary) -> Result<Self, GridError> {
        if nx < 2 || ny < 2 {
            return Err(GridError::TooSmall { nx, ny });
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(GridError::BadSpacing(h));
        }
        Ok(Self {
            nx,
            ny,
            h,
            origin: [0.0, 0.0],
            boundary,
            mask: None,
            inside: nx * ny,
        })
    }

    /// `n x n` grid on the unit square. Neumann grids put nodes on both
    /// edges (`h = 1/(n-1)`); periodic grids identify the edges (`h = 1/n`).
    pub fn unit_square(n: usize, boundary: Boundary) -> Result<Self, GridError> {
        Self::square(n, [0.0, 0.0], 1.0, boundary)
    }

    /// `n x n` grid on the square `[origin, origin + side]^2`.
    pub fn square(n: usize, origin: Point, side: f64, boundary: Boundary) -> Result<Self, GridError> {
        if n < 2 {
            return Err(GridError::TooSmall { nx: n, ny: n });
        }
        let h = match boundary {
            Boundary::Neumann => side / (n - 1) as f64,
            Boundary::Periodic => side / n as f64,
        };
        Ok(Self::new(n, n, h, boundary)?.with_origin(origin))
    }

    pub fn with_origin(mut self, origin: Point) -> Self {
        self.origin = origin;
        self
    }

    /// Attach an in-domain mask (`true` = inside).
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self, GridError> {
        if self.boundary == Boundary::Periodic {
            return Err(GridError::PeriodicMask);
        }
        if mask.len() != self.len() {
            return Err(GridError::MaskLength {
                got: mask.len(),
                expected: self.len(),
            });
        }
        let inside = mask.iter().filter(|&&m| m).count();
        if inside == 0 {
            return Err(GridError::EmptyMask);
        }
        self.inside = inside;
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> Point {
        self.origin
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn mask(&self) -> Option<&[bool]> {
        self.mask.as_deref()
    }

    /// Total node count, masked or not.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inside_count(&self) -> usize {
        self.inside
    }

    /// Side lengths of the covered rectangle.
    pub fn extent(&self) -> [f64; 2] {
        match self.boundary {
            Boundary::Neumann => [(self.nx - 1) as f64 * self.h, (self.ny - 1) as f64 * self.h],
            Boundary::Periodic => [self.nx as f64 * self.h, self.ny as f64 * self.h],
        }
    }

    /// Discrete measure of the domain: `h^2` times the number of inside nodes.
    pub fn area(&self) -> f64 {
        self.h * self.h * self.inside as f64
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    #[inline]
    pub fn position(&self, i: usize, j: usize) -> Point {
        [self.origin[0] + i as f64 * self.h, self.origin[1] + j as f64 * self.h]
    }

    #[inline]
    pub fn position_of(&self, k: usize) -> Point {
        let (i, j) = self.coords(k);
        self.position(i, j)
    }

    #[inline]
    pub fn is_inside(&self, k: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[k])
    }

    /// Neighbour used by the forward x-difference at `(i, j)`, if that
    /// difference is active.
    #[inline]
    pub fn right(&self, i: usize, j: usize) -> Option<usize> {
        let ni = if i + 1 < self.nx {
            i + 1
        } else if self.boundary == Boundary::Periodic {
            0
        } else {
            return None;
        };
        self.active_pair(self.idx(i, j), self.idx(ni, j))
    }

    /// Neighbour used by the forward y-difference at `(i, j)`.
    #[inline]
    pub fn up(&self, i: usize, j: usize) -> Option<usize> {
        let nj = if j + 1 < self.ny {
            j + 1
        } else if self.boundary == Boundary::Periodic {
            0
        } else {
            return None;
        };
        self.active_pair(self.idx(i, j), self.idx(i, nj))
    }

    #[inline]
    fn active_pair(&self, k: usize, n: usize) -> Option<usize> {
        match &self.mask {
            Some(m) if !(m[k] && m[n]) => None,
            _ => Some(n),
        }
    }

    /// Same rectangle and boundary mode (node counts may differ).
    pub fn covers_same_region(&self, other: &Grid) -> bool {
        let [ax, ay] = self.extent();
        let [bx, by] = other.extent();
        let tol = 1e-9 * ax.max(ay);
        self.boundary == other.boundary
            && (ax - bx).abs() <= tol
            && (ay - by).abs() <= tol
            && (self.origin[0] - other.origin[0]).abs() <= tol
            && (self.origin[1] - other.origin[1]).abs() <= tol
    }

    /// Bilinear interpolation of node values at `p`. Periodic grids wrap;
    /// Neumann grids clamp `p` to the rectangle.
    pub fn interpolate(&self, values: &[f64], p: Point) -> f64 {
        let (i0, i1, fx) = self.axis_cell((p[0] - self.origin[0]) / self.h, self.nx);
        let (j0, j1, fy) = self.axis_cell((p[1] - self.origin[1]) / self.h, self.ny);
        let v00 = values[self.idx(i0, j0)];
        let v10 = values[self.idx(i1, j0)];
        let v01 = values[self.idx(i0, j1)];
        let v11 = values[self.idx(i1, j1)];
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
    }

    fn axis_cell(&self, s: f64, n: usize) -> (usize, usize, f64) {
        match self.boundary {
            Boundary::Periodic => {
                let s = s.rem_euclid(n as f64);
                let i0 = (s.floor() as usize).min(n - 1);
                let f = (s - i0 as f64).clamp(0.0, 1.0);
                (i0, (i0 + 1) % n, f)
            }
            Boundary::Neumann => {
                let s = s.clamp(0.0, (n - 1) as f64);
                let i0 = (s.floor() as usize).min(n - 2);
                (i0, i0 + 1, (s - i0 as f64).clamp(0.0, 1.0))
            }
        }
    }
}

/// One real value per grid node. Masked-out nodes always hold 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Arc<Grid>, mut values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::FieldLength {
                got: values.len(),
                expected: grid.len(),
            });
        }
        if let Some(mask) = grid.mask() {
            for (v, &m) in values.iter_mut().zip(mask) {
                if !m {
                    *v = 0.0;
                }
            }
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let values = vec![c; grid.len()];
        Self::new(grid, values).expect("length matches by construction")
    }

    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(Point) -> f64) -> Self {
        let values = (0..grid.len()).map(|k| f(grid.position_of(k))).collect();
        Self::new(grid, values).expect("length matches by construction")
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access; callers are responsible for keeping masked nodes at 0.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Bilinear sample at an arbitrary point.
    pub fn sample(&self, p: Point) -> f64 {
        self.grid.interpolate(&self.values, p)
    }

    /// Reset masked-out nodes to zero.
    pub fn enforce_mask(&mut self) {
        if let Some(mask) = self.grid.mask() {
            for (v, &m) in self.values.iter_mut().zip(mask) {
                if !m {
                    *v = 0.0;
                }
            }
        }
    }
}

/// Integer label per node; `0` marks masked-out nodes, phases are `1..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Labels {
    grid: Arc<Grid>,
    values: Vec<u32>,
}

impl Labels {
    pub fn new(grid: Arc<Grid>, values: Vec<u32>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::FieldLength {
                got: values.len(),
                expected: grid.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(Point) -> u32) -> Self {
        let values = (0..grid.len())
            .map(|k| if grid.is_inside(k) { f(grid.position_of(k)) } else { 0 })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// Largest label present.
    pub fn max_label(&self) -> u32 {
        self.values.iter().copied().max().unwrap_or(0)
    }

    /// Nearest-node resampling onto another grid covering the same region.
    pub fn resample(&self, grid: Arc<Grid>) -> Labels {
        let src = &self.grid;
        let [ex, ey] = src.extent();
        let [tx, ty] = grid.extent();
        let values = (0..grid.len())
            .map(|k| {
                if !grid.is_inside(k) {
                    return 0;
                }
                let (i, j) = grid.coords(k);
                let si = ((i as f64 * grid.h() / tx * ex) / src.h()).round() as usize;
                let sj = ((j as f64 * grid.h() / ty * ey) / src.h()).round() as usize;
                self.values[src.idx(si.min(src.nx() - 1), sj.min(src.ny() - 1))]
            })
            .collect();
        Labels { grid, values }
    }
}

/// Forward-difference gradient `(d/dx f, d/dy f)`.
pub fn gradient_field(f: &Field) -> (Field, Field) {
    let g = f.grid();
    let u = f.values();
    let inv_h = 1.0 / g.h();
    let mut gx = vec![0.0; g.len()];
    let mut gy = vec![0.0; g.len()];
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let k = g.idx(i, j);
            if let Some(r) = g.right(i, j) {
                gx[k] = (u[r] - u[k]) * inv_h;
            }
            if let Some(t) = g.up(i, j) {
                gy[k] = (u[t] - u[k]) * inv_h;
            }
        }
    }
    (
        Field::new(g.clone(), gx).expect("sizes match"),
        Field::new(g.clone(), gy).expect("sizes match"),
    )
}

/// Rectangle-rule quadrature over inside nodes, summed in node order.
pub fn integrate(f: &Field) -> f64 {
    integrate_values(f.grid(), f.values())
}

pub fn integrate_values(grid: &Grid, values: &[f64]) -> f64 {
    let h2 = grid.h() * grid.h();
    let sum: f64 = match grid.mask() {
        None => values.iter().sum(),
        Some(mask) => values.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v).sum(),
    };
    h2 * sum
}

/// Rectangle-rule quadrature of a pointwise product.
pub fn integrate_product(grid: &Grid, a: &[f64], b: &[f64]) -> f64 {
    let h2 = grid.h() * grid.h();
    let mut sum = 0.0;
    for k in 0..grid.len() {
        if grid.is_inside(k) {
            sum += a[k] * b[k];
        }
    }
    h2 * sum
}

/// Bilinear transfer of `f` onto a finer grid covering the same rectangle.
pub fn refine_interpolate(f: &Field, new_grid: Arc<Grid>) -> Result<Field, GridError> {
    let old = f.grid();
    if new_grid.nx() < old.nx() || new_grid.ny() < old.ny() {
        return Err(GridError::Coarser {
            from_nx: old.nx(),
            from_ny: old.ny(),
            to_nx: new_grid.nx(),
            to_ny: new_grid.ny(),
        });
    }
    if !old.covers_same_region(&new_grid) {
        return Err(GridError::ExtentMismatch);
    }
    let values = (0..new_grid.len())
        .map(|k| {
            if new_grid.is_inside(k) {
                f.sample(new_grid.position_of(k))
            } else {
                0.0
            }
        })
        .collect();
    Field::new(new_grid, values)
}

fn mask_from(grid: &Grid, inside: impl Fn(Point) -> bool) -> Result<Vec<bool>, GridError> {
    let mask: Vec<bool> = (0..grid.len()).map(|k| inside(grid.position_of(k))).collect();
    if !mask.iter().any(|&m| m) {
        return Err(GridError::EmptyMask);
    }
    Ok(mask)
}

/// Nodes strictly inside the disk.
pub fn make_disk_mask(grid: &Grid, center: Point, radius: f64) -> Result<Vec<bool>, GridError> {
    if !(radius > 0.0) {
        return Err(GridError::BadRadius(radius));
    }
    let r2 = radius * radius;
    mask_from(grid, |p| {
        let dx = p[0] - center[0];
        let dy = p[1] - center[1];
        dx * dx + dy * dy < r2
    })
}

/// Nodes strictly inside the triangle (either orientation).
pub fn make_triangle_mask(grid: &Grid, vertices: [Point; 3]) -> Result<Vec<bool>, GridError> {
    let area = cross(vertices[0], vertices[1], vertices[2]);
    if area == 0.0 {
        return Err(GridError::BadRadius(0.0));
    }
    mask_from(grid, |p| strictly_inside_convex(&vertices, p, area.signum()))
}

/// Nodes strictly inside the regular hexagon with the given circumradius
/// (two vertices on the horizontal axis through `center`).
pub fn make_hexagon_mask(grid: &Grid, center: Point, radius: f64) -> Result<Vec<bool>, GridError> {
    if !(radius > 0.0) {
        return Err(GridError::BadRadius(radius));
    }
    let verts: Vec<Point> = (0..6)
        .map(|k| {
            let a = std::f64::consts::FRAC_PI_3 * k as f64;
            [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect();
    mask_from(grid, |p| strictly_inside_convex(&verts, p, 1.0))
}

fn cross(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn strictly_inside_convex(verts: &[Point], p: Point, orientation: f64) -> bool {
    (0..verts.len()).all(|k| orientation * cross(verts[k], verts[(k + 1) % verts.len()], p) > 0.0)
}
