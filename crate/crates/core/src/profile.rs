//! One-dimensional optimal transition profiles, signed distances of label
//! images, and the recovery-sequence initializer built from them.
//!
//! The optimal profile for interface scale `z` solves `v' = sqrt(W(v)) / z`
//! with `v(0) = 1/2`, so `v_z(t) = v_1(t / z)`. The truncated profile is
//! `v^eta = clamp((1 + 2 eta) v - eta, 0, 1)`, which reaches 0 and 1 at
//! finite `t`.

use std::sync::Arc;

use thiserror::Error;

use crate::anisotropy::Anisotropy;
use crate::constraints::{project_admissible, ConstraintError};
use crate::energy::{simpson, DoubleWell, EnergyError, PhaseSystem};
use crate::grid::{Boundary, Field, Grid, Labels};

/// Half-width of the integration window, in units of `z`.
pub const TAIL: f64 = 50.0;
/// RK4 steps per unit of `t / z`.
const STEPS_PER_Z: usize = 100;

pub const DEFAULT_ETA: f64 = 1e-3;

#[derive(Debug, Error, PartialEq)]
pub enum ProfileError {
    #[error("profile scale z must be positive, got {0}")]
    BadScale(f64),
    #[error("truncation eta must lie in [0, 0.5], got {0}")]
    BadEta(f64),
    #[error("phase {0} does not occur in the label image")]
    AbsentPhase(u32),
    #[error("eps must be positive, got {0}")]
    BadEps(f64),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
}

/// Unit-scale profile `v_1` for a given well: closed form or an RK4 table.
#[derive(Debug, Clone)]
enum Shape {
    Logistic {
        rate: f64,
    },
    /// Values at `t = k / STEPS_PER_Z` for `k = 0..=TAIL * STEPS_PER_Z`;
    /// negative `t` follows from `v(-t) = 1 - v(t)`.
    Table(Vec<f64>),
}

impl Shape {
    fn for_well(well: DoubleWell) -> Shape {
        match well.logistic_rate() {
            Some(rate) => Shape::Logistic { rate },
            None => Shape::Table(rk4_table(well)),
        }
    }

    fn eval(&self, t: f64) -> f64 {
        match self {
            Shape::Logistic { rate } => 1.0 / (1.0 + (-rate * t).exp()),
            Shape::Table(tab) => {
                if t < 0.0 {
                    return 1.0 - self.eval(-t);
                }
                let s = t * STEPS_PER_Z as f64;
                let last = tab.len() - 1;
                if s >= last as f64 {
                    return tab[last];
                }
                let k = s.floor() as usize;
                let f = s - k as f64;
                (1.0 - f) * tab[k] + f * tab[k + 1]
            }
        }
    }
}

fn rk4_table(well: DoubleWell) -> Vec<f64> {
    let n = (TAIL as usize) * STEPS_PER_Z;
    let dt = 1.0 / STEPS_PER_Z as f64;
    let rhs = |v: f64| well.value(v.clamp(0.0, 1.0)).sqrt();
    let mut out = Vec::with_capacity(n + 1);
    let mut v: f64 = 0.5;
    out.push(v);
    for _ in 0..n {
        let k1 = rhs(v);
        let k2 = rhs(v + 0.5 * dt * k1);
        let k3 = rhs(v + 0.5 * dt * k2);
        let k4 = rhs(v + dt * k3);
        v = (v + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).min(1.0);
        out.push(v);
    }
    out
}

/// Optimal transition profile with scale `z` and truncation `eta`.
#[derive(Debug, Clone)]
pub struct Profile {
    z: f64,
    eta: f64,
    well: DoubleWell,
    shape: Shape,
}

impl Profile {
    pub fn new(z: f64, eta: f64, well: DoubleWell) -> Result<Self, ProfileError> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(ProfileError::BadScale(z));
        }
        if !(0.0..=0.5).contains(&eta) {
            return Err(ProfileError::BadEta(eta));
        }
        Ok(Self {
            z,
            eta,
            well,
            shape: Shape::for_well(well),
        })
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Same well and truncation, different scale (shares the table).
    pub fn with_scale(&self, z: f64) -> Result<Self, ProfileError> {
        if !(z > 0.0 && z.is_finite()) {
            return Err(ProfileError::BadScale(z));
        }
        Ok(Self { z, ..self.clone() })
    }

    /// Untruncated `v(t)`.
    pub fn raw(&self, t: f64) -> f64 {
        self.shape.eval(t / self.z)
    }

    /// Untruncated `v'(t)`, from the ODE.
    pub fn raw_derivative(&self, t: f64) -> f64 {
        self.well.value(self.raw(t)).sqrt() / self.z
    }

    /// `v^eta(t)`.
    pub fn value(&self, t: f64) -> f64 {
        truncate(self.raw(t), self.eta)
    }

    /// `(v^eta)'(t)`; zero outside the transition layer.
    pub fn derivative(&self, t: f64) -> f64 {
        let s = (1.0 + 2.0 * self.eta) * self.raw(t) - self.eta;
        if (0.0..=1.0).contains(&s) {
            (1.0 + 2.0 * self.eta) * self.raw_derivative(t)
        } else {
            0.0
        }
    }

    /// Interval outside of which `v^eta` is exactly 0 or 1 (the whole
    /// integration window when `eta = 0`).
    pub fn support(&self) -> (f64, f64) {
        let window = TAIL * self.z;
        if self.eta == 0.0 {
            return (-window, window);
        }
        let level = self.eta / (1.0 + 2.0 * self.eta);
        // v is increasing: bisect for v(t) = level on the negative side.
        let (mut lo, mut hi) = (-window, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.raw(mid) < level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        (t, -t)
    }
}

#[inline]
fn truncate(v: f64, eta: f64) -> f64 {
    ((1.0 + 2.0 * eta) * v - eta).clamp(0.0, 1.0)
}

pub fn profile_value(p: &Profile, t: f64) -> f64 {
    p.value(t)
}

/// `int_R W(v^eta) + z^2 |(v^eta)'|^2 dt` by composite Simpson over the
/// transition layer; the constant tails contribute nothing.
pub fn profile_energy_1d(p: &Profile) -> f64 {
    let (a, b) = p.support();
    let z2 = p.z * p.z;
    simpson(
        |t| {
            let d = p.derivative(t);
            p.well.value(p.value(t)) + z2 * d * d
        },
        a,
        b,
        40_000,
    )
}

/// Signed distance to the boundary of phase `phase`: positive inside the
/// phase, negative outside.
///
/// Distances are exact Euclidean distances between node positions, shifted
/// by `h/2` so that the zero level sits midway between the last node of one
/// phase and the first node of the other. Only inside nodes are features;
/// the domain boundary is not an interface. If the phase covers the whole
/// domain, the result is the distance to the domain boundary (masked nodes
/// and the rectangle edge), or `+inf` on a periodic grid.
pub fn signed_distance(labels: &Labels, phase: u32) -> Result<Field, ProfileError> {
    let g = labels.grid().clone();
    let l = labels.values();
    let inside_phase: Vec<bool> = l.iter().map(|&v| v == phase).collect();
    if !inside_phase.iter().any(|&b| b) {
        return Err(ProfileError::AbsentPhase(phase));
    }
    let other: Vec<bool> = (0..g.len()).map(|k| g.is_inside(k) && l[k] != phase).collect();
    let h = g.h();

    let values = if other.iter().any(|&b| b) {
        let to_other = edt(&g, &other);
        let to_phase = edt(&g, &inside_phase);
        (0..g.len())
            .map(|k| {
                if !g.is_inside(k) {
                    0.0
                } else if inside_phase[k] {
                    h * to_other[k].sqrt() - 0.5 * h
                } else {
                    -(h * to_phase[k].sqrt() - 0.5 * h)
                }
            })
            .collect()
    } else if g.boundary() == Boundary::Periodic {
        vec![f64::INFINITY; g.len()]
    } else {
        distance_to_domain_boundary(&g)
    };
    Ok(Field::new(g, values).expect("grid length"))
}

/// Distance to the nearest masked node or to the ring just outside the
/// rectangle, minus `h/2`.
fn distance_to_domain_boundary(g: &Grid) -> Vec<f64> {
    let (nx, ny) = (g.nx() + 2, g.ny() + 2);
    let padded = Grid::new(nx, ny, g.h(), Boundary::Neumann).expect("padded grid is valid");
    let features: Vec<bool> = (0..nx * ny)
        .map(|k| {
            let (i, j) = (k % nx, k / nx);
            i == 0 || j == 0 || i == nx - 1 || j == ny - 1 || !g.is_inside(g.idx(i - 1, j - 1))
        })
        .collect();
    let d = edt(&padded, &features);
    (0..g.len())
        .map(|k| {
            if !g.is_inside(k) {
                return 0.0;
            }
            let (i, j) = g.coords(k);
            g.h() * d[padded.idx(i + 1, j + 1)].sqrt() - 0.5 * g.h()
        })
        .collect()
}

/// Exact squared Euclidean distance (in node units) to the nearest feature
/// node, by two separable lower-envelope passes. Periodic grids wrap.
fn edt(g: &Grid, features: &[bool]) -> Vec<f64> {
    let (nx, ny) = (g.nx(), g.ny());
    let periodic = g.boundary() == Boundary::Periodic;
    let mut d: Vec<f64> = features.iter().map(|&f| if f { 0.0 } else { f64::INFINITY }).collect();
    let mut line = Vec::new();
    let mut out = Vec::new();
    for i in 0..nx {
        line.clear();
        line.extend((0..ny).map(|j| d[j * nx + i]));
        edt_line(&line, periodic, &mut out);
        for j in 0..ny {
            d[j * nx + i] = out[j];
        }
    }
    for j in 0..ny {
        line.clear();
        line.extend_from_slice(&d[j * nx..(j + 1) * nx]);
        edt_line(&line, periodic, &mut out);
        d[j * nx..(j + 1) * nx].copy_from_slice(&out);
    }
    d
}

fn edt_line(f: &[f64], periodic: bool, out: &mut Vec<f64>) {
    let n = f.len();
    if periodic {
        let tripled: Vec<f64> = f.iter().chain(f).chain(f).copied().collect();
        let mut tmp = Vec::new();
        lower_envelope(&tripled, &mut tmp);
        out.clear();
        out.extend_from_slice(&tmp[n..2 * n]);
    } else {
        lower_envelope(f, out);
    }
}

/// Felzenszwalb-Huttenlocher 1D transform: `out[q] = min_p (q - p)^2 + f[p]`.
fn lower_envelope(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    let sites: Vec<usize> = (0..n).filter(|&p| f[p].is_finite()).collect();
    if sites.is_empty() {
        return;
    }
    let mut v: Vec<usize> = Vec::with_capacity(sites.len());
    let mut z: Vec<f64> = Vec::with_capacity(sites.len() + 1);
    let inter = |p: usize, q: usize| -> f64 {
        let (pf, qf) = (p as f64, q as f64);
        ((f[q] + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf))
    };
    v.push(sites[0]);
    z.push(f64::NEG_INFINITY);
    z.push(f64::INFINITY);
    for &q in &sites[1..] {
        let mut s = inter(*v.last().unwrap(), q);
        while s <= z[v.len() - 1] {
            v.pop();
            z.pop();
            s = inter(*v.last().unwrap(), q);
        }
        z.pop();
        z.push(s);
        z.push(f64::INFINITY);
        v.push(q);
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *o = dq * dq + f[p];
    }
}

/// Smooth phase system approximating a labelled partition at width `eps`.
///
/// Each phase is the truncated optimal profile evaluated at
/// `d_i(x) / eps`, with scale `z = phi(x, grad d_i / |grad d_i|)`; where the
/// distance gradient is degenerate the lower comparability constant is used.
/// Phases are then normalized by their pointwise sum and projected onto the
/// constraint set with the label areas as mass targets.
pub fn recovery_init(
    labels: &Labels,
    aniso: &Anisotropy,
    well: DoubleWell,
    eps: f64,
    eta: f64,
) -> Result<PhaseSystem, ProfileError> {
    if !(eps > 0.0) {
        return Err(ProfileError::BadEps(eps));
    }
    let g = labels.grid().clone();
    let n = labels.max_label();
    let unit = Profile::new(1.0, eta, well)?;
    let (m, _) = aniso.bounds();
    let h2 = g.h() * g.h();

    let mut phases = Vec::with_capacity(n as usize);
    let mut targets = Vec::with_capacity(n as usize);
    for phase in 1..=n {
        let d = signed_distance(labels, phase)?;
        let values = (0..g.len())
            .map(|k| {
                if !g.is_inside(k) {
                    return 0.0;
                }
                let dk = d.values()[k];
                if dk.is_infinite() {
                    return if dk > 0.0 { 1.0 } else { 0.0 };
                }
                let z = interface_scale(&g, &d, k, aniso).unwrap_or(m);
                unit.value(dk / (eps * z))
            })
            .collect();
        phases.push(Field::new(g.clone(), values).expect("grid length"));
        let count = labels.values().iter().filter(|&&v| v == phase).count();
        targets.push(h2 * count as f64);
    }

    if n > 1 {
        for k in 0..g.len() {
            if !g.is_inside(k) {
                continue;
            }
            let s: f64 = phases.iter().map(|f| f.values()[k]).sum();
            if s > 0.0 {
                for f in phases.iter_mut() {
                    f.values_mut()[k] /= s;
                }
            }
        }
    }

    let mut sys = PhaseSystem::new(phases, targets, eps)?;
    project_admissible(&mut sys, None)?;
    Ok(sys)
}

/// `phi(x, n)` for the unit normal `n = grad d / |grad d|` estimated by
/// central differences; `None` where the gradient is degenerate.
fn interface_scale(g: &Arc<Grid>, d: &Field, k: usize, aniso: &Anisotropy) -> Option<f64> {
    let (i, j) = g.coords(k);
    let v = d.values();
    let periodic = g.boundary() == Boundary::Periodic;
    let fetch = |ii: isize, jj: isize| -> Option<f64> {
        let (nx, ny) = (g.nx() as isize, g.ny() as isize);
        let (ii, jj) = if periodic {
            (ii.rem_euclid(nx), jj.rem_euclid(ny))
        } else if ii < 0 || jj < 0 || ii >= nx || jj >= ny {
            return None;
        } else {
            (ii, jj)
        };
        let kk = g.idx(ii as usize, jj as usize);
        g.is_inside(kk).then(|| v[kk]).filter(|x| x.is_finite())
    };
    let (i, j) = (i as isize, j as isize);
    let here = v[k];
    let diff = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => Some((a - b) / (2.0 * g.h())),
        (Some(a), None) => Some((a - here) / g.h()),
        (None, Some(b)) => Some((here - b) / g.h()),
        (None, None) => None,
    };
    let gx = diff(fetch(i + 1, j), fetch(i - 1, j))?;
    let gy = diff(fetch(i, j + 1), fetch(i, j - 1))?;
    let norm = gx.hypot(gy);
    if !(norm > 0.5) {
        return None;
    }
    let z = aniso.phi(g.position_of(k), [gx / norm, gy / norm]);
    (z > 0.0).then_some(z)
}
