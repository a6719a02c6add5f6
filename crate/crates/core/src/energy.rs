//! The relaxed partition energy and its exact discrete gradient.
//!
//! For phases `u_1..u_n` on a grid with spacing `h` the discrete energy is
//!
//! ```text
//! E(u) = sum_i sum_{k inside} h^2 [ eps * phi(x_k, D u_i(k))^2 + W(u_i(k)) / eps ]
//! ```
//!
//! with `D` the forward-difference gradient of [`crate::grid::gradient_field`].
//! [`EnergyModel::gradient`] is the adjoint of that stencil, so it is the exact
//! derivative of `E` with respect to every node value.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anisotropy::Anisotropy;
use crate::grid::{Field, Grid, Labels};

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("eps must be positive, got {0}")]
    BadEps(f64),
    #[error("a phase system needs at least one phase")]
    NoPhases,
    #[error("{phases} phases but {targets} mass targets")]
    TargetCount { phases: usize, targets: usize },
    #[error("all phases must live on the same grid")]
    GridMismatch,
    #[error("label {label} at node {node} outside 1..={n}")]
    BadLabel { label: u32, node: usize, n: u32 },
}

/// Symmetric double-well potential vanishing exactly at 0 and 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DoubleWell {
    /// `s^2 (1 - s)^2`.
    Quartic {},
    /// `scale * s^2 (1 - s)^2`.
    ScaledQuartic { scale: f64 },
    /// `|s (1 - s)|^p`, `p > 1`.
    Power { p: f64 },
}

impl Default for DoubleWell {
    fn default() -> Self {
        DoubleWell::Quartic {}
    }
}

impl DoubleWell {
    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        let q = s * (1.0 - s);
        match *self {
            DoubleWell::Quartic {} => q * q,
            DoubleWell::ScaledQuartic { scale } => scale * q * q,
            DoubleWell::Power { p } => q.abs().powf(p),
        }
    }

    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        let q = s * (1.0 - s);
        let dq = 1.0 - 2.0 * s;
        match *self {
            DoubleWell::Quartic {} => 2.0 * q * dq,
            DoubleWell::ScaledQuartic { scale } => 2.0 * scale * q * dq,
            DoubleWell::Power { p } => {
                if q == 0.0 {
                    0.0
                } else {
                    p * q.abs().powf(p - 1.0) * q.signum() * dq
                }
            }
        }
    }

    /// `c_W = 2 * int_0^1 sqrt(W(s)) ds`. Closed form for the quartic wells,
    /// composite Simpson with 10^4 intervals otherwise.
    pub fn c_w(&self) -> f64 {
        match *self {
            DoubleWell::Quartic {} => 1.0 / 3.0,
            DoubleWell::ScaledQuartic { scale } => scale.sqrt() / 3.0,
            DoubleWell::Power { .. } => 2.0 * simpson(|s| self.value(s).sqrt(), 0.0, 1.0, 10_000),
        }
    }

    /// Closed-form optimal-profile rate, when the well admits one:
    /// `v(t) = 1 / (1 + exp(-rate * t / z))`.
    pub fn logistic_rate(&self) -> Option<f64> {
        match *self {
            DoubleWell::Quartic {} => Some(1.0),
            DoubleWell::ScaledQuartic { scale } => Some(scale.sqrt()),
            DoubleWell::Power { p: 2.0 } => Some(1.0),
            DoubleWell::Power { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match *self {
            DoubleWell::Quartic {} => Ok(()),
            DoubleWell::ScaledQuartic { scale } if scale > 0.0 && scale.is_finite() => Ok(()),
            DoubleWell::ScaledQuartic { scale } => Err(format!("scale must be positive, got {scale}")),
            DoubleWell::Power { p } if p > 1.0 && p.is_finite() => Ok(()),
            DoubleWell::Power { p } => Err(format!("exponent must exceed 1, got {p}")),
        }
    }
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}

/// Phases `u_1..u_n` on a shared grid with their mass targets and the
/// current interface width.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSystem {
    grid: Arc<Grid>,
    phases: Vec<Field>,
    targets: Vec<f64>,
    eps: f64,
}

impl PhaseSystem {
    pub fn new(phases: Vec<Field>, targets: Vec<f64>, eps: f64) -> Result<Self, EnergyError> {
        let grid = phases.first().ok_or(EnergyError::NoPhases)?.grid().clone();
        if phases
            .iter()
            .any(|f| !Arc::ptr_eq(f.grid(), &grid) && **f.grid() != *grid)
        {
            return Err(EnergyError::GridMismatch);
        }
        if targets.len() != phases.len() {
            return Err(EnergyError::TargetCount {
                phases: phases.len(),
                targets: targets.len(),
            });
        }
        if !(eps > 0.0) {
            return Err(EnergyError::BadEps(eps));
        }
        Ok(Self {
            grid,
            phases,
            targets,
            eps,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phases(&self) -> &[Field] {
        &self.phases
    }

    pub fn phases_mut(&mut self) -> &mut [Field] {
        &mut self.phases
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn set_targets(&mut self, targets: Vec<f64>) -> Result<(), EnergyError> {
        if targets.len() != self.phases.len() {
            return Err(EnergyError::TargetCount {
                phases: self.phases.len(),
                targets: targets.len(),
            });
        }
        self.targets = targets;
        Ok(())
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn set_eps(&mut self, eps: f64) -> Result<(), EnergyError> {
        if !(eps > 0.0) {
            return Err(EnergyError::BadEps(eps));
        }
        self.eps = eps;
        Ok(())
    }

    pub fn into_phases(self) -> Vec<Field> {
        self.phases
    }
}

/// Precomputed evaluation context for one grid, anisotropy, well and eps.
pub struct EnergyModel<'a> {
    grid: &'a Grid,
    aniso: &'a Anisotropy,
    well: DoubleWell,
    eps: f64,
    /// Squared density factor per node, when the anisotropy carries one.
    weight_sq: Option<Vec<f64>>,
}

impl<'a> EnergyModel<'a> {
    pub fn new(grid: &'a Grid, aniso: &'a Anisotropy, well: DoubleWell, eps: f64) -> Self {
        let weight_sq = aniso.density().map(|_| {
            (0..grid.len())
                .map(|k| {
                    let w = aniso.density_at(grid.position_of(k));
                    w * w
                })
                .collect()
        });
        Self {
            grid,
            aniso,
            well,
            eps,
            weight_sq,
        }
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn well(&self) -> DoubleWell {
        self.well
    }

    /// Energy of a single phase given by its node values.
    pub fn phase_energy(&self, u: &[f64]) -> f64 {
        let g = self.grid;
        let inv_h = 1.0 / g.h();
        let kind = self.aniso.kind();
        let mut grad_part = 0.0;
        let mut well_part = 0.0;
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let k = g.idx(i, j);
                if !g.is_inside(k) {
                    continue;
                }
                let dx = g.right(i, j).map_or(0.0, |r| (u[r] - u[k]) * inv_h);
                let dy = g.up(i, j).map_or(0.0, |t| (u[t] - u[k]) * inv_h);
                if dx != 0.0 || dy != 0.0 {
                    let mut sq = kind.phi_sq_and_grad([dx, dy]).0;
                    if let Some(w) = &self.weight_sq {
                        sq *= w[k];
                    }
                    grad_part += sq;
                }
                well_part += self.well.value(u[k]);
            }
        }
        g.h() * g.h() * (self.eps * grad_part + well_part / self.eps)
    }

    /// Exact gradient of [`Self::phase_energy`], written into `out`.
    pub fn phase_gradient(&self, u: &[f64], out: &mut [f64]) {
        let g = self.grid;
        let h = g.h();
        let inv_h = 1.0 / h;
        let h2 = h * h;
        let kind = self.aniso.kind();
        // d/du of h^2 eps phi^2(D u): the forward difference carries 1/h.
        let flux_scale = self.eps * h;
        out.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..g.ny() {
            for i in 0..g.nx() {
                let k = g.idx(i, j);
                if !g.is_inside(k) {
                    continue;
                }
                let r = g.right(i, j);
                let t = g.up(i, j);
                let dx = r.map_or(0.0, |r| (u[r] - u[k]) * inv_h);
                let dy = t.map_or(0.0, |t| (u[t] - u[k]) * inv_h);
                if dx != 0.0 || dy != 0.0 {
                    let mut gr = kind.phi_sq_and_grad([dx, dy]).1;
                    if let Some(w) = &self.weight_sq {
                        gr[0] *= w[k];
                        gr[1] *= w[k];
                    }
                    if let Some(r) = r {
                        let f = flux_scale * gr[0];
                        out[r] += f;
                        out[k] -= f;
                    }
                    if let Some(t) = t {
                        let f = flux_scale * gr[1];
                        out[t] += f;
                        out[k] -= f;
                    }
                }
                out[k] += h2 * self.well.derivative(u[k]) / self.eps;
            }
        }
    }

    pub fn total_energy(&self, sys: &PhaseSystem) -> f64 {
        sys.phases().iter().map(|f| self.phase_energy(f.values())).sum()
    }

    pub fn gradient(&self, sys: &PhaseSystem) -> Vec<Vec<f64>> {
        sys.phases()
            .iter()
            .map(|f| {
                let mut out = vec![0.0; f.values().len()];
                self.phase_gradient(f.values(), &mut out);
                out
            })
            .collect()
    }
}

/// `eps int phi(x, grad u)^2 + (1/eps) int W(u)`.
pub fn phase_energy(u: &Field, a: &Anisotropy, well: DoubleWell, eps: f64) -> f64 {
    EnergyModel::new(u.grid(), a, well, eps).phase_energy(u.values())
}

/// Sum of [`phase_energy`] over the phases of `sys` at `sys.eps()`.
pub fn total_energy(sys: &PhaseSystem, a: &Anisotropy, well: DoubleWell) -> f64 {
    EnergyModel::new(sys.grid(), a, well, sys.eps()).total_energy(sys)
}

/// Exact gradient of [`total_energy`] with respect to every node value.
pub fn energy_gradient(sys: &PhaseSystem, a: &Anisotropy, well: DoubleWell) -> Vec<Field> {
    EnergyModel::new(sys.grid(), a, well, sys.eps())
        .gradient(sys)
        .into_iter()
        .map(|v| Field::new(sys.grid().clone(), v).expect("gradient has grid length"))
        .collect()
}

/// Sharp-interface functional of a labelled configuration.
///
/// Every grid edge joining two inside nodes with different labels
/// contributes `h * phi(midpoint, edge normal)`, once for each of the two
/// phases it separates. The total is multiplied by `c_W` unless
/// `scale_by_inv_c` is set, in which case it is on the perimeter scale.
pub fn sharp_energy(
    labels: &Labels,
    a: &Anisotropy,
    well: DoubleWell,
    scale_by_inv_c: bool,
) -> Result<f64, EnergyError> {
    let g = labels.grid();
    let l = labels.values();
    let n = labels.max_label();
    for (k, &v) in l.iter().enumerate() {
        let ok = if g.is_inside(k) { v >= 1 && v <= n } else { v == 0 };
        if !ok {
            return Err(EnergyError::BadLabel { label: v, node: k, n });
        }
    }
    let h = g.h();
    let mut sum = 0.0;
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let k = g.idx(i, j);
            if !g.is_inside(k) {
                continue;
            }
            let p = g.position(i, j);
            if let Some(r) = g.right(i, j) {
                if l[r] != l[k] {
                    sum += h * a.phi([p[0] + 0.5 * h, p[1]], [1.0, 0.0]);
                }
            }
            if let Some(t) = g.up(i, j) {
                if l[t] != l[k] {
                    sum += h * a.phi([p[0], p[1] + 0.5 * h], [0.0, 1.0]);
                }
            }
        }
    }
    let both_sides = 2.0 * sum;
    Ok(if scale_by_inv_c {
        both_sides
    } else {
        both_sides * well.c_w()
    })
}
