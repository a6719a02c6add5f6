//! Projections onto the admissible set: pointwise partition of unity,
//! per-phase (optionally density-weighted) mass, and box truncation.

use thiserror::Error;

use crate::energy::PhaseSystem;
use crate::grid::{integrate_product, integrate_values, Field};

/// Alternating-projection tolerance in weighted partition mode.
pub const WEIGHTED_TOL: f64 = 1e-10;
pub const WEIGHTED_MAX_SWEEPS: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum ConstraintError {
    #[error("mass weight integrates to zero (int nu^2 = 0)")]
    ZeroWeight,
    #[error("weight field lives on a different grid")]
    WeightGrid,
    #[error("mass targets sum to {sum}, domain mass is {total}")]
    TargetsInconsistent { sum: f64, total: f64 },
    #[error("alternating projections did not converge after {sweeps} sweeps (residual {residual:e})")]
    NotConverged { sweeps: usize, residual: f64 },
}

/// Constraint violation measures.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// `max_x |sum_i u_i(x) - 1|` over inside nodes (0 for a single phase).
    pub sum: f64,
    /// `max_i |m_i - a_i| / max(|a_i|, tiny)`, with `m_i` the (weighted) mass.
    pub mass: f64,
}

/// `u_i <- u_i - (sum_j u_j - 1) / n` at each inside node.
pub fn project_partition(sys: &mut PhaseSystem) {
    let n = sys.len();
    if n < 2 {
        return;
    }
    let grid = sys.grid().clone();
    let inv_n = 1.0 / n as f64;
    let phases = sys.phases_mut();
    for k in 0..grid.len() {
        if !grid.is_inside(k) {
            continue;
        }
        let sum: f64 = phases.iter().map(|f| f.values()[k]).sum();
        let excess = (sum - 1.0) * inv_n;
        for f in phases.iter_mut() {
            f.values_mut()[k] -= excess;
        }
    }
}

fn check_weight(sys: &PhaseSystem, weight: &Field) -> Result<f64, ConstraintError> {
    let g = sys.grid();
    if weight.grid().len() != g.len() || !weight.grid().covers_same_region(g) {
        return Err(ConstraintError::WeightGrid);
    }
    let nn = integrate_product(g, weight.values(), weight.values());
    if !(nn > 0.0) {
        return Err(ConstraintError::ZeroWeight);
    }
    Ok(nn)
}

/// Mass of every phase, weighted by `weight` when given.
pub fn masses(sys: &PhaseSystem, weight: Option<&Field>) -> Vec<f64> {
    let g = sys.grid();
    sys.phases()
        .iter()
        .map(|f| match weight {
            None => integrate_values(g, f.values()),
            Some(w) => integrate_product(g, f.values(), w.values()),
        })
        .collect()
}

/// Unweighted: constant shift `(a_i - int u_i) / |D|`. Weighted: shift along
/// `nu` by `(a_i - int u_i nu) / int nu^2`.
pub fn project_mass(sys: &mut PhaseSystem, weight: Option<&Field>) -> Result<(), ConstraintError> {
    let grid = sys.grid().clone();
    let norm = match weight {
        None => grid.area(),
        Some(w) => check_weight(sys, w)?,
    };
    let current = masses(sys, weight);
    let targets = sys.targets().to_vec();
    for ((f, m), a) in sys.phases_mut().iter_mut().zip(current).zip(targets) {
        let lambda = (a - m) / norm;
        let vals = f.values_mut();
        match weight {
            None => {
                for (k, v) in vals.iter_mut().enumerate() {
                    if grid.is_inside(k) {
                        *v += lambda;
                    }
                }
            }
            Some(w) => {
                for (k, (v, wk)) in vals.iter_mut().zip(w.values()).enumerate() {
                    if grid.is_inside(k) {
                        *v += lambda * wk;
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn residuals(sys: &PhaseSystem, weight: Option<&Field>) -> Residuals {
    let grid = sys.grid();
    let mut sum_res: f64 = 0.0;
    if sys.len() > 1 {
        for k in 0..grid.len() {
            if grid.is_inside(k) {
                let s: f64 = sys.phases().iter().map(|f| f.values()[k]).sum();
                sum_res = sum_res.max((s - 1.0).abs());
            }
        }
    }
    let mass = masses(sys, weight)
        .iter()
        .zip(sys.targets())
        .map(|(m, a)| (m - a).abs() / a.abs().max(1e-300))
        .fold(0.0, f64::max);
    Residuals { sum: sum_res, mass }
}

/// Total (weighted) mass of the domain that the targets must add up to in
/// partition mode.
pub fn domain_mass(sys: &PhaseSystem, weight: Option<&Field>) -> f64 {
    let g = sys.grid();
    match weight {
        None => g.area(),
        Some(w) => integrate_values(g, w.values()),
    }
}

/// Project onto the intersection of the partition and mass constraints.
///
/// Unweighted partition mode is exact in one pass: after the partition step
/// the mass shifts are constants summing to zero, so they keep `sum u_i = 1`.
/// Weighted mode alternates the two projections until both residuals drop
/// below [`WEIGHTED_TOL`].
pub fn project_admissible(sys: &mut PhaseSystem, weight: Option<&Field>) -> Result<Residuals, ConstraintError> {
    if sys.len() == 1 {
        project_mass(sys, weight)?;
        return Ok(residuals(sys, weight));
    }
    let total = domain_mass(sys, weight);
    let sum: f64 = sys.targets().iter().sum();
    if (sum - total).abs() > 1e-9 * total.abs() {
        return Err(ConstraintError::TargetsInconsistent { sum, total });
    }
    match weight {
        None => {
            project_partition(sys);
            project_mass(sys, None)?;
            Ok(residuals(sys, None))
        }
        Some(w) => {
            let mut res = Residuals::default();
            for _ in 0..WEIGHTED_MAX_SWEEPS {
                project_partition(sys);
                project_mass(sys, Some(w))?;
                res = residuals(sys, Some(w));
                if res.sum < WEIGHTED_TOL && res.mass < WEIGHTED_TOL {
                    return Ok(res);
                }
            }
            Err(ConstraintError::NotConverged {
                sweeps: WEIGHTED_MAX_SWEEPS,
                residual: res.sum.max(res.mass),
            })
        }
    }
}

/// `u_i <- clamp(u_i, 0, 1)` at every node.
pub fn clip_unit(sys: &mut PhaseSystem) {
    for f in sys.phases_mut() {
        for v in f.values_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
}

/// Relative mass tolerance of [`project_feasible`].
pub const FEASIBLE_TOL: f64 = 1e-12;
const FEASIBLE_MAX_ITERS: usize = 100;

/// Euclidean projection of `y` onto `{x >= 0, sum x = 1}`; writes the
/// result into `y` and returns the number of positive entries.
fn project_simplex(y: &mut [f64], sorted: &mut Vec<f64>) -> usize {
    sorted.clear();
    sorted.extend_from_slice(y);
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    let mut rho = 0;
    for (j, &v) in sorted.iter().enumerate() {
        acc += v;
        let t = (acc - 1.0) / (j + 1) as f64;
        if v - t > 0.0 {
            theta = t;
            rho = j + 1;
        }
    }
    let mut support = 0;
    for v in y.iter_mut() {
        *v = (*v - theta).clamp(0.0, 1.0);
        support += (*v > 0.0) as usize;
    }
    debug_assert!(rho >= 1);
    support
}

struct MassMap<'a> {
    sys: &'a PhaseSystem,
    source: Vec<Vec<f64>>,
    weight: Option<&'a [f64]>,
}

impl MassMap<'_> {
    /// Masses and their Jacobian in the multipliers at `mu`; when `out` is
    /// given the projected values are written there.
    fn eval(&self, mu: &[f64], out: Option<&mut [Field]>) -> (Vec<f64>, Vec<f64>) {
        let (m, jac, _) = self.eval_dual(mu, out);
        (m, jac)
    }

    /// As [`MassMap::eval`], plus the concave dual function without its
    /// linear term `mu . a`: `sum_x h^2 (|u - v|^2 / 2 - w mu . u)`. Its
    /// gradient in `mu` is minus the masses.
    fn eval_dual(&self, mu: &[f64], mut out: Option<&mut [Field]>) -> (Vec<f64>, Vec<f64>, f64) {
        let g = self.sys.grid();
        let n = mu.len();
        let h2 = g.h() * g.h();
        let mut m = vec![0.0; n];
        let mut jac = vec![0.0; n * n];
        let mut y = vec![0.0; n];
        let mut dual = 0.0;
        let mut sorted = Vec::with_capacity(n);
        for k in 0..g.len() {
            if !g.is_inside(k) {
                continue;
            }
            let w = self.weight.map_or(1.0, |w| w[k]);
            for i in 0..n {
                y[i] = self.source[i][k] + mu[i] * w;
            }
            let c = h2 * w * w;
            if n == 1 {
                let x = y[0].clamp(0.0, 1.0);
                if x > 0.0 && x < 1.0 {
                    jac[0] += c;
                }
                y[0] = x;
            } else {
                let support = project_simplex(&mut y, &mut sorted);
                let share = c / support as f64;
                for i in 0..n {
                    if y[i] <= 0.0 {
                        continue;
                    }
                    jac[i * n + i] += c;
                    for j in 0..n {
                        if y[j] > 0.0 {
                            jac[i * n + j] -= share;
                        }
                    }
                }
            }
            for i in 0..n {
                m[i] += h2 * w * y[i];
                let d = y[i] - self.source[i][k];
                dual += h2 * (0.5 * d * d - w * mu[i] * y[i]);
            }
            if let Some(out) = out.as_deref_mut() {
                for i in 0..n {
                    out[i].values_mut()[k] = y[i];
                }
            }
        }
        (m, jac, dual)
    }
}

/// Solve `a x = b` for a small dense system by partial pivoting.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if piv != col {
            for j in 0..n {
                a.swap(col * n + j, piv * n + j);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f != 0.0 {
                for j in col..n {
                    a[r * n + j] -= f * a[col * n + j];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|j| a[r * n + j] * x[j]).sum();
        x[r] = (b[r] - s) / a[r * n + r];
    }
    x
}

/// Multiplier of a single clipped phase: the mass is nondecreasing in `mu`,
/// zero below the bracket and the full weighted area above it. Newton steps
/// that leave the bracket or meet a flat piece fall back to bisection.
fn bracketed_shift(map: &MassMap, target: f64, err_of: &dyn Fn(&[f64]) -> f64) -> Result<f64, ConstraintError> {
    let g = map.sys.grid();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for k in (0..g.len()).filter(|&k| g.is_inside(k)) {
        let w = map.weight.map_or(1.0, |w| w[k]);
        let v = map.source[0][k];
        lo = lo.min(-v / w);
        hi = hi.max((1.0 - v) / w);
    }
    let mut mu = 0.5 * (lo + hi);
    for _ in 0..FEASIBLE_MAX_ITERS * 4 {
        let (m, jac) = map.eval(&[mu], None);
        let err = err_of(&m);
        if err <= FEASIBLE_TOL || hi - lo <= f64::EPSILON * mu.abs().max(1.0) {
            if err > WEIGHTED_TOL {
                return Err(ConstraintError::NotConverged {
                    sweeps: FEASIBLE_MAX_ITERS * 4,
                    residual: err,
                });
            }
            return Ok(mu);
        }
        if m[0] < target {
            lo = mu;
        } else {
            hi = mu;
        }
        let newton = mu + (target - m[0]) / jac[0];
        mu = if jac[0] > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let (m, _) = map.eval(&[mu], None);
    let err = err_of(&m);
    if err > WEIGHTED_TOL {
        return Err(ConstraintError::NotConverged {
            sweeps: FEASIBLE_MAX_ITERS * 4,
            residual: err,
        });
    }
    Ok(mu)
}

/// Exact Euclidean projection onto the admissible set including the box:
/// `0 <= u <= 1` for a single phase, the pointwise unit simplex for several,
/// intersected with the (weighted) mass constraints.
///
/// The solution is `u_i(x) = proj(v(x) + mu nu(x))_i` for per-phase
/// multipliers `mu`, found by a semismooth Newton iteration on the
/// piecewise-linear mass map.
pub fn project_feasible(sys: &mut PhaseSystem, weight: Option<&Field>) -> Result<Residuals, ConstraintError> {
    let n = sys.len();
    let total = domain_mass(sys, weight);
    if let Some(w) = weight {
        check_weight(sys, w)?;
    }
    if n > 1 {
        let sum: f64 = sys.targets().iter().sum();
        if (sum - total).abs() > 1e-9 * total.abs() {
            return Err(ConstraintError::TargetsInconsistent { sum, total });
        }
    }
    let targets = sys.targets().to_vec();
    let scale: Vec<f64> = targets.iter().map(|a| a.abs().max(1e-12 * total.abs())).collect();
    let map = MassMap {
        sys,
        source: sys.phases().iter().map(|f| f.values().to_vec()).collect(),
        weight: weight.map(|w| w.values()),
    };
    let err_of = |m: &[f64]| {
        m.iter()
            .zip(&targets)
            .zip(&scale)
            .map(|((m, a), s)| (m - a).abs() / s)
            .fold(0.0, |acc: f64, e| if e.is_nan() { f64::INFINITY } else { acc.max(e) })
    };
    let norm_of = |m: &[f64]| {
        m.iter()
            .zip(&targets)
            .map(|(m, a)| (m - a) * (m - a))
            .sum::<f64>()
            .sqrt()
    };

    if n == 1 {
        let mu = bracketed_shift(&map, targets[0], &err_of)?;
        let mut phases = sys.phases().to_vec();
        map.eval(&[mu], Some(&mut phases));
        sys.phases_mut()[0] = phases.pop().expect("one phase");
        return Ok(residuals(sys, weight));
    }
    // Regularized semismooth Newton ascent on the dual. The regularization
    // scales with the relative residual, so steps stay finite where every
    // node sits at a vertex of the simplex and the Jacobian vanishes.
    let area = match weight {
        None => sys.grid().area(),
        Some(w) => integrate_product(sys.grid(), w.values(), w.values()),
    };
    let mass_scale: f64 = scale.iter().sum();
    let dual_of = |mu: &[f64], partial: f64| partial + mu.iter().zip(&targets).map(|(u, a)| u * a).sum::<f64>();
    let mut mu = vec![0.0; n];
    let (mut m, mut jac, partial) = map.eval_dual(&mu, None);
    let mut dual = dual_of(&mu, partial);
    let mut converged = false;
    for _ in 0..FEASIBLE_MAX_ITERS {
        if err_of(&m) <= FEASIBLE_TOL {
            converged = true;
            break;
        }
        let r: Vec<f64> = targets.iter().zip(&m).map(|(a, m)| a - m).collect();
        let rel = norm_of(&m) / mass_scale;
        let lambda = area * (1e-12 + rel.min(1.0));
        let mut a = jac.clone();
        for i in 0..n {
            a[i * n + i] += lambda;
            // The common shift of all multipliers is inert.
            for j in 0..n {
                a[i * n + j] += area / n as f64;
            }
        }
        let delta = solve_dense(a, r.clone());
        let slope: f64 = r.iter().zip(&delta).map(|(r, d)| r * d).sum();
        if !(slope > 0.0) {
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-12 {
            let trial: Vec<f64> = mu.iter().zip(&delta).map(|(u, d)| u + step * d).collect();
            let (tm, tj, tp) = map.eval_dual(&trial, None);
            let td = dual_of(&trial, tp);
            if td >= dual + 1e-4 * step * slope || err_of(&tm) <= FEASIBLE_TOL {
                mu = trial;
                m = tm;
                jac = tj;
                dual = td;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let residual = err_of(&m);
    if !converged && !(residual <= WEIGHTED_TOL) {
        return Err(ConstraintError::NotConverged {
            sweeps: FEASIBLE_MAX_ITERS,
            residual,
        });
    }
    let mut phases = sys.phases().to_vec();
    map.eval(&mu, Some(&mut phases));
    for (dst, src) in sys.phases_mut().iter_mut().zip(phases) {
        *dst = src;
    }
    Ok(residuals(sys, weight))
}
