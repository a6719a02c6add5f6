//! Projected gradient descent at fixed `eps` and the continuation driver
//! that lowers `eps` while refining the grid.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::anisotropy::{make_density_weight, Anisotropy, AnisotropyError};
use crate::constraints::{domain_mass, project_feasible, residuals, ConstraintError, Residuals};
use crate::energy::{DoubleWell, EnergyError, EnergyModel, PhaseSystem};
use crate::grid::{
    make_disk_mask, make_hexagon_mask, make_triangle_mask, refine_interpolate, Boundary, Field, Grid, GridError,
    Labels, Point,
};
use crate::profile::{recovery_init, ProfileError};

/// Below this step the line search gives up.
pub const MIN_STEP: f64 = 1e-14;
const GROW: f64 = 1.2;
const SURROGATE_START: f64 = 0.25;
const SURROGATE_FLOOR: f64 = 1e-3;
const SURROGATE_RATIO: f64 = 0.1;

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error("schedule has no stages")]
    EmptySchedule,
    #[error("stage {stage}: eps = {eps} outside [1/N, 4/N] = [{lo}, {hi}] for N = {n}")]
    EpsOutOfBand {
        stage: usize,
        n: usize,
        eps: f64,
        lo: f64,
        hi: f64,
    },
    #[error("stage {stage}: N must not decrease and eps must not increase")]
    NotMonotone { stage: usize },
    #[error("phase fractions must be positive and sum to 1 (got sum {0})")]
    BadFractions(f64),
    #[error("periodic boundaries require the full square domain")]
    PeriodicShape,
    #[error("warm-start labels use {found} phases, problem has {expected}")]
    WarmStartPhases { found: u32, expected: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Anisotropy(#[from] AnisotropyError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stage {
    pub n: usize,
    pub eps: f64,
}

/// Interface widths are measured against the node count per unit length,
/// so the band is `eps * N / side` in `[1, 4]`.
pub fn eps_band(n: usize, side: f64) -> (f64, f64) {
    (side / n as f64, 4.0 * side / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationSchedule {
    pub stages: Vec<Stage>,
    pub seed: u64,
    pub minimize: MinimizeConfig,
    /// Skip the `eps` band check.
    pub eps_override: bool,
    /// Correlation lattice of the random start; see [`DEFAULT_INIT_CELLS`].
    pub init_cells: usize,
}

/// Side of the coarse lattice the random start is drawn on.
pub const DEFAULT_INIT_CELLS: usize = 8;
/// Range of the random start before its first projection; the projected
/// start is then close to a pure labeling.
const START_CONTRAST: f64 = 8.0;

impl ContinuationSchedule {
    /// `stages` stages starting at `n0` nodes and `eps = 4 side / n0`; each
    /// stage multiplies N by 1.5 (rounded to odd) and `eps` by a constant
    /// factor chosen so the last stage sits at `eps = side / N_last`.
    pub fn geometric(n0: usize, stages: usize, side: f64, seed: u64, minimize: MinimizeConfig) -> Self {
        let mut ns = vec![n0];
        for _ in 1..stages {
            let next = (*ns.last().unwrap() as f64 * 1.5).round() as usize;
            ns.push(next | 1);
        }
        let first = 4.0 * side / n0 as f64;
        let last = side / *ns.last().unwrap() as f64;
        let ratio = if stages > 1 {
            (last / first).powf(1.0 / (stages - 1) as f64)
        } else {
            1.0
        };
        let stages = ns
            .iter()
            .enumerate()
            .map(|(s, &n)| {
                let (lo, hi) = eps_band(n, side);
                Stage {
                    n,
                    eps: (first * ratio.powi(s as i32)).clamp(lo, hi),
                }
            })
            .collect();
        Self {
            stages,
            seed,
            minimize,
            eps_override: false,
            init_cells: DEFAULT_INIT_CELLS,
        }
    }

    pub fn validate(&self, side: f64) -> Result<(), OptimizerError> {
        if self.stages.is_empty() {
            return Err(OptimizerError::EmptySchedule);
        }
        for (s, st) in self.stages.iter().enumerate() {
            if !self.eps_override {
                let (lo, hi) = eps_band(st.n, side);
                let slack = 1e-12 * hi;
                if !(st.eps >= lo - slack && st.eps <= hi + slack) {
                    return Err(OptimizerError::EpsOutOfBand {
                        stage: s,
                        n: st.n,
                        eps: st.eps,
                        lo,
                        hi,
                    });
                }
            }
            if s > 0 {
                let prev = self.stages[s - 1];
                if st.n < prev.n || st.eps > prev.eps {
                    return Err(OptimizerError::NotMonotone { stage: s });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeConfig {
    pub max_iters: usize,
    /// Stop once the projected-gradient norm falls below this.
    pub grad_tol: f64,
    /// First trial step; `None` uses the explicit stability estimate
    /// `1 / (16 eps)`.
    pub step0: Option<f64>,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: 1e-4,
            step0: None,
        }
    }
}

/// Largest step for which the gradient term of the energy is stable under
/// explicit descent; also the fixed probe step of the stationarity measure.
pub fn stable_step(eps: f64) -> f64 {
    1.0 / (16.0 * eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterRecord {
    pub stage: usize,
    pub iter: usize,
    pub eps: f64,
    pub energy_scaled: f64,
    pub grad_norm: f64,
    pub sum_residual: f64,
    pub mass_residual: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeOutcome {
    pub sys: PhaseSystem,
    /// One record for the start point and one per accepted step.
    pub records: Vec<IterRecord>,
    pub iterations: usize,
    pub converged: bool,
    pub warning: Option<String>,
}

impl MinimizeOutcome {
    pub fn final_energy_scaled(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.energy_scaled)
    }
}

/// `u <- P(u - t g)` on a copy of `sys`, with `P` the exact projection
/// onto the admissible set including the box.
fn trial(
    sys: &PhaseSystem,
    grad: &[Vec<f64>],
    t: f64,
    weight: Option<&Field>,
) -> Result<(PhaseSystem, Residuals), ConstraintError> {
    let mut next = sys.clone();
    for (f, g) in next.phases_mut().iter_mut().zip(grad) {
        for (v, d) in f.values_mut().iter_mut().zip(g) {
            *v -= t * d;
        }
        f.enforce_mask();
    }
    let res = project_feasible(&mut next, weight)?;
    Ok((next, res))
}

fn distance(a: &PhaseSystem, b: &PhaseSystem) -> f64 {
    a.phases()
        .iter()
        .zip(b.phases())
        .flat_map(|(x, y)| x.values().iter().zip(y.values()).map(|(p, q)| (p - q) * (p - q)))
        .sum::<f64>()
        .sqrt()
}

/// Smoothing levels used for search directions when the anisotropy is
/// smoothed with `delta > 0`: geometric from `SURROGATE_START / eps` down to
/// `max(delta, SURROGATE_FLOOR / eps)`. Empty when no level exceeds `delta`.
fn surrogate_deltas(delta: f64, eps: f64) -> Vec<f64> {
    if delta <= 0.0 {
        return Vec::new();
    }
    let floor = delta.max(SURROGATE_FLOOR / eps);
    let mut out = Vec::new();
    let mut d = SURROGATE_START / eps;
    while d > floor * (1.0 + 1e-9) {
        out.push(d);
        d *= SURROGATE_RATIO;
    }
    if out.is_empty() && floor == delta {
        return out;
    }
    out.push(floor);
    out
}

/// Projected gradient descent with Armijo backtracking at fixed `eps`.
///
/// `weight` is the mass weight used by the projection (density-weighted
/// mass), `stage` only tags the records. The input is projected first. A
/// line search that cannot decrease the energy above [`MIN_STEP`] ends the
/// run with a warning, not an error.
///
/// For smoothed anisotropies the search direction is the gradient of the
/// same energy with a larger smoothing (see [`surrogate_deltas`]), moving to
/// the next level when the surrogate is stationary or the line search
/// stalls. Acceptance, records and the returned energy always use `a`
/// itself, so logged energies decrease strictly.
pub fn minimize_at_eps(
    mut sys: PhaseSystem,
    a: &Anisotropy,
    well: DoubleWell,
    cfg: &MinimizeConfig,
    weight: Option<&Field>,
    stage: usize,
) -> Result<MinimizeOutcome, OptimizerError> {
    let grid = sys.grid().clone();
    let eps = sys.eps();
    let model = EnergyModel::new(&grid, a, well, eps);
    let inv_c = 1.0 / well.c_w();
    let h = grid.h();
    let probe = stable_step(eps);

    let mut records = Vec::new();
    if cfg.max_iters == 0 {
        let res = residuals(&sys, weight);
        records.push(IterRecord {
            stage,
            iter: 0,
            eps,
            energy_scaled: model.total_energy(&sys) * inv_c,
            grad_norm: f64::NAN,
            sum_residual: res.sum,
            mass_residual: res.mass,
            step: 0.0,
        });
        return Ok(MinimizeOutcome {
            sys,
            records,
            iterations: 0,
            converged: false,
            warning: None,
        });
    }

    let mut res = project_feasible(&mut sys, weight)?;
    let mut energy = model.total_energy(&sys);
    let mut t = cfg.step0.unwrap_or(probe);
    let mut converged = false;
    let mut warning = None;
    let mut iterations = 0;

    let surrogates: Vec<Anisotropy> = surrogate_deltas(a.delta(), eps)
        .into_iter()
        .map(|d| a.with_delta(d))
        .collect();
    let directions: Vec<EnergyModel> = surrogates
        .iter()
        .map(|s| EnergyModel::new(&grid, s, well, eps))
        .collect();
    let mut level = 0;
    let last = directions.len().saturating_sub(1);

    for iter in 0..=cfg.max_iters {
        let grad = match directions.get(level) {
            Some(m) => m.gradient(&sys),
            None => model.gradient(&sys),
        };
        let (probed, _) = trial(&sys, &grad, probe, weight)?;
        let grad_norm = distance(&sys, &probed) / probe / h;
        records.push(IterRecord {
            stage,
            iter,
            eps,
            energy_scaled: energy * inv_c,
            grad_norm,
            sum_residual: res.sum,
            mass_residual: res.mass,
            step: if iter == 0 { 0.0 } else { t / GROW },
        });
        if grad_norm < cfg.grad_tol {
            if level < last {
                level += 1;
                continue;
            }
            converged = true;
            break;
        }
        if iter == cfg.max_iters {
            break;
        }
        let accepted = loop {
            let (cand, cres) = trial(&sys, &grad, t, weight)?;
            let e = model.total_energy(&cand);
            if e < energy {
                break Some((cand, cres, e));
            }
            t *= 0.5;
            if t < MIN_STEP {
                break None;
            }
        };
        match accepted {
            Some((cand, cres, e)) => {
                sys = cand;
                res = cres;
                energy = e;
                t *= GROW;
                iterations += 1;
            }
            None if level < last => {
                level += 1;
                t = cfg.step0.unwrap_or(probe);
            }
            None => {
                warning = Some(format!(
                    "stage {stage}: line search found no decrease above step {MIN_STEP:e} after {iterations} iterations"
                ));
                converged = true;
                break;
            }
        }
    }
    Ok(MinimizeOutcome {
        sys,
        records,
        iterations,
        converged,
        warning,
    })
}

/// `label(x) = argmax_i u_i(x)`, ties to the lowest index, masked nodes 0.
/// A single phase is read against its implicit complement: 1 where
/// `u >= 1/2`, otherwise 2.
pub fn extract_labels(sys: &PhaseSystem) -> Labels {
    let g = sys.grid().clone();
    let phases = sys.phases();
    let values = (0..g.len())
        .map(|k| {
            if !g.is_inside(k) {
                return 0;
            }
            if phases.len() == 1 {
                return if phases[0].values()[k] >= 0.5 { 1 } else { 2 };
            }
            let mut best = 0;
            for i in 1..phases.len() {
                if phases[i].values()[k] > phases[best].values()[k] {
                    best = i;
                }
            }
            best as u32 + 1
        })
        .collect();
    Labels::new(g, values).expect("grid length")
}

/// Nodes with positive image value are inside; sampled by nearest pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskImage {
    pub width: usize,
    pub height: usize,
    /// Row-major, first row at the bottom (`y` grows with the row index).
    pub inside: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainShape {
    Square,
    Disk { center: Point, radius: f64 },
    Triangle { vertices: [Point; 3] },
    Hexagon { center: Point, radius: f64 },
    Image(Arc<MaskImage>),
}

/// Square `[origin, origin + side]^2`, possibly masked down to a shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub shape: DomainShape,
    pub origin: Point,
    pub side: f64,
    pub boundary: Boundary,
}

impl Domain {
    pub fn unit_square(boundary: Boundary) -> Self {
        Self {
            shape: DomainShape::Square,
            origin: [0.0, 0.0],
            side: 1.0,
            boundary,
        }
    }

    pub fn grid(&self, n: usize) -> Result<Arc<Grid>, OptimizerError> {
        let g = Grid::square(n, self.origin, self.side, self.boundary)?;
        if self.shape != DomainShape::Square && self.boundary == Boundary::Periodic {
            return Err(OptimizerError::PeriodicShape);
        }
        let mask = match &self.shape {
            DomainShape::Square => return Ok(Arc::new(g)),
            DomainShape::Disk { center, radius } => make_disk_mask(&g, *center, *radius)?,
            DomainShape::Triangle { vertices } => make_triangle_mask(&g, *vertices)?,
            DomainShape::Hexagon { center, radius } => make_hexagon_mask(&g, *center, *radius)?,
            DomainShape::Image(img) => (0..g.len())
                .map(|k| {
                    let (i, j) = g.coords(k);
                    let pi = (i * img.width / g.nx()).min(img.width - 1);
                    let pj = (j * img.height / g.ny()).min(img.height - 1);
                    img.inside[pj * img.width + pi]
                })
                .collect(),
        };
        Ok(Arc::new(g.with_mask(mask)?))
    }
}

/// Direction-independent density `nu(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DensitySpec {
    /// `inside` on the closed disk, `outside` elsewhere.
    Disk {
        center: Point,
        radius: f64,
        inside: f64,
        outside: f64,
    },
}

impl DensitySpec {
    pub fn eval(&self, p: Point) -> f64 {
        match *self {
            DensitySpec::Disk {
                center,
                radius,
                inside,
                outside,
            } => {
                if (p[0] - center[0]).hypot(p[1] - center[1]) <= radius {
                    inside
                } else {
                    outside
                }
            }
        }
    }

    pub fn field(&self, grid: Arc<Grid>) -> Field {
        Field::from_fn(grid, |p| self.eval(p))
    }
}

/// Everything except the schedule.
#[derive(Debug, Clone)]
pub struct Problem {
    pub domain: Domain,
    pub aniso: Anisotropy,
    pub well: DoubleWell,
    /// Fraction of the (weighted) domain mass per phase. A single entry
    /// means one phase against its complement.
    pub fractions: Vec<f64>,
    /// Multiplies the perimeter and, when `weighted_mass` is set, the mass.
    pub density: Option<DensitySpec>,
    pub weighted_mass: bool,
    pub warm_start: Option<Labels>,
    /// Truncation used when building a warm start.
    pub eta: f64,
}

impl Problem {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let sum: f64 = self.fractions.iter().sum();
        let positive = self.fractions.iter().all(|&f| f > 0.0 && f <= 1.0);
        let sums = self.fractions.len() == 1 || (sum - 1.0).abs() <= 1e-9;
        if self.fractions.is_empty() || !positive || !sums {
            return Err(OptimizerError::BadFractions(sum));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: usize,
    pub n: usize,
    pub eps: f64,
    pub iterations: usize,
    pub energy_scaled: f64,
    pub sum_residual: f64,
    pub mass_residual: f64,
    pub converged: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub seed: u64,
    pub stages: Vec<StageReport>,
    pub records: Vec<IterRecord>,
    pub labels: Labels,
    pub warnings: Vec<String>,
    /// Final optimization state, on the last stage grid.
    pub system: PhaseSystem,
}

struct StageContext {
    grid: Arc<Grid>,
    aniso: Anisotropy,
    weight: Option<Field>,
    targets: Vec<f64>,
}

fn stage_context(problem: &Problem, n: usize) -> Result<StageContext, OptimizerError> {
    let grid = problem.domain.grid(n)?;
    let (aniso, weight) = match &problem.density {
        Some(d) => {
            let nu = d.field(grid.clone());
            let a = make_density_weight(&problem.aniso, nu.clone())?;
            (a, problem.weighted_mass.then_some(nu))
        }
        None => (problem.aniso.clone(), None),
    };
    let probe = PhaseSystem::new(vec![Field::constant(grid.clone(), 0.0)], vec![0.0], 1.0)?;
    let total = domain_mass(&probe, weight.as_ref());
    let mut targets: Vec<f64> = problem.fractions.iter().map(|f| f * total).collect();
    if targets.len() > 1 {
        // Exact consistency with the domain mass.
        let drift = total - targets.iter().sum::<f64>();
        *targets.last_mut().unwrap() += drift;
    }
    Ok(StageContext {
        grid,
        aniso,
        weight,
        targets,
    })
}

/// IID uniform values on a `cells x cells` lattice over the domain,
/// bilinearly interpolated onto the stage grid.
fn random_start(
    problem: &Problem,
    ctx: &StageContext,
    seed: u64,
    cells: usize,
    eps: f64,
) -> Result<PhaseSystem, OptimizerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = &problem.domain;
    let cells = cells.clamp(1, ctx.grid.nx() - 1);
    let coarse = match d.boundary {
        Boundary::Periodic => Grid::square(cells.max(2), d.origin, d.side, d.boundary)?,
        Boundary::Neumann => Grid::square(cells + 1, d.origin, d.side, d.boundary)?,
    };
    let coarse = Arc::new(coarse);
    let phases = (0..ctx.targets.len())
        .map(|_| {
            let f = Field::from_fn(coarse.clone(), |_| START_CONTRAST * rng.random::<f64>());
            let mut fine = refine_interpolate(&f, ctx.grid.clone())?;
            fine.enforce_mask();
            Ok(fine)
        })
        .collect::<Result<Vec<_>, OptimizerError>>()?;
    Ok(PhaseSystem::new(phases, ctx.targets.clone(), eps)?)
}

fn warm_start(problem: &Problem, labels: &Labels, ctx: &StageContext, eps: f64) -> Result<PhaseSystem, OptimizerError> {
    let resampled = labels.resample(ctx.grid.clone());
    let n = ctx.targets.len();
    let expected = if n == 1 { 2 } else { n as u32 };
    if resampled.max_label() != expected {
        return Err(OptimizerError::WarmStartPhases {
            found: resampled.max_label(),
            expected: n,
        });
    }
    let sys = recovery_init(&resampled, &ctx.aniso, problem.well, eps, problem.eta)?;
    let mut phases = sys.into_phases();
    phases.truncate(n);
    Ok(PhaseSystem::new(phases, ctx.targets.clone(), eps)?)
}

/// Run every stage of `schedule`, warm-starting each from the previous
/// minimizer interpolated onto the finer grid.
pub fn run_continuation(schedule: &ContinuationSchedule, problem: &Problem) -> Result<RunReport, OptimizerError> {
    schedule.validate(problem.domain.side)?;
    problem.validate()?;
    let mut warnings = Vec::new();
    if !problem.aniso.is_convex() {
        warnings.push(format!(
            "anisotropy {} is not convex: the relaxation is not lower semicontinuous and minimizers may develop microstructure",
            problem.aniso.kind().name()
        ));
    }

    let mut stages = Vec::new();
    let mut records = Vec::new();
    let mut current: Option<PhaseSystem> = None;
    for (s, stage) in schedule.stages.iter().enumerate() {
        let start = Instant::now();
        let ctx = stage_context(problem, stage.n)?;
        let sys = match current.take() {
            None => match &problem.warm_start {
                Some(labels) => warm_start(problem, labels, &ctx, stage.eps)?,
                None => random_start(problem, &ctx, schedule.seed, schedule.init_cells, stage.eps)?,
            },
            Some(prev) => {
                let phases = prev
                    .phases()
                    .iter()
                    .map(|f| refine_interpolate(f, ctx.grid.clone()))
                    .collect::<Result<Vec<_>, _>>()?;
                PhaseSystem::new(phases, ctx.targets.clone(), stage.eps)?
            }
        };
        let out = minimize_at_eps(
            sys,
            &ctx.aniso,
            problem.well,
            &schedule.minimize,
            ctx.weight.as_ref(),
            s,
        )?;
        if let Some(w) = &out.warning {
            warnings.push(w.clone());
        }
        if !out.converged {
            warnings.push(format!(
                "stage {s}: iteration budget of {} exhausted before reaching grad_tol {:e}",
                schedule.minimize.max_iters, schedule.minimize.grad_tol
            ));
        }
        let last = *out.records.last().expect("at least one record");
        log::info!(
            "stage {s}: N = {}, eps = {:.6}, {} iterations, energy {:.6}",
            stage.n,
            stage.eps,
            out.iterations,
            last.energy_scaled
        );
        stages.push(StageReport {
            stage: s,
            n: stage.n,
            eps: stage.eps,
            iterations: out.iterations,
            energy_scaled: last.energy_scaled,
            sum_residual: last.sum_residual,
            mass_residual: last.mass_residual,
            converged: out.converged,
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        records.extend(out.records);
        current = Some(out.sys);
    }
    let system = current.expect("schedule is not empty");
    Ok(RunReport {
        seed: schedule.seed,
        stages,
        records,
        labels: extract_labels(&system),
        warnings,
        system,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anisotropy::AnisotropyKind;
    use crate::energy::total_energy;
    use crate::profile::DEFAULT_ETA;
    use approx::assert_relative_eq;

    fn isoperimetric(aniso: Anisotropy) -> Problem {
        Problem {
            domain: Domain::unit_square(Boundary::Periodic),
            aniso,
            well: DoubleWell::Quartic {},
            fractions: vec![1.0 / 7.0],
            density: None,
            weighted_mass: false,
            warm_start: None,
            eta: DEFAULT_ETA,
        }
    }

    fn random_system(n_phases: usize, n: usize, seed: u64) -> PhaseSystem {
        let g = Arc::new(Grid::unit_square(n, Boundary::Neumann).unwrap());
        let area = g.area();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases = (0..n_phases)
            .map(|_| Field::from_fn(g.clone(), |_| rng.random::<f64>()))
            .collect();
        let targets = vec![area / n_phases as f64; n_phases];
        PhaseSystem::new(phases, targets, 2.0 / n as f64).unwrap()
    }

    #[test]
    fn geometric_schedule_respects_band() {
        let s = ContinuationSchedule::geometric(41, 4, 1.0, 0, MinimizeConfig::default());
        let ns: Vec<usize> = s.stages.iter().map(|st| st.n).collect();
        assert_eq!(ns, vec![41, 63, 95, 143]);
        assert!((s.stages[0].eps - 4.0 / 41.0).abs() < 1e-15);
        assert!((s.stages[3].eps - 1.0 / 143.0).abs() < 1e-15);
        s.validate(1.0).unwrap();
    }

    #[test]
    fn schedule_validation() {
        let mut s = ContinuationSchedule {
            stages: vec![Stage {
                n: 101,
                eps: 10.0 / 101.0,
            }],
            seed: 0,
            minimize: MinimizeConfig::default(),
            eps_override: false,
            init_cells: DEFAULT_INIT_CELLS,
        };
        assert!(matches!(s.validate(1.0), Err(OptimizerError::EpsOutOfBand { .. })));
        s.eps_override = true;
        s.validate(1.0).unwrap();
        s.stages = vec![Stage { n: 101, eps: 0.02 }, Stage { n: 51, eps: 0.02 }];
        assert!(matches!(s.validate(1.0), Err(OptimizerError::NotMonotone { stage: 1 })));
        s.stages.clear();
        assert!(matches!(s.validate(1.0), Err(OptimizerError::EmptySchedule)));
    }

    #[test]
    fn zero_budget_returns_input() {
        let sys = random_system(2, 11, 1);
        let cfg = MinimizeConfig {
            max_iters: 0,
            ..Default::default()
        };
        let out = minimize_at_eps(
            sys.clone(),
            &Anisotropy::euclidean(),
            DoubleWell::Quartic {},
            &cfg,
            None,
            0,
        )
        .unwrap();
        assert_eq!(out.iterations, 0);
        for (a, b) in out.sys.phases().iter().zip(sys.phases()) {
            assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn energy_is_monotone_and_iterates_feasible() {
        let sys = random_system(3, 21, 2);
        let cfg = MinimizeConfig {
            max_iters: 200,
            grad_tol: 0.0,
            step0: None,
        };
        let a = Anisotropy::new(AnisotropyKind::l1(1e-6)).unwrap();
        let out = minimize_at_eps(sys, &a, DoubleWell::Quartic {}, &cfg, None, 0).unwrap();
        for w in out.records.windows(2) {
            assert!(w[1].energy_scaled <= w[0].energy_scaled);
        }
        for r in &out.records {
            assert!(r.sum_residual <= 1e-10 && r.mass_residual <= 1e-10);
        }
        assert!(out.iterations > 0);
    }

    #[test]
    fn surrogate_levels() {
        assert!(surrogate_deltas(0.0, 0.01).is_empty());
        let d = surrogate_deltas(1e-6, 0.01);
        assert_eq!(d.len(), 4);
        assert_relative_eq!(d[0], 25.0, max_relative = 1e-12);
        assert_relative_eq!(*d.last().unwrap(), 0.1, max_relative = 1e-12);
        assert!(d.windows(2).all(|w| w[1] < w[0]));
        // A coarse smoothing ends at itself.
        let d = surrogate_deltas(1.0, 0.01);
        assert_eq!(*d.last().unwrap(), 1.0);
        assert!(surrogate_deltas(100.0, 0.01).is_empty());
    }

    #[test]
    fn deterministic_runs() {
        let problem = isoperimetric(Anisotropy::euclidean());
        let schedule = ContinuationSchedule {
            stages: vec![Stage { n: 31, eps: 2.0 / 31.0 }, Stage { n: 41, eps: 2.0 / 41.0 }],
            seed: 9,
            minimize: MinimizeConfig {
                max_iters: 60,
                ..Default::default()
            },
            eps_override: false,
            init_cells: DEFAULT_INIT_CELLS,
        };
        let a = run_continuation(&schedule, &problem).unwrap();
        let b = run_continuation(&schedule, &problem).unwrap();
        let ea: Vec<u64> = a.records.iter().map(|r| r.energy_scaled.to_bits()).collect();
        let eb: Vec<u64> = b.records.iter().map(|r| r.energy_scaled.to_bits()).collect();
        assert_eq!(ea, eb);
        assert_eq!(a.labels.values(), b.labels.values());
        assert_eq!(a.stages.len(), 2);
    }

    #[test]
    fn swapping_two_phases_swaps_the_result() {
        let sys = random_system(2, 17, 3);
        let g = sys.grid().clone();
        let t = sys.targets().to_vec();
        let swapped = PhaseSystem::new(
            vec![sys.phases()[1].clone(), sys.phases()[0].clone()],
            vec![t[1], t[0]],
            sys.eps(),
        )
        .unwrap();
        let cfg = MinimizeConfig {
            max_iters: 50,
            grad_tol: 0.0,
            step0: None,
        };
        let a = Anisotropy::euclidean();
        let x = minimize_at_eps(sys, &a, DoubleWell::Quartic {}, &cfg, None, 0).unwrap();
        let y = minimize_at_eps(swapped, &a, DoubleWell::Quartic {}, &cfg, None, 0).unwrap();
        assert_eq!(x.iterations, y.iterations);
        for k in 0..g.len() {
            assert!((x.sys.phases()[0].values()[k] - y.sys.phases()[1].values()[k]).abs() < 1e-12);
            assert!((x.sys.phases()[1].values()[k] - y.sys.phases()[0].values()[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn extract_labels_rules() {
        let g = Arc::new(Grid::unit_square(4, Boundary::Neumann).unwrap());
        let area = g.area();
        let two = |a: f64, b: f64| {
            PhaseSystem::new(
                vec![Field::constant(g.clone(), a), Field::constant(g.clone(), b)],
                vec![area * 0.5, area * 0.5],
                0.5,
            )
            .unwrap()
        };
        assert!(extract_labels(&two(0.9, 0.1)).values().iter().all(|&l| l == 1));
        assert!(extract_labels(&two(0.5, 0.5)).values().iter().all(|&l| l == 1));
        assert!(extract_labels(&two(0.2, 0.8)).values().iter().all(|&l| l == 2));
        // A uniform increasing rescaling keeps the argmax.
        let sys = random_system(3, 9, 4);
        let before = extract_labels(&sys);
        let mut scaled = sys.clone();
        for f in scaled.phases_mut() {
            for v in f.values_mut() {
                *v = (3.0 * *v).exp();
            }
        }
        assert_eq!(before.values(), extract_labels(&scaled).values());
    }

    #[test]
    fn masked_labels_are_zero() {
        let g = Grid::unit_square(21, Boundary::Neumann).unwrap();
        let mask = make_disk_mask(&g, [0.5, 0.5], 0.4).unwrap();
        let g = Arc::new(g.with_mask(mask).unwrap());
        let sys = PhaseSystem::new(vec![Field::constant(g.clone(), 0.7)], vec![0.7 * g.area()], 0.1).unwrap();
        let l = extract_labels(&sys);
        for k in 0..g.len() {
            assert_eq!(l.values()[k] == 0, !g.is_inside(k));
        }
    }

    #[test]
    fn recovery_start_of_a_disk_barely_moves() {
        let n = 81;
        let g = Arc::new(Grid::unit_square(n, Boundary::Periodic).unwrap());
        let r = (1.0f64 / (7.0 * std::f64::consts::PI)).sqrt();
        let labels = Labels::from_fn(g.clone(), |p| if (p[0] - 0.5).hypot(p[1] - 0.5) < r { 1 } else { 2 });
        let a = Anisotropy::euclidean();
        let eps = 2.0 / n as f64;
        let init = recovery_init(&labels, &a, DoubleWell::Quartic {}, eps, DEFAULT_ETA).unwrap();
        let mass = init.targets()[0];
        let start = PhaseSystem::new(vec![init.phases()[0].clone()], vec![mass], eps).unwrap();
        let e0 = total_energy(&start, &a, DoubleWell::Quartic {});
        let cfg = MinimizeConfig {
            max_iters: 100,
            grad_tol: 0.0,
            step0: None,
        };
        let out = minimize_at_eps(start.clone(), &a, DoubleWell::Quartic {}, &cfg, None, 0).unwrap();
        let e1 = total_energy(&out.sys, &a, DoubleWell::Quartic {});
        assert!(e1 <= e0);
        let drift = distance(&start, &out.sys) * g.h();
        assert!(drift < 0.05, "L2 drift {drift}");
    }

    #[test]
    fn isoperimetric_at_fixed_eps() {
        let problem = isoperimetric(Anisotropy::euclidean());
        let schedule = ContinuationSchedule {
            stages: vec![Stage {
                n: 101,
                eps: 1.0 / 50.0,
            }],
            seed: 1,
            minimize: MinimizeConfig::default(),
            eps_override: false,
            init_cells: DEFAULT_INIT_CELLS,
        };
        let report = run_continuation(&schedule, &problem).unwrap();
        let e = report.stages[0].energy_scaled;
        let target = 2.0 * (std::f64::consts::PI / 7.0).sqrt();
        assert!((e - target).abs() < 0.1 * target, "{e} vs {target}");
        assert!(report.stages[0].iterations <= 5000);
    }
}
