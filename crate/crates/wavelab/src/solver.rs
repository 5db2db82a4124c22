//! Time integration of the defocusing wave equation and of linear waves with
//! masked sources, plus exact linear solutions used for validation.
//!
//! The update is the three-level leapfrog
//! `u^{n+1} = 2u^n - u^{n-1} + dt² (Δu^n + N)`, with the nonlinearity `N`
//! either the explicit `-|u^n|^{p-1} u^n` (fast path) or the
//! difference-quotient form `-(F(u^{n+1}) - F(u^{n-1}))/(u^{n+1} - u^{n-1})`,
//! `F(u) = |u|^{p+1}/(p+1)`, solved per node by a safeguarded Newton
//! iteration. The difference-quotient form conserves the staggered discrete
//! energy (see [`discrete_energy`]) exactly wherever the spatial stencil is
//! self-adjoint, which holds for the d = 3 radial stencil and the 7-point
//! Cartesian stencil.

use std::sync::atomic::{AtomicUsize, Ordering};

use thiserror::Error;

use crate::grid::{
    defocusing_power, laplacian_into, potential_density, FieldState, GridError, GridMode,
    GridSpec,
};

pub use crate::grid::cfl_limit;

static COMPUTE_THREADS: AtomicUsize = AtomicUsize::new(1);

/// Sets the worker-thread count for the Cartesian step kernel. Results are
/// bit-identical for any thread count: threads own disjoint slabs and all
/// reductions are folded in slab order.
pub fn set_compute_threads(n: usize) {
    COMPUTE_THREADS.store(n.max(1), Ordering::Relaxed);
}

pub fn compute_threads() -> usize {
    COMPUTE_THREADS.load(Ordering::Relaxed)
}

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("causality budget exceeded: t_end = {t_end} but the grid only supports {max:.6} \
             (extent {extent} - support {support} - margin {margin}, halved)")]
    Budget {
        t_end: f64,
        max: f64,
        extent: f64,
        support: f64,
        margin: f64,
    },
    #[error("nonlinear solve failed at node {node}: residual {residual} after {iters} iterations")]
    NonlinearSolve {
        node: usize,
        residual: f64,
        iters: usize,
    },
    #[error("non-finite field at step {step}")]
    NonFinite { step: usize },
    #[error("initial data: {0}")]
    BadData(String),
    #[error("observer: {0}")]
    Observer(String),
}

/// Time-stepping scheme selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Leapfrog,
    Conservative,
}

impl std::str::FromStr for Scheme {
    type Err = SolverError;
    fn from_str(s: &str) -> Result<Self, SolverError> {
        match s {
            "leapfrog" => Ok(Scheme::Leapfrog),
            "conservative" => Ok(Scheme::Conservative),
            other => Err(SolverError::BadData(format!("unknown scheme {other:?}"))),
        }
    }
}

/// Named analytic initial-data families.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    Zero,
    /// Radial seed `u0 = -2A e^{-r²/σ²}`, `u1 = 0`; for d = 3 this is the
    /// exact free wave generated by `f(s) = A s e^{-s²/σ²}`.
    GaussianOdd { amplitude: f64, width: f64 },
    /// Two displaced Gaussian bumps (cartesian3d); non-radial by
    /// construction.
    OffsetBumps {
        amplitude: f64,
        width: f64,
        center: [f64; 3],
    },
    /// C-infinity bump with exact compact support `r <= radius`.
    CompactBump { amplitude: f64, radius: f64 },
}

/// Problem description: exponent, defocusing nonlinearity on/off, scheme,
/// data family and its (numerical) support radius.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub p: f64,
    pub nonlinear: bool,
    pub scheme: Scheme,
    pub data: InitialData,
    pub r_support: f64,
}

/// Smooth rapidly-decaying profile generating a radial d = 3 free wave
/// `u = (f(t-r) - f(t+r))/r`.
pub trait RadialProfile {
    fn f(&self, s: f64) -> f64;
    fn df(&self, s: f64) -> f64;
    fn ddf(&self, s: f64) -> f64;
}

/// `f(s) = A s e^{-s²/σ²}` — the "gaussian-odd" family.
#[derive(Debug, Clone, Copy)]
pub struct GaussianOddProfile {
    pub amplitude: f64,
    pub width: f64,
}

impl RadialProfile for GaussianOddProfile {
    fn f(&self, s: f64) -> f64 {
        let w2 = self.width * self.width;
        self.amplitude * s * (-s * s / w2).exp()
    }
    fn df(&self, s: f64) -> f64 {
        let w2 = self.width * self.width;
        self.amplitude * (1.0 - 2.0 * s * s / w2) * (-s * s / w2).exp()
    }
    fn ddf(&self, s: f64) -> f64 {
        let w2 = self.width * self.width;
        self.amplitude * (-6.0 * s / w2 + 4.0 * s * s * s / (w2 * w2)) * (-s * s / w2).exp()
    }
}

/// Exact radial free wave in d = 3: `u = (f(t-r) - f(t+r))/r` with the
/// origin limits `u(0,t) = -2f'(t)`, `u_t(0,t) = -2f''(t)`, `u_r(0,t) = 0`.
pub fn exact_free_wave_3d(profile: &dyn RadialProfile, r: f64, t: f64) -> (f64, f64, f64) {
    if r.abs() < 1e-4 {
        return (-2.0 * profile.df(t), -2.0 * profile.ddf(t), 0.0);
    }
    let (fm, fp) = (profile.f(t - r), profile.f(t + r));
    let (dm, dp) = (profile.df(t - r), profile.df(t + r));
    let u = (fm - fp) / r;
    let ut = (dm - dp) / r;
    let ur = (-dm - dp) / r - (fm - fp) / (r * r);
    (u, ut, ur)
}

/// Samples the named data family onto the grid.
pub fn init_from_data(problem: &ProblemSpec, grid: &GridSpec) -> Result<FieldState, SolverError> {
    if problem.r_support >= grid.extent() {
        return Err(SolverError::BadData(format!(
            "support radius {} exceeds grid extent {}",
            problem.r_support,
            grid.extent()
        )));
    }
    let mut state = FieldState::zero(grid);
    match (&problem.data, grid.mode) {
        (InitialData::Zero, _) => {}
        (InitialData::GaussianOdd { amplitude, width }, GridMode::Radial { .. }) => {
            let w2 = width * width;
            for i in 0..grid.n {
                let r = grid.radius(i);
                state.u[i] = -2.0 * amplitude * (-r * r / w2).exp();
            }
        }
        (InitialData::CompactBump { amplitude, radius }, GridMode::Radial { .. }) => {
            for i in 0..grid.n {
                let s = grid.radius(i) / radius;
                if s < 1.0 {
                    state.u[i] = amplitude * (1.0 - 1.0 / (1.0 - s * s)).exp();
                }
            }
        }
        (
            InitialData::OffsetBumps {
                amplitude,
                width,
                center,
            },
            GridMode::Cartesian3d,
        ) => {
            let w2 = width * width;
            for idx in 0..grid.node_count() {
                let c = grid.coords(idx);
                let dplus = (c[0] - center[0]).powi(2)
                    + (c[1] - center[1]).powi(2)
                    + (c[2] - center[2]).powi(2);
                let dminus = (c[0] + center[0]).powi(2)
                    + (c[1] + center[1]).powi(2)
                    + (c[2] + center[2]).powi(2);
                state.u[idx] = amplitude * ((-dplus / w2).exp() + (-dminus / w2).exp());
            }
        }
        (data, mode) => {
            return Err(SolverError::BadData(format!(
                "data family {data:?} is not defined for grid mode {mode:?}"
            )));
        }
    }
    Ok(state)
}

/// Per-step ledger entry.
#[derive(Debug, Clone, Copy)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    /// The staggered two-level energy functional; exactly conserved by the
    /// conservative scheme where the stencil is self-adjoint.
    pub discrete_energy: f64,
    pub kinetic: f64,
    pub gradient: f64,
    pub potential: f64,
    pub max_u: f64,
    pub cfl_margin: f64,
}

/// Staggered discrete energy of two consecutive levels:
/// kinetic `½ Σ w ((u^{n+1}-u^n)/dt)²`, gradient `-½<L u^n, u^{n+1}>_w`
/// (symmetrized), potential `½ Σ w (F(u^n) + F(u^{n+1}))`.
pub fn discrete_energy(
    cur: &[f64],
    next: &[f64],
    grid: &GridSpec,
    p: f64,
    nonlinear: bool,
) -> (f64, f64, f64, f64) {
    let dt = grid.dt;
    let weights = quadrature_weights(grid);
    let mut lap_cur = vec![0.0; cur.len()];
    let mut lap_next = vec![0.0; cur.len()];
    laplacian_into(cur, grid, &mut lap_cur);
    laplacian_into(next, grid, &mut lap_next);

    let mut kin = 0.0;
    let mut grad = 0.0;
    let mut pot = 0.0;
    for i in 0..cur.len() {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let v = (next[i] - cur[i]) / dt;
        kin += 0.5 * w * v * v;
        grad += -0.25 * w * (lap_cur[i] * next[i] + lap_next[i] * cur[i]);
        if nonlinear {
            pot += 0.5 * w * (potential_density(cur[i], p) + potential_density(next[i], p));
        }
    }
    let total = kin + grad + pot;
    (kin, grad, pot, total)
}

/// Rectangle quadrature weights matching the inner product in which the
/// spatial stencil is (for d = 3 radial and cartesian3d exactly)
/// self-adjoint: `σ h r^{d-1}` per radial node, `h³` per Cartesian node.
fn quadrature_weights(grid: &GridSpec) -> Vec<f64> {
    match grid.mode {
        GridMode::Radial { d } => {
            let sigma = crate::grid::sphere_area(d);
            (0..grid.n)
                .map(|i| sigma * grid.h * grid.radius(i).powi(d as i32 - 1))
                .collect()
        }
        GridMode::Cartesian3d => {
            vec![grid.h * grid.h * grid.h; grid.node_count()]
        }
    }
}

/// One explicit step: `next = 2 cur - prev + dt² (Δcur + rhs)`, where `rhs`
/// already contains nonlinearity and/or source terms evaluated at `cur`'s
/// level. Boundary ring stays pinned at zero.
pub(crate) fn step_explicit(
    prev: &[f64],
    cur: &[f64],
    grid: &GridSpec,
    rhs: &[f64],
    next: &mut [f64],
) {
    let dt2 = grid.dt * grid.dt;
    let h2 = grid.h * grid.h;
    match grid.mode {
        GridMode::Radial { d } => {
            let n = grid.n;
            let dm1 = (d - 1) as f64;
            let lap0 = 2.0 * d as f64 * (cur[1] - cur[0]) / h2;
            next[0] = 2.0 * cur[0] - prev[0] + dt2 * (lap0 + rhs[0]);
            for i in 1..n - 1 {
                let r = grid.radius(i);
                let lap = (cur[i + 1] - 2.0 * cur[i] + cur[i - 1]) / h2
                    + dm1 / r * (cur[i + 1] - cur[i - 1]) / (2.0 * grid.h);
                next[i] = 2.0 * cur[i] - prev[i] + dt2 * (lap + rhs[i]);
            }
            next[n - 1] = 0.0;
        }
        GridMode::Cartesian3d => {
            let n = grid.n;
            let nn = n * n;
            let threads = compute_threads().min(n.saturating_sub(2)).max(1);
            let kernel = |next_slab: &mut [f64], z0: usize, z1: usize| {
                for iz in z0..z1 {
                    for iy in 0..n {
                        let row = n * (iy + n * iz);
                        let out_row = row - z0 * nn;
                        if iz == 0 || iz == n - 1 || iy == 0 || iy == n - 1 {
                            next_slab[out_row..out_row + n].fill(0.0);
                            continue;
                        }
                        next_slab[out_row] = 0.0;
                        next_slab[out_row + n - 1] = 0.0;
                        for ix in 1..n - 1 {
                            let c = row + ix;
                            let lap = (cur[c - 1] + cur[c + 1] + cur[c - n] + cur[c + n]
                                + cur[c - nn]
                                + cur[c + nn]
                                - 6.0 * cur[c])
                                / h2;
                            next_slab[out_row + ix] =
                                2.0 * cur[c] - prev[c] + dt2 * (lap + rhs[c]);
                        }
                    }
                }
            };
            if threads <= 1 {
                kernel(next, 0, n);
            } else {
                let per = n.div_ceil(threads);
                let mut slabs: Vec<&mut [f64]> = Vec::new();
                let mut rest = &mut next[..];
                let mut z = 0;
                let mut bounds = Vec::new();
                while z < n {
                    let z1 = (z + per).min(n);
                    let (head, tail) = rest.split_at_mut((z1 - z) * nn);
                    slabs.push(head);
                    rest = tail;
                    bounds.push((z, z1));
                    z = z1;
                }
                std::thread::scope(|scope| {
                    for (slab, (z0, z1)) in slabs.into_iter().zip(bounds) {
                        scope.spawn(move || kernel(slab, z0, z1));
                    }
                });
            }
        }
    }
}

/// One conservative step: solves per node
/// `x = 2u^n - u^{n-1} + dt² (Δu^n + src) - dt² (F(x)-F(b))/(x-b)`,
/// `b = u^{n-1}`, to a 1e-13 scaled residual by safeguarded Newton.
pub(crate) fn step_conservative(
    prev: &[f64],
    cur: &[f64],
    grid: &GridSpec,
    p: f64,
    src: Option<&[f64]>,
    next: &mut [f64],
) -> Result<(), SolverError> {
    // a = explicit linear part
    let zeros;
    let rhs = match src {
        Some(s) => s,
        None => {
            zeros = vec![0.0; cur.len()];
            &zeros
        }
    };
    step_explicit(prev, cur, grid, rhs, next);
    let dt2 = grid.dt * grid.dt;

    let boundary = boundary_mask(grid);
    for i in 0..cur.len() {
        if boundary(i) {
            continue;
        }
        let a = next[i];
        let b = prev[i];
        let x = solve_difference_quotient(a, b, dt2, p, cur[i]).map_err(|(residual, iters)| {
            SolverError::NonlinearSolve {
                node: i,
                residual,
                iters,
            }
        })?;
        next[i] = x;
    }
    Ok(())
}

fn boundary_mask(grid: &GridSpec) -> impl Fn(usize) -> bool + '_ {
    let n = grid.n;
    move |idx: usize| match grid.mode {
        GridMode::Radial { .. } => idx == n - 1,
        GridMode::Cartesian3d => {
            let ix = idx % n;
            let iy = (idx / n) % n;
            let iz = idx / (n * n);
            ix == 0 || iy == 0 || iz == 0 || ix == n - 1 || iy == n - 1 || iz == n - 1
        }
    }
}

/// Difference quotient `g(x, b) = (F(x) - F(b))/(x - b)` with the removable
/// singularity patched by the midpoint derivative.
fn diff_quotient(x: f64, b: f64, p: f64) -> f64 {
    let scale = x.abs().max(b.abs()).max(1.0);
    if (x - b).abs() <= 1e-8 * scale {
        defocusing_power(0.5 * (x + b), p)
    } else {
        (potential_density(x, p) - potential_density(b, p)) / (x - b)
    }
}

fn diff_quotient_dx(x: f64, b: f64, p: f64) -> f64 {
    let scale = x.abs().max(b.abs()).max(1.0);
    if (x - b).abs() <= 1e-8 * scale {
        0.5 * p * 0.5 * (x + b).abs().powf(p - 1.0)
    } else {
        let fx = defocusing_power(x, p);
        let g = diff_quotient(x, b, p);
        (fx - g) / (x - b)
    }
}

fn solve_difference_quotient(
    a: f64,
    b: f64,
    dt2: f64,
    p: f64,
    guess_base: f64,
) -> Result<f64, (f64, usize)> {
    let psi = |x: f64| x - a + dt2 * diff_quotient(x, b, p);
    let dpsi = |x: f64| 1.0 + dt2 * diff_quotient_dx(x, b, p);

    // start from the explicit prediction
    let mut x = a - dt2 * defocusing_power(guess_base, p);
    let tol = |x: f64| 1e-13 * x.abs().max(1.0);

    // establish a bracket around the root (psi is increasing for the dt
    // range the CFL check admits)
    let mut lo = x;
    let mut hi = x;
    let mut flo = psi(lo);
    let mut fhi = flo;
    let mut width = 1e-3_f64.max(flo.abs());
    let mut tries = 0;
    while flo > 0.0 && tries < 200 {
        lo -= width;
        width *= 2.0;
        flo = psi(lo);
        tries += 1;
    }
    width = 1e-3_f64.max(fhi.abs());
    while fhi < 0.0 && tries < 400 {
        hi += width;
        width *= 2.0;
        fhi = psi(hi);
        tries += 1;
    }
    if flo > 0.0 || fhi < 0.0 {
        return Err((psi(x).abs(), tries));
    }

    for iter in 0..50 {
        let f = psi(x);
        if f.abs() <= tol(x) {
            return Ok(x);
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = dpsi(x);
        let newton = if d > 0.0 { x - f / d } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if iter == 49 {
            let f = psi(x);
            if f.abs() <= tol(x) {
                return Ok(x);
            }
            return Err((f.abs(), 50));
        }
    }
    unreachable!()
}

/// Incremental integrator with the same level bookkeeping as [`run`]:
/// after `k` calls to [`Stepper::advance`] the observable state sits at
/// level `k` with a centered time derivative. Used where a callback-driven
/// run does not fit (interactive sessions).
pub struct Stepper {
    problem: ProblemSpec,
    grid: GridSpec,
    prev: Vec<f64>,
    cur: Vec<f64>,
    next: Vec<f64>,
    rhs: Vec<f64>,
    level: usize,
    observed: FieldState,
}

impl Stepper {
    pub fn new(problem: &ProblemSpec, grid: &GridSpec) -> Result<Stepper, SolverError> {
        let init = init_from_data(problem, grid)?;
        Self::from_state(problem, grid, init)
    }

    pub fn from_state(
        problem: &ProblemSpec,
        grid: &GridSpec,
        init: FieldState,
    ) -> Result<Stepper, SolverError> {
        init.check_size(grid)?;
        let count = grid.node_count();
        let dt = grid.dt;
        let mut rhs = vec![0.0; count];
        let mut lap = vec![0.0; count];
        laplacian_into(&init.u, grid, &mut lap);
        if problem.nonlinear {
            for i in 0..count {
                rhs[i] = -defocusing_power(init.u[i], problem.p);
            }
        }
        let mut cur = vec![0.0; count];
        let boundary = boundary_mask(grid);
        for i in 0..count {
            cur[i] = if boundary(i) {
                0.0
            } else {
                init.u[i] + dt * init.ut[i] + 0.5 * dt * dt * (lap[i] + rhs[i])
            };
        }
        Ok(Stepper {
            problem: problem.clone(),
            grid: *grid,
            prev: init.u.clone(),
            cur,
            next: vec![0.0; count],
            rhs,
            level: 0,
            observed: init,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// State at the last observed level (centered `ut`).
    pub fn observed(&self) -> &FieldState {
        &self.observed
    }

    /// Staggered discrete energy of the upcoming level pair.
    pub fn discrete_energy(&self) -> f64 {
        discrete_energy(
            &self.prev,
            &self.cur,
            &self.grid,
            self.problem.p,
            self.problem.nonlinear,
        )
        .3
    }

    /// Advances one level and synchronizes the observed state.
    pub fn advance(&mut self) -> Result<(), SolverError> {
        let dt = self.grid.dt;
        match (self.problem.scheme, self.problem.nonlinear) {
            (_, false) => {
                self.rhs.fill(0.0);
                step_explicit(&self.prev, &self.cur, &self.grid, &self.rhs, &mut self.next);
            }
            (Scheme::Leapfrog, true) => {
                for i in 0..self.cur.len() {
                    self.rhs[i] = -defocusing_power(self.cur[i], self.problem.p);
                }
                step_explicit(&self.prev, &self.cur, &self.grid, &self.rhs, &mut self.next);
            }
            (Scheme::Conservative, true) => {
                step_conservative(
                    &self.prev,
                    &self.cur,
                    &self.grid,
                    self.problem.p,
                    None,
                    &mut self.next,
                )?;
            }
        }
        self.level += 1;
        self.observed.t = self.level as f64 * dt;
        self.observed.u.copy_from_slice(&self.cur);
        for i in 0..self.cur.len() {
            self.observed.ut[i] = (self.next[i] - self.prev[i]) / (2.0 * dt);
        }
        std::mem::swap(&mut self.prev, &mut self.cur);
        std::mem::swap(&mut self.cur, &mut self.next);
        Ok(())
    }
}

/// Run configuration: end time, observer cadence (in steps) and the
/// diagnostic margin entering the causality budget.
#[derive(Debug, Clone, Copy)]
pub struct RunConfig {
    pub t_end: f64,
    pub observe_every: usize,
    pub margin: f64,
}

/// Maximum `t_end` the grid supports for data of the given support radius
/// and diagnostics reaching `|x| = t + margin`.
pub fn causality_budget(grid: &GridSpec, r_support: f64, margin: f64) -> f64 {
    (grid.extent() - r_support - margin) / 2.0
}

/// Hook invoked at every time level with the synchronized state.
pub type PerStepHook<'a> = &'a mut dyn FnMut(usize, &FieldState) -> Result<(), SolverError>;
/// Hook invoked at observer cadence with the state and its ledger entry.
pub type ObserverHook<'a> =
    &'a mut dyn FnMut(usize, &FieldState, &StepReport) -> Result<(), SolverError>;

/// Level-synchronized view passed to hooks: `ut` is the centered difference
/// `(u^{n+1} - u^{n-1})/(2 dt)`.
pub struct RunHooks<'a> {
    /// Called at every time level (including 0 and the final one).
    pub per_step: Option<PerStepHook<'a>>,
    /// Called at the observer cadence (including 0 and the final level).
    pub observer: Option<ObserverHook<'a>>,
}

impl<'a> RunHooks<'a> {
    pub fn none() -> RunHooks<'a> {
        RunHooks {
            per_step: None,
            observer: None,
        }
    }
}

/// Integrates the problem to `cfg.t_end`, refusing to start if the
/// causality budget is exceeded. Returns the final state and the observer
/// ledger.
pub fn run(
    problem: &ProblemSpec,
    grid: &GridSpec,
    cfg: &RunConfig,
    mut hooks: RunHooks<'_>,
) -> Result<(FieldState, Vec<StepReport>), SolverError> {
    let max_t = causality_budget(grid, problem.r_support, cfg.margin);
    if cfg.t_end > max_t + 1e-9 {
        return Err(SolverError::Budget {
            t_end: cfg.t_end,
            max: max_t,
            extent: grid.extent(),
            support: problem.r_support,
            margin: cfg.margin,
        });
    }
    let init = init_from_data(problem, grid)?;
    run_from(problem, grid, cfg, init, hooks.per_step.take(), hooks.observer.take())
}

/// Same as [`run`] but starting from explicit data (no budget re-check of
/// the data family; the budget was validated by the caller).
pub fn run_from(
    problem: &ProblemSpec,
    grid: &GridSpec,
    cfg: &RunConfig,
    init: FieldState,
    mut per_step: Option<PerStepHook<'_>>,
    mut observer: Option<ObserverHook<'_>>,
) -> Result<(FieldState, Vec<StepReport>), SolverError> {
    let dt = grid.dt;
    let n_steps = (cfg.t_end / dt).round() as usize;
    let every = cfg.observe_every.max(1);
    let count = grid.node_count();
    let cfl_margin = {
        let lim = cfl_limit(grid.mode) * grid.h;
        (lim - dt) / lim
    };

    let mut reports = Vec::new();
    let mut scratch = FieldState {
        u: vec![0.0; count],
        ut: vec![0.0; count],
        t: 0.0,
    };

    let mut rhs = vec![0.0; count];
    let nonlinear_rhs = |u: &[f64], rhs: &mut [f64], p: f64| {
        for i in 0..u.len() {
            rhs[i] = -defocusing_power(u[i], p);
        }
    };

    // level 0 observation uses the given data
    let state0 = init;

    // Taylor first level: u¹ = u⁰ + dt u₁ + dt²/2 (Δu⁰ + N⁰)
    let mut prev = state0.u.clone();
    let mut cur = vec![0.0; count];
    {
        let mut lap = vec![0.0; count];
        laplacian_into(&prev, grid, &mut lap);
        if problem.nonlinear {
            nonlinear_rhs(&prev, &mut rhs, problem.p);
        } else {
            rhs.fill(0.0);
        }
        for i in 0..count {
            cur[i] = prev[i] + dt * state0.ut[i] + 0.5 * dt * dt * (lap[i] + rhs[i]);
        }
        // keep the Dirichlet ring pinned
        let boundary = boundary_mask(grid);
        for i in 0..count {
            if boundary(i) {
                cur[i] = 0.0;
            }
        }
    }

    // observe level 0
    {
        let (kin, grad, pot, total) =
            discrete_energy(&prev, &cur, grid, problem.p, problem.nonlinear);
        let max_u = prev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let report = StepReport {
            step: 0,
            t: 0.0,
            discrete_energy: total,
            kinetic: kin,
            gradient: grad,
            potential: pot,
            max_u,
            cfl_margin,
        };
        if let Some(cb) = per_step.as_mut() {
            cb(0, &state0)?;
        }
        if let Some(cb) = observer.as_mut() {
            cb(0, &state0, &report)?;
        }
        reports.push(report);
    }
    if n_steps == 0 {
        return Ok((state0, reports));
    }

    let mut next = vec![0.0; count];
    for level in 1..=n_steps {
        // advance: produce level+1 from (prev=level-1, cur=level)
        match (problem.scheme, problem.nonlinear) {
            (_, false) => {
                rhs.fill(0.0);
                step_explicit(&prev, &cur, grid, &rhs, &mut next);
            }
            (Scheme::Leapfrog, true) => {
                nonlinear_rhs(&cur, &mut rhs, problem.p);
                step_explicit(&prev, &cur, grid, &rhs, &mut next);
            }
            (Scheme::Conservative, true) => {
                step_conservative(&prev, &cur, grid, problem.p, None, &mut next)?;
            }
        }

        let t = level as f64 * dt;
        let need_state = per_step.is_some()
            || level % every == 0
            || level == n_steps;
        if need_state {
            scratch.u.copy_from_slice(&cur);
            for i in 0..count {
                scratch.ut[i] = (next[i] - prev[i]) / (2.0 * dt);
            }
            scratch.t = t;
        }
        if let Some(cb) = per_step.as_mut() {
            cb(level, &scratch)?;
        }
        if level % every == 0 || level == n_steps {
            let max_u = cur.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !max_u.is_finite() {
                return Err(SolverError::NonFinite { step: level });
            }
            let (kin, grad, pot, total) =
                discrete_energy(&cur, &next, grid, problem.p, problem.nonlinear);
            let report = StepReport {
                step: level,
                t,
                discrete_energy: total,
                kinetic: kin,
                gradient: grad,
                potential: pot,
                max_u,
                cfl_margin,
            };
            if let Some(cb) = observer.as_mut() {
                cb(level, &scratch, &report)?;
            }
            reports.push(report);
        }

        if level < n_steps {
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
    }

    let final_state = FieldState {
        ut: {
            let mut ut = vec![0.0; count];
            for i in 0..count {
                ut[i] = (next[i] - prev[i]) / (2.0 * dt);
            }
            ut
        },
        u: cur,
        t: n_steps as f64 * dt,
    };
    Ok((final_state, reports))
}
