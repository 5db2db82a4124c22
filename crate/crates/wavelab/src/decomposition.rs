//! The cone-shell cutoff decomposition `u = v_T + w_T` and its identity
//! checks: cone-trace data, the smooth cutoff, lockstep co-evolution of the
//! sourced linear children, interior-energy flux closure and the T-indexed
//! smallness series.
//!
//! `w_T` starts at time `T` from the donor's values outside the cone
//! `|x| = T + R2` and from cutoff cone-trace data inside, and evolves under
//! `∂_t² w - Δw = -χ1 |u|^{p-1} u` with `χ1` the sharp exterior indicator.
//! `v_T` starts from the complementary data and carries the shell source
//! `-χ2 |u|^{p-1} u`. `v + w = u` outside the `R1` cone and `w = u` outside
//! the `R2` cone are then measurable identities rather than definitions.
//!
//! Radial grids only: the trace of a Cartesian run would need angular
//! interpolation machinery that none of the measured quantities require.

use thiserror::Error;

use crate::diagnostics::{
    DiagnosticsError, MixedNormAccumulator, NormIntegrand, TimeIntegrator,
};
use crate::grid::{
    defocusing_power, interp_radial, region_integral, sphere_area, Density, FieldState,
    GridError, GridMode, GridSpec, RegionSpec,
};
use crate::solver::{run_from, ProblemSpec, RunConfig, SolverError};

#[derive(Debug, Error)]
pub enum DecompositionError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("decomposition requires a radial grid")]
    NotRadial,
    #[error("missing trace coverage: {0}")]
    MissingTrace(String),
    #[error("release time {t} is not aligned with the step dt = {dt}")]
    UnalignedRelease { t: f64, dt: f64 },
    #[error("bad decomposition parameters: {0}")]
    BadParameters(String),
}

/// The fixed smooth cutoff: 1 for `x >= 1`, 0 for `x <= 1/2`, and the
/// quintic bridge with vanishing first and second derivatives at both ends
/// in between (C² is enough for a second-order scheme).
pub fn cutoff_phi(x: f64) -> f64 {
    if x >= 1.0 {
        1.0
    } else if x <= 0.5 {
        0.0
    } else {
        let s = 2.0 * x - 1.0;
        s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

/// Per-step samples of `(u, u_t, u_r)` on the cone `|x| = t + R2` of a
/// radial donor run.
#[derive(Debug, Clone)]
pub struct ConeTrace {
    pub r2: f64,
    pub dt: f64,
    pub times: Vec<f64>,
    pub u: Vec<f64>,
    pub ut: Vec<f64>,
    pub ur: Vec<f64>,
}

impl ConeTrace {
    pub fn new(r2: f64, dt: f64) -> ConeTrace {
        ConeTrace {
            r2,
            dt,
            times: Vec::new(),
            u: Vec::new(),
            ut: Vec::new(),
            ur: Vec::new(),
        }
    }

    /// Samples the cone at the state's time; radii `<= 0` record zeros.
    pub fn record(&mut self, state: &FieldState, grid: &GridSpec) -> Result<(), DecompositionError> {
        let rc = state.t + self.r2;
        let (u, ut, ur) = if rc <= 0.0 {
            (0.0, 0.0, 0.0)
        } else {
            interp_radial(state, grid, rc)?
        };
        self.times.push(state.t);
        self.u.push(u);
        self.ut.push(ut);
        self.ur.push(ur);
        Ok(())
    }

    /// Cubic interpolation of the traced `u` at time `t`.
    pub fn sample_u(&self, t: f64) -> Result<f64, DecompositionError> {
        let n = self.times.len();
        if n < 4 {
            return Err(DecompositionError::MissingTrace(format!(
                "only {n} samples recorded"
            )));
        }
        let t0 = self.times[0];
        let x = (t - t0) / self.dt;
        if x < -1e-9 || x > (n - 1) as f64 + 1e-9 {
            return Err(DecompositionError::MissingTrace(format!(
                "t = {t} outside recorded range [{t0}, {}]",
                self.times[n - 1]
            )));
        }
        let j = (x.floor() as isize).clamp(0, n as isize - 2);
        let i0 = (j - 1).clamp(0, n as isize - 4) as usize;
        let xi = x - (i0 + 1) as f64;
        let w = [self.u[i0], self.u[i0 + 1], self.u[i0 + 2], self.u[i0 + 3]];
        let l0 = -xi * (xi - 1.0) * (xi - 2.0) / 6.0;
        let l1 = (xi + 1.0) * (xi - 1.0) * (xi - 2.0) / 2.0;
        let l2 = -(xi + 1.0) * xi * (xi - 2.0) / 2.0;
        let l3 = (xi + 1.0) * xi * (xi - 1.0) / 6.0;
        Ok(w[0] * l0 + w[1] * l1 + w[2] * l2 + w[3] * l3)
    }

    /// Discrete Ḣ¹-type norm of the trace datum `x -> u(x, |x|-R2)`:
    /// `σ ∫ |(u_r + u_t)(t)|² (t+R2)^{d-1} dt` by trapezoid.
    pub fn h1_norm_sq(&self, d: u32) -> f64 {
        let sigma = sphere_area(d);
        let mut sum = 0.0;
        for k in 0..self.times.len() {
            let rc = self.times[k] + self.r2;
            if rc <= 0.0 {
                continue;
            }
            let w = if k == 0 || k == self.times.len() - 1 {
                0.5 * self.dt
            } else {
                self.dt
            };
            let s = self.ur[k] + self.ut[k];
            sum += w * sigma * s * s * rc.powi(d as i32 - 1);
        }
        sum
    }
}

/// The `(w_0,T, w_1,T)` data: donor values outside the cone, cutoff trace
/// values (with zero velocity) inside.
pub fn build_w_data(
    t_release: f64,
    donor: &FieldState,
    trace: &ConeTrace,
    grid: &GridSpec,
) -> Result<(Vec<f64>, Vec<f64>), DecompositionError> {
    if !matches!(grid.mode, GridMode::Radial { .. }) {
        return Err(DecompositionError::NotRadial);
    }
    let r2 = trace.r2;
    if t_release < 1.0_f64.max(r2) {
        return Err(DecompositionError::MissingTrace(format!(
            "release time {t_release} below max(1, R2 = {r2}); required trace times start at (T-R2)/2"
        )));
    }
    if (donor.t - t_release).abs() > 1e-9 {
        return Err(DecompositionError::BadParameters(format!(
            "donor state is at t = {}, release asked for {t_release}",
            donor.t
        )));
    }
    let cone = t_release + r2;
    let mut w0 = vec![0.0; grid.n];
    let mut w1 = vec![0.0; grid.n];
    for i in 0..grid.n {
        let r = grid.radius(i);
        if r >= cone {
            w0[i] = donor.u[i];
            w1[i] = donor.ut[i];
        } else {
            let phi = cutoff_phi(r / cone);
            if phi > 0.0 {
                w0[i] = phi * trace.sample_u(r - r2)?;
            }
        }
    }
    Ok((w0, w1))
}

/// Configuration of a decomposition study.
#[derive(Debug, Clone)]
pub struct DecompositionConfig {
    pub r1: f64,
    pub r2: f64,
    pub release_times: Vec<f64>,
    /// Identity residuals are measured outside this physical exclusion
    /// layer around each cone (defaults to 3h of the run).
    pub layer: f64,
    pub observe_every: usize,
    /// `(q, r)` of the mixed norm (from the exponent table of the problem).
    pub strichartz_q: f64,
    pub strichartz_r: f64,
}

/// Per-observer-time ledger row of one release.
#[derive(Debug, Clone, Copy)]
pub struct DecompRow {
    pub t: f64,
    pub interior_w_energy: f64,
    pub idw_residual: f64,
    pub vpw_residual: f64,
    pub strichartz_w: f64,
    pub strichartz_v: f64,
    pub l1l2_source: f64,
}

/// Summary of one release time `T`.
#[derive(Debug, Clone)]
pub struct DecompositionReport {
    pub t_release: f64,
    /// `∫_{|x| < T+R2} (|∇w_0|² + w_1²) dx`
    pub data_norm: f64,
    /// `sup_{t in [T, t_end]}` of the same interior integral of `w(t)`
    pub sup_interior: f64,
    /// max over observer times of the id-w residual (outside the layer)
    pub idw_max: f64,
    pub vpw_max: f64,
    /// `|Int(t_end) - Int(T) - Φ_lin|`
    pub flux_closure_residual: f64,
    pub strichartz_w: f64,
    pub strichartz_v: f64,
    pub l1l2_source: f64,
    pub branch_mismatch: f64,
    pub rows: Vec<DecompRow>,
}

struct Child {
    prev: Vec<f64>,
    cur: Vec<f64>,
    next: Vec<f64>,
}

impl Child {
    /// Advances one level: `next = 2 cur - prev + dt² (Δcur + src)`, then
    /// rotates so that `prev` holds the level the sources were taken at.
    fn advance(&mut self, grid: &GridSpec, src: &[f64]) {
        crate::solver::step_explicit(&self.prev, &self.cur, grid, src, &mut self.next);
        std::mem::swap(&mut self.prev, &mut self.cur);
        std::mem::swap(&mut self.cur, &mut self.next);
        // now: next = two levels back, prev = observed level, cur = newest
    }

    /// Centered `u_t` of the observed level (`prev` after `advance`).
    fn centered_ut(&self, i: usize, dt: f64) -> f64 {
        (self.cur[i] - self.next[i]) / (2.0 * dt)
    }
}

struct ActiveRelease {
    t_release: f64,
    w: Child,
    v: Child,
    interior_at_release: f64,
    data_norm: f64,
    sup_interior: f64,
    idw_max: f64,
    vpw_max: f64,
    branch_mismatch: f64,
    flux_lin: TimeIntegrator,
    strichartz_w: MixedNormAccumulator,
    strichartz_v: MixedNormAccumulator,
    l1l2_source: MixedNormAccumulator,
    rows: Vec<DecompRow>,
    last_interior: f64,
}

/// Runs the donor once and co-evolves `(w_T, v_T)` for every release time,
/// collecting identity residuals, interior energies and masked mixed norms.
pub fn run_decomposition(
    problem: &ProblemSpec,
    grid: &GridSpec,
    run_cfg: &RunConfig,
    dcfg: &DecompositionConfig,
) -> Result<Vec<DecompositionReport>, DecompositionError> {
    let d = match grid.mode {
        GridMode::Radial { d } => d,
        GridMode::Cartesian3d => return Err(DecompositionError::NotRadial),
    };
    if dcfg.r1 >= dcfg.r2 {
        return Err(DecompositionError::BadParameters(format!(
            "shell needs R1 < R2, got ({}, {})",
            dcfg.r1, dcfg.r2
        )));
    }
    if dcfg.r2 <= 0.0 {
        return Err(DecompositionError::BadParameters(
            "R2 must be positive (the w-data cone must have positive radius)".into(),
        ));
    }
    let dt = grid.dt;
    for &t in &dcfg.release_times {
        let lvl = t / dt;
        if (lvl - lvl.round()).abs() > 1e-9 {
            return Err(DecompositionError::UnalignedRelease { t, dt });
        }
        if t > run_cfg.t_end {
            return Err(DecompositionError::BadParameters(format!(
                "release time {t} beyond t_end = {}",
                run_cfg.t_end
            )));
        }
    }

    let shell = RegionSpec::Shell {
        r1: dcfg.r1,
        r2: dcfg.r2,
    };
    let ball2 = RegionSpec::Ball { r: dcfg.r2 };
    let sigma = sphere_area(d);
    let p = problem.p;
    let count = grid.n;

    let mut trace = ConeTrace::new(dcfg.r2, dt);
    let mut active: Vec<ActiveRelease> = Vec::new();
    let mut pending: Vec<usize> = dcfg
        .release_times
        .iter()
        .map(|&t| (t / dt).round() as usize)
        .collect();
    pending.sort_unstable();

    let mut src_w = vec![0.0; count];
    let mut src_v = vec![0.0; count];
    let mut child_state = FieldState::zero(grid);

    let init = crate::solver::init_from_data(problem, grid)?;
    let mut error_slot: Option<DecompositionError> = None;

    let run_result = {
        let error_slot = &mut error_slot;
        let trace = &mut trace;
        let active = &mut active;
        let pending = &mut pending;
        let src_w = &mut src_w;
        let src_v = &mut src_v;
        let child_state = &mut child_state;

        let mut per_step = move |level: usize, state: &FieldState| -> Result<(), SolverError> {
            let mut inner = || -> Result<(), DecompositionError> {
                trace.record(state, grid)?;

                let t = state.t;
                // sharp masks at the current time; the sources mirror the
                // donor's own nonlinearity, so a linear donor gives
                // source-free children
                let cone1 = t + dcfg.r2;
                let cone_shell_lo = t + dcfg.r1;
                for i in 0..count {
                    let r = grid.radius(i);
                    let fu = if problem.nonlinear {
                        defocusing_power(state.u[i], p)
                    } else {
                        0.0
                    };
                    src_w[i] = if r >= cone1 { -fu } else { 0.0 };
                    src_v[i] = if r > cone_shell_lo && r < cone1 { -fu } else { 0.0 };
                }

                // spawn children whose release level is reached
                while let Some(&lvl) = pending.first() {
                    if lvl != level {
                        break;
                    }
                    pending.remove(0);
                    let t_release = lvl as f64 * dt;
                    let (w0, w1) = build_w_data(t_release, state, trace, grid)?;
                    let v0: Vec<f64> = (0..count).map(|i| state.u[i] - w0[i]).collect();
                    let v1: Vec<f64> = (0..count).map(|i| state.ut[i] - w1[i]).collect();

                    // branch continuity of w0 at the cone
                    let mut mismatch = 0.0f64;
                    let cone = t_release + dcfg.r2;
                    let i_cone = (cone / grid.h).floor() as usize;
                    if i_cone >= 1 && i_cone + 1 < count {
                        let inside = cutoff_phi(grid.radius(i_cone) / cone)
                            * trace.sample_u(grid.radius(i_cone) - dcfg.r2)?;
                        mismatch = (inside - state.u[i_cone]).abs();
                    }

                    let taylor = |u0: &[f64], u1: &[f64], src: &[f64]| -> Vec<f64> {
                        let mut lap = vec![0.0; count];
                        crate::grid::laplacian_into(u0, grid, &mut lap);
                        let mut out = vec![0.0; count];
                        for i in 0..count - 1 {
                            out[i] =
                                u0[i] + dt * u1[i] + 0.5 * dt * dt * (lap[i] + src[i]);
                        }
                        out[count - 1] = 0.0;
                        out
                    };
                    let w_next = taylor(&w0, &w1, src_w);
                    let v_next = taylor(&v0, &v1, src_v);

                    let data_state = FieldState {
                        u: w0.clone(),
                        ut: w1.clone(),
                        t: t_release,
                    };
                    let data_norm =
                        region_integral(&data_state, grid, &ball2, Density::FreeH1, p)?;

                    let mk_norm = |integrand: NormIntegrand, q: f64, r: f64| {
                        MixedNormAccumulator::new(q, r, shell, integrand)
                    };
                    let mut rel = ActiveRelease {
                        t_release,
                        w: Child {
                            prev: w0,
                            cur: w_next,
                            next: vec![0.0; count],
                        },
                        v: Child {
                            prev: v0,
                            cur: v_next,
                            next: vec![0.0; count],
                        },
                        interior_at_release: data_norm,
                        data_norm,
                        sup_interior: data_norm,
                        idw_max: 0.0,
                        vpw_max: 0.0,
                        branch_mismatch: mismatch,
                        flux_lin: TimeIntegrator::default(),
                        strichartz_w: mk_norm(
                            NormIntegrand::U,
                            dcfg.strichartz_q,
                            dcfg.strichartz_r,
                        ),
                        strichartz_v: mk_norm(
                            NormIntegrand::U,
                            dcfg.strichartz_q,
                            dcfg.strichartz_r,
                        ),
                        l1l2_source: mk_norm(NormIntegrand::NonlinearU { p }, 1.0, 2.0),
                        rows: Vec::new(),
                        last_interior: data_norm,
                    };
                    // flux on the cone starts accumulating at release
                    let k = trace.times.len() - 1;
                    let rc = trace.times[k] + dcfg.r2;
                    let s = trace.ur[k] + trace.ut[k];
                    rel.flux_lin
                        .push(t_release, sigma * s * s * rc.powi(d as i32 - 1));
                    // level-T ledgers
                    record_release_row(
                        &mut rel, state, grid, dcfg, p, t_release, true,
                    )?;
                    active.push(rel);
                }

                // advance every active child from its (prev, cur) by one level
                for rel in active.iter_mut() {
                    if level as f64 * dt <= rel.t_release + 0.5 * dt {
                        continue; // spawned this level; cur is already level+1
                    }
                    // cone flux integrand of the donor (u substitutable for w)
                    let k = trace.times.len() - 1;
                    let rc = trace.times[k] + dcfg.r2;
                    let s = trace.ur[k] + trace.ut[k];
                    rel.flux_lin
                        .push(t, sigma * s * s * rc.powi(d as i32 - 1));

                    rel.w.advance(grid, src_w);
                    rel.v.advance(grid, src_v);

                    // observables live at this level: u = child.prev after
                    // the rotation, ut from the centered difference
                    let observe = level % dcfg.observe_every.max(1) == 0
                        || (level as f64 * dt - run_cfg.t_end).abs() < 0.5 * dt;
                    if observe {
                        child_state.t = t;
                        child_state.u.copy_from_slice(&rel.w.prev);
                        for i in 0..count {
                            child_state.ut[i] = rel.w.centered_ut(i, dt);
                        }
                        let interior =
                            region_integral(child_state, grid, &ball2, Density::FreeH1, p)?;
                        rel.sup_interior = rel.sup_interior.max(interior);
                        rel.last_interior = interior;

                        // identity residuals outside the exclusion layers
                        let mut idw = 0.0f64;
                        let mut vpw = 0.0f64;
                        for i in 0..count {
                            let r = grid.radius(i);
                            if r >= t + dcfg.r2 + dcfg.layer {
                                idw = idw.max((rel.w.prev[i] - state.u[i]).abs());
                            }
                            if r >= t + dcfg.r1 + dcfg.layer {
                                vpw = vpw
                                    .max((rel.v.prev[i] + rel.w.prev[i] - state.u[i]).abs());
                            }
                        }
                        rel.idw_max = rel.idw_max.max(idw);
                        rel.vpw_max = rel.vpw_max.max(vpw);

                        // masked norms (left-endpoint in time)
                        child_state.u.copy_from_slice(&rel.w.prev);
                        rel.strichartz_w.add(child_state, grid)?;
                        child_state.u.copy_from_slice(&rel.v.prev);
                        rel.strichartz_v.add(child_state, grid)?;
                        rel.l1l2_source.add(state, grid)?;

                        rel.rows.push(DecompRow {
                            t,
                            interior_w_energy: interior,
                            idw_residual: idw,
                            vpw_residual: vpw,
                            strichartz_w: rel.strichartz_w.finalize().unwrap_or(0.0),
                            strichartz_v: rel.strichartz_v.finalize().unwrap_or(0.0),
                            l1l2_source: rel.l1l2_source.finalize().unwrap_or(0.0),
                        });
                    }
                }
                Ok(())
            };
            inner().map_err(|e| {
                *error_slot = Some(e);
                SolverError::Observer("decomposition hook failed".into())
            })
        };

        run_from(problem, grid, run_cfg, init, Some(&mut per_step), None)
    };
    if let Err(e) = run_result {
        if let Some(inner) = error_slot.take() {
            return Err(inner);
        }
        return Err(e.into());
    }

    let reports = active
        .into_iter()
        .map(|rel| {
            let closure =
                (rel.last_interior - rel.interior_at_release - rel.flux_lin.sum).abs();
            DecompositionReport {
                t_release: rel.t_release,
                data_norm: rel.data_norm,
                sup_interior: rel.sup_interior,
                idw_max: rel.idw_max,
                vpw_max: rel.vpw_max,
                flux_closure_residual: closure,
                strichartz_w: rel.strichartz_w.finalize().unwrap_or(0.0),
                strichartz_v: rel.strichartz_v.finalize().unwrap_or(0.0),
                l1l2_source: rel.l1l2_source.finalize().unwrap_or(0.0),
                branch_mismatch: rel.branch_mismatch,
                rows: rel.rows,
            }
        })
        .collect();
    Ok(reports)
}

fn record_release_row(
    rel: &mut ActiveRelease,
    donor: &FieldState,
    grid: &GridSpec,
    dcfg: &DecompositionConfig,
    _p: f64,
    t: f64,
    _at_release: bool,
) -> Result<(), DecompositionError> {
    // ledgers at the release level itself: residuals vanish by construction
    // outside the cone; record the masked norms' first samples
    let mut w_state = FieldState {
        u: rel.w.prev.clone(),
        ut: vec![0.0; grid.n],
        t,
    };
    rel.strichartz_w.add(&w_state, grid)?;
    w_state.u.copy_from_slice(&rel.v.prev);
    rel.strichartz_v.add(&w_state, grid)?;
    rel.l1l2_source.add(donor, grid)?;
    let _ = dcfg;
    rel.rows.push(DecompRow {
        t,
        interior_w_energy: rel.data_norm,
        idw_residual: 0.0,
        vpw_residual: 0.0,
        strichartz_w: 0.0,
        strichartz_v: 0.0,
        l1l2_source: 0.0,
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::solver::{InitialData, RunHooks, Scheme};

    fn radial_grid(h: f64, rmax: f64) -> GridSpec {
        make_grid(GridMode::Radial { d: 3 }, h, rmax, 0.5 * h).unwrap()
    }

    fn gaussian_problem(scheme: Scheme) -> ProblemSpec {
        ProblemSpec {
            p: 4.0,
            nonlinear: true,
            scheme,
            data: InitialData::GaussianOdd {
                amplitude: 1.0,
                width: 1.0,
            },
            r_support: 4.0,
        }
    }

    fn default_cfg(grid: &GridSpec, releases: Vec<f64>) -> DecompositionConfig {
        DecompositionConfig {
            r1: 0.0,
            r2: 2.0,
            release_times: releases,
            layer: 3.0 * grid.h,
            observe_every: 10,
            strichartz_q: 3.5,
            strichartz_r: 14.0,
        }
    }

    #[test]
    fn cutoff_values() {
        assert_eq!(cutoff_phi(2.0), 1.0);
        assert_eq!(cutoff_phi(1.0), 1.0);
        assert_eq!(cutoff_phi(0.25), 0.0);
        assert_eq!(cutoff_phi(0.5), 0.0);
        assert!((cutoff_phi(0.75) - 0.5).abs() < 1e-15);
        // monotone on the bridge
        let mut prev = 0.0;
        for k in 0..=100 {
            let v = cutoff_phi(0.5 + 0.005 * k as f64);
            assert!(v >= prev - 1e-15);
            assert!((0.0..=1.0).contains(&v));
            prev = v;
        }
        // C² end matching: one-sided second differences stay O(eps)
        let h = 1e-4;
        for x0 in [0.5, 1.0] {
            let d1 = (cutoff_phi(x0 + h) - cutoff_phi(x0 - h)) / (2.0 * h);
            assert!(d1.abs() < 1e-6, "phi'({x0}) = {d1}");
        }
    }

    /// Donor run to T recording a trace, returning (state at T, trace).
    fn donor_to(
        problem: &ProblemSpec,
        grid: &GridSpec,
        t_end: f64,
        r2: f64,
    ) -> (FieldState, ConeTrace) {
        let mut trace = ConeTrace::new(r2, grid.dt);
        let mut per_step = |_l: usize, s: &FieldState| {
            trace
                .record(s, grid)
                .map_err(|e| SolverError::Observer(e.to_string()))
        };
        let cfg = RunConfig {
            t_end,
            observe_every: 1000000,
            margin: r2 + 1.0,
        };
        let init = crate::solver::init_from_data(problem, grid).unwrap();
        let (state, _) = run_from(problem, grid, &cfg, init, Some(&mut per_step), None).unwrap();
        (state, trace)
    }

    #[test]
    fn w_data_branches() {
        let grid = radial_grid(0.05, 24.0);
        let problem = gaussian_problem(Scheme::Leapfrog);
        let (state, trace) = donor_to(&problem, &grid, 4.0, 2.0);
        let t_release = 4.0;
        let (w0, w1) = build_w_data(t_release, &state, &trace, &grid).unwrap();
        let cone = t_release + 2.0;
        for i in 0..grid.n {
            let r = grid.radius(i);
            if r >= cone {
                assert_eq!(w0[i], state.u[i]);
                assert_eq!(w1[i], state.ut[i]);
            } else {
                assert_eq!(w1[i], 0.0);
                if r <= cone / 2.0 {
                    assert_eq!(w0[i], 0.0);
                }
            }
        }
        // branch continuity at the cone: the trace at t = T is u(·, T)
        let i_cone = (cone / grid.h).ceil() as usize;
        let just_in = i_cone - 1;
        let inside = cutoff_phi(grid.radius(just_in) / cone)
            * trace.sample_u(grid.radius(just_in) - 2.0).unwrap();
        assert!(
            (inside - state.u[just_in]).abs() < 5.0 * grid.h * grid.h,
            "branch mismatch {}",
            (inside - state.u[just_in]).abs()
        );
        // trace Ḣ¹ bound: ≤ 2E + slack (flux bound squared)
        let e = crate::diagnostics::total_energy(&state, &grid, &problem)
            .unwrap()
            .total;
        assert!(trace.h1_norm_sq(3) <= 4.0 * e, "{}", trace.h1_norm_sq(3));
    }

    #[test]
    fn release_time_validation() {
        let grid = radial_grid(0.05, 24.0);
        let problem = gaussian_problem(Scheme::Leapfrog);
        let (state, trace) = donor_to(&problem, &grid, 1.0, 2.0);
        // T < max(1, R2) is missing trace coverage
        assert!(matches!(
            build_w_data(1.0, &state, &trace, &grid),
            Err(DecompositionError::MissingTrace(_))
        ));
    }

    #[test]
    fn zero_donor_children_stay_zero() {
        let grid = radial_grid(0.05, 24.0);
        let problem = ProblemSpec {
            data: InitialData::Zero,
            ..gaussian_problem(Scheme::Leapfrog)
        };
        let cfg = RunConfig {
            t_end: 6.0,
            observe_every: 10,
            margin: 3.0,
        };
        let dcfg = default_cfg(&grid, vec![4.0]);
        let reports = run_decomposition(&problem, &grid, &cfg, &dcfg).unwrap();
        assert_eq!(reports.len(), 1);
        let r = &reports[0];
        assert_eq!(r.data_norm, 0.0);
        assert_eq!(r.sup_interior, 0.0);
        assert_eq!(r.idw_max, 0.0);
        assert_eq!(r.vpw_max, 0.0);
        assert_eq!(r.strichartz_w, 0.0);
    }

    #[test]
    fn identities_hold_on_short_run() {
        let grid = radial_grid(0.05, 24.0);
        let problem = gaussian_problem(Scheme::Conservative);
        let cfg = RunConfig {
            t_end: 6.0,
            observe_every: 10,
            margin: 3.0,
        };
        let dcfg = default_cfg(&grid, vec![4.0]);
        let reports = run_decomposition(&problem, &grid, &cfg, &dcfg).unwrap();
        let rep = &reports[0];
        let e = {
            let init = crate::solver::init_from_data(&problem, &grid).unwrap();
            crate::diagnostics::total_energy(&init, &grid, &problem)
                .unwrap()
                .total
        };
        assert!(rep.idw_max < 0.05, "idw {}", rep.idw_max);
        assert!(rep.vpw_max < 0.05, "vpw {}", rep.vpw_max);
        assert!(
            rep.flux_closure_residual <= 0.05 * e,
            "closure {} vs E {e}",
            rep.flux_closure_residual
        );
        assert!(rep.branch_mismatch < 5.0 * grid.h * grid.h + 1e-3);
        // data consistency: (w+v)(T) = u(T) exactly by construction is
        // implicit in vpw at the release row
        assert_eq!(rep.rows[0].vpw_residual, 0.0);
    }

    #[test]
    fn linear_donor_same_closure() {
        // with the p-term off the children are source-free and both the
        // finite-speed identity and the interior flux closure still hold
        let grid = radial_grid(0.05, 24.0);
        let problem = ProblemSpec {
            nonlinear: false,
            ..gaussian_problem(Scheme::Leapfrog)
        };
        let cfg = RunConfig {
            t_end: 6.0,
            observe_every: 10,
            margin: 3.0,
        };
        let dcfg = default_cfg(&grid, vec![4.0]);
        let rep = &run_decomposition(&problem, &grid, &cfg, &dcfg).unwrap()[0];
        let e = {
            let init = crate::solver::init_from_data(&problem, &grid).unwrap();
            crate::diagnostics::total_energy(&init, &grid, &problem)
                .unwrap()
                .total
        };
        assert!(rep.idw_max < 0.05, "idw {}", rep.idw_max);
        assert!(
            rep.flux_closure_residual <= 0.05 * e,
            "closure {} vs E {e}",
            rep.flux_closure_residual
        );
    }

    #[test]
    fn far_release_with_large_r2_is_tiny() {
        // R2 beyond the data support: the trace carries only gaussian tails
        let grid = radial_grid(0.05, 30.0);
        let problem = gaussian_problem(Scheme::Leapfrog);
        let cfg = RunConfig {
            t_end: 8.0,
            observe_every: 20,
            margin: 7.0,
        };
        let dcfg = DecompositionConfig {
            r2: 6.0,
            release_times: vec![6.0],
            ..default_cfg(&grid, vec![6.0])
        };
        let reports = run_decomposition(&problem, &grid, &cfg, &dcfg).unwrap();
        let rep = &reports[0];
        assert!(rep.data_norm < 1e-8, "data norm {}", rep.data_norm);
        assert!(rep.sup_interior < 1e-6, "sup interior {}", rep.sup_interior);
    }

    #[test]
    fn triangle_inequality_of_masked_norms() {
        // ‖χ₂u‖ <= ‖χ₂v‖ + ‖χ₂w‖ on the shell where u = v + w, and the
        // composite source bound
        // ‖χ₂|u|^{p-1}u‖_{L¹L²} <= ‖u‖^{k1}_{L^{p+1}(Ω)} (‖χ₂v‖+‖χ₂w‖)^{k2}
        let grid = radial_grid(0.05, 24.0);
        let problem = gaussian_problem(Scheme::Leapfrog);
        let cfg = RunConfig {
            t_end: 6.0,
            observe_every: 5,
            margin: 3.0,
        };
        let dcfg = default_cfg(&grid, vec![4.0]);
        let reports = run_decomposition(&problem, &grid, &cfg, &dcfg).unwrap();
        let rep = &reports[0];

        // recompute ‖χ₂u‖ and ‖χ₂u‖_{L^{p+1}L^{p+1}} from a rerun with the
        // same cadence
        let shell = RegionSpec::Shell { r1: 0.0, r2: 2.0 };
        let p = problem.p;
        let mut n_u = MixedNormAccumulator::new(3.5, 14.0, shell, NormIntegrand::U);
        let mut n_pp1 = MixedNormAccumulator::new(p + 1.0, p + 1.0, shell, NormIntegrand::U);
        let init = crate::solver::init_from_data(&problem, &grid).unwrap();
        let mut hit = false;
        let mut per_step = |level: usize, s: &FieldState| {
            if s.t >= 4.0 - 1e-12 && level % 10 == 0 {
                hit = true;
                for acc in [&mut n_u, &mut n_pp1] {
                    acc.add(s, &grid)
                        .map_err(|e| SolverError::Observer(e.to_string()))?;
                }
            }
            Ok(())
        };
        run_from(&problem, &grid, &cfg, init, Some(&mut per_step), None).unwrap();
        assert!(hit);
        let u_norm = n_u.finalize().unwrap();
        assert!(
            u_norm <= rep.strichartz_v + rep.strichartz_w + 1e-9,
            "{u_norm} vs {} + {}",
            rep.strichartz_v,
            rep.strichartz_w
        );

        let (k1, k2) = (5.0 / 3.0, 7.0 / 3.0);
        let rhs = n_pp1.finalize().unwrap().powf(k1)
            * (rep.strichartz_v + rep.strichartz_w).powf(k2);
        assert!(
            rep.l1l2_source <= rhs * (1.0 + 1e-9),
            "composite source bound violated: {} vs {rhs}",
            rep.l1l2_source
        );
        assert!(rep.l1l2_source > 0.0);
    }

    #[test]
    fn cartesian_is_rejected() {
        let grid = make_grid(GridMode::Cartesian3d, 0.25, 4.0, 0.1).unwrap();
        let problem = ProblemSpec {
            data: InitialData::OffsetBumps {
                amplitude: 1.0,
                width: 1.0,
                center: [1.0, 0.5, 0.0],
            },
            ..gaussian_problem(Scheme::Leapfrog)
        };
        let cfg = RunConfig {
            t_end: 1.0,
            observe_every: 5,
            margin: 0.5,
        };
        let dcfg = default_cfg(&grid, vec![1.0]);
        assert!(matches!(
            run_decomposition(&problem, &grid, &cfg, &dcfg),
            Err(DecompositionError::NotRadial)
        ));
        let _ = RunHooks::none();
    }
}
