//! Energies, light-cone fluxes, shell norms, mixed space-time norms and the
//! inward/outward quantity — the measured objects of every experiment.
//!
//! Flux integrals use the time-slice parameterization `dσ ds` of the cone:
//! the surface element on `|x| = s + R` satisfies `dS = sqrt(2) dσ ds`, so
//! the flux density here carries no `1/sqrt(2)` and the closure identity
//! `E_ext(T) - E_ext(t) = Φ(T→t)` is factor-exact.

use thiserror::Error;

use crate::grid::{
    interp_cartesian, interp_radial, potential_density, region_integral,
    region_integral_weighted, Density, FieldState, GridError, GridMode, GridSpec, RegionSpec,
    SphereGrid,
};
use crate::solver::ProblemSpec;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("cone radius {r} exits the grid (r_max = {rmax})")]
    ConeExitsGrid { r: f64, rmax: f64 },
    #[error("empty window: no samples accumulated")]
    EmptyWindow,
}

/// Instantaneous trapezoid energies of a state. `total` is the exact sum
/// of the three parts by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub t: f64,
    pub kinetic: f64,
    pub gradient: f64,
    pub potential: f64,
    pub total: f64,
}

const FULL_DOMAIN: RegionSpec = RegionSpec::Exterior { r: -1e30 };

/// Quadrature of the kinetic, gradient and potential densities over the
/// whole grid. The potential term is dropped for linear problems.
pub fn total_energy(
    state: &FieldState,
    grid: &GridSpec,
    problem: &ProblemSpec,
) -> Result<EnergyReport, DiagnosticsError> {
    let kinetic = region_integral(state, grid, &FULL_DOMAIN, Density::Kinetic, problem.p)?;
    let gradient = region_integral(state, grid, &FULL_DOMAIN, Density::Gradient, problem.p)?;
    let potential = if problem.nonlinear {
        region_integral(state, grid, &FULL_DOMAIN, Density::Potential, problem.p)?
    } else {
        0.0
    };
    Ok(EnergyReport {
        t: state.t,
        kinetic,
        gradient,
        potential,
        total: kinetic + gradient + potential,
    })
}

/// Energy in `{|x| > t + R}`; `R -> -inf` recovers the total energy, and a
/// cut beyond the grid gives 0.
pub fn exterior_energy(
    state: &FieldState,
    grid: &GridSpec,
    problem: &ProblemSpec,
    r_offset: f64,
) -> Result<f64, DiagnosticsError> {
    let density = if problem.nonlinear {
        Density::Energy
    } else {
        Density::LinearEnergy
    };
    Ok(region_integral(
        state,
        grid,
        &RegionSpec::Exterior { r: r_offset },
        density,
        problem.p,
    )?)
}

/// Flux density integrated over the sphere `|x| = r_cone` at the state's
/// time: `∫ [½|∇̸u|² + ½((∂_r + ∂_t)u)² + |u|^{p+1}/(p+1)] dσ`.
/// An empty cone (`r_cone <= 0`) contributes zero.
pub fn flux_integrand(
    state: &FieldState,
    grid: &GridSpec,
    problem: &ProblemSpec,
    r_cone: f64,
    sphere: &SphereGrid,
) -> Result<f64, DiagnosticsError> {
    if r_cone <= 0.0 {
        return Ok(0.0);
    }
    let rmax = grid.extent();
    if r_cone > rmax {
        return Err(DiagnosticsError::ConeExitsGrid { r: r_cone, rmax });
    }
    let pot = |u: f64| {
        if problem.nonlinear {
            potential_density(u, problem.p)
        } else {
            0.0
        }
    };
    match grid.mode {
        GridMode::Radial { d } => {
            let (u, ut, ur) = interp_radial(state, grid, r_cone)?;
            let out = ur + ut;
            let density = 0.5 * out * out + pot(u);
            Ok(density * crate::grid::sphere_area(d) * r_cone.powi(d as i32 - 1))
        }
        GridMode::Cartesian3d => {
            let mut total = 0.0;
            for (dir, w) in sphere.dirs.iter().zip(&sphere.weights) {
                let pt = [r_cone * dir[0], r_cone * dir[1], r_cone * dir[2]];
                let (u, ut, gradient) = interp_cartesian(state, grid, pt)?;
                let radial = gradient[0] * dir[0] + gradient[1] * dir[1] + gradient[2] * dir[2];
                let g2 = gradient[0] * gradient[0]
                    + gradient[1] * gradient[1]
                    + gradient[2] * gradient[2];
                let angular = (g2 - radial * radial).max(0.0);
                let out = radial + ut;
                total += w * (0.5 * angular + 0.5 * out * out + pot(u));
            }
            Ok(total * r_cone * r_cone)
        }
    }
}

/// Trapezoid-in-time accumulator for scalar series sampled along a run.
#[derive(Debug, Clone, Default)]
pub struct TimeIntegrator {
    last: Option<(f64, f64)>,
    pub sum: f64,
}

impl TimeIntegrator {
    pub fn push(&mut self, t: f64, value: f64) {
        if let Some((t0, v0)) = self.last {
            self.sum += 0.5 * (v0 + value) * (t - t0);
        }
        self.last = Some((t, value));
    }
}

/// Time series of exterior energy and accumulated cone flux for one offset
/// `R`. `accumulate` is fed every solver step; `record` stores a ledger row
/// at observer cadence.
#[derive(Debug, Clone)]
pub struct FluxLedger {
    pub r_offset: f64,
    pub times: Vec<f64>,
    pub e_ext: Vec<f64>,
    pub phi: Vec<f64>,
    pub closure_residual: Vec<f64>,
    flux: TimeIntegrator,
}

impl FluxLedger {
    pub fn new(r_offset: f64) -> FluxLedger {
        FluxLedger {
            r_offset,
            times: Vec::new(),
            e_ext: Vec::new(),
            phi: Vec::new(),
            closure_residual: Vec::new(),
            flux: TimeIntegrator::default(),
        }
    }

    /// Adds the current flux integrand sample (trapezoid in time).
    pub fn accumulate(
        &mut self,
        state: &FieldState,
        grid: &GridSpec,
        problem: &ProblemSpec,
        sphere: &SphereGrid,
    ) -> Result<(), DiagnosticsError> {
        let value = flux_integrand(state, grid, problem, state.t + self.r_offset, sphere)?;
        self.flux.push(state.t, value);
        Ok(())
    }

    /// Total accumulated flux so far.
    pub fn accumulated_flux(&self) -> f64 {
        self.flux.sum
    }

    /// Stores `(t, E_ext, Φ, closure)` where the closure residual is
    /// `|E_ext(t0) - E_ext(t) - Φ(t0 -> t)|`.
    pub fn record(
        &mut self,
        state: &FieldState,
        grid: &GridSpec,
        problem: &ProblemSpec,
    ) -> Result<(), DiagnosticsError> {
        let e = exterior_energy(state, grid, problem, self.r_offset)?;
        self.times.push(state.t);
        self.e_ext.push(e);
        self.phi.push(self.flux.sum);
        let residual = if let (Some(&e0), Some(&phi0)) = (self.e_ext.first(), self.phi.first()) {
            (e0 - e - (self.flux.sum - phi0)).abs()
        } else {
            0.0
        };
        self.closure_residual.push(residual);
        Ok(())
    }
}

/// Which field the mixed norm measures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormIntegrand {
    /// `|u|`
    U,
    /// `|u|^p`, the size of the nonlinearity `|u|^{p-1} u`
    NonlinearU { p: f64 },
}

impl NormIntegrand {
    fn eval(&self, u: f64) -> f64 {
        match *self {
            NormIntegrand::U => u.abs(),
            NormIntegrand::NonlinearU { p } => u.abs().powf(p),
        }
    }
}

/// Running `L^q_t L^r_x` accumulator over a masked region, sampled at
/// observer cadence with the left-endpoint rule in time.
#[derive(Debug, Clone)]
pub struct MixedNormAccumulator {
    pub q: f64,
    pub r: f64,
    pub region: RegionSpec,
    pub integrand: NormIntegrand,
    sum: f64,
    last: Option<(f64, f64)>,
    samples: usize,
}

impl MixedNormAccumulator {
    pub fn new(q: f64, r: f64, region: RegionSpec, integrand: NormIntegrand) -> Self {
        MixedNormAccumulator {
            q,
            r,
            region,
            integrand,
            sum: 0.0,
            last: None,
            samples: 0,
        }
    }

    /// `∫_region |f(u)|^r dx` at the state's time.
    pub fn space_integral(
        &self,
        state: &FieldState,
        grid: &GridSpec,
    ) -> Result<f64, DiagnosticsError> {
        let integrand = self.integrand;
        let r_exp = self.r;
        Ok(lp_space_integral(state, grid, &self.region, move |u| {
            integrand.eval(u).powf(r_exp)
        })?)
    }

    /// Left-endpoint accumulation: the previous sample is weighted by the
    /// elapsed interval.
    pub fn add(&mut self, state: &FieldState, grid: &GridSpec) -> Result<(), DiagnosticsError> {
        let space = self.space_integral(state, grid)?;
        let sample = space.powf(self.q / self.r);
        if let Some((t0, v0)) = self.last {
            self.sum += v0 * (state.t - t0);
        }
        self.last = Some((state.t, sample));
        self.samples += 1;
        Ok(())
    }

    /// `(Σ dt (∫|f|^r)^{q/r})^{1/q}` over the recorded window.
    pub fn finalize(&self) -> Result<f64, DiagnosticsError> {
        if self.samples == 0 {
            return Err(DiagnosticsError::EmptyWindow);
        }
        Ok(self.sum.powf(1.0 / self.q))
    }
}

/// `∫_region f(u) dx` with the same region weighting as every other
/// quadrature here (trapezoid + linear partial cells radially, weighted
/// cell sums in Cartesian mode).
pub fn lp_space_integral(
    state: &FieldState,
    grid: &GridSpec,
    region: &RegionSpec,
    f: impl Fn(f64) -> f64,
) -> Result<f64, GridError> {
    state.check_size(grid)?;
    match grid.mode {
        GridMode::Radial { d } => {
            let sigma = crate::grid::sphere_area(d);
            let g: Vec<f64> = (0..grid.n)
                .map(|i| {
                    let r = grid.radius(i);
                    f(state.u[i]) * sigma * r.powi(d as i32 - 1)
                })
                .collect();
            let (lo, hi) = region.bounds_at(state.t);
            Ok(crate::grid::trapz_interval(
                &g,
                grid.h,
                lo,
                hi.min(grid.extent()),
            ))
        }
        GridMode::Cartesian3d => {
            let n = grid.n;
            let h = grid.h;
            let cell = h * h * h;
            let mut total = 0.0;
            for iz in 0..n {
                let z = grid.axis_coord(iz);
                for iy in 0..n {
                    let y = grid.axis_coord(iy);
                    let row = grid.index(0, iy, iz);
                    for ix in 0..n {
                        let x = grid.axis_coord(ix);
                        let r = (x * x + y * y + z * z).sqrt();
                        let w = cart_region_weight(region, state.t, r, h);
                        if w != 0.0 {
                            total += f(state.u[row + ix]) * w * cell;
                        }
                    }
                }
            }
            Ok(total)
        }
    }
}

fn cart_region_weight(region: &RegionSpec, t: f64, r: f64, h: f64) -> f64 {
    let ramp = |cut: f64| -> f64 { ((r - cut) / h + 0.5).clamp(0.0, 1.0) };
    match *region {
        RegionSpec::Exterior { r: off } => ramp(t + off),
        RegionSpec::Ball { r: off } => 1.0 - ramp(t + off),
        RegionSpec::Shell { r1, r2 } => ramp(t + r1) - ramp(t + r2),
    }
}

/// Accumulates `∬_Ω |u|^{p+1} dx dt` over the cone shell by trapezoid in
/// time; feed it at per-step cadence.
#[derive(Debug, Clone)]
pub struct ShellLpMass {
    pub region: RegionSpec,
    pub p: f64,
    integrator: TimeIntegrator,
}

impl ShellLpMass {
    pub fn new(r1: f64, r2: f64, p: f64) -> ShellLpMass {
        ShellLpMass {
            region: RegionSpec::Shell { r1, r2 },
            p,
            integrator: TimeIntegrator::default(),
        }
    }

    pub fn add(&mut self, state: &FieldState, grid: &GridSpec) -> Result<(), DiagnosticsError> {
        let p = self.p;
        let v = lp_space_integral(state, grid, &self.region, |u| u.abs().powf(p + 1.0))?;
        self.integrator.push(state.t, v);
        Ok(())
    }

    pub fn value(&self) -> f64 {
        self.integrator.sum
    }
}

/// The inward/outward quantity
/// `∫ |u_r + (d-1)/2 · u/|x| + u_t|² + (d-1)(d-3)/16 · u²/|x|² + |∇̸u|² dx`.
/// In d = 3 the middle coefficient vanishes; radial modes have `∇̸u = 0`.
pub fn morawetz_report(state: &FieldState, grid: &GridSpec) -> Result<f64, DiagnosticsError> {
    Ok(region_integral(
        state,
        grid,
        &FULL_DOMAIN,
        Density::Morawetz,
        1.0,
    )?)
}

/// `∫ (1+|x|)^κ e(x) dx` at the state's time, with `e` the energy density
/// (potential included only for nonlinear problems).
pub fn weighted_energy(
    state: &FieldState,
    grid: &GridSpec,
    problem: &ProblemSpec,
    kappa: f64,
) -> Result<f64, DiagnosticsError> {
    assert!(kappa >= 0.0, "weighted energy requires kappa >= 0");
    let density = if problem.nonlinear {
        Density::Energy
    } else {
        Density::LinearEnergy
    };
    Ok(region_integral_weighted(
        state,
        grid,
        &FULL_DOMAIN,
        density,
        problem.p,
        |r| (1.0 + r).powf(kappa),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{make_grid, GridMode};
    use crate::solver::{
        exact_free_wave_3d, init_from_data, run_from, GaussianOddProfile, InitialData,
        ProblemSpec, RunConfig, Scheme,
    };
    use std::f64::consts::PI;

    fn radial_grid(d: u32, h: f64, rmax: f64, dt: f64) -> GridSpec {
        make_grid(GridMode::Radial { d }, h, rmax, dt).unwrap()
    }

    fn problem(nonlinear: bool, scheme: Scheme) -> ProblemSpec {
        ProblemSpec {
            p: 4.0,
            nonlinear,
            scheme,
            data: InitialData::GaussianOdd {
                amplitude: 1.0,
                width: 1.0,
            },
            r_support: 4.0,
        }
    }

    /// States sampled from the exact d = 3 free wave.
    fn exact_state(grid: &GridSpec, t: f64) -> FieldState {
        let f = GaussianOddProfile {
            amplitude: 1.0,
            width: 1.0,
        };
        let mut s = FieldState::zero(grid);
        for i in 0..grid.n {
            let (u, ut, _) = exact_free_wave_3d(&f, grid.radius(i), t);
            s.u[i] = u;
            s.ut[i] = ut;
        }
        s.t = t;
        s
    }

    #[test]
    fn zero_state_energies() {
        let grid = radial_grid(3, 0.05, 6.0, 0.02);
        let state = FieldState::zero(&grid);
        let rep = total_energy(&state, &grid, &problem(true, Scheme::Leapfrog)).unwrap();
        assert_eq!(rep.total, 0.0);
        assert_eq!(rep.kinetic + rep.gradient + rep.potential, rep.total);
        assert_eq!(morawetz_report(&state, &grid).unwrap(), 0.0);
        assert_eq!(
            weighted_energy(&state, &grid, &problem(true, Scheme::Leapfrog), 1.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn linear_gaussian_energy_matches_oracle() {
        // Analytic total 3π sqrt(π/2); h/8-refined quadrature oracle agrees.
        let grid = radial_grid(3, 0.02, 12.0, 0.01);
        let state = exact_state(&grid, 0.0);
        let rep = total_energy(&state, &grid, &problem(false, Scheme::Leapfrog)).unwrap();
        let analytic = 3.0 * PI * (PI / 2.0).sqrt();
        assert!(
            (rep.total - analytic).abs() < 2e-3,
            "{} vs {analytic}",
            rep.total
        );
        assert_eq!(rep.potential, 0.0);

        let fine = radial_grid(3, 0.0025, 12.0, 0.001);
        let fine_state = exact_state(&fine, 0.0);
        let oracle = total_energy(&fine_state, &fine, &problem(false, Scheme::Leapfrog))
            .unwrap()
            .total;
        assert!((oracle - analytic).abs() < 5e-5);
    }

    #[test]
    fn constant_ball_potential() {
        // u ≡ c: potential over a ball is |c|^{p+1}/(p+1) · volume
        let grid = radial_grid(3, 0.005, 4.0, 0.002);
        let c = 0.7;
        let state = FieldState {
            u: vec![c; grid.n],
            ut: vec![0.0; grid.n],
            t: 0.0,
        };
        let p = 4.0;
        let got = region_integral(
            &state,
            &grid,
            &RegionSpec::Ball { r: 1.0 },
            Density::Potential,
            p,
        )
        .unwrap();
        let exact = c.powf(p + 1.0) / (p + 1.0) * (4.0 * PI / 3.0);
        assert!((got - exact).abs() < 1e-4 * exact, "{got} vs {exact}");
    }

    #[test]
    fn exterior_energy_limits() {
        let grid = radial_grid(3, 0.02, 10.0, 0.01);
        let state = exact_state(&grid, 0.0);
        let prob = problem(false, Scheme::Leapfrog);
        // cut beyond the grid -> empty region
        let far = exterior_energy(&state, &grid, &prob, 20.0).unwrap();
        assert_eq!(far, 0.0);
        // R -> -inf -> total energy
        let all = exterior_energy(&state, &grid, &prob, -1e12).unwrap();
        let total = total_energy(&state, &grid, &prob).unwrap().total;
        assert!((all - total).abs() <= 1e-12 * total.abs());
    }

    #[test]
    fn flux_ledger_zero_field() {
        let grid = radial_grid(3, 0.05, 6.0, 0.02);
        let sphere = SphereGrid::radial_collapse(3);
        let prob = problem(true, Scheme::Leapfrog);
        let mut ledger = FluxLedger::new(0.5);
        for k in 0..5 {
            let mut state = FieldState::zero(&grid);
            state.t = k as f64 * 0.1;
            ledger.accumulate(&state, &grid, &prob, &sphere).unwrap();
            ledger.record(&state, &grid, &prob).unwrap();
        }
        assert!(ledger.phi.iter().all(|&v| v == 0.0));
        assert!(ledger.closure_residual.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn outgoing_wave_far_cone_flux_small() {
        // Purely outgoing exact free wave: (∂_r + ∂_t)u = O(r^{-2}), so the
        // flux through far cones stays below 1e-3 of the energy.
        let grid = radial_grid(3, 0.02, 30.0, 0.01);
        let prob = problem(false, Scheme::Leapfrog);
        let sphere = SphereGrid::radial_collapse(3);
        let e = {
            let s = exact_state(&grid, 0.0);
            total_energy(&s, &grid, &prob).unwrap().total
        };
        let r_off = 6.0; // R >= R_support + 2
        let mut ledger = FluxLedger::new(r_off);
        let dt_obs = 0.05;
        let mut t = 0.0;
        while t <= 20.0 {
            let state = exact_state(&grid, t);
            ledger.accumulate(&state, &grid, &prob, &sphere).unwrap();
            t += dt_obs;
        }
        assert!(
            ledger.accumulated_flux() < 1e-3 * e,
            "flux {} vs energy {e}",
            ledger.accumulated_flux()
        );
    }

    #[test]
    fn flux_closure_on_nonlinear_run() {
        // Short nonlinear run: closure residual within a few percent of E.
        let grid = radial_grid(3, 0.04, 16.0, 0.02);
        let prob = problem(true, Scheme::Conservative);
        let sphere = SphereGrid::radial_collapse(3);
        let init = init_from_data(&prob, &grid).unwrap();
        let e0 = total_energy(&init, &grid, &prob).unwrap().total;

        let mut ledger = FluxLedger::new(0.0);
        let cfg = RunConfig {
            t_end: 4.0,
            observe_every: 10,
            margin: 2.0,
        };
        {
            let mut per_step = |level: usize, s: &FieldState| {
                ledger
                    .accumulate(s, &grid, &prob, &sphere)
                    .map_err(|e| crate::solver::SolverError::Observer(e.to_string()))?;
                if level % 10 == 0 {
                    ledger
                        .record(s, &grid, &prob)
                        .map_err(|e| crate::solver::SolverError::Observer(e.to_string()))?;
                }
                Ok(())
            };
            run_from(&prob, &grid, &cfg, init, Some(&mut per_step), None).unwrap();
        }
        let res = *ledger.closure_residual.last().unwrap();
        assert!(res <= 0.02 * e0, "closure residual {res} vs E = {e0}");
        // E_ext nonincreasing within slack
        for w in ledger.e_ext.windows(2) {
            assert!(w[1] <= w[0] + 1e-6 * e0, "E_ext increased: {w:?}");
        }
    }

    #[test]
    fn mixed_norm_trivials_and_constant_ball() {
        let grid = radial_grid(3, 0.01, 4.0, 0.004);
        // zero field
        let mut acc = MixedNormAccumulator::new(
            3.5,
            14.0,
            RegionSpec::Exterior { r: -1e9 },
            NormIntegrand::U,
        );
        for k in 0..4 {
            let mut s = FieldState::zero(&grid);
            s.t = 0.1 * k as f64;
            acc.add(&s, &grid).unwrap();
        }
        assert_eq!(acc.finalize().unwrap(), 0.0);

        // u ≡ c on the unit ball, window length τ: c vol^{1/r} τ^{1/q}
        let (c, qq, rr, tau) = (0.8, 3.5, 14.0, 0.6);
        let mut acc =
            MixedNormAccumulator::new(qq, rr, RegionSpec::Exterior { r: -1e9 }, NormIntegrand::U);
        let steps = 6usize;
        for k in 0..=steps {
            let mut s = FieldState::zero(&grid);
            for i in 0..grid.n {
                if grid.radius(i) <= 1.0 {
                    s.u[i] = c;
                }
            }
            s.t = tau * k as f64 / steps as f64;
            acc.add(&s, &grid).unwrap();
        }
        let got = acc.finalize().unwrap();
        let vol = 4.0 * PI / 3.0;
        let expect = c * vol.powf(1.0 / rr) * tau.powf(1.0 / qq);
        assert!((got - expect).abs() < 0.02 * expect, "{got} vs {expect}");

        // empty window errors
        let acc =
            MixedNormAccumulator::new(qq, rr, RegionSpec::Exterior { r: -1e9 }, NormIntegrand::U);
        assert!(matches!(acc.finalize(), Err(DiagnosticsError::EmptyWindow)));
    }

    #[test]
    fn holder_chain_on_recorded_run() {
        // ‖χ₂ |u|^{p-1}u‖_{L¹L²} <= ‖χ₂ u‖^{k1}_{L^{p+1}L^{p+1}} ‖χ₂ u‖^{k2}_{L^q L^r}
        // with the exact exponents of the interpolation lemma for (3, 4).
        let grid = radial_grid(3, 0.05, 16.0, 0.025);
        let prob = problem(true, Scheme::Leapfrog);
        let (k1, k2) = (5.0 / 3.0, 7.0 / 3.0);
        let (qq, rr) = (3.5, 14.0);
        let p = prob.p;
        let shell = RegionSpec::Shell { r1: 0.0, r2: 2.0 };

        let mut n_src = MixedNormAccumulator::new(1.0, 2.0, shell, NormIntegrand::NonlinearU { p });
        let mut n_pp1 = MixedNormAccumulator::new(p + 1.0, p + 1.0, shell, NormIntegrand::U);
        let mut n_qr = MixedNormAccumulator::new(qq, rr, shell, NormIntegrand::U);

        let init = init_from_data(&prob, &grid).unwrap();
        let cfg = RunConfig {
            t_end: 4.0,
            observe_every: 5,
            margin: 2.0,
        };
        let mut obs = |_s: usize, state: &FieldState, _r: &crate::solver::StepReport| {
            for acc in [&mut n_src, &mut n_pp1, &mut n_qr] {
                acc.add(state, &grid)
                    .map_err(|e| crate::solver::SolverError::Observer(e.to_string()))?;
            }
            Ok(())
        };
        run_from(&prob, &grid, &cfg, init, None, Some(&mut obs)).unwrap();

        let lhs = n_src.finalize().unwrap();
        let rhs = n_pp1.finalize().unwrap().powf(k1) * n_qr.finalize().unwrap().powf(k2);
        assert!(
            lhs <= rhs * (1.0 + 1e-9),
            "Hölder chain violated: {lhs} vs {rhs}"
        );
        assert!(lhs > 0.0, "degenerate test");
    }

    #[test]
    fn shell_mass_decreases_in_window_start() {
        // fixed-width windows starting later collect less shell mass once
        // the main crossing has passed
        let grid = radial_grid(3, 0.05, 20.0, 0.025);
        let prob = problem(true, Scheme::Leapfrog);
        let mut early = ShellLpMass::new(0.0, 2.0, prob.p);
        let mut late = ShellLpMass::new(0.0, 2.0, prob.p);
        let init = init_from_data(&prob, &grid).unwrap();
        let cfg = RunConfig {
            t_end: 6.0,
            observe_every: 1,
            margin: 2.0,
        };
        let mut per_step = |_l: usize, s: &FieldState| {
            let wrap = |e: DiagnosticsError| crate::solver::SolverError::Observer(e.to_string());
            if (1.0..=3.0).contains(&s.t) {
                early.add(s, &grid).map_err(wrap)?;
            }
            if (4.0..=6.0).contains(&s.t) {
                late.add(s, &grid).map_err(wrap)?;
            }
            Ok(())
        };
        run_from(&prob, &grid, &cfg, init, Some(&mut per_step), None).unwrap();
        assert!(
            late.value() < early.value(),
            "late {} vs early {}",
            late.value(),
            early.value()
        );
        assert!(early.value() > 0.0);
    }

    #[test]
    fn morawetz_examples() {
        // far-field outgoing wave: u_r + u/r + u_t = -2 f'(t+r)/r, which is
        // exponentially small at late times; the measured value sits on the
        // O(h⁴) floor of the squared centered-difference error
        let grid = radial_grid(3, 0.02, 40.0, 0.01);
        let state = exact_state(&grid, 15.0);
        let v = morawetz_report(&state, &grid).unwrap();
        assert!(v < 1e-5, "{v}");

        // u ≡ 1 radial, d = 3: only the (d-1)/2 · u/r term survives and the
        // integral is ∫ (1/r)² 4π r² dr = 4π r_max (middle coefficient 0)
        let gridc = radial_grid(3, 0.05, 4.0, 0.02);
        let state = FieldState {
            u: vec![1.0; gridc.n],
            ut: vec![0.0; gridc.n],
            t: 0.0,
        };
        let v = morawetz_report(&state, &gridc).unwrap();
        let exact = 4.0 * PI * gridc.extent();
        assert!((v - exact).abs() < 1e-2 * exact, "{v} vs {exact}");

        // d = 4 keeps the middle term with coefficient (d-1)(d-3)/16 = 3/16:
        // u ≡ 1 gives density (9/4 + 3/16)/r² against the r³ weight,
        // so the integral is (39/16) σ₃ r_max²/2
        let grid4 = radial_grid(4, 0.02, 4.0, 0.008);
        let state = FieldState {
            u: vec![1.0; grid4.n],
            ut: vec![0.0; grid4.n],
            t: 0.0,
        };
        let v = morawetz_report(&state, &grid4).unwrap();
        let exact = (39.0 / 16.0) * crate::grid::sphere_area(4) * grid4.extent().powi(2) / 2.0;
        assert!((v - exact).abs() < 1e-2 * exact, "{v} vs {exact}");
    }

    #[test]
    fn weighted_energy_examples() {
        let grid = radial_grid(3, 0.02, 12.0, 0.01);
        let state = exact_state(&grid, 0.0);
        let prob = problem(false, Scheme::Leapfrog);
        // κ = 0 equals the total energy
        let w0 = weighted_energy(&state, &grid, &prob, 0.0).unwrap();
        let total = total_energy(&state, &grid, &prob).unwrap().total;
        assert!((w0 - total).abs() <= 1e-12 * total);
        // κ = 1 against the h/8-refined quadrature oracle
        let w1 = weighted_energy(&state, &grid, &prob, 1.0).unwrap();
        let fine = radial_grid(3, 0.0025, 12.0, 0.001);
        let fine_state = exact_state(&fine, 0.0);
        let oracle = weighted_energy(&fine_state, &fine, &prob, 1.0).unwrap();
        assert!((w1 - oracle).abs() < 5e-3, "{w1} vs {oracle}");
    }

    #[test]
    fn flux_integrand_errors() {
        let grid = radial_grid(3, 0.05, 6.0, 0.02);
        let state = exact_state(&grid, 0.0);
        let prob = problem(false, Scheme::Leapfrog);
        let sphere = SphereGrid::radial_collapse(3);
        assert!(matches!(
            flux_integrand(&state, &grid, &prob, 7.0, &sphere),
            Err(DiagnosticsError::ConeExitsGrid { .. })
        ));
        // empty cone contributes zero
        assert_eq!(
            flux_integrand(&state, &grid, &prob, -0.5, &sphere).unwrap(),
            0.0
        );
    }
}
