//! Extraction of the outgoing radiation profile `G` along characteristics,
//! Cauchy-convergence bookkeeping, free-wave reconstruction for radial
//! d = 3, and the exterior scattering residual.
//!
//! A profile at time `t` samples `g_t(R, θ) = (t+R)^{(d-1)/2} ∂_t u` and
//! `ĝ_t(R, θ) = (t+R)^{(d-1)/2} ∂_r u` at radius `t + R` over a window
//! `[R1, R2]`. For outgoing waves `g_t` converges in `L²([R1,R2] x S^{d-1})`
//! and `ĝ_t → -g_t`; the limit is the radiation profile `G`. Sample radii
//! `t + R <= 0` carry a zero sample (the `r -> 0⁺` limit of
//! `r^{(d-1)/2} ∂_t u` for bounded fields), which keeps early-time windows
//! usable.

use thiserror::Error;

use crate::grid::{
    interp_cartesian, interp_radial, region_integral, Density, FieldState, GridError, GridMode,
    GridSpec, RegionSpec, SphereGrid,
};

#[derive(Debug, Error)]
pub enum RadiationError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("window [{r1}, {r2}] at t = {t} leaves the grid; covered sub-window is [{r1}, {covered}]")]
    WindowOutsideGrid {
        r1: f64,
        r2: f64,
        t: f64,
        covered: f64,
    },
    #[error("profiles have mismatched windows or quadrature")]
    MismatchedProfiles,
    #[error("extraction needs at least 3 profiles, got {0}")]
    TooFewProfiles(usize),
    #[error("extraction unconverged: cauchy history is non-decreasing ({first} -> {last})")]
    ExtractionUnconverged { first: f64, last: f64 },
    #[error("free-wave reconstruction requires a radial d=3 profile")]
    NotRadial3d,
    #[error("windows neither overlap nor abut, or their R grids are misaligned")]
    CannotMerge,
}

/// Samples of `(g_t, ĝ_t)` on the `(R, θ)` product grid at one time.
#[derive(Debug, Clone)]
pub struct CharacteristicProfile {
    pub t: f64,
    pub window: (f64, f64),
    pub dr: f64,
    pub n_r: usize,
    pub d: u32,
    pub sphere: SphereGrid,
    /// r-major: `g[ir * n_theta + jt]`
    pub g: Vec<f64>,
    pub ghat: Vec<f64>,
}

impl CharacteristicProfile {
    pub fn n_theta(&self) -> usize {
        self.sphere.len()
    }

    pub fn radius(&self, ir: usize) -> f64 {
        self.window.0 + ir as f64 * self.dr
    }

    /// Trapezoid weight in R times the sphere weight.
    fn quad_weight(&self, ir: usize, jt: usize) -> f64 {
        let wr = if ir == 0 || ir == self.n_r - 1 {
            0.5 * self.dr
        } else {
            self.dr
        };
        wr * self.sphere.weights[jt]
    }

    /// `∫∫ |g|² dθ dR`
    pub fn l2_norm_sq(&self) -> f64 {
        let nt = self.n_theta();
        let mut sum = 0.0;
        for ir in 0..self.n_r {
            for jt in 0..nt {
                let v = self.g[ir * nt + jt];
                sum += self.quad_weight(ir, jt) * v * v;
            }
        }
        sum
    }
}

/// Interpolated profile on the window; R-spacing equals the grid spacing.
pub fn sample_profile(
    state: &FieldState,
    grid: &GridSpec,
    window: (f64, f64),
    sphere: &SphereGrid,
) -> Result<CharacteristicProfile, RadiationError> {
    let (r1, r2) = window;
    assert!(r1 < r2, "window must be ordered");
    let t = state.t;
    let rmax = grid.extent();
    if t + r2 > rmax * (1.0 + 1e-12) {
        return Err(RadiationError::WindowOutsideGrid {
            r1,
            r2,
            t,
            covered: rmax - t,
        });
    }
    let d = grid.mode.dim();
    let n_r = ((r2 - r1) / grid.h).round() as usize + 1;
    let nt = sphere.len();
    let mut g = vec![0.0; n_r * nt];
    let mut ghat = vec![0.0; n_r * nt];
    let half = (d - 1) as f64 / 2.0;
    for ir in 0..n_r {
        let rc = t + r1 + ir as f64 * grid.h;
        if rc <= 0.0 {
            continue; // zero sample: the r -> 0 limit
        }
        let weight = rc.powf(half);
        match grid.mode {
            GridMode::Radial { .. } => {
                let (_, ut, ur) = interp_radial(state, grid, rc.min(rmax))?;
                g[ir * nt] = weight * ut;
                ghat[ir * nt] = weight * ur;
            }
            GridMode::Cartesian3d => {
                for (jt, dir) in sphere.dirs.iter().enumerate() {
                    let pt = [rc * dir[0], rc * dir[1], rc * dir[2]];
                    let (_, ut, grad) = interp_cartesian(state, grid, pt)?;
                    let radial = grad[0] * dir[0] + grad[1] * dir[1] + grad[2] * dir[2];
                    g[ir * nt + jt] = weight * ut;
                    ghat[ir * nt + jt] = weight * radial;
                }
            }
        }
    }
    Ok(CharacteristicProfile {
        t,
        window,
        dr: grid.h,
        n_r,
        d,
        sphere: sphere.clone(),
        g,
        ghat,
    })
}

fn same_geometry(a: &CharacteristicProfile, b: &CharacteristicProfile) -> bool {
    a.n_r == b.n_r
        && a.n_theta() == b.n_theta()
        && (a.window.0 - b.window.0).abs() < 1e-12
        && (a.window.1 - b.window.1).abs() < 1e-12
        && (a.dr - b.dr).abs() < 1e-15
}

/// `L²((R, θ))` distance between two profiles' `g` samples.
pub fn cauchy_distance(
    p1: &CharacteristicProfile,
    p2: &CharacteristicProfile,
) -> Result<f64, RadiationError> {
    if !same_geometry(p1, p2) {
        return Err(RadiationError::MismatchedProfiles);
    }
    let nt = p1.n_theta();
    let mut sum = 0.0;
    for ir in 0..p1.n_r {
        for jt in 0..nt {
            let dv = p1.g[ir * nt + jt] - p2.g[ir * nt + jt];
            sum += p1.quad_weight(ir, jt) * dv * dv;
        }
    }
    Ok(sum.sqrt())
}

/// Limit profile estimate with convergence metadata.
#[derive(Debug, Clone)]
pub struct RadiationFieldEstimate {
    pub window: (f64, f64),
    pub dr: f64,
    pub n_r: usize,
    pub d: u32,
    pub sphere: SphereGrid,
    pub g: Vec<f64>,
    pub t_star: f64,
    pub cauchy_history: Vec<f64>,
    pub l2_norm_sq: f64,
}

impl RadiationFieldEstimate {
    pub fn n_theta(&self) -> usize {
        self.sphere.len()
    }

    fn quad_weight(&self, ir: usize, jt: usize) -> f64 {
        let wr = if ir == 0 || ir == self.n_r - 1 {
            0.5 * self.dr
        } else {
            self.dr
        };
        wr * self.sphere.weights[jt]
    }

    /// Radial-collapse value `G(R)` at index `ir` (radial estimates only).
    pub fn g_radial(&self, ir: usize) -> f64 {
        self.g[ir * self.n_theta()]
    }
}

/// Takes `G` as the latest profile of a Cauchy sequence; errors when the
/// successive distances fail to decrease overall.
pub fn extract_g(
    profiles: &[CharacteristicProfile],
) -> Result<RadiationFieldEstimate, RadiationError> {
    if profiles.len() < 3 {
        return Err(RadiationError::TooFewProfiles(profiles.len()));
    }
    for pair in profiles.windows(2) {
        if !same_geometry(&pair[0], &pair[1]) {
            return Err(RadiationError::MismatchedProfiles);
        }
        assert!(pair[0].t < pair[1].t, "profiles must be at increasing times");
    }
    let mut history = Vec::with_capacity(profiles.len() - 1);
    for pair in profiles.windows(2) {
        history.push(cauchy_distance(&pair[0], &pair[1])?);
    }
    let first = history[0];
    let last = *history.last().unwrap();
    let peak = history.iter().cloned().fold(0.0f64, f64::max);
    let latest = profiles.last().unwrap();
    // Converged when the tail has decayed: below the first distance, or
    // well below the history's peak (sampling may start before the wave
    // reaches the window, making the first distance atypically small), or
    // at the rounding floor of the profile scale.
    let floor = 1e-10 * latest.l2_norm_sq().sqrt().max(1e-30);
    if last >= first && last >= 0.5 * peak && last > floor {
        return Err(RadiationError::ExtractionUnconverged { first, last });
    }
    let mut est = RadiationFieldEstimate {
        window: latest.window,
        dr: latest.dr,
        n_r: latest.n_r,
        d: latest.d,
        sphere: latest.sphere.clone(),
        g: latest.g.clone(),
        t_star: latest.t,
        cauchy_history: history,
        l2_norm_sq: 0.0,
    };
    est.l2_norm_sq = latest.l2_norm_sq();
    Ok(est)
}

/// Glues two window estimates into one on the union window; overlapping
/// samples are averaged. Returns the merged estimate and the maximum
/// absolute discrepancy over the overlap.
pub fn merge_estimates(
    a: &RadiationFieldEstimate,
    b: &RadiationFieldEstimate,
) -> Result<(RadiationFieldEstimate, f64), RadiationError> {
    if a.n_theta() != b.n_theta() || (a.dr - b.dr).abs() > 1e-15 || a.d != b.d {
        return Err(RadiationError::CannotMerge);
    }
    let (lo, hi) = (a.window.0.min(b.window.0), a.window.1.max(b.window.1));
    let shift = (b.window.0 - a.window.0) / a.dr;
    if (shift - shift.round()).abs() > 1e-9 {
        return Err(RadiationError::CannotMerge);
    }
    if a.window.1 < b.window.0 - 1e-12 || b.window.1 < a.window.0 - 1e-12 {
        return Err(RadiationError::CannotMerge);
    }
    let nt = a.n_theta();
    let n_r = ((hi - lo) / a.dr).round() as usize + 1;
    let offset_a = ((a.window.0 - lo) / a.dr).round() as usize;
    let offset_b = ((b.window.0 - lo) / a.dr).round() as usize;
    let mut g = vec![0.0; n_r * nt];
    let mut counts = vec![0u32; n_r * nt];
    let mut discrepancy = 0.0f64;
    for (offset, est) in [(offset_a, a), (offset_b, b)] {
        for ir in 0..est.n_r {
            for jt in 0..nt {
                let idx = (ir + offset) * nt + jt;
                let v = est.g[ir * nt + jt];
                if counts[idx] > 0 {
                    discrepancy = discrepancy.max((g[idx] - v).abs());
                    g[idx] = 0.5 * (g[idx] + v);
                } else {
                    g[idx] = v;
                }
                counts[idx] += 1;
            }
        }
    }
    let mut merged = RadiationFieldEstimate {
        window: (lo, hi),
        dr: a.dr,
        n_r,
        d: a.d,
        sphere: a.sphere.clone(),
        g,
        t_star: a.t_star.max(b.t_star),
        cauchy_history: Vec::new(),
        l2_norm_sq: 0.0,
    };
    merged.l2_norm_sq = {
        let mut sum = 0.0;
        for ir in 0..merged.n_r {
            for jt in 0..nt {
                let v = merged.g[ir * nt + jt];
                sum += merged.quad_weight(ir, jt) * v * v;
            }
        }
        sum
    };
    Ok((merged, discrepancy))
}

/// `‖G‖² <= 2E` up to a 1e-6 relative slack.
pub fn g_norm_bound_check(estimate: &RadiationFieldEstimate, energy: f64) -> bool {
    estimate.l2_norm_sq <= 2.0 * energy * (1.0 + 1e-6)
}

/// d'Alembert evaluator `u_L(r, t) = (φ(t-r) - φ(t+r))/r` with
/// `φ'(s) = G(-s)`; `φ` vanishes ahead of the wave.
#[derive(Debug, Clone)]
pub struct FreeWaveEvaluator {
    s0: f64,
    dr: f64,
    phi: Vec<f64>,
    dphi: Vec<f64>,
    phi_end: f64,
}

impl FreeWaveEvaluator {
    pub fn zero() -> FreeWaveEvaluator {
        FreeWaveEvaluator {
            s0: 0.0,
            dr: 1.0,
            phi: vec![0.0; 4],
            dphi: vec![0.0; 4],
            phi_end: 0.0,
        }
    }

    fn interp(&self, samples: &[f64], s: f64, left: f64, right: f64) -> (f64, f64) {
        let n = samples.len();
        let x = (s - self.s0) / self.dr;
        if x <= 0.0 {
            return (left, 0.0);
        }
        if x >= (n - 1) as f64 {
            return (right, 0.0);
        }
        let j = (x.floor() as isize).clamp(0, n as isize - 2);
        let i0 = (j - 1).clamp(0, n as isize - 4) as usize;
        let xi = x - (i0 + 1) as f64;
        cubic4(
            [
                samples[i0],
                samples[i0 + 1],
                samples[i0 + 2],
                samples[i0 + 3],
            ],
            xi,
            self.dr,
        )
    }

    /// `φ(s)`; constant (0 resp. `φ_end`) outside the window.
    pub fn phi(&self, s: f64) -> f64 {
        self.interp(&self.phi, s, 0.0, self.phi_end).0
    }

    /// `φ'(s) = G(-s)`, zero-extended.
    pub fn dphi(&self, s: f64) -> f64 {
        self.interp(&self.dphi, s, 0.0, 0.0).0
    }

    fn ddphi(&self, s: f64) -> f64 {
        self.interp(&self.dphi, s, 0.0, 0.0).1
    }

    /// `(u, u_t, u_r)` at `(r, t)`.
    pub fn eval(&self, r: f64, t: f64) -> (f64, f64, f64) {
        if r.abs() < 1e-4 {
            return (-2.0 * self.dphi(t), -2.0 * self.ddphi(t), 0.0);
        }
        let (pm, pp) = (self.phi(t - r), self.phi(t + r));
        let (dm, dp) = (self.dphi(t - r), self.dphi(t + r));
        let u = (pm - pp) / r;
        let ut = (dm - dp) / r;
        let ur = (-dm - dp) / r - (pm - pp) / (r * r);
        (u, ut, ur)
    }
}

fn cubic4(w: [f64; 4], xi: f64, h: f64) -> (f64, f64) {
    let l0 = -xi * (xi - 1.0) * (xi - 2.0) / 6.0;
    let l1 = (xi + 1.0) * (xi - 1.0) * (xi - 2.0) / 2.0;
    let l2 = -(xi + 1.0) * xi * (xi - 2.0) / 2.0;
    let l3 = (xi + 1.0) * xi * (xi - 1.0) / 6.0;
    let value = w[0] * l0 + w[1] * l1 + w[2] * l2 + w[3] * l3;
    let d0 = -(3.0 * xi * xi - 6.0 * xi + 2.0) / 6.0;
    let d1 = (3.0 * xi * xi - 4.0 * xi - 1.0) / 2.0;
    let d2 = -(3.0 * xi * xi - 2.0 * xi - 2.0) / 2.0;
    let d3 = (3.0 * xi * xi - 1.0) / 6.0;
    (value, (w[0] * d0 + w[1] * d1 + w[2] * d2 + w[3] * d3) / h)
}

/// Builds the free wave whose radiation profile is `G` (radial d = 3 only).
/// `φ` is the cumulative trapezoid of `G(-s)` from the right end of the
/// window, so `φ -> 0` ahead of the wave.
pub fn free_wave_from_g_radial3d(
    estimate: &RadiationFieldEstimate,
) -> Result<FreeWaveEvaluator, RadiationError> {
    if estimate.d != 3 || estimate.n_theta() != 1 {
        return Err(RadiationError::NotRadial3d);
    }
    let n = estimate.n_r;
    // s-grid: s = -R2 .. -R1; φ'(s) = G(-s) = G(R2 - k dr)
    let s0 = -estimate.window.1;
    let mut dphi = vec![0.0; n];
    for (k, slot) in dphi.iter_mut().enumerate() {
        *slot = estimate.g_radial(n - 1 - k);
    }
    let mut phi = vec![0.0; n];
    for k in 1..n {
        phi[k] = phi[k - 1] + 0.5 * estimate.dr * (dphi[k - 1] + dphi[k]);
    }
    Ok(FreeWaveEvaluator {
        s0,
        dr: estimate.dr,
        phi_end: phi[n - 1],
        phi,
        dphi,
    })
}

/// Comparator for the exterior scattering residual.
pub enum Comparator<'a> {
    FreeWave(&'a FreeWaveEvaluator),
    Profile(&'a RadiationFieldEstimate),
}

/// The main scattering measurement.
///
/// With a free-wave comparator (radial d = 3):
/// `∫_{|x| > t+R} (|∂_r(u - u_L)|² + |∂_t(u - u_L)|²) dx`.
///
/// With a profile comparator (all modes): the profile-residual form
/// `∫∫ (|g_t - G|² + |ĝ_t + G|²) dθ dR + ∫_shell |∇̸u|² dx` over the
/// estimate's window.
pub fn exterior_scattering_residual(
    state: &FieldState,
    grid: &GridSpec,
    comparator: &Comparator<'_>,
    r_offset: f64,
) -> Result<f64, RadiationError> {
    match comparator {
        Comparator::FreeWave(eval) => {
            if !matches!(grid.mode, GridMode::Radial { d: 3 }) {
                return Err(RadiationError::NotRadial3d);
            }
            let mut diff = FieldState::zero(grid);
            diff.t = state.t;
            for i in 0..grid.n {
                let (ul, ult, _) = eval.eval(grid.radius(i), state.t);
                diff.u[i] = state.u[i] - ul;
                diff.ut[i] = state.ut[i] - ult;
            }
            Ok(region_integral(
                &diff,
                grid,
                &RegionSpec::Exterior { r: r_offset },
                Density::FreeH1,
                1.0,
            )?)
        }
        Comparator::Profile(est) => {
            let profile = sample_profile(state, grid, est.window, &est.sphere)?;
            if profile.n_r != est.n_r {
                return Err(RadiationError::MismatchedProfiles);
            }
            let nt = est.n_theta();
            let mut sum = 0.0;
            for ir in 0..est.n_r {
                for jt in 0..nt {
                    let idx = ir * nt + jt;
                    let dg = profile.g[idx] - est.g[idx];
                    let dgh = profile.ghat[idx] + est.g[idx];
                    sum += est.quad_weight(ir, jt) * (dg * dg + dgh * dgh);
                }
            }
            let angular = region_integral(
                state,
                grid,
                &RegionSpec::Shell {
                    r1: est.window.0,
                    r2: est.window.1,
                },
                Density::AngularSq,
                1.0,
            )?;
            Ok(sum + angular)
        }
    }
}
