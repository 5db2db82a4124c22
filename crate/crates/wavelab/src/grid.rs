//! Grids, field storage, discrete differential operators, interpolation and
//! region-restricted quadrature shared by the solver and every diagnostic.
//!
//! Two grid modes exist: a radial grid for dimensions 3-5 (samples on
//! `r_i = i h`, including the origin) and a cubic Cartesian grid for d = 3.
//! All regions are time-dependent radial sets evaluated at a state's time:
//! exterior `{|x| > t+R}`, shell `{t+R1 < |x| < t+R2}` and ball
//! `{|x| < t+R}`. Region boundaries cut grid cells with linear fraction
//! weighting so that integrals are smooth functions of `t` and the
//! ball/shell/exterior partition sums exactly to the full-domain integral.

use std::f64::consts::PI;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("CFL violation: dt = {dt} exceeds limit {limit} (= {ratio} * h)")]
    Cfl { dt: f64, limit: f64, ratio: f64 },
    #[error("point {0} outside grid")]
    OutOfDomain(String),
    #[error("unknown density name: {0}")]
    UnknownDensity(String),
    #[error("density `scattering_residual_pair` needs a comparator state; see radiation::exterior_scattering_residual")]
    NeedsComparator,
    #[error("state size {got} does not match grid ({want} nodes)")]
    SizeMismatch { got: usize, want: usize },
}

/// Grid flavour. The radial reduction covers d in {3,4,5}; the Cartesian
/// grid is fixed to d = 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    Radial { d: u32 },
    Cartesian3d,
}

impl GridMode {
    pub fn dim(&self) -> u32 {
        match self {
            GridMode::Radial { d } => *d,
            GridMode::Cartesian3d => 3,
        }
    }
}

impl FromStr for GridMode {
    type Err = GridError;
    fn from_str(s: &str) -> Result<Self, GridError> {
        match s {
            "radial" => Ok(GridMode::Radial { d: 3 }),
            "cartesian3d" => Ok(GridMode::Cartesian3d),
            other => Err(GridError::Invalid(format!("unknown grid mode {other:?}"))),
        }
    }
}

/// Stable `dt/h` bound times a 0.9 safety factor: 1 for the radial stencil,
/// `1/sqrt(3)` for the 7-point Cartesian stencil (von Neumann bound).
pub fn cfl_limit(mode: GridMode) -> f64 {
    match mode {
        GridMode::Radial { .. } => 0.9,
        GridMode::Cartesian3d => 0.9 / 3.0_f64.sqrt(),
    }
}

/// Validated discretization. `extent` is `r_max` in radial mode and the
/// half-box `L` in Cartesian mode; in both cases `h * (n - 1)` spans the
/// full axis (`r_max` resp. `2L`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub mode: GridMode,
    pub h: f64,
    pub n: usize,
    pub dt: f64,
}

impl GridSpec {
    /// `r_max` (radial) or half-box `L` (cartesian).
    pub fn extent(&self) -> f64 {
        match self.mode {
            GridMode::Radial { .. } => self.h * (self.n - 1) as f64,
            GridMode::Cartesian3d => 0.5 * self.h * (self.n - 1) as f64,
        }
    }

    pub fn node_count(&self) -> usize {
        match self.mode {
            GridMode::Radial { .. } => self.n,
            GridMode::Cartesian3d => self.n * self.n * self.n,
        }
    }

    pub fn radius(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    /// Axis coordinate of index `i` in Cartesian mode.
    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.extent() + i as f64 * self.h
    }

    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let n = self.n;
        let ix = idx % n;
        let iy = (idx / n) % n;
        let iz = idx / (n * n);
        [
            self.axis_coord(ix),
            self.axis_coord(iy),
            self.axis_coord(iz),
        ]
    }

    pub fn index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        ix + self.n * (iy + self.n * iz)
    }
}

/// Builds and validates a grid. `extent` is rounded to a whole number of
/// cells; the CFL bound is enforced here, carrying the limit in the error.
pub fn make_grid(mode: GridMode, h: f64, extent: f64, dt: f64) -> Result<GridSpec, GridError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(GridError::Invalid(format!("h must be positive, got {h}")));
    }
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(GridError::Invalid(format!(
            "extent must be positive, got {extent}"
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(GridError::Invalid(format!("dt must be positive, got {dt}")));
    }
    if let GridMode::Radial { d } = mode {
        if !(3..=5).contains(&d) {
            return Err(GridError::Invalid(format!(
                "radial mode supports d in {{3,4,5}}, got {d}"
            )));
        }
    }
    let axis_span = match mode {
        GridMode::Radial { .. } => extent,
        GridMode::Cartesian3d => 2.0 * extent,
    };
    let cells = (axis_span / h).round() as usize;
    if cells < 8 {
        return Err(GridError::Invalid(format!(
            "grid too small: {cells} cells along the axis"
        )));
    }
    let ratio = cfl_limit(mode);
    let limit = ratio * h;
    if dt > limit * (1.0 + 1e-12) {
        return Err(GridError::Cfl { dt, limit, ratio });
    }
    Ok(GridSpec {
        mode,
        h,
        n: cells + 1,
        dt,
    })
}

/// Discretized `(u, u_t)` at a time stamp. Layout is axis-major in
/// Cartesian mode: `idx = ix + n*(iy + n*iz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub u: Vec<f64>,
    pub ut: Vec<f64>,
    pub t: f64,
}

impl FieldState {
    pub fn zero(grid: &GridSpec) -> FieldState {
        FieldState {
            u: vec![0.0; grid.node_count()],
            ut: vec![0.0; grid.node_count()],
            t: 0.0,
        }
    }

    pub fn check_size(&self, grid: &GridSpec) -> Result<(), GridError> {
        let want = grid.node_count();
        if self.u.len() != want || self.ut.len() != want {
            return Err(GridError::SizeMismatch {
                got: self.u.len(),
                want,
            });
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.u.iter().chain(self.ut.iter()).all(|v| v.is_finite())
    }
}

/// Time-dependent radial region, evaluated at a state's `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionSpec {
    /// `{|x| > t + r}`
    Exterior { r: f64 },
    /// `{t + r1 < |x| < t + r2}`, requires `r1 < r2`
    Shell { r1: f64, r2: f64 },
    /// `{|x| < t + r}`
    Ball { r: f64 },
}

impl RegionSpec {
    /// Radial bounds `[lo, hi)` at time `t`; `hi = +inf` for the exterior.
    pub fn bounds_at(&self, t: f64) -> (f64, f64) {
        match *self {
            RegionSpec::Exterior { r } => (t + r, f64::INFINITY),
            RegionSpec::Shell { r1, r2 } => (t + r1, t + r2),
            RegionSpec::Ball { r } => (f64::NEG_INFINITY, t + r),
        }
    }
}

/// Area of the unit sphere `S^{d-1}`: `4π`, `2π²`, `8π²/3` for d = 3,4,5.
pub fn sphere_area(d: u32) -> f64 {
    match d {
        3 => 4.0 * PI,
        4 => 2.0 * PI * PI,
        5 => 8.0 * PI * PI / 3.0,
        _ => panic!("sphere_area: unsupported dimension {d}"),
    }
}

/// Named integrand for region quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Density {
    /// `½|∇u|² + ½u_t² + |u|^{p+1}/(p+1)`
    Energy,
    /// `½|∇u|² + ½u_t²` (free-wave energy, no potential term)
    LinearEnergy,
    /// `½u_t²`
    Kinetic,
    /// `½|∇u|²`
    Gradient,
    /// `|u|^{p+1}/(p+1)`
    Potential,
    /// `|u|^{p+1}`
    LpMass,
    /// `|u_r + (d-1)/2 · u/|x| + u_t|² + (d-1)(d-3)/16 · u²/|x|² + |∇̸u|²`
    Morawetz,
    /// `|∇u|² + u_t²` (no halves; the interior energy of the cutoff wave)
    FreeH1,
    /// `u_t²`
    UtSquared,
    /// `|∇̸u|²` (identically zero in radial mode)
    AngularSq,
    /// Placeholder for the two-state residual density; rejected by
    /// `region_integral`, handled by the radiation module.
    ScatteringResidualPair,
}

impl FromStr for Density {
    type Err = GridError;
    fn from_str(s: &str) -> Result<Self, GridError> {
        match s {
            "energy" => Ok(Density::Energy),
            "kinetic" => Ok(Density::Kinetic),
            "gradient" => Ok(Density::Gradient),
            "potential" => Ok(Density::Potential),
            "lp_mass" => Ok(Density::LpMass),
            "morawetz" => Ok(Density::Morawetz),
            "scattering_residual_pair" => Ok(Density::ScatteringResidualPair),
            other => Err(GridError::UnknownDensity(other.to_string())),
        }
    }
}

/// Second-order discrete Laplacian.
///
/// Radial: `u_rr + (d-1)/r u_r` at interior nodes with the origin rule
/// `Δu(0) = 2d (u(h) - u(0)) / h²` from even symmetry. Cartesian: the
/// 7-point stencil. The outermost ring is the Dirichlet boundary and is
/// set to zero.
pub fn laplacian(state: &FieldState, grid: &GridSpec) -> Vec<f64> {
    let mut out = vec![0.0; grid.node_count()];
    laplacian_into(&state.u, grid, &mut out);
    out
}

pub fn laplacian_into(u: &[f64], grid: &GridSpec, out: &mut [f64]) {
    let h2 = grid.h * grid.h;
    match grid.mode {
        GridMode::Radial { d } => {
            let n = grid.n;
            let dm1 = (d - 1) as f64;
            out[0] = 2.0 * d as f64 * (u[1] - u[0]) / h2;
            for i in 1..n - 1 {
                let r = grid.radius(i);
                out[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / h2
                    + dm1 / r * (u[i + 1] - u[i - 1]) / (2.0 * grid.h);
            }
            out[n - 1] = 0.0;
        }
        GridMode::Cartesian3d => {
            let n = grid.n;
            let nn = n * n;
            out[..nn].fill(0.0);
            out[(n - 1) * nn..].fill(0.0);
            for iz in 1..n - 1 {
                for iy in 1..n - 1 {
                    let row = n * (iy + n * iz);
                    out[row] = 0.0;
                    out[row + n - 1] = 0.0;
                    for ix in 1..n - 1 {
                        let c = row + ix;
                        out[c] = (u[c - 1] + u[c + 1] + u[c - n] + u[c + n] + u[c - nn]
                            + u[c + nn]
                            - 6.0 * u[c])
                            / h2;
                    }
                }
                // y faces of this z-slice
                let base = n * n * iz;
                out[base..base + n].fill(0.0);
                out[base + n * (n - 1)..base + nn].fill(0.0);
            }
        }
    }
}

/// Nodal radial derivative by centered differences; `u_r(0) = 0` from even
/// symmetry and a second-order one-sided stencil at the outer edge.
pub fn radial_derivative(u: &[f64], grid: &GridSpec) -> Vec<f64> {
    let n = grid.n;
    let h = grid.h;
    let mut ur = vec![0.0; n];
    ur[0] = 0.0;
    for i in 1..n - 1 {
        ur[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
    }
    if n >= 3 {
        ur[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
    }
    ur
}

/// Gradient at a Cartesian node by centered differences (one-sided on the
/// faces).
fn cart_gradient(u: &[f64], grid: &GridSpec, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
    let n = grid.n;
    let h = grid.h;
    let idx = grid.index(ix, iy, iz);
    // centered interior, one-sided on the outermost faces
    let diff = |lo: usize, hi: usize| -> f64 { (u[hi] - u[lo]) / (2.0 * h) };
    let gx = if ix == 0 {
        (u[idx + 1] - u[idx]) / h
    } else if ix == n - 1 {
        (u[idx] - u[idx - 1]) / h
    } else {
        diff(idx - 1, idx + 1)
    };
    let gy = if iy == 0 {
        (u[idx + n] - u[idx]) / h
    } else if iy == n - 1 {
        (u[idx] - u[idx - n]) / h
    } else {
        diff(idx - n, idx + n)
    };
    let nn = n * n;
    let gz = if iz == 0 {
        (u[idx + nn] - u[idx]) / h
    } else if iz == n - 1 {
        (u[idx] - u[idx - nn]) / h
    } else {
        diff(idx - nn, idx + nn)
    };
    [gx, gy, gz]
}

/// Integral of the piecewise-linear interpolant of uniformly sampled `g`
/// (spacing `h`, starting at 0) over `[a, b]`, clamped to the sample range.
/// Partial cells at the ends use the exact integral of the linear segment,
/// which is what makes region partitions sum exactly.
pub fn trapz_interval(g: &[f64], h: f64, a: f64, b: f64) -> f64 {
    let n = g.len();
    if n < 2 {
        return 0.0;
    }
    let hi_lim = (n - 1) as f64 * h;
    let a = a.max(0.0);
    let b = b.min(hi_lim);
    if a >= b {
        return 0.0;
    }
    let eval = |x: f64| -> f64 {
        let j = ((x / h).floor() as usize).min(n - 2);
        let s = x / h - j as f64;
        g[j] * (1.0 - s) + g[j + 1] * s
    };
    let ja = (a / h).floor() as usize;
    let jb = ((b / h).ceil() as usize).min(n - 1);
    if jb <= ja + 1 {
        // both ends in one cell
        return 0.5 * (eval(a) + eval(b)) * (b - a);
    }
    let xa_next = (ja + 1) as f64 * h;
    let xb_prev = (jb - 1) as f64 * h;
    let mut total = 0.5 * (eval(a) + g[ja + 1]) * (xa_next - a);
    for j in ja + 1..jb - 1 {
        total += 0.5 * (g[j] + g[j + 1]) * h;
    }
    total += 0.5 * (g[jb - 1] + eval(b)) * (b - xb_prev);
    total
}

/// Linear partial-cell weight of a node at radius `r` for the region,
/// ramping over one cell width around each cut. Ball + shell + exterior
/// weights for matching cuts sum exactly to 1 at every node.
fn region_weight(region: &RegionSpec, t: f64, r: f64, h: f64) -> f64 {
    let ramp = |cut: f64| -> f64 { ((r - cut) / h + 0.5).clamp(0.0, 1.0) };
    match *region {
        RegionSpec::Exterior { r: off } => ramp(t + off),
        RegionSpec::Ball { r: off } => 1.0 - ramp(t + off),
        RegionSpec::Shell { r1, r2 } => ramp(t + r1) - ramp(t + r2),
    }
}

pub fn defocusing_power(u: f64, p: f64) -> f64 {
    // |u|^{p-1} u as sign(u)|u|^p; exact zero at u = 0.
    if u == 0.0 {
        0.0
    } else {
        u.signum() * u.abs().powf(p)
    }
}

pub fn potential_density(u: f64, p: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.abs().powf(p + 1.0) / (p + 1.0)
    }
}

struct RadialScratch {
    ur: Vec<f64>,
}

fn radial_density(
    state: &FieldState,
    grid: &GridSpec,
    scratch: &RadialScratch,
    i: usize,
    density: Density,
    p: f64,
    d: u32,
) -> f64 {
    let u = state.u[i];
    let ut = state.ut[i];
    let ur = scratch.ur[i];
    match density {
        Density::Energy => 0.5 * ur * ur + 0.5 * ut * ut + potential_density(u, p),
        Density::LinearEnergy => 0.5 * ur * ur + 0.5 * ut * ut,
        Density::Kinetic => 0.5 * ut * ut,
        Density::Gradient => 0.5 * ur * ur,
        Density::Potential => potential_density(u, p),
        Density::LpMass => u.abs().powf(p + 1.0),
        Density::FreeH1 => ur * ur + ut * ut,
        Density::UtSquared => ut * ut,
        Density::AngularSq => 0.0,
        Density::Morawetz => {
            let r = grid.radius(i);
            let dm1 = (d - 1) as f64;
            let coeff = dm1 * (d as f64 - 3.0) / 16.0;
            if i == 0 {
                // handled by the caller through the r^{d-1} weight limit
                0.0
            } else {
                let a = ur + 0.5 * dm1 * u / r + ut;
                a * a + coeff * u * u / (r * r)
            }
        }
        Density::ScatteringResidualPair => f64::NAN,
    }
}

/// Quadrature of a named density over a region at the state's time.
///
/// Radial mode: composite trapezoid of `density * σ_{d-1} r^{d-1}` with
/// linear partial cells at the region boundary. Cartesian mode: cell sums
/// with linear fraction weights at the boundary.
pub fn region_integral(
    state: &FieldState,
    grid: &GridSpec,
    region: &RegionSpec,
    density: Density,
    p: f64,
) -> Result<f64, GridError> {
    region_integral_weighted(state, grid, region, density, p, |_| 1.0)
}

/// Same as [`region_integral`] with an extra radial weight `w(|x|)`
/// multiplying the density (used by the weighted energy).
pub fn region_integral_weighted(
    state: &FieldState,
    grid: &GridSpec,
    region: &RegionSpec,
    density: Density,
    p: f64,
    weight: impl Fn(f64) -> f64,
) -> Result<f64, GridError> {
    state.check_size(grid)?;
    if density == Density::ScatteringResidualPair {
        return Err(GridError::NeedsComparator);
    }
    match grid.mode {
        GridMode::Radial { d } => {
            let n = grid.n;
            let sigma = sphere_area(d);
            let scratch = RadialScratch {
                ur: radial_derivative(&state.u, grid),
            };
            let mut g = vec![0.0; n];
            for i in 0..n {
                let r = grid.radius(i);
                let rw = r.powi(d as i32 - 1);
                g[i] = radial_density(state, grid, &scratch, i, density, p, d)
                    * sigma
                    * rw
                    * weight(r);
            }
            if density == Density::Morawetz {
                // r -> 0 limit of the singular factors against r^{d-1}:
                // only d = 3 leaves a finite contribution, sigma * u(0)^2.
                g[0] = if d == 3 {
                    sigma * state.u[0] * state.u[0] * weight(0.0)
                } else {
                    0.0
                };
            }
            let (lo, hi) = region.bounds_at(state.t);
            Ok(trapz_interval(&g, grid.h, lo, hi.min(grid.extent())))
        }
        GridMode::Cartesian3d => {
            let n = grid.n;
            let h = grid.h;
            let cell = h * h * h;
            let coeff = {
                let d = 3.0;
                (d - 1.0) * (d - 3.0) / 16.0
            };
            let mut total = 0.0;
            for iz in 0..n {
                let z = grid.axis_coord(iz);
                for iy in 0..n {
                    let y = grid.axis_coord(iy);
                    let row = grid.index(0, iy, iz);
                    for ix in 0..n {
                        let x = grid.axis_coord(ix);
                        let r = (x * x + y * y + z * z).sqrt();
                        let wreg = region_weight(region, state.t, r, h);
                        if wreg == 0.0 {
                            continue;
                        }
                        let idx = row + ix;
                        let u = state.u[idx];
                        let ut = state.ut[idx];
                        let val = match density {
                            Density::Kinetic => 0.5 * ut * ut,
                            Density::Potential => potential_density(u, p),
                            Density::LpMass => u.abs().powf(p + 1.0),
                            Density::UtSquared => ut * ut,
                            _ => {
                                let gvec = cart_gradient(&state.u, grid, ix, iy, iz);
                                let g2 = gvec[0] * gvec[0] + gvec[1] * gvec[1] + gvec[2] * gvec[2];
                                match density {
                                    Density::Energy => {
                                        0.5 * g2 + 0.5 * ut * ut + potential_density(u, p)
                                    }
                                    Density::LinearEnergy => 0.5 * g2 + 0.5 * ut * ut,
                                    Density::Gradient => 0.5 * g2,
                                    Density::FreeH1 => g2 + ut * ut,
                                    Density::AngularSq => {
                                        if r < h {
                                            0.0
                                        } else {
                                            let radial = (x * gvec[0] + y * gvec[1] + z * gvec[2]) / r;
                                            (g2 - radial * radial).max(0.0)
                                        }
                                    }
                                    Density::Morawetz => {
                                        if r < h {
                                            ut * ut
                                        } else {
                                            let radial =
                                                (x * gvec[0] + y * gvec[1] + z * gvec[2]) / r;
                                            let ang = (g2 - radial * radial).max(0.0);
                                            let a = radial + u / r + ut;
                                            a * a + coeff * u * u / (r * r) + ang
                                        }
                                    }
                                    _ => unreachable!(),
                                }
                            }
                        };
                        total += val * weight(r) * wreg * cell;
                    }
                }
            }
            Ok(total)
        }
    }
}

/// Cubic Lagrange on four consecutive samples; `xi` is measured from the
/// second sample in units of `h`. Returns the value and the `d/dx`
/// derivative (already divided by `h`).
fn cubic_lagrange(w: [f64; 4], xi: f64, h: f64) -> (f64, f64) {
    // nodes at xi = -1, 0, 1, 2
    let l0 = -xi * (xi - 1.0) * (xi - 2.0) / 6.0;
    let l1 = (xi + 1.0) * (xi - 1.0) * (xi - 2.0) / 2.0;
    let l2 = -(xi + 1.0) * xi * (xi - 2.0) / 2.0;
    let l3 = (xi + 1.0) * xi * (xi - 1.0) / 6.0;
    let value = w[0] * l0 + w[1] * l1 + w[2] * l2 + w[3] * l3;

    let d0 = -(3.0 * xi * xi - 6.0 * xi + 2.0) / 6.0;
    let d1 = (3.0 * xi * xi - 4.0 * xi - 1.0) / 2.0;
    let d2 = -(3.0 * xi * xi - 2.0 * xi - 2.0) / 2.0;
    let d3 = (3.0 * xi * xi - 1.0) / 6.0;
    let deriv = (w[0] * d0 + w[1] * d1 + w[2] * d2 + w[3] * d3) / h;
    (value, deriv)
}

/// Window of four radial samples around `x = r/h`, using even reflection
/// across the origin so the interpolant respects radial regularity.
fn radial_window(u: &[f64], x: f64, n: usize) -> ([f64; 4], f64) {
    let j = (x.floor() as isize).clamp(0, n as isize - 2);
    let grab = |k: isize| -> f64 {
        let k = if k < 0 { -k } else { k } as usize; // even reflection
        u[k.min(n - 1)]
    };
    if j as usize >= n - 2 {
        // shift the window down so all four nodes exist
        let base = n as isize - 3;
        let xi = x - base as f64;
        (
            [grab(base - 1), grab(base), grab(base + 1), grab(base + 2)],
            xi,
        )
    } else {
        let xi = x - j as f64;
        ([grab(j - 1), grab(j), grab(j + 1), grab(j + 2)], xi)
    }
}

/// Cubic interpolation of `(u, u_t, ∂_r u)` at radius `r` in radial mode.
pub fn interp_radial(
    state: &FieldState,
    grid: &GridSpec,
    r: f64,
) -> Result<(f64, f64, f64), GridError> {
    if !matches!(grid.mode, GridMode::Radial { .. }) {
        return Err(GridError::Invalid(
            "interp_radial requires a radial grid".into(),
        ));
    }
    let rmax = grid.extent();
    if !(0.0..=rmax * (1.0 + 1e-12)).contains(&r) {
        return Err(GridError::OutOfDomain(format!("r = {r}")));
    }
    let x = (r / grid.h).min((grid.n - 1) as f64);
    let (wu, xi) = radial_window(&state.u, x, grid.n);
    let (wt, _) = radial_window(&state.ut, x, grid.n);
    let (u, du) = cubic_lagrange(wu, xi, grid.h);
    let (ut, _) = cubic_lagrange(wt, xi, grid.h);
    Ok((u, ut, du))
}

/// Tricubic interpolation of `(u, u_t, ∇u)` at a Cartesian point.
pub fn interp_cartesian(
    state: &FieldState,
    grid: &GridSpec,
    pt: [f64; 3],
) -> Result<(f64, f64, [f64; 3]), GridError> {
    if grid.mode != GridMode::Cartesian3d {
        return Err(GridError::Invalid(
            "interp_cartesian requires a cartesian grid".into(),
        ));
    }
    let ext = grid.extent();
    for c in pt {
        if !(-ext..=ext).contains(&c) || !c.is_finite() {
            return Err(GridError::OutOfDomain(format!("{pt:?}")));
        }
    }
    let n = grid.n;
    // base index of the 4-node window on each axis, clamped inside
    let locate = |c: f64| -> (usize, f64) {
        let x = (c + ext) / grid.h;
        let j = (x.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        (j, x - (j + 1) as f64)
    };
    let (jx, xix) = locate(pt[0]);
    let (jy, xiy) = locate(pt[1]);
    let (jz, xiz) = locate(pt[2]);

    let mut vals = [[0.0; 4]; 4]; // [z][y] values after x-interp
    let mut dxs = [[0.0; 4]; 4];
    let mut uts = [[0.0; 4]; 4];
    for kz in 0..4 {
        for ky in 0..4 {
            let base = grid.index(jx, jy + ky, jz + kz);
            let wu = [
                state.u[base],
                state.u[base + 1],
                state.u[base + 2],
                state.u[base + 3],
            ];
            let wt = [
                state.ut[base],
                state.ut[base + 1],
                state.ut[base + 2],
                state.ut[base + 3],
            ];
            let (v, dv) = cubic_lagrange(wu, xix, grid.h);
            let (vt, _) = cubic_lagrange(wt, xix, grid.h);
            vals[kz][ky] = v;
            dxs[kz][ky] = dv;
            uts[kz][ky] = vt;
        }
    }
    let mut vz = [0.0; 4];
    let mut dxz = [0.0; 4];
    let mut dyz = [0.0; 4];
    let mut utz = [0.0; 4];
    for kz in 0..4 {
        let (v, dy) = cubic_lagrange(vals[kz], xiy, grid.h);
        let (dx, _) = cubic_lagrange(dxs[kz], xiy, grid.h);
        let (vt, _) = cubic_lagrange(uts[kz], xiy, grid.h);
        vz[kz] = v;
        dyz[kz] = dy;
        dxz[kz] = dx;
        utz[kz] = vt;
    }
    let (u, gz) = cubic_lagrange(vz, xiz, grid.h);
    let (gx, _) = cubic_lagrange(dxz, xiz, grid.h);
    let (gy, _) = cubic_lagrange(dyz, xiz, grid.h);
    let (ut, _) = cubic_lagrange(utz, xiz, grid.h);
    Ok((u, ut, [gx, gy, gz]))
}

/// Quadrature nodes and weights on `S^{d-1}`.
///
/// For d = 3 this is a Gauss-Legendre x uniform-azimuth product grid,
/// exact for spherical harmonics up to `exact_degree`. The radial modes
/// collapse the sphere to a single node carrying the full area, which is
/// exact for radial integrands.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub dirs: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exact_degree: u32,
}

impl SphereGrid {
    /// Single-node grid carrying the full sphere area (radial collapse).
    pub fn radial_collapse(d: u32) -> SphereGrid {
        SphereGrid {
            dirs: vec![[1.0, 0.0, 0.0]],
            weights: vec![sphere_area(d)],
            exact_degree: 0,
        }
    }

    /// Gauss-Legendre polar nodes x uniform azimuth. Default diagnostics
    /// use 32 x 64.
    pub fn gauss_product(n_polar: usize, n_azimuth: usize) -> SphereGrid {
        let (nodes, gw) = gauss_legendre(n_polar);
        let dphi = 2.0 * PI / n_azimuth as f64;
        let mut dirs = Vec::with_capacity(n_polar * n_azimuth);
        let mut weights = Vec::with_capacity(n_polar * n_azimuth);
        for (ct, w) in nodes.iter().zip(gw.iter()) {
            let st = (1.0 - ct * ct).max(0.0).sqrt();
            for k in 0..n_azimuth {
                let phi = dphi * (k as f64 + 0.5);
                dirs.push([st * phi.cos(), st * phi.sin(), *ct]);
                weights.push(w * dphi);
            }
        }
        SphereGrid {
            dirs,
            weights,
            exact_degree: (2 * n_polar as u32 - 1).min(n_azimuth as u32 - 1),
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Legendre P_n(x) and derivative by recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (mut p0, mut p1) = (1.0, x);
        for k in 2..=n {
            let kf = k as f64;
            let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}
