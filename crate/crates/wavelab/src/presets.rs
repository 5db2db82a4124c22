//! Preset experiments chaining the modules into the pipelines the
//! acceptance suite measures, plus the generic config-driven experiment
//! runner behind the CLI subcommands. All outputs are deterministic CSV
//! series plus a checksummed manifest.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{ConfigError, Validated};
use crate::csvout::{CsvValue, CsvWriter};
use crate::decomposition::{
    run_decomposition, DecompositionConfig, DecompositionError, DecompositionReport,
};
use crate::diagnostics::{
    exterior_energy, morawetz_report, total_energy, DiagnosticsError, FluxLedger,
    MixedNormAccumulator, NormIntegrand, ShellLpMass,
};
use crate::exponents::{
    check_admissible, critical_exponent, display_q, lemma_pair, lower_exponent,
    rational_lattice, ExtQ, Q,
};
use crate::grid::{
    make_grid, region_integral, Density, FieldState, GridMode, GridSpec, RegionSpec, SphereGrid,
};
use crate::manifest::{ManifestError, RunManifest};
use crate::radiation::{
    exterior_scattering_residual, extract_g, free_wave_from_g_radial3d, sample_profile,
    CharacteristicProfile, Comparator, FreeWaveEvaluator, RadiationError,
    RadiationFieldEstimate,
};
use crate::solver::{
    init_from_data, run_from, InitialData, ProblemSpec, RunConfig, Scheme, SolverError,
    StepReport,
};

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset {0:?} (exponent-table | linear-validate | exterior-scattering | decomposition-study)")]
    Unknown(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Radiation(#[from] RadiationError),
    #[error(transparent)]
    Decomposition(#[from] DecompositionError),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

// ---------------------------------------------------------------------------
// exterior-scattering pipeline (radial d = 3)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ScatteringParams {
    pub h: f64,
    pub dt: f64,
    pub rmax: f64,
    pub t_end: f64,
    pub p: f64,
    pub scheme: Scheme,
    pub amplitude: f64,
    pub offsets: Vec<f64>,
    pub shell: (f64, f64),
    pub window: (f64, f64),
    pub profile_times: Vec<f64>,
    pub residual_times: Vec<f64>,
    pub residual_offset: f64,
    pub observe_every: usize,
    pub margin: f64,
}

impl Default for ScatteringParams {
    fn default() -> Self {
        ScatteringParams {
            h: 0.02,
            dt: 0.01,
            rmax: 40.0,
            t_end: 12.0,
            p: 4.0,
            scheme: Scheme::Conservative,
            amplitude: 1.0,
            offsets: vec![-2.0, 0.0, 2.0, 4.0],
            shell: (0.0, 2.0),
            window: (-4.0, 4.0),
            profile_times: vec![3.0, 6.0, 12.0],
            residual_times: vec![6.0, 9.0, 12.0],
            residual_offset: -2.0,
            observe_every: 10,
            margin: 10.0,
        }
    }
}

impl ScatteringParams {
    pub fn refined(&self, factor: usize) -> ScatteringParams {
        ScatteringParams {
            h: self.h / factor as f64,
            dt: self.dt / factor as f64,
            observe_every: self.observe_every * factor,
            ..self.clone()
        }
    }
}

pub struct ScatteringArtifacts {
    pub grid: GridSpec,
    pub problem: ProblemSpec,
    /// Instantaneous trapezoid energy of the initial data.
    pub e0: f64,
    pub reports: Vec<StepReport>,
    pub ledgers: Vec<FluxLedger>,
    pub shell_mass: f64,
    pub profiles: Vec<CharacteristicProfile>,
    pub estimate: RadiationFieldEstimate,
    pub free_wave: FreeWaveEvaluator,
    /// `(t, residual)` of the main measurement at the requested times.
    pub residuals: Vec<(f64, f64)>,
    pub morawetz: Vec<(f64, f64)>,
    /// Rows `(t, shell_mass, l1l2, lpp1, lqlr)` at observer cadence.
    pub norm_rows: Vec<(f64, f64, f64, f64, f64)>,
    pub holder_lhs: f64,
    pub holder_rhs: f64,
}

/// The main radial pipeline: run, flux ledgers, shell norms, profile
/// extraction, free-wave reconstruction and scattering residuals.
pub fn exterior_scattering_pipeline(
    params: &ScatteringParams,
) -> Result<ScatteringArtifacts, PresetError> {
    let grid = make_grid(GridMode::Radial { d: 3 }, params.h, params.rmax, params.dt)?;
    let problem = ProblemSpec {
        p: params.p,
        nonlinear: true,
        scheme: params.scheme,
        data: InitialData::GaussianOdd {
            amplitude: params.amplitude,
            width: 1.0,
        },
        r_support: 4.0,
    };
    let run_cfg = RunConfig {
        t_end: params.t_end,
        observe_every: params.observe_every,
        margin: params.margin,
    };
    let max_t = crate::solver::causality_budget(&grid, problem.r_support, params.margin);
    if params.t_end > max_t + 1e-9 {
        return Err(PresetError::Solver(SolverError::Budget {
            t_end: params.t_end,
            max: max_t,
            extent: grid.extent(),
            support: problem.r_support,
            margin: params.margin,
        }));
    }

    let sphere = SphereGrid::radial_collapse(3);
    let init = init_from_data(&problem, &grid)?;
    let e0 = total_energy(&init, &grid, &problem)?.total;

    let mut ledgers: Vec<FluxLedger> = params.offsets.iter().map(|&r| FluxLedger::new(r)).collect();
    let mut shell_mass = ShellLpMass::new(params.shell.0, params.shell.1, problem.p);
    let shell_region = RegionSpec::Shell {
        r1: params.shell.0,
        r2: params.shell.1,
    };
    let (k1, k2, qq, rr) = {
        let (d, p) = (3.0, problem.p);
        let a = d * p - d - 2.0;
        let b = d + 2.0 + 2.0 * p - d * p;
        (
            (p + 1.0) * b / (b + 2.0),
            a / (b + 2.0),
            a / 2.0,
            2.0 * a / (d * p - 2.0 * p - d),
        )
    };
    let mut l1l2 = MixedNormAccumulator::new(
        1.0,
        2.0,
        shell_region,
        NormIntegrand::NonlinearU { p: problem.p },
    );
    let mut lpp1 = MixedNormAccumulator::new(
        problem.p + 1.0,
        problem.p + 1.0,
        shell_region,
        NormIntegrand::U,
    );
    let mut lqlr = MixedNormAccumulator::new(qq, rr, shell_region, NormIntegrand::U);

    let mut profiles: Vec<CharacteristicProfile> = Vec::new();
    let mut residual_states: Vec<FieldState> = Vec::new();
    let mut morawetz: Vec<(f64, f64)> = Vec::new();
    let mut norm_rows: Vec<(f64, f64, f64, f64, f64)> = Vec::new();

    let dt = grid.dt;
    let profile_levels: Vec<usize> = params
        .profile_times
        .iter()
        .map(|&t| (t / dt).round() as usize)
        .collect();
    let residual_levels: Vec<usize> = params
        .residual_times
        .iter()
        .map(|&t| (t / dt).round() as usize)
        .collect();

    let reports;
    {
        let ledgers = &mut ledgers;
        let shell_mass = &mut shell_mass;
        let profiles = &mut profiles;
        let residual_states = &mut residual_states;
        let morawetz = &mut morawetz;
        let norm_rows = &mut norm_rows;
        let l1l2 = &mut l1l2;
        let lpp1 = &mut lpp1;
        let lqlr = &mut lqlr;
        let grid_ref = &grid;
        let problem_ref = &problem;
        let sphere_ref = &sphere;
        let profile_levels = &profile_levels;
        let residual_levels = &residual_levels;
        let observe_every = params.observe_every.max(1);
        let window = params.window;

        let mut per_step = move |level: usize, state: &FieldState| -> Result<(), SolverError> {
            let wrap = |e: DiagnosticsError| SolverError::Observer(e.to_string());
            for ledger in ledgers.iter_mut() {
                ledger
                    .accumulate(state, grid_ref, problem_ref, sphere_ref)
                    .map_err(wrap)?;
            }
            shell_mass.add(state, grid_ref).map_err(wrap)?;

            let observed = level % observe_every == 0;
            if observed {
                for ledger in ledgers.iter_mut() {
                    ledger.record(state, grid_ref, problem_ref).map_err(wrap)?;
                }
                l1l2.add(state, grid_ref).map_err(wrap)?;
                lpp1.add(state, grid_ref).map_err(wrap)?;
                lqlr.add(state, grid_ref).map_err(wrap)?;
                morawetz.push((
                    state.t,
                    morawetz_report(state, grid_ref).map_err(wrap)?,
                ));
                norm_rows.push((
                    state.t,
                    shell_mass.value(),
                    l1l2.finalize().unwrap_or(0.0),
                    lpp1.finalize().unwrap_or(0.0),
                    lqlr.finalize().unwrap_or(0.0),
                ));
            }
            if profile_levels.contains(&level) {
                let p = sample_profile(state, grid_ref, window, sphere_ref)
                    .map_err(|e| SolverError::Observer(e.to_string()))?;
                profiles.push(p);
            }
            if residual_levels.contains(&level) {
                residual_states.push(state.clone());
            }
            Ok(())
        };

        let (_, reps) = run_from(
            &problem,
            &grid,
            &run_cfg,
            init,
            Some(&mut per_step),
            None,
        )?;
        reports = reps;
    }

    let estimate = extract_g(&profiles)?;
    let free_wave = free_wave_from_g_radial3d(&estimate)?;
    let mut residuals = Vec::new();
    for state in &residual_states {
        let res = exterior_scattering_residual(
            state,
            &grid,
            &Comparator::FreeWave(&free_wave),
            params.residual_offset,
        )?;
        residuals.push((state.t, res));
    }

    let holder_lhs = l1l2.finalize().unwrap_or(0.0);
    let holder_rhs = lpp1.finalize().unwrap_or(0.0).powf(k1) * lqlr.finalize().unwrap_or(0.0).powf(k2);

    Ok(ScatteringArtifacts {
        grid,
        problem,
        e0,
        reports,
        ledgers,
        shell_mass: shell_mass.value(),
        profiles,
        estimate,
        free_wave,
        residuals,
        morawetz,
        norm_rows,
        holder_lhs,
        holder_rhs,
    })
}

// ---------------------------------------------------------------------------
// linear validation pipeline
// ---------------------------------------------------------------------------

pub struct LinearValidation {
    /// `(h, max_err)` of the solution against the exact free wave at t = 5.
    pub convergence: Vec<(f64, f64)>,
    /// observed orders between consecutive grids
    pub orders: Vec<f64>,
    pub g_norm_sq: f64,
    pub e_lin: f64,
    pub isometry_rel: f64,
}

pub fn linear_validation_pipeline(hs: &[f64]) -> Result<LinearValidation, PresetError> {
    use crate::solver::{exact_free_wave_3d, GaussianOddProfile};
    let f = GaussianOddProfile {
        amplitude: 1.0,
        width: 1.0,
    };

    let mut convergence = Vec::new();
    for &h in hs {
        let grid = make_grid(GridMode::Radial { d: 3 }, h, 20.0, 0.5 * h)?;
        let problem = ProblemSpec {
            p: 4.0,
            nonlinear: false,
            scheme: Scheme::Leapfrog,
            data: InitialData::GaussianOdd {
                amplitude: 1.0,
                width: 1.0,
            },
            r_support: 4.0,
        };
        let cfg = RunConfig {
            t_end: 5.0,
            observe_every: 1_000_000,
            margin: 1.0,
        };
        let init = init_from_data(&problem, &grid)?;
        let (state, _) = run_from(&problem, &grid, &cfg, init, None, None)?;
        let mut emax = 0.0f64;
        for i in 0..grid.n {
            let r = grid.radius(i);
            if r > grid.extent() / 2.0 {
                break;
            }
            let (ue, _, _) = exact_free_wave_3d(&f, r, state.t);
            emax = emax.max((state.u[i] - ue).abs());
        }
        convergence.push((h, emax));
    }
    let orders: Vec<f64> = convergence
        .windows(2)
        .map(|w| (w[0].1 / w[1].1).log2() / (w[0].0 / w[1].0).log2())
        .collect();

    // isometry segment: long linear run, G over the full wave support
    let grid = make_grid(GridMode::Radial { d: 3 }, 0.02, 50.0, 0.01)?;
    let problem = ProblemSpec {
        p: 4.0,
        nonlinear: false,
        scheme: Scheme::Leapfrog,
        data: InitialData::GaussianOdd {
            amplitude: 1.0,
            width: 1.0,
        },
        r_support: 4.0,
    };
    let cfg = RunConfig {
        t_end: 20.0,
        observe_every: 1_000_000,
        margin: 6.0,
    };
    let sphere = SphereGrid::radial_collapse(3);
    let init = init_from_data(&problem, &grid)?;
    let e_lin = total_energy(&init, &grid, &problem)?.total;

    let mut profiles = Vec::new();
    {
        let profiles = &mut profiles;
        let grid_ref = &grid;
        let sphere_ref = &sphere;
        let levels: Vec<usize> = [8.0, 14.0, 20.0]
            .iter()
            .map(|&t| (t / grid.dt).round() as usize)
            .collect();
        let mut per_step = move |level: usize, state: &FieldState| -> Result<(), SolverError> {
            if levels.contains(&level) {
                profiles.push(
                    sample_profile(state, grid_ref, (-5.0, 5.0), sphere_ref)
                        .map_err(|e| SolverError::Observer(e.to_string()))?,
                );
            }
            Ok(())
        };
        run_from(&problem, &grid, &cfg, init, Some(&mut per_step), None)?;
    }
    let estimate = extract_g(&profiles)?;
    let isometry_rel = (estimate.l2_norm_sq - e_lin).abs() / e_lin;

    Ok(LinearValidation {
        convergence,
        orders,
        g_norm_sq: estimate.l2_norm_sq,
        e_lin,
        isometry_rel,
    })
}

// ---------------------------------------------------------------------------
// decomposition study pipeline
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DecompParams {
    pub h: f64,
    pub dt: f64,
    pub rmax: f64,
    pub t_end: f64,
    pub p: f64,
    pub releases: Vec<f64>,
    pub r1: f64,
    pub r2: f64,
    /// Exclusion layer for the identity residuals; `None` means 3h.
    pub layer: Option<f64>,
    pub observe_every: usize,
}

impl Default for DecompParams {
    fn default() -> Self {
        DecompParams {
            h: 0.02,
            dt: 0.01,
            rmax: 50.0,
            t_end: 20.0,
            p: 4.0,
            releases: vec![4.0, 8.0, 12.0, 16.0],
            r1: 0.0,
            r2: 2.0,
            layer: None,
            observe_every: 10,
        }
    }
}

pub fn decomposition_pipeline(
    params: &DecompParams,
) -> Result<Vec<DecompositionReport>, PresetError> {
    let grid = make_grid(GridMode::Radial { d: 3 }, params.h, params.rmax, params.dt)?;
    let problem = ProblemSpec {
        p: params.p,
        nonlinear: true,
        scheme: Scheme::Conservative,
        data: InitialData::GaussianOdd {
            amplitude: 1.0,
            width: 1.0,
        },
        r_support: 4.0,
    };
    let run_cfg = RunConfig {
        t_end: params.t_end,
        observe_every: params.observe_every,
        margin: params.r2 + 1.0,
    };
    let (d, p) = (3.0, params.p);
    let a = d * p - d - 2.0;
    let dcfg = DecompositionConfig {
        r1: params.r1,
        r2: params.r2,
        release_times: params.releases.clone(),
        layer: params.layer.unwrap_or(3.0 * params.h),
        observe_every: params.observe_every,
        strichartz_q: a / 2.0,
        strichartz_r: 2.0 * a / (d * p - 2.0 * p - d),
    };
    Ok(run_decomposition(&problem, &grid, &run_cfg, &dcfg)?)
}

// ---------------------------------------------------------------------------
// cartesian smoke pipeline (non-radial d = 3)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CartesianParams {
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub t_end: f64,
    pub amplitude: f64,
    pub width: f64,
    pub center: [f64; 3],
    pub support: f64,
    pub margin: f64,
    pub exterior_offset: f64,
    pub shell: (f64, f64),
    pub window: (f64, f64),
    pub profile_times: Vec<f64>,
    pub observe_every: usize,
    pub sphere_polar: usize,
    pub sphere_azimuth: usize,
}

impl Default for CartesianParams {
    fn default() -> Self {
        CartesianParams {
            n: 160,
            h: 0.2,
            dt: 0.03,
            t_end: 3.6,
            amplitude: 1.0,
            width: 1.0,
            center: [1.2, 0.6, 0.0],
            support: 5.9,
            margin: 2.5,
            // the monitored cone clears both bump centers at t = 0; a cone
            // born at radius zero sits inside the sources where the coarse
            // grid's O(h²) startup redistribution swamps the flux signal
            exterior_offset: 2.0,
            shell: (0.0, 2.0),
            window: (-2.0, 2.0),
            profile_times: vec![1.2, 2.4, 3.6],
            observe_every: 8,
            sphere_polar: 32,
            sphere_azimuth: 64,
        }
    }
}

pub struct CartesianArtifacts {
    pub grid: GridSpec,
    pub problem: ProblemSpec,
    pub e0: f64,
    pub reports: Vec<StepReport>,
    /// `(t, E_ext)` at observer cadence.
    pub e_ext: Vec<(f64, f64)>,
    /// `(t, ∫_shell |∇̸u|²)` at observer cadence.
    pub angular: Vec<(f64, f64)>,
    pub estimate: RadiationFieldEstimate,
    /// `(t, profile residual vs extracted G)` at the profile times.
    pub profile_residuals: Vec<(f64, f64)>,
}

pub fn cartesian_smoke_pipeline(
    params: &CartesianParams,
) -> Result<CartesianArtifacts, PresetError> {
    let extent = 0.5 * params.h * (params.n - 1) as f64;
    let grid = make_grid(GridMode::Cartesian3d, params.h, extent, params.dt)?;
    assert_eq!(grid.n, params.n, "extent rounding changed the grid size");
    let problem = ProblemSpec {
        p: 4.0,
        nonlinear: true,
        scheme: Scheme::Leapfrog,
        data: InitialData::OffsetBumps {
            amplitude: params.amplitude,
            width: params.width,
            center: params.center,
        },
        r_support: params.support,
    };
    let run_cfg = RunConfig {
        t_end: params.t_end,
        observe_every: params.observe_every,
        margin: params.margin,
    };
    crate::solver::set_compute_threads(
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1),
    );

    let sphere = SphereGrid::gauss_product(params.sphere_polar, params.sphere_azimuth);
    let init = init_from_data(&problem, &grid)?;
    let e0 = total_energy(&init, &grid, &problem)?.total;

    let mut e_ext = Vec::new();
    let mut angular = Vec::new();
    let mut profiles = Vec::new();
    let mut profile_states: Vec<FieldState> = Vec::new();
    let reports;
    {
        let e_ext = &mut e_ext;
        let angular = &mut angular;
        let profiles = &mut profiles;
        let profile_states = &mut profile_states;
        let grid_ref = &grid;
        let problem_ref = &problem;
        let sphere_ref = &sphere;
        let shell = RegionSpec::Shell {
            r1: params.shell.0,
            r2: params.shell.1,
        };
        let window = params.window;
        let offset = params.exterior_offset;
        let levels: Vec<usize> = params
            .profile_times
            .iter()
            .map(|&t| (t / grid.dt).round() as usize)
            .collect();

        let mut observer = move |level: usize,
                                 state: &FieldState,
                                 _rep: &StepReport|
              -> Result<(), SolverError> {
            let wrap = |e: DiagnosticsError| SolverError::Observer(e.to_string());
            e_ext.push((
                state.t,
                exterior_energy(state, grid_ref, problem_ref, offset).map_err(wrap)?,
            ));
            angular.push((
                state.t,
                region_integral(state, grid_ref, &shell, Density::AngularSq, problem_ref.p)
                    .map_err(|e| SolverError::Observer(e.to_string()))?,
            ));
            if levels.contains(&level) {
                profiles.push(
                    sample_profile(state, grid_ref, window, sphere_ref)
                        .map_err(|e| SolverError::Observer(e.to_string()))?,
                );
                profile_states.push(state.clone());
            }
            Ok(())
        };
        let (_, reps) = run_from(
            &problem,
            &grid,
            &run_cfg,
            init,
            None,
            Some(&mut observer),
        )?;
        reports = reps;
    }

    let estimate = extract_g(&profiles)?;
    let mut profile_residuals = Vec::new();
    for state in &profile_states {
        let res =
            exterior_scattering_residual(state, &grid, &Comparator::Profile(&estimate), 0.0)?;
        profile_residuals.push((state.t, res));
    }

    Ok(CartesianArtifacts {
        grid,
        problem,
        e0,
        reports,
        e_ext,
        angular,
        estimate,
        profile_residuals,
    })
}

// ---------------------------------------------------------------------------
// preset materialization (CSV + manifest)
// ---------------------------------------------------------------------------

/// Picks the profiles nearest to `t_end`, `t_end/2`, `t_end/4`, ... in
/// increasing time order (at least three when available).
fn doubling_ladder(profiles: &[CharacteristicProfile]) -> Vec<CharacteristicProfile> {
    let t_end = profiles.last().map(|p| p.t).unwrap_or(0.0);
    let mut picks: Vec<usize> = Vec::new();
    let mut target = t_end;
    while picks.len() < 4 && target > 0.0 {
        let idx = profiles
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1.t - target)
                    .abs()
                    .partial_cmp(&(b.1.t - target).abs())
                    .unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        if !picks.contains(&idx) {
            picks.push(idx);
        }
        target /= 2.0;
    }
    picks.sort_unstable();
    picks.dedup();
    if picks.len() < 3 {
        // too few distinct times near the ladder targets: spread evenly
        picks = vec![0, profiles.len() / 2, profiles.len() - 1];
        picks.dedup();
    }
    picks.into_iter().map(|i| profiles[i].clone()).collect()
}

fn offset_tag(r: f64) -> String {
    if (r - r.round()).abs() < 1e-12 {
        format!("{}", r.round() as i64)
    } else {
        format!("{r}")
    }
}

fn write_flux_csvs(
    dir: &Path,
    ledgers: &[FluxLedger],
    manifest: &mut RunManifest,
) -> Result<(), PresetError> {
    for ledger in ledgers {
        let name = format!("flux_R{}.csv", offset_tag(ledger.r_offset));
        let mut w = CsvWriter::create(
            &dir.join(&name),
            &["t", "e_ext", "phi", "closure_residual"],
        )?;
        for k in 0..ledger.times.len() {
            w.row(&[
                CsvValue::F(ledger.times[k]),
                CsvValue::F(ledger.e_ext[k]),
                CsvValue::F(ledger.phi[k]),
                CsvValue::F(ledger.closure_residual[k]),
            ])?;
        }
        manifest.add_file(&w.finish()?)?;
    }
    Ok(())
}

fn write_energy_csv(
    dir: &Path,
    reports: &[StepReport],
    manifest: &mut RunManifest,
) -> Result<(), PresetError> {
    let mut w = CsvWriter::create(
        &dir.join("energy.csv"),
        &["t", "kinetic", "gradient", "potential", "total"],
    )?;
    for r in reports {
        w.row(&[
            CsvValue::F(r.t),
            CsvValue::F(r.kinetic),
            CsvValue::F(r.gradient),
            CsvValue::F(r.potential),
            CsvValue::F(r.discrete_energy),
        ])?;
    }
    manifest.add_file(&w.finish()?)?;
    Ok(())
}

fn write_radiation_csvs(
    dir: &Path,
    profiles: &[CharacteristicProfile],
    estimate: &RadiationFieldEstimate,
    residuals: &[(f64, f64)],
    residual_offset: f64,
    manifest: &mut RunManifest,
) -> Result<(), PresetError> {
    let mut w = CsvWriter::create(
        &dir.join("radiation.csv"),
        &["t", "R", "theta_index", "g", "ghat"],
    )?;
    for p in profiles {
        let nt = p.n_theta();
        for ir in 0..p.n_r {
            for jt in 0..nt {
                w.row(&[
                    CsvValue::F(p.t),
                    CsvValue::F(p.radius(ir)),
                    CsvValue::I(jt as i64),
                    CsvValue::F(p.g[ir * nt + jt]),
                    CsvValue::F(p.ghat[ir * nt + jt]),
                ])?;
            }
        }
    }
    manifest.add_file(&w.finish()?)?;

    let mut w = CsvWriter::create(&dir.join("gfield.csv"), &["R", "theta_index", "G"])?;
    let nt = estimate.n_theta();
    for ir in 0..estimate.n_r {
        for jt in 0..nt {
            w.row(&[
                CsvValue::F(estimate.window.0 + ir as f64 * estimate.dr),
                CsvValue::I(jt as i64),
                CsvValue::F(estimate.g[ir * nt + jt]),
            ])?;
        }
    }
    manifest.add_file(&w.finish()?)?;

    let mut w = CsvWriter::create(&dir.join("residuals.csv"), &["t", "R", "residual"])?;
    for &(t, res) in residuals {
        w.row(&[
            CsvValue::F(t),
            CsvValue::F(residual_offset),
            CsvValue::F(res),
        ])?;
    }
    manifest.add_file(&w.finish()?)?;
    Ok(())
}

fn write_decomposition_csvs(
    dir: &Path,
    reports: &[DecompositionReport],
    manifest: &mut RunManifest,
) -> Result<(), PresetError> {
    for rep in reports {
        let name = format!("decomposition_T{}.csv", offset_tag(rep.t_release));
        let mut w = CsvWriter::create(
            &dir.join(&name),
            &[
                "t",
                "interior_w_energy",
                "idw_residual",
                "vpw_residual",
                "strichartz_w",
                "strichartz_v",
                "l1l2_source",
            ],
        )?;
        for row in &rep.rows {
            w.row(&[
                CsvValue::F(row.t),
                CsvValue::F(row.interior_w_energy),
                CsvValue::F(row.idw_residual),
                CsvValue::F(row.vpw_residual),
                CsvValue::F(row.strichartz_w),
                CsvValue::F(row.strichartz_v),
                CsvValue::F(row.l1l2_source),
            ])?;
        }
        manifest.add_file(&w.finish()?)?;
    }
    let mut w = CsvWriter::create(
        &dir.join("decomposition_summary.csv"),
        &[
            "T",
            "data_norm",
            "sup_interior",
            "idw_max",
            "vpw_max",
            "flux_closure_residual",
            "strichartz_w",
            "strichartz_v",
            "l1l2_source",
        ],
    )?;
    for rep in reports {
        w.row(&[
            CsvValue::F(rep.t_release),
            CsvValue::F(rep.data_norm),
            CsvValue::F(rep.sup_interior),
            CsvValue::F(rep.idw_max),
            CsvValue::F(rep.vpw_max),
            CsvValue::F(rep.flux_closure_residual),
            CsvValue::F(rep.strichartz_w),
            CsvValue::F(rep.strichartz_v),
            CsvValue::F(rep.l1l2_source),
        ])?;
    }
    manifest.add_file(&w.finish()?)?;
    Ok(())
}

/// Writes the exponent sweep CSV: 50 rational p per dimension.
pub fn exponent_table_csv(dir: &Path, manifest: &mut RunManifest) -> Result<(), PresetError> {
    let mut w = CsvWriter::create(
        &dir.join("exponents.csv"),
        &[
            "d", "p", "p_e", "s_p", "q", "r", "k1", "k2", "kappa1", "kappa2", "admissible",
        ],
    )?;
    for d in 3..=5u32 {
        let lo = lower_exponent(d);
        let hi = critical_exponent(d).expect("d in range");
        for p in rational_lattice(lo, hi, 50) {
            write_exponent_row(&mut w, d, p)?;
        }
    }
    manifest.add_file(&w.finish()?)?;
    Ok(())
}

pub fn write_exponent_row(w: &mut CsvWriter, d: u32, p: Q) -> Result<(), PresetError> {
    let table = lemma_pair(d, p).map_err(|e| {
        PresetError::Config(ConfigError::Invalid {
            violations: vec![e.to_string()],
        })
    })?;
    let adm = check_admissible(d, table.q, ExtQ::Finite(table.r), Q::from_integer(1));
    let kappa1 = table
        .kappa1
        .map(display_q)
        .unwrap_or_else(|| "undefined".to_string());
    w.row(&[
        CsvValue::I(d as i64),
        CsvValue::S(&display_q(table.p)),
        CsvValue::S(&display_q(table.p_e)),
        CsvValue::S(&display_q(table.s_p)),
        CsvValue::S(&display_q(table.q)),
        CsvValue::S(&display_q(table.r)),
        CsvValue::S(&display_q(table.k1)),
        CsvValue::S(&display_q(table.k2)),
        CsvValue::S(&kappa1),
        CsvValue::S(&display_q(table.kappa2)),
        CsvValue::S(if adm.admissible { "true" } else { "false" }),
    ])?;
    Ok(())
}

/// Executes a named preset, writing its series and manifest into `out_dir`.
pub fn run_preset(name: &str, out_dir: &Path) -> Result<RunManifest, PresetError> {
    std::fs::create_dir_all(out_dir)?;
    match name {
        "exponent-table" => {
            let mut manifest = RunManifest::new(
                "preset = \"exponent-table\"\n",
                "none".into(),
                "exact rational sweep, 50 p per d in {3,4,5}".into(),
                "none".into(),
            );
            exponent_table_csv(out_dir, &mut manifest)?;
            manifest.write(out_dir)?;
            Ok(manifest)
        }
        "linear-validate" => {
            let mut manifest = RunManifest::new(
                "preset = \"linear-validate\"\n",
                "radial d=3, h in {0.04, 0.02, 0.01}, rmax=20".into(),
                "linear gaussian-odd, t_end=5; isometry run to t=20".into(),
                "leapfrog".into(),
            );
            let v = linear_validation_pipeline(&[0.04, 0.02, 0.01])?;
            let mut w = CsvWriter::create(
                &out_dir.join("convergence.csv"),
                &["h", "max_err", "observed_order"],
            )?;
            for (k, &(h, err)) in v.convergence.iter().enumerate() {
                let order = if k == 0 { f64::NAN } else { v.orders[k - 1] };
                w.row(&[CsvValue::F(h), CsvValue::F(err), CsvValue::F(order)])?;
            }
            manifest.add_file(&w.finish()?)?;
            let mut w = CsvWriter::create(
                &out_dir.join("isometry.csv"),
                &["g_norm_sq", "energy", "rel_error"],
            )?;
            w.row(&[
                CsvValue::F(v.g_norm_sq),
                CsvValue::F(v.e_lin),
                CsvValue::F(v.isometry_rel),
            ])?;
            manifest.add_file(&w.finish()?)?;
            manifest.write(out_dir)?;
            Ok(manifest)
        }
        "exterior-scattering" => {
            let params = ScatteringParams::default();
            let art = exterior_scattering_pipeline(&params)?;
            let mut manifest = RunManifest::new(
                "preset = \"exterior-scattering\"\n",
                format!(
                    "radial d=3 h={} n={} dt={}",
                    art.grid.h, art.grid.n, art.grid.dt
                ),
                format!("p={} nonlinear gaussian-odd t_end={}", art.problem.p, params.t_end),
                "conservative".into(),
            );
            write_energy_csv(out_dir, &art.reports, &mut manifest)?;
            write_flux_csvs(out_dir, &art.ledgers, &mut manifest)?;
            let mut w = CsvWriter::create(&out_dir.join("morawetz.csv"), &["t", "morawetz"])?;
            for &(t, v) in &art.morawetz {
                w.row(&[CsvValue::F(t), CsvValue::F(v)])?;
            }
            manifest.add_file(&w.finish()?)?;
            let mut w = CsvWriter::create(
                &out_dir.join("norms.csv"),
                &["t", "shell_lp_mass", "l1l2_source", "lpp1", "lqlr"],
            )?;
            for &(t, a, b, c, d) in &art.norm_rows {
                w.row(&[
                    CsvValue::F(t),
                    CsvValue::F(a),
                    CsvValue::F(b),
                    CsvValue::F(c),
                    CsvValue::F(d),
                ])?;
            }
            manifest.add_file(&w.finish()?)?;
            write_radiation_csvs(
                out_dir,
                &art.profiles,
                &art.estimate,
                &art.residuals,
                params.residual_offset,
                &mut manifest,
            )?;
            manifest.write(out_dir)?;
            Ok(manifest)
        }
        "decomposition-study" => {
            let params = DecompParams::default();
            let reports = decomposition_pipeline(&params)?;
            let mut manifest = RunManifest::new(
                "preset = \"decomposition-study\"\n",
                format!("radial d=3 h={} rmax={} dt={}", params.h, params.rmax, params.dt),
                format!(
                    "p={} T ladder {:?} shell ({}, {})",
                    params.p, params.releases, params.r1, params.r2
                ),
                "conservative donor, leapfrog children".into(),
            );
            write_decomposition_csvs(out_dir, &reports, &mut manifest)?;
            manifest.write(out_dir)?;
            Ok(manifest)
        }
        other => Err(PresetError::Unknown(other.to_string())),
    }
}

// ---------------------------------------------------------------------------
// config-driven experiment (CLI `simulate` / `radiation` / `decompose`)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputSelection {
    pub series: bool,
    pub radiation: bool,
    pub decomposition: bool,
}

/// Runs a validated config, emitting the selected output families, and
/// returns the manifest. Snapshots are written every `snapshot_every`
/// steps when nonzero.
pub fn run_config_experiment(
    v: &Validated,
    out_dir: &Path,
    which: OutputSelection,
    snapshot_every: usize,
) -> Result<RunManifest, PresetError> {
    std::fs::create_dir_all(out_dir)?;
    let grid = v.grid;
    let problem = v.problem.clone();
    let mut manifest = RunManifest::new(
        &v.source,
        format!(
            "{:?} h={} n={} dt={} extent={}",
            grid.mode,
            grid.h,
            grid.n,
            grid.dt,
            grid.extent()
        ),
        format!(
            "p={} nonlinear={} data={:?} t_end={}",
            problem.p, problem.nonlinear, problem.data, v.run.t_end
        ),
        format!("{:?}", problem.scheme),
        );
    // echo the config for reproducibility
    let config_echo = out_dir.join("config.toml");
    std::fs::write(&config_echo, &v.source)?;
    manifest.add_file(&config_echo)?;

    let sphere = match grid.mode {
        GridMode::Radial { d } => SphereGrid::radial_collapse(d),
        GridMode::Cartesian3d => {
            SphereGrid::gauss_product(v.diagnostics.sphere_polar, v.diagnostics.sphere_azimuth)
        }
    };
    let init = init_from_data(&problem, &grid)?;

    let mut ledgers: Vec<FluxLedger> = v
        .diagnostics
        .cone_offsets
        .iter()
        .map(|&r| FluxLedger::new(r))
        .collect();
    let mut shell_mass = v
        .diagnostics
        .shell
        .map(|[r1, r2]| ShellLpMass::new(r1, r2, problem.p));
    let mut morawetz: Vec<(f64, f64)> = Vec::new();
    let mut weighted: Vec<(f64, f64)> = Vec::new();
    let mut profiles: Vec<CharacteristicProfile> = Vec::new();
    let window = v.diagnostics.window.map(|[a, b]| (a, b));
    let mut snapshots: Vec<PathBuf> = Vec::new();

    let reports;
    {
        let ledgers = &mut ledgers;
        let shell_mass = &mut shell_mass;
        let morawetz = &mut morawetz;
        let weighted = &mut weighted;
        let profiles = &mut profiles;
        let snapshots = &mut snapshots;
        let grid_ref = &grid;
        let problem_ref = &problem;
        let sphere_ref = &sphere;
        let kappa = v.diagnostics.kappa;
        let radiate = which.radiation && window.is_some();

        let mut per_step = move |level: usize, state: &FieldState| -> Result<(), SolverError> {
            let wrap = |e: DiagnosticsError| SolverError::Observer(e.to_string());
            for ledger in ledgers.iter_mut() {
                ledger
                    .accumulate(state, grid_ref, problem_ref, sphere_ref)
                    .map_err(wrap)?;
            }
            if let Some(sm) = shell_mass.as_mut() {
                sm.add(state, grid_ref).map_err(wrap)?;
            }
            if level % v.run.observe_every.max(1) == 0 {
                for ledger in ledgers.iter_mut() {
                    ledger.record(state, grid_ref, problem_ref).map_err(wrap)?;
                }
                morawetz.push((state.t, morawetz_report(state, grid_ref).map_err(wrap)?));
                if let Some(k) = kappa {
                    weighted.push((
                        state.t,
                        crate::diagnostics::weighted_energy(state, grid_ref, problem_ref, k)
                            .map_err(wrap)?,
                    ));
                }
                if radiate {
                    if let Some(win) = window {
                        // radii below zero carry zero samples; only the
                        // outer edge must stay inside the grid
                        if state.t + win.1 <= grid_ref.extent() {
                            profiles.push(
                                sample_profile(state, grid_ref, win, sphere_ref)
                                    .map_err(|e| SolverError::Observer(e.to_string()))?,
                            );
                        }
                    }
                }
            }
            if snapshot_every > 0 && level % snapshot_every == 0 {
                let path = out_dir.join(format!("snapshot_{level:06}.cwv"));
                crate::snapshot::write_snapshot(state, grid_ref, &path)
                    .map_err(|e| SolverError::Observer(e.to_string()))?;
                snapshots.push(path);
            }
            Ok(())
        };
        let (_, reps) = run_from(&problem, &grid, &v.run, init, Some(&mut per_step), None)?;
        reports = reps;
    }

    if which.series {
        write_energy_csv(out_dir, &reports, &mut manifest)?;
        write_flux_csvs(out_dir, &ledgers, &mut manifest)?;
        let mut w = CsvWriter::create(&out_dir.join("morawetz.csv"), &["t", "morawetz"])?;
        for &(t, val) in &morawetz {
            w.row(&[CsvValue::F(t), CsvValue::F(val)])?;
        }
        manifest.add_file(&w.finish()?)?;
        if let Some(sm) = &shell_mass {
            let mut w = CsvWriter::create(&out_dir.join("norms.csv"), &["t", "shell_lp_mass"])?;
            w.row(&[CsvValue::F(v.run.t_end), CsvValue::F(sm.value())])?;
            manifest.add_file(&w.finish()?)?;
        }
        if !weighted.is_empty() {
            let mut w =
                CsvWriter::create(&out_dir.join("weighted_energy.csv"), &["t", "weighted"])?;
            for &(t, val) in &weighted {
                w.row(&[CsvValue::F(t), CsvValue::F(val)])?;
            }
            manifest.add_file(&w.finish()?)?;
        }
    }

    if which.radiation && profiles.len() >= 3 {
        // extraction wants a doubling time ladder: successive distances of
        // densely sampled profiles plateau at the O(Δt) level instead of
        // showing the Cauchy decay
        let ladder = doubling_ladder(&profiles);
        let estimate = extract_g(&ladder)?;
        let residuals: Vec<(f64, f64)> = Vec::new();
        write_radiation_csvs(
            out_dir,
            &profiles,
            &estimate,
            &residuals,
            0.0,
            &mut manifest,
        )?;
    }

    if which.decomposition {
        if let Some(dcfg) = &v.decomposition {
            let reports = run_decomposition(&problem, &grid, &v.run, dcfg)?;
            write_decomposition_csvs(out_dir, &reports, &mut manifest)?;
        }
    }

    for s in &snapshots {
        manifest.add_file(s)?;
    }
    manifest.write(out_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmpdir(tag: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("wavelab-presets-{tag}"));
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn exponent_table_preset_writes_sweep() {
        let dir = tmpdir("exponents");
        let manifest = run_preset("exponent-table", &dir).unwrap();
        assert_eq!(manifest.files.len(), 1);
        let text = std::fs::read_to_string(dir.join("exponents.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 3 * 50);
        assert!(lines[0].starts_with("d,p,p_e"));
        // every row of the sweep is admissible
        assert!(lines[1..].iter().all(|l| l.ends_with(",true")));
        crate::manifest::verify_manifest(&dir.join("manifest.toml")).unwrap();
    }

    #[test]
    fn unknown_preset_errors() {
        let dir = tmpdir("unknown");
        assert!(matches!(
            run_preset("bogus", &dir),
            Err(PresetError::Unknown(_))
        ));
    }

    #[test]
    fn config_experiment_round_trips() {
        let dir = tmpdir("config-exp");
        let cfg = r#"
[grid]
mode = "radial"
d = 3
h = 0.05
extent = 24.0
dt = 0.025

[problem]
p = 4.0
data = "gaussian-odd"
support_radius = 4.0
t_end = 4.0

[diagnostics]
observe_every = 20
cone_offsets = [0.0]
shell = [0.0, 2.0]
"#;
        let v = crate::config::parse_config_str(cfg).unwrap();
        let manifest = run_config_experiment(
            &v,
            &dir,
            OutputSelection {
                series: true,
                radiation: false,
                decomposition: false,
            },
            0,
        )
        .unwrap();
        assert!(dir.join("energy.csv").exists());
        assert!(dir.join("flux_R0.csv").exists());
        assert!(manifest.files.iter().any(|f| f.name == "energy.csv"));
        crate::manifest::verify_manifest(&dir.join("manifest.toml")).unwrap();
    }

    #[test]
    fn deterministic_rerun_byte_identical() {
        let d1 = tmpdir("det1");
        let d2 = tmpdir("det2");
        run_preset("exponent-table", &d1).unwrap();
        run_preset("exponent-table", &d2).unwrap();
        let a = std::fs::read(d1.join("exponents.csv")).unwrap();
        let b = std::fs::read(d2.join("exponents.csv")).unwrap();
        assert_eq!(a, b);
    }
}
