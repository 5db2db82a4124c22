//! Browser bindings for the wavelab core: three interactive operations on
//! a single static page.
//!
//! 1. [`exponent_report`] — exact rational exponent tables with the Hölder
//!    interpolation line.
//! 2. [`Lab`] — a live radial d = 3 simulation with energy/flux ledgers and
//!    a movable light cone.
//! 3. [`Lab::snapshot_profile`] / [`Lab::extract_json`] — radiation-profile
//!    convergence and the exterior scattering residual against the
//!    reconstructed free wave.
//!
//! All logic lives in [`core_impl`] with plain `String` errors so it runs
//! and tests on native targets; the `wasm_bindgen` layer only converts
//! errors to `JsValue` at the boundary.

use wasm_bindgen::prelude::*;

pub mod core_impl {
    use wavelab::diagnostics::{exterior_energy, total_energy, FluxLedger};
    use wavelab::exponents::{
        check_admissible, display_q, lemma_pair, parse_rational, to_f64, ExtQ, Q,
    };
    use wavelab::grid::{make_grid, GridMode, GridSpec, SphereGrid};
    use wavelab::radiation::{
        cauchy_distance, exterior_scattering_residual, extract_g, free_wave_from_g_radial3d,
        sample_profile, CharacteristicProfile, Comparator,
    };
    use wavelab::solver::{InitialData, ProblemSpec, Scheme, Stepper};

    pub fn json_f(v: f64) -> String {
        if v.is_finite() {
            format!("{v}")
        } else {
            "null".to_string()
        }
    }

    pub fn json_array(vs: &[f64]) -> String {
        let items: Vec<String> = vs.iter().map(|&v| json_f(v)).collect();
        format!("[{}]", items.join(","))
    }

    pub fn exponent_report(d: u32, p: &str) -> Result<String, String> {
        let p = parse_rational(p).map_err(|e| e.to_string())?;
        let table = lemma_pair(d, p).map_err(|e| e.to_string())?;
        let adm = check_admissible(d, table.q, ExtQ::Finite(table.r), Q::from_integer(1));
        let one = Q::from_integer(1);
        let two = Q::from_integer(2);
        let points = [
            (one / (p + one), one / (p + one)),
            (one / table.q, one / table.r),
            (one / p, one / (two * p)),
        ];
        let pts: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("[{},{}]", to_f64(*x), to_f64(*y)))
            .collect();
        let kappa1 = table
            .kappa1
            .map(display_q)
            .unwrap_or_else(|| "undefined".into());
        Ok(format!(
            "{{\"d\":{d},\"p\":\"{}\",\"p_e\":\"{}\",\"s_p\":\"{}\",\"q\":\"{}\",\"r\":\"{}\",\
             \"k1\":\"{}\",\"k2\":\"{}\",\"kappa1\":\"{kappa1}\",\"kappa2\":\"{}\",\
             \"admissible\":{},\"points\":[{}]}}",
            display_q(table.p),
            display_q(table.p_e),
            display_q(table.s_p),
            display_q(table.q),
            display_q(table.r),
            display_q(table.k1),
            display_q(table.k2),
            display_q(table.kappa2),
            adm.admissible,
            pts.join(",")
        ))
    }

    const DEMO_H: f64 = 0.05;
    const DEMO_RMAX: f64 = 30.0;
    const DEMO_SUPPORT: f64 = 4.0;
    const OBSERVE_EVERY: usize = 8;

    pub struct LabCore {
        grid: GridSpec,
        problem: ProblemSpec,
        stepper: Stepper,
        sphere: SphereGrid,
        pub ledger: FluxLedger,
        pub e0: f64,
        e0_discrete: f64,
        pub t_max: f64,
        times: Vec<f64>,
        energy: Vec<f64>,
        profiles: Vec<CharacteristicProfile>,
        window: (f64, f64),
    }

    impl LabCore {
        pub fn new(
            p: f64,
            amplitude: f64,
            scheme: &str,
            cone_offset: f64,
        ) -> Result<LabCore, String> {
            if !(3.0 < p && p < 5.0) {
                return Err("p must lie in (3, 5) = (1+6/d, 1+4/(d-2)) for d = 3".into());
            }
            let scheme: Scheme = scheme.parse().map_err(|e| format!("{e}"))?;
            let grid = make_grid(GridMode::Radial { d: 3 }, DEMO_H, DEMO_RMAX, 0.45 * DEMO_H)
                .map_err(|e| e.to_string())?;
            let problem = ProblemSpec {
                p,
                nonlinear: true,
                scheme,
                data: InitialData::GaussianOdd {
                    amplitude,
                    width: 1.0,
                },
                r_support: DEMO_SUPPORT,
            };
            let stepper = Stepper::new(&problem, &grid).map_err(|e| e.to_string())?;
            let window = (-4.0, 4.0);
            let margin = cone_offset.max(window.1).max(0.0) + 1.0;
            let t_max = wavelab::solver::causality_budget(&grid, DEMO_SUPPORT, margin);
            let e0 = total_energy(stepper.observed(), &grid, &problem)
                .map_err(|e| e.to_string())?
                .total;
            let e0_discrete = stepper.discrete_energy();
            let mut lab = LabCore {
                grid,
                problem,
                stepper,
                sphere: SphereGrid::radial_collapse(3),
                ledger: FluxLedger::new(cone_offset),
                e0,
                e0_discrete,
                t_max,
                times: Vec::new(),
                energy: Vec::new(),
                profiles: Vec::new(),
                window,
            };
            lab.record()?;
            Ok(lab)
        }

        fn record(&mut self) -> Result<(), String> {
            let state = self.stepper.observed();
            self.ledger
                .accumulate(state, &self.grid, &self.problem, &self.sphere)
                .map_err(|e| e.to_string())?;
            if self.stepper.level() % OBSERVE_EVERY == 0 {
                self.ledger
                    .record(state, &self.grid, &self.problem)
                    .map_err(|e| e.to_string())?;
                self.times.push(state.t);
                self.energy.push(self.stepper.discrete_energy());
            }
            Ok(())
        }

        pub fn advance(&mut self, steps: usize) -> Result<usize, String> {
            let mut taken = 0;
            for _ in 0..steps {
                if self.stepper.observed().t + self.grid.dt > self.t_max {
                    break;
                }
                self.stepper.advance().map_err(|e| e.to_string())?;
                self.record()?;
                taken += 1;
            }
            Ok(taken)
        }

        pub fn t(&self) -> f64 {
            self.stepper.observed().t
        }

        pub fn energy_drift(&self) -> f64 {
            (self.stepper.discrete_energy() - self.e0_discrete).abs() / self.e0_discrete
        }

        pub fn cone_radius(&self) -> f64 {
            self.t() + self.ledger.r_offset
        }

        pub fn field_u(&self, max_points: usize) -> Vec<f64> {
            let u = &self.stepper.observed().u;
            let stride = (u.len() / max_points.max(2)).max(1);
            u.iter().step_by(stride).copied().collect()
        }

        pub fn field_r(&self, max_points: usize) -> Vec<f64> {
            let n = self.grid.n;
            let stride = (n / max_points.max(2)).max(1);
            (0..n)
                .step_by(stride)
                .map(|i| self.grid.radius(i))
                .collect()
        }

        pub fn series_json(&self) -> String {
            format!(
                "{{\"t\":{},\"e_ext\":{},\"phi\":{},\"closure\":{},\"energy\":{},\"e0\":{}}}",
                json_array(&self.ledger.times),
                json_array(&self.ledger.e_ext),
                json_array(&self.ledger.phi),
                json_array(&self.ledger.closure_residual),
                json_array(&self.energy),
                json_f(self.e0)
            )
        }

        pub fn snapshot_profile(&mut self) -> Result<String, String> {
            let state = self.stepper.observed();
            let profile = sample_profile(state, &self.grid, self.window, &self.sphere)
                .map_err(|e| e.to_string())?;
            let radii: Vec<f64> = (0..profile.n_r).map(|ir| profile.radius(ir)).collect();
            let json = format!(
                "{{\"t\":{},\"R\":{},\"g\":{}}}",
                json_f(profile.t),
                json_array(&radii),
                json_array(&profile.g)
            );
            if self
                .profiles
                .last()
                .map(|p| p.t < profile.t)
                .unwrap_or(true)
            {
                self.profiles.push(profile);
            }
            Ok(json)
        }

        pub fn profile_count(&self) -> usize {
            self.profiles.len()
        }

        pub fn extract_json(&self) -> Result<String, String> {
            let estimate = extract_g(&self.profiles).map_err(|e| e.to_string())?;
            let free_wave = free_wave_from_g_radial3d(&estimate).map_err(|e| e.to_string())?;
            let state = self.stepper.observed();
            let residual = exterior_scattering_residual(
                state,
                &self.grid,
                &Comparator::FreeWave(&free_wave),
                self.ledger.r_offset,
            )
            .map_err(|e| e.to_string())?;

            let radii: Vec<f64> = (0..estimate.n_r)
                .map(|ir| estimate.window.0 + ir as f64 * estimate.dr)
                .collect();
            let g: Vec<f64> = (0..estimate.n_r).map(|ir| estimate.g_radial(ir)).collect();
            let mut ul = Vec::new();
            let stride = (self.grid.n / 300).max(1);
            for i in (0..self.grid.n).step_by(stride) {
                ul.push(free_wave.eval(self.grid.radius(i), state.t).0);
            }
            Ok(format!(
                "{{\"R\":{},\"G\":{},\"cauchy\":{},\"g_norm_sq\":{},\"two_e\":{},\
                 \"residual\":{},\"residual_rel\":{},\"u_free\":{}}}",
                json_array(&radii),
                json_array(&g),
                json_array(&estimate.cauchy_history),
                json_f(estimate.l2_norm_sq),
                json_f(2.0 * self.e0),
                json_f(residual),
                json_f(residual / self.e0),
                json_array(&ul)
            ))
        }

        pub fn last_cauchy_distance(&self) -> f64 {
            if self.profiles.len() < 2 {
                return f64::NAN;
            }
            let n = self.profiles.len();
            cauchy_distance(&self.profiles[n - 2], &self.profiles[n - 1]).unwrap_or(f64::NAN)
        }

        pub fn e_ext_now(&self) -> Result<f64, String> {
            exterior_energy(
                self.stepper.observed(),
                &self.grid,
                &self.problem,
                self.ledger.r_offset,
            )
            .map_err(|e| e.to_string())
        }
    }
}

fn js_err(e: String) -> JsValue {
    JsValue::from_str(&e)
}

/// Exact exponent table for `(d, p)` with `p` given as "num/den" or an
/// integer. Returns JSON with the table entries (exact rational strings),
/// the three interpolation points for the line plot, and the
/// admissibility verdict.
#[wasm_bindgen]
pub fn exponent_report(d: u32, p: &str) -> Result<String, JsValue> {
    core_impl::exponent_report(d, p).map_err(js_err)
}

/// Interactive radial d = 3 session: step the defocusing wave, watch the
/// exterior energy and accumulated cone flux, sample outgoing profiles and
/// compare against the reconstructed free wave.
#[wasm_bindgen]
pub struct Lab {
    inner: core_impl::LabCore,
}

#[wasm_bindgen]
impl Lab {
    /// `scheme` is "conservative" or "leapfrog"; `cone_offset` is the `R`
    /// of the monitored light cone `|x| = t + R`.
    #[wasm_bindgen(constructor)]
    pub fn new(p: f64, amplitude: f64, scheme: &str, cone_offset: f64) -> Result<Lab, JsValue> {
        Ok(Lab {
            inner: core_impl::LabCore::new(p, amplitude, scheme, cone_offset).map_err(js_err)?,
        })
    }

    /// Advances up to `steps` levels, stopping at the causality budget.
    /// Returns the number of levels actually taken.
    pub fn advance(&mut self, steps: usize) -> Result<usize, JsValue> {
        self.inner.advance(steps).map_err(js_err)
    }

    pub fn t(&self) -> f64 {
        self.inner.t()
    }

    pub fn t_budget(&self) -> f64 {
        self.inner.t_max
    }

    pub fn energy_total(&self) -> f64 {
        self.inner.e0
    }

    /// Relative drift of the conserved discrete energy so far.
    pub fn energy_drift(&self) -> f64 {
        self.inner.energy_drift()
    }

    pub fn cone_radius(&self) -> f64 {
        self.inner.cone_radius()
    }

    /// Field samples `u(r)` decimated to at most `max_points`.
    pub fn field_u(&self, max_points: usize) -> Vec<f64> {
        self.inner.field_u(max_points)
    }

    pub fn field_r(&self, max_points: usize) -> Vec<f64> {
        self.inner.field_r(max_points)
    }

    /// Ledger series as JSON: observer times, exterior energy, accumulated
    /// flux, closure residual and the conserved discrete energy.
    pub fn series_json(&self) -> String {
        self.inner.series_json()
    }

    /// Samples the outgoing profile `g_t(R) = (t+R) ∂_t u` on the window
    /// and stores it for extraction. Returns the profile as JSON.
    pub fn snapshot_profile(&mut self) -> Result<String, JsValue> {
        self.inner.snapshot_profile().map_err(js_err)
    }

    pub fn profile_count(&self) -> usize {
        self.inner.profile_count()
    }

    /// Extracts `G` from the stored profiles, reconstructs the free wave
    /// and reports the exterior scattering residual at the monitored cone.
    pub fn extract_json(&self) -> Result<String, JsValue> {
        self.inner.extract_json().map_err(js_err)
    }

    /// Distance between the last two stored profiles (convergence gauge).
    pub fn last_cauchy_distance(&self) -> f64 {
        self.inner.last_cauchy_distance()
    }

    /// Exterior energy at the monitored cone right now.
    pub fn e_ext_now(&self) -> Result<f64, JsValue> {
        self.inner.e_ext_now().map_err(js_err)
    }
}

#[cfg(test)]
mod tests {
    use super::core_impl::{exponent_report, LabCore};

    #[test]
    fn exponent_report_json() {
        let json = exponent_report(3, "4").unwrap();
        assert!(json.contains("\"q\":\"7/2\""));
        assert!(json.contains("\"admissible\":true"));
        assert!(json.contains("\"points\":[[0.2,0.2]"));
        assert!(exponent_report(3, "3").is_err());
    }

    #[test]
    fn lab_session_runs_and_extracts() {
        let mut lab = LabCore::new(4.0, 1.0, "conservative", 0.0).unwrap();
        // march to t = 3, 6, 9 sampling profiles on the way
        for target in [3.0, 6.0, 9.0] {
            while lab.t() + 1e-9 < target {
                lab.advance(32).unwrap();
            }
            lab.snapshot_profile().unwrap();
        }
        assert_eq!(lab.profile_count(), 3);
        assert!(lab.energy_drift() < 1e-8);
        let series = lab.series_json();
        assert!(series.contains("\"e_ext\""));
        let extract = lab.extract_json().unwrap();
        assert!(extract.contains("\"residual_rel\""));
        // the residual against the reconstructed free wave is small
        let rel: f64 = extract
            .split("\"residual_rel\":")
            .nth(1)
            .unwrap()
            .split(&[',', '}'][..])
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert!(rel < 0.02, "residual_rel {rel}");
        assert!(lab.last_cauchy_distance() > 0.0);
    }

    #[test]
    fn budget_stops_advancing() {
        let mut lab = LabCore::new(3.5, 0.5, "leapfrog", 2.0).unwrap();
        let mut guard = 0;
        loop {
            let taken = lab.advance(512).unwrap();
            guard += 1;
            if taken == 0 || guard > 100 {
                break;
            }
        }
        assert!(lab.t() <= lab.t_max + 1e-9);
        assert!(lab.t() > lab.t_max - 0.1);
    }
}
