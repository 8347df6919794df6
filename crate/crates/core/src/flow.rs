//! Geodesic gradient flow for the horizontal energy with potential.
//!
//! Each step moves every point along its tension, `f' = exp_f(dt · τ_HG(f))`,
//! and is accepted only if the energy does not increase; rejected steps shrink
//! `dt` by the backtracking factor.

use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::DomainChart;
use crate::error::{Error, Result};
use crate::fields::{random_smooth_ambient, MapField, SectionField};
use crate::target::{Potential, Target};
use crate::variational::{tension_with_potential, total_energy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowOptions {
    /// Initial step.
    pub dt: f64,
    /// Convergence threshold on `‖τ_HG‖∞`.
    pub tol: f64,
    /// Budget of attempted steps (accepted plus rejected).
    pub max_steps: usize,
    /// Factor applied to `dt` after a rejected step.
    pub backtracking: f64,
    /// Factor applied to `dt` after an accepted step.
    pub growth: f64,
    /// When false every step is accepted regardless of energy (stress testing only).
    pub line_search: bool,
    pub seed: u64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { dt: 0.05, tol: 1e-3, max_steps: 20_000, backtracking: 0.5, growth: 1.1, line_search: true, seed: 0 }
    }
}

impl FlowOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("flow dt must be positive, got {}", self.dt)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Validation(format!("flow tol must be positive, got {}", self.tol)));
        }
        if !(self.backtracking > 0.0 && self.backtracking < 1.0) {
            return Err(Error::Validation(format!("backtracking factor must lie in (0,1), got {}", self.backtracking)));
        }
        if !(self.growth >= 1.0 && self.growth.is_finite()) {
            return Err(Error::Validation(format!("growth factor must be at least 1, got {}", self.growth)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    /// Number of accepted steps so far.
    pub step: usize,
    pub energy: f64,
    pub tension_sup: f64,
    /// Step size that produced this state (0 for the initial record).
    pub dt: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
    pub rejected: usize,
}

impl FlowTrace {
    pub fn last(&self) -> Option<&FlowRecord> {
        self.records.last()
    }

    /// CSV with columns `step,energy,tension_sup,dt`, written atomically.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("csv.tmp");
        {
            let mut w = csv::Writer::from_path(&tmp)?;
            w.write_record(["step", "energy", "tension_sup", "dt"])?;
            for r in &self.records {
                w.write_record([
                    r.step.to_string(),
                    r.energy.to_string(),
                    r.tension_sup.to_string(),
                    r.dt.to_string(),
                ])?;
            }
            w.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowStatus {
    Converged,
    MaxSteps,
    Blowup,
}

#[derive(Clone, Debug)]
pub struct FlowOutcome {
    pub map: MapField,
    pub trace: FlowTrace,
    pub status: FlowStatus,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialMap {
    Constant(Vec<f64>),
    /// `(cos x, sin x cos y, sin x sin y, 0, …)`.
    Wrap,
    /// Low-frequency random perturbation of the base point (north pole or origin).
    RandomSmooth,
}

impl FromStr for InitialMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wrap" => Ok(InitialMap::Wrap),
            "random-smooth" => Ok(InitialMap::RandomSmooth),
            "constant" => Err(Error::Config("constant initial map needs a point".into())),
            other => Err(Error::Config(format!("unknown initial map '{other}'"))),
        }
    }
}

const RANDOM_SMOOTH_AMPLITUDE: f64 = 0.4;

pub fn initial_map(kind: &InitialMap, chart: Arc<DomainChart>, target: Target, seed: u64) -> Result<MapField> {
    let dim = target.ambient_dim();
    match kind {
        InitialMap::Constant(p) => MapField::constant(chart, target, p),
        InitialMap::Wrap => {
            if dim < 3 {
                return Err(Error::Config(format!(
                    "wrap map needs an ambient dimension of at least 3, {target} has {dim}"
                )));
            }
            MapField::from_fn(chart, target, |p| {
                let mut y = vec![0.0; dim];
                let (s, c) = p[0].sin_cos();
                y[0] = c;
                y[1] = s * p[1].cos();
                y[2] = s * p[1].sin();
                y
            })
        }
        InitialMap::RandomSmooth => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pert = random_smooth_ambient(&chart, dim, RANDOM_SMOOTH_AMPLITUDE, &mut rng);
            let mut base = vec![0.0; dim];
            if target.is_sphere() {
                base[dim - 1] = 1.0;
            }
            let mut values = Vec::with_capacity(pert.len());
            for w in pert.chunks_exact(dim) {
                // on the sphere the perturbation is carried by the exponential map at the base point
                let mut v = w.to_vec();
                target.project_in_place(&base, &mut v);
                values.extend(target.exp_unchecked(&base, &v));
            }
            MapField::new(chart, target, values)
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub map: MapField,
    pub energy: f64,
    pub accepted: bool,
}

fn blowup(step: usize, what: &str, value: f64) -> Error {
    Error::NumericalBlowup { step, detail: format!("{what} became {value}") }
}

/// One explicit step `f' = exp_f(dt·τ)`; accepted iff `E(f') ≤ E(f)`.
///
/// On rejection the returned map is `f` itself and the caller is expected to shrink `dt`.
pub fn flow_step(f: &MapField, potential: &Potential, dt: f64) -> Result<StepResult> {
    if !(dt > 0.0) {
        return Err(Error::Validation(format!("flow dt must be positive, got {dt}")));
    }
    let energy = total_energy(f, potential)?;
    let tau = tension_with_potential(f, potential)?;
    let (candidate, e_new) = trial(f, &tau, potential, dt, 0)?;
    if e_new <= energy {
        Ok(StepResult { map: candidate, energy: e_new, accepted: true })
    } else {
        Ok(StepResult { map: f.clone(), energy, accepted: false })
    }
}

fn trial(f: &MapField, tau: &SectionField, potential: &Potential, dt: f64, step: usize) -> Result<(MapField, f64)> {
    let candidate = f.geodesic_variation(tau, dt)?;
    let e = total_energy(&candidate, potential)?;
    if !e.is_finite() {
        return Err(blowup(step, "energy", e));
    }
    Ok((candidate, e))
}

pub fn flow_until(f0: &MapField, potential: &Potential, opts: &FlowOptions) -> Result<FlowOutcome> {
    flow_until_with(f0, potential, opts, |_, _| Ok(()))
}

/// Like [`flow_until`], calling `on_accept(step, map)` after every accepted step.
pub fn flow_until_with(
    f0: &MapField,
    potential: &Potential,
    opts: &FlowOptions,
    mut on_accept: impl FnMut(usize, &MapField) -> Result<()>,
) -> Result<FlowOutcome> {
    opts.validate()?;
    let mut f = f0.clone();
    let mut energy = total_energy(&f, potential)?;
    let mut tau = tension_with_potential(&f, potential)?;
    let mut sup = tau.sup_norm();
    let mut trace = FlowTrace { records: vec![FlowRecord { step: 0, energy, tension_sup: sup, dt: 0.0 }], rejected: 0 };
    if !(energy.is_finite() && sup.is_finite()) {
        return Ok(FlowOutcome { map: f, trace, status: FlowStatus::Blowup });
    }

    let mut dt = opts.dt;
    let mut accepted = 0;
    for attempt in 0..opts.max_steps {
        if sup <= opts.tol {
            return Ok(FlowOutcome { map: f, trace, status: FlowStatus::Converged });
        }
        let (candidate, e_new) = match trial(&f, &tau, potential, dt, attempt) {
            Ok(t) => t,
            Err(Error::NumericalBlowup { .. }) => return Ok(FlowOutcome { map: f, trace, status: FlowStatus::Blowup }),
            Err(e) => return Err(e),
        };
        if opts.line_search && e_new > energy {
            trace.rejected += 1;
            dt *= opts.backtracking;
            continue;
        }
        f = candidate;
        energy = e_new;
        tau = tension_with_potential(&f, potential)?;
        sup = tau.sup_norm();
        accepted += 1;
        trace.records.push(FlowRecord { step: accepted, energy, tension_sup: sup, dt });
        if !sup.is_finite() {
            return Ok(FlowOutcome { map: f, trace, status: FlowStatus::Blowup });
        }
        on_accept(accepted, &f)?;
        if opts.line_search {
            dt *= opts.growth;
        }
    }
    let status = if sup <= opts.tol { FlowStatus::Converged } else { FlowStatus::MaxSteps };
    Ok(FlowOutcome { map: f, trace, status })
}
