use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use subflow_core::stability::hessian_min_eig;
use subflow_core::variational::{hessian_integral, second_variation_residual_with};
use subflow_core::{
    divergence_identity_residual, first_variation_residual, flow_until_with, initial_map, instability_certificate,
    leung_sum, random_section, sphere_index_identity, stability_probe, CertificateOptions, ConvergenceStudy,
    DomainChart, Error, FlowStatus, IdentityCheck, InitialMap, LeungSum, MapField, ProbeOptions, Result,
    SecondVariationForm, Stencil, VariationReport, Verdict,
};

use crate::config::RunConfig;
use crate::output::write_json;

/// Process exit status of a command that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    AssertionFailed,
    Numerical,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::AssertionFailed => 1,
            Status::Numerical => 3,
        }
    }
}

#[derive(Serialize)]
struct StudyReport {
    check: String,
    chart: String,
    stencil_order: usize,
    threshold: f64,
    observed_order: Option<f64>,
    exact: bool,
    passed: bool,
    reports: Vec<VariationReport>,
    /// Signed `analytic − fd` on the finest level (mis-signed diagnostic only).
    #[serde(skip_serializing_if = "Option::is_none")]
    limit: Option<f64>,
    /// `2∫∇̃²G(V,V)` on the finest level (mis-signed diagnostic only).
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_limit: Option<f64>,
}

#[derive(Serialize)]
struct CheckReport {
    passed: bool,
    seed: u64,
    studies: Vec<StudyReport>,
}

fn order_threshold(stencil: Stencil) -> f64 {
    0.95 * stencil.order() as f64
}

pub fn cmd_check(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let target = cfg.target()?;
    let potential = cfg.potential()?;
    let seed = cfg.seed;
    let mut studies = Vec::new();
    for suite in &cfg.checks.suites {
        for chart_name in &cfg.checks.charts {
            for &order in &cfg.checks.stencil_orders {
                let stencil = Stencil::from_order(order)?;
                let mut reports = Vec::new();
                let mut limit = None;
                let mut expected_limit = None;
                for &n in &cfg.checks.levels {
                    let chart = Arc::new(cfg.chart_named(chart_name, [n, n, n])?.with_stencil(stencil));
                    let f = initial_map(&InitialMap::RandomSmooth, Arc::clone(&chart), target, seed)?;
                    let v = random_section(&f, seed.wrapping_add(1), 1.0);
                    let dt = cfg.checks.dt_factor * chart.h();
                    let report = match suite.as_str() {
                        "first-variation" => first_variation_residual(&f, &v, &potential, dt)?,
                        "divergence-identity" => divergence_identity_residual(&f, &v)?,
                        "second-variation" if cfg.checks.mis_signed_hessian => {
                            let r = second_variation_residual_with(
                                &f,
                                &v,
                                &potential,
                                dt,
                                SecondVariationForm::FlippedHessian,
                            )?;
                            limit = Some(r.analytic - r.fd);
                            expected_limit = Some(2.0 * hessian_integral(&f, &v, &potential)?);
                            r
                        }
                        "second-variation" => {
                            second_variation_residual_with(&f, &v, &potential, dt, SecondVariationForm::Standard)?
                        }
                        other => return Err(Error::Config(format!("unknown check suite '{other}'"))),
                    };
                    if !(report.analytic.is_finite() && report.fd.is_finite()) {
                        return Err(Error::NumericalBlowup {
                            step: 0,
                            detail: format!("{suite} on {chart_name} at {n}³"),
                        });
                    }
                    reports.push(report);
                }
                let study = ConvergenceStudy::new(reports);
                let threshold = order_threshold(stencil);
                let passed = study.passes(threshold);
                println!(
                    "{:<4} {suite:<20} {chart_name:<15} order {order}: {}",
                    if passed { "ok" } else { "FAIL" },
                    if study.exact {
                        "exact to rounding".to_string()
                    } else {
                        format!("observed {:.2}", study.observed_order().unwrap_or(f64::NAN))
                    }
                );
                studies.push(StudyReport {
                    check: study.check.clone(),
                    chart: chart_name.clone(),
                    stencil_order: order,
                    threshold,
                    observed_order: study.observed_order(),
                    exact: study.exact,
                    passed,
                    reports: study.reports,
                    limit,
                    expected_limit,
                });
            }
        }
    }
    let passed = studies.iter().all(|s| s.passed);
    write_json(&out.join("check.json"), &CheckReport { passed, seed, studies })?;
    Ok(if passed { Status::Ok } else { Status::AssertionFailed })
}

#[derive(Serialize)]
struct FlowSummary {
    status: FlowStatus,
    steps: usize,
    rejected: usize,
    energy: f64,
    tension_sup: f64,
    trace: &'static str,
    final_field: &'static str,
    checkpoints: Vec<String>,
}

pub fn cmd_flow(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let chart = cfg.chart()?;
    let target = cfg.target()?;
    let potential = cfg.potential()?;
    let opts = cfg.flow_options();
    let f0 = initial_map(&cfg.initial_map()?, chart, target, cfg.seed)?;
    let every = cfg.flow.checkpoint_every;
    let mut checkpoints = Vec::new();
    let outcome = flow_until_with(&f0, &potential, &opts, |step, f| {
        if every > 0 && step % every == 0 {
            let name = format!("checkpoint_{step:06}.csv");
            f.write_csv(&out.join(&name))?;
            checkpoints.push(name);
        }
        Ok(())
    })?;
    outcome.trace.write_csv(&out.join("trace.csv"))?;
    outcome.map.write_csv(&out.join("final_field.csv"))?;
    let last = outcome.trace.last().expect("trace has the initial record");
    let summary = FlowSummary {
        status: outcome.status,
        steps: outcome.trace.records.len() - 1,
        rejected: outcome.trace.rejected,
        energy: last.energy,
        tension_sup: last.tension_sup,
        trace: "trace.csv",
        final_field: "final_field.csv",
        checkpoints,
    };
    println!(
        "{:?} after {} steps ({} rejected): E = {:.6e}, ‖τ‖∞ = {:.3e}",
        summary.status, summary.steps, summary.rejected, summary.energy, summary.tension_sup
    );
    write_json(&out.join("flow.json"), &summary)?;
    Ok(match outcome.status {
        FlowStatus::Converged => Status::Ok,
        FlowStatus::MaxSteps => Status::AssertionFailed,
        FlowStatus::Blowup => Status::Numerical,
    })
}

fn load_field(cfg: &RunConfig, field: Option<&Path>) -> Result<(Arc<DomainChart>, MapField)> {
    let path = field.ok_or_else(|| Error::Config("this command needs --field PATH".into()))?;
    let chart = cfg.chart()?;
    let f = MapField::read_csv(path, Arc::clone(&chart), cfg.target()?)?;
    Ok((chart, f))
}

#[derive(Serialize)]
struct WitnessRef {
    file: String,
    label: String,
    index: f64,
}

#[derive(Serialize)]
struct VerdictReport {
    verdict: Verdict,
    min_index: Option<f64>,
    witness_ref: Option<WitnessRef>,
    probes: usize,
    lambda_min: Option<f64>,
    tension_sup: Option<f64>,
    hessian_min_eig: Option<f64>,
    margin: f64,
}

pub fn cmd_stability(cfg: &RunConfig, field: Option<&Path>, out: &Path) -> Result<Status> {
    let (_, f) = load_field(cfg, field)?;
    let potential = cfg.potential()?;
    let st = &cfg.stability;
    let cert_opts = CertificateOptions {
        margin: st.margin,
        tension_threshold: cfg.tension_threshold(),
        rayleigh_iters: st.iters,
        seed: cfg.seed,
    };
    let mut verdict = instability_certificate(&f, &potential, &cert_opts)?;
    if verdict.verdict != Verdict::UnstableCertified && st.samples > 0 {
        let probe_opts = ProbeOptions { include_conformal: st.include_conformal, ..ProbeOptions::default() };
        let probe = stability_probe(&f, &potential, st.samples, cfg.seed, &probe_opts)?;
        verdict.min_index = verdict.min_index.min(probe.min_index);
        verdict.probes += probe.probes;
        verdict.verdict = probe.verdict;
        if probe.witness.is_some() {
            verdict.witness = probe.witness;
            verdict.margin = probe.margin;
        }
    }
    if verdict.hessian_min_eig.is_none() {
        verdict.hessian_min_eig = Some(hessian_min_eig(&f, &potential)?);
    }

    let witness_ref = match &verdict.witness {
        Some(w) => {
            w.section.write_csv(&out.join("witness.csv"))?;
            Some(WitnessRef { file: "witness.csv".into(), label: w.label.clone(), index: w.index })
        }
        None => None,
    };
    let report = VerdictReport {
        verdict: verdict.verdict,
        min_index: verdict.min_index.is_finite().then_some(verdict.min_index),
        witness_ref,
        probes: verdict.probes,
        lambda_min: verdict.lambda_min,
        tension_sup: verdict.tension_sup,
        hessian_min_eig: verdict.hessian_min_eig,
        margin: verdict.margin,
    };
    println!(
        "{} after {} probes (min index {:.4e}, λ_min {})",
        serde_json::to_value(report.verdict).map(|v| v.as_str().unwrap_or_default().to_string()).unwrap_or_default(),
        report.probes,
        verdict.min_index,
        report.lambda_min.map_or("n/a".to_string(), |l| format!("{l:.4e}"))
    );
    write_json(&out.join("verdict.json"), &report)?;
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct DirectionRow {
    s: usize,
    #[serde(flatten)]
    check: IdentityCheck,
    holds: bool,
}

#[derive(Serialize)]
struct LeungReport {
    passed: bool,
    coefficient: f64,
    directions: Vec<DirectionRow>,
    sum: LeungSum,
    sum_holds: bool,
}

pub fn cmd_leung(cfg: &RunConfig, field: Option<&Path>, out: &Path) -> Result<Status> {
    let target = cfg.target()?;
    if !target.is_sphere() {
        return Err(Error::UnsupportedTarget(format!("leung needs a sphere target, got {target}")));
    }
    let (_, f) = load_field(cfg, field)?;
    let potential = cfg.potential()?;
    let dim = target.ambient_dim();
    let mut directions = Vec::with_capacity(dim);
    println!("{:>3} {:>16} {:>16} {:>10}", "s", "lhs", "rhs", "diff");
    for s in 0..dim {
        let mut a = vec![0.0; dim];
        a[s] = 1.0;
        let check = sphere_index_identity(&f, &potential, &a)?;
        println!("{:>3} {:>16.8e} {:>16.8e} {:>10.2e}", s + 1, check.lhs, check.rhs, check.diff);
        directions.push(DirectionRow { s: s + 1, check, holds: check.holds() });
    }
    let sum = leung_sum(&f, &potential)?;
    println!("sum {:.8e} (reduced {:.8e}, diff {:.2e})", sum.sum_direct, sum.sum_reduced, sum.diff);
    let sum_holds = sum.holds();
    let passed = sum_holds && directions.iter().all(|d| d.holds);
    let report = LeungReport { passed, coefficient: 2.0 * (2.0 - target.dim() as f64), directions, sum, sum_holds };
    write_json(&out.join("leung.json"), &report)?;
    Ok(if passed { Status::Ok } else { Status::AssertionFailed })
}

pub fn output_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| cfg.output.dir.clone())
}
