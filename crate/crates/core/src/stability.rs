//! Stability analysis of (approximately) critical maps.
//!
//! On sphere targets the conformal fields `v = a − ⟨a,f⟩f` have the exact covariant
//! derivative `∇̃_X v = −⟨a,f⟩ df(X)`. Using that law in the index form turns the
//! averaged identity over `a = ε_1, …, ε_{n+1}` into exact discrete algebra:
//! `Σ_s I(v_s,v_s) = 2(2−n)∫e_H − Σ_s ∫∇̃²G(v_s,v_s)`, which is negative for
//! nonconstant maps into `S^n`, `n ≥ 3`, with convex `G`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::integrate;
use crate::error::{Error, Result};
use crate::fields::{
    frame_derivative_adjoint, horizontal_covariant_derivatives, horizontal_differential, random_section_with, MapField,
    SectionField,
};
use crate::target::Potential;
use crate::variational::{
    energy_density, index_form, index_form_polarized, index_form_terms, tension_sup, total_energy, IndexTerms,
};
use crate::vecops::{dot, norm, norm_sq};

/// Identity checks hold when `diff ≤ IDENTITY_TOL · scale`.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Relative slack below which a probed index value counts as negative.
pub const PROBE_SLACK: f64 = 1e-8;

/// The conformal field `v = a − φ f` with `φ = ⟨a, f⟩` along a map into the unit sphere.
#[derive(Clone, Debug)]
pub struct ConformalField {
    pub direction: Vec<f64>,
    pub section: SectionField,
    pub phi: Vec<f64>,
}

pub fn conformal_field(f: &MapField, a: &[f64]) -> Result<ConformalField> {
    let target = f.target();
    if !target.is_sphere() {
        return Err(Error::UnsupportedTarget(format!("conformal fields need a sphere target, got {target}")));
    }
    if a.len() != f.dim() || (norm(a) - 1.0).abs() > 1e-12 {
        return Err(Error::Validation("conformal direction must be a unit ambient vector".into()));
    }
    let phi: Vec<f64> = f.points().map(|y| dot(a, y)).collect();
    let mut values = Vec::with_capacity(f.values().len());
    for (y, &p) in f.points().zip(&phi) {
        values.extend(a.iter().zip(y).map(|(ai, yi)| ai - p * yi));
    }
    let section = SectionField::new(Arc::clone(f.chart()), f.dim(), values)?;
    Ok(ConformalField { direction: a.to_vec(), section, phi })
}

impl ConformalField {
    /// `∇̃_{e_A} v = −φ · df(e_A)` from the sampled `df(e_A)`.
    pub fn covariant_derivative(&self, df_a: &SectionField) -> SectionField {
        let dim = df_a.dim();
        let mut out = df_a.clone();
        for (w, p) in out.values_mut().chunks_exact_mut(dim).zip(&self.phi) {
            w.iter_mut().for_each(|x| *x *= -p);
        }
        out
    }
}

fn unit_vector(dim: usize, s: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[s] = 1.0;
    e
}

/// Index form of a conformal field with the analytic covariant derivative.
fn conformal_index_terms(
    f: &MapField,
    cf: &ConformalField,
    df: &[SectionField],
    potential: &Potential,
) -> Result<IndexTerms> {
    let chart = f.chart();
    let target = f.target();
    let mut grad = vec![0.0; chart.len()];
    let mut curv = vec![0.0; chart.len()];
    let mut hess = vec![0.0; chart.len()];
    for idx in 0..chart.len() {
        let v = cf.section.vector(idx);
        let p = cf.phi[idx];
        for col in df {
            let x = col.vector(idx);
            grad[idx] += p * p * norm_sq(x);
            curv[idx] += target.curvature_unchecked(x, v);
        }
        if !potential.is_constant() {
            hess[idx] = potential.eval_unchecked(&target, f.point(idx))?.hess.form(v, v);
        }
    }
    Ok(IndexTerms {
        gradient: integrate(chart, &grad)?,
        curvature: integrate(chart, &curv)?,
        hessian: integrate(chart, &hess)?,
    })
}

/// `I(v,v)` for the conformal field in direction `a`, using `∇̃v = −φ df`.
pub fn conformal_index(f: &MapField, potential: &Potential, a: &[f64]) -> Result<f64> {
    let cf = conformal_field(f, a)?;
    let df = horizontal_differential(f);
    Ok(conformal_index_terms(f, &cf, &df, potential)?.total())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub diff: f64,
    /// `|lhs| + |rhs| + 1`
    pub scale: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, diff: (lhs - rhs).abs(), scale: lhs.abs() + rhs.abs() + 1.0 }
    }

    pub fn holds(&self) -> bool {
        self.diff <= IDENTITY_TOL * self.scale
    }
}

/// `I(v,v)` against `∫{2e_H(φ² − |v|²) + Σ_i⟨df(e_i),v⟩² − ∇̃²G(v,v)}`.
pub fn sphere_index_identity(f: &MapField, potential: &Potential, a: &[f64]) -> Result<IdentityCheck> {
    let cf = conformal_field(f, a)?;
    let df = horizontal_differential(f);
    let lhs = conformal_index_terms(f, &cf, &df, potential)?.total();

    let chart = f.chart();
    let target = f.target();
    let e_h = energy_density(f);
    let mut rhs = vec![0.0; chart.len()];
    for idx in 0..chart.len() {
        let v = cf.section.vector(idx);
        let p = cf.phi[idx];
        let mut r = 2.0 * e_h[idx] * (p * p - norm_sq(v));
        r += df.iter().map(|col| dot(col.vector(idx), v).powi(2)).sum::<f64>();
        if !potential.is_constant() {
            r -= potential.eval_unchecked(&target, f.point(idx))?.hess.form(v, v);
        }
        rhs[idx] = r;
    }
    Ok(IdentityCheck::new(lhs, integrate(chart, &rhs)?))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeungSum {
    /// `Σ_s I(v_s, v_s)`
    pub sum_direct: f64,
    /// `2(2−n)∫e_H − Σ_s∫∇̃²G(v_s,v_s)`
    pub sum_reduced: f64,
    pub diff: f64,
    pub scale: f64,
    /// `I(v_s, v_s)` for each coordinate direction.
    pub per_direction: Vec<f64>,
    /// `∫ e_H dv_g`
    pub energy_integral: f64,
}

impl LeungSum {
    pub fn holds(&self) -> bool {
        self.diff <= IDENTITY_TOL * self.scale
    }
}

pub fn leung_sum(f: &MapField, potential: &Potential) -> Result<LeungSum> {
    let target = f.target();
    if !target.is_sphere() {
        return Err(Error::UnsupportedTarget(format!(
            "the conformal-field average needs a sphere target, got {target}"
        )));
    }
    let n = target.dim() as f64;
    let dim = f.dim();
    let df = horizontal_differential(f);
    let energy_integral = integrate(f.chart(), &energy_density(f))?;
    let mut per_direction = Vec::with_capacity(dim);
    let mut hess_sum = 0.0;
    for s in 0..dim {
        let cf = conformal_field(f, &unit_vector(dim, s))?;
        let terms = conformal_index_terms(f, &cf, &df, potential)?;
        per_direction.push(terms.total());
        hess_sum += terms.hessian;
    }
    let sum_direct: f64 = per_direction.iter().sum();
    let sum_reduced = 2.0 * (2.0 - n) * energy_integral - hess_sum;
    let check = IdentityCheck::new(sum_direct, sum_reduced);
    Ok(LeungSum { sum_direct, sum_reduced, diff: check.diff, scale: check.scale, per_direction, energy_integral })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    StableProbed,
    UnstableCertified,
    Inconclusive,
}

/// A section with negative index value.
#[derive(Clone, Debug)]
pub struct Witness {
    /// Where it came from, e.g. `conformal:s=2`, `probe:17`, `rayleigh`.
    pub label: String,
    pub section: SectionField,
    pub index: f64,
}

#[derive(Clone, Debug)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    /// Smallest index value seen (`+∞` if nothing was evaluated).
    pub min_index: f64,
    pub probes: usize,
    pub lambda_min: Option<f64>,
    pub tension_sup: Option<f64>,
    pub hessian_min_eig: Option<f64>,
    /// Margin used for certification.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateOptions {
    /// Defaults to `1e-6 · (1 + |E(f)|)`.
    pub margin: Option<f64>,
    /// Largest `‖τ_HG‖∞` accepted as critical.
    pub tension_threshold: f64,
    /// Rayleigh iterations for the fallback search; 0 disables it.
    pub rayleigh_iters: usize,
    pub seed: u64,
}

impl Default for CertificateOptions {
    fn default() -> Self {
        Self { margin: None, tension_threshold: 1e-2, rayleigh_iters: 100, seed: 0 }
    }
}

pub fn default_margin(f: &MapField, potential: &Potential) -> Result<f64> {
    Ok(1e-6 * (1.0 + total_energy(f, potential)?.abs()))
}

/// Smallest eigenvalue of `∇̃²G` over the image points of `f`.
pub fn hessian_min_eig(f: &MapField, potential: &Potential) -> Result<f64> {
    if potential.is_constant() {
        return Ok(0.0);
    }
    let target = f.target();
    let mut worst = f64::INFINITY;
    for y in f.points() {
        let ev = potential.eval_unchecked(&target, y)?;
        worst = worst.min(ev.hess.min_eigenvalue(&target.tangent_basis(y)));
    }
    Ok(worst)
}

/// Tries the conformal fields first (sphere targets), then a Rayleigh quotient search.
pub fn instability_certificate(
    f: &MapField,
    potential: &Potential,
    opts: &CertificateOptions,
) -> Result<StabilityVerdict> {
    let sup = tension_sup(f, potential)?;
    if !(sup <= opts.tension_threshold) {
        return Err(Error::Precondition(format!(
            "map is not critical enough: ‖τ‖∞ = {sup:e} exceeds {:e}",
            opts.tension_threshold
        )));
    }
    let margin = match opts.margin {
        Some(m) => m,
        None => default_margin(f, potential)?,
    };
    let mut verdict = StabilityVerdict {
        verdict: Verdict::Inconclusive,
        witness: None,
        min_index: f64::INFINITY,
        probes: 0,
        lambda_min: None,
        tension_sup: Some(sup),
        hessian_min_eig: Some(hessian_min_eig(f, potential)?),
        margin,
    };

    if f.target().is_sphere() {
        let sum = leung_sum(f, potential)?;
        verdict.probes = sum.per_direction.len();
        let (s, &value) =
            sum.per_direction.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("at least one direction");
        verdict.min_index = value;
        if value < -margin {
            let cf = conformal_field(f, &unit_vector(f.dim(), s))?;
            verdict.verdict = Verdict::UnstableCertified;
            verdict.witness =
                Some(Witness { label: format!("conformal:s={}", s + 1), section: cf.section, index: value });
            return Ok(verdict);
        }
    }

    if opts.rayleigh_iters > 0 {
        let ray = rayleigh_minimize(f, potential, opts.rayleigh_iters, opts.seed)?;
        verdict.lambda_min = Some(ray.lambda_min);
        verdict.min_index = verdict.min_index.min(ray.lambda_min);
        // the Rayleigh minimizer has unit mass, so I(V,V) = λ
        if ray.lambda_min < -margin {
            verdict.verdict = Verdict::UnstableCertified;
            verdict.witness = Some(Witness { label: "rayleigh".into(), section: ray.section, index: ray.lambda_min });
        }
    }
    Ok(verdict)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOptions {
    /// Put the conformal fields `v_1 … v_{n+1}` first in the probe sequence (sphere only).
    pub include_conformal: bool,
    pub amplitude: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { include_conformal: true, amplitude: 1.0 }
    }
}

fn normalized(v: SectionField) -> SectionField {
    let mass = v.mass();
    if mass > 0.0 {
        v.scaled(1.0 / mass.sqrt())
    } else {
        v
    }
}

/// Probe `k` of the sequence; probes depend only on `(seed, k)`.
fn probe_section(f: &MapField, k: usize, seed: u64, opts: &ProbeOptions) -> Result<(String, SectionField)> {
    let dim = f.dim();
    if opts.include_conformal && f.target().is_sphere() && k < dim {
        let cf = conformal_field(f, &unit_vector(dim, k))?;
        return Ok((format!("conformal:s={}", k + 1), normalized(cf.section)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    Ok((format!("probe:{k}"), normalized(random_section_with(f, opts.amplitude, &mut rng))))
}

/// Evaluates the index form on `samples` unit-mass sections; any value below
/// `−PROBE_SLACK · scale` certifies instability, where `scale` is one plus the
/// magnitudes of the three index-form terms.
pub fn stability_probe(
    f: &MapField,
    potential: &Potential,
    samples: usize,
    seed: u64,
    opts: &ProbeOptions,
) -> Result<StabilityVerdict> {
    let values: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|k| -> Result<(f64, f64)> {
            let (_, v) = probe_section(f, k, seed, opts)?;
            let terms = index_form_terms(f, &v, potential)?;
            Ok((terms.total(), terms.scale()))
        })
        .collect::<Result<_>>()?;

    let mut verdict = StabilityVerdict {
        verdict: if samples == 0 { Verdict::Inconclusive } else { Verdict::StableProbed },
        witness: None,
        min_index: f64::INFINITY,
        probes: samples,
        lambda_min: None,
        tension_sup: None,
        hessian_min_eig: None,
        margin: 0.0,
    };
    let mut worst: Option<(usize, f64)> = None;
    let mut worst_slack = 0.0;
    for (k, &(value, scale)) in values.iter().enumerate() {
        verdict.min_index = verdict.min_index.min(value);
        let slack = PROBE_SLACK * scale;
        if value < -slack && worst.is_none_or(|(_, w)| value < w) {
            worst = Some((k, value));
            worst_slack = slack;
        }
    }
    if let Some((k, value)) = worst {
        let (label, section) = probe_section(f, k, seed, opts)?;
        verdict.verdict = Verdict::UnstableCertified;
        verdict.witness = Some(Witness { label, section, index: value });
        verdict.margin = worst_slack;
    }
    Ok(verdict)
}

#[derive(Clone, Debug)]
pub struct RayleighResult {
    pub lambda_min: f64,
    /// Unit-mass minimizer.
    pub section: SectionField,
    /// Rayleigh value after each iteration (nonincreasing).
    pub history: Vec<f64>,
    /// Restarts caused by a degenerate starting section.
    pub restarts: usize,
}

/// `A V` with `I(V,W) = ∫⟨AV, W⟩ dv_g` for tangent `W`.
fn index_operator(f: &MapField, v: &SectionField, potential: &Potential) -> Result<SectionField> {
    let chart = f.chart();
    let target = f.target();
    let dim = f.dim();
    let df = horizontal_differential(f);
    let dv = horizontal_covariant_derivatives(f, v);

    let mut out = vec![0.0; chart.len() * dim];
    for (i, dvi) in dv.iter().enumerate() {
        let weighted: Vec<f64> = dvi
            .chunks_exact(dim)
            .enumerate()
            .flat_map(|(idx, w)| {
                let wt = chart.weight(idx);
                w.iter().map(move |x| wt * x)
            })
            .collect();
        let adj = frame_derivative_adjoint(chart, &weighted, dim, i);
        for (o, a) in out.iter_mut().zip(adj) {
            *o += a;
        }
    }
    for (idx, o) in out.chunks_exact_mut(dim).enumerate() {
        let wt = chart.weight(idx);
        o.iter_mut().for_each(|x| *x /= wt);
        let vi = v.vector(idx);
        for col in &df {
            target.add_curvature_operator(col.vector(idx), vi, -1.0, o);
        }
        if !potential.is_constant() {
            let y = f.point(idx);
            potential.eval_unchecked(&target, y)?.hess.add_apply(vi, -1.0, o);
        }
        target.project_in_place(f.point(idx), o);
    }
    SectionField::new(Arc::clone(chart), dim, out)
}

/// Minimizes `I(V,V) / ∫|V|²` over tangent sections by Rayleigh-Ritz steps on
/// `span{V, residual, previous step}`; the small projected matrices are assembled
/// with the polarized index form.
pub fn rayleigh_minimize(f: &MapField, potential: &Potential, iters: usize, seed: u64) -> Result<RayleighResult> {
    if iters == 0 {
        return Err(Error::Validation("rayleigh_minimize needs at least one iteration".into()));
    }
    let mut restarts = 0;
    let mut v = loop {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(restarts as u64));
        let candidate = random_section_with(f, 1.0, &mut rng);
        if candidate.mass().sqrt() >= 1e-14 {
            break normalized(candidate);
        }
        restarts += 1;
        if restarts > 16 {
            return Err(Error::Validation("could not draw a nondegenerate starting section".into()));
        }
    };
    let mut lambda = index_form(f, &v, potential)?;
    let mut history = Vec::with_capacity(iters);
    let mut previous: Option<SectionField> = None;

    for _ in 0..iters {
        let residual = index_operator(f, &v, potential)?.add_scaled(-lambda, &v);
        if residual.mass().sqrt() <= 1e-12 * (1.0 + lambda.abs()) {
            history.push(lambda);
            break;
        }
        let mut basis = vec![v.clone()];
        for cand in std::iter::once(residual).chain(previous.take()) {
            let mut w = cand;
            for b in &basis {
                w = w.add_scaled(-w.inner(b), b);
            }
            let r = w.mass().sqrt();
            if r > 1e-10 {
                basis.push(w.scaled(1.0 / r));
            }
        }
        let k = basis.len();
        let mut gram = DMatrix::zeros(k, k);
        for a in 0..k {
            gram[(a, a)] = index_form(f, &basis[a], potential)?;
            for b in a + 1..k {
                let val = index_form_polarized(f, &basis[a], &basis[b], potential)?;
                gram[(a, b)] = val;
                gram[(b, a)] = val;
            }
        }
        let eig = SymmetricEigen::new(gram);
        let (j, _) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty basis");
        let coeffs = eig.eigenvectors.column(j);
        let mut next = basis[0].scaled(coeffs[0]);
        for (b, c) in basis.iter().zip(coeffs.iter()).skip(1) {
            next = next.add_scaled(*c, b);
        }
        let step = next.add_scaled(-coeffs[0], &basis[0]);
        let next = normalized(next.project_onto(f)?);
        let next_lambda = index_form(f, &next, potential)?;
        if next_lambda <= lambda {
            v = next;
            lambda = next_lambda;
            previous = Some(step);
        }
        history.push(lambda);
    }
    Ok(RayleighResult { lambda_min: lambda, section: v, history, restarts })
}
