//! Grid-sampled maps, sections of the pull-back bundle, and the discrete calculus on them.
//!
//! Vector-valued fields are stored flat: point `idx` occupies
//! `values[idx * dim .. (idx + 1) * dim]`, with points in lexicographic grid order.

mod io;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::domain::DomainChart;
use crate::error::{Error, Result};
use crate::target::{Target, ON_MANIFOLD_TOL, TANGENT_TOL};
use crate::vecops::{dot, norm, norm_sq};

pub use io::{read_field_csv, write_field_csv, FieldData};

/// A map `f: M → N` sampled at the grid points, stored as ambient points.
#[derive(Clone, Debug)]
pub struct MapField {
    chart: Arc<DomainChart>,
    target: Target,
    values: Vec<f64>,
}

impl MapField {
    /// Accepts points within the on-manifold gate and renormalizes them onto the target.
    pub fn new(chart: Arc<DomainChart>, target: Target, mut values: Vec<f64>) -> Result<Self> {
        let dim = target.ambient_dim();
        if values.len() != chart.len() * dim {
            return Err(Error::Validation(format!(
                "map has {} values, expected {} points × {dim}",
                values.len(),
                chart.len()
            )));
        }
        for (idx, y) in values.chunks_exact_mut(dim).enumerate() {
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!("non-finite map value at point {idx}")));
            }
            if target.constraint_defect(y) > ON_MANIFOLD_TOL {
                return Err(Error::State(format!("map value at point {idx} is off {target}")));
            }
            renormalize(&target, y);
        }
        Ok(Self { chart, target, values })
    }

    /// Samples `g` at the grid coordinates; on the sphere the samples are normalized,
    /// so `g` need only avoid the origin.
    pub fn from_fn(chart: Arc<DomainChart>, target: Target, g: impl Fn([f64; 3]) -> Vec<f64>) -> Result<Self> {
        let dim = target.ambient_dim();
        let mut values = Vec::with_capacity(chart.len() * dim);
        for idx in 0..chart.len() {
            let mut y = g(chart.coords(idx));
            if y.len() != dim {
                return Err(Error::Validation(format!("sample has {} components, {target} needs {dim}", y.len())));
            }
            if target.is_sphere() {
                let r = norm(&y);
                if !(r > 1e-12) {
                    return Err(Error::Validation(format!("sample at point {idx} cannot be projected to {target}")));
                }
                y.iter_mut().for_each(|v| *v /= r);
            }
            values.extend(y);
        }
        Self::new(chart, target, values)
    }

    pub fn constant(chart: Arc<DomainChart>, target: Target, point: &[f64]) -> Result<Self> {
        target.check_point(point)?;
        let values = point.iter().copied().cycle().take(chart.len() * point.len()).collect();
        Self::new(chart, target, values)
    }

    pub fn chart(&self) -> &Arc<DomainChart> {
        &self.chart
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn dim(&self) -> usize {
        self.target.ambient_dim()
    }

    pub fn len(&self) -> usize {
        self.chart.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chart.is_empty()
    }

    #[inline]
    pub fn point(&self, idx: usize) -> &[f64] {
        let d = self.dim();
        &self.values[idx * d..(idx + 1) * d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn points(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim())
    }

    /// `max_x ||f(x)| − 1|` on the sphere, 0 on flat targets.
    pub fn constraint_drift(&self) -> f64 {
        self.points().map(|y| self.target.constraint_defect(y)).fold(0.0, f64::max)
    }

    /// The pointwise geodesic variation `x ↦ exp_{f(x)}(t V(x))`.
    pub fn geodesic_variation(&self, v: &SectionField, t: f64) -> Result<MapField> {
        self.check_section(v)?;
        let dim = self.dim();
        let mut values = Vec::with_capacity(self.values.len());
        let mut tv = vec![0.0; dim];
        for (y, vi) in self.points().zip(v.vectors()) {
            for (o, a) in tv.iter_mut().zip(vi) {
                *o = t * a;
            }
            values.extend(self.target.exp_unchecked(y, &tv));
        }
        Ok(MapField { chart: Arc::clone(&self.chart), target: self.target, values })
    }

    pub(crate) fn check_section(&self, v: &SectionField) -> Result<()> {
        if !Arc::ptr_eq(&self.chart, &v.chart) && self.chart.shape() != v.chart.shape() {
            return Err(Error::Validation("section and map live on different grids".into()));
        }
        if v.dim != self.dim() {
            return Err(Error::Validation(format!("section has dimension {}, map has {}", v.dim, self.dim())));
        }
        Ok(())
    }
}

fn renormalize(target: &Target, y: &mut [f64]) {
    if target.is_sphere() && (norm_sq(y) - 1.0).abs() > 4.0 * f64::EPSILON {
        let r = norm(y);
        y.iter_mut().for_each(|v| *v /= r);
    }
}

/// A section of `f⁻¹TN` (or any ambient-vector field) sampled on the grid.
#[derive(Clone, Debug)]
pub struct SectionField {
    chart: Arc<DomainChart>,
    dim: usize,
    values: Vec<f64>,
}

impl SectionField {
    pub fn new(chart: Arc<DomainChart>, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != chart.len() * dim {
            return Err(Error::Validation(format!(
                "section has {} values, expected {} points × {dim}",
                values.len(),
                chart.len()
            )));
        }
        Ok(Self { chart, dim, values })
    }

    pub fn zeros(chart: Arc<DomainChart>, dim: usize) -> Self {
        let values = vec![0.0; chart.len() * dim];
        Self { chart, dim, values }
    }

    /// Samples `g` and projects each sample onto the tangent space of `f`.
    pub fn tangent_from_fn(f: &MapField, g: impl Fn([f64; 3]) -> Vec<f64>) -> Result<Self> {
        let dim = f.dim();
        let mut values = Vec::with_capacity(f.values.len());
        for idx in 0..f.len() {
            let mut w = g(f.chart.coords(idx));
            if w.len() != dim {
                return Err(Error::Validation(format!("sample has {} components, expected {dim}", w.len())));
            }
            f.target.project_in_place(f.point(idx), &mut w);
            values.extend(w);
        }
        Ok(Self { chart: Arc::clone(&f.chart), dim, values })
    }

    pub fn chart(&self) -> &Arc<DomainChart> {
        &self.chart
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn vector(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.dim..(idx + 1) * self.dim]
    }

    pub fn vectors(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.dim)
    }

    /// Pointwise tangent projection along `f`.
    pub fn project_onto(&self, f: &MapField) -> Result<Self> {
        f.check_section(self)?;
        let mut out = self.clone();
        for (y, w) in f.points().zip(out.values.chunks_exact_mut(self.dim)) {
            f.target.project_in_place(y, w);
        }
        Ok(out)
    }

    /// Largest relative normal component along `f`.
    pub fn tangency_defect(&self, f: &MapField) -> f64 {
        f.points().zip(self.vectors()).map(|(y, w)| f.target.tangency_defect(y, w)).fold(0.0, f64::max)
    }

    pub fn check_tangent(&self, f: &MapField) -> Result<()> {
        f.check_section(self)?;
        let defect = self.tangency_defect(f);
        if !(defect <= TANGENT_TOL) {
            return Err(Error::Validation(format!("section is not tangent along the map (defect {defect:e})")));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        let values = self.values.iter().map(|v| s * v).collect();
        Self { chart: Arc::clone(&self.chart), dim: self.dim, values }
    }

    /// `self + s · other`.
    pub fn add_scaled(&self, s: f64, other: &SectionField) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + s * b).collect();
        Self { chart: Arc::clone(&self.chart), dim: self.dim, values }
    }

    /// `∫⟨V, W⟩ dv_g`.
    pub fn inner(&self, other: &SectionField) -> f64 {
        let pointwise: Vec<f64> = self.vectors().zip(other.vectors()).map(|(a, b)| dot(a, b)).collect();
        crate::domain::integrate(&self.chart, &pointwise).expect("sections share the chart")
    }

    /// `∫|V|² dv_g`.
    pub fn mass(&self) -> f64 {
        self.inner(self)
    }

    pub fn sup_norm(&self) -> f64 {
        self.vectors().map(norm).fold(0.0, f64::max)
    }
}

/// Periodic central difference of every component of `u` along coordinate `axis`.
fn coordinate_derivative(chart: &DomainChart, u: &[f64], comps: usize, axis: usize) -> Vec<f64> {
    let shape = chart.shape();
    let inv_h = 1.0 / chart.spacing()[axis];
    let pairs = chart.stencil().pairs();
    let mut out = vec![0.0; u.len()];
    out.par_chunks_mut(comps).enumerate().for_each(|(idx, o)| {
        for &(offset, weight) in pairs {
            let fwd = shape.shifted(idx, axis, offset);
            let bwd = shape.shifted(idx, axis, -offset);
            let (f, b) = (&u[fwd * comps..(fwd + 1) * comps], &u[bwd * comps..(bwd + 1) * comps]);
            for ((oc, x), y) in o.iter_mut().zip(f).zip(b) {
                *oc += weight * (x - y);
            }
        }
        o.iter_mut().for_each(|v| *v *= inv_h);
    });
    out
}

pub(crate) fn coordinate_gradient(chart: &DomainChart, u: &[f64], comps: usize) -> [Vec<f64>; 3] {
    [
        coordinate_derivative(chart, u, comps, 0),
        coordinate_derivative(chart, u, comps, 1),
        coordinate_derivative(chart, u, comps, 2),
    ]
}

/// `e_a(u) = Σ_k e_a^k ∂_k u` from precomputed coordinate derivatives.
pub(crate) fn contract_frame(chart: &DomainChart, grads: &[Vec<f64>; 3], comps: usize, a: usize) -> Vec<f64> {
    let mut out = vec![0.0; grads[0].len()];
    out.par_chunks_mut(comps).enumerate().for_each(|(idx, o)| {
        let e = chart.frame(idx)[a];
        for (k, g) in grads.iter().enumerate() {
            if e[k] != 0.0 {
                for (oc, gc) in o.iter_mut().zip(&g[idx * comps..(idx + 1) * comps]) {
                    *oc += e[k] * gc;
                }
            }
        }
    });
    out
}

fn check_field_shape(chart: &DomainChart, u: &[f64], comps: usize) -> Result<()> {
    if comps == 0 || u.len() != chart.len() * comps {
        return Err(Error::Validation(format!(
            "field has {} values, expected {} points × {comps}",
            u.len(),
            chart.len()
        )));
    }
    Ok(())
}

/// Derivative of a scalar (`comps = 1`) or vector field along the frame vector `e_a`
/// (zero-based `a`).
pub fn frame_derivative(chart: &DomainChart, u: &[f64], comps: usize, a: usize) -> Result<Vec<f64>> {
    check_field_shape(chart, u, comps)?;
    if a >= 3 {
        return Err(Error::Validation(format!("frame index {a} out of range")));
    }
    let grads = coordinate_gradient(chart, u, comps);
    Ok(contract_frame(chart, &grads, comps, a))
}

/// Transpose of `frame_derivative` with respect to the plain (unweighted) grid sum:
/// `−Σ_k ∂_k(e_a^k g)`, using antisymmetry of periodic central stencils.
pub(crate) fn frame_derivative_adjoint(chart: &DomainChart, g: &[f64], comps: usize, a: usize) -> Vec<f64> {
    let mut out = vec![0.0; g.len()];
    for k in 0..3 {
        let coeff_is_zero = (0..chart.len()).all(|idx| chart.frame(idx)[a][k] == 0.0);
        if coeff_is_zero {
            continue;
        }
        let weighted: Vec<f64> = g
            .chunks_exact(comps)
            .enumerate()
            .flat_map(|(idx, gc)| {
                let c = chart.frame(idx)[a][k];
                gc.iter().map(move |v| c * v)
            })
            .collect();
        let d = coordinate_derivative(chart, &weighted, comps, k);
        for (o, v) in out.iter_mut().zip(d) {
            *o -= v;
        }
    }
    out
}

/// `df(e_i)` for `i = 1..m`, each projected onto `T_{f(x)}N`.
pub fn horizontal_differential(f: &MapField) -> Vec<SectionField> {
    let chart = f.chart();
    let dim = f.dim();
    let grads = coordinate_gradient(chart, f.values(), dim);
    (0..chart.m())
        .map(|i| {
            let mut values = contract_frame(chart, &grads, dim, i);
            for (y, w) in f.points().zip(values.chunks_exact_mut(dim)) {
                f.target.project_in_place(y, w);
            }
            SectionField { chart: Arc::clone(chart), dim, values }
        })
        .collect()
}

/// `∇̃^f_{e_a} V`: the frame derivative of `V` projected along `f`.
pub fn pullback_covariant_derivative(f: &MapField, v: &SectionField, a: usize) -> Result<SectionField> {
    v.check_tangent(f)?;
    let dim = f.dim();
    let mut values = frame_derivative(f.chart(), v.values(), dim, a)?;
    for (y, w) in f.points().zip(values.chunks_exact_mut(dim)) {
        f.target.project_in_place(y, w);
    }
    Ok(SectionField { chart: Arc::clone(f.chart()), dim, values })
}

/// `∇̃^f_{e_i} V` for every horizontal `i`, without the tangency gate.
pub(crate) fn horizontal_covariant_derivatives(f: &MapField, v: &SectionField) -> Vec<Vec<f64>> {
    let chart = f.chart();
    let dim = f.dim();
    let grads = coordinate_gradient(chart, v.values(), dim);
    (0..chart.m())
        .map(|i| {
            let mut values = contract_frame(chart, &grads, dim, i);
            for (y, w) in f.points().zip(values.chunks_exact_mut(dim)) {
                f.target.project_in_place(y, w);
            }
            values
        })
        .collect()
}

const MODES: [[i32; 3]; 13] = [
    [1, 0, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 1, 0],
    [1, -1, 0],
    [1, 0, 1],
    [1, 0, -1],
    [0, 1, 1],
    [0, 1, -1],
    [1, 1, 1],
    [1, 1, -1],
    [1, -1, 1],
    [1, -1, -1],
];

/// Random trigonometric field with wavevectors in `{−1,0,1}³`; deterministic in the rng state.
pub(crate) fn random_smooth_ambient(chart: &DomainChart, dim: usize, amplitude: f64, rng: &mut impl Rng) -> Vec<f64> {
    let scale = amplitude / (MODES.len() as f64).sqrt();
    let coeffs: Vec<(f64, [f64; 13], [f64; 13])> = (0..dim)
        .map(|_| {
            let mean = rng.gen_range(-1.0..1.0) * scale;
            let mut a = [0.0; 13];
            let mut b = [0.0; 13];
            for m in 0..MODES.len() {
                a[m] = rng.gen_range(-1.0..1.0) * scale;
                b[m] = rng.gen_range(-1.0..1.0) * scale;
            }
            (mean, a, b)
        })
        .collect();
    let periods = chart.periods();
    let mut out = Vec::with_capacity(chart.len() * dim);
    for idx in 0..chart.len() {
        let p = chart.coords(idx);
        let phase: Vec<f64> = MODES
            .iter()
            .map(|k| (0..3).map(|ax| k[ax] as f64 * p[ax] * std::f64::consts::TAU / periods[ax]).sum())
            .collect();
        for (mean, a, b) in &coeffs {
            let mut v = *mean;
            for (m, ph) in phase.iter().enumerate() {
                let (s, c) = ph.sin_cos();
                v += a[m] * c + b[m] * s;
            }
            out.push(v);
        }
    }
    out
}

/// A random smooth tangent section along `f`, deterministic in `seed`.
pub fn random_section(f: &MapField, seed: u64, amplitude: f64) -> SectionField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_section_with(f, amplitude, &mut rng)
}

pub(crate) fn random_section_with(f: &MapField, amplitude: f64, rng: &mut impl Rng) -> SectionField {
    let dim = f.dim();
    let mut values = random_smooth_ambient(f.chart(), dim, amplitude, rng);
    for (y, w) in f.points().zip(values.chunks_exact_mut(dim)) {
        f.target.project_in_place(y, w);
    }
    SectionField { chart: Arc::clone(f.chart()), dim, values }
}
