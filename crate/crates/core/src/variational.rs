//! Horizontal energy with potential, its tension field, the index form, and the
//! residual checks that compare them against finite differences along geodesic
//! variations `f_t = exp_f(tV)`.

use std::sync::Arc;

use serde::Serialize;

use crate::domain::{integrate, DomainChart};
use crate::error::{Error, Result};
use crate::fields::{contract_frame, coordinate_gradient, horizontal_covariant_derivatives, horizontal_differential};
use crate::fields::{MapField, SectionField};
use crate::target::Potential;
use crate::vecops::{axpy, dot, norm_sq};

/// One analytic-versus-discrete comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationReport {
    pub check: String,
    pub grid: [usize; 3],
    pub h: f64,
    pub dt: f64,
    pub analytic: f64,
    pub fd: f64,
    pub residual: f64,
    /// Observed order against the next coarser level, when part of a study.
    pub order: Option<f64>,
}

impl VariationReport {
    fn new(check: &str, chart: &DomainChart, dt: f64, analytic: f64, fd: f64) -> Self {
        Self {
            check: check.to_string(),
            grid: chart.shape().n,
            h: chart.h(),
            dt,
            analytic,
            fd,
            residual: (analytic - fd).abs(),
            order: None,
        }
    }

    /// Magnitude used to decide whether a residual is at rounding level.
    pub fn scale(&self) -> f64 {
        1.0 + self.analytic.abs() + self.fd.abs()
    }

    pub fn at_rounding_floor(&self) -> bool {
        self.residual <= ROUNDING_FLOOR * self.scale()
    }
}

/// Residuals below `ROUNDING_FLOOR · scale` carry no convergence information.
pub const ROUNDING_FLOOR: f64 = 1e-10;

/// Reports for one check over a sequence of refinements (coarse to fine).
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceStudy {
    pub check: String,
    pub reports: Vec<VariationReport>,
    /// Order between consecutive levels.
    pub orders: Vec<f64>,
    /// True when every level already satisfies the identity to rounding.
    pub exact: bool,
}

impl ConvergenceStudy {
    pub fn new(mut reports: Vec<VariationReport>) -> Self {
        let check = reports.first().map(|r| r.check.clone()).unwrap_or_default();
        let mut orders = Vec::new();
        for k in 1..reports.len() {
            let (coarse, fine) = (&reports[k - 1], &reports[k]);
            let order = (coarse.residual / fine.residual).ln() / (coarse.h / fine.h).ln();
            reports[k].order = Some(order);
            orders.push(order);
        }
        let exact = !reports.is_empty() && reports.iter().all(VariationReport::at_rounding_floor);
        Self { check, reports, orders, exact }
    }

    /// Order observed on the finest pair of levels.
    pub fn observed_order(&self) -> Option<f64> {
        self.orders.last().copied()
    }

    /// Residuals shrink at every refinement and the finest-pair order reaches `threshold`,
    /// or the identity already holds to rounding on every level.
    pub fn passes(&self, threshold: f64) -> bool {
        if self.exact {
            return true;
        }
        let decreasing = self.reports.windows(2).all(|w| w[1].residual < w[0].residual);
        decreasing && self.observed_order().is_some_and(|o| o >= threshold)
    }
}

/// `e_H(f) = ½ Σ_i |df(e_i)|²` at every grid point.
pub fn energy_density(f: &MapField) -> Vec<f64> {
    let df = horizontal_differential(f);
    energy_density_from(&df, f.len())
}

fn energy_density_from(df: &[SectionField], len: usize) -> Vec<f64> {
    (0..len).map(|idx| 0.5 * df.iter().map(|col| norm_sq(col.vector(idx))).sum::<f64>()).collect()
}

/// `E(f) = ∫_M [e_H(f) − G(f)] dv_g`.
pub fn total_energy(f: &MapField, potential: &Potential) -> Result<f64> {
    let target = f.target();
    let mut density = energy_density(f);
    if !matches!(potential, Potential::Constant(c) if *c == 0.0) {
        for (d, y) in density.iter_mut().zip(f.points()) {
            *d -= potential.value(&target, y)?;
        }
    }
    integrate(f.chart(), &density)
}

/// `Σ_i df(e_i)`-combination `Σ_i c_i df(e_i)` at one point.
fn combine(df: &[SectionField], idx: usize, coeffs: &[f64], out: &mut [f64]) {
    for (col, &c) in df.iter().zip(coeffs) {
        if c != 0.0 {
            axpy(c, col.vector(idx), out);
        }
    }
}

/// `τ_HG(f) = β_H(f)(e_i,e_i) − df(ζ) + ∇̃G(f)`, with
/// `β_H(f)(e_i,e_i) = ∇̃^f_{e_i} df(e_i) − df(π_H ∇_{e_i} e_i)`.
pub fn tension_with_potential(f: &MapField, potential: &Potential) -> Result<SectionField> {
    let chart = f.chart();
    let target = f.target();
    let dim = f.dim();
    let m = chart.m();
    let df = horizontal_differential(f);

    let mut tau = vec![0.0; chart.len() * dim];
    for (i, col) in df.iter().enumerate() {
        let grads = coordinate_gradient(chart, col.values(), dim);
        let second = contract_frame(chart, &grads, dim, i);
        for (t, s) in tau.iter_mut().zip(second) {
            *t += s;
        }
    }

    let mut correction = vec![0.0; m];
    for (idx, t) in tau.chunks_exact_mut(dim).enumerate() {
        let y = f.point(idx);
        target.project_in_place(y, t);
        let gamma = chart.gamma(idx);
        let zeta = chart.zeta(idx);
        // Σ_i Γ^j_{ii} + ζ^j, the coefficient of df(e_j) removed from the trace
        for (j, c) in correction.iter_mut().enumerate() {
            *c = -(0..m).map(|i| gamma[i][i][j]).sum::<f64>() - zeta[j];
        }
        combine(&df, idx, &correction, t);
        if !potential.is_constant() {
            let ev = potential.eval_unchecked(&target, y)?;
            axpy(1.0, &ev.grad, t);
        }
    }
    SectionField::new(Arc::clone(chart), dim, tau)
}

/// Central four-point estimate of `d/dt E(exp_f(tV))` at `t = 0`.
fn energy_first_derivative(f: &MapField, v: &SectionField, potential: &Potential, dt: f64) -> Result<f64> {
    let e = |t: f64| -> Result<f64> { total_energy(&f.geodesic_variation(v, t)?, potential) };
    Ok((-e(2.0 * dt)? + 8.0 * e(dt)? - 8.0 * e(-dt)? + e(-2.0 * dt)?) / (12.0 * dt))
}

/// Central five-point estimate of `d²/dt² E(exp_f(tV))` at `t = 0`.
fn energy_second_derivative(f: &MapField, v: &SectionField, potential: &Potential, dt: f64) -> Result<f64> {
    let e = |t: f64| -> Result<f64> { total_energy(&f.geodesic_variation(v, t)?, potential) };
    Ok((-e(2.0 * dt)? + 16.0 * e(dt)? - 30.0 * e(0.0)? + 16.0 * e(-dt)? - e(-2.0 * dt)?) / (12.0 * dt * dt))
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Validation(format!("finite-difference step must be positive, got {dt}")));
    }
    Ok(())
}

/// First variation: `−∫⟨V, τ_HG⟩` against the finite-difference derivative of the energy.
pub fn first_variation_residual(
    f: &MapField,
    v: &SectionField,
    potential: &Potential,
    dt: f64,
) -> Result<VariationReport> {
    check_dt(dt)?;
    v.check_tangent(f)?;
    let tau = tension_with_potential(f, potential)?;
    let analytic = -v.inner(&tau);
    let fd = energy_first_derivative(f, v, potential, dt)?;
    Ok(VariationReport::new("first-variation", f.chart(), dt, analytic, fd))
}

/// Divergence identity
/// `∫[e_i⟨W, df(e_i)⟩ − ⟨W, df_H(∇_{e_i}e_i)⟩] = ∫⟨W, df(ζ)⟩`.
///
/// `analytic` holds the `ζ` side and `fd` the discrete divergence side.
pub fn divergence_identity_residual(f: &MapField, w: &SectionField) -> Result<VariationReport> {
    w.check_tangent(f)?;
    let chart = f.chart();
    let m = chart.m();
    let df = horizontal_differential(f);

    let mut lhs = vec![0.0; chart.len()];
    for (i, col) in df.iter().enumerate() {
        let pairing: Vec<f64> = w.vectors().zip(col.vectors()).map(|(a, b)| dot(a, b)).collect();
        let grads = coordinate_gradient(chart, &pairing, 1);
        let derivative = contract_frame(chart, &grads, 1, i);
        for (l, d) in lhs.iter_mut().zip(derivative) {
            *l += d;
        }
    }
    let dim = f.dim();
    let mut rhs = vec![0.0; chart.len()];
    let mut buf = vec![0.0; dim];
    let mut coeffs = vec![0.0; m];
    for idx in 0..chart.len() {
        let gamma = chart.gamma(idx);
        for (j, c) in coeffs.iter_mut().enumerate() {
            *c = (0..m).map(|i| gamma[i][i][j]).sum();
        }
        buf.iter_mut().for_each(|b| *b = 0.0);
        combine(&df, idx, &coeffs, &mut buf);
        lhs[idx] -= dot(w.vector(idx), &buf);

        buf.iter_mut().for_each(|b| *b = 0.0);
        combine(&df, idx, &chart.zeta(idx)[..m], &mut buf);
        rhs[idx] = dot(w.vector(idx), &buf);
    }
    let lhs = integrate(chart, &lhs)?;
    let rhs = integrate(chart, &rhs)?;
    Ok(VariationReport::new("divergence-identity", chart, 0.0, rhs, lhs))
}

/// The three integrated pieces of the index form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IndexTerms {
    /// `∫ Σ_i |∇̃_{e_i}V|²`
    pub gradient: f64,
    /// `∫ Σ_i ⟨R̃(df(e_i),V)V, df(e_i)⟩`
    pub curvature: f64,
    /// `∫ ∇̃²G(f)(V,V)`
    pub hessian: f64,
}

impl IndexTerms {
    pub fn total(&self) -> f64 {
        self.gradient - self.curvature - self.hessian
    }

    /// Rounding scale of the total.
    pub fn scale(&self) -> f64 {
        1.0 + self.gradient.abs() + self.curvature.abs() + self.hessian.abs()
    }
}

pub fn index_form_terms(f: &MapField, v: &SectionField, potential: &Potential) -> Result<IndexTerms> {
    v.check_tangent(f)?;
    let chart = f.chart();
    let target = f.target();
    let df = horizontal_differential(f);
    let dv = horizontal_covariant_derivatives(f, v);
    let dim = f.dim();

    let mut grad = vec![0.0; chart.len()];
    let mut curv = vec![0.0; chart.len()];
    let mut hess = vec![0.0; chart.len()];
    for idx in 0..chart.len() {
        let vi = v.vector(idx);
        for (col, dvi) in df.iter().zip(&dv) {
            grad[idx] += norm_sq(&dvi[idx * dim..(idx + 1) * dim]);
            curv[idx] += target.curvature_unchecked(col.vector(idx), vi);
        }
        if !potential.is_constant() {
            hess[idx] = potential.eval_unchecked(&target, f.point(idx))?.hess.form(vi, vi);
        }
    }
    Ok(IndexTerms {
        gradient: integrate(chart, &grad)?,
        curvature: integrate(chart, &curv)?,
        hessian: integrate(chart, &hess)?,
    })
}

/// `I_HG(V,V) = ∫[|∇̃_{e_i}V|² − ⟨R̃(df(e_i),V)V, df(e_i)⟩ − ∇̃²G(f)(V,V)] dv_g`.
pub fn index_form(f: &MapField, v: &SectionField, potential: &Potential) -> Result<f64> {
    Ok(index_form_terms(f, v, potential)?.total())
}

/// `I(V,W) = ¼[I(V+W, V+W) − I(V−W, V−W)]`.
pub fn index_form_polarized(f: &MapField, v: &SectionField, w: &SectionField, potential: &Potential) -> Result<f64> {
    let plus = index_form(f, &v.add_scaled(1.0, w), potential)?;
    let minus = index_form(f, &v.add_scaled(-1.0, w), potential)?;
    Ok(0.25 * (plus - minus))
}

/// Sign convention for the potential term of the second variation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecondVariationForm {
    /// `∫[|∇̃V|² − ⟨R̃(df,V)V,df⟩ − ∇̃²G(V,V)]`, which matches the energy.
    #[default]
    Standard,
    /// The grouping `−∫[⟨ξ,τ⟩ − ∇̃²G(V,V)]` read literally, i.e. `+∇̃²G(V,V)`.
    /// Kept as a diagnostic: its residual tends to `2∫∇̃²G(V,V)`.
    FlippedHessian,
}

/// Second variation along the geodesic variation (so `ξ = 0`): index form against the
/// five-point second difference of the energy.
pub fn second_variation_residual(
    f: &MapField,
    v: &SectionField,
    potential: &Potential,
    dt: f64,
) -> Result<VariationReport> {
    second_variation_residual_with(f, v, potential, dt, SecondVariationForm::Standard)
}

pub fn second_variation_residual_with(
    f: &MapField,
    v: &SectionField,
    potential: &Potential,
    dt: f64,
    form: SecondVariationForm,
) -> Result<VariationReport> {
    check_dt(dt)?;
    let terms = index_form_terms(f, v, potential)?;
    let (check, analytic) = match form {
        SecondVariationForm::Standard => ("second-variation", terms.total()),
        SecondVariationForm::FlippedHessian => {
            ("second-variation-flipped", terms.gradient - terms.curvature + terms.hessian)
        }
    };
    let fd = energy_second_derivative(f, v, potential, dt)?;
    Ok(VariationReport::new(check, f.chart(), dt, analytic, fd))
}

/// `∫ ∇̃²G(f)(V,V) dv_g`.
pub fn hessian_integral(f: &MapField, v: &SectionField, potential: &Potential) -> Result<f64> {
    Ok(index_form_terms(f, v, potential)?.hessian)
}

/// `max_x |τ_HG(f)(x)|`.
pub fn tension_sup(f: &MapField, potential: &Potential) -> Result<f64> {
    Ok(tension_with_potential(f, potential)?.sup_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_chart;
    use crate::fields::random_section;
    use crate::target::{AmbientQuadratic, Target};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    const S2: Target = Target::Sphere { n: 2 };

    fn chart(name: &str, n: usize) -> Arc<DomainChart> {
        Arc::new(build_chart(name, [n, n, n]).unwrap())
    }

    fn great_circle(c: &Arc<DomainChart>) -> MapField {
        MapField::from_fn(Arc::clone(c), S2, |p| vec![p[0].cos(), p[0].sin(), 0.0]).unwrap()
    }

    #[test]
    fn energy_density_examples() {
        let c = chart("twisted-torus", 16);
        let f = MapField::constant(Arc::clone(&c), S2, &[0.0, 1.0, 0.0]).unwrap();
        assert!(energy_density(&f).iter().all(|&e| e == 0.0));

        let e = energy_density(&great_circle(&c));
        assert!(e.iter().all(|&v| (v - 0.5).abs() < 2e-3));

        // z-only dependence: e_H = ½ sin²(x) |∂z f|²
        let c32 = chart("twisted-torus", 32);
        let fz = MapField::from_fn(Arc::clone(&c32), S2, |p| vec![p[2].cos(), p[2].sin(), 0.0]).unwrap();
        let e = energy_density(&fz);
        for (idx, ev) in e.iter().enumerate() {
            let x = c32.coords(idx)[0];
            assert!((ev - 0.5 * x.sin().powi(2)).abs() < 1e-4);
        }
    }

    #[test]
    fn total_energy_examples() {
        let c = chart("twisted-torus", 16);
        let vol = (2.0 * PI).powi(3);
        let f = MapField::constant(Arc::clone(&c), S2, &[1.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(total_energy(&f, &Potential::Constant(2.0)).unwrap(), -2.0 * vol, epsilon = 1e-9);
        let north = MapField::constant(Arc::clone(&c), S2, &[0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(total_energy(&north, &Potential::Height).unwrap(), vol, epsilon = 1e-9);
        let e = total_energy(&great_circle(&c), &Potential::Constant(0.0)).unwrap();
        assert!((e - 0.5 * vol).abs() < 1e-3 * vol);
    }

    #[test]
    fn total_energy_is_shift_invariant() {
        let c = chart("twisted-torus", 8);
        let g = |p: [f64; 3]| vec![p[0].cos() + 0.3, p[0].sin() * (p[1] + p[2]).cos(), 0.5 + p[1].sin()];
        let f = MapField::from_fn(Arc::clone(&c), S2, g).unwrap();
        let h = c.spacing();
        let shifted = MapField::from_fn(Arc::clone(&c), S2, |p| g([p[0], p[1] + 3.0 * h[1], p[2] + h[2]])).unwrap();
        let e0 = total_energy(&f, &Potential::Constant(0.0)).unwrap();
        let e1 = total_energy(&shifted, &Potential::Constant(0.0)).unwrap();
        assert!((e0 - e1).abs() <= 1e-12 * e0.abs());
    }

    #[test]
    fn potential_domain_error_propagates() {
        let c = chart("twisted-torus", 8);
        let f = great_circle(&c);
        assert!(matches!(total_energy(&f, &Potential::SquaredDistance), Err(Error::Domain(_))));
    }

    #[test]
    fn tension_of_constant_maps() {
        let c = chart("weighted-torus", 8);
        let south = MapField::constant(Arc::clone(&c), S2, &[0.0, 0.0, -1.0]).unwrap();
        assert!(tension_with_potential(&south, &Potential::Height).unwrap().sup_norm() < 1e-15);

        let p = [0.6, 0.0, 0.8];
        let f = MapField::constant(Arc::clone(&c), S2, &p).unwrap();
        let tau = tension_with_potential(&f, &Potential::Height).unwrap();
        let expected = S2.project_tangent(&p, &[0.0, 0.0, -1.0]).unwrap();
        for v in tau.vectors() {
            assert_abs_diff_eq!(v, expected.as_slice(), epsilon = 1e-15);
        }
    }

    #[test]
    fn great_circle_is_harmonic() {
        let c = chart("twisted-torus", 16);
        let tau = tension_with_potential(&great_circle(&c), &Potential::Constant(0.0)).unwrap();
        assert!(tau.sup_norm() < 1e-12);
    }

    #[test]
    fn zero_variation_gives_zero_on_both_sides() {
        let c = chart("twisted-torus", 8);
        let f = great_circle(&c);
        let zero = SectionField::zeros(Arc::clone(&c), 3);
        let r = first_variation_residual(&f, &zero, &Potential::Height, 0.1).unwrap();
        assert_eq!(r.analytic, 0.0);
        assert!(r.fd.abs() < 1e-12);
        let r = second_variation_residual(&f, &zero, &Potential::Height, 0.1).unwrap();
        assert_eq!(r.analytic, 0.0);
        assert!(r.fd.abs() < 1e-9);
        assert_eq!(index_form(&f, &zero, &Potential::Height).unwrap(), 0.0);
    }

    #[test]
    fn critical_constant_map_has_vanishing_first_variation() {
        let c = chart("twisted-torus", 8);
        let south = MapField::constant(Arc::clone(&c), S2, &[0.0, 0.0, -1.0]).unwrap();
        let v = random_section(&south, 5, 1.0);
        let r = first_variation_residual(&south, &v, &Potential::Height, 1e-2).unwrap();
        assert_eq!(r.analytic, 0.0);
        assert!(r.fd.abs() < 1e-7, "{r:?}");
    }

    #[test]
    fn constant_north_pole_second_variation_closed_form() {
        // f ≡ ε₃, constant unit V: E(exp tV) = Vol·cos t, so E'' = −Vol = ∫(0 − 0 − |V|²)
        let c = chart("twisted-torus", 8);
        let north = MapField::constant(Arc::clone(&c), S2, &[0.0, 0.0, 1.0]).unwrap();
        let v = SectionField::tangent_from_fn(&north, |_| vec![0.6, 0.8, 0.0]).unwrap();
        let r = second_variation_residual(&north, &v, &Potential::Height, 0.05).unwrap();
        let vol = c.volume();
        assert_abs_diff_eq!(r.analytic, -vol, epsilon = 1e-10);
        assert!(r.residual < 1e-5 * vol, "{r:?}");
    }

    #[test]
    fn literal_sign_is_off_by_twice_the_hessian() {
        let c = chart("twisted-torus", 8);
        let north = MapField::constant(Arc::clone(&c), S2, &[0.0, 0.0, 1.0]).unwrap();
        let v = SectionField::tangent_from_fn(&north, |_| vec![0.6, 0.8, 0.0]).unwrap();
        let lit =
            second_variation_residual_with(&north, &v, &Potential::Height, 0.05, SecondVariationForm::FlippedHessian)
                .unwrap();
        let hess = hessian_integral(&north, &v, &Potential::Height).unwrap();
        assert_abs_diff_eq!(lit.analytic - lit.fd, 2.0 * hess, epsilon = 1e-4 * hess.abs());
    }

    #[test]
    fn index_form_is_sum_of_squares_on_flat_target() {
        let c = chart("twisted-torus", 8);
        let flat = Target::Flat { n: 3 };
        let f = MapField::from_fn(Arc::clone(&c), flat, |p| vec![p[0].sin(), p[1].cos(), p[2].sin()]).unwrap();
        let concave = Potential::ambient(AmbientQuadratic::isotropic(-1.0));
        for seed in 0..5 {
            let v = random_section(&f, seed, 1.0);
            assert!(index_form(&f, &v, &Potential::Constant(0.0)).unwrap() >= 0.0);
            let with_potential = index_form(&f, &v, &concave).unwrap();
            assert!(with_potential >= 0.0);
            assert_abs_diff_eq!(
                with_potential,
                index_form(&f, &v, &Potential::Constant(0.0)).unwrap() + 2.0 * v.mass(),
                epsilon = 1e-9 * with_potential
            );
        }
        let constant = MapField::constant(Arc::clone(&c), flat, &[1.0, 2.0, 3.0]).unwrap();
        let v = SectionField::tangent_from_fn(&constant, |_| vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(index_form(&constant, &v, &Potential::Constant(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn polarization_is_bilinear_and_symmetric() {
        let c = chart("twisted-torus", 8);
        let f = MapField::from_fn(Arc::clone(&c), S2, |p| vec![p[0].cos(), p[0].sin() * p[1].cos(), 0.4 + p[2].sin()])
            .unwrap();
        let g = Potential::Height;
        let v = random_section(&f, 1, 1.0);
        let w = random_section(&f, 2, 1.0);
        let ivv = index_form(&f, &v, &g).unwrap();
        let scale = 1.0 + ivv.abs();
        assert!((index_form_polarized(&f, &v, &v, &g).unwrap() - ivv).abs() < 1e-10 * scale);
        assert!((index_form_polarized(&f, &v, &v.scaled(-1.0), &g).unwrap() + ivv).abs() < 1e-10 * scale);
        let ivw = index_form_polarized(&f, &v, &w, &g).unwrap();
        let iwv = index_form_polarized(&f, &w, &v, &g).unwrap();
        assert!((ivw - iwv).abs() < 1e-10 * (scale + ivw.abs()));
    }

    #[test]
    fn divergence_identity_on_constant_map_is_trivial() {
        let c = chart("weighted-torus", 8);
        let f = MapField::constant(Arc::clone(&c), S2, &[0.0, 1.0, 0.0]).unwrap();
        let w = random_section(&f, 9, 1.0);
        let r = divergence_identity_residual(&f, &w).unwrap();
        assert_eq!(r.analytic, 0.0);
        assert_eq!(r.fd, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = chart("twisted-torus", 8);
        let f = great_circle(&c);
        let v = random_section(&f, 1, 1.0);
        assert!(matches!(first_variation_residual(&f, &v, &Potential::Height, 0.0), Err(Error::Validation(_))));
        let normal = SectionField::new(Arc::clone(&c), 3, f.values().to_vec()).unwrap();
        assert!(matches!(index_form(&f, &normal, &Potential::Height), Err(Error::Validation(_))));
    }

    #[test]
    fn convergence_study_orders() {
        let mk = |h: f64, r: f64| VariationReport {
            check: "x".into(),
            grid: [8, 8, 8],
            h,
            dt: h,
            analytic: 1.0,
            fd: 1.0 + r,
            residual: r,
            order: None,
        };
        let s = ConvergenceStudy::new(vec![mk(0.4, 1.6e-3), mk(0.2, 1e-4), mk(0.1, 6.25e-6)]);
        assert!((s.observed_order().unwrap() - 4.0).abs() < 1e-12);
        assert!(s.passes(3.8));
        assert!(!s.exact);
        let flat = ConvergenceStudy::new(vec![mk(0.4, 1e-14), mk(0.2, 2e-14), mk(0.1, 1e-14)]);
        assert!(flat.exact && flat.passes(3.8));
        let stalled = ConvergenceStudy::new(vec![mk(0.4, 1e-2), mk(0.2, 1e-2), mk(0.1, 1e-2)]);
        assert!(!stalled.passes(1.9));
    }
}
