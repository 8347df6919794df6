//! Embedded target manifolds and potentials on them.
//!
//! Targets live in Euclidean space: tangent vectors and points are plain ambient
//! slices, the Levi-Civita connection is realised by tangent projection, and the
//! sphere's curvature is exact ambient algebra.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::vecops::{axpy, dot, norm, norm_sq};

/// Tolerance for accepting a point as lying on the target.
pub const ON_MANIFOLD_TOL: f64 = 1e-8;
/// Tolerance for accepting a vector as tangent.
pub const TANGENT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// Unit sphere `S^n ⊂ ℝ^{n+1}`.
    Sphere { n: usize },
    /// Euclidean `ℝ^n`.
    Flat { n: usize },
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Sphere { n } => write!(f, "S^{n}"),
            Target::Flat { n } => write!(f, "R^{n}"),
        }
    }
}

impl Target {
    pub fn ambient_dim(&self) -> usize {
        match *self {
            Target::Sphere { n } => n + 1,
            Target::Flat { n } => n,
        }
    }

    /// Intrinsic dimension `n`.
    pub fn dim(&self) -> usize {
        match *self {
            Target::Sphere { n } | Target::Flat { n } => n,
        }
    }

    pub fn is_sphere(&self) -> bool {
        matches!(self, Target::Sphere { .. })
    }

    /// Distance of `y` from the manifold (`||y| − 1|` on the sphere).
    pub fn constraint_defect(&self, y: &[f64]) -> f64 {
        match self {
            Target::Sphere { .. } => (norm(y) - 1.0).abs(),
            Target::Flat { .. } => 0.0,
        }
    }

    pub fn check_point(&self, y: &[f64]) -> Result<()> {
        if y.len() != self.ambient_dim() {
            return Err(Error::Validation(format!(
                "point has {} components, {self} needs {}",
                y.len(),
                self.ambient_dim()
            )));
        }
        let defect = self.constraint_defect(y);
        if !(defect <= ON_MANIFOLD_TOL) {
            return Err(Error::State(format!("point is off {self} by {defect:e}")));
        }
        Ok(())
    }

    /// Normal component of `w` at `y` relative to `max(1, |w|)`.
    pub(crate) fn tangency_defect(&self, y: &[f64], w: &[f64]) -> f64 {
        match self {
            Target::Sphere { .. } => dot(w, y).abs() / norm(w).max(1.0),
            Target::Flat { .. } => 0.0,
        }
    }

    pub(crate) fn check_tangent(&self, y: &[f64], w: &[f64]) -> Result<()> {
        if w.len() != self.ambient_dim() {
            return Err(Error::Validation(format!(
                "vector has {} components, {self} needs {}",
                w.len(),
                self.ambient_dim()
            )));
        }
        let defect = self.tangency_defect(y, w);
        if !(defect <= TANGENT_TOL) {
            return Err(Error::Validation(format!("vector is not tangent (normal part {defect:e})")));
        }
        Ok(())
    }

    /// Orthogonal projection of `w` onto `T_y N`.
    pub fn project_tangent(&self, y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        self.check_point(y)?;
        if w.len() != y.len() {
            return Err(Error::Validation("vector and point dimensions differ".into()));
        }
        let mut out = w.to_vec();
        self.project_in_place(y, &mut out);
        Ok(out)
    }

    #[inline]
    pub(crate) fn project_in_place(&self, y: &[f64], w: &mut [f64]) {
        if let Target::Sphere { .. } = self {
            let c = dot(w, y);
            axpy(-c, y, w);
        }
    }

    /// Geodesic exponential map.
    pub fn exp_map(&self, y: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_point(y)?;
        self.check_tangent(y, v)?;
        Ok(self.exp_unchecked(y, v))
    }

    pub(crate) fn exp_unchecked(&self, y: &[f64], v: &[f64]) -> Vec<f64> {
        match self {
            Target::Flat { .. } => y.iter().zip(v).map(|(a, b)| a + b).collect(),
            Target::Sphere { .. } => {
                let speed = norm(v);
                let mut out = y.to_vec();
                if speed > 0.0 {
                    let (s, c) = speed.sin_cos();
                    for (o, vi) in out.iter_mut().zip(v) {
                        *o = c * *o + s * vi / speed;
                    }
                }
                let r = norm(&out);
                out.iter_mut().for_each(|o| *o /= r);
                out
            }
        }
    }

    /// `⟨R(X,V)V, X⟩`; on the unit sphere `|X|²|V|² − ⟨X,V⟩²`.
    pub fn curvature_term(&self, y: &[f64], x: &[f64], v: &[f64]) -> Result<f64> {
        self.check_point(y)?;
        self.check_tangent(y, x)?;
        self.check_tangent(y, v)?;
        Ok(self.curvature_unchecked(x, v))
    }

    #[inline]
    pub(crate) fn curvature_unchecked(&self, x: &[f64], v: &[f64]) -> f64 {
        match self {
            Target::Sphere { .. } => {
                let xv = dot(x, v);
                norm_sq(x) * norm_sq(v) - xv * xv
            }
            Target::Flat { .. } => 0.0,
        }
    }

    /// Adds `scale · (|X|² V − ⟨X,V⟩ X)`, half the `V`-gradient of the curvature term.
    #[inline]
    pub(crate) fn add_curvature_operator(&self, x: &[f64], v: &[f64], scale: f64, out: &mut [f64]) {
        if let Target::Sphere { .. } = self {
            let xx = norm_sq(x);
            let xv = dot(x, v);
            for ((o, vi), xi) in out.iter_mut().zip(v).zip(x) {
                *o += scale * (xx * vi - xv * xi);
            }
        }
    }

    /// Orthonormal basis of `T_y N` (Gram-Schmidt on projected coordinate vectors).
    pub fn tangent_basis(&self, y: &[f64]) -> Vec<Vec<f64>> {
        let dim = self.ambient_dim();
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(self.dim());
        for k in 0..dim {
            let mut e = vec![0.0; dim];
            e[k] = 1.0;
            self.project_in_place(y, &mut e);
            for b in &basis {
                let c = dot(&e, b);
                axpy(-c, b, &mut e);
            }
            let r = norm(&e);
            if r > 1e-6 {
                e.iter_mut().for_each(|v| *v /= r);
                basis.push(e);
            }
            if basis.len() == self.dim() {
                break;
            }
        }
        basis
    }
}

/// A smooth function on ambient space, restricted to the target.
pub trait AmbientFunction: fmt::Debug + Send + Sync {
    fn value(&self, y: &[f64]) -> f64;
    /// Euclidean gradient, written into `out`.
    fn gradient(&self, y: &[f64], out: &mut [f64]);
    /// Euclidean Hessian applied to `v`, written into `out`.
    fn hessian_apply(&self, y: &[f64], v: &[f64], out: &mut [f64]);
}

/// `Ĝ(y) = scale·|y|² + ⟨linear, y⟩ + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientQuadratic {
    pub scale: f64,
    pub linear: Vec<f64>,
    pub offset: f64,
}

impl AmbientQuadratic {
    pub fn isotropic(scale: f64) -> Self {
        Self { scale, linear: Vec::new(), offset: 0.0 }
    }
}

impl AmbientFunction for AmbientQuadratic {
    fn value(&self, y: &[f64]) -> f64 {
        self.scale * norm_sq(y) + dot(&self.linear, y) + self.offset
    }

    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = 2.0 * self.scale * y[k] + self.linear.get(k).copied().unwrap_or(0.0);
        }
    }

    fn hessian_apply(&self, _y: &[f64], v: &[f64], out: &mut [f64]) {
        for (o, vi) in out.iter_mut().zip(v) {
            *o = 2.0 * self.scale * vi;
        }
    }
}

#[derive(Clone, Debug)]
pub enum Potential {
    Constant(f64),
    /// `G(y) = −⟨ε_{n+1}, y⟩` on the sphere.
    Height,
    /// `G(y) = r(y)²`, `r` the geodesic distance to the north pole `ε_{n+1}`.
    SquaredDistance,
    /// Restriction of an ambient function.
    Ambient(Arc<dyn AmbientFunction>),
}

impl Potential {
    pub fn ambient(func: impl AmbientFunction + 'static) -> Self {
        Potential::Ambient(Arc::new(func))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Potential::Constant(_) => "constant",
            Potential::Height => "height",
            Potential::SquaredDistance => "squared-distance",
            Potential::Ambient(_) => "ambient-custom",
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Potential::Constant(_))
    }

    /// Rejects potentials that only make sense on the sphere.
    pub fn check_target(&self, target: &Target) -> Result<()> {
        match self {
            Potential::Height | Potential::SquaredDistance if !target.is_sphere() => {
                Err(Error::Config(format!("{} potential requires a sphere target, got {target}", self.name())))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, target: &Target, y: &[f64]) -> Result<f64> {
        Ok(match self {
            Potential::Constant(c) => *c,
            Potential::Height => {
                self.check_target(target)?;
                -y[y.len() - 1]
            }
            Potential::SquaredDistance => {
                self.check_target(target)?;
                let r = pole_distance(y)?;
                r * r
            }
            Potential::Ambient(func) => func.value(y),
        })
    }

    /// Value, tangential gradient and Hessian form at `y`.
    pub fn eval(&self, target: &Target, y: &[f64]) -> Result<PotentialEval> {
        target.check_point(y)?;
        self.eval_unchecked(target, y)
    }

    pub(crate) fn eval_unchecked(&self, target: &Target, y: &[f64]) -> Result<PotentialEval> {
        self.check_target(target)?;
        let dim = y.len();
        match self {
            Potential::Constant(c) => Ok(PotentialEval { value: *c, grad: vec![0.0; dim], hess: Hessian::Zero }),
            Potential::Height => {
                let value = -y[dim - 1];
                let mut grad = vec![0.0; dim];
                grad[dim - 1] = -1.0;
                target.project_in_place(y, &mut grad);
                Ok(PotentialEval { value, grad, hess: Hessian::Scaled(-value) })
            }
            Potential::SquaredDistance => {
                let r = pole_distance(y)?;
                let value = r * r;
                // grad r = −(p − ⟨p,y⟩y)/sin r, so grad G = −2 (r/sin r)(p − ⟨p,y⟩y)
                let mut pt = vec![0.0; dim];
                pt[dim - 1] = 1.0;
                target.project_in_place(y, &mut pt);
                let rs = r_over_sin(r);
                let grad: Vec<f64> = pt.iter().map(|p| -2.0 * rs * p).collect();
                let dr: Vec<f64> = pt.iter().map(|p| -p / r.sin()).collect();
                let hess = if r < 1e-6 {
                    Hessian::Scaled(2.0)
                } else {
                    Hessian::Radial { dr, radial: 2.0, tangential: 2.0 * r * r.cos() / r.sin() }
                };
                Ok(PotentialEval { value, grad, hess })
            }
            Potential::Ambient(func) => {
                let value = func.value(y);
                let mut grad = vec![0.0; dim];
                func.gradient(y, &mut grad);
                let normal = match target {
                    Target::Sphere { .. } => dot(&grad, y),
                    Target::Flat { .. } => 0.0,
                };
                target.project_in_place(y, &mut grad);
                Ok(PotentialEval {
                    value,
                    grad,
                    hess: Hessian::Ambient { func: Arc::clone(func), point: y.to_vec(), normal },
                })
            }
        }
    }
}

/// Geodesic distance to the north pole; errors at or below the equator.
fn pole_distance(y: &[f64]) -> Result<f64> {
    let height = y[y.len() - 1].clamp(-1.0, 1.0);
    if !(height > 0.0) {
        return Err(Error::Domain(format!(
            "squared-distance potential is only defined on the open upper hemisphere (height {height})"
        )));
    }
    let r = height.acos();
    debug_assert!(r < FRAC_PI_2);
    Ok(r)
}

fn r_over_sin(r: f64) -> f64 {
    if r < 1e-4 {
        1.0 + r * r / 6.0
    } else {
        r / r.sin()
    }
}

/// Tangential Hessian of a potential at a fixed point.
#[derive(Clone, Debug)]
pub enum Hessian {
    Zero,
    /// `c ⟨V, W⟩`.
    Scaled(f64),
    /// `radial (dr⊗dr) + tangential (⟨·,·⟩ − dr⊗dr)`.
    Radial {
        dr: Vec<f64>,
        radial: f64,
        tangential: f64,
    },
    /// `Hess Ĝ(V,W) − normal·⟨V,W⟩` with `normal = ⟨∇Ĝ, y⟩` on the sphere.
    Ambient {
        func: Arc<dyn AmbientFunction>,
        point: Vec<f64>,
        normal: f64,
    },
}

impl Hessian {
    pub fn form(&self, v: &[f64], w: &[f64]) -> f64 {
        match self {
            Hessian::Zero => 0.0,
            Hessian::Scaled(c) => c * dot(v, w),
            Hessian::Radial { dr, radial, tangential } => {
                let rv = dot(dr, v);
                let rw = dot(dr, w);
                radial * rv * rw + tangential * (dot(v, w) - rv * rw)
            }
            Hessian::Ambient { func, point, normal } => {
                let mut hv = vec![0.0; v.len()];
                func.hessian_apply(point, v, &mut hv);
                dot(&hv, w) - normal * dot(v, w)
            }
        }
    }

    /// Adds `scale · H v` (before tangent projection).
    pub(crate) fn add_apply(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        match self {
            Hessian::Zero => {}
            Hessian::Scaled(c) => axpy(scale * c, v, out),
            Hessian::Radial { dr, radial, tangential } => {
                let rv = dot(dr, v);
                axpy(scale * tangential, v, out);
                axpy(scale * (radial - tangential) * rv, dr, out);
            }
            Hessian::Ambient { func, point, normal } => {
                let mut hv = vec![0.0; v.len()];
                func.hessian_apply(point, v, &mut hv);
                axpy(scale, &hv, out);
                axpy(-scale * normal, v, out);
            }
        }
    }

    /// Smallest eigenvalue of the form restricted to the given orthonormal basis.
    pub fn min_eigenvalue(&self, basis: &[Vec<f64>]) -> f64 {
        let k = basis.len();
        if k == 0 {
            return 0.0;
        }
        let mat = DMatrix::from_fn(k, k, |a, b| self.form(&basis[a], &basis[b]));
        let sym = (&mat + mat.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct PotentialEval {
    pub value: f64,
    /// Tangential gradient `∇̃G(y)`.
    pub grad: Vec<f64>,
    pub hess: Hessian,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const S2: Target = Target::Sphere { n: 2 };

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let r = norm(&v);
        v.into_iter().map(|x| x / r).collect()
    }

    #[test]
    fn projection_examples() {
        let y = unit(vec![1.0, 2.0, 2.0]);
        let p = S2.project_tangent(&y, &y).unwrap();
        assert!(norm(&p) < 1e-15);
        let w = vec![0.0, 1.0, -1.0];
        let p = S2.project_tangent(&y, &w).unwrap();
        assert_abs_diff_eq!(p.as_slice(), w.as_slice(), epsilon = 1e-15);
        let flat = Target::Flat { n: 3 };
        assert_eq!(flat.project_tangent(&[5.0, 1.0, 0.0], &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(matches!(S2.project_tangent(&[1.0, 0.1, 0.0], &w), Err(Error::State(_))));
    }

    #[test]
    fn exp_examples() {
        let e1 = [1.0, 0.0, 0.0];
        assert_eq!(S2.exp_map(&e1, &[0.0, 0.0, 0.0]).unwrap(), e1.to_vec());
        let q = S2.exp_map(&e1, &[0.0, FRAC_PI_2, 0.0]).unwrap();
        assert_abs_diff_eq!(q.as_slice(), [0.0, 1.0, 0.0].as_slice(), epsilon = 1e-15);
        let flat = Target::Flat { n: 3 };
        assert_eq!(flat.exp_map(&[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]).unwrap(), vec![1.5, 2.5, 3.5]);
        assert!(matches!(S2.exp_map(&e1, &[0.1, 1.0, 0.0]), Err(Error::Validation(_))));
    }

    #[test]
    fn curvature_examples() {
        let y = [0.0, 0.0, 1.0];
        assert_abs_diff_eq!(S2.curvature_term(&y, &[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(S2.curvature_term(&y, &[0.3, 0.4, 0.0], &[0.3, 0.4, 0.0]).unwrap(), 0.0);
        let flat = Target::Flat { n: 3 };
        assert_eq!(flat.curvature_term(&y, &[1.0, 2.0, 3.0], &[3.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!(S2.curvature_term(&y, &[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn height_at_north_pole() {
        let y = [0.0, 0.0, 1.0];
        let ev = Potential::Height.eval(&S2, &y).unwrap();
        assert_eq!(ev.value, -1.0);
        assert!(norm(&ev.grad) < 1e-15);
        let v = [0.3, -0.7, 0.0];
        assert_abs_diff_eq!(ev.hess.form(&v, &v), norm_sq(&v), epsilon = 1e-15);
    }

    #[test]
    fn constant_potential_is_flat() {
        let ev = Potential::Constant(2.5).eval(&S2, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(ev.value, 2.5);
        assert_eq!(ev.grad, vec![0.0; 3]);
        assert_eq!(ev.hess.form(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]), 0.0);
    }

    #[test]
    fn squared_distance_limits_and_domain() {
        let near = unit(vec![1e-9, 0.0, 1.0]);
        let ev = Potential::SquaredDistance.eval(&S2, &near).unwrap();
        let v = [0.0, 1.0, 0.0];
        assert_abs_diff_eq!(ev.hess.form(&v, &v), 2.0, epsilon = 1e-9);
        let slightly = unit(vec![1e-3, 0.0, 1.0]);
        let ev = Potential::SquaredDistance.eval(&S2, &slightly).unwrap();
        let v = S2.project_tangent(&slightly, &[1.0, 1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(ev.hess.form(&v, &v), 2.0 * norm_sq(&v), epsilon = 1e-5);
        assert!(matches!(Potential::SquaredDistance.eval(&S2, &[1.0, 0.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(Potential::SquaredDistance.eval(&S2, &[0.0, 0.0, -1.0]), Err(Error::Domain(_))));
        assert!(matches!(Potential::Height.eval(&Target::Flat { n: 3 }, &[0.0; 3]), Err(Error::Config(_))));
    }

    #[test]
    fn ambient_potential_on_flat_space() {
        let g = Potential::ambient(AmbientQuadratic::isotropic(-1.0));
        let flat = Target::Flat { n: 3 };
        let y = [1.0, -2.0, 0.5];
        let ev = g.eval(&flat, &y).unwrap();
        assert_abs_diff_eq!(ev.value, -5.25);
        assert_eq!(ev.grad, vec![-2.0, 4.0, -1.0]);
        assert_abs_diff_eq!(ev.hess.form(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]), -2.0);
        let basis = flat.tangent_basis(&y);
        assert_abs_diff_eq!(ev.hess.min_eigenvalue(&basis), -2.0, epsilon = 1e-12);
    }

    #[test]
    fn ambient_linear_reproduces_height() {
        let lin = Potential::ambient(AmbientQuadratic { scale: 0.0, linear: vec![0.0, 0.0, -1.0], offset: 0.0 });
        let y = unit(vec![0.3, -0.2, 0.9]);
        let a = lin.eval(&S2, &y).unwrap();
        let b = Potential::Height.eval(&S2, &y).unwrap();
        let v = S2.project_tangent(&y, &[0.2, 0.5, -0.1]).unwrap();
        assert_abs_diff_eq!(a.value, b.value, epsilon = 1e-15);
        assert_abs_diff_eq!(a.grad.as_slice(), b.grad.as_slice(), epsilon = 1e-15);
        assert_abs_diff_eq!(a.hess.form(&v, &v), b.hess.form(&v, &v), epsilon = 1e-15);
    }

    fn sphere_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0..1.0f64, n + 1).prop_filter("nonzero", |v| norm(v) > 0.1).prop_map(unit)
    }

    fn upper_point(n: usize) -> impl Strategy<Value = Vec<f64>> {
        sphere_point(n)
            .prop_map(|mut y| {
                let last = y.len() - 1;
                y[last] = y[last].abs();
                y
            })
            .prop_filter("strictly upper", |y| y[y.len() - 1] > 0.05)
    }

    // Second difference of G along the geodesic through y with velocity v.
    fn geodesic_second_difference(p: &Potential, t: &Target, y: &[f64], v: &[f64], dt: f64) -> f64 {
        let plus: Vec<f64> = v.iter().map(|x| x * dt).collect();
        let minus: Vec<f64> = v.iter().map(|x| -x * dt).collect();
        let gp = p.value(t, &t.exp_map(y, &plus).unwrap()).unwrap();
        let gm = p.value(t, &t.exp_map(y, &minus).unwrap()).unwrap();
        let g0 = p.value(t, y).unwrap();
        (gp - 2.0 * g0 + gm) / (dt * dt)
    }

    fn geodesic_first_difference(p: &Potential, t: &Target, y: &[f64], v: &[f64], dt: f64) -> f64 {
        let step = |s: f64| {
            let tv: Vec<f64> = v.iter().map(|x| x * s).collect();
            p.value(t, &t.exp_map(y, &tv).unwrap()).unwrap()
        };
        (step(dt) - step(-dt)) / (2.0 * dt)
    }

    proptest! {
        #[test]
        fn projection_idempotent_and_symmetric(y in sphere_point(3), w in prop::collection::vec(-2.0..2.0f64, 4), u in prop::collection::vec(-2.0..2.0f64, 4)) {
            let t = Target::Sphere { n: 3 };
            let p1 = t.project_tangent(&y, &w).unwrap();
            let p2 = t.project_tangent(&y, &p1).unwrap();
            for (a, b) in p1.iter().zip(&p2) {
                prop_assert!((a - b).abs() < 1e-14);
            }
            let pu = t.project_tangent(&y, &u).unwrap();
            prop_assert!((dot(&p1, &u) - dot(&w, &pu)).abs() < 1e-13);
        }

        #[test]
        fn exp_stays_on_sphere(y in sphere_point(3), w in prop::collection::vec(-5.0..5.0f64, 4)) {
            let t = Target::Sphere { n: 3 };
            let v = t.project_tangent(&y, &w).unwrap();
            let q = t.exp_map(&y, &v).unwrap();
            prop_assert!(t.constraint_defect(&q) <= 1e-15);
        }

        #[test]
        fn height_hessian_identity(y in sphere_point(3), w in prop::collection::vec(-2.0..2.0f64, 4)) {
            let t = Target::Sphere { n: 3 };
            let v = t.project_tangent(&y, &w).unwrap();
            let ev = Potential::Height.eval(&t, &y).unwrap();
            prop_assert!((ev.hess.form(&v, &v) + norm_sq(&v) * ev.value).abs() <= 1e-12);
            prop_assert!(dot(&ev.grad, &y).abs() <= 1e-12);
        }

        #[test]
        fn curvature_symmetric_under_swap(y in sphere_point(3), a in prop::collection::vec(-2.0..2.0f64, 4), b in prop::collection::vec(-2.0..2.0f64, 4)) {
            let t = Target::Sphere { n: 3 };
            let x = t.project_tangent(&y, &a).unwrap();
            let v = t.project_tangent(&y, &b).unwrap();
            let k1 = t.curvature_term(&y, &x, &v).unwrap();
            let k2 = t.curvature_term(&y, &v, &x).unwrap();
            prop_assert!((k1 - k2).abs() <= 1e-12 * (1.0 + k1.abs()));
            prop_assert!(k1 >= -1e-12);
        }

        #[test]
        fn squared_distance_hessian_psd(y in upper_point(3), w in prop::collection::vec(-2.0..2.0f64, 4)) {
            let t = Target::Sphere { n: 3 };
            let v = t.project_tangent(&y, &w).unwrap();
            let ev = Potential::SquaredDistance.eval(&t, &y).unwrap();
            prop_assert!(ev.hess.form(&v, &v) >= -1e-12);
            prop_assert!(dot(&ev.grad, &y).abs() <= 1e-12);
        }

        #[test]
        fn hessian_matches_geodesic_differences(y in upper_point(2), w in prop::collection::vec(-1.0..1.0f64, 3), which in 0usize..3) {
            let t = S2;
            let p = match which {
                0 => Potential::Height,
                1 => Potential::SquaredDistance,
                _ => Potential::ambient(AmbientQuadratic { scale: 0.7, linear: vec![0.1, -0.3, 0.2], offset: 1.0 }),
            };
            let v = t.project_tangent(&y, &w).unwrap();
            let ev = p.eval(&t, &y).unwrap();
            let dt = 1e-3;
            let fd2 = geodesic_second_difference(&p, &t, &y, &v, dt);
            prop_assert!((fd2 - ev.hess.form(&v, &v)).abs() <= 1e-4 * (1.0 + fd2.abs()));
            let fd1 = geodesic_first_difference(&p, &t, &y, &v, dt);
            prop_assert!((fd1 - dot(&ev.grad, &v)).abs() <= 1e-5 * (1.0 + fd1.abs()));
        }
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        let y = unit(vec![0.2, -0.4, 0.1, 0.9]);
        let t = Target::Sphere { n: 3 };
        let basis = t.tangent_basis(&y);
        assert_eq!(basis.len(), 3);
        for (a, ea) in basis.iter().enumerate() {
            assert!(dot(ea, &y).abs() < 1e-14);
            for (b, eb) in basis.iter().enumerate() {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot(ea, eb), expected, epsilon = 1e-14);
            }
        }
        let ev = Potential::Height.eval(&t, &y).unwrap();
        assert_abs_diff_eq!(ev.hess.min_eigenvalue(&basis), -ev.value, epsilon = 1e-14);
    }
}
