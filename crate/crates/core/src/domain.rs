//! Periodic sub-Riemannian domains on the 3-torus.
//!
//! A [`DomainChart`] samples an adapted orthonormal frame `e_A = e_A^k ∂_k` on a
//! uniform periodic grid. The metric is defined by declaring the frame
//! orthonormal; the first `m` frame vectors span the horizontal distribution `H`
//! and the remaining `d` span its orthogonal complement `V`.
//!
//! Index conventions for the per-point arrays:
//!
//! * `frame[a][k]` is the `k`-th coordinate component of `e_a`;
//! * `structure[a][b][c]` is `c^C_{AB}` with `[e_A, e_B] = c^C_{AB} e_C`;
//! * `gamma[a][b][c]` is `Γ^C_{AB} = ⟨∇_{e_A} e_B, e_C⟩` (Levi-Civita).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops::compensated_sum;

pub type Frame = [[f64; 3]; 3];
pub type Structure = [[[f64; 3]; 3]; 3];
pub type Connection = [[[f64; 3]; 3]; 3];

const ANTISYMMETRY_TOL: f64 = 1e-12;

/// Central-difference stencil used for every coordinate derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stencil {
    Second,
    #[default]
    Fourth,
}

impl Stencil {
    pub fn order(self) -> usize {
        match self {
            Stencil::Second => 2,
            Stencil::Fourth => 4,
        }
    }

    pub fn from_order(order: usize) -> Result<Self> {
        match order {
            2 => Ok(Stencil::Second),
            4 => Ok(Stencil::Fourth),
            other => Err(Error::Config(format!("unsupported stencil order {other} (expected 2 or 4)"))),
        }
    }

    /// Offsets and weights (before division by the spacing).
    /// Pairs `(k, w)` contributing `w · (u[+k] − u[−k]) / h`.
    pub(crate) fn pairs(self) -> &'static [(isize, f64)] {
        match self {
            Stencil::Second => &[(1, 0.5)],
            Stencil::Fourth => &[(1, 8.0 / 12.0), (2, -1.0 / 12.0)],
        }
    }
}

/// Built-in charts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartKind {
    /// `e1 = ∂x`, `e2 = ∂y + sin(x) ∂z`, `e3 = ∂z`.
    TwistedTorus,
    /// Same horizontal frame, `e3 = (1 + ½ sin x) ∂z`.
    WeightedTorus,
    /// Coordinate frame; commuting, not bracket-generating.
    AbelianTorus,
}

impl ChartKind {
    pub fn name(self) -> &'static str {
        match self {
            ChartKind::TwistedTorus => "twisted-torus",
            ChartKind::WeightedTorus => "weighted-torus",
            ChartKind::AbelianTorus => "abelian-torus",
        }
    }
}

impl fmt::Display for ChartKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChartKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "twisted-torus" => Ok(ChartKind::TwistedTorus),
            "weighted-torus" => Ok(ChartKind::WeightedTorus),
            "abelian-torus" => Ok(ChartKind::AbelianTorus),
            other => Err(Error::Config(format!("unknown chart '{other}'"))),
        }
    }
}

/// Grid dimensions; linear index is lexicographic in `(i, j, k)` with `k` fastest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub n: [usize; 3],
}

impl GridShape {
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let k = idx % self.n[2];
        let j = (idx / self.n[2]) % self.n[1];
        let i = idx / (self.n[1] * self.n[2]);
        [i, j, k]
    }

    /// Linear stride of one step along `axis`.
    #[inline]
    pub(crate) fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => self.n[1] * self.n[2],
            1 => self.n[2],
            _ => 1,
        }
    }

    /// Linear index of the point `offset` steps from `idx` along `axis` (periodic).
    #[inline]
    pub(crate) fn shifted(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let pos = self.unravel(idx)[axis] as isize;
        let n = self.n[axis] as isize;
        let target = (pos + offset).rem_euclid(n);
        (idx as isize + (target - pos) * self.stride(axis) as isize) as usize
    }
}

#[derive(Clone, Debug)]
pub struct DomainChart {
    kind: ChartKind,
    shape: GridShape,
    periods: [f64; 3],
    spacing: [f64; 3],
    m: usize,
    d: usize,
    stencil: Stencil,
    frame: Vec<Frame>,
    structure: Vec<Structure>,
    gamma: Vec<Connection>,
    zeta: Vec<[f64; 3]>,
    vol: Vec<f64>,
}

/// Builds a built-in chart with `2π` periods and the default fourth-order stencil.
pub fn build_chart(name: &str, resolution: [usize; 3]) -> Result<DomainChart> {
    DomainChart::new(name.parse()?, resolution, [2.0 * PI; 3])
}

impl DomainChart {
    pub fn new(kind: ChartKind, resolution: [usize; 3], periods: [f64; 3]) -> Result<Self> {
        for (axis, &n) in resolution.iter().enumerate() {
            if n < 8 || n % 2 != 0 {
                return Err(Error::Validation(format!(
                    "resolution along axis {axis} must be even and at least 8, got {n}"
                )));
            }
        }
        for (axis, &p) in periods.iter().enumerate() {
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::Validation(format!("period along axis {axis} must be positive, got {p}")));
            }
        }
        if kind != ChartKind::AbelianTorus {
            // sin(x) coefficients are only periodic on multiples of 2π.
            let turns = periods[0] / (2.0 * PI);
            if (turns - turns.round()).abs() > 1e-12 * turns.max(1.0) {
                return Err(Error::Validation(format!(
                    "{kind} needs an x-period that is a multiple of 2π, got {}",
                    periods[0]
                )));
            }
        }

        let shape = GridShape { n: resolution };
        let spacing =
            [periods[0] / resolution[0] as f64, periods[1] / resolution[1] as f64, periods[2] / resolution[2] as f64];

        let mut frame = Vec::with_capacity(shape.len());
        let mut structure = Vec::with_capacity(shape.len());
        for idx in 0..shape.len() {
            let [i, _, _] = shape.unravel(idx);
            let x = i as f64 * spacing[0];
            let (fr, st) = analytic_frame(kind, x);
            frame.push(fr);
            structure.push(st);
        }
        let gamma = koszul_connection(&structure)?;
        let m = 2;
        let d = 1;
        let zeta = gamma.iter().map(|g| horizontal_zeta(g, m)).collect();
        let vol = frame.iter().map(|fr| 1.0 / det3(fr).abs()).collect();

        Ok(Self {
            kind,
            shape,
            periods,
            spacing,
            m,
            d,
            stencil: Stencil::default(),
            frame,
            structure,
            gamma,
            zeta,
            vol,
        })
    }

    pub fn with_stencil(mut self, stencil: Stencil) -> Self {
        self.stencil = stencil;
        self
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn periods(&self) -> [f64; 3] {
        self.periods
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    /// Largest grid spacing; the `h` used in convergence studies.
    pub fn h(&self) -> f64 {
        self.spacing.iter().copied().fold(0.0, f64::max)
    }

    /// Horizontal rank.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Vertical rank.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn stencil(&self) -> Stencil {
        self.stencil
    }

    pub fn frame(&self, idx: usize) -> &Frame {
        &self.frame[idx]
    }

    pub fn structure(&self, idx: usize) -> &Structure {
        &self.structure[idx]
    }

    pub fn gamma(&self, idx: usize) -> &Connection {
        &self.gamma[idx]
    }

    pub fn zeta(&self, idx: usize) -> [f64; 3] {
        self.zeta[idx]
    }

    pub fn vol(&self, idx: usize) -> f64 {
        self.vol[idx]
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Quadrature weight `vol · Δx₁Δx₂Δx₃` at a grid point.
    #[inline]
    pub fn weight(&self, idx: usize) -> f64 {
        self.vol[idx] * self.cell_volume()
    }

    pub fn coords(&self, idx: usize) -> [f64; 3] {
        let [i, j, k] = self.shape.unravel(idx);
        [i as f64 * self.spacing[0], j as f64 * self.spacing[1], k as f64 * self.spacing[2]]
    }

    /// Total Riemannian volume.
    pub fn volume(&self) -> f64 {
        compensated_sum((0..self.len()).map(|idx| self.weight(idx)))
    }

    /// Checks invertibility, metric compatibility, torsion-freeness and horizontality of `ζ`.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        for idx in 0..self.len() {
            if det3(&self.frame[idx]).abs() < 1e-14 {
                return Err(Error::Validation(format!("frame degenerate at point {idx}")));
            }
            let g = &self.gamma[idx];
            let c = &self.structure[idx];
            for a in 0..3 {
                for b in 0..3 {
                    for cc in 0..3 {
                        if (g[a][b][cc] + g[a][cc][b]).abs() > tol {
                            return Err(Error::Validation(format!("metric compatibility fails at point {idx}")));
                        }
                        if (g[a][b][cc] - g[b][a][cc] - c[a][b][cc]).abs() > tol {
                            return Err(Error::Validation(format!("torsion does not vanish at point {idx}")));
                        }
                    }
                }
            }
            if self.zeta[idx][self.m..].iter().any(|z| z.abs() > tol) {
                return Err(Error::Validation(format!("zeta has a vertical component at point {idx}")));
            }
        }
        Ok(())
    }
}

/// Closed-form frame and structure functions at abscissa `x`.
fn analytic_frame(kind: ChartKind, x: f64) -> (Frame, Structure) {
    let mut st = [[[0.0; 3]; 3]; 3];
    let (s, c) = x.sin_cos();
    match kind {
        ChartKind::AbelianTorus => ([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], st),
        ChartKind::TwistedTorus => {
            // [e1, e2] = cos(x) e3
            st[0][1][2] = c;
            st[1][0][2] = -c;
            ([[1.0, 0.0, 0.0], [0.0, 1.0, s], [0.0, 0.0, 1.0]], st)
        }
        ChartKind::WeightedTorus => {
            let w = 1.0 + 0.5 * s;
            let dw = 0.5 * c;
            // [e1, e2] = cos(x) ∂z = (cos x / w) e3,  [e1, e3] = w' ∂z = (w'/w) e3
            st[0][1][2] = c / w;
            st[1][0][2] = -c / w;
            st[0][2][2] = dw / w;
            st[2][0][2] = -dw / w;
            ([[1.0, 0.0, 0.0], [0.0, 1.0, s], [0.0, 0.0, w]], st)
        }
    }
}

fn horizontal_zeta(g: &Connection, m: usize) -> [f64; 3] {
    let mut z = [0.0; 3];
    for (i, zi) in z.iter_mut().enumerate().take(m) {
        *zi = (m..3).map(|alpha| g[alpha][alpha][i]).sum();
    }
    z
}

fn det3(a: &Frame) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Levi-Civita coefficients of an orthonormal frame from its structure functions:
/// `2Γ^C_{AB} = c^C_{AB} − c^A_{BC} + c^B_{CA}`.
pub fn koszul_connection(structure: &[Structure]) -> Result<Vec<Connection>> {
    structure
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            for a in 0..3 {
                for b in 0..3 {
                    for cc in 0..3 {
                        let asym = c[a][b][cc] + c[b][a][cc];
                        if asym.abs() > ANTISYMMETRY_TOL * (1.0 + c[a][b][cc].abs()) {
                            return Err(Error::Validation(format!(
                                "structure functions not antisymmetric at point {idx} (A={a}, B={b}, C={cc})"
                            )));
                        }
                    }
                }
            }
            let mut g = [[[0.0; 3]; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    for cc in 0..3 {
                        g[a][b][cc] = 0.5 * (c[a][b][cc] - c[b][cc][a] + c[cc][a][b]);
                    }
                }
            }
            Ok(g)
        })
        .collect()
}

/// `∫_M u dv_g` as the weighted Riemann sum over the grid.
pub fn integrate(chart: &DomainChart, u: &[f64]) -> Result<f64> {
    if u.len() != chart.len() {
        return Err(Error::Validation(format!(
            "scalar field has {} values, chart has {} points",
            u.len(),
            chart.len()
        )));
    }
    let cell = chart.cell_volume();
    Ok(cell * compensated_sum(u.iter().zip(&chart.vol).map(|(ui, vi)| ui * vi)))
}
