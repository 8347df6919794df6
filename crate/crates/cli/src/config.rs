//! Run configuration, read from a sectioned TOML file.
//!
//! ```toml
//! seed = 7
//!
//! [domain]
//! name = "twisted-torus"
//! resolution = [16, 16, 16]
//! stencil_order = 4
//!
//! [target]
//! kind = "sphere"
//! n = 3
//!
//! [potential]
//! kind = "quadratic"
//! params = { scale = -1.0, offset = 0.0 }
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use subflow_core::{
    AmbientQuadratic, ChartKind, DomainChart, Error, FlowOptions, InitialMap, Potential, Result, Stencil, Target,
};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub target: TargetConfig,
    #[serde(default)]
    pub potential: PotentialConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub checks: ChecksConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub name: String,
    pub resolution: [usize; 3],
    pub periods: Option<[f64; 3]>,
    pub stencil_order: usize,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self { name: "twisted-torus".into(), resolution: [16, 16, 16], periods: None, stencil_order: 4 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub kind: String,
    pub n: usize,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self { kind: "sphere".into(), n: 2 }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    pub kind: String,
    pub params: PotentialParams,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self { kind: "constant".into(), params: PotentialParams::default() }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialParams {
    /// Value of a constant potential.
    pub value: f64,
    /// `scale·|y|² + ⟨linear, y⟩ + offset` for the quadratic potential.
    pub scale: f64,
    pub linear: Option<Vec<f64>>,
    pub offset: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub dt: f64,
    pub tol: f64,
    pub max_steps: usize,
    pub backtracking: f64,
    pub growth: f64,
    pub line_search: bool,
    pub initial: String,
    /// Starting point for `initial = "constant"`.
    pub point: Option<Vec<f64>>,
    /// Dump the map every this many accepted steps; 0 disables checkpoints.
    pub checkpoint_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        let o = FlowOptions::default();
        Self {
            dt: o.dt,
            tol: o.tol,
            max_steps: o.max_steps,
            backtracking: o.backtracking,
            growth: o.growth,
            line_search: o.line_search,
            initial: "wrap".into(),
            point: None,
            checkpoint_every: 0,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChecksConfig {
    pub suites: Vec<String>,
    pub levels: Vec<usize>,
    pub stencil_orders: Vec<usize>,
    pub charts: Vec<String>,
    /// Finite-difference step in `t` as a multiple of the grid spacing.
    pub dt_factor: f64,
    /// Run the second-variation suite with the opposite Hessian sign.
    pub mis_signed_hessian: bool,
}

pub const SUITES: [&str; 3] = ["first-variation", "divergence-identity", "second-variation"];

impl Default for ChecksConfig {
    fn default() -> Self {
        Self {
            suites: SUITES.iter().map(|s| s.to_string()).collect(),
            levels: vec![8, 16, 32],
            stencil_orders: vec![2, 4],
            charts: vec!["twisted-torus".into(), "weighted-torus".into()],
            dt_factor: 0.25,
            mis_signed_hessian: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    pub samples: usize,
    pub iters: usize,
    /// Certification margin; defaults to `1e-6·(1 + |E(f)|)`.
    pub margin: Option<f64>,
    /// Largest accepted `‖τ‖∞`; defaults to ten times `flow.tol`.
    pub tension_threshold: Option<f64>,
    pub include_conformal: bool,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self { samples: 1000, iters: 100, margin: None, tension_threshold: None, include_conformal: true }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(config_err)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Resolves every identifier and range so that commands fail before doing any work.
    pub fn validate(&self) -> Result<()> {
        self.chart_named(&self.domain.name, self.domain.resolution)?;
        let target = self.target()?;
        self.potential()?.check_target(&target)?;
        self.flow_options().validate().map_err(config_err)?;
        self.initial_map()?;
        for suite in &self.checks.suites {
            if !SUITES.contains(&suite.as_str()) {
                return Err(config_err(format!("unknown check suite '{suite}'")));
            }
        }
        for &order in &self.checks.stencil_orders {
            Stencil::from_order(order).map_err(config_err)?;
        }
        for name in &self.checks.charts {
            name.parse::<ChartKind>().map_err(config_err)?;
        }
        for &n in &self.checks.levels {
            self.chart_named(&self.domain.name, [n, n, n])?;
        }
        if !(self.checks.dt_factor > 0.0 && self.checks.dt_factor.is_finite()) {
            return Err(config_err("checks.dt_factor must be positive"));
        }
        if let Some(m) = self.stability.margin {
            if !(m >= 0.0) {
                return Err(config_err("stability.margin must be nonnegative"));
            }
        }
        Ok(())
    }

    pub fn stencil(&self) -> Result<Stencil> {
        Stencil::from_order(self.domain.stencil_order).map_err(config_err)
    }

    pub fn chart_named(&self, name: &str, resolution: [usize; 3]) -> Result<DomainChart> {
        let kind: ChartKind = name.parse().map_err(config_err)?;
        let periods = self.domain.periods.unwrap_or([std::f64::consts::TAU; 3]);
        let chart = DomainChart::new(kind, resolution, periods).map_err(config_err)?;
        Ok(chart.with_stencil(self.stencil()?))
    }

    pub fn chart(&self) -> Result<Arc<DomainChart>> {
        Ok(Arc::new(self.chart_named(&self.domain.name, self.domain.resolution)?))
    }

    pub fn target(&self) -> Result<Target> {
        let n = self.target.n;
        if n == 0 {
            return Err(config_err("target.n must be at least 1"));
        }
        match self.target.kind.as_str() {
            "sphere" => Ok(Target::Sphere { n }),
            "flat" => Ok(Target::Flat { n }),
            other => Err(config_err(format!("unknown target kind '{other}'"))),
        }
    }

    pub fn potential(&self) -> Result<Potential> {
        let p = &self.potential.params;
        match self.potential.kind.as_str() {
            "constant" => Ok(Potential::Constant(p.value)),
            "height" => Ok(Potential::Height),
            "squared-distance" => Ok(Potential::SquaredDistance),
            "quadratic" => {
                let dim = self.target()?.ambient_dim();
                let linear = p.linear.clone().unwrap_or_else(|| vec![0.0; dim]);
                if linear.len() != dim {
                    return Err(config_err(format!("potential.params.linear needs {dim} entries")));
                }
                Ok(Potential::ambient(AmbientQuadratic { scale: p.scale, linear, offset: p.offset }))
            }
            other => Err(config_err(format!("unknown potential kind '{other}'"))),
        }
    }

    pub fn initial_map(&self) -> Result<InitialMap> {
        match self.flow.initial.as_str() {
            "constant" => {
                let point =
                    self.flow.point.clone().ok_or_else(|| config_err("flow.point is required for a constant start"))?;
                Ok(InitialMap::Constant(point))
            }
            other => other.parse(),
        }
    }

    pub fn flow_options(&self) -> FlowOptions {
        let f = &self.flow;
        FlowOptions {
            dt: f.dt,
            tol: f.tol,
            max_steps: f.max_steps,
            backtracking: f.backtracking,
            growth: f.growth,
            line_search: f.line_search,
            seed: self.seed,
        }
    }

    pub fn tension_threshold(&self) -> f64 {
        self.stability.tension_threshold.unwrap_or(10.0 * self.flow.tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg.domain.resolution, [16, 16, 16]);
        assert_eq!(cfg.checks.levels, vec![8, 16, 32]);
        assert_eq!(cfg.flow_options(), FlowOptions::default());
        assert_eq!(cfg.tension_threshold(), 1e-2);
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = RunConfig::parse(
            r#"
            seed = 3
            [domain]
            name = "weighted-torus"
            resolution = [8, 8, 12]
            [target]
            kind = "flat"
            n = 3
            [potential]
            kind = "quadratic"
            params = { scale = -1.0 }
            [flow]
            dt = 0.01
            initial = "random-smooth"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.chart().unwrap().shape().n, [8, 8, 12]);
        assert_eq!(cfg.target().unwrap(), Target::Flat { n: 3 });
        assert_eq!(cfg.flow_options().dt, 0.01);
        assert_eq!(cfg.flow_options().seed, 3);
        assert_eq!(cfg.initial_map().unwrap(), InitialMap::RandomSmooth);
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for text in [
            "[domain]\nname = \"klein\"",
            "[domain]\nresolution = [7, 8, 8]",
            "[target]\nkind = \"hyperbolic\"",
            "[target]\nkind = \"flat\"\n[potential]\nkind = \"height\"",
            "[flow]\nstep = 1",
            "[flow]\ndt = -1.0",
            "[flow]\ninitial = \"constant\"",
            "[checks]\nsuites = [\"everything\"]",
            "[checks]\nstencil_orders = [6]",
            "unknown = 1",
            "[domain\n",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }
}
