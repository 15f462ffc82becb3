//! Run configuration.
//!
//! The file is TOML. Entries are checked against the grid before anything
//! runs, and a rejected entry is named by its dotted path, e.g. `sweep.eps[4]`.

use std::collections::BTreeSet;
use std::path::Path;

use onsagerlab_core::mollify::{average_samples, Mollifier};
use onsagerlab_core::testfn::{SpaceFactor, TimeBump};
use onsagerlab_core::{Axes, Grid, PressureLaw, TestFunction};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Base seed; fixtures without their own seed use `seed + position`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<String>,
    pub grid: GridSpec,
    #[serde(default)]
    pub law: Option<LawSpec>,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub tolerance: Tolerances,
    #[serde(default, rename = "phi")]
    pub phis: Vec<PhiSpec>,
    #[serde(default, rename = "fixture")]
    pub fixtures: Vec<FixtureSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub n_x: usize,
    pub n_t: usize,
    pub horizon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub kappa: f64,
    pub gamma: f64,
    #[serde(default)]
    pub floor: Option<f64>,
}

/// Radii and averaging lengths, either absolute or in grid cells (`dx` for `eps`, `dt` for `h`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub eps_cells: Vec<f64>,
    #[serde(default)]
    pub h: Vec<f64>,
    #[serde(default)]
    pub h_steps: Vec<f64>,
    #[serde(default = "default_p")]
    pub p: f64,
}

fn default_p() -> f64 {
    3.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Allowed shortfall of a fitted slope below its prediction.
    pub slope: f64,
    /// Relative error allowed on shock dissipation.
    pub dissipation: f64,
    /// Allowed error on the fitted exponent of shock fields.
    pub exponent: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            slope: 0.1,
            dissipation: 0.02,
            exponent: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSpec {
    pub id: String,
    /// `[center, radius]` of the time bump.
    pub time: [f64; 2],
    pub space: SpaceSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceSpec {
    Uniform,
    Bump {
        center: [f64; 2],
        radius: f64,
    },
    Mode {
        k: [i32; 2],
        #[serde(default)]
        sine: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FixtureSpec {
    /// Constant state; with `pressure` it is treated as incompressible.
    Constant {
        id: String,
        rho: f64,
        u: Vec<f64>,
        #[serde(default)]
        pressure: Option<f64>,
    },
    /// Admissible stationary shock at `x = 1/2`.
    Shock { id: String, rho_left: f64, rho_right: f64 },
    /// Stationary jump in either ordering; the reversed one produces energy.
    Jump { id: String, rho_left: f64, rho_right: f64 },
    /// Planar shear `u = (v(x2), 0)` with a rough profile of exponent `alpha`,
    /// transporting `rho0 = 1 + 0.3 sin(2 pi x1) + rho_jump 1[x2 < 1/2]`.
    Shear {
        id: String,
        alpha: f64,
        #[serde(default = "half")]
        amplitude: f64,
        #[serde(default = "half")]
        rho_jump: f64,
        #[serde(default = "one")]
        pressure: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Compressible spacetime fields `rho = rho_mean + amplitude W_beta`, `u_k = u_mean + amplitude W_alpha`
    /// with each series scaled to unit maximum.
    Weierstrass {
        id: String,
        alpha: f64,
        beta: f64,
        #[serde(default = "two")]
        rho_mean: f64,
        #[serde(default = "one")]
        u_mean: f64,
        #[serde(default = "quarter")]
        amplitude: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Constant density carried by a continuous triangle wave `u_1(t, x) = u0 + tri(x1 - speed t)`.
    Triangle {
        id: String,
        rho: f64,
        #[serde(default = "one")]
        u0: f64,
        #[serde(default = "half")]
        amplitude: f64,
        #[serde(default)]
        speed: f64,
    },
}

fn half() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn quarter() -> f64 {
    0.25
}

impl FixtureSpec {
    pub fn id(&self) -> &str {
        match self {
            FixtureSpec::Constant { id, .. }
            | FixtureSpec::Shock { id, .. }
            | FixtureSpec::Jump { id, .. }
            | FixtureSpec::Shear { id, .. }
            | FixtureSpec::Weierstrass { id, .. }
            | FixtureSpec::Triangle { id, .. } => id,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FixtureSpec::Constant { .. } => "constant",
            FixtureSpec::Shock { .. } => "shock",
            FixtureSpec::Jump { .. } => "jump",
            FixtureSpec::Shear { .. } => "shear",
            FixtureSpec::Weierstrass { .. } => "weierstrass",
            FixtureSpec::Triangle { .. } => "triangle",
        }
    }

    fn explicit_seed(&self) -> Option<u64> {
        match self {
            FixtureSpec::Shear { seed, .. } | FixtureSpec::Weierstrass { seed, .. } => *seed,
            _ => None,
        }
    }

    /// Whether the energy balance uses the pressure law rather than a given pressure field.
    pub fn needs_law(&self) -> bool {
        match self {
            FixtureSpec::Constant { pressure, .. } => pressure.is_none(),
            FixtureSpec::Shear { .. } => false,
            _ => true,
        }
    }

    fn is_jump(&self) -> bool {
        matches!(self, FixtureSpec::Shock { .. } | FixtureSpec::Jump { .. })
    }
}

/// A validated configuration with every length resolved against the grid.
#[derive(Clone, Debug)]
pub struct Plan {
    pub config: RunConfig,
    pub grid: Grid,
    pub law: Option<PressureLaw>,
    /// Mollification radii, coarsest first.
    pub eps: Vec<f64>,
    pub h: Vec<f64>,
    pub phis: Vec<(String, TestFunction)>,
    /// Fixture seeds in declaration order.
    pub seeds: Vec<u64>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| match e {
            LabError::Syntax(inner) => LabError::Format {
                path: path.into(),
                reason: inner.to_string(),
            },
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// Replaces the base seed and drops per-fixture seeds so that `seed` drives every generator.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = seed;
        for f in &mut self.fixtures {
            if let FixtureSpec::Shear { seed, .. } | FixtureSpec::Weierstrass { seed, .. } = f {
                *seed = None;
            }
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        let g = self.grid;
        Grid::new(g.dim, g.n_x, g.n_t, g.horizon).map_err(|e| LabError::config("grid", e))
    }

    pub fn law(&self) -> Result<Option<PressureLaw>> {
        self.law
            .map(|l| match l.floor {
                Some(floor) => PressureLaw::with_floor(l.kappa, l.gamma, floor),
                None => PressureLaw::new(l.kappa, l.gamma),
            })
            .transpose()
            .map_err(|e| LabError::config("law", e))
    }

    /// Checks every entry against the configured grid.
    pub fn plan(&self) -> Result<Plan> {
        let grid = self.grid()?;
        self.plan_on(grid)
    }

    /// Like [`RunConfig::plan`] but against the grid of fields loaded from disk.
    pub fn plan_on(&self, grid: Grid) -> Result<Plan> {
        let law = self.law()?;
        let eps = resolve_eps(&self.sweep, &grid)?;
        let h = resolve_h(&self.sweep, &grid)?;
        if !(self.sweep.p >= 1.0) {
            return Err(LabError::config("sweep.p", format!("{} is below 1", self.sweep.p)));
        }
        let margin = eps.iter().copied().fold(0.0, f64::max) + h.iter().copied().fold(0.0, f64::max);
        let allowed = (margin, grid.horizon() - margin);
        let mut phis = Vec::with_capacity(self.phis.len());
        let mut ids = BTreeSet::new();
        for (k, spec) in self.phis.iter().enumerate() {
            let entry = format!("phi[{k}]");
            if !ids.insert(spec.id.as_str()) {
                return Err(LabError::config(entry, format!("id {:?} is used twice", spec.id)));
            }
            let time = TimeBump::new(spec.time[0], spec.time[1]).map_err(|e| LabError::config(&entry, e))?;
            let space = match spec.space {
                SpaceSpec::Uniform => SpaceFactor::Uniform,
                SpaceSpec::Bump { center, radius } => SpaceFactor::Bump { center, radius },
                SpaceSpec::Mode { k, sine } => SpaceFactor::Mode { k, sine },
            };
            let phi = TestFunction::new(time, space).map_err(|e| LabError::config(&entry, e))?;
            phi.check_support(allowed).map_err(|e| LabError::config(&entry, e))?;
            phis.push((spec.id.clone(), phi));
        }
        let mut fixture_ids = BTreeSet::new();
        let mut seeds = Vec::with_capacity(self.fixtures.len());
        for (k, f) in self.fixtures.iter().enumerate() {
            let entry = format!("fixture[{k}]");
            if !fixture_ids.insert(f.id()) {
                return Err(LabError::config(entry, format!("id {:?} is used twice", f.id())));
            }
            if f.id().is_empty()
                || !f
                    .id()
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                return Err(LabError::config(
                    entry,
                    format!("id {:?} must be ASCII letters, digits, '-' or '_'", f.id()),
                ));
            }
            if f.needs_law() && law.is_none() {
                return Err(LabError::config(
                    entry,
                    format!("a {} fixture needs a [law] section", f.kind()),
                ));
            }
            let dim_ok = match f {
                FixtureSpec::Shock { .. } | FixtureSpec::Jump { .. } => grid.dim() == 1,
                FixtureSpec::Shear { .. } => grid.dim() == 2,
                FixtureSpec::Constant { u, .. } => u.len() == grid.dim(),
                _ => true,
            };
            if !dim_ok {
                return Err(LabError::config(
                    entry,
                    format!("a {} fixture does not fit a {}-dimensional grid", f.kind(), grid.dim()),
                ));
            }
            if f.is_jump() {
                check_away_from_seam(&self.phis, &eps, &entry)?;
            }
            seeds.push(f.explicit_seed().unwrap_or(self.seed.wrapping_add(k as u64)));
        }
        Ok(Plan {
            config: self.clone(),
            grid,
            law,
            eps,
            h,
            phis,
            seeds,
        })
    }
}

fn resolve_eps(sweep: &SweepSpec, grid: &Grid) -> Result<Vec<f64>> {
    let (name, values) = match (sweep.eps.is_empty(), sweep.eps_cells.is_empty()) {
        (false, true) => ("sweep.eps", sweep.eps.clone()),
        (true, false) => (
            "sweep.eps_cells",
            sweep.eps_cells.iter().map(|c| c * grid.dx()).collect(),
        ),
        (true, true) => return Err(LabError::config("sweep.eps", "no radii given")),
        (false, false) => {
            return Err(LabError::config(
                "sweep.eps_cells",
                "give either eps or eps_cells, not both",
            ))
        }
    };
    for (k, &e) in values.iter().enumerate() {
        let entry = format!("{name}[{k}]");
        if !(e < 0.5) {
            return Err(LabError::config(entry, format!("radius {e} is not below 1/2")));
        }
        Mollifier::new(grid, e, Axes::Spacetime).map_err(|err| LabError::config(entry, err))?;
    }
    Ok(sorted_coarse_first(values))
}

fn resolve_h(sweep: &SweepSpec, grid: &Grid) -> Result<Vec<f64>> {
    let (name, values) = if sweep.h_steps.is_empty() {
        ("sweep.h", sweep.h.clone())
    } else if sweep.h.is_empty() {
        ("sweep.h_steps", sweep.h_steps.iter().map(|c| c * grid.dt()).collect())
    } else {
        return Err(LabError::config("sweep.h_steps", "give either h or h_steps, not both"));
    };
    for (k, &h) in values.iter().enumerate() {
        average_samples(grid, h).map_err(|err| LabError::config(format!("{name}[{k}]"), err))?;
    }
    Ok(sorted_coarse_first(values))
}

fn sorted_coarse_first(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v.dedup();
    v
}

/// Jump fixtures also jump across the periodic seam, so every test function must stay clear of it.
fn check_away_from_seam(phis: &[PhiSpec], eps: &[f64], fixture: &str) -> Result<()> {
    let reach = eps.iter().copied().fold(0.0, f64::max);
    for (k, p) in phis.iter().enumerate() {
        let clear = match p.space {
            SpaceSpec::Bump { center, radius } => center[0] - radius - reach > 0.0 && center[0] + radius + reach < 1.0,
            _ => false,
        };
        if !clear {
            return Err(LabError::config(
                format!("phi[{k}]"),
                format!("{fixture} has a jump at the periodic seam; use a bump whose support plus {reach} stays inside (0, 1)"),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
[grid]
dim = 1
n_x = 64
n_t = 64
horizon = 1.0

[sweep]
eps_cells = [8, 4]

[[phi]]
id = "mid"
time = [0.5, 0.3]
space = { kind = "bump", center = [0.5, 0.0], radius = 0.2 }

[[fixture]]
kind = "constant"
id = "calm"
rho = 1.0
u = [0.5]
pressure = 1.0
"#;

    #[test]
    fn base_config_plans() {
        let plan = RunConfig::parse(BASE).unwrap().plan().unwrap();
        assert_eq!(plan.eps, vec![0.125, 0.0625]);
        assert_eq!(plan.seeds, vec![0]);
    }

    #[test]
    fn small_radius_is_named() {
        let text = BASE.replace("eps_cells = [8, 4]", "eps_cells = [8, 4, 2]");
        let err = RunConfig::parse(&text).unwrap().plan().unwrap_err();
        assert!(err.to_string().contains("sweep.eps_cells[2]"), "{err}");
    }

    #[test]
    fn unknown_kind_reports_a_line() {
        let text = BASE.replace("kind = \"constant\"", "kind = \"vortex\"");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn law_is_required_by_compressible_fixtures() {
        let text = BASE.replace("pressure = 1.0\n", "");
        let err = RunConfig::parse(&text).unwrap().plan().unwrap_err();
        assert!(err.to_string().contains("fixture[0]"), "{err}");
    }
}
