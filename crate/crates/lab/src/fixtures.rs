//! Turns fixture entries into sampled flow states.

use std::f64::consts::PI;

use onsagerlab_core::fieldsgen::{
    constant_state, continuous_bv_field, max_resolved_terms, stationary_jump, stationary_shock, step,
    transported_shear, weierstrass_field, FlowState, PiecewiseLinearProfile, ShockStates, WeierstrassField,
};
use onsagerlab_core::{Axes, Closure, Field, Grid, PressureLaw};

use crate::config::FixtureSpec;
use crate::error::{LabError, Result};

/// A sampled fixture together with whatever exact data it comes with.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub id: String,
    pub kind: &'static str,
    pub state: FlowState,
    /// Jump states of shock and jump fixtures.
    pub jump: Option<ShockStates>,
}

impl Fixture {
    /// The given pressure field if there is one, otherwise the law.
    pub fn closure<'a>(&'a self, law: Option<&'a PressureLaw>) -> Result<Closure<'a>> {
        match (&self.state.pressure, law) {
            (Some(p), _) => Ok(Closure::Incompressible(p)),
            (None, Some(l)) => Ok(Closure::Compressible(l)),
            (None, None) => Err(LabError::config(
                "law",
                format!("fixture {} needs a pressure law", self.id),
            )),
        }
    }
}

pub fn build(spec: &FixtureSpec, grid: Grid, law: Option<&PressureLaw>, seed: u64) -> Result<Fixture> {
    let need_law = || law.ok_or_else(|| LabError::config("law", format!("fixture {} needs a pressure law", spec.id())));
    let mut jump = None;
    let state = match spec {
        FixtureSpec::Constant { rho, u, pressure, .. } => {
            let st = constant_state(grid, *rho, u)?;
            match pressure {
                Some(p0) => st.with_constant_pressure(*p0)?,
                None => st,
            }
        }
        FixtureSpec::Shock {
            rho_left, rho_right, ..
        } => {
            let s = stationary_shock(need_law()?, *rho_left, *rho_right)?;
            jump = Some(s);
            s.sample(grid)?
        }
        FixtureSpec::Jump {
            rho_left, rho_right, ..
        } => {
            let s = stationary_jump(need_law()?, *rho_left, *rho_right)?;
            jump = Some(s);
            s.sample(grid)?
        }
        FixtureSpec::Shear {
            alpha,
            amplitude,
            rho_jump,
            pressure,
            ..
        } => {
            let n = grid.n_x();
            let line = Grid::new(1, n, 8, 1.0)?;
            let series = WeierstrassField::new(&line, *alpha, max_resolved_terms(n), seed, Axes::Space)?;
            let peak = (0..n)
                .map(|j| series.eval(0.0, [grid.coord(j), 0.0], 1.0).abs())
                .fold(0.0, f64::max);
            let (amp, jump_size) = (*amplitude, *rho_jump);
            transported_shear(
                grid,
                |x| 1.0 + 0.3 * (2.0 * PI * x[0]).sin() + jump_size * step(x[1]),
                move |y| amp * series.eval(0.0, [y, 0.0], 1.0) / peak,
                *pressure,
            )?
        }
        FixtureSpec::Weierstrass {
            alpha,
            beta,
            rho_mean,
            u_mean,
            amplitude,
            ..
        } => {
            let terms = max_resolved_terms(grid.n_x().min(grid.n_t()));
            let unit = |f: Field| {
                let m = f.max_abs();
                f.map(|w| w / m)
            };
            let base = seed.wrapping_mul(4);
            let wb = unit(weierstrass_field(grid, *beta, terms, base, Axes::Spacetime)?);
            let rho = wb.map(|w| rho_mean + amplitude * w);
            let parts = (0..grid.dim())
                .map(|k| {
                    let wa = unit(weierstrass_field(
                        grid,
                        *alpha,
                        terms,
                        base + 1 + k as u64,
                        Axes::Spacetime,
                    )?);
                    Ok(wa.map(|w| u_mean + amplitude * w))
                })
                .collect::<Result<Vec<Field>>>()?;
            let refs: Vec<&Field> = parts.iter().collect();
            FlowState {
                rho,
                u: Field::stack(&refs)?,
                pressure: None,
            }
        }
        FixtureSpec::Triangle {
            rho,
            u0,
            amplitude,
            speed,
            ..
        } => {
            let profile = PiecewiseLinearProfile::triangle(*amplitude)?;
            let wave = continuous_bv_field(grid, &profile, *speed)?.map(|w| u0 + w);
            let mut parts = vec![wave];
            if grid.dim() == 2 {
                parts.push(Field::zeros(grid, 1));
            }
            let refs: Vec<&Field> = parts.iter().collect();
            FlowState {
                rho: Field::constant(grid, &[*rho])?,
                u: Field::stack(&refs)?,
                pressure: None,
            }
        }
    };
    if spec.needs_law() {
        need_law()?.admit_field(&state.rho)?;
    }
    Ok(Fixture {
        id: spec.id().to_string(),
        kind: spec.kind(),
        state,
        jump,
    })
}
