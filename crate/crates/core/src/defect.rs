//! Weak-form energy balance residuals, total-energy series and rate regression.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::commutators::{check_phis, evaluate, CommutatorReport, LineRefs, WeakSums};
use crate::error::{invalid, Error, Result};
use crate::fit::{loglog_fit, RateFit};
use crate::grid::Field;
use crate::models::{check_state, energy_fields, Closure, PressureLaw};
use crate::testfn::TestFunction;

/// Weak energy residual and the scale of its quadrature error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakResidual {
    /// `-∫∫ (E d_t phi + F . grad phi)`; equals `<d_t E + div F, phi>`.
    pub value: f64,
    /// `max(dx, dt) ∫∫ (|E| |d_t phi| + |F| |grad phi|)`.
    pub quadrature_floor: f64,
}

/// `<d_t E + div F, phi>` evaluated in weak form; negative where energy is dissipated.
pub fn weak_energy_residual(rho: &Field, u: &Field, closure: Closure<'_>, phi: &TestFunction) -> Result<f64> {
    Ok(weak_energy_residual_with_floor(rho, u, closure, phi)?.value)
}

pub fn weak_energy_residual_with_floor(
    rho: &Field,
    u: &Field,
    closure: Closure<'_>,
    phi: &TestFunction,
) -> Result<WeakResidual> {
    let pair = energy_fields(rho, u, closure)?;
    let grid = *rho.grid();
    let d = grid.dim();
    let seps = check_phis(
        core::slice::from_ref(phi),
        &grid,
        (0.0, grid.horizon()),
        &pair.density.window(),
    )?;
    let sep = &seps[0];
    let mut sums = WeakSums::new(&seps);
    let mut floor = 0.0;
    let mut refs = LineRefs::new(&grid, sep.window.start);
    for i in sep.window.clone() {
        for s in 0..grid.n_space() {
            let e = pair.density.get(0, i, s);
            let mut f = [0.0; 2];
            for (k, fk) in f.iter_mut().enumerate().take(d) {
                *fk = pair.flux.get(k, i, s);
            }
            let (de, df) = refs.relative(i, s, e, f);
            sums.add(i, s, 0.0, de, df);
            let (_, dt, g) = sep.at(i, s);
            floor += e.abs() * dt.abs() + libm::sqrt(f[0] * f[0] + f[1] * f[1]) * libm::sqrt(g[0] * g[0] + g[1] * g[1]);
        }
    }
    let cell = grid.spacetime_cell();
    Ok(WeakResidual {
        value: -sums.sums[0] * cell,
        quadrature_floor: grid.dx().max(grid.dt()) * floor * cell,
    })
}

/// `max(dx, dt) ∫∫ (|E| |d_t phi| + |F| |grad phi|)`: the size below which a
/// weak residual is indistinguishable from quadrature error.
pub fn quadrature_floor(rho: &Field, u: &Field, closure: Closure<'_>, phi: &TestFunction) -> Result<f64> {
    Ok(weak_energy_residual_with_floor(rho, u, closure, phi)?.quadrature_floor)
}

/// Weak form of the mollified energy balance plus its commutator remainders.
///
/// In the continuum `∫∫ (E^eps d_t phi + F^eps . grad phi) + R1 + R2 (+ R3 + ∫ phi S) = 0`
/// exactly, with
/// `E^eps = rho^eps |u^eps|^2 / 2 (+ P(rho^eps))` and
/// `F^eps = (u^eps . (rho u)^eps) u^eps - (rho u)^eps |u^eps|^2 / 2 + p^eps u^eps (+ P(rho^eps) u^eps)`,
/// where `p^eps` is the mollified pressure (incompressible) or `p(rho^eps)`.
/// What remains is discretization error.
pub fn mollified_energy_identity_residual(
    rho: &Field,
    u: &Field,
    closure: Closure<'_>,
    phi: &TestFunction,
    epsilon: f64,
) -> Result<f64> {
    let ev = evaluate(rho, u, closure, core::slice::from_ref(phi), epsilon, true)?;
    let weak = ev.energy_weak.expect("energy requested")[0];
    Ok(weak + ev.reports[0].total())
}

/// Total energy per time sample.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergySeries {
    pub window: Range<usize>,
    pub values: Vec<f64>,
}

impl EnergySeries {
    /// `max_t |E(t) - E(t_0)| / mean E`; zero for an identically zero series.
    pub fn max_relative_deviation(&self) -> f64 {
        let Some(&e0) = self.values.first() else {
            return 0.0;
        };
        let mean = self.values.iter().sum::<f64>() / self.values.len() as f64;
        let dev = self.values.iter().fold(0.0f64, |a, v| a.max((v - e0).abs()));
        if dev == 0.0 {
            0.0
        } else {
            dev / mean.abs()
        }
    }
}

/// `∫ rho |u|^2 / 2 (+ P(rho)) dx` on every valid time slice.
///
/// The kinetic density is computed as `rho |u|^2 / 2`, which is the
/// `|rho u|^2 / (2 rho)` form with the value 0 on vacuum and no division.
pub fn total_energy_series(rho: &Field, u: &Field, law: Option<&PressureLaw>) -> Result<EnergySeries> {
    check_state(rho, u)?;
    if let Some(l) = law {
        l.admit_field(rho)?;
    } else if let Some(i) = rho
        .window()
        .find(|&i| rho.slice(0, i).iter().any(|&r| r.is_nan() || r < 0.0))
    {
        let v = rho
            .slice(0, i)
            .iter()
            .copied()
            .find(|r| r.is_nan() || *r < 0.0)
            .unwrap_or(f64::NAN);
        return Err(Error::NegativeDensity { value: v });
    }
    let grid = *rho.grid();
    let window = crate::grid::intersect(&rho.window(), &u.window());
    let mut values = Vec::with_capacity(window.len());
    for i in window.clone() {
        let r = rho.slice(0, i);
        let mut total = 0.0;
        for (s, &rs) in r.iter().enumerate() {
            let q: f64 = (0..grid.dim()).map(|c| u.get(c, i, s) * u.get(c, i, s)).sum();
            total += 0.5 * rs * q + law.map_or(0.0, |l| l.potential_raw(rs));
        }
        values.push(total * grid.cell_volume());
    }
    Ok(EnergySeries { window, values })
}

/// How a fitted slope is compared with the prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Comparison {
    /// `|slope - predicted| <= tol`.
    Within,
    /// `slope >= predicted - tol`: the prediction is a lower bound on the decay.
    AtLeast,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// Every value vanished exactly; nothing to fit.
    ExactConservation,
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateVerdict {
    pub fit: Option<RateFit>,
    pub predicted: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

/// Log-log slope of `values` against `eps` compared with `predicted`.
pub fn rate_fit(
    eps: &[f64],
    values: &[f64],
    predicted: f64,
    tolerance: f64,
    comparison: Comparison,
) -> Result<RateVerdict> {
    if eps.len() != values.len() {
        return Err(Error::ShapeMismatch("radii and values differ in length".into()));
    }
    if values.len() < 4 {
        return Err(invalid("values", "at least 4 are needed"));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Ok(RateVerdict {
            fit: None,
            predicted,
            tolerance,
            verdict: Verdict::ExactConservation,
        });
    }
    if let Some(&bad) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::DegenerateFit(alloc::format!(
            "non-positive value {bad} among nonzero values"
        )));
    }
    let fit = loglog_fit(eps, values)?;
    let ok = match comparison {
        Comparison::Within => (fit.slope - predicted).abs() <= tolerance,
        Comparison::AtLeast => fit.slope >= predicted - tolerance,
    };
    Ok(RateVerdict {
        fit: Some(fit),
        predicted,
        tolerance,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
    })
}

/// Limit of the commutator remainders as the mollification radius shrinks.
#[derive(Clone, Debug, PartialEq)]
pub struct DefectReport {
    pub fixture_id: String,
    pub system: String,
    pub phi: String,
    pub eps: Vec<f64>,
    /// `R1 + R2 (+ R3 + ∫ phi S)` per radius; tends to `<d_t E + div F, phi>`.
    pub residuals: Vec<f64>,
    pub commutators: Vec<CommutatorReport>,
    /// Fit of successive differences `|res(eps_k) - res(eps_{k+1})|` against the finer radius.
    pub rate_fit: Option<RateFit>,
    /// Richardson extrapolation from the two finest radii at the fitted order.
    pub extrapolated_defect: f64,
}

/// Two-point Richardson extrapolation: `fine + (fine - coarse) / (r^q - 1)`.
///
/// Without a positive order the finest value is returned unchanged.
pub fn richardson(fine: f64, coarse: f64, ratio: f64, order: f64) -> f64 {
    if order > 0.0 && ratio > 1.0 {
        fine + (fine - coarse) / (libm::pow(ratio, order) - 1.0)
    } else {
        fine
    }
}

/// Sorts `(eps, residual)` pairs from coarse to fine, fits the Cauchy
/// differences and extrapolates to `eps = 0`.
pub fn extrapolate_defect(eps: &[f64], residuals: &[f64]) -> Result<(Option<RateFit>, f64)> {
    if eps.len() != residuals.len() || eps.len() < 2 {
        return Err(invalid("eps list", "need at least two radii with one residual each"));
    }
    let mut pairs: Vec<(f64, f64)> = eps.iter().copied().zip(residuals.iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (xs, ds): (Vec<f64>, Vec<f64>) = pairs
        .windows(2)
        .map(|w| (w[1].0, (w[0].1 - w[1].1).abs()))
        .filter(|p| p.1 > 0.0)
        .unzip();
    let fit = if xs.len() >= 2 {
        Some(loglog_fit(&xs, &ds)?)
    } else {
        None
    };
    let n = pairs.len();
    let (fine, coarse) = (pairs[n - 1], pairs[n - 2]);
    let order = fit.as_ref().map_or(0.0, |f| f.slope);
    Ok((fit, richardson(fine.1, coarse.1, coarse.0 / fine.0, order)))
}

/// Commutator remainders over a radius sweep and their extrapolated limit.
pub fn defect_report(
    fixture_id: &str,
    rho: &Field,
    u: &Field,
    closure: Closure<'_>,
    phi: &TestFunction,
    eps_list: &[f64],
) -> Result<DefectReport> {
    let commutators = eps_list
        .iter()
        .map(|&e| crate::commutators::commutator_integrals(rho, u, closure, phi, e))
        .collect::<Result<Vec<_>>>()?;
    let residuals: Vec<f64> = commutators.iter().map(CommutatorReport::total).collect();
    let (rate_fit, extrapolated_defect) = extrapolate_defect(eps_list, &residuals)?;
    Ok(DefectReport {
        fixture_id: fixture_id.into(),
        system: closure.name().into(),
        phi: phi.descriptor(),
        eps: eps_list.to_vec(),
        residuals,
        commutators,
        rate_fit,
        extrapolated_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldsgen::{constant_state, stationary_jump, stationary_shear, stationary_shock};
    use crate::grid::Grid;
    use crate::testfn::{SpaceFactor, TimeBump};
    use core::f64::consts::PI;

    #[test]
    fn constant_state_is_exact() {
        let g = Grid::new(2, 32, 32, 1.0).unwrap();
        let st = constant_state(g, 1.3, &[0.4, 0.9])
            .unwrap()
            .with_constant_pressure(0.7)
            .unwrap();
        let phi = TestFunction::new(
            TimeBump::new(0.5, 0.3).unwrap(),
            SpaceFactor::Mode { k: [1, 2], sine: false },
        )
        .unwrap();
        let p = st.pressure.as_ref().unwrap();
        assert_eq!(
            weak_energy_residual(&st.rho, &st.u, Closure::Incompressible(p), &phi).unwrap(),
            0.0
        );
        let law = PressureLaw::new(2.0, 3.0).unwrap();
        assert_eq!(
            weak_energy_residual(&st.rho, &st.u, Closure::Compressible(&law), &phi).unwrap(),
            0.0
        );
        assert_eq!(
            mollified_energy_identity_residual(&st.rho, &st.u, Closure::Compressible(&law), &phi, 0.125).unwrap(),
            0.0
        );
        let e = total_energy_series(&st.rho, &st.u, Some(&law)).unwrap();
        assert_eq!(e.max_relative_deviation(), 0.0);
    }

    #[test]
    fn smooth_shear() {
        let g = Grid::new(2, 64, 64, 1.0).unwrap();
        let st = stationary_shear(
            g,
            |y| 1.0 + 0.5 * libm::sin(2.0 * PI * y),
            |y| libm::cos(2.0 * PI * y),
            1.0,
        )
        .unwrap();
        let p = st.pressure.as_ref().unwrap();
        let phi = TestFunction::new(
            TimeBump::new(0.5, 0.3).unwrap(),
            SpaceFactor::Bump {
                center: [0.3, 0.6],
                radius: 0.3,
            },
        )
        .unwrap()
        .combine(
            1.0,
            &TestFunction::new(
                TimeBump::new(0.45, 0.2).unwrap(),
                SpaceFactor::Mode { k: [1, 1], sine: true },
            )
            .unwrap(),
            0.3,
        );
        let r = weak_energy_residual(&st.rho, &st.u, Closure::Incompressible(p), &phi).unwrap();
        assert!(r.abs() < 1e-8, "{r}");
        let id =
            mollified_energy_identity_residual(&st.rho, &st.u, Closure::Incompressible(p), &phi, 8.0 / 64.0).unwrap();
        assert!(id.abs() < 1e-6, "{id}");
        let e = total_energy_series(&st.rho, &st.u, None).unwrap();
        assert!(e.max_relative_deviation() < 1e-12);
    }

    #[test]
    fn shock_dissipation_matches_jump_conditions() {
        let law = PressureLaw::new(1.0, 2.0).unwrap();
        let shock = stationary_shock(&law, 1.0, 2.0).unwrap();
        let g = Grid::new(1, 2048, 64, 1.0).unwrap();
        let st = shock.sample(g).unwrap();
        let phi = TestFunction::new(
            TimeBump::new(0.5, 0.4).unwrap(),
            SpaceFactor::Bump {
                center: [0.5, 0.0],
                radius: 0.25,
            },
        )
        .unwrap();
        let r = weak_energy_residual(&st.rho, &st.u, Closure::Compressible(&law), &phi).unwrap();
        let oracle = shock.dissipation_rate * phi.time_integral_at(&g, [0.5, 0.0]);
        assert!(r < 0.0);
        assert!((r / oracle - 1.0).abs() < 0.02, "{r} vs {oracle}");
        let rev = stationary_jump(&law, 2.0, 1.0).unwrap().sample(g).unwrap();
        assert!(weak_energy_residual(&rev.rho, &rev.u, Closure::Compressible(&law), &phi).unwrap() > 0.0);
    }

    #[test]
    fn rate_fits() {
        let eps = [0.1, 0.05, 0.025, 0.0125];
        let sq: Vec<f64> = eps.iter().map(|e| e * e).collect();
        let v = rate_fit(&eps, &sq, 2.0, 0.1, Comparison::Within).unwrap();
        assert_eq!(v.verdict, Verdict::Pass);
        assert!((v.fit.unwrap().slope - 2.0).abs() < 1e-12);
        assert_eq!(
            rate_fit(&eps, &[0.0; 4], 1.0, 0.1, Comparison::Within).unwrap().verdict,
            Verdict::ExactConservation
        );
        assert!(rate_fit(&eps, &[0.0, 1.0, 1.0, 1.0], 1.0, 0.1, Comparison::Within).is_err());
        assert_eq!(
            rate_fit(&eps, &sq, 3.0, 0.1, Comparison::AtLeast).unwrap().verdict,
            Verdict::Fail
        );
        assert_eq!(
            rate_fit(&eps, &sq, 1.0, 0.1, Comparison::AtLeast).unwrap().verdict,
            Verdict::Pass
        );
    }

    #[test]
    fn richardson_recovers_power_law_limits() {
        let eps = [0.08, 0.04, 0.02, 0.01];
        let res: Vec<f64> = eps.iter().map(|e| -1.5 + 3.0 * libm::pow(*e, 1.5)).collect();
        let (fit, lim) = extrapolate_defect(&eps, &res).unwrap();
        assert!((fit.unwrap().slope - 1.5).abs() < 1e-12);
        assert!((lim + 1.5).abs() < 1e-12);
    }
}
