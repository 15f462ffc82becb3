//! Isentropic pressure law, its potential, and the energy density and flux
//! of both Euler systems.

use alloc::format;

use crate::error::{invalid, Error, Result};
use crate::grid::{check_same_grid, Field};

/// `p(rho) = kappa * rho^gamma`.
///
/// Without a density floor the law requires `gamma >= 2`, which keeps `p` twice
/// differentiable down to vacuum. With a floor `gamma > 1` is allowed and
/// densities below the floor are rejected.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PressureLaw {
    kappa: f64,
    gamma: f64,
    floor: Option<f64>,
}

impl PressureLaw {
    pub fn new(kappa: f64, gamma: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(invalid("kappa", format!("{kappa} is not positive")));
        }
        if !(gamma.is_finite() && gamma >= 2.0) {
            return Err(invalid("gamma", format!("{gamma} < 2 needs a positive density floor")));
        }
        Ok(Self {
            kappa,
            gamma,
            floor: None,
        })
    }

    pub fn with_floor(kappa: f64, gamma: f64, floor: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(invalid("kappa", format!("{kappa} is not positive")));
        }
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(invalid("gamma", format!("{gamma} is not above 1")));
        }
        if !(floor.is_finite() && floor > 0.0) {
            return Err(invalid("density floor", format!("{floor} is not positive")));
        }
        Ok(Self {
            kappa,
            gamma,
            floor: Some(floor),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn floor(&self) -> Option<f64> {
        self.floor
    }

    /// Rejects densities outside the range where the law is twice differentiable.
    pub fn admit(&self, rho: f64) -> Result<()> {
        if rho.is_nan() || rho < 0.0 {
            return Err(Error::NegativeDensity { value: rho });
        }
        if let Some(floor) = self.floor {
            if rho < floor {
                return Err(Error::BelowDensityFloor { value: rho, floor });
            }
        }
        Ok(())
    }

    fn pow(&self, rho: f64, e: f64) -> f64 {
        if e == 0.0 {
            1.0
        } else if rho == 0.0 {
            0.0
        } else {
            libm::pow(rho, e)
        }
    }

    /// Pressure without the admissibility check; callers validate the range.
    pub(crate) fn p_raw(&self, rho: f64) -> f64 {
        self.kappa * self.pow(rho, self.gamma)
    }

    pub(crate) fn dp_raw(&self, rho: f64) -> f64 {
        self.kappa * self.gamma * self.pow(rho, self.gamma - 1.0)
    }

    pub(crate) fn d2p_raw(&self, rho: f64) -> f64 {
        self.kappa * self.gamma * (self.gamma - 1.0) * self.pow(rho, self.gamma - 2.0)
    }

    pub(crate) fn potential_raw(&self, rho: f64) -> f64 {
        self.kappa * (self.pow(rho, self.gamma) - rho) / (self.gamma - 1.0)
    }

    pub(crate) fn dpotential_raw(&self, rho: f64) -> f64 {
        self.kappa * (self.gamma * self.pow(rho, self.gamma - 1.0) - 1.0) / (self.gamma - 1.0)
    }

    pub(crate) fn d2potential_raw(&self, rho: f64) -> f64 {
        self.kappa * self.gamma * self.pow(rho, self.gamma - 2.0)
    }

    pub fn pressure(&self, rho: f64) -> Result<f64> {
        self.admit(rho)?;
        Ok(self.p_raw(rho))
    }

    /// `(p'(rho), p''(rho))`.
    pub fn pressure_derivs(&self, rho: f64) -> Result<(f64, f64)> {
        self.admit(rho)?;
        Ok((self.dp_raw(rho), self.d2p_raw(rho)))
    }

    /// `P(rho) = rho * integral_1^rho p(r)/r^2 dr = kappa (rho^gamma - rho)/(gamma - 1)`.
    pub fn potential(&self, rho: f64) -> Result<f64> {
        self.admit(rho)?;
        Ok(self.potential_raw(rho))
    }

    /// `(P'(rho), P''(rho))`.
    pub fn potential_derivs(&self, rho: f64) -> Result<(f64, f64)> {
        self.admit(rho)?;
        Ok((self.dpotential_raw(rho), self.d2potential_raw(rho)))
    }

    /// Sound speed `sqrt(p'(rho))`.
    pub fn sound_speed(&self, rho: f64) -> Result<f64> {
        self.admit(rho)?;
        Ok(libm::sqrt(self.dp_raw(rho)))
    }

    /// Checks every density sample in the valid window.
    pub fn admit_field(&self, rho: &Field) -> Result<()> {
        if !rho.is_scalar() {
            return Err(Error::ShapeMismatch("density must be scalar".into()));
        }
        for i in rho.window() {
            for &v in rho.slice(0, i) {
                self.admit(v)?;
            }
        }
        Ok(())
    }

    pub fn pressure_field(&self, rho: &Field) -> Result<Field> {
        self.admit_field(rho)?;
        Ok(rho.map(|r| self.p_raw(r)))
    }

    pub fn potential_field(&self, rho: &Field) -> Result<Field> {
        self.admit_field(rho)?;
        Ok(rho.map(|r| self.potential_raw(r)))
    }
}

/// Largest `|rho P'(rho) - P(rho) - p(rho)|` over the samples.
pub fn check_potential_identity(law: &PressureLaw, rho: &Field) -> Result<f64> {
    law.admit_field(rho)?;
    let mut worst = 0.0f64;
    for i in rho.window() {
        for &r in rho.slice(0, i) {
            let res = r * law.dpotential_raw(r) - law.potential_raw(r) - law.p_raw(r);
            worst = worst.max(res.abs());
        }
    }
    Ok(worst)
}

/// How the pressure enters the energy balance.
#[derive(Clone, Copy, Debug)]
pub enum Closure<'a> {
    /// Inhomogeneous incompressible flow with a sampled pressure field.
    Incompressible(&'a Field),
    /// Compressible isentropic flow with a constitutive law.
    Compressible(&'a PressureLaw),
}

impl Closure<'_> {
    pub fn is_compressible(&self) -> bool {
        matches!(self, Closure::Compressible(_))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Closure::Incompressible(_) => "incompressible",
            Closure::Compressible(_) => "compressible",
        }
    }
}

/// Energy density `E` and flux `F` of a flow state.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyPair {
    pub density: Field,
    pub flux: Field,
}

pub(crate) fn check_state(rho: &Field, u: &Field) -> Result<()> {
    check_same_grid(rho, u)?;
    if !rho.is_scalar() {
        return Err(Error::ShapeMismatch("density must be scalar".into()));
    }
    if u.components() != rho.grid().dim() {
        return Err(Error::ShapeMismatch(format!(
            "velocity has {} components in dimension {}",
            u.components(),
            rho.grid().dim()
        )));
    }
    Ok(())
}

/// `E = rho|u|^2/2 (+ P(rho))`, `F = (E + p) u`.
pub fn energy_fields(rho: &Field, u: &Field, closure: Closure<'_>) -> Result<EnergyPair> {
    check_state(rho, u)?;
    let grid = *rho.grid();
    let d = grid.dim();
    let pressure = match closure {
        Closure::Incompressible(p) => {
            check_same_grid(rho, p)?;
            if !p.is_scalar() {
                return Err(Error::ShapeMismatch("pressure must be scalar".into()));
            }
            p.clone()
        }
        Closure::Compressible(law) => law.pressure_field(rho)?,
    };
    let potential = match closure {
        Closure::Incompressible(_) => None,
        Closure::Compressible(law) => Some(law.potential_field(rho)?),
    };
    let window = crate::grid::intersect(&rho.window(), &u.window());
    let window = crate::grid::intersect(&window, &pressure.window());
    let mut density = Field::zeros(grid, 1);
    let mut flux = Field::zeros(grid, d);
    for i in window.clone() {
        for s in 0..grid.n_space() {
            let r = rho.get(0, i, s);
            let mut q = 0.0;
            for c in 0..d {
                let v = u.get(c, i, s);
                q += v * v;
            }
            let mut e = 0.5 * r * q;
            if let Some(pp) = &potential {
                e += pp.get(0, i, s);
            }
            let total = e + pressure.get(0, i, s);
            density.slice_mut(0, i)[s] = e;
            for c in 0..d {
                flux.slice_mut(c, i)[s] = total * u.get(c, i, s);
            }
        }
    }
    density.narrow(window.clone());
    flux.narrow(window);
    Ok(EnergyPair { density, flux })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn quadratic_law_values() {
        let law = PressureLaw::new(1.0, 2.0).unwrap();
        assert_eq!(law.pressure(2.0).unwrap(), 4.0);
        assert_eq!(law.pressure_derivs(2.0).unwrap(), (4.0, 2.0));
        assert_eq!(law.pressure(0.0).unwrap(), 0.0);
        assert_eq!(law.pressure_derivs(0.0).unwrap().0, 0.0);
        assert_eq!(law.potential(1.0).unwrap(), 0.0);
        assert_eq!(law.potential(2.0).unwrap(), 2.0);
        assert_eq!(law.potential(0.0).unwrap(), 0.0);
        assert!(matches!(law.pressure(-0.1), Err(Error::NegativeDensity { .. })));
    }

    #[test]
    fn floors() {
        assert!(PressureLaw::new(1.0, 1.4).is_err());
        let law = PressureLaw::with_floor(1.0, 1.4, 0.1).unwrap();
        assert!(matches!(law.pressure(0.05), Err(Error::BelowDensityFloor { .. })));
        assert!(law.pressure(0.2).is_ok());
        assert!(PressureLaw::with_floor(1.0, 1.4, 0.0).is_err());
        assert!(PressureLaw::new(0.0, 2.0).is_err());
    }

    #[test]
    fn potential_identity_examples() {
        let law = PressureLaw::new(1.0, 2.0).unwrap();
        let g = Grid::new(1, 8, 8, 1.0).unwrap();
        let two = Field::constant(g, &[2.0]).unwrap();
        assert_eq!(check_potential_identity(&law, &two).unwrap(), 0.0);
        let one = Field::constant(g, &[1.0]).unwrap();
        assert_eq!(check_potential_identity(&law, &one).unwrap(), 0.0);
        let k = PressureLaw::new(2.5, 3.0).unwrap();
        assert_eq!(k.potential_derivs(1.0).unwrap().0, 2.5);
    }

    #[test]
    fn energy_examples() {
        let g = Grid::new(1, 8, 8, 1.0).unwrap();
        let law = PressureLaw::new(1.0, 2.0).unwrap();
        let rho = Field::constant(g, &[1.0]).unwrap();
        let u = Field::constant(g, &[0.0]).unwrap();
        let p = Field::constant(g, &[0.0]).unwrap();
        let e = energy_fields(&rho, &u, Closure::Incompressible(&p)).unwrap();
        assert_eq!(e.density.max_abs(), 0.0);
        assert_eq!(e.flux.max_abs(), 0.0);
        let e = energy_fields(&rho, &u, Closure::Compressible(&law)).unwrap();
        assert_eq!(e.density.max_abs(), 0.0);
        let rho = Field::constant(g, &[2.0]).unwrap();
        let u = Field::constant(g, &[1.0]).unwrap();
        let e = energy_fields(&rho, &u, Closure::Compressible(&law)).unwrap();
        assert_eq!(e.density.get(0, 3, 3), 3.0);
        assert_eq!(e.flux.get(0, 3, 3), 7.0);
        let u2 = Field::constant(g, &[1.0, 1.0]).unwrap();
        assert!(energy_fields(&rho, &u2, Closure::Compressible(&law)).is_err());
    }
}
