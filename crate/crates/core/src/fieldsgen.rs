//! Generators of exact solutions and of synthetic fields with known regularity.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid};
use crate::models::PressureLaw;
use crate::mollify::Axes;

/// Density, velocity and (for incompressible flow) pressure samples.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub rho: Field,
    pub u: Field,
    pub pressure: Option<Field>,
}

impl FlowState {
    /// Attaches a constant pressure field.
    pub fn with_constant_pressure(mut self, p0: f64) -> Result<Self> {
        self.pressure = Some(Field::constant(*self.rho.grid(), &[p0])?);
        Ok(self)
    }
}

/// Constant density and velocity; solves both systems exactly.
pub fn constant_state(grid: Grid, rho0: f64, u0: &[f64]) -> Result<FlowState> {
    if rho0.is_nan() || rho0 < 0.0 {
        return Err(Error::NegativeDensity { value: rho0 });
    }
    if u0.len() != grid.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{} velocity components in dimension {}",
            u0.len(),
            grid.dim()
        )));
    }
    Ok(FlowState {
        rho: Field::constant(grid, &[rho0])?,
        u: Field::constant(grid, u0)?,
        pressure: None,
    })
}

fn require_plane(grid: &Grid) -> Result<()> {
    if grid.dim() != 2 {
        return Err(Error::InvalidGrid(format!(
            "shear flows need d = 2, got {}",
            grid.dim()
        )));
    }
    Ok(())
}

/// `rho = rho(x2)`, `u = (v(x2), 0)`, constant pressure: a time-independent
/// weak solution of the inhomogeneous incompressible system for any profiles.
pub fn stationary_shear<R, V>(grid: Grid, rho_profile: R, v_profile: V, p0: f64) -> Result<FlowState>
where
    R: Fn(f64) -> f64,
    V: Fn(f64) -> f64,
{
    require_plane(&grid)?;
    let rho = Field::sample(grid, |_, x| rho_profile(x[1]))?;
    let u = Field::sample_vector(grid, 2, |_, x, out| {
        out[0] = v_profile(x[1]);
        out[1] = 0.0;
    })?;
    FlowState { rho, u, pressure: None }.with_constant_pressure(p0)
}

/// `rho(t, x) = rho0(x1 - v(x2) t, x2)`, `u = (v(x2), 0)`, constant pressure.
///
/// The density is advected along each streamline, so continuity, momentum and
/// energy balances hold in the weak sense for any `rho0` periodic in `x1`.
pub fn transported_shear<R, V>(grid: Grid, rho0: R, v_profile: V, p0: f64) -> Result<FlowState>
where
    R: Fn([f64; 2]) -> f64,
    V: Fn(f64) -> f64,
{
    require_plane(&grid)?;
    let n = grid.n_x();
    let v: Vec<f64> = (0..n).map(|j| v_profile(grid.coord(j))).collect();
    if let Some(j) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            time_index: 0,
            space_index: j * n,
            component: 0,
            t: 0.0,
            x: [grid.coord(0), grid.coord(j)],
        });
    }
    let rho = Field::sample(grid, |t, x| {
        let j2 = libm::floor(x[1] * n as f64) as usize;
        rho0([x[0] - v[j2.min(n - 1)] * t, x[1]])
    })?;
    let u = Field::sample_vector(grid, 2, |_, x, out| {
        let j2 = libm::floor(x[1] * n as f64) as usize;
        out[0] = v[j2.min(n - 1)];
        out[1] = 0.0;
    })?;
    FlowState { rho, u, pressure: None }.with_constant_pressure(p0)
}

/// Constant states joined by a stationary discontinuity at `x = 1/2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShockStates {
    pub law: PressureLaw,
    pub rho_left: f64,
    pub rho_right: f64,
    pub u_left: f64,
    pub u_right: f64,
    /// `m = rho_L u_L = rho_R u_R`.
    pub mass_flux: f64,
    /// Jump `F_R - F_L` of the energy flux; negative for admissible shocks.
    pub dissipation_rate: f64,
}

/// Admissible stationary shock: `0 < rho_left < rho_right`, supersonic inflow from the left.
pub fn stationary_shock(law: &PressureLaw, rho_left: f64, rho_right: f64) -> Result<ShockStates> {
    if !(rho_left > 0.0 && rho_right > rho_left) {
        return Err(Error::NonAdmissibleShock(format!(
            "need 0 < rho_left < rho_right, got {rho_left} and {rho_right}"
        )));
    }
    let s = stationary_jump(law, rho_left, rho_right)?;
    let (cl, cr) = (law.sound_speed(rho_left)?, law.sound_speed(rho_right)?);
    if !(s.u_left > cl && s.u_right < cr) {
        return Err(Error::NonAdmissibleShock(format!(
            "u_L = {} vs c_L = {cl}, u_R = {} vs c_R = {cr}",
            s.u_left, s.u_right
        )));
    }
    Ok(s)
}

/// Any stationary jump satisfying the jump conditions with flow to the right,
/// including the energy-producing reversed ordering `rho_left > rho_right`.
pub fn stationary_jump(law: &PressureLaw, rho_left: f64, rho_right: f64) -> Result<ShockStates> {
    if !(rho_left > 0.0 && rho_right > 0.0) || rho_left == rho_right {
        return Err(Error::NonAdmissibleShock(format!(
            "need distinct positive densities, got {rho_left} and {rho_right}"
        )));
    }
    let (pl, pr) = (law.pressure(rho_left)?, law.pressure(rho_right)?);
    let m2 = (pr - pl) * rho_left * rho_right / (rho_right - rho_left);
    if !(m2 > 0.0) {
        return Err(Error::NonAdmissibleShock(format!(
            "squared mass flux {m2} is not positive"
        )));
    }
    let m = libm::sqrt(m2);
    let (ul, ur) = (m / rho_left, m / rho_right);
    let flux = |r: f64, u: f64| -> Result<f64> { Ok((0.5 * r * u * u + law.potential(r)? + law.pressure(r)?) * u) };
    let dissipation_rate = flux(rho_right, ur)? - flux(rho_left, ul)?;
    Ok(ShockStates {
        law: *law,
        rho_left,
        rho_right,
        u_left: ul,
        u_right: ur,
        mass_flux: m,
        dissipation_rate,
    })
}

impl ShockStates {
    /// Largest violation of the mass and momentum jump conditions.
    pub fn jump_residual(&self) -> f64 {
        let p = |r| self.law.p_raw(r);
        let mass = (self.rho_left * self.u_left - self.rho_right * self.u_right).abs();
        let mom = (self.rho_left * self.u_left * self.u_left + p(self.rho_left)
            - self.rho_right * self.u_right * self.u_right
            - p(self.rho_right))
        .abs();
        mass.max(mom)
    }

    /// One-dimensional samples: left state on `x < 1/2`, right state beyond.
    ///
    /// The periodic seam at `x = 0` also carries a jump; test functions must avoid it.
    pub fn sample(&self, grid: Grid) -> Result<FlowState> {
        if grid.dim() != 1 {
            return Err(Error::InvalidGrid("shock fixtures are one-dimensional".into()));
        }
        let (rl, rr, ul, ur) = (self.rho_left, self.rho_right, self.u_left, self.u_right);
        Ok(FlowState {
            rho: Field::sample(grid, |_, x| if x[0] < 0.5 { rl } else { rr })?,
            u: Field::sample(grid, |_, x| if x[0] < 0.5 { ul } else { ur })?,
            pressure: None,
        })
    }
}

/// Lacunary series `sum_{k=0}^{n} 2^{-k alpha} cos(2 pi 2^k x + phase_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeierstrassSeries {
    pub alpha: f64,
    pub phases: Vec<f64>,
}

impl WeierstrassSeries {
    pub fn new(alpha: f64, n_terms: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", format!("{alpha} is not in (0, 1)")));
        }
        let phases = (0..=n_terms).map(|_| 2.0 * PI * rng.gen::<f64>()).collect();
        Ok(Self { alpha, phases })
    }

    pub fn n_terms(&self) -> usize {
        self.phases.len() - 1
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut total = 0.0;
        let mut freq = 1.0;
        for (k, ph) in self.phases.iter().enumerate() {
            total += libm::exp2(-(k as f64) * self.alpha) * libm::cos(2.0 * PI * freq * x + ph);
            freq *= 2.0;
        }
        total
    }

    /// `sum_k 2^{-k alpha}`, a bound on `|W|`.
    pub fn amplitude_bound(&self) -> f64 {
        (0..self.phases.len())
            .map(|k| libm::exp2(-(k as f64) * self.alpha))
            .sum()
    }
}

/// Separable sum of independent series along each spatial axis and, for
/// space-time fields, along `t / T`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeierstrassField {
    pub space: Vec<WeierstrassSeries>,
    pub time: Option<WeierstrassSeries>,
    pub seed: u64,
}

impl WeierstrassField {
    pub fn new(grid: &Grid, alpha: f64, n_terms: usize, seed: u64, axes: Axes) -> Result<Self> {
        let top = 1usize.checked_shl(n_terms as u32).unwrap_or(usize::MAX);
        if top.saturating_mul(4) > grid.n_x() {
            return Err(invalid(
                "n_terms",
                format!("top frequency 2^{n_terms} is under-resolved by n_x = {}", grid.n_x()),
            ));
        }
        if axes == Axes::Spacetime && top.saturating_mul(4) > grid.n_t() {
            return Err(invalid(
                "n_terms",
                format!("top frequency 2^{n_terms} is under-resolved by n_t = {}", grid.n_t()),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = (0..grid.dim())
            .map(|_| WeierstrassSeries::new(alpha, n_terms, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let time = match axes {
            Axes::Space => None,
            Axes::Spacetime => Some(WeierstrassSeries::new(alpha, n_terms, &mut rng)?),
        };
        Ok(Self { space, time, seed })
    }

    pub fn eval(&self, t: f64, x: [f64; 2], horizon: f64) -> f64 {
        let mut v: f64 = self.space.iter().zip(x).map(|(s, xi)| s.eval(xi)).sum();
        if let Some(ts) = &self.time {
            v += ts.eval(t / horizon);
        }
        v
    }

    pub fn amplitude_bound(&self) -> f64 {
        self.space
            .iter()
            .chain(self.time.iter())
            .map(WeierstrassSeries::amplitude_bound)
            .sum()
    }

    pub fn sample(&self, grid: Grid) -> Result<Field> {
        let horizon = grid.horizon();
        Field::sample(grid, |t, x| self.eval(t, x, horizon))
    }
}

/// Scalar field with smoothness exponent `alpha` along the chosen axes.
pub fn weierstrass_field(grid: Grid, alpha: f64, n_terms: usize, seed: u64, axes: Axes) -> Result<Field> {
    WeierstrassField::new(&grid, alpha, n_terms, seed, axes)?.sample(grid)
}

/// Largest number of terms resolved with at least 4 samples per shortest wavelength.
pub fn max_resolved_terms(n: usize) -> usize {
    let mut k = 0;
    while (1usize << (k + 1)) * 4 <= n {
        k += 1;
    }
    k
}

/// Continuous periodic piecewise-linear profile on `[0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseLinearProfile {
    knots: Vec<(f64, f64)>,
}

impl PiecewiseLinearProfile {
    /// Knots `(x_i, y_i)` with `x_0 = 0 < x_1 < .. < x_n = 1` and `y_n = y_0`.
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(invalid("knots", "need at least two knots"));
        }
        if knots[0].0 != 0.0 || knots[knots.len() - 1].0 != 1.0 {
            return Err(invalid("knots", "abscissae must run from 0 to 1"));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(invalid("knots", "abscissae must increase strictly"));
        }
        if knots.iter().any(|k| !k.1.is_finite()) {
            return Err(invalid("knots", "non-finite value"));
        }
        let jump = knots[knots.len() - 1].1 - knots[0].1;
        if jump.abs() > 1e-12 {
            return Err(invalid("knots", format!("jump of {jump} across the periodic seam")));
        }
        Ok(Self { knots })
    }

    /// Zero-mean triangle wave: `-a` at 0 and 1, `+a` at 1/2.
    pub fn triangle(amplitude: f64) -> Result<Self> {
        Self::new(alloc::vec![(0.0, -amplitude), (0.5, amplitude), (1.0, -amplitude)])
    }

    pub fn flat(value: f64) -> Result<Self> {
        Self::new(alloc::vec![(0.0, value), (1.0, value)])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let x = x - libm::floor(x);
        let i = self.knots.partition_point(|k| k.0 <= x).clamp(1, self.knots.len() - 1);
        let (x0, y0) = self.knots[i - 1];
        let (x1, y1) = self.knots[i];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Closed-form total variation over one period.
    pub fn total_variation(&self) -> f64 {
        self.knots.windows(2).map(|w| (w[1].1 - w[0].1).abs()).sum()
    }
}

/// `profile(x1 - speed * t)`: a continuous BV field travelling at `speed`.
pub fn continuous_bv_field(grid: Grid, profile: &PiecewiseLinearProfile, speed: f64) -> Result<Field> {
    Field::sample(grid, |t, x| profile.eval(x[0] - speed * t))
}

/// Indicator of `[0, 1/2)` extended periodically.
pub fn step(x: f64) -> f64 {
    if x - libm::floor(x) < 0.5 {
        1.0
    } else {
        0.0
    }
}

/// `2 frac(x)`: slope 2 with a unit-period jump at the seam.
pub fn sawtooth(x: f64) -> f64 {
    2.0 * (x - libm::floor(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::besov::{fit_regularity_exponent, total_variation, ShiftSweep};

    #[test]
    fn quadratic_law_shock_oracle() {
        let law = PressureLaw::new(1.0, 2.0).unwrap();
        let s = stationary_shock(&law, 1.0, 2.0).unwrap();
        let r6 = libm::sqrt(6.0);
        assert!((s.mass_flux - r6).abs() < 1e-14);
        assert!((s.u_left - r6).abs() < 1e-14);
        assert!((s.u_right - r6 / 2.0).abs() < 1e-14);
        assert!((s.dissipation_rate + 0.25 * r6).abs() < 1e-12);
        assert!(s.jump_residual() < 1e-12);
        // m^2 = rho_L rho_R (rho_L + rho_R) for this law.
        assert!((s.mass_flux * s.mass_flux - 6.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_and_reversed_jumps() {
        let law = PressureLaw::new(1.0, 2.0).unwrap();
        assert!(stationary_shock(&law, 1.0, 1.0).is_err());
        assert!(stationary_shock(&law, 2.0, 1.0).is_err());
        let rev = stationary_jump(&law, 2.0, 1.0).unwrap();
        assert!(rev.dissipation_rate > 0.0);
    }

    #[test]
    fn weak_shocks_dissipate_cubically() {
        let law = PressureLaw::new(1.0, 2.0).unwrap();
        let d = |dr: f64| stationary_shock(&law, 1.0, 1.0 + dr).unwrap().dissipation_rate.abs();
        let ratio = d(0.01) / d(0.005);
        assert!((ratio - 8.0).abs() < 0.1, "{ratio}");
        assert!(d(0.01) < 1e-5);
    }

    #[test]
    fn constant_states() {
        let g = Grid::new(2, 8, 8, 1.0).unwrap();
        let s = constant_state(g, 1.0, &[2.0, 3.0]).unwrap();
        assert_eq!(s.u.get(1, 4, 9), 3.0);
        assert!(constant_state(g, -1.0, &[0.0, 0.0]).is_err());
        assert!(constant_state(g, 0.0, &[0.0]).is_err());
        assert!(constant_state(g, 0.0, &[0.0, 0.0]).is_ok());
    }

    #[test]
    fn shear_needs_the_plane() {
        let g = Grid::new(1, 8, 8, 1.0).unwrap();
        assert!(stationary_shear(g, |_| 1.0, |_| 0.0, 0.0).is_err());
        let g = Grid::new(2, 16, 8, 1.0).unwrap();
        let s = transported_shear(g, |x| 1.0 + x[0], |y| y, 0.0).unwrap();
        // rho(t, x) = 1 + frac-free shift x1 - v t.
        let (i, s_idx) = (3, g.flat([4, 7]));
        let [x1, x2] = g.point(s_idx);
        assert!((s.rho.get(0, i, s_idx) - (1.0 + x1 - x2 * g.time(i))).abs() < 1e-14);
    }

    #[test]
    fn weierstrass_preconditions_and_determinism() {
        let g = Grid::new(1, 64, 8, 1.0).unwrap();
        assert!(weierstrass_field(g, 0.5, 4, 1, Axes::Space).is_ok());
        assert!(weierstrass_field(g, 0.5, 5, 1, Axes::Space).is_err());
        assert!(weierstrass_field(g, 1.0, 2, 1, Axes::Space).is_err());
        let a = weierstrass_field(g, 0.5, 4, 9, Axes::Space).unwrap();
        let b = weierstrass_field(g, 0.5, 4, 9, Axes::Space).unwrap();
        assert_eq!(a, b);
        assert_eq!(max_resolved_terms(4096), 10);
    }

    #[test]
    fn single_cosine_is_smooth() {
        let g = Grid::new(1, 4096, 8, 1.0).unwrap();
        let w = weierstrass_field(g, 0.5, 0, 3, Axes::Space).unwrap();
        let fit = fit_regularity_exponent(&w, 3.0, &ShiftSweep::standard(&g, Axes::Space).unwrap()).unwrap();
        assert!((fit.alpha_hat - 1.0).abs() < 0.05);
    }

    #[test]
    fn profiles() {
        let tri = PiecewiseLinearProfile::triangle(1.0).unwrap();
        assert_eq!(tri.total_variation(), 4.0);
        assert_eq!(tri.eval(0.25), 0.0);
        assert_eq!(tri.eval(1.5), 1.0);
        assert_eq!(PiecewiseLinearProfile::flat(2.0).unwrap().total_variation(), 0.0);
        assert!(PiecewiseLinearProfile::new(alloc::vec![(0.0, 0.0), (1.0, 1.0)]).is_err());
        let g = Grid::new(1, 256, 8, 1.0).unwrap();
        let f = continuous_bv_field(g, &tri, 0.0).unwrap();
        assert!((total_variation(&f, 0).unwrap() - 4.0).abs() < 0.05);
        assert_eq!(step(0.25), 1.0);
        assert_eq!(step(1.75), 0.0);
        assert_eq!(sawtooth(1.25), 0.5);
    }
}
