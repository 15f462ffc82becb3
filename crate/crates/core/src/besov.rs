//! Translation-increment estimates of Lebesgue and Besov norms, total
//! variation, and exponent fitting.
//!
//! All norms are taken over the valid time window times the torus with the
//! space-time cell measure `dt * dx^d`. Vector fields use the pointwise
//! Euclidean magnitude.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::fit::loglog_fit;
use crate::grid::{overlap_window, Field, Grid, Shift};
use crate::mollify::Axes;

fn check_exponent(p: f64) -> Result<()> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidExponent(p));
    }
    Ok(())
}

/// Accumulates `|v|^p` samples into a discrete `L^p` norm.
struct LpAccumulator {
    p: f64,
    acc: f64,
}

impl LpAccumulator {
    fn new(p: f64) -> Self {
        Self { p, acc: 0.0 }
    }

    #[inline]
    fn push(&mut self, magnitude: f64) {
        let a = magnitude.abs();
        if self.p == f64::INFINITY {
            self.acc = self.acc.max(a);
        } else if self.p == 1.0 {
            self.acc += a;
        } else if self.p == 2.0 {
            self.acc += a * a;
        } else if self.p == 3.0 {
            self.acc += a * a * a;
        } else if a > 0.0 {
            self.acc += libm::pow(a, self.p);
        }
    }

    fn finish(self, measure: f64) -> f64 {
        if self.p == f64::INFINITY {
            self.acc
        } else if self.p == 1.0 {
            self.acc * measure
        } else if self.p == 2.0 {
            libm::sqrt(self.acc * measure)
        } else {
            libm::pow(self.acc * measure, 1.0 / self.p)
        }
    }
}

/// Discrete `L^p` norm over the valid window; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(field: &Field, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let grid = field.grid();
    let mut acc = LpAccumulator::new(p);
    let nc = field.components();
    for i in field.window() {
        if nc == 1 {
            for &v in field.slice(0, i) {
                acc.push(v);
            }
        } else {
            for s in 0..grid.n_space() {
                let mut sq = 0.0;
                for c in 0..nc {
                    let v = field.get(c, i, s);
                    sq += v * v;
                }
                acc.push(libm::sqrt(sq));
            }
        }
    }
    Ok(acc.finish(grid.spacetime_cell()))
}

/// `L^p` norm of `w(. + xi) - w` over the times where both samples are valid.
pub fn shift_seminorm(field: &Field, shift: Shift, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if shift.is_zero() {
        return Err(Error::ZeroShift);
    }
    let grid = field.grid();
    if shift.time.unsigned_abs() >= grid.n_t() {
        return Err(Error::ShiftOutOfRange {
            time_offset: shift.time,
            n_t: grid.n_t(),
        });
    }
    let window = overlap_window(&field.window(), shift.time);
    if window.is_empty() {
        return Err(Error::EmptyWindow(format!(
            "time shift {} leaves no overlap",
            shift.time
        )));
    }
    let n = grid.n_space();
    let map: Vec<usize> = (0..n).map(|s| grid.offset_index(s, shift.space)).collect();
    let nc = field.components();
    let mut acc = LpAccumulator::new(p);
    for i in window {
        let j = (i as isize + shift.time) as usize;
        if nc == 1 {
            let a = field.slice(0, i);
            let b = field.slice(0, j);
            for s in 0..n {
                acc.push(b[map[s]] - a[s]);
            }
        } else {
            for s in 0..n {
                let mut sq = 0.0;
                for c in 0..nc {
                    let d = field.get(c, j, map[s]) - field.get(c, i, s);
                    sq += d * d;
                }
                acc.push(libm::sqrt(sq));
            }
        }
    }
    Ok(acc.finish(grid.spacetime_cell()))
}

/// Shifts sharing one nominal magnitude.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftScale {
    /// Spatial cells per nonzero spatial component.
    pub cells: usize,
    /// Nominal magnitude `cells * dx`, the abscissa of exponent fits.
    pub nominal: f64,
    pub shifts: Vec<Shift>,
}

/// A set of lattice shifts grouped by scale, finest first.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiftSweep {
    scales: Vec<ShiftScale>,
}

impl ShiftSweep {
    /// Dyadic magnitudes `min_cells, 2 min_cells, ..` up to `max_cells`, each with
    /// every axis-aligned and diagonal direction in one half-space.
    ///
    /// Time components use the number of time cells closest to the spatial length.
    pub fn dyadic(grid: &Grid, axes: Axes, min_cells: usize, max_cells: usize) -> Result<Self> {
        if min_cells == 0 || max_cells < min_cells {
            return Err(invalid(
                "shift cells",
                format!("range {min_cells}..={max_cells} is empty"),
            ));
        }
        if max_cells >= grid.n_x() {
            return Err(invalid("shift cells", format!("{max_cells} cells wrap the torus")));
        }
        let mut scales = Vec::new();
        let mut c = min_cells;
        while c <= max_cells {
            let time_cells = if axes == Axes::Spacetime {
                let ct = libm::round(c as f64 * grid.dx() / grid.dt()).max(1.0) as usize;
                if 2 * ct >= grid.n_t() {
                    return Err(invalid(
                        "shift cells",
                        format!(
                            "{c} cells needs {ct} time cells, more than half of n_t = {}",
                            grid.n_t()
                        ),
                    ));
                }
                Some(ct as isize)
            } else {
                None
            };
            scales.push(ShiftScale {
                cells: c,
                nominal: c as f64 * grid.dx(),
                shifts: directions(grid.dim(), c as isize, time_cells),
            });
            c *= 2;
        }
        Ok(Self { scales })
    }

    /// Default protocol: from 4 cells up to `max(1/32, 32 dx)`, capped at a quarter period.
    pub fn standard(grid: &Grid, axes: Axes) -> Result<Self> {
        let top = (grid.n_x() / 32).max(32).min(grid.n_x() / 4);
        Self::dyadic(grid, axes, 4, top)
    }

    /// Sweep made of explicit shifts, grouped by the largest spatial component.
    pub fn from_shifts(grid: &Grid, shifts: &[Shift]) -> Result<Self> {
        let mut scales: Vec<ShiftScale> = Vec::new();
        for &sh in shifts {
            if sh.is_zero() {
                return Err(Error::ZeroShift);
            }
            let cells = sh.space[0].unsigned_abs().max(sh.space[1].unsigned_abs()).max(1);
            match scales.iter_mut().find(|s| s.cells == cells) {
                Some(s) => s.shifts.push(sh),
                None => scales.push(ShiftScale {
                    cells,
                    nominal: cells as f64 * grid.dx(),
                    shifts: alloc::vec![sh],
                }),
            }
        }
        scales.sort_by_key(|s| s.cells);
        Ok(Self { scales })
    }

    pub fn scales(&self) -> &[ShiftScale] {
        &self.scales
    }

    /// Total number of shifts.
    pub fn len(&self) -> usize {
        self.scales.iter().map(|s| s.shifts.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn directions(dim: usize, c: isize, time_cells: Option<isize>) -> Vec<Shift> {
    let axes = dim + usize::from(time_cells.is_some());
    let mut out = Vec::new();
    let total = 3usize.pow(axes as u32);
    for code in 0..total {
        let mut digits = [0isize; 3];
        let mut rem = code;
        for d in digits.iter_mut().take(axes) {
            *d = (rem % 3) as isize - 1;
            rem /= 3;
        }
        // Keep one representative of each +-pair: the first nonzero digit is positive.
        match digits[..axes].iter().find(|&&d| d != 0) {
            Some(&first) if first > 0 => {}
            _ => continue,
        }
        let (t, sp) = match time_cells {
            Some(ct) => (digits[0] * ct, &digits[1..]),
            None => (0, &digits[..]),
        };
        let mut space = [0isize; 2];
        for (k, &d) in sp.iter().take(dim).enumerate() {
            space[k] = d * c;
        }
        out.push(Shift::new(t, space));
    }
    out
}

/// Result of a Besov norm evaluation over a finite shift set.
#[derive(Clone, Debug, PartialEq)]
pub struct BesovEstimate {
    pub p: f64,
    pub alpha: f64,
    pub lp_norm: f64,
    /// Largest `||w(. + xi) - w||_p / |xi|^alpha` over the sweep.
    pub seminorm: f64,
    pub shift_count: usize,
    /// Shift attaining the seminorm.
    pub argmax: Shift,
    pub argmax_magnitude: f64,
    /// Largest ratio per scale, finest scale first.
    pub per_scale: Vec<(f64, f64)>,
    /// True when the ratio grows strictly across the four finest scales.
    pub divergent: bool,
}

impl BesovEstimate {
    pub fn norm(&self) -> f64 {
        self.lp_norm + self.seminorm
    }
}

pub fn besov_norm_estimate(field: &Field, p: f64, alpha: f64, sweep: &ShiftSweep) -> Result<BesovEstimate> {
    check_exponent(p)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("{alpha} is not in [0, 1]")));
    }
    if sweep.is_empty() {
        return Err(invalid("shift sweep", "no shifts"));
    }
    let lp = lp_norm(field, p)?;
    let grid = field.grid();
    let mut seminorm = 0.0f64;
    let mut argmax = sweep.scales[0].shifts[0];
    let mut per_scale = Vec::with_capacity(sweep.scales.len());
    for scale in &sweep.scales {
        let mut best = 0.0f64;
        for &sh in &scale.shifts {
            let ratio = shift_seminorm(field, sh, p)? / libm::pow(sh.magnitude(grid), alpha);
            best = best.max(ratio);
            if ratio > seminorm {
                seminorm = ratio;
                argmax = sh;
            }
        }
        per_scale.push((scale.nominal, best));
    }
    let divergent = per_scale.len() >= 4 && per_scale[..4].windows(2).all(|w| w[0].1 > w[1].1);
    Ok(BesovEstimate {
        p,
        alpha,
        lp_norm: lp,
        seminorm,
        shift_count: sweep.len(),
        argmax,
        argmax_magnitude: argmax.magnitude(grid),
        per_scale,
        divergent,
    })
}

/// Fitted smoothness exponent from the per-scale sup of increment norms.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularityFit {
    pub alpha_hat: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
    pub shift_scales: Vec<f64>,
    /// Largest increment norm per scale.
    pub increments: Vec<f64>,
    /// All increments vanished; `alpha_hat` is 1 by convention.
    pub exact_constancy: bool,
}

pub fn fit_regularity_exponent(field: &Field, p: f64, sweep: &ShiftSweep) -> Result<RegularityFit> {
    check_exponent(p)?;
    if sweep.scales.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "{} scales; at least 4 are needed",
            sweep.scales.len()
        )));
    }
    let mut scales = Vec::with_capacity(sweep.scales.len());
    let mut increments = Vec::with_capacity(sweep.scales.len());
    for scale in &sweep.scales {
        let mut best = 0.0f64;
        for &sh in &scale.shifts {
            best = best.max(shift_seminorm(field, sh, p)?);
        }
        scales.push(scale.nominal);
        increments.push(best);
    }
    if increments.iter().all(|&v| v == 0.0) {
        return Ok(RegularityFit {
            alpha_hat: 1.0,
            log_intercept: f64::NEG_INFINITY,
            r_squared: 1.0,
            shift_scales: scales,
            increments,
            exact_constancy: true,
        });
    }
    let fit = loglog_fit(&scales, &increments)?;
    Ok(RegularityFit {
        alpha_hat: fit.slope,
        log_intercept: fit.intercept,
        r_squared: fit.r_squared,
        shift_scales: scales,
        increments,
        exact_constancy: false,
    })
}

/// Periodic total variation of one time slice of a scalar field.
///
/// Sums absolute forward differences along every axis, weighted by the
/// cross-sectional cell measure `dx^(d-1)`.
pub fn total_variation(field: &Field, t: usize) -> Result<f64> {
    if !field.is_scalar() {
        return Err(Error::ShapeMismatch("total variation needs a scalar field".into()));
    }
    if !field.window().contains(&t) {
        return Err(Error::EmptyWindow(format!(
            "time sample {t} outside {:?}",
            field.window()
        )));
    }
    let grid = field.grid();
    let v = field.slice(0, t);
    let n = grid.n_x();
    let mut tv = 0.0;
    if grid.dim() == 1 {
        for j in 0..n {
            tv += (v[(j + 1) % n] - v[j]).abs();
        }
    } else {
        for j2 in 0..n {
            for j1 in 0..n {
                let s = j2 * n + j1;
                tv += (v[j2 * n + (j1 + 1) % n] - v[s]).abs();
                tv += (v[((j2 + 1) % n) * n + j1] - v[s]).abs();
            }
        }
        tv *= grid.dx();
    }
    Ok(tv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use core::f64::consts::PI;

    fn line(n: usize) -> Grid {
        Grid::new(1, n, 8, 1.0).unwrap()
    }

    fn step(g: Grid) -> Field {
        Field::sample(g, |_, x| if x[0] < 0.5 { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn lp_norms_of_simple_fields() {
        let g = line(256);
        let c = Field::constant(g, &[-3.0]).unwrap();
        for p in [1.0, 2.0, 3.0, 7.5, f64::INFINITY] {
            assert!((lp_norm(&c, p).unwrap() - 3.0).abs() < 1e-12);
        }
        let sign = Field::sample(g, |_, x| if x[0] < 0.5 { -1.0 } else { 1.0 }).unwrap();
        assert!((lp_norm(&sign, 2.0).unwrap() - 1.0).abs() < 1e-14);
        let s = Field::sample(g, |_, x| libm::sin(2.0 * PI * x[0])).unwrap();
        assert!((lp_norm(&s, 2.0).unwrap() - libm::sqrt(0.5)).abs() < 1e-10);
        assert!(matches!(lp_norm(&s, 0.5), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn step_increment_is_twice_the_shift() {
        let g = line(1024);
        let w = step(g);
        for cells in [1, 8, 100, 511] {
            let s = cells as f64 / 1024.0;
            let v = shift_seminorm(&w, Shift::along_x(cells), 1.0).unwrap();
            assert!((v - 2.0 * s).abs() < 1e-12, "{cells}: {v}");
        }
        let c = Field::constant(g, &[4.0]).unwrap();
        assert_eq!(shift_seminorm(&c, Shift::new(2, [7, 0]), 3.0).unwrap(), 0.0);
        assert_eq!(shift_seminorm(&c, Shift::default(), 3.0), Err(Error::ZeroShift));
    }

    #[test]
    fn sawtooth_sup_increment() {
        // Slope 2 on each period: away from the seam the increment is exactly 2s.
        let g = line(1024);
        let w = Field::sample(g, |_, x| 2.0 * x[0]).unwrap();
        let sup = shift_seminorm(&w, Shift::along_x(8), f64::INFINITY).unwrap();
        // Across the seam the increment is 2s - 2.
        assert!((sup - (2.0 - 2.0 * 8.0 / 1024.0)).abs() < 1e-12);
        let l1 = shift_seminorm(&w, Shift::along_x(8), 1.0).unwrap();
        let s = 8.0 / 1024.0;
        let expect = (1.0 - s) * 2.0 * s + s * (2.0 - 2.0 * s);
        assert!((l1 - expect).abs() < 1e-12);
    }

    #[test]
    fn step_besov_seminorm_at_alpha_one() {
        let g = line(1024);
        let est = besov_norm_estimate(&step(g), 1.0, 1.0, &ShiftSweep::standard(&g, Axes::Space).unwrap()).unwrap();
        assert!((est.seminorm - 2.0).abs() < 1e-12);
        assert!((est.lp_norm - 0.5).abs() < 1e-12);
        let c = Field::constant(g, &[2.0]).unwrap();
        let est = besov_norm_estimate(&c, 2.0, 0.5, &ShiftSweep::standard(&g, Axes::Space).unwrap()).unwrap();
        assert_eq!(est.seminorm, 0.0);
        assert_eq!(est.norm(), 2.0);
    }

    #[test]
    fn regularity_of_step_and_sine() {
        let g = line(4096);
        let sweep = ShiftSweep::standard(&g, Axes::Space).unwrap();
        assert_eq!(sweep.scales().len(), 6);
        let f = fit_regularity_exponent(&step(g), 3.0, &sweep).unwrap();
        assert!((f.alpha_hat - 1.0 / 3.0).abs() < 1e-9, "{}", f.alpha_hat);
        let s = Field::sample(g, |_, x| libm::sin(2.0 * PI * x[0])).unwrap();
        let f = fit_regularity_exponent(&s, 3.0, &sweep).unwrap();
        assert!((f.alpha_hat - 1.0).abs() < 0.05);
        let c = Field::constant(g, &[1.0]).unwrap();
        let f = fit_regularity_exponent(&c, 3.0, &sweep).unwrap();
        assert!(f.exact_constancy);
        assert_eq!(f.alpha_hat, 1.0);
    }

    #[test]
    fn total_variation_examples() {
        let g = line(256);
        assert_eq!(total_variation(&Field::constant(g, &[3.0]).unwrap(), 0).unwrap(), 0.0);
        assert_eq!(total_variation(&step(g), 0).unwrap(), 2.0);
        let s = Field::sample(g, |_, x| libm::sin(2.0 * PI * x[0])).unwrap();
        assert!((total_variation(&s, 0).unwrap() - 4.0).abs() < 1e-3);
        let g2 = Grid::new(2, 64, 8, 1.0).unwrap();
        let stripe = Field::sample(g2, |_, x| if x[1] < 0.5 { 1.0 } else { 0.0 }).unwrap();
        assert!((total_variation(&stripe, 0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn direction_counts() {
        let g1 = line(256);
        let g2 = Grid::new(2, 64, 64, 1.0).unwrap();
        let n = |g: &Grid, a| ShiftSweep::dyadic(g, a, 4, 4).unwrap().len();
        assert_eq!(n(&g1, Axes::Space), 1);
        assert_eq!(n(&g2, Axes::Space), 4);
        assert_eq!(n(&Grid::new(1, 256, 256, 1.0).unwrap(), Axes::Spacetime), 4);
        assert_eq!(n(&g2, Axes::Spacetime), 13);
    }
}
