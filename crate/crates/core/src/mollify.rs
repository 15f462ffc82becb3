//! Smoothing by the standard bump kernel and by the one-sided time average.
//!
//! Kernels are products of one-dimensional stencils, one per axis. Each
//! stencil samples `eta(r) = exp(-1/(1-r^2))` at the lattice offsets strictly
//! inside the radius and is normalized by its discrete sum, so constants are
//! reproduced exactly. Derivative stencils sample `eta'` and are normalized by
//! their discrete first moment, so affine data have exact gradients.
//!
//! Spatial axes wrap. A time stencil of half-width `K` shrinks the valid time
//! window by `K` samples at each end.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::besov::lp_norm;
use crate::error::{invalid, Error, Result};
use crate::fit::{loglog_fit, RateFit};
use crate::grid::{intersect, Field, Grid};

/// Which axes a kernel acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axes {
    Space,
    Spacetime,
}

/// Smallest admissible radius in units of the largest mollified spacing.
pub const RESOLUTION_CELLS: f64 = 4.0;

/// The unnormalized bump `exp(-1/(1-r^2))` on `|r| < 1`.
pub fn bump(r: f64) -> f64 {
    let q = 1.0 - r * r;
    if q <= 0.0 {
        0.0
    } else {
        libm::exp(-1.0 / q)
    }
}

/// Derivative of [`bump`].
pub fn bump_derivative(r: f64) -> f64 {
    let q = 1.0 - r * r;
    if q <= 0.0 {
        0.0
    } else {
        libm::exp(-1.0 / q) * (-2.0 * r / (q * q))
    }
}

/// One-dimensional sampled kernel of radius `epsilon` on a lattice of the given spacing.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    epsilon: f64,
    spacing: f64,
    /// `weights[k]` for `k = 0..=K`; the kernel is even.
    weights: Vec<f64>,
    /// `slopes[k - 1]` for `k = 1..=K`; the derivative is
    /// `sum_k slopes[k-1] * (f(x + k) - f(x - k))`.
    slopes: Vec<f64>,
}

impl Stencil {
    pub fn new(epsilon: f64, spacing: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0 && spacing > 0.0) {
            return Err(invalid("epsilon", format!("{epsilon} is not positive")));
        }
        let n = epsilon / spacing;
        let radius = (libm::ceil(n - 1e-9) as usize).saturating_sub(1);
        if radius == 0 {
            return Err(Error::BelowResolution {
                radius: epsilon,
                floor: 2.0 * spacing,
            });
        }
        let raw: Vec<f64> = (0..=radius).map(|k| bump(k as f64 / n)).collect();
        let mass = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
        let weights = raw.iter().map(|w| w / mass).collect();
        let raw_slopes: Vec<f64> = (1..=radius).map(|k| -bump_derivative(k as f64 / n)).collect();
        let moment: f64 = raw_slopes
            .iter()
            .enumerate()
            .map(|(i, c)| c * 2.0 * (i + 1) as f64 * spacing)
            .sum();
        let slopes = raw_slopes.iter().map(|c| c / moment).collect();
        Ok(Self {
            epsilon,
            spacing,
            weights,
            slopes,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Half-width `K`: the stencil touches offsets `-K..=K`.
    pub fn radius(&self) -> usize {
        self.weights.len() - 1
    }

    /// Normalized weight at offset `k`.
    pub fn weight(&self, k: isize) -> f64 {
        self.weights.get(k.unsigned_abs()).copied().unwrap_or(0.0)
    }

    /// Derivative weight `g_k` so that `f' ~ sum_k g_k f(x - k * spacing)`.
    pub fn derivative_weight(&self, k: isize) -> f64 {
        match k {
            0 => 0.0,
            k if k.unsigned_abs() > self.radius() => 0.0,
            k if k > 0 => -self.slopes[k as usize - 1],
            k => self.slopes[(-k) as usize - 1],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    Value,
    Derivative,
}

/// Direction of a mollified derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Time,
    Space(usize),
}

/// Which parts of a [`Jet`] to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Want {
    pub value: bool,
    pub time: bool,
    pub space: bool,
}

impl Want {
    pub const VALUE: Want = Want {
        value: true,
        time: false,
        space: false,
    };
    pub const ALL: Want = Want {
        value: true,
        time: true,
        space: true,
    };
    pub const SPACE: Want = Want {
        value: true,
        time: false,
        space: true,
    };
}

/// A mollified scalar field with any of its first derivatives.
#[derive(Clone, Debug)]
pub struct Jet {
    pub value: Option<Field>,
    pub time: Option<Field>,
    /// Spatial partial derivatives, one per axis (empty unless requested).
    pub space: Vec<Field>,
}

/// Product kernel `eta^eps` on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Mollifier {
    grid: Grid,
    axes: Axes,
    space: Stencil,
    time: Option<Stencil>,
}

impl Mollifier {
    pub fn new(grid: &Grid, epsilon: f64, axes: Axes) -> Result<Self> {
        let coarsest = match axes {
            Axes::Space => grid.dx(),
            Axes::Spacetime => grid.dx().max(grid.dt()),
        };
        let floor = RESOLUTION_CELLS * coarsest;
        if !(epsilon >= floor * (1.0 - 1e-9)) {
            return Err(Error::BelowResolution { radius: epsilon, floor });
        }
        if epsilon >= 0.5 {
            return Err(invalid("epsilon", format!("{epsilon} reaches half the period")));
        }
        let time = match axes {
            Axes::Space => None,
            Axes::Spacetime => Some(Stencil::new(epsilon, grid.dt())?),
        };
        Ok(Self {
            grid: *grid,
            axes,
            space: Stencil::new(epsilon, grid.dx())?,
            time,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.space.epsilon
    }

    pub fn axes(&self) -> Axes {
        self.axes
    }

    pub fn space_stencil(&self) -> &Stencil {
        &self.space
    }

    pub fn time_stencil(&self) -> Option<&Stencil> {
        self.time.as_ref()
    }

    /// Time samples lost at each end of the window.
    pub fn time_margin(&self) -> usize {
        self.time.as_ref().map_or(0, Stencil::radius)
    }

    /// Output window for an input valid on `window`.
    pub fn output_window(&self, window: &Range<usize>) -> Range<usize> {
        let k = self.time_margin();
        let start = window.start + k;
        let end = window.end.saturating_sub(k).max(start);
        start..end
    }

    fn resolve(&self, field: &Field, target: Option<&Range<usize>>) -> Result<Range<usize>> {
        if *field.grid() != self.grid {
            return Err(Error::ShapeMismatch(
                "field and kernel live on different lattices".into(),
            ));
        }
        let mut out = self.output_window(&field.window());
        if let Some(t) = target {
            out = intersect(&out, t);
        }
        if out.is_empty() {
            return Err(Error::EmptyWindow(format!(
                "radius {} leaves no valid time samples in {:?}",
                self.epsilon(),
                field.window()
            )));
        }
        Ok(out)
    }

    /// `w^eps` for every component.
    pub fn apply(&self, field: &Field) -> Result<Field> {
        self.apply_within(field, None)
    }

    /// `w^eps` computed only on the part of the valid window inside `target`.
    pub fn apply_within(&self, field: &Field, target: Option<Range<usize>>) -> Result<Field> {
        let out = self.resolve(field, target.as_ref())?;
        let mut values = Vec::with_capacity(field.values().len());
        for c in 0..field.components() {
            let jet = self.jet_block(field.component_block(c), &out, Want::VALUE);
            values.extend_from_slice(&jet.0.expect("value requested"));
        }
        Ok(Field::from_parts(self.grid, field.components(), out, values))
    }

    /// One mollified partial derivative of every component.
    pub fn derivative(&self, field: &Field, direction: Direction) -> Result<Field> {
        let out = self.resolve(field, None)?;
        let want = match direction {
            Direction::Time => {
                if self.time.is_none() {
                    return Err(invalid("direction", "time derivative of a space-only kernel"));
                }
                Want {
                    value: false,
                    time: true,
                    space: false,
                }
            }
            Direction::Space(a) => {
                if a >= self.grid.dim() {
                    return Err(invalid(
                        "direction",
                        format!("axis {a} in dimension {}", self.grid.dim()),
                    ));
                }
                Want {
                    value: false,
                    time: false,
                    space: true,
                }
            }
        };
        let mut values = Vec::with_capacity(field.values().len());
        for c in 0..field.components() {
            let (_, t, sp) = self.jet_block(field.component_block(c), &out, want);
            let block = match direction {
                Direction::Time => t.expect("time requested"),
                Direction::Space(a) => sp.into_iter().nth(a).expect("space requested"),
            };
            values.extend_from_slice(&block);
        }
        Ok(Field::from_parts(self.grid, field.components(), out, values))
    }

    /// Spatial gradient `grad w^eps` of a scalar field, one component per axis.
    pub fn gradient(&self, field: &Field) -> Result<Field> {
        if !field.is_scalar() {
            return Err(Error::ShapeMismatch("gradient needs a scalar field".into()));
        }
        let out = self.resolve(field, None)?;
        let want = Want {
            value: false,
            time: false,
            space: true,
        };
        let (_, _, sp) = self.jet_block(field.component_block(0), &out, want);
        let values = sp.concat();
        Ok(Field::from_parts(self.grid, self.grid.dim(), out, values))
    }

    /// Value and requested first derivatives of a mollified scalar field,
    /// sharing the intermediate axis passes.
    pub fn jet(&self, field: &Field, target: Option<Range<usize>>, want: Want) -> Result<Jet> {
        if !field.is_scalar() {
            return Err(Error::ShapeMismatch("jets are computed per scalar component".into()));
        }
        if want.time && self.time.is_none() {
            return Err(invalid("jet", "time derivative of a space-only kernel"));
        }
        let out = self.resolve(field, target.as_ref())?;
        let (v, t, sp) = self.jet_block(field.component_block(0), &out, want);
        let wrap = |b: Vec<f64>| Field::from_parts(self.grid, 1, out.clone(), b);
        Ok(Jet {
            value: v.map(wrap),
            time: t.map(wrap),
            space: sp.into_iter().map(wrap).collect(),
        })
    }

    #[allow(clippy::type_complexity)]
    fn jet_block(
        &self,
        src: &[f64],
        out: &Range<usize>,
        want: Want,
    ) -> (Option<Vec<f64>>, Option<Vec<f64>>, Vec<Vec<f64>>) {
        let g = &self.grid;
        let k = self.time_margin();
        let inner = out.start - k..out.end + k;
        let len = src.len();
        let need_value_path = want.value || want.time;
        let x1 = |kind| {
            let mut b = vec![0.0; len];
            pass_x1(src, &mut b, g, inner.clone(), &self.space, kind);
            b
        };
        let x2 = |from: &[f64], kind| {
            let mut b = vec![0.0; len];
            pass_x2(from, &mut b, g, inner.clone(), &self.space, kind);
            b
        };
        // Spatially smoothed value and spatial derivatives before the time pass.
        let mut base = None;
        let mut partials = Vec::new();
        if g.dim() == 1 {
            if need_value_path {
                base = Some(x1(Kind::Value));
            }
            if want.space {
                partials.push(x1(Kind::Derivative));
            }
        } else {
            let a = if need_value_path || want.space {
                Some(x1(Kind::Value))
            } else {
                None
            };
            if want.space {
                let a1 = x1(Kind::Derivative);
                let a_ref = a.as_deref().expect("computed above");
                partials.push(x2(&a1, Kind::Value));
                partials.push(x2(a_ref, Kind::Derivative));
            }
            if need_value_path {
                base = Some(x2(a.as_deref().expect("computed above"), Kind::Value));
            }
        }
        match &self.time {
            None => (base, None, partials),
            Some(ts) => {
                let t_pass = |from: &[f64], kind| {
                    let mut b = vec![0.0; len];
                    pass_t(from, &mut b, g, out.clone(), ts, kind);
                    b
                };
                let value = if want.value {
                    Some(t_pass(base.as_deref().expect("value path"), Kind::Value))
                } else {
                    None
                };
                let time = if want.time {
                    Some(t_pass(base.as_deref().expect("value path"), Kind::Derivative))
                } else {
                    None
                };
                let space = partials.iter().map(|p| t_pass(p, Kind::Value)).collect();
                (value, time, space)
            }
        }
    }
}

fn pass_x1(src: &[f64], dst: &mut [f64], g: &Grid, times: Range<usize>, st: &Stencil, kind: Kind) {
    let n = g.n_x();
    let ns = g.n_space();
    let rows = ns / n;
    let kr = st.radius();
    let mut ext = vec![0.0; n + 2 * kr];
    for t in times {
        for r in 0..rows {
            let off = t * ns + r * n;
            let row = &src[off..off + n];
            for (i, e) in ext.iter_mut().enumerate() {
                *e = row[(i + n * (kr / n + 1) - kr) % n];
            }
            let out = &mut dst[off..off + n];
            let centre = &ext[kr..kr + n];
            match kind {
                Kind::Value => {
                    out.copy_from_slice(centre);
                    for k in 1..=kr {
                        let w = st.weights[k];
                        let lo = &ext[kr - k..kr - k + n];
                        let hi = &ext[kr + k..kr + k + n];
                        for j in 0..n {
                            out[j] += w * (lo[j] + hi[j] - 2.0 * centre[j]);
                        }
                    }
                }
                Kind::Derivative => {
                    out.fill(0.0);
                    for k in 1..=kr {
                        let c = st.slopes[k - 1];
                        let lo = &ext[kr - k..kr - k + n];
                        let hi = &ext[kr + k..kr + k + n];
                        for j in 0..n {
                            out[j] += c * (hi[j] - lo[j]);
                        }
                    }
                }
            }
        }
    }
}

/// Combines whole rows (or slices) `centre`, `lo_k`, `hi_k` into `out`.
fn combine(
    out: &mut [f64],
    centre: &[f64],
    neighbours: impl Iterator<Item = (f64, usize, usize)>,
    src: &[f64],
    kind: Kind,
    width: usize,
) {
    match kind {
        Kind::Value => out.copy_from_slice(centre),
        Kind::Derivative => out.fill(0.0),
    }
    for (w, lo_off, hi_off) in neighbours {
        let lo = &src[lo_off..lo_off + width];
        let hi = &src[hi_off..hi_off + width];
        match kind {
            Kind::Value => {
                for j in 0..width {
                    out[j] += w * (lo[j] + hi[j] - 2.0 * centre[j]);
                }
            }
            Kind::Derivative => {
                for j in 0..width {
                    out[j] += w * (hi[j] - lo[j]);
                }
            }
        }
    }
}

fn coefficients(st: &Stencil, kind: Kind) -> &[f64] {
    match kind {
        Kind::Value => &st.weights[1..],
        Kind::Derivative => &st.slopes,
    }
}

fn pass_x2(src: &[f64], dst: &mut [f64], g: &Grid, times: Range<usize>, st: &Stencil, kind: Kind) {
    let n = g.n_x();
    let ns = g.n_space();
    let kr = st.radius();
    let coef = coefficients(st, kind);
    for t in times {
        let base = t * ns;
        for r in 0..n {
            let off = base + r * n;
            let centre = &src[off..off + n];
            let neighbours = (1..=kr).map(|k| {
                let lo = (r + n * (kr / n + 1) - k) % n;
                let hi = (r + k) % n;
                (coef[k - 1], base + lo * n, base + hi * n)
            });
            combine(&mut dst[off..off + n], centre, neighbours, src, kind, n);
        }
    }
}

fn pass_t(src: &[f64], dst: &mut [f64], g: &Grid, times: Range<usize>, st: &Stencil, kind: Kind) {
    let ns = g.n_space();
    let kr = st.radius();
    let coef = coefficients(st, kind);
    for t in times {
        let off = t * ns;
        let centre = &src[off..off + ns];
        let neighbours = (1..=kr).map(|k| (coef[k - 1], (t - k) * ns, (t + k) * ns));
        combine(&mut dst[off..off + ns], centre, neighbours, src, kind, ns);
    }
}

/// `w^eps` with the standard kernel on the chosen axes.
pub fn mollify(field: &Field, epsilon: f64, axes: Axes) -> Result<Field> {
    Mollifier::new(field.grid(), epsilon, axes)?.apply(field)
}

/// Spatial gradient of `w^eps` by the differentiated kernel.
pub fn mollify_gradient(field: &Field, epsilon: f64, axes: Axes) -> Result<Field> {
    Mollifier::new(field.grid(), epsilon, axes)?.gradient(field)
}

/// Number of time samples spanned by `h`, which must be a multiple of `dt` of at least 4.
pub fn average_samples(grid: &Grid, h: f64) -> Result<usize> {
    let m = h / grid.dt();
    let r = libm::round(m);
    if !(h.is_finite() && (m - r).abs() <= 1e-9 * m.max(1.0)) {
        return Err(invalid("h", format!("{h} is not a multiple of dt = {}", grid.dt())));
    }
    if r < RESOLUTION_CELLS {
        return Err(Error::BelowResolution {
            radius: h,
            floor: RESOLUTION_CELLS * grid.dt(),
        });
    }
    if 2.0 * r >= grid.n_t() as f64 {
        return Err(invalid("h", format!("{h} spans half of the time horizon or more")));
    }
    Ok(r as usize)
}

/// One-sided time average `v^h(t) = (1/h) * integral of v over [t, t + h]`.
///
/// Discretely `v^h_i` is the mean of samples `i..i+m`, `m = h/dt`, so the
/// forward difference `(v^h_{i+1} - v^h_i)/dt` equals `(v_{i+m} - v_i)/h`.
/// The output is valid on the input window minus its last `m - 1` samples.
pub fn one_sided_time_average(field: &Field, h: f64) -> Result<Field> {
    let grid = *field.grid();
    let m = average_samples(&grid, h)?;
    let w = field.window();
    if w.len() < m {
        return Err(Error::EmptyWindow(format!("window {w:?} is shorter than h")));
    }
    let out_w = w.start..w.end + 1 - m;
    let ns = grid.n_space();
    let mut out = Field::zeros(grid, field.components());
    let inv = 1.0 / m as f64;
    for c in 0..field.components() {
        for i in out_w.clone() {
            let centre = field.slice(c, i);
            let mut acc = vec![0.0; ns];
            for k in 1..m {
                let next = field.slice(c, i + k);
                for s in 0..ns {
                    acc[s] += next[s] - centre[s];
                }
            }
            let o = out.slice_mut(c, i);
            for s in 0..ns {
                o[s] = centre[s] + inv * acc[s];
            }
        }
    }
    out.narrow(out_w);
    Ok(out)
}

/// Largest violation of `(v^h_{i+1} - v^h_i)/dt = (v_{i+m} - v_i)/h` over the interior.
pub fn forward_difference_residual(field: &Field, h: f64) -> Result<f64> {
    let avg = one_sided_time_average(field, h)?;
    let grid = field.grid();
    let m = average_samples(grid, h)?;
    let (dt, hh) = (grid.dt(), m as f64 * grid.dt());
    let w = avg.window();
    let mut worst = 0.0f64;
    for c in 0..field.components() {
        for i in w.start..w.end - 1 {
            let (a, b) = (avg.slice(c, i), avg.slice(c, i + 1));
            let (v0, vm) = (field.slice(c, i), field.slice(c, i + m));
            for s in 0..grid.n_space() {
                let lhs = (b[s] - a[s]) / dt;
                let rhs = (vm[s] - v0[s]) / hh;
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    Ok(worst)
}

/// Decay of `||w^eps - w||_p` and `||grad w^eps||_p` over a radius sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct MollificationRates {
    pub eps: Vec<f64>,
    pub difference_norms: Vec<f64>,
    pub gradient_norms: Vec<f64>,
    /// `None` when every difference vanished.
    pub difference_fit: Option<RateFit>,
    pub gradient_fit: Option<RateFit>,
    /// All differences vanished: the field is reproduced exactly.
    pub exactly_smooth: bool,
}

pub fn mollification_rate_check(field: &Field, p: f64, eps_list: &[f64], axes: Axes) -> Result<MollificationRates> {
    if eps_list.len() < 4 {
        return Err(invalid(
            "eps list",
            format!("{} radii; at least 4 are needed", eps_list.len()),
        ));
    }
    if !field.is_scalar() {
        return Err(Error::ShapeMismatch("rate check needs a scalar field".into()));
    }
    let mut difference_norms = Vec::with_capacity(eps_list.len());
    let mut gradient_norms = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let m = Mollifier::new(field.grid(), eps, axes)?;
        let jet = m.jet(field, None, Want::SPACE)?;
        let value = jet.value.expect("value requested");
        let diff = value.zip_map(field, |a, b| a - b)?;
        difference_norms.push(lp_norm(&diff, p)?);
        let refs: Vec<&Field> = jet.space.iter().collect();
        gradient_norms.push(lp_norm(&Field::stack(&refs)?, p)?);
    }
    let exactly_smooth = difference_norms.iter().all(|&v| v == 0.0);
    let (difference_fit, gradient_fit) = if exactly_smooth {
        (None, None)
    } else {
        let g = if gradient_norms.iter().all(|&v| v > 0.0) {
            Some(loglog_fit(eps_list, &gradient_norms)?)
        } else {
            None
        };
        (Some(loglog_fit(eps_list, &difference_norms)?), g)
    };
    Ok(MollificationRates {
        eps: eps_list.to_vec(),
        difference_norms,
        gradient_norms,
        difference_fit,
        gradient_fit,
        exactly_smooth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Over;
    use core::f64::consts::PI;

    fn line(n: usize, nt: usize) -> Grid {
        Grid::new(1, n, nt, 1.0).unwrap()
    }

    /// Brute-force periodic convolution with the analytic kernel samples.
    fn brute(values: &[f64], eps_cells: f64, deriv: bool) -> Vec<f64> {
        let n = values.len();
        let dx = 1.0 / n as f64;
        let kmax = libm::ceil(eps_cells) as isize - 1;
        let (mut z, mut m1) = (0.0, 0.0);
        for k in -kmax..=kmax {
            z += bump(k as f64 / eps_cells);
            m1 += -bump_derivative(k as f64 / eps_cells) * (-(k as f64) * dx);
        }
        let _ = m1;
        let m1: f64 = (-kmax..=kmax)
            .map(|k| bump_derivative(k as f64 / eps_cells) * (-(k as f64) * dx))
            .sum();
        (0..n)
            .map(|j| {
                (-kmax..=kmax)
                    .map(|k| {
                        let w = if deriv {
                            bump_derivative(k as f64 / eps_cells) / m1
                        } else {
                            bump(k as f64 / eps_cells) / z
                        };
                        w * values[(j as isize - k).rem_euclid(n as isize) as usize]
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn stencil_invariants() {
        let st = Stencil::new(8.0 / 256.0, 1.0 / 256.0).unwrap();
        assert_eq!(st.radius(), 7);
        let mass: f64 = (-7..=7).map(|k| st.weight(k)).sum();
        assert!((mass - 1.0).abs() < 1e-15);
        for k in 1..=7 {
            assert_eq!(st.weight(k), st.weight(-k));
            assert!(st.weight(k) > 0.0);
            assert_eq!(st.derivative_weight(k), -st.derivative_weight(-k));
        }
        assert_eq!(st.weight(8), 0.0);
        let moment: f64 = (-7..=7).map(|k| st.derivative_weight(k) * (-(k as f64) / 256.0)).sum();
        assert!((moment - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constants_are_reproduced_exactly() {
        let g = Grid::new(2, 32, 32, 1.0).unwrap();
        let c = Field::constant(g, &[1.7, -0.3]).unwrap();
        let m = mollify(&c, 0.25, Axes::Spacetime).unwrap();
        assert_eq!(m.window(), 7..25);
        for comp in 0..2 {
            for i in m.window() {
                assert!(m.slice(comp, i).iter().all(|&v| v == c.get(comp, 0, 0)));
            }
        }
        let grad = mollify_gradient(&c.component(0), 0.25, Axes::Spacetime).unwrap();
        assert_eq!(grad.max_abs(), 0.0);
    }

    #[test]
    fn rejects_radius_below_floor() {
        let g = line(256, 64);
        assert!(matches!(
            Mollifier::new(&g, 3.0 / 256.0, Axes::Space),
            Err(Error::BelowResolution { .. })
        ));
        assert!(Mollifier::new(&g, 4.0 / 256.0, Axes::Space).is_ok());
        assert!(Mollifier::new(&g, 4.0 / 256.0, Axes::Spacetime).is_err());
    }

    #[test]
    fn sine_is_attenuated_without_phase_shift() {
        let g = line(256, 8);
        let s = Field::sample(g, |_, x| libm::sin(2.0 * PI * x[0])).unwrap();
        let m = mollify(&s, 16.0 / 256.0, Axes::Space).unwrap();
        let a = m.get(0, 0, 64) / s.get(0, 0, 64);
        assert!(a > 0.0 && a < 1.0);
        for j in 0..256 {
            assert!((m.get(0, 0, j) - a * s.get(0, 0, j)).abs() < 1e-13);
        }
        let b = brute(s.slice(0, 0), 16.0, false);
        for j in 0..256 {
            assert!((m.get(0, 3, j) - b[j]).abs() < 1e-13);
        }
    }

    #[test]
    fn step_becomes_monotone_ramp() {
        let n = 256;
        let g = line(n, 8);
        let step = Field::sample(g, |_, x| if x[0] < 0.5 { 1.0 } else { 0.0 }).unwrap();
        let m = mollify(&step, 10.0 / n as f64, Axes::Space).unwrap();
        let v = m.slice(0, 0);
        // Half-width 9 cells: the ramp occupies cells 119..=136.
        for j in 100..160 {
            assert!(v[j + 1] <= v[j] + 1e-15);
        }
        assert_eq!(v[118], 1.0);
        assert!(v[119] < 1.0);
        assert!(v[136] > 0.0);
        assert_eq!(v[137], 0.0);
        let b = brute(step.slice(0, 0), 10.0, false);
        for j in 0..n {
            assert!((v[j] - b[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn gradient_of_sawtooth_away_from_jump() {
        let n = 512;
        let g = line(n, 8);
        let saw = Field::sample(g, |_, x| 2.0 * x[0]).unwrap();
        let eps = 16.0 / n as f64;
        let grad = mollify_gradient(&saw, eps, Axes::Space).unwrap();
        for j in 20..(n - 20) {
            assert!((grad.get(0, 0, j) - 2.0).abs() < 1e-8);
        }
        let b = brute(saw.slice(0, 0), 16.0, true);
        for j in 0..n {
            assert!((grad.get(0, 0, j) - b[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn step_gradient_peak_scales_inversely() {
        let n = 4096;
        let g = line(n, 8);
        let step = Field::sample(g, |_, x| if x[0] < 0.5 { 1.0 } else { 0.0 }).unwrap();
        let eps: Vec<f64> = [8.0, 16.0, 32.0, 64.0].iter().map(|c| c / n as f64).collect();
        let peaks: Vec<f64> = eps
            .iter()
            .map(|&e| mollify_gradient(&step, e, Axes::Space).unwrap().max_abs())
            .collect();
        let fit = loglog_fit(&eps, &peaks).unwrap();
        assert!((fit.slope + 1.0).abs() < 0.02, "{}", fit.slope);
    }

    #[test]
    fn spacetime_derivatives_of_affine_data() {
        let g = Grid::new(2, 32, 64, 2.0).unwrap();
        let f = Field::sample(g, |t, x| 3.0 * t - 0.5 + 0.25 * libm::sin(2.0 * PI * x[0])).unwrap();
        let m = Mollifier::new(&g, 0.125, Axes::Spacetime).unwrap();
        let jet = m.jet(&f, None, Want::ALL).unwrap();
        let dt = jet.time.unwrap();
        for i in dt.window() {
            assert!(dt.slice(0, i).iter().all(|v| (v - 3.0).abs() < 1e-10));
        }
        let d2 = &jet.space[1];
        assert!(d2.max_abs() < 1e-14);
        let d1 = m.derivative(&f, Direction::Space(0)).unwrap();
        assert_eq!(d1.values(), jet.space[0].values());
    }

    #[test]
    fn derivative_matches_differences_of_mollified() {
        let n = 256;
        let g = Grid::new(2, n, 8, 1.0).unwrap();
        let f = Field::sample(g, |_, x| libm::sin(2.0 * PI * x[0]) * libm::cos(4.0 * PI * x[1])).unwrap();
        let eps = 8.0 / n as f64;
        let m = mollify(&f, eps, Axes::Space).unwrap();
        let grad = mollify_gradient(&f, eps, Axes::Space).unwrap();
        let dx = g.dx();
        let mut worst = 0.0f64;
        for s in 0..g.n_space() {
            let fd = (m.get(0, 0, g.offset_index(s, [1, 0])) - m.get(0, 0, g.offset_index(s, [-1, 0]))) / (2.0 * dx);
            worst = worst.max((fd - grad.get(0, 0, s)).abs());
            let fd2 = (m.get(0, 0, g.offset_index(s, [0, 1])) - m.get(0, 0, g.offset_index(s, [0, -1]))) / (2.0 * dx);
            worst = worst.max((fd2 - grad.get(1, 0, s)).abs());
        }
        // Second order: the ratio to dx^2 stays fixed under refinement.
        assert!(worst < 200.0 * dx * dx, "{worst}");
    }

    #[test]
    fn mass_is_preserved() {
        let g = Grid::new(1, 128, 32, 1.0).unwrap();
        let f = Field::sample(g, |t, x| if x[0] < 0.3 { 2.0 + t } else { libm::cos(9.0 * x[0]) }).unwrap();
        let m = mollify(&f, 0.0625, Axes::Space).unwrap();
        for i in [0, 5, 31] {
            let a = f.integrate(Over::Slice(i)).unwrap();
            let b = m.integrate(Over::Slice(i)).unwrap();
            assert!((a - b).abs() <= 1e-10 * a.abs());
        }
    }

    #[test]
    fn time_average_examples() {
        let g = Grid::new(1, 16, 64, 1.0).unwrap();
        let h = 8.0 / 64.0;
        let c = Field::constant(g, &[2.5]).unwrap();
        let avg = one_sided_time_average(&c, h).unwrap();
        assert_eq!(avg.window(), 0..57);
        assert!(avg.slice(0, 10).iter().all(|&v| v == 2.5));
        let lin = Field::sample(g, |t, x| 3.0 * t + x[0]).unwrap();
        let avg = one_sided_time_average(&lin, h).unwrap();
        for i in 0..56 {
            let rate = (avg.get(0, i + 1, 3) - avg.get(0, i, 3)) / g.dt();
            assert!((rate - 3.0).abs() < 1e-10);
        }
        assert!(forward_difference_residual(&lin, h).unwrap() < 1e-10);
        assert!(one_sided_time_average(&lin, 3.0 / 64.0).is_err());
        assert!(one_sided_time_average(&lin, 0.1).is_err());
    }

    #[test]
    fn time_step_becomes_ramp_before_the_jump() {
        let g = Grid::new(1, 8, 64, 1.0).unwrap();
        let t0 = 0.5;
        let f = Field::sample(g, |t, _| if t > t0 { 1.0 } else { 0.0 }).unwrap();
        let avg = one_sided_time_average(&f, 8.0 / 64.0).unwrap();
        // Samples i with t_i + h < t0 see only zeros; from t0 on only ones.
        for i in 0..57 {
            let t = g.time(i);
            let v = avg.get(0, i, 0);
            if t < t0 - 0.125 {
                assert_eq!(v, 0.0);
            } else if t > t0 {
                assert_eq!(v, 1.0);
            } else {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }

    #[test]
    fn rate_check_examples() {
        let n = 4096;
        let g = line(n, 8);
        let eps: Vec<f64> = [8.0, 16.0, 32.0, 64.0, 128.0].iter().map(|c| c / n as f64).collect();
        let step = Field::sample(g, |_, x| if x[0] < 0.5 { 1.0 } else { 0.0 }).unwrap();
        let r = mollification_rate_check(&step, 1.0, &eps, Axes::Space).unwrap();
        assert!((r.difference_fit.unwrap().slope - 1.0).abs() < 0.05);
        assert!(r.gradient_fit.unwrap().slope.abs() < 0.05);
        let c = Field::constant(g, &[1.0]).unwrap();
        let r = mollification_rate_check(&c, 3.0, &eps, Axes::Space).unwrap();
        assert!(r.exactly_smooth);
        assert!(r.gradient_norms.iter().all(|&v| v == 0.0));
        assert!(mollification_rate_check(&c, 3.0, &eps[..3], Axes::Space).is_err());
    }
}
