//! Periodic space-time lattices and the sampled fields that live on them.
//!
//! Space is the unit torus along each of `dim` axes; time is the non-periodic
//! interval `[0, T)`. Samples sit at cell centres. Every [`Field`] carries a
//! valid time window: operations that consume time samples near the edges
//! (time shifts, space-time smoothing) shrink the window instead of wrapping.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

/// Smallest admissible number of samples per axis.
pub const MIN_SAMPLES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    n_x: usize,
    n_t: usize,
    horizon: f64,
}

impl Grid {
    pub fn new(dim: usize, n_x: usize, n_t: usize, horizon: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("spatial dimension {dim} is not 1 or 2")));
        }
        if n_x < MIN_SAMPLES || n_t < MIN_SAMPLES {
            return Err(Error::InvalidGrid(format!(
                "n_x = {n_x}, n_t = {n_t}; both need at least {MIN_SAMPLES} samples"
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("time horizon {horizon} is not positive")));
        }
        Ok(Self { dim, n_x, n_t, horizon })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_x as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    /// Number of spatial cells, `n_x^dim`.
    pub fn n_space(&self) -> usize {
        if self.dim == 1 {
            self.n_x
        } else {
            self.n_x * self.n_x
        }
    }

    /// Volume of one spatial cell.
    pub fn cell_volume(&self) -> f64 {
        let dx = self.dx();
        if self.dim == 1 {
            dx
        } else {
            dx * dx
        }
    }

    /// Measure of one space-time cell.
    pub fn spacetime_cell(&self) -> f64 {
        self.dt() * self.cell_volume()
    }

    /// Cell-centre time of sample `i`.
    pub fn time(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dt()
    }

    /// Cell-centre coordinate of index `j` along any spatial axis.
    pub fn coord(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dx()
    }

    /// Per-axis indices of a flat spatial index (`x1` varies fastest).
    pub fn split(&self, s: usize) -> [usize; 2] {
        if self.dim == 1 {
            [s, 0]
        } else {
            [s % self.n_x, s / self.n_x]
        }
    }

    pub fn flat(&self, idx: [usize; 2]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[1] * self.n_x + idx[0]
        }
    }

    /// Cell-centre position of a flat spatial index; unused axes read 0.
    pub fn point(&self, s: usize) -> [f64; 2] {
        let [j1, j2] = self.split(s);
        if self.dim == 1 {
            [self.coord(j1), 0.0]
        } else {
            [self.coord(j1), self.coord(j2)]
        }
    }

    /// Flat index of the spatial cell reached from `s` by a periodic lattice offset.
    pub fn offset_index(&self, s: usize, offset: [isize; 2]) -> usize {
        let n = self.n_x as isize;
        let [j1, j2] = self.split(s);
        let a = (j1 as isize + offset[0]).rem_euclid(n) as usize;
        if self.dim == 1 {
            a
        } else {
            let b = (j2 as isize + offset[1]).rem_euclid(n) as usize;
            b * self.n_x + a
        }
    }

    pub fn full_window(&self) -> Range<usize> {
        0..self.n_t
    }
}

/// A lattice translation `xi = (time * dt, space * dx)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Shift {
    pub time: isize,
    pub space: [isize; 2],
}

impl Shift {
    pub fn new(time: isize, space: [isize; 2]) -> Self {
        Self { time, space }
    }

    pub fn space(space: [isize; 2]) -> Self {
        Self { time: 0, space }
    }

    pub fn along_x(cells: isize) -> Self {
        Self::space([cells, 0])
    }

    pub fn is_zero(&self) -> bool {
        self.time == 0 && self.space == [0, 0]
    }

    pub fn inverse(&self) -> Self {
        Self {
            time: -self.time,
            space: [-self.space[0], -self.space[1]],
        }
    }

    /// Euclidean length of the physical translation vector.
    pub fn magnitude(&self, grid: &Grid) -> f64 {
        let t = self.time as f64 * grid.dt();
        let a = self.space[0] as f64 * grid.dx();
        let b = if grid.dim() == 2 {
            self.space[1] as f64 * grid.dx()
        } else {
            0.0
        };
        libm::sqrt(t * t + a * a + b * b)
    }
}

/// Integration domain for [`Field::integrate`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Over {
    /// The torus at one time sample.
    Slice(usize),
    /// The valid time window times the torus.
    Spacetime,
}

/// Samples of a scalar or vector quantity on a [`Grid`].
///
/// Storage is component-major, then time, then space. Values outside the
/// valid time window are zero and must not be read as data.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: Grid,
    components: usize,
    window: Range<usize>,
    values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid, components: usize) -> Self {
        assert!(components > 0, "a field needs at least one component");
        Self {
            grid,
            components,
            window: grid.full_window(),
            values: vec![0.0; components * grid.n_t() * grid.n_space()],
        }
    }

    /// Field equal to `values[c]` everywhere.
    pub fn constant(grid: Grid, values: &[f64]) -> Result<Self> {
        let mut field = Self::zeros(grid, values.len());
        let block = grid.n_t() * grid.n_space();
        for (c, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "constant",
                    reason: format!("component {c} is {v}"),
                });
            }
            field.values[c * block..(c + 1) * block].fill(v);
        }
        Ok(field)
    }

    /// Scalar field `f(t_i, x_j)` at cell centres.
    pub fn sample<F>(grid: Grid, f: F) -> Result<Self>
    where
        F: Fn(f64, [f64; 2]) -> f64,
    {
        Self::sample_vector(grid, 1, |t, x, out| out[0] = f(t, x))
    }

    /// Vector field with `components` entries written by `f(t, x, out)`.
    pub fn sample_vector<F>(grid: Grid, components: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, [f64; 2], &mut [f64]),
    {
        let mut field = Self::zeros(grid, components);
        let n_space = grid.n_space();
        let block = grid.n_t() * n_space;
        let mut buf = vec![0.0; components];
        for i in 0..grid.n_t() {
            let t = grid.time(i);
            for s in 0..n_space {
                let x = grid.point(s);
                f(t, x, &mut buf);
                for (c, &v) in buf.iter().enumerate() {
                    if !v.is_finite() {
                        return Err(Error::NonFinite {
                            time_index: i,
                            space_index: s,
                            component: c,
                            t,
                            x,
                        });
                    }
                    field.values[c * block + i * n_space + s] = v;
                }
            }
        }
        Ok(field)
    }

    /// Wraps raw samples in the crate's storage order.
    pub fn from_values(grid: Grid, components: usize, values: Vec<f64>) -> Result<Self> {
        let expected = components * grid.n_t() * grid.n_space();
        if components == 0 || values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {components} components on a lattice of {expected}",
                values.len()
            )));
        }
        let n_space = grid.n_space();
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let s = pos % n_space;
            let i = (pos / n_space) % grid.n_t();
            return Err(Error::NonFinite {
                time_index: i,
                space_index: s,
                component: pos / (n_space * grid.n_t()),
                t: grid.time(i),
                x: grid.point(s),
            });
        }
        Ok(Self {
            grid,
            components,
            window: grid.full_window(),
            values,
        })
    }

    pub(crate) fn from_parts(grid: Grid, components: usize, window: Range<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), components * grid.n_t() * grid.n_space());
        Self {
            grid,
            components,
            window,
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn is_scalar(&self) -> bool {
        self.components == 1
    }

    pub fn window(&self) -> Range<usize> {
        self.window.clone()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn block(&self) -> usize {
        self.grid.n_t() * self.grid.n_space()
    }

    /// One time slice of one component.
    pub fn slice(&self, component: usize, t: usize) -> &[f64] {
        let n = self.grid.n_space();
        let start = component * self.block() + t * n;
        &self.values[start..start + n]
    }

    pub(crate) fn slice_mut(&mut self, component: usize, t: usize) -> &mut [f64] {
        let n = self.grid.n_space();
        let start = component * self.block() + t * n;
        &mut self.values[start..start + n]
    }

    /// All time samples of one component.
    pub fn component_block(&self, component: usize) -> &[f64] {
        let b = self.block();
        &self.values[component * b..(component + 1) * b]
    }

    pub(crate) fn component_block_mut(&mut self, component: usize) -> &mut [f64] {
        let b = self.block();
        &mut self.values[component * b..(component + 1) * b]
    }

    pub fn get(&self, component: usize, t: usize, s: usize) -> f64 {
        self.values[component * self.block() + t * self.grid.n_space() + s]
    }

    /// Scalar field holding component `c`.
    pub fn component(&self, c: usize) -> Field {
        assert!(c < self.components, "component {c} out of range");
        Field {
            grid: self.grid,
            components: 1,
            window: self.window.clone(),
            values: self.component_block(c).to_vec(),
        }
    }

    /// Stacks scalar fields into one vector field; the window is the intersection.
    pub fn stack(parts: &[&Field]) -> Result<Field> {
        let first = parts
            .first()
            .ok_or_else(|| Error::ShapeMismatch("nothing to stack".into()))?;
        let mut values = Vec::new();
        let mut window = first.window();
        for p in parts {
            check_same_grid(first, p)?;
            window = intersect(&window, &p.window);
            values.extend_from_slice(&p.values);
        }
        let components = parts.iter().map(|p| p.components).sum();
        let mut out = Field::from_parts(first.grid, components, first.window(), values);
        out.narrow(window);
        Ok(out)
    }

    /// Restricts the valid window, zeroing samples that fall outside it.
    pub fn with_window(mut self, window: Range<usize>) -> Result<Field> {
        if window.start < self.window.start || window.end > self.window.end || window.is_empty() {
            return Err(Error::EmptyWindow(format!(
                "requested {window:?} is not a non-empty part of {:?}",
                self.window
            )));
        }
        self.narrow(window);
        Ok(self)
    }

    pub(crate) fn narrow(&mut self, window: Range<usize>) {
        let w = intersect(&self.window, &window);
        let n_t = self.grid.n_t();
        let n = self.grid.n_space();
        for c in 0..self.components {
            let blk = self.component_block_mut(c);
            for i in (0..n_t).filter(|i| !w.contains(i)) {
                blk[i * n..(i + 1) * n].fill(0.0);
            }
        }
        self.window = w;
    }

    /// Pointwise map of every component.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Field {
        let mut out = self.clone();
        let n = self.grid.n_space();
        for c in 0..self.components {
            let blk = out.component_block_mut(c);
            for i in self.window.clone() {
                for v in &mut blk[i * n..(i + 1) * n] {
                    *v = f(*v);
                }
            }
        }
        out
    }

    /// Pointwise combination of two fields with equal component counts.
    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &Field, f: F) -> Result<Field> {
        check_same_grid(self, other)?;
        if self.components != other.components {
            return Err(Error::ShapeMismatch(format!(
                "{} vs {} components",
                self.components, other.components
            )));
        }
        let window = intersect(&self.window, &other.window);
        let mut out = Field::zeros(self.grid, self.components);
        out.window = window.clone();
        let n = self.grid.n_space();
        for c in 0..self.components {
            for i in window.clone() {
                let a = self.slice(c, i);
                let b = other.slice(c, i);
                let o = out.slice_mut(c, i);
                for s in 0..n {
                    o[s] = f(a[s], b[s]);
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Field {
        self.map(|v| factor * v)
    }

    /// Multiplies every component by the scalar field `s`.
    pub fn times_scalar(&self, s: &Field) -> Result<Field> {
        check_same_grid(self, s)?;
        if !s.is_scalar() {
            return Err(Error::ShapeMismatch("multiplier must be scalar".into()));
        }
        let window = intersect(&self.window, &s.window);
        let mut out = Field::zeros(self.grid, self.components);
        out.window = window.clone();
        for c in 0..self.components {
            for i in window.clone() {
                let a = self.slice(c, i);
                let b = s.slice(0, i);
                for (o, (x, y)) in out.slice_mut(c, i).iter_mut().zip(a.iter().zip(b)) {
                    *o = x * y;
                }
            }
        }
        Ok(out)
    }

    /// Largest absolute sample over the valid window.
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for c in 0..self.components {
            for i in self.window.clone() {
                for v in self.slice(c, i) {
                    m = m.max(v.abs());
                }
            }
        }
        m
    }

    /// Smallest and largest sample over the valid window.
    pub fn range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for c in 0..self.components {
            for i in self.window.clone() {
                for &v in self.slice(c, i) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
        }
        (lo, hi)
    }

    /// Rectangle-rule integral of a scalar field.
    pub fn integrate(&self, over: Over) -> Result<f64> {
        if !self.is_scalar() {
            return Err(Error::ShapeMismatch("integrate needs a scalar field".into()));
        }
        match over {
            Over::Slice(i) => {
                if !self.window.contains(&i) {
                    return Err(Error::EmptyWindow(format!(
                        "time sample {i} outside the valid window {:?}",
                        self.window
                    )));
                }
                Ok(self.slice(0, i).iter().sum::<f64>() * self.grid.cell_volume())
            }
            Over::Spacetime => {
                let mut total = 0.0;
                for i in self.window.clone() {
                    total += self.slice(0, i).iter().sum::<f64>();
                }
                Ok(total * self.grid.spacetime_cell())
            }
        }
    }
}

pub(crate) fn intersect(a: &Range<usize>, b: &Range<usize>) -> Range<usize> {
    let start = a.start.max(b.start);
    let end = a.end.min(b.end).max(start);
    start..end
}

pub(crate) fn check_same_grid(a: &Field, b: &Field) -> Result<()> {
    if a.grid != b.grid {
        return Err(Error::ShapeMismatch(format!(
            "fields live on different lattices: {:?} vs {:?}",
            a.grid, b.grid
        )));
    }
    Ok(())
}

/// Valid time indices `t` for which both `t` and `t + offset` lie in `window`.
pub fn overlap_window(window: &Range<usize>, offset: isize) -> Range<usize> {
    let start = (window.start as isize).max(window.start as isize - offset);
    let end = (window.end as isize).min(window.end as isize - offset);
    if end <= start {
        return 0..0;
    }
    start as usize..end as usize
}

/// Copy of `field` translated by a lattice shift: `out(t, x) = field(t + k_t, x + k_x)`.
///
/// Spatial offsets wrap; the time window shrinks to the samples whose source
/// lies inside the original window.
pub fn shift_field(field: &Field, shift: Shift) -> Result<Field> {
    let grid = *field.grid();
    if shift.time.unsigned_abs() >= grid.n_t() {
        return Err(Error::ShiftOutOfRange {
            time_offset: shift.time,
            n_t: grid.n_t(),
        });
    }
    let w = field.window();
    let start = (w.start as isize - shift.time).max(0) as usize;
    let end = (w.end as isize - shift.time).clamp(0, grid.n_t() as isize) as usize;
    if end <= start {
        return Err(Error::EmptyWindow(format!(
            "time shift {} empties the window",
            shift.time
        )));
    }
    let mut out = Field::zeros(grid, field.components());
    out.window = start..end;
    let n = grid.n_space();
    let map: Vec<usize> = (0..n).map(|s| grid.offset_index(s, shift.space)).collect();
    for c in 0..field.components() {
        for i in start..end {
            let src_t = (i as isize + shift.time) as usize;
            let src = field.slice(c, src_t);
            let dst = out.slice_mut(c, i);
            for s in 0..n {
                dst[s] = src[map[s]];
            }
        }
    }
    Ok(out)
}
