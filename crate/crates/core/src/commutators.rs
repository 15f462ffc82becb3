//! Mollification commutators and the integral remainders of the regularized
//! energy balance.
//!
//! Index convention: `div(a ⊗ b)_j = d_i (a_i b_j)`, so the derivative falls on
//! the momentum index. Every integral is evaluated after moving derivatives of
//! rough fields onto the test function or onto the differentiated kernel, so
//! only mollified fields are ever differentiated.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{invalid, Error, Result};
use crate::grid::{check_same_grid, intersect, Field, Grid};
use crate::models::{check_state, Closure, PressureLaw};
use crate::mollify::{average_samples, one_sided_time_average, Axes, Jet, Mollifier, Want};
use crate::testfn::{Separable, TestFunction};

/// `f^eps g^eps - (f g)^eps` for a scalar `f` and every component of `g`.
pub fn product_commutator(f: &Field, g: &Field, epsilon: f64, axes: Axes) -> Result<Field> {
    check_same_grid(f, g)?;
    if !f.is_scalar() {
        return Err(Error::ShapeMismatch("the first factor must be scalar".into()));
    }
    let m = Mollifier::new(f.grid(), epsilon, axes)?;
    let fe = m.apply(f)?;
    let ge = m.apply(g)?;
    let fge = m.apply(&g.times_scalar(f)?)?;
    let prod = ge.times_scalar(&fe)?;
    prod.zip_map(&fge, |a, b| a - b)
}

/// Largest deviation between the commutator and its increment decomposition
///
/// `f^eps g^eps - (f g)^eps = (f^eps - f)(g^eps - g) - sum_y w(y) (f(x-y) - f(x)) (g(x-y) - g(x))`,
///
/// with the last sum evaluated by direct quadrature over the full product stencil.
pub fn decomposition_residual(f: &Field, g: &Field, epsilon: f64, axes: Axes) -> Result<f64> {
    let lhs = product_commutator(f, g, epsilon, axes)?;
    let m = Mollifier::new(f.grid(), epsilon, axes)?;
    let fe = m.apply(f)?;
    let ge = m.apply(g)?;
    let grid = *f.grid();
    let ks = m.space_stencil().radius() as isize;
    let kt = m.time_margin() as isize;
    let ks2 = if grid.dim() == 2 { ks } else { 0 };
    let mut taps = Vec::new();
    for a in -kt..=kt {
        let wt = m.time_stencil().map_or(1.0, |st| st.weight(a));
        for b in -ks..=ks {
            for c in -ks2..=ks2 {
                let w2 = if grid.dim() == 2 {
                    m.space_stencil().weight(c)
                } else {
                    1.0
                };
                taps.push((a, [b, c], wt * m.space_stencil().weight(b) * w2));
            }
        }
    }
    let mut worst = 0.0f64;
    for comp in 0..g.components() {
        for i in lhs.window() {
            for s in 0..grid.n_space() {
                let (f0, g0) = (f.get(0, i, s), g.get(comp, i, s));
                let mut inc = 0.0;
                for &(a, off, w) in &taps {
                    let j = (i as isize - a) as usize;
                    let q = grid.offset_index(s, [-off[0], -off[1]]);
                    inc += w * (f.get(0, j, q) - f0) * (g.get(comp, j, q) - g0);
                }
                let rhs = (fe.get(0, i, s) - f0) * (ge.get(comp, i, s) - g0) - inc;
                worst = worst.max((lhs.get(comp, i, s) - rhs).abs());
            }
        }
    }
    Ok(worst)
}

/// Integral remainders of the regularized energy balance against one test function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommutatorReport {
    pub epsilon: f64,
    /// `-∫∫ (rho^eps u^eps - (rho u)^eps) . d_t(phi u^eps)`.
    pub r1: f64,
    /// `-∫∫ ((rho u)^eps_i u^eps_j - (rho u_i u_j)^eps) d_i(phi u^eps_j)`.
    pub r2: f64,
    /// `-∫∫ (p(rho^eps) - p(rho)^eps) div(phi u^eps)`; compressible only.
    pub r3: Option<f64>,
    /// `-∫∫ (rho^eps u^eps - (rho u)^eps) . grad(phi P'(rho^eps))`; compressible only.
    pub s_int: Option<f64>,
    /// `sup |rho^eps u^eps - (rho u)^eps|` over the slices where phi is nonzero.
    pub pointwise_sup: f64,
}

impl CommutatorReport {
    /// Sum of all remainders; the regularized balance converges to minus this.
    pub fn total(&self) -> f64 {
        self.r1 + self.r2 + self.r3.unwrap_or(0.0) + self.s_int.unwrap_or(0.0)
    }

    /// Root-sum-square of each term over a family of test functions.
    pub fn envelope(reports: &[CommutatorReport]) -> Result<CommutatorReport> {
        let first = reports.first().ok_or_else(|| invalid("reports", "empty family"))?;
        let rss = |f: &dyn Fn(&CommutatorReport) -> f64| libm::sqrt(reports.iter().map(|r| f(r) * f(r)).sum());
        let opt = |f: &dyn Fn(&CommutatorReport) -> Option<f64>| {
            reports
                .iter()
                .any(|r| f(r).is_some())
                .then(|| rss(&|r| f(r).unwrap_or(0.0)))
        };
        Ok(CommutatorReport {
            epsilon: first.epsilon,
            r1: rss(&|r| r.r1),
            r2: rss(&|r| r.r2),
            r3: opt(&|r| r.r3),
            s_int: opt(&|r| r.s_int),
            pointwise_sup: reports.iter().map(|r| r.pointwise_sup).fold(0.0, f64::max),
        })
    }
}

/// Running sums `∫∫ a phi + b d_t phi + c . grad phi` for several test functions.
pub(crate) struct WeakSums<'a> {
    phis: &'a [Separable],
    pub sums: Vec<f64>,
}

impl<'a> WeakSums<'a> {
    pub fn new(phis: &'a [Separable]) -> Self {
        Self {
            phis,
            sums: vec![0.0; phis.len()],
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, s: usize, a: f64, b: f64, c: [f64; 2]) {
        for (sum, phi) in self.sums.iter_mut().zip(self.phis) {
            if !phi.window.contains(&i) {
                continue;
            }
            let (v, dt, g) = phi.at(i, s);
            *sum += a * v + b * dt + c[0] * g[0] + c[1] * g[1];
        }
    }

    pub fn scaled(&self, factor: f64) -> Vec<f64> {
        self.sums.iter().map(|s| s * factor).collect()
    }
}

fn union_window(phis: &[Separable]) -> Range<usize> {
    let start = phis.iter().map(|p| p.window.start).min().unwrap_or(0);
    let end = phis.iter().map(|p| p.window.end).max().unwrap_or(0);
    start..end.max(start)
}

/// Offsets subtracted from the coefficients of `d_t phi` and `grad phi`.
///
/// The time coefficient is taken relative to its value on the first slice at
/// the same cell, and flux component `k` relative to its value at `x_k = 0` on
/// the same line. Each offset is constant along the direction of the matching
/// derivative of `phi` and so integrates to zero against it, while constant,
/// stationary and line-independent fields cancel exactly.
pub(crate) struct LineRefs {
    n: usize,
    first: usize,
    time: Vec<f64>,
    row: f64,
    column: Vec<f64>,
}

impl LineRefs {
    pub fn new(grid: &Grid, first: usize) -> Self {
        Self {
            n: grid.n_x(),
            first,
            time: vec![0.0; grid.n_space()],
            row: 0.0,
            column: vec![0.0; grid.n_x()],
        }
    }

    /// Must be called with `i` ascending from `first` and `s` ascending within a slice.
    #[inline]
    pub fn relative(&mut self, i: usize, s: usize, e: f64, f: [f64; 2]) -> (f64, [f64; 2]) {
        if i == self.first {
            self.time[s] = e;
        }
        let j1 = s % self.n;
        if j1 == 0 {
            self.row = f[0];
        }
        if s < self.n {
            self.column[j1] = f[1];
        }
        (e - self.time[s], [f[0] - self.row, f[1] - self.column[j1]])
    }
}

/// Rejects test functions whose time support leaves `allowed` or whose
/// samples fall outside the valid window `valid`.
pub(crate) fn check_phis(
    phis: &[TestFunction],
    grid: &Grid,
    allowed: (f64, f64),
    valid: &Range<usize>,
) -> Result<Vec<Separable>> {
    if phis.is_empty() {
        return Err(invalid("test functions", "empty family"));
    }
    let mut out = Vec::with_capacity(phis.len());
    for phi in phis {
        phi.check_support(allowed)?;
        let sep = phi.separable(grid);
        if sep.window.is_empty() {
            return Err(Error::EmptyWindow(format!(
                "test function {} has no samples",
                phi.descriptor()
            )));
        }
        if intersect(&sep.window, valid) != sep.window {
            return Err(Error::SupportViolation {
                support: phi.time_support(),
                allowed: (grid.time(valid.start), grid.time(valid.end.saturating_sub(1))),
            });
        }
        out.push(sep);
    }
    Ok(out)
}

/// Per-test-function results of one pass over the mollified state.
#[derive(Clone, Debug)]
pub(crate) struct Evaluated {
    pub reports: Vec<CommutatorReport>,
    /// `∫∫ E^eps d_t phi + F^eps . grad phi` of the regularized energy.
    pub energy_weak: Option<Vec<f64>>,
}

fn value(j: &Jet) -> &Field {
    j.value.as_ref().expect("value requested")
}

/// Mollifies the state once in space and time and evaluates the remainders
/// (and optionally the regularized energy weak form) for each test function.
pub(crate) fn evaluate(
    rho: &Field,
    u: &Field,
    closure: Closure<'_>,
    phis: &[TestFunction],
    epsilon: f64,
    energy: bool,
) -> Result<Evaluated> {
    check_state(rho, u)?;
    let grid = *rho.grid();
    let d = grid.dim();
    if let Closure::Compressible(law) = closure {
        law.admit_field(rho)?;
    }
    if let Closure::Incompressible(p) = closure {
        check_same_grid(rho, p)?;
    }
    let m = Mollifier::new(&grid, epsilon, Axes::Spacetime)?;
    let mut valid = m.output_window(&intersect(&rho.window(), &u.window()));
    if let Closure::Incompressible(p) = closure {
        valid = intersect(&valid, &m.output_window(&p.window()));
    }
    let seps = check_phis(phis, &grid, (epsilon, grid.horizon() - epsilon), &valid)?;
    let win = union_window(&seps);
    let target = Some(win.clone());
    let compressible = matches!(closure, Closure::Compressible(_));
    let law = match closure {
        Closure::Compressible(l) => Some(*l),
        Closure::Incompressible(_) => None,
    };

    let rho_jet = m.jet(
        rho,
        target.clone(),
        if compressible { Want::SPACE } else { Want::VALUE },
    )?;
    let re = value(&rho_jet);
    let u_jets = (0..d)
        .map(|c| m.jet(&u.component(c), target.clone(), Want::ALL))
        .collect::<Result<Vec<_>>>()?;
    let mom = m.apply_within(&u.times_scalar(rho)?, target.clone())?;
    let ns = grid.n_space();

    let mut r1 = WeakSums::new(&seps);
    let mut s_int = WeakSums::new(&seps);
    let mut slice_sup = vec![0.0f64; grid.n_t()];
    for i in win.clone() {
        let sup = &mut slice_sup[i];
        for s in 0..ns {
            let r = re.get(0, i, s);
            let (dp, d2p) = match &law {
                Some(l) => (l.dpotential_raw(r.max(0.0)), l.d2potential_raw(r.max(0.0))),
                None => (0.0, 0.0),
            };
            let mut a1 = 0.0;
            let mut b1 = 0.0;
            let mut a_s = 0.0;
            let mut c_s = [0.0; 2];
            for (c, jet) in u_jets.iter().enumerate() {
                let uc = value(jet).get(0, i, s);
                let c1 = r * uc - mom.get(c, i, s);
                *sup = sup.max(c1.abs());
                a1 -= c1 * jet.time.as_ref().expect("time requested").get(0, i, s);
                b1 -= c1 * uc;
                if compressible {
                    a_s -= c1 * d2p * rho_jet.space[c].get(0, i, s);
                    c_s[c] -= c1 * dp;
                }
            }
            r1.add(i, s, a1, b1, [0.0, 0.0]);
            if compressible {
                s_int.add(i, s, a_s, 0.0, c_s);
            }
        }
    }

    let mut r2 = WeakSums::new(&seps);
    let mut flux_weak = WeakSums::new(&seps);
    for a in 0..d {
        let ma = u.component(a).times_scalar(rho)?;
        for b in 0..d {
            let prod = ma.zip_map(&u.component(b), |x, y| x * y)?;
            let me = m.apply_within(&prod, target.clone())?;
            let ub = &u_jets[b];
            for i in win.clone() {
                for s in 0..ns {
                    let c2 = mom.get(a, i, s) * value(ub).get(0, i, s) - me.get(0, i, s);
                    let mut c = [0.0; 2];
                    c[a] = -c2 * value(ub).get(0, i, s);
                    r2.add(i, s, -c2 * ub.space[a].get(0, i, s), 0.0, c);
                }
            }
        }
    }

    let mut r3 = WeakSums::new(&seps);
    let pressure_eps = match closure {
        Closure::Compressible(l) => {
            let pe = m.apply_within(&l.pressure_field(rho)?, target.clone())?;
            for i in win.clone() {
                for s in 0..ns {
                    let pc = l.p_raw(re.get(0, i, s).max(0.0)) - pe.get(0, i, s);
                    let mut div = 0.0;
                    let mut c = [0.0; 2];
                    for (k, jet) in u_jets.iter().enumerate() {
                        div += jet.space[k].get(0, i, s);
                        c[k] = -pc * value(jet).get(0, i, s);
                    }
                    r3.add(i, s, -pc * div, 0.0, c);
                }
            }
            None
        }
        Closure::Incompressible(p) => Some(m.apply_within(p, target.clone())?),
    };

    let energy_weak = if energy {
        let mut refs = LineRefs::new(&grid, win.start);
        for i in win.clone() {
            for s in 0..ns {
                let r = re.get(0, i, s);
                let mut q = 0.0;
                let mut um = 0.0;
                let mut uv = [0.0; 2];
                let mut mv = [0.0; 2];
                for (k, jet) in u_jets.iter().enumerate() {
                    uv[k] = value(jet).get(0, i, s);
                    mv[k] = mom.get(k, i, s);
                    q += uv[k] * uv[k];
                    um += uv[k] * mv[k];
                }
                let (mut e, extra) = match (&law, &pressure_eps) {
                    (Some(l), _) => {
                        let rr = r.max(0.0);
                        let pot = l.potential_raw(rr);
                        (pot, pot + l.p_raw(rr))
                    }
                    (None, Some(pe)) => (0.0, pe.get(0, i, s)),
                    (None, None) => unreachable!("pressure is sampled or constitutive"),
                };
                e += 0.5 * r * q;
                let mut f = [0.0; 2];
                for k in 0..d {
                    f[k] = um * uv[k] - 0.5 * mv[k] * q + extra * uv[k];
                }
                let (de, df) = refs.relative(i, s, e, f);
                flux_weak.add(i, s, 0.0, de, df);
            }
        }
        Some(flux_weak.scaled(grid.spacetime_cell()))
    } else {
        None
    };

    let cell = grid.spacetime_cell();
    let (r1, r2, r3, s_int) = (r1.scaled(cell), r2.scaled(cell), r3.scaled(cell), s_int.scaled(cell));
    let reports = (0..seps.len())
        .map(|k| {
            let sup_k = seps[k].window.clone().map(|i| slice_sup[i]).fold(0.0, f64::max);
            CommutatorReport {
                epsilon,
                r1: r1[k],
                r2: r2[k],
                r3: compressible.then(|| r3[k]),
                s_int: compressible.then(|| s_int[k]),
                pointwise_sup: sup_k,
            }
        })
        .collect();
    Ok(Evaluated { reports, energy_weak })
}

/// The remainders `R1, R2` (and `R3`, `∫ phi S` for compressible flow) against `phi`.
///
/// `phi` must be supported in `(eps, T - eps)` and sampled only where the
/// space-time mollification is valid.
pub fn commutator_integrals(
    rho: &Field,
    u: &Field,
    closure: Closure<'_>,
    phi: &TestFunction,
    epsilon: f64,
) -> Result<CommutatorReport> {
    let ev = evaluate(rho, u, closure, core::slice::from_ref(phi), epsilon, false)?;
    Ok(ev.reports[0])
}

/// [`commutator_integrals`] for several test functions sharing one mollification.
pub fn commutator_family(
    rho: &Field,
    u: &Field,
    closure: Closure<'_>,
    phis: &[TestFunction],
    epsilon: f64,
) -> Result<Vec<CommutatorReport>> {
    Ok(evaluate(rho, u, closure, phis, epsilon, false)?.reports)
}

/// Empirical Taylor constant of the pressure law on the attained range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TaylorBound {
    /// Largest `|p(s) - p(s0) - p'(s0)(s - s0)| / (s - s0)^2` over sample pairs.
    pub empirical: f64,
    /// `max p'' / 2` over the attained density range.
    pub mean_value_bound: f64,
}

/// Pairs `(s0, s)` are samples at the same time within one stencil radius
/// along a spatial axis. Pairs closer than `1e-3 (1 + |s0|)` are skipped: the
/// remainder is then dominated by cancellation error.
pub fn taylor_pressure_bound_check(law: &PressureLaw, rho: &Field, epsilon: f64) -> Result<TaylorBound> {
    law.admit_field(rho)?;
    let grid = *rho.grid();
    let m = Mollifier::new(&grid, epsilon, Axes::Space)?;
    let k = m.space_stencil().radius() as isize;
    let mut empirical = 0.0f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in rho.window() {
        let slice = rho.slice(0, i);
        for s in 0..grid.n_space() {
            let s0 = slice[s];
            lo = lo.min(s0);
            hi = hi.max(s0);
            let (p0, dp0) = (law.p_raw(s0), law.dp_raw(s0));
            for axis in 0..grid.dim() {
                for off in 1..=k {
                    let mut o = [0, 0];
                    o[axis] = off;
                    let v = slice[grid.offset_index(s, o)];
                    let dv = v - s0;
                    if dv.abs() >= 1e-3 * (1.0 + s0.abs()) {
                        let rem = law.p_raw(v) - p0 - dp0 * dv;
                        empirical = empirical.max(rem.abs() / (dv * dv));
                    }
                }
            }
        }
    }
    if lo > hi {
        return Err(Error::EmptyWindow("density has no valid samples".into()));
    }
    // p'' is monotone in rho for a power law, so its maximum sits at an endpoint.
    let mean_value_bound = 0.5 * law.d2p_raw(lo).max(law.d2p_raw(hi));
    Ok(TaylorBound {
        empirical,
        mean_value_bound,
    })
}

/// The five error terms of the balance regularized by spatial mollification
/// and the one-sided time average `v^{eps,h} = (v^eps)^h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BvErrorTerms {
    pub epsilon: f64,
    pub h: f64,
    /// `E1..E5` in order.
    pub terms: [f64; 5],
}

impl BvErrorTerms {
    pub fn max_abs(&self) -> f64 {
        self.terms.iter().fold(0.0, |a, t| a.max(t.abs()))
    }
}

/// Error terms for a compressible state against `phi`, which must be
/// supported in `(h + eps, T - h - eps)`.
///
/// * `E1`: the four convective rearrangement integrals, with the first one
///   written at the shifted time so that `u^eps(t + h)` is the only forward sample.
/// * `E2 = ∫∫ (p(rho^{eps,h}) - p(rho)^{eps,h}) div u^{eps,h} phi`.
/// * `E3 = -∫∫ grad(P'(rho^{eps,h}) phi) . ((rho u)^{eps,h} - rho^{eps,h} u^{eps,h})`.
/// * `E4 = ∫∫ (C2)^h_ij d_i(u^{eps,h}_j phi)` with `C2 = (rho u)^eps ⊗ u^eps - (rho u ⊗ u)^eps`.
/// * `E5 = ∫∫ (C1)^h . d_t(u^{eps,h} phi)` with `C1 = rho^eps u^eps - (rho u)^eps`
///   and `d_t u^{eps,h} = (u^eps(t + h) - u^eps(t))/h`.
pub fn bv_error_terms(
    rho: &Field,
    u: &Field,
    law: &PressureLaw,
    phi: &TestFunction,
    epsilon: f64,
    h: f64,
) -> Result<BvErrorTerms> {
    check_state(rho, u)?;
    law.admit_field(rho)?;
    let grid = *rho.grid();
    let d = grid.dim();
    let ns = grid.n_space();
    let steps = average_samples(&grid, h)?;
    let hh = steps as f64 * grid.dt();
    let m = Mollifier::new(&grid, epsilon, Axes::Space)?;
    let base = intersect(&rho.window(), &u.window());
    let valid = base.start..base.end.saturating_sub(steps).max(base.start);
    let seps = check_phis(
        core::slice::from_ref(phi),
        &grid,
        (hh + epsilon, grid.horizon() - hh - epsilon),
        &valid,
    )?;
    let phi = &seps[0];
    let win = phi.window.clone();

    let avg = |f: &Field| one_sided_time_average(f, hh);
    let rho_jet = m.jet(rho, None, Want::SPACE)?;
    let re = value(&rho_jet);
    let u_jets = (0..d)
        .map(|c| m.jet(&u.component(c), None, Want::SPACE))
        .collect::<Result<Vec<_>>>()?;
    let ru = u.times_scalar(rho)?;
    let rue = m.apply(&ru)?;
    let pe = m.apply(&law.pressure_field(rho)?)?;

    let reh = avg(re)?;
    let rehx = rho_jet.space.iter().map(avg).collect::<Result<Vec<_>>>()?;
    let ueh = u_jets.iter().map(|j| avg(value(j))).collect::<Result<Vec<_>>>()?;
    // duh[j][i] = d_i u^{eps,h}_j
    let duh = u_jets
        .iter()
        .map(|j| j.space.iter().map(avg).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let rueh = avg(&rue)?;
    let peh = avg(&pe)?;
    let ue: Vec<&Field> = u_jets.iter().map(value).collect();
    let c1 = Field::stack(&ue)?.times_scalar(re)?.zip_map(&rue, |a, b| a - b)?;
    let c1h = avg(&c1)?;

    let mut sums = [0.0f64; 5];
    let mut acc = |k: usize, v: f64| sums[k] += v;
    for i in win.clone() {
        let j = i + steps;
        for s in 0..ns {
            let (ph, pt, pg) = phi.at(i, s);
            let r = reh.get(0, i, s);
            let mut div = 0.0;
            for c in 0..d {
                div += duh[c][c].get(0, i, s);
            }
            acc(1, (law.p_raw(r.max(0.0)) - peh.get(0, i, s)) * div * ph);
            let (dp, d2p) = (law.dpotential_raw(r.max(0.0)), law.d2potential_raw(r.max(0.0)));
            for c in 0..d {
                let flux_gap = rueh.get(c, i, s) - r * ueh[c].get(0, i, s);
                acc(2, -(pg[c] * dp + ph * d2p * rehx[c].get(0, i, s)) * flux_gap);
                let uh = ueh[c].get(0, i, s);
                let dtuh = (ue[c].get(0, j, s) - ue[c].get(0, i, s)) / hh;
                acc(4, c1h.get(c, i, s) * (dtuh * ph + uh * pt));
            }
            for a in 0..d {
                for b in 0..d {
                    let mh = rueh.get(a, i, s);
                    let ubh = ueh[b].get(0, i, s);
                    let dab = duh[b][a].get(0, i, s);
                    acc(0, mh * u_jets[b].space[a].get(0, j, s) * ubh * ph);
                    acc(0, mh * ue[b].get(0, j, s) * dab * ph);
                    acc(0, -rue.get(a, i, s) * ubh * dab * ph);
                }
            }
        }
    }
    // Terms built on time averages of products.
    for a in 0..d {
        for b in 0..d {
            let prod = ru.component(a).zip_map(&u.component(b), |x, y| x * y)?;
            let me = m.apply(&prod)?;
            let mu = rue.component(a).zip_map(ue[b], |x, y| x * y)?;
            let mu_h = avg(&mu)?;
            let c2h = avg(&mu.zip_map(&me, |x, y| x - y)?)?;
            for i in win.clone() {
                for s in 0..ns {
                    let (ph, _, pg) = phi.at(i, s);
                    let dab = duh[b][a].get(0, i, s);
                    acc(0, -mu_h.get(0, i, s) * dab * ph);
                    acc(3, c2h.get(0, i, s) * (dab * ph + ueh[b].get(0, i, s) * pg[a]));
                }
            }
        }
    }
    let cell = grid.spacetime_cell();
    Ok(BvErrorTerms {
        epsilon,
        h: hh,
        terms: sums.map(|v| v * cell),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldsgen::{constant_state, step};
    use crate::testfn::{SpaceFactor, TimeBump};
    use core::f64::consts::PI;

    #[test]
    fn constants_give_exact_zeros() {
        let g = Grid::new(2, 32, 48, 1.5).unwrap();
        let st = constant_state(g, 1.7, &[0.3, -1.1])
            .unwrap()
            .with_constant_pressure(2.5)
            .unwrap();
        let phi = TestFunction::new(
            TimeBump::new(0.75, 0.4).unwrap(),
            SpaceFactor::Mode { k: [1, 1], sine: true },
        )
        .unwrap();
        let p = st.pressure.as_ref().unwrap();
        let rep = commutator_integrals(&st.rho, &st.u, Closure::Incompressible(p), &phi, 8.0 / 32.0).unwrap();
        assert_eq!((rep.r1, rep.r2, rep.pointwise_sup), (0.0, 0.0, 0.0));
        let law = PressureLaw::new(1.0, 2.0).unwrap();
        let rep = commutator_integrals(&st.rho, &st.u, Closure::Compressible(&law), &phi, 8.0 / 32.0).unwrap();
        assert_eq!((rep.r1, rep.r2, rep.r3, rep.s_int), (0.0, 0.0, Some(0.0), Some(0.0)));
        let ev = evaluate(
            &st.rho,
            &st.u,
            Closure::Compressible(&law),
            core::slice::from_ref(&phi),
            0.25,
            true,
        )
        .unwrap();
        assert_eq!(ev.energy_weak.unwrap()[0], 0.0);
        let c = product_commutator(&st.rho, &st.u, 0.25, Axes::Spacetime).unwrap();
        assert_eq!(c.max_abs(), 0.0);
        assert_eq!(decomposition_residual(&st.rho, &st.u, 0.25, Axes::Space).unwrap(), 0.0);
    }

    #[test]
    fn support_is_enforced() {
        let g = Grid::new(1, 64, 64, 1.0).unwrap();
        let st = constant_state(g, 1.0, &[1.0]).unwrap();
        let law = PressureLaw::new(1.0, 2.0).unwrap();
        let phi = TestFunction::new(TimeBump::new(0.5, 0.4).unwrap(), SpaceFactor::Uniform).unwrap();
        let r = commutator_integrals(&st.rho, &st.u, Closure::Compressible(&law), &phi, 0.125);
        assert!(matches!(r, Err(Error::SupportViolation { .. })));
        assert!(commutator_integrals(&st.rho, &st.u, Closure::Compressible(&law), &phi, 0.0625).is_ok());
    }

    /// Brute-force commutator from explicit convolution sums.
    fn brute(f: &[f64], g: &[f64], m: &Mollifier) -> Vec<f64> {
        let n = f.len();
        let k = m.space_stencil().radius() as isize;
        let conv = |v: &dyn Fn(usize) -> f64| -> Vec<f64> {
            (0..n)
                .map(|x| {
                    (-k..=k)
                        .map(|j| m.space_stencil().weight(j) * v((x as isize - j).rem_euclid(n as isize) as usize))
                        .sum()
                })
                .collect()
        };
        let fe = conv(&|i| f[i]);
        let ge = conv(&|i| g[i]);
        let fge = conv(&|i| f[i] * g[i]);
        (0..n).map(|i| fe[i] * ge[i] - fge[i]).collect()
    }

    #[test]
    fn smooth_commutator_is_second_order() {
        let mut sups = Vec::new();
        let epss = [8.0, 16.0, 32.0, 64.0];
        let g = Grid::new(1, 1024, 8, 1.0).unwrap();
        let f = Field::sample(g, |_, x| libm::sin(2.0 * PI * x[0])).unwrap();
        for &c in &epss {
            let eps = c / 1024.0;
            let com = product_commutator(&f, &f, eps, Axes::Space).unwrap();
            let m = Mollifier::new(&g, eps, Axes::Space).unwrap();
            let b = brute(f.slice(0, 3), f.slice(0, 3), &m);
            for (x, y) in com.slice(0, 3).iter().zip(&b) {
                assert!((x - y).abs() < 1e-13);
            }
            sups.push(com.max_abs());
        }
        let eps: Vec<f64> = epss.iter().map(|c| c / 1024.0).collect();
        let fit = crate::fit::loglog_fit(&eps, &sups).unwrap();
        assert!((fit.slope - 2.0).abs() < 0.05, "{}", fit.slope);
    }

    #[test]
    fn step_commutator_is_order_one_in_sup_and_eps_in_l1() {
        let g = Grid::new(1, 2048, 8, 1.0).unwrap();
        let f = Field::sample(g, |_, x| step(x[0])).unwrap();
        let mut l1 = Vec::new();
        let epss: Vec<f64> = [8.0, 16.0, 32.0, 64.0].iter().map(|c| c / 2048.0).collect();
        for &eps in &epss {
            let com = product_commutator(&f, &f, eps, Axes::Space).unwrap();
            assert!(com.max_abs() > 0.2 && com.max_abs() <= 0.25 + 1e-12);
            l1.push(crate::besov::lp_norm(&com, 1.0).unwrap());
        }
        let fit = crate::fit::loglog_fit(&epss, &l1).unwrap();
        assert!((fit.slope - 1.0).abs() < 0.02, "{}", fit.slope);
    }

    #[test]
    fn decomposition_is_exact() {
        let g = Grid::new(2, 32, 40, 1.0).unwrap();
        let f = Field::sample(g, |t, x| step(x[0]) + libm::cos(2.0 * PI * (x[1] + t))).unwrap();
        let h = Field::sample_vector(g, 2, |t, x, o| {
            o[0] = step(x[1] + 0.25) * t;
            o[1] = libm::sin(6.0 * x[0]);
        })
        .unwrap();
        assert!(decomposition_residual(&f, &h, 0.125, Axes::Space).unwrap() < 1e-12);
        assert!(decomposition_residual(&f, &h, 0.125, Axes::Spacetime).unwrap() < 1e-12);
    }

    #[test]
    fn taylor_constants() {
        let g = Grid::new(1, 64, 8, 1.0).unwrap();
        let rho = Field::sample(g, |_, x| 1.0 + libm::sin(2.0 * PI * x[0])).unwrap();
        let q = PressureLaw::new(1.5, 2.0).unwrap();
        let tb = taylor_pressure_bound_check(&q, &rho, 0.125).unwrap();
        assert!((tb.empirical - 1.5).abs() < 1e-9);
        let cubic = PressureLaw::new(1.0, 3.0).unwrap();
        let tb = taylor_pressure_bound_check(&cubic, &rho, 0.125).unwrap();
        assert!(tb.empirical <= tb.mean_value_bound && tb.mean_value_bound <= 6.0);
        let flat = Field::constant(g, &[0.7]).unwrap();
        assert_eq!(
            taylor_pressure_bound_check(&cubic, &flat, 0.125).unwrap().empirical,
            0.0
        );
    }

    #[test]
    fn bv_terms_vanish_on_constants() {
        let g = Grid::new(1, 64, 64, 1.0).unwrap();
        let st = constant_state(g, 2.0, &[0.5]).unwrap();
        let law = PressureLaw::new(1.0, 2.0).unwrap();
        let phi = TestFunction::new(
            TimeBump::new(0.5, 0.2).unwrap(),
            SpaceFactor::Mode { k: [1, 0], sine: false },
        )
        .unwrap();
        let e = bv_error_terms(&st.rho, &st.u, &law, &phi, 4.0 / 64.0, 8.0 / 64.0).unwrap();
        assert_eq!(e.terms, [0.0; 5]);
        let wide = TestFunction::new(TimeBump::new(0.5, 0.4).unwrap(), SpaceFactor::Uniform).unwrap();
        assert!(matches!(
            bv_error_terms(&st.rho, &st.u, &law, &wide, 4.0 / 64.0, 8.0 / 64.0),
            Err(Error::SupportViolation { .. })
        ));
    }

    #[test]
    fn envelope_of_family() {
        let a = CommutatorReport {
            epsilon: 0.1,
            r1: 3.0,
            r2: 0.0,
            r3: None,
            s_int: None,
            pointwise_sup: 1.0,
        };
        let b = CommutatorReport {
            r1: 4.0,
            r2: 1.0,
            pointwise_sup: 2.0,
            ..a
        };
        let e = CommutatorReport::envelope(&[a, b]).unwrap();
        assert_eq!((e.r1, e.r2, e.r3, e.pointwise_sup), (5.0, 1.0, None, 2.0));
    }
}
