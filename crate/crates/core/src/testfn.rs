//! Smooth test functions with closed-form derivatives.
//!
//! A test function is a finite sum of products `c * b(t) * s(x)` where `b` is a
//! compactly supported bump in time and `s` a smooth periodic spatial factor.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::Range;

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::mollify::{bump, bump_derivative};

/// `eta((t - center)/radius)`, supported on `(center - radius, center + radius)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeBump {
    pub center: f64,
    pub radius: f64,
}

impl TimeBump {
    pub fn new(center: f64, radius: f64) -> Result<Self> {
        if !(center.is_finite() && radius.is_finite() && radius > 0.0) {
            return Err(invalid("time bump", format!("center {center}, radius {radius}")));
        }
        Ok(Self { center, radius })
    }

    /// Bump spanning `(t0, t1)`.
    pub fn spanning(t0: f64, t1: f64) -> Result<Self> {
        Self::new(0.5 * (t0 + t1), 0.5 * (t1 - t0))
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.radius, self.center + self.radius)
    }

    fn eval(&self, t: f64) -> (f64, f64) {
        let r = (t - self.center) / self.radius;
        (bump(r), bump_derivative(r) / self.radius)
    }
}

/// Periodic spatial factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpaceFactor {
    Uniform,
    /// Product over axes of `eta(dist(x_k, center_k)/radius)` with the periodic distance.
    Bump {
        center: [f64; 2],
        radius: f64,
    },
    /// `cos(2 pi k.x)` or, with `sine`, `sin(2 pi k.x)`.
    Mode {
        k: [i32; 2],
        sine: bool,
    },
}

fn periodic_offset(x: f64, c: f64) -> f64 {
    let d = x - c;
    d - libm::round(d)
}

impl SpaceFactor {
    /// Value and gradient at `x`.
    fn eval(&self, dim: usize, x: [f64; 2]) -> (f64, [f64; 2]) {
        match *self {
            SpaceFactor::Uniform => (1.0, [0.0, 0.0]),
            SpaceFactor::Bump { center, radius } => {
                let mut vals = [1.0, 1.0];
                let mut ders = [0.0, 0.0];
                for a in 0..dim {
                    let r = periodic_offset(x[a], center[a]) / radius;
                    vals[a] = bump(r);
                    ders[a] = bump_derivative(r) / radius;
                }
                let v = vals[0] * vals[1];
                (v, [ders[0] * vals[1], vals[0] * ders[1]])
            }
            SpaceFactor::Mode { k, sine } => {
                let k1 = k[0] as f64;
                let k2 = if dim == 2 { k[1] as f64 } else { 0.0 };
                let arg = 2.0 * PI * (k1 * x[0] + k2 * x[1]);
                let (s, c) = (libm::sin(arg), libm::cos(arg));
                let (v, dv) = if sine { (s, c) } else { (c, -s) };
                (v, [2.0 * PI * k1 * dv, 2.0 * PI * k2 * dv])
            }
        }
    }

    fn nonnegative(&self) -> bool {
        !matches!(self, SpaceFactor::Mode { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Term {
    coeff: f64,
    time: TimeBump,
    space: SpaceFactor,
}

/// Finite sum of separable bump-times-periodic terms.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    terms: Vec<Term>,
}

/// Samples of a test function and its derivatives on the time slices where it is nonzero.
///
/// Arrays are indexed by `(i - window.start) * n_space + s`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhiSamples {
    pub window: Range<usize>,
    pub value: Vec<f64>,
    pub dt: Vec<f64>,
    pub grad: [Vec<f64>; 2],
}

impl PhiSamples {
    #[inline]
    pub fn index(&self, n_space: usize, i: usize, s: usize) -> usize {
        (i - self.window.start) * n_space + s
    }
}

impl TestFunction {
    pub fn new(time: TimeBump, space: SpaceFactor) -> Result<Self> {
        if let SpaceFactor::Bump { radius, .. } = space {
            if !(radius > 0.0 && radius <= 0.5) {
                return Err(invalid("spatial bump", format!("radius {radius} is not in (0, 1/2]")));
            }
        }
        Ok(Self {
            terms: vec![Term {
                coeff: 1.0,
                time,
                space,
            }],
        })
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &TestFunction, b: f64) -> TestFunction {
        let mut terms: Vec<Term> = self
            .terms
            .iter()
            .map(|t| Term {
                coeff: a * t.coeff,
                ..*t
            })
            .collect();
        terms.extend(other.terms.iter().map(|t| Term {
            coeff: b * t.coeff,
            ..*t
        }));
        TestFunction { terms }
    }

    pub fn scaled(&self, a: f64) -> TestFunction {
        TestFunction {
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: a * t.coeff,
                    ..*t
                })
                .collect(),
        }
    }

    /// Smallest interval containing the time support.
    pub fn time_support(&self) -> (f64, f64) {
        self.terms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| {
            let (lo, hi) = t.time.support();
            (a.min(lo), b.max(hi))
        })
    }

    /// Errors unless the time support lies inside `allowed`.
    pub fn check_support(&self, allowed: (f64, f64)) -> Result<()> {
        let support = self.time_support();
        let tol = 1e-12 * (1.0 + allowed.1.abs());
        if support.0 < allowed.0 - tol || support.1 > allowed.1 + tol {
            return Err(Error::SupportViolation { support, allowed });
        }
        Ok(())
    }

    /// True when every term is a nonnegative product.
    pub fn is_nonnegative(&self) -> bool {
        self.terms.iter().all(|t| t.coeff >= 0.0 && t.space.nonnegative())
    }

    /// `(phi, d_t phi, grad phi)` at `(t, x)`.
    pub fn eval(&self, dim: usize, t: f64, x: [f64; 2]) -> (f64, f64, [f64; 2]) {
        let mut v = 0.0;
        let mut dt = 0.0;
        let mut g = [0.0, 0.0];
        for term in &self.terms {
            let (b, db) = term.time.eval(t);
            if b == 0.0 && db == 0.0 {
                continue;
            }
            let (s, ds) = term.space.eval(dim, x);
            v += term.coeff * b * s;
            dt += term.coeff * db * s;
            g[0] += term.coeff * b * ds[0];
            g[1] += term.coeff * b * ds[1];
        }
        (v, dt, g)
    }

    /// Time samples strictly inside the support.
    pub fn sample_window(&self, grid: &Grid) -> Range<usize> {
        let (lo, hi) = self.time_support();
        let dt = grid.dt();
        let first = libm::ceil(lo / dt - 0.5).max(0.0) as usize;
        let mut start = first;
        while start < grid.n_t() && grid.time(start) <= lo {
            start += 1;
        }
        let mut end = start;
        while end < grid.n_t() && grid.time(end) < hi {
            end += 1;
        }
        start..end
    }

    pub fn sample(&self, grid: &Grid) -> PhiSamples {
        let window = self.sample_window(grid);
        let ns = grid.n_space();
        let len = window.len() * ns;
        let mut out = PhiSamples {
            window: window.clone(),
            value: vec![0.0; len],
            dt: vec![0.0; len],
            grad: [vec![0.0; len], vec![0.0; len]],
        };
        let points: Vec<[f64; 2]> = (0..ns).map(|s| grid.point(s)).collect();
        for term in &self.terms {
            let spatial: Vec<(f64, [f64; 2])> = points.iter().map(|&x| term.space.eval(grid.dim(), x)).collect();
            for i in window.clone() {
                let (b, db) = term.time.eval(grid.time(i));
                if b == 0.0 && db == 0.0 {
                    continue;
                }
                let base = (i - window.start) * ns;
                for (s, &(sv, sg)) in spatial.iter().enumerate() {
                    out.value[base + s] += term.coeff * b * sv;
                    out.dt[base + s] += term.coeff * db * sv;
                    out.grad[0][base + s] += term.coeff * b * sg[0];
                    out.grad[1][base + s] += term.coeff * b * sg[1];
                }
            }
        }
        out
    }

    /// `integral phi(t, x0) dt`, by the rectangle rule on the grid's time samples.
    pub fn time_integral_at(&self, grid: &Grid, x0: [f64; 2]) -> f64 {
        self.sample_window(grid)
            .map(|i| self.eval(grid.dim(), grid.time(i), x0).0)
            .sum::<f64>()
            * grid.dt()
    }

    /// Short human-readable description.
    pub fn descriptor(&self) -> String {
        let mut out = String::new();
        for (n, t) in self.terms.iter().enumerate() {
            if n > 0 {
                out.push_str(" + ");
            }
            let space = match t.space {
                SpaceFactor::Uniform => String::from("1"),
                SpaceFactor::Bump { center, radius } => format!("bump(x; {:?}, {radius})", center),
                SpaceFactor::Mode { k, sine } => format!("{}(2pi {:?}.x)", if sine { "sin" } else { "cos" }, k),
            };
            out.push_str(&format!(
                "{}*bump(t; {}, {})*{}",
                t.coeff, t.time.center, t.time.radius, space
            ));
        }
        out
    }
}

/// Time and space factors of each term sampled separately, so that
/// `phi(t_i, x_s)` costs one multiply-add per term.
#[derive(Clone, Debug)]
pub(crate) struct Separable {
    pub window: Range<usize>,
    terms: Vec<TermSamples>,
}

#[derive(Clone, Debug)]
struct TermSamples {
    /// Indexed by `i - window.start`; coefficient folded in.
    time: Vec<f64>,
    dtime: Vec<f64>,
    space: Vec<f64>,
    grad: [Vec<f64>; 2],
}

impl Separable {
    /// `(phi, d_t phi, grad phi)` at time index `i` (inside the window) and cell `s`.
    #[inline]
    pub fn at(&self, i: usize, s: usize) -> (f64, f64, [f64; 2]) {
        let k = i - self.window.start;
        let mut out = (0.0, 0.0, [0.0, 0.0]);
        for t in &self.terms {
            let (b, db, sv) = (t.time[k], t.dtime[k], t.space[s]);
            out.0 += b * sv;
            out.1 += db * sv;
            out.2[0] += b * t.grad[0][s];
            out.2[1] += b * t.grad[1][s];
        }
        out
    }
}

impl TestFunction {
    pub(crate) fn separable(&self, grid: &Grid) -> Separable {
        let window = self.sample_window(grid);
        let ns = grid.n_space();
        let terms = self
            .terms
            .iter()
            .map(|term| {
                let (time, dtime): (Vec<f64>, Vec<f64>) = window
                    .clone()
                    .map(|i| {
                        let (b, db) = term.time.eval(grid.time(i));
                        (term.coeff * b, term.coeff * db)
                    })
                    .unzip();
                let mut space = vec![0.0; ns];
                let mut grad = [vec![0.0; ns], vec![0.0; ns]];
                for s in 0..ns {
                    let (v, g) = term.space.eval(grid.dim(), grid.point(s));
                    space[s] = v;
                    grad[0][s] = g[0];
                    grad[1][s] = g[1];
                }
                TermSamples {
                    time,
                    dtime,
                    space,
                    grad,
                }
            })
            .collect();
        Separable { window, terms }
    }
}

/// The time bump times each of `1, cos(2 pi x_k), sin(2 pi x_k)` for every axis.
pub fn mode_family(time: TimeBump, dim: usize) -> Vec<TestFunction> {
    let mut out = vec![TestFunction {
        terms: vec![Term {
            coeff: 1.0,
            time,
            space: SpaceFactor::Uniform,
        }],
    }];
    for a in 0..dim {
        let mut k = [0, 0];
        k[a] = 1;
        for sine in [false, true] {
            out.push(TestFunction {
                terms: vec![Term {
                    coeff: 1.0,
                    time,
                    space: SpaceFactor::Mode { k, sine },
                }],
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_differences() {
        let tb = TimeBump::new(0.5, 0.3).unwrap();
        let phi = TestFunction::new(
            tb,
            SpaceFactor::Bump {
                center: [0.5, 0.4],
                radius: 0.3,
            },
        )
        .unwrap()
        .combine(
            1.0,
            &TestFunction::new(tb, SpaceFactor::Mode { k: [1, 2], sine: true }).unwrap(),
            -0.7,
        );
        let h = 1e-6;
        for &(t, x) in &[(0.41, [0.45, 0.33]), (0.6, [0.7, 0.52]), (0.35, [0.02, 0.9])] {
            let (_, dt, g) = phi.eval(2, t, x);
            let fd_t = (phi.eval(2, t + h, x).0 - phi.eval(2, t - h, x).0) / (2.0 * h);
            let fd_1 = (phi.eval(2, t, [x[0] + h, x[1]]).0 - phi.eval(2, t, [x[0] - h, x[1]]).0) / (2.0 * h);
            let fd_2 = (phi.eval(2, t, [x[0], x[1] + h]).0 - phi.eval(2, t, [x[0], x[1] - h]).0) / (2.0 * h);
            assert!((dt - fd_t).abs() < 1e-6);
            assert!((g[0] - fd_1).abs() < 1e-6);
            assert!((g[1] - fd_2).abs() < 1e-6);
        }
    }

    #[test]
    fn support_checks() {
        let phi = TestFunction::new(TimeBump::spanning(0.2, 0.8).unwrap(), SpaceFactor::Uniform).unwrap();
        let (lo, hi) = phi.time_support();
        assert!((lo - 0.2).abs() < 1e-15 && (hi - 0.8).abs() < 1e-15);
        assert!(phi.check_support((0.1, 0.9)).is_ok());
        assert!(matches!(
            phi.check_support((0.25, 0.9)),
            Err(Error::SupportViolation { .. })
        ));
        let g = Grid::new(1, 16, 10, 1.0).unwrap();
        // Centres 0.25..0.75 lie strictly inside (0.2, 0.8).
        assert_eq!(phi.sample_window(&g), 2..8);
        assert!(phi.is_nonnegative());
    }

    #[test]
    fn family_shape() {
        let fam = mode_family(TimeBump::new(0.5, 0.2).unwrap(), 2);
        assert_eq!(fam.len(), 5);
        let g = Grid::new(2, 16, 16, 1.0).unwrap();
        let s = fam[4].sample(&g);
        assert_eq!(s.value.len(), s.window.len() * 256);
        let phi = fam[4].combine(2.0, &fam[1], -0.5);
        let (full, sep) = (phi.sample(&g), phi.separable(&g));
        for i in full.window.clone() {
            for c in 0..256 {
                let k = full.index(256, i, c);
                let (v, dt, gr) = sep.at(i, c);
                assert!((v - full.value[k]).abs() < 1e-15 && (dt - full.dt[k]).abs() < 1e-13);
                assert!((gr[0] - full.grad[0][k]).abs() < 1e-13 && (gr[1] - full.grad[1][k]).abs() < 1e-13);
            }
        }
    }
}
