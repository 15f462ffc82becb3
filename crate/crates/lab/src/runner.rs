//! Sweep execution.
//!
//! A run is a list of jobs, each writing its rows to `cells/` before being
//! recorded in `manifest.txt`. Only the coordinating thread writes the
//! manifest, so an interrupted run resumes from the jobs it lists. Final
//! tables are assembled from the cell files in job order, which makes them
//! independent of the worker count.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use onsagerlab_core::besov::{fit_regularity_exponent, ShiftSweep};
use onsagerlab_core::commutators::bv_error_terms;
use onsagerlab_core::defect::{defect_report, weak_energy_residual_with_floor};
use onsagerlab_core::fit::loglog_fit;
use onsagerlab_core::mollify::mollification_rate_check;
use onsagerlab_core::{Axes, Field};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Plan;
use crate::error::{LabError, Result};
use crate::fixtures::{self, Fixture};

pub const MANIFEST: &str = "manifest.txt";
pub const SUMMARY: &str = "summary.csv";
const CONFIG_COPY: &str = "config.toml";
const CELLS: &str = "cells";
const COMPLETE: &str = "complete";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BesovRow {
    pub fixture: String,
    pub field: String,
    pub p: f64,
    pub alpha_hat: f64,
    pub r_squared: f64,
    pub exact_constancy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatesRow {
    pub fixture: String,
    pub field: String,
    pub difference_slope: Option<f64>,
    pub gradient_slope: Option<f64>,
    pub exactly_smooth: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorRow {
    pub fixture: String,
    pub phi: String,
    pub eps: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: Option<f64>,
    pub s: Option<f64>,
    pub total: f64,
    pub pointwise_sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefectRow {
    pub fixture: String,
    pub system: String,
    pub phi: String,
    pub weak_residual: f64,
    pub quadrature_floor: f64,
    pub finest_residual: f64,
    pub extrapolated_defect: f64,
    pub cauchy_slope: Option<f64>,
    /// `D * integral of phi(., 1/2)` for jump fixtures.
    pub oracle: Option<f64>,
    pub oracle_rate: Option<f64>,
    pub phi_time_integral: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvRow {
    pub fixture: String,
    pub phi: String,
    pub eps: f64,
    pub h: f64,
    pub e1: f64,
    pub e2: f64,
    pub e3: f64,
    pub e4: f64,
    pub e5: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub criterion: String,
    pub fixture: String,
    pub phi: String,
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Job {
    Besov { fixture: usize },
    Rates { fixture: usize },
    Defect { fixture: usize, phi: usize },
    Bv { fixture: usize, phi: usize },
}

impl Job {
    pub fn id(&self, plan: &Plan) -> String {
        let f = |k: usize| plan.config.fixtures[k].id();
        let p = |k: usize| plan.phis[k].0.as_str();
        match *self {
            Job::Besov { fixture } => format!("besov/{}", f(fixture)),
            Job::Rates { fixture } => format!("rates/{}", f(fixture)),
            Job::Defect { fixture, phi } => format!("defect/{}/{}", f(fixture), p(phi)),
            Job::Bv { fixture, phi } => format!("bv/{}/{}", f(fixture), p(phi)),
        }
    }
}

pub fn jobs(plan: &Plan) -> Vec<Job> {
    let mut out = Vec::new();
    for (fixture, spec) in plan.config.fixtures.iter().enumerate() {
        out.push(Job::Besov { fixture });
        if plan.eps.len() >= 4 {
            out.push(Job::Rates { fixture });
        }
        for phi in 0..plan.phis.len() {
            out.push(Job::Defect { fixture, phi });
        }
        if spec.kind() == "triangle" && !plan.h.is_empty() {
            for phi in 0..plan.phis.len() {
                out.push(Job::Bv { fixture, phi });
            }
        }
    }
    out
}

/// Rows produced by one job, one CSV body per table.
#[derive(Default)]
struct Cells {
    tables: Vec<(&'static str, Vec<u8>)>,
}

impl Cells {
    fn push<T: Serialize>(&mut self, table: &'static str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| LabError::Io(e.into_error()))?;
        self.tables.push((table, bytes));
        Ok(())
    }
}

fn field_names(fx: &Fixture) -> Vec<(String, Field)> {
    let mut out = vec![("rho".to_string(), fx.state.rho.clone())];
    for c in 0..fx.state.u.components() {
        out.push((format!("u{}", c + 1), fx.state.u.component(c)));
    }
    out
}

fn run_job(plan: &Plan, job: &Job) -> Result<Cells> {
    let k = match *job {
        Job::Besov { fixture } | Job::Rates { fixture } | Job::Defect { fixture, .. } | Job::Bv { fixture, .. } => {
            fixture
        }
    };
    let spec = &plan.config.fixtures[k];
    let fx = fixtures::build(spec, plan.grid, plan.law.as_ref(), plan.seeds[k])?;
    let p = plan.config.sweep.p;
    let mut cells = Cells::default();
    match *job {
        Job::Besov { .. } => {
            let sweep = ShiftSweep::standard(&plan.grid, Axes::Space)?;
            let mut rows = Vec::new();
            for (name, f) in field_names(&fx) {
                let fit = fit_regularity_exponent(&f, p, &sweep)?;
                rows.push(BesovRow {
                    fixture: fx.id.clone(),
                    field: name,
                    p,
                    alpha_hat: fit.alpha_hat,
                    r_squared: fit.r_squared,
                    exact_constancy: fit.exact_constancy,
                });
            }
            cells.push("besov", &rows)?;
        }
        Job::Rates { .. } => {
            let mut rows = Vec::new();
            for (name, f) in field_names(&fx) {
                let r = mollification_rate_check(&f, p, &plan.eps, Axes::Space)?;
                rows.push(RatesRow {
                    fixture: fx.id.clone(),
                    field: name,
                    difference_slope: r.difference_fit.map(|f| f.slope),
                    gradient_slope: r.gradient_fit.map(|f| f.slope),
                    exactly_smooth: r.exactly_smooth,
                });
            }
            cells.push("rates", &rows)?;
        }
        Job::Defect { phi, .. } => {
            let (phi_id, tf) = &plan.phis[phi];
            let closure = fx.closure(plan.law.as_ref())?;
            let weak = weak_energy_residual_with_floor(&fx.state.rho, &fx.state.u, closure, tf)?;
            let report = defect_report(&fx.id, &fx.state.rho, &fx.state.u, closure, tf, &plan.eps)?;
            let rows: Vec<CommutatorRow> = report
                .commutators
                .iter()
                .map(|c| CommutatorRow {
                    fixture: fx.id.clone(),
                    phi: phi_id.clone(),
                    eps: c.epsilon,
                    r1: c.r1,
                    r2: c.r2,
                    r3: c.r3,
                    s: c.s_int,
                    total: c.total(),
                    pointwise_sup: c.pointwise_sup,
                })
                .collect();
            cells.push("commutators", &rows)?;
            let integral = fx.jump.map(|_| tf.time_integral_at(&plan.grid, [0.5, 0.5]));
            let finest = report
                .eps
                .iter()
                .zip(&report.residuals)
                .min_by(|a, b| a.0.total_cmp(b.0))
                .map(|(_, r)| *r)
                .unwrap_or(0.0);
            cells.push(
                "defect",
                &[DefectRow {
                    fixture: fx.id.clone(),
                    system: report.system.clone(),
                    phi: phi_id.clone(),
                    weak_residual: weak.value + 0.0, // no negative zero in reports
                    quadrature_floor: weak.quadrature_floor,
                    finest_residual: finest,
                    extrapolated_defect: report.extrapolated_defect,
                    cauchy_slope: report.rate_fit.map(|f| f.slope),
                    oracle: fx.jump.zip(integral).map(|(j, i)| j.dissipation_rate * i),
                    oracle_rate: fx.jump.map(|j| j.dissipation_rate),
                    phi_time_integral: integral,
                }],
            )?;
        }
        Job::Bv { phi, .. } => {
            let (phi_id, tf) = &plan.phis[phi];
            let law = plan
                .law
                .as_ref()
                .ok_or_else(|| LabError::config("law", "error terms need a pressure law"))?;
            let mut rows = Vec::new();
            for &h in &plan.h {
                for &eps in &plan.eps {
                    let t = bv_error_terms(&fx.state.rho, &fx.state.u, law, tf, eps, h)?;
                    rows.push(BvRow {
                        fixture: fx.id.clone(),
                        phi: phi_id.clone(),
                        eps,
                        h,
                        e1: t.terms[0],
                        e2: t.terms[1],
                        e3: t.terms[2],
                        e4: t.terms[3],
                        e5: t.terms[4],
                    });
                }
            }
            cells.push("bv_terms", &rows)?;
        }
    }
    Ok(cells)
}

fn cell_path(out: &Path, job_id: &str, table: &str) -> PathBuf {
    out.join(CELLS)
        .join(format!("{}.{table}.csv", job_id.replace('/', "__")))
}

/// State recorded by an earlier, possibly interrupted, run in the same directory.
#[derive(Debug, Default)]
pub struct Manifest {
    pub total: usize,
    pub done: Vec<String>,
    pub complete: bool,
}

pub fn read_manifest(out: &Path) -> Result<Manifest> {
    let path = out.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| LabError::Output {
        path: out.into(),
        reason: format!("no readable {MANIFEST} ({e})"),
    })?;
    let mut m = Manifest::default();
    for line in text.lines() {
        if let Some(n) = line.strip_prefix("jobs ") {
            m.total = n.trim().parse().map_err(|_| LabError::Format {
                path: path.clone(),
                reason: format!("bad job count {n:?}"),
            })?;
        } else if let Some(id) = line.strip_prefix("done ") {
            m.done.push(id.to_string());
        } else if line == COMPLETE {
            m.complete = true;
        }
    }
    Ok(m)
}

/// Outcome of [`run`].
#[derive(Debug)]
pub struct RunSummary {
    pub jobs: usize,
    pub resumed: usize,
    pub criteria: Vec<CriterionRow>,
}

impl RunSummary {
    pub fn failures(&self) -> usize {
        self.criteria.iter().filter(|c| !c.pass).count()
    }
}

pub fn run(plan: &Plan, out: &Path, workers: usize) -> Result<RunSummary> {
    fs::create_dir_all(out.join(CELLS)).map_err(|e| LabError::Output {
        path: out.into(),
        reason: e.to_string(),
    })?;
    let config_text = plan.config.to_toml();
    let all = jobs(plan);
    let ids: Vec<String> = all.iter().map(|j| j.id(plan)).collect();
    let manifest_path = out.join(MANIFEST);
    let done: Vec<String> = if manifest_path.exists() {
        let previous = fs::read_to_string(out.join(CONFIG_COPY)).unwrap_or_default();
        if previous != config_text {
            return Err(LabError::Output {
                path: out.into(),
                reason: "holds a run of a different configuration".into(),
            });
        }
        read_manifest(out)?.done
    } else {
        fs::write(out.join(CONFIG_COPY), &config_text)?;
        fs::write(
            &manifest_path,
            format!("# onsagerlab run manifest\njobs {}\n", all.len()),
        )?;
        Vec::new()
    };
    let finished = |k: usize| done.contains(&ids[k]);
    let pending: Vec<usize> = (0..all.len()).filter(|&k| !finished(k)).collect();
    let resumed = all.len() - pending.len();

    let mut manifest = OpenOptions::new().append(true).open(&manifest_path)?;
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<Cells>)>();
    let mut first_error = None;
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(pending.len().max(1)) {
            let tx = tx.clone();
            let (next, stop, pending, all) = (&next, &stop, &pending, &all);
            scope.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let slot = next.fetch_add(1, Ordering::Relaxed);
                let Some(&k) = pending.get(slot) else { break };
                if tx.send((k, run_job(plan, &all[k]))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (k, result) in rx {
            let stored = result.and_then(|cells| store(out, &ids[k], &cells, &mut manifest));
            if let Err(e) = stored {
                stop.store(true, Ordering::Relaxed);
                first_error.get_or_insert(LabError::Job {
                    job: ids[k].clone(),
                    source: Box::new(e),
                });
            }
        }
    });
    if let Some(e) = first_error {
        return Err(e);
    }
    let criteria = assemble(plan, out, &ids)?;
    writeln!(manifest, "{COMPLETE}")?;
    Ok(RunSummary {
        jobs: all.len(),
        resumed,
        criteria,
    })
}

fn store(out: &Path, id: &str, cells: &Cells, manifest: &mut File) -> Result<()> {
    for (table, bytes) in &cells.tables {
        let path = cell_path(out, id, table);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes)?;
        fs::rename(&tmp, &path)?;
    }
    writeln!(manifest, "done {id}")?;
    manifest.flush()?;
    Ok(())
}

fn read_cells<T: DeserializeOwned>(out: &Path, ids: &[String], table: &str) -> Result<Vec<T>> {
    let mut rows = Vec::new();
    for id in ids {
        let path = cell_path(out, id, table);
        if path.exists() {
            for r in csv::Reader::from_path(&path)?.deserialize() {
                rows.push(r?);
            }
        }
    }
    Ok(rows)
}

fn write_table<T: Serialize>(out: &Path, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(out.join(format!("{name}.csv")))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Every table of a finished run.
#[derive(Debug, Default)]
pub struct Tables {
    pub besov: Vec<BesovRow>,
    pub rates: Vec<RatesRow>,
    pub commutators: Vec<CommutatorRow>,
    pub defect: Vec<DefectRow>,
    pub bv_terms: Vec<BvRow>,
}

fn assemble(plan: &Plan, out: &Path, ids: &[String]) -> Result<Vec<CriterionRow>> {
    let t = Tables {
        besov: read_cells(out, ids, "besov")?,
        rates: read_cells(out, ids, "rates")?,
        commutators: read_cells(out, ids, "commutators")?,
        defect: read_cells(out, ids, "defect")?,
        bv_terms: read_cells(out, ids, "bv_terms")?,
    };
    write_table(out, "besov", &t.besov)?;
    write_table(out, "rates", &t.rates)?;
    write_table(out, "commutators", &t.commutators)?;
    write_table(out, "defect", &t.defect)?;
    write_table(out, "bv_terms", &t.bv_terms)?;
    let criteria = criteria(plan, &t);
    write_table(out, "summary", &criteria)?;
    Ok(criteria)
}

/// Slope over the four finest radii of the root-sum-square over test functions.
///
/// `None` when fewer than four radii exist, infinity when every value vanishes.
fn envelope_slope(rows: &[&CommutatorRow], eps: &[f64], pick: impl Fn(&CommutatorRow) -> f64) -> Option<f64> {
    let mut fine: Vec<f64> = eps.to_vec();
    fine.sort_by(|a, b| a.total_cmp(b));
    fine.truncate(4);
    if fine.len() < 4 {
        return None;
    }
    let env: Vec<f64> = fine
        .iter()
        .map(|&e| {
            rows.iter()
                .filter(|r| r.eps == e)
                .map(|r| pick(r).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    if env.iter().all(|&v| v == 0.0) {
        return Some(f64::INFINITY);
    }
    loglog_fit(&fine, &env).ok().map(|f| f.slope)
}

fn alpha_of(t: &Tables, fixture: &str, field: impl Fn(&str) -> bool) -> Option<f64> {
    t.besov
        .iter()
        .filter(|r| r.fixture == fixture && field(&r.field))
        .map(|r| r.alpha_hat)
        .min_by(|a, b| a.total_cmp(b))
}

pub fn criteria(plan: &Plan, t: &Tables) -> Vec<CriterionRow> {
    let tol = plan.config.tolerance;
    let mut out = Vec::new();
    let mut row =
        |criterion: &str, fixture: &str, phi: &str, measured: f64, target: f64, tolerance: f64, pass: bool| {
            out.push(CriterionRow {
                criterion: criterion.into(),
                fixture: fixture.into(),
                phi: phi.into(),
                measured,
                target,
                tolerance,
                pass,
            })
        };
    for spec in &plan.config.fixtures {
        let id = spec.id();
        let coms: Vec<&CommutatorRow> = t.commutators.iter().filter(|r| r.fixture == id).collect();
        let defects: Vec<&DefectRow> = t.defect.iter().filter(|r| r.fixture == id).collect();
        match spec.kind() {
            "constant" => {
                let mut worst = 0.0f64;
                for c in &coms {
                    for v in [
                        c.r1,
                        c.r2,
                        c.r3.unwrap_or(0.0),
                        c.s.unwrap_or(0.0),
                        c.total,
                        c.pointwise_sup,
                    ] {
                        worst = worst.max(v.abs());
                    }
                }
                for d in &defects {
                    worst = worst.max(d.weak_residual.abs()).max(d.extrapolated_defect.abs());
                }
                for b in t.bv_terms.iter().filter(|r| r.fixture == id) {
                    for v in [b.e1, b.e2, b.e3, b.e4, b.e5] {
                        worst = worst.max(v.abs());
                    }
                }
                row("exact-zero", id, "all", worst, 0.0, 0.0, worst == 0.0);
            }
            "shock" | "jump" => {
                for d in &defects {
                    let (Some(rate), Some(integral), Some(oracle)) = (d.oracle_rate, d.phi_time_integral, d.oracle)
                    else {
                        continue;
                    };
                    if spec.kind() == "shock" {
                        let measured = d.weak_residual / integral;
                        let ok = (measured / rate - 1.0).abs() <= tol.dissipation;
                        row("dissipation-rate", id, &d.phi, measured, rate, tol.dissipation, ok);
                        let limit = d.extrapolated_defect / integral;
                        let ok = (limit / rate - 1.0).abs() <= tol.dissipation;
                        row("dissipation-limit", id, &d.phi, limit, rate, tol.dissipation, ok);
                    } else {
                        let ok = d.weak_residual != 0.0 && d.weak_residual.signum() == oracle.signum();
                        row("energy-sign", id, &d.phi, d.weak_residual, oracle, 0.0, ok);
                    }
                }
                if spec.kind() == "shock" {
                    if let Some(beta) = alpha_of(t, id, |f| f == "rho") {
                        let target = 1.0 / 3.0;
                        row(
                            "shock-exponent",
                            id,
                            "none",
                            beta,
                            target,
                            tol.exponent,
                            (beta - target).abs() <= tol.exponent,
                        );
                    }
                }
            }
            "shear" => {
                for d in &defects {
                    let ok = d.weak_residual.abs() < d.quadrature_floor;
                    row(
                        "conservation",
                        id,
                        &d.phi,
                        d.weak_residual.abs(),
                        d.quadrature_floor,
                        0.0,
                        ok,
                    );
                }
                let (Some(alpha), Some(beta)) = (alpha_of(t, id, |f| f == "u1"), alpha_of(t, id, |f| f == "rho"))
                else {
                    continue;
                };
                let predicted = 2.0 * alpha + beta - 1.0;
                let slopes = [
                    envelope_slope(&coms, &plan.eps, |r| r.r1),
                    envelope_slope(&coms, &plan.eps, |r| r.r2),
                ];
                if let [Some(s1), Some(s2)] = slopes {
                    let m = s1.min(s2);
                    row(
                        "commutator-rate",
                        id,
                        "envelope",
                        m,
                        predicted,
                        tol.slope,
                        m >= predicted - tol.slope,
                    );
                }
            }
            "weierstrass" => {
                let (Some(alpha), Some(beta)) =
                    (alpha_of(t, id, |f| f.starts_with('u')), alpha_of(t, id, |f| f == "rho"))
                else {
                    continue;
                };
                let predicted = alpha + 2.0 * beta - 1.0;
                let slopes = [
                    envelope_slope(&coms, &plan.eps, |r| r.r3.unwrap_or(0.0)),
                    envelope_slope(&coms, &plan.eps, |r| r.s.unwrap_or(0.0)),
                ];
                if let [Some(s3), Some(ss)] = slopes {
                    let m = s3.min(ss);
                    row(
                        "commutator-rate",
                        id,
                        "envelope",
                        m,
                        predicted,
                        tol.slope,
                        m >= predicted - tol.slope,
                    );
                }
            }
            "triangle" => {
                let (Some(eps), Some(h)) = (
                    plan.eps.iter().copied().reduce(f64::min),
                    plan.h.iter().copied().reduce(f64::min),
                ) else {
                    continue;
                };
                for d in &defects {
                    let finest = t
                        .bv_terms
                        .iter()
                        .find(|b| b.fixture == id && b.phi == d.phi && b.eps == eps && b.h == h);
                    if let Some(b) = finest {
                        let m = [b.e1, b.e2, b.e3, b.e4, b.e5]
                            .iter()
                            .fold(0.0f64, |a, v| a.max(v.abs()));
                        let target = 10.0 * d.quadrature_floor;
                        row("bv-error-terms", id, &d.phi, m, target, 0.0, m <= target);
                    }
                }
            }
            _ => {}
        }
    }
    out
}
