use std::fs;
use std::path::Path;

use g2coflow::almost_abelian::{coclosed_check, AlmostAbelian};
use g2coflow::coflow::{
    closed_form_block, closed_form_skew, closed_form_symmetric, diagonal_form, integrate, block_matrix, Adjoint,
    Coflow, ExactState, Trajectory, TrajectoryPoint,
};
use g2coflow::io::{AlgebraFile, Problem, SweepPlan, SweepRun};
use g2coflow::normal_form::{l_invariant, split, symmetric_frame, NormalFormData};
use g2coflow::soliton::{self_similar, soliton_residual, SolitonReport};
use g2coflow::stable_forms::{g2_from_phi, standard_psi};
use g2coflow::{Endomorphism, Error, KForm, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{footer_path, write_bytes, write_json, FormTable};
use crate::{exit_code, Format, RunArgs, EXIT_BLOWUP, EXIT_VALIDATION};

fn read_input(args: &RunArgs) -> Result<AlgebraFile> {
    let path = args
        .input
        .as_ref()
        .ok_or_else(|| Error::Parse("--input is required".into()))?;
    AlgebraFile::parse(&fs::read_to_string(path)?)
}

pub fn validate_range(t0: f64, t1: f64, tol: f64) -> std::result::Result<(), String> {
    if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
        return Err(format!("need finite t0 < t1, got [{t0}, {t1}]"));
    }
    if !(tol > 1e-14 && tol < 1e-2) {
        return Err(format!("tolerance {tol} outside (1e-14, 1e-2)"));
    }
    Ok(())
}

fn only_json(args: &RunArgs) -> Result<()> {
    match args.format {
        Some(Format::Csv) => Err(Error::Parse("this command only writes JSON".into())),
        _ => Ok(()),
    }
}

fn grid(t0: f64, t1: f64, steps: usize) -> Vec<f64> {
    let n = steps.max(1);
    (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect()
}

#[derive(Serialize)]
struct CheckReport {
    stable: bool,
    positive: bool,
    #[serde(rename = "phiNorm2")]
    phi_norm2: Option<f64>,
    coclosed: bool,
    #[serde(rename = "coclosedResidual")]
    coclosed_residual: Option<f64>,
    #[serde(rename = "metricEigenvalues")]
    metric_eigenvalues: Vec<f64>,
    metric: Option<Endomorphism>,
    failure: Option<String>,
    pass: bool,
}

pub fn check(args: &RunArgs) -> Result<u8> {
    only_json(args)?;
    let file = read_input(args)?;
    let (a, phi, basis) = file.parts()?;
    let mut alg = AlmostAbelian::new(a)?;
    let mut phi = phi;
    if let Some(p) = basis {
        alg = alg.change_basis(&p)?;
        phi = phi.pullback(&p)?;
    }
    let mut report = CheckReport {
        stable: false,
        positive: false,
        phi_norm2: None,
        coclosed: false,
        coclosed_residual: None,
        metric_eigenvalues: Vec::new(),
        metric: None,
        failure: None,
        pass: false,
    };
    match coclosed_check(&alg, &phi, args.tol) {
        Ok(c) => {
            report.stable = true;
            report.positive = true;
            report.phi_norm2 = Some(c.g2.metric.inner(&phi, &phi)?);
            report.coclosed = c.coclosed;
            report.coclosed_residual = Some(c.residual);
            let mut eig: Vec<f64> = c.g2.metric.matrix().clone().symmetric_eigen().eigenvalues.iter().copied().collect();
            eig.sort_by(|x, y| x.total_cmp(y));
            report.metric_eigenvalues = eig;
            report.metric = Some(Endomorphism::new(c.g2.metric.matrix().clone())?);
            if !c.coclosed {
                report.failure = Some(format!("d*phi has residual {:e}", c.residual));
            }
        }
        Err(Error::NotStable) => report.failure = Some(Error::NotStable.to_string()),
        Err(e @ (Error::NotPositive | Error::NonPositiveMetric)) => {
            report.stable = true;
            report.failure = Some(e.to_string());
        }
        Err(e) => return Err(e),
    }
    let norm_ok = report.phi_norm2.is_some_and(|n| (n - 7.0).abs() < 1e-9);
    report.pass = report.stable && report.positive && report.coclosed && norm_ok;
    write_json(args.output.as_deref(), &report)?;
    Ok(if report.pass { 0 } else { EXIT_VALIDATION })
}

#[derive(Serialize)]
struct ReduceReport {
    #[serde(rename = "A")]
    a: Endomorphism,
    basis: Endomorphism,
    omega: KForm,
    psi: KForm,
    #[serde(rename = "J")]
    j: Endomorphism,
    h: Endomorphism,
    lambda: f64,
    #[serde(rename = "normalizationResidual")]
    normalization_residual: f64,
    #[serde(rename = "spResidual")]
    sp_residual: f64,
}

pub fn reduce(args: &RunArgs) -> Result<u8> {
    only_json(args)?;
    let p = read_input(args)?.problem()?;
    let report = ReduceReport {
        a: p.alg.a().clone(),
        basis: p.basis.clone(),
        omega: p.su3.omega.clone(),
        psi: p.su3.psi.clone(),
        j: p.su3.j.clone(),
        h: Endomorphism::new(p.su3.h.matrix().clone())?,
        lambda: p.su3.lambda,
        normalization_residual: p.su3.normalization_residual(),
        sp_residual: p.alg.sp_residual(&p.su3.omega),
    };
    write_json(args.output.as_deref(), &report)?;
    Ok(0)
}

pub fn normal_form(args: &RunArgs) -> Result<u8> {
    only_json(args)?;
    let p = read_input(args)?.problem()?;
    let nf: NormalFormData = symmetric_frame(p.alg.a(), &p.su3)?;
    write_json(args.output.as_deref(), &nf)?;
    Ok(0)
}

#[derive(Clone, Debug, Serialize)]
struct Leg {
    from: f64,
    to: f64,
    reached: f64,
    #[serde(rename = "blowupInterval")]
    blowup: Option<(f64, f64)>,
    accepted: usize,
    rejected: usize,
}

#[derive(Clone, Debug, Serialize)]
struct FlowFooter {
    label: Option<String>,
    t0: f64,
    t1: f64,
    tol: f64,
    adjoint: Adjoint,
    status: &'static str,
    #[serde(rename = "blowupInterval")]
    blowup: Option<(f64, f64)>,
    forward: Option<Leg>,
    backward: Option<Leg>,
}

fn leg(flow: &Coflow, p0: &KForm, t1: f64, tol: f64) -> Result<(Trajectory, Leg)> {
    let traj = match integrate(flow, p0, 0.0, t1, tol) {
        Ok(t) => t,
        Err(Error::BlowUp { trajectory, .. }) => *trajectory,
        Err(e) => return Err(e),
    };
    let info = Leg {
        from: 0.0,
        to: t1,
        reached: traj.last().t,
        blowup: traj.blowup,
        accepted: traj.accepted,
        rejected: traj.rejected,
    };
    Ok((traj, info))
}

/// Integrates from the initial data at `t = 0` to both ends of `[t0, t1]`
/// and keeps the points inside the range.
fn run_flow(problem: &Problem, adjoint: Adjoint, t0: f64, t1: f64, tol: f64, label: Option<String>) -> Result<(Trajectory, FlowFooter)> {
    let flow = Coflow::new(&problem.alg, &problem.su3, adjoint)?;
    let p0 = problem.su3.psi.clone();
    let mut points: Vec<TrajectoryPoint> = Vec::new();
    let (mut accepted, mut rejected) = (0, 0);
    let mut backward = None;
    let mut forward = None;
    if t0 < 0.0 {
        let (traj, info) = leg(&flow, &p0, t0, tol)?;
        points.extend(traj.points.into_iter().rev().filter(|p| p.t >= t0 && p.t <= t1 && p.t != 0.0));
        accepted += info.accepted;
        rejected += info.rejected;
        backward = Some(info);
    }
    if t1 > 0.0 {
        let (traj, info) = leg(&flow, &p0, t1, tol)?;
        points.extend(traj.points.into_iter().filter(|p| p.t >= t0 && p.t <= t1));
        accepted += info.accepted;
        rejected += info.rejected;
        forward = Some(info);
    } else if t1 == 0.0 {
        let (traj, _) = leg(&flow, &p0, 0.0, tol)?;
        points.extend(traj.points);
    }
    let blowup = forward
        .as_ref()
        .and_then(|l| l.blowup)
        .or_else(|| backward.as_ref().and_then(|l| l.blowup));
    let footer = FlowFooter {
        label,
        t0,
        t1,
        tol,
        adjoint,
        status: if blowup.is_some() { "blowUp" } else { "completed" },
        blowup,
        forward,
        backward,
    };
    let traj = Trajectory {
        adjoint,
        tol,
        points,
        blowup,
        accepted,
        rejected,
    };
    Ok((traj, footer))
}

fn write_trajectory(path: Option<&Path>, format: Format, traj: &Trajectory) -> Result<()> {
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            traj.write_csv(&mut buf)?;
            write_bytes(path, &buf)
        }
        Format::Json => write_json(path, traj),
    }
}

pub fn flow(args: &RunArgs) -> Result<u8> {
    if let Some(plan) = &args.sweep {
        return sweep(args, plan);
    }
    let output = args
        .output
        .as_ref()
        .ok_or_else(|| Error::Parse("flow needs --output for the trajectory and its footer".into()))?;
    let problem = read_input(args)?.problem()?;
    let (traj, footer) = run_flow(&problem, args.adjoint.into(), args.t0, args.t1, args.tol, None)?;
    write_trajectory(Some(output), args.format.unwrap_or(Format::Csv), &traj)?;
    write_json(Some(&footer_path(output)), &footer)?;
    Ok(if footer.blowup.is_some() { EXIT_BLOWUP } else { 0 })
}

#[derive(Serialize)]
struct SweepEntry {
    label: String,
    code: u8,
    status: String,
}

fn sweep_run(args: &RunArgs, dir: &Path, format: Format, run: &SweepRun) -> SweepEntry {
    let tol = run.tol.unwrap_or(args.tol);
    let adjoint = run.adjoint.unwrap_or(args.adjoint.into());
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let path = dir.join(format!("{}.{ext}", run.label));
    if let Err(msg) = validate_range(run.t0, run.t1, tol) {
        return SweepEntry {
            label: run.label.clone(),
            code: EXIT_VALIDATION,
            status: msg,
        };
    }
    let result = run
        .algebra_file()
        .problem()
        .and_then(|p| run_flow(&p, adjoint, run.t0, run.t1, tol, Some(run.label.clone())))
        .and_then(|(traj, footer)| {
            write_trajectory(Some(&path), format, &traj)?;
            write_json(Some(&footer_path(&path)), &footer)?;
            Ok(footer)
        });
    match result {
        Ok(footer) => SweepEntry {
            label: run.label.clone(),
            code: if footer.blowup.is_some() { EXIT_BLOWUP } else { 0 },
            status: footer.status.to_string(),
        },
        Err(e) => SweepEntry {
            label: run.label.clone(),
            code: exit_code(&e),
            status: e.to_string(),
        },
    }
}

fn sweep(args: &RunArgs, plan_path: &Path) -> Result<u8> {
    let plan = SweepPlan::parse(&fs::read_to_string(plan_path)?)?;
    let dir = args
        .output
        .as_ref()
        .ok_or_else(|| Error::Parse("--sweep needs --output naming a directory".into()))?;
    fs::create_dir_all(dir)?;
    let format = args.format.unwrap_or(Format::Csv);
    let entries: Vec<SweepEntry> = plan.runs.par_iter().map(|run| sweep_run(args, dir, format, run)).collect();
    let code = entries.iter().map(|e| e.code).max().unwrap_or(0);
    write_json(Some(&dir.join("sweep.json")), &entries)?;
    write_json(None, &entries)?;
    Ok(code)
}

enum Family {
    Symmetric { s: [f64; 3], frame: Endomorphism },
    Skew { l: f64 },
    Block,
}

const FAMILY_TOL: f64 = 1e-10;

fn detect_family(problem: &Problem) -> Result<std::result::Result<Family, String>> {
    let a = problem.alg.a();
    let su3 = &problem.su3;
    let (s, l) = split(a, su3);
    if s.amax() <= FAMILY_TOL * a.amax().max(1.0) {
        return Ok(Ok(Family::Skew {
            l: l_invariant(&l, &su3.j),
        }));
    }
    let standard = su3.psi.distance(&standard_psi()) <= FAMILY_TOL && su3.h.matrix().is_identity(FAMILY_TOL);
    if standard && (a - block_matrix()).amax() <= FAMILY_TOL {
        return Ok(Ok(Family::Block));
    }
    let nf = symmetric_frame(a, su3)?;
    if l.amax() <= FAMILY_TOL * a.amax() && nf.theta.sin().abs() <= 1e-9 {
        let sign = nf.theta.cos().signum();
        return Ok(Ok(Family::Symmetric {
            s: nf.s.map(|x| sign * x),
            frame: nf.frame.clone(),
        }));
    }
    Ok(Err(format!(
        "no closed form for this bracket (theta = {}, |L| = {:e})",
        nf.theta,
        l.amax()
    )))
}

#[derive(Serialize)]
struct ExactRow {
    t: f64,
    eps: f64,
    b: [f64; 4],
    p: KForm,
}

#[derive(Serialize)]
struct ExactFooter {
    family: &'static str,
    adjoint: Adjoint,
    t0: f64,
    t1: f64,
    status: &'static str,
    #[serde(rename = "domainEdge")]
    domain_edge: Option<(f64, f64)>,
}

pub fn exact(args: &RunArgs) -> Result<u8> {
    let problem = read_input(args)?.problem()?;
    let family = match detect_family(&problem)? {
        Ok(f) => f,
        Err(msg) => {
            eprintln!("error: {msg}");
            return Ok(EXIT_VALIDATION);
        }
    };
    let (name, adjoint) = match family {
        Family::Symmetric { .. } => ("symmetric", Adjoint::Evolving),
        Family::Skew { .. } => ("skew", Adjoint::Evolving),
        Family::Block => ("block", Adjoint::Frozen),
    };
    let mut rows = Vec::new();
    let mut edge = None;
    for t in grid(args.t0, args.t1, args.steps) {
        let state: Result<(ExactState, KForm)> = match &family {
            Family::Symmetric { s, frame } => closed_form_symmetric(*s, t).and_then(|st| {
                let p = diagonal_form(st.b).pullback(&frame.try_inverse()?)?;
                Ok((st, p))
            }),
            Family::Skew { l } => closed_form_skew(*l, t).map(|st| {
                let p = &problem.su3.psi * st.b[0];
                (st, p)
            }),
            Family::Block => closed_form_block(t).map(|st| {
                let p = st.p();
                (st, p)
            }),
        };
        match state {
            Ok((st, p)) => rows.push(ExactRow { t, eps: st.eps, b: st.b, p }),
            Err(Error::OutOfDomain { lo, hi, .. }) => {
                edge = Some((lo, hi));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    match args.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut table = FormTable::new(&["t", "eps", "b1", "b2", "b3", "b4"], "p", 6, 3);
            for r in &rows {
                table.push(&[r.t, r.eps, r.b[0], r.b[1], r.b[2], r.b[3]], &r.p);
            }
            write_bytes(args.output.as_deref(), table.render().as_bytes())?;
        }
        Format::Json => write_json(args.output.as_deref(), &rows)?,
    }
    let footer = ExactFooter {
        family: name,
        adjoint,
        t0: args.t0,
        t1: args.t1,
        status: if edge.is_some() { "leftDomain" } else { "completed" },
        domain_edge: edge,
    };
    if let Some(out) = &args.output {
        write_json(Some(&footer_path(out)), &footer)?;
    }
    Ok(if edge.is_some() { EXIT_BLOWUP } else { 0 })
}

#[derive(Serialize)]
struct SelfSimilarPoint {
    t: f64,
    #[serde(rename = "phiHat")]
    phi_hat: KForm,
}

#[derive(Serialize)]
struct SolitonOutput<'a> {
    #[serde(flatten)]
    report: &'a SolitonReport,
    #[serde(rename = "selfSimilar")]
    self_similar: Option<Vec<SelfSimilarPoint>>,
}

/// Samples of the self-similar solution on the grid, stopping at the
/// first time outside the existence interval.
fn sample_self_similar(problem: &Problem, report: &SolitonReport, args: &RunArgs) -> Result<(Vec<SelfSimilarPoint>, bool)> {
    let phi_hat0 = g2_from_phi(&problem.phi)?.phi_hat;
    let mut out = Vec::new();
    for t in grid(args.t0, args.t1, args.steps) {
        match self_similar(report.c, &report.d, &phi_hat0, t) {
            Ok(phi_hat) => out.push(SelfSimilarPoint { t, phi_hat }),
            Err(Error::OutOfDomain { .. }) => return Ok((out, true)),
            Err(e) => return Err(e),
        }
    }
    Ok((out, false))
}

pub fn soliton(args: &RunArgs) -> Result<u8> {
    only_json(args)?;
    let problem = read_input(args)?.problem()?;
    let report = soliton_residual(&problem.alg, &problem.su3, None)?;
    let samples = if report.accepted() {
        Some(sample_self_similar(&problem, &report, args)?.0)
    } else {
        None
    };
    write_json(
        args.output.as_deref(),
        &SolitonOutput {
            report: &report,
            self_similar: samples,
        },
    )?;
    Ok(0)
}

pub fn selfsim(args: &RunArgs) -> Result<u8> {
    let problem = read_input(args)?.problem()?;
    let report = soliton_residual(&problem.alg, &problem.su3, None)?;
    if !report.accepted() {
        eprintln!("error: not a soliton (residual {:e})", report.residual);
        return Ok(EXIT_VALIDATION);
    }
    let (points, cut) = sample_self_similar(&problem, &report, args)?;
    match args.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut table = FormTable::new(&["t"], "phi", 7, 4);
            for p in &points {
                table.push(&[p.t], &p.phi_hat);
            }
            write_bytes(args.output.as_deref(), table.render().as_bytes())?;
        }
        Format::Json => write_json(args.output.as_deref(), &points)?,
    }
    if cut {
        eprintln!("error: t range leaves the existence interval {:?}", report.existence_interval);
        return Ok(EXIT_BLOWUP);
    }
    Ok(0)
}
