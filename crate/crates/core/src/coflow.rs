//! The Laplacian coflow reduced to an ODE for the 3-form part `p_t` of
//! `phi_hat_t = omega_0^2 / 2 + p_t ^ e^7`:
//!
//! `dp/dt = -eps(p)^2 theta(A) theta(B_t) p`,
//!
//! where `B_t` is the adjoint of `A` for the metric of `(omega_0, p_t)` and
//! `eps(p)` is fixed by `6 p ^ J_p^* p = 4 eps^{-2} omega_0^3`.

use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::almost_abelian::{differential, AlmostAbelian};
use crate::error::{Error, Result};
use crate::multilinear::{Endomorphism, KForm, MultiIndex};
use crate::ode::{dopri5, OdeSystem, Options, StepControl, Stop};
use crate::quadrature::{find_root, integrate as quad};
use crate::stable_forms::{complex_structure, hermitian_metric, Su3Structure};

/// Whether `B_t` follows the metric along the flow or stays at its initial
/// value. The frozen variant is the linear system `dp/dt = -eps^2 theta(A)
/// theta(B_0) p`, which is what an ansatz with constant adjoint solves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjoint {
    Evolving,
    Frozen,
}

/// `eps(p)` relative to `omega_0`.
pub fn epsilon_of(p: &KForm, omega0: &KForm) -> Result<f64> {
    let mixed = p.wedge(omega0).max_abs();
    if mixed > 1e-9 * p.max_abs() * omega0.max_abs() {
        return Err(Error::NotCompatible(mixed));
    }
    let j = complex_structure(p)?;
    let pj = p.wedge(&p.pullback(&j)?).top();
    let w3 = omega0.wedge(omega0).wedge(omega0).top();
    let e2 = 4.0 * w3 / (6.0 * pj);
    if !(e2 > 0.0) || !e2.is_finite() {
        return Err(Error::NotPositive);
    }
    Ok(e2.sqrt())
}

/// `omega_0^2 / 2 + p ^ e^7`.
pub fn lift_to_4form(omega0: &KForm, p: &KForm) -> KForm {
    let w = omega0.embed(7).unwrap();
    let e7 = KForm::covector(7, 7).unwrap();
    w.wedge(&w) * 0.5 + p.embed(7).unwrap().wedge(&e7)
}

/// The reduced flow of an almost-abelian algebra with fixed `omega_0`.
#[derive(Clone, Debug)]
pub struct Coflow {
    alg: AlmostAbelian,
    omega0: KForm,
    adjoint: Adjoint,
    frozen_b: Endomorphism,
}

impl Coflow {
    pub fn new(alg: &AlmostAbelian, su3: &Su3Structure, adjoint: Adjoint) -> Result<Self> {
        let res = alg.sp_residual(&su3.omega);
        if res > 1e-10 * alg.a().amax().max(1.0) {
            return Err(Error::NotInSp(res));
        }
        Ok(Coflow {
            alg: alg.clone(),
            omega0: su3.omega.clone(),
            adjoint,
            frozen_b: alg.a().adjoint(&su3.h),
        })
    }

    pub fn omega0(&self) -> &KForm {
        &self.omega0
    }

    pub fn algebra(&self) -> &AlmostAbelian {
        &self.alg
    }

    pub fn adjoint_mode(&self) -> Adjoint {
        self.adjoint
    }

    /// The operator `B` used at state `p`.
    pub fn adjoint_at(&self, p: &KForm) -> Result<Endomorphism> {
        match self.adjoint {
            Adjoint::Frozen => Ok(self.frozen_b.clone()),
            Adjoint::Evolving => {
                let j = complex_structure(p)?;
                let h = hermitian_metric(&self.omega0, &j)?;
                Ok(self.alg.a().adjoint(&h))
            }
        }
    }

    /// `dp/dt` at `p`.
    pub fn rhs(&self, p: &KForm) -> Result<KForm> {
        let eps = epsilon_of(p, &self.omega0)?;
        let b = self.adjoint_at(p)?;
        Ok(p.theta(&b).theta(self.alg.a()) * (-eps * eps))
    }
}

/// `dp/dt` for the evolving flow.
pub fn reduced_rhs(alg: &AlmostAbelian, su3: &Su3Structure, p: &KForm) -> Result<KForm> {
    Coflow::new(alg, su3, Adjoint::Evolving)?.rhs(p)
}

struct System<'a>(&'a Coflow);

impl OdeSystem for System<'_> {
    fn dim(&self) -> usize {
        20
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> bool {
        if y.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let p = KForm::from_vector(6, 3, y).unwrap();
        match self.0.rhs(&p) {
            Ok(dp) => {
                dy.copy_from_slice(dp.to_vector().as_slice());
                dy.iter().all(|v| v.is_finite())
            }
            Err(_) => false,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub eps: f64,
    pub p: KForm,
    /// Largest coefficient of `d phi_hat_t`.
    #[serde(rename = "dphiNorm")]
    pub dphi_norm: f64,
    /// Largest coefficient of the `Lambda^4 h^*` part of `phi_hat_t` minus
    /// `omega_0^2 / 2`.
    #[serde(rename = "part4Drift")]
    pub part4_drift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub adjoint: Adjoint,
    pub tol: f64,
    pub points: Vec<TrajectoryPoint>,
    #[serde(rename = "blowupInterval")]
    pub blowup: Option<(f64, f64)>,
    pub accepted: usize,
    pub rejected: usize,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectories start with the initial point")
    }

    /// Writes `t, eps, p123..p456, dphiNorm, part4Drift` with 17 significant
    /// digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let basis = MultiIndex::all(6, 3);
        let mut header = vec!["t".to_string(), "eps".to_string()];
        header.extend(basis.iter().map(|mi| format!("p{mi}")));
        header.push("dphiNorm".into());
        header.push("part4Drift".into());
        w.write_record(&header)?;
        for pt in &self.points {
            let mut row = vec![fmt17(pt.t), fmt17(pt.eps)];
            row.extend(basis.iter().map(|&mi| fmt17(pt.p.get(mi))));
            row.push(fmt17(pt.dphi_norm));
            row.push(fmt17(pt.part4_drift));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A float with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn point(flow: &Coflow, t: f64, p: KForm, eps: f64) -> TrajectoryPoint {
    let phi_hat = lift_to_4form(&flow.omega0, &p);
    let dphi_norm = differential(&flow.alg, &phi_hat).map(|d| d.max_abs()).unwrap_or(f64::NAN);
    let w = &flow.omega0;
    let half = w.wedge(w) * 0.5;
    let part4 = crate::almost_abelian::split(&phi_hat).unwrap().0;
    TrajectoryPoint {
        t,
        eps,
        p,
        dphi_norm,
        part4_drift: part4.distance(&half),
    }
}

/// Above this value of `eps` the flow is treated as having blown up.
pub const EPS_BLOWUP: f64 = 1e6;

/// Integrates the reduced flow from `p0` at `t0` to `t1` (either direction)
/// with relative and absolute tolerance `tol`.
///
/// Steps are capped at 1% of the projected distance to blow-up,
/// `eps / (2 |d eps/dt|)`. On blow-up the error carries the trajectory up
/// to the last accepted state and an interval containing the blow-up time.
pub fn integrate(flow: &Coflow, p0: &KForm, t0: f64, t1: f64, tol: f64) -> Result<Trajectory> {
    let eps0 = epsilon_of(p0, &flow.omega0)?;
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let sys = System(flow);
    let mut points = Vec::new();
    let mut prev: Option<(f64, f64)> = None;
    let mut rate = 0.0;
    let outcome = dopri5(&sys, t0, p0.to_vector().as_slice(), t1, &Options::with_tol(tol), |t, y, _| {
        let p = KForm::from_vector(6, 3, y).unwrap();
        let eps = epsilon_of(&p, &flow.omega0).unwrap_or(f64::INFINITY);
        if let Some((tp, ep)) = prev {
            rate = dir * (eps - ep) / (t - tp);
        }
        prev = Some((t, eps));
        points.push(point(flow, t, p, eps));
        if eps > EPS_BLOWUP {
            return StepControl::Stop;
        }
        if rate > 0.0 {
            StepControl::Continue(0.01 * eps / (2.0 * rate))
        } else {
            StepControl::Continue(f64::INFINITY)
        }
    })?;
    let mut traj = Trajectory {
        adjoint: flow.adjoint,
        tol,
        points,
        blowup: None,
        accepted: outcome.accepted,
        rejected: outcome.rejected,
    };
    let last = traj.last();
    let reach = if rate > 0.0 { last.eps / rate } else { f64::INFINITY };
    let blown = |h: f64| {
        let (a, b) = (last.t, last.t + dir * h.max(reach));
        (a.min(b), a.max(b))
    };
    match outcome.stop {
        Stop::Completed => Ok(traj),
        Stop::Observer => {
            let interval = blown(0.0);
            traj.blowup = Some(interval);
            Err(Error::BlowUp {
                interval,
                trajectory: Box::new(traj),
            })
        }
        Stop::StepUnderflow { h, boundary } => {
            if boundary || last.eps >= 10.0 * eps0 {
                let interval = blown(h);
                traj.blowup = Some(interval);
                Err(Error::BlowUp {
                    interval,
                    trajectory: Box::new(traj),
                })
            } else {
                Err(Error::ToleranceFailure(format!(
                    "step size underflow at t = {} with bounded eps = {}",
                    last.t, last.eps
                )))
            }
        }
    }
}

/// A state of one of the explicit families, in the frame where
/// `p = -b1 e^246 + b2 e^136 + b3 e^145 + b4 e^235`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExactState {
    pub t: f64,
    pub eps: f64,
    pub b: [f64; 4],
}

impl ExactState {
    pub fn p(&self) -> KForm {
        diagonal_form(self.b)
    }
}

/// `-b1 e^246 + b2 e^136 + b3 e^145 + b4 e^235`.
pub fn diagonal_form(b: [f64; 4]) -> KForm {
    let mut p = KForm::zero(6, 3);
    for (s, c) in ["246", "136", "145", "235"].iter().zip([-b[0], b[1], b[2], b[3]]) {
        p.add_term(s.parse().unwrap(), c);
    }
    p
}

/// `A = diag(s1, -s1, s2, -s2, s3, -s3)`.
pub fn symmetric_matrix(s: [f64; 3]) -> Endomorphism {
    Endomorphism::diagonal(&[s[0], -s[0], s[1], -s[1], s[2], -s[2]])
}

/// Decay rates of the four coefficients under `theta(A)^2`.
pub fn symmetric_exponents(s: [f64; 3]) -> [f64; 4] {
    let [a, b, c] = s;
    [(a + b + c).powi(2), (a + b - c).powi(2), (a - b + c).powi(2), (-a + b + c).powi(2)]
}

/// Forward blow-up time `1 / (2 |s|^2)` of the symmetric family.
pub fn symmetric_blowup(s: [f64; 3]) -> f64 {
    let delta: f64 = s.iter().map(|x| x * x).sum();
    1.0 / (2.0 * delta)
}

/// Explicit solution for `A = diag(s1, -s1, s2, -s2, s3, -s3)` from the
/// standard structure: `b_i = exp(-sigma_i F)` with
/// `F = -ln(1 - 2 delta t) / (2 delta)`, `eps = (1 - 2 delta t)^{-1/2}`.
pub fn closed_form_symmetric(s: [f64; 3], t: f64) -> Result<ExactState> {
    let delta: f64 = s.iter().map(|x| x * x).sum();
    let arg = 1.0 - 2.0 * delta * t;
    if !(arg > 0.0) {
        return Err(Error::OutOfDomain {
            t,
            lo: f64::NEG_INFINITY,
            hi: symmetric_blowup(s),
        });
    }
    let f = if delta == 0.0 { t } else { -arg.ln() / (2.0 * delta) };
    let sigma = symmetric_exponents(s);
    Ok(ExactState {
        t,
        eps: arg.powf(-0.5),
        b: sigma.map(|x| (-x * f).exp()),
    })
}

/// Explicit solution `p = sqrt(1 - 2 l^2 t) psi_0` for skew `A` in `u(3)`.
pub fn closed_form_skew(l: f64, t: f64) -> Result<ExactState> {
    let arg = 1.0 - 2.0 * l * l * t;
    if !(arg > 0.0) {
        return Err(Error::OutOfDomain {
            t,
            lo: f64::NEG_INFINITY,
            hi: 1.0 / (2.0 * l * l),
        });
    }
    let b = arg.sqrt();
    Ok(ExactState { t, eps: 1.0 / b, b: [b; 4] })
}

/// `A` with three diagonal blocks `[[0, 1], [1, 0]]`.
pub fn block_matrix() -> Endomorphism {
    let mut m = DMatrix::zeros(6, 6);
    for i in 0..3 {
        m[(2 * i, 2 * i + 1)] = 1.0;
        m[(2 * i + 1, 2 * i)] = 1.0;
    }
    Endomorphism::new(m).unwrap()
}

/// Matrix of `theta(A)^2` on the span of `-e^246, e^136, e^145, e^235`.
pub fn diagonal_span_operator(a: &Endomorphism) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(4, 4);
    let signs = [-1.0, 1.0, 1.0, 1.0];
    let names = ["246", "136", "145", "235"];
    for k in 0..4 {
        let mut b = [0.0; 4];
        b[k] = 1.0;
        let image = diagonal_form(b).theta(a).theta(a);
        for j in 0..4 {
            m[(j, k)] = signs[j] * image.get(names[j].parse().unwrap());
        }
    }
    m
}

/// Integrand of `t(u)` for the frozen-adjoint solution from the standard
/// structure with [`block_matrix`], in the variable `u = e^{-F}`.
fn block_integrand(u: f64) -> f64 {
    let u8 = u.powi(8);
    u * ((3.0 - u8) * (1.0 + u8).powi(3)).max(0.0).sqrt() / 4.0
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BlockTimes {
    /// Forward extinction time.
    pub t_plus: f64,
    /// Backward time at which `b1` reaches zero.
    pub t_tau: f64,
    /// `F` at `t_tau`, equal to `-ln(3) / 8`.
    pub f_tau: f64,
}

pub fn block_times() -> Result<BlockTimes> {
    let t_plus = quad(block_integrand, 0.0, 1.0, 1e-15, 1e-14)?.value;
    let top = 3f64.powf(0.125);
    let t_tau = -quad(block_integrand, 1.0, top, 1e-15, 1e-14)?.value;
    Ok(BlockTimes {
        t_plus,
        t_tau,
        f_tau: -(3f64.ln()) / 8.0,
    })
}

/// Coefficients `b(F) = e^{-9F} (-1, 1, 1, 1) / 2 + e^{-F} (3, 1, 1, 1) / 2`.
pub fn block_coefficients(f: f64) -> [f64; 4] {
    let (x, y) = ((-9.0 * f).exp(), (-f).exp());
    let b2 = 0.5 * (x + y);
    [0.5 * (3.0 * y - x), b2, b2, b2]
}

/// Frozen-adjoint solution for [`block_matrix`] from the standard
/// structure, defined on `(t_tau, t_plus)`.
pub fn closed_form_block(t: f64) -> Result<ExactState> {
    let times = block_times()?;
    if !(t > times.t_tau && t < times.t_plus) {
        return Err(Error::OutOfDomain {
            t,
            lo: times.t_tau,
            hi: times.t_plus,
        });
    }
    let top = 3f64.powf(0.125);
    let elapsed = |u: f64| -> f64 {
        let q = quad(block_integrand, u, 1.0, 1e-15, 1e-14).map(|q| q.value).unwrap_or(f64::NAN);
        q - t
    };
    let u = find_root(elapsed, 0.0, top, 1e-15)?;
    let f = -u.ln();
    let b = block_coefficients(f);
    let eps = (b[0] * b[1].powi(3)).powf(-0.25);
    Ok(ExactState { t, eps, b })
}
