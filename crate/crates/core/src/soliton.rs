//! Algebraic solitons of the reduced coflow.
//!
//! At a state with metric `h`, `A = S + L` and adapted frame data
//! `(s, theta)`, the Laplacian satisfies `-Delta phi_hat = theta(X) phi_hat`
//! with `X = -eps^2 (Sigma + Lambda - [S, L])`. The structure is a soliton
//! `-Delta phi_hat = theta(D) phi_hat - 4 c phi_hat` with `D` a derivation
//! exactly when `[-Sigma + [S, L], A] = delta A`; then
//! `c = |s|^2 + l^2 - delta` and `D = X - c Id`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::almost_abelian::{g2_laplacian, AlmostAbelian};
use crate::coflow::{epsilon_of, lift_to_4form, Coflow};
use crate::error::{Error, Result};
use crate::multilinear::{Endomorphism, KForm};
use crate::normal_form::{l_invariant, split, symmetric_frame, NormalFormData};
use crate::stable_forms::{g2_from_phi, su3_assemble, Su3Structure};

/// `Sigma` in the adapted frame, on `R^7`.
pub fn sigma_model(s: [f64; 3], theta: f64) -> Endomorphism {
    let (a, b) = (theta.cos(), theta.sin());
    let mut m = DMatrix::zeros(7, 7);
    for i in 0..3 {
        let pq = s[(i + 1) % 3] * s[(i + 2) % 3];
        m[(2 * i, 2 * i)] = -2.0 * pq + 4.0 * a * a * pq;
        m[(2 * i, 2 * i + 1)] = -4.0 * a * b * pq;
        m[(2 * i + 1, 2 * i)] = -4.0 * a * b * pq;
        m[(2 * i + 1, 2 * i + 1)] = 2.0 * pq - 4.0 * a * a * pq;
    }
    m[(6, 6)] = -s.iter().map(|x| x * x).sum::<f64>();
    Endomorphism::new(m).unwrap()
}

/// `Sigma` and `Lambda = diag(0, ..., 0, -l^2)` in input coordinates.
#[derive(Clone, Debug)]
pub struct SigmaLambda {
    pub sigma: Endomorphism,
    pub lambda: Endomorphism,
}

pub fn sigma_lambda(nf: &NormalFormData) -> Result<SigmaLambda> {
    let frame = nf.frame.embed(7) + {
        let mut e = DMatrix::zeros(7, 7);
        e[(6, 6)] = 1.0;
        Endomorphism::new(e)?
    };
    let sigma = sigma_model(nf.s, nf.theta).conjugate(&frame.try_inverse()?)?;
    let mut lambda = Endomorphism::zeros(7);
    let mut m = lambda.clone().into_matrix();
    m[(6, 6)] = -nf.l * nf.l;
    lambda = Endomorphism::new(m)?;
    Ok(SigmaLambda { sigma, lambda })
}

/// `X = -eps^2 (Sigma + Lambda - [S, L])` on `R^7`.
pub fn x_operator(eps: f64, sl: &SigmaLambda, s: &Endomorphism, l: &Endomorphism) -> Endomorphism {
    (&sl.sigma + &sl.lambda - s.commutator(l).embed(7)) * (-eps * eps)
}

/// `X` at the state `p` of a flow, checked against `-Delta phi_hat = dp/dt ^ e^7`.
pub fn x_operator_at(flow: &Coflow, p: &KForm) -> Result<Endomorphism> {
    let eps = epsilon_of(p, flow.omega0())?;
    let su3 = su3_assemble(flow.omega0(), &(p * eps))?;
    let a = flow.algebra().a();
    let nf = symmetric_frame(a, &su3)?;
    let (s, l) = split(a, &su3);
    let x = x_operator(eps, &sigma_lambda(&nf)?, &s, &l);
    let phi_hat = lift_to_4form(flow.omega0(), p);
    let e7 = KForm::covector(7, 7)?;
    let expected = flow.rhs(p)?.embed(7)?.wedge(&e7);
    let residual = phi_hat.theta(&x).distance(&expected);
    if residual > 1e-9 * (1.0 + expected.max_abs()) {
        return Err(Error::IdentityViolation(residual));
    }
    Ok(x)
}

/// Frobenius norm of `D[u, v] - [Du, v] - [u, Dv]` over basis pairs.
pub fn derivation_check(d: &Endomorphism, alg: &AlmostAbelian) -> f64 {
    let basis = |i: usize| {
        let mut v = DVector::zeros(7);
        v[i] = 1.0;
        v
    };
    let mut sum = 0.0;
    for i in 0..7 {
        for j in i + 1..7 {
            let (u, v) = (basis(i), basis(j));
            let r = d.matrix() * alg.bracket(&u, &v)
                - alg.bracket(&(d.matrix() * &u), &v)
                - alg.bracket(&u, &(d.matrix() * &v));
            sum += r.norm_squared();
        }
    }
    sum.sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum SolitonClass {
    Shrinking,
    Steady,
    Expanding,
    NotSoliton,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolitonReport {
    pub delta: f64,
    pub c: f64,
    pub class: SolitonClass,
    /// `|[-Sigma + [S, L], A] - delta A|` in the `h`-Frobenius norm.
    pub residual: f64,
    #[serde(rename = "D")]
    pub d: Endomorphism,
    pub eigenform: bool,
    /// `None` stands for an infinite endpoint.
    #[serde(rename = "existenceInterval")]
    pub existence_interval: (Option<f64>, Option<f64>),
    pub tolerance: f64,
    #[serde(rename = "derivationResidual")]
    pub derivation_residual: f64,
    /// Residual of the frame fit for `S`.
    #[serde(rename = "frameFit")]
    pub frame_fit: f64,
    #[serde(skip)]
    pub normal_form: NormalFormData,
}

impl SolitonReport {
    pub fn accepted(&self) -> bool {
        self.class != SolitonClass::NotSoliton
    }
}

/// `(|[-Sigma + [S, L], L] - delta S|, |[-Sigma + [S, L], S] - delta L|)`,
/// the symmetric and skew parts of the soliton residual.
pub fn split_residuals(
    sigma_h: &Endomorphism,
    s: &Endomorphism,
    l: &Endomorphism,
    delta: f64,
    h: &crate::multilinear::Metric,
) -> (f64, f64) {
    let y = -sigma_h + s.commutator(l);
    let sym = y.commutator(l) - s * delta;
    let skew = y.commutator(s) - l * delta;
    (sym.norm_h(h), skew.norm_h(h))
}

/// Default residual tolerance for `A`: `1e-10 (1 + |A|)^3`.
pub fn default_tolerance(a: &Endomorphism, su3: &Su3Structure) -> f64 {
    1e-10 * (1.0 + a.norm_h(&su3.h)).powi(3)
}

/// Tests whether the normalized structure `su3` (with `e_7` unit normal)
/// is an algebraic soliton for `alg`.
pub fn soliton_residual(alg: &AlmostAbelian, su3: &Su3Structure, tol: Option<f64>) -> Result<SolitonReport> {
    let a = alg.a();
    let tol = tol.unwrap_or_else(|| default_tolerance(a, su3));
    let nf = symmetric_frame(a, su3)?;
    let (s, l) = split(a, su3);
    let sl = sigma_lambda(&nf)?;
    let sigma_h = sl.sigma.restrict(6);
    let m = (-&sigma_h + s.commutator(&l)).commutator(a);
    let aa = a.inner(a, &su3.h);
    let delta = if aa > 0.0 { a.inner(&m, &su3.h) / aa } else { 0.0 };
    let residual = (&m - a * delta).norm_h(&su3.h);
    let s2: f64 = nf.s.iter().map(|x| x * x).sum();
    let l2 = l_invariant(&l, &su3.j).powi(2);
    let c = s2 + l2 - delta;
    let x = x_operator(1.0, &sl, &s, &l);
    let d = x - Endomorphism::identity(7) * c;
    let derivation_residual = derivation_check(&d, alg);
    let accepted = residual <= tol && derivation_residual <= tol;
    let class = if !accepted {
        SolitonClass::NotSoliton
    } else if c.abs() <= tol {
        SolitonClass::Steady
    } else if c > 0.0 {
        SolitonClass::Shrinking
    } else {
        SolitonClass::Expanding
    };
    let existence_interval = match class {
        SolitonClass::Shrinking => (None, Some(1.0 / (2.0 * c))),
        SolitonClass::Expanding => (Some(1.0 / (2.0 * c)), None),
        _ => (None, None),
    };
    Ok(SolitonReport {
        delta,
        c,
        class,
        residual,
        eigenform: d.amax() <= tol,
        d,
        existence_interval,
        tolerance: tol,
        derivation_residual,
        frame_fit: nf.residual,
        normal_form: nf,
    })
}

/// `4 sin(theta) (1 - 4 cos(theta)^2) s1 s2 s3` and `|[Sigma, L]|`; for
/// normal `A` both vanish exactly at solitons.
pub fn normal_obstruction(nf: &NormalFormData) -> Result<(f64, f64)> {
    let th = nf.theta;
    let scalar = 4.0 * th.sin() * (1.0 - 4.0 * th.cos().powi(2)) * nf.s.iter().product::<f64>();
    let sigma = sigma_model(nf.s, nf.theta).restrict(6);
    Ok((scalar, sigma.commutator(&nf.l_frame).amax()))
}

fn scale_and_flow(c: f64, t: f64) -> Result<(f64, f64)> {
    let arg = 1.0 - 2.0 * c * t;
    if !(arg > 0.0) {
        let edge = 1.0 / (2.0 * c);
        let (lo, hi) = if c > 0.0 { (f64::NEG_INFINITY, edge) } else { (edge, f64::INFINITY) };
        return Err(Error::OutOfDomain { t, lo, hi });
    }
    let f = if c == 0.0 { t } else { -arg.ln() / (2.0 * c) };
    Ok((arg * arg, f))
}

/// `phi_hat_t = c(t) exp(-f(t) D)^* phi_hat_0` with `c(t) = (1 - 2ct)^2`,
/// `f(t) = -ln(1 - 2ct) / (2c)`.
pub fn self_similar(c: f64, d: &Endomorphism, phi_hat0: &KForm, t: f64) -> Result<KForm> {
    let (scale, f) = scale_and_flow(c, t)?;
    Ok(phi_hat0.pullback(&(d * -f).exp())? * scale)
}

/// The 3-form of the self-similar solution, `c(t)^{3/4} exp(-f(t) D)^* phi_0`.
pub fn self_similar_phi(c: f64, d: &Endomorphism, phi0: &KForm, t: f64) -> Result<KForm> {
    let (scale, f) = scale_and_flow(c, t)?;
    Ok(phi0.pullback(&(d * -f).exp())? * scale.powf(0.75))
}

/// `|-Delta phi_hat + 4 c phi_hat - theta(D) phi_hat|` with the Laplacian
/// of the metric induced by `phi`.
pub fn soliton_3form_check(alg: &AlmostAbelian, phi: &KForm, report: &SolitonReport) -> Result<f64> {
    let g2 = g2_from_phi(phi)?;
    let lap = g2_laplacian(alg, &g2, &g2.phi_hat)?;
    let lhs = -lap + &g2.phi_hat * (4.0 * report.c) - g2.phi_hat.theta(&report.d);
    Ok(lhs.max_abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coflow::{block_matrix, Adjoint};
    use crate::stable_forms::{standard_phi, standard_psi, standard_su3};

    fn nilpotent() -> AlmostAbelian {
        let mut m = DMatrix::zeros(6, 6);
        for i in 0..3 {
            m[(2 * i, 2 * i + 1)] = 1.0;
        }
        AlmostAbelian::new(Endomorphism::new(m).unwrap()).unwrap()
    }

    #[test]
    fn nilpotent_example_is_shrinking() {
        let alg = nilpotent();
        let r = soliton_residual(&alg, &standard_su3(), None).unwrap();
        assert_eq!(r.class, SolitonClass::Shrinking);
        assert!(r.residual < 1e-12);
        assert!(r.delta.abs() < 1e-12);
        assert!((r.c - 3.0).abs() < 1e-12);
        let d = Endomorphism::diagonal(&[-3.0, -3.0, -3.0, -3.0, -3.0, -3.0, 0.0]);
        assert!((r.d.matrix() - d.matrix()).amax() < 1e-12);
        assert!(soliton_3form_check(&alg, &standard_phi(), &r).unwrap() < 1e-12);
    }

    #[test]
    fn block_example_is_not_a_soliton() {
        let alg = AlmostAbelian::new(block_matrix()).unwrap();
        let r = soliton_residual(&alg, &standard_su3(), None).unwrap();
        assert_eq!(r.class, SolitonClass::NotSoliton);
        assert!(r.residual > 10.0 * r.tolerance);
    }

    #[test]
    fn zero_bracket_is_steady() {
        let alg = AlmostAbelian::new(Endomorphism::zeros(6)).unwrap();
        let r = soliton_residual(&alg, &standard_su3(), None).unwrap();
        assert_eq!(r.class, SolitonClass::Steady);
        assert!(r.eigenform);
    }

    #[test]
    fn identity_is_not_a_derivation() {
        let alg = AlmostAbelian::new(block_matrix()).unwrap();
        let r = derivation_check(&Endomorphism::identity(7), &alg);
        assert!((r - block_matrix().norm()).abs() < 1e-14);
    }

    #[test]
    fn x_identity_holds_off_the_initial_state() {
        let alg = AlmostAbelian::new(block_matrix()).unwrap();
        let flow = Coflow::new(&alg, &standard_su3(), Adjoint::Evolving).unwrap();
        let p = crate::coflow::diagonal_form([0.8, 1.2, 1.1, 0.9]);
        assert!(x_operator_at(&flow, &p).is_ok());
        assert!(x_operator_at(&flow, &standard_psi()).is_ok());
    }
}
