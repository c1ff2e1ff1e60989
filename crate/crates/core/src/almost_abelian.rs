//! Almost-abelian Lie algebras `g = h x_A R e_7` with `h = R^6` abelian and
//! `ad(e_7)|_h = A`, their Chevalley-Eilenberg differential, and the metric
//! operators built from it.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::multilinear::{Endomorphism, KForm, Metric, MultiIndex};
use crate::stable_forms::{g2_from_phi, su3_assemble, G2Structure, Su3Structure};

/// Tolerance for structural checks (adaptedness of frames, membership in sp).
pub const STRUCTURE_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct AlmostAbelian {
    a: Endomorphism,
}

impl AlmostAbelian {
    pub fn new(a: Endomorphism) -> Result<Self> {
        if a.dim() != 6 {
            return Err(Error::DimensionMismatch {
                expected: 6,
                found: a.dim(),
            });
        }
        Ok(AlmostAbelian { a })
    }

    pub fn a(&self) -> &Endomorphism {
        &self.a
    }

    /// `[u, v]` for vectors of `R^7`.
    pub fn bracket(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let uh = u.rows(0, 6).into_owned();
        let vh = v.rows(0, 6).into_owned();
        let w = self.a.matrix() * (vh * u[6] - uh * v[6]);
        let mut out = DVector::zeros(7);
        out.rows_mut(0, 6).copy_from(&w);
        out
    }

    /// `|theta(A) omega|`, zero exactly when `A` lies in `sp(omega)`.
    pub fn sp_residual(&self, omega: &KForm) -> f64 {
        omega.theta(&self.a).max_abs()
    }

    /// Re-expresses the algebra in the basis given by the columns of `p`.
    /// `p` must map `h` into itself. Returns the new algebra; forms are
    /// transformed by `p`-pullback.
    pub fn change_basis(&self, p: &Endomorphism) -> Result<AlmostAbelian> {
        if p.dim() != 7 {
            return Err(Error::DimensionMismatch {
                expected: 7,
                found: p.dim(),
            });
        }
        let leak = (0..6).map(|j| p[(6, j)].abs()).fold(0.0, f64::max);
        if leak > STRUCTURE_TOL * p.amax() {
            return Err(Error::FrameNotAdapted("basis does not preserve the ideal".into()));
        }
        let c = p[(6, 6)];
        let ph = p.restrict(6);
        let a = ph.try_inverse()? * &self.a * &ph * c;
        AlmostAbelian::new(a)
    }
}

/// Splits a form on `g` as `a0 + a1 ^ e^7` with `a0`, `a1` forms on `h`.
pub fn split(a: &KForm) -> Result<(KForm, KForm)> {
    if a.dim() != 7 {
        return Err(Error::DimensionMismatch {
            expected: 7,
            found: a.dim(),
        });
    }
    let k = a.degree();
    let mut a0 = KForm::zero(6, k.min(6));
    let mut a1 = KForm::zero(6, k.saturating_sub(1));
    let seven = MultiIndex::new(&[7]).unwrap();
    for (mi, c) in a.terms() {
        if mi.contains(7) {
            a1.add_term(MultiIndex::from_bits(mi.bits() & !seven.bits()), c);
        } else {
            a0.add_term(mi, c);
        }
    }
    Ok((a0, a1))
}

/// Inverse of [`split`].
pub fn join(a0: &KForm, a1: &KForm) -> KForm {
    let e7 = KForm::covector(7, 7).unwrap();
    let mut out = a1.embed(7).unwrap().wedge(&e7);
    if a0.degree() == out.degree() {
        out += &a0.embed(7).unwrap();
    }
    out
}

/// `d a = e^7 ^ theta(A) a0` for `a = a0 + a1 ^ e^7`.
pub fn differential(alg: &AlmostAbelian, a: &KForm) -> Result<KForm> {
    let (a0, _) = split(a)?;
    let e7 = KForm::covector(7, 7).unwrap();
    if a.degree() == 7 {
        return Ok(KForm::zero(7, 7));
    }
    let mut out = e7.wedge(&a0.theta(alg.a()).embed(7)?);
    if out.degree() != a.degree() + 1 {
        out = KForm::zero(7, a.degree() + 1);
    }
    Ok(out)
}

/// Codifferential `(-1)^{n(k+1)+1} * d *`, the formal adjoint of `d` when
/// `tr A = 0`.
pub fn codifferential(alg: &AlmostAbelian, g: &Metric, vol: &KForm, a: &KForm) -> Result<KForm> {
    let k = a.degree();
    if k == 0 {
        return Ok(KForm::zero(7, 0));
    }
    let n = 7;
    let sign = if (n * (k + 1) + 1) % 2 == 0 { 1.0 } else { -1.0 };
    let inner = differential(alg, &g.hodge_star(vol, a)?)?;
    Ok(g.hodge_star(vol, &inner)? * sign)
}

/// Hodge Laplacian `d delta + delta d`.
pub fn laplacian(alg: &AlmostAbelian, g: &Metric, vol: &KForm, a: &KForm) -> Result<KForm> {
    let mut out = match a.degree() {
        0 => KForm::zero(7, 0),
        _ => differential(alg, &codifferential(alg, g, vol, a)?)?,
    };
    if a.degree() < 7 {
        out += &codifferential(alg, g, vol, &differential(alg, a)?)?;
    }
    Ok(out)
}

/// Laplacian for the metric and orientation of a G2-structure.
pub fn g2_laplacian(alg: &AlmostAbelian, g2: &G2Structure, a: &KForm) -> Result<KForm> {
    laplacian(alg, &g2.metric, &g2.volume, a)
}

#[derive(Clone, Debug)]
pub struct CoclosedReport {
    pub g2: G2Structure,
    /// Largest coefficient of `d * phi`.
    pub residual: f64,
    pub coclosed: bool,
}

pub fn coclosed_check(alg: &AlmostAbelian, phi: &KForm, tol: f64) -> Result<CoclosedReport> {
    let g2 = g2_from_phi(phi)?;
    let residual = differential(alg, &g2.phi_hat)?.max_abs();
    Ok(CoclosedReport {
        coclosed: residual <= tol * g2.phi_hat.max_abs().max(1.0) * alg.a().amax().max(1.0),
        g2,
        residual,
    })
}

/// Residual of `*_h theta(A) *_h = -(-1)^{k(6-k)} theta(B)` on `k`-forms of
/// `h`, where `B` is the `h`-adjoint of a traceless `A`.
pub fn adjoint_identity_check(a: &Endomorphism, su3: &Su3Structure, degree: usize) -> Result<f64> {
    let b = a.adjoint(&su3.h);
    let sign = if (degree * (6 - degree)) % 2 == 0 { -1.0 } else { 1.0 };
    let mut worst: f64 = 0.0;
    for mi in MultiIndex::all(6, degree) {
        let mut e = KForm::zero(6, degree);
        e.add_term(mi, 1.0);
        let lhs = su3.star(&su3.star(&e)?.theta(a))?;
        let rhs = e.theta(&b) * sign;
        worst = worst.max(lhs.distance(&rhs));
    }
    Ok(worst)
}

/// Rebases `(alg, phi)` so that `e_7` is a unit normal to `h`.
///
/// Keeps `e_1..e_6`, replaces `e_7` by the unit vector `g`-orthogonal to `h`
/// with positive `e_7` component, and returns the new algebra, the pulled
/// back 3-form and the basis change.
pub fn adapt_frame(alg: &AlmostAbelian, phi: &KForm) -> Result<(AlmostAbelian, KForm, Endomorphism)> {
    let g2 = g2_from_phi(phi)?;
    let u = g2.metric.inverse().column(6).into_owned();
    let scale = u[6].sqrt();
    let mut p = DMatrix::identity(7, 7);
    p.column_mut(6).copy_from(&(u / scale));
    let p = Endomorphism::new(p)?;
    let alg = alg.change_basis(&p)?;
    let phi = phi.pullback(&p)?;
    Ok((alg, phi, p))
}

/// The SU(3)-structure `(e_7 _| phi, -e_7 _| *phi)` on `h`.
///
/// Requires `e_7` to be a unit vector orthogonal to `h`; see [`adapt_frame`].
pub fn su3_reduce(phi: &KForm) -> Result<Su3Structure> {
    let g2 = g2_from_phi(phi)?;
    let g = g2.metric.matrix();
    let off = (0..6).map(|i| g[(i, 6)].abs()).fold(0.0, f64::max);
    if off > STRUCTURE_TOL || (g[(6, 6)] - 1.0).abs() > STRUCTURE_TOL {
        return Err(Error::FrameNotAdapted(format!(
            "e7 has g(e7, h) = {off:e}, |e7|^2 = {}",
            g[(6, 6)]
        )));
    }
    let omega = phi.contract_basis(7)?.restrict(6)?;
    let psi = (-g2.phi_hat.contract_basis(7)?).restrict(6)?;
    let su3 = su3_assemble(&omega, &psi)?;
    let (phi0, _) = split(phi)?;
    let mismatch = phi0.distance(&(-su3.j_star_psi()));
    if mismatch > STRUCTURE_TOL * phi.max_abs() {
        return Err(Error::FrameNotAdapted(format!("phi is not omega ^ e7 - J*psi ({mismatch:e})")));
    }
    Ok(su3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stable_forms::{standard_phi, standard_phi_hat, standard_su3};

    fn alg(rows: &[f64]) -> AlmostAbelian {
        AlmostAbelian::new(Endomorphism::from_row_slice(6, rows)).unwrap()
    }

    fn single(i: usize, j: usize, v: f64) -> AlmostAbelian {
        let mut rows = [0.0; 36];
        rows[i * 6 + j] = v;
        alg(&rows)
    }

    #[test]
    fn differential_of_covector() {
        let g = single(0, 1, 1.0);
        let e1 = KForm::covector(7, 1).unwrap();
        assert_eq!(differential(&g, &e1).unwrap(), KForm::parse(7, "e27").unwrap());
        let e7 = KForm::covector(7, 7).unwrap();
        assert!(differential(&g, &e7).unwrap().is_zero());
    }

    #[test]
    fn differential_matches_bracket() {
        let g = alg(&(0..36).map(|k| ((k * 7 % 11) as f64 - 5.0) / 3.0).collect::<Vec<_>>());
        for i in 1..=7 {
            let ei = KForm::covector(7, i).unwrap();
            let d = differential(&g, &ei).unwrap();
            for a in 1..=7 {
                for b in a + 1..=7 {
                    let mut u = DVector::zeros(7);
                    let mut v = DVector::zeros(7);
                    u[a - 1] = 1.0;
                    v[b - 1] = 1.0;
                    let br = g.bracket(&u, &v)[i - 1];
                    assert!((d.coefficient(&[a, b]).unwrap() + br).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn split_and_join_are_inverse() {
        let a = KForm::parse(7, "e127 + 2e135 - e347").unwrap();
        let (a0, a1) = split(&a).unwrap();
        assert_eq!(a0, KForm::parse(6, "2e135").unwrap());
        assert_eq!(a1, KForm::parse(6, "e12 - e34").unwrap());
        assert_eq!(join(&a0, &a1), a);
    }

    #[test]
    fn standard_reduction() {
        let s = su3_reduce(&standard_phi()).unwrap();
        let t = standard_su3();
        assert_eq!(s.omega, t.omega);
        assert_eq!(s.psi, t.psi);
    }

    #[test]
    fn unadapted_frames_are_rejected() {
        let p = Endomorphism::from_row_slice(
            7,
            &[
                1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.3, //
                0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0,
            ],
        );
        let phi = standard_phi().pullback(&p).unwrap();
        assert!(matches!(su3_reduce(&phi), Err(Error::FrameNotAdapted(_))));
        let g = single(0, 1, 1.0);
        let (g2, phi2, _) = adapt_frame(&g, &phi).unwrap();
        let s = su3_reduce(&phi2).unwrap();
        assert!(s.normalization_residual() < 1e-12);
        assert!((g2.a()[(0, 1)] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn coclosed_standard_structure() {
        let g = alg(&[
            0.0, 1.0, 0.0, 0.0, 0.0, 0.0, //
            1.0, 0.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, 0.0, 0.0, //
            0.0, 0.0, 0.0, 0.0, 0.0, 1.0, //
            0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
        ]);
        let r = coclosed_check(&g, &standard_phi(), 1e-12).unwrap();
        assert!(r.coclosed);
        assert!(r.g2.phi_hat.distance(&standard_phi_hat()) < 1e-14);
        let bad = single(0, 0, 1.0);
        assert!(!coclosed_check(&bad, &standard_phi(), 1e-12).unwrap().coclosed);
    }
}
