//! Stable forms: the G2-structure of a definite 3-form in dimension seven
//! and the SU(3)-structure of a compatible pair `(omega, psi)` in dimension six.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::multilinear::{Endomorphism, KForm, Metric, MultiIndex};

pub fn standard_omega() -> KForm {
    KForm::parse(6, "e12 + e34 + e56").unwrap()
}

pub fn standard_psi() -> KForm {
    KForm::parse(6, "-e246 + e136 + e145 + e235").unwrap()
}

pub fn standard_phi() -> KForm {
    KForm::parse(7, "e127 + e347 + e567 + e135 - e146 - e236 - e245").unwrap()
}

pub fn standard_phi_hat() -> KForm {
    KForm::parse(7, "e1234 + e1256 + e3456 - e2467 + e1367 + e1457 + e2357").unwrap()
}

/// The G2-structure determined by a positive 3-form.
#[derive(Clone, Debug)]
pub struct G2Structure {
    pub phi: KForm,
    pub metric: Metric,
    /// Unit volume form; its sign is the orientation.
    pub volume: KForm,
    /// `*phi`.
    pub phi_hat: KForm,
}

impl G2Structure {
    pub fn orientation(&self) -> f64 {
        self.volume.top().signum()
    }

    pub fn star(&self, a: &KForm) -> Result<KForm> {
        self.metric.hodge_star(&self.volume, a)
    }
}

/// Metric, orientation and dual 4-form of a 3-form on `R^7`.
///
/// The symmetric form `b(u, v) vol_0 = (u _| phi) ^ (v _| phi) ^ phi / 6`
/// satisfies `b = sqrt(det g) g`, which fixes `g` and the orientation.
pub fn g2_from_phi(phi: &KForm) -> Result<G2Structure> {
    if phi.dim() != 7 {
        return Err(Error::DimensionMismatch {
            expected: 7,
            found: phi.dim(),
        });
    }
    if phi.degree() != 3 {
        return Err(Error::DegreeMismatch {
            expected: 3,
            found: phi.degree(),
        });
    }
    let contractions = (1..=7)
        .map(|i| phi.contract_basis(i))
        .collect::<Result<Vec<_>>>()?;
    let mut b = DMatrix::zeros(7, 7);
    for i in 0..7 {
        let left = contractions[i].wedge(phi);
        for j in i..7 {
            let v = left.wedge(&contractions[j]).top() / 6.0;
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    let det = b.determinant();
    let scale = b.amax().max(f64::MIN_POSITIVE).powi(7);
    if det.abs() <= 1e-12 * scale || !det.is_finite() {
        return Err(Error::NotStable);
    }
    let root = det.signum() * det.abs().powf(1.0 / 9.0);
    let metric = Metric::new(b / root).map_err(|_| Error::NotPositive)?;
    let volume = root * KForm::volume(7);
    let phi_hat = metric.hodge_star(&volume, phi)?;
    Ok(G2Structure {
        phi: phi.clone(),
        metric,
        volume,
        phi_hat,
    })
}

fn require(f: &KForm, dim: usize, degree: usize) -> Result<()> {
    if f.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: f.dim(),
        });
    }
    if f.degree() != degree {
        return Err(Error::DegreeMismatch {
            expected: degree,
            found: f.degree(),
        });
    }
    Ok(())
}

/// The operator `K_psi` with `K(v)^j vol_0 = (v _| psi) ^ psi ^ e^j`.
pub fn k_operator(psi: &KForm) -> Result<Endomorphism> {
    require(psi, 6, 3)?;
    let top = MultiIndex::full(6);
    let mut k = DMatrix::zeros(6, 6);
    for i in 0..6 {
        let five = psi.contract_basis(i + 1)?.wedge(psi);
        for (mi, c) in five.terms() {
            let j = mi.complement(6);
            let slot = j.slots().next().unwrap();
            let sign = mi.wedge_sign(j).unwrap();
            debug_assert_eq!(mi.union(j), top);
            k[(slot, i)] += sign * c;
        }
    }
    Endomorphism::new(k)
}

/// `tr(K_psi^2) / 6`; negative exactly when `psi` is the imaginary part of
/// a complex volume form.
pub fn lambda_of(psi: &KForm) -> Result<f64> {
    let k = k_operator(psi)?;
    Ok((&k * &k).trace() / 6.0)
}

/// The almost complex structure `K_psi / sqrt(-lambda)` of a negative 3-form.
pub fn complex_structure(psi: &KForm) -> Result<Endomorphism> {
    let k = k_operator(psi)?;
    let lambda = (&k * &k).trace() / 6.0;
    if !(lambda < 0.0) {
        return Err(Error::NotNegative(lambda));
    }
    Ok(k * (1.0 / (-lambda).sqrt()))
}

/// Matrix of `omega(e_i, e_j)`.
pub fn omega_matrix(omega: &KForm) -> DMatrix<f64> {
    let n = omega.dim();
    let mut m = DMatrix::zeros(n, n);
    for (mi, c) in omega.terms() {
        let mut slots = mi.slots();
        let (i, j) = (slots.next().unwrap(), slots.next().unwrap());
        m[(i, j)] = c;
        m[(j, i)] = -c;
    }
    m
}

/// The bilinear form `h(u, v) = omega(u, J v)`.
pub fn hermitian_metric(omega: &KForm, j: &Endomorphism) -> Result<Metric> {
    let h = omega_matrix(omega) * j.matrix();
    let scale = h.amax().max(f64::MIN_POSITIVE);
    if (&h - h.transpose()).amax() > 1e-8 * scale {
        return Err(Error::NotCompatible((&h - h.transpose()).amax()));
    }
    Metric::new(h).map_err(|_| Error::NotPositive)
}

/// An SU(3)-structure `(omega, psi)` on `R^6` with its derived data.
#[derive(Clone, Debug)]
pub struct Su3Structure {
    pub omega: KForm,
    pub psi: KForm,
    pub j: Endomorphism,
    pub h: Metric,
    pub lambda: f64,
}

/// Relative tolerance of the compatibility and normalization checks.
pub const SU3_TOL: f64 = 1e-9;

impl Su3Structure {
    /// `J^* psi`, equal to minus the real part of the complex volume form.
    pub fn j_star_psi(&self) -> KForm {
        self.psi.pullback(&self.j).expect("J is invertible")
    }

    /// Residual of `2 omega^3 = 3 psi ^ J^* psi`, relative to `omega^3`.
    pub fn normalization_residual(&self) -> f64 {
        let w3 = self.omega.wedge(&self.omega).wedge(&self.omega).top();
        let p = self.psi.wedge(&self.j_star_psi()).top();
        (2.0 * w3 - 3.0 * p).abs() / w3.abs()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalization_residual() <= SU3_TOL
    }

    /// `omega^3 / 6`.
    pub fn volume(&self) -> KForm {
        self.omega.wedge(&self.omega).wedge(&self.omega) * (1.0 / 6.0)
    }

    pub fn star(&self, a: &KForm) -> Result<KForm> {
        let vol = self.volume();
        let unit = vol.top().signum() * self.h.det().sqrt() * KForm::volume(6);
        self.h.hodge_star(&unit, a)
    }

    /// The coclosed-type pair `phi = omega ^ e^7 - J^* psi`,
    /// `phi_hat = omega^2 / 2 + psi ^ e^7` on `R^7`.
    pub fn lift(&self) -> (KForm, KForm) {
        let e7 = KForm::covector(7, 7).unwrap();
        let omega = self.omega.embed(7).unwrap();
        let psi = self.psi.embed(7).unwrap();
        let jpsi = self.j_star_psi().embed(7).unwrap();
        let phi = omega.wedge(&e7) - jpsi;
        let phi_hat = omega.wedge(&omega) * 0.5 + psi.wedge(&e7);
        (phi, phi_hat)
    }
}

/// Validates `(omega, psi)` and computes `J`, `h` and `lambda`.
///
/// The pair need not be normalized; see [`Su3Structure::is_normalized`].
pub fn su3_assemble(omega: &KForm, psi: &KForm) -> Result<Su3Structure> {
    require(omega, 6, 2)?;
    require(psi, 6, 3)?;
    let w3 = omega.wedge(omega).wedge(omega).top();
    let wscale = omega.max_abs().powi(3).max(f64::MIN_POSITIVE);
    if w3.abs() <= 1e-12 * wscale {
        return Err(Error::DegenerateOmega);
    }
    let mixed = omega.wedge(psi).max_abs();
    if mixed > SU3_TOL * omega.max_abs() * psi.max_abs() {
        return Err(Error::NotCompatible(mixed));
    }
    let k = k_operator(psi)?;
    let lambda = (&k * &k).trace() / 6.0;
    if !(lambda < 0.0) {
        return Err(Error::NotNegative(lambda));
    }
    let j = k * (1.0 / (-lambda).sqrt());
    let h = hermitian_metric(omega, &j)?;
    Ok(Su3Structure {
        omega: omega.clone(),
        psi: psi.clone(),
        j,
        h,
        lambda,
    })
}

/// The standard structure `(e^12 + e^34 + e^56, -e^246 + e^136 + e^145 + e^235)`.
pub fn standard_su3() -> Su3Structure {
    su3_assemble(&standard_omega(), &standard_psi()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_phi_gives_euclidean_metric() {
        let g2 = g2_from_phi(&standard_phi()).unwrap();
        assert!((g2.metric.matrix() - DMatrix::identity(7, 7)).amax() < 1e-14);
        assert_eq!(g2.orientation(), 1.0);
        assert!(g2.phi_hat.distance(&standard_phi_hat()) < 1e-14);
        assert!((g2.metric.norm(&standard_phi()).unwrap() - 7f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn reversed_phi_reverses_orientation() {
        let g2 = g2_from_phi(&(-standard_phi())).unwrap();
        assert!((g2.metric.matrix() - DMatrix::identity(7, 7)).amax() < 1e-14);
        assert_eq!(g2.orientation(), -1.0);
    }

    #[test]
    fn degenerate_three_forms_are_rejected() {
        let phi = KForm::parse(7, "e123").unwrap();
        assert!(matches!(g2_from_phi(&phi), Err(Error::NotStable)));
    }

    #[test]
    fn standard_su3_data() {
        let s = standard_su3();
        assert_eq!(s.lambda, -4.0);
        let mut j = DMatrix::zeros(6, 6);
        for i in 0..3 {
            j[(2 * i + 1, 2 * i)] = 1.0;
            j[(2 * i, 2 * i + 1)] = -1.0;
        }
        assert!((s.j.matrix() - &j).amax() < 1e-15);
        assert!((s.h.matrix() - DMatrix::identity(6, 6)).amax() < 1e-15);
        let jpsi = KForm::parse(6, "-e135 + e146 + e236 + e245").unwrap();
        assert!(s.j_star_psi().distance(&jpsi) < 1e-15);
        assert!(s.star(&s.psi).unwrap().distance(&jpsi) < 1e-15);
        assert!(s.normalization_residual() < 1e-15);
        let (phi, phi_hat) = s.lift();
        assert_eq!(phi, standard_phi());
        assert_eq!(phi_hat, standard_phi_hat());
    }

    #[test]
    fn positive_three_forms_are_not_negative() {
        let psi = KForm::parse(6, "e135 - e146 - e236 - e245").unwrap();
        assert_eq!(lambda_of(&psi).unwrap(), -4.0);
        let split = KForm::parse(6, "e123 + e456").unwrap();
        let l = lambda_of(&split).unwrap();
        assert!(l > 0.0);
        assert!(matches!(complex_structure(&split), Err(Error::NotNegative(_))));
    }

    #[test]
    fn incompatible_pairs_are_rejected() {
        let psi = KForm::parse(6, "-e246 + e136 + e145 + e235 + e125").unwrap();
        assert!(matches!(
            su3_assemble(&standard_omega(), &psi),
            Err(Error::NotCompatible(_))
        ));
        let omega = KForm::parse(6, "e12 + e34").unwrap();
        assert!(matches!(su3_assemble(&omega, &standard_psi()), Err(Error::DegenerateOmega)));
    }

    #[test]
    fn reversed_omega_gives_negative_metric() {
        let omega = -standard_omega();
        assert!(matches!(su3_assemble(&omega, &standard_psi()), Err(Error::NotPositive)));
    }
}
