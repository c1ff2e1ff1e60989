//! Normal forms of `A` in `sp(omega)` relative to an SU(3)-structure.
//!
//! `A = S + L` splits into its `h`-symmetric part `S` (anticommuting with
//! `J`) and `h`-skew part `L` (in `u(3)`). There is an adapted unitary frame
//! `(e_1, Je_1, e_2, Je_2, e_3, Je_3)` in which `omega` and `psi` are
//! standard and `S e_i = s_i (cos(theta) e_i + sin(theta) J e_i)` with
//! `s_1 >= s_2 >= s_3 >= 0` and a common angle `theta`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::multilinear::Endomorphism;
use crate::stable_forms::{standard_omega, standard_psi, Su3Structure, SU3_TOL};

/// `(S, L)` with `S = (A + A^*) / 2`, `L = (A - A^*) / 2` for the metric `h`.
pub fn split(a: &Endomorphism, su3: &Su3Structure) -> (Endomorphism, Endomorphism) {
    let adj = a.adjoint(&su3.h);
    ((a + &adj) * 0.5, (a - &adj) * 0.5)
}

/// `(|SJ + JS|, |LJ - JL|)`.
pub fn anticommutation_check(s: &Endomorphism, l: &Endomorphism, j: &Endomorphism) -> (f64, f64) {
    let anti = (s * j + j * s).amax();
    (anti, l.commutator(j).amax())
}

/// `l = -tr(J L) / 2`, so that `-theta(L)^2 psi = l^2 psi`.
pub fn l_invariant(l: &Endomorphism, j: &Endomorphism) -> f64 {
    -0.5 * (j * l).trace()
}

/// The standard complex structure `J e_{2i-1} = e_{2i}`.
pub fn standard_j() -> Endomorphism {
    let mut m = DMatrix::zeros(6, 6);
    for i in 0..3 {
        m[(2 * i + 1, 2 * i)] = 1.0;
        m[(2 * i, 2 * i + 1)] = -1.0;
    }
    Endomorphism::new(m).unwrap()
}

/// The symmetric model `S` with column `2i` equal to `s_i (cos theta, sin theta)`.
pub fn model_symmetric(s: [f64; 3], theta: f64) -> Endomorphism {
    let (a, b) = (theta.cos(), theta.sin());
    let mut m = DMatrix::zeros(6, 6);
    for i in 0..3 {
        m[(2 * i, 2 * i)] = a * s[i];
        m[(2 * i + 1, 2 * i)] = b * s[i];
        m[(2 * i, 2 * i + 1)] = b * s[i];
        m[(2 * i + 1, 2 * i + 1)] = -a * s[i];
    }
    Endomorphism::new(m).unwrap()
}

#[derive(Clone, Debug, Serialize)]
pub struct NormalFormData {
    pub s: [f64; 3],
    pub theta: f64,
    pub l: f64,
    /// `l_j` with `L e_j = l_j J e_j`, present when `L` preserves every line.
    #[serde(rename = "lPerLine")]
    pub l_per_line: Option<[f64; 3]>,
    /// `L` restricted to the span of the `e_j` with equal positive `s_j`,
    /// one block per distinct value.
    #[serde(rename = "lBlocks")]
    pub l_blocks: Vec<Endomorphism>,
    /// Columns are the adapted frame vectors in input coordinates.
    pub frame: Endomorphism,
    /// `S` and `L` in the adapted frame.
    #[serde(rename = "sFrame")]
    pub s_frame: Endomorphism,
    #[serde(rename = "lFrame")]
    pub l_frame: Endomorphism,
    pub normal: bool,
    /// Largest deviation of `omega`, `psi`, `J` and `S` in the frame from
    /// their models.
    pub residual: f64,
}

impl NormalFormData {
    /// `A` rebuilt from `(s, theta, L)` and the frame.
    pub fn reconstruct(&self) -> Result<Endomorphism> {
        let model = model_symmetric(self.s, self.theta) + &self.l_frame;
        let f = &self.frame;
        Ok(f * model * f.try_inverse()?)
    }
}

/// Adapted frame for a normal `A` in `sp(omega)`.
pub fn adapted_frame(a: &Endomorphism, su3: &Su3Structure) -> Result<NormalFormData> {
    check_input(a, su3)?;
    let (s, l) = split(a, su3);
    let comm = s.commutator(&l).amax();
    let scale = a.amax().max(f64::MIN_POSITIVE);
    if comm > 1e-9 * scale * scale {
        return Err(Error::NotNormal(comm));
    }
    fit_frame(&s, &l, su3)
}

/// Adapted frame for the symmetric part only; `A` need not be normal.
pub fn symmetric_frame(a: &Endomorphism, su3: &Su3Structure) -> Result<NormalFormData> {
    check_input(a, su3)?;
    let (s, l) = split(a, su3);
    fit_frame(&s, &l, su3)
}

fn check_input(a: &Endomorphism, su3: &Su3Structure) -> Result<()> {
    if a.dim() != 6 {
        return Err(Error::DimensionMismatch {
            expected: 6,
            found: a.dim(),
        });
    }
    let res = su3.omega.theta(a).max_abs();
    if res > 1e-10 * a.amax().max(1.0) {
        return Err(Error::NotInSp(res));
    }
    let norm = su3.normalization_residual();
    if norm > SU3_TOL {
        return Err(Error::NotNormalized(norm));
    }
    Ok(())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn sorted_eigen(m: &DMatrix<f64>, descending: bool) -> Vec<(f64, DVector<f64>)> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .zip(eig.eigenvectors.column_iter())
        .map(|(&v, c)| (v, c.into_owned()))
        .collect();
    pairs.sort_by(|x, y| if descending { y.0.total_cmp(&x.0) } else { x.0.total_cmp(&y.0) });
    pairs
}

fn fit_frame(s: &Endomorphism, l: &Endomorphism, su3: &Su3Structure) -> Result<NormalFormData> {
    let chol = su3.h.matrix().clone().cholesky().ok_or(Error::NotPositive)?;
    let c = chol.l().transpose().try_inverse().ok_or(Error::Singular)?;
    let c = Endomorphism::new(c)?;
    let sc = s.conjugate(&c)?;
    let lc = l.conjugate(&c)?;
    let jc = su3.j.conjugate(&c)?;

    let eig = sorted_eigen(&sc, true);
    let smax = eig.iter().fold(0.0f64, |m, e| m.max(e.0.abs()));
    let tol = 1e-8 * smax.max(1.0);
    let mut vectors: Vec<DVector<f64>> = Vec::with_capacity(6);
    let mut svals = Vec::with_capacity(3);
    for (val, vec) in eig.iter().filter(|e| e.0 > tol) {
        vectors.push(vec.clone());
        vectors.push(jc.matrix() * vec);
        svals.push(*val);
    }
    if svals.len() > 3 {
        return Err(Error::FrameNotAdapted("S does not anticommute with J".into()));
    }
    let kernel: Vec<DVector<f64>> = eig.iter().filter(|e| e.0.abs() <= tol).map(|e| e.1.clone()).collect();
    if kernel.len() + 2 * svals.len() != 6 {
        return Err(Error::FrameNotAdapted("spectrum of S is not symmetric".into()));
    }
    if !kernel.is_empty() {
        let w = DMatrix::from_columns(&kernel);
        let jl = jc.matrix() * lc.matrix();
        let restricted = w.transpose() * jl * &w;
        for (_, v) in sorted_eigen(&restricted, false) {
            if svals.len() == 3 {
                break;
            }
            let mut e = &w * v;
            for u in &vectors {
                e -= u * u.dot(&e);
            }
            let n = e.norm();
            if n > 0.5 {
                e /= n;
                let je = jc.matrix() * &e;
                vectors.push(e);
                vectors.push(je);
                svals.push(0.0);
            }
        }
        if svals.len() != 3 {
            return Err(Error::FrameNotAdapted("kernel of S is not J-invariant".into()));
        }
    }
    let candidate = Endomorphism::new(c.matrix() * DMatrix::from_columns(&vectors))?;

    let psi1 = su3.psi.pullback(&candidate)?;
    let re1 = -psi1.pullback(&standard_j())?;
    let idx = "135".parse().unwrap();
    let u = Complex64::new(re1.get(idx), psi1.get(idx));
    if (u.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::FrameNotAdapted(format!("|Psi(e1, e3, e5)| = {}", u.norm())));
    }
    let w = u.conj().powf(1.0 / 3.0);
    let q = Endomorphism::identity(6) * w.re + &su3.j * w.im;
    let frame = q * candidate;

    let finv = frame.try_inverse()?;
    let s_frame = Endomorphism::new(finv.matrix() * s.matrix() * frame.matrix())?;
    let l_frame = Endomorphism::new(finv.matrix() * l.matrix() * frame.matrix())?;
    let s_arr = [svals[0], svals[1], svals[2]];
    let theta = if s_arr[0] > tol {
        (s_frame[(1, 0)] / s_arr[0]).atan2(s_frame[(0, 0)] / s_arr[0]).rem_euclid(std::f64::consts::TAU)
    } else {
        0.0
    };

    let j_frame = su3.j.conjugate(&frame)?;
    let residual = [
        su3.omega.pullback(&frame)?.distance(&standard_omega()),
        su3.psi.pullback(&frame)?.distance(&standard_psi()),
        (j_frame.matrix() - standard_j().matrix()).amax(),
        (s_frame.matrix() - model_symmetric(s_arr, theta).matrix()).amax(),
    ]
    .into_iter()
    .fold(0.0, f64::max);

    let lscale = l_frame.amax().max(1.0);
    let mut lines = [0.0; 3];
    let mut diagonal = true;
    for i in 0..3 {
        lines[i] = l_frame[(2 * i + 1, 2 * i)];
        for j in 0..6 {
            for k in 0..6 {
                let inside = j / 2 == i && k / 2 == i;
                if (k / 2 == i || j / 2 == i) && !inside && l_frame[(j, k)].abs() > 1e-9 * lscale {
                    diagonal = false;
                }
            }
        }
    }
    let mut l_blocks = Vec::new();
    let mut start = 0;
    while start < 3 && s_arr[start] > tol {
        let mut end = start + 1;
        while end < 3 && (s_arr[end] - s_arr[start]).abs() <= 1e-7 * s_arr[start].max(1.0) {
            end += 1;
        }
        let m = end - start;
        let mut block = DMatrix::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                block[(a, b)] = l_frame[(2 * (start + a), 2 * (start + b))];
            }
        }
        l_blocks.push(Endomorphism::new(block)?);
        start = end;
    }

    Ok(NormalFormData {
        s: s_arr,
        theta,
        l: l_invariant(l, &su3.j),
        l_per_line: diagonal.then_some(lines),
        l_blocks,
        frame,
        s_frame,
        l_frame,
        normal: s.commutator(l).amax() <= 1e-9 * (s.amax() + l.amax()).max(f64::MIN_POSITIVE).powi(2),
        residual,
    })
}
