#![allow(dead_code)]

use g2coflow::almost_abelian::AlmostAbelian;
use g2coflow::multilinear::MultiIndex;
use g2coflow::normal_form::{model_symmetric, standard_j};
use g2coflow::stable_forms::{omega_matrix, standard_omega, standard_psi, su3_assemble, Su3Structure};
use g2coflow::{Endomorphism, KForm, Metric};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-scale..scale))
}

pub fn random_form(rng: &mut ChaCha8Rng, dim: usize, degree: usize) -> KForm {
    let mut f = KForm::zero(dim, degree);
    for mi in MultiIndex::all(dim, degree) {
        f.add_term(mi, rng.gen_range(-1.0..1.0));
    }
    f
}

pub fn random_metric(rng: &mut ChaCha8Rng, n: usize) -> Metric {
    let r = random_matrix(rng, n, 0.5);
    Metric::new(DMatrix::identity(n, n) + &r * r.transpose()).unwrap()
}

/// `A = Omega^{-1} M` with `M` symmetric lies in `sp(omega)`.
pub fn random_sp(rng: &mut ChaCha8Rng, omega: &KForm, scale: f64) -> Endomorphism {
    let r = random_matrix(rng, 6, scale);
    let m = (&r + r.transpose()) * 0.5;
    let w = omega_matrix(omega);
    let a = w.try_inverse().unwrap() * m;
    Endomorphism::new(a).unwrap()
}

/// A normalized SU(3)-structure pulled back from the standard one by a
/// random basis change near the identity.
pub fn random_su3(rng: &mut ChaCha8Rng) -> (Su3Structure, Endomorphism) {
    let p = Endomorphism::new(DMatrix::identity(6, 6) + random_matrix(rng, 6, 0.3)).unwrap();
    let omega = standard_omega().pullback(&p).unwrap();
    let psi = standard_psi().pullback(&p).unwrap();
    (su3_assemble(&omega, &psi).unwrap(), p)
}

/// Real form of the complex matrix `x + i y` for `J e_{2k-1} = e_{2k}`.
pub fn realify(x: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for k in 0..n {
            m[(2 * j, 2 * k)] = x[(j, k)];
            m[(2 * j, 2 * k + 1)] = -y[(j, k)];
            m[(2 * j + 1, 2 * k)] = y[(j, k)];
            m[(2 * j + 1, 2 * k + 1)] = x[(j, k)];
        }
    }
    m
}

/// A random element of `u(n)` as a real `2n x 2n` matrix.
pub fn random_u(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let r = random_matrix(rng, n, scale);
    let q = random_matrix(rng, n, scale);
    realify(&((&r - r.transpose()) * 0.5), &((&q + q.transpose()) * 0.5))
}

pub fn random_unitary(rng: &mut ChaCha8Rng) -> Endomorphism {
    Endomorphism::new(random_u(rng, 3, 2.0)).unwrap().exp()
}

/// A random element of `SU(3)`; it preserves `psi_0` as well as `omega_0`.
pub fn random_special_unitary(rng: &mut ChaCha8Rng) -> Endomorphism {
    let r = random_matrix(rng, 3, 2.0);
    let q = random_matrix(rng, 3, 2.0);
    let mut y = (&q + q.transpose()) * 0.5;
    let shift = y.trace() / 3.0;
    for i in 0..3 {
        y[(i, i)] -= shift;
    }
    Endomorphism::new(realify(&((&r - r.transpose()) * 0.5), &y)).unwrap().exp()
}

/// Shapes of normal matrices in `sp(omega_0)`.
#[derive(Clone, Copy, Debug)]
pub enum Shape {
    Distinct,
    PairEqual,
    AllEqual,
    OneZero,
    TwoZero,
    Skew,
}

pub const SHAPES: [Shape; 6] = [
    Shape::Distinct,
    Shape::PairEqual,
    Shape::AllEqual,
    Shape::OneZero,
    Shape::TwoZero,
    Shape::Skew,
];

/// `U (S_model + L) U^{-1}` with `L` commuting with the model and `U`
/// unitary for the standard structure.
pub fn random_normal(rng: &mut ChaCha8Rng, shape: Shape, theta: f64) -> Endomorphism {
    let mut s: Vec<f64> = (0..3).map(|_| rng.gen_range(0.2..2.0)).collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut l = DMatrix::zeros(6, 6);
    let real_rotation = |rng: &mut ChaCha8Rng, idx: &[usize], l: &mut DMatrix<f64>| {
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                let w = rng.gen_range(-1.5..1.5);
                for off in 0..2 {
                    l[(2 * i + off, 2 * j + off)] = w;
                    l[(2 * j + off, 2 * i + off)] = -w;
                }
            }
        }
    };
    let kernel = |rng: &mut ChaCha8Rng, idx: &[usize], l: &mut DMatrix<f64>| {
        let u = random_u(rng, idx.len(), 1.5);
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                for r in 0..2 {
                    for c in 0..2 {
                        l[(2 * i + r, 2 * j + c)] = u[(2 * a + r, 2 * b + c)];
                    }
                }
            }
        }
    };
    match shape {
        Shape::Distinct => {}
        Shape::PairEqual => {
            s[1] = s[0];
            real_rotation(rng, &[0, 1], &mut l);
        }
        Shape::AllEqual => {
            s = vec![s[0]; 3];
            real_rotation(rng, &[0, 1, 2], &mut l);
        }
        Shape::OneZero => {
            s[2] = 0.0;
            kernel(rng, &[2], &mut l);
        }
        Shape::TwoZero => {
            s[1] = 0.0;
            s[2] = 0.0;
            kernel(rng, &[1, 2], &mut l);
        }
        Shape::Skew => {
            s = vec![0.0; 3];
            kernel(rng, &[0, 1, 2], &mut l);
        }
    }
    let model = model_symmetric([s[0], s[1], s[2]], theta) + Endomorphism::new(l).unwrap();
    let u = random_unitary(rng);
    model.conjugate(&u.try_inverse().unwrap()).unwrap()
}

pub fn algebra(a: &Endomorphism) -> AlmostAbelian {
    AlmostAbelian::new(a.clone()).unwrap()
}

/// `A` of the nilpotent example: `e_2 -> e_1`, `e_4 -> e_3`, `e_6 -> e_5`.
pub fn nilpotent() -> Endomorphism {
    let mut m = DMatrix::zeros(6, 6);
    for i in 0..3 {
        m[(2 * i, 2 * i + 1)] = 1.0;
    }
    Endomorphism::new(m).unwrap()
}

/// `(b1, b2, b3, b4)` with `p = -b1 e^246 + b2 e^136 + b3 e^145 + b4 e^235`.
pub fn diagonal_coefficients(p: &KForm) -> [f64; 4] {
    let c = |s: &str| p.get(s.parse().unwrap());
    [-c("246"), c("136"), c("145"), c("235")]
}

/// Part of `p` outside the span of `-e^246, e^136, e^145, e^235`.
pub fn off_diagonal(p: &KForm) -> f64 {
    let keep = ["246", "136", "145", "235"];
    p.terms()
        .filter(|(mi, _)| !keep.contains(&mi.to_string().as_str()))
        .map(|(_, c)| c.abs())
        .fold(0.0, f64::max)
}

pub fn half_j() -> Endomorphism {
    standard_j() * 0.5
}
