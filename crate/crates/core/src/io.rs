//! Input files and deterministic output.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::almost_abelian::{adapt_frame, su3_reduce, AlmostAbelian};
use crate::coflow::Adjoint;
use crate::error::{Error, Result};
use crate::multilinear::{Endomorphism, KForm};
use crate::stable_forms::{standard_phi, Su3Structure};

/// A form given either as a JSON object or as an expression such as
/// `"e127 + e347 - e146"`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum FormSpec {
    Json(KForm),
    Expr(String),
}

impl FormSpec {
    pub fn resolve(&self, dim: usize) -> Result<KForm> {
        let f = match self {
            FormSpec::Json(f) => f.clone(),
            FormSpec::Expr(s) => KForm::parse(dim, s)?,
        };
        if f.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: f.dim(),
            });
        }
        Ok(f)
    }
}

fn square(rows: &[Vec<f64>], n: usize, what: &str) -> Result<Endomorphism> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Parse(format!("{what} must be a {n}x{n} array")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parse(format!("{what} has a non-finite entry")));
    }
    Endomorphism::new(DMatrix::from_row_slice(n, n, &flat))
}

/// `{"A": 6x6 rows, "phi": form (default standard), "basis": 7x7 rows}`.
///
/// When `basis` is present its columns are new basis vectors, which must
/// map `span(e_1..e_6)` into itself.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub phi: Option<FormSpec>,
    #[serde(default)]
    pub basis: Option<Vec<Vec<f64>>>,
}

/// An algebra with a 3-form, rebased so that `e_7` is a unit normal to `h`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub alg: AlmostAbelian,
    pub phi: KForm,
    pub su3: Su3Structure,
    /// Columns are the working basis in the coordinates of the input file.
    pub basis: Endomorphism,
}

impl AlgebraFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Parses everything that can be parsed without validating geometry.
    pub fn parts(&self) -> Result<(Endomorphism, KForm, Option<Endomorphism>)> {
        let a = square(&self.a, 6, "A")?;
        let phi = match &self.phi {
            Some(spec) => spec.resolve(7)?,
            None => standard_phi(),
        };
        if phi.degree() != 3 {
            return Err(Error::Parse(format!("phi has degree {}, expected 3", phi.degree())));
        }
        let basis = self.basis.as_deref().map(|b| square(b, 7, "basis")).transpose()?;
        Ok((a, phi, basis))
    }

    pub fn problem(&self) -> Result<Problem> {
        let (a, phi, basis) = self.parts()?;
        let mut alg = AlmostAbelian::new(a)?;
        let mut phi = phi;
        let mut total = Endomorphism::identity(7);
        if let Some(p) = basis {
            alg = alg.change_basis(&p)?;
            phi = phi.pullback(&p)?;
            total = p;
        }
        let (alg, phi, p) = adapt_frame(&alg, &phi)?;
        let su3 = su3_reduce(&phi)?;
        Ok(Problem {
            alg,
            phi,
            su3,
            basis: total * p,
        })
    }
}

/// One run of a parameter sweep.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRun {
    pub label: String,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub phi: Option<FormSpec>,
    #[serde(default)]
    pub t0: f64,
    pub t1: f64,
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub adjoint: Option<Adjoint>,
}

impl<'de> Deserialize<'de> for Adjoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match String::deserialize(d)?.as_str() {
            "evolving" => Ok(Adjoint::Evolving),
            "frozen" => Ok(Adjoint::Frozen),
            other => Err(serde::de::Error::custom(format!("unknown adjoint mode {other:?}"))),
        }
    }
}

/// `{"runs": [{"label", "A", "phi"?, "t0"?, "t1", "tol"?, "adjoint"?}, ...]}`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    pub runs: Vec<SweepRun>,
}

impl SweepPlan {
    pub fn parse(text: &str) -> Result<Self> {
        let plan: SweepPlan = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut seen = std::collections::BTreeSet::new();
        for run in &plan.runs {
            let ok = !run.label.is_empty()
                && run.label.len() <= 64
                && run.label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
            if !ok {
                return Err(Error::Parse(format!("invalid label {:?}", run.label)));
            }
            if !seen.insert(run.label.clone()) {
                return Err(Error::Parse(format!("duplicate label {:?}", run.label)));
            }
            if !run.t0.is_finite() || !run.t1.is_finite() {
                return Err(Error::Parse(format!("non-finite time range in {:?}", run.label)));
            }
            if let Some(tol) = run.tol {
                if !(tol > 0.0 && tol < 1.0) {
                    return Err(Error::Parse(format!("tolerance {tol} outside (0, 1)")));
                }
            }
        }
        Ok(plan)
    }
}

impl SweepRun {
    pub fn algebra_file(&self) -> AlgebraFile {
        AlgebraFile {
            a: self.a.clone(),
            phi: self.phi.clone(),
            basis: None,
        }
    }
}

struct Digits17;

impl serde_json::ser::Formatter for Digits17 {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, w: &mut W, value: f64) -> std::io::Result<()> {
        write!(w, "{value:.16e}")
    }
}

/// JSON with every float printed to 17 significant digits. Field order
/// follows declaration order, so output is byte-for-byte reproducible.
pub fn to_json_17<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const NILPOTENT: &str = r#"{"A": [[0,1,0,0,0,0],[0,0,0,0,0,0],[0,0,0,1,0,0],[0,0,0,0,0,0],[0,0,0,0,0,1],[0,0,0,0,0,0]]}"#;

    #[test]
    fn algebra_file_defaults_to_standard_phi() {
        let p = AlgebraFile::parse(NILPOTENT).unwrap().problem().unwrap();
        assert_eq!(p.phi, standard_phi());
        assert_eq!(p.su3.lambda, -4.0);
    }

    #[test]
    fn algebra_file_accepts_expressions() {
        let text = r#"{"A": [[0,0,0,0,0,0],[0,0,0,0,0,0],[0,0,0,0,0,0],[0,0,0,0,0,0],[0,0,0,0,0,0],[0,0,0,0,0,0]],
            "phi": "e127 + e347 + e567 + e135 - e146 - e236 - e245"}"#;
        let p = AlgebraFile::parse(text).unwrap().problem().unwrap();
        assert_eq!(p.phi, standard_phi());
    }

    #[test]
    fn malformed_inputs() {
        assert!(AlgebraFile::parse(r#"{"A": [[1,2],[3,4]]}"#).unwrap().parts().is_err());
        assert!(AlgebraFile::parse(r#"{"B": 1}"#).is_err());
        assert!(AlgebraFile::parse("[").is_err());
        assert!(SweepPlan::parse(r#"{"runs": [{"label": "../x", "A": [], "t1": 1}]}"#).is_err());
        assert!(SweepPlan::parse(r#"{"runs": [{"label": "x", "A": [], "t1": 1, "extra": 0}]}"#).is_err());
    }

    #[test]
    fn sweep_plan() {
        let text = r#"{"runs": [{"label": "a", "A": [[0,0,0,0,0,0],[0,0,0,0,0,0],[0,0,0,0,0,0],[0,0,0,0,0,0],[0,0,0,0,0,0],[0,0,0,0,0,0]], "t1": 0.5, "adjoint": "frozen"}]}"#;
        let plan = SweepPlan::parse(text).unwrap();
        assert_eq!(plan.runs[0].adjoint, Some(Adjoint::Frozen));
        assert!(plan.runs[0].algebra_file().problem().is_ok());
    }

    #[test]
    fn seventeen_digits() {
        let s = to_json_17(&vec![0.1, -2.0]).unwrap();
        assert_eq!(s, "[1.0000000000000001e-1,-2.0000000000000000e0]");
        let back: Vec<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![0.1, -2.0]);
    }
}
