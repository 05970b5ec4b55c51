//! JSON input files and reports.
//!
//! Inputs are tagged by `"form"`:
//!
//! - `coeffs`: `{"p": [p0, ...], "q": [q0, ..., 1]}` in ascending powers. With
//!   `"z_form": true` the pair is a generating function `p~ / q~` in `z`.
//! - `partial_fractions`: `{"terms": [{"pole": {"re", "im"}, "mult", "coeffs": [...]}]}`,
//!   complex poles listed once with positive `im`.
//! - `jordan`: `{"beta": [...], "blocks": [{"re", "im", "mult"}]}`, the transform
//!   `-beta J (sI - J)^{-1} 1'` of a real Jordan form given block by block.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::discrete::GeneratingFunction;
use crate::error::{PhError, Result};
use crate::jordan::{lst_from_jordan, JordanBlock, ProblemData, RealJordanForm};
use crate::poly::{
    validate_lst, ComplexPair, PartialFractions, PoleMultiset, Polynomial, RationalLst, RealPole,
    C64,
};

pub const SCHEMA: &str = "phmin/1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Complex {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl From<Complex> for C64 {
    fn from(c: Complex) -> Self {
        C64::new(c.re, c.im)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfTerm {
    pub pole: Complex,
    pub mult: usize,
    pub coeffs: Vec<Complex>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub mult: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum InputFile {
    Coeffs {
        p: Vec<f64>,
        q: Vec<f64>,
        #[serde(default)]
        z_form: bool,
    },
    PartialFractions {
        terms: Vec<PfTerm>,
    },
    Jordan {
        beta: Vec<f64>,
        blocks: Vec<BlockSpec>,
    },
}

/// A parsed input, ready for the solver.
#[derive(Debug, Clone)]
pub enum Input {
    /// A continuous transform. `problem` is set when the file fixes `J` and `beta` itself.
    Continuous {
        lst: RationalLst,
        problem: Option<ProblemData>,
    },
    Discrete(GeneratingFunction),
}

pub fn parse_input(text: &str) -> Result<Input> {
    let file: InputFile = serde_json::from_str(text).map_err(|e| {
        // errors inside the tagged body carry no position
        if e.line() == 0 {
            PhError::InvalidInput(e.to_string())
        } else {
            PhError::InvalidInput(format!("line {}, column {}: {e}", e.line(), e.column()))
        }
    })?;
    resolve(file)
}

pub fn load_input(path: &Path) -> Result<Input> {
    let text = fs::read_to_string(path)
        .map_err(|e| PhError::InvalidInput(format!("{}: {e}", path.display())))?;
    parse_input(&text)
}

fn resolve(file: InputFile) -> Result<Input> {
    match file {
        InputFile::Coeffs { p, q, z_form: true } => Ok(Input::Discrete(GeneratingFunction::new(
            Polynomial::new(p),
            Polynomial::new(q),
        ))),
        InputFile::Coeffs {
            p,
            q,
            z_form: false,
        } => Ok(Input::Continuous {
            lst: RationalLst::from_coeffs(Polynomial::new(p), Polynomial::new(q))?,
            problem: None,
        }),
        InputFile::PartialFractions { terms } => {
            let (poles, pf) = pf_from_terms(&terms)?;
            Ok(Input::Continuous {
                lst: RationalLst::from_partial_fractions(poles, pf)?,
                problem: None,
            })
        }
        InputFile::Jordan { beta, blocks } => {
            let blocks = blocks
                .iter()
                .enumerate()
                .map(|(k, b)| {
                    if b.mult == 0 {
                        return Err(PhError::InvalidInput(format!(
                            "blocks[{k}].mult must be positive"
                        )));
                    }
                    Ok(if b.im == 0.0 {
                        JordanBlock::Real {
                            lambda: b.re,
                            m: b.mult,
                        }
                    } else {
                        JordanBlock::Complex {
                            mu: b.re,
                            omega: b.im,
                            m: b.mult,
                        }
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let jordan = RealJordanForm::from_blocks(blocks)?;
            let lst = lst_from_jordan(&beta, &jordan)?;
            let problem = ProblemData::new(jordan, beta)?;
            Ok(Input::Continuous {
                lst,
                problem: Some(problem),
            })
        }
    }
}

fn pf_from_terms(terms: &[PfTerm]) -> Result<(PoleMultiset, PartialFractions)> {
    let mut real = Vec::new();
    let mut complex = Vec::new();
    for (k, t) in terms.iter().enumerate() {
        if t.mult == 0 || t.coeffs.len() != t.mult {
            return Err(PhError::InvalidInput(format!(
                "terms[{k}]: mult is {} but {} coefficients are given",
                t.mult,
                t.coeffs.len()
            )));
        }
        if t.pole.im == 0.0 {
            if let Some(c) = t.coeffs.iter().find(|c| c.im != 0.0) {
                return Err(PhError::InvalidInput(format!(
                    "terms[{k}]: real pole with complex coefficient {}",
                    C64::from(*c)
                )));
            }
            real.push((
                RealPole {
                    value: t.pole.re,
                    mult: t.mult,
                },
                t.coeffs.iter().map(|c| c.re).collect::<Vec<_>>(),
            ));
        } else if t.pole.im > 0.0 {
            complex.push((
                ComplexPair {
                    re: t.pole.re,
                    im: t.pole.im,
                    mult: t.mult,
                },
                t.coeffs.iter().map(|&c| C64::from(c)).collect::<Vec<_>>(),
            ));
        } else {
            return Err(PhError::InvalidInput(format!(
                "terms[{k}]: list complex poles once, with positive im"
            )));
        }
    }
    // same order as PoleMultiset, so the coefficient lists line up with its poles
    real.sort_by(|a, b| b.0.value.total_cmp(&a.0.value));
    complex.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(a.0.im.total_cmp(&b.0.im)));
    let (real_poles, real_coeffs): (Vec<_>, Vec<_>) = real.into_iter().unzip();
    let (complex_poles, complex_coeffs): (Vec<_>, Vec<_>) = complex.into_iter().unzip();
    let poles = PoleMultiset::new(real_poles, complex_poles)?;
    Ok((
        poles,
        PartialFractions {
            real: real_coeffs,
            complex: complex_coeffs,
        },
    ))
}

/// Square matrix from a JSON array of rows.
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(text).map_err(|e| {
        PhError::InvalidInput(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(PhError::InvalidInput(
            "matrix must be square and non-empty".into(),
        ));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| PhError::InvalidInput(format!("{}: {e}", path.display())))?;
    parse_matrix(&text)
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Continuous transform written back in the `coeffs` form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstFile {
    pub schema: String,
    pub form: String,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl LstFile {
    pub fn new(lst: &RationalLst) -> Self {
        let mut p = lst.p.coeffs().to_vec();
        p.resize(lst.order().max(1), 0.0);
        Self {
            schema: SCHEMA.into(),
            form: "coeffs".into(),
            p,
            q: lst.q.coeffs().to_vec(),
        }
    }
}

/// Checks the transform and names every failed condition.
pub fn check_admissible(lst: &RationalLst) -> Result<()> {
    let report = validate_lst(lst);
    if report.admissible {
        Ok(())
    } else {
        Err(PhError::Inadmissible(report.summary()))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coeffs_form() {
        let Input::Continuous { lst, problem } =
            parse_input(r#"{"form":"coeffs","p":[2.0],"q":[2.0,1.0]}"#).unwrap()
        else {
            panic!("expected a continuous input")
        };
        assert!(problem.is_none());
        assert_abs_diff_eq!(lst.eval(0.0), 1.0);
    }

    #[test]
    fn z_form_is_discrete() {
        let inp =
            parse_input(r#"{"form":"coeffs","z_form":true,"p":[0.0,0.5],"q":[1.0,-0.5]}"#).unwrap();
        assert!(matches!(inp, Input::Discrete(_)));
    }

    #[test]
    fn partial_fractions_any_order() {
        let text = r#"{"form":"partial_fractions","terms":[
            {"pole":{"re":-2.8,"im":0.4},"mult":1,"coeffs":[{"re":-0.23}]},
            {"pole":{"re":-1.0},"mult":1,"coeffs":[{"re":1.161}]}]}"#;
        let Input::Continuous { lst, .. } = parse_input(text).unwrap() else {
            panic!()
        };
        let want = 1.161 / 2.0 - 2.0 * 0.23 * 3.8 / (3.8 * 3.8 + 0.16);
        assert_abs_diff_eq!(lst.eval(1.0), want, epsilon = 1e-14);
    }

    #[test]
    fn parse_error_has_position() {
        let err = parse_input("{\"form\":\"coeffs\",\n\"p\":[1.0,}").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_input(r#"{"form":"coeffs","p":[1.0]}"#).unwrap_err();
        assert!(err.to_string().contains("q"), "{err}");
    }

    #[test]
    fn lower_half_pole_rejected() {
        let text = r#"{"form":"partial_fractions","terms":[
            {"pole":{"re":-2.8,"im":-0.4},"mult":1,"coeffs":[{"re":-0.23}]}]}"#;
        assert!(parse_input(text).is_err());
    }

    #[test]
    fn lst_file_round_trip() {
        let lst =
            RationalLst::from_coeffs(Polynomial::constant(2.0), Polynomial::linear(-2.0)).unwrap();
        let text = to_json(&LstFile::new(&lst));
        let Input::Continuous { lst: back, .. } = parse_input(&text).unwrap() else {
            panic!()
        };
        assert_eq!(back.p, lst.p);
        assert_eq!(back.q, lst.q);
    }
}
