//! JSON problem files.
//!
//! ```json
//! {
//!   "variables": { "x": ["x1", "x2"], "y": ["y1"] },
//!   "objective": [ { "exp": [2, 0], "coef": 1.0 } ],
//!   "constraint_p": [ { "exp": [1, 0, 0], "coef": 1.0 }, { "exp": [0, 0, 1], "coef": "-1/2" } ],
//!   "index_set": [ [ { "exp": [0], "coef": 1 }, { "exp": [2], "coef": -1 } ] ],
//!   "tau_K": 2.0,
//!   "options": { "mode": "auto", "grid_density": 50 }
//! }
//! ```
//!
//! Exponent vectors of `objective` cover the x variables, those of
//! `constraint_p` the x variables followed by the y variables, and those of
//! each `index_set` generator the y variables. Coefficients are numbers or
//! strings holding a decimal or a fraction `a/b`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Polynomial, Space};
use crate::relax::{Mode, OrderPair, SipProblem};
use crate::sdp::Settings;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variables {
    pub x: Vec<String>,
    #[serde(default)]
    pub y: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coef {
    Number(f64),
    Text(String),
}

impl Coef {
    pub fn value(&self) -> std::result::Result<f64, String> {
        match self {
            Coef::Number(v) => Ok(*v),
            Coef::Text(s) => {
                let s = s.trim();
                let parse = |t: &str| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| format!("bad coefficient {s:?}"))
                };
                match s.split_once('/') {
                    Some((a, b)) => {
                        let d = parse(b)?;
                        if d == 0.0 {
                            return Err(format!("zero denominator in {s:?}"));
                        }
                        Ok(parse(a)? / d)
                    }
                    None => parse(s),
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub exp: Vec<u32>,
    pub coef: Coef,
}

pub type PolyRecord = Vec<Term>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tau {
    Value(f64),
    /// The string `"unset"`.
    Unset(String),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Options {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_density: Option<usize>,
    /// `[[r, t], ...]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<(u32, u32)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_box: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub variables: Variables,
    pub objective: PolyRecord,
    pub constraint_p: PolyRecord,
    #[serde(default)]
    pub index_set: Vec<PolyRecord>,
    #[serde(rename = "tau_K", default = "unset")]
    pub tau_k: Tau,
    #[serde(default)]
    pub options: Options,
    /// Free-form notes carried through unchanged.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
}

fn unset() -> Tau {
    Tau::Unset("unset".into())
}

fn to_poly(rec: &PolyRecord, space: Space, what: &str) -> Result<Polynomial> {
    let n = space.nvars();
    let mut terms = Vec::with_capacity(rec.len());
    for (i, t) in rec.iter().enumerate() {
        if t.exp.len() != n {
            return Err(Error::ProblemFile(format!(
                "{what} record {i}: exponent length {} but {n} variables declared",
                t.exp.len()
            )));
        }
        let c = t
            .coef
            .value()
            .map_err(|e| Error::ProblemFile(format!("{what} record {i}: {e}")))?;
        terms.push((t.exp.clone(), c));
    }
    Polynomial::from_terms(space, terms).map_err(|e| Error::ProblemFile(format!("{what}: {e}")))
}

pub fn to_record(p: &Polynomial) -> PolyRecord {
    p.terms()
        .map(|(m, c)| Term {
            exp: m.exponents().to_vec(),
            coef: Coef::Number(c),
        })
        .collect()
}

fn check_names(names: &[String], block: &str) -> Result<()> {
    for (i, a) in names.iter().enumerate() {
        if names[..i].contains(a) {
            return Err(Error::ProblemFile(format!(
                "duplicate {block} variable name {a:?}"
            )));
        }
    }
    Ok(())
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let pf: ProblemFile = serde_json::from_str(text)?;
        pf.validate()?;
        Ok(pf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        check_names(&self.variables.x, "x")?;
        check_names(&self.variables.y, "y")?;
        if self
            .variables
            .x
            .iter()
            .any(|v| self.variables.y.contains(v))
        {
            return Err(Error::ProblemFile(
                "a name is declared both as x and y variable".into(),
            ));
        }
        if let Tau::Unset(s) = &self.tau_k {
            if s != "unset" {
                return Err(Error::ProblemFile(format!(
                    "tau_K must be a number or \"unset\", got {s:?}"
                )));
            }
        }
        if let Some(b) = &self.options.y_box {
            if b.len() != self.variables.y.len() {
                return Err(Error::ProblemFile(
                    "y_box length differs from the y variables".into(),
                ));
            }
        }
        self.problem().map(|_| ())
    }

    pub fn tau(&self) -> Option<f64> {
        match self.tau_k {
            Tau::Value(v) => Some(v),
            Tau::Unset(_) => None,
        }
    }

    pub fn problem(&self) -> Result<SipProblem> {
        let m = self.variables.x.len();
        let n = self.variables.y.len();
        let f = to_poly(&self.objective, Space::x_only(m), "objective")?;
        let p = to_poly(&self.constraint_p, Space::new(m, n), "constraint_p")?;
        let g = self
            .index_set
            .iter()
            .enumerate()
            .map(|(j, r)| to_poly(r, Space::y_only(n), &format!("index_set[{j}]")))
            .collect::<Result<Vec<_>>>()?;
        let mut prob = SipProblem::new(f, p, g)?;
        prob.tau_k = self.tau();
        prob.mode = self.options.mode.unwrap_or_default();
        prob.y_box = self.options.y_box.clone();
        Ok(prob)
    }

    pub fn settings(&self) -> Result<Settings> {
        let mut s = Settings::default();
        for (k, v) in &self.options.tolerances {
            s.set(k, &v.to_string())?;
        }
        Ok(s)
    }

    pub fn schedule(&self) -> Option<Vec<OrderPair>> {
        self.options
            .schedule
            .as_ref()
            .map(|v| v.iter().map(|&(r, t)| OrderPair { r, t }).collect())
    }

    /// Problem file for `prob` with generated variable names.
    pub fn from_problem(prob: &SipProblem) -> Self {
        let names = |pre: &str, k: usize, from: usize| {
            (from..from + k).map(|i| format!("{pre}{i}")).collect()
        };
        ProblemFile {
            variables: Variables {
                x: names("x", prob.m(), 1),
                y: names("y", prob.n(), 1),
            },
            objective: to_record(&prob.f),
            constraint_p: to_record(&prob.p),
            index_set: prob.g.iter().map(to_record).collect(),
            tau_k: prob.tau_k.map(Tau::Value).unwrap_or_else(unset),
            options: Options {
                mode: Some(prob.mode),
                y_box: prob.y_box.clone(),
                ..Default::default()
            },
            notes: BTreeMap::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HALF_LINE: &str = r#"{
        "variables": {"x": ["x"], "y": ["y"]},
        "objective": [{"exp": [1], "coef": 1}],
        "constraint_p": [{"exp": [1, 0], "coef": 1}, {"exp": [0, 1], "coef": "-1"}],
        "index_set": [[{"exp": [0], "coef": 1}, {"exp": [2], "coef": "-2/2"}]],
        "tau_K": "unset"
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let pf = ProblemFile::from_json(HALF_LINE).unwrap();
        let prob = pf.problem().unwrap();
        assert_eq!(prob.tau_k, None);
        assert!(prob.univariate_interval_mode());
        let again =
            ProblemFile::from_json(&ProblemFile::from_problem(&prob).to_json().unwrap()).unwrap();
        assert_eq!(again.problem().unwrap(), prob);
    }

    #[test]
    fn bad_exponent_names_record() {
        let bad = HALF_LINE.replace(
            r#"{"exp": [0, 1], "coef": "-1"}"#,
            r#"{"exp": [0, 1, 0], "coef": "-1"}"#,
        );
        let err = ProblemFile::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("constraint_p record 1"), "{err}");
    }

    #[test]
    fn fractions() {
        assert_eq!(
            Coef::Text("51531/64".into()).value().unwrap(),
            51531.0 / 64.0
        );
        assert_eq!(Coef::Text(" -2.5 ".into()).value().unwrap(), -2.5);
        assert!(Coef::Text("1/0".into()).value().is_err());
        assert!(Coef::Text("abc".into()).value().is_err());
    }

    #[test]
    fn rejects_duplicates_and_bad_tau() {
        let dup = HALF_LINE.replace(r#""y": ["y"]"#, r#""y": ["x"]"#);
        assert!(ProblemFile::from_json(&dup).is_err());
        let tau = HALF_LINE.replace(r#""unset""#, r#""none""#);
        assert!(ProblemFile::from_json(&tau).is_err());
    }
}
