//! Comparison report: empirical-vs-analytic rows, identity checks and provenance.
//!
//! Numbers are written with 17 significant digits, non-finite values as `null`,
//! and object keys in sorted order, so equal inputs give byte-identical files.

use serde_json::{Map, Number, Value};
use tptkit::io::fmt_f64;

/// Bumped whenever a field is renamed, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

/// How a row's tolerance is expressed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tolerance {
    /// `|empirical − analytic| ≤ k · stderr`
    Stderr(f64),
    /// `|empirical − analytic| ≤ r · |analytic|`
    Relative(f64),
}

/// One estimated quantity against its analytic value.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    pub empirical: f64,
    pub stderr: f64,
    pub analytic: f64,
    pub tolerance: Tolerance,
}

impl Row {
    pub fn new(name: impl Into<String>, empirical: f64, stderr: f64, analytic: f64, tolerance: Tolerance) -> Self {
        Self {
            name: name.into(),
            empirical,
            stderr,
            analytic,
            tolerance,
        }
    }

    pub fn rel_diff(&self) -> f64 {
        (self.empirical - self.analytic).abs() / self.analytic.abs()
    }

    /// Largest admissible `|empirical − analytic|`.
    pub fn allowed(&self) -> f64 {
        match self.tolerance {
            Tolerance::Stderr(k) => k * self.stderr,
            Tolerance::Relative(r) => r * self.analytic.abs(),
        }
    }

    pub fn pass(&self) -> bool {
        (self.empirical - self.analytic).abs() <= self.allowed()
    }
}

/// What an identity's `error` measures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// `|lhs − rhs| / |rhs|`, passes when ≤ tolerance.
    Relative,
    /// A distance (L1, divergence, gap), passes when ≤ tolerance.
    Distance,
    /// A p-value, passes when ≥ tolerance.
    PValue,
    /// `lhs − rhs`, passes when < 0.
    Less,
}

impl ErrorKind {
    fn label(self) -> &'static str {
        match self {
            ErrorKind::Relative => "relative",
            ErrorKind::Distance => "distance",
            ErrorKind::PValue => "p_value",
            ErrorKind::Less => "less_than",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Identity {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub error: f64,
    pub kind: ErrorKind,
    pub tolerance: f64,
}

impl Identity {
    pub fn relative(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            error: (lhs - rhs).abs() / rhs.abs(),
            kind: ErrorKind::Relative,
            tolerance,
        }
    }

    /// `error` is a distance between the objects summarized by `lhs` and `rhs`.
    pub fn distance(name: impl Into<String>, lhs: f64, rhs: f64, error: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            error,
            kind: ErrorKind::Distance,
            tolerance,
        }
    }

    pub fn p_value(name: impl Into<String>, statistic: f64, p: f64, alpha: f64) -> Self {
        Self {
            name: name.into(),
            lhs: statistic,
            rhs: alpha,
            error: p,
            kind: ErrorKind::PValue,
            tolerance: alpha,
        }
    }

    pub fn less(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            error: lhs - rhs,
            kind: ErrorKind::Less,
            tolerance: 0.0,
        }
    }

    pub fn pass(&self) -> bool {
        match self.kind {
            ErrorKind::Relative | ErrorKind::Distance => self.error <= self.tolerance,
            ErrorKind::PValue => self.error >= self.tolerance,
            ErrorKind::Less => self.error < 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Provenance {
    pub config_sha256: String,
    pub model: String,
    pub model_hash: String,
    pub seeds: Vec<(String, u64)>,
    pub versions: Vec<(String, String)>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<Row>,
    pub identities: Vec<Identity>,
    pub provenance: Provenance,
}

/// A JSON number with 17 significant digits, or `null` when not finite.
pub fn num(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    // + 0.0 turns −0 into 0
    let n: Number = serde_json::from_str(&fmt_f64(x + 0.0)).expect("formatted float is a JSON number");
    Value::Number(n)
}

fn obj(pairs: Vec<(&str, Value)>) -> Value {
    Value::Object(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<Map<_, _>>())
}

fn csv_num(x: f64) -> String {
    if x.is_finite() {
        fmt_f64(x + 0.0)
    } else {
        "nan".into()
    }
}

/// Quotes a CSV field when it holds a comma, quote or newline.
pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(Row::pass) && self.identities.iter().all(Identity::pass)
    }

    pub fn row(&self, name: &str) -> Option<&Row> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn identity(&self, name: &str) -> Option<&Identity> {
        self.identities.iter().find(|r| r.name == name)
    }

    pub fn to_json_value(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let (kind, value) = match r.tolerance {
                    Tolerance::Stderr(k) => ("stderr", k),
                    Tolerance::Relative(v) => ("relative", v),
                };
                obj(vec![
                    ("name", Value::String(r.name.clone())),
                    ("empirical", num(r.empirical)),
                    ("stderr", num(r.stderr)),
                    ("analytic", num(r.analytic)),
                    ("rel_diff", num(r.rel_diff())),
                    ("tolerance", obj(vec![("kind", Value::String(kind.into())), ("value", num(value))])),
                    ("allowed_abs_diff", num(r.allowed())),
                    ("pass", Value::Bool(r.pass())),
                ])
            })
            .collect();
        let identities = self
            .identities
            .iter()
            .map(|i| {
                obj(vec![
                    ("name", Value::String(i.name.clone())),
                    ("lhs", num(i.lhs)),
                    ("rhs", num(i.rhs)),
                    ("error", num(i.error)),
                    ("error_kind", Value::String(i.kind.label().into())),
                    ("tolerance", num(i.tolerance)),
                    ("pass", Value::Bool(i.pass())),
                ])
            })
            .collect();
        let p = &self.provenance;
        let pairs = |v: &[(String, String)]| {
            Value::Object(v.iter().map(|(k, s)| (k.clone(), Value::String(s.clone()))).collect())
        };
        let seeds = Value::Object(p.seeds.iter().map(|(k, s)| (k.clone(), Value::Number((*s).into()))).collect());
        obj(vec![
            ("schema_version", Value::Number(SCHEMA_VERSION.into())),
            ("all_pass", Value::Bool(self.all_pass())),
            ("rows", Value::Array(rows)),
            ("identities", Value::Array(identities)),
            (
                "provenance",
                obj(vec![
                    ("config_sha256", Value::String(p.config_sha256.clone())),
                    ("model", Value::String(p.model.clone())),
                    ("model_hash", Value::String(p.model_hash.clone())),
                    ("seeds", seeds),
                    ("versions", pairs(&p.versions)),
                ]),
            ),
        ])
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json_value()).expect("report serializes");
        s.push('\n');
        s
    }

    /// Rows and identities in one table; `section` tells them apart.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("section,name,empirical_or_lhs,stderr,analytic_or_rhs,error,error_kind,tolerance,pass\n");
        for r in &self.rows {
            let (kind, tol) = match r.tolerance {
                Tolerance::Stderr(k) => ("stderr_factor", k),
                Tolerance::Relative(v) => ("relative", v),
            };
            s.push_str(&format!(
                "row,{},{},{},{},{},{kind},{},{}\n",
                csv_field(&r.name),
                csv_num(r.empirical),
                csv_num(r.stderr),
                csv_num(r.analytic),
                csv_num(r.rel_diff()),
                csv_num(tol),
                r.pass()
            ));
        }
        for i in &self.identities {
            s.push_str(&format!(
                "identity,{},{},,{},{},{},{},{}\n",
                csv_field(&i.name),
                csv_num(i.lhs),
                csv_num(i.rhs),
                csv_num(i.error),
                i.kind.label(),
                csv_num(i.tolerance),
                i.pass()
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_pass_matches_numbers() {
        let r = Row::new("x", 1.05, 0.02, 1.0, Tolerance::Stderr(3.0));
        assert!(r.pass());
        assert!((r.allowed() - 0.06).abs() < 1e-15);
        let r = Row::new("x", 1.07, 0.02, 1.0, Tolerance::Stderr(3.0));
        assert!(!r.pass());
        let r = Row::new("x", 1.1, f64::NAN, 1.0, Tolerance::Relative(0.15));
        assert!(r.pass());
        // an unknown standard error never passes a stderr tolerance
        assert!(!Row::new("x", 1.0, f64::NAN, 1.0, Tolerance::Stderr(3.0)).pass());
    }

    #[test]
    fn identity_kinds() {
        assert!(Identity::relative("a", 1.005, 1.0, 0.01).pass());
        assert!(!Identity::relative("a", 1.02, 1.0, 0.01).pass());
        assert!(Identity::p_value("ks", 0.1, 0.2, 0.01).pass());
        assert!(!Identity::p_value("ks", 0.1, 0.001, 0.01).pass());
        assert!(Identity::less("c<t", 0.8, 26.0).pass());
        assert!(!Identity::less("c<t", 1.0, 1.0).pass());
    }

    #[test]
    fn numbers_have_seventeen_digits() {
        let v = num(0.1);
        assert_eq!(v.to_string(), "1.0000000000000001e-1");
        assert_eq!(num(f64::NAN), Value::Null);
        let back: f64 = v.to_string().parse().unwrap();
        assert_eq!(back, 0.1);
    }

    #[test]
    fn json_is_stable() {
        let mut r = Report::default();
        r.rows.push(Row::new("nu_R", 0.019, 0.001, 0.0190, Tolerance::Relative(0.15)));
        r.identities.push(Identity::relative("nu_R = nu", 1.0, 1.0, 0.01));
        r.provenance.seeds.push(("simulate".into(), 7));
        let a = r.to_json();
        assert_eq!(a, r.clone().to_json());
        let v: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["all_pass"], true);
        assert_eq!(v["rows"][0]["pass"], true);
        assert!(r.to_csv().lines().count() == 3);
    }

    #[test]
    fn csv_names_are_quoted() {
        assert_eq!(csv_field("T_AB = <eta_A^+, u_B>"), "\"T_AB = <eta_A^+, u_B>\"");
        assert_eq!(csv_field("say \"hi\", then"), "\"say \"\"hi\"\", then\"");
        assert_eq!(csv_field("nu_R"), "nu_R");
        assert!(!num(-0.0).to_string().starts_with('-'));
    }
}
