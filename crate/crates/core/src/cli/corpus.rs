//! Regression corpus: a directory of JSON entries, each either a built-in
//! acceptance check or a run with expected values at JSON pointers.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Analysis, RunConfig};
use super::run::run;
use super::{Artifact, CliError, Format};
use crate::checks::{run_check, CheckOutcome, Tolerance};

pub fn default_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

/// Expected value at a JSON pointer into the run's report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    pub pointer: String,
    /// A number, or a boolean compared exactly.
    pub value: serde_json::Value,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub id: String,
    /// Published value or behaviour the entry reproduces.
    pub reference: Option<String>,
    /// Id of a built-in check.
    pub builtin: Option<String>,
    pub analysis: Option<Analysis>,
    pub run: Option<RunConfig>,
    #[serde(default)]
    pub expect: Vec<Expectation>,
}

pub fn load(dir: &Path) -> Result<Vec<CorpusEntry>, CliError> {
    let rd = std::fs::read_dir(dir).map_err(|e| CliError::Io(format!("cannot read corpus {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn tolerance(e: &Expectation) -> Result<Tolerance, String> {
    match (e.rel_tol, e.abs_tol) {
        (Some(tol), None) => Ok(Tolerance::Rel { tol }),
        (None, Some(tol)) => Ok(Tolerance::Abs { tol }),
        (None, None) => Ok(Tolerance::Abs { tol: 0.0 }),
        (Some(_), Some(_)) => Err(format!("{}: give rel_tol or abs_tol, not both", e.pointer)),
    }
}

pub fn evaluate(entry: &CorpusEntry) -> CheckOutcome {
    if let Some(id) = &entry.builtin {
        let mut out = run_check(id).unwrap_or_else(|| failed(entry, format!("unknown built-in check `{id}`")));
        out.id = entry.id.clone();
        return out;
    }
    let mut out = CheckOutcome {
        id: entry.id.clone(),
        title: entry.reference.clone().unwrap_or_default(),
        measurements: Vec::new(),
        notes: Vec::new(),
        error: None,
    };
    let (Some(analysis), Some(cfg)) = (entry.analysis, &entry.run) else {
        return failed(entry, "entry needs `builtin`, or `analysis` with `run`".into());
    };
    let report = match cfg.check_analysis(analysis).and_then(|_| run(analysis, cfg)) {
        Ok(r) => serde_json::to_value(&r).expect("reports serialize"),
        Err(e) => return failed(entry, e.to_string()),
    };
    for e in &entry.expect {
        let label = e.label.clone().unwrap_or_else(|| e.pointer.clone());
        let got = report.pointer(&e.pointer);
        match (&e.value, got) {
            (serde_json::Value::Bool(want), got) => {
                let got = got.and_then(|g| g.as_bool());
                out.check(label, got.map_or(f64::NAN, |b| b as u8 as f64), *want as u8 as f64, Tolerance::Flag);
            }
            (want, got) => {
                let Some(want) = want.as_f64() else {
                    return failed(entry, format!("{}: expected value must be a number or boolean", e.pointer));
                };
                let tol = match tolerance(e) {
                    Ok(t) => t,
                    Err(m) => return failed(entry, m),
                };
                out.check(label, got.and_then(|g| g.as_f64()).unwrap_or(f64::NAN), want, tol);
            }
        }
    }
    out
}

fn failed(entry: &CorpusEntry, message: String) -> CheckOutcome {
    CheckOutcome {
        id: entry.id.clone(),
        title: entry.reference.clone().unwrap_or_default(),
        measurements: Vec::new(),
        notes: Vec::new(),
        error: Some(message),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub passed: bool,
    pub checks_run: usize,
    pub checks_failed: usize,
    pub outcomes: Vec<CheckOutcome>,
}

/// Runs every entry of the corpus. Returns the report artifact and whether
/// everything passed; an empty corpus counts as a failure.
pub fn validate(dir: &Path, format: Option<Format>) -> Result<(Artifact, bool), CliError> {
    let entries = load(dir)?;
    let outcomes: Vec<CheckOutcome> = entries.par_iter().map(evaluate).collect();
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    let passed = !outcomes.is_empty() && failed == 0;
    let summary = ValidationSummary { passed, checks_run: outcomes.len(), checks_failed: failed, outcomes };
    let artifact = match format {
        Some(Format::Json) => {
            let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
            s.push('\n');
            Artifact::new("validate.json", s)
        }
        Some(Format::Csv) => {
            let mut s = String::from("check,label,measured,expected,tolerance,passed\n");
            for o in &summary.outcomes {
                if let Some(e) = &o.error {
                    s.push_str(&format!("{},error,nan,nan,\"{}\",false\n", o.id, e.replace('"', "'")));
                }
                for m in &o.measurements {
                    s.push_str(&format!(
                        "{},\"{}\",{},{},{},{}\n",
                        o.id,
                        m.label,
                        crate::series::fmt_num(m.measured),
                        crate::series::fmt_num(m.expected),
                        m.tolerance,
                        m.passed
                    ));
                }
            }
            Artifact::new("validate.csv", s)
        }
        None => {
            let mut s = String::new();
            for o in &summary.outcomes {
                s.push_str(&o.report());
                s.push('\n');
            }
            if summary.outcomes.is_empty() {
                s.push_str(&format!("FAIL: no checks run (corpus {} is empty)\n", dir.display()));
            } else {
                s.push_str(&format!(
                    "{} of {} checks passed\n",
                    summary.checks_run - summary.checks_failed,
                    summary.checks_run
                ));
            }
            Artifact::new("validate.txt", s)
        }
    };
    Ok((artifact, passed))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(text: &str) -> CorpusEntry {
        serde_json::from_str(text).unwrap()
    }

    #[test]
    fn pointer_expectations() {
        let e = entry(
            r#"{"id": "z", "analysis": "zeros", "run": {"topology": "buck_original"},
                "expect": [{"pointer": "/rhp_zeros/0/0", "value": 1190, "rel_tol": 0.01}]}"#,
        );
        assert!(evaluate(&e).passed());
    }

    #[test]
    fn perturbed_capacitance_fails_the_zero() {
        let e = entry(
            r#"{"id": "z", "analysis": "zeros", "run": {"topology": "buck_original", "params": {"c_dc": 45e-6}},
                "expect": [{"pointer": "/rhp_zeros/0/0", "value": 1190, "rel_tol": 0.01}]}"#,
        );
        let o = evaluate(&e);
        assert!(!o.passed());
        assert!((o.measurements[0].measured - 793.65).abs() < 0.01);
    }

    #[test]
    fn missing_pointer_fails() {
        let e = entry(
            r#"{"id": "z", "analysis": "zeros", "run": {"topology": "buck_original"},
                "expect": [{"pointer": "/nope", "value": 1}]}"#,
        );
        assert!(!evaluate(&e).passed());
    }

    #[test]
    fn empty_corpus_is_a_failure() {
        let dir = tempfile::tempdir().unwrap();
        let (a, passed) = validate(dir.path(), None).unwrap();
        assert!(!passed);
        assert!(a.contents.contains("no checks run"));
    }
}
