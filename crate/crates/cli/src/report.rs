//! Report model and its JSON, CSV and table renderings.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Inconclusive,
    Unsupported,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Inconclusive => "inconclusive",
            Status::Unsupported => "unsupported",
        }
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Status::Pass
        } else {
            Status::Fail
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub samples: u64,
    pub detail: Value,
}

impl Check {
    pub fn new(name: impl Into<String>, status: Status) -> Self {
        Self {
            name: name.into(),
            status,
            value: None,
            tolerance: None,
            samples: 0,
            detail: Value::Null,
        }
    }

    pub fn value(mut self, v: f64) -> Self {
        self.value = Some(v);
        self
    }

    pub fn tolerance(mut self, t: f64) -> Self {
        self.tolerance = Some(t);
        self
    }

    pub fn samples(mut self, n: usize) -> Self {
        self.samples = n as u64;
        self
    }

    pub fn detail(mut self, d: impl Serialize) -> Self {
        self.detail = serde_json::to_value(d).unwrap_or(Value::Null);
        self
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Summary {
    pub pass: usize,
    pub fail: usize,
    pub inconclusive: usize,
    pub unsupported: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Environment {
    pub os: &'static str,
    pub arch: &'static str,
    pub threads: usize,
    pub wall_seconds: f64,
    pub check_seconds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub preset: Option<String>,
    pub parameters: BTreeMap<String, f64>,
    pub settings: BTreeMap<String, Value>,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub summary: Summary,
    pub environment: Environment,
}

/// Collects checks and their timings for one command.
pub struct Runner {
    started: Instant,
    checks: Vec<Check>,
    seconds: BTreeMap<String, f64>,
}

impl Runner {
    pub fn new() -> Self {
        Self {
            started: Instant::now(),
            checks: Vec::new(),
            seconds: BTreeMap::new(),
        }
    }

    pub fn run(&mut self, f: impl FnOnce() -> Result<Check, CliError>) -> Result<&Check, CliError> {
        let t = Instant::now();
        let check = f()?;
        self.seconds
            .insert(check.name.clone(), t.elapsed().as_secs_f64());
        self.checks.push(check);
        Ok(self.checks.last().unwrap())
    }

    pub fn finish(
        self,
        command: &str,
        preset: Option<String>,
        parameters: BTreeMap<String, f64>,
        settings: BTreeMap<String, Value>,
        seed: u64,
    ) -> Report {
        let mut summary = Summary::default();
        for c in &self.checks {
            match c.status {
                Status::Pass => summary.pass += 1,
                Status::Fail => summary.fail += 1,
                Status::Inconclusive => summary.inconclusive += 1,
                Status::Unsupported => summary.unsupported += 1,
            }
        }
        Report {
            schema_version: SCHEMA_VERSION,
            tool: "distlab",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            preset,
            parameters,
            settings,
            seed,
            checks: self.checks,
            summary,
            environment: Environment {
                os: std::env::consts::OS,
                arch: std::env::consts::ARCH,
                threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
                wall_seconds: self.started.elapsed().as_secs_f64(),
                check_seconds: self.seconds,
            },
        }
    }
}

impl Report {
    pub fn any_failed(&self) -> bool {
        self.summary.fail > 0
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Internal(e.to_string());
        w.write_record([
            "check",
            "status",
            "value",
            "tolerance",
            "samples",
            "seconds",
        ])
        .map_err(io)?;
        for c in &self.checks {
            let num = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
            let secs = self.environment.check_seconds.get(&c.name).copied();
            w.write_record([
                c.name.clone(),
                c.status.as_str().to_string(),
                num(c.value),
                num(c.tolerance),
                c.samples.to_string(),
                secs.map(|s| format!("{s:.3}")).unwrap_or_default(),
            ])
            .map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Internal(e.to_string()))
    }

    pub fn to_table(&self) -> String {
        let mut rows = vec![[
            "check".to_string(),
            "status".into(),
            "value".into(),
            "tolerance".into(),
            "samples".into(),
            "seconds".into(),
        ]];
        for c in &self.checks {
            let num = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
            let secs = self
                .environment
                .check_seconds
                .get(&c.name)
                .copied()
                .unwrap_or(0.0);
            rows.push([
                c.name.clone(),
                c.status.as_str().into(),
                num(c.value),
                num(c.tolerance),
                c.samples.to_string(),
                format!("{secs:.2}"),
            ]);
        }
        let mut widths = [0usize; 6];
        for r in &rows {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = format!(
            "{} {}{}\n",
            self.command,
            self.preset.as_deref().unwrap_or(""),
            if self.parameters.is_empty() {
                String::new()
            } else {
                let ps: Vec<String> = self
                    .parameters
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect();
                format!(" ({})", ps.join(", "))
            }
        );
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        let s = &self.summary;
        out.push_str(&format!(
            "{} pass, {} fail, {} inconclusive, {} unsupported\n",
            s.pass, s.fail, s.inconclusive, s.unsupported
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Report {
        let mut r = Runner::new();
        r.run(|| {
            Ok(Check::new("a", Status::Pass)
                .value(1e-12)
                .tolerance(1e-9)
                .samples(10))
        })
        .unwrap();
        r.run(|| Ok(Check::new("b", Status::Unsupported))).unwrap();
        r.finish(
            "verify",
            Some("triple-log".into()),
            BTreeMap::new(),
            BTreeMap::new(),
            1,
        )
    }

    #[test]
    fn csv_has_fixed_columns() {
        let csv = sample().to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("check,status,value,tolerance,samples,seconds")
        );
        assert!(lines.next().unwrap().starts_with("a,pass,1e-12,1e-9,10,"));
        assert!(lines.next().unwrap().starts_with("b,unsupported,,,0,"));
    }

    #[test]
    fn only_failures_count_as_failed() {
        assert!(!sample().any_failed());
        let mut r = Runner::new();
        r.run(|| Ok(Check::new("c", Status::Inconclusive))).unwrap();
        r.run(|| Ok(Check::new("d", Status::Fail))).unwrap();
        let report = r.finish("norms", None, BTreeMap::new(), BTreeMap::new(), 1);
        assert!(report.any_failed());
        assert_eq!(report.summary.inconclusive, 1);
    }

    #[test]
    fn json_is_versioned() {
        let v: Value = serde_json::from_str(&sample().to_json()).unwrap();
        assert_eq!(v["schema_version"], 1);
        assert_eq!(v["summary"]["unsupported"], 1);
        assert_eq!(v["checks"][0]["status"], "pass");
    }
}
