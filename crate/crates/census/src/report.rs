//! Run reports: stage outcomes, certificates, digests. Timing is kept in its own field so the
//! rest of the JSON is reproducible byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use euler_twist::twist::ZeroCertificate;
use euler_twist::{Error, Result};
use serde::Serialize;
use serde_json::Value;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

/// Exit status for an error, by its innermost cause.
pub fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Inconclusive(_) | Error::RefineStep(_) => EXIT_INCONCLUSIVE,
        Error::Solver { .. }
        | Error::Search(_)
        | Error::AnnulusExit { .. }
        | Error::SigmaWindow { .. }
        | Error::Construction(_)
        | Error::Capacity(_) => EXIT_SOLVER,
        _ => EXIT_PRECONDITION,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageOutcome {
    pub stage: String,
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub data: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub command: String,
    pub tool_version: String,
    pub inputs_digest: String,
    pub prime_table_digest: String,
    pub stages: Vec<StageOutcome>,
    pub certificates: Vec<ZeroCertificate>,
    /// Zero claims that carry no certificate.
    pub twisted_only: Vec<String>,
    pub exit_code: i32,
    /// Seconds per stage; excluded from reproducibility comparisons.
    pub timing: BTreeMap<String, f64>,
}

impl Report {
    pub fn new(
        experiment: &str,
        command: &str,
        inputs_digest: String,
        prime_table_digest: String,
    ) -> Self {
        Self {
            experiment: experiment.into(),
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            inputs_digest,
            prime_table_digest,
            stages: Vec::new(),
            certificates: Vec::new(),
            twisted_only: Vec::new(),
            exit_code: EXIT_OK,
            timing: BTreeMap::new(),
        }
    }

    pub fn ok(&mut self, stage: &str, data: impl Serialize) {
        let data = serde_json::to_value(data).expect("stage data serializes");
        self.stages.push(StageOutcome {
            stage: stage.into(),
            ok: true,
            error: None,
            data,
        });
    }

    /// Records a failed stage and raises the exit code to at least `code`.
    pub fn fail(&mut self, stage: &str, msg: String, code: i32, data: impl Serialize) {
        let data = serde_json::to_value(data).expect("stage data serializes");
        self.stages.push(StageOutcome {
            stage: stage.into(),
            ok: false,
            error: Some(msg),
            data,
        });
        self.raise(code);
    }

    pub fn error(&mut self, stage: &str, e: &Error) {
        self.fail(stage, e.to_string(), exit_code(e), Value::Null);
    }

    pub fn raise(&mut self, code: i32) {
        self.exit_code = self.exit_code.max(code);
    }

    /// Certificates whose own soundness gate fails.
    pub fn unsound(&self) -> usize {
        self.certificates.iter().filter(|c| !c.is_sound()).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.to_json())?;
        Ok(())
    }
}
