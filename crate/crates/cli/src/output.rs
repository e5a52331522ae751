//! Output plumbing: run-configuration embedding and deterministic writers.
//!
//! Floats are printed as `{:.16e}` (17 significant digits) in both JSON and
//! CSV, so identical runs produce byte-identical files.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use gsg_core::analysis::SweepResult;
use gsg_core::gaussian::GaussianState;
use gsg_core::{RMat, RVec};
use serde::Serialize;
use serde_json::ser::Formatter;
use serde_json::Value;

use crate::CliError;

/// The resolved invocation, embedded in every output file.
#[derive(Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub inputs: Vec<String>,
    pub output: Option<String>,
    pub options: BTreeMap<String, Value>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn new(command: &str, inputs: &[&Path], output: Option<&Path>, seed: Option<u64>) -> Self {
        RunConfig {
            command: command.to_string(),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            output: output.map(|p| p.display().to_string()),
            options: BTreeMap::new(),
            seed,
        }
    }

    pub fn opt(&mut self, key: &str, value: Value) {
        self.options.insert(key.to_string(), value);
    }
}

/// Compact JSON formatter that pins all floats to 17 significant digits.
struct SciFormatter;

impl Formatter for SciFormatter {
    fn write_f64<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + std::io::Write>(&mut self, writer: &mut W, value: f32) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

fn to_json_string<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SciFormatter);
    value
        .serialize(&mut ser)
        .map_err(|e| CliError::Numerical(format!("serialization: {e}")))?;
    String::from_utf8(buf).map_err(|e| CliError::Numerical(format!("serialization: {e}")))
}

fn write_out(bytes: &[u8], out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(bytes)
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

/// Writes `{"run_config": ..., <payload>}` as fixed-format JSON.
pub fn emit_json(
    rc: &RunConfig,
    payload: serde_json::Map<String, Value>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut object = serde_json::Map::new();
    object.insert(
        "run_config".into(),
        serde_json::to_value(rc).map_err(|e| CliError::Numerical(format!("serialization: {e}")))?,
    );
    object.extend(payload);
    let mut text = to_json_string(&Value::Object(object))?;
    text.push('\n');
    write_out(text.as_bytes(), out)
}

/// Writes a sweep as CSV with the run configuration in the comment header.
pub fn emit_csv(rc: &RunConfig, mut sweep: SweepResult, out: &Path) -> Result<(), CliError> {
    sweep
        .metadata
        .insert(0, ("run_config".into(), to_json_string(rc)?));
    write_out(sweep.to_csv().as_bytes(), Some(out))
}

pub fn state_value(state: &GaussianState) -> Value {
    serde_json::to_value(state).expect("states serialize to plain JSON")
}

pub fn vec_value(v: &RVec) -> Value {
    Value::from(v.iter().copied().collect::<Vec<f64>>())
}

pub fn mat_value(m: &RMat) -> Value {
    Value::from(
        (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect::<Vec<f64>>())
            .collect::<Vec<_>>(),
    )
}
