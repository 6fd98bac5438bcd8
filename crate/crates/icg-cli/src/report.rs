//! Report envelope shared by every subcommand.
//!
//! Each command assembles its output through [`ReportBuilder`] so that all
//! reports carry the same top-level fields and validate against the schema
//! shipped in `schema/experiment_report.schema.json`. Wall-clock numbers go
//! into the `timing` subtree and nowhere else; everything outside `timing`
//! must be bit-identical across reruns with the same seeds.

use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde_json::{json, Map, Value};

const SCHEMA_SRC: &str = include_str!("../../../schema/experiment_report.schema.json");

pub struct ReportBuilder {
    command: String,
    invocation: Vec<String>,
    config: Value,
    seeds: Value,
    metrics: Value,
    aggregates: Value,
    timing: Map<String, Value>,
    assertions: Vec<Value>,
    started: Instant,
}

impl ReportBuilder {
    pub fn new(command: &str) -> Self {
        ReportBuilder {
            command: command.to_string(),
            invocation: std::env::args().collect(),
            config: json!({}),
            seeds: json!({}),
            metrics: json!({}),
            aggregates: json!({}),
            timing: Map::new(),
            assertions: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn config(&mut self, v: Value) -> &mut Self {
        self.config = v;
        self
    }

    pub fn seeds(&mut self, v: Value) -> &mut Self {
        self.seeds = v;
        self
    }

    pub fn metrics(&mut self, v: Value) -> &mut Self {
        self.metrics = v;
        self
    }

    pub fn aggregates(&mut self, v: Value) -> &mut Self {
        self.aggregates = v;
        self
    }

    pub fn time(&mut self, key: &str, v: Value) -> &mut Self {
        self.timing.insert(key.to_string(), v);
        self
    }

    /// Records a named assertion. Returns `passed` so call sites can chain.
    pub fn check(&mut self, name: &str, passed: bool, detail: String) -> bool {
        self.assertions
            .push(json!({ "name": name, "passed": passed, "detail": detail }));
        passed
    }

    pub fn finish(mut self) -> Result<Value> {
        let passed = self
            .assertions
            .iter()
            .all(|a| a["passed"].as_bool() == Some(true));
        self.timing.insert(
            "total_secs".to_string(),
            json!(self.started.elapsed().as_secs_f64()),
        );
        let report = json!({
            "command": self.command,
            "invocation": self.invocation,
            "config": self.config,
            "seeds": self.seeds,
            "metrics": self.metrics,
            "aggregates": self.aggregates,
            "timing": Value::Object(self.timing),
            "machine": machine_info(),
            "assertions": self.assertions,
            "passed": passed,
        });
        validate_report(&report).map_err(|e| anyhow::anyhow!("report rejected by schema: {e}"))?;
        Ok(report)
    }
}

pub fn machine_info() -> Value {
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    json!({
        "os": std::env::consts::OS,
        "arch": std::env::consts::ARCH,
        "threads": threads,
    })
}

/// Writes the report to `out` when given, otherwise to stdout.
pub fn emit(report: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")
            .with_context(|| format!("writing report to {}", path.display()))?,
        None => println!("{text}"),
    }
    Ok(())
}

pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        if row.len() != header.len() {
            bail!("csv row has {} fields, header has {}", row.len(), header.len());
        }
        text.push_str(&row.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing csv to {}", path.display()))?;
    Ok(())
}

/// Validates `report` against the bundled schema. Supports the subset of
/// draft-07 the schema actually uses: type, required, properties,
/// additionalProperties, items, enum, minimum.
pub fn validate_report(report: &Value) -> std::result::Result<(), String> {
    let schema: Value = serde_json::from_str(SCHEMA_SRC).expect("bundled schema parses");
    validate_node(&schema, report, "$")
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) => {
            if n.is_u64() || n.is_i64() {
                "integer"
            } else {
                "number"
            }
        }
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn type_matches(expected: &str, v: &Value) -> bool {
    match expected {
        "number" => v.is_number(),
        "integer" => v.is_i64() || v.is_u64(),
        other => type_name(v) == other,
    }
}

fn validate_node(schema: &Value, node: &Value, path: &str) -> std::result::Result<(), String> {
    let obj = match schema.as_object() {
        Some(o) => o,
        None => return Ok(()),
    };

    if let Some(t) = obj.get("type") {
        let ok = match t {
            Value::String(s) => type_matches(s, node),
            Value::Array(opts) => opts
                .iter()
                .filter_map(|o| o.as_str())
                .any(|s| type_matches(s, node)),
            _ => true,
        };
        if !ok {
            return Err(format!("{path}: expected type {t}, got {}", type_name(node)));
        }
    }

    if let Some(allowed) = obj.get("enum").and_then(|e| e.as_array()) {
        if !allowed.contains(node) {
            return Err(format!("{path}: value {node} not in enum"));
        }
    }

    if let Some(min) = obj.get("minimum").and_then(|m| m.as_f64()) {
        if let Some(x) = node.as_f64() {
            if x < min {
                return Err(format!("{path}: {x} below minimum {min}"));
            }
        }
    }

    if let Some(map) = node.as_object() {
        if let Some(required) = obj.get("required").and_then(|r| r.as_array()) {
            for key in required.iter().filter_map(|k| k.as_str()) {
                if !map.contains_key(key) {
                    return Err(format!("{path}: missing required field {key}"));
                }
            }
        }
        let props = obj.get("properties").and_then(|p| p.as_object());
        if let Some(props) = props {
            for (key, sub) in props {
                if let Some(child) = map.get(key) {
                    validate_node(sub, child, &format!("{path}.{key}"))?;
                }
            }
        }
        if obj.get("additionalProperties") == Some(&Value::Bool(false)) {
            for key in map.keys() {
                if props.map_or(true, |p| !p.contains_key(key)) {
                    return Err(format!("{path}: unexpected field {key}"));
                }
            }
        }
    }

    if let (Some(items), Some(arr)) = (obj.get("items"), node.as_array()) {
        for (i, child) in arr.iter().enumerate() {
            validate_node(items, child, &format!("{path}[{i}]"))?;
        }
    }

    Ok(())
}
