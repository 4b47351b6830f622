//! Run records: a metadata line (tool, version, schema, seed, config) followed
//! by a CSV table, or a single JSON document carrying the same fields.

use std::io::Write;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{json, Map, Value};

pub const TOOL: &str = "ugstream";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SCHEMA: &str = "ugstream-table/1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

pub struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Floats print in shortest round-trip form with a decimal point (`1.0`, not `1`).
pub fn num(x: f64) -> Value {
    Value::String(format!("{x:?}"))
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn emit<W: Write>(
    out: &mut W,
    format: Format,
    command: &str,
    seed: Option<u64>,
    config: &impl Serialize,
    table: &Table,
) -> std::io::Result<()> {
    let config = serde_json::to_value(config).map_err(std::io::Error::other)?;
    match format {
        Format::Csv => {
            let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
            writeln!(
                out,
                "# tool={TOOL} version={VERSION} schema={SCHEMA} command={command} seed={seed} config={config}"
            )?;
            let mut writer = csv::Writer::from_writer(&mut *out);
            writer.write_record(&table.columns)?;
            for row in &table.rows {
                writer.write_record(row.iter().map(cell))?;
            }
            writer.flush()?;
        }
        Format::Json => {
            let rows: Vec<Value> = table
                .rows
                .iter()
                .map(|row| {
                    let object: Map<String, Value> = table
                        .columns
                        .iter()
                        .zip(row)
                        .map(|(c, v)| (c.to_string(), v.clone()))
                        .collect();
                    Value::Object(object)
                })
                .collect();
            let doc = json!({
                "tool": TOOL,
                "version": VERSION,
                "schema": SCHEMA,
                "command": command,
                "seed": seed,
                "config": config,
                "columns": table.columns,
                "rows": rows,
            });
            serde_json::to_writer_pretty(&mut *out, &doc).map_err(std::io::Error::other)?;
            writeln!(out)?;
        }
    }
    Ok(())
}
