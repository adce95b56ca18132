use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{ExperimentReport, FederationConfig, RoundReport};
use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// `v<crate version>`, stamped into report headers.
pub fn version_string() -> String {
    format!("v{}", env!("CARGO_PKG_VERSION"))
}

/// Numeric CSV with a `# key: value` metadata block above the header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvDocument {
    pub metadata: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvDocument {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(out, "{}", self.header.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| format_cell(v)).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn parse(text: &str) -> Result<CsvDocument> {
        let mut metadata = Vec::new();
        let mut lines = text.lines().enumerate().peekable();
        while let Some((_, line)) = lines.peek() {
            let Some(rest) = line.strip_prefix("# ") else { break };
            let (k, v) = rest
                .split_once(": ")
                .ok_or_else(|| Error::Format(format!("metadata line `{line}` lacks `key: value`")))?;
            metadata.push((k.to_string(), v.to_string()));
            lines.next();
        }
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Format("missing CSV header row".into()))?;
        let header: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|cell| {
                    cell.parse::<f64>()
                        .map_err(|_| Error::Format(format!("line {}: `{cell}` is not a number", idx + 1)))
                })
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != header.len() {
                return Err(Error::Format(format!(
                    "line {}: {} cells for {} columns",
                    idx + 1,
                    row.len(),
                    header.len()
                )));
            }
            rows.push(row);
        }
        Ok(CsvDocument { metadata, header, rows })
    }
}

/// Integral values print without a fractional part; everything else uses the
/// shortest round-trip representation.
fn format_cell(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

fn client_column(client_id: &str) -> String {
    format!("{client_id}:test_loss")
}

impl ExperimentReport {
    /// `round,avg_train_loss,avg_test_loss,<client>:test_loss...` plus metadata.
    pub fn to_csv_document(&self) -> CsvDocument {
        let clients: Vec<String> = self
            .rounds
            .first()
            .map(|r| r.per_client_test_loss.keys().cloned().collect())
            .unwrap_or_default();
        let metadata = vec![
            ("report".into(), "fedkan experiment".into()),
            ("version".into(), version_string()),
            ("model".into(), self.model_config.kind.slug().into()),
            ("seed".into(), self.federation_config.seed.to_string()),
            ("parameter_count".into(), self.parameter_count.to_string()),
            ("dataset_digest".into(), self.dataset_digest.clone()),
            ("final_avg_test_loss".into(), format!("{:?}", self.final_avg_test_loss)),
            (
                "model_config".into(),
                serde_json::to_string(&self.model_config).expect("config serializes"),
            ),
            (
                "federation_config".into(),
                serde_json::to_string(&self.federation_config).expect("config serializes"),
            ),
        ];
        let mut header = vec!["round".to_string(), "avg_train_loss".into(), "avg_test_loss".into()];
        header.extend(clients.iter().map(|c| client_column(c)));
        let rows = self
            .rounds
            .iter()
            .map(|r| {
                let mut row = vec![r.round_index as f64, r.avg_train_loss, r.avg_test_loss];
                row.extend(
                    clients
                        .iter()
                        .map(|c| r.per_client_test_loss.get(c).copied().unwrap_or(f64::NAN)),
                );
                row
            })
            .collect();
        CsvDocument { metadata, header, rows }
    }

    pub fn to_csv_string(&self) -> String {
        self.to_csv_document().to_csv_string()
    }
}

/// What an experiment CSV records: configs, digest and per-round losses.
/// Participation lists are not part of the file.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub model_config: ModelConfig,
    pub federation_config: FederationConfig,
    pub parameter_count: usize,
    pub dataset_digest: String,
    pub final_avg_test_loss: f64,
    pub rounds: Vec<RoundReport>,
}

impl ExperimentSummary {
    pub fn from_csv_document(doc: &CsvDocument) -> Result<ExperimentSummary> {
        let need = |k: &str| {
            doc.meta(k)
                .ok_or_else(|| Error::Format(format!("missing metadata `{k}`")))
        };
        let json_err = |e: serde_json::Error| Error::Format(e.to_string());
        let model_config: ModelConfig = serde_json::from_str(need("model_config")?).map_err(json_err)?;
        let federation_config: FederationConfig = serde_json::from_str(need("federation_config")?).map_err(json_err)?;
        let parameter_count = need("parameter_count")?
            .parse()
            .map_err(|_| Error::Format("parameter_count is not an integer".into()))?;
        let final_avg_test_loss = need("final_avg_test_loss")?
            .parse()
            .map_err(|_| Error::Format("final_avg_test_loss is not a number".into()))?;
        if doc.header.len() < 3 || doc.header[..3] != ["round", "avg_train_loss", "avg_test_loss"] {
            return Err(Error::Format(format!("unexpected experiment header {:?}", doc.header)));
        }
        let clients: Vec<String> = doc.header[3..]
            .iter()
            .map(|h| {
                h.strip_suffix(":test_loss")
                    .map(str::to_string)
                    .ok_or_else(|| Error::Format(format!("column `{h}` is not a client test loss")))
            })
            .collect::<Result<_>>()?;
        let rounds = doc
            .rows
            .iter()
            .map(|row| RoundReport {
                round_index: row[0] as usize,
                participants: Vec::new(),
                avg_train_loss: row[1],
                avg_test_loss: row[2],
                per_client_test_loss: clients
                    .iter()
                    .cloned()
                    .zip(row[3..].iter().copied())
                    .collect::<BTreeMap<_, _>>(),
            })
            .collect();
        Ok(ExperimentSummary {
            model_config,
            federation_config,
            parameter_count,
            dataset_digest: need("dataset_digest")?.to_string(),
            final_avg_test_loss,
            rounds,
        })
    }
}
