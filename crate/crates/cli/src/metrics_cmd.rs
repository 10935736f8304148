//! `metrics`: mAP@50 from JSON detection and ground-truth files.

use aslks_core::metrics::{map50, ApResult, Detection, GroundTruth};
use serde::de::DeserializeOwned;

use crate::{CliError, CliResult};

/// Parses a JSON array, reporting the index of the first bad record.
pub fn parse_records<T: DeserializeOwned>(text: &str, what: &str) -> CliResult<Vec<T>> {
    let raw: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| {
        CliError::Parse(format!("{what}: expected a JSON array (line {} column {}): {e}", e.line(), e.column()))
    })?;
    raw.into_iter()
        .enumerate()
        .map(|(i, v)| serde_json::from_value(v).map_err(|e| CliError::Parse(format!("{what} record {i}: {e}"))))
        .collect()
}

pub fn run(detections: &str, ground_truth: &str, n_classes: usize) -> CliResult<ApResult> {
    let d: Vec<Detection> = parse_records(detections, "detections")?;
    let g: Vec<GroundTruth> = parse_records(ground_truth, "ground truth")?;
    map50(&d, &g, n_classes).map_err(|e| CliError::Parse(e.to_string()))
}

/// JSON with every AP printed to four decimals.
pub fn format_result(r: &ApResult) -> String {
    let per: Vec<String> = r.per_class_ap.iter().map(|v| format!("{v:.4}")).collect();
    let missing: Vec<String> = r.classes_without_gt.iter().map(|c| c.to_string()).collect();
    format!(
        "{{\"n_classes\": {}, \"per_class_ap\": [{}], \"map50\": {:.4}, \"classes_without_gt\": [{}]}}",
        r.n_classes,
        per.join(", "),
        r.map50,
        missing.join(", ")
    )
}
