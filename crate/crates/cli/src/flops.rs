//! `flops`: cost tables for a block-stack configuration.

use aslks_core::c2f::C2fConfig;
use aslks_core::cost::{compare_stack, CostReport, StackComparison};
use aslks_core::Dims4;
use serde::Serialize;

use crate::{CliError, CliResult};

/// Parses a JSON list of block configurations. Errors carry the line and
/// column reported by the JSON parser.
pub fn parse_config(text: &str) -> CliResult<Vec<C2fConfig>> {
    let cfgs: Vec<C2fConfig> = serde_json::from_str(text).map_err(|e| {
        CliError::Parse(format!("config parse error at line {} column {}: {e}", e.line(), e.column()))
    })?;
    if cfgs.is_empty() {
        return Err(CliError::Usage("config lists no blocks".into()));
    }
    for (i, c) in cfgs.iter().enumerate() {
        c.validate().map_err(|e| CliError::Parse(format!("config block {i}: {e}")))?;
    }
    Ok(cfgs)
}

/// `input` defaults to `1 × c_in × 64 × 64` of the first block.
pub fn run(cfgs: &[C2fConfig], input: Option<Dims4>) -> CliResult<StackComparison> {
    let first = cfgs.first().ok_or_else(|| CliError::Usage("config lists no blocks".into()))?;
    let input = input.unwrap_or(Dims4::new(1, first.c_in, 64, 64));
    Ok(compare_stack(cfgs, input)?)
}

#[derive(Serialize)]
struct Row<'a> {
    realization: &'a str,
    block: String,
    variant: &'a str,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    concat_width: Option<usize>,
    params: u64,
    macs: u64,
}

fn push_rows(w: &mut csv::Writer<Vec<u8>>, label: &str, r: &CostReport) -> csv::Result<()> {
    for b in &r.blocks {
        w.serialize(Row {
            realization: label,
            block: b.index.to_string(),
            variant: b.variant.label(),
            c_in: b.input[1],
            c_out: b.output[1],
            h: b.output[2],
            w: b.output[3],
            concat_width: Some(b.concat_width),
            params: b.params,
            macs: b.macs,
        })?;
    }
    let (first, last) = (&r.blocks[0], &r.blocks[r.blocks.len() - 1]);
    w.serialize(Row {
        realization: label,
        block: "total".into(),
        variant: "",
        c_in: first.input[1],
        c_out: last.output[1],
        h: last.output[2],
        w: last.output[3],
        concat_width: None,
        params: r.total_params,
        macs: r.total_macs,
    })
}

/// One row per block and realization plus a total row per realization.
pub fn to_csv(cmp: &StackComparison) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (label, r) in [
        ("configured", &cmp.configured),
        ("baseline", &cmp.baseline),
        ("dense_large_kernel", &cmp.dense_large_kernel),
    ] {
        push_rows(&mut w, label, r).map_err(|e| CliError::Usage(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_errors_name_position() {
        let err = parse_config("[\n  {\"variant\": \"lkscm\", \"c_in\": 4,\n   \"c_out\": 4, \"colour\": 1}\n]").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("colour"), "{msg}");
        assert!(matches!(parse_config("[]"), Err(CliError::Usage(_))));
        assert!(matches!(parse_config("[{\"variant\":\"ascm\",\"c_in\":4,\"c_out\":4,\"n\":0}]"), Err(CliError::Parse(_))));
    }

    #[test]
    fn csv_has_block_and_total_rows() {
        let cfgs = parse_config(r#"[{"variant":"lkscm","c_in":8,"c_out":8,"kernel":9,"tile":3}]"#).unwrap();
        let cmp = run(&cfgs, None).unwrap();
        let text = to_csv(&cmp).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + 3 * 2);
        assert!(lines[0].starts_with("realization,block,variant"));
        assert!(lines[2].starts_with("configured,total,"));
    }
}
