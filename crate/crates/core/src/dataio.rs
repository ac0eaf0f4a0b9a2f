//! Dataset and adjusted-dataset CSV serialization.
//!
//! The dataset schema (exact header, one row per subject):
//!
//! ```text
//! id,source,arm,badprog,u,ttp_exact,ttp,ttp_status,pps,pps_status,os_observed,os_observed_status,os_noswitch,os_noswitch_status,switch,enddate
//! ```
//!
//! Times are written with Rust's shortest round-trip float formatting, so a
//! written dataset reloads bit-exactly. The `u` column (the oracle-only
//! unmeasured factor) can be omitted on export; readers accept both layouts
//! and fill `u` with 0, which no estimator ever reads.

use std::fs;
use std::path::Path;

use crate::adjust::AdjustedRow;
use crate::error::{Error, Result};
use crate::sim::{Source, SubjectRecord, TrialDataset};

pub const DATASET_HEADER: &str = "id,source,arm,badprog,u,ttp_exact,ttp,ttp_status,pps,pps_status,os_observed,os_observed_status,os_noswitch,os_noswitch_status,switch,enddate";
pub const DATASET_HEADER_NO_U: &str = "id,source,arm,badprog,ttp_exact,ttp,ttp_status,pps,pps_status,os_observed,os_observed_status,os_noswitch,os_noswitch_status,switch,enddate";
pub const ADJUSTED_HEADER: &str = "id,arm,time,status,weight";

fn source_name(source: Source) -> &'static str {
    match source {
        Source::Rct => "rct",
        Source::External => "external",
    }
}

fn status(b: bool) -> u8 {
    u8::from(b)
}

/// Render a dataset in the exchange schema. `omit_oracle_u` drops the `u`
/// column for analysis-facing exports.
pub fn dataset_to_csv(dataset: &TrialDataset, omit_oracle_u: bool) -> String {
    let mut out = String::new();
    out.push_str(if omit_oracle_u { DATASET_HEADER_NO_U } else { DATASET_HEADER });
    out.push('\n');
    for s in &dataset.subjects {
        let u_field = if omit_oracle_u { String::new() } else { format!("{},", s.u) };
        out.push_str(&format!(
            "{},{},{},{},{}{},{},{},{},{},{},{},{},{},{},{}\n",
            s.id,
            source_name(s.source),
            s.arm,
            s.badprog,
            u_field,
            s.ttp_exact,
            s.ttp,
            status(s.ttp_status),
            s.pps,
            status(s.pps_status),
            s.os_observed,
            status(s.os_observed_status),
            s.os_noswitch,
            status(s.os_noswitch_status),
            u8::from(s.switched),
            s.enddate,
        ));
    }
    out
}

pub fn write_dataset_csv(
    path: &Path,
    dataset: &TrialDataset,
    omit_oracle_u: bool,
) -> Result<()> {
    fs::write(path, dataset_to_csv(dataset, omit_oracle_u))?;
    Ok(())
}

fn parse_f64(field: &str, name: &str, line: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| {
        Error::CsvSchema(format!("line {line}: `{name}` is not a number: `{field}`"))
    })
}

fn parse_flag(field: &str, name: &str, line: usize) -> Result<bool> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(Error::CsvSchema(format!(
            "line {line}: `{name}` must be 0 or 1, got `{other}`"
        ))),
    }
}

/// Parse a dataset from the exchange schema (with or without the `u`
/// column). Requires uniform provenance and end date.
pub fn dataset_from_csv(text: &str) -> Result<TrialDataset> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::CsvSchema("empty file".into()))?;
    let has_u = match header.trim_end() {
        h if h == DATASET_HEADER => true,
        h if h == DATASET_HEADER_NO_U => false,
        other => {
            return Err(Error::CsvSchema(format!(
                "unexpected header `{other}`; expected `{DATASET_HEADER}`"
            )))
        }
    };
    let expected_fields = if has_u { 16 } else { 15 };

    let mut subjects = Vec::new();
    for (index, line) in lines {
        let line_no = index + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_fields {
            return Err(Error::CsvSchema(format!(
                "line {line_no}: expected {expected_fields} fields, got {}",
                fields.len()
            )));
        }
        let mut it = fields.into_iter();
        let mut next = |name: &str| -> Result<&str> {
            it.next()
                .ok_or_else(|| Error::CsvSchema(format!("line {line_no}: missing `{name}`")))
        };
        let id = next("id")?
            .parse::<u64>()
            .map_err(|_| Error::CsvSchema(format!("line {line_no}: bad id")))?;
        let source = match next("source")? {
            "rct" => Source::Rct,
            "external" => Source::External,
            other => {
                return Err(Error::CsvSchema(format!(
                    "line {line_no}: source must be rct or external, got `{other}`"
                )))
            }
        };
        let arm = match next("arm")? {
            "0" => 0u8,
            "1" => 1u8,
            other => {
                return Err(Error::CsvSchema(format!(
                    "line {line_no}: arm must be 0 or 1, got `{other}`"
                )))
            }
        };
        let badprog = u8::from(parse_flag(next("badprog")?, "badprog", line_no)?);
        let u = if has_u {
            u8::from(parse_flag(next("u")?, "u", line_no)?)
        } else {
            0
        };
        let ttp_exact = parse_f64(next("ttp_exact")?, "ttp_exact", line_no)?;
        let ttp = parse_f64(next("ttp")?, "ttp", line_no)?;
        let ttp_status = parse_flag(next("ttp_status")?, "ttp_status", line_no)?;
        let pps = parse_f64(next("pps")?, "pps", line_no)?;
        let pps_status = parse_flag(next("pps_status")?, "pps_status", line_no)?;
        let os_observed = parse_f64(next("os_observed")?, "os_observed", line_no)?;
        let os_observed_status =
            parse_flag(next("os_observed_status")?, "os_observed_status", line_no)?;
        let os_noswitch = parse_f64(next("os_noswitch")?, "os_noswitch", line_no)?;
        let os_noswitch_status =
            parse_flag(next("os_noswitch_status")?, "os_noswitch_status", line_no)?;
        let switched = parse_flag(next("switch")?, "switch", line_no)?;
        let enddate = parse_f64(next("enddate")?, "enddate", line_no)?;

        if source == Source::External && (arm != 0 || switched) {
            return Err(Error::CsvSchema(format!(
                "line {line_no}: external subjects must have arm 0 and switch 0"
            )));
        }
        if switched && arm != 0 {
            return Err(Error::CsvSchema(format!(
                "line {line_no}: only control-arm subjects can switch"
            )));
        }
        for (name, v) in [
            ("ttp_exact", ttp_exact),
            ("ttp", ttp),
            ("pps", pps),
            ("os_observed", os_observed),
            ("os_noswitch", os_noswitch),
            ("enddate", enddate),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::CsvSchema(format!(
                    "line {line_no}: `{name}` must be a nonnegative finite number"
                )));
            }
        }

        subjects.push(SubjectRecord {
            id,
            source,
            arm,
            badprog,
            u,
            ttp_exact,
            ttp,
            ttp_status,
            pps,
            pps_status,
            os_observed,
            os_observed_status,
            os_noswitch,
            os_noswitch_status,
            switched,
            enddate,
        });
    }
    if subjects.is_empty() {
        return Err(Error::CsvSchema("dataset has no rows".into()));
    }
    let source = subjects[0].source;
    let enddate = subjects[0].enddate;
    for (i, s) in subjects.iter().enumerate() {
        if s.source != source {
            return Err(Error::CsvSchema(format!(
                "row {}: mixed provenance in one dataset",
                i + 1
            )));
        }
        if s.enddate != enddate {
            return Err(Error::CsvSchema(format!("row {}: end dates differ", i + 1)));
        }
    }
    Ok(TrialDataset { subjects, source, enddate })
}

pub fn read_dataset_csv(path: &Path) -> Result<TrialDataset> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::CsvSchema(format!("{}: {e}", path.display())))?;
    dataset_from_csv(&text)
}

/// Render adjusted analysis rows: `id,arm,time,status,weight`.
pub fn adjusted_to_csv(rows: &[AdjustedRow]) -> String {
    let mut out = String::from(ADJUSTED_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.id,
            r.arm,
            r.time,
            status(r.status),
            r.weight
        ));
    }
    out
}

pub fn write_adjusted_csv(path: &Path, rows: &[AdjustedRow]) -> Result<()> {
    fs::write(path, adjusted_to_csv(rows))?;
    Ok(())
}
