//! Timing CSV ingestion and A/B speedup tables.
//!
//! Schema version 1: a mandatory header row `label,grid,cores,sec_per_iter,variant`.
//! Lines starting with `#` are comments; a `# schema = N` comment pins the
//! version. Rows sharing `(label, grid, cores)` form one case. The variant
//! seen first in the file is the base every other variant is compared to.

use std::fmt::Write as _;
use std::path::Path;

use haloforge::speedup;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const COLUMNS: [&str; 5] = ["label", "grid", "cores", "sec_per_iter", "variant"];

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TimingRow {
    pub label: String,
    pub grid: String,
    pub cores: u64,
    pub sec_per_iter: f64,
    pub variant: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub label: String,
    pub grid: String,
    pub cores: u64,
    pub base_variant: String,
    pub variant: String,
    pub t_base: f64,
    pub t_new: f64,
    pub ratio: f64,
    pub improvement_pct: f64,
}

fn schema_of(text: &str) -> Result<u32, CliError> {
    for line in text.lines().take_while(|l| l.trim_start().starts_with('#')) {
        let body = line.trim_start().trim_start_matches('#').trim();
        if let Some(v) = body.strip_prefix("schema") {
            let v = v.trim().trim_start_matches('=').trim();
            return v
                .parse()
                .map_err(|_| CliError::Runtime(format!("bad schema comment {line:?}")));
        }
    }
    Ok(SCHEMA_VERSION)
}

pub fn parse_timings(text: &str) -> Result<Vec<TimingRow>, CliError> {
    let schema = schema_of(text)?;
    if schema != SCHEMA_VERSION {
        return Err(CliError::Runtime(format!(
            "timing CSV schema {schema} is not supported (expected {SCHEMA_VERSION})"
        )));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    if header != COLUMNS {
        return Err(CliError::Runtime(format!(
            "timing CSV header must be `{}`, got `{}`",
            COLUMNS.join(","),
            header.join(",")
        )));
    }
    let rows = reader.deserialize().collect::<Result<Vec<TimingRow>, _>>()?;
    if rows.is_empty() {
        return Err(CliError::Runtime("timing CSV has no data rows".into()));
    }
    Ok(rows)
}

/// One row per (case, non-base variant) in order of first appearance.
pub fn speedup_table(rows: &[TimingRow]) -> Result<Vec<ReportRow>, CliError> {
    let base = &rows[0].variant;
    let mut cases: Vec<(&str, &str, u64)> = Vec::new();
    for r in rows {
        let key = (r.label.as_str(), r.grid.as_str(), r.cores);
        if !cases.contains(&key) {
            cases.push(key);
        }
    }
    let mut out = Vec::new();
    for (label, grid, cores) in cases {
        let in_case: Vec<&TimingRow> = rows
            .iter()
            .filter(|r| r.label == label && r.grid == grid && r.cores == cores)
            .collect();
        let t_base = match in_case.iter().find(|r| &r.variant == base) {
            Some(r) => r.sec_per_iter,
            None => {
                return Err(CliError::Runtime(format!(
                    "case {label} ({grid}, {cores} cores) has no `{base}` timing"
                )))
            }
        };
        for r in in_case.iter().filter(|r| &r.variant != base) {
            let s = speedup(t_base, r.sec_per_iter)?;
            out.push(ReportRow {
                label: label.into(),
                grid: grid.into(),
                cores,
                base_variant: base.clone(),
                variant: r.variant.clone(),
                t_base,
                t_new: r.sec_per_iter,
                ratio: s.ratio,
                improvement_pct: s.improvement_pct,
            });
        }
    }
    Ok(out)
}

pub fn render_table(rows: &[ReportRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>8} {:>7} {:>10} {:>10} {:>8} {:>8}  variant",
        "label", "grid", "cores", "t_base", "t_new", "ratio", "improv%"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<14} {:>8} {:>7} {:>10.4} {:>10.4} {:>8.4} {:>8.2}  {} vs {}",
            r.label, r.grid, r.cores, r.t_base, r.t_new, r.ratio, r.improvement_pct, r.variant, r.base_variant
        );
    }
    s
}

pub fn write_report_csv(path: &Path, source: &Path, rows: &[ReportRow]) -> Result<(), CliError> {
    let mut body = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut body);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(CliError::io(path))?;
    }
    let mut text = format!("# source = {}\n# schema = {SCHEMA_VERSION}\n", source.display());
    text.push_str(&String::from_utf8(body).expect("csv output is utf-8"));
    std::fs::write(path, text).map_err(CliError::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# schema = 1
label,grid,cores,sec_per_iter,variant
small, 512^3, 8192, 2.0, old
small, 512^3, 8192, 1.6, new
small, 512^3, 8192, 2.5, other
big, 1024^3, 16384, 3.0, old
big, 1024^3, 16384, 3.0, new
";

    #[test]
    fn ratios_against_first_variant() {
        let rows = speedup_table(&parse_timings(SAMPLE).unwrap()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].ratio, 2.0 / 1.6);
        assert_eq!(rows[1].variant, "other");
        assert!(rows[1].improvement_pct < 0.0);
        assert_eq!(rows[2].improvement_pct, 0.0);
    }

    #[test]
    fn schema_violations() {
        assert!(parse_timings("label,grid,cores,variant\nx,1,1,a\n").is_err());
        assert!(parse_timings("# schema = 2\nlabel,grid,cores,sec_per_iter,variant\n").is_err());
        assert!(parse_timings("label,grid,cores,sec_per_iter,variant\n").is_err());
        let missing_base = "label,grid,cores,sec_per_iter,variant\na,1,1,1.0,x\nb,1,1,1.0,y\n";
        assert!(speedup_table(&parse_timings(missing_base).unwrap()).is_err());
        let zero = "label,grid,cores,sec_per_iter,variant\na,1,1,1.0,x\na,1,1,0.0,y\n";
        assert!(speedup_table(&parse_timings(zero).unwrap()).is_err());
    }
}
