//! Result tables: machine-readable CSV plus an aligned text rendering with
//! the published reference results appended.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tumorseg_core::MetricReport;

use crate::error::{Error, Result};
use crate::io::{read_file, write_file};

pub const COLUMNS: [&str; 6] = ["Accuracy", "Loss", "Precision", "Recall", "IoU", "Dice"];

const REFERENCE_CSV: &str = include_str!("../data/reference_results.csv");

/// One CSV row. Floats are written in shortest round-trip form, so parsing
/// the file back yields the exact in-memory values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub accuracy: f64,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
    pub dice: f64,
}

impl ReportRow {
    pub fn new(experiment: impl Into<String>, r: &MetricReport) -> Self {
        Self {
            experiment: experiment.into(),
            accuracy: r.accuracy,
            loss: r.loss,
            precision: r.precision,
            recall: r.recall,
            iou: r.iou,
            dice: r.dice,
        }
    }

    pub fn report(&self) -> MetricReport {
        MetricReport {
            accuracy: self.accuracy,
            loss: self.loss,
            precision: self.precision,
            recall: self.recall,
            iou: self.iou,
            dice: self.dice,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report row always serializes")
    }
}

pub fn to_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    if rows.is_empty() {
        w.write_record(["experiment", "accuracy", "loss", "precision", "recall", "iou", "dice"])
            .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

pub fn parse_csv(path: &Path, text: &str) -> Result<Vec<ReportRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| {
            r.map_err(|e: csv::Error| Error::Parse {
                path: path.to_path_buf(),
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<ReportRow>> {
    parse_csv(path, &read_file(path)?)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReferenceRow {
    pub table: String,
    pub label: String,
    pub accuracy: f64,
    pub loss: f64,
    pub precision: f64,
    pub recall: f64,
    pub iou: f64,
    pub dice: f64,
}

impl ReferenceRow {
    /// `label` followed by the six values at 4 decimals, single-spaced.
    pub fn line(&self) -> String {
        let mut s = self.label.clone();
        for v in [self.accuracy, self.loss, self.precision, self.recall, self.iou, self.dice] {
            write!(s, " {v:.4}").unwrap();
        }
        s
    }
}

pub fn reference_rows() -> Vec<ReferenceRow> {
    csv::Reader::from_reader(REFERENCE_CSV.as_bytes())
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .expect("bundled reference table parses")
}

fn reference_block(out: &mut String) {
    out.push_str("Published reference results (quoted as reported; not produced by this run)\n");
    let rows = reference_rows();
    for (table, title) in [
        ("focal", "Focal loss parameters, no augmentation"),
        ("augmentation", "Augmentation, alpha=0.25, gamma=2.0"),
    ] {
        writeln!(out, "\n{title}\nSetting {}", COLUMNS.join(" ")).unwrap();
        for r in rows.iter().filter(|r| r.table == table) {
            writeln!(out, "{}", r.line()).unwrap();
        }
    }
}

/// Aligned table of `rows` at 4 decimals, any failures, then the reference
/// block.
pub fn render_text(rows: &[ReportRow], failures: &[(String, String)]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::Config("no completed experiments to report".into()));
    }
    let name_w = rows
        .iter()
        .map(|r| r.experiment.len())
        .chain(["Experiment".len()])
        .max()
        .unwrap();
    let mut out = String::new();
    write!(out, "{:<name_w$}", "Experiment").unwrap();
    for c in COLUMNS {
        write!(out, " {c:>9}").unwrap();
    }
    out.push('\n');
    for r in rows {
        write!(out, "{:<name_w$}", r.experiment).unwrap();
        for v in r.report().columns() {
            write!(out, " {v:>9.4}").unwrap();
        }
        out.push('\n');
    }
    out.push_str(
        "\nMetrics are pooled over every test pixel (micro average) at the decision threshold.\n\
         Accuracy is thresholded pixel accuracy; Loss is the mean focal loss on raw probabilities.\n",
    );
    if !failures.is_empty() {
        out.push_str("\nFailed experiments\n");
        for (name, err) in failures {
            writeln!(out, "  {name}: {err}").unwrap();
        }
    }
    out.push('\n');
    reference_block(&mut out);
    Ok(out)
}

pub fn write_report(dir: &Path, rows: &[ReportRow], failures: &[(String, String)]) -> Result<()> {
    let text = render_text(rows, failures)?;
    write_file(&dir.join("report.csv"), to_csv(rows))?;
    write_file(&dir.join("report.txt"), text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(name: &str) -> ReportRow {
        ReportRow {
            experiment: name.into(),
            accuracy: 0.99951171875,
            loss: 1.2722761329050786e-4,
            precision: 0.9898517826145012,
            recall: 1.0 / 3.0,
            iou: 0.1 + 0.2,
            dice: 0.9946330336777137,
        }
    }

    #[test]
    fn csv_header_and_exact_round_trip() {
        let rows = vec![row("a"), row("b_2")];
        let text = to_csv(&rows);
        assert!(text.starts_with("experiment,accuracy,loss,precision,recall,iou,dice\n"));
        assert_eq!(parse_csv(Path::new("r.csv"), &text).unwrap(), rows);
    }

    #[test]
    fn json_keys() {
        let v: serde_json::Value = serde_json::from_str(&row("x").to_json()).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut expected = ["experiment", "accuracy", "loss", "precision", "recall", "iou", "dice"];
        expected.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expected);
    }

    #[test]
    fn text_has_rows_and_reference() {
        let text = render_text(&[row("desk")], &[]).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("Experiment"));
        assert!(lines[0].contains("Accuracy      Loss Precision    Recall       IoU      Dice"));
        assert!(lines[1].starts_with("desk") && lines[1].contains("0.9995") && lines[1].contains("0.3333"));
        assert!(lines.contains(&"None 0.9941 0.0082 0.9014 0.7681 0.7082 0.7867"));
        assert!(lines.contains(&"Horizontal Flip 0.9942 0.0053 0.9001 0.7779 0.7152 0.8041"));
        assert!(lines.contains(&"alpha=2.0, gamma=0.75 0.9939 0.0154 0.8778 0.7789 0.7004 0.7839"));
        assert_eq!(text.matches("\ndesk ").count(), 1);
    }

    #[test]
    fn no_rows_is_an_error() {
        assert!(render_text(&[], &[("x".into(), "boom".into())]).is_err());
    }

    #[test]
    fn reference_table_is_complete() {
        let rows = reference_rows();
        assert_eq!(rows.len(), 6);
        let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
        assert_eq!(
            labels,
            [
                "alpha=0.25, gamma=2.0",
                "alpha=2.0, gamma=0.75",
                "None",
                "Horizontal Flip",
                "Rotation",
                "Random Scaling"
            ]
        );
    }
}
