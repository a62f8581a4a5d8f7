//! Per-epoch training history as CSV.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tumorseg_core::trainer::{EpochRecord, TrainingHistory};

use crate::error::{Error, Result};
use crate::io::{read_file, write_file};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    epoch: usize,
    train_loss: f64,
    train_acc: f64,
    val_loss: f64,
    val_acc: f64,
}

pub fn to_csv(history: &TrainingHistory) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &history.records {
        w.serialize(Row {
            epoch: r.epoch,
            train_loss: r.train_loss,
            train_acc: r.train_accuracy,
            val_loss: r.val_loss,
            val_acc: r.val_accuracy,
        })
        .expect("in-memory csv write");
    }
    if history.records.is_empty() {
        w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
            .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

pub fn write_history(path: &Path, history: &TrainingHistory) -> Result<()> {
    write_file(path, to_csv(history))
}

pub fn parse_history(path: &Path, text: &str) -> Result<TrainingHistory> {
    let mut records = Vec::new();
    for row in csv::Reader::from_reader(text.as_bytes()).deserialize::<Row>() {
        let row = row.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        records.push(EpochRecord {
            epoch: row.epoch,
            train_loss: row.train_loss,
            train_accuracy: row.train_acc,
            val_loss: row.val_loss,
            val_accuracy: row.val_acc,
        });
    }
    Ok(TrainingHistory { records })
}

pub fn read_history(path: &Path) -> Result<TrainingHistory> {
    parse_history(path, &read_file(path)?)
}
