//! JSON Lines reading and writing for QA datasets and predictions.

use std::io::{self, BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::qa::QAItem;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// Writes items one per line, ordered by `(video_id, item_id)`.
pub fn write_dataset<W: Write>(items: &[QAItem], sink: W) -> Result<usize, DatasetError> {
    let mut sorted: Vec<&QAItem> = items.iter().collect();
    sorted.sort_by(|a, b| (&a.video_id, &a.item_id).cmp(&(&b.video_id, &b.item_id)));
    write_jsonl(sorted, sink)
}

pub fn write_jsonl<T: Serialize, W: Write>(
    records: impl IntoIterator<Item = T>,
    sink: W,
) -> Result<usize, DatasetError> {
    let mut w = io::BufWriter::new(sink);
    let mut n = 0;
    for r in records {
        serde_json::to_writer(&mut w, &r).map_err(io::Error::from)?;
        w.write_all(b"\n")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

/// Reads one JSON record per non-blank line.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, DatasetError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| DatasetError::Parse { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn read_dataset<R: BufRead>(reader: R) -> Result<Vec<QAItem>, DatasetError> {
    read_jsonl(reader)
}
