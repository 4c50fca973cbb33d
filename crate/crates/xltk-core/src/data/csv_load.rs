//! Corpus CSV reading/writing. Quoting, embedded commas and newlines are the
//! csv crate's problem; schema and label validation are ours.

use super::{DataError, RawComment, LABELS};
use std::path::Path;

/// Load a corpus CSV with header `id,comment_text,<six label columns>`.
/// Columns are located by name. Labels must be literal 0 or 1; anything else
/// is a row error carrying the 1-based line number.
pub fn load_csv(path: &Path) -> Result<Vec<RawComment>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => DataError::Io {
                path: path.display().to_string(),
                source: std::io::Error::other(e.to_string()),
            },
            _ => DataError::Csv(e),
        })?;

    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let id_col = col("id")?;
    let text_col = col("comment_text")?;
    let label_cols: Vec<usize> = LABELS.iter().map(|l| col(l)).collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |idx: usize, name: &str| -> Result<&str, DataError> {
            record.get(idx).ok_or_else(|| DataError::MissingField {
                line,
                column: name.to_string(),
            })
        };
        let mut labels = [0u8; 6];
        for (k, (&idx, name)) in label_cols.iter().zip(LABELS).enumerate() {
            let raw = field(idx, name)?;
            labels[k] = match raw.trim() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(DataError::BadLabel {
                        line,
                        column: name.to_string(),
                        value: other.to_string(),
                    })
                }
            };
        }
        out.push(RawComment {
            id: field(id_col, "id")?.to_string(),
            text: field(text_col, "comment_text")?.to_string(),
            labels,
        });
    }
    Ok(out)
}

/// Write comments in the same schema `load_csv` reads.
pub fn write_csv(path: &Path, rows: &[RawComment]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    })?;
    let mut header = vec!["id", "comment_text"];
    header.extend(LABELS);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.id.clone(), r.text.clone()];
        rec.extend(r.labels.iter().map(|l| l.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    Ok(())
}
