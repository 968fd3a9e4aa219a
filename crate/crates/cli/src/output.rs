//! Rendering and writing of output files.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::args::Format;
use crate::error::{CliError, Result};

/// One output file, fully rendered in memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub contents: Vec<u8>,
}

/// Renders `rows` as `<stem>.csv` or as a JSON array in `<stem>.json`.
pub fn table<T: Serialize>(stem: &str, rows: &[T], format: Format) -> Result<Artifact> {
    let contents = match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for row in rows {
                w.serialize(row)?;
            }
            w.into_inner().map_err(|e| CliError::Csv(e.into_error().into()))?
        }
        Format::Json => json_bytes(&rows)?,
    };
    Ok(Artifact { name: format!("{stem}.{}", format.extension()), contents })
}

pub fn json<T: Serialize>(stem: &str, value: &T) -> Result<Artifact> {
    Ok(Artifact { name: format!("{stem}.json"), contents: json_bytes(value)? })
}

fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes every artifact into `dir`. Each file is written under a temporary
/// name and renamed into place, so readers never see a partial file.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| CliError::Write { path: dir.to_path_buf(), source })?;
    for a in artifacts {
        let path = dir.join(&a.name);
        let tmp = dir.join(format!(".{}.tmp", a.name));
        fs::write(&tmp, &a.contents).map_err(|source| CliError::Write { path: tmp.clone(), source })?;
        fs::rename(&tmp, &path).map_err(|source| CliError::Write { path: path.clone(), source })?;
    }
    Ok(())
}
