//! File output. Every file carries the resolved configuration and the code
//! version; CSV files as `#` comment lines ahead of the header row, JSON
//! files inside a versioned envelope.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::ResolvedConfig;
use crate::error::{CliError, Result};

/// Version of the JSON envelope and CSV preamble layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub version: &'a str,
    pub command: &'a str,
    pub config: &'a ResolvedConfig,
    #[serde(flatten)]
    pub body: T,
}

/// Writes `bytes` to a temporary file next to `path` and renames it into
/// place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn preamble(resolved: &ResolvedConfig) -> Result<String> {
    let json = serde_json::to_string(resolved).map_err(flexgt::Error::from)?;
    Ok(format!(
        "# {}\n# schema_version {SCHEMA_VERSION}\n# config {json}\n",
        resolved.version
    ))
}

/// CSV bytes with the preamble followed by one serialized row per item.
pub fn csv_bytes<S: Serialize>(
    resolved: &ResolvedConfig,
    rows: impl IntoIterator<Item = S>,
) -> Result<Vec<u8>> {
    let mut buf = preamble(resolved)?.into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for row in rows {
            w.serialize(row).map_err(flexgt::Error::from)?;
        }
        w.flush().map_err(|e| CliError::io("<csv buffer>", e))?;
    }
    Ok(buf)
}

pub fn json_bytes<T: Serialize>(resolved: &ResolvedConfig, command: &str, body: T) -> Result<Vec<u8>> {
    let env = Envelope {
        schema_version: SCHEMA_VERSION,
        version: &resolved.version,
        command,
        config: resolved,
        body,
    };
    let mut s = serde_json::to_string_pretty(&env).map_err(flexgt::Error::from)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// Strips the `#` preamble, returning the plain CSV text.
pub fn strip_preamble(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/a.txt");
        write_atomic(&path, b"first").unwrap();
        write_atomic(&path, b"second").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "second");
        let leftovers = std::fs::read_dir(path.parent().unwrap()).unwrap().count();
        assert_eq!(leftovers, 1);
    }

    #[test]
    fn strip_keeps_data_rows() {
        let text = "# a\n# b\nx,y\n1,2\n";
        assert_eq!(strip_preamble(text), "x,y\n1,2\n");
    }
}
