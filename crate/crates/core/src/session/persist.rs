use std::io::Write;
use std::path::Path;

use super::SessionError;
use crate::log::{parse_document, SessionDocument};

/// Writes the document next to `path` and renames it into place.
pub fn save_atomic(path: &Path, doc: &SessionDocument) -> Result<(), SessionError> {
    let io = |e: std::io::Error| SessionError::Io(format!("{}: {e}", path.display()));
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(doc.to_json().as_bytes()).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn load_document(path: &Path) -> Result<SessionDocument, SessionError> {
    let text = std::fs::read_to_string(path).map_err(|e| SessionError::Io(format!("{}: {e}", path.display())))?;
    Ok(parse_document(&text)?)
}
