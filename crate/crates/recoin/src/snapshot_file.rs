//! Snapshot files on disk. The byte layout is defined in
//! [`recoin_core::snapshot`].

use std::fs;
use std::io::Write;
use std::path::Path;

use recoin_core::snapshot::{decode, Snapshot};

use crate::error::{Error, Result};

/// Writes `snapshot` to `path` via a temporary file and rename, so readers
/// never observe a half-written snapshot.
pub fn write_snapshot(path: &Path, snapshot: &Snapshot) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let text = snapshot.encode();
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(text.as_bytes())
        .and_then(|()| file.sync_all())
        .map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(decode(&text)?)
}
