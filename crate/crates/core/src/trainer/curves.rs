use std::path::Path;

use super::run::CurveRow;
use crate::error::{Error, Result};

/// Writes `curves.csv` with a header row; floats use the shortest
/// round-trip form.
pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::io(path, e.into()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
