use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BathConfiguration;
use crate::error::{Error, Result};
use crate::TOOL_VERSION;

pub const BATH_SCHEMA: &str = "nvbath.bath/1";

/// On-disk bath record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathFile {
    pub schema: String,
    pub tool_version: String,
    /// Where the central spin sits within the slab.
    pub central_placement: String,
    pub config: BathConfiguration,
}

impl BathFile {
    pub fn new(config: BathConfiguration) -> Self {
        BathFile {
            schema: BATH_SCHEMA.into(),
            tool_version: TOOL_VERSION.into(),
            central_placement: "mid-plane".into(),
            config,
        }
    }
}

pub fn save_bath(path: &Path, config: &BathConfiguration) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&BathFile::new(config.clone()))?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_bath(path: &Path) -> Result<BathConfiguration> {
    let file: BathFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.schema != BATH_SCHEMA {
        return Err(Error::Schema { expected: BATH_SCHEMA.into(), found: file.schema });
    }
    file.config.geometry.validate()?;
    Ok(file.config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bath::{generate_bath, BathGeometry};
    use crate::spin_model::PhysicalConstants;

    #[test]
    fn round_trip_is_lossless() {
        let g = BathGeometry::new(7.0, 3.0, 12.0).unwrap();
        let cfg = generate_bath(&g, 99, &PhysicalConstants::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bath.json");
        save_bath(&path, &cfg).unwrap();
        let back = load_bath(&path).unwrap();
        assert_eq!(cfg, back);
        let first = std::fs::read(&path).unwrap();
        save_bath(&path, &back).unwrap();
        assert_eq!(first, std::fs::read(&path).unwrap());
    }
}
