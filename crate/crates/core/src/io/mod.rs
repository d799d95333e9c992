//! Container and dataset IO.

pub mod ensight;
pub mod native;

use std::path::Path;

pub use ensight::{read_ensight, read_ensight_mesh, VariableMap};
pub use native::{
    read_native, read_target_mesh, write_mesh_only, write_native, Manifest, NativeWriter,
};

use crate::error::Result;
use crate::mesh::{FieldStep, Mesh};

/// Random-access reader of the steps described by a manifest.
pub trait StepSource: Send + Sync + std::fmt::Debug {
    fn manifest(&self) -> &Manifest;

    /// Reads `quantity` at manifest step index `step_index`.
    fn read_step(&self, quantity: &str, step_index: usize) -> Result<FieldStep>;
}

/// An opened dataset with lazy step access.
#[derive(Debug)]
pub struct InputData {
    pub mesh: Mesh,
    pub manifest: Manifest,
    pub steps: Box<dyn StepSource>,
}

pub fn is_ensight_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("case") | Some("encas")
    )
}

/// Loads geometry from either an Ensight case file or a native container.
pub fn load_mesh(path: &Path) -> Result<Mesh> {
    if is_ensight_path(path) {
        read_ensight_mesh(path)
    } else {
        read_target_mesh(path)
    }
}

/// Writes a geometry-only copy of `input` (native container or Ensight case).
pub fn strip_mesh(input: &Path, output: &Path) -> Result<()> {
    let (mesh, analysis) = if is_ensight_path(input) {
        (read_ensight_mesh(input)?, crate::mesh::Domain::Time)
    } else {
        let data = read_native(input)?;
        (data.mesh, data.manifest.analysis)
    };
    write_mesh_only(output, &mesh, analysis)
}
