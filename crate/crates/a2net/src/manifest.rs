//! Block parameters on disk: `manifest.json` next to one A2TN file per map.

use std::fs;
use std::path::{Path, PathBuf};

use a2net_core::{AssociationOrder, DoubleAttentionParams, Matrix, Scalar};
use serde::{Deserialize, Serialize};

use crate::a2tn::{A2tnError, TensorFile};
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";
const WEIGHTS: [&str; 4] = ["w_phi", "w_theta", "w_rho", "w_out"];
const BIASES: [&str; 4] = ["b_phi", "b_theta", "b_rho", "b_out"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsManifest {
    pub c: usize,
    pub m: usize,
    pub n: usize,
    pub biases: bool,
    #[serde(default)]
    pub order: AssociationOrder,
}

impl ParamsManifest {
    pub fn describe<T>(params: &DoubleAttentionParams<T>, order: AssociationOrder) -> Self
    where
        T: Scalar,
    {
        Self {
            c: params.c(),
            m: params.m(),
            n: params.n(),
            biases: params.has_biases(),
            order,
        }
    }
}

fn tensor_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.a2tn"))
}

/// Writes the manifest and every tensor into `dir`, creating it if needed.
pub fn save<T: Scalar>(
    dir: &Path,
    params: &DoubleAttentionParams<T>,
    order: AssociationOrder,
) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let weights = [&params.w_phi, &params.w_theta, &params.w_rho, &params.w_out];
    for (name, w) in WEIGHTS.iter().zip(weights) {
        TensorFile::from_matrix(w).write(&tensor_path(dir, name))?;
    }
    let biases = [&params.b_phi, &params.b_theta, &params.b_rho, &params.b_out];
    for (name, b) in BIASES.iter().zip(biases) {
        if let Some(b) = b {
            TensorFile::from_vector(b).write(&tensor_path(dir, name))?;
        }
    }
    let manifest = ParamsManifest::describe(params, order);
    let path = dir.join(MANIFEST_FILE);
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

/// Loads parameters from a manifest path or the directory holding it,
/// converting stored tensors to `T`.
pub fn load<T: Scalar>(
    path: &Path,
) -> Result<(ParamsManifest, DoubleAttentionParams<T>), CliError> {
    let (dir, file) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        (dir, path.to_path_buf())
    };
    let text = fs::read_to_string(&file).map_err(|e| CliError::io(&file, e))?;
    let manifest: ParamsManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;

    let matrix = |name: &str| -> Result<Matrix<T>, A2tnError> {
        TensorFile::read(&tensor_path(&dir, name))?.to_matrix()
    };
    let mut params = DoubleAttentionParams::new(
        matrix("w_phi")?,
        matrix("w_theta")?,
        matrix("w_rho")?,
        matrix("w_out")?,
    )?;
    if manifest.biases {
        let vector = |name: &str| -> Result<Vec<T>, A2tnError> {
            Ok(TensorFile::read(&tensor_path(&dir, name))?.to_vector())
        };
        params.b_phi = Some(vector("b_phi")?);
        params.b_theta = Some(vector("b_theta")?);
        params.b_rho = Some(vector("b_rho")?);
        params.b_out = Some(vector("b_out")?);
        params.validate()?;
    }
    if (params.c(), params.m(), params.n()) != (manifest.c, manifest.m, manifest.n) {
        return Err(CliError::Usage(format!(
            "{}: manifest declares c={}, m={}, n={} but tensors have c={}, m={}, n={}",
            file.display(),
            manifest.c,
            manifest.m,
            manifest.n,
            params.c(),
            params.m(),
            params.n()
        )));
    }
    Ok((manifest, params))
}
