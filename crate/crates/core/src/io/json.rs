use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reconstruct::GeometryModel;

pub const MODEL_SCHEMA: &str = "cadrecon-model/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    schema: String,
    #[serde(flatten)]
    model: GeometryModel,
}

/// Exact (shortest round-trip float formatting) JSON form of a model.
pub fn write_model_json(model: &GeometryModel) -> Result<Vec<u8>> {
    let file = ModelFile {
        schema: MODEL_SCHEMA.into(),
        model: model.clone(),
    };
    Ok(serde_json::to_vec_pretty(&file)?)
}

pub fn read_model_json(bytes: &[u8]) -> Result<GeometryModel> {
    let file: ModelFile = serde_json::from_slice(bytes)?;
    if file.schema != MODEL_SCHEMA {
        return Err(Error::Model(format!(
            "unsupported model schema {:?} (expected {MODEL_SCHEMA:?})",
            file.schema
        )));
    }
    file.model.validate()?;
    Ok(file.model)
}
