//! Model files: a magic line, a little-endian `u64` header length, a JSON
//! header and a blob of little-endian `f64` parameters in block order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::cnpt::{AeModel, CnptModel};
use crate::error::{NptError, Result};
use crate::nn::{BlockShape, Trainable};
use crate::seed::sha256_hex;

const MAGIC: &[u8] = b"NPTM1\n";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub role: String,
    pub architecture: serde_json::Value,
    pub seed: u64,
    #[serde(default)]
    pub meta: serde_json::Value,
    pub blocks: Vec<BlockShape>,
}

pub fn encode_model<M: Trainable>(model: &M, header: &ModelHeader) -> Result<Vec<u8>> {
    if header.blocks != model.block_shapes() {
        return Err(NptError::Invalid("header shape table does not match the model".into()));
    }
    let json = serde_json::to_vec(header)?;
    let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + 8 * model.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for block in model.block_values() {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Splits a file into its header and parameter blocks, checking the blob
/// against the shape table.
pub fn decode_model(bytes: &[u8], path: &Path) -> Result<(ModelHeader, Vec<Vec<f64>>)> {
    let bad = |m: &str| NptError::format(path, m.to_string());
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| bad("not a model file"))?;
    if rest.len() < 8 {
        return Err(bad("truncated header"));
    }
    let hlen = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
    let rest = &rest[8..];
    if rest.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: ModelHeader =
        serde_json::from_slice(&rest[..hlen]).map_err(|e| NptError::format(path, e.to_string()))?;
    let blob = &rest[hlen..];
    let total: usize = header.blocks.iter().map(BlockShape::count).sum();
    if blob.len() != 8 * total {
        return Err(bad(&format!(
            "weight blob holds {} values, shape table needs {total}",
            blob.len() / 8
        )));
    }
    let mut values = blob
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    let blocks = header
        .blocks
        .iter()
        .map(|s| values.by_ref().take(s.count()).collect())
        .collect();
    Ok((header, blocks))
}

/// Copies decoded blocks into a model built from the header architecture.
pub fn fill_model<M: Trainable>(model: &mut M, header: &ModelHeader, blocks: Vec<Vec<f64>>, path: &Path) -> Result<()> {
    if model.block_shapes() != header.blocks {
        return Err(NptError::format(path, "shape table does not match the architecture"));
    }
    for (dst, src) in model.block_values_mut().into_iter().zip(blocks) {
        dst.copy_from_slice(&src);
    }
    if model.block_values().iter().any(|b| b.iter().any(|v| !v.is_finite())) {
        return Err(NptError::format(path, "model contains non-finite weights"));
    }
    Ok(())
}

pub fn write_model<M: Trainable>(model: &M, header: &ModelHeader, path: &Path) -> Result<String> {
    let bytes = encode_model(model, header)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| NptError::io(dir, e))?;
    }
    fs::write(path, &bytes).map_err(|e| NptError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn read_model_file(path: &Path) -> Result<(ModelHeader, Vec<Vec<f64>>, String)> {
    if !path.exists() {
        return Err(NptError::Missing(path.to_path_buf()));
    }
    let bytes = fs::read(path).map_err(|e| NptError::io(path, e))?;
    let (h, b) = decode_model(&bytes, path)?;
    Ok((h, b, sha256_hex(&bytes)))
}

fn header_for<M: Trainable>(model: &M, role: &str, architecture: serde_json::Value, seed: u64, meta: serde_json::Value) -> ModelHeader {
    ModelHeader {
        role: role.to_string(),
        architecture,
        seed,
        meta,
        blocks: model.block_shapes(),
    }
}

fn expect_role(header: &ModelHeader, roles: &[&str], path: &Path) -> Result<()> {
    if roles.contains(&header.role.as_str()) {
        Ok(())
    } else {
        Err(NptError::format(path, format!("expected a {} model, found {:?}", roles.join(" or "), header.role)))
    }
}

fn arch_from<T: serde::de::DeserializeOwned>(header: &ModelHeader, path: &Path) -> Result<T> {
    serde_json::from_value(header.architecture.clone()).map_err(|e| NptError::format(path, e.to_string()))
}

/// Roles: `analysis`, `extractor` or any other classifier use.
pub fn save_classifier(model: &ClassifierModel, role: &str, seed: u64, path: &Path) -> Result<String> {
    let h = header_for(model, role, serde_json::to_value(&model.arch)?, seed, serde_json::Value::Null);
    write_model(model, &h, path)
}

pub fn load_classifier(path: &Path) -> Result<(ClassifierModel, ModelHeader, String)> {
    let (h, blocks, sha) = read_model_file(path)?;
    let mut m = ClassifierModel::new(arch_from(&h, path)?, 0)?;
    fill_model(&mut m, &h, blocks, path)?;
    Ok((m, h, sha))
}

#[derive(Serialize, Deserialize)]
struct CnptMeta {
    train_len: Option<usize>,
    population: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Roles: `cnpt` or `dncnn`. Population statistics and the training
/// length travel in the header.
pub fn save_cnpt(model: &CnptModel, role: &str, seed: u64, path: &Path) -> Result<String> {
    let meta = CnptMeta {
        train_len: model.train_len,
        population: model.norms.iter().map(|n| (n.mean.clone(), n.var.clone())).collect(),
    };
    let h = header_for(model, role, serde_json::to_value(&model.arch)?, seed, serde_json::to_value(meta)?);
    write_model(model, &h, path)
}

pub fn load_cnpt(path: &Path) -> Result<(CnptModel, ModelHeader, String)> {
    let (h, blocks, sha) = read_model_file(path)?;
    expect_role(&h, &["cnpt", "dncnn", "wavelet-cnpt"], path)?;
    let mut m = CnptModel::new(arch_from(&h, path)?, 0)?;
    fill_model(&mut m, &h, blocks, path)?;
    let meta: CnptMeta = serde_json::from_value(h.meta.clone()).map_err(|e| NptError::format(path, e.to_string()))?;
    if meta.population.len() != m.norms.len() {
        return Err(NptError::format(path, "population statistics do not match the architecture"));
    }
    for (n, (mean, var)) in m.norms.iter_mut().zip(meta.population) {
        n.mean = mean;
        n.var = var;
    }
    m.train_len = meta.train_len;
    Ok((m, h, sha))
}

pub fn save_ae(model: &AeModel, role: &str, seed: u64, path: &Path) -> Result<String> {
    let h = header_for(model, role, serde_json::to_value(&model.arch)?, seed, serde_json::Value::Null);
    write_model(model, &h, path)
}

pub fn load_ae(path: &Path) -> Result<(AeModel, ModelHeader, String)> {
    let (h, blocks, sha) = read_model_file(path)?;
    expect_role(&h, &["ae", "gc-ae"], path)?;
    let mut m = AeModel::zeros(arch_from(&h, path)?)?;
    fill_model(&mut m, &h, blocks, path)?;
    Ok((m, h, sha))
}
