//! Checkpoint directories.
//!
//! A checkpoint is a directory holding `config.txt` (the model configuration
//! as `key=value` lines), `manifest.txt` (one `name<TAB>file` line per
//! tensor), and one f32 tensor file per parameter group — trainable groups
//! and frozen backbone tensors alike, so a checkpoint is self-contained and
//! the backbone can be integrity-checked without regenerating it. Values are
//! stored as f32; loading therefore rounds f64 state to f32 once, after
//! which save/load round-trips are exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::backbone::BackboneParams;
use super::{ModelConfig, ModelParams, ParamLayout};
use crate::error::{CoreError, Result};
use crate::satc;

pub const CONFIG_FILE: &str = "config.txt";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Save a checkpoint, creating `dir` if needed. Every file is written via a
/// temporary sibling and rename, so a crash cannot leave a half-written
/// tensor under its final name.
pub fn save(dir: &Path, m: &ModelParams) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;

    let mut manifest = String::new();
    let mut write_named = |name: &str, rows: usize, cols: usize, data: &[f64]| -> Result<()> {
        let file = format!("{name}.satc");
        let values: Vec<f32> = data.iter().map(|&v| v as f32).collect();
        satc::write_tensor_f32(&dir.join(&file), &[rows as u32, cols as u32], &values)?;
        manifest.push_str(&format!("{name}\t{file}\n"));
        Ok(())
    };

    for g in m.layout.groups() {
        write_named(&g.name, g.rows, g.cols, &m.theta[g.range()])?;
    }
    for (name, rows, cols, data) in m.backbone.tensors() {
        write_named(&name, rows, cols, data)?;
    }

    satc::write_atomic(&dir.join(MANIFEST_FILE), manifest.as_bytes())?;
    let mut config = String::new();
    for (k, v) in m.config.to_kv() {
        config.push_str(&format!("{k}={v}\n"));
    }
    satc::write_atomic(&dir.join(CONFIG_FILE), config.as_bytes())?;
    Ok(())
}

fn read_manifest(dir: &Path) -> Result<BTreeMap<String, String>> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    let mut map = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (name, file) = line.split_once('\t').ok_or_else(|| CoreError::BadManifest {
            path: path.clone(),
            reason: format!("line {}: expected 'name<TAB>file'", ln + 1),
        })?;
        if file.contains('/') || file.contains("..") {
            return Err(CoreError::BadManifest {
                path: path.clone(),
                reason: format!("line {}: tensor file '{file}' must be a plain name", ln + 1),
            });
        }
        if map.insert(name.to_string(), file.to_string()).is_some() {
            return Err(CoreError::BadManifest {
                path: path.clone(),
                reason: format!("duplicate tensor name '{name}'"),
            });
        }
    }
    Ok(map)
}

fn read_config(dir: &Path) -> Result<ModelConfig> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    let mut kv = BTreeMap::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| CoreError::BadManifest {
            path: path.clone(),
            reason: format!("line {}: expected 'key=value'", ln + 1),
        })?;
        kv.insert(k.to_string(), v.to_string());
    }
    ModelConfig::from_kv(&kv)
}

fn read_named(
    dir: &Path,
    manifest: &BTreeMap<String, String>,
    name: &str,
    rows: usize,
    cols: usize,
) -> Result<Vec<f64>> {
    let file = manifest.get(name).ok_or_else(|| CoreError::BadManifest {
        path: dir.join(MANIFEST_FILE),
        reason: format!("missing tensor '{name}'"),
    })?;
    let path = dir.join(file);
    let (dims, values) = satc::read_tensor_f32(&path)?;
    if dims != [rows as u32, cols as u32] {
        return Err(CoreError::BadTensor {
            path,
            reason: format!(
                "tensor '{name}' has dims {dims:?}, expected [{rows}, {cols}]"
            ),
        });
    }
    Ok(values.into_iter().map(|v| v as f64).collect())
}

/// Load a checkpoint saved by [`save`]. The manifest must cover exactly the
/// tensors the configuration implies — nothing missing, nothing extra.
pub fn load(dir: &Path) -> Result<ModelParams> {
    let config = read_config(dir)?;
    let manifest = read_manifest(dir)?;
    let layout = ParamLayout::new(&config);

    let mut theta = vec![0.0; layout.total_len()];
    for g in layout.groups() {
        let values = read_named(dir, &manifest, &g.name, g.rows, g.cols)?;
        theta[g.range()].copy_from_slice(&values);
    }

    let reference = BackboneParams::init(&config);
    let mut backbone_values = Vec::new();
    let mut expected: Vec<String> = layout.groups().iter().map(|g| g.name.clone()).collect();
    for (name, rows, cols, _) in reference.tensors() {
        backbone_values.push(read_named(dir, &manifest, &name, rows, cols)?);
        expected.push(name);
    }
    let backbone = BackboneParams::from_tensor_list(&config, &backbone_values)?;

    for name in manifest.keys() {
        if !expected.iter().any(|e| e == name) {
            return Err(CoreError::BadManifest {
                path: dir.join(MANIFEST_FILE),
                reason: format!("unexpected tensor '{name}'"),
            });
        }
    }

    Ok(ModelParams { config, backbone, layout, theta })
}
