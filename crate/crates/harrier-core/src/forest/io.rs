//! Single-file forest persistence: a versioned little-endian binary
//! layout (magic, config, feature names, flattened node arrays, OOB
//! table). Thresholds are stored bit-exact so a round-trip reproduces
//! identical predictions.

use std::path::Path;

use crate::error::{Error, Result};
use crate::forest::{ForestConfig, ForestModel, OobEstimates, Tree, TreeNode};
use crate::label::N_CLASSES;

const MAGIC: &[u8; 8] = b"HRRFOR01";
const MAX_NAME_LEN: usize = 4096;
const MAX_FEATURES: usize = 65_535;
const NODE_BYTES: usize = 4 + 8 + 4 + 4 + 4 * N_CLASSES;
const OOB_ROW_BYTES: usize = 1 + 8 * N_CLASSES;

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return Err(Error::Parse("truncated forest model file".into()));
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn string(&mut self, max_len: usize) -> Result<String> {
        let len = self.u16()? as usize;
        if len > max_len {
            return Err(Error::Parse(format!("string length {len} exceeds cap {max_len}")));
        }
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| Error::Parse("invalid utf-8 in model file".into()))
    }
}

fn push_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

/// Serializes a model (bootstrap membership is not persisted).
pub fn forest_to_bytes(model: &ForestModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_string(&mut out, &model.manifest_version);
    out.extend_from_slice(&(model.config.n_trees as u64).to_le_bytes());
    out.extend_from_slice(&(model.config.max_features as u64).to_le_bytes());
    out.extend_from_slice(&(model.config.min_samples_leaf as u64).to_le_bytes());
    match model.config.max_depth {
        Some(d) => {
            out.push(1);
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        None => {
            out.push(0);
            out.extend_from_slice(&0u64.to_le_bytes());
        }
    }
    out.extend_from_slice(&model.config.seed.to_le_bytes());

    out.extend_from_slice(&(model.feature_names.len() as u32).to_le_bytes());
    for name in &model.feature_names {
        push_string(&mut out, name);
    }

    out.extend_from_slice(&(model.trees.len() as u32).to_le_bytes());
    for tree in &model.trees {
        out.extend_from_slice(&(tree.nodes.len() as u32).to_le_bytes());
        for node in &tree.nodes {
            out.extend_from_slice(&node.feature.to_le_bytes());
            out.extend_from_slice(&node.threshold.to_bits().to_le_bytes());
            out.extend_from_slice(&node.left.to_le_bytes());
            out.extend_from_slice(&node.right.to_le_bytes());
            for c in node.counts {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }

    out.extend_from_slice(&(model.oob.probs.len() as u32).to_le_bytes());
    for (probs, &valid) in model.oob.probs.iter().zip(&model.oob.valid) {
        out.push(u8::from(valid));
        for p in probs {
            out.extend_from_slice(&p.to_bits().to_le_bytes());
        }
    }
    out
}

/// Parses a model from bytes, validating every structural claim
/// (lengths against remaining input, child indices, feature indices)
/// before allocating or routing.
pub fn forest_from_bytes(data: &[u8]) -> Result<ForestModel> {
    let mut c = Cursor { data, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Parse("not a forest model file (bad magic)".into()));
    }
    let manifest_version = c.string(MAX_NAME_LEN)?;
    let n_trees_cfg = c.u64()? as usize;
    let max_features = c.u64()? as usize;
    let min_samples_leaf = c.u64()? as usize;
    let has_depth = c.u8()?;
    let depth_val = c.u64()? as usize;
    let max_depth = if has_depth == 1 {
        Some(depth_val)
    } else if has_depth == 0 {
        None
    } else {
        return Err(Error::Parse("bad max_depth flag".into()));
    };
    let seed = c.u64()?;

    let n_features = c.u32()? as usize;
    if n_features == 0 || n_features > MAX_FEATURES {
        return Err(Error::Parse(format!("feature count {n_features} out of range")));
    }
    let mut feature_names = Vec::with_capacity(n_features.min(c.remaining() / 2));
    for _ in 0..n_features {
        feature_names.push(c.string(MAX_NAME_LEN)?);
    }

    let n_trees = c.u32()? as usize;
    if n_trees == 0 {
        return Err(Error::Parse("model has no trees".into()));
    }
    let mut trees = Vec::with_capacity(n_trees.min(c.remaining() / 4));
    for _ in 0..n_trees {
        let n_nodes = c.u32()? as usize;
        if n_nodes == 0 || n_nodes > c.remaining() / NODE_BYTES + 1 {
            return Err(Error::Parse(format!("node count {n_nodes} out of range")));
        }
        let mut nodes = Vec::with_capacity(n_nodes);
        for idx in 0..n_nodes {
            let feature = c.i32()?;
            let threshold = c.f64()?;
            let left = c.u32()?;
            let right = c.u32()?;
            let mut counts = [0u32; N_CLASSES];
            for v in &mut counts {
                *v = c.u32()?;
            }
            if feature >= 0 {
                if feature as usize >= n_features {
                    return Err(Error::Parse(format!("feature index {feature} out of range")));
                }
                if !threshold.is_finite() {
                    return Err(Error::Parse("non-finite split threshold".into()));
                }
                // Children strictly after the parent keeps routing acyclic.
                let (l, r) = (left as usize, right as usize);
                if l <= idx || r <= idx || l >= n_nodes || r >= n_nodes {
                    return Err(Error::Parse(format!("bad child links at node {idx}")));
                }
            } else if counts.iter().all(|&v| v == 0) {
                return Err(Error::Parse(format!("leaf {idx} has zero class counts")));
            }
            nodes.push(TreeNode {
                feature,
                threshold,
                left,
                right,
                counts,
            });
        }
        trees.push(Tree { nodes });
    }
    if n_trees != n_trees_cfg {
        return Err(Error::Parse(format!(
            "config declares {n_trees_cfg} trees but file holds {n_trees}"
        )));
    }

    let n_oob = c.u32()? as usize;
    if n_oob > c.remaining() / OOB_ROW_BYTES {
        return Err(Error::Parse(format!("oob row count {n_oob} out of range")));
    }
    let mut probs = Vec::with_capacity(n_oob);
    let mut valid = Vec::with_capacity(n_oob);
    for _ in 0..n_oob {
        let flag = c.u8()?;
        if flag > 1 {
            return Err(Error::Parse("bad oob validity flag".into()));
        }
        valid.push(flag == 1);
        let mut row = [0.0f64; N_CLASSES];
        for v in &mut row {
            *v = c.f64()?;
            if !v.is_finite() {
                return Err(Error::Parse("non-finite oob probability".into()));
            }
        }
        probs.push(row);
    }
    if c.remaining() != 0 {
        return Err(Error::Parse(format!("{} trailing bytes", c.remaining())));
    }

    Ok(ForestModel {
        config: ForestConfig {
            n_trees,
            max_features,
            max_depth,
            min_samples_leaf,
            seed,
        },
        feature_names,
        manifest_version,
        trees,
        oob: OobEstimates { probs, valid },
        in_bag: Vec::new(),
    })
}

pub fn save_forest(model: &ForestModel, path: &Path) -> Result<()> {
    std::fs::write(path, forest_to_bytes(model))
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_forest(path: &Path) -> Result<ForestModel> {
    let data = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    forest_from_bytes(&data).map_err(|e| match e {
        Error::Parse(msg) => Error::format(path.display().to_string(), msg),
        other => other,
    })
}
