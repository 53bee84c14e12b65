//! Named, shaped parameter vectors and their JSON checkpoint format.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Ordered list of named blocks laid out contiguously in a flat vector.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
}

impl ParamLayout {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, shape: &[usize]) -> Self {
        self.blocks.push(ParamBlock {
            name: name.to_string(),
            shape: shape.to_vec(),
        });
        self
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(ParamBlock::len).sum()
    }

    /// Flat index range of the named block.
    pub fn range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        let mut offset = 0;
        for b in &self.blocks {
            if b.name == name {
                return Some(offset..offset + b.len());
            }
            offset += b.len();
        }
        None
    }

    /// Name of the block owning flat index `i`.
    pub fn name_of(&self, i: usize) -> Option<&str> {
        let mut offset = 0;
        for b in &self.blocks {
            if i < offset + b.len() {
                return Some(&b.name);
            }
            offset += b.len();
        }
        None
    }

    /// Human-readable label for a flat index, e.g. `mu[3]`.
    pub fn label_of(&self, i: usize) -> String {
        let mut offset = 0;
        for b in &self.blocks {
            if i < offset + b.len() {
                return if b.len() == 1 {
                    b.name.clone()
                } else {
                    format!("{}[{}]", b.name, i - offset)
                };
            }
            offset += b.len();
        }
        format!("#{i}")
    }
}

/// A flat parameter (or gradient) vector tagged with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVec {
    pub layout: ParamLayout,
    pub values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct TensorJson {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointJson {
    format: String,
    params: BTreeMap<String, TensorJson>,
}

const CHECKPOINT_FORMAT: &str = "nasx-params/1";

impl ParamVec {
    pub fn zeros(layout: ParamLayout) -> Self {
        let n = layout.total_len();
        ParamVec {
            layout,
            values: vec![0.0; n],
        }
    }

    pub fn new(layout: ParamLayout, values: Vec<f64>) -> Result<Self> {
        if layout.total_len() != values.len() {
            return Err(Error::ShapeMismatch {
                name: "<flat>".into(),
                expected: layout.total_len(),
                found: values.len(),
            });
        }
        Ok(ParamVec { layout, values })
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.layout.range(name).map(|r| &self.values[r])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.layout.range(name).map(move |r| &mut self.values[r])
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut params = BTreeMap::new();
        let mut offset = 0;
        for b in self.layout.blocks() {
            let len = b.len();
            params.insert(
                b.name.clone(),
                TensorJson {
                    shape: b.shape.clone(),
                    data: self.values[offset..offset + len].to_vec(),
                },
            );
            offset += len;
        }
        Ok(serde_json::to_string_pretty(&CheckpointJson {
            format: CHECKPOINT_FORMAT.into(),
            params,
        })?)
    }

    /// Parses a checkpoint. Blocks come back in name order.
    pub fn from_json(s: &str) -> Result<Self> {
        let ck: CheckpointJson = serde_json::from_str(s)?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!(
                "unsupported checkpoint format `{}`",
                ck.format
            )));
        }
        let mut layout = ParamLayout::new();
        let mut values = Vec::new();
        for (name, t) in ck.params {
            let expected: usize = t.shape.iter().product();
            if expected != t.data.len() {
                return Err(Error::ShapeMismatch {
                    name,
                    expected,
                    found: t.data.len(),
                });
            }
            layout = layout.with(&name, &t.shape);
            values.extend(t.data);
        }
        Ok(ParamVec { layout, values })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Something with a flat, named parameter vector.
pub trait Parameterized {
    fn layout(&self) -> ParamLayout;
    fn values(&self) -> Vec<f64>;
    fn set_values(&mut self, values: &[f64]) -> Result<()>;

    fn params(&self) -> ParamVec {
        ParamVec {
            layout: self.layout(),
            values: self.values(),
        }
    }

    /// Loads by block name, so checkpoints in any block order are accepted.
    fn load_params(&mut self, p: &ParamVec) -> Result<()> {
        let layout = self.layout();
        let mut values = Vec::with_capacity(layout.total_len());
        for b in layout.blocks() {
            let src = p.get(&b.name).ok_or_else(|| {
                Error::Config(format!("checkpoint is missing parameter `{}`", b.name))
            })?;
            if src.len() != b.len() {
                return Err(Error::ShapeMismatch {
                    name: b.name.clone(),
                    expected: b.len(),
                    found: src.len(),
                });
            }
            values.extend_from_slice(src);
        }
        self.set_values(&values)
    }
}

pub(crate) fn check_len(name: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch {
            name: name.to_string(),
            expected,
            found,
        });
    }
    Ok(())
}
