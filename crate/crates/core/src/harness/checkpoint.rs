//! Network checkpoints: one flat little-endian `f64` file plus a text
//! manifest of tensor names and shapes.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::agent::Learner;
use crate::error::{Error, Result};

pub const PARAMS_FILE: &str = "params.bin";
pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn from_learners(learners: &[Box<dyn Learner>]) -> Self {
        let mut tensors = Vec::new();
        for (i, learner) in learners.iter().enumerate() {
            for (net_name, net) in learner.networks() {
                for (l, layer) in net.layers().iter().enumerate() {
                    let prefix = format!("agent{i}/{net_name}/layer{l}");
                    let (r, c) = layer.weight.dim();
                    tensors.push(Tensor {
                        name: format!("{prefix}/weight"),
                        shape: vec![r, c],
                        data: layer.weight.iter().copied().collect(),
                    });
                    tensors.push(Tensor {
                        name: format!("{prefix}/bias"),
                        shape: vec![layer.bias.len()],
                        data: layer.bias.to_vec(),
                    });
                }
            }
        }
        Self { tensors }
    }

    /// Copies every tensor into the matching learner network. Names and
    /// shapes must agree exactly.
    pub fn apply(&self, learners: &mut [Box<dyn Learner>]) -> Result<()> {
        let mut it = self.tensors.iter();
        for (i, learner) in learners.iter_mut().enumerate() {
            for (net_name, net) in learner.networks_mut() {
                for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                    let prefix = format!("agent{i}/{net_name}/layer{l}");
                    let w = next_tensor(&mut it, &format!("{prefix}/weight"), &[layer.weight.nrows(), layer.weight.ncols()])?;
                    let b = next_tensor(&mut it, &format!("{prefix}/bias"), &[layer.bias.len()])?;
                    layer.weight = Array2::from_shape_vec(layer.weight.raw_dim(), w.data.clone())
                        .map_err(|e| Error::Shape(e.to_string()))?;
                    layer.bias = Array1::from(b.data.clone());
                }
            }
        }
        if let Some(t) = it.next() {
            return Err(Error::Shape(format!("checkpoint has unused tensor `{}`", t.name)));
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut bytes = Vec::new();
        let mut manifest = String::new();
        for t in &self.tensors {
            let dims: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            manifest.push_str(&format!("{} {}\n", t.name, dims.join("x")));
            for v in &t.data {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(dir.join(PARAMS_FILE), bytes)?;
        fs::write(dir.join(MANIFEST_FILE), manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let bytes = fs::read(dir.join(PARAMS_FILE))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Shape("parameter file length is not a multiple of 8".into()));
        }
        let mut values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));
        let mut tensors = Vec::new();
        for (idx, line) in manifest.lines().enumerate() {
            let (name, shape) = line.split_once(' ').ok_or_else(|| Error::Parse {
                line: idx + 1,
                msg: format!("expected `name shape`, got `{line}`"),
            })?;
            let shape = shape
                .split('x')
                .map(|d| {
                    d.parse::<usize>().map_err(|_| Error::Parse {
                        line: idx + 1,
                        msg: format!("bad dimension `{d}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(count).collect();
            if data.len() != count {
                return Err(Error::Shape(format!("parameter file too short for `{name}`")));
            }
            tensors.push(Tensor {
                name: name.to_string(),
                shape,
                data,
            });
        }
        if values.next().is_some() {
            return Err(Error::Shape("parameter file has trailing values".into()));
        }
        Ok(Self { tensors })
    }
}

fn next_tensor<'a>(it: &mut std::slice::Iter<'a, Tensor>, name: &str, shape: &[usize]) -> Result<&'a Tensor> {
    let t = it
        .next()
        .ok_or_else(|| Error::Shape(format!("checkpoint is missing `{name}`")))?;
    if t.name != name || t.shape != shape {
        return Err(Error::Shape(format!(
            "expected `{name}` {shape:?}, found `{}` {:?}",
            t.name, t.shape
        )));
    }
    Ok(t)
}
