//! Trained upscalers behind one type, and their on-disk format.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::baseline::ConvBaseline;
use super::interpret::{argmax_interpret, interpret, CellOverride, DEFAULT_THRESHOLD};
use super::network::LayerScalingNetwork;
use crate::dataset::{read_header, verify_trailer};
use crate::error::{Error, Result};
use crate::grid::{LevelGrid, OneHotLevel};
use crate::tensor::{LayerSpec, Tensor};
use crate::tile::{Tile, TileAlphabet, TILE_COUNT};

const MODEL_MAGIC: &[u8; 8] = b"LODEMDL\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    /// Per-tile sigmoid layers read by threshold interpretation.
    LayerScaling,
    /// Layer scaling network read through its softmax training head.
    HeadOnly,
    /// Plain convolutional network read by argmax.
    Conv,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [
        Architecture::LayerScaling,
        Architecture::HeadOnly,
        Architecture::Conv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::LayerScaling => "layer-scaling",
            Architecture::HeadOnly => "head-only",
            Architecture::Conv => "conv",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    LayerScaling(LayerScalingNetwork<f32>),
    HeadOnly(LayerScalingNetwork<f32>),
    Conv(ConvBaseline<f32>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format_version: u32,
    pub architecture: Architecture,
    pub alphabet: TileAlphabet,
    pub input_size: usize,
    pub output_size: usize,
    /// Layer tiles in evaluation order; empty for the conv baseline.
    pub tile_order: Vec<Tile>,
    pub layers: Vec<LayerSpec>,
    pub has_head: bool,
    pub tensors: Vec<TensorEntry>,
}

/// Header plus the SHA-256 of the file, as reported by `model info`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    #[serde(flatten)]
    pub header: ModelHeader,
    pub parameter_count: usize,
    pub sha256: String,
}

impl Model {
    pub fn architecture(&self) -> Architecture {
        match self {
            Model::LayerScaling(_) => Architecture::LayerScaling,
            Model::HeadOnly(_) => Architecture::HeadOnly,
            Model::Conv(_) => Architecture::Conv,
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            Model::LayerScaling(n) | Model::HeadOnly(n) => n.input_size(),
            Model::Conv(c) => c.input_size(),
        }
    }

    pub fn output_size(&self) -> usize {
        2 * self.input_size()
    }

    pub fn header(&self) -> ModelHeader {
        let (tile_order, layers, has_head) = match self {
            Model::LayerScaling(n) | Model::HeadOnly(n) => (
                n.tile_order(),
                n.layers().iter().flat_map(|l| l.specs()).collect(),
                n.head().is_some(),
            ),
            Model::Conv(c) => (Vec::new(), c.specs(), false),
        };
        let tensors = self
            .clone()
            .tensors_mut()
            .into_iter()
            .map(|(name, shape, _)| TensorEntry { name, shape })
            .collect();
        ModelHeader {
            format_version: MODEL_FORMAT_VERSION,
            architecture: self.architecture(),
            alphabet: TileAlphabet::lode_runner(),
            input_size: self.input_size(),
            output_size: self.output_size(),
            tile_order,
            layers,
            has_head,
            tensors,
        }
    }

    /// Every stored tensor in file order, batchnorm running statistics
    /// included.
    fn tensors_mut(&mut self) -> Vec<TensorSlot<'_>> {
        let mut out = Vec::new();
        match self {
            Model::LayerScaling(n) | Model::HeadOnly(n) => {
                let mut stats = Vec::new();
                let (layers, head) = n.parts_mut();
                for layer in layers {
                    let tile = layer.tile.name();
                    out.push(entry(
                        format!("{tile}.conv1.weight"),
                        &mut layer.conv1.weight.value,
                    ));
                    out.push(entry(
                        format!("{tile}.conv1.bias"),
                        &mut layer.conv1.bias.value,
                    ));
                    out.push(entry(
                        format!("{tile}.conv2.weight"),
                        &mut layer.conv2.weight.value,
                    ));
                    out.push(entry(
                        format!("{tile}.conv2.bias"),
                        &mut layer.conv2.bias.value,
                    ));
                    out.push(entry(format!("{tile}.bn.gamma"), &mut layer.bn.gamma.value));
                    out.push(entry(format!("{tile}.bn.beta"), &mut layer.bn.beta.value));
                    out.push(entry(
                        format!("{tile}.deconv.weight"),
                        &mut layer.deconv.weight.value,
                    ));
                    out.push(entry(
                        format!("{tile}.deconv.bias"),
                        &mut layer.deconv.bias.value,
                    ));
                    stats.push((tile, &mut layer.bn.running_mean, &mut layer.bn.running_var));
                }
                for (tile, mean, var) in stats {
                    let c = mean.len();
                    out.push((
                        format!("{tile}.bn.running_mean"),
                        vec![c],
                        mean.as_mut_slice(),
                    ));
                    out.push((
                        format!("{tile}.bn.running_var"),
                        vec![c],
                        var.as_mut_slice(),
                    ));
                }
                if let Some(h) = head {
                    out.push(entry("head.weight", &mut h.deconv.weight.value));
                    out.push(entry("head.bias", &mut h.deconv.bias.value));
                }
            }
            Model::Conv(c) => {
                out.push(entry("conv1.weight", &mut c.conv1.weight.value));
                out.push(entry("conv1.bias", &mut c.conv1.bias.value));
                out.push(entry("conv2.weight", &mut c.conv2.weight.value));
                out.push(entry("conv2.bias", &mut c.conv2.bias.value));
                out.push(entry("deconv.weight", &mut c.deconv.weight.value));
                out.push(entry("deconv.bias", &mut c.deconv.bias.value));
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.header()
            .tensors
            .iter()
            .map(|t| t.shape.iter().product::<usize>())
            .sum()
    }

    /// Serialized bytes; the last 32 are the SHA-256 of everything before.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = self.header();
        let json = serde_json::to_vec(&header)?;
        let mut body = Vec::new();
        body.extend_from_slice(MODEL_MAGIC);
        body.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        body.extend_from_slice(&(json.len() as u32).to_le_bytes());
        body.extend_from_slice(&json);
        let mut copy = self.clone();
        for (_, _, data) in copy.tensors_mut() {
            for v in data.iter() {
                body.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&body);
        body.extend_from_slice(&digest);
        Ok(body)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let body = verify_trailer(bytes, MODEL_MAGIC)?;
        let (header, payload): (ModelHeader, &[u8]) = read_header(body, MODEL_FORMAT_VERSION)?;
        if header.alphabet != TileAlphabet::lode_runner() {
            return Err(Error::Model(
                "model alphabet differs from the Lode Runner set".into(),
            ));
        }
        let mut model = match header.architecture {
            Architecture::Conv => Model::Conv(ConvBaseline::new(header.input_size, 0)),
            arch => {
                let mut net = LayerScalingNetwork::new(&header.tile_order, header.input_size, 0)
                    .map_err(|e| Error::Model(e.to_string()))?;
                if header.has_head {
                    net.attach_head(0);
                }
                if arch == Architecture::HeadOnly {
                    Model::HeadOnly(net)
                } else {
                    Model::LayerScaling(net)
                }
            }
        };
        let mut tensors = model.tensors_mut();
        if tensors.len() != header.tensors.len() {
            return Err(Error::Model(
                "tensor list does not match the architecture".into(),
            ));
        }
        let expected: usize = tensors.iter().map(|(_, _, d)| d.len()).sum();
        if payload.len() != expected * 4 {
            return Err(Error::Format(format!(
                "payload holds {} bytes, architecture needs {}",
                payload.len(),
                expected * 4
            )));
        }
        let mut cursor = payload.chunks_exact(4);
        for ((name, shape, data), entry) in tensors.iter_mut().zip(&header.tensors) {
            if *name != entry.name || *shape != entry.shape {
                return Err(Error::Model(format!(
                    "unexpected tensor {} {:?}",
                    entry.name, entry.shape
                )));
            }
            for v in data.iter_mut() {
                *v = f32::from_le_bytes(
                    cursor
                        .next()
                        .expect("length checked")
                        .try_into()
                        .expect("4 bytes"),
                );
            }
        }
        drop(tensors);
        if let Model::LayerScaling(n) | Model::HeadOnly(n) = &mut model {
            for layer in n.layers_mut() {
                layer.set_frozen(true);
            }
        }
        Ok(model)
    }

    /// Writes the model and returns its SHA-256 in hex.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<String> {
        let bytes = self.to_bytes()?;
        fs::write(path, &bytes)?;
        Ok(hex::encode(&bytes[bytes.len() - 32..]))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        Model::from_bytes(&fs::read(path)?)
    }

    fn check_grid(&self, grid: &LevelGrid) -> Result<()> {
        let s = self.input_size();
        if grid.width() != s || grid.height() != s {
            return Err(Error::shape(format!(
                "model scales {s}x{s} grids, got {}x{}",
                grid.width(),
                grid.height()
            )));
        }
        Ok(())
    }

    pub fn upscale(&self, grid: &LevelGrid) -> Result<LevelGrid> {
        self.upscale_with_overrides(grid, None)
    }

    /// Upscales one grid; `overrides` (one entry per output cell) protect
    /// existing cells of the target canvas.
    pub fn upscale_with_overrides(
        &self,
        grid: &LevelGrid,
        overrides: Option<&[Option<CellOverride>]>,
    ) -> Result<LevelGrid> {
        self.check_grid(grid)?;
        let out = self.output_size();
        if overrides.is_some_and(|o| o.len() != out * out) {
            return Err(Error::shape("override list does not match the output grid"));
        }
        match self {
            Model::LayerScaling(n) => {
                let maps = n.probability_maps(&grid.one_hot())?;
                interpret(&maps, &n.tile_order(), DEFAULT_THRESHOLD, overrides)
            }
            Model::HeadOnly(n) => {
                let probs = n.head_probs(&Tensor::from_one_hot(&[&grid.one_hot()])?)?;
                argmax_interpret(probs.data(), out, out, overrides)
            }
            Model::Conv(c) => {
                let probs = c.forward_batch(&Tensor::from_one_hot(&[&grid.one_hot()])?)?;
                argmax_interpret(probs.data(), out, out, overrides)
            }
        }
    }

    /// Batched [`Model::upscale`].
    pub fn upscale_batch(&self, grids: &[LevelGrid]) -> Result<Vec<LevelGrid>> {
        let mut result = Vec::with_capacity(grids.len());
        for chunk in grids.chunks(64) {
            for g in chunk {
                self.check_grid(g)?;
            }
            let encoded: Vec<OneHotLevel> = chunk.iter().map(|g| g.one_hot()).collect();
            let user = Tensor::from_one_hot(&encoded.iter().collect::<Vec<_>>())?;
            let out = self.output_size();
            let plane = out * out;
            match self {
                Model::LayerScaling(n) => {
                    let order = n.tile_order();
                    let scaled = n.forward_batch(&user)?.scaled;
                    for i in 0..chunk.len() {
                        let maps: Vec<_> = scaled
                            .iter()
                            .map(|t| {
                                super::interpret::ProbabilityMap::new(
                                    out,
                                    out,
                                    t.sample(i).to_vec(),
                                )
                            })
                            .collect();
                        result.push(interpret(&maps, &order, DEFAULT_THRESHOLD, None)?);
                    }
                }
                Model::HeadOnly(_) | Model::Conv(_) => {
                    let probs = match self {
                        Model::HeadOnly(n) => n.head_probs(&user)?,
                        Model::Conv(c) => c.forward_batch(&user)?,
                        Model::LayerScaling(_) => unreachable!(),
                    };
                    for i in 0..chunk.len() {
                        let sample =
                            &probs.data()[i * TILE_COUNT * plane..(i + 1) * TILE_COUNT * plane];
                        result.push(argmax_interpret(sample, out, out, None)?);
                    }
                }
            }
        }
        Ok(result)
    }

    /// SHA-256 of the serialized model.
    pub fn checksum(&self) -> Result<String> {
        let bytes = self.to_bytes()?;
        Ok(hex::encode(&bytes[bytes.len() - 32..]))
    }

    pub fn info(&self) -> Result<ModelInfo> {
        Ok(ModelInfo {
            header: self.header(),
            parameter_count: self.parameter_count(),
            sha256: self.checksum()?,
        })
    }
}

type TensorSlot<'a> = (String, Vec<usize>, &'a mut [f32]);

fn entry(name: impl Into<String>, t: &mut Tensor<f32>) -> TensorSlot<'_> {
    let shape = t.shape().to_vec();
    (name.into(), shape, t.data_mut())
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<String> {
    model.save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    Model::load(path)
}
