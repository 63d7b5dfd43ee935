//! Binary checkpoint: `"INHERNET"`, u32 LE version, u64 LE manifest length,
//! JSON manifest, then every parameter as little-endian f64 in manifest order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::write_atomic;
use crate::error::{Error, Result};
use crate::inherit::{
    Combiner, Gate, GateInput, InherConvLayer, InherNetLayer, InverseLayer, SymmetricLayer,
};
use crate::linalg::{Matrix, Tensor4D};
use crate::nn::{Conv2DLayer, DenseLayer, Layer, Network};

pub const MAGIC: &[u8; 8] = b"INHERNET";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameter-free description of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        input: usize,
        output: usize,
        bias: bool,
    },
    Relu,
    Conv2d {
        kernel: [usize; 4],
        stride: usize,
        padding: usize,
        input_hw: (usize, usize),
        bias: bool,
    },
    Inher {
        m: usize,
        n: usize,
        rank: usize,
        heads: usize,
        head_bias: bool,
        gate: Option<GateInput>,
        combiner: Combiner,
        bias: bool,
    },
    InherConv {
        spatial_kernel: [usize; 4],
        stride: usize,
        padding: usize,
        input_hw: (usize, usize),
        out_channels: usize,
        heads: usize,
        gate: Option<GateInput>,
        combiner: Combiner,
        bias: bool,
    },
    Inverse {
        m: usize,
        n: usize,
        rank: usize,
        heads: usize,
        gate: bool,
        combiner: Combiner,
        bias: bool,
    },
    Symmetric {
        m: usize,
        n: usize,
        rank: usize,
        heads: usize,
        gate: bool,
        combiner: Combiner,
        bias: bool,
    },
}

impl LayerSpec {
    pub fn of(layer: &Layer) -> LayerSpec {
        match layer {
            Layer::Dense(l) => LayerSpec::Dense {
                input: l.input_dim(),
                output: l.output_dim(),
                bias: l.bias.is_some(),
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Conv2d(l) => LayerSpec::Conv2d {
                kernel: l.kernel.dims(),
                stride: l.stride,
                padding: l.padding,
                input_hw: l.input_hw,
                bias: l.bias.is_some(),
            },
            Layer::Inher(l) => LayerSpec::Inher {
                m: l.input_dim(),
                n: l.output_dim(),
                rank: l.rank(),
                heads: l.num_heads(),
                head_bias: l.head_bias.is_some(),
                gate: l.gate.as_ref().map(|g| g.input),
                combiner: l.combiner,
                bias: l.bias.is_some(),
            },
            Layer::InherConv(l) => LayerSpec::InherConv {
                spatial_kernel: l.spatial.kernel.dims(),
                stride: l.spatial.stride,
                padding: l.spatial.padding,
                input_hw: l.spatial.input_hw,
                out_channels: l.out_channels(),
                heads: l.num_heads(),
                gate: l.gate.as_ref().map(|g| g.input),
                combiner: l.combiner,
                bias: l.bias.is_some(),
            },
            Layer::Inverse(l) => LayerSpec::Inverse {
                m: l.input_dim(),
                n: l.output_dim(),
                rank: l.rank(),
                heads: l.num_heads(),
                gate: l.gate.is_some(),
                combiner: l.combiner,
                bias: l.bias.is_some(),
            },
            Layer::Symmetric(l) => LayerSpec::Symmetric {
                m: l.input_dim(),
                n: l.output_dim(),
                rank: l.rank(),
                heads: l.num_heads(),
                gate: l.gate.is_some(),
                combiner: l.combiner,
                bias: l.bias.is_some(),
            },
        }
    }

    /// Zero-filled layer with this topology.
    pub fn skeleton(&self) -> Result<Layer> {
        let bias = |on: bool, n: usize| on.then(|| vec![0.0; n]);
        Ok(match self {
            LayerSpec::Dense { input, output, bias: b } => {
                Layer::Dense(DenseLayer::new(Matrix::zeros(*input, *output), bias(*b, *output))?)
            }
            LayerSpec::Relu => Layer::Relu,
            LayerSpec::Conv2d {
                kernel,
                stride,
                padding,
                input_hw,
                bias: b,
            } => Layer::Conv2d(Conv2DLayer::new(
                Tensor4D::from_vec(*kernel, vec![0.0; kernel.iter().product()])?,
                bias(*b, kernel[0]),
                *stride,
                *padding,
                *input_hw,
            )?),
            LayerSpec::Inher {
                m,
                n,
                rank,
                heads,
                head_bias,
                gate,
                combiner,
                bias: b,
            } => {
                let gate = gate.map(|gi| {
                    let d = if gi == GateInput::Code { *rank } else { *m };
                    Gate::zeros(d, *heads, gi)
                });
                let mut l = InherNetLayer::new(
                    Matrix::zeros(*m, *rank),
                    vec![Matrix::zeros(*rank, *n); *heads],
                    gate,
                    *combiner,
                    bias(*b, *n),
                )?;
                if *head_bias {
                    l.head_bias = Some(vec![vec![0.0; *n]; *heads]);
                }
                Layer::Inher(l)
            }
            LayerSpec::InherConv {
                spatial_kernel,
                stride,
                padding,
                input_hw,
                out_channels,
                heads,
                gate,
                combiner,
                bias: b,
            } => {
                let spatial = Conv2DLayer::new(
                    Tensor4D::from_vec(*spatial_kernel, vec![0.0; spatial_kernel.iter().product()])?,
                    None,
                    *stride,
                    *padding,
                    *input_hw,
                )?;
                let r = spatial_kernel[0];
                let gate = gate.map(|gi| {
                    let d = if gi == GateInput::Code { r } else { spatial_kernel[1] };
                    Gate::zeros(d, *heads, gi)
                });
                let l = InherConvLayer {
                    spatial,
                    heads: vec![Tensor4D::zeros([*out_channels, r, 1, 1]); *heads],
                    gate,
                    combiner: *combiner,
                    bias: bias(*b, *out_channels),
                };
                l.validate()?;
                Layer::InherConv(l)
            }
            LayerSpec::Inverse {
                m,
                n,
                rank,
                heads,
                gate,
                combiner,
                bias: b,
            } => {
                let l = InverseLayer {
                    downs: vec![Matrix::zeros(*m, *rank); *heads],
                    w_up: Matrix::zeros(*rank, *n),
                    gate: gate.then(|| Gate::zeros(*m, *heads, GateInput::Input)),
                    combiner: *combiner,
                    bias: bias(*b, *n),
                };
                l.validate()?;
                Layer::Inverse(l)
            }
            LayerSpec::Symmetric {
                m,
                n,
                rank,
                heads,
                gate,
                combiner,
                bias: b,
            } => {
                let l = SymmetricLayer {
                    downs: vec![Matrix::zeros(*m, *rank); *heads],
                    ups: vec![Matrix::zeros(*rank, *n); *heads],
                    gate: gate.then(|| Gate::zeros(*m, *heads, GateInput::Input)),
                    combiner: *combiner,
                    bias: bias(*b, *n),
                };
                l.validate()?;
                Layer::Symmetric(l)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerEntry {
    name: String,
    spec: LayerSpec,
    tensors: Vec<TensorEntry>,
    count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    layers: Vec<LayerEntry>,
    seed: Option<u64>,
    #[serde(default)]
    config: serde_json::Value,
}

/// A network plus the provenance stored alongside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub seed: Option<u64>,
    /// Free-form settings (task, training, inheritance) recorded at save time.
    pub config: serde_json::Value,
}

impl Checkpoint {
    pub fn new(network: Network) -> Self {
        Self {
            network,
            seed: None,
            config: serde_json::Value::Null,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let layers: Vec<LayerEntry> = self
            .network
            .layers()
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let tensors: Vec<TensorEntry> = l
                    .param_names()
                    .into_iter()
                    .zip(l.params())
                    .map(|(name, p)| TensorEntry { name, count: p.len() })
                    .collect();
                LayerEntry {
                    name: format!("layer {i} ({})", l.kind()),
                    spec: LayerSpec::of(l),
                    count: tensors.iter().map(|t| t.count).sum(),
                    tensors,
                }
            })
            .collect();
        let manifest = serde_json::to_vec(&Manifest {
            layers,
            seed: self.seed,
            config: self.config.clone(),
        })?;
        let mut out = Vec::with_capacity(20 + manifest.len() + 8 * self.network.parameter_count());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for l in self.network.layers() {
            for p in l.params() {
                for v in p {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::Format("missing INHERNET magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported version {version} (expected {CHECKPOINT_VERSION})")));
        }
        let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let body = &bytes[20..];
        if mlen > body.len() as u64 {
            return Err(Error::Format(format!(
                "manifest length {mlen} exceeds remaining {} bytes",
                body.len()
            )));
        }
        let (mtext, blob) = body.split_at(mlen as usize);
        let manifest: Manifest =
            serde_json::from_slice(mtext).map_err(|e| Error::Format(format!("bad manifest: {e}")))?;

        let mut layers = Vec::with_capacity(manifest.layers.len());
        let mut off = 0usize;
        for entry in &manifest.layers {
            let mut layer = entry.spec.skeleton()?;
            let shapes: Vec<usize> = layer.params().iter().map(|p| p.len()).collect();
            let declared: Vec<usize> = entry.tensors.iter().map(|t| t.count).collect();
            let expected: usize = shapes.iter().sum();
            if declared != shapes || entry.count != expected {
                return Err(Error::Corruption {
                    layer: entry.name.clone(),
                    expected: expected * 8,
                    actual: entry.count * 8,
                });
            }
            let need = expected * 8;
            let have = blob.len().saturating_sub(off);
            if have < need {
                return Err(Error::Corruption {
                    layer: entry.name.clone(),
                    expected: need,
                    actual: have,
                });
            }
            for p in layer.params_mut() {
                for v in p.iter_mut() {
                    *v = f64::from_le_bytes(blob[off..off + 8].try_into().expect("8 bytes"));
                    off += 8;
                }
            }
            layers.push(layer);
        }
        if off != blob.len() {
            return Err(Error::Corruption {
                layer: "end of blob".into(),
                expected: off,
                actual: blob.len(),
            });
        }
        Ok(Checkpoint {
            network: Network::new(layers)?,
            seed: manifest.seed,
            config: manifest.config,
        })
    }
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    save_checkpoint_full(&Checkpoint::new(net.clone()), path)
}

pub fn save_checkpoint_full(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    Ok(load_checkpoint_full(path)?.network)
}

pub fn load_checkpoint_full(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
