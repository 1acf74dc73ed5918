use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layers::{Conv2d, DepthwiseConv2d, Linear, ParamMut};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Std of the seeded Gaussian weights before the caller's scale factor.
pub const INIT_STD: f64 = 0.02;
/// RSCA residual scale at init, before the caller's scale factor.
pub const INIT_GAMMA: f64 = 0.1;

/// Shapes shared by every block of one toy stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    /// Feature channels `C`.
    pub channels: usize,
    /// Attention heads `N`; must divide `channels`.
    pub heads: usize,
    /// Cross-attention token width `N_d`.
    pub token_dim: usize,
    /// Hidden width of the CTB feed-forward branch.
    pub ffn_hidden: usize,
    /// Shape `(N_h, N_w)` of the measurement consumed by the MEB.
    pub measurement_shape: (usize, usize),
    /// MACA pooling factor `D`.
    pub downsample: usize,
}

impl BlockConfig {
    pub fn new(channels: usize, heads: usize, measurement_shape: (usize, usize), downsample: usize) -> Result<Self> {
        let cfg = Self {
            channels,
            heads,
            token_dim: channels,
            ffn_hidden: 2 * channels,
            measurement_shape,
            downsample,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.channels,
            self.heads,
            self.token_dim,
            self.ffn_hidden,
            self.measurement_shape.0,
            self.measurement_shape.1,
            self.downsample,
        ];
        if dims.contains(&0) {
            return Err(Error::InvalidParameter(format!(
                "block dimensions must be positive: {self:?}"
            )));
        }
        if !self.channels.is_multiple_of(self.heads) {
            return Err(Error::InvalidParameter(format!(
                "channels {} not divisible by heads {}",
                self.channels, self.heads
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScbWeights {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelAttentionWeights {
    pub heads: usize,
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub proj: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RscaWeights {
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CtbWeights {
    pub scb: ScbWeights,
    pub attention: ChannelAttentionWeights,
    pub rsca: RscaWeights,
    /// 1x1 fusion of the concatenated branches, `2C -> C`.
    pub fuse: Conv2d,
    pub ffn_in: Conv2d,
    pub ffn_dw: DepthwiseConv2d,
    pub ffn_out: Conv2d,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MebWeights {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    /// Row features `N_w -> N_d`.
    pub row_proj: Linear,
    pub q_head: Linear,
    pub k_head: Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MacaWeights {
    pub meb: MebWeights,
    pub key: Linear,
    pub value: Linear,
    pub query: Linear,
    pub out: Linear,
}

/// Every parameter of one toy denoiser stage.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockWeights {
    pub config: BlockConfig,
    pub seed: u64,
    pub lift: Conv2d,
    pub ctb: CtbWeights,
    pub maca: MacaWeights,
    pub project: Conv2d,
}

/// One entry of the weight manifest; `offset` counts `f64`s into the raw file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub config: BlockConfig,
    pub seed: u64,
    pub gamma: f64,
    pub params: Vec<ParamEntry>,
}

impl BlockWeights {
    /// All-zero weights with `gamma = 0`.
    pub fn zeros(config: BlockConfig) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let d = config.token_dim;
        let (_, nw) = config.measurement_shape;
        Ok(Self {
            config,
            seed: 0,
            lift: Conv2d::zeros(1, c, 3),
            ctb: CtbWeights {
                scb: ScbWeights {
                    conv1: Conv2d::zeros(c, c, 3),
                    conv2: Conv2d::zeros(c, c, 3),
                },
                attention: ChannelAttentionWeights {
                    heads: config.heads,
                    wq: Linear::zeros(c, c),
                    wk: Linear::zeros(c, c),
                    wv: Linear::zeros(c, c),
                    proj: Linear::zeros(c, c),
                },
                rsca: RscaWeights { gamma: 0.0 },
                fuse: Conv2d::zeros(2 * c, c, 1),
                ffn_in: Conv2d::zeros(c, config.ffn_hidden, 3),
                ffn_dw: DepthwiseConv2d::zeros(config.ffn_hidden),
                ffn_out: Conv2d::zeros(config.ffn_hidden, c, 1),
            },
            maca: MacaWeights {
                meb: MebWeights {
                    conv1: Conv2d::zeros(1, d, 3),
                    conv2: Conv2d::zeros(d, d, 3),
                    row_proj: Linear::zeros(nw, d),
                    q_head: Linear::zeros(d, d),
                    k_head: Linear::zeros(d, d),
                },
                key: Linear::zeros(c, d),
                value: Linear::zeros(c, d),
                query: Linear::zeros(c, d),
                out: Linear::zeros(d, c),
            },
            project: Conv2d::zeros(c, 1, 3),
        })
    }

    /// Zero weights except identity lift/project on channel 0: the stage
    /// then passes its input through unchanged.
    pub fn passthrough(config: BlockConfig) -> Result<Self> {
        let mut w = Self::zeros(config)?;
        w.lift.set_passthrough(0, 0);
        w.project.set_passthrough(0, 0);
        Ok(w)
    }

    /// Seeded Gaussian weights with std `0.02 * scale`, zero biases,
    /// `gamma = 0.1 * scale`, and the identity lift/project added on top so
    /// the stage starts near the identity map.
    pub fn seeded(config: BlockConfig, seed: u64, scale: f64) -> Result<Self> {
        if !scale.is_finite() || scale < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "weight scale must be finite and >= 0, got {scale}"
            )));
        }
        let mut w = Self::zeros(config)?;
        w.seed = seed;
        let mut rng = Rng::for_task(seed, &[7]);
        for p in w.params_mut() {
            if p.name.ends_with(".weight") {
                for v in p.data.iter_mut() {
                    *v = INIT_STD * scale * rng.standard_normal();
                }
            }
        }
        w.ctb.rsca.gamma = INIT_GAMMA * scale;
        let (l, pr) = (&mut w.lift, &mut w.project);
        let (li, pi) = (l.weight_index(0, 0, 1, 1), pr.weight_index(0, 0, 1, 1));
        l.weight[li] += 1.0;
        pr.weight[pi] += 1.0;
        Ok(w)
    }

    /// Visits every array parameter in a fixed canonical order.
    pub fn params_mut(&mut self) -> Vec<ParamMut<'_>> {
        let mut out = Vec::new();
        self.lift.params_mut("lift", &mut out);
        let ctb = &mut self.ctb;
        ctb.scb.conv1.params_mut("ctb.scb.conv1", &mut out);
        ctb.scb.conv2.params_mut("ctb.scb.conv2", &mut out);
        ctb.attention.wq.params_mut("ctb.attention.wq", &mut out);
        ctb.attention.wk.params_mut("ctb.attention.wk", &mut out);
        ctb.attention.wv.params_mut("ctb.attention.wv", &mut out);
        ctb.attention.proj.params_mut("ctb.attention.proj", &mut out);
        ctb.fuse.params_mut("ctb.fuse", &mut out);
        ctb.ffn_in.params_mut("ctb.ffn_in", &mut out);
        ctb.ffn_dw.params_mut("ctb.ffn_dw", &mut out);
        ctb.ffn_out.params_mut("ctb.ffn_out", &mut out);
        let maca = &mut self.maca;
        maca.meb.conv1.params_mut("maca.meb.conv1", &mut out);
        maca.meb.conv2.params_mut("maca.meb.conv2", &mut out);
        maca.meb.row_proj.params_mut("maca.meb.row_proj", &mut out);
        maca.meb.q_head.params_mut("maca.meb.q_head", &mut out);
        maca.meb.k_head.params_mut("maca.meb.k_head", &mut out);
        maca.key.params_mut("maca.key", &mut out);
        maca.value.params_mut("maca.value", &mut out);
        maca.query.params_mut("maca.query", &mut out);
        maca.out.params_mut("maca.out", &mut out);
        self.project.params_mut("project", &mut out);
        out
    }

    pub fn parameter_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.data.len()).sum::<usize>() + 1
    }

    /// Raw little-endian `f64` payload plus its manifest. `gamma` lives in
    /// the manifest, not the payload.
    pub fn dump(&mut self) -> (Vec<u8>, WeightManifest) {
        let config = self.config;
        let seed = self.seed;
        let gamma = self.ctb.rsca.gamma;
        let mut bytes = Vec::new();
        let mut params = Vec::new();
        let mut offset = 0;
        for p in self.params_mut() {
            for v in p.data.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            params.push(ParamEntry {
                name: p.name,
                shape: p.shape,
                offset,
            });
            offset += p.data.len();
        }
        (
            bytes,
            WeightManifest {
                config,
                seed,
                gamma,
                params,
            },
        )
    }

    pub fn load(bytes: &[u8], manifest: &WeightManifest) -> Result<Self> {
        let mut w = Self::zeros(manifest.config)?;
        w.seed = manifest.seed;
        if !manifest.gamma.is_finite() {
            return Err(Error::NonFinite {
                context: "weight manifest gamma",
            });
        }
        w.ctb.rsca.gamma = manifest.gamma;
        let params = w.params_mut();
        if params.len() != manifest.params.len() {
            return Err(Error::InvalidParameter(format!(
                "manifest lists {} parameters, configuration needs {}",
                manifest.params.len(),
                params.len()
            )));
        }
        let mut expected_offset = 0;
        for (p, entry) in params.into_iter().zip(&manifest.params) {
            if p.name != entry.name || p.shape != entry.shape || entry.offset != expected_offset {
                return Err(Error::InvalidParameter(format!(
                    "manifest entry {} {:?}@{} does not match expected {} {:?}@{}",
                    entry.name, entry.shape, entry.offset, p.name, p.shape, expected_offset
                )));
            }
            let start = 8 * entry.offset;
            let end = start + 8 * p.data.len();
            let raw = bytes
                .get(start..end)
                .ok_or_else(|| Error::parse(bytes.len(), format!("weights truncated in {}", entry.name)))?;
            for (dst, chunk) in p.data.iter_mut().zip(raw.chunks_exact(8)) {
                let v = f64::from_le_bytes(chunk.try_into().unwrap());
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: "loaded weights",
                    });
                }
                *dst = v;
            }
            expected_offset += p.data.len();
        }
        if bytes.len() != 8 * expected_offset {
            return Err(Error::parse(8 * expected_offset, "trailing bytes after weights"));
        }
        Ok(w)
    }

    /// Writes the raw payload and the JSON manifest.
    pub fn save_files(&mut self, bin: &Path, manifest_path: &Path) -> Result<()> {
        let (bytes, manifest) = self.dump();
        std::fs::write(bin, bytes)?;
        std::fs::write(manifest_path, serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load_files(bin: &Path, manifest_path: &Path) -> Result<Self> {
        let manifest: WeightManifest = serde_json::from_slice(&std::fs::read(manifest_path)?)?;
        Self::load(&std::fs::read(bin)?, &manifest)
    }
}
