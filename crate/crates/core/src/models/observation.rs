use rand::Rng;
use tactloc_numerics::checkpoint::TlocEntry;
use tactloc_numerics::{
    concat_channels, split_channels, BatchNorm, Conv1d, Conv2d, ConvTranspose2d, DiffArray, Layer, MaxPool2d,
    Mode, Relu, Reshape, Scalar, Sequential, SoftmaxChannels,
};

use crate::datagen::NUM_CLASSES;
use crate::error::ModelError;

/// Layer widths and input geometry of the observation network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservationNetConfig {
    pub height: usize,
    pub width: usize,
    /// Footprint side; observations have `k²` readings.
    pub k: usize,
    /// Six entries; max-pooling follows the 4th and 6th layers.
    pub image_channels: Vec<usize>,
    /// Three 1-D convolution widths.
    pub obs_channels: Vec<usize>,
    /// Output widths of the two transposed convolutions.
    pub transposed_channels: Vec<usize>,
    /// Four convolution widths, two after each transposed convolution.
    pub decoder_channels: Vec<usize>,
    pub classes: usize,
    /// `false` drops the image pathway (touch-only baseline).
    pub use_image: bool,
    /// Shares one tactile embedding across every bottleneck cell instead of
    /// projecting densely onto the grid.
    pub tiled_projection: bool,
}

impl ObservationNetConfig {
    pub fn desk(height: usize, width: usize, k: usize) -> Self {
        Self {
            height,
            width,
            k,
            image_channels: vec![8, 8, 16, 16, 32, 32],
            obs_channels: vec![8, 16, 32],
            transposed_channels: vec![32, 16],
            decoder_channels: vec![16, 16, 8, 8],
            classes: NUM_CLASSES,
            use_image: true,
            tiled_projection: true,
        }
    }

    pub fn naive(height: usize, width: usize, k: usize) -> Self {
        Self {
            use_image: false,
            tiled_projection: false,
            ..Self::desk(height, width, k)
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.height == 0 || self.width == 0 || self.height % 4 != 0 || self.width % 4 != 0 {
            return bad(format!("grid {}x{} must be divisible by 4", self.height, self.width));
        }
        if self.k == 0 {
            return bad("footprint side must be positive".into());
        }
        if self.image_channels.len() != 6 {
            return bad(format!("image encoder needs 6 widths, got {}", self.image_channels.len()));
        }
        if self.obs_channels.len() != 3 {
            return bad(format!("observation encoder needs 3 widths, got {}", self.obs_channels.len()));
        }
        if self.transposed_channels.len() != 2 || self.decoder_channels.len() != 4 {
            return bad("decoder needs 2 transposed and 4 convolution widths".into());
        }
        let all = self
            .image_channels
            .iter()
            .chain(&self.obs_channels)
            .chain(&self.transposed_channels)
            .chain(&self.decoder_channels);
        if all.copied().any(|c| c == 0) || self.classes < 2 {
            return bad("channel counts must be positive".into());
        }
        Ok(())
    }

    pub fn bottleneck(&self) -> (usize, usize) {
        (self.height / 4, self.width / 4)
    }

    pub fn image_feature_channels(&self) -> usize {
        if self.use_image {
            self.image_channels[5]
        } else {
            0
        }
    }

    /// Image channels joined to the decoder after upsampling stage `stage`.
    pub fn skip_channels(&self, stage: usize) -> usize {
        match (self.use_image, stage) {
            (false, _) => 0,
            (true, 0) => self.image_channels[5],
            (true, _) => self.image_channels[3],
        }
    }

    pub fn obs_feature_channels(&self) -> usize {
        self.obs_channels[2]
    }

    /// Flat encoding stored in checkpoints.
    pub fn to_header(&self) -> Vec<f32> {
        let mut v = vec![
            self.height as f32,
            self.width as f32,
            self.k as f32,
            self.classes as f32,
            self.use_image as u8 as f32,
            self.tiled_projection as u8 as f32,
        ];
        for list in [&self.image_channels, &self.obs_channels, &self.transposed_channels, &self.decoder_channels] {
            v.push(list.len() as f32);
            v.extend(list.iter().map(|&c| c as f32));
        }
        v
    }

    pub fn from_header(v: &[f32]) -> Result<Self, ModelError> {
        let err = || ModelError::Checkpoint("malformed observation-net header".into());
        let mut it = v.iter().map(|&x| x as usize);
        let mut next = || it.next().ok_or_else(err);
        let height = next()?;
        let width = next()?;
        let k = next()?;
        let classes = next()?;
        let use_image = next()? != 0;
        let tiled_projection = next()? != 0;
        let mut lists = Vec::new();
        for _ in 0..4 {
            let n = next()?;
            lists.push((0..n).map(|_| next()).collect::<Result<Vec<_>, _>>()?);
        }
        let decoder_channels = lists.pop().ok_or_else(err)?;
        let transposed_channels = lists.pop().ok_or_else(err)?;
        let obs_channels = lists.pop().ok_or_else(err)?;
        let image_channels = lists.pop().ok_or_else(err)?;
        let cfg = Self {
            height,
            width,
            k,
            image_channels,
            obs_channels,
            transposed_channels,
            decoder_channels,
            classes,
            use_image,
            tiled_projection,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn conv_block<T: Scalar, R: Rng + ?Sized>(layers: &mut Vec<Layer<T>>, cin: usize, cout: usize, rng: &mut R) {
    layers.push(Conv2d::new(cin, cout, 3, 1, 1, rng).into());
    layers.push(BatchNorm::new(cout).into());
    layers.push(Relu::new().into());
}

struct Recorded {
    scene_of: Vec<usize>,
    scenes: usize,
}

/// Image features at full, half and quarter resolution. The first two feed
/// the decoder's skip connections.
pub struct ImageFeatures<T: Scalar> {
    pub full: DiffArray<T>,
    pub half: DiffArray<T>,
    pub bottleneck: DiffArray<T>,
}

impl<T: Scalar> ImageFeatures<T> {
    fn gather(&self, scene_of: &[usize]) -> Result<Self, ModelError> {
        Ok(Self {
            full: self.full.gather_batch(scene_of)?,
            half: self.half.gather_batch(scene_of)?,
            bottleneck: self.bottleneck.gather_batch(scene_of)?,
        })
    }
}

struct ImageEncoder<T: Scalar> {
    /// Layers 1-4 at full resolution.
    full: Sequential<T>,
    /// Pool, then layers 5-6.
    half: Sequential<T>,
    pool: Sequential<T>,
}

fn add_into<T: Scalar>(acc: &mut DiffArray<T>, other: &DiffArray<T>) {
    for (a, &b) in acc.values_mut().iter_mut().zip(other.values()) {
        *a += b;
    }
}

/// Image-conditioned observation model: depth image and tactile reading in,
/// per-pixel distribution over likelihood classes out.
///
/// The decoder is U-shaped: after each upsampling stage it sees the image
/// features of matching resolution. A batch pairs `S` depth images with `N`
/// observations; `scene_of[n]` names the image each observation belongs to,
/// so image features are computed once per scene and shared.
pub struct ObservationNet<T: Scalar = f32> {
    config: ObservationNetConfig,
    image: Option<ImageEncoder<T>>,
    obs: Sequential<T>,
    up: Vec<Sequential<T>>,
    blocks: Vec<Sequential<T>>,
    recorded: Option<Recorded>,
}

impl<T: Scalar> ObservationNet<T> {
    pub fn new<R: Rng + ?Sized>(config: ObservationNetConfig, rng: &mut R) -> Result<Self, ModelError> {
        config.validate()?;
        let ic = &config.image_channels;
        let image = if config.use_image {
            let mut full = Vec::new();
            let mut half = vec![MaxPool2d::new(2).into()];
            let mut cin = 1;
            for (i, &cout) in ic.iter().enumerate() {
                conv_block(if i < 4 { &mut full } else { &mut half }, cin, cout, rng);
                cin = cout;
            }
            Some(ImageEncoder {
                full: Sequential::new(full),
                half: Sequential::new(half),
                pool: Sequential::new(vec![MaxPool2d::new(2).into()]),
            })
        } else {
            None
        };

        let (bh, bw) = config.bottleneck();
        let oc = &config.obs_channels;
        let obs = Sequential::new(vec![
            Conv1d::new(1, oc[0], 3, 1, rng).into(),
            Relu::new().into(),
            Conv1d::new(oc[0], oc[1], 3, 1, rng).into(),
            Relu::new().into(),
            Conv1d::new(oc[1], oc[2], 3, 1, rng).into(),
            if config.tiled_projection {
                Reshape::tiled(oc[2] * config.k * config.k, &[oc[2], bh, bw], rng).into()
            } else {
                Reshape::learned(oc[2] * config.k * config.k, &[oc[2], bh, bw], rng).into()
            },
        ]);

        let tc = &config.transposed_channels;
        let dc = &config.decoder_channels;
        let mut up = Vec::new();
        let mut blocks = Vec::new();
        let mut cin = config.image_feature_channels() + config.obs_feature_channels();
        for stage in 0..2 {
            up.push(Sequential::new(vec![
                ConvTranspose2d::new(cin, tc[stage], 2, 2, 0, rng).into(),
                BatchNorm::new(tc[stage]).into(),
                Relu::new().into(),
            ]));
            let mut layers: Vec<Layer<T>> = Vec::new();
            conv_block(&mut layers, tc[stage] + config.skip_channels(stage), dc[2 * stage], rng);
            conv_block(&mut layers, dc[2 * stage], dc[2 * stage + 1], rng);
            cin = dc[2 * stage + 1];
            if stage == 1 {
                layers.push(Conv2d::new(cin, config.classes, 3, 1, 1, rng).into());
                layers.push(SoftmaxChannels::new().into());
            }
            blocks.push(Sequential::new(layers));
        }

        Ok(Self {
            config,
            image,
            obs,
            up,
            blocks,
            recorded: None,
        })
    }

    pub fn config(&self) -> &ObservationNetConfig {
        &self.config
    }

    pub fn is_naive(&self) -> bool {
        self.image.is_none()
    }

    /// `S×1×H×W` depth batch to `S×C×H/4×W/4` features.
    pub fn encode_image(&mut self, depth: &DiffArray<T>, mode: Mode) -> Result<DiffArray<T>, ModelError> {
        Ok(self.encode_image_levels(depth, mode)?.bottleneck)
    }

    /// Image features at every resolution the decoder uses.
    pub fn encode_image_levels(&mut self, depth: &DiffArray<T>, mode: Mode) -> Result<ImageFeatures<T>, ModelError> {
        let (h, w) = (self.config.height, self.config.width);
        let s = depth.shape();
        if s.len() != 4 || s[1] != 1 || s[2] != h || s[3] != w {
            return Err(ModelError::ImageShape {
                expected: (h, w),
                got: (s.get(2).copied().unwrap_or(0), s.get(3).copied().unwrap_or(0)),
            });
        }
        let image = self
            .image
            .as_mut()
            .ok_or_else(|| ModelError::Config("model has no image encoder".into()))?;
        let full = image.full.forward(depth, mode)?;
        let half = image.half.forward(&full, mode)?;
        let bottleneck = image.pool.forward(&half, mode)?;
        Ok(ImageFeatures { full, half, bottleneck })
    }

    /// `N×1×K²` observations to `N×C_obs×H/4×W/4` features.
    pub fn encode_observation(&mut self, obs: &DiffArray<T>, mode: Mode) -> Result<DiffArray<T>, ModelError> {
        let n = self.config.k * self.config.k;
        let s = obs.shape();
        if s.len() != 3 || s[1] != 1 || s[2] != n {
            return Err(ModelError::ObservationLength {
                expected: n,
                got: s.last().copied().unwrap_or(0),
            });
        }
        Ok(self.obs.forward(obs, mode)?)
    }

    /// Class probabilities `N×classes×H×W`. Image features, when present,
    /// must already be gathered to one entry per observation.
    pub fn decode_likelihood(
        &mut self,
        image: Option<&ImageFeatures<T>>,
        obs_features: &DiffArray<T>,
        mode: Mode,
    ) -> Result<DiffArray<T>, ModelError> {
        let mut x = match image {
            Some(f) => concat_channels(&f.bottleneck, obs_features)?,
            None => obs_features.clone(),
        };
        for stage in 0..2 {
            let u = self.up[stage].forward(&x, mode)?;
            let u = match image {
                Some(f) => concat_channels(&u, if stage == 0 { &f.half } else { &f.full })?,
                None => u,
            };
            x = self.blocks[stage].forward(&u, mode)?;
        }
        Ok(x)
    }

    /// Full forward pass; in training mode it records what `backward` needs.
    pub fn forward(
        &mut self,
        depth: Option<&DiffArray<T>>,
        scene_of: &[usize],
        obs: &DiffArray<T>,
        mode: Mode,
    ) -> Result<DiffArray<T>, ModelError> {
        if scene_of.len() != obs.batch() {
            return Err(ModelError::Config(format!(
                "{} scene indices for {} observations",
                scene_of.len(),
                obs.batch()
            )));
        }
        let obs_feat = self.encode_observation(obs, mode)?;
        let (probs, scenes) = if self.image.is_some() {
            let depth = depth.ok_or_else(|| ModelError::Config("depth images required".into()))?;
            let shared = self.encode_image_levels(depth, mode)?.gather(scene_of)?;
            (self.decode_likelihood(Some(&shared), &obs_feat, mode)?, depth.batch())
        } else {
            (self.decode_likelihood(None, &obs_feat, mode)?, 0)
        };
        self.recorded = (mode == Mode::Train).then(|| Recorded {
            scene_of: scene_of.to_vec(),
            scenes,
        });
        Ok(probs)
    }

    /// Backpropagates d(loss)/d(probs) into every parameter gradient.
    pub fn backward(&mut self, grad_probs: &DiffArray<T>) -> Result<(), ModelError> {
        let rec = self
            .recorded
            .take()
            .ok_or(tactloc_numerics::NumericsError::NoForwardRecorded { layer: "observation_net" })?;
        let mut skips: [Option<DiffArray<T>>; 2] = [None, None];
        let mut g = self.blocks[1].backward(grad_probs)?;
        for stage in (0..2).rev() {
            if stage == 0 {
                g = self.blocks[0].backward(&g)?;
            }
            if self.image.is_some() {
                let (gu, gs) = split_channels(&g, self.config.transposed_channels[stage])?;
                skips[stage] = Some(gs.scatter_add_batch(&rec.scene_of, rec.scenes)?);
                g = gu;
            }
            g = self.up[stage].backward(&g)?;
        }
        let g_obs = match self.image.as_mut() {
            Some(image) => {
                let (g_img, g_obs) = split_channels(&g, self.config.image_feature_channels())?;
                let g_img = g_img.scatter_add_batch(&rec.scene_of, rec.scenes)?;
                let mut g_half = image.pool.backward(&g_img)?;
                if let Some(s) = &skips[0] {
                    add_into(&mut g_half, s);
                }
                let mut g_full = image.half.backward(&g_half)?;
                if let Some(s) = &skips[1] {
                    add_into(&mut g_full, s);
                }
                image.full.backward(&g_full)?;
                g_obs
            }
            None => g,
        };
        self.obs.backward(&g_obs)?;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn params_mut(&mut self) -> Vec<(String, &mut DiffArray<T>)> {
        self.collect(|s| s.params_mut())
    }

    /// Parameters and batchnorm running statistics.
    pub fn state_mut(&mut self) -> Vec<(String, &mut DiffArray<T>)> {
        self.collect(|s| s.state_mut())
    }

    fn collect<'a>(
        &'a mut self,
        f: impl Fn(&'a mut Sequential<T>) -> Vec<(String, &'a mut DiffArray<T>)>,
    ) -> Vec<(String, &'a mut DiffArray<T>)> {
        let mut parts: Vec<(String, &'a mut Sequential<T>)> = Vec::new();
        if let Some(image) = self.image.as_mut() {
            parts.push(("image.full".into(), &mut image.full));
            parts.push(("image.half".into(), &mut image.half));
        }
        parts.push(("obs".into(), &mut self.obs));
        for (i, (u, b)) in self.up.iter_mut().zip(self.blocks.iter_mut()).enumerate() {
            parts.push((format!("decoder.up{i}"), u));
            parts.push((format!("decoder.block{i}"), b));
        }
        let mut out = Vec::new();
        for (prefix, seq) in parts {
            out.extend(f(seq).into_iter().map(|(n, p)| (format!("{prefix}.{n}"), p)));
        }
        out
    }

    /// Zeroes the final convolution so every pixel predicts the uniform
    /// class distribution.
    pub fn zero_final_layer(&mut self) {
        let last = &mut self.blocks[1];
        let n = last.layers().len();
        if let Layer::Conv2d(c) = &mut last.layers_mut()[n - 2] {
            c.weight_mut().values_mut().iter_mut().for_each(|v| *v = T::zero());
            c.bias_mut().values_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn to_entries(&mut self) -> Vec<TlocEntry> {
        let mut entries = vec![TlocEntry::new("config", &[self.config.to_header().len()], self.config.to_header())];
        for (name, p) in self.state_mut() {
            entries.push(TlocEntry::new(
                name,
                p.shape(),
                p.values().iter().map(|v| v.as_f64() as f32).collect(),
            ));
        }
        entries
    }

    /// Rebuilds a network from checkpoint entries.
    pub fn from_entries(entries: &[TlocEntry]) -> Result<Self, ModelError> {
        let header = entries
            .iter()
            .find(|e| e.name == "config")
            .ok_or_else(|| ModelError::Checkpoint("missing config entry".into()))?;
        let config = ObservationNetConfig::from_header(&header.values)?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut net = Self::new(config, &mut rng)?;
        for (name, p) in net.state_mut() {
            let e = entries
                .iter()
                .find(|e| e.name == name)
                .ok_or_else(|| ModelError::Checkpoint(format!("missing parameter {name}")))?;
            if e.dims != p.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "{name}: stored shape {:?}, expected {:?}",
                    e.dims,
                    p.shape()
                )));
            }
            for (d, &s) in p.values_mut().iter_mut().zip(&e.values) {
                *d = T::from_f64(s as f64);
            }
        }
        Ok(net)
    }
}
