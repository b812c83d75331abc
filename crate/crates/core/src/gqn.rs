//! Two-stream Grasp-Q-Network: a convolutional vision branch per camera, a
//! small motor branch, and a linear Q head over the nine actions.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tensornet::{Graph, LayerSpec, Mode, NodeId, ParamSet, Tensor};
use crate::world::{Observation, ACTION_COUNT};
use crate::{Error, Result};

pub const MOTOR_DIM: usize = 5;

/// Which cameras feed the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViewMode {
    /// Overhead camera only.
    Single,
    /// Overhead and wrist cameras.
    Multi,
}

impl ViewMode {
    pub fn name(self) -> &'static str {
        match self {
            ViewMode::Single => "single",
            ViewMode::Multi => "multi",
        }
    }
}

impl fmt::Display for ViewMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ViewMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(ViewMode::Single),
            "multi" => Ok(ViewMode::Multi),
            _ => Err(Error::Config(format!("unknown view mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GqnConfig {
    pub view_mode: ViewMode,
    pub image_size: usize,
    /// Filters of the 7×7, 5×5 and 3×3 stages of each camera stream.
    pub channels: [usize; 3],
    /// Zero padding of the three stream convolutions.
    pub paddings: [usize; 3],
    /// Filters of the 3×3 convolution applied to the merged streams.
    pub fusion_channels: usize,
    pub vision_hidden: usize,
    pub motor_hidden: usize,
    pub head_hidden: usize,
    pub action_count: usize,
}

impl Default for GqnConfig {
    fn default() -> Self {
        Self {
            view_mode: ViewMode::Multi,
            image_size: 32,
            channels: [8, 16, 16],
            paddings: [0, 0, 0],
            fusion_channels: 16,
            vision_hidden: 64,
            motor_hidden: 64,
            head_hidden: 64,
            action_count: ACTION_COUNT,
        }
    }
}

const KERNELS: [usize; 3] = [7, 5, 3];
const STRIDES: [usize; 3] = [2, 1, 1];
const POOL: usize = 2;

impl GqnConfig {
    /// Spatial side after each stream stage and after pooling.
    pub fn stream_sizes(&self) -> Result<[usize; 4]> {
        let mut side = self.image_size;
        let mut sizes = [0; 4];
        for i in 0..3 {
            let padded = side + 2 * self.paddings[i];
            if KERNELS[i] > padded {
                return Err(Error::Config(format!(
                    "{}x{} convolution does not fit a {side}x{side} map with padding {}",
                    KERNELS[i], KERNELS[i], self.paddings[i]
                )));
            }
            side = (padded - KERNELS[i]) / STRIDES[i] + 1;
            sizes[i] = side;
        }
        if side < POOL {
            return Err(Error::Config(format!(
                "feature map {side}x{side} too small for {POOL}x{POOL} pooling"
            )));
        }
        sizes[3] = (side - POOL) / POOL + 1;
        Ok(sizes)
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.channels[0],
            self.channels[1],
            self.channels[2],
            self.fusion_channels,
            self.vision_hidden,
            self.motor_hidden,
            self.head_hidden,
        ];
        if widths.contains(&0) || self.image_size == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if self.action_count != ACTION_COUNT {
            return Err(Error::Config(format!(
                "action_count must be {ACTION_COUNT}, got {}",
                self.action_count
            )));
        }
        self.stream_sizes().map(|_| ())
    }

    fn streams(&self) -> &'static [(&'static str, usize)] {
        match self.view_mode {
            ViewMode::Single => &[("overhead", 4)],
            ViewMode::Multi => &[("overhead", 4), ("wrist", 3)],
        }
    }
}

/// Stacked network inputs with a leading batch axis.
#[derive(Clone, Debug)]
pub struct ObsBatch {
    pub overhead: Tensor,
    pub wrist: Tensor,
    pub motor: Tensor,
}

impl ObsBatch {
    pub fn from_observations(obs: &[&Observation]) -> Result<Self> {
        let overhead: Vec<&Tensor> = obs.iter().map(|o| &o.overhead).collect();
        let wrist: Vec<&Tensor> = obs.iter().map(|o| &o.wrist).collect();
        let motor: Vec<&Tensor> = obs.iter().map(|o| &o.motor).collect();
        Ok(Self {
            overhead: Tensor::stack(&overhead)?,
            wrist: Tensor::stack(&wrist)?,
            motor: Tensor::stack(&motor)?,
        })
    }

    pub fn len(&self) -> usize {
        self.motor.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Grasp-Q-Network architecture; parameters live in a separate [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gqn {
    config: GqnConfig,
    sizes: [usize; 4],
}

impl Gqn {
    pub fn new(config: GqnConfig) -> Result<Self> {
        config.validate()?;
        let sizes = config.stream_sizes()?;
        Ok(Self { config, sizes })
    }

    pub fn config(&self) -> &GqnConfig {
        &self.config
    }

    /// Fresh parameters for this architecture.
    pub fn build(&self, seed: u64) -> Result<ParamSet> {
        let c = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamSet::new();
        for &(stream, in_ch) in c.streams() {
            let conv = |in_channels, filters, kernel| LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
            };
            p.add_layer(&format!("{stream}.conv1"), conv(in_ch, c.channels[0], 7), &mut rng)?;
            p.add_layer(
                &format!("{stream}.bn1"),
                LayerSpec::BatchNorm {
                    channels: c.channels[0],
                },
                &mut rng,
            )?;
            p.add_layer(
                &format!("{stream}.conv2"),
                conv(c.channels[0], c.channels[1], 5),
                &mut rng,
            )?;
            p.add_layer(
                &format!("{stream}.conv3"),
                conv(c.channels[1], c.channels[2], 3),
                &mut rng,
            )?;
            p.add_layer(
                &format!("{stream}.bn3"),
                LayerSpec::BatchNorm {
                    channels: c.channels[2],
                },
                &mut rng,
            )?;
        }
        let merged = c.channels[2] * c.streams().len();
        p.add_layer(
            "fusion.conv",
            LayerSpec::Conv2d {
                in_channels: merged,
                filters: c.fusion_channels,
                kernel: 3,
            },
            &mut rng,
        )?;
        let pooled = self.sizes[3];
        p.add_layer(
            "fusion.fc",
            LayerSpec::Dense {
                inputs: c.fusion_channels * pooled * pooled,
                outputs: c.vision_hidden,
            },
            &mut rng,
        )?;
        p.add_layer(
            "motor.fc1",
            LayerSpec::Dense {
                inputs: MOTOR_DIM,
                outputs: c.motor_hidden,
            },
            &mut rng,
        )?;
        p.add_layer(
            "motor.fc2",
            LayerSpec::Dense {
                inputs: c.motor_hidden,
                outputs: c.motor_hidden,
            },
            &mut rng,
        )?;
        p.add_layer(
            "head.fc1",
            LayerSpec::Dense {
                inputs: c.vision_hidden + c.motor_hidden,
                outputs: c.head_hidden,
            },
            &mut rng,
        )?;
        p.add_layer(
            "head.q",
            LayerSpec::Dense {
                inputs: c.head_hidden,
                outputs: c.action_count,
            },
            &mut rng,
        )?;
        Ok(p)
    }

    fn stream(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        name: &str,
        x: NodeId,
        mode: Mode,
    ) -> Result<NodeId> {
        let pad = self.config.paddings;
        let h = g.conv2d(params, &format!("{name}.conv1"), x, STRIDES[0], pad[0])?;
        let h = g.batchnorm(params, &format!("{name}.bn1"), h, mode)?;
        let h = g.relu(h);
        let h = g.conv2d(params, &format!("{name}.conv2"), h, STRIDES[1], pad[1])?;
        let h = g.relu(h);
        let h = g.conv2d(params, &format!("{name}.conv3"), h, STRIDES[2], pad[2])?;
        let h = g.batchnorm(params, &format!("{name}.bn3"), h, mode)?;
        let h = g.relu(h);
        g.maxpool2d(h, POOL, POOL)
    }

    fn check_batch(&self, batch: &ObsBatch) -> Result<()> {
        let n = self.config.image_size;
        let b = batch.len();
        let expect = |t: &Tensor, shape: &[usize]| {
            if t.shape() == shape {
                Ok(())
            } else {
                Err(Error::ShapeMismatch {
                    op: "gqn input",
                    lhs: t.shape().to_vec(),
                    rhs: shape.to_vec(),
                })
            }
        };
        expect(&batch.overhead, &[b, 4, n, n])?;
        if self.config.view_mode == ViewMode::Multi {
            expect(&batch.wrist, &[b, 3, n, n])?;
        }
        expect(&batch.motor, &[b, MOTOR_DIM])
    }

    /// Records the network on `g`; the returned node holds `[batch, actions]` Q-values.
    pub fn forward(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        batch: &ObsBatch,
        mode: Mode,
    ) -> Result<NodeId> {
        self.check_batch(batch)?;
        let mut features = Vec::with_capacity(2);
        for &(stream, _) in self.config.streams() {
            let input = match stream {
                "overhead" => batch.overhead.clone(),
                _ => batch.wrist.clone(),
            };
            let x = g.input(input);
            features.push(self.stream(g, params, stream, x, mode)?);
        }
        let merged = if features.len() == 1 {
            features[0]
        } else {
            g.concat(&features, 1)?
        };
        let v = g.conv2d(params, "fusion.conv", merged, 1, 1)?;
        let v = g.relu(v);
        let v = g.flatten(v)?;
        let v = g.dense(params, "fusion.fc", v)?;
        let v = g.relu(v);

        let m = g.input(batch.motor.clone());
        let m = g.dense(params, "motor.fc1", m)?;
        let m = g.relu(m);
        let m = g.dense(params, "motor.fc2", m)?;
        let m = g.relu(m);

        let h = g.concat(&[v, m], 1)?;
        let h = g.dense(params, "head.fc1", h)?;
        let h = g.relu(h);
        g.dense(params, "head.q", h)
    }

    /// Q-values for a batch of observations, one row per observation.
    pub fn q_batch(&self, params: &ParamSet, obs: &[&Observation], mode: Mode) -> Result<Vec<[f64; ACTION_COUNT]>> {
        let batch = ObsBatch::from_observations(obs)?;
        let mut g = Graph::new();
        let q = self.forward(&mut g, params, &batch, mode)?;
        Ok(rows(g.value(q)))
    }

    /// Q-values of a single observation. Train mode normalises with the
    /// statistics of this one sample and does not touch running statistics.
    pub fn q_values(&self, params: &ParamSet, obs: &Observation, mode: Mode) -> Result<[f64; ACTION_COUNT]> {
        Ok(self.q_batch(params, &[obs], mode)?[0])
    }

    pub fn describe(&self) -> String {
        let c = &self.config;
        format!(
            "{} view, {}x{} images, channels {:?}, fusion {}, hidden ({}, {}, {}), feature map {}x{}",
            c.view_mode,
            c.image_size,
            c.image_size,
            c.channels,
            c.fusion_channels,
            c.vision_hidden,
            c.motor_hidden,
            c.head_hidden,
            self.sizes[3],
            self.sizes[3]
        )
    }
}

pub(crate) fn rows(q: &Tensor) -> Vec<[f64; ACTION_COUNT]> {
    q.data()
        .chunks_exact(ACTION_COUNT)
        .map(|r| {
            let mut row = [0.0; ACTION_COUNT];
            row.copy_from_slice(r);
            row
        })
        .collect()
}

/// Softmax view of a Q-vector. Reporting only; targets always use raw Q-values.
pub fn grasp_probabilities(q: &[f64; ACTION_COUNT]) -> [f64; ACTION_COUNT] {
    let mut p = *q;
    crate::tensornet::softmax_row(&mut p);
    p
}
