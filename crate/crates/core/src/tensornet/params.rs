use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::{math, Error, Result};

/// Shape description of one learnable layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    /// `y = xW + b` with `W: [inputs, outputs]`.
    Dense { inputs: usize, outputs: usize },
    /// Weight `[filters, in_channels, kernel, kernel]`.
    Conv2d {
        in_channels: usize,
        filters: usize,
        kernel: usize,
    },
    /// Per-channel scale/shift plus running statistics.
    BatchNorm { channels: usize },
}

impl LayerSpec {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LayerSpec::Dense { inputs, outputs } => inputs > 0 && outputs > 0,
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
            } => in_channels > 0 && filters > 0 && kernel > 0,
            LayerSpec::BatchNorm { channels } => channels > 0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDimension(format!(
                "layer {self:?} has a zero dimension"
            )))
        }
    }
}

/// One named tensor of a [`ParamSet`] with its gradient and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Buffers (batchnorm running statistics) are never touched by optimizers.
    pub trainable: bool,
    pub(crate) first_moment: Vec<f64>,
    pub(crate) second_moment: Vec<f64>,
}

impl ParamEntry {
    fn new(name: String, value: Tensor, trainable: bool) -> Self {
        let n = value.len();
        Self {
            name,
            grad: Tensor::zeros(value.shape()),
            value,
            trainable,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
        }
    }
}

/// Ordered, uniquely named collection of every tensor one network owns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
    pub(crate) adam_steps: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) -> Result<()> {
        let name = name.into();
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::DuplicateParam(name));
        }
        self.entries.push(ParamEntry::new(name, value, trainable));
        Ok(())
    }

    /// Appends the tensors of one layer, drawing weights from `rng`.
    ///
    /// Weights are uniform in `±sqrt(6 / (fan_in + fan_out))`, biases and
    /// batchnorm shifts are zero, batchnorm scales are one.
    pub fn add_layer<R: Rng + ?Sized>(
        &mut self,
        prefix: &str,
        spec: LayerSpec,
        rng: &mut R,
    ) -> Result<()> {
        spec.validate()?;
        match spec {
            LayerSpec::Dense { inputs, outputs } => {
                let w = uniform_tensor(&[inputs, outputs], inputs, outputs, rng);
                self.push(format!("{prefix}.weight"), w, true)?;
                self.push(format!("{prefix}.bias"), Tensor::zeros(&[outputs]), true)?;
            }
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
            } => {
                let area = kernel * kernel;
                let w = uniform_tensor(
                    &[filters, in_channels, kernel, kernel],
                    in_channels * area,
                    filters * area,
                    rng,
                );
                self.push(format!("{prefix}.weight"), w, true)?;
                self.push(format!("{prefix}.bias"), Tensor::zeros(&[filters]), true)?;
            }
            LayerSpec::BatchNorm { channels } => {
                self.push(format!("{prefix}.gamma"), Tensor::filled(&[channels], 1.0), true)?;
                self.push(format!("{prefix}.beta"), Tensor::zeros(&[channels]), true)?;
                self.push(
                    format!("{prefix}.running_mean"),
                    Tensor::zeros(&[channels]),
                    false,
                )?;
                self.push(
                    format!("{prefix}.running_var"),
                    Tensor::filled(&[channels], 1.0),
                    false,
                )?;
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.entries
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| Error::UnknownParam(name.into()))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|e| e.name == name)
            .map(|e| &mut e.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.grad)
    }

    pub(crate) fn value_at(&self, index: usize) -> &Tensor {
        &self.entries[index].value
    }

    pub(crate) fn grad_at_mut(&mut self, index: usize) -> &mut [f64] {
        self.entries[index].grad.data_mut()
    }

    pub(crate) fn value_at_mut(&mut self, index: usize) -> &mut [f64] {
        self.entries[index].value.data_mut()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().fill(0.0);
        }
    }

    /// Number of learnable scalars (buffers excluded).
    pub fn param_count(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.value.len())
            .sum()
    }

    /// Bitwise comparison of names, values and trainability.
    pub fn bit_eq(&self, other: &ParamSet) -> bool {
        self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.name == b.name && a.trainable == b.trainable && a.value.bit_eq(&b.value)
            })
    }

    /// Overwrites values from `other`, which must have identical names and shapes.
    pub fn load_values(&mut self, other: &ParamSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Codec(format!(
                "expected {} tensors, found {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            if dst.name != src.name || dst.value.shape() != src.value.shape() {
                return Err(Error::Codec(format!(
                    "tensor `{}` {:?} does not match `{}` {:?}",
                    src.name,
                    src.value.shape(),
                    dst.name,
                    dst.value.shape()
                )));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }
}

fn uniform_tensor<R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor {
    let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches data length")
}

/// Builds a fresh [`ParamSet`] for a list of named layers from one seed.
pub fn init_params(layers: &[(&str, LayerSpec)], seed: u64) -> Result<ParamSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    for (name, spec) in layers {
        params.add_layer(name, *spec, &mut rng)?;
    }
    Ok(params)
}

/// Deep copy, as used for target-network synchronisation.
pub fn copy_params(src: &ParamSet) -> ParamSet {
    src.clone()
}
