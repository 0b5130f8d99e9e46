use alloc::format;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Transformer classifier hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub num_blocks: usize,
    pub num_heads: usize,
    /// Query/key/value width of each head.
    pub head_size: usize,
    /// Bottleneck width of the feed-forward sublayer.
    pub ff_channels: usize,
    /// Dropout on the attention sublayer output.
    pub attn_dropout: f64,
    /// Dropout after the classifier's hidden layer.
    pub mlp_dropout: f64,
    pub mlp_units: usize,
    pub n_classes: usize,
    pub d_in: usize,
    pub use_positional_encoding: bool,
}

impl Default for ModelConfig {
    /// Reference shape with input width and class count still to be set.
    fn default() -> Self {
        Self::new(0, 0)
    }
}

impl ModelConfig {
    /// The default transformer (4 blocks of 4 heads of width 256, a 4-wide
    /// feed-forward bottleneck and a 128-unit classifier).
    pub fn new(d_in: usize, n_classes: usize) -> Self {
        Self {
            num_blocks: 4,
            num_heads: 4,
            head_size: 256,
            ff_channels: 4,
            attn_dropout: 0.125,
            mlp_dropout: 0.2,
            mlp_units: 128,
            n_classes,
            d_in,
            use_positional_encoding: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_blocks", self.num_blocks),
            ("num_heads", self.num_heads),
            ("head_size", self.head_size),
            ("ff_channels", self.ff_channels),
            ("mlp_units", self.mlp_units),
            ("n_classes", self.n_classes),
            ("d_in", self.d_in),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, p) in [("attn_dropout", self.attn_dropout), ("mlp_dropout", self.mlp_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Width of the concatenated heads.
    pub fn attn_width(&self) -> usize {
        self.num_heads * self.head_size
    }

    /// Number of trainable scalars:
    ///
    /// per block `2d (norm) + 3(dP + P) (q, k, v) + (Pd + d) (output)
    /// + 2d (norm) + (df + f) + (fd + d) (feed-forward)`, with `P` the
    /// concatenated head width and `f` the bottleneck, plus the classifier
    /// `(du + u) + (uc + c)`.
    pub fn param_count(&self) -> usize {
        let d = self.d_in;
        let p = self.attn_width();
        let f = self.ff_channels;
        let u = self.mlp_units;
        let c = self.n_classes;
        let block = 2 * d + 3 * (d * p + p) + (p * d + d) + 2 * d + (d * f + f) + (f * d + d);
        self.num_blocks * block + (d * u + u) + (u * c + c)
    }
}

/// Optimiser and schedule settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Probability of blanking one random channel per training example.
    pub input_channel_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 64,
            max_epochs: 150,
            patience: 15,
            seed: 42,
            input_channel_dropout: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.input_channel_dropout) {
            return Err(Error::Config(format!(
                "input_channel_dropout {} outside [0, 1]",
                self.input_channel_dropout
            )));
        }
        Ok(())
    }
}
