use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::ModelConfig;
use crate::{Error, Result, Rng};

/// Location of one tensor inside the flat parameter buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub norm1_scale: Span,
    pub norm1_shift: Span,
    pub query_w: Span,
    pub query_b: Span,
    pub key_w: Span,
    pub key_b: Span,
    pub value_w: Span,
    pub value_b: Span,
    pub out_w: Span,
    pub out_b: Span,
    pub norm2_scale: Span,
    pub norm2_shift: Span,
    pub expand_w: Span,
    pub expand_b: Span,
    pub contract_w: Span,
    pub contract_b: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadLayout {
    pub hidden_w: Span,
    pub hidden_b: Span,
    pub out_w: Span,
    pub out_b: Span,
}

/// Tensor order of the flat buffer, which is also the on-disk order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub blocks: Vec<BlockLayout>,
    pub head: HeadLayout,
    pub total: usize,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, rows: usize, cols: usize) -> Span {
        let s = Span {
            offset: self.0,
            rows,
            cols,
        };
        self.0 += rows * cols;
        s
    }
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (d, p, f) = (cfg.d_in, cfg.attn_width(), cfg.ff_channels);
        let mut cur = Cursor(0);
        let blocks = (0..cfg.num_blocks)
            .map(|_| BlockLayout {
                norm1_scale: cur.take(1, d),
                norm1_shift: cur.take(1, d),
                query_w: cur.take(d, p),
                query_b: cur.take(1, p),
                key_w: cur.take(d, p),
                key_b: cur.take(1, p),
                value_w: cur.take(d, p),
                value_b: cur.take(1, p),
                out_w: cur.take(p, d),
                out_b: cur.take(1, d),
                norm2_scale: cur.take(1, d),
                norm2_shift: cur.take(1, d),
                expand_w: cur.take(d, f),
                expand_b: cur.take(1, f),
                contract_w: cur.take(f, d),
                contract_b: cur.take(1, d),
            })
            .collect();
        let head = HeadLayout {
            hidden_w: cur.take(d, cfg.mlp_units),
            hidden_b: cur.take(1, cfg.mlp_units),
            out_w: cur.take(cfg.mlp_units, cfg.n_classes),
            out_b: cur.take(1, cfg.n_classes),
        };
        Self {
            blocks,
            head,
            total: cur.0,
        }
    }

    /// Every tensor with its name, in buffer order.
    pub fn entries(&self) -> Vec<(String, Span)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            let named = [
                ("norm1_scale", b.norm1_scale),
                ("norm1_shift", b.norm1_shift),
                ("query_w", b.query_w),
                ("query_b", b.query_b),
                ("key_w", b.key_w),
                ("key_b", b.key_b),
                ("value_w", b.value_w),
                ("value_b", b.value_b),
                ("out_w", b.out_w),
                ("out_b", b.out_b),
                ("norm2_scale", b.norm2_scale),
                ("norm2_shift", b.norm2_shift),
                ("expand_w", b.expand_w),
                ("expand_b", b.expand_b),
                ("contract_w", b.contract_w),
                ("contract_b", b.contract_b),
            ];
            for (n, s) in named {
                out.push((format!("block{i}.{n}"), s));
            }
        }
        let h = &self.head;
        for (n, s) in [
            ("hidden_w", h.hidden_w),
            ("hidden_b", h.hidden_b),
            ("out_w", h.out_w),
            ("out_b", h.out_b),
        ] {
            out.push((format!("head.{n}"), s));
        }
        out
    }
}

/// All trainable parameters in one flat buffer. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    pub data: Vec<f64>,
}

impl ModelWeights {
    pub fn zeros(config: &ModelConfig) -> Self {
        let layout = ParamLayout::new(config);
        Self {
            config: *config,
            data: vec![0.0; layout.total],
            layout,
        }
    }

    /// Glorot-uniform matrices, zero biases, unit normalization scales.
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let mut w = Self::zeros(config);
        let blocks = w.layout.blocks.clone();
        for b in &blocks {
            for s in [b.query_w, b.key_w, b.value_w, b.out_w, b.expand_w, b.contract_w] {
                w.glorot(s, rng);
            }
            for s in [b.norm1_scale, b.norm2_scale] {
                w.data[s.range()].fill(1.0);
            }
        }
        let head = w.layout.head.clone();
        w.glorot(head.hidden_w, rng);
        w.glorot(head.out_w, rng);
        Ok(w)
    }

    /// Wraps a buffer, checking its length and finiteness.
    pub fn from_data(config: &ModelConfig, data: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(config);
        if data.len() != layout.total {
            return Err(Error::Dimension(format!(
                "{} parameters supplied, configuration needs {}",
                data.len(),
                layout.total
            )));
        }
        let w = Self {
            config: *config,
            layout,
            data,
        };
        w.check_finite("weights")?;
        Ok(w)
    }

    fn glorot(&mut self, s: Span, rng: &mut Rng) {
        let limit = libm::sqrt(6.0 / (s.rows + s.cols) as f64);
        for v in &mut self.data[s.range()] {
            *v = rng.random_range(-limit..limit);
        }
    }

    pub fn tensor(&self, s: Span) -> &[f64] {
        &self.data[s.range()]
    }

    pub fn tensor_mut(&mut self, s: Span) -> &mut [f64] {
        &mut self.data[s.range()]
    }

    /// Names the first tensor holding a non-finite value.
    pub fn check_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            return Ok(());
        }
        let name = self
            .layout
            .entries()
            .into_iter()
            .find(|(_, s)| self.data[s.range()].iter().any(|v| !v.is_finite()))
            .map(|(n, _)| n)
            .unwrap_or_default();
        Err(Error::NonFinite(format!("{what} {name}")))
    }
}
