use serde::{Deserialize, Serialize};

use super::ActivationKind;

/// One convolutional block: convolution, optional batch norm, optional
/// dropout, activation. Strides are `(height, width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerConfig {
    pub filters: usize,
    pub stride: (usize, usize),
    pub batch_norm: bool,
    #[serde(default)]
    pub dropout: f64,
    pub activation: ActivationKind,
}

impl LayerConfig {
    pub fn new(filters: usize, stride: (usize, usize), activation: ActivationKind) -> Self {
        Self {
            filters,
            stride,
            batch_norm: true,
            dropout: 0.0,
            activation,
        }
    }

    pub fn without_batch_norm(mut self) -> Self {
        self.batch_norm = false;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout = rate;
        self
    }
}
