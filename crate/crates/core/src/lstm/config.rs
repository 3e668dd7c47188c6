use serde::{Deserialize, Serialize};

use super::LstmError;

/// Architecture of the sequence classifier: stacked LSTM layers, optional
/// rectified dense layers, and a single logistic output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LstmConfig {
    pub input_size: usize,
    pub lstm_units: Vec<usize>,
    /// Dropout rate applied to each LSTM layer's output, one per layer.
    pub dropout: Vec<f64>,
    pub dense_units: Vec<usize>,
    pub sequence_length: usize,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            input_size: 37,
            lstm_units: vec![64, 32],
            dropout: vec![0.2, 0.2],
            dense_units: vec![32],
            sequence_length: 48,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<(), LstmError> {
        let bad = |m: &str| Err(LstmError::Config(m.to_string()));
        if self.input_size == 0 || self.sequence_length == 0 {
            return bad("input_size and sequence_length must be >= 1");
        }
        if self.lstm_units.is_empty() || self.lstm_units.contains(&0) {
            return bad("need at least one LSTM layer, every layer >= 1 unit");
        }
        if self.dense_units.contains(&0) {
            return bad("dense layers must have >= 1 unit");
        }
        if self.dropout.len() != self.lstm_units.len() {
            return bad("one dropout rate per LSTM layer");
        }
        if self.dropout.iter().any(|r| !(0.0..1.0).contains(r)) {
            return bad("dropout rates must lie in [0, 1)");
        }
        Ok(())
    }

    /// Same architecture with every dropout rate set to zero.
    pub fn without_dropout(&self) -> LstmConfig {
        LstmConfig {
            dropout: vec![0.0; self.lstm_units.len()],
            ..self.clone()
        }
    }

    pub fn last_hidden(&self) -> usize {
        *self.lstm_units.last().expect("validated config")
    }

    /// Input width feeding the output unit.
    pub fn head_input(&self) -> usize {
        self.dense_units.last().copied().unwrap_or_else(|| self.last_hidden())
    }
}

/// Trainable scalars of one LSTM layer with `input` inputs and `hidden` units:
/// four gates, each with input weights, recurrent weights and a bias.
pub fn lstm_layer_params(input: usize, hidden: usize) -> usize {
    4 * (hidden * (input + hidden) + hidden)
}

pub fn dense_layer_params(input: usize, output: usize) -> usize {
    input * output + output
}

/// Per-layer parameter counts in network order (LSTM layers, dense
/// layers, output unit).
pub fn param_breakdown(config: &LstmConfig) -> Vec<usize> {
    let mut out = Vec::new();
    let mut width = config.input_size;
    for &h in &config.lstm_units {
        out.push(lstm_layer_params(width, h));
        width = h;
    }
    for &d in &config.dense_units {
        out.push(dense_layer_params(width, d));
        width = d;
    }
    out.push(dense_layer_params(width, 1));
    out
}

pub fn param_count(config: &LstmConfig) -> usize {
    param_breakdown(config).iter().sum()
}
