use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{param_count, LstmConfig};
use super::LstmError;

/// Location of one layer's weights and bias inside the flat parameter vector.
///
/// Weights are row-major `rows x cols`; LSTM layers use the concatenated
/// convention `4H x (I + H)` with gate blocks ordered input, forget, cell,
/// output, and input columns before recurrent columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub weight: usize,
    pub bias: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols + self.rows
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub lstm: Vec<Block>,
    pub dense: Vec<Block>,
    pub output: Block,
    pub total: usize,
}

impl Layout {
    pub fn new(config: &LstmConfig) -> Layout {
        let mut offset = 0;
        let mut take = |rows: usize, cols: usize| {
            let b = Block {
                weight: offset,
                bias: offset + rows * cols,
                rows,
                cols,
            };
            offset += b.len();
            b
        };
        let mut width = config.input_size;
        let mut lstm = Vec::new();
        for &h in &config.lstm_units {
            lstm.push(take(4 * h, width + h));
            width = h;
        }
        let mut dense = Vec::new();
        for &d in &config.dense_units {
            dense.push(take(d, width));
            width = d;
        }
        let output = take(1, width);
        Layout {
            lstm,
            dense,
            output,
            total: offset,
        }
    }
}

/// All trainable weights of the classifier in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub config: LstmConfig,
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(config: &LstmConfig) -> Result<LstmParams, LstmError> {
        config.validate()?;
        let layout = Layout::new(config);
        debug_assert_eq!(layout.total, param_count(config));
        Ok(LstmParams {
            config: config.clone(),
            values: vec![0.0; layout.total],
            layout,
        })
    }

    pub fn from_values(config: &LstmConfig, values: Vec<f64>) -> Result<LstmParams, LstmError> {
        let mut p = LstmParams::zeros(config)?;
        if values.len() != p.values.len() {
            return Err(LstmError::Shape(format!(
                "{} parameters supplied, configuration needs {}",
                values.len(),
                p.values.len()
            )));
        }
        p.values = values;
        Ok(p)
    }

    /// Xavier-uniform weights, zero biases except forget gates (+1).
    pub fn init(config: &LstmConfig, seed: u64) -> Result<LstmParams, LstmError> {
        let mut p = LstmParams::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = p.layout.clone();
        for (blk, &h) in layout.lstm.iter().zip(&config.lstm_units) {
            let fan_in = blk.cols;
            let fan_out = blk.rows;
            xavier(&mut p.values[blk.weight..blk.bias], fan_in, fan_out, &mut rng);
            p.values[blk.bias + h..blk.bias + 2 * h].fill(1.0);
        }
        for blk in layout.dense.iter().chain(std::iter::once(&layout.output)) {
            xavier(&mut p.values[blk.weight..blk.bias], blk.cols, blk.rows, &mut rng);
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn xavier(w: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in w {
        *v = rng.random_range(-limit..limit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous() {
        let cfg = LstmConfig::default();
        let l = Layout::new(&cfg);
        assert_eq!(l.lstm[0].weight, 0);
        assert_eq!(l.lstm[0].rows, 256);
        assert_eq!(l.lstm[0].cols, 101);
        assert_eq!(l.lstm[1].weight, 26_112);
        assert_eq!(l.dense[0].weight, 26_112 + 12_416);
        assert_eq!(l.output.bias, 39_616);
        assert_eq!(l.total, 39_617);
    }

    #[test]
    fn init_is_seeded_and_sets_forget_bias() {
        let cfg = LstmConfig::default();
        let a = LstmParams::init(&cfg, 7).unwrap();
        let b = LstmParams::init(&cfg, 7).unwrap();
        let c = LstmParams::init(&cfg, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        let blk = a.layout.lstm[0];
        assert!(a.values[blk.bias..blk.bias + 64].iter().all(|&v| v == 0.0));
        assert!(a.values[blk.bias + 64..blk.bias + 128].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn from_values_checks_length() {
        let cfg = LstmConfig::default();
        assert!(matches!(
            LstmParams::from_values(&cfg, vec![0.0; 10]),
            Err(LstmError::Shape(_))
        ));
    }
}
