//! Forward pass, loss, and backpropagation through time.
//!
//! Batches are laid out `(batch, step, width)`, row-major. Each LSTM layer
//! computes its input projection for the whole sequence with one matrix
//! product, then runs the recurrence step by step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::activation;
use super::gemm::{gemm, View};
use super::params::LstmParams;
use super::LstmError;

/// Probability clipping used by the cross-entropy loss.
pub const LOSS_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, masks drawn from `seed`.
    Train { seed: u64 },
    Eval,
}

#[derive(Debug, Clone)]
struct LayerCache {
    width: usize,
    hidden: usize,
    /// Layer input (after the previous layer's dropout).
    input: Vec<f64>,
    /// Activated gates `[i, f, g, o]` per (batch, step).
    gates: Vec<f64>,
    cells: Vec<f64>,
    tanh_cells: Vec<f64>,
    hidden_seq: Vec<f64>,
    /// Inverted-dropout scale for the consumed output: the whole sequence
    /// for inner layers, the final step only for the last layer.
    mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct DenseCache {
    input: Vec<f64>,
    pre: Vec<f64>,
}

/// Activations retained by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub batch: usize,
    pub mode: Mode,
    layers: Vec<LayerCache>,
    dense: Vec<DenseCache>,
    head_input: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    activation::sigmoid(x)
}

fn dropout_mask(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> Vec<f64> {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    (0..len)
        .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
        .collect()
}

pub fn forward(
    params: &LstmParams,
    inputs: &[f64],
    batch: usize,
    mode: Mode,
) -> Result<ForwardCache, LstmError> {
    let cfg = &params.config;
    let seq = cfg.sequence_length;
    if inputs.len() != batch * seq * cfg.input_size {
        return Err(LstmError::Shape(format!(
            "batch of {} values, expected {}x{}x{}",
            inputs.len(),
            batch,
            seq,
            cfg.input_size
        )));
    }
    let w = &params.values;
    let mut rng = match mode {
        Mode::Train { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Mode::Eval => None,
    };

    let n_layers = cfg.lstm_units.len();
    let mut layers = Vec::with_capacity(n_layers);
    let mut layer_input = inputs.to_vec();
    let mut width = cfg.input_size;
    let mut final_state = Vec::new();

    for (l, (&hidden, blk)) in cfg.lstm_units.iter().zip(&params.layout.lstm).enumerate() {
        let g4 = 4 * hidden;
        let rows = batch * seq;
        let stride = width + hidden;
        let mut gates = vec![0.0; rows * g4];
        for row in gates.chunks_exact_mut(g4) {
            row.copy_from_slice(&w[blk.bias..blk.bias + g4]);
        }
        gemm(
            rows,
            width,
            g4,
            1.0,
            &layer_input,
            View::rows(0, width),
            w,
            View::transposed(blk.weight, stride),
            1.0,
            &mut gates,
            View::rows(0, g4),
        );
        let mut cells = vec![0.0; rows * hidden];
        let mut tanh_cells = vec![0.0; rows * hidden];
        let mut hidden_seq = vec![0.0; rows * hidden];
        for t in 0..seq {
            if t > 0 {
                gemm(
                    batch,
                    hidden,
                    g4,
                    1.0,
                    &hidden_seq,
                    View::rows((t - 1) * hidden, seq * hidden),
                    w,
                    View::transposed(blk.weight + width, stride),
                    1.0,
                    &mut gates,
                    View::rows(t * g4, seq * g4),
                );
            }
            for b in 0..batch {
                let r = b * seq + t;
                let z = &mut gates[r * g4..(r + 1) * g4];
                let (ifg, o) = z.split_at_mut(3 * hidden);
                let (if_, g) = ifg.split_at_mut(2 * hidden);
                activation::sigmoid_in_place(if_);
                activation::tanh_in_place(g);
                activation::sigmoid_in_place(o);
                let (done, rest) = cells.split_at_mut(r * hidden);
                let c = &mut rest[..hidden];
                if t > 0 {
                    let c_prev = &done[(r - 1) * hidden..];
                    for j in 0..hidden {
                        c[j] = if_[hidden + j] * c_prev[j] + if_[j] * g[j];
                    }
                } else {
                    for j in 0..hidden {
                        c[j] = if_[j] * g[j];
                    }
                }
                let tc = &mut tanh_cells[r * hidden..(r + 1) * hidden];
                activation::tanh_into(c, tc);
                let h = &mut hidden_seq[r * hidden..(r + 1) * hidden];
                for j in 0..hidden {
                    h[j] = o[j] * tc[j];
                }
            }
        }

        let last = l + 1 == n_layers;
        let rate = cfg.dropout[l];
        let consumed_len = if last { batch * hidden } else { rows * hidden };
        let mask = match rng.as_mut() {
            Some(r) if rate > 0.0 => Some(dropout_mask(r, consumed_len, rate)),
            _ => None,
        };
        let mut consumed = if last {
            let mut out = Vec::with_capacity(batch * hidden);
            for b in 0..batch {
                let r = b * seq + seq - 1;
                out.extend_from_slice(&hidden_seq[r * hidden..(r + 1) * hidden]);
            }
            out
        } else {
            hidden_seq.clone()
        };
        if let Some(m) = &mask {
            consumed.iter_mut().zip(m).for_each(|(v, s)| *v *= s);
        }

        let cache = LayerCache {
            width,
            hidden,
            input: std::mem::take(&mut layer_input),
            gates,
            cells,
            tanh_cells,
            hidden_seq,
            mask,
        };
        layers.push(cache);
        if last {
            final_state = consumed;
        } else {
            layer_input = consumed;
        }
        width = hidden;
    }

    let mut dense = Vec::with_capacity(cfg.dense_units.len());
    let mut act = final_state;
    for (&units, blk) in cfg.dense_units.iter().zip(&params.layout.dense) {
        let mut pre = vec![0.0; batch * units];
        for row in pre.chunks_exact_mut(units) {
            row.copy_from_slice(&w[blk.bias..blk.bias + units]);
        }
        gemm(
            batch,
            width,
            units,
            1.0,
            &act,
            View::rows(0, width),
            w,
            View::transposed(blk.weight, width),
            1.0,
            &mut pre,
            View::rows(0, units),
        );
        let out: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
        dense.push(DenseCache { input: act, pre });
        act = out;
        width = units;
    }

    let ob = params.layout.output;
    let wo = &w[ob.weight..ob.weight + width];
    let bo = w[ob.bias];
    let logits: Vec<f64> = act
        .chunks_exact(width)
        .map(|row| row.iter().zip(wo).map(|(a, b)| a * b).sum::<f64>() + bo)
        .collect();
    let probs = logits.iter().map(|&z| sigmoid(z)).collect();
    Ok(ForwardCache {
        batch,
        mode,
        layers,
        dense,
        head_input: act,
        logits,
        probs,
    })
}

/// Mean binary cross-entropy with probabilities clipped to `[eps, 1 - eps]`.
pub fn loss(probs: &[f64], labels: &[u8]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(LOSS_EPS, 1.0 - LOSS_EPS);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / probs.len() as f64
}

/// Gradient of [`loss`] with respect to every parameter, in the flat
/// parameter layout. Within the clipping range this is exact.
pub fn backward(
    params: &LstmParams,
    cache: &ForwardCache,
    labels: &[u8],
) -> Result<Vec<f64>, LstmError> {
    if cache.mode == Mode::Eval {
        return Err(LstmError::CacheMode);
    }
    let batch = cache.batch;
    if labels.len() != batch {
        return Err(LstmError::Shape(format!(
            "{} labels for a batch of {}",
            labels.len(),
            batch
        )));
    }
    let cfg = &params.config;
    let seq = cfg.sequence_length;
    let w = &params.values;
    let mut grad = vec![0.0; w.len()];
    let inv_b = 1.0 / batch as f64;

    // Output unit.
    let ob = params.layout.output;
    let width = ob.cols;
    let dlogit: Vec<f64> = cache
        .probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| (p - y as f64) * inv_b)
        .collect();
    let mut d_act = vec![0.0; batch * width];
    for (b, &dz) in dlogit.iter().enumerate() {
        let a = &cache.head_input[b * width..(b + 1) * width];
        for k in 0..width {
            grad[ob.weight + k] += dz * a[k];
            d_act[b * width + k] = dz * w[ob.weight + k];
        }
        grad[ob.bias] += dz;
    }

    // Dense layers, last to first.
    for (dc, blk) in cache.dense.iter().zip(&params.layout.dense).rev() {
        let units = blk.rows;
        let in_w = blk.cols;
        let d_pre: Vec<f64> = d_act
            .iter()
            .zip(&dc.pre)
            .map(|(&d, &z)| if z > 0.0 { d } else { 0.0 })
            .collect();
        gemm(
            units,
            batch,
            in_w,
            1.0,
            &d_pre,
            View::transposed(0, units),
            &dc.input,
            View::rows(0, in_w),
            1.0,
            &mut grad,
            View::rows(blk.weight, in_w),
        );
        for row in d_pre.chunks_exact(units) {
            for (g, d) in grad[blk.bias..blk.bias + units].iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut d_in = vec![0.0; batch * in_w];
        gemm(
            batch,
            units,
            in_w,
            1.0,
            &d_pre,
            View::rows(0, units),
            w,
            View::rows(blk.weight, in_w),
            0.0,
            &mut d_in,
            View::rows(0, in_w),
        );
        d_act = d_in;
    }

    // Gradient w.r.t. the last LSTM layer's (pre-dropout) hidden sequence.
    let n_layers = cache.layers.len();
    let last = &cache.layers[n_layers - 1];
    let h_last = last.hidden;
    if let Some(m) = &last.mask {
        d_act.iter_mut().zip(m).for_each(|(d, s)| *d *= s);
    }
    let mut d_out = vec![0.0; batch * seq * h_last];
    for b in 0..batch {
        let r = b * seq + seq - 1;
        d_out[r * h_last..(r + 1) * h_last].copy_from_slice(&d_act[b * h_last..(b + 1) * h_last]);
    }

    for l in (0..n_layers).rev() {
        let lc = &cache.layers[l];
        let blk = params.layout.lstm[l];
        let (width, hidden) = (lc.width, lc.hidden);
        let g4 = 4 * hidden;
        let stride = width + hidden;
        let rows = batch * seq;
        let mut dz = vec![0.0; rows * g4];
        let mut dh_next = vec![0.0; batch * hidden];
        let mut dc_next = vec![0.0; batch * hidden];
        for t in (0..seq).rev() {
            if t + 1 < seq {
                gemm(
                    batch,
                    g4,
                    hidden,
                    1.0,
                    &dz,
                    View::rows((t + 1) * g4, seq * g4),
                    w,
                    View::rows(blk.weight + width, stride),
                    0.0,
                    &mut dh_next,
                    View::rows(0, hidden),
                );
            }
            for b in 0..batch {
                let r = b * seq + t;
                let gates = &lc.gates[r * g4..(r + 1) * g4];
                let out = &mut dz[r * g4..(r + 1) * g4];
                for j in 0..hidden {
                    let (i, f, g, o) = (
                        gates[j],
                        gates[hidden + j],
                        gates[2 * hidden + j],
                        gates[3 * hidden + j],
                    );
                    let tc = lc.tanh_cells[r * hidden + j];
                    let dh = d_out[r * hidden + j] + dh_next[b * hidden + j];
                    let dc = dc_next[b * hidden + j] + dh * o * (1.0 - tc * tc);
                    let c_prev = if t > 0 { lc.cells[(r - 1) * hidden + j] } else { 0.0 };
                    out[j] = dc * g * i * (1.0 - i);
                    out[hidden + j] = dc * c_prev * f * (1.0 - f);
                    out[2 * hidden + j] = dc * i * (1.0 - g * g);
                    out[3 * hidden + j] = dh * tc * o * (1.0 - o);
                    dc_next[b * hidden + j] = dc * f;
                }
            }
        }

        // Input weights.
        gemm(
            g4,
            rows,
            width,
            1.0,
            &dz,
            View::transposed(0, g4),
            &lc.input,
            View::rows(0, width),
            1.0,
            &mut grad,
            View::rows(blk.weight, stride),
        );
        // Recurrent weights: pair step t gradients with h_{t-1}.
        let mut h_prev = vec![0.0; rows * hidden];
        for b in 0..batch {
            let base = b * seq * hidden;
            h_prev[base + hidden..base + seq * hidden]
                .copy_from_slice(&lc.hidden_seq[base..base + (seq - 1) * hidden]);
        }
        gemm(
            g4,
            rows,
            hidden,
            1.0,
            &dz,
            View::transposed(0, g4),
            &h_prev,
            View::rows(0, hidden),
            1.0,
            &mut grad,
            View::rows(blk.weight + width, stride),
        );
        for row in dz.chunks_exact(g4) {
            for (g, d) in grad[blk.bias..blk.bias + g4].iter_mut().zip(row) {
                *g += d;
            }
        }

        if l > 0 {
            let mut d_in = vec![0.0; rows * width];
            gemm(
                rows,
                g4,
                width,
                1.0,
                &dz,
                View::rows(0, g4),
                w,
                View::rows(blk.weight, stride),
                0.0,
                &mut d_in,
                View::rows(0, width),
            );
            if let Some(m) = &cache.layers[l - 1].mask {
                d_in.iter_mut().zip(m).for_each(|(d, s)| *d *= s);
            }
            d_out = d_in;
        }
    }
    Ok(grad)
}

/// Compares [`backward`] with central finite differences of [`loss`].
///
/// Dropout is disabled for the check. Returns the largest
/// `|analytic - numeric| / max(|analytic|, |numeric|, floor)` over all
/// parameters; `floor` keeps entries that are zero up to rounding from
/// dominating the ratio.
pub fn gradient_check(
    params: &LstmParams,
    inputs: &[f64],
    labels: &[u8],
    step: f64,
    floor: f64,
) -> Result<f64, LstmError> {
    let batch = labels.len();
    let mut p = LstmParams::from_values(&params.config.without_dropout(), params.values.clone())?;
    let mode = Mode::Train { seed: 0 };
    let analytic = backward(&p, &forward(&p, inputs, batch, mode)?, labels)?;
    let mut worst: f64 = 0.0;
    for k in 0..p.values.len() {
        let orig = p.values[k];
        p.values[k] = orig + step;
        let up = loss(&forward(&p, inputs, batch, Mode::Eval)?.probs, labels);
        p.values[k] = orig - step;
        let down = loss(&forward(&p, inputs, batch, Mode::Eval)?.probs, labels);
        p.values[k] = orig;
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[k];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(floor));
    }
    Ok(worst)
}

/// Eval-mode probabilities for `n` samples, processed in chunks.
pub fn predict_proba(params: &LstmParams, inputs: &[f64], n: usize) -> Result<Vec<f64>, LstmError> {
    const CHUNK: usize = 256;
    let per = params.config.sequence_length * params.config.input_size;
    if inputs.len() != n * per {
        return Err(LstmError::Shape(format!(
            "{} values for {} samples of {}",
            inputs.len(),
            n,
            per
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + CHUNK).min(n);
        let cache = forward(params, &inputs[start * per..end * per], end - start, Mode::Eval)?;
        out.extend_from_slice(&cache.probs);
        start = end;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::config::LstmConfig;
    use super::*;

    fn tiny() -> LstmConfig {
        LstmConfig {
            input_size: 3,
            lstm_units: vec![4, 3],
            dropout: vec![0.0, 0.0],
            dense_units: vec![3],
            sequence_length: 6,
        }
    }

    #[test]
    fn zero_network_outputs_one_half() {
        let p = LstmParams::zeros(&LstmConfig::default()).unwrap();
        let x = vec![0.3; 2 * 48 * 37];
        let c = forward(&p, &x, 2, Mode::Eval).unwrap();
        assert_eq!(c.probs, vec![0.5, 0.5]);
    }

    #[test]
    fn single_step_single_unit_matches_hand_arithmetic() {
        let cfg = LstmConfig {
            input_size: 1,
            lstm_units: vec![1],
            dropout: vec![0.0],
            dense_units: vec![],
            sequence_length: 1,
        };
        // Layout: W (4x2) = [wi_x, wi_h, wf_x, wf_h, wg_x, wg_h, wo_x, wo_h], b (4), out w, out b.
        let vals = vec![
            0.5, 0.1, -0.3, 0.2, 0.8, -0.4, 0.25, 0.7, // W
            0.1, 1.0, -0.2, 0.05, // b
            1.5, -0.3, // output
        ];
        let p = LstmParams::from_values(&cfg, vals).unwrap();
        let x = 0.9_f64;
        let i = sigmoid(0.5 * x + 0.1);
        let g = (0.8 * x - 0.2).tanh();
        let o = sigmoid(0.25 * x + 0.05);
        let c = i * g;
        let h = o * c.tanh();
        let expected = sigmoid(1.5 * h - 0.3);
        let got = forward(&p, &[x], 1, Mode::Eval).unwrap().probs[0];
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn eval_mode_ignores_seed_and_train_mode_reproduces() {
        let cfg = LstmConfig {
            dropout: vec![0.5, 0.5],
            ..tiny()
        };
        let p = LstmParams::init(&cfg, 3).unwrap();
        let x: Vec<f64> = (0..4 * 6 * 3).map(|v| (v as f64 * 0.37).sin()).collect();
        let a = forward(&p, &x, 4, Mode::Eval).unwrap();
        let b = forward(&p, &x, 4, Mode::Eval).unwrap();
        assert_eq!(a.probs, b.probs);
        let t1 = forward(&p, &x, 4, Mode::Train { seed: 9 }).unwrap();
        let t2 = forward(&p, &x, 4, Mode::Train { seed: 9 }).unwrap();
        let t3 = forward(&p, &x, 4, Mode::Train { seed: 10 }).unwrap();
        assert_eq!(t1.probs, t2.probs);
        assert_ne!(t1.probs, t3.probs);
    }

    #[test]
    fn loss_reference_values() {
        assert!((loss(&[0.5, 0.5], &[0, 1]) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(loss(&[1.0, 0.0], &[1, 0]) <= 1e-6);
    }

    #[test]
    fn backward_rejects_eval_cache() {
        let p = LstmParams::init(&tiny(), 1).unwrap();
        let c = forward(&p, &vec![0.1; 18], 1, Mode::Eval).unwrap();
        assert!(matches!(backward(&p, &c, &[1]), Err(LstmError::CacheMode)));
    }

    fn tiny_batch(n: usize) -> (LstmParams, Vec<f64>, Vec<u8>) {
        let cfg = tiny();
        let mut p = LstmParams::init(&cfg, 11).unwrap();
        // break the zero-bias symmetry of the initializer
        for (k, v) in p.values.iter_mut().enumerate() {
            *v += 0.05 * ((k * 7) as f64).sin();
        }
        let x: Vec<f64> = (0..n * 6 * 3).map(|v| (v as f64 * 0.61).cos() * 1.3).collect();
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        (p, x, y)
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let (p, x, y) = tiny_batch(5);
        let err = gradient_check(&p, &x, &y, 1e-5, 1e-6).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn duplicated_sample_keeps_mean_gradient() {
        let (p, x, _) = tiny_batch(1);
        let mode = Mode::Train { seed: 1 };
        let g1 = backward(&p, &forward(&p, &x, 1, mode).unwrap(), &[1]).unwrap();
        let xx = [x.clone(), x].concat();
        let g2 = backward(&p, &forward(&p, &xx, 2, mode).unwrap(), &[1, 1]).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((b - a).abs() < 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn zero_params_balanced_labels_cancel_output_gradient() {
        let p = LstmParams::zeros(&tiny()).unwrap();
        let x = vec![0.4; 2 * 18];
        let g = backward(&p, &forward(&p, &x, 2, Mode::Train { seed: 0 }).unwrap(), &[0, 1]).unwrap();
        let ob = p.layout.output;
        assert_eq!(g[ob.bias], 0.0);
        assert!(g[ob.weight..ob.weight + 3].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn wrong_input_length_is_a_shape_error() {
        let p = LstmParams::init(&tiny(), 1).unwrap();
        assert!(matches!(
            forward(&p, &[0.0; 5], 1, Mode::Eval),
            Err(LstmError::Shape(_))
        ));
    }
}
