//! Test oracles shared by the integration suites. Everything here is written
//! with plain loops so it stays independent of the library's matrix code.
#![allow(dead_code)]

use std::ops::Range;

use dsm_core::neural::Mlp;

/// Plain-loop forward pass. Returns outputs per sample and the ReLU on/off
/// pattern of every hidden unit.
pub fn oracle_forward(net: &Mlp, inputs: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<bool>) {
    let last = net.layers.len() - 1;
    let mut pattern = Vec::new();
    let outputs = inputs
        .iter()
        .map(|x| {
            let mut act = x.clone();
            for (l, layer) in net.layers.iter().enumerate() {
                let (rows, cols) = layer.weights.dim();
                let mut next = vec![0.0; cols];
                for (j, out) in next.iter_mut().enumerate() {
                    let mut z = layer.biases[j];
                    for i in 0..rows {
                        z += act[i] * layer.weights[[i, j]];
                    }
                    *out = z;
                }
                if l < last {
                    for v in &mut next {
                        pattern.push(*v > 0.0);
                        *v = v.max(0.0);
                    }
                }
                act = next;
            }
            act
        })
        .collect();
    (outputs, pattern)
}

/// Scalar probe loss: weighted sum of all outputs.
pub fn probe_loss(outputs: &[Vec<f64>], weights: &[Vec<f64>]) -> f64 {
    outputs
        .iter()
        .zip(weights)
        .map(|(o, w)| o.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-7)
}

pub fn brute_ramping(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for t in 1..x.len() {
        s += (x[t] - x[t - 1]).abs();
    }
    s
}

pub fn brute_load_factor(x: &[f64], blocks: &[Range<usize>]) -> f64 {
    let mut acc = 0.0;
    for b in blocks {
        let mut sum = 0.0;
        let mut peak = f64::MIN;
        for t in b.clone() {
            sum += x[t];
            if x[t] > peak {
                peak = x[t];
            }
        }
        acc += sum / b.len() as f64 / peak;
    }
    1.0 - acc / blocks.len() as f64
}

pub fn brute_daily_peak(x: &[f64]) -> f64 {
    let days = x.len() / 24;
    let mut acc = 0.0;
    for d in 0..days {
        let mut peak = f64::MIN;
        for h in 0..24 {
            peak = peak.max(x[d * 24 + h]);
        }
        acc += peak;
    }
    acc / days as f64
}

pub fn brute_peak(x: &[f64]) -> f64 {
    let mut peak = f64::MIN;
    for &v in x {
        if v > peak {
            peak = v;
        }
    }
    peak
}

/// Kahan-compensated sum, a different summation route than the library's.
pub fn brute_net(x: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &v in x {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

/// Result of a finite-difference sweep over selected parameters.
pub struct GradCheck {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

/// Central differences (step `h`) on the probe loss for the parameters
/// selected by `pick(layer, is_bias, index)`, compared with `analytic`
/// (flattened like `Mlp::flat_parameters`). Stencils whose ReLU pattern
/// differs from the unperturbed one straddle a kink and are skipped.
pub fn finite_difference_check(
    net: &Mlp,
    inputs: &[Vec<f64>],
    probe: &[Vec<f64>],
    analytic: &[f64],
    h: f64,
    mut pick: impl FnMut(usize, bool, usize) -> bool,
) -> GradCheck {
    let (_, base_pattern) = oracle_forward(net, inputs);
    let mut work = net.clone();
    let mut result = GradCheck {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
    };
    let mut flat = 0;
    for l in 0..net.layers.len() {
        let (rows, cols) = net.layers[l].weights.dim();
        for idx in 0..rows * cols + cols {
            let is_bias = idx >= rows * cols;
            let this = flat;
            flat += 1;
            if !pick(l, is_bias, idx) {
                continue;
            }
            let cell = |m: &mut Mlp| -> *mut f64 {
                if is_bias {
                    &mut m.layers[l].biases[idx - rows * cols]
                } else {
                    &mut m.layers[l].weights[[idx / cols, idx % cols]]
                }
            };
            let original = unsafe { *cell(&mut work) };
            unsafe { *cell(&mut work) = original + h };
            let (plus, p_pattern) = oracle_forward(&work, inputs);
            unsafe { *cell(&mut work) = original - h };
            let (minus, m_pattern) = oracle_forward(&work, inputs);
            unsafe { *cell(&mut work) = original };
            if p_pattern != base_pattern || m_pattern != base_pattern {
                result.skipped_kinks += 1;
                continue;
            }
            let numeric = (probe_loss(&plus, probe) - probe_loss(&minus, probe)) / (2.0 * h);
            let err = relative_error(analytic[this], numeric);
            result.max_rel_error = result.max_rel_error.max(err);
            result.checked += 1;
        }
    }
    result
}
