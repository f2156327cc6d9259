//! Zero-phase smoothing and finite differences on uniform grids.

/// Second-order Butterworth low-pass (bilinear transform, prewarped),
/// applied forward then backward.
pub fn lowpass_zero_phase(signal: &[f64], dt: f64, cutoff: f64) -> Vec<f64> {
    let n = signal.len();
    if n < 3 || !(cutoff > 0.0) || !(dt > 0.0) {
        return signal.to_vec();
    }
    let k = (0.5 * cutoff * dt).tan();
    let r2 = std::f64::consts::SQRT_2;
    let norm = 1.0 / (1.0 + r2 * k + k * k);
    let b0 = k * k * norm;
    let coef = Biquad {
        b: [b0, 2.0 * b0, b0],
        a: [2.0 * (k * k - 1.0) * norm, (1.0 - r2 * k + k * k) * norm],
    };

    // odd reflection about a local linear fit at each end
    let pad = (n - 1).min(6 * ((1.0 / (k.max(1e-12))).ceil() as usize).max(3));
    let w = ((0.25 / k).ceil() as usize).clamp(3, n);
    let head = end_anchor(signal[..w].iter().copied());
    let tail = end_anchor(signal[n - w..].iter().rev().copied());
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * head - signal[i]);
    }
    ext.extend_from_slice(signal);
    for i in 1..=pad {
        ext.push(2.0 * tail - signal[n - 1 - i]);
    }
    let fwd = coef.run(&ext);
    let mut back: Vec<f64> = fwd.into_iter().rev().collect();
    back = coef.run(&back);
    back.reverse();
    back[pad..pad + n].to_vec()
}

/// Value at the first sample of the least-squares line through `values`.
fn end_anchor(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.len() as f64;
    let tbar = (m - 1.0) / 2.0;
    let ybar = v.iter().sum::<f64>() / m;
    let sxy: f64 = v.iter().enumerate().map(|(i, y)| (i as f64 - tbar) * (y - ybar)).sum();
    let sxx: f64 = (0..v.len()).map(|i| (i as f64 - tbar).powi(2)).sum();
    ybar - tbar * sxy / sxx
}

struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// Direct form II transposed, started in steady state for the first sample.
    fn run(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let c = x[0];
        let mut s1 = (1.0 - b0) * c;
        let mut s2 = (b2 - a2) * c;
        x.iter()
            .map(|&xi| {
                let y = b0 * xi + s1;
                s1 = b1 * xi - a1 * y + s2;
                s2 = b2 * xi - a2 * y;
                y
            })
            .collect()
    }
}

/// Central differences inside, one-sided second-order at the ends.
pub fn derivative(values: &[f64], dt: f64) -> Vec<f64> {
    let n = values.len();
    match n {
        0 => vec![],
        1 => vec![0.0],
        2 => vec![(values[1] - values[0]) / dt; 2],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * dt)
                } else if i == n - 1 {
                    (3.0 * values[n - 1] - 4.0 * values[n - 2] + values[n - 3]) / (2.0 * dt)
                } else {
                    (values[i + 1] - values[i - 1]) / (2.0 * dt)
                }
            })
            .collect(),
    }
}

/// Piecewise-linear interpolation of `(xs, ys)` at `at`, constant beyond the ends.
pub fn interpolate(xs: &[f64], ys: &[f64], at: &[f64]) -> Vec<f64> {
    at.iter()
        .map(|&t| {
            let k = xs.partition_point(|&x| x <= t);
            if k == 0 {
                ys[0]
            } else if k == xs.len() {
                ys[xs.len() - 1]
            } else {
                let w = (t - xs[k - 1]) / (xs[k] - xs[k - 1]);
                ys[k - 1] + w * (ys[k] - ys[k - 1])
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_signal_is_preserved() {
        let y = lowpass_zero_phase(&[2.5; 50], 0.1, 1.0);
        assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn slow_sine_passes_fast_sine_is_attenuated() {
        let t: Vec<f64> = (0..2001).map(|k| k as f64 * 0.01).collect();
        let slow: Vec<f64> = t.iter().map(|t| (0.2 * t).sin()).collect();
        let fast: Vec<f64> = t.iter().map(|t| (20.0 * t).sin()).collect();
        let ys = lowpass_zero_phase(&slow, 0.01, 1.0);
        let yf = lowpass_zero_phase(&fast, 0.01, 1.0);
        let mid = 500..1500;
        assert!(mid.clone().all(|i| (ys[i] - slow[i]).abs() < 0.01));
        assert!(mid.map(|i| yf[i].abs()).fold(0.0, f64::max) < 0.01);
    }

    #[test]
    fn cutoff_gain_is_half_power_squared() {
        let dt = 0.01;
        let w = 1.0;
        let t: Vec<f64> = (0..20001).map(|k| k as f64 * dt).collect();
        let x: Vec<f64> = t.iter().map(|t| (w * t).sin()).collect();
        let y = lowpass_zero_phase(&x, dt, w);
        let amp = y[5000..15000].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!((amp - 0.5).abs() < 0.01, "{amp}");
    }

    #[test]
    fn derivative_of_quadratic_is_exact() {
        let v: Vec<f64> = (0..10).map(|k| (k as f64 * 0.5).powi(2)).collect();
        let d = derivative(&v, 0.5);
        for (k, dv) in d.iter().enumerate() {
            assert!((dv - 2.0 * k as f64 * 0.5).abs() < 1e-12);
        }
        assert_eq!(derivative(&[3.0; 5], 0.1), vec![0.0; 5]);
    }

    #[test]
    fn interpolation() {
        let y = interpolate(&[0.0, 1.0, 2.0], &[0.0, 10.0, 0.0], &[-1.0, 0.25, 1.5, 3.0]);
        assert_eq!(y, vec![0.0, 2.5, 5.0, 0.0]);
    }
}
