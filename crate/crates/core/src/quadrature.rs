//! Fourth-order quadrature on uniform grids.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods shadow it whenever std is linked
use num_traits::Float;


/// Definite integral of uniformly sampled values with spacing `h`.
///
/// Composite Simpson for an even number of intervals; with an odd number the
/// last three intervals use the 3/8 rule.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ => {
            let intervals = n - 1;
            if intervals.is_multiple_of(2) {
                simpson_even(values, h)
            } else {
                let head = &values[..n - 3];
                let tail = &values[n - 4..];
                let three_eighths =
                    3.0 * h / 8.0 * (tail[0] + 3.0 * tail[1] + 3.0 * tail[2] + tail[3]);
                let head_sum = if head.len() >= 3 {
                    simpson_even(head, h)
                } else {
                    0.0
                };
                head_sum + three_eighths
            }
        }
    }
}

fn simpson_even(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    debug_assert!(n % 2 == 1);
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (values[0] + values[n - 1] + 4.0 * odd + 2.0 * even)
}

/// Running integral `F[i] = ∫₀^{t_i} f` for every grid node.
///
/// Each interval is integrated with the cubic through its four nearest
/// nodes (one-sided at the ends), which keeps every node fourth-order
/// accurate, not just the even ones.
pub fn cumulative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n < 4 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * h * (values[i - 1] + values[i]);
        }
        return out;
    }
    let w = h / 24.0;
    for i in 0..n - 1 {
        let piece = if i == 0 {
            w * (9.0 * values[0] + 19.0 * values[1] - 5.0 * values[2] + values[3])
        } else if i == n - 2 {
            w * (values[n - 4] - 5.0 * values[n - 3] + 19.0 * values[n - 2] + 9.0 * values[n - 1])
        } else {
            w * (-values[i - 1] + 13.0 * values[i] + 13.0 * values[i + 1] - values[i + 2])
        };
        out[i + 1] = out[i] + piece;
    }
    out
}

/// Retarded convolution `∫₀^{t_i} f(t′) sin(Ω(t_i − t′))/Ω dt′` on a uniform
/// grid starting at `t = 0`.
///
/// The kernel separates into `sin Ωt cos Ωt′ − cos Ωt sin Ωt′`, which turns
/// the nested integral into two running integrals.
pub fn kernel_convolution(values: &[f64], h: f64, omega: f64) -> Vec<f64> {
    let n = values.len();
    let mut fc = Vec::with_capacity(n);
    let mut fs = Vec::with_capacity(n);
    for (i, v) in values.iter().enumerate() {
        let (s, c) = (omega * h * i as f64).sin_cos();
        fc.push(v * c);
        fs.push(v * s);
    }
    let cc = cumulative(&fc, h);
    let cs = cumulative(&fs, h);
    (0..n)
        .map(|i| {
            let (s, c) = (omega * h * i as f64).sin_cos();
            (s * cc[i] - c * cs[i]) / omega
        })
        .collect()
}
