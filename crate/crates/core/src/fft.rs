//! Unnormalized multi-dimensional DFT over a row-major grid.

use rustfft::{FftDirection, FftPlanner};

use crate::C64;

/// In-place `Σ_x v(x) e^{∓2πi⟨k,x⟩/N}` along every axis; `Forward` uses the minus sign.
pub(crate) fn fft_nd(values: &mut [C64], dims: &[usize], direction: FftDirection) {
    let total: usize = dims.iter().product();
    debug_assert_eq!(values.len(), total);
    let mut planner = FftPlanner::<f64>::new();
    let mut stride = 1;
    for &len in dims.iter().rev() {
        if len > 1 {
            let fft = planner.plan_fft(len, direction);
            let mut line = vec![C64::new(0.0, 0.0); len];
            let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            let block = len * stride;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (i, slot) in line.iter_mut().enumerate() {
                        *slot = values[base + i * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (i, v) in line.iter().enumerate() {
                        values[base + i * stride] = *v;
                    }
                }
            }
        }
        stride *= len;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(values: &[C64], dims: &[usize], sign: f64) -> Vec<C64> {
        let total = values.len();
        let unravel = |mut f: usize| {
            let mut idx = vec![0; dims.len()];
            for (slot, &d) in idx.iter_mut().zip(dims).rev() {
                *slot = f % d;
                f /= d;
            }
            idx
        };
        (0..total)
            .map(|k| {
                let kk = unravel(k);
                (0..total)
                    .map(|x| {
                        let xx = unravel(x);
                        let phase: f64 = kk
                            .iter()
                            .zip(&xx)
                            .zip(dims)
                            .map(|((&a, &b), &d)| (a * b) as f64 / d as f64)
                            .sum();
                        values[x] * C64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * phase)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_direct_summation() {
        let dims = [3, 4, 5];
        let v: Vec<C64> = (0..60)
            .map(|i| C64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        for (dir, sign) in [(FftDirection::Forward, -1.0), (FftDirection::Inverse, 1.0)] {
            let mut fast = v.clone();
            fft_nd(&mut fast, &dims, dir);
            let slow = naive(&v, &dims, sign);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).norm() < 1e-10);
            }
        }
    }
}
