//! 3-D FFT helpers. Forward transforms are unnormalized; the inverse divides by N.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) fn fft3(data: &mut [Complex64], dims: [usize; 3], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis];
        if n == 1 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        };
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut line = vec![Complex64::default(); n];
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        for b in 0..dims[v] {
            for a in 0..dims[u] {
                let base = a * strides[u] + b * strides[v];
                for (t, x) in line.iter_mut().enumerate() {
                    *x = data[base + t * strides[axis]];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (t, x) in line.iter().enumerate() {
                    data[base + t * strides[axis]] = *x;
                }
            }
        }
    }
    if inverse {
        let scale = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|x| *x *= scale);
    }
}

pub(crate) fn forward(values: &[f64], dims: [usize; 3]) -> Vec<Complex64> {
    let mut k: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft3(&mut k, dims, false);
    k
}

/// Inverse transform, keeping the real part.
pub(crate) fn inverse_real(mut k: Vec<Complex64>, dims: [usize; 3]) -> Vec<f64> {
    fft3(&mut k, dims, true);
    k.into_iter().map(|c| c.re).collect()
}

/// Unshifted frequency index for position `s` of an fftshifted axis of length
/// `n`; DC sits at `s = n / 2`.
pub(crate) fn unshift(s: usize, n: usize) -> usize {
    (s + n - n / 2) % n
}

/// Inverse of [`unshift`].
#[cfg(test)]
pub(crate) fn shift(k: usize, n: usize) -> usize {
    (k + n / 2) % n
}
