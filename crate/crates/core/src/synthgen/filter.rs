//! Separable 1-D line operations on voxel arrays.

use crate::volgrid::Volume;

/// Applies `f(input_line, output_line)` to every line along `axis`. The output
/// has `out_len` samples along that axis and unchanged extent elsewhere.
pub(crate) fn map_lines(
    data: &[f64],
    dims: [usize; 3],
    axis: usize,
    out_len: usize,
    mut f: impl FnMut(&[f64], &mut [f64]),
) -> Vec<f64> {
    let mut out_dims = dims;
    out_dims[axis] = out_len;
    let in_stride = [1, dims[0], dims[0] * dims[1]];
    let out_stride = [1, out_dims[0], out_dims[0] * out_dims[1]];
    let (u, v) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut out = vec![0.0; out_dims.iter().product()];
    let mut line = vec![0.0; dims[axis]];
    let mut res = vec![0.0; out_len];
    for b in 0..dims[v] {
        for a in 0..dims[u] {
            let in_base = a * in_stride[u] + b * in_stride[v];
            let out_base = a * out_stride[u] + b * out_stride[v];
            for (t, x) in line.iter_mut().enumerate() {
                *x = data[in_base + t * in_stride[axis]];
            }
            f(&line, &mut res);
            for (t, x) in res.iter().enumerate() {
                out[out_base + t * out_stride[axis]] = *x;
            }
        }
    }
    out
}

/// Normalized Gaussian taps, radius `ceil(4 sigma)`, sigma in samples.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            (-0.5 * (x / sigma).powi(2)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= s);
    k
}

/// 1-D convolution with edge samples repeated beyond the ends.
pub(crate) fn convolve_clamped(line: &[f64], kernel: &[f64], out: &mut [f64]) {
    let n = line.len() as isize;
    let r = (kernel.len() / 2) as isize;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (t, w) in kernel.iter().enumerate() {
            let j = (i as isize + t as isize - r).clamp(0, n - 1);
            acc += w * line[j as usize];
        }
        *o = acc;
    }
}

/// Gaussian blur along one axis; `sigma_vox <= 0` is a no-op.
pub(crate) fn blur_axis(data: &[f64], dims: [usize; 3], axis: usize, sigma_vox: f64) -> Vec<f64> {
    if !(sigma_vox > 0.0) {
        return data.to_vec();
    }
    let kernel = gaussian_kernel(sigma_vox);
    map_lines(data, dims, axis, dims[axis], |line, out| {
        convolve_clamped(line, &kernel, out)
    })
}

/// Isotropic Gaussian smoothing with sigma given in mm.
pub fn gaussian_smooth(vol: &Volume, sigma_mm: f64) -> Volume {
    if !(sigma_mm > 0.0) {
        return vol.clone();
    }
    let dims = vol.grid().dims();
    let spacing = vol.grid().spacing();
    let mut data = vol.data().to_vec();
    for a in 0..3 {
        data = blur_axis(&data, dims, a, sigma_mm / spacing[a]);
    }
    vol.with_data(data).expect("blur preserves shape and finiteness")
}

/// Linear interpolation at fractional position `x`, clamped to the line ends.
pub(crate) fn lerp_clamped(line: &[f64], x: f64) -> f64 {
    let n = line.len();
    if n == 1 || x <= 0.0 {
        return line[0];
    }
    if x >= (n - 1) as f64 {
        return line[n - 1];
    }
    let i = x.floor() as usize;
    let t = x - i as f64;
    line[i] * (1.0 - t) + line[i + 1] * t
}

/// Trilinear upsampling of a coarse control lattice spanning the full grid:
/// control point 0 sits on voxel 0 and the last control point on voxel n-1.
pub(crate) fn upsample_control(values: &[f64], control: [usize; 3], dims: [usize; 3]) -> Vec<f64> {
    let mut data = values.to_vec();
    let mut cur = control;
    for a in 0..3 {
        let c = cur[a];
        let n = dims[a];
        let scale = if n > 1 { (c - 1) as f64 / (n - 1) as f64 } else { 0.0 };
        data = map_lines(&data, cur, a, n, |line, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = lerp_clamped(line, i as f64 * scale);
            }
        });
        cur[a] = n;
    }
    data
}

/// Min-max rescale to [0, 1]. A constant volume has no range to stretch and
/// is clamped instead.
pub fn normalize_unit(vol: &Volume) -> Volume {
    let (lo, hi) = vol.min_max();
    let span = hi - lo;
    if span > 1e-12 {
        vol.map(|v| ((v - lo) / span).clamp(0.0, 1.0))
    } else {
        vol.map(|v| v.clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volgrid::Grid;

    #[test]
    fn map_lines_visits_each_axis() {
        let dims = [2, 3, 4];
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        for axis in 0..3 {
            let mut seen = Vec::new();
            let out = map_lines(&data, dims, axis, dims[axis], |l, o| {
                seen.push(l.to_vec());
                o.copy_from_slice(l);
            });
            assert_eq!(out, data);
            assert_eq!(seen.len(), 24 / dims[axis]);
            let stride = [1, 2, 6][axis];
            for l in &seen {
                for w in l.windows(2) {
                    assert_eq!(w[1] - w[0], stride as f64);
                }
            }
        }
    }

    #[test]
    fn blur_preserves_constants_and_mass_interior() {
        let g = Grid::with_spacing([9, 9, 9], [1.0; 3]).unwrap();
        let v = Volume::filled(g.clone(), 0.25);
        let s = gaussian_smooth(&v, 1.3);
        assert!(s.data().iter().all(|x| (x - 0.25).abs() < 1e-12));

        let mut d = vec![0.0; 729];
        d[g.index(4, 4, 4)] = 1.0;
        let s = gaussian_smooth(&Volume::new(g, d).unwrap(), 0.7);
        let total: f64 = s.data().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn upsample_reproduces_linear_control() {
        // Control values linear in index give a linear field everywhere.
        let control = [3, 2, 4];
        let vals: Vec<f64> = (0..24)
            .map(|idx| {
                let (i, j, k) = (idx % 3, (idx / 3) % 2, idx / 6);
                i as f64 + 2.0 * j as f64 - k as f64
            })
            .collect();
        let dims = [5, 3, 7];
        let out = upsample_control(&vals, control, dims);
        for idx in 0..out.len() {
            let (i, j, k) = (idx % 5, (idx / 5) % 3, idx / 15);
            let expected = i as f64 * 2.0 / 4.0 + 2.0 * j as f64 * 1.0 / 2.0 - k as f64 * 3.0 / 6.0;
            assert!((out[idx] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_handles_constant() {
        let g = Grid::with_spacing([2, 2, 2], [1.0; 3]).unwrap();
        let v = Volume::filled(g.clone(), 0.5);
        assert!(normalize_unit(&v).data().iter().all(|&x| x == 0.5));
        let v = Volume::new(g, (0..8).map(f64::from).collect()).unwrap();
        let n = normalize_unit(&v);
        assert_eq!(n.min_max(), (0.0, 1.0));
    }
}
