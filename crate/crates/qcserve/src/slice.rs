//! Slice extraction, windowing, PNG encoding and overlay run-length coding.
//!
//! Display orientation: sagittal (axis 0) shows columns j, rows k; coronal
//! (axis 1) columns i, rows k; axial (axis 2) columns i, rows j. The vertical
//! voxel index grows upwards, so row 0 is the highest index.

use serde::{Deserialize, Serialize};
use ulfsynth_core::segmetrics::percentile_linear;

/// `(width, height)` of a slice perpendicular to `axis`.
pub fn slice_shape(dims: [usize; 3], axis: usize) -> (usize, usize) {
    match axis {
        0 => (dims[1], dims[2]),
        1 => (dims[0], dims[2]),
        _ => (dims[0], dims[1]),
    }
}

/// Voxel shown at (`row`, `col`) of slice `index`.
pub fn slice_voxel(dims: [usize; 3], axis: usize, index: usize, row: usize, col: usize) -> [usize; 3] {
    let (_, height) = slice_shape(dims, axis);
    let up = height - 1 - row;
    match axis {
        0 => [index, col, up],
        1 => [col, index, up],
        _ => [col, up, index],
    }
}

/// Slice values in row-major display order.
pub fn extract<T: Copy>(data: &[T], dims: [usize; 3], axis: usize, index: usize) -> Vec<T> {
    let (width, height) = slice_shape(dims, axis);
    let mut out = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let [i, j, k] = slice_voxel(dims, axis, index, row, col);
            out.push(data[i + dims[0] * (j + dims[1] * k)]);
        }
    }
    out
}

/// 1st and 99th percentiles of the whole volume.
pub fn robust_window(data: &[f64]) -> (f64, f64) {
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    (percentile_linear(&sorted, 1.0), percentile_linear(&sorted, 99.0))
}

/// Linear map of `[lo, hi]` onto 0..=255 with clamping; an empty window gives black.
pub fn window_to_u8(values: &[f64], lo: f64, hi: f64) -> Vec<u8> {
    values
        .iter()
        .map(|&v| {
            if hi > lo {
                (((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect()
}

pub fn encode_png(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>, png::EncodingError> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(pixels)?;
    }
    Ok(buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub row: usize,
    pub start: usize,
    pub length: usize,
    pub label: u32,
}

/// Maximal horizontal runs of one non-zero label per row.
pub fn rle_rows(labels: &[u32], width: usize, height: usize) -> Vec<Segment> {
    let mut out = Vec::new();
    for row in 0..height {
        let line = &labels[row * width..(row + 1) * width];
        let mut col = 0;
        while col < width {
            let label = line[col];
            let start = col;
            while col < width && line[col] == label {
                col += 1;
            }
            if label != 0 {
                out.push(Segment { row, start, length: col - start, label });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_orientation() {
        let dims = [4, 5, 6];
        assert_eq!(slice_shape(dims, 0), (5, 6));
        assert_eq!(slice_shape(dims, 1), (4, 6));
        assert_eq!(slice_shape(dims, 2), (4, 5));
        assert_eq!(slice_voxel(dims, 1, 2, 0, 3), [3, 2, 5]);
        assert_eq!(slice_voxel(dims, 2, 1, 4, 0), [0, 0, 1]);
        let data: Vec<usize> = (0..120).collect();
        let s = extract(&data, dims, 1, 2);
        assert_eq!(s.len(), 24);
        assert_eq!(s[0], 4 * (2 + 5 * 5));
    }

    #[test]
    fn windowing_clamps() {
        assert_eq!(window_to_u8(&[-1.0, 0.0, 0.5, 1.0, 2.0], 0.0, 1.0), vec![0, 0, 128, 255, 255]);
        assert_eq!(window_to_u8(&[3.0], 1.0, 1.0), vec![0]);
        let (lo, hi) = robust_window(&(0..101).map(f64::from).collect::<Vec<_>>());
        assert_eq!((lo, hi), (1.0, 99.0));
    }

    #[test]
    fn rle_segments() {
        let labels = [0, 3, 3, 0, 2, 2, 2, 1, 0, 0, 0, 0];
        let segs = rle_rows(&labels, 6, 2);
        assert_eq!(
            segs,
            vec![
                Segment { row: 0, start: 1, length: 2, label: 3 },
                Segment { row: 0, start: 4, length: 2, label: 2 },
                Segment { row: 1, start: 0, length: 1, label: 2 },
                Segment { row: 1, start: 1, length: 1, label: 1 },
            ]
        );
    }

    #[test]
    fn png_is_deterministic() {
        let a = encode_png(3, 2, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(a, encode_png(3, 2, &[0, 1, 2, 3, 4, 5]).unwrap());
        assert_eq!(&a[1..4], b"PNG");
    }
}
