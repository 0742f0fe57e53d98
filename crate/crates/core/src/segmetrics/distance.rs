use serde::{Deserialize, Serialize};

use super::overlap::check_grids;
use crate::volgrid::LabelMap;
use crate::{Error, Result};

/// Directed surface distances in mm: `d_ab` from each surface voxel of the
/// prediction to the ground-truth surface, `d_ba` the reverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDistanceSet {
    pub d_ab: Vec<f64>,
    pub d_ba: Vec<f64>,
}

/// Mask voxels with at least one face neighbour outside the mask; the volume
/// border counts as outside.
pub fn surface_mask(mask: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let mut out = vec![false; mask.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                if !mask[idx] {
                    continue;
                }
                let on_border = i == 0 || j == 0 || k == 0 || i + 1 == nx || j + 1 == ny || k + 1 == nz;
                out[idx] = on_border
                    || !mask[idx - 1]
                    || !mask[idx + 1]
                    || !mask[idx - nx]
                    || !mask[idx + nx]
                    || !mask[idx - nx * ny]
                    || !mask[idx + nx * ny];
            }
        }
    }
    out
}

/// Exact 1-D squared distance transform (lower envelope of parabolas) for
/// samples spaced `h` apart. `f` holds squared distances, `INFINITY` for none.
fn edt_1d(f: &[f64], h: f64, out: &mut [f64]) {
    let n = f.len();
    let mut v = Vec::with_capacity(n);
    let mut z: Vec<f64> = Vec::with_capacity(n + 1);
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let xq = q as f64 * h;
        loop {
            match v.last() {
                None => {
                    v.push(q);
                    z.clear();
                    z.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    let xp = p as f64 * h;
                    let s = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
                    if s <= *z.last().expect("boundary per vertex") {
                        v.pop();
                        z.pop();
                        continue;
                    }
                    v.push(q);
                    z.push(s);
                    break;
                }
            }
        }
    }
    if v.is_empty() {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut j = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let x = q as f64 * h;
        while j + 1 < v.len() && z[j + 1] < x {
            j += 1;
        }
        let d = x - v[j] as f64 * h;
        *o = d * d + f[v[j]];
    }
}

/// Squared Euclidean distance (mm²) from every voxel to the nearest seed.
pub fn squared_edt(seeds: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let mut d: Vec<f64> = seeds.iter().map(|&s| if s { 0.0 } else { f64::INFINITY }).collect();
    let strides = [1, dims[0], dims[0] * dims[1]];
    for axis in 0..3 {
        let n = dims[axis];
        let (u, v) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut line = vec![0.0; n];
        let mut res = vec![0.0; n];
        for b in 0..dims[v] {
            for a in 0..dims[u] {
                let base = a * strides[u] + b * strides[v];
                for (t, x) in line.iter_mut().enumerate() {
                    *x = d[base + t * strides[axis]];
                }
                edt_1d(&line, spacing[axis], &mut res);
                for (t, x) in res.iter().enumerate() {
                    d[base + t * strides[axis]] = *x;
                }
            }
        }
    }
    d
}

pub fn surface_distances(pred: &LabelMap, gt: &LabelMap, label: u32) -> Result<SurfaceDistanceSet> {
    check_grids(pred, gt)?;
    let a: Vec<bool> = pred.data().iter().map(|&v| v == label).collect();
    let b: Vec<bool> = gt.data().iter().map(|&v| v == label).collect();
    if !a.contains(&true) {
        return Err(Error::EmptyStructure { label, side: "pred" });
    }
    if !b.contains(&true) {
        return Err(Error::EmptyStructure { label, side: "gt" });
    }
    let dims = gt.grid().dims();
    let spacing = gt.grid().spacing();
    let sa = surface_mask(&a, dims);
    let sb = surface_mask(&b, dims);
    let edt_a = squared_edt(&sa, dims, spacing);
    let edt_b = squared_edt(&sb, dims, spacing);
    let pick = |surf: &[bool], edt: &[f64]| -> Vec<f64> {
        surf.iter()
            .zip(edt)
            .filter(|(s, _)| **s)
            .map(|(_, d)| d.sqrt())
            .collect()
    };
    Ok(SurfaceDistanceSet {
        d_ab: pick(&sa, &edt_b),
        d_ba: pick(&sb, &edt_a),
    })
}

fn check_nonempty(sd: &SurfaceDistanceSet) -> Result<()> {
    if sd.d_ab.is_empty() || sd.d_ba.is_empty() {
        return Err(Error::contract("surface distance set is empty"));
    }
    Ok(())
}

pub fn hausdorff(sd: &SurfaceDistanceSet) -> Result<f64> {
    check_nonempty(sd)?;
    Ok(sd.d_ab.iter().chain(&sd.d_ba).copied().fold(0.0, f64::max))
}

/// Linear-interpolation percentile (numpy's default) of sorted data.
pub fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = q / 100.0 * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let t = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * t
}

/// 95th percentile of the pooled distances `d_ab ∪ d_ba`.
pub fn hd95(sd: &SurfaceDistanceSet) -> Result<f64> {
    check_nonempty(sd)?;
    let mut pooled: Vec<f64> = sd.d_ab.iter().chain(&sd.d_ba).copied().collect();
    pooled.sort_by(f64::total_cmp);
    Ok(percentile_linear(&pooled, 95.0))
}

pub fn assd(sd: &SurfaceDistanceSet) -> Result<f64> {
    check_nonempty(sd)?;
    let total: f64 = sd.d_ab.iter().chain(&sd.d_ba).sum();
    Ok(total / (sd.d_ab.len() + sd.d_ba.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volgrid::Grid;
    use proptest::prelude::*;

    fn single(dims: [usize; 3], spacing: [f64; 3], at: &[[usize; 3]]) -> LabelMap {
        let g = Grid::with_spacing(dims, spacing).unwrap();
        let mut d = vec![0; g.len()];
        for p in at {
            d[g.index(p[0], p[1], p[2])] = 1;
        }
        LabelMap::from_data(g, d).unwrap()
    }

    /// All-pairs minimum over surface voxels.
    fn brute(pred: &LabelMap, gt: &LabelMap) -> SurfaceDistanceSet {
        let g = gt.grid();
        let s = g.spacing();
        let surf = |m: &LabelMap| -> Vec<[usize; 3]> {
            let mask: Vec<bool> = m.data().iter().map(|&v| v == 1).collect();
            surface_mask(&mask, g.dims())
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(i, _)| g.coords(i))
                .collect()
        };
        let (a, b) = (surf(pred), surf(gt));
        let directed = |x: &[[usize; 3]], y: &[[usize; 3]]| -> Vec<f64> {
            x.iter()
                .map(|p| {
                    y.iter()
                        .map(|q| {
                            (0..3)
                                .map(|t| ((p[t] as f64 - q[t] as f64) * s[t]).powi(2))
                                .sum::<f64>()
                                .sqrt()
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        };
        SurfaceDistanceSet { d_ab: directed(&a, &b), d_ba: directed(&b, &a) }
    }

    #[test]
    fn single_voxel_examples() {
        let a = single([5, 5, 5], [1.0; 3], &[[1, 2, 2]]);
        let sd = surface_distances(&a, &a, 1).unwrap();
        assert_eq!((sd.d_ab.as_slice(), sd.d_ba.as_slice()), (&[0.0][..], &[0.0][..]));
        let b = single([5, 5, 5], [1.0; 3], &[[4, 2, 2]]);
        assert_eq!(surface_distances(&a, &b, 1).unwrap().d_ab, vec![3.0]);
        let a = single([3, 3, 3], [1.0, 1.0, 2.0], &[[1, 1, 0]]);
        let b = single([3, 3, 3], [1.0, 1.0, 2.0], &[[1, 1, 1]]);
        assert_eq!(surface_distances(&a, &b, 1).unwrap().d_ab, vec![2.0]);
    }

    #[test]
    fn empty_side_is_named() {
        let a = single([3, 3, 3], [1.0; 3], &[[1, 1, 1]]);
        let e = single([3, 3, 3], [1.0; 3], &[]);
        assert!(matches!(surface_distances(&e, &a, 1), Err(Error::EmptyStructure { side: "pred", .. })));
        assert!(matches!(surface_distances(&a, &e, 1), Err(Error::EmptyStructure { side: "gt", .. })));
    }

    #[test]
    fn summary_statistics() {
        let sd = SurfaceDistanceSet { d_ab: vec![1.0; 4], d_ba: vec![3.0] };
        assert_eq!(hausdorff(&sd).unwrap(), 3.0);
        assert!((assd(&sd).unwrap() - 1.4).abs() < 1e-15);
        // numpy.percentile([1,1,1,1,3], 95) == 2.6
        assert!((hd95(&sd).unwrap() - 2.6).abs() < 1e-12);
        let empty = SurfaceDistanceSet { d_ab: vec![], d_ba: vec![1.0] };
        assert!(hausdorff(&empty).is_err() && hd95(&empty).is_err() && assd(&empty).is_err());
    }

    #[test]
    fn interior_voxels_are_not_surface() {
        let mask = vec![true; 27];
        let s = surface_mask(&mask, [3, 3, 3]);
        assert!(!s[13]);
        assert_eq!(s.iter().filter(|&&b| b).count(), 26);
    }

    fn masks() -> impl Strategy<Value = ([usize; 3], [f64; 3], Vec<u32>, Vec<u32>)> {
        (
            prop::array::uniform3(1usize..=8),
            prop::array::uniform3(0.5f64..3.0),
        )
            .prop_flat_map(|(dims, sp)| {
                let n = dims.iter().product::<usize>();
                (
                    Just(dims),
                    Just(sp),
                    prop::collection::vec(prop::bool::weighted(0.3).prop_map(u32::from), n),
                    prop::collection::vec(prop::bool::weighted(0.3).prop_map(u32::from), n),
                )
            })
            .prop_filter("both masks non-empty", |(_, _, a, b)| a.contains(&1) && b.contains(&1))
    }

    proptest! {
        #[test]
        fn edt_matches_brute_force((dims, sp, a, b) in masks()) {
            let g = Grid::with_spacing(dims, sp).unwrap();
            let p = LabelMap::from_data(g.clone(), a).unwrap();
            let t = LabelMap::from_data(g, b).unwrap();
            let fast = surface_distances(&p, &t, 1).unwrap();
            let slow = brute(&p, &t);
            prop_assert_eq!(fast.d_ab.len(), slow.d_ab.len());
            for (x, y) in fast.d_ab.iter().zip(&slow.d_ab).chain(fast.d_ba.iter().zip(&slow.d_ba)) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
            let hd = hausdorff(&fast).unwrap();
            prop_assert!(hd >= hd95(&fast).unwrap() && hd >= assd(&fast).unwrap());
            // Swapping roles swaps the directed sets.
            let swapped = surface_distances(&t, &p, 1).unwrap();
            prop_assert_eq!(&swapped.d_ab, &fast.d_ba);
            prop_assert_eq!(hausdorff(&swapped).unwrap(), hd);
        }

        #[test]
        fn spacing_scales_distances((dims, sp, a, b) in masks(), k in 0.5f64..4.0) {
            let g1 = Grid::with_spacing(dims, sp).unwrap();
            let g2 = Grid::with_spacing(dims, sp.map(|s| s * k)).unwrap();
            let sd1 = surface_distances(&LabelMap::from_data(g1.clone(), a.clone()).unwrap(), &LabelMap::from_data(g1, b.clone()).unwrap(), 1).unwrap();
            let sd2 = surface_distances(&LabelMap::from_data(g2.clone(), a).unwrap(), &LabelMap::from_data(g2, b).unwrap(), 1).unwrap();
            for (f, x, y) in [
                (hausdorff as fn(&SurfaceDistanceSet) -> Result<f64>, &sd1, &sd2),
                (hd95, &sd1, &sd2),
                (assd, &sd1, &sd2),
            ] {
                let (u, v) = (f(x).unwrap(), f(y).unwrap());
                prop_assert!((v - k * u).abs() <= 1e-9 * (1.0 + v.abs()));
            }
        }
    }
}
