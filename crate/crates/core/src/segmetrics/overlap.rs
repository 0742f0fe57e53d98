use crate::volgrid::LabelMap;
use crate::{Error, Result};

pub(crate) fn check_grids(pred: &LabelMap, gt: &LabelMap) -> Result<()> {
    pred.grid().ensure_matches(gt.grid(), "metric")
}

/// `2|P ∩ G| / (|P| + |G|)` for one label; 1.0 when both masks are empty.
pub fn dice(pred: &LabelMap, gt: &LabelMap, label: u32) -> Result<f64> {
    check_grids(pred, gt)?;
    let (mut p, mut g, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.data().iter().zip(gt.data()) {
        let (ia, ib) = (a == label, b == label);
        p += ia as usize;
        g += ib as usize;
        both += (ia && ib) as usize;
    }
    if p + g == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (p + g) as f64)
}

/// `|V_P - V_G| / V_G`. Both grids share one voxel volume, which cancels,
/// so the ratio is taken on voxel counts and is exactly spacing-invariant.
pub fn rve(pred: &LabelMap, gt: &LabelMap, label: u32) -> Result<f64> {
    check_grids(pred, gt)?;
    let g = gt.count(label);
    if g == 0 {
        return Err(Error::EmptyStructure { label, side: "gt" });
    }
    Ok(pred.count(label).abs_diff(g) as f64 / g as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volgrid::Grid;

    fn map(data: Vec<u32>) -> LabelMap {
        let n = data.len();
        LabelMap::from_data(Grid::with_spacing([n, 1, 1], [1.0; 3]).unwrap(), data).unwrap()
    }

    #[test]
    fn dice_examples() {
        let a = map(vec![1, 1, 0, 0]);
        assert_eq!(dice(&a, &a, 1).unwrap(), 1.0);
        assert_eq!(dice(&a, &map(vec![0, 0, 1, 1]), 1).unwrap(), 0.0);
        assert_eq!(dice(&a, &a, 5).unwrap(), 1.0);
        let p = map(vec![1, 1, 1, 1, 0, 0]);
        let g = map(vec![0, 0, 1, 1, 0, 0]);
        assert!((dice(&p, &g, 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(dice(&p, &g, 1).unwrap(), dice(&g, &p, 1).unwrap());
    }

    #[test]
    fn dice_rejects_grid_mismatch() {
        assert!(matches!(dice(&map(vec![1]), &map(vec![1, 1]), 1), Err(Error::Contract(_))));
    }

    #[test]
    fn rve_examples() {
        let mut p = vec![1u32; 110];
        p.extend([0; 10]);
        let mut g = vec![1u32; 100];
        g.extend([0; 20]);
        assert!((rve(&map(p), &map(g.clone()), 1).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(rve(&map(g.clone()), &map(g.clone()), 1).unwrap(), 0.0);
        assert_eq!(rve(&map(vec![0; 120]), &map(g.clone()), 1).unwrap(), 1.0);
        assert!(matches!(
            rve(&map(g.clone()), &map(vec![0; 120]), 1),
            Err(Error::EmptyStructure { side: "gt", .. })
        ));
    }
}
