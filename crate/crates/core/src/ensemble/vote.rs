use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::volgrid::LabelMap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Among tied labels, the one voted by the earliest member.
    #[default]
    FirstMember,
    /// Smallest tied label id (background 0 included).
    LowestLabel,
}

impl std::str::FromStr for TieBreak {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first_member" | "first-member" => Ok(TieBreak::FirstMember),
            "lowest_label" | "lowest-label" => Ok(TieBreak::LowestLabel),
            other => Err(Error::Validation(format!("unknown tie_break `{other}`"))),
        }
    }
}

/// Winner of one voxel's votes (member order preserved in `votes`).
pub fn vote(votes: &[u32], tie_break: TieBreak) -> u32 {
    let mut tally: Vec<(u32, usize)> = Vec::with_capacity(votes.len());
    for &v in votes {
        match tally.iter_mut().find(|(l, _)| *l == v) {
            Some((_, c)) => *c += 1,
            None => tally.push((v, 1)),
        }
    }
    let best = tally.iter().map(|t| t.1).max().unwrap_or(0);
    let tied = tally.iter().filter(|t| t.1 == best).map(|t| t.0);
    match tie_break {
        // `tally` is in first-appearance order, so the first tied entry is the
        // earliest member's vote.
        TieBreak::FirstMember => tied.into_iter().next().unwrap_or(0),
        TieBreak::LowestLabel => tied.min().unwrap_or(0),
    }
}

/// Voxel-wise majority vote; background votes like any other label. The
/// result's vocabulary is the union of the members' (first name wins).
pub fn majority_vote(maps: &[LabelMap], tie_break: TieBreak) -> Result<LabelMap> {
    if maps.len() < 2 {
        return Err(Error::contract(format!(
            "majority vote needs at least 2 maps, got {}",
            maps.len()
        )));
    }
    let grid = maps[0].grid();
    for (i, m) in maps.iter().enumerate().skip(1) {
        grid.ensure_matches(m.grid(), &format!("majority vote member {i}"))?;
    }
    let mut vocabulary = BTreeMap::new();
    for m in maps {
        for (k, v) in m.vocabulary() {
            vocabulary.entry(*k).or_insert_with(|| v.clone());
        }
    }
    let mut votes = vec![0u32; maps.len()];
    let data = (0..grid.len())
        .map(|idx| {
            for (v, m) in votes.iter_mut().zip(maps) {
                *v = m.data()[idx];
            }
            vote(&votes, tie_break)
        })
        .collect();
    LabelMap::new(grid.clone(), data, vocabulary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volgrid::Grid;
    use proptest::prelude::*;

    fn maps_from(columns: &[Vec<u32>]) -> Vec<LabelMap> {
        let g = Grid::with_spacing([columns[0].len(), 1, 1], [1.0; 3]).unwrap();
        columns
            .iter()
            .map(|c| LabelMap::from_data(g.clone(), c.clone()).unwrap())
            .collect()
    }

    /// Count each label 0..=max, take the maximum count, break ties per mode.
    fn oracle(votes: &[u32], tie: TieBreak) -> u32 {
        let max_label = *votes.iter().max().unwrap() as usize;
        let mut counts = vec![0usize; max_label + 1];
        for &v in votes {
            counts[v as usize] += 1;
        }
        let best = *counts.iter().max().unwrap();
        match tie {
            TieBreak::LowestLabel => counts.iter().position(|&c| c == best).unwrap() as u32,
            TieBreak::FirstMember => *votes.iter().find(|&&v| counts[v as usize] == best).unwrap(),
        }
    }

    #[test]
    fn exhaustive_three_members_four_labels() {
        for tie in [TieBreak::FirstMember, TieBreak::LowestLabel] {
            let patterns: Vec<[u32; 3]> = (0..64u32).map(|p| [p % 4, (p / 4) % 4, p / 16]).collect();
            let cols: Vec<Vec<u32>> = (0..3).map(|m| patterns.iter().map(|p| p[m]).collect()).collect();
            let fused = majority_vote(&maps_from(&cols), tie).unwrap();
            for (p, out) in patterns.iter().zip(fused.data()) {
                assert_eq!(*out, oracle(p, tie), "{p:?} {tie:?}");
            }
        }
    }

    #[test]
    fn examples() {
        assert_eq!(vote(&[1, 1, 2], TieBreak::FirstMember), 1);
        assert_eq!(vote(&[2, 1, 1], TieBreak::FirstMember), 1);
        assert_eq!(vote(&[1, 2, 3], TieBreak::FirstMember), 1);
        assert_eq!(vote(&[3, 2, 1], TieBreak::FirstMember), 3);
        assert_eq!(vote(&[3, 2, 1], TieBreak::LowestLabel), 1);
        assert_eq!(vote(&[3, 0, 1], TieBreak::LowestLabel), 0);
    }

    #[test]
    fn contract_errors() {
        let one = maps_from(&[vec![1, 2]]);
        assert!(matches!(majority_vote(&one, TieBreak::FirstMember), Err(Error::Contract(_))));
        let mut two = maps_from(&[vec![1, 2], vec![1, 2]]);
        two.push(maps_from(&[vec![1, 2, 3]]).remove(0));
        assert!(matches!(majority_vote(&two, TieBreak::FirstMember), Err(Error::Contract(_))));
    }

    proptest! {
        #[test]
        fn oracle_unanimity_idempotence(
            members in 2usize..=4,
            cols in prop::collection::vec(prop::collection::vec(0u32..5, 30), 4),
            lowest in any::<bool>(),
        ) {
            let tie = if lowest { TieBreak::LowestLabel } else { TieBreak::FirstMember };
            let cols = &cols[..members];
            let maps = maps_from(cols);
            let fused = majority_vote(&maps, tie).unwrap();
            for (idx, out) in fused.data().iter().enumerate() {
                let votes: Vec<u32> = cols.iter().map(|c| c[idx]).collect();
                prop_assert_eq!(*out, oracle(&votes, tie));
                if votes.iter().all(|&v| v == votes[0]) {
                    prop_assert_eq!(*out, votes[0]);
                }
            }
            let copies = vec![maps[0].clone(); members];
            let same = majority_vote(&copies, tie).unwrap();
            prop_assert_eq!(same.data(), maps[0].data());
        }

        #[test]
        fn lowest_label_ignores_member_order(
            cols in prop::collection::vec(prop::collection::vec(0u32..4, 20), 3),
        ) {
            let rev: Vec<_> = cols.iter().rev().cloned().collect();
            let a = majority_vote(&maps_from(&cols), TieBreak::LowestLabel).unwrap();
            let b = majority_vote(&maps_from(&rev), TieBreak::LowestLabel).unwrap();
            prop_assert_eq!(a.data(), b.data());
        }
    }
}
