use std::collections::BTreeMap;

use super::{Method, PivotTally, ShapleyResult, SubsetTables, ThresholdGame};
use crate::error::Result;
use crate::privacy::{AggregationMode, InfoStat};

/// Subsets of one half with the same size and the same point total, ordered
/// so that `wins(outer + value)` is non-decreasing along `values` for any
/// fixed `outer`.
struct Group {
    size: usize,
    values: Vec<InfoStat>,
}

fn groups(table: &[InfoStat], mode: AggregationMode) -> Vec<Group> {
    let mut buckets: BTreeMap<(usize, u64), Vec<InfoStat>> = BTreeMap::new();
    for (mask, stat) in table.iter().enumerate() {
        buckets.entry((mask.count_ones() as usize, stat.points.to_bits())).or_default().push(*stat);
    }
    buckets
        .into_iter()
        .map(|((size, _), mut values)| {
            match mode {
                // the pooled parameter falls as the denominator mass grows
                AggregationMode::KrrComposition => values.sort_by(|a, b| b.mass.total_cmp(&a.mass)),
                AggregationMode::AdditiveInformation | AggregationMode::ExampleContribution => {
                    values.sort_by(|a, b| a.mass.total_cmp(&b.mass))
                }
            }
            Group { size, values }
        })
        .collect()
}

/// Number of leading values for which `outer + value` misses the target.
fn losing_prefix(game: &ThresholdGame, outer: InfoStat, values: &[InfoStat]) -> usize {
    if game.wins(outer + values[0]) {
        0
    } else if !game.wins(outer + values[values.len() - 1]) {
        values.len()
    } else {
        values.partition_point(|v| !game.wins(outer + *v))
    }
}

/// Largest `outer subsets × groups` table of losing prefixes kept in memory.
const PREFIX_TABLE_LIMIT: usize = 1 << 24;

/// Losing-prefix lengths of every subset of one half against every group of
/// the other half, computed up front when the table is small enough and on
/// demand otherwise.
struct Prefixes<'a> {
    game: &'a ThresholdGame,
    outer: &'a [InfoStat],
    groups: &'a [Group],
    table: Option<Vec<u32>>,
}

impl<'a> Prefixes<'a> {
    fn new(game: &'a ThresholdGame, outer: &'a [InfoStat], groups: &'a [Group], limit: usize) -> Self {
        let table = (outer.len().saturating_mul(groups.len()) <= limit).then(|| {
            outer
                .iter()
                .flat_map(|&o| groups.iter().map(move |g| losing_prefix(game, o, &g.values) as u32))
                .collect()
        });
        Self { game, outer, groups, table }
    }

    #[inline]
    fn get(&self, outer: usize, group: usize) -> usize {
        match &self.table {
            Some(t) => t[outer * self.groups.len() + group] as usize,
            None => losing_prefix(self.game, self.outer[outer], &self.groups[group].values),
        }
    }
}

/// Exact Shapley value that only accounts for threshold-crossing coalitions.
///
/// Every marginal contribution of a threshold game is zero except where
/// adding the player moves the coalition across the target. For each player
/// `i` the coalitions `S ⊆ N∖{i}` are split into the part inside `i`'s half
/// and the part inside the other half. For a fixed part `o` of `i`'s own
/// half, the other half's subsets are grouped and sorted so that the
/// losing coalitions `o ∪ x` form a prefix of length `a`, and the losing
/// coalitions `o ∪ {i} ∪ x` a prefix of length `b`. Exactly `a − b`
/// coalitions are crossed upward when positive, `b − a` downward when
/// negative. Prefix lengths come from binary searches and are shared by all
/// players of a half, so non-pivotal coalitions are never visited one by one.
///
/// Coalition sums use the same subset tables as [`super::shapley_exact`],
/// and pivot counts are combined with the same integer weights, so the
/// shares are bit-identical to the exact evaluator.
pub fn shapley_pruned(game: &ThresholdGame) -> Result<ShapleyResult> {
    pruned(game, PREFIX_TABLE_LIMIT)
}

fn pruned(game: &ThresholdGame, table_limit: usize) -> Result<ShapleyResult> {
    game.check_enumerable()?;
    let n = game.len();
    let tables = SubsetTables::build(game);
    let h = tables.split;
    let low_groups = groups(&tables.low, game.mode());
    let high_groups = groups(&tables.high, game.mode());
    let low_outer = Prefixes::new(game, &tables.low, &high_groups, table_limit);
    let high_outer = Prefixes::new(game, &tables.high, &low_groups, table_limit);
    let mut tally = PivotTally::new(n);

    for i in 0..n {
        let (prefixes, bit) = if i < h { (&low_outer, i) } else { (&high_outer, i - h) };
        let with_i = 1usize << bit;
        for o in (0..prefixes.outer.len()).filter(|o| o & with_i == 0) {
            let outer_size = o.count_ones() as usize;
            for (gi, g) in prefixes.groups.iter().enumerate() {
                let a = prefixes.get(o, gi);
                let b = prefixes.get(o | with_i, gi);
                let size = outer_size + g.size;
                if a > b {
                    tally.up[i][size] += (a - b) as u64;
                } else if b > a {
                    tally.down[i][size] += (b - a) as u64;
                }
            }
        }
    }
    Ok(tally.into_result(game, Method::Pruned))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapley::shapley_exact;

    #[test]
    fn individually_sufficient_players_split_evenly() {
        let game = ThresholdGame::from_contributions(&[3.0, 4.0, 5.0, 6.0], 2.0, 12.0).unwrap();
        assert_eq!(shapley_pruned(&game).unwrap().values(), vec![3.0; 4]);
    }

    #[test]
    fn matches_exact_on_small_games() {
        for values in [&[1.0, 0.5, 0.3][..], &[1.0, 1.0], &[0.2; 7], &[5.0, 0.1, 0.1, 0.1, 2.0]] {
            for target in [0.25, 1.0, 1.4, 2.2, 9.0] {
                let game = ThresholdGame::from_contributions(values, target, 60.0).unwrap();
                let e = shapley_exact(&game).unwrap();
                let p = shapley_pruned(&game).unwrap();
                assert_eq!(e.values(), p.values(), "{values:?} target {target}");
                assert_eq!(e.pivots, p.pivots);
            }
        }
    }

    #[test]
    fn on_demand_prefixes_match_the_table() {
        let values: Vec<f64> = (0..13).map(|i| 0.3 + (i as f64 * 1.37).cos().abs()).collect();
        let game = ThresholdGame::from_contributions(&values, 4.0, 50.0).unwrap();
        assert_eq!(pruned(&game, 0).unwrap(), shapley_pruned(&game).unwrap());
    }
}
