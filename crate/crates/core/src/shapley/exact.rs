use super::{Method, PivotTally, ShapleyResult, SubsetTables, ThresholdGame};
use crate::error::Result;

/// Shapley value by full enumeration:
/// `ψ_i = Σ_{S ⊆ N∖{i}} |S|!(n−|S|−1)!/n! · (v(S∪{i}) − v(S))`.
///
/// Visits all `2^n` coalitions and, for each, every player outside it.
pub fn shapley_exact(game: &ThresholdGame) -> Result<ShapleyResult> {
    game.check_enumerable()?;
    let n = game.len();
    let tables = SubsetTables::build(game);
    let full: u64 = (1u64 << n) - 1;
    let mut tally = PivotTally::new(n);

    for s in 0..=full {
        let base = game.wins(tables.stat(s));
        let size = s.count_ones() as usize;
        let mut outside = full & !s;
        while outside != 0 {
            let i = outside.trailing_zeros() as usize;
            outside &= outside - 1;
            let with = game.wins(tables.stat(s | 1 << i));
            match (base, with) {
                (false, true) => tally.up[i][size] += 1,
                (true, false) => tally.down[i][size] += 1,
                _ => {}
            }
        }
    }
    Ok(tally.into_result(game, Method::Exact))
}
