//! Random instances built by splitting, so sums agree by construction.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cylinder::{Cylinder, CylinderMultiset};
use crate::error::{Error, Result};
use crate::numberfield::NumberField;

use super::macros::MacroMove;

#[derive(Clone, Copy, Debug)]
pub struct SampleBounds {
    pub max_items: usize,
    pub max_exponent: u32,
    /// Upper bound on split steps per sequence.
    pub max_steps: usize,
}

impl Default for SampleBounds {
    fn default() -> Self {
        SampleBounds {
            max_items: 12,
            max_exponent: 10,
            max_steps: 8,
        }
    }
}

/// Moves whose identities hold in `field`, for random splitting.
pub fn moves_for(field: &NumberField) -> Vec<MacroMove> {
    if field.selmer_exponent().is_some() {
        vec![MacroMove::TreeSplit, MacroMove::SelmerSplit, MacroMove::BarElim]
    } else if super::canon::Canonicalizer::check_field(&super::canon::R4sCanon, field).is_ok() {
        vec![
            MacroMove::TreeSplit,
            MacroMove::Eqb,
            MacroMove::Eqc,
            MacroMove::Eqd,
            MacroMove::Eqe,
        ]
    } else {
        vec![MacroMove::TreeSplit]
    }
}

/// Apply up to `bounds.max_steps` random moves to random items of `start`.
pub fn random_splits<R: Rng + ?Sized>(
    rng: &mut R,
    field: &NumberField,
    start: &CylinderMultiset,
    moves: &[MacroMove],
    bounds: SampleBounds,
    min_steps: usize,
) -> Result<CylinderMultiset> {
    let mut items = start.expand();
    let steps = rng.gen_range(min_steps..=bounds.max_steps.max(min_steps));
    for _ in 0..steps {
        let mut options = Vec::new();
        for (idx, &c) in items.iter().enumerate() {
            for &m in moves {
                let Ok(out) = m.split_result(c, field) else { continue };
                let fits = items.len() - 1 + out.len() <= bounds.max_items
                    && out
                        .iter()
                        .all(|o| o.a <= bounds.max_exponent && o.b <= bounds.max_exponent);
                if fits {
                    options.push((idx, m, out));
                }
            }
        }
        let Some((idx, _, out)) = options.choose(rng).cloned() else {
            break;
        };
        items.swap_remove(idx);
        items.extend(out);
    }
    let ms: CylinderMultiset = items.into_iter().collect();
    if ms.sum(field) != start.sum(field) {
        return Err(Error::SumMismatch);
    }
    Ok(ms)
}

/// A random multiset of `1..=max_base` sizes with small exponents.
pub fn random_base<R: Rng + ?Sized>(rng: &mut R, max_base: usize, max_exponent: u32) -> CylinderMultiset {
    let n = rng.gen_range(1..=max_base);
    (0..n)
        .map(|_| Cylinder::new(rng.gen_range(0..=max_exponent), rng.gen_range(0..=max_exponent)))
        .collect()
}

/// Two independent split sequences from one random base.
pub fn random_equal_sum_pair<R: Rng + ?Sized>(
    rng: &mut R,
    field: &NumberField,
    bounds: SampleBounds,
) -> Result<(CylinderMultiset, CylinderMultiset)> {
    let moves = moves_for(field);
    let base = random_base(rng, 3, 4);
    let a = random_splits(rng, field, &base, &moves, bounds, 0)?;
    let b = random_splits(rng, field, &base, &moves, bounds, 0)?;
    Ok((a, b))
}

/// A random cylinder `c` and a partition of it into at least two strictly
/// smaller sizes.
pub fn random_partition<R: Rng + ?Sized>(
    rng: &mut R,
    field: &NumberField,
    max_root_exponent: u32,
    bounds: SampleBounds,
) -> Result<(Cylinder, CylinderMultiset)> {
    let moves = moves_for(field);
    loop {
        let c = Cylinder::new(
            rng.gen_range(0..=max_root_exponent),
            rng.gen_range(0..=max_root_exponent),
        );
        let b = random_splits(rng, field, &CylinderMultiset::singleton(c), &moves, bounds, 1)?;
        if b.count() >= 2 {
            return Ok((c, b));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pairs_have_equal_sums_and_respect_bounds() {
        let f = NumberField::selmer(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (a, b) = random_equal_sum_pair(&mut rng, &f, SampleBounds::default()).unwrap();
            assert_eq!(a.sum(&f), b.sum(&f));
            assert!(a.count() <= 12 && b.count() <= 12);
        }
        let (c, b) = random_partition(&mut rng, &f, 3, SampleBounds::default()).unwrap();
        assert_eq!(b.sum(&f), f.cylinder(c));
        assert!(b.count() >= 2);
    }
}
