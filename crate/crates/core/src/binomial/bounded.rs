//! Bounded nonnegative integer solutions of `sum x_i w_i = target` in a
//! number field.
//!
//! The weights span a subspace of dimension `rank`. A set of pivot columns
//! (chosen from the end) is solved for exactly; the remaining free columns are
//! enumerated depth-first, and every free variable is restricted to the
//! interval that keeps all pivots inside their bounds for some completion.

use std::ops::ControlFlow;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Fuel, Result};
use crate::numberfield::{linalg, FieldElement, NumberField};

pub struct BoundedEngine {
    n_vars: usize,
    free: Vec<usize>,
    pivots: Vec<usize>,
    /// Rows of the field coefficient vectors used to solve for pivots.
    rows: Vec<usize>,
    /// Inverse of the pivot block restricted to `rows`.
    inv: linalg::Matrix,
    /// Full pivot block, for the membership check.
    pivot_cols: Vec<Vec<BigRational>>,
    /// `coords[f][k]`: free column `f` in pivot coordinates.
    coords: Vec<Vec<BigRational>>,
}

/// Integer data for one target.
struct Scaled {
    denom: i128,
    /// `g[f][k]` scaled by `denom`.
    g: Vec<Vec<i128>>,
    /// Target coordinates scaled by `denom`.
    h: Vec<i128>,
}

impl BoundedEngine {
    pub fn new(weights: &[FieldElement]) -> Self {
        let order: Vec<usize> = (0..weights.len()).rev().collect();
        Self::with_pivot_preference(weights, &order)
    }

    /// Pivots are taken greedily in the order `preference` (a permutation of
    /// the variables). Pivots with wide bounds leave more room for the free
    /// variables.
    pub fn with_pivot_preference(weights: &[FieldElement], preference: &[usize]) -> Self {
        let n_vars = weights.len();
        let mut pivots = Vec::new();
        let mut basis: linalg::Matrix = Vec::new();
        for &i in preference {
            let mut trial = basis.clone();
            trial.push(weights[i].coeffs().to_vec());
            if linalg::rank(&trial) > basis.len() {
                basis = trial;
                pivots.push(i);
            }
        }
        pivots.sort_unstable();
        let pivot_cols: Vec<Vec<BigRational>> = pivots.iter().map(|&i| weights[i].coeffs().to_vec()).collect();
        let full = linalg::columns_to_rows(&pivot_cols);
        let mut rows = Vec::new();
        let mut chosen: linalg::Matrix = Vec::new();
        for (ri, row) in full.iter().enumerate() {
            let mut trial = chosen.clone();
            trial.push(row.clone());
            if linalg::rank(&trial) > chosen.len() {
                chosen = trial;
                rows.push(ri);
            }
            if chosen.len() == pivots.len() {
                break;
            }
        }
        let inv = if pivots.is_empty() {
            Vec::new()
        } else {
            linalg::inverse(&chosen).expect("independent rows")
        };
        let free: Vec<usize> = (0..n_vars).filter(|i| !pivots.contains(i)).collect();
        let mut engine = BoundedEngine {
            n_vars,
            free,
            pivots,
            rows,
            inv,
            pivot_cols,
            coords: Vec::new(),
        };
        engine.coords = engine
            .free
            .iter()
            .map(|&i| engine.coordinates(weights[i].coeffs()).expect("column in span"))
            .collect();
        engine
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    fn coordinates(&self, v: &[BigRational]) -> Option<Vec<BigRational>> {
        let sub: Vec<BigRational> = self.rows.iter().map(|&r| v[r].clone()).collect();
        let c = linalg::mat_vec(&self.inv, &sub);
        // Membership: the pivot combination must reproduce every coordinate.
        for (r, val) in v.iter().enumerate() {
            let got = self
                .pivot_cols
                .iter()
                .zip(&c)
                .fold(BigRational::zero(), |acc, (col, x)| acc + &col[r] * x);
            if &got != val {
                return None;
            }
        }
        Some(c)
    }

    fn scale(&self, h: Vec<BigRational>) -> Result<Scaled> {
        let mut denom = BigInt::one();
        for v in self.coords.iter().flatten().chain(&h) {
            denom = denom.lcm(v.denom());
        }
        let to_i128 = |v: &BigRational| -> Result<i128> {
            (v * BigRational::from_integer(denom.clone()))
                .to_integer()
                .to_i128()
                .filter(|x| x.unsigned_abs() < 1u128 << 80)
                .ok_or(Error::Overflow("bounded search coefficients"))
        };
        Ok(Scaled {
            denom: denom
                .to_i128()
                .filter(|x| x.unsigned_abs() < 1u128 << 80)
                .ok_or(Error::Overflow("bounded search denominator"))?,
            g: self
                .coords
                .iter()
                .map(|row| row.iter().map(to_i128).collect::<Result<Vec<_>>>())
                .collect::<Result<_>>()?,
            h: h.iter().map(to_i128).collect::<Result<_>>()?,
        })
    }

    /// Visit every solution with `0 <= x_i <= caps[i]` until the visitor
    /// breaks. Solutions come in ascending lexicographic order of the free
    /// variables; for cylinder weights the pivots are the trailing columns, so
    /// this is plain lexicographic order.
    pub fn for_each_solution<F>(
        &self,
        target: &FieldElement,
        caps: &[u128],
        fuel: &Fuel,
        visit: F,
    ) -> Result<ControlFlow<()>>
    where
        F: FnMut(&[u128]) -> ControlFlow<()>,
    {
        self.for_each_solution_near(target, caps, None, fuel, visit)
    }

    /// As [`Self::for_each_solution`], but each free variable tries values
    /// nearest to `center` first when one is given.
    pub fn for_each_solution_near<F>(
        &self,
        target: &FieldElement,
        caps: &[u128],
        center: Option<&[u128]>,
        fuel: &Fuel,
        mut visit: F,
    ) -> Result<ControlFlow<()>>
    where
        F: FnMut(&[u128]) -> ControlFlow<()>,
    {
        assert_eq!(caps.len(), self.n_vars);
        let Some(h) = self.coordinates(target.coeffs()) else {
            return Ok(ControlFlow::Continue(()));
        };
        let sc = self.scale(h)?;
        let capi: Vec<i128> = caps
            .iter()
            .map(|&c| i128::try_from(c).map_err(|_| Error::Overflow("bounded search caps")))
            .collect::<Result<_>>()?;
        let r = self.pivots.len();
        // Suffix sums of the positive and negative parts of each pivot's
        // dependence on the remaining free variables.
        let nf = self.free.len();
        let mut pos = vec![vec![0i128; r]; nf + 1];
        let mut neg = vec![vec![0i128; r]; nf + 1];
        for f in (0..nf).rev() {
            let cap = capi[self.free[f]];
            for k in 0..r {
                let t = sc.g[f][k]
                    .checked_mul(cap)
                    .ok_or(Error::Overflow("bounded search bounds"))?;
                pos[f][k] = pos[f + 1][k] + t.max(0);
                neg[f][k] = neg[f + 1][k] + t.min(0);
            }
        }
        let mut state = Search {
            engine: self,
            sc: &sc,
            capi: &capi,
            pos: &pos,
            neg: &neg,
            x: vec![0u128; self.n_vars],
            residual: sc.h.clone(),
            center,
            fuel,
        };
        state.dfs(0, &mut visit)
    }

    /// Lexicographically least solution, if any.
    pub fn first_solution(&self, target: &FieldElement, caps: &[u128], fuel: &Fuel) -> Result<Option<Vec<u128>>> {
        let mut found = None;
        let _ = self.for_each_solution(target, caps, fuel, |x| {
            found = Some(x.to_vec());
            ControlFlow::Break(())
        })?;
        Ok(found)
    }
}

struct Search<'a> {
    engine: &'a BoundedEngine,
    sc: &'a Scaled,
    capi: &'a [i128],
    pos: &'a [Vec<i128>],
    neg: &'a [Vec<i128>],
    x: Vec<u128>,
    residual: Vec<i128>,
    center: Option<&'a [u128]>,
    fuel: &'a Fuel,
}

impl Search<'_> {
    fn dfs<F>(&mut self, f: usize, visit: &mut F) -> Result<ControlFlow<()>>
    where
        F: FnMut(&[u128]) -> ControlFlow<()>,
    {
        self.fuel.burn(1)?;
        let eng = self.engine;
        let d = self.sc.denom;
        if f == eng.free.len() {
            for (k, &p) in eng.pivots.iter().enumerate() {
                let res = self.residual[k];
                if res < 0 || res % d != 0 || res / d > self.capi[p] {
                    return Ok(ControlFlow::Continue(()));
                }
                self.x[p] = (res / d) as u128;
            }
            return Ok(visit(&self.x));
        }
        let var = eng.free[f];
        let (mut lo, mut hi) = (0i128, self.capi[var]);
        for k in 0..eng.pivots.len() {
            let g = self.sc.g[f][k];
            let dcap = d * self.capi[eng.pivots[k]];
            // Some completion must put the pivot residual in [0, d*cap].
            let l = self.residual[k] - self.pos[f + 1][k] - dcap;
            let u = self.residual[k] - self.neg[f + 1][k];
            match g.signum() {
                0 => {
                    if l > 0 || u < 0 {
                        return Ok(ControlFlow::Continue(()));
                    }
                }
                1 => {
                    lo = lo.max(ceil_div(l, g));
                    hi = hi.min(Integer::div_floor(&u, &g));
                }
                _ => {
                    lo = lo.max(ceil_div(u, g));
                    hi = hi.min(Integer::div_floor(&l, &g));
                }
            }
        }
        if lo > hi {
            return Ok(ControlFlow::Continue(()));
        }
        let start = match self.center {
            Some(c) => (c[var] as i128).clamp(lo, hi),
            None => lo,
        };
        // start, start+1, start-1, start+2, ...
        let span = (hi - start).max(start - lo);
        for step in 0..=2 * span {
            let off = (step + 1) / 2;
            let v = if step % 2 == 1 { start + off } else { start - off };
            if v < lo || v > hi {
                continue;
            }
            for k in 0..eng.pivots.len() {
                self.residual[k] -= self.sc.g[f][k] * v;
            }
            self.x[var] = v as u128;
            let flow = self.dfs(f + 1, visit);
            for k in 0..eng.pivots.len() {
                self.residual[k] += self.sc.g[f][k] * v;
            }
            if flow?.is_break() {
                return Ok(ControlFlow::Break(()));
            }
        }
        self.x[var] = 0;
        Ok(ControlFlow::Continue(()))
    }
}

fn ceil_div(x: i128, d: i128) -> i128 {
    -Integer::div_floor(&-x, &d)
}

/// Exact check that `sum x_i w_i = target`.
pub fn check_solution(field: &NumberField, weights: &[FieldElement], x: &[u128], target: &FieldElement) -> bool {
    let mut acc = field.zero();
    for (w, &k) in weights.iter().zip(x) {
        if k > 0 {
            acc.add_assign(&w.scale_int(k));
        }
    }
    &acc == target
}
