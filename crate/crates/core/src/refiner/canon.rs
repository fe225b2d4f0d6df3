//! Canonical forms reached by macro moves.
//!
//! A canonicalizer first reduces every item into a band that does not
//! depend on the window, then, given a window parameter `k` shared by both
//! sides of a comparison, rewrites to a form supported on finitely many sizes
//! whose values are linearly independent over the rationals. Equal sums then
//! force equal canonical forms.

use crate::cylinder::{Cylinder, CylinderMultiset};
use crate::error::{Error, Fuel, Result};
use crate::numberfield::{MinimalPolynomial, NumberField, Poly};
use crate::rewrite::Trace;

use super::macros::{CountWorkspace, MacroMove, Side, TracedWorkspace, Workspace};

pub trait Canonicalizer: Send + Sync {
    fn name(&self) -> &'static str;

    /// Refuses fields in which the macro identities do not hold.
    fn check_field(&self, field: &NumberField) -> Result<()>;

    /// Window-independent normalization.
    fn reduce(&self, ws: &mut dyn Workspace) -> Result<()>;

    /// Smallest admissible window for reduced multisets.
    fn window(&self, reduced: &[&CylinderMultiset]) -> u32;

    /// Rewrite a reduced workspace into canonical form at window `k`.
    fn finish(&self, ws: &mut dyn Workspace, k: u32) -> Result<()>;

    /// Sizes a canonical form at window `k` may use.
    fn support(&self, field: &NumberField, k: u32) -> Vec<Cylinder>;
}

/// Apply `m` to the first label (in canonical order) matching `pred`, until
/// none is left.
fn exhaust(ws: &mut dyn Workspace, m: MacroMove, pred: impl Fn(Cylinder) -> bool) -> Result<bool> {
    let mut any = false;
    while let Some(t) = ws.labels().into_iter().find(|c| pred(*c)) {
        ws.apply_all(m, t)?;
        any = true;
    }
    Ok(any)
}

fn max_a(ms: &[&CylinderMultiset]) -> u32 {
    ms.iter().filter_map(|m| m.max_a()).max().unwrap_or(0)
}

/// Canonical forms in the field of `x^n + x - 1`: powers `r^a` with
/// `k-n+1 <= a <= k`.
#[derive(Clone, Copy, Debug, Default)]
pub struct SelmerCanon;

impl SelmerCanon {
    fn n(field: &NumberField) -> Result<u32> {
        field.selmer_exponent().map(|n| n as u32).ok_or(Error::NotSelmerField)
    }
}

impl Canonicalizer for SelmerCanon {
    fn name(&self) -> &'static str {
        "selmer"
    }

    fn check_field(&self, field: &NumberField) -> Result<()> {
        match field.selmer_exponent() {
            Some(n) if n >= 2 => Ok(()),
            _ => Err(Error::StrategyInapplicable {
                strategy: self.name().into(),
                reason: format!("minimal polynomial {} is not x^n+x-1 with n >= 2", field.minpoly()),
            }),
        }
    }

    fn reduce(&self, ws: &mut dyn Workspace) -> Result<()> {
        exhaust(ws, MacroMove::BarElim, |c| c.b > 0)?;
        Ok(())
    }

    fn window(&self, reduced: &[&CylinderMultiset]) -> u32 {
        max_a(reduced)
    }

    fn finish(&self, ws: &mut dyn Workspace, k: u32) -> Result<()> {
        let n = Self::n(ws.field())?;
        let ms = ws.multiset();
        if ms.iter().any(|(c, _)| c.b > 0) {
            return Err(Error::Malformed("selmer window needs bar-free input".into()));
        }
        let max = ms.max_a().unwrap_or(0);
        if max > k {
            return Err(Error::WindowTooSmall { k, max });
        }
        exhaust(ws, MacroMove::SelmerSplit, |c| c.a + n <= k)?;
        Ok(())
    }

    fn support(&self, field: &NumberField, k: u32) -> Vec<Cylinder> {
        let n = Self::n(field).unwrap_or(1);
        (k.saturating_sub(n - 1)..=k).map(|a| Cylinder::new(a, 0)).collect()
    }
}

/// Canonical forms for `s` with `s^4 - 2s^2 - s + 1 = 0` (so `s = r^2` where
/// `r^4 + r = 1`): the four sizes `s^k(1-s)^(k-1)`, `s^(k-1)(1-s)^k`,
/// `s^k(1-s)^k`, `s^(k+1)(1-s)^k`.
#[derive(Clone, Copy, Debug, Default)]
pub struct R4sCanon;

impl R4sCanon {
    pub fn minpoly() -> MinimalPolynomial {
        MinimalPolynomial::new(&Poly::from_ints(&[1, -1, -2, 0, 1])).expect("nonzero")
    }

    fn in_band(c: Cylinder) -> bool {
        c.a == c.b || c.a == c.b + 1
    }
}

impl Canonicalizer for R4sCanon {
    fn name(&self) -> &'static str {
        "r4s"
    }

    fn check_field(&self, field: &NumberField) -> Result<()> {
        if field.minpoly() == &Self::minpoly() {
            Ok(())
        } else {
            Err(Error::StrategyInapplicable {
                strategy: self.name().into(),
                reason: format!("minimal polynomial {} is not {}", field.minpoly(), Self::minpoly()),
            })
        }
    }

    fn reduce(&self, ws: &mut dyn Workspace) -> Result<()> {
        // eqb raises a-b by 1 or 2 and eqc lowers it by 1 to 3, so from
        // below the band eqb cannot pass 1 and from above eqc cannot pass -1.
        loop {
            let down = exhaust(ws, MacroMove::Eqc, |c| c.a > c.b + 1)?;
            let up = exhaust(ws, MacroMove::Eqb, |c| c.a < c.b)?;
            if !down && !up {
                return Ok(());
            }
        }
    }

    fn window(&self, reduced: &[&CylinderMultiset]) -> u32 {
        max_a(reduced).max(2)
    }

    fn finish(&self, ws: &mut dyn Workspace, k: u32) -> Result<()> {
        let ms = ws.multiset();
        if let Some((c, _)) = ms.iter().find(|(c, _)| !Self::in_band(*c)) {
            return Err(Error::Malformed(format!("{c} is outside the band a-b in {{0,1}}")));
        }
        let max = ms.max_a().unwrap_or(0);
        if max > k || k < 2 {
            return Err(Error::WindowTooSmall { k, max: max.max(2) });
        }
        loop {
            let next = ws.labels().into_iter().find_map(|c| {
                if c.a == c.b && c.b + 1 < k {
                    Some((MacroMove::Eqd, c))
                } else if c.a == c.b + 1 && c.b + 2 < k {
                    Some((MacroMove::Eqe, c))
                } else {
                    None
                }
            });
            match next {
                Some((m, c)) => ws.apply_all(m, c)?,
                None => break,
            }
        }
        // Five sizes remain; fold them into four.
        ws.apply_all(MacroMove::TreeSplit, Cylinder::new(k - 1, k - 2))?;
        ws.apply_all(MacroMove::TreeSplit, Cylinder::new(k - 1, k - 1))?;
        ws.apply_all(MacroMove::Eqc, Cylinder::new(k, k - 2))?;
        let support = self.support(ws.field(), k);
        if let Some(c) = ws.labels().into_iter().find(|c| !support.contains(c)) {
            return Err(Error::Malformed(format!("{c} survived canonicalization at k={k}")));
        }
        Ok(())
    }

    fn support(&self, _field: &NumberField, k: u32) -> Vec<Cylinder> {
        let mut v = vec![
            Cylinder::new(k, k - 1),
            Cylinder::new(k - 1, k),
            Cylinder::new(k, k),
            Cylinder::new(k + 1, k),
        ];
        v.sort();
        v
    }
}

/// Count-level canonical form of `ms`. With `k = None` the window is the
/// smallest admissible one for `ms` alone.
pub fn canonical_form(
    canon: &dyn Canonicalizer,
    field: &NumberField,
    ms: &CylinderMultiset,
    k: Option<u32>,
    fuel: &Fuel,
    validate: bool,
) -> Result<(CylinderMultiset, u32)> {
    canon.check_field(field)?;
    let mut ws = CountWorkspace::new(field, ms.clone(), fuel, validate);
    canon.reduce(&mut ws)?;
    let k = match k {
        Some(k) => k,
        None => canon.window(&[&ws.multiset()]),
    };
    canon.finish(&mut ws, k)?;
    Ok((ws.into_multiset(), k))
}

/// Canonical forms of two multisets at their shared window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CanonicalPair {
    pub k: u32,
    pub a: CylinderMultiset,
    pub b: CylinderMultiset,
    /// Distinct `(move, target)` pairs whose realizations were checked.
    pub validated: usize,
}

impl CanonicalPair {
    pub fn agree(&self) -> bool {
        self.a == self.b
    }
}

pub fn canonicalize_pair(
    canon: &dyn Canonicalizer,
    field: &NumberField,
    a: &CylinderMultiset,
    b: &CylinderMultiset,
    fuel: &Fuel,
    validate: bool,
) -> Result<CanonicalPair> {
    canon.check_field(field)?;
    let mut wa = CountWorkspace::new(field, a.clone(), fuel, validate);
    let mut wb = CountWorkspace::new(field, b.clone(), fuel, validate);
    canon.reduce(&mut wa)?;
    canon.reduce(&mut wb)?;
    let k = canon.window(&[&wa.multiset(), &wb.multiset()]);
    canon.finish(&mut wa, k)?;
    canon.finish(&mut wb, k)?;
    let validated = wa.validated() + wb.validated();
    Ok(CanonicalPair {
        k,
        a: wa.into_multiset(),
        b: wb.into_multiset(),
        validated,
    })
}

/// Traced canonical form; every macro is recorded through its realization on
/// `side`.
pub fn canonicalize_traced(
    canon: &dyn Canonicalizer,
    field: &NumberField,
    ms: &CylinderMultiset,
    k: Option<u32>,
    side: Side,
    fuel: &Fuel,
) -> Result<(CylinderMultiset, Trace, u32)> {
    canon.check_field(field)?;
    let mut ws = TracedWorkspace::new(field, ms, side, fuel);
    canon.reduce(&mut ws)?;
    let k = match k {
        Some(k) => k,
        None => canon.window(&[&ws.multiset()]),
    };
    canon.finish(&mut ws, k)?;
    let out = ws.multiset();
    Ok((out, ws.into_builder().finish(), k))
}

/// Selmer canonical form at window `k`, traced on the split side.
pub fn selmer_canonicalize(
    ms: &CylinderMultiset,
    k: u32,
    field: &NumberField,
    fuel: &Fuel,
) -> Result<(CylinderMultiset, Trace)> {
    let (out, trace, _) = canonicalize_traced(&SelmerCanon, field, ms, Some(k), Side::Split, fuel)?;
    Ok((out, trace))
}

/// Four-size canonical form with the window taken from `ms`, traced on the
/// split side.
pub fn r4s_canonicalize(
    ms: &CylinderMultiset,
    field: &NumberField,
    fuel: &Fuel,
) -> Result<(CylinderMultiset, Trace, u32)> {
    canonicalize_traced(&R4sCanon, field, ms, None, Side::Split, fuel)
}
