//! The signed transform field and the two measures it induces.
//!
//! For a product density `f(z) = f1(z1) f2(z2)` on two items, the
//! field `phi(z) = -grad f(z) . z - 3 f(z)` splits the support into a
//! favored region (positive part, measure `mu`) and its complement
//! (negative part, measure `nu`), with a unit point mass at the lower
//! support corner keeping the totals equal.

use crate::distributions::Instance;
use crate::numerics::{
    find_root, integrate_2d, BoundaryCurve, IteratedRegion, NumericsError, Tolerance,
};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("point ({0}, {1}) outside the support box")]
    OutOfSupport(f64, f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Which measure to integrate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Side {
    Mu,
    Nu,
}

/// Classification of a support point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegionLabel {
    /// `phi > 0`.
    X,
    /// `phi <= 0` (boundary included by convention).
    Y,
    /// The lower support corner carrying the unit atom.
    DMinus,
}

/// One constraint of a planar region; a region is a finite
/// intersection of these inside the support box.
#[derive(Clone)]
pub enum Constraint {
    /// `z1 + z2 <= p`
    SumLe(f64),
    /// `z1 + z2 >= p`
    SumGe(f64),
    /// `w1 z1 + w2 z2 <= k` with `w2 > 0`
    WeightedSumLe { w: (f64, f64), k: f64 },
    /// `w1 z1 + w2 z2 >= k` with `w2 > 0`
    WeightedSumGe { w: (f64, f64), k: f64 },
    /// below a decreasing curve: `z1` in the curve domain and
    /// `z2 <= s(z1)`
    BelowCurve(Arc<BoundaryCurve>),
    /// above the curve where it is defined, unconstrained past its
    /// right end
    AboveCurve(Arc<BoundaryCurve>),
    X1Le(f64),
    X1Ge(f64),
    X2Le(f64),
    X2Ge(f64),
}

/// Intersection of constraints, evaluated inside the (truncated)
/// support box.
#[derive(Clone, Default)]
pub struct Region {
    pub constraints: Vec<Constraint>,
}

impl Region {
    pub fn all() -> Self {
        Region::default()
    }

    pub fn with(mut self, c: Constraint) -> Self {
        self.constraints.push(c);
        self
    }

    /// Reduce to iterated bounds over the box `((x0,x1),(y0,y1))`.
    pub fn iterated(&self, bx: ((f64, f64), (f64, f64))) -> IteratedRegion<'static> {
        let ((mut x0, mut x1), (y0, y1)) = bx;
        for c in &self.constraints {
            match c {
                Constraint::X1Le(v) => x1 = x1.min(*v),
                Constraint::X1Ge(v) => x0 = x0.max(*v),
                Constraint::SumLe(p) => x1 = x1.min(p - y0),
                Constraint::WeightedSumLe { w, k } => {
                    if w.0 > 0.0 {
                        x1 = x1.min((k - w.1 * y0) / w.0);
                    }
                }
                Constraint::BelowCurve(curve) => {
                    let (a, b) = curve.domain();
                    x0 = x0.max(a);
                    x1 = x1.min(b);
                }
                _ => {}
            }
        }
        x1 = x1.max(x0);
        let cs = self.constraints.clone();
        let lo = {
            let cs = cs.clone();
            move |z1: f64| {
                let mut lo = y0;
                for c in &cs {
                    match c {
                        Constraint::SumGe(p) => lo = lo.max(p - z1),
                        Constraint::WeightedSumGe { w, k } => lo = lo.max((k - w.0 * z1) / w.1),
                        Constraint::AboveCurve(curve) => {
                            let (a, b) = curve.domain();
                            if z1 >= a && z1 <= b {
                                lo = lo.max(curve.eval(z1).unwrap_or(y0));
                            }
                        }
                        Constraint::X2Ge(v) => lo = lo.max(*v),
                        _ => {}
                    }
                }
                lo
            }
        };
        let hi = move |z1: f64| {
            let mut hi = y1;
            for c in &cs {
                match c {
                    Constraint::SumLe(p) => hi = hi.min(p - z1),
                    Constraint::WeightedSumLe { w, k } => hi = hi.min((k - w.0 * z1) / w.1),
                    Constraint::BelowCurve(curve) => {
                        let (a, b) = curve.domain();
                        if z1 >= a && z1 <= b {
                            hi = hi.min(curve.eval(z1).unwrap_or(y0));
                        } else {
                            hi = y0; // outside the curve domain the region is empty
                        }
                    }
                    Constraint::X2Le(v) => hi = hi.min(*v),
                    _ => {}
                }
            }
            hi
        };
        IteratedRegion { x0, x1, lo: Box::new(lo), hi: Box::new(hi) }
    }

    /// Pointwise membership (used for sampling-based checks).
    pub fn contains(&self, z1: f64, z2: f64) -> bool {
        self.constraints.iter().all(|c| match c {
            Constraint::SumLe(p) => z1 + z2 <= *p,
            Constraint::SumGe(p) => z1 + z2 >= *p,
            Constraint::WeightedSumLe { w, k } => w.0 * z1 + w.1 * z2 <= *k,
            Constraint::WeightedSumGe { w, k } => w.0 * z1 + w.1 * z2 >= *k,
            Constraint::BelowCurve(curve) => {
                let (a, b) = curve.domain();
                z1 >= a && z1 <= b && z2 <= curve.eval(z1).unwrap_or(f64::NEG_INFINITY)
            }
            Constraint::AboveCurve(curve) => {
                let (a, b) = curve.domain();
                z1 > b || (z1 >= a && z2 >= curve.eval(z1).unwrap_or(f64::INFINITY))
            }
            Constraint::X1Le(v) => z1 <= *v,
            Constraint::X1Ge(v) => z1 >= *v,
            Constraint::X2Le(v) => z2 <= *v,
            Constraint::X2Ge(v) => z2 >= *v,
        })
    }
}

/// The transform field of a two-item instance, plus the unit atom at
/// the lower support corner.
#[derive(Clone, Debug)]
pub struct TransformField {
    pub instance: Instance,
    pub point_mass_at_dminus: f64,
}

impl TransformField {
    pub fn new(instance: Instance) -> Self {
        TransformField { instance, point_mass_at_dminus: 1.0 }
    }

    /// `phi(z) = -z1 f1'(z1) f2(z2) - z2 f1(z1) f2'(z2) - 3 f1(z1) f2(z2)`.
    pub fn phi(&self, z1: f64, z2: f64) -> f64 {
        let [d1, d2] = &self.instance.items;
        let f1 = d1.pdf(z1);
        let f2 = d2.pdf(z2);
        -z1 * d1.dpdf(z1) * f2 - z2 * f1 * d2.dpdf(z2) - 3.0 * f1 * f2
    }

    /// `sum_i -z_i f_i'(z_i) / f_i(z_i) - 3`: positive exactly on the
    /// favored region, and increasing in each coordinate for the
    /// built-in families (used as the eta factor in dominance checks).
    pub fn eta(&self, z1: f64, z2: f64) -> f64 {
        let [d1, d2] = &self.instance.items;
        d1.neg_elasticity(z1) + d2.neg_elasticity(z2) - 3.0
    }

    pub fn in_support(&self, z1: f64, z2: f64) -> bool {
        let [d1, d2] = &self.instance.items;
        z1 >= d1.support.0 && z1 < d1.support.1 && z2 >= d2.support.0 && z2 < d2.support.1
    }

    pub fn classify(&self, z1: f64, z2: f64) -> Result<RegionLabel, MeasureError> {
        if !self.in_support(z1, z2) {
            return Err(MeasureError::OutOfSupport(z1, z2));
        }
        let d = self.instance.d_minus();
        if z1 == d.0 && z2 == d.1 {
            return Ok(RegionLabel::DMinus);
        }
        if self.phi(z1, z2) > 0.0 {
            Ok(RegionLabel::X)
        } else {
            Ok(RegionLabel::Y)
        }
    }

    /// Truncated integration box for the instance at quadrature scale.
    pub fn quad_box(&self, tol: &Tolerance) -> ((f64, f64), (f64, f64)) {
        self.instance.truncated_box(tol.abs_tol / 10.0)
    }

    /// Height at which the column `{z1} x [lo, hi]` crosses from the
    /// dominated into the favored region, clamped to the column.
    /// Relies on the elasticity sum being increasing in `z2`.
    pub fn x_cut(&self, z1: f64, lo: f64, hi: f64) -> f64 {
        // keep evaluations strictly inside the support: elasticities
        // may blow up at its edge
        let top = hi - (hi - lo) * 1e-13;
        if self.eta(z1, lo) > 0.0 {
            return lo;
        }
        if self.eta(z1, top) <= 0.0 {
            return hi;
        }
        find_root(|z2| self.eta(z1, z2), lo, top, &Tolerance::default()).unwrap_or(hi)
    }

    /// Mass of `mu` (positive part) or `nu` (negative part) on the
    /// region. The atom at the lower corner is not included.
    ///
    /// Each inner column is split at the sign change of `phi`, so the
    /// integrand seen by the quadrature is smooth and supported on
    /// the whole (sub)column; without the split, columns whose signed
    /// part is a sliver can slip between quadrature nodes entirely.
    pub fn mass(&self, which: Side, region: &Region, tol: &Tolerance) -> Result<f64, MeasureError> {
        let it = region.iterated(self.quad_box(tol));
        let (x0, x1) = (it.x0, it.x1);
        let lo: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::from(it.lo);
        let hi: Arc<dyn Fn(f64) -> f64 + Send + Sync> = Arc::from(it.hi);
        let cut = {
            let (lo, hi) = (lo.clone(), hi.clone());
            move |z1: f64| {
                let (l, h) = (lo(z1), hi(z1));
                if h <= l {
                    l
                } else {
                    self.x_cut(z1, l, h)
                }
            }
        };
        let clipped = match which {
            Side::Mu => IteratedRegion {
                x0,
                x1,
                lo: Box::new(cut),
                hi: Box::new(move |z1| hi(z1)),
            },
            Side::Nu => IteratedRegion {
                x0,
                x1,
                lo: Box::new(move |z1| lo(z1)),
                hi: Box::new(cut),
            },
        };
        let v = match which {
            Side::Mu => integrate_2d(|z1, z2| self.phi(z1, z2).max(0.0), &clipped, tol)?,
            Side::Nu => integrate_2d(|z1, z2| (-self.phi(z1, z2)).max(0.0), &clipped, tol)?,
        };
        Ok(v)
    }

    /// `nu(Y) - mu(X)`, which the transform guarantees to be 1 (the
    /// atom's mass) for any density meeting the assumptions. Computed
    /// as `-integral of phi` over the support, a smooth integrand.
    pub fn check_mass_identity(&self, tol: &Tolerance) -> Result<f64, MeasureError> {
        let it = Region::all().iterated(self.quad_box(tol));
        Ok(-integrate_2d(|z1, z2| self.phi(z1, z2), &it, tol)?)
    }
}
