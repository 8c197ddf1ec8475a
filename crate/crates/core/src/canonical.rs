//! General two-item synthesis pipeline: trace the balance curves
//! `S_top` and `S_right` of the transform field, find the critical
//! 45-degree segment, assemble the canonical zero set, verify the
//! partition is well-formed, and emit the region-parametrized menu.

use crate::distributions::ItemDistribution;
use crate::dominance::{check_region_dominance, CertCheck, CertReport, DominanceError, DominanceProblem};
use crate::measures::{Constraint, MeasureError, Region, Side, TransformField};
use crate::mechanism::{Mechanism, MenuOption, OptionFamily};
use crate::numerics::{
    find_root, integrate_1d, scan_root, BoundaryCurve, NumericsError, Tolerance, UpperLimit,
};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CanonicalError {
    #[error("balance curve not found: {0}")]
    CurveNotFound(String),
    #[error("no critical price in [{0}, {1}]")]
    NoSolution(f64, f64),
    #[error("assembled boundary is not concave: {0}")]
    NonConcaveAssembly(String),
    #[error("boundary slope out of range at z1 = {z1}: s' = {slope}")]
    SlopeOutOfRange { z1: f64, slope: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Dominance(#[from] DominanceError),
}

const CURVE_KNOTS: usize = 400;
const CURVE_SLACK: f64 = 1e-6;

fn upper_of(item: &ItemDistribution) -> UpperLimit {
    if item.support.1.is_finite() {
        UpperLimit::Finite(item.support.1)
    } else {
        UpperLimit::Infinite(item.tail)
    }
}

/// Height in `[lo, hi)` at which the per-column elasticity excess
/// `e1 + ne2(t) - 3` changes sign (the whole column keeps one sign
/// when there is no crossing).
fn column_cut(passive: &ItemDistribution, e1: f64, lo: f64, hi: f64) -> f64 {
    let top = hi - (hi - lo) * 1e-13;
    let excess = |t: f64| e1 + passive.neg_elasticity(t) - 3.0;
    if excess(lo) > 0.0 {
        return lo;
    }
    if excess(top) <= 0.0 {
        return hi;
    }
    find_root(excess, lo, top, &Tolerance::default()).unwrap_or(hi)
}

/// Trace the curve of column balance points of the transform field,
/// with the `active` item on the abscissa: for each `z1` the height
/// `z2` at which the integral of `phi(z1, .)` from `z2` to the top of
/// the support vanishes. Returns samples `(z1, z2)` ending where the
/// curve reaches the bottom of the passive support.
///
/// The column integrand is divided through by the active density, so
/// the root is well conditioned even where that density vanishes (at
/// the lower end of a beta support, say).
fn balance_points(
    active: &ItemDistribution,
    passive: &ItemDistribution,
    tol: &Tolerance,
) -> Result<Vec<(f64, f64)>, CanonicalError> {
    let (x0, y0) = (active.support.0, passive.support.0);
    let up = upper_of(passive);
    let quad = Tolerance { abs_tol: 1e-11, ..*tol };
    let root_tol = Tolerance { abs_tol: 1e-12, ..*tol };
    // integral of the normalized column integrand over [z2, top)
    let upward = |z1: f64, z2: f64| -> Result<f64, NumericsError> {
        let e1 = active.neg_elasticity(z1);
        integrate_1d(|t| passive.pdf(t) * (e1 + passive.neg_elasticity(t) - 3.0), z2, up, &quad)
    };
    let full = |z1: f64| upward(z1, y0).unwrap_or(f64::NAN);
    if !(full(x0) < 0.0) {
        return Err(CanonicalError::CurveNotFound(format!(
            "column at z1 = {x0} already balances above the support bottom"
        )));
    }
    // the curve ends where the whole column balances
    let x_hi = active.truncated_upper(1e-9);
    let x_end = scan_root(full, x0, x_hi, 256, &root_tol).ok_or_else(|| {
        CanonicalError::CurveNotFound(format!(
            "no column in [{x0}, {x_hi}] balances over the full support"
        ))
    })?;

    let point_at = |z1: f64| -> Result<f64, CanonicalError> {
        let e1 = active.neg_elasticity(z1);
        let (_, top) = match up {
            UpperLimit::Finite(v) => (y0, v),
            UpperLimit::Infinite(tail) => (y0, y0 + tail.truncation(1e-12)),
        };
        let cut = column_cut(passive, e1, y0, top);
        let g = |z2: f64| upward(z1, z2).unwrap_or(f64::NAN);
        if g(y0) >= 0.0 {
            return Ok(y0);
        }
        Ok(find_root(g, y0, cut, &root_tol)?)
    };

    // grade the mesh cubically toward the endpoint: the curve ends in
    // a cube-root branch there (its slope diverges), and the grading
    // keeps the sampled heights roughly equally spaced
    let mut xs = Vec::with_capacity(CURVE_KNOTS + 2);
    for i in 0..CURVE_KNOTS {
        let u = i as f64 / CURVE_KNOTS as f64;
        let t = 1.0 - (1.0 - u).powi(3);
        xs.push(x0 + (x_end - x0) * t);
    }
    xs.push(x_end);
    let mut pts = Vec::with_capacity(xs.len());
    for &x in &xs {
        let y = if x == x_end { y0 } else { point_at(x)? };
        pts.push((x, y));
    }
    // refine around the slope crossing s' = -1, where the 45-degree
    // segment will attach and the menu consumes slopes pointwise
    if let Some(i) = (1..pts.len()).find(|&i| {
        (pts[i].1 - pts[i - 1].1) / (pts[i].0 - pts[i - 1].0) <= -1.0
    }) {
        let (lo, hi) = (pts[i - 1].0, pts[i].0);
        let mut extra = Vec::new();
        for j in 1..20 {
            let x = lo + (hi - lo) * j as f64 / 20.0;
            extra.push((x, point_at(x)?));
        }
        pts.splice(i..i, extra);
    }
    Ok(pts)
}

/// Compute the curves bounding the canonical zero set from above and
/// from the right: `S_top` balances every vertical column of the
/// transform field above it, `S_right` every horizontal one to its
/// right. Both are returned as decreasing concave functions of `z1`.
pub fn compute_boundary_curves(
    field: &TransformField,
    tol: &Tolerance,
) -> Result<(BoundaryCurve, BoundaryCurve), CanonicalError> {
    let [d1, d2] = &field.instance.items;
    let top_pts = balance_points(d1, d2, tol)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = top_pts.into_iter().unzip();
    let s_top = BoundaryCurve::concave_interpolant(&xs, &ys, CURVE_SLACK)?;

    // the right curve is traced per horizontal line and transposed
    let right_pts = balance_points(d2, d1, tol)?;
    let mut xs = Vec::with_capacity(right_pts.len());
    let mut ys = Vec::with_capacity(right_pts.len());
    for &(z2, z1) in right_pts.iter().rev() {
        if xs.last().map_or(true, |&last| z1 > last + 1e-12) {
            xs.push(z1);
            ys.push(z2);
        }
    }
    if xs.len() < 2 {
        return Err(CanonicalError::CurveNotFound("right curve degenerated".into()));
    }
    let s_right = BoundaryCurve::concave_interpolant(&xs, &ys, CURVE_SLACK)?;
    Ok((s_top, s_right))
}

/// The canonical partition: the zero set `Z` under the boundary `s`
/// (a top-curve piece to `a`, the 45-degree segment `z1 + z2 = p*` to
/// `b`, a right-curve piece to `c`), and the three outcome regions
/// around it.
#[derive(Clone)]
pub struct CanonicalPartition {
    pub s: Arc<BoundaryCurve>,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p_star: f64,
    pub s_at_b: f64,
    /// lower corner of the support box
    pub lower: (f64, f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RegionId {
    /// zero set: no allocation
    Z,
    /// left strip above the curve: item-2 sure, item-1 lottery
    A,
    /// bottom strip right of the curve: item-1 sure, item-2 lottery
    B,
    /// remainder: the grand bundle
    W,
}

impl CanonicalPartition {
    /// Region of a type. `Z` is closed; the `A|W` and `B|W` boundaries
    /// go to `A` and `B` (utility is continuous there, so the
    /// convention is revenue-neutral).
    pub fn classify(&self, z: (f64, f64)) -> RegionId {
        let (d0, d1) = self.s.domain();
        if z.0 >= d0 - 1e-12
            && z.0 <= d1 + 1e-12
            && z.1 <= self.s.eval(z.0.clamp(d0, d1)).unwrap_or(f64::NEG_INFINITY)
        {
            return RegionId::Z;
        }
        if z.0 <= self.a {
            RegionId::A
        } else if z.1 <= self.s_at_b {
            RegionId::B
        } else {
            RegionId::W
        }
    }

    /// The region as integration constraints.
    pub fn region(&self, id: RegionId) -> Region {
        let s = self.s.clone();
        match id {
            RegionId::Z => Region::all().with(Constraint::BelowCurve(s)),
            RegionId::A => Region::all()
                .with(Constraint::X1Le(self.a))
                .with(Constraint::AboveCurve(s)),
            RegionId::B => Region::all()
                .with(Constraint::X1Ge(self.b))
                .with(Constraint::X2Le(self.s_at_b))
                .with(Constraint::AboveCurve(s)),
            RegionId::W => Region::all()
                .with(Constraint::X1Ge(self.a))
                .with(Constraint::X2Ge(self.s_at_b))
                .with(Constraint::AboveCurve(s)),
        }
    }
}

/// First root of `g` scanning from the right end of `[lo, hi]`.
fn scan_root_from_right<F: Fn(f64) -> f64>(
    g: F,
    lo: f64,
    hi: f64,
    n: usize,
    tol: &Tolerance,
) -> Option<f64> {
    scan_root(|t| g(lo + hi - t), lo, hi, n, tol).map(|t| lo + hi - t)
}

/// Assemble the composite boundary for a candidate price `p`: the top
/// curve up to its transversal crossing with the 45-degree line
/// (kept only while its slope stays above -1), the line segment, then
/// the right curve from the crossing where its slope is already below
/// -1. Either curve piece may be empty.
pub fn assemble_partition(
    field: &TransformField,
    s_top: &BoundaryCurve,
    s_right: &BoundaryCurve,
    p: f64,
    _tol: &Tolerance,
) -> Result<CanonicalPartition, CanonicalError> {
    let lower = field.instance.d_minus();
    let (x0, y0) = lower;
    let root_tol = Tolerance { abs_tol: 1e-12, ..Tolerance::default() };

    let (t0, t1) = s_top.domain();
    let mut a = x0;
    if let Some(r) = scan_root(|z1| s_top.eval(z1).unwrap_or(f64::NAN) - (p - z1), t0, t1, 512, &root_tol)
    {
        if s_top.slope_left(r)? >= -1.0 - 1e-9 {
            a = r;
        }
    }

    let (r0, r1) = s_right.domain();
    let (mut b, mut c) = (p - y0, p - y0);
    if let Some(r) =
        scan_root_from_right(|z1| s_right.eval(z1).unwrap_or(f64::NAN) - (p - z1), r0, r1, 512, &root_tol)
    {
        if s_right.slope_right(r)? <= -1.0 + 1e-9 && r > a {
            b = r;
            c = r1;
        }
    }

    let mut pieces = Vec::new();
    if a > x0 + 1e-9 {
        pieces.push(s_top.restrict(t0, a)?);
    }
    if b > a + 1e-12 {
        pieces.push(BoundaryCurve::segment(a, p - a, b, p - b));
    }
    if c > b + 1e-9 {
        pieces.push(s_right.restrict(b, c)?);
    }
    if pieces.is_empty() {
        return Err(CanonicalError::NoSolution(p, p));
    }
    let s = BoundaryCurve::concat(&pieces, CURVE_SLACK)?;
    // junctions must keep slopes non-increasing for Z to stay convex
    for (x, kind) in [(a, "a"), (b, "b")] {
        if x > x0 + 1e-9 && x < c - 1e-9 {
            let (dl, dr) = (s.slope_left(x)?, s.slope_right(x)?);
            if dr > dl + 1e-6 {
                return Err(CanonicalError::NonConcaveAssembly(format!(
                    "slope rises from {dl:.6} to {dr:.6} at {kind} = {x:.6}"
                )));
            }
        }
    }
    let s_at_b = s.eval(b.min(c))?;
    Ok(CanonicalPartition { s: Arc::new(s), a, b, c, p_star: p, s_at_b, lower })
}

/// Critical price: the 45-degree intercept at which the composite
/// zero set swallows exactly the unit of excess negative mass.
pub fn find_critical_price(
    field: &TransformField,
    s_top: &BoundaryCurve,
    s_right: &BoundaryCurve,
    tol: &Tolerance,
) -> Result<CanonicalPartition, CanonicalError> {
    let ((x0, x1), (y0, y1)) = field.quad_box(tol);
    let (p_lo, p_hi) = (x0 + y0 + 1e-6 * (x1 - x0 + y1 - y0), x1 + y1);
    let failure = std::cell::RefCell::new(None);
    let nu_gap = |p: f64| -> f64 {
        let part = match assemble_partition(field, s_top, s_right, p, tol) {
            Ok(part) => part,
            Err(e) => {
                *failure.borrow_mut() = Some(e);
                return f64::NAN;
            }
        };
        match field.mass(Side::Nu, &part.region(RegionId::Z), tol) {
            Ok(m) => m - 1.0,
            Err(e) => {
                *failure.borrow_mut() = Some(e.into());
                f64::NAN
            }
        }
    };
    let (g_lo, g_hi) = (nu_gap(p_lo), nu_gap(p_hi));
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    if !(g_lo < 0.0 && g_hi > 0.0) {
        return Err(CanonicalError::NoSolution(p_lo, p_hi));
    }
    let p = find_root(&nu_gap, p_lo, p_hi, &Tolerance { abs_tol: 1e-10, ..*tol })?;
    if let Some(e) = failure.borrow_mut().take() {
        return Err(e);
    }
    assemble_partition(field, s_top, s_right, p, tol)
}

/// The five conditions a partition must satisfy for the synthesized
/// menu to be optimal, each with its observed residual, plus the full
/// dominance report for the bundle region.
#[derive(Clone, Debug)]
pub struct WellFormednessReport {
    pub checks: Vec<CertCheck>,
    pub dominance: CertReport,
    pub nu_z: f64,
}

impl WellFormednessReport {
    pub fn well_formed(&self) -> bool {
        self.checks.iter().all(|c| c.passed) && self.dominance.passed()
    }
}

/// Verify the partition: the zero set carries no positive field and
/// exactly the unit mass, every vertical column left of `a` and every
/// horizontal line below `s(b)` balances, and the field dominates on
/// the bundle region.
pub fn verify_well_formed(
    field: &TransformField,
    part: &CanonicalPartition,
    tol: &Tolerance,
    probes: usize,
) -> Result<WellFormednessReport, CanonicalError> {
    let slack = tol.abs_tol * 1e3;
    let [d1, d2] = &field.instance.items;
    let (x0, y0) = part.lower;
    let mut checks = Vec::new();

    // (1) Z stays in the dominated region; the field factors through
    // an increasing function, so probing the boundary bounds Z
    let (s0, s1) = part.s.domain();
    let n = probes.max(2);
    let mut phi_max = f64::NEG_INFINITY;
    for i in 0..n {
        let z1 = s0 + (s1 - s0) * i as f64 / (n - 1) as f64;
        phi_max = phi_max.max(field.phi(z1, part.s.eval(z1)?));
    }
    checks.push(CertCheck { name: "zero_set_dominated", value: phi_max, passed: phi_max <= slack });

    // (2) the zero set absorbs exactly the atom's mass
    let nu_z = field.mass(Side::Nu, &part.region(RegionId::Z), tol)?;
    checks.push(CertCheck {
        name: "zero_set_mass",
        value: nu_z - 1.0,
        passed: (nu_z - 1.0).abs() <= slack,
    });

    // (3) vertical columns left of `a` balance above the boundary
    let up2 = upper_of(d2);
    let mut vert: f64 = 0.0;
    if part.a > x0 + 1e-9 {
        for i in 0..n {
            let z1 = x0 + (part.a - x0) * i as f64 / (n - 1) as f64;
            let v = integrate_1d(|t| field.phi(z1, t), part.s.eval(z1)?, up2, tol)?;
            vert = vert.max(v.abs());
        }
    }
    checks.push(CertCheck { name: "vertical_balance", value: vert, passed: vert <= slack });

    // (4) horizontal lines below `s(b)` balance right of the boundary
    let up1 = upper_of(d1);
    let s_end = part.s.eval(part.c)?;
    let mut horiz: f64 = 0.0;
    if part.s_at_b > y0 + 1e-9 {
        for i in 0..n {
            let z2 = y0 + (part.s_at_b - y0) * i as f64 / (n - 1) as f64;
            let from = if z2 <= s_end { part.c } else { part.s.inverse(z2)? };
            let v = integrate_1d(|t| field.phi(t, z2), from, up1, tol)?;
            horiz = horiz.max(v.abs());
        }
    }
    checks.push(CertCheck { name: "horizontal_balance", value: horiz, passed: horiz <= slack });

    // (5) dominance on the bundle region, the corner set above
    // (a, s(b)) less the zero set
    let r = Arc::new(part.s.restrict(part.a.max(s0), part.b.min(part.c))?);
    let mut problem = DominanceProblem::from_field(field, Some(r));
    problem.lower = (part.a, part.s_at_b);
    let dominance = check_region_dominance(&problem, tol, probes)?;

    Ok(WellFormednessReport { checks, dominance, nu_z })
}

/// The Theorem-9 outcome continuum over a canonical partition.
struct CanonicalFamily {
    part: CanonicalPartition,
}

impl CanonicalFamily {
    fn slope_at(&self, z1: f64) -> f64 {
        let s = &self.part.s;
        let (d0, d1) = s.domain();
        let x = z1.clamp(d0, d1);
        0.5 * (s.slope_left(x).unwrap_or(f64::NAN) + s.slope_right(x).unwrap_or(f64::NAN))
    }

    fn option_a(&self, z1: f64) -> MenuOption {
        // left strip: item 2 for sure, item 1 with the boundary slope
        let sl = if z1 >= self.part.a { self.part.s.slope_left(self.part.a).unwrap_or(-1.0) } else { self.slope_at(z1) };
        let q1 = -sl;
        debug_assert!((-1e-7..=1.0 + 1e-7).contains(&q1), "item-1 probability {q1} out of range");
        let s = self.part.s.eval(z1.clamp(self.part.s.domain().0, self.part.c)).unwrap_or(f64::NAN);
        MenuOption { q: (q1.clamp(0.0, 1.0), 1.0), t: s - z1 * sl }
    }

    fn option_b(&self, z2: f64) -> MenuOption {
        // bottom strip: item 1 for sure, item 2 with the inverse slope
        let s_end = self.part.s.eval(self.part.c).unwrap_or(f64::NAN);
        let x = if z2 <= s_end { self.part.c } else { self.part.s.inverse(z2).unwrap_or(f64::NAN) };
        let sl = self.slope_at(x.max(self.part.b));
        let q2 = -1.0 / sl;
        debug_assert!((-1e-7..=1.0 + 1e-7).contains(&q2), "item-2 probability {q2} out of range");
        MenuOption { q: (1.0, q2.clamp(0.0, 1.0)), t: x - z2 / sl }
    }
}

impl OptionFamily for CanonicalFamily {
    fn option_for(&self, z: (f64, f64)) -> MenuOption {
        match self.part.classify(z) {
            RegionId::Z => MenuOption::NULL,
            RegionId::A => self.option_a(z.0),
            RegionId::B => self.option_b(z.1),
            RegionId::W => MenuOption { q: (1.0, 1.0), t: self.part.p_star },
        }
    }

    fn sampled_options(&self, n: usize) -> Vec<MenuOption> {
        let mut out = vec![MenuOption::NULL, MenuOption { q: (1.0, 1.0), t: self.part.p_star }];
        let (x0, y0) = self.part.lower;
        let k = (n / 2).max(1);
        if self.part.a > x0 + 1e-9 {
            for i in 0..k {
                let z1 = x0 + (self.part.a - x0) * (i as f64 + 0.5) / k as f64;
                out.push(self.option_a(z1));
            }
        }
        if self.part.s_at_b > y0 + 1e-9 {
            for i in 0..k {
                let z2 = y0 + (self.part.s_at_b - y0) * (i as f64 + 0.5) / k as f64;
                out.push(self.option_b(z2));
            }
        }
        out
    }
}

/// Turn a well-formed partition into its menu. The boundary slopes
/// are validated over both lottery strips; a slope outside the
/// admissible band means the partition was malformed and is an error
/// rather than a clamp.
pub fn synthesize_mechanism(part: &CanonicalPartition) -> Result<Mechanism, CanonicalError> {
    let (x0, _) = part.lower;
    let (s0, _) = part.s.domain();
    let probes = 512;
    if part.a > x0 + 1e-9 {
        for i in 0..probes {
            let z1 = s0 + (part.a - s0) * (i as f64 + 0.5) / probes as f64;
            let sl = 0.5 * (part.s.slope_left(z1)? + part.s.slope_right(z1)?);
            if !(-1.0 - 1e-7..=1e-7).contains(&sl) {
                return Err(CanonicalError::SlopeOutOfRange { z1, slope: sl });
            }
        }
    }
    if part.c > part.b + 1e-9 {
        for i in 0..probes {
            let z1 = part.b + (part.c - part.b) * (i as f64 + 0.5) / probes as f64;
            let sl = 0.5 * (part.s.slope_left(z1)? + part.s.slope_right(z1)?);
            if sl > -1.0 + 1e-7 {
                return Err(CanonicalError::SlopeOutOfRange { z1, slope: sl });
            }
        }
    }
    Ok(Mechanism::Parametrized(Arc::new(CanonicalFamily { part: part.clone() })))
}
