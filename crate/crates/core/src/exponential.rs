//! Closed-form optimal mechanism for two exponentially distributed
//! items. The zero space is the polygon `{sum y <= p, sum lambda y <= 2}`;
//! its critical price pins the dominated mass at 1, and the optimal
//! menu has at most three options: nothing, a lottery that favors the
//! heavier-rate item, and the grand bundle.

use crate::distributions::{make_family, DistributionError, Family, Instance};
use crate::measures::{Constraint, MeasureError, Region, Side, TransformField};
use crate::mechanism::{Mechanism, MenuOption};
use crate::numerics::{find_root, integrate_1d, NumericsError, TailBound, Tolerance, UpperLimit};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExponentialError {
    #[error(transparent)]
    Parameter(#[from] DistributionError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("point ({0}, {1}) is not on the absorption hyperplane (residual {2})")]
    NotOnHyperplane(f64, f64, f64),
    #[error("direction must be nonnegative and nonzero")]
    BadDirection,
}

/// Solution for two exponential items, stated in the canonical order
/// `lambda.0 >= lambda.1`. `relabeled` records whether the input
/// items were swapped to reach that order; `menu` is already mapped
/// back to the input item order.
#[derive(Clone, Debug)]
pub struct ExponentialSolution {
    pub lambda: (f64, f64),
    pub relabeled: bool,
    pub p_star: f64,
    pub menu: Vec<MenuOption>,
    pub pure_bundling: bool,
}

impl ExponentialSolution {
    pub fn mechanism(&self) -> Mechanism {
        Mechanism::menu(self.menu.clone())
    }
}

fn exp_field(l1: f64, l2: f64) -> Result<TransformField, DistributionError> {
    Ok(TransformField::new(Instance::new(
        make_family(Family::Exponential { rate: l1 })?,
        make_family(Family::Exponential { rate: l2 })?,
    )))
}

/// Dominated mass of the zero-space polygon
/// `{y: y1 + y2 <= p, lambda1 y1 + lambda2 y2 <= 2}`.
pub fn zero_space_mass(
    field: &TransformField,
    lambda: (f64, f64),
    p: f64,
    tol: &Tolerance,
) -> Result<f64, MeasureError> {
    let region = Region::all()
        .with(Constraint::SumLe(p))
        .with(Constraint::WeightedSumLe { w: (lambda.0, lambda.1), k: 2.0 });
    field.mass(Side::Nu, &region, tol)
}

/// Theorem-5 solution for rates `(l1, l2)`.
pub fn solve_two_exponential(
    l1: f64,
    l2: f64,
    tol: &Tolerance,
) -> Result<ExponentialSolution, ExponentialError> {
    let relabeled = l1 < l2;
    let (la, lb) = if relabeled { (l2, l1) } else { (l1, l2) };
    let field = exp_field(la, lb)?;

    // the mass of the zero space is 0 at p = 0 and 1 + e^{-2} at
    // p = 2 / lambda_min, so the unit-mass price is bracketed
    let p_hi = 2.0 / lb;
    let p_star = find_root(
        |p| match zero_space_mass(&field, (la, lb), p, tol) {
            Ok(v) => v - 1.0,
            Err(_) => f64::NAN,
        },
        1e-9 / la,
        p_hi,
        tol,
    )?;

    let pure_bundling = p_star <= 2.0 / la;
    let orient = |q: (f64, f64)| if relabeled { (q.1, q.0) } else { q };
    let mut menu = vec![MenuOption::NULL];
    if !pure_bundling {
        menu.push(MenuOption { q: orient((1.0, lb / la)), t: 2.0 / la });
    }
    menu.push(MenuOption { q: (1.0, 1.0), t: p_star });

    Ok(ExponentialSolution { lambda: (la, lb), relabeled, p_star, menu, pure_bundling })
}

/// Outward integral of the transform density along a nonnegative
/// direction from a point of the absorption hyperplane
/// `lambda . z = 2`; vanishes identically, which certifies that mass
/// accounting per line through the hyperplane balances.
pub fn absorption_residual(
    lambda: (f64, f64),
    z: (f64, f64),
    v: (f64, f64),
    tol: &Tolerance,
) -> Result<f64, ExponentialError> {
    if v.0 < 0.0 || v.1 < 0.0 || (v.0 == 0.0 && v.1 == 0.0) {
        return Err(ExponentialError::BadDirection);
    }
    let plane = lambda.0 * z.0 + lambda.1 * z.1;
    if (plane - 2.0).abs() > 1e3 * tol.abs_tol {
        return Err(ExponentialError::NotOnHyperplane(z.0, z.1, plane - 2.0));
    }
    let rate = lambda.0 * v.0 + lambda.1 * v.1;
    let val = integrate_1d(
        |tau| {
            let s = lambda.0 * (z.0 + tau * v.0) + lambda.1 * (z.1 + tau * v.1);
            (3.0 - s) * (-s).exp()
        },
        0.0,
        UpperLimit::Infinite(TailBound::Exponential { rate }),
        tol,
    )?;
    Ok(val)
}
