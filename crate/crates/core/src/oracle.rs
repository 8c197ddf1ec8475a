//! Desk-scale independent ground truth: the exact menu LP over a
//! finite type grid, the relaxed (Lipschitz-only) LP over grid
//! measures, a minimum-cost transport solve between them, and the
//! duality-gap/complementary-slackness check tying the three
//! together.

use crate::distributions::Instance;
use crate::dominance::{GridMeasure, TransportPlan};
use crate::measures::{Constraint, MeasureError, Region, Side, TransformField};
use crate::mechanism::MenuOption;
use crate::numerics::Tolerance;
use minilp::{ComparisonOp, OptimizationDirection, Problem};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("invalid discrete instance: {0}")]
    InvalidInstance(String),
    #[error("instance too large for the pairwise LP: {0} types")]
    SizeLimit(usize),
    #[error("total masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),
    #[error("infeasible input: {0}")]
    InfeasibleInput(String),
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// A finitely supported type distribution.
#[derive(Clone, Debug)]
pub struct DiscreteInstance {
    pub types: Vec<(f64, f64)>,
    pub probabilities: Vec<f64>,
}

impl DiscreteInstance {
    pub fn new(types: Vec<(f64, f64)>, probabilities: Vec<f64>) -> Result<Self, OracleError> {
        if types.len() != probabilities.len() || types.is_empty() {
            return Err(OracleError::InvalidInstance("length mismatch".into()));
        }
        if probabilities.iter().any(|&p| p < 0.0) {
            return Err(OracleError::InvalidInstance("negative probability".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OracleError::InvalidInstance(format!("probabilities sum to {total}")));
        }
        Ok(DiscreteInstance { types, probabilities })
    }

    pub fn uniform(types: Vec<(f64, f64)>) -> Result<Self, OracleError> {
        let p = 1.0 / types.len() as f64;
        let probabilities = vec![p; types.len()];
        DiscreteInstance::new(types, probabilities)
    }
}

/// `c(x, y) = sum_i max(x_i - y_i, 0)`: what a mechanism can extract
/// from type `x` beyond what it grants type `y`.
pub fn transport_cost(x: (f64, f64), y: (f64, f64)) -> f64 {
    (x.0 - y.0).max(0.0) + (x.1 - y.1).max(0.0)
}

/// Exact optimum of the finite-type mechanism design problem: revenue
/// maximization over per-type `(q, t)` subject to every ordered-pair
/// incentive constraint and participation. Returns the per-type
/// outcomes and the optimal revenue.
pub fn solve_grid_lp(d: &DiscreteInstance) -> Result<(Vec<MenuOption>, f64), OracleError> {
    let n = d.types.len();
    if n > 1000 {
        return Err(OracleError::SizeLimit(n));
    }
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let q1: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let q2: Vec<_> = (0..n).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let t: Vec<_> = (0..n)
        .map(|i| lp.add_var(d.probabilities[i], (f64::NEG_INFINITY, f64::INFINITY)))
        .collect();
    for i in 0..n {
        let (z1, z2) = d.types[i];
        // participation: z . q_i - t_i >= 0
        lp.add_constraint([(q1[i], z1), (q2[i], z2), (t[i], -1.0)], ComparisonOp::Ge, 0.0);
        for j in 0..n {
            if i == j {
                continue;
            }
            // truth-telling: z_i . q_i - t_i >= z_i . q_j - t_j
            lp.add_constraint(
                [(q1[i], z1), (q2[i], z2), (t[i], -1.0), (q1[j], -z1), (q2[j], -z2), (t[j], 1.0)],
                ComparisonOp::Ge,
                0.0,
            );
        }
    }
    let sol = lp.solve().map_err(|e| OracleError::Lp(e.to_string()))?;
    let menu = (0..n)
        .map(|i| MenuOption { q: (*sol.var_value(q1[i]), *sol.var_value(q2[i])), t: *sol.var_value(t[i]) })
        .collect();
    Ok((menu, sol.objective()))
}

/// Values of the relaxed problem's potential on the two grids.
#[derive(Clone, Debug)]
pub struct RelaxedSolution {
    pub u_x: Vec<f64>,
    pub u_y: Vec<f64>,
    /// the LP optimum `sum u(x) mu(x) - sum u(y) nu(y)`
    pub value: f64,
}

/// Optimum of the relaxed problem on grid measures: maximize the
/// `mu - nu` pairing of a potential constrained only by
/// `u(x) - u(y) <= c(x, y)` across grid pairs, with `u` pinned to 0
/// at the bottom corner of the `mu` grid.
pub fn solve_relaxed_grid(
    mu: &GridMeasure,
    nu: &GridMeasure,
) -> Result<RelaxedSolution, OracleError> {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let free = (f64::NEG_INFINITY, f64::INFINITY);
    let ux: Vec<_> = mu.masses.iter().map(|&m| lp.add_var(m, free)).collect();
    let uy: Vec<_> = nu.masses.iter().map(|&m| lp.add_var(-m, free)).collect();
    // pin the bottom corner: the objective is shift-invariant when
    // totals match, so some normalization is needed for a unique u
    let pin = (0..mu.points.len())
        .min_by(|&i, &j| {
            let si = mu.points[i].0 + mu.points[i].1;
            let sj = mu.points[j].0 + mu.points[j].1;
            si.partial_cmp(&sj).unwrap()
        })
        .ok_or_else(|| OracleError::InfeasibleInput("empty mu grid".into()))?;
    lp.add_constraint([(ux[pin], 1.0)], ComparisonOp::Eq, 0.0);
    for (i, &x) in mu.points.iter().enumerate() {
        for (j, &y) in nu.points.iter().enumerate() {
            lp.add_constraint(
                [(ux[i], 1.0), (uy[j], -1.0)],
                ComparisonOp::Le,
                transport_cost(x, y),
            );
        }
    }
    let sol = lp.solve().map_err(|e| match e {
        minilp::Error::Unbounded => OracleError::InfeasibleInput("relaxed LP unbounded".into()),
        other => OracleError::Lp(other.to_string()),
    })?;
    Ok(RelaxedSolution {
        u_x: ux.iter().map(|&v| *sol.var_value(v)).collect(),
        u_y: uy.iter().map(|&v| *sol.var_value(v)).collect(),
        value: sol.objective(),
    })
}

/// Minimum-cost transport between two grid measures of equal total,
/// by successive shortest augmenting paths with Dijkstra potentials
/// on the bipartite supply/demand graph.
pub fn solve_discrete_transport(
    mu: &GridMeasure,
    nu: &GridMeasure,
) -> Result<(TransportPlan, f64), OracleError> {
    let (tm, tn) = (mu.total(), nu.total());
    if (tm - tn).abs() > 1e-7 * tm.max(tn).max(1.0) {
        return Err(OracleError::MassMismatch(tm, tn));
    }
    let (n, m) = (mu.points.len(), nu.points.len());
    let mut supply = mu.masses.clone();
    let mut demand = nu.masses.clone();
    // rescale away the residual total mismatch so the flow closes
    let scale = tm / tn;
    for d in &mut demand {
        *d *= scale;
    }
    let cost: Vec<Vec<f64>> = mu
        .points
        .iter()
        .map(|&x| nu.points.iter().map(|&y| transport_cost(x, y)).collect())
        .collect();
    // node potentials keep every reduced cost nonnegative, so plain
    // Dijkstra finds shortest augmenting paths throughout
    let mut pot_x = vec![0.0_f64; n];
    let mut pot_y = vec![0.0_f64; m];
    let mut flow = vec![vec![0.0_f64; m]; n];
    let eps = 1e-15 * tm.max(1.0);
    while (0..n).any(|i| supply[i] > eps) {
        let mut dist_x = vec![f64::INFINITY; n];
        let mut dist_y = vec![f64::INFINITY; m];
        let mut prev_y = vec![usize::MAX; m]; // x feeding each y
        let mut prev_x = vec![usize::MAX; n]; // y feeding each x (residual)
        let mut done_x = vec![false; n];
        let mut done_y = vec![false; m];
        for i in 0..n {
            if supply[i] > eps {
                dist_x[i] = 0.0;
            }
        }
        let target = loop {
            let bx = (0..n)
                .filter(|&i| !done_x[i] && dist_x[i].is_finite())
                .min_by(|&i, &j| dist_x[i].partial_cmp(&dist_x[j]).unwrap());
            let by = (0..m)
                .filter(|&j| !done_y[j] && dist_y[j].is_finite())
                .min_by(|&i, &j| dist_y[i].partial_cmp(&dist_y[j]).unwrap());
            match (bx, by) {
                (None, None) => break None,
                (x, y) => {
                    let take_x = match (x, y) {
                        (Some(i), Some(j)) => dist_x[i] <= dist_y[j],
                        (Some(_), None) => true,
                        _ => false,
                    };
                    if take_x {
                        let i = x.unwrap();
                        done_x[i] = true;
                        for j in 0..m {
                            if done_y[j] {
                                continue;
                            }
                            let rc = (cost[i][j] + pot_x[i] - pot_y[j]).max(0.0);
                            if dist_x[i] + rc < dist_y[j] {
                                dist_y[j] = dist_x[i] + rc;
                                prev_y[j] = i;
                            }
                        }
                    } else {
                        let j = y.unwrap();
                        if demand[j] > eps {
                            break Some(j);
                        }
                        done_y[j] = true;
                        for i in 0..n {
                            if done_x[i] || flow[i][j] <= eps {
                                continue;
                            }
                            let rc = (pot_y[j] - pot_x[i] - cost[i][j]).max(0.0);
                            if dist_y[j] + rc < dist_x[i] {
                                dist_x[i] = dist_y[j] + rc;
                                prev_x[i] = j;
                            }
                        }
                    }
                }
            }
        };
        let Some(sink) = target else {
            return Err(OracleError::InfeasibleInput("no augmenting path".into()));
        };
        // trace the alternating path back to an open supply
        let mut fwd = Vec::new();
        let mut bwd = Vec::new();
        let mut bottleneck = demand[sink];
        let mut j = sink;
        let head = loop {
            let i = prev_y[j];
            fwd.push((i, j));
            if prev_x[i] == usize::MAX {
                bottleneck = bottleneck.min(supply[i]);
                break i;
            }
            let jb = prev_x[i];
            bottleneck = bottleneck.min(flow[i][jb]);
            bwd.push((i, jb));
            j = jb;
        };
        supply[head] -= bottleneck;
        demand[sink] -= bottleneck;
        for &(i, j) in &fwd {
            flow[i][j] += bottleneck;
        }
        for &(i, j) in &bwd {
            flow[i][j] -= bottleneck;
        }
        let d_sink = dist_y[sink];
        for i in 0..n {
            pot_x[i] += dist_x[i].min(d_sink);
        }
        for j in 0..m {
            pot_y[j] += dist_y[j].min(d_sink);
        }
    }
    let mut moves = Vec::new();
    let mut total_cost = 0.0;
    for i in 0..n {
        for j in 0..m {
            if flow[i][j] > eps {
                moves.push((i, j, flow[i][j]));
                total_cost += flow[i][j] * cost[i][j];
            }
        }
    }
    Ok((TransportPlan { moves }, total_cost))
}

/// Theorem-1 style optimality audit of a relaxed solution against a
/// transport plan on the same measures.
#[derive(Clone, Debug)]
pub struct DualityReport {
    /// `(cost - relaxed value) / nu total`: nonnegative by weak
    /// duality, zero at joint optimality
    pub gap: f64,
    /// worst mass-weighted violation of `c(x,y) = u(x) - u(y)` over
    /// the plan's support
    pub slackness_residual: f64,
}

pub fn duality_gap(
    sol: &RelaxedSolution,
    mu: &GridMeasure,
    nu: &GridMeasure,
    plan: &TransportPlan,
) -> Result<DualityReport, OracleError> {
    if sol.u_x.len() != mu.points.len() || sol.u_y.len() != nu.points.len() {
        return Err(OracleError::InfeasibleInput("solution does not match the grids".into()));
    }
    // plan feasibility: marginals must reproduce the measures
    let mut out = vec![0.0; mu.points.len()];
    let mut inn = vec![0.0; nu.points.len()];
    let mut cost = 0.0;
    let mut slackness_residual: f64 = 0.0;
    for &(i, j, m) in &plan.moves {
        if m < 0.0 || i >= mu.points.len() || j >= nu.points.len() {
            return Err(OracleError::InfeasibleInput("malformed plan entry".into()));
        }
        out[i] += m;
        inn[j] += m;
        let c = transport_cost(mu.points[i], nu.points[j]);
        cost += m * c;
        slackness_residual = slackness_residual.max(m * (c - (sol.u_x[i] - sol.u_y[j])).abs());
    }
    let scale = mu.total() / nu.total();
    for (a, &b) in out.iter().zip(&mu.masses) {
        if (a - b).abs() > 1e-6 * mu.total().max(1.0) {
            return Err(OracleError::InfeasibleInput("plan does not match mu".into()));
        }
    }
    for (a, &b) in inn.iter().zip(&nu.masses) {
        if (a - b * scale).abs() > 1e-6 * nu.total().max(1.0) {
            return Err(OracleError::InfeasibleInput("plan does not match nu".into()));
        }
    }
    Ok(DualityReport { gap: (cost - sol.value) / nu.total(), slackness_residual })
}

/// Cell-centered `k x k` product discretization of a continuous
/// instance over the per-item quantile box `[F^-1(.001), F^-1(.995)]`,
/// cell probabilities by CDF differences (renormalized).
pub fn discretize_instance(instance: &Instance, k: usize) -> DiscreteInstance {
    let mut centers = Vec::with_capacity(2);
    let mut probs = Vec::with_capacity(2);
    for item in &instance.items {
        let (lo, hi) = (item.quantile(0.001), item.quantile(0.995));
        let mut c = Vec::with_capacity(k);
        let mut p = Vec::with_capacity(k);
        let h = (hi - lo) / k as f64;
        for i in 0..k {
            let e0 = lo + i as f64 * h;
            c.push(e0 + 0.5 * h);
            p.push(item.cdf(e0 + h) - item.cdf(e0));
        }
        let total: f64 = p.iter().sum();
        for q in &mut p {
            *q /= total;
        }
        centers.push(c);
        probs.push(p);
    }
    let mut types = Vec::with_capacity(k * k);
    let mut probabilities = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            types.push((centers[0][i], centers[1][j]));
            probabilities.push(probs[0][i] * probs[1][j]);
        }
    }
    DiscreteInstance { types, probabilities }
}

/// Exact discrete analog of the transform for a product-grid
/// instance, by summation by parts of the revenue functional: every
/// payment is `z . q - u`, each allocation is bounded by the forward
/// difference of `u` along its axis (a grid incentive constraint) or
/// by 1 on the top row. The result is a pair of grid measures and a
/// constant such that for every feasible mechanism
///
///   revenue <= sum u d(mu - nu) + constant,
///
/// with `u(d_minus) = 0` and the unit atom kept explicit at the
/// bottom corner so the totals match.
pub fn discrete_transform(
    d: &DiscreteInstance,
) -> Result<(GridMeasure, GridMeasure, f64), OracleError> {
    let mut z1s: Vec<f64> = d.types.iter().map(|t| t.0).collect();
    let mut z2s: Vec<f64> = d.types.iter().map(|t| t.1).collect();
    let dedup = |v: &mut Vec<f64>| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    };
    dedup(&mut z1s);
    dedup(&mut z2s);
    let (k1, k2) = (z1s.len(), z2s.len());
    if d.types.len() != k1 * k2 {
        return Err(OracleError::InvalidInstance("types do not form a product grid".into()));
    }
    let index = |v: &[f64], x: f64| v.iter().position(|&e| (e - x).abs() < 1e-12);
    let mut p = vec![vec![0.0; k2]; k1];
    for (t, &q) in d.types.iter().zip(&d.probabilities) {
        let (Some(i), Some(j)) = (index(&z1s, t.0), index(&z2s, t.1)) else {
            return Err(OracleError::InvalidInstance("type off the grid".into()));
        };
        p[i][j] += q;
    }
    let mut w = vec![vec![0.0; k2]; k1];
    let mut constant = 0.0;
    for i in 0..k1 {
        for j in 0..k2 {
            w[i][j] -= p[i][j];
            if i + 1 < k1 {
                let rate = z1s[i] * p[i][j] / (z1s[i + 1] - z1s[i]);
                w[i][j] -= rate;
                w[i + 1][j] += rate;
            } else {
                constant += p[i][j] * z1s[i];
            }
            if j + 1 < k2 {
                let rate = z2s[j] * p[i][j] / (z2s[j + 1] - z2s[j]);
                w[i][j] -= rate;
                w[i][j + 1] += rate;
            } else {
                constant += p[i][j] * z2s[j];
            }
        }
    }
    // the unit atom at the bottom corner balances the totals; its u
    // value is pinned to zero, so the functional is unchanged
    w[0][0] += 1.0;
    let mut mu_pts = Vec::new();
    let mut mu_mass = Vec::new();
    let mut nu_pts = Vec::new();
    let mut nu_mass = Vec::new();
    for i in 0..k1 {
        for j in 0..k2 {
            let pt = (z1s[i], z2s[j]);
            if w[i][j] > 1e-14 {
                mu_pts.push(pt);
                mu_mass.push(w[i][j]);
            } else if w[i][j] < -1e-14 {
                nu_pts.push(pt);
                nu_mass.push(-w[i][j]);
            }
        }
    }
    Ok((GridMeasure::new(mu_pts, mu_mass), GridMeasure::new(nu_pts, nu_mass), constant))
}

/// Grid measures of the transform field: `mu` holds the positive part
/// per cell plus the exact unit atom at the support's bottom corner,
/// `nu` the negative part, rescaled so both totals agree despite the
/// tail truncation.
pub fn grid_measures(
    field: &TransformField,
    k: usize,
    tol: &Tolerance,
) -> Result<(GridMeasure, GridMeasure), OracleError> {
    let d = field.instance.d_minus();
    let (lo1, hi1) = (d.0, field.instance.items[0].quantile(0.995));
    let (lo2, hi2) = (d.1, field.instance.items[1].quantile(0.995));
    let (h1, h2) = ((hi1 - lo1) / k as f64, (hi2 - lo2) / k as f64);
    let mut mu_pts = vec![d];
    let mut mu_mass = vec![field.point_mass_at_dminus];
    let mut nu_pts = Vec::new();
    let mut nu_mass = Vec::new();
    let cell_tol = Tolerance { abs_tol: tol.abs_tol / (k * k) as f64, ..*tol };
    for i in 0..k {
        for j in 0..k {
            let (x0, y0) = (lo1 + i as f64 * h1, lo2 + j as f64 * h2);
            let cell = Region::all()
                .with(Constraint::X1Ge(x0))
                .with(Constraint::X1Le(x0 + h1))
                .with(Constraint::X2Ge(y0))
                .with(Constraint::X2Le(y0 + h2));
            let center = (x0 + 0.5 * h1, y0 + 0.5 * h2);
            let m = field.mass(Side::Mu, &cell, &cell_tol)?;
            if m > 1e-14 {
                mu_pts.push(center);
                mu_mass.push(m);
            }
            let v = field.mass(Side::Nu, &cell, &cell_tol)?;
            if v > 1e-14 {
                nu_pts.push(center);
                nu_mass.push(v);
            }
        }
    }
    let mu = GridMeasure::new(mu_pts, mu_mass);
    let scale = mu.total() / nu_mass.iter().sum::<f64>();
    for m in &mut nu_mass {
        *m *= scale;
    }
    Ok((mu, GridMeasure::new(nu_pts, nu_mass)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{make_family, Family};
    use crate::exponential::solve_two_exponential;
    use crate::mechanism::revenue_quadrature;
    use approx::assert_abs_diff_eq;

    fn exp_field() -> TransformField {
        let f1 = make_family(Family::Exponential { rate: 1.0 }).unwrap();
        let f2 = make_family(Family::Exponential { rate: 1.0 }).unwrap();
        TransformField::new(Instance::new(f1, f2))
    }

    #[test]
    fn square_grid_lp_revenue() {
        let d = DiscreteInstance::uniform(vec![(1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (2.0, 2.0)])
            .unwrap();
        let (_, revenue) = solve_grid_lp(&d).unwrap();
        assert_abs_diff_eq!(revenue, 2.25, epsilon = 1e-9);
    }

    #[test]
    fn asymmetric_grid_lp_finds_the_lottery_menu() {
        let d = DiscreteInstance::uniform(vec![(1.0, 1.0), (1.0, 3.0), (2.0, 1.0), (2.0, 3.0)])
            .unwrap();
        let (menu, revenue) = solve_grid_lp(&d).unwrap();
        assert_abs_diff_eq!(revenue, 2.625, epsilon = 1e-9);
        let mut prices: Vec<f64> = menu.iter().map(|o| o.t).collect();
        prices.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (got, want) in prices.iter().zip([0.0, 2.5, 4.0, 4.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-9);
        }
        // the 2.5 option gives item 1 for sure and item 2 half the time
        let lot = menu.iter().find(|o| (o.t - 2.5).abs() < 1e-9).unwrap();
        assert_abs_diff_eq!(lot.q.0, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(lot.q.1, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn relaxed_lp_trivial_cases() {
        let mu = GridMeasure::new(vec![(1.0, 1.0)], vec![1.0]);
        let nu = GridMeasure::new(vec![(0.0, 0.0)], vec![1.0]);
        let sol = solve_relaxed_grid(&mu, &nu).unwrap();
        assert_abs_diff_eq!(sol.value, 2.0, epsilon = 1e-9);

        let pts = vec![(0.3, 0.4), (1.2, 0.1), (0.6, 2.0)];
        let mass = vec![0.2, 0.5, 0.3];
        let same = GridMeasure::new(pts.clone(), mass.clone());
        let sol = solve_relaxed_grid(&same, &GridMeasure::new(pts, mass)).unwrap();
        assert_abs_diff_eq!(sol.value, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn transport_trivial_cases() {
        let mu = GridMeasure::new(vec![(1.0, 1.0)], vec![1.0]);
        let nu = GridMeasure::new(vec![(0.0, 0.0)], vec![1.0]);
        let (plan, cost) = solve_discrete_transport(&mu, &nu).unwrap();
        assert_eq!(plan.moves.len(), 1);
        assert_abs_diff_eq!(cost, 2.0, epsilon = 1e-12);

        let mu = GridMeasure::new(vec![(0.0, 1.0)], vec![1.0]);
        let nu = GridMeasure::new(vec![(1.0, 0.0)], vec![1.0]);
        let (_, cost) = solve_discrete_transport(&mu, &nu).unwrap();
        assert_abs_diff_eq!(cost, 1.0, epsilon = 1e-12);

        let mu = GridMeasure::new(vec![(1.0, 1.0)], vec![1.0]);
        let nu = GridMeasure::new(vec![(0.0, 0.0)], vec![0.5]);
        assert!(matches!(solve_discrete_transport(&mu, &nu), Err(OracleError::MassMismatch(..))));
    }

    #[test]
    fn transport_matches_relaxed_on_random_grids() {
        // deterministic pseudo-random measures; LP duality says the
        // two optima coincide
        let mut state = 0x9e3779b97f4a7c15_u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..5 {
            let n = 6;
            let mut mu_pts = Vec::new();
            let mut mu_mass = Vec::new();
            let mut nu_pts = Vec::new();
            let mut nu_mass = Vec::new();
            for _ in 0..n {
                mu_pts.push((next() * 2.0, next() * 2.0));
                mu_mass.push(0.1 + next());
                nu_pts.push((next() * 2.0, next() * 2.0));
                nu_mass.push(0.1 + next());
            }
            let total: f64 = mu_mass.iter().sum();
            let tn: f64 = nu_mass.iter().sum();
            for m in &mut nu_mass {
                *m *= total / tn;
            }
            let mu = GridMeasure::new(mu_pts, mu_mass);
            let nu = GridMeasure::new(nu_pts, nu_mass);
            let (plan, cost) = solve_discrete_transport(&mu, &nu).unwrap();
            let sol = solve_relaxed_grid(&mu, &nu).unwrap();
            assert_abs_diff_eq!(cost, sol.value, epsilon = 1e-8);
            let report = duality_gap(&sol, &mu, &nu, &plan).unwrap();
            assert!(report.gap.abs() <= 1e-8, "gap {}", report.gap);
            assert!(report.slackness_residual <= 1e-8, "slack {}", report.slackness_residual);
        }
    }

    #[test]
    fn transport_cost_invariant_under_common_atom() {
        let mu = GridMeasure::new(vec![(1.0, 0.2), (0.4, 1.5)], vec![0.6, 0.4]);
        let nu = GridMeasure::new(vec![(0.1, 0.1), (0.8, 0.9)], vec![0.5, 0.5]);
        let (_, base) = solve_discrete_transport(&mu, &nu).unwrap();
        let mut mu2 = mu.clone();
        let mut nu2 = nu.clone();
        mu2.points.push((0.7, 0.3));
        mu2.masses.push(0.25);
        nu2.points.push((0.7, 0.3));
        nu2.masses.push(0.25);
        let (_, augmented) = solve_discrete_transport(&mu2, &nu2).unwrap();
        assert_abs_diff_eq!(base, augmented, epsilon = 1e-9);
    }

    #[test]
    fn exponential_duality_at_grid_scale() {
        let field = exp_field();
        let tol = Tolerance::default();
        let (mu, nu) = grid_measures(&field, 12, &tol).unwrap();
        assert_abs_diff_eq!(mu.total(), nu.total(), epsilon = 1e-12);
        let sol = solve_relaxed_grid(&mu, &nu).unwrap();
        let (plan, cost) = solve_discrete_transport(&mu, &nu).unwrap();
        assert_abs_diff_eq!(cost, sol.value, epsilon = 1e-6);
        let report = duality_gap(&sol, &mu, &nu, &plan).unwrap();
        assert!(report.gap >= -1e-9 && report.gap <= 1e-6, "gap {}", report.gap);

        // the closed-form menu's utility is feasible for the relaxed
        // problem, so its pairing lower-bounds the LP optimum and the
        // two agree up to discretization
        let mech = solve_two_exponential(1.0, 1.0, &tol).unwrap().mechanism();
        let pair: f64 = mu
            .points
            .iter()
            .zip(&mu.masses)
            .map(|(&p, &m)| mech.utility(p).0 * m)
            .sum::<f64>()
            - nu.points.iter().zip(&nu.masses).map(|(&p, &m)| mech.utility(p).0 * m).sum::<f64>();
        assert!(sol.value >= pair - 1e-9);
        assert!((sol.value - pair).abs() < 0.05, "lp {} vs menu pairing {}", sol.value, pair);

        // a zero potential only sees the raw cost (weak duality)
        let zero = RelaxedSolution {
            u_x: vec![0.0; mu.points.len()],
            u_y: vec![0.0; nu.points.len()],
            value: 0.0,
        };
        let rep = duality_gap(&zero, &mu, &nu, &plan).unwrap();
        assert_abs_diff_eq!(rep.gap, cost / nu.total(), epsilon = 1e-12);
        assert!(rep.gap >= 0.0);
    }

    #[test]
    fn grid_lp_converges_to_the_closed_form_revenue() {
        let field = exp_field();
        let tol = Tolerance::default();
        let mech = solve_two_exponential(1.0, 1.0, &tol).unwrap().mechanism();
        let exact = revenue_quadrature(|z1, z2| mech.utility((z1, z2)).0, &field, &tol).unwrap();
        let mut errs = Vec::new();
        for k in [8, 12, 16] {
            let d = discretize_instance(&field.instance, k);
            let (_, revenue) = solve_grid_lp(&d).unwrap();
            errs.push((revenue - exact).abs());
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "errors not decreasing: {errs:?}");
    }

    #[test]
    fn relaxed_value_bounds_the_grid_lp() {
        // on the discrete transform of the same instance the
        // relaxation is a true upper bound on the LP revenue, and it
        // is tight for the square example
        let d = DiscreteInstance::uniform(vec![(1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (2.0, 2.0)])
            .unwrap();
        let (mu, nu, constant) = discrete_transform(&d).unwrap();
        assert_abs_diff_eq!(mu.total(), nu.total(), epsilon = 1e-12);
        let sol = solve_relaxed_grid(&mu, &nu).unwrap();
        let (_, revenue) = solve_grid_lp(&d).unwrap();
        assert!(sol.value + constant >= revenue - 1e-9);
        assert_abs_diff_eq!(sol.value + constant, 2.25, epsilon = 1e-9);

        // same bound on a discretized continuous instance
        let field = exp_field();
        let d = discretize_instance(&field.instance, 8);
        let (mu, nu, constant) = discrete_transform(&d).unwrap();
        let sol = solve_relaxed_grid(&mu, &nu).unwrap();
        let (_, revenue) = solve_grid_lp(&d).unwrap();
        assert!(
            sol.value + constant >= revenue - 1e-9,
            "relaxed {} vs lp {revenue}",
            sol.value + constant
        );
    }
}
