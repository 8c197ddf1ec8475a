//! Per-item value distributions with analytic density and derivative,
//! plus validation of the regularity assumptions the synthesis
//! pipeline relies on: support `[d-, d+)` with `d- >= 0`, continuously
//! differentiable density, `d- f(d-) = 0`, and `z^2 f(z) -> 0` at the
//! upper end.

use crate::numerics::{find_root, integrate_1d, TailBound, Tolerance, UpperLimit};
use statrs::function::beta::ln_beta;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistributionError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Built-in density families with closed-form cdf/quantile.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Family {
    /// `f(z) = rate * exp(-rate z)` on `[0, inf)`.
    Exponential { rate: f64 },
    /// `f(z) = (shape - 1) / (1 + z)^shape` on `[0, inf)`; needs `shape > 2`.
    PowerLaw { shape: f64 },
    /// `f(z) = z^(a-1) (1-z)^(b-1) / B(a, b)` on `[0, 1)`; needs `a, b > 1`.
    Beta { a: f64, b: f64 },
}

type DensityFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// One item's distribution: density, derivative, support, and the tail
/// family used to truncate improper integrals.
#[derive(Clone)]
pub struct ItemDistribution {
    pdf: DensityFn,
    dpdf: DensityFn,
    /// `-z f'(z) / f(z)`, extended continuously where `f` vanishes.
    neg_elasticity: DensityFn,
    pub support: (f64, f64),
    pub tail: TailBound,
    pub family: Option<Family>,
}

impl fmt::Debug for ItemDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ItemDistribution")
            .field("support", &self.support)
            .field("tail", &self.tail)
            .field("family", &self.family)
            .finish()
    }
}

impl ItemDistribution {
    pub fn pdf(&self, z: f64) -> f64 {
        if z < self.support.0 || z >= self.support.1 {
            0.0
        } else {
            (self.pdf)(z)
        }
    }

    pub fn dpdf(&self, z: f64) -> f64 {
        if z < self.support.0 || z >= self.support.1 {
            0.0
        } else {
            (self.dpdf)(z)
        }
    }

    /// `-z f'(z)/f(z)`; an increasing function for every built-in
    /// family, which makes the favored region an increasing set.
    pub fn neg_elasticity(&self, z: f64) -> f64 {
        (self.neg_elasticity)(z)
    }

    /// Upper integration limit covering all but `target` of the tail
    /// factor (the support end itself when finite).
    pub fn truncated_upper(&self, target: f64) -> f64 {
        match self.tail {
            TailBound::Compact => self.support.1,
            tail => self.support.1.min(self.support.0 + tail.truncation(target)),
        }
    }

    /// Cumulative distribution, analytic for the built-in families and
    /// by quadrature otherwise.
    pub fn cdf(&self, z: f64) -> f64 {
        if z <= self.support.0 {
            return 0.0;
        }
        if z >= self.support.1 {
            return 1.0;
        }
        match self.family {
            Some(Family::Exponential { rate }) => 1.0 - (-rate * z).exp(),
            Some(Family::PowerLaw { shape }) => 1.0 - (1.0 + z).powf(1.0 - shape),
            Some(Family::Beta { a, b }) => statrs::function::beta::beta_reg(a, b, z),
            None => {
                let tol = Tolerance::default();
                integrate_1d(|t| self.pdf(t), self.support.0, UpperLimit::Finite(z), &tol)
                    .unwrap_or(f64::NAN)
            }
        }
    }

    /// Inverse cdf; analytic where possible, bracketed root otherwise.
    pub fn quantile(&self, u: f64) -> f64 {
        assert!((0.0..1.0).contains(&u));
        match self.family {
            Some(Family::Exponential { rate }) => -(1.0 - u).ln() / rate,
            Some(Family::PowerLaw { shape }) => (1.0 - u).powf(-1.0 / (shape - 1.0)) - 1.0,
            _ => {
                if u == 0.0 {
                    return self.support.0;
                }
                let hi = self.truncated_upper(1e-16);
                let tol = Tolerance { abs_tol: 1e-12, ..Tolerance::default() };
                find_root(|z| self.cdf(z) - u, self.support.0, hi, &tol).unwrap_or(f64::NAN)
            }
        }
    }

    /// Arbitrary user-supplied distribution. Must be validated before
    /// use in the pipeline.
    pub fn custom(
        pdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dpdf: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: (f64, f64),
        tail: TailBound,
    ) -> Self {
        let pdf = Arc::new(pdf) as DensityFn;
        let dpdf = Arc::new(dpdf) as DensityFn;
        let p = pdf.clone();
        let d = dpdf.clone();
        let neg_elasticity = Arc::new(move |z: f64| {
            let f = p(z);
            if f.abs() < 1e-300 {
                f64::NAN
            } else {
                -z * d(z) / f
            }
        }) as DensityFn;
        ItemDistribution { pdf, dpdf, neg_elasticity, support, tail, family: None }
    }
}

/// Build a validated built-in family member.
pub fn make_family(family: Family) -> Result<ItemDistribution, DistributionError> {
    match family {
        Family::Exponential { rate } => {
            if rate <= 0.0 {
                return Err(DistributionError::InvalidParameter(format!(
                    "exponential rate must be positive, got {rate}"
                )));
            }
            Ok(ItemDistribution {
                pdf: Arc::new(move |z| rate * (-rate * z).exp()),
                dpdf: Arc::new(move |z| -rate * rate * (-rate * z).exp()),
                neg_elasticity: Arc::new(move |z| rate * z),
                support: (0.0, f64::INFINITY),
                tail: TailBound::Exponential { rate },
                family: Some(family),
            })
        }
        Family::PowerLaw { shape } => {
            if shape <= 2.0 {
                return Err(DistributionError::InvalidParameter(format!(
                    "power-law shape must exceed 2 (so z^2 f(z) -> 0), got {shape}"
                )));
            }
            Ok(ItemDistribution {
                pdf: Arc::new(move |z| (shape - 1.0) * (1.0 + z).powf(-shape)),
                dpdf: Arc::new(move |z| -shape * (shape - 1.0) * (1.0 + z).powf(-shape - 1.0)),
                neg_elasticity: Arc::new(move |z| shape * z / (1.0 + z)),
                support: (0.0, f64::INFINITY),
                tail: TailBound::Polynomial { power: shape },
                family: Some(family),
            })
        }
        Family::Beta { a, b } => {
            if a <= 1.0 || b <= 1.0 {
                return Err(DistributionError::InvalidParameter(format!(
                    "beta shapes must exceed 1 for the boundary conditions, got ({a}, {b})"
                )));
            }
            let norm = (-ln_beta(a, b)).exp();
            Ok(ItemDistribution {
                pdf: Arc::new(move |z| norm * z.powf(a - 1.0) * (1.0 - z).powf(b - 1.0)),
                dpdf: Arc::new(move |z| {
                    norm * z.powf(a - 2.0)
                        * (1.0 - z).powf(b - 2.0)
                        * ((a - 1.0) * (1.0 - z) - (b - 1.0) * z)
                }),
                // -z f'/f = (1 - a) + (b - 1) z / (1 - z)
                neg_elasticity: Arc::new(move |z| (1.0 - a) + (b - 1.0) * z / (1.0 - z)),
                support: (0.0, 1.0),
                tail: TailBound::Compact,
                family: Some(family),
            })
        }
    }
}

/// Two independent items; the joint density is the product.
#[derive(Clone, Debug)]
pub struct Instance {
    pub items: [ItemDistribution; 2],
}

impl Instance {
    pub fn new(first: ItemDistribution, second: ItemDistribution) -> Self {
        Instance { items: [first, second] }
    }

    /// Lower corner `d_-` of the support box.
    pub fn d_minus(&self) -> (f64, f64) {
        (self.items[0].support.0, self.items[1].support.0)
    }

    pub fn joint_pdf(&self, z1: f64, z2: f64) -> f64 {
        self.items[0].pdf(z1) * self.items[1].pdf(z2)
    }

    /// Truncated bounding box covering all but `target` of each tail.
    pub fn truncated_box(&self, target: f64) -> ((f64, f64), (f64, f64)) {
        (
            (self.items[0].support.0, self.items[0].truncated_upper(target)),
            (self.items[1].support.0, self.items[1].truncated_upper(target)),
        )
    }
}

/// Result of one validation check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub residual: f64,
    pub passed: bool,
}

/// Per-assumption report from [`validate`].
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Check the distribution assumptions numerically: normalization,
/// `d- f(d-) = 0`, decay of `z^2 f(z)` toward the upper end, and
/// agreement of the supplied derivative with finite differences.
pub fn validate(dist: &ItemDistribution, tol: &Tolerance) -> ValidationReport {
    let mut checks = Vec::new();

    let upper = dist.truncated_upper(tol.abs_tol / 10.0);
    let mass = integrate_1d(|z| dist.pdf(z), dist.support.0, UpperLimit::Finite(upper), tol)
        .unwrap_or(f64::NAN);
    let res = (mass - 1.0).abs();
    checks.push(CheckResult { name: "normalization", residual: res, passed: res < 1e-6 });

    let boundary = dist.support.0 * dist.pdf(dist.support.0);
    checks.push(CheckResult {
        name: "lower_boundary",
        residual: boundary.abs(),
        passed: boundary.abs() < 1e-9,
    });

    // z^2 f(z) along a sequence approaching the upper support end
    let mut tail_ok = true;
    let mut tail_res: f64 = 0.0;
    if dist.support.1.is_finite() {
        let d_plus = dist.support.1;
        let mut prev = f64::INFINITY;
        for k in 1..=6 {
            let z = d_plus - (d_plus - dist.support.0) * 10f64.powi(-k);
            let v = z * z * dist.pdf(z);
            tail_res = v;
            if v > prev + 1e-12 {
                tail_ok = false;
            }
            prev = v;
        }
        tail_ok &= tail_res < 1e-3;
    } else {
        // z^2 f(z) must tend to zero; on a geometric grid the ratio of
        // consecutive values has to stay bounded away from one
        let z0 = dist.truncated_upper(1e-6).max(1.0);
        let mut prev = z0 * z0 * dist.pdf(z0);
        for k in 1..=6 {
            let z = z0 * 2f64.powi(k);
            let v = z * z * dist.pdf(z);
            tail_res = if prev > 0.0 { v / prev } else { 0.0 };
            if tail_res > 0.95 {
                tail_ok = false;
            }
            prev = v;
        }
    }
    checks.push(CheckResult { name: "tail_decay", residual: tail_res, passed: tail_ok });

    // derivative vs central finite differences on a point sweep
    let hi = dist.truncated_upper(1e-4);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 1..200 {
        let z = dist.support.0 + (hi - dist.support.0) * i as f64 / 200.0;
        if z - h <= dist.support.0 || z + h >= dist.support.1 {
            continue;
        }
        let fd = (dist.pdf(z + h) - dist.pdf(z - h)) / (2.0 * h);
        worst = worst.max((dist.dpdf(z) - fd).abs());
    }
    checks.push(CheckResult { name: "derivative_consistency", residual: worst, passed: worst < 1e-5 });

    ValidationReport { checks }
}
