//! Mechanism representation and evaluation: menus (finite or
//! region-parametrized continua), the induced utility function, IC/IR
//! auditing, and expected revenue by two independent formulas
//! (utility-weighted transform quadrature and seeded Monte Carlo over
//! the type distribution).

use crate::distributions::Instance;
use crate::measures::TransformField;
use crate::numerics::{integrate_1d, integrate_2d, IteratedRegion, NumericsError, Tolerance, UpperLimit};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// One menu entry: allocation probabilities per item and a price.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MenuOption {
    pub q: (f64, f64),
    pub t: f64,
}

impl MenuOption {
    pub const NULL: MenuOption = MenuOption { q: (0.0, 0.0), t: 0.0 };

    pub fn surplus(&self, z: (f64, f64)) -> f64 {
        z.0 * self.q.0 + z.1 * self.q.1 - self.t
    }
}

/// A continuum of menu options indexed by the buyer's type, used for
/// mechanisms whose outcomes vary continuously over regions.
pub trait OptionFamily: Send + Sync {
    /// The outcome the mechanism assigns to a declared type.
    fn option_for(&self, z: (f64, f64)) -> MenuOption;

    /// A finite sample of the available options (for deviation
    /// audits); must include the null option.
    fn sampled_options(&self, n: usize) -> Vec<MenuOption>;
}

#[derive(Clone)]
pub enum Mechanism {
    /// Finite menu; the null option must be present.
    Menu(Vec<MenuOption>),
    /// Region-parametrized family evaluated in closed form.
    Parametrized(Arc<dyn OptionFamily>),
}

impl Mechanism {
    pub fn menu(options: Vec<MenuOption>) -> Self {
        assert!(options.contains(&MenuOption::NULL), "menu must carry the null option");
        Mechanism::Menu(options)
    }

    /// Utility and chosen option at a type. Among utility ties the
    /// highest-priced option wins (revenue-favorable convention on a
    /// measure-zero set).
    pub fn utility(&self, z: (f64, f64)) -> (f64, MenuOption) {
        match self {
            Mechanism::Menu(options) => {
                let mut best = MenuOption::NULL;
                let mut best_u = 0.0;
                for opt in options {
                    let u = opt.surplus(z);
                    let tie = (u - best_u).abs() <= 1e-12 * (1.0 + best_u.abs());
                    if (u > best_u && !tie) || (tie && opt.t > best.t) {
                        best_u = u;
                        best = *opt;
                    }
                }
                (best_u.max(0.0), best)
            }
            Mechanism::Parametrized(family) => {
                let opt = family.option_for(z);
                (opt.surplus(z), opt)
            }
        }
    }

    fn deviation_options(&self, n: usize) -> Vec<MenuOption> {
        match self {
            Mechanism::Menu(options) => options.clone(),
            Mechanism::Parametrized(family) => family.sampled_options(n),
        }
    }
}

/// Worst observed IC and IR violations over sampled type pairs.
#[derive(Clone, Debug)]
pub struct AuditReport {
    /// max over pairs of u(z; declared z') - u(z); nonpositive for a
    /// truthful mechanism up to numeric noise
    pub ic_violation: f64,
    /// max of -u(z); positive means some type pays to participate
    pub ir_violation: f64,
    pub worst_pair: ((f64, f64), (f64, f64)),
    pub pairs: usize,
}

impl AuditReport {
    pub fn truthful(&self, ic_tol: f64, ir_tol: f64) -> bool {
        self.ic_violation <= ic_tol && self.ir_violation <= ir_tol
    }
}

/// Sample `count` type pairs from the instance and check that no
/// sampled deviation beats truth-telling.
pub fn audit_ic_ir(m: &Mechanism, instance: &Instance, count: usize, seed: u64) -> AuditReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let devs = m.deviation_options(512);
    let mut report = AuditReport {
        ic_violation: f64::NEG_INFINITY,
        ir_violation: f64::NEG_INFINITY,
        worst_pair: ((0.0, 0.0), (0.0, 0.0)),
        pairs: count,
    };
    let draw = |rng: &mut ChaCha8Rng| {
        (
            instance.items[0].quantile(rng.gen_range(0.0..1.0)),
            instance.items[1].quantile(rng.gen_range(0.0..1.0)),
        )
    };
    for _ in 0..count {
        let z = draw(&mut rng);
        let zp = draw(&mut rng);
        let (u, _) = m.utility(z);
        report.ir_violation = report.ir_violation.max(-u);
        // deviation to the option assigned to another sampled type
        let (_, opt_zp) = m.utility(zp);
        let mut worst = opt_zp.surplus(z) - u;
        // plus the fixed deviation panel
        for opt in &devs {
            worst = worst.max(opt.surplus(z) - u);
        }
        if worst > report.ic_violation {
            report.ic_violation = worst;
            report.worst_pair = (z, zp);
        }
    }
    report
}

/// Shape diagnostics of the induced utility on the truncated support:
/// worst midpoint-convexity defect, worst monotonicity defect, and
/// the range of finite-difference gradients.
#[derive(Clone, Debug)]
pub struct ShapeReport {
    pub convexity_defect: f64,
    pub monotonicity_defect: f64,
    pub gradient_min: f64,
    pub gradient_max: f64,
}

pub fn shape_audit(m: &Mechanism, instance: &Instance, count: usize, seed: u64) -> ShapeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ((x0, x1), (y0, y1)) = instance.truncated_box(1e-6);
    let mut rep = ShapeReport {
        convexity_defect: f64::NEG_INFINITY,
        monotonicity_defect: f64::NEG_INFINITY,
        gradient_min: f64::INFINITY,
        gradient_max: f64::NEG_INFINITY,
    };
    let u = |z: (f64, f64)| m.utility(z).0;
    let h = 1e-6 * ((x1 - x0).max(y1 - y0));
    for _ in 0..count {
        let a = (rng.gen_range(x0..x1), rng.gen_range(y0..y1));
        let b = (rng.gen_range(x0..x1), rng.gen_range(y0..y1));
        let mid = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
        rep.convexity_defect = rep.convexity_defect.max(u(mid) - 0.5 * (u(a) + u(b)));
        let hi = (a.0.max(b.0), a.1.max(b.1));
        let lo = (a.0.min(b.0), a.1.min(b.1));
        rep.monotonicity_defect = rep.monotonicity_defect.max(u(lo) - u(hi));
        if a.0 + h < x1 && a.1 + h < y1 {
            for g in [(u((a.0 + h, a.1)) - u(a)) / h, (u((a.0, a.1 + h)) - u(a)) / h] {
                rep.gradient_min = rep.gradient_min.min(g);
                rep.gradient_max = rep.gradient_max.max(g);
            }
        }
    }
    rep
}

/// Expected revenue as the utility-weighted integral of the
/// transform field over the support. The corner atom carries
/// `u(d_minus) = 0` in the transport formulation and contributes
/// nothing here.
pub fn revenue_quadrature(
    u: impl Fn(f64, f64) -> f64,
    field: &TransformField,
    tol: &Tolerance,
) -> Result<f64, NumericsError> {
    let ((x0, x1), (y0, y1)) = field.quad_box(tol);
    let region = IteratedRegion::boxed(x0, x1, y0, y1);
    integrate_2d(|z1, z2| u(z1, z2) * field.phi(z1, z2), &region, tol)
}

/// Expected revenue by direct sampling of buyer types (inverse-CDF
/// per item), with a 95% confidence half-width. Deterministic for a
/// fixed seed.
pub fn revenue_monte_carlo(
    m: &Mechanism,
    instance: &Instance,
    samples: usize,
    seed: u64,
) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let z = (
            instance.items[0].quantile(rng.gen_range(0.0..1.0)),
            instance.items[1].quantile(rng.gen_range(0.0..1.0)),
        );
        let (_, opt) = m.utility(z);
        sum += opt.t;
        sum_sq += opt.t * opt.t;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) / n;
    (mean, 1.96 * var.sqrt())
}

/// Best revenue from selling the items separately, prices searched on
/// a `k x k` per-item quantile grid. Returns `(revenue, (p1, p2))`.
pub fn best_separate_prices(instance: &Instance, k: usize) -> (f64, (f64, f64)) {
    let mut best = (0.0, (0.0, 0.0));
    let per_item: Vec<Vec<(f64, f64)>> = instance
        .items
        .iter()
        .map(|item| {
            (1..=k)
                .map(|i| {
                    let p = item.quantile(0.001 + 0.998 * i as f64 / (k + 1) as f64);
                    (p, p * (1.0 - item.cdf(p)))
                })
                .collect()
        })
        .collect();
    for &(p1, r1) in &per_item[0] {
        for &(p2, r2) in &per_item[1] {
            if r1 + r2 > best.0 {
                best = (r1 + r2, (p1, p2));
            }
        }
    }
    best
}

/// Best revenue from a single take-it-or-leave-it grand-bundle price
/// on a `k`-point grid. Returns `(revenue, price)`.
pub fn best_bundle_price(instance: &Instance, k: usize, tol: &Tolerance) -> (f64, f64) {
    let ((x0, x1), (y0, y1)) = instance.truncated_box(1e-9);
    let sold_prob = |p: f64| -> f64 {
        // P[z1 + z2 >= p] = 1 - E[F2(p - z1)]
        let below = integrate_1d(
            |z1| instance.items[0].pdf(z1) * instance.items[1].cdf(p - z1),
            x0,
            UpperLimit::Finite(x1.min(p - y0)),
            tol,
        )
        .unwrap_or(1.0);
        1.0 - below
    };
    let mut best = (0.0, 0.0);
    for i in 1..=k {
        let p = x0 + y0 + (x1 + y1 - x0 - y0) * i as f64 / (k + 1) as f64;
        let r = p * sold_prob(p);
        if r > best.0 {
            best = (r, p);
        }
    }
    best
}
