//! Deterministic adaptive quadrature, bracketed root-finding, and
//! monotone decreasing boundary curves. Everything here is pure and
//! shared by the rest of the crate.

use thiserror::Error;

/// Error targets for quadrature and root-finding.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_depth: u32) -> Self {
        assert!(abs_tol > 0.0 && rel_tol > 0.0 && max_depth >= 1);
        Tolerance { abs_tol, rel_tol, max_depth }
    }

    pub fn with_abs(self, abs_tol: f64) -> Self {
        Tolerance { abs_tol, ..self }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs_tol: 1e-9, rel_tol: 1e-9, max_depth: 60 }
    }
}

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("interval is empty or reversed: [{0}, {1}]")]
    InvalidInterval(f64, f64),
    #[error("adaptive scheme hit max_depth with error estimate {0:.3e} above target")]
    NonConvergence(f64),
    #[error("no sign change on bracket [{0}, {1}]")]
    NoSignChange(f64, f64),
    #[error("point {0} outside curve domain [{1}, {2}]")]
    CurveDomainMismatch(f64, f64, f64),
    #[error("curve samples are not usable: {0}")]
    MalformedCurve(String),
}

/// Decay family of an integrand past any finite truncation point,
/// used to pick the truncation for improper integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TailBound {
    /// Tail controlled by an `exp(-rate * z)` factor.
    Exponential { rate: f64 },
    /// Tail controlled by a `(1+z)^(1-power)` factor.
    Polynomial { power: f64 },
    /// Integrand has compact support; no truncation needed.
    Compact,
}

impl TailBound {
    /// Point `t` past which the tail factor is below `target`.
    pub fn truncation(&self, target: f64) -> f64 {
        match *self {
            TailBound::Exponential { rate } => (1.0 / target).ln() / rate,
            TailBound::Polynomial { power } => target.powf(1.0 / (1.0 - power)) - 1.0,
            TailBound::Compact => panic!("compact tails need no truncation"),
        }
    }
}

/// Upper limit of a 1-D integral.
#[derive(Clone, Copy, Debug)]
pub enum UpperLimit {
    Finite(f64),
    /// Truncated at the point where the tail bound drops below
    /// `abs_tol / 10`.
    Infinite(TailBound),
}

// Gauss-Kronrod 7-15 nodes/weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut k = WGK[7] * f(c);
    let mut g = WG[3] * f(c);
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, (k - g).abs() * h)
}

struct Adapt<'a, F> {
    f: &'a F,
    rel_tol: f64,
    max_depth: u32,
    worst: f64,
}

impl<F: Fn(f64) -> f64> Adapt<'_, F> {
    // `whole` is this interval's own Kronrod value; the error is
    // estimated against the refined two-half sum, which stays honest
    // on kinked integrands where Gauss and Kronrod can agree by
    // coincidence.
    fn run(&mut self, a: f64, b: f64, whole: f64, abs_budget: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, le) = kronrod(self.f, a, m);
        let (r, re) = kronrod(self.f, m, b);
        let sum = l + r;
        let err = (whole - sum).abs() + 0.01 * (le + re);
        if err <= abs_budget.max(self.rel_tol * sum.abs())
            || (b - a).abs() < f64::EPSILON * a.abs().max(1.0)
        {
            return sum;
        }
        if depth >= self.max_depth {
            self.worst = self.worst.max(err);
            return sum;
        }
        let half = 0.5 * abs_budget;
        self.run(a, m, l, half, depth + 1) + self.run(m, b, r, half, depth + 1)
    }
}

/// Adaptive quadrature of `f` over `[a, b)`.
pub fn integrate_1d<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: UpperLimit,
    tol: &Tolerance,
) -> Result<f64, NumericsError> {
    let b = match b {
        UpperLimit::Finite(b) => b,
        UpperLimit::Infinite(tail) => a + tail.truncation(tol.abs_tol / 10.0),
    };
    if a >= b {
        if a == b {
            return Ok(0.0);
        }
        return Err(NumericsError::InvalidInterval(a, b));
    }
    let mut adapt = Adapt { f: &f, rel_tol: tol.rel_tol, max_depth: tol.max_depth, worst: 0.0 };
    let (whole, _) = kronrod(&f, a, b);
    let val = adapt.run(a, b, whole, tol.abs_tol, 0);
    if adapt.worst > tol.abs_tol.max(tol.rel_tol * val.abs()) * 100.0 {
        return Err(NumericsError::NonConvergence(adapt.worst));
    }
    Ok(val)
}

/// An `z1`-iterated planar region: `z1` in `[x0, x1]`, `z2` between
/// `lo(z1)` and `hi(z1)`.
pub struct IteratedRegion<'a> {
    pub x0: f64,
    pub x1: f64,
    pub lo: Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>,
    pub hi: Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>,
}

impl<'a> IteratedRegion<'a> {
    pub fn boxed(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        IteratedRegion { x0, x1, lo: Box::new(move |_| y0), hi: Box::new(move |_| y1) }
    }
}

/// Iterated adaptive quadrature over a planar region (outer `z1`,
/// inner `z2`).
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    region: &IteratedRegion,
    tol: &Tolerance,
) -> Result<f64, NumericsError> {
    if region.x0 >= region.x1 {
        if region.x0 == region.x1 {
            return Ok(0.0);
        }
        return Err(NumericsError::InvalidInterval(region.x0, region.x1));
    }
    let width = region.x1 - region.x0;
    let inner_tol = Tolerance {
        abs_tol: tol.abs_tol / (10.0 * width),
        rel_tol: tol.rel_tol,
        max_depth: tol.max_depth,
    };
    let outer = |z1: f64| {
        let lo = (region.lo)(z1);
        let hi = (region.hi)(z1);
        if hi <= lo {
            return 0.0;
        }
        integrate_1d(|z2| f(z1, z2), lo, UpperLimit::Finite(hi), &inner_tol).unwrap_or(f64::NAN)
    };
    let val = integrate_1d(outer, region.x0, UpperLimit::Finite(region.x1), tol)?;
    if val.is_nan() {
        return Err(NumericsError::NonConvergence(f64::NAN));
    }
    Ok(val)
}

/// Bracketed root-finding (Brent's method). Requires a sign change on
/// `[lo, hi]`; deterministic for fixed inputs.
pub fn find_root<F: Fn(f64) -> f64>(
    g: F,
    lo: f64,
    hi: f64,
    tol: &Tolerance,
) -> Result<f64, NumericsError> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (g(a), g(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        return Err(NumericsError::NoSignChange(lo, hi));
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.abs() > fc.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol.abs_tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            // inverse quadratic / secant step
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = g(b);
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
    }
    Err(NumericsError::NonConvergence((c - b).abs()))
}

/// Scan `[lo, hi]` on `n` subintervals for the first sign change of
/// `g`, then polish with [`find_root`]. Returns `None` when `g` keeps
/// one sign on the whole grid.
pub fn scan_root<F: Fn(f64) -> f64>(
    g: F,
    lo: f64,
    hi: f64,
    n: usize,
    tol: &Tolerance,
) -> Option<f64> {
    let h = (hi - lo) / n as f64;
    let mut x0 = lo;
    let mut f0 = g(x0);
    for i in 1..=n {
        let x1 = lo + i as f64 * h;
        let f1 = g(x1);
        if f0 == 0.0 {
            return Some(x0);
        }
        if f0 * f1 <= 0.0 {
            return find_root(&g, x0, x1, tol).ok();
        }
        x0 = x1;
        f0 = f1;
    }
    None
}

/// Locate the maximum of a unimodal function on `[lo, hi]` by
/// golden-section search over a coarse probe grid. Returns `(argmax, max)`.
pub fn grid_maximize<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, probes: usize, tol: f64) -> (f64, f64) {
    // coarse probe pass picks the bracketing cell
    let h = (hi - lo) / probes as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=probes {
        let v = f(lo + i as f64 * h);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut a = lo + (best_i.saturating_sub(1)) as f64 * h;
    let mut b = (lo + (best_i + 1) as f64 * h).min(hi);
    const INVPHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// A knot of a [`BoundaryCurve`]: position, value, and one-sided
/// slopes. `d_in` applies on the left of the knot, `d_out` on the
/// right; a concave corner has `d_in >= d_out`.
#[derive(Clone, Copy, Debug)]
struct Knot {
    x: f64,
    y: f64,
    d_in: f64,
    d_out: f64,
}

/// Monotone decreasing planar curve `z2 = s(z1)`, stored as a
/// C^1-almost-everywhere piecewise-quadratic interpolant. When built
/// through [`BoundaryCurve::concave_interpolant`] the curve is concave
/// by construction (slopes non-increasing), which downstream menu
/// synthesis relies on.
#[derive(Clone, Debug)]
pub struct BoundaryCurve {
    knots: Vec<Knot>,
    concave: bool,
}

impl BoundaryCurve {
    /// Shape-preserving interpolant of decreasing, concave samples.
    /// Secant slopes must be non-increasing up to `slack`; small
    /// violations are flattened, larger ones are an error.
    pub fn concave_interpolant(xs: &[f64], ys: &[f64], slack: f64) -> Result<Self, NumericsError> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(NumericsError::MalformedCurve("need >= 2 samples".into()));
        }
        let n = xs.len();
        let mut sec = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            if xs[i + 1] <= xs[i] {
                return Err(NumericsError::MalformedCurve("z1 must be strictly increasing".into()));
            }
            sec.push((ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]));
        }
        let mut sec_mono = sec.clone();
        for i in 1..sec_mono.len() {
            if sec_mono[i] > sec_mono[i - 1] {
                if sec_mono[i] > sec_mono[i - 1] + slack {
                    return Err(NumericsError::MalformedCurve(format!(
                        "secant slopes increase by {:.3e} near z1={:.6}",
                        sec_mono[i] - sec_mono[i - 1],
                        xs[i]
                    )));
                }
                sec_mono[i] = sec_mono[i - 1];
            }
        }
        let sec = sec_mono;
        // node slopes inside the secant hull keep the spline concave
        let m = sec.len();
        let mut d = vec![0.0; n];
        d[0] = if m > 1 { (sec[0] + 0.5 * (sec[0] - sec[1])).min(0.0).max(sec[0]) } else { sec[0] };
        d[n - 1] = if m > 1 {
            (sec[m - 1] + 0.5 * (sec[m - 1] - sec[m - 2])).min(sec[m - 1])
        } else {
            sec[m - 1]
        };
        for i in 1..n - 1 {
            d[i] = 0.5 * (sec[i - 1] + sec[i]);
        }
        let mut knots: Vec<Knot> = Vec::with_capacity(2 * n);
        knots.push(Knot { x: xs[0], y: ys[0], d_in: d[0], d_out: d[0] });
        for i in 0..n - 1 {
            let h = xs[i + 1] - xs[i];
            let delta = (ys[i + 1] - ys[i]) / h;
            let p = (d[i] - delta).max(0.0);
            let q = (delta - d[i + 1]).max(0.0);
            if p + q > 1e-300 {
                // knot position keeping the interior slope inside [d[i+1], d[i]]
                let a_lo = ((q - p) / (p + q)).max(0.0);
                let a_hi = (2.0 * q / (p + q)).min(1.0);
                let a = 0.5 * (a_lo + a_hi);
                let mint = 2.0 * delta - d[i] * a - d[i + 1] * (1.0 - a);
                if a <= 1e-12 {
                    // corner at the left knot
                    knots.last_mut().unwrap().d_out = mint;
                } else if a >= 1.0 - 1e-12 {
                    knots.push(Knot { x: xs[i + 1], y: ys[i + 1], d_in: mint, d_out: d[i + 1] });
                    continue;
                } else {
                    let xk = xs[i] + a * h;
                    let yk = ys[i] + 0.5 * (knots.last().unwrap().d_out + mint) * a * h;
                    knots.push(Knot { x: xk, y: yk, d_in: mint, d_out: mint });
                }
            }
            knots.push(Knot { x: xs[i + 1], y: ys[i + 1], d_in: d[i + 1], d_out: d[i + 1] });
        }
        Ok(BoundaryCurve { knots, concave: true })
    }

    /// Straight segment from `(x0, y0)` to `(x1, y1)`.
    pub fn segment(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        let d = (y1 - y0) / (x1 - x0);
        BoundaryCurve {
            knots: vec![
                Knot { x: x0, y: y0, d_in: d, d_out: d },
                Knot { x: x1, y: y1, d_in: d, d_out: d },
            ],
            concave: true,
        }
    }

    /// Join consecutive curve pieces into one curve. Pieces must abut
    /// (`junction_tol` on both coordinates) and slopes must be
    /// non-increasing across junctions for the result to stay concave.
    pub fn concat(pieces: &[BoundaryCurve], junction_tol: f64) -> Result<Self, NumericsError> {
        let mut knots: Vec<Knot> = Vec::new();
        for piece in pieces {
            if piece.knots.is_empty() {
                continue;
            }
            if let Some(last) = knots.last().copied() {
                let first = piece.knots[0];
                if (first.x - last.x).abs() > junction_tol || (first.y - last.y).abs() > junction_tol {
                    return Err(NumericsError::MalformedCurve(format!(
                        "junction mismatch at z1={:.6}: ({:.6},{:.6}) vs ({:.6},{:.6})",
                        last.x, last.x, last.y, first.x, first.y
                    )));
                }
                let merged = Knot { x: last.x, y: last.y, d_in: last.d_in, d_out: first.d_out };
                *knots.last_mut().unwrap() = merged;
                knots.extend_from_slice(&piece.knots[1..]);
            } else {
                knots.extend_from_slice(&piece.knots);
            }
        }
        if knots.len() < 2 {
            return Err(NumericsError::MalformedCurve("concat produced empty curve".into()));
        }
        Ok(BoundaryCurve { knots, concave: true })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0].x, self.knots[self.knots.len() - 1].x)
    }

    pub fn is_concave(&self) -> bool {
        self.concave
    }

    fn segment_index(&self, x: f64) -> Result<usize, NumericsError> {
        let (a, b) = self.domain();
        if x < a - 1e-12 || x > b + 1e-12 {
            return Err(NumericsError::CurveDomainMismatch(x, a, b));
        }
        let i = self.knots.partition_point(|k| k.x <= x);
        Ok(i.clamp(1, self.knots.len() - 1) - 1)
    }

    /// Evaluate `s(z1)`.
    pub fn eval(&self, x: f64) -> Result<f64, NumericsError> {
        let i = self.segment_index(x)?;
        let k0 = self.knots[i];
        let k1 = self.knots[i + 1];
        let h = k1.x - k0.x;
        let u = (x - k0.x).clamp(0.0, h);
        let dd = (k1.d_in - k0.d_out) / h;
        Ok(k0.y + k0.d_out * u + 0.5 * dd * u * u)
    }

    /// Right slope `s'_+(z1)`.
    pub fn slope_right(&self, x: f64) -> Result<f64, NumericsError> {
        let (_, b) = self.domain();
        if x >= b - 1e-12 {
            return Ok(self.knots[self.knots.len() - 1].d_in);
        }
        let i = self.segment_index(x)?;
        let k0 = self.knots[i];
        let k1 = self.knots[i + 1];
        let h = k1.x - k0.x;
        let u = (x - k0.x).clamp(0.0, h);
        Ok(k0.d_out + (k1.d_in - k0.d_out) * u / h)
    }

    /// Left slope `s'_-(z1)`.
    pub fn slope_left(&self, x: f64) -> Result<f64, NumericsError> {
        let (a, _) = self.domain();
        if x <= a + 1e-12 {
            return Ok(self.knots[0].d_out);
        }
        let i = self.segment_index(x - 1e-13 * x.abs().max(1.0))?;
        let k0 = self.knots[i];
        let k1 = self.knots[i + 1];
        let h = k1.x - k0.x;
        let u = (x - k0.x).clamp(0.0, h);
        if u <= 1e-14 * h {
            return Ok(k0.d_in);
        }
        Ok(k0.d_out + (k1.d_in - k0.d_out) * u / h)
    }

    /// Inverse evaluation `s^{-1}(z2)` for decreasing curves.
    pub fn inverse(&self, y: f64) -> Result<f64, NumericsError> {
        let (a, b) = self.domain();
        let ya = self.eval(a)?;
        let yb = self.eval(b)?;
        if y > ya + 1e-12 || y < yb - 1e-12 {
            return Err(NumericsError::CurveDomainMismatch(y, yb, ya));
        }
        let (mut lo, mut hi) = (a, b);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid)? >= y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * (1.0 + b.abs()) {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Restrict the curve to `[x0, x1]` within its domain.
    pub fn restrict(&self, x0: f64, x1: f64) -> Result<Self, NumericsError> {
        let (a, b) = self.domain();
        let x0 = x0.max(a);
        let x1 = x1.min(b);
        if x0 >= x1 {
            return Err(NumericsError::InvalidInterval(x0, x1));
        }
        let mut knots = Vec::new();
        let d0 = self.slope_right(x0)?;
        knots.push(Knot { x: x0, y: self.eval(x0)?, d_in: d0, d_out: d0 });
        for k in &self.knots {
            if k.x > x0 + 1e-14 && k.x < x1 - 1e-14 {
                knots.push(*k);
            }
        }
        let d1 = self.slope_left(x1)?;
        knots.push(Knot { x: x1, y: self.eval(x1)?, d_in: d1, d_out: d1 });
        Ok(BoundaryCurve { knots, concave: self.concave })
    }
}
