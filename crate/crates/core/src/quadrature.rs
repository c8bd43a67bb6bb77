//! Composite 8-point Gauss–Legendre quadrature on graded panels.
//!
//! Two entry points:
//!
//! * [`integrate`] / [`integrate_ln`]: adaptive scalar integration by panel
//!   doubling, with an optional power-law substitution for an integrable
//!   endpoint singularity at the left end.
//! * [`Grid`] / [`GridFunction`]: a fixed partition carrying sampled functions.
//!   Cumulative integrals are taken with the exact integration matrix of the
//!   degree-7 interpolant on each panel, so nested integrals keep the order of
//!   the base rule.
//!
//! Every node also records its distance from the grid's left end, computed
//! without cancellation. Integrands with a singularity at that end are
//! evaluated from the offset, never from `a + offset`, which would round away
//! the distances that matter.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::scaled::{pairwise_sum, ScaledReal};

/// Nodes per panel.
pub const RULE_POINTS: usize = 8;
/// Default number of panel doublings before giving up.
pub const MAX_DOUBLINGS: u32 = 20;
/// Default relative tolerance for table reproduction.
pub const DEFAULT_TOL: f64 = 1e-9;

const GEOMETRIC_RATIO: f64 = 0.15;
const SINGULAR_LEVELS: usize = 18;

struct Rule {
    nodes: [f64; RULE_POINTS],
    weights: [f64; RULE_POINTS],
    /// `legendre[j][m] = P_m(t_j)` for m = 0..=RULE_POINTS.
    legendre: [[f64; RULE_POINTS + 1]; RULE_POINTS],
    /// `partial[i][j] = ∫_{-1}^{t_i} L_j(s) ds`.
    partial: [[f64; RULE_POINTS]; RULE_POINTS],
}

fn legendre_all(t: f64) -> [f64; RULE_POINTS + 2] {
    let mut p = [0.0; RULE_POINTS + 2];
    p[0] = 1.0;
    p[1] = t;
    for m in 1..=RULE_POINTS {
        p[m + 1] = ((2 * m + 1) as f64 * t * p[m] - m as f64 * p[m - 1]) / (m + 1) as f64;
    }
    p
}

fn rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = RULE_POINTS;
        let mut nodes = [0.0; RULE_POINTS];
        let mut weights = [0.0; RULE_POINTS];
        for i in 0..n {
            // Newton on P_n from the Chebyshev guess, ascending order.
            let mut t = -(std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let p = legendre_all(t);
                let dp = n as f64 * (t * p[n] - p[n - 1]) / (t * t - 1.0);
                let step = p[n] / dp;
                t -= step;
                if step.abs() < 1e-17 {
                    break;
                }
            }
            let p = legendre_all(t);
            let dp = n as f64 * (t * p[n] - p[n - 1]) / (t * t - 1.0);
            nodes[i] = t;
            weights[i] = 2.0 / ((1.0 - t * t) * dp * dp);
        }
        let mut legendre = [[0.0; RULE_POINTS + 1]; RULE_POINTS];
        for j in 0..n {
            let p = legendre_all(nodes[j]);
            legendre[j].copy_from_slice(&p[..=n]);
        }
        let mut rule = Rule {
            nodes,
            weights,
            legendre,
            partial: [[0.0; RULE_POINTS]; RULE_POINTS],
        };
        for i in 0..n {
            rule.partial[i] = partial_weights_with(&rule, nodes[i]);
        }
        rule
    })
}

/// `∫_{-1}^{t} L_j(s) ds` for every Lagrange basis polynomial of the rule.
fn partial_weights_with(rule: &Rule, t: f64) -> [f64; RULE_POINTS] {
    let p = legendre_all(t);
    let mut out = [0.0; RULE_POINTS];
    for (j, o) in out.iter_mut().enumerate() {
        // L_j = w_j Σ_m (2m+1)/2 P_m(t_j) P_m, and ∫_{-1}^t P_m = (P_{m+1} - P_{m-1})/(2m+1).
        let mut acc = 0.5 * (t + 1.0);
        for m in 1..RULE_POINTS {
            acc += 0.5 * rule.legendre[j][m] * (p[m + 1] - p[m - 1]);
        }
        *o = rule.weights[j] * acc;
    }
    out
}

fn lagrange_weights(rule: &Rule, t: f64) -> [f64; RULE_POINTS] {
    let p = legendre_all(t);
    let mut out = [0.0; RULE_POINTS];
    for (j, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for m in 0..RULE_POINTS {
            acc += (2 * m + 1) as f64 * 0.5 * rule.legendre[j][m] * p[m];
        }
        *o = rule.weights[j] * acc;
    }
    out
}

/// Map from the reference panel `[-1, 1]` to state space, expressed as an
/// offset from the grid's left end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PanelMap {
    /// `d = lo + (hi - lo)(t + 1)/2`.
    Affine { lo: f64, hi: f64 },
    /// `d = origin + length * s^(1/gamma)` with `s` affine in `t` over `[s_lo, s_hi]`.
    Power {
        origin: f64,
        length: f64,
        gamma: f64,
        s_lo: f64,
        s_hi: f64,
    },
}

impl PanelMap {
    /// Offset and `dd/dt` at reference coordinate `t`.
    fn eval(&self, t: f64) -> (f64, f64) {
        match *self {
            PanelMap::Affine { lo, hi } => (lo + (hi - lo) * 0.5 * (t + 1.0), 0.5 * (hi - lo)),
            PanelMap::Power {
                origin,
                length,
                gamma,
                s_lo,
                s_hi,
            } => {
                let s = s_lo + (s_hi - s_lo) * 0.5 * (t + 1.0);
                let p = 1.0 / gamma;
                let d = origin + length * s.powf(p);
                let dd = length * p * s.powf(p - 1.0) * 0.5 * (s_hi - s_lo);
                (d, dd)
            }
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            PanelMap::Affine { lo, hi } => (lo, hi),
            PanelMap::Power {
                origin,
                length,
                gamma,
                s_lo,
                s_hi,
            } => (
                origin + length * s_lo.powf(1.0 / gamma),
                origin + length * s_hi.powf(1.0 / gamma),
            ),
        }
    }

    fn inverse(&self, d: f64) -> f64 {
        match *self {
            PanelMap::Affine { lo, hi } => 2.0 * (d - lo) / (hi - lo) - 1.0,
            PanelMap::Power {
                origin,
                length,
                gamma,
                s_lo,
                s_hi,
            } => {
                let s = ((d - origin) / length).max(0.0).powf(gamma);
                2.0 * (s - s_lo) / (s_hi - s_lo) - 1.0
            }
        }
    }
}

/// How panels are distributed inside one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grading {
    Uniform,
    /// Panel edges at `a + (b-a) r^k`, each geometric panel split into
    /// `panels` affine subpanels.
    GeometricTowardA { ratio: f64, levels: usize },
    /// Substitution `x = a + (b-a) s^(1/gamma)`, with geometric panels in `s`
    /// toward 0. Makes `(x-a)^(gamma-1)` singularities smooth.
    PowerLawTowardA { gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
    pub grading: Grading,
    /// Uniform: panel count. Graded: subpanels per geometric level.
    pub panels: usize,
}

impl Segment {
    pub fn uniform(a: f64, b: f64, panels: usize) -> Self {
        Self {
            a,
            b,
            grading: Grading::Uniform,
            panels,
        }
    }

    fn panel_maps(&self, origin: f64, out: &mut Vec<PanelMap>) {
        let len = self.b - self.a;
        let p = self.panels.max(1);
        match self.grading {
            Grading::Uniform => {
                for i in 0..p {
                    out.push(PanelMap::Affine {
                        lo: origin + len * i as f64 / p as f64,
                        hi: if i + 1 == p {
                            origin + len
                        } else {
                            origin + len * (i + 1) as f64 / p as f64
                        },
                    });
                }
            }
            Grading::GeometricTowardA { ratio, levels } => {
                let edges = geometric_edges(ratio, levels);
                for w in edges.windows(2) {
                    for i in 0..p {
                        let lo = w[0] + (w[1] - w[0]) * i as f64 / p as f64;
                        let hi = w[0] + (w[1] - w[0]) * (i + 1) as f64 / p as f64;
                        out.push(PanelMap::Affine {
                            lo: origin + len * lo,
                            hi: origin + len * hi,
                        });
                    }
                }
            }
            Grading::PowerLawTowardA { gamma } => {
                let edges = geometric_edges(GEOMETRIC_RATIO, SINGULAR_LEVELS);
                for w in edges.windows(2) {
                    for i in 0..p {
                        out.push(PanelMap::Power {
                            origin,
                            length: len,
                            gamma,
                            s_lo: w[0] + (w[1] - w[0]) * i as f64 / p as f64,
                            s_hi: w[0] + (w[1] - w[0]) * (i + 1) as f64 / p as f64,
                        });
                    }
                }
            }
        }
    }
}

/// `[0, r^levels, ..., r, 1]`
fn geometric_edges(ratio: f64, levels: usize) -> Vec<f64> {
    let mut e = vec![0.0];
    for k in (1..=levels).rev() {
        e.push(ratio.powi(k as i32));
    }
    e.push(1.0);
    e
}

/// A partition of `[a, b]` into panels, each carrying the 8 Gauss–Legendre nodes.
#[derive(Debug, Clone)]
pub struct Grid {
    a: f64,
    b: f64,
    segments: Vec<Segment>,
    panels: Vec<PanelMap>,
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    /// Contiguous segments, left to right.
    pub fn from_segments(segments: Vec<Segment>) -> Result<Self> {
        let first = segments
            .first()
            .ok_or_else(|| Error::Config("grid needs at least one segment".into()))?;
        let a = first.a;
        let mut b = a;
        let mut panels = Vec::new();
        for s in &segments {
            if !(s.b > s.a) || (s.a - b).abs() > 1e-12 * (1.0 + b.abs()) {
                return Err(Error::Config(format!(
                    "grid segments must be increasing and contiguous, got [{}, {}] after {}",
                    s.a, s.b, b
                )));
            }
            if let Grading::PowerLawTowardA { gamma } = s.grading {
                if !(gamma > 0.0 && gamma <= 1.0) {
                    return Err(Error::NonIntegrable {
                        exponent: gamma - 1.0,
                    });
                }
            }
            s.panel_maps(s.a - a, &mut panels);
            b = s.b;
        }
        let r = rule();
        let mut offsets = Vec::with_capacity(panels.len() * RULE_POINTS);
        let mut weights = Vec::with_capacity(panels.len() * RULE_POINTS);
        for p in &panels {
            for j in 0..RULE_POINTS {
                let (d, dd) = p.eval(r.nodes[j]);
                offsets.push(d);
                weights.push(r.weights[j] * dd);
            }
        }
        Ok(Self {
            a,
            b,
            segments,
            panels,
            offsets,
            weights,
        })
    }

    pub fn new(a: f64, b: f64, grading: Grading, panels: usize) -> Result<Self> {
        Self::from_segments(vec![Segment {
            a,
            b,
            grading,
            panels,
        }])
    }

    /// Same layout with every panel count doubled.
    pub fn refined(&self) -> Self {
        let segments = self
            .segments
            .iter()
            .map(|s| Segment {
                panels: s.panels.max(1) * 2,
                ..*s
            })
            .collect();
        Self::from_segments(segments).expect("refining a valid grid")
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }

    /// Panel edges, `a` first and `b` last.
    pub fn edges(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.panels.iter().map(|p| self.a + p.bounds().0).collect();
        e.push(self.b);
        e
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Quadrature node positions.
    pub fn nodes(&self) -> Vec<f64> {
        self.offsets.iter().map(|d| self.a + d).collect()
    }

    /// Node distances from `a`.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Quadrature weights (reference weight times Jacobian).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Panel containing offset `d` and the reference coordinate of `d` in it.
    fn locate(&self, d: f64) -> (usize, f64) {
        let idx = self
            .panels
            .partition_point(|p| p.bounds().1 < d)
            .min(self.panels.len() - 1);
        let t = self.panels[idx].inverse(d).clamp(-1.0, 1.0);
        (idx, t)
    }
}

/// Values of a function at the nodes of a [`Grid`], as `values[i] * 2^exponent_offset`.
#[derive(Debug, Clone)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
    exponent_offset: i64,
}

impl GridFunction {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
            exponent_offset: 0,
        }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        Self::normalized(grid, vec![c; n], 0)
    }

    /// Samples `f(x, x - a)`.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid.offsets.iter().map(|&d| f(grid.a + d, d)).collect();
        Self::normalized(grid, values, 0)
    }

    /// Samples a positive function given by its natural log, `ln_f(x, x - a)`.
    pub fn from_ln_fn(grid: Arc<Grid>, ln_f: impl Fn(f64, f64) -> f64) -> Self {
        let logs: Vec<f64> = grid.offsets.iter().map(|&d| ln_f(grid.a + d, d)).collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Self::zeros(grid);
        }
        let top = ScaledReal::from_ln(max);
        let shift = top.exp2();
        let base = shift as f64 * std::f64::consts::LN_2;
        let values = logs.iter().map(|l| (l - base).exp()).collect();
        Self::normalized(grid, values, shift)
    }

    fn normalized(grid: Arc<Grid>, mut values: Vec<f64>, mut exponent_offset: i64) -> Self {
        let max = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max > 0.0 && max.is_finite() {
            let (_, e) = crate::scaled::frexp(max);
            // frexp gives [1,2) mantissas, so dividing by 2^e lands max in [1,2)
            if e != 0 {
                let f = crate::scaled::ldexp(1.0, -e);
                for v in values.iter_mut() {
                    *v *= f;
                }
                exponent_offset += e;
            }
        } else if max == 0.0 {
            exponent_offset = 0;
        }
        Self {
            grid,
            values,
            exponent_offset,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Normalized node values; multiply by `2^exponent_offset`.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn exponent_offset(&self) -> i64 {
        self.exponent_offset
    }

    pub fn value(&self, i: usize) -> ScaledReal {
        ScaledReal::new(self.values[i], self.exponent_offset)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Pointwise product.
    pub fn mul(&self, other: &GridFunction) -> GridFunction {
        debug_assert!(Arc::ptr_eq(&self.grid, &other.grid));
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Self::normalized(
            self.grid.clone(),
            values,
            self.exponent_offset + other.exponent_offset,
        )
    }

    pub fn scale(&self, c: ScaledReal) -> GridFunction {
        let values = self.values.iter().map(|v| v * c.mantissa()).collect();
        Self::normalized(self.grid.clone(), values, self.exponent_offset + c.exp2())
    }

    /// Pointwise `self + c`.
    pub fn add_constant(&self, c: ScaledReal) -> GridFunction {
        let e = self.exponent_offset.max(c.exp2());
        let f = crate::scaled::ldexp(1.0, self.exponent_offset - e);
        let cv = crate::scaled::ldexp(c.mantissa(), c.exp2() - e);
        let values = self.values.iter().map(|v| v * f + cv).collect();
        Self::normalized(self.grid.clone(), values, e)
    }

    /// Pointwise linear combination `self + c * other`.
    pub fn add_scaled(&self, other: &GridFunction, c: ScaledReal) -> GridFunction {
        let o = other.scale(c);
        let e = self.exponent_offset.max(o.exponent_offset);
        let fs = crate::scaled::ldexp(1.0, self.exponent_offset - e);
        let fo = crate::scaled::ldexp(1.0, o.exponent_offset - e);
        let values = self
            .values
            .iter()
            .zip(&o.values)
            .map(|(a, b)| a * fs + b * fo)
            .collect();
        Self::normalized(self.grid.clone(), values, e)
    }

    fn panel_sums(&self) -> Vec<ScaledReal> {
        self.values
            .chunks(RULE_POINTS)
            .zip(self.grid.weights.chunks(RULE_POINTS))
            .map(|(v, w)| {
                let s: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                ScaledReal::new(s, self.exponent_offset)
            })
            .collect()
    }

    /// `∫_a^b f`.
    pub fn integral(&self) -> ScaledReal {
        pairwise_sum(&self.panel_sums())
    }

    /// `∫_x^y f` for `a <= x <= y <= b`, interpolating inside partial panels.
    pub fn integral_between(&self, x: f64, y: f64) -> ScaledReal {
        self.integral_between_offsets(x - self.grid.a, y - self.grid.a)
    }

    /// As [`integral_between`](Self::integral_between) with endpoints given as offsets from `a`.
    pub fn integral_between_offsets(&self, dx: f64, dy: f64) -> ScaledReal {
        let g = &self.grid;
        let span = g.b - g.a;
        let dx = dx.clamp(0.0, span);
        let dy = dy.clamp(0.0, span);
        if dy <= dx {
            return ScaledReal::ZERO;
        }
        let (px, tx) = g.locate(dx);
        let (py, ty) = g.locate(dy);
        let r = rule();
        let panel_partial = |p: usize, t: f64| -> f64 {
            let q = partial_weights_with(r, t);
            let (_, dd) = g.panels[p].eval(0.0);
            let base = p * RULE_POINTS;
            match g.panels[p] {
                PanelMap::Affine { .. } => (0..RULE_POINTS)
                    .map(|j| q[j] * dd * self.values[base + j])
                    .sum(),
                PanelMap::Power { .. } => (0..RULE_POINTS)
                    .map(|j| {
                        let w = g.weights[base + j] / r.weights[j];
                        q[j] * w * self.values[base + j]
                    })
                    .sum(),
            }
        };
        let sums = self.panel_sums();
        let scale = |v: f64| ScaledReal::new(v, self.exponent_offset);
        if px == py {
            return scale(panel_partial(px, ty) - panel_partial(px, tx));
        }
        let head = sums[px] - scale(panel_partial(px, tx));
        let mid = pairwise_sum(&sums[px + 1..py]);
        let tail = scale(panel_partial(py, ty));
        head + mid + tail
    }

    /// Interpolated value at `x` (degree-7 interpolant of the containing panel).
    pub fn interpolate(&self, x: f64) -> ScaledReal {
        let (p, t) = self.grid.locate(x - self.grid.a);
        let l = lagrange_weights(rule(), t);
        let base = p * RULE_POINTS;
        let v: f64 = (0..RULE_POINTS).map(|j| l[j] * self.values[base + j]).sum();
        ScaledReal::new(v, self.exponent_offset)
    }

    /// `F(z) = ∫_a^z f` at every node.
    pub fn cumulative_integral(&self) -> GridFunction {
        let r = rule();
        let g = &self.grid;
        let mut out = vec![0.0; self.values.len()];
        let mut carry = 0.0;
        for p in 0..g.panels.len() {
            let base = p * RULE_POINTS;
            let jac: Vec<f64> = (0..RULE_POINTS)
                .map(|j| g.weights[base + j] / r.weights[j])
                .collect();
            for i in 0..RULE_POINTS {
                let mut s = 0.0;
                for j in 0..RULE_POINTS {
                    s += r.partial[i][j] * jac[j] * self.values[base + j];
                }
                out[base + i] = carry + s;
            }
            carry += (0..RULE_POINTS)
                .map(|j| g.weights[base + j] * self.values[base + j])
                .sum::<f64>();
        }
        Self::normalized(g.clone(), out, self.exponent_offset)
    }

    /// `G(z) = ∫_z^b f` at every node, accumulated from the right.
    pub fn cumulative_integral_from_right(&self) -> GridFunction {
        let r = rule();
        let g = &self.grid;
        let mut out = vec![0.0; self.values.len()];
        let mut carry = 0.0;
        for p in (0..g.panels.len()).rev() {
            let base = p * RULE_POINTS;
            let jac: Vec<f64> = (0..RULE_POINTS)
                .map(|j| g.weights[base + j] / r.weights[j])
                .collect();
            for i in 0..RULE_POINTS {
                let mut s = 0.0;
                for j in 0..RULE_POINTS {
                    s += (r.weights[j] - r.partial[i][j]) * jac[j] * self.values[base + j];
                }
                out[base + i] = carry + s;
            }
            carry += (0..RULE_POINTS)
                .map(|j| g.weights[base + j] * self.values[base + j])
                .sum::<f64>();
        }
        Self::normalized(g.clone(), out, self.exponent_offset)
    }
}

/// Free-function form of [`GridFunction::cumulative_integral`].
pub fn cumulative_integral(f: &GridFunction) -> GridFunction {
    f.cumulative_integral()
}

fn check_interval(a: f64, b: f64, tol: f64, singularity: Option<f64>) -> Result<()> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Domain {
            what: "integration interval end",
            value: b,
            lower: a,
            upper: f64::INFINITY,
        });
    }
    if !(tol > 0.0) {
        return Err(crate::error::invalid("tol", tol, "must be positive"));
    }
    if let Some(e) = singularity {
        if e <= -1.0 {
            return Err(Error::NonIntegrable { exponent: e });
        }
    }
    Ok(())
}

fn base_grid(a: f64, b: f64, singularity: Option<f64>) -> Grid {
    let grading = match singularity {
        Some(e) if e < 0.0 => Grading::PowerLawTowardA { gamma: e + 1.0 },
        _ => Grading::Uniform,
    };
    Grid::new(a, b, grading, 1).expect("validated interval")
}

/// `∫_a^b f`, refining by panel doubling until two successive levels agree to
/// `tol / 2` (relative). `singularity_exponent` is the exponent `e` in
/// `f(x) ~ (x - a)^e`; when negative the substitution
/// `x = a + (b - a) v^(1/(e+1))` is applied.
pub fn integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    singularity_exponent: Option<f64>,
    tol: f64,
) -> Result<f64> {
    integrate_offset(|d| f(a + d), a, b, singularity_exponent, tol)
}

/// As [`integrate`], with the integrand receiving `x - a` instead of `x`.
pub fn integrate_offset(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    singularity_exponent: Option<f64>,
    tol: f64,
) -> Result<f64> {
    check_interval(a, b, tol, singularity_exponent)?;
    let mut grid = base_grid(a, b, singularity_exponent);
    let eval = |g: &Grid| -> f64 {
        let sums: Vec<ScaledReal> = g
            .offsets
            .chunks(RULE_POINTS)
            .zip(g.weights.chunks(RULE_POINTS))
            .map(|(d, w)| ScaledReal::from_f64(d.iter().zip(w).map(|(&d, &w)| w * f(d)).sum()))
            .collect();
        pairwise_sum(&sums).to_f64_lossy()
    };
    let mut prev = eval(&grid);
    let mut last_change = f64::INFINITY;
    for _ in 0..MAX_DOUBLINGS {
        grid = grid.refined();
        let cur = eval(&grid);
        let change = (cur - prev).abs();
        let scale = cur.abs().max(prev.abs());
        if change <= 0.5 * tol * scale || (scale == 0.0 && change == 0.0) {
            return Ok(cur);
        }
        last_change = if scale > 0.0 { change / scale } else { change };
        prev = cur;
    }
    Err(Error::ToleranceNotMet {
        tol,
        doublings: MAX_DOUBLINGS,
        last_change,
    })
}

/// `∫_a^b exp(ln_f)` for a positive integrand given in log form, accumulated
/// with a per-panel exponent so that results far outside the `f64` range keep
/// full relative accuracy. `ln_f` receives `x - a`.
pub fn integrate_ln(
    ln_f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    singularity_exponent: Option<f64>,
    tol: f64,
) -> Result<ScaledReal> {
    check_interval(a, b, tol, singularity_exponent)?;
    let mut grid = base_grid(a, b, singularity_exponent);
    let eval = |g: &Grid| -> ScaledReal {
        let sums: Vec<ScaledReal> = g
            .offsets
            .chunks(RULE_POINTS)
            .zip(g.weights.chunks(RULE_POINTS))
            .map(|(d, w)| {
                let logs: Vec<f64> = d.iter().map(|&d| ln_f(d)).collect();
                let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if m == f64::NEG_INFINITY {
                    return ScaledReal::ZERO;
                }
                let s: f64 = logs.iter().zip(w).map(|(l, w)| w * (l - m).exp()).sum();
                ScaledReal::from_f64(s) * ScaledReal::from_ln(m)
            })
            .collect();
        pairwise_sum(&sums)
    };
    let mut prev = eval(&grid);
    let mut last_change = f64::INFINITY;
    for _ in 0..MAX_DOUBLINGS {
        grid = grid.refined();
        let cur = eval(&grid);
        let change = ScaledReal::rel_diff(cur, prev);
        if change <= 0.5 * tol {
            return Ok(cur);
        }
        last_change = change;
        prev = cur;
    }
    Err(Error::ToleranceNotMet {
        tol,
        doublings: MAX_DOUBLINGS,
        last_change,
    })
}
