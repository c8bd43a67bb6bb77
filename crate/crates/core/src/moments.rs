//! First-passage (FPT), elastic first-exit (FET) and refractoriness moments.
//!
//! With `r = beta/alpha` and `C_n(z) = ∫_{r1}^z k(u) f_{n-1}(u) du`:
//!
//! ```text
//! t_n(x)   = n ∫_x^S h(z) C_n(z) dz                        (f = t,  t_0 = 1)
//! t̂_n(x)  = n { ∫_x^S h(z) Ĉ_n(z) dz + r Ĉ_n(S) }         (f = t̂, t̂_0 = 1)
//! E(Tr^n)  = n r Ĉ_n(S)
//! ```
//!
//! Each level stores the previous profile on a [`Grid`] and costs one forward
//! and one backward cumulative integral. Results are refined by doubling every
//! panel count until two levels agree to the requested tolerance.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::diffusion::{DiffusionSpec, ElasticThreshold};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{Grading, Grid, GridFunction, Segment};
use crate::scaled::ScaledReal;

/// Highest order with published reference values; higher orders are computed
/// but unvalidated.
pub const MAX_VALIDATED_ORDER: usize = 4;
/// Refinement levels tried before giving up.
pub const MAX_LEVELS: u32 = 12;
/// Offset below `S` used for the `t̂_n(S-ε) → E(Tr^n)` check, relative to `S - r1`.
pub const LIMIT_EPSILON: f64 = 1e-6;

const GEOMETRIC_RATIO: f64 = 0.15;
const GEOMETRIC_LEVELS: usize = 12;
const BASE_PANELS: f64 = 4.0;

/// All first- and second-order quantities at one starting point, with the
/// residuals of the identities that tie them together.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSummary {
    pub t1: f64,
    pub t2: f64,
    pub fpt_variance: f64,
    pub fet_t1: f64,
    pub fet_t2: f64,
    pub fet_variance: f64,
    pub refractory_mean: f64,
    pub refractory_second: f64,
    pub refractory_variance: f64,
    /// Relative residuals, each normalized by the larger operand.
    pub identity_residuals: BTreeMap<String, f64>,
}

impl MomentSummary {
    pub fn max_residual(&self) -> f64 {
        self.identity_residuals.values().cloned().fold(0.0, f64::max)
    }
}

/// Which binomial-sum relation expresses `t̂_n` through FPT moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `t_{n-1-j}(x) ∫ k t̂_j`
    FptAtPoint,
    /// `t̂_j(x) ∫ k t_{n-1-j}`
    FetAtPoint,
}

impl TryFrom<u8> for Relation {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Relation::FptAtPoint),
            2 => Ok(Relation::FetAtPoint),
            _ => Err(invalid("variant", v as f64, "must be 1 or 2")),
        }
    }
}

fn check_spec(spec: &DiffusionSpec, s: f64, tol: f64) -> Result<()> {
    let class = spec.classify_lower_boundary();
    if !class.supports_moments() {
        return Err(Error::InvalidBoundary(class.to_string()));
    }
    if !(tol > 0.0) {
        return Err(invalid("tol", tol, "must be positive"));
    }
    let lo = spec.effective_lower();
    if !(s > lo && s < spec.upper()) {
        return Err(Error::Domain {
            what: "S",
            value: s,
            lower: lo,
            upper: spec.upper(),
        });
    }
    Ok(())
}

fn check_start(spec: &DiffusionSpec, s: f64, x: f64) -> Result<()> {
    let lo = spec.effective_lower();
    if !(x >= lo && x <= s) {
        return Err(Error::Domain {
            what: "x",
            value: x,
            lower: lo,
            upper: s,
        });
    }
    Ok(())
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Profiles and measures of one diffusion on one grid over `[r1, S]`.
#[derive(Debug, Clone)]
pub struct MomentGrid {
    s: f64,
    grid: Arc<Grid>,
    h: GridFunction,
    k: GridFunction,
}

impl MomentGrid {
    /// Builds the grid at refinement `level`, with `points` inserted as panel edges.
    pub fn build(spec: &DiffusionSpec, s: f64, points: &[f64], level: u32) -> Result<Self> {
        let lo = spec.effective_lower();
        let mut cuts: Vec<f64> = points
            .iter()
            .cloned()
            .chain(spec.mode_hint())
            .filter(|p| *p > lo && *p < s)
            .collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (s - lo));
        let mut edges = vec![lo];
        edges.extend(cuts);
        edges.push(s);

        let total = s - lo;
        let mult = 1usize << level;
        let first_grading = match spec.lower_speed_exponent() {
            Some(e) if e <= -1.0 => return Err(Error::NonIntegrable { exponent: e }),
            Some(e) if e < 0.0 => Some(Grading::PowerLawTowardA { gamma: e + 1.0 }),
            Some(_) => Some(Grading::GeometricTowardA {
                ratio: GEOMETRIC_RATIO,
                levels: GEOMETRIC_LEVELS,
            }),
            None => None,
        };
        let segments = edges
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let share = ((BASE_PANELS * (w[1] - w[0]) / total).ceil() as usize).max(1);
                match (i, first_grading) {
                    (0, Some(grading)) => Segment {
                        a: w[0],
                        b: w[1],
                        grading,
                        panels: mult,
                    },
                    _ => Segment::uniform(w[0], w[1], share * mult),
                }
            })
            .collect();
        let grid = Arc::new(Grid::from_segments(segments)?);
        let shift = lo - spec.lower();
        let h = GridFunction::from_ln_fn(grid.clone(), |x, d| spec.ln_scale_at(x, shift + d));
        let k = GridFunction::from_ln_fn(grid.clone(), |x, d| spec.ln_speed_at(x, shift + d));
        if !h.is_finite() || !k.is_finite() {
            return Err(Error::Singularity { at: lo });
        }
        Ok(Self { s, grid, h, k })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn scale(&self) -> &GridFunction {
        &self.h
    }

    pub fn speed(&self) -> &GridFunction {
        &self.k
    }

    /// `K(r1, S]`.
    pub fn speed_measure(&self) -> ScaledReal {
        self.k.integral()
    }

    fn one(&self) -> GridFunction {
        GridFunction::constant(self.grid.clone(), 1.0)
    }

    /// `∫_{r1}^S k f`.
    pub fn speed_integral(&self, f: &GridFunction) -> ScaledReal {
        self.k.mul(f).integral()
    }

    /// `h(z) ∫_{r1}^z k f` at every node.
    fn outer_integrand(&self, prev: &GridFunction) -> GridFunction {
        self.h.mul(&self.k.mul(prev).cumulative_integral())
    }

    /// `t_1 ... t_n` (index 0 holds `t_0 = 1`).
    pub fn fpt_profiles(&self, n: usize) -> Vec<GridFunction> {
        let mut out = vec![self.one()];
        for m in 1..=n {
            let g = self.outer_integrand(&out[m - 1]);
            out.push(g.cumulative_integral_from_right().scale(ScaledReal::from_f64(m as f64)));
        }
        out
    }

    /// `t_n(x)` from `t_{n-1}` on the grid.
    pub fn fpt_at(&self, prev: &GridFunction, n: usize, x: f64) -> ScaledReal {
        if x >= self.s {
            return ScaledReal::ZERO;
        }
        self.outer_integrand(prev)
            .integral_between(x, self.s)
            .scale(n as f64)
    }

    /// `t̂_1 ... t̂_n` for `r = beta/alpha`.
    pub fn fet_profiles(&self, ratio: f64, n: usize) -> Vec<GridFunction> {
        let r = ScaledReal::from_f64(ratio);
        let mut out = vec![self.one()];
        for m in 1..=n {
            let inner = self.k.mul(&out[m - 1]).cumulative_integral();
            let tail = self.h.mul(&inner).cumulative_integral_from_right();
            let at_s = self.speed_integral(&out[m - 1]);
            out.push(tail.add_constant(r * at_s).scale(ScaledReal::from_f64(m as f64)));
        }
        out
    }

    /// `t̂_n(x)` from `t̂_{n-1}` on the grid.
    pub fn fet_at(&self, prev: &GridFunction, ratio: f64, n: usize, x: f64) -> ScaledReal {
        let r = ScaledReal::from_f64(ratio);
        let tail = if x >= self.s {
            ScaledReal::ZERO
        } else {
            self.outer_integrand(prev).integral_between(x, self.s)
        };
        (tail + r * self.speed_integral(prev)).scale(n as f64)
    }

    /// `E(Tr^n) = n r ∫ k t̂_{n-1}`.
    pub fn refractory_from(&self, fet_prev: &GridFunction, ratio: f64, n: usize) -> ScaledReal {
        self.speed_integral(fet_prev).scale(n as f64 * ratio)
    }

    /// `t̂_n(x)` through the binomial relation with FPT moments.
    pub fn fet_via_relation(&self, ratio: f64, x: f64, n: usize, relation: Relation) -> ScaledReal {
        let r = ScaledReal::from_f64(ratio);
        let fpt = self.fpt_profiles(n);
        let fpt_at: Vec<ScaledReal> = (0..=n)
            .map(|m| {
                if m == 0 {
                    ScaledReal::ONE
                } else {
                    self.fpt_at(&fpt[m - 1], m, x)
                }
            })
            .collect();
        match relation {
            Relation::FptAtPoint => {
                // FET profiles rebuilt from the relation itself, node by node
                let mut fet: Vec<GridFunction> = vec![self.one()];
                let mut fet_int: Vec<ScaledReal> = vec![self.speed_integral(&fet[0])];
                for m in 1..n {
                    let mut prof = fpt[m].clone();
                    for j in 0..m {
                        let c = r * fet_int[j].scale(m as f64 * binomial(m - 1, j));
                        prof = prof.add_scaled(&fpt[m - 1 - j], c);
                    }
                    fet_int.push(self.speed_integral(&prof));
                    fet.push(prof);
                }
                let mut acc = fpt_at[n];
                for j in 0..n {
                    acc = acc + r * fpt_at[n - 1 - j] * fet_int[j].scale(n as f64 * binomial(n - 1, j));
                }
                acc
            }
            Relation::FetAtPoint => {
                let fpt_int: Vec<ScaledReal> = fpt.iter().map(|f| self.speed_integral(f)).collect();
                let mut fet_at = vec![ScaledReal::ONE];
                for m in 1..=n {
                    let mut acc = fpt_at[m];
                    for j in 0..m {
                        acc = acc + r * fet_at[j] * fpt_int[m - 1 - j].scale(m as f64 * binomial(m - 1, j));
                    }
                    fet_at.push(acc);
                }
                fet_at[n]
            }
        }
    }
}

/// Runs `f` on successively refined grids until all returned values agree to
/// `tol` between two levels.
fn converge<T, F>(spec: &DiffusionSpec, s: f64, points: &[f64], tol: f64, f: F) -> Result<T>
where
    F: Fn(&MomentGrid) -> Result<(T, Vec<ScaledReal>)>,
{
    let mut prev: Option<Vec<ScaledReal>> = None;
    let mut last_change = f64::INFINITY;
    for level in 0..=MAX_LEVELS {
        let g = MomentGrid::build(spec, s, points, level)?;
        let (out, keys) = f(&g)?;
        if let Some(p) = &prev {
            let change = p
                .iter()
                .zip(&keys)
                .map(|(a, b)| ScaledReal::rel_diff(*a, *b))
                .fold(0.0, f64::max);
            if change <= 0.5 * tol {
                return Ok(out);
            }
            last_change = change;
        }
        prev = Some(keys);
    }
    Err(Error::ToleranceNotMet {
        tol,
        doublings: MAX_LEVELS,
        last_change,
    })
}

fn finite(v: ScaledReal) -> Result<f64> {
    v.to_f64()
}

/// The profile `x ↦ t_n(S|x)` on a converged grid over `[r1, S]`.
pub fn fpt_moment_profile(spec: &DiffusionSpec, s: f64, n: usize, tol: f64) -> Result<GridFunction> {
    check_spec(spec, s, tol)?;
    let lo = spec.effective_lower();
    converge(spec, s, &[], tol, |g| {
        let prof = g.fpt_profiles(n).pop().expect("order 0 present");
        let keys = vec![prof.integral(), prof.interpolate(lo), prof.interpolate(0.5 * (lo + s))];
        Ok((prof, keys))
    })
}

/// `t_n(S|x)`.
pub fn fpt_moment(spec: &DiffusionSpec, s: f64, x: f64, n: usize, tol: f64) -> Result<f64> {
    check_spec(spec, s, tol)?;
    check_start(spec, s, x)?;
    if n == 0 {
        return Ok(1.0);
    }
    if x == s {
        return Ok(0.0);
    }
    converge(spec, s, &[x], tol, |g| {
        let p = g.fpt_profiles(n - 1);
        let v = g.fpt_at(&p[n - 1], n, x);
        Ok((v, vec![v]))
    })
    .and_then(finite)
}

/// `V(S|x) = t_2 - t_1^2`.
pub fn fpt_variance(spec: &DiffusionSpec, s: f64, x: f64, tol: f64) -> Result<f64> {
    check_spec(spec, s, tol)?;
    check_start(spec, s, x)?;
    if x == s {
        return Ok(0.0);
    }
    converge(spec, s, &[x], tol, |g| {
        let p = g.fpt_profiles(1);
        let t1 = g.fpt_at(&p[0], 1, x);
        let t2 = g.fpt_at(&p[1], 2, x);
        let v = t2 - t1 * t1;
        Ok((v, vec![t1, t2, v]))
    })
    .and_then(finite)
}

/// `t̂_n(S|x)` by the direct FET recursion. At `x = S` this is the limit `E(Tr^n)`.
pub fn fet_moment(spec: &DiffusionSpec, threshold: &ElasticThreshold, x: f64, n: usize, tol: f64) -> Result<f64> {
    threshold.validate(spec)?;
    check_spec(spec, threshold.s, tol)?;
    check_start(spec, threshold.s, x)?;
    if n == 0 {
        return Ok(1.0);
    }
    let r = threshold.ratio();
    converge(spec, threshold.s, &[x], tol, |g| {
        let p = g.fet_profiles(r, n - 1);
        let v = g.fet_at(&p[n - 1], r, n, x);
        Ok((v, vec![v]))
    })
    .and_then(finite)
}

/// `t̂_n(S|x)` through one of the two binomial relations with FPT moments.
pub fn fet_moment_via_relation(
    spec: &DiffusionSpec,
    threshold: &ElasticThreshold,
    x: f64,
    n: usize,
    tol: f64,
    relation: Relation,
) -> Result<f64> {
    threshold.validate(spec)?;
    check_spec(spec, threshold.s, tol)?;
    check_start(spec, threshold.s, x)?;
    if n == 0 {
        return Ok(1.0);
    }
    let r = threshold.ratio();
    converge(spec, threshold.s, &[x], tol, |g| {
        let v = g.fet_via_relation(r, x, n, relation);
        Ok((v, vec![v]))
    })
    .and_then(finite)
}

/// `E(Tr^n) = n (beta/alpha) ∫_{r1}^S k t̂_{n-1}`.
pub fn refractory_moment(spec: &DiffusionSpec, threshold: &ElasticThreshold, n: usize, tol: f64) -> Result<f64> {
    threshold.validate(spec)?;
    check_spec(spec, threshold.s, tol)?;
    if n == 0 {
        return Ok(1.0);
    }
    let r = threshold.ratio();
    if r == 0.0 {
        return Ok(0.0);
    }
    converge(spec, threshold.s, &[], tol, |g| {
        let p = g.fet_profiles(r, n - 1);
        let v = g.refractory_from(&p[n - 1], r, n);
        Ok((v, vec![v]))
    })
    .and_then(finite)
}

/// `V(Tr) = 2 r ∫ k t_1 + (r K(r1,S])^2`.
pub fn refractory_variance(spec: &DiffusionSpec, threshold: &ElasticThreshold, tol: f64) -> Result<f64> {
    threshold.validate(spec)?;
    check_spec(spec, threshold.s, tol)?;
    let r = threshold.ratio();
    if r == 0.0 {
        return Ok(0.0);
    }
    converge(spec, threshold.s, &[], tol, |g| {
        let (k_total, c1) = first_two_speed_integrals(g);
        let mean = k_total.scale(r);
        let v = c1.scale(2.0 * r) + mean * mean;
        Ok((v, vec![k_total, c1]))
    })
    .and_then(finite)
}

/// `(K(r1,S], ∫ k t_1)`.
fn first_two_speed_integrals(g: &MomentGrid) -> (ScaledReal, ScaledReal) {
    let p = g.fpt_profiles(1);
    (g.speed_measure(), g.speed_integral(&p[1]))
}

/// FPT/refractoriness quantities shared by every reflecting probability at one
/// starting point; `E(Tr)` and `V(Tr)` follow for any `beta/alpha` without
/// further quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FptBasis {
    pub t1: f64,
    pub t2: f64,
    /// `K(r1, S]`.
    pub speed_measure: f64,
    /// `∫_{r1}^S k t_1`.
    pub speed_t1: f64,
}

impl FptBasis {
    pub fn fpt_variance(&self) -> f64 {
        self.t2 - self.t1 * self.t1
    }

    pub fn refractory_mean(&self, ratio: f64) -> f64 {
        ratio * self.speed_measure
    }

    pub fn refractory_variance(&self, ratio: f64) -> f64 {
        let m = ratio * self.speed_measure;
        2.0 * ratio * self.speed_t1 + m * m
    }
}

pub fn fpt_basis(spec: &DiffusionSpec, s: f64, x: f64, tol: f64) -> Result<FptBasis> {
    check_spec(spec, s, tol)?;
    check_start(spec, s, x)?;
    let v = converge(spec, s, &[x], tol, |g| {
        let p = g.fpt_profiles(1);
        let t1 = g.fpt_at(&p[0], 1, x);
        let t2 = g.fpt_at(&p[1], 2, x);
        let (k, c1) = (g.speed_measure(), g.speed_integral(&p[1]));
        let keys = vec![t1, t2, t2 - t1 * t1, k, c1];
        Ok(([t1, t2, k, c1], keys))
    })?;
    Ok(FptBasis {
        t1: finite(v[0])?,
        t2: finite(v[1])?,
        speed_measure: finite(v[2])?,
        speed_t1: finite(v[3])?,
    })
}

/// Every first- and second-order quantity at `x`, via the direct recursions,
/// with identity residuals recorded.
pub fn summary(spec: &DiffusionSpec, threshold: &ElasticThreshold, x: f64, tol: f64) -> Result<MomentSummary> {
    threshold.validate(spec)?;
    check_spec(spec, threshold.s, tol)?;
    check_start(spec, threshold.s, x)?;
    let s = threshold.s;
    let r = threshold.ratio();
    let vals = converge(spec, s, &[x], tol, |g| {
        let fpt = g.fpt_profiles(1);
        let fet = g.fet_profiles(r, 1);
        let t1 = g.fpt_at(&fpt[0], 1, x);
        let t2 = g.fpt_at(&fpt[1], 2, x);
        let f1 = g.fet_at(&fet[0], r, 1, x);
        let f2 = g.fet_at(&fet[1], r, 2, x);
        let e1 = g.refractory_from(&fet[0], r, 1);
        let e2 = g.refractory_from(&fet[1], r, 2);
        let k_total = g.speed_measure();
        let c1 = g.speed_integral(&fpt[1]);
        let out = [t1, t2, f1, f2, e1, e2, k_total, c1];
        Ok((out, out.to_vec()))
    })?;
    let [t1, t2, f1, f2, e1, e2, k_total, c1] = vals;
    let v = t2 - t1 * t1;
    let fv = f2 - f1 * f1;
    let rv = e2 - e1 * e1;
    let rk = k_total.scale(r);
    // V̂ = V + (r K)^2 + 2 r ∫ k t_1
    let fv_route = v + rk * rk + c1.scale(2.0 * r);

    let mut residuals = BTreeMap::new();
    residuals.insert("fet_mean_sum".to_string(), ScaledReal::rel_diff(f1, t1 + e1));
    residuals.insert("fet_variance_sum".to_string(), ScaledReal::rel_diff(fv, v + rv));
    residuals.insert("fet_variance_route".to_string(), ScaledReal::rel_diff(fv_route, fv));
    Ok(MomentSummary {
        t1: finite(t1)?,
        t2: finite(t2)?,
        fpt_variance: finite(v)?,
        fet_t1: finite(f1)?,
        fet_t2: finite(f2)?,
        fet_variance: finite(fv)?,
        refractory_mean: finite(e1)?,
        refractory_second: finite(e2)?,
        refractory_variance: finite(rv)?,
        identity_residuals: residuals,
    })
}
