//! Wiener, Ornstein–Uhlenbeck and Feller neuronal models restricted to
//! `[nu, +inf)`, with their closed-form and series first-passage means.

use crate::diffusion::{BoundaryClass, DiffusionSpec, ModelKind};
use crate::error::{invalid, Error, Result};

/// Relative truncation tolerance for the series means.
pub const DEFAULT_SERIES_TOL: f64 = 1e-12;
/// Hard cap on series terms.
pub const SERIES_TERM_CAP: usize = 10_000;
/// Consecutive small terms required before a series is accepted.
const SMALL_TERMS_TO_STOP: usize = 3;

/// `A1 = mu`, `A2 = sigma2`, reflecting at `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WienerParams {
    pub mu: f64,
    pub sigma2: f64,
    pub nu: f64,
}

impl WienerParams {
    pub fn new(mu: f64, sigma2: f64, nu: f64) -> Result<Self> {
        if !(sigma2 > 0.0) {
            return Err(invalid("sigma2", sigma2, "must be positive"));
        }
        if !mu.is_finite() || !nu.is_finite() {
            return Err(invalid("mu/nu", if mu.is_finite() { nu } else { mu }, "must be finite"));
        }
        Ok(Self { mu, sigma2, nu })
    }

    pub fn spec(&self) -> DiffusionSpec {
        DiffusionSpec::from_model(ModelKind::Wiener(*self), self.nu, BoundaryClass::Reflecting)
    }
}

/// `A1 = -(x - rho)/theta`, `A2 = sigma2`, reflecting at `nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub theta: f64,
    pub rho: f64,
    pub sigma2: f64,
    pub nu: f64,
}

impl OuParams {
    pub fn new(theta: f64, rho: f64, sigma2: f64, nu: f64) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(invalid("theta", theta, "must be positive"));
        }
        if !(sigma2 > 0.0) {
            return Err(invalid("sigma2", sigma2, "must be positive"));
        }
        Ok(Self {
            theta,
            rho,
            sigma2,
            nu,
        })
    }

    pub fn spec(&self) -> DiffusionSpec {
        DiffusionSpec::from_model(ModelKind::Ou(*self), self.nu, BoundaryClass::Reflecting)
    }
}

/// `A1 = -(x - rho)/theta`, `A2 = 2 xi (x - nu)`, on `[nu, +inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FellerParams {
    pub theta: f64,
    pub rho: f64,
    pub xi: f64,
    pub nu: f64,
}

impl FellerParams {
    pub fn new(theta: f64, rho: f64, xi: f64, nu: f64) -> Result<Self> {
        if !(theta > 0.0) {
            return Err(invalid("theta", theta, "must be positive"));
        }
        if !(xi > 0.0) {
            return Err(invalid("xi", xi, "must be positive"));
        }
        if !(rho > nu) {
            return Err(invalid("rho", rho, "must exceed nu"));
        }
        Ok(Self { theta, rho, xi, nu })
    }

    /// `(rho - nu) / (theta xi)`; `k(x) ~ (x - nu)^(this - 1)` at `nu`.
    pub fn speed_exponent_plus_one(&self) -> f64 {
        (self.rho - self.nu) / (self.theta * self.xi)
    }

    /// Entrance when `rho - nu >= xi theta`, otherwise regular with reflection imposed.
    pub fn lower_class(&self) -> BoundaryClass {
        if self.rho - self.nu >= self.xi * self.theta {
            BoundaryClass::Entrance
        } else {
            BoundaryClass::Reflecting
        }
    }

    pub fn spec(&self) -> DiffusionSpec {
        DiffusionSpec::from_model(ModelKind::Feller(*self), self.nu, self.lower_class())
    }
}

/// One of the three built-in models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Wiener(WienerParams),
    Ou(OuParams),
    Feller(FellerParams),
}

impl Model {
    pub fn spec(&self) -> DiffusionSpec {
        match self {
            Model::Wiener(p) => p.spec(),
            Model::Ou(p) => p.spec(),
            Model::Feller(p) => p.spec(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Wiener(_) => "wiener",
            Model::Ou(_) => "ou",
            Model::Feller(_) => "feller",
        }
    }

    pub fn nu(&self) -> f64 {
        match self {
            Model::Wiener(p) => p.nu,
            Model::Ou(p) => p.nu,
            Model::Feller(p) => p.nu,
        }
    }

    /// Closed-form or series FPT mean.
    pub fn fpt_mean(&self, s: f64, x: f64) -> Result<f64> {
        match self {
            Model::Wiener(p) => wiener_fpt_mean(p, s, x),
            Model::Ou(p) => ou_fpt_mean(p, s, x, DEFAULT_SERIES_TOL),
            Model::Feller(p) => feller_fpt_mean(p, s, x, DEFAULT_SERIES_TOL),
        }
    }
}

fn check_start(nu: f64, s: f64, x: f64) -> Result<()> {
    if !(x >= nu) {
        return Err(Error::Domain {
            what: "x",
            value: x,
            lower: nu,
            upper: s,
        });
    }
    if x > s {
        return Err(Error::Domain {
            what: "x",
            value: x,
            lower: nu,
            upper: s,
        });
    }
    Ok(())
}

/// Closed-form Wiener FPT mean through `s` from `x`, reflecting at `nu`.
pub fn wiener_fpt_mean(p: &WienerParams, s: f64, x: f64) -> Result<f64> {
    check_start(p.nu, s, x)?;
    if x == s {
        return Ok(0.0);
    }
    let WienerParams { mu, sigma2, nu } = *p;
    if mu == 0.0 {
        return Ok((s - x) * (s + x - 2.0 * nu) / sigma2);
    }
    // e^{-2mu(S-nu)/s2} - e^{-2mu(x-nu)/s2} = e^{-2mu(x-nu)/s2} (e^{-2mu(S-x)/s2} - 1)
    let c = -2.0 * mu / sigma2;
    let bracket = (c * (x - nu)).exp() * (c * (s - x)).exp_m1();
    Ok((s - x) / mu + sigma2 / (2.0 * mu * mu) * bracket)
}

/// Running sum that stops after [`SMALL_TERMS_TO_STOP`] consecutive decreasing
/// terms below `tol` relative to the partial sum.
struct Series {
    sum: f64,
    last: f64,
    small: usize,
    terms: usize,
    tol: f64,
}

impl Series {
    fn new(tol: f64) -> Self {
        Self {
            sum: 0.0,
            last: f64::INFINITY,
            small: 0,
            terms: 0,
            tol,
        }
    }

    /// Adds a term; returns true once converged.
    fn push(&mut self, term: f64) -> Result<bool> {
        self.sum += term;
        self.terms += 1;
        let shrinking = term.abs() <= self.last;
        self.last = term.abs();
        if term == 0.0 || (shrinking && term.abs() <= self.tol * self.sum.abs()) {
            self.small += 1;
        } else {
            self.small = 0;
        }
        if self.small >= SMALL_TERMS_TO_STOP {
            return Ok(true);
        }
        if self.terms >= SERIES_TERM_CAP || !self.sum.is_finite() {
            return Err(Error::SeriesDivergence {
                cap: SERIES_TERM_CAP,
            });
        }
        Ok(false)
    }
}

/// Series FPT mean for the OU model, reflecting at `nu`.
pub fn ou_fpt_mean(p: &OuParams, s: f64, x: f64, series_tol: f64) -> Result<f64> {
    check_start(p.nu, s, x)?;
    if !(series_tol > 0.0) {
        return Err(invalid("series_tol", series_tol, "must be positive"));
    }
    if x == s {
        return Ok(0.0);
    }
    let scale = (p.sigma2 * p.theta).sqrt();
    let a = (s - p.rho) / scale;
    let b = (x - p.rho) / scale;
    let c = (p.nu - p.rho) / scale;

    // Σ 2^k / ((k+1)(2k+1)!!) [a^{2k+2} - b^{2k+2}], each power folded into
    // its coefficient so neither factor overflows on its own
    let mut first = Series::new(series_tol);
    {
        let (mut ta, mut tb) = (a * a, b * b);
        let mut k = 0usize;
        loop {
            let term = (ta - tb) / (k + 1) as f64;
            if first.push(term)? {
                break;
            }
            k += 1;
            let r = 2.0 / (2 * k + 1) as f64;
            ta *= r * a * a;
            tb *= r * b * b;
        }
    }
    // Σ 2^k c^{2k+1} / (2k+1)!!
    let mut second = Series::new(series_tol);
    {
        let mut term = c;
        let mut k = 0usize;
        loop {
            if second.push(term)? {
                break;
            }
            k += 1;
            term *= 2.0 * c * c / (2 * k + 1) as f64;
        }
    }
    // Σ [a^{2k+1} - b^{2k+1}] / ((2k+1) k!)
    let mut third = Series::new(series_tol);
    {
        let (mut ta, mut tb) = (a, b);
        let mut k = 0usize;
        loop {
            let term = (ta - tb) / (2 * k + 1) as f64;
            if third.push(term)? {
                break;
            }
            k += 1;
            ta *= a * a / k as f64;
            tb *= b * b / k as f64;
        }
    }
    Ok(p.theta * first.sum - 2.0 * p.theta * (-c * c).exp() * second.sum * third.sum)
}

/// Series FPT mean for the Feller model.
pub fn feller_fpt_mean(p: &FellerParams, s: f64, x: f64, series_tol: f64) -> Result<f64> {
    check_start(p.nu, s, x)?;
    if !(series_tol > 0.0) {
        return Err(invalid("series_tol", series_tol, "must be positive"));
    }
    if x == s {
        return Ok(0.0);
    }
    let base = (p.rho - p.nu) / p.theta;
    let (ds, dx) = (s - p.nu, x - p.nu);
    let mut series = Series::new(series_tol);
    // running (1/theta)^k d^{k+1} / Π_{i<=k}(base + xi i), for d = S-nu and x-nu
    let (mut cs, mut cx) = (ds, dx);
    let mut k = 0usize;
    loop {
        k += 1;
        let inv = 1.0 / (p.theta * (base + p.xi * k as f64));
        cs *= ds * inv;
        cx *= dx * inv;
        let term = (cs - cx) / (k + 1) as f64;
        if series.push(term)? {
            break;
        }
    }
    Ok(p.theta / (p.rho - p.nu) * ((s - x) + series.sum))
}
