//! Monte Carlo oracles: Euler–Maruyama first-passage sampling, an elastic
//! threshold random walk for first-exit and refractoriness times, and a
//! simulated dead-time counter.
//!
//! Every sample `i` draws from its own ChaCha stream `i` under the run seed,
//! and results are reduced in index order, so output does not depend on the
//! number of worker threads.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

use crate::deadtime::CounterParams;
use crate::diffusion::{DiffusionSpec, ElasticThreshold};
use crate::error::{invalid, Error, Result};
use crate::models::WienerParams;
use crate::moments::fpt_moment;

/// Fraction of paths allowed to hit the time cap.
pub const MAX_CAPPED_FRACTION: f64 = 1e-3;
/// Default time cap as a multiple of the FPT mean.
pub const DEFAULT_CAP_FACTOR: f64 = 1e3;
/// Seed used by the elastic-walk calibration gate.
pub const CALIBRATION_SEED: u64 = 0x5eed_ca11;
/// Bridge crossing probabilities below `exp(BRIDGE_CUTOFF)` are treated as 0.
const BRIDGE_CUTOFF: f64 = -40.0;
/// Stream offset that separates the fine level of a Richardson pair.
const FINE_STREAM_OFFSET: u64 = 1 << 40;

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn pairwise(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let (l, r) = v.split_at(v.len() / 2);
    pairwise(l) + pairwise(r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub n_samples: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub seed: u64,
    /// Discretization and truncation settings (`dt`, `dx`, `q`, ...).
    pub scheme: BTreeMap<String, f64>,
}

impl SampleStats {
    pub fn from_samples(samples: &[f64], seed: u64, scheme: BTreeMap<String, f64>) -> Self {
        let n = samples.len();
        let mean = if n == 0 { 0.0 } else { pairwise(samples) / n as f64 };
        let variance = if n < 2 {
            0.0
        } else {
            let dev: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
            pairwise(&dev) / (n - 1) as f64
        };
        Self {
            n_samples: n,
            mean,
            variance,
            std_error: if n == 0 { 0.0 } else { (variance / n as f64).sqrt() },
            seed,
            scheme,
        }
    }

    /// `(mean - target) / std_error`.
    pub fn z_score(&self, target: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.mean == target {
                0.0
            } else {
                f64::INFINITY.copysign(self.mean - target)
            }
        } else {
            (self.mean - target) / self.std_error
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FptOptions {
    /// Count a step as crossing with the Brownian-bridge probability
    /// `exp(-2 (S - x0)(S - x1) / (A2 dt))` when both ends lie below `S`.
    pub bridge: bool,
    /// Paths still running at this time are stopped; `None` uses
    /// `DEFAULT_CAP_FACTOR` times the recursion mean.
    pub time_cap: Option<f64>,
}

impl Default for FptOptions {
    fn default() -> Self {
        Self {
            bridge: true,
            time_cap: None,
        }
    }
}

/// Euler–Maruyama FPT sampling with reflection at the lower end.
pub fn simulate_fpt(spec: &DiffusionSpec, s: f64, x: f64, n_samples: usize, dt: f64, seed: u64) -> Result<SampleStats> {
    simulate_fpt_with(spec, s, x, n_samples, dt, seed, FptOptions::default())
}

pub fn simulate_fpt_with(
    spec: &DiffusionSpec,
    s: f64,
    x: f64,
    n_samples: usize,
    dt: f64,
    seed: u64,
    opts: FptOptions,
) -> Result<SampleStats> {
    if !(dt > 0.0) {
        return Err(invalid("dt", dt, "must be positive"));
    }
    let lo = spec.effective_lower();
    if !(x >= lo && x <= s) {
        return Err(Error::Domain {
            what: "x",
            value: x,
            lower: lo,
            upper: s,
        });
    }
    let cap = match opts.time_cap {
        Some(c) if c > 0.0 => c,
        Some(c) => return Err(invalid("time_cap", c, "must be positive")),
        None if x == s => 0.0,
        None => DEFAULT_CAP_FACTOR * fpt_moment(spec, s, x, 1, 1e-8)?,
    };
    let mut scheme = BTreeMap::from([
        ("dt".to_string(), dt),
        ("bridge".to_string(), if opts.bridge { 1.0 } else { 0.0 }),
        ("time_cap".to_string(), cap),
    ]);
    if x == s {
        return Ok(SampleStats::from_samples(&vec![0.0; n_samples], seed, scheme));
    }
    let max_steps = (cap / dt).ceil() as u64;
    let results: Vec<(f64, bool)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let mut xc = x;
            for step in 1..=max_steps {
                let a2 = spec.variance(xc).max(0.0);
                let z: f64 = StandardNormal.sample(&mut rng);
                let mut xn = xc + spec.drift(xc) * dt + (a2 * dt).sqrt() * z;
                if xn < lo {
                    xn = lo + (lo - xn);
                }
                let t = step as f64 * dt;
                if xn >= s {
                    return (t, false);
                }
                if opts.bridge && a2 > 0.0 {
                    let arg = -2.0 * (s - xc) * (s - xn) / (a2 * dt);
                    // below e^-40 the draw cannot matter at any feasible sample size
                    if arg > BRIDGE_CUTOFF && rng.random::<f64>() < arg.exp() {
                        return (t, false);
                    }
                }
                xc = xn;
            }
            (max_steps as f64 * dt, true)
        })
        .collect();
    let capped = results.iter().filter(|r| r.1).count();
    if capped as f64 > MAX_CAPPED_FRACTION * n_samples as f64 {
        return Err(Error::TimeCapExceeded {
            failed: capped,
            total: n_samples,
            cap,
        });
    }
    scheme.insert("capped".to_string(), capped as f64);
    let samples: Vec<f64> = results.into_iter().map(|r| r.0).collect();
    Ok(SampleStats::from_samples(&samples, seed, scheme))
}

/// Birth–death walk on `S - i dx`, `i = 0..=m`. Node 0 is the threshold and
/// node `m` the lowest grid point at or above `r1`, which reflects upward.
#[derive(Debug, Clone)]
struct Walk {
    /// Per node: probability of moving toward `S` scaled to `2^32`, and the
    /// time spent per move.
    nodes: Vec<(u64, f64)>,
}

impl Walk {
    fn build(spec: &DiffusionSpec, s: f64, dx: f64) -> Result<Self> {
        let lo = spec.effective_lower();
        if !lo.is_finite() {
            return Err(invalid("lower", lo, "the walk needs a finite lower end"));
        }
        if !(dx > 0.0 && dx < s - lo) {
            return Err(invalid("dx", dx, "must be positive and below S - r1"));
        }
        let m = ((s - lo) / dx + 1e-9).floor() as usize;
        let mut nodes = Vec::with_capacity(m + 1);
        for i in 0..=m {
            let x = s - i as f64 * dx;
            let mut a2 = spec.variance(x);
            if !(a2 > 0.0) {
                a2 = spec.variance(x + 0.5 * dx);
            }
            if !(a2 > 0.0) {
                return Err(invalid("dx", dx, "diffusion coefficient vanishes on the walk grid"));
            }
            let b = spec.drift(x) * dx / a2;
            if b.abs() > 1.0 {
                return Err(invalid("dx", dx, "too coarse: |A1 dx / A2| exceeds 1"));
            }
            let p = match i {
                0 => 0.0,
                _ if i == m => 1.0,
                _ => 0.5 * (1.0 + b),
            };
            nodes.push(((p * 4294967296.0) as u64, dx * dx / a2));
        }
        Ok(Self { nodes })
    }

    /// Time to reach node 0 from node `start`.
    fn hit_time(&self, start: usize, rng: &mut ChaCha8Rng) -> f64 {
        if start == 0 {
            return 0.0;
        }
        let nodes = &self.nodes[..];
        let mut i = start;
        let mut t = 0.0;
        // two 32-bit draws per 64-bit word; each move goes down one node
        // unless the draw falls outside the up band
        'walk: loop {
            let word = rng.next_u64();
            for draw in [word & 0xffff_ffff, word >> 32] {
                let (up, delta) = nodes[i];
                t += delta;
                i = i + 2 * ((draw >= up) as usize) - 1;
                if i == 0 {
                    break 'walk;
                }
            }
        }
        t
    }

    /// One excursion: the move from `S` to `S - dx` and the return.
    fn excursion(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.nodes[0].1 + self.hit_time(1, rng)
    }
}

/// Per-visit absorption probability `q = a / (1 + a)`, `a = (alpha/beta) h(S) dx`.
///
/// The walk's mean return time to `S` is `h(S) dx K(r1,S]` to leading order,
/// and a geometric number of returns with mean `1/a` then gives
/// `E(Tr) = (beta/alpha) K(r1,S]`.
pub fn absorption_probability(spec: &DiffusionSpec, threshold: &ElasticThreshold, dx: f64) -> Result<f64> {
    if threshold.beta == 0.0 {
        return Ok(1.0);
    }
    let a = threshold.alpha / threshold.beta * spec.scale_density(threshold.s)? * dx;
    Ok(a / (1.0 + a))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub target: f64,
    pub coarse: SampleStats,
    pub fine: SampleStats,
    pub coarse_rel_error: f64,
    pub fine_rel_error: f64,
}

/// Wiener `mu = 0`, `sigma2 = 10` on `[-80, -50]` at `p_R = 0.5`, where
/// `E(Tr) = (beta/alpha) 2 (S - nu) / sigma2 = 6`. The renewal estimate must
/// be within 2% at `dx = 1` and 1% at `dx = 0.5`.
fn run_calibration() -> Result<CalibrationReport> {
    let spec = WienerParams::new(0.0, 10.0, -80.0)?.spec();
    let t = ElasticThreshold::from_reflecting_probability(-50.0, 0.5)?;
    let target = t.ratio() * 2.0 * 30.0 / 10.0;
    let coarse = renewal_unchecked(&spec, &t, 1.0, 1_000_000, CALIBRATION_SEED, 0)?;
    let fine = renewal_unchecked(&spec, &t, 0.5, 4_000_000, CALIBRATION_SEED, FINE_STREAM_OFFSET)?;
    let rel = |e: &RenewalEstimate| (e.mean - target).abs() / target;
    let report = CalibrationReport {
        target,
        coarse_rel_error: rel(&coarse),
        fine_rel_error: rel(&fine),
        coarse: coarse.refractory,
        fine: fine.refractory,
    };
    if report.coarse_rel_error > 0.02 || report.fine_rel_error > 0.01 {
        return Err(Error::Calibration(format!(
            "elastic walk misses E(Tr) = {target}: {:.3}% at dx=1, {:.3}% at dx=0.5",
            100.0 * report.coarse_rel_error,
            100.0 * report.fine_rel_error
        )));
    }
    Ok(report)
}

/// Runs the calibration gate once per process.
pub fn calibration_gate() -> Result<CalibrationReport> {
    static GATE: OnceLock<Result<CalibrationReport>> = OnceLock::new();
    GATE.get_or_init(run_calibration).clone()
}

/// Samples first-exit and refractoriness times through the elastic walk.
/// `x` must lie on the walk grid `S - i dx`.
pub fn simulate_fet_elastic(
    spec: &DiffusionSpec,
    threshold: &ElasticThreshold,
    x: f64,
    n_samples: usize,
    dx: f64,
    seed: u64,
) -> Result<(SampleStats, SampleStats)> {
    threshold.validate(spec)?;
    calibration_gate()?;
    let s = threshold.s;
    let walk = Walk::build(spec, s, dx)?;
    let pos = (s - x) / dx;
    let start = pos.round();
    if !(start >= 0.0 && (pos - start).abs() <= 1e-9 * pos.max(1.0) && (start as usize) < walk.nodes.len()) {
        return Err(invalid("x", x, "must lie on the walk grid S - i dx"));
    }
    let start = start as usize;
    let q = absorption_probability(spec, threshold, dx)?;
    let q_scaled = (q * 18446744073709551616.0).min(u64::MAX as f64) as u64;
    let pairs: Vec<(f64, f64)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let first = walk.hit_time(start, &mut rng);
            let mut refractory = 0.0;
            while q < 1.0 && rng.next_u64() >= q_scaled {
                refractory += walk.excursion(&mut rng);
            }
            (first + refractory, refractory)
        })
        .collect();
    let scheme = BTreeMap::from([("dx".to_string(), dx), ("q".to_string(), q)]);
    let fet: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let refr: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok((
        SampleStats::from_samples(&fet, seed, scheme.clone()),
        SampleStats::from_samples(&refr, seed, scheme),
    ))
}

/// Refractoriness estimate from independent excursions: with `N` returns
/// (geometric, `E N = (1-q)/q`) and excursion time `τ`,
/// `E(Tr) = E N · E τ` and `V(Tr) = E N · V τ + V N · (E τ)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenewalEstimate {
    pub dx: f64,
    pub q: f64,
    pub mean_returns: f64,
    pub excursion: SampleStats,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub refractory: SampleStats,
}

fn renewal_unchecked(
    spec: &DiffusionSpec,
    threshold: &ElasticThreshold,
    dx: f64,
    n_excursions: usize,
    seed: u64,
    stream_offset: u64,
) -> Result<RenewalEstimate> {
    if n_excursions < 2 {
        return Err(invalid("n_excursions", n_excursions as f64, "need at least 2"));
    }
    let walk = Walk::build(spec, threshold.s, dx)?;
    let q = absorption_probability(spec, threshold, dx)?;
    let samples: Vec<f64> = (0..n_excursions as u64)
        .into_par_iter()
        .map(|i| walk.excursion(&mut stream(seed, stream_offset + i)))
        .collect();
    let scheme = BTreeMap::from([("dx".to_string(), dx), ("q".to_string(), q)]);
    let exc = SampleStats::from_samples(&samples, seed, scheme.clone());
    let en = (1.0 - q) / q;
    let vn = (1.0 - q) / (q * q);
    let mean = en * exc.mean;
    let variance = en * exc.variance + vn * exc.mean * exc.mean;
    let std_error = en * exc.std_error;
    let refractory = SampleStats {
        n_samples: n_excursions,
        mean,
        variance,
        std_error,
        seed,
        scheme,
    };
    Ok(RenewalEstimate {
        dx,
        q,
        mean_returns: en,
        excursion: exc,
        mean,
        variance,
        std_error,
        refractory,
    })
}

pub fn refractory_renewal(
    spec: &DiffusionSpec,
    threshold: &ElasticThreshold,
    dx: f64,
    n_excursions: usize,
    seed: u64,
) -> Result<RenewalEstimate> {
    threshold.validate(spec)?;
    calibration_gate()?;
    renewal_unchecked(spec, threshold, dx, n_excursions, seed, 0)
}

/// Renewal estimates at `dx` and `dx/2`, and `2·fine - coarse`, which cancels
/// the walk's first-order bias in `dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct RichardsonEstimate {
    pub coarse: RenewalEstimate,
    pub fine: RenewalEstimate,
    pub extrapolated: f64,
    pub std_error: f64,
}

pub fn refractory_richardson(
    spec: &DiffusionSpec,
    threshold: &ElasticThreshold,
    dx: f64,
    n_coarse: usize,
    n_fine: usize,
    seed: u64,
) -> Result<RichardsonEstimate> {
    threshold.validate(spec)?;
    calibration_gate()?;
    let coarse = renewal_unchecked(spec, threshold, dx, n_coarse, seed, 0)?;
    let fine = renewal_unchecked(spec, threshold, 0.5 * dx, n_fine, seed, FINE_STREAM_OFFSET)?;
    let extrapolated = 2.0 * fine.mean - coarse.mean;
    let std_error = (4.0 * fine.std_error.powi(2) + coarse.std_error.powi(2)).sqrt();
    Ok(RichardsonEstimate {
        coarse,
        fine,
        extrapolated,
        std_error,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterSample {
    pub n_windows: usize,
    pub counts: Vec<u64>,
    pub pmf: Vec<f64>,
    /// `sqrt(p (1-p) / n)` per bin.
    pub std_error: Vec<f64>,
    pub seed: u64,
}

/// Output counts of a non-paralyzable counter: an arrival outside a blocking
/// window emits and opens a new window of length `tau`; blocked arrivals are
/// lost without extending the window.
pub fn simulate_counter(p: &CounterParams, n_windows: usize, seed: u64) -> Result<CounterSample> {
    if n_windows == 0 {
        return Err(invalid("n_windows", 0.0, "must be at least 1"));
    }
    let gap = Exp::new(p.lambda).map_err(|_| invalid("lambda", p.lambda, "must be positive"))?;
    let per_window: Vec<usize> = (0..n_windows as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i);
            let mut t = 0.0;
            let mut open_at = 0.0;
            let mut emitted = 0;
            loop {
                t += gap.sample(&mut rng);
                if t >= p.t {
                    break emitted;
                }
                if t >= open_at {
                    emitted += 1;
                    open_at = t + p.tau;
                }
            }
        })
        .collect();
    let top = per_window.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0u64; top + 1];
    for c in per_window {
        counts[c] += 1;
    }
    let n = n_windows as f64;
    let pmf: Vec<f64> = counts.iter().map(|c| *c as f64 / n).collect();
    let std_error = pmf.iter().map(|q| (q * (1.0 - q) / n).sqrt()).collect();
    Ok(CounterSample {
        n_windows,
        counts,
        pmf,
        std_error,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deadtime::{output_distribution, poisson_pmf};

    #[test]
    fn stats_basics() {
        let s = SampleStats::from_samples(&[1.0, 2.0, 3.0, 4.0], 7, BTreeMap::new());
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.std_error - (s.variance / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(s.seed, 7);
    }

    #[test]
    fn start_at_threshold_gives_zero() {
        let w = WienerParams::new(-0.5, 10.0, -80.0).unwrap().spec();
        let s = simulate_fpt(&w, -50.0, -50.0, 100, 0.01, 1).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.variance, 0.0);
    }

    #[test]
    fn time_cap_is_enforced() {
        let w = WienerParams::new(-0.5, 10.0, -80.0).unwrap().spec();
        let opts = FptOptions {
            bridge: true,
            time_cap: Some(1.0),
        };
        let e = simulate_fpt_with(&w, -50.0, -70.0, 200, 0.1, 1, opts).unwrap_err();
        assert!(matches!(e, Error::TimeCapExceeded { .. }));
    }

    #[test]
    fn deterministic_given_seed() {
        let w = WienerParams::new(-0.5, 100.0, -80.0).unwrap().spec();
        let a = simulate_fpt(&w, -50.0, -70.0, 500, 0.01, 42).unwrap();
        let b = simulate_fpt(&w, -50.0, -70.0, 500, 0.01, 42).unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let c = pool.install(|| simulate_fpt(&w, -50.0, -70.0, 500, 0.01, 42).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn calibration_gate_passes() {
        let r = calibration_gate().unwrap();
        assert!(r.coarse_rel_error <= 0.02 && r.fine_rel_error <= 0.01);
    }

    #[test]
    fn absorption_dominated_limit() {
        let w = WienerParams::new(-0.5, 100.0, -80.0).unwrap().spec();
        let t = ElasticThreshold::from_reflecting_probability(-50.0, 1e-6).unwrap();
        let (fet, refr) = simulate_fet_elastic(&w, &t, -70.0, 2000, 1.0, 3).unwrap();
        assert!(refr.mean < 1e-3);
        assert!(fet.mean > 5.0);
    }

    #[test]
    fn walk_grid_checks() {
        let w = WienerParams::new(-0.5, 10.0, -80.0).unwrap().spec();
        let t = ElasticThreshold::from_reflecting_probability(-50.0, 0.5).unwrap();
        assert!(simulate_fet_elastic(&w, &t, -70.3, 10, 1.0, 1).is_err());
        // |mu dx / sigma2| > 1
        assert!(simulate_fet_elastic(&w, &t, -70.0, 10, 25.0, 1).is_err());
    }

    #[test]
    fn counter_edge_cases() {
        let p = CounterParams::new(1.0, 5.0, 6.0).unwrap();
        let c = simulate_counter(&p, 20_000, 9).unwrap();
        assert!(c.counts.len() <= 2);
        let p0 = CounterParams::new(2.0, 1.0, 0.0).unwrap();
        let c = simulate_counter(&p0, 100_000, 9).unwrap();
        for (n, f) in c.pmf.iter().enumerate() {
            let e = poisson_pmf(2.0, 1.0, n as u64);
            let se = (e * (1.0 - e) / 100_000.0).sqrt().max(1e-6);
            assert!((f - e).abs() <= 4.0 * se, "bin {n}: {f} vs {e}");
        }
        let d = output_distribution(&CounterParams::new(1.0, 5.0, 1.0).unwrap()).unwrap();
        assert!(d.pmf.len() == 6);
    }
}
