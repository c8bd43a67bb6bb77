//! Acceptance checks, one line per criterion. Exits nonzero if any fails.

use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use fpt_moments::deadtime::{output_distribution, output_pmf, poisson_pmf, CounterParams};
use fpt_moments::models::{FellerParams, Model, OuParams, WienerParams};
use fpt_moments::moments::{fet_moment, fet_moment_via_relation, fpt_basis, refractory_moment, summary, Relation};
use fpt_moments::montecarlo::{refractory_richardson, simulate_counter, simulate_fpt};
use fpt_moments::report::{relative_error, ComparisonReport};
use fpt_moments::tables::{table_model, table_report, TABLE_S, TABLE_X};
use fpt_moments::ElasticThreshold;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn cell(report: &ComparisonReport, name: &str) -> f64 {
    report
        .rows
        .iter()
        .find(|r| r.cell == name)
        .unwrap_or_else(|| panic!("no cell {name}"))
        .computed
}

fn anchor(report: &ComparisonReport, name: &str, want: f64, tol: f64) -> Result<(), String> {
    let got = cell(report, name);
    let e = relative_error(got, want);
    if e <= tol {
        Ok(())
    } else {
        Err(format!("anchor {name} = {got:e}, want {want:e} (rel.err {e:.2e})"))
    }
}

fn tables_outcome(ids: &[u8], tol: f64, anchors: &[(u8, &str, f64)], limit: Duration) -> Outcome {
    let start = Instant::now();
    let mut reports = Vec::new();
    for &id in ids {
        match table_report(id, tol) {
            Ok(r) => reports.push((id, r)),
            Err(e) => return outcome(false, format!("table {id}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    let mut problems = Vec::new();
    for (id, r) in &reports {
        if !r.passed() {
            let worst = r
                .rows
                .iter()
                .filter(|c| !c.pass)
                .map(|c| format!("{} ({:.1e})", c.cell, c.rel_error))
                .collect::<Vec<_>>();
            problems.push(format!("table {id}: {} of {} cells fail: {}", worst.len(), r.rows.len(), worst.join(", ")));
        }
    }
    for (id, name, want) in anchors {
        let r = &reports.iter().find(|(i, _)| i == id).expect("table computed").1;
        if let Err(e) = anchor(r, name, *want, tol) {
            problems.push(e);
        }
    }
    if elapsed > limit {
        problems.push(format!("took {elapsed:?}, limit {limit:?}"));
    }
    let cells: usize = reports.iter().map(|(_, r)| r.rows.len()).sum();
    let max = reports.iter().map(|(_, r)| r.max_rel_error()).fold(0.0, f64::max);
    let summary = format!("{cells} cells, max rel.err {max:.2e}, {elapsed:.2?}");
    if problems.is_empty() {
        outcome(true, summary)
    } else {
        outcome(false, format!("{summary}; {}", problems.join("; ")))
    }
}

fn criterion_1() -> Outcome {
    tables_outcome(
        &[1],
        1e-5,
        &[(1, "sigma2=10/t1", 3.073451e2), (1, "sigma2=10/E(Tr)[p_R=0.99]", 5.608439e5)],
        Duration::from_secs(10),
    )
}

fn criterion_2() -> Outcome {
    tables_outcome(&[2], 1e-5, &[(2, "sigma2=10/V", 9.254218e4)], Duration::from_secs(10))
}

fn criterion_3() -> Outcome {
    tables_outcome(
        &[3, 4],
        1e-4,
        &[
            (3, "sigma2=10/E(Tr)[p_R=0.1]", 9.901436e41),
            (4, "sigma2=500/V(Tr)[p_R=0.99]", 6.787980e3),
        ],
        Duration::from_secs(60),
    )
}

fn criterion_4() -> Outcome {
    tables_outcome(
        &[5, 6],
        1e-4,
        &[(5, "xi=1/t1", 8.029989e1), (6, "xi=0.5/V(Tr)[p_R=0.99]", 1.336617e37)],
        Duration::from_secs(60),
    )
}

#[derive(Debug, Clone)]
struct Case {
    model: Model,
    x: f64,
    p_r: f64,
}

fn case_strategy() -> impl Strategy<Value = Case> {
    let wiener = (-1.0..1.0f64, 5.0..200.0f64).prop_map(|(mu, s2)| Model::Wiener(WienerParams::new(mu, s2, -80.0).unwrap()));
    let ou = (2.0..10.0f64, -75.0..-55.0f64, 20.0..500.0f64)
        .prop_map(|(th, rho, s2)| Model::Ou(OuParams::new(th, rho, s2, -80.0).unwrap()));
    let feller = (3.0..8.0f64, -75.0..-60.0f64, 0.5..5.0f64)
        .prop_map(|(th, rho, xi)| Model::Feller(FellerParams::new(th, rho, xi, -80.0).unwrap()));
    (prop_oneof![wiener, ou, feller], 0.02..0.98f64, 0.05..0.99f64).prop_map(|(model, frac, p_r)| Case {
        model,
        x: -80.0 + frac * 30.0,
        p_r,
    })
}

const SWEEP_TOL: f64 = 1e-11;

fn check_case(c: &Case) -> Result<(), String> {
    let spec = c.model.spec();
    let t = ElasticThreshold::from_reflecting_probability(TABLE_S, c.p_r).map_err(|e| e.to_string())?;
    let s = summary(&spec, &t, c.x, SWEEP_TOL).map_err(|e| e.to_string())?;
    for key in ["fet_mean_sum", "fet_variance_sum"] {
        let r = s.identity_residuals[key];
        if r > 1e-6 {
            return Err(format!("{key} residual {r:e}"));
        }
    }
    for n in 1..=3 {
        let direct = fet_moment(&spec, &t, c.x, n, SWEEP_TOL).map_err(|e| e.to_string())?;
        for rel in [Relation::FptAtPoint, Relation::FetAtPoint] {
            let v = fet_moment_via_relation(&spec, &t, c.x, n, SWEEP_TOL, rel).map_err(|e| e.to_string())?;
            let e = relative_error(v, direct);
            if e > 1e-8 {
                return Err(format!("order {n} {rel:?}: {v:e} vs direct {direct:e} ({e:.1e})"));
            }
        }
    }
    // E(Tr) / (beta/alpha) does not depend on p_R
    let per_ratio: Vec<f64> = [0.1, c.p_r, 0.9]
        .iter()
        .map(|p| {
            let t = ElasticThreshold::from_reflecting_probability(TABLE_S, *p).unwrap();
            refractory_moment(&spec, &t, 1, SWEEP_TOL).map(|m| m / t.ratio())
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for v in &per_ratio[1..] {
        let e = relative_error(*v, per_ratio[0]);
        if e > 1e-10 {
            return Err(format!("E(Tr) not proportional to beta/alpha ({e:.1e})"));
        }
    }
    // V(Tr) = a r + b r^2: fit on p_R in {0.1, 0.5}, predict the others
    let v_at = |p: f64| -> Result<(f64, f64), String> {
        let t = ElasticThreshold::from_reflecting_probability(TABLE_S, p).map_err(|e| e.to_string())?;
        let m1 = refractory_moment(&spec, &t, 1, SWEEP_TOL).map_err(|e| e.to_string())?;
        let m2 = refractory_moment(&spec, &t, 2, SWEEP_TOL).map_err(|e| e.to_string())?;
        Ok((t.ratio(), m2 - m1 * m1))
    };
    let (r1, v1) = v_at(0.1)?;
    let (r2, v2) = v_at(0.5)?;
    let b = (v2 / r2 - v1 / r1) / (r2 - r1);
    let a = v1 / r1 - b * r1;
    for p in [0.9, 0.99, c.p_r] {
        let (r, v) = v_at(p)?;
        let e = relative_error(a * r + b * r * r, v);
        if e > 1e-6 {
            return Err(format!("V(Tr) quadratic fit misses p_R={p} ({e:.1e})"));
        }
    }
    Ok(())
}

fn criterion_5() -> Outcome {
    let config = Config {
        cases: 60,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    let start = Instant::now();
    match runner.run(&case_strategy(), |c| check_case(&c).map_err(TestCaseError::fail)) {
        Ok(()) => outcome(true, format!("60 cases, {:.2?}", start.elapsed())),
        Err(e) => outcome(false, e.to_string()),
    }
}

fn criterion_6() -> Outcome {
    let mut worst = (0.0, String::new());
    for id in [1u8, 3, 5] {
        let params: &[f64] = if id == 5 {
            &[0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0]
        } else {
            &[10.0, 20.0, 30.0, 40.0, 50.0, 100.0, 200.0, 300.0, 400.0, 500.0]
        };
        for &p in params {
            let model = table_model(id, p).unwrap();
            let closed = match model.fpt_mean(TABLE_S, TABLE_X) {
                Ok(v) => v,
                Err(e) => return outcome(false, format!("{} {p}: {e}", model.name())),
            };
            let quad = match fpt_basis(&model.spec(), TABLE_S, TABLE_X, 1e-11) {
                Ok(b) => b.t1,
                Err(e) => return outcome(false, format!("{} {p}: {e}", model.name())),
            };
            let e = relative_error(quad, closed);
            if e > worst.0 {
                worst = (e, format!("{} {p}", model.name()));
            }
        }
    }
    outcome(worst.0 <= 1e-6, format!("30 parameter sets, worst {:.2e} at {}", worst.0, worst.1))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;

    let w = WienerParams::new(-0.5, 10.0, -80.0).unwrap().spec();
    match simulate_fpt(&w, TABLE_S, TABLE_X, 100_000, 0.1, 11) {
        Ok(s) => {
            let z = s.z_score(3.073451e2);
            pass &= z.abs() <= 3.5;
            lines.push(format!("Wiener FPT {:.3} ± {:.3} (z {z:.2})", s.mean, s.std_error));
        }
        Err(e) => {
            pass = false;
            lines.push(format!("Wiener FPT: {e}"));
        }
    }

    let ou = OuParams::new(5.0, -70.0, 200.0, -80.0).unwrap().spec();
    match simulate_fpt(&ou, TABLE_S, TABLE_X, 100_000, 0.002, 12) {
        Ok(s) => {
            let z = s.z_score(4.525217);
            pass &= z.abs() <= 3.5;
            lines.push(format!("OU FPT {:.4} ± {:.4} (z {z:.2})", s.mean, s.std_error));
        }
        Err(e) => {
            pass = false;
            lines.push(format!("OU FPT: {e}"));
        }
    }

    let target = 5.665090e3;
    let t = ElasticThreshold::from_reflecting_probability(TABLE_S, 0.5).unwrap();
    match refractory_richardson(&w, &t, 1.0, 7_000_000, 14_000_000, 13) {
        Ok(r) => {
            let (ec, ef, ex) = (
                relative_error(r.coarse.mean, target),
                relative_error(r.fine.mean, target),
                relative_error(r.extrapolated, target),
            );
            pass &= ef < ec && ex <= 0.01;
            lines.push(format!(
                "E(Tr) walk {:.1} (dx=1, {:.2}%) -> {:.1} (dx=0.5, {:.2}%) -> {:.1} ± {:.1} extrapolated ({:.2}%)",
                r.coarse.mean,
                100.0 * ec,
                r.fine.mean,
                100.0 * ef,
                r.extrapolated,
                r.std_error,
                100.0 * ex
            ));
        }
        Err(e) => {
            pass = false;
            lines.push(format!("elastic walk: {e}"));
        }
    }

    let p = CounterParams::new(1.0, 5.0, 1.0).unwrap();
    let exact = output_distribution(&p).unwrap();
    match simulate_counter(&p, 1_000_000, 14) {
        Ok(sim) => {
            let n = sim.n_windows as f64;
            let mut worst = 0.0f64;
            for k in 0..exact.pmf.len().max(sim.pmf.len()) {
                let e = exact.pmf.get(k).copied().unwrap_or(0.0);
                let f = sim.pmf.get(k).copied().unwrap_or(0.0);
                let se = (e * (1.0 - e) / n).sqrt();
                let z = if se > 0.0 { (f - e).abs() / se } else if f == 0.0 { 0.0 } else { f64::INFINITY };
                worst = worst.max(z);
            }
            pass &= worst <= 3.5;
            lines.push(format!("counter pmf worst |z| {worst:.2}"));
        }
        Err(e) => {
            pass = false;
            lines.push(format!("counter: {e}"));
        }
    }

    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(300) {
        pass = false;
    }
    lines.push(format!("{elapsed:.1?}"));
    outcome(pass, lines.join("; "))
}

fn criterion_8() -> Outcome {
    let mut problems = Vec::new();
    let mut worst = 0.0f64;
    // 50 points: lambda x T x tau, including tau near 0 and near T
    for &lambda in &[0.3, 1.0, 4.0, 12.0, 40.0] {
        for &t in &[0.5, 5.0] {
            for &frac in &[1e-6, 0.05, 0.5, 0.999, 1.0 - 1e-9] {
                let p = CounterParams::new(lambda, t, frac * t).unwrap();
                let d = output_distribution(&p).unwrap();
                worst = worst.max(d.normalization_defect);
                // support: zero exactly where T - (n-1) tau <= 0
                for n in 1..d.pmf.len() as u64 + 3 {
                    if t - (n - 1) as f64 * p.tau <= 0.0 && output_pmf(&p, n).unwrap() != 0.0 {
                        problems.push(format!("support violated at lambda={lambda} T={t} tau={} n={n}", p.tau));
                    }
                }
            }
        }
    }
    if worst > 1e-12 {
        problems.push(format!("normalization defect {worst:e}"));
    }
    let mut poisson_err = 0.0f64;
    for &(lambda, t) in &[(1.0, 1.0), (4.0, 1.0), (2.5, 8.0), (30.0, 2.0)] {
        let d = output_distribution(&CounterParams::new(lambda, t, 0.0).unwrap()).unwrap();
        for (n, v) in d.pmf.iter().enumerate() {
            poisson_err = poisson_err.max((v - poisson_pmf(lambda, t, n as u64)).abs());
        }
    }
    if poisson_err > 1e-14 {
        problems.push(format!("tau=0 differs from Poisson by {poisson_err:e}"));
    }
    let detail = format!("50-point sweep defect {worst:.1e}, Poisson reduction {poisson_err:.1e}");
    if problems.is_empty() {
        outcome(true, detail)
    } else {
        outcome(false, format!("{detail}; {}", problems.join("; ")))
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("Table 1 (Wiener means)", criterion_1),
        ("Table 2 (Wiener variances)", criterion_2),
        ("Tables 3-4 (OU)", criterion_3),
        ("Tables 5-6 (Feller)", criterion_4),
        ("identity suite", criterion_5),
        ("closed-form/series oracles", criterion_6),
        ("Monte Carlo suite", criterion_7),
        ("dead-time distribution", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "criterion {} {name}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
