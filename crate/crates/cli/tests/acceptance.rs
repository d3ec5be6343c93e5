//! Acceptance criteria for the ACC benchmark, one PASS/FAIL line each.
//!
//! Runs without the libtest harness; exits nonzero when any criterion fails.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use drcbf_cli::output::{summarize, write_csv, RunSummary};
use drcbf_cli::{sweep, RunConfig};
use drcbf_core::acc::*;
use drcbf_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const SAFE_FLOOR: f64 = 10.0 - 1e-3;
const RUNTIME_LIMIT: f64 = 5.0;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

struct Run {
    log: TrajectoryLog,
    summary: RunSummary,
    filter: SafetyFilter,
}

fn run_case(case: u8, variant: CaseVariant) -> Run {
    let config = case_config(case, variant).unwrap();
    let start = Instant::now();
    let log = run_simulation(&config).unwrap();
    let summary = summarize(&log, 10.0, start.elapsed().as_secs_f64());
    assert!(
        log.is_complete(),
        "case {case} {variant:?}: {:?}",
        log.status
    );
    Run {
        log,
        summary,
        filter: config.controller.filter,
    }
}

fn min_d(log: &TrajectoryLog) -> f64 {
    log.records
        .iter()
        .map(|r| r.x[0])
        .fold(f64::INFINITY, f64::min)
}

/// Min φ over every safe-mode run seen so far, for the invariance audit.
#[derive(Default)]
struct PhiAudit {
    worst: f64,
    label: String,
}

impl PhiAudit {
    fn record(&mut self, label: &str, log: &TrajectoryLog) {
        let m = log.min_phi();
        if self.label.is_empty() || m < self.worst {
            self.worst = m;
            self.label = label.into();
        }
    }
}

fn case1(runs: &[(&str, &Run)]) -> Verdict {
    let get = |name| runs.iter().find(|(n, _)| *n == name).unwrap().1;
    let (h, d, a) = (get("hocbf"), get("drcbf"), get("adrcbf"));
    let slowest = runs
        .iter()
        .map(|(_, r)| r.summary.wall_clock_seconds)
        .fold(0.0, f64::max);
    let pass = min_d(&h.log) < 10.0
        && min_d(&d.log) >= SAFE_FLOOR
        && min_d(&a.log) >= SAFE_FLOOR
        && slowest <= RUNTIME_LIMIT;
    Verdict::new(
        pass,
        format!(
            "min D: hocbf {:.4}, drcbf {:.4}, adrcbf {:.4}; slowest run {slowest:.2} s",
            min_d(&h.log),
            min_d(&d.log),
            min_d(&a.log)
        ),
    )
}

fn case2(d: &Run, a: &Run) -> Verdict {
    let v_lead = AccParameters::default().v_lead;
    let settled = |r: &Run| (r.summary.steady_state_speed - v_lead).abs() <= 0.5;
    let pass = min_d(&d.log) >= SAFE_FLOOR
        && min_d(&a.log) >= SAFE_FLOOR
        && settled(d)
        && settled(a)
        && a.summary.steady_state_distance <= d.summary.steady_state_distance;
    Verdict::new(
        pass,
        format!(
            "min D drcbf {:.4}, adrcbf {:.4}; steady D drcbf {:.4}, adrcbf {:.4}; steady v_f {:.3}, {:.3}",
            min_d(&d.log),
            min_d(&a.log),
            d.summary.steady_state_distance,
            a.summary.steady_state_distance,
            d.summary.steady_state_speed,
            a.summary.steady_state_speed
        ),
    )
}

/// Runs both case-3 sweeps through the CLI sweep path.
fn case3(out: &Path, audit: &mut PhiAudit) -> Verdict {
    let mut base = RunConfig::from_scenario(
        case_scenario(3, CaseVariant::new(ControllerMode::Drcbf)).unwrap(),
    );
    base.output.dir = out.to_path_buf();
    base.output.plots = false;
    let multipliers = [0.2, 1.0, 10.0, 20.0];
    let k_sweep = sweep(
        &base,
        "controller.k_scale",
        &multipliers.iter().map(|m| json!(m)).collect::<Vec<_>>(),
    )
    .unwrap();

    let mut adaptive = base.clone();
    adaptive.controller.mode = ControllerMode::Adrcbf;
    let r_sweep = sweep(&adaptive, "params.r", &[json!(1.0), json!(100.0)]).unwrap();

    for s in [&k_sweep, &r_sweep] {
        for row in &s.rows {
            if audit.label.is_empty() || row.summary.min_phi < audit.worst {
                audit.worst = row.summary.min_phi;
                audit.label = format!(
                    "case3 {} {}={}",
                    row.summary.mode.as_deref().unwrap_or("?"),
                    s.param,
                    row.value
                );
            }
        }
    }

    let ss: Vec<f64> = k_sweep
        .rows
        .iter()
        .map(|r| r.summary.steady_state_distance)
        .collect();
    let at_star = ss[1];
    let all_safe = k_sweep
        .rows
        .iter()
        .chain(&r_sweep.rows)
        .all(|r| r.summary.min_distance >= SAFE_FLOOR);
    let ordering = ss.iter().all(|s| at_star <= s + 1e-2);
    let r1 = r_sweep.rows[0].summary.steady_state_distance;
    let r100 = r_sweep.rows[1].summary.steady_state_distance;
    let r1_ok = r1 <= at_star;
    let r100_ok = r100 >= at_star;
    let mut detail = format!(
        "steady D at (0.2, 1, 10, 20)k*: ({:.3}, {:.3}, {:.3}, {:.3}); adrcbf r=1 {r1:.3}, r=100 {r100:.3}",
        ss[0], ss[1], ss[2], ss[3]
    );
    for (ok, what) in [
        (all_safe, "a run is unsafe"),
        (ordering, "k* is not least conservative"),
        (r1_ok, "r=1 is above drcbf(k*)"),
        (r100_ok, "r=100 is below drcbf(k*)"),
    ] {
        if !ok {
            detail.push_str(&format!("; {what}"));
        }
    }
    Verdict::new(all_safe && ordering && r1_ok && r100_ok, detail)
}

fn invariance(audit: &PhiAudit) -> Verdict {
    Verdict::new(
        audit.worst >= -1e-6,
        format!(
            "min over runs, steps and levels {:.3e} ({})",
            audit.worst, audit.label
        ),
    )
}

/// Forward differences of `b̃_{i-1}` against `b̃_i` along the case-1 run.
fn comparison_along_trajectory(run: &Run) -> Verdict {
    let SafetyFilter::Drcbf(chain) = &run.filter else {
        return Verdict::new(false, "not a drcbf run");
    };
    let h = run.log.metadata.control_period;
    let recs = &run.log.records;
    let m = chain.order();
    let mut states: Vec<&[f64]> = recs.iter().map(|r| r.x.as_slice()).collect();
    states.push(&run.log.final_state);
    let mut detail = Vec::new();
    let mut pass = true;
    for i in 1..=m {
        let prev: Vec<f64> = states
            .iter()
            .map(|x| chain.tilde_b()[i - 1].value(x).unwrap())
            .collect();
        let next: Vec<f64> = recs
            .iter()
            .map(|r| {
                if i < m {
                    chain.tilde_b()[i].value(&r.x).unwrap()
                } else {
                    let lg: f64 = chain
                        .beta_u(&r.x)
                        .unwrap()
                        .iter()
                        .zip(&r.u)
                        .map(|(a, u)| a * u)
                        .sum();
                    chain.w_m().value(&r.x).unwrap() + lg
                        - chain.gains()[m - 1] * chain.bound().powi(2)
                }
            })
            .collect();
        let second = prev
            .windows(3)
            .map(|w| (w[2] - 2.0 * w[1] + w[0]).abs() / (h * h))
            .fold(0.0, f64::max);
        let c = 10.0 * second;
        let worst = (0..recs.len())
            .map(|k| (prev[k + 1] - prev[k]) / h - (next[k] - c * h))
            .fold(f64::INFINITY, f64::min);
        pass &= worst >= 0.0;
        detail.push(format!("i={i}: C = {c:.3e}, min margin {worst:.3e}"));
    }
    Verdict::new(pass, detail.join("; "))
}

fn young_gap() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_gap = f64::INFINITY;
    let mut worst_tight = 0.0f64;
    let mut loose_as_tight = 0;
    for _ in 0..10_000 {
        let v: f64 = rng.random_range(1e-2..50.0);
        let bound: f64 = rng.random_range(1e-2..50.0);
        let k: f64 = rng.random_range(1e-3..50.0);
        let scale = 1.0 + bound * v;
        worst_gap = worst_gap.min((young_bound(v, k, bound) - bound * v) / scale);
        let k_star = v / (2.0 * bound);
        worst_tight = worst_tight.max((young_bound(v, k_star, bound) - bound * v).abs() / scale);
        // away from k*, the gap (v − 2k𝒟)²/(4k) is not within tolerance
        let expected = (v - 2.0 * k * bound).powi(2) / (4.0 * k);
        if expected > 1e-9 * scale && young_bound(v, k, bound) - bound * v <= 1e-12 * scale {
            loose_as_tight += 1;
        }
    }
    Verdict::new(
        worst_gap >= -1e-12 && worst_tight <= 1e-12 && loose_as_tight == 0,
        format!("min relative gap {worst_gap:.2e}, max gap at k* {worst_tight:.2e}, false equalities {loose_as_tight}"),
    )
}

fn interior_states(p: &AccParameters, seed: u64, n: usize, min_phi1: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = vec![
            rng.random_range(OPERATING_DISTANCE.0..=OPERATING_DISTANCE.1),
            rng.random_range(OPERATING_SPEED.0..=OPERATING_SPEED.1),
        ];
        if closed_form_adrcbf_terms(p, &x).is_ok_and(|c| c.phi1 > min_phi1) && x[0] > 11.0 {
            out.push(x);
        }
    }
    out
}

fn chains(p: &AccParameters, bound: f64) -> (DrcbfChain, AdrcbfChain, HocbfChain) {
    let sys = acc_system(p).unwrap();
    let b = acc_barrier(p);
    let coeffs = p.coefficients().unwrap();
    let drcbf = build_drcbf_chain(&sys, &b, &coeffs, &p.k, bound, &operating_samples(10)).unwrap();
    let adrcbf = build_adrcbf_chain(
        &sys,
        &b,
        &coeffs,
        &p.k,
        &p.r,
        Arc::new(ReciprocalEnergy),
        &interior_samples(p, 10),
    )
    .unwrap();
    let hocbf = build_hocbf_chain(&sys, &b, &coeffs, &operating_samples(10)).unwrap();
    (drcbf, adrcbf, hocbf)
}

fn closed_forms() -> Verdict {
    let p = AccParameters::default();
    let mut worst = 0.0f64;
    for (case, bound) in [
        (1, 45.25f64.sqrt()),
        (2, 21.25f64.sqrt()),
        (3, 162f64.sqrt()),
    ] {
        let (drcbf, adrcbf, _) = chains(&p, bound);
        for x in interior_states(&p, 70 + case, 100, 1e-3) {
            let cf = closed_form_drcbf_terms(&p, bound, &x).unwrap();
            let c = drcbf_constraint(&drcbf, &x).unwrap();
            for (a, b) in [
                (drcbf.w()[0].value(&x).unwrap(), cf.w1),
                (drcbf.w_m().value(&x).unwrap(), cf.w2),
                (drcbf.tilde_b()[1].value(&x).unwrap(), cf.tilde_b1),
                (c.row[0], cf.row),
                (c.offset, cf.offset),
            ] {
                worst = worst.max((a - b).abs());
            }
            let af = closed_form_adrcbf_terms(&p, &x).unwrap();
            let ac = adrcbf_constraint(&adrcbf, &x).unwrap();
            for (a, b) in [
                (adrcbf.pi()[0].value(&x).unwrap(), af.pi1),
                (adrcbf.gamma()[0].value(&x).unwrap(), af.gamma0),
                (adrcbf.psi()[1].value(&x).unwrap(), af.psi1),
                (adrcbf.phi()[1].value(&x).unwrap(), af.phi1),
                (adrcbf.gamma()[1].value(&x).unwrap(), af.gamma1),
                (adrcbf.pi_m().value(&x).unwrap(), af.pi2),
                (ac.row[0], af.row),
                (ac.offset, af.offset),
            ] {
                worst = worst.max((a - b).abs());
            }
        }
    }
    Verdict::new(
        worst <= 1e-9,
        format!("max |diff| {worst:.2e} over 3 bounds x 100 states"),
    )
}

struct Qp2 {
    q: [[f64; 2]; 2],
    c: [f64; 2],
    a: [[f64; 2]; 2],
    b: [f64; 2],
}

fn random_qp(rng: &mut ChaCha8Rng) -> Qp2 {
    loop {
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (l1, l2) = (rng.random_range(0.5..5.0), rng.random_range(0.5..5.0));
        let (s, c) = theta.sin_cos();
        let q = [
            [l1 * c * c + l2 * s * s, (l1 - l2) * c * s],
            [(l1 - l2) * c * s, l1 * s * s + l2 * c * c],
        ];
        let lin = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let anchor = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let angle = |rng: &mut ChaCha8Rng| {
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            [phi.cos(), phi.sin()]
        };
        let a = [angle(rng), angle(rng)];
        if (a[0][0] * a[1][0] + a[0][1] * a[1][1]).abs() > 0.95 {
            continue;
        }
        let b =
            [0, 1].map(|i| a[i][0] * anchor[0] + a[i][1] * anchor[1] + rng.random_range(0.0..2.0));
        return Qp2 { q, c: lin, a, b };
    }
}

/// Refined grid over the dual multipliers, mapped back to the primal.
fn dual_grid(p: &Qp2) -> [f64; 2] {
    let q = p.q;
    let det = q[0][0] * q[1][1] - q[0][1] * q[1][0];
    let qinv = [
        [q[1][1] / det, -q[0][1] / det],
        [-q[1][0] / det, q[0][0] / det],
    ];
    let primal = |l: [f64; 2]| {
        let w = [0, 1].map(|i| p.c[i] + p.a[0][i] * l[0] + p.a[1][i] * l[1]);
        let z = [0, 1].map(|i| -(qinv[i][0] * w[0] + qinv[i][1] * w[1]));
        (w, z)
    };
    let dual = |l: [f64; 2]| {
        let (w, z) = primal(l);
        0.5 * (w[0] * z[0] + w[1] * z[1]) - p.b[0] * l[0] - p.b[1] * l[1]
    };
    let mut center = [100.0, 100.0];
    let mut half = 100.0;
    let mut best = (center, dual(center));
    while half > 1e-11 {
        let step = half / 30.0;
        for i in -30..=30 {
            for j in -30..=30 {
                let l = [
                    (center[0] + i as f64 * step).max(0.0),
                    (center[1] + j as f64 * step).max(0.0),
                ];
                let g = dual(l);
                if g > best.1 {
                    best = (l, g);
                }
            }
        }
        center = best.0;
        half *= 0.7;
    }
    primal(best.0).1
}

fn qp_exactness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut kkt, mut dist, mut infeasible) = (0.0f64, 0.0f64, 0);
    for _ in 0..1000 {
        let inst = random_qp(&mut rng);
        let p = QpProblem::new(
            inst.q.iter().map(|r| r.to_vec()).collect(),
            inst.c.to_vec(),
            inst.a.iter().map(|r| r.to_vec()).collect(),
            inst.b.to_vec(),
        )
        .unwrap();
        let sol = solve_qp(&p);
        if sol.status != QpStatus::Optimal {
            infeasible += 1;
            continue;
        }
        let comp = sol
            .multipliers
            .iter()
            .zip(&inst.a)
            .zip(&inst.b)
            .map(|((l, a), b)| (l * (a[0] * sol.z[0] + a[1] * sol.z[1] - b)).abs())
            .fold(0.0, f64::max);
        let dual_neg = sol
            .multipliers
            .iter()
            .map(|l| (-l).max(0.0))
            .fold(0.0, f64::max);
        kkt = kkt
            .max(p.stationarity_residual(&sol.z, &sol.multipliers))
            .max(p.max_violation(&sol.z))
            .max(comp)
            .max(dual_neg);
        let g = dual_grid(&inst);
        dist = dist.max(((sol.z[0] - g[0]).powi(2) + (sol.z[1] - g[1]).powi(2)).sqrt());
    }
    Verdict::new(
        kkt <= 1e-9 && dist <= 1e-6 && infeasible == 0,
        format!("max KKT residual {kkt:.2e}, max distance to grid oracle {dist:.2e}"),
    )
}

fn fd_gradient(f: &SmoothScalarField, x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let h = 1e-3 * (1.0 + x[i].abs());
            let at = |s: f64| {
                let mut y = x.to_vec();
                y[i] += s;
                f.value(&y).unwrap()
            };
            (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
        })
        .collect()
}

fn derivatives() -> Verdict {
    let p = AccParameters::default();
    let (drcbf, adrcbf, hocbf) = chains(&p, 45.25f64.sqrt());
    let clf = acc_clf(&p);
    let b = acc_barrier(&p);
    let mut fields = drcbf.fields();
    fields.extend(adrcbf.fields());
    fields.extend(hocbf.fields());
    fields.push(&clf.v);
    fields.push(&b);
    let states = interior_states(&p, 9, 100, 0.5);
    let mut worst = 0.0f64;
    for f in &fields {
        for x in &states {
            for (a, e) in f.gradient(x).unwrap().iter().zip(fd_gradient(f, x)) {
                worst = worst.max((a - e).abs() / a.abs().max(1.0));
            }
        }
    }
    Verdict::new(
        worst <= 1e-6,
        format!(
            "{} fields x 100 states, max rel. error {worst:.2e}",
            fields.len()
        ),
    )
}

fn pole_coefficients() -> Verdict {
    let acc = coefficients_from_poles(&PoleSet::new(vec![5.0, 10.0]).unwrap());
    let exact = acc.row(2) == [50.0, 15.0] && acc.row(1) == [5.0];
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=5);
        let poles: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..20.0)).collect();
        let t = coefficients_from_poles(&PoleSet::new(poles.clone()).unwrap());
        for i in 1..=n {
            let scale: f64 = poles[..i].iter().map(|p| 1.0 + p).product();
            for &p in &poles[..i] {
                worst = worst.max(t.characteristic(i, -p).abs() / scale);
            }
        }
    }
    Verdict::new(
        exact && worst <= 1e-9,
        format!(
            "(5,10) -> {:?}; max scaled root residual {worst:.2e}",
            acc.row(2)
        ),
    )
}

fn determinism(first: &Run, dir: &Path) -> Verdict {
    let again = run_case(1, CaseVariant::new(ControllerMode::Drcbf));
    let (a, b) = (dir.join("a.csv"), dir.join("b.csv"));
    write_csv(&first.log, &a).unwrap();
    write_csv(&again.log, &b).unwrap();
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    Verdict::new(a == b, format!("{} bytes each", a.len()))
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let mut audit = PhiAudit::default();
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();

    let c1: Vec<(String, Run)> = [
        ControllerMode::Hocbf,
        ControllerMode::Drcbf,
        ControllerMode::Adrcbf,
    ]
    .into_iter()
    .map(|m| (m.to_string(), run_case(1, CaseVariant::new(m))))
    .collect();
    let refs: Vec<(&str, &Run)> = c1.iter().map(|(n, r)| (n.as_str(), r)).collect();
    results.push((1, "case 1 reproduction", case1(&refs)));
    audit.record("case1 drcbf", &c1[1].1.log);
    audit.record("case1 adrcbf", &c1[2].1.log);

    let d2 = run_case(2, CaseVariant::new(ControllerMode::Drcbf));
    let a2 = run_case(2, CaseVariant::new(ControllerMode::Adrcbf));
    results.push((2, "case 2 reproduction", case2(&d2, &a2)));
    audit.record("case2 drcbf", &d2.log);
    audit.record("case2 adrcbf", &a2.log);

    results.push((3, "case 3 ordering", case3(tmp.path(), &mut audit)));
    results.push((4, "forward invariance", invariance(&audit)));
    results.push((
        5,
        "derivative comparison along trajectory",
        comparison_along_trajectory(&c1[1].1),
    ));
    results.push((6, "young gap", young_gap()));
    results.push((7, "closed-form agreement", closed_forms()));
    results.push((8, "qp exactness", qp_exactness()));
    results.push((9, "derivative correctness", derivatives()));
    results.push((10, "pole coefficients", pole_coefficients()));
    results.push((11, "determinism", determinism(&c1[1].1, tmp.path())));

    let mut failed = 0;
    for (n, name, v) in &results {
        println!(
            "criterion {n:>2} {}: {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
