//! Generic cascades against hand-derived ACC formulas and finite differences.

use std::sync::Arc;

use drcbf_core::acc::*;
use drcbf_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> AccParameters {
    AccParameters::default()
}

fn random_states(seed: u64, n: usize, keep: impl Fn(&[f64]) -> bool) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = vec![
            rng.random_range(OPERATING_DISTANCE.0..=OPERATING_DISTANCE.1),
            rng.random_range(OPERATING_SPEED.0..=OPERATING_SPEED.1),
        ];
        if keep(&x) {
            out.push(x);
        }
    }
    out
}

fn interior(p: &AccParameters) -> impl Fn(&[f64]) -> bool + '_ {
    move |x| closed_form_adrcbf_terms(p, x).is_ok_and(|c| c.phi1 > 1e-3)
}

fn drcbf_chain(p: &AccParameters, bound: f64) -> DrcbfChain {
    build_drcbf_chain(
        &acc_system(p).unwrap(),
        &acc_barrier(p),
        &p.coefficients().unwrap(),
        &p.k,
        bound,
        &operating_samples(10),
    )
    .unwrap()
}

fn adrcbf_chain(p: &AccParameters) -> AdrcbfChain {
    build_adrcbf_chain(
        &acc_system(p).unwrap(),
        &acc_barrier(p),
        &p.coefficients().unwrap(),
        &p.k,
        &p.r,
        Arc::new(ReciprocalEnergy),
        &interior_samples(p, 10),
    )
    .unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn drcbf_matches_closed_form() {
    let p = params();
    for bound in [0.0, 45.25f64.sqrt(), 162f64.sqrt()] {
        let chain = drcbf_chain(&p, bound);
        for x in random_states(1, 100, |_| true) {
            let cf = closed_form_drcbf_terms(&p, bound, &x).unwrap();
            assert!(close(chain.w()[0].value(&x).unwrap(), cf.w1, 1e-12));
            assert!(close(chain.w_m().value(&x).unwrap(), cf.w2, 1e-12));
            assert!(close(
                chain.tilde_b()[1].value(&x).unwrap(),
                cf.tilde_b1,
                1e-12
            ));
            let c = drcbf_constraint(&chain, &x).unwrap();
            assert_eq!(c.row.len(), 1);
            assert!((c.row[0] - cf.row).abs() <= 1e-15);
            assert!(
                (c.offset - cf.offset).abs() <= 1e-9,
                "{} vs {}",
                c.offset,
                cf.offset
            );
        }
    }
}

/// The lumped `(k_1 + k_2)𝒟²` penalty differs from the cascade's
/// `(c_1^2 k_1 + k_2)𝒟²` by `(c_1^2 − 1) k_1 𝒟²`.
#[test]
fn lumped_penalty_gap() {
    let p = params();
    let bound = 45.25f64.sqrt();
    let cf = closed_form_drcbf_terms(&p, bound, &[50.0, 20.0]).unwrap();
    let gap = cf.offset - cf.offset_lumped;
    assert!((gap - 14.0 * 0.1 * 45.25).abs() < 1e-9);
}

#[test]
fn adrcbf_matches_closed_form() {
    let p = params();
    let chain = adrcbf_chain(&p);
    for x in random_states(2, 100, interior(&p)) {
        let cf = closed_form_adrcbf_terms(&p, &x).unwrap();
        assert!(close(chain.gamma()[0].value(&x).unwrap(), cf.gamma0, 1e-12));
        assert!(close(chain.pi()[0].value(&x).unwrap(), cf.pi1, 1e-12));
        assert!(close(chain.psi()[1].value(&x).unwrap(), cf.psi1, 1e-12));
        assert!(close(chain.phi()[1].value(&x).unwrap(), cf.phi1, 1e-12));
        assert!(close(chain.gamma()[1].value(&x).unwrap(), cf.gamma1, 1e-12));
        assert!((chain.pi_m().value(&x).unwrap() - cf.pi2).abs() <= 1e-9);
        let c = adrcbf_constraint(&chain, &x).unwrap();
        assert!((c.row[0] - cf.row).abs() <= 1e-15);
        assert!((c.offset - cf.offset).abs() <= 1e-9);
    }
}

/// Rearranged: `c_0^2 b + c_1^2 π̃_1 + π̃_2 − u/M ≥ c_1^2 k_1 Γ_0 + k_2 Γ_1`.
#[test]
fn adrcbf_inline_shape() {
    let p = params();
    let chain = adrcbf_chain(&p);
    let c = p.coefficients().unwrap();
    for x in random_states(3, 50, interior(&p)) {
        let cf = closed_form_adrcbf_terms(&p, &x).unwrap();
        let b = x[0] - p.d_min;
        let row = adrcbf_constraint(&chain, &x).unwrap();
        for u in [-3000.0, 0.0, 1234.5] {
            let lhs = c.c(2, 0) * b + c.c(2, 1) * cf.pi1 + cf.pi2 - u / p.mass;
            let rhs = c.c(2, 1) * p.k[0] * cf.gamma0 + p.k[1] * cf.gamma1;
            assert!(((lhs - rhs) - row.residual(&[u])).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }
    }
}

#[test]
fn adrcbf_start_state() {
    let p = params();
    let chain = adrcbf_chain(&p);
    let x = [100.0, 13.89];
    assert!(interior_membership(&chain, &x).unwrap().in_open_set);
    let c = adrcbf_constraint(&chain, &x).unwrap();
    let cf = closed_form_adrcbf_terms(&p, &x).unwrap();
    assert!(c.is_finite());
    assert!((cf.gamma0 - 1.0 / 90.0).abs() < 1e-15);
    // energies are tiny compared with the barrier terms this far out
    assert!(p.k[1] * cf.gamma1 < 1e-2 * c.offset.abs());
}

#[test]
fn adrcbf_open_set_and_line_scan() {
    let p = params();
    let chain = adrcbf_chain(&p);
    let on_boundary = interior_membership(&chain, &[p.d_min, 15.0]).unwrap();
    assert!(!on_boundary.in_open_set);
    let mut last = f64::INFINITY;
    for i in 0..400 {
        let d = 60.0 - 50.0 * i as f64 / 399.0;
        let m = interior_membership(&chain, &[d, 15.0]).unwrap();
        assert!(m.min_margin < last, "margin not decreasing at D = {d}");
        last = m.min_margin;
    }
}

/// Along `b = s`, `v_f = v_l − 1/(4k_1) − 2k_1r_0/s` every level stays
/// positive while `b → 0⁺`, and the offset grows without bound.
#[test]
fn adrcbf_offset_diverges_near_boundary() {
    let p = params();
    let chain = adrcbf_chain(&p);
    let mut last = f64::NEG_INFINITY;
    for s in [1.0, 0.3, 0.1, 0.03, 0.01, 0.003] {
        let v = p.v_lead - 1.0 / (4.0 * p.k[0]) - 2.0 * p.k[0] * p.r[0] / s;
        let x = [p.d_min + s, v];
        assert!(interior_membership(&chain, &x).unwrap().in_open_set);
        let c = adrcbf_constraint(&chain, &x).unwrap();
        assert!(c.offset > last);
        last = c.offset;
    }
    assert!(last > 1e8);
    assert!(matches!(
        adrcbf_constraint(&chain, &[p.d_min, 10.0]),
        Err(Error::BoundaryProximity { .. })
    ));
}

/// `K B(φ) ≥ č ‖d‖²` whenever `φ ≤ δ ≤ K/(č D²)`, with
/// `K = k_l r_{l-1} c_{l-1}^{1}` and `č = Σ_j k_{j+1} c_j^1`.
#[test]
fn boundary_neighborhood_surrogate() {
    let p = params();
    let chain = adrcbf_chain(&p);
    let c = p.coefficients().unwrap();
    let c_check = p.k[0] * c.c(1, 0) + p.k[1] * c.c(1, 1);
    let d_test = 20.0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for level in 1..=2usize {
        let gain = p.k[level - 1] * p.r[level - 1] * c.c(1, level - 1);
        let delta = gain / (c_check * d_test * d_test);
        let mut hits = 0;
        for _ in 0..10_000 {
            if hits == 200 {
                break;
            }
            let target = delta * rng.random_range(1e-3..=1.0);
            let x = if level == 1 {
                // keep the upper level positive while b shrinks
                let v = p.v_lead
                    - 1.0 / (4.0 * p.k[0])
                    - 2.0 * p.k[0] * p.r[0] / target
                    - rng.random_range(0.0..5.0);
                vec![p.d_min + target, v]
            } else {
                // solve φ̃_1 = target for v_f at a random distance
                let b: f64 = rng.random_range(1.0..100.0);
                let v =
                    c.c(1, 0) * b + p.v_lead - 1.0 / (4.0 * p.k[0]) - p.k[0] * p.r[0] / b - target;
                vec![p.d_min + b, v]
            };
            let Ok(values) = chain.phi_values(&x) else {
                continue;
            };
            let phi = values[level - 1];
            if !(phi > 0.0 && phi <= delta) || values.iter().any(|v| *v <= 0.0) {
                continue;
            }
            hits += 1;
            let d_norm = d_test * rng.random_range(0.0..=1.0f64);
            let energy = ReciprocalEnergy.value(phi);
            assert!(gain * energy - c_check * d_norm * d_norm > 0.0);
        }
        assert_eq!(
            hits, 200,
            "level {level}: too few samples in the neighborhood"
        );
    }
}

#[test]
fn disturbance_gains_are_unit() {
    let p = params();
    let sys = acc_system(&p).unwrap();
    let chain = drcbf_chain(&p, 5.0);
    for x in random_states(5, 100, |_| true) {
        for level in chain.tilde_b() {
            let row = lie_h(level, &sys, &x).unwrap();
            let norm = row.iter().map(|a| a * a).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-14);
        }
    }
    let (eta, k) = estimate_optimal_gains(
        &sys,
        &acc_barrier(&p),
        162f64.sqrt(),
        &operating_samples(10),
    )
    .unwrap();
    assert!(eta.iter().all(|e| (e - 1.0).abs() < 1e-14));
    assert!(k
        .iter()
        .all(|k| (k - 1.0 / (2.0 * 162f64.sqrt())).abs() < 1e-15));
}

#[test]
fn relative_degrees() {
    let p = params();
    let sys = acc_system(&p).unwrap();
    let report =
        verify_relative_degree(&sys, &acc_barrier(&p), &random_states(6, 100, |_| true)).unwrap();
    assert!(report.ird_ok);
    assert!(report.drd_ok);
    assert_eq!(report.checked, 100);
}

#[test]
fn zero_channel_drcbf_equals_hocbf() {
    let p = AccParameters {
        disturbance_inputs: false,
        ..params()
    };
    let sys = acc_system(&p).unwrap();
    let hocbf = build_hocbf_chain(
        &sys,
        &acc_barrier(&p),
        &p.coefficients().unwrap(),
        &operating_samples(5),
    )
    .unwrap();
    let drcbf = drcbf_chain(&p, 0.0);
    for x in random_states(7, 100, |_| true) {
        let a = hocbf.constraint(&x).unwrap();
        let b = drcbf_constraint(&drcbf, &x).unwrap();
        assert_eq!(a.row, b.row);
        assert!((a.offset - b.offset).abs() <= 1e-12 * (1.0 + a.offset.abs()));
    }
}

/// Fourth-order central difference.
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

fn check_gradients(fields: &[&SmoothScalarField], states: &[Vec<f64>]) {
    for f in fields {
        for x in states {
            let g = f.gradient(x).unwrap();
            let fd = fd_gradient(f, x);
            for (a, b) in g.iter().zip(&fd) {
                let rel = (a - b).abs() / a.abs().max(1.0);
                assert!(rel <= 1e-6, "{}: {a} vs {b} at {x:?}", f.label());
            }
        }
    }
}

#[test]
fn field_gradients_match_finite_differences() {
    let p = params();
    let sys = acc_system(&p).unwrap();
    let coeffs = p.coefficients().unwrap();
    let states = random_states(8, 100, |x| x[0] > 11.0);
    let drcbf = drcbf_chain(&p, 6.7);
    let hocbf = build_hocbf_chain(&sys, &acc_barrier(&p), &coeffs, &[]).unwrap();
    let clf = acc_clf(&p);
    let b = acc_barrier(&p);
    let mut fields = drcbf.fields();
    fields.extend(hocbf.fields());
    fields.push(&clf.v);
    fields.push(&b);
    check_gradients(&fields, &states);

    let adrcbf = adrcbf_chain(&p);
    let interior_states = random_states(9, 100, |x| {
        closed_form_adrcbf_terms(&p, x).is_ok_and(|c| c.phi1 > 0.5) && x[0] > 11.0
    });
    check_gradients(&adrcbf.fields(), &interior_states);
}

#[test]
fn clf_lie_derivatives_against_finite_differences() {
    let p = params();
    let sys = acc_system(&p).unwrap();
    let clf = acc_clf(&p);
    for x in random_states(10, 100, |_| true) {
        let lf = lie_f(&clf.v, &sys, &x).unwrap();
        let lg = lie_g(&clf.v, &sys, &x).unwrap()[0];
        // directional derivative of V along f and along g
        let dir = |v: &[f64]| {
            let h = 1e-4;
            let at = |s: f64| clf.v.value(&[x[0] + s * v[0], x[1] + s * v[1]]).unwrap();
            (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h)
        };
        let f = sys.drift(&x).unwrap();
        let g: Vec<f64> = sys.input_matrix(&x).unwrap().iter().map(|r| r[0]).collect();
        assert!((lf - dir(&f)).abs() <= 1e-6 * lf.abs().max(1.0));
        assert!((lg - dir(&g)).abs() <= 1e-6 * lg.abs().max(1e-3));
        // paper form: L_fV + L_gV u = (2/M)(v_f − v_d)(u − F_r)
        let u = 500.0;
        let paper = 2.0 / p.mass * (x[1] - p.v_desired) * (u - p.drag(x[1]));
        assert!((lf + lg * u - paper).abs() <= 1e-12 * (1.0 + paper.abs()));
    }
}

#[test]
fn drcbf_closed_form_limits() {
    let mut p = params();
    p.k = vec![1e12, 1e12];
    let cf = closed_form_drcbf_terms(&p, 1.0, &[100.0, 13.89]).unwrap();
    assert!((cf.w1 - (20.0 - 13.89)).abs() < 1e-9);

    let p = params();
    let far = closed_form_adrcbf_terms(&p, &[1e9, 13.89]).unwrap();
    let base = p.drag(13.89) / p.mass - 1.0 / (4.0 * p.k[1]);
    assert!((far.pi2 - base).abs() < 1e-12);
}
