use proptest::prelude::*;
use qfusion::channel::transition_matrix;
use qfusion::design::{fi_objective, normalized_fi};
use qfusion::detector::{f_term, interval_prob, ClairvoyantModel, QuantizedModel};
use qfusion::quantizer::{CodeIndex, QuantizerKind, QuantizerSpec};
use qfusion::signal::SystemConfig;

fn cfg(m: usize, signal_var: f64, h: &[f64], pe: f64) -> SystemConfig {
    SystemConfig {
        num_sensors: m,
        signal_dim: 100,
        sparsity: 0.03,
        signal_var,
        noise_var: 1.3,
        h_norm_sq: h.to_vec(),
        pe: vec![pe; m],
    }
}

fn specs() -> Vec<(QuantizerSpec, f64)> {
    vec![
        (QuantizerSpec::new(QuantizerKind::Rq, 2, vec![-1.1, 0.2, 0.9]).unwrap(), 0.05),
        (QuantizerSpec::new(QuantizerKind::Lq, 2, vec![0.4, 1.0, 1.9]).unwrap(), 0.2),
        (QuantizerSpec::new(QuantizerKind::Lq, 1, vec![1.2]).unwrap(), 0.0),
        (QuantizerSpec::new(QuantizerKind::Rq, 1, vec![-0.7]).unwrap(), 0.1),
    ]
}

/// Every joint report of two sensors with `levels` words each.
fn joint(levels: u32, bits: u8) -> Vec<[CodeIndex; 2]> {
    let mut out = Vec::new();
    for a in 1..=levels {
        for b in 1..=levels {
            out.push([CodeIndex::new(a, bits).unwrap(), CodeIndex::new(b, bits).unwrap()]);
        }
    }
    out
}

#[test]
fn score_variance_equals_fisher_information() {
    let c = cfg(2, 5.0, &[0.8, 1.4], 0.0);
    for (spec, pe) in specs() {
        let model = QuantizedModel::new(&c, std::slice::from_ref(&spec), &[pe]).unwrap();
        for p in [0.0, 0.03, 0.2] {
            let pmfs: Vec<Vec<f64>> = (0..2).map(|m| model.received_pmf(m, p).unwrap()).collect();
            let (mut mean, mut second) = (0.0, 0.0);
            for r in joint(spec.levels() as u32, spec.bits()) {
                let prob = pmfs[0][r[0].offset()] * pmfs[1][r[1].offset()];
                let s = model.score(&r, p).unwrap();
                mean += prob * s;
                second += prob * s * s;
            }
            let fi = model.fisher_information(p).unwrap();
            assert!(mean.abs() < 1e-10, "{spec:?} p={p}: mean {mean}");
            assert!((second - fi).abs() < 1e-10 * fi.max(1.0), "{spec:?} p={p}: {second} vs {fi}");
        }
    }
}

#[test]
fn score_matches_finite_difference() {
    let c = cfg(2, 5.0, &[0.8, 1.4], 0.0);
    let h = 1e-6;
    for (spec, pe) in specs() {
        let model = QuantizedModel::new(&c, std::slice::from_ref(&spec), &[pe]).unwrap();
        for p in [0.0, 0.03, 0.2] {
            for r in joint(spec.levels() as u32, spec.bits()) {
                let fd = (model.log_likelihood(&r, p + h).unwrap() - model.log_likelihood(&r, p - h).unwrap()) / (2.0 * h);
                let s = model.score(&r, p).unwrap();
                assert!((fd - s).abs() <= 1e-5 * s.abs().max(1e-3), "{spec:?} p={p} {r:?}: {fd} vs {s}");
            }
        }
    }
}

#[test]
fn clairvoyant_score_matches_finite_difference() {
    let c = cfg(3, 4.0, &[0.5, 1.0, 2.0], 0.0);
    let model = ClairvoyantModel::new(&c).unwrap();
    let y = [0.4, -2.1, 1.3];
    let h = 1e-6;
    for p in [0.0, 0.03, 0.2] {
        let fd = (model.log_likelihood(&y, p + h).unwrap() - model.log_likelihood(&y, p - h).unwrap()) / (2.0 * h);
        let s = model.score(&y, p).unwrap();
        assert!((fd - s).abs() <= 1e-5 * s.abs());
    }
}

#[test]
fn expected_curvature_is_minus_information() {
    // E[d^2 log L / dp^2] = -FI, by second differences over the exact law.
    let c = cfg(2, 5.0, &[0.8, 1.4], 0.0);
    let h = 1e-4;
    for (spec, pe) in specs() {
        let model = QuantizedModel::new(&c, std::slice::from_ref(&spec), &[pe]).unwrap();
        let p = 0.05;
        let pmfs: Vec<Vec<f64>> = (0..2).map(|m| model.received_pmf(m, p).unwrap()).collect();
        let mut curvature = 0.0;
        for r in joint(spec.levels() as u32, spec.bits()) {
            let prob = pmfs[0][r[0].offset()] * pmfs[1][r[1].offset()];
            let l = |x: f64| model.log_likelihood(&r, x).unwrap();
            curvature += prob * (l(p + h) - 2.0 * l(p) + l(p - h)) / (h * h);
        }
        let fi = model.fisher_information(p).unwrap();
        assert!((curvature + fi).abs() < 1e-4 * fi, "{curvature} vs {fi}");
    }
}

#[test]
fn symmetric_rq_matches_one_bit_lq() {
    // With pe = 0 the sign of y carries no information, so a symmetric
    // 2-bit RQ equals a 1-bit LQ at the same magnitude threshold.
    for b in [0.5, 1.0, 1.7] {
        let rq = QuantizerSpec::new(QuantizerKind::Rq, 2, vec![-b, 0.0, b]).unwrap();
        let lq = QuantizerSpec::new(QuantizerKind::Lq, 1, vec![b]).unwrap();
        let a = normalized_fi(&rq, 0.0, 1.0).unwrap();
        let c = normalized_fi(&lq, 0.0, 1.0).unwrap();
        assert!((a - c).abs() < 1e-13, "{a} vs {c}");
    }
}

fn permuted_objective(spec: &QuantizerSpec, pe: f64, perm: &[u8]) -> f64 {
    let q = spec.bits();
    let g = transition_matrix(u32::from(q), pe).unwrap();
    let n = spec.levels();
    let relabel = |i: usize| -> usize {
        (0..q).fold(0usize, |acc, k| acc | (((i >> k) & 1) << perm[usize::from(k)]))
    };
    let qv: Vec<f64> = (1..=n as u32).map(|j| interval_prob(spec, CodeIndex::new(j, q).unwrap(), 1.0)).collect();
    let fv: Vec<f64> = (1..=n as u32).map(|j| f_term(spec, CodeIndex::new(j, q).unwrap(), 1.0)).collect();
    let mut total = 0.0;
    for i in 0..n {
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..n {
            let e = g.row(relabel(i))[relabel(j)];
            num += e * fv[j];
            den += e * qv[j];
        }
        total += num * num / den;
    }
    match spec.kind() {
        QuantizerKind::Rq => 0.5 * total,
        QuantizerKind::Lq => total,
    }
}

#[test]
fn objective_invariant_to_bit_permutation() {
    let spec = QuantizerSpec::new(QuantizerKind::Lq, 3, vec![0.3, 0.7, 1.1, 1.5, 2.0, 2.5, 3.2]).unwrap();
    let base = fi_objective(spec.kind(), 3, spec.thresholds(), 0.15, 1.0).unwrap();
    for perm in [[0u8, 1, 2], [2, 1, 0], [1, 2, 0], [0, 2, 1]] {
        let v = permuted_objective(&spec, 0.15, &perm);
        assert!((v - base).abs() < 1e-13, "{perm:?}: {v} vs {base}");
    }
}

fn sorted_thresholds(kind: QuantizerKind, raw: Vec<f64>) -> Option<Vec<f64>> {
    let mut t = raw;
    if kind == QuantizerKind::Lq {
        t.iter_mut().for_each(|x| *x = x.abs() + 0.01);
    }
    t.sort_by(f64::total_cmp);
    t.windows(2).all(|w| w[1] - w[0] > 1e-6).then_some(t)
}

proptest! {
    #[test]
    fn data_processing_bound(
        kind in prop_oneof![Just(QuantizerKind::Rq), Just(QuantizerKind::Lq)],
        raw in proptest::collection::vec(-4.0f64..4.0, 3),
        pe in 0.0f64..0.5,
        p in 0.0f64..0.5,
        signal_var in 0.1f64..20.0,
        h in 0.2f64..3.0,
    ) {
        let t = sorted_thresholds(kind, raw);
        prop_assume!(t.is_some());
        let spec = QuantizerSpec::new(kind, 2, t.unwrap()).unwrap();
        let c = cfg(3, signal_var, &[h, 1.0, 0.5], pe);
        let fq = QuantizedModel::new(&c, &[spec], &[pe]).unwrap().fisher_information(p).unwrap();
        let fc = ClairvoyantModel::new(&c).unwrap().fisher_information(p).unwrap();
        prop_assert!(fq <= fc * (1.0 + 1e-12), "{fq} > {fc}");
    }

    #[test]
    fn telescoping_weights(
        kind in prop_oneof![Just(QuantizerKind::Rq), Just(QuantizerKind::Lq)],
        raw in proptest::collection::vec(-4.0f64..4.0, 7),
        pe in 0.0f64..0.45,
    ) {
        let t = sorted_thresholds(kind, raw);
        prop_assume!(t.is_some());
        let spec = QuantizerSpec::new(kind, 3, t.unwrap()).unwrap();
        let c = cfg(1, 2.0, &[1.0], pe);
        let model = QuantizedModel::new(&c, &[spec], &[pe]).unwrap();
        if let Ok(tables) = model.tables() {
            let pmf = tables.h0_pmf(0);
            let mean: f64 = pmf.iter().zip(&tables.sensors[0].weights).map(|(p, w)| p * w).sum();
            prop_assert!(mean.abs() < 1e-10);
        }
    }
}
