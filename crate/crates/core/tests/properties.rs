mod common;

use lcmis_core::diffusion::{make_schedule, marginal_params, ScheduleKind};
use lcmis_core::miner::{generate_pairs, rate_level, LlmGenerator, Pattern};
use lcmis_core::llm::ScriptedCompletion;
use lcmis_core::moce::bisect_switch;
use lcmis_core::scoring::{batch_disparity, concept_score, coordination_score, disparity};
use lcmis_core::world::{assign_component, build_world, tag_set, tilted_conditional, WorldConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn point(dim: usize) -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-5.0f64..5.0, dim).prop_map(DVector::from_vec)
}

fn world_and_point() -> impl Strategy<Value = (lcmis_core::world::ConceptWorld, DVector<f64>)> {
    common::world().prop_flat_map(|w| {
        let d = w.dim();
        (Just(w), point(d))
    })
}

/// Direct evaluation of log sum_k w_k N(x; mu_k, Sigma_k) with an explicit
/// inverse and determinant.
fn naive_log_density(cfg: &WorldConfig, x: &DVector<f64>) -> f64 {
    let d = cfg.dim;
    let mut total = 0.0;
    for c in &cfg.components {
        let cov = DMatrix::from_row_slice(d, d, c.cov.as_ref().unwrap());
        let inv = cov.clone().try_inverse().unwrap();
        let diff = x - DVector::from_column_slice(&c.mean);
        let quad = (diff.transpose() * inv * &diff)[(0, 0)];
        let norm = (2.0 * std::f64::consts::PI).powf(d as f64 / 2.0) * cov.determinant().sqrt();
        total += c.weight * (-0.5 * quad).exp() / norm;
    }
    total.ln()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn zero_tilt_is_identity_on_full_support(w in common::world()) {
        let prompt = common::concept_names(&w);
        let t = tilted_conditional(&w, &prompt, 0.0).unwrap();
        for (a, b) in t.weights().iter().zip(w.weights()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn tilt_normalizes_and_keeps_geometry(w in common::world(), lambda in 0.0f64..8.0, pick in 0usize..3) {
        let names = common::concept_names(&w);
        let prompt = [names[pick % names.len()].clone()];
        let t = tilted_conditional(&w, &prompt, lambda).unwrap();
        prop_assert!((t.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (a, b) in t.components().iter().zip(w.components()) {
            prop_assert_eq!(a.mean(), b.mean());
            prop_assert_eq!(a.covariance(), b.covariance());
            prop_assert_eq!(&a.tags, &b.tags);
        }
    }

    #[test]
    fn strictly_maximal_overlap_weight_grows_with_lambda(w in common::world(), subset in 1u8..8) {
        let names: Vec<String> = common::concept_names(&w)
            .into_iter()
            .enumerate()
            .filter(|(i, _)| subset & (1 << i) != 0)
            .map(|(_, n)| n)
            .collect();
        prop_assume!(!names.is_empty());
        let tags = w.prompt_tags(&names).unwrap();
        let overlaps: Vec<usize> = w.components().iter().map(|c| c.tags.intersection(&tags).count()).collect();
        let max = *overlaps.iter().max().unwrap();
        prop_assume!(max > 0);
        for k in 0..overlaps.len() {
            if overlaps[k] == max && overlaps.iter().filter(|&&o| o == max).count() == 1 {
                let mut last = 0.0;
                for lambda in [0.0, 1.0, 2.0, 4.0] {
                    let wk = tilted_conditional(&w, &names, lambda).unwrap().weights()[k];
                    prop_assert!(wk >= last - 1e-12);
                    last = wk;
                }
            }
        }
    }

    #[test]
    fn assignment_ignores_uniform_weight_scaling((cfg, x) in common::world_config().prop_flat_map(|c| {
        let d = c.dim;
        (Just(c), point(d))
    }), scale in 0.1f64..10.0) {
        let w = build_world(&cfg).unwrap();
        // Scaled weights no longer sum to one; compare component log terms
        // shifted by ln(scale), which is what a rescaled mixture would give.
        let base = w.mixture().component_log_terms(&x);
        let shifted: Vec<f64> = base.iter().map(|t| t + scale.ln()).collect();
        let argmax = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, t)| if *t > v[b] { i } else { b });
        prop_assert_eq!(argmax(&base), argmax(&shifted));
        prop_assert_eq!(assign_component(&w, &x), argmax(&base));
        prop_assert_eq!(assign_component(&w, &x), assign_component(&w, &x));
    }

    #[test]
    fn score_matches_finite_differences((w, x) in world_and_point(), t in 0usize..=200) {
        let schedule = make_schedule(ScheduleKind::LinearAlphaBar, 200, 1e-4).unwrap();
        let m = marginal_params(&w, &schedule, t);
        let g = m.score(&x);
        let h = 1e-4;
        let mut fd = DVector::zeros(x.len());
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            fd[i] = (m.log_density(&xp) - m.log_density(&xm)) / (2.0 * h);
        }
        let rel = (&g - &fd).norm() / g.norm().max(1.0);
        prop_assert!(rel < 1e-5, "relative error {rel}");
    }

    #[test]
    fn log_density_matches_naive_sum((cfg, x) in common::world_config().prop_flat_map(|c| {
        let d = c.dim;
        (Just(c), prop::collection::vec(-3.0f64..3.0, d).prop_map(DVector::from_vec))
    })) {
        let w = build_world(&cfg).unwrap();
        let fast = w.mixture().log_density(&x);
        let naive = naive_log_density(&cfg, &x);
        prop_assert!((fast - naive).abs() < 1e-12 * naive.abs().max(1.0), "{fast} vs {naive}");
    }

    #[test]
    fn scores_and_disparities_are_bounded_and_antisymmetric((w, x) in world_and_point()) {
        let names = common::concept_names(&w);
        for a in &names {
            let s = coordination_score(&w, &x, a).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            let primary = &w.concept(a).unwrap().primary_tags;
            prop_assert!(s >= concept_score(&w, &x, primary));
            for b in &names {
                let d = disparity(&w, &x, a, b).unwrap();
                prop_assert!((-1.0..=1.0).contains(&d));
                prop_assert_eq!(d, -disparity(&w, &x, b, a).unwrap());
            }
        }
    }

    #[test]
    fn complementary_tag_sets_partition_the_posterior((w, x) in world_and_point()) {
        // Components carrying A versus components without A.
        let with_a = tag_set(&["A"]);
        let rest = tag_set(&["B", "C"]);
        prop_assume!(w.components().iter().all(|c| c.tags.contains("A") != c.tags.iter().any(|t| rest.contains(t))));
        let s = concept_score(&w, &x, &with_a) + concept_score(&w, &x, &rest);
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn batch_mean_is_mean_of_samples(w in common::world(), xs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..20)) {
        let names = common::concept_names(&w);
        let d = w.dim();
        let samples: Vec<DVector<f64>> = xs.iter().map(|v| DVector::from_column_slice(&v[..d])).collect();
        let a = &names[0];
        let b = names.last().unwrap();
        let r = batch_disparity(&w, &samples, a, b).unwrap();
        let mean = r.per_sample_d.iter().sum::<f64>() / r.n as f64;
        prop_assert!((r.mean_d - mean).abs() < 1e-12);
        prop_assert_eq!(r.n, samples.len());
    }

    #[test]
    fn bisection_on_a_decreasing_control_keeps_a_valid_bracket(
        steps in 8usize..400,
        root in 0.0f64..1.0,
        slope in 0.5f64..5.0,
        tau in 0.01f64..0.3,
        iters in 1usize..6,
    ) {
        let control = |n1: usize| Ok(slope * (root - n1 as f64 / steps as f64));
        let out = bisect_switch(steps, tau, iters, control).unwrap();
        prop_assert!(out.trace.len() <= iters);
        let (mut lo, mut hi) = (0usize, steps);
        for (i, s) in out.trace.iter().enumerate() {
            prop_assert_eq!(s.n1, (lo + hi) / 2);
            prop_assert!(s.n1 <= steps);
            if s.d_first.abs() <= tau {
                prop_assert!(out.converged);
                prop_assert_eq!(i, out.trace.len() - 1);
            } else if s.d_first > 0.0 {
                lo = s.n1;
            } else {
                hi = s.n1;
            }
        }
        if out.converged {
            prop_assert!(out.trace[out.chosen].d_first.abs() <= tau);
        } else {
            let best = out.trace.iter().map(|s| s.d_first.abs()).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(out.trace[out.chosen].d_first.abs(), best);
        }
    }

    #[test]
    fn level_round_trips_through_serde(count in 0u32..=20) {
        let level = rate_level(count).unwrap();
        let back: lcmis_core::miner::Level = serde_json::from_str(&serde_json::to_string(&level).unwrap()).unwrap();
        prop_assert_eq!(back, level);
        prop_assert!(rate_level(count + 21).is_err());
    }

    #[test]
    fn generated_batches_never_repeat_a_noun(lines in prop::collection::vec((0usize..6, 0usize..6), 1..15)) {
        let nouns = ["coffee", "tea", "milk", "juice", "soda", "wine"];
        let cups = ["mug", "vase", "bucket", "flute", "bowl", "coffee"];
        let reply: String = lines
            .iter()
            .enumerate()
            .map(|(i, (a, b))| format!("{}. {}, {}\n", i + 1, nouns[*a], cups[*b]))
            .collect();
        let mut g = LlmGenerator::new(ScriptedCompletion::new([reply]));
        let pairs = generate_pairs(&mut g, &Pattern::seed("Beverage and erroneous container"), &[], 20).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for p in &pairs {
            for n in p.nouns() {
                prop_assert!(seen.insert(n));
            }
        }
    }
}
