use contractlab_core::evolution::engine::{sample_rank, Fitness, Origin};
use contractlab_core::evolution::{
    evaluate_source, evolve, EvaluationContext, EvolutionParams, FailureKind, NativeRunner, RunFailure, ScriptedLlm,
    SolverRunner, Role, SEED_SOURCE,
};
use contractlab_core::model::{generate_random_logs, ContractSampler, OutcomeSpace};
use contractlab_core::{AgentSetting, MarketParams, Scenario};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn truth() -> Scenario {
    Scenario::new(
        AgentSetting::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.5]).unwrap(),
        OutcomeSpace::from_valuations(vec![0.0, 1.0]).unwrap(),
        MarketParams::default(),
    )
    .unwrap()
}

fn context() -> EvaluationContext {
    let s = truth();
    let logs = generate_random_logs(&s, 30, ContractSampler::default(), 4).unwrap();
    EvaluationContext::new(s, logs)
}

fn fenced(src: &str) -> String {
    format!("```python\n{src}\n```")
}

/// Sources `cost_<k>` claim action 1 costs `k / 10`; the derived contract
/// pays exactly that, which the true agent (cost 0.5) accepts only for
/// `k >= 5`, so fitness is `1 - k / 10` there and 0 below.
fn runner() -> NativeRunner {
    let mut r = NativeRunner::with_seed(MarketParams::default());
    for k in 0..10 {
        let c = k as f64 / 10.0;
        r = r.register(&format!("cost_{k}"), move |_| Ok(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, c]]));
    }
    r.register("crash", |_| Err(RunFailure::new(FailureKind::Crash, "Traceback: ZeroDivisionError")))
}

fn small_params() -> EvolutionParams {
    EvolutionParams {
        init_size: 4,
        selection_size: 4,
        mutation_count: 2,
        budget: 24,
    }
}

#[test]
fn rank_weights_follow_three_two_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = [0usize; 3];
    let draws = 10_000;
    for _ in 0..draws {
        counts[sample_rank(3, &mut rng)] += 1;
    }
    let expected = [3.0, 2.0, 1.0].map(|w| w / 6.0 * draws as f64);
    let chi2: f64 = counts
        .iter()
        .zip(expected)
        .map(|(&o, e)| (o as f64 - e).powi(2) / e)
        .sum();
    // 99.9% quantile of chi-square with 2 degrees of freedom
    assert!(chi2 < 13.816, "chi2 = {chi2}, counts = {counts:?}");
}

#[test]
fn cost_sources_have_expected_fitness() {
    let ctx = context();
    let mut r = runner();
    for k in 0..10 {
        let f = evaluate_source(&format!("cost_{k}"), &mut r, &ctx).unwrap().fitness;
        let want = if k >= 5 { 1.0 - k as f64 / 10.0 } else { 0.0 };
        assert!((f - want).abs() < 1e-9, "cost_{k}: {f}");
    }
}

#[test]
fn seed_echo_keeps_seed_fitness() {
    let ctx = context();
    let mut r = runner();
    let seed_fitness = evaluate_source(SEED_SOURCE, &mut r, &ctx).unwrap().fitness;
    let mut llm = ScriptedLlm::echo(&fenced(SEED_SOURCE));
    let out = evolve(SEED_SOURCE, &ctx, &small_params(), &mut llm, &mut r, 1).unwrap();
    assert_eq!(out.elitist.unwrap().fitness, Fitness::Scored(seed_fitness));
    assert_eq!(out.history.evaluations, 24);
    assert!(!out.history.partial);
    // identical population: no pair with distinct fitness exists
    assert_eq!(out.history.degenerate_epochs.len(), out.history.epochs_completed);
}

#[test]
fn superior_candidate_takes_over_and_stays() {
    let ctx = context();
    let mut r = runner();
    let mut llm = ScriptedLlm::new()
        .with_fallback(Role::Generator, fenced("cost_9"))
        .push(Role::Mutation, fenced("cost_5"))
        .with_fallback(Role::Mutation, fenced("cost_8"))
        .with_fallback(Role::Crossover, fenced("cost_7"))
        .with_fallback(Role::ShortReflector, "cheaper costs")
        .with_fallback(Role::LongReflector, "lower cost estimates");
    let out = evolve(SEED_SOURCE, &ctx, &small_params(), &mut llm, &mut r, 3).unwrap();
    let trace = &out.history.elitist_trace;
    assert!((trace[0].fitness - 0.1).abs() < 1e-9);
    let best = out.history.candidates.iter().find(|c| c.source_text == "cost_5").unwrap();
    assert_eq!(trace[1].candidate_id, best.id);
    assert!(trace.len() >= 4);
    assert!(trace[1..].iter().all(|m| m.candidate_id == best.id));
}

#[test]
fn identical_seeds_give_identical_digests() {
    let run = |seed| {
        let ctx = context();
        let mut r = runner();
        let mut llm = ScriptedLlm::new()
            .push(Role::Generator, fenced("cost_9"))
            .push(Role::Generator, fenced("cost_6"))
            .push(Role::Generator, "cost_7")
            .with_fallback(Role::Generator, fenced("crash"))
            .with_fallback(Role::Crossover, fenced("cost_8"))
            .with_fallback(Role::Mutation, fenced("cost_5"))
            .with_fallback(Role::ShortReflector, "s")
            .with_fallback(Role::LongReflector, "l");
        evolve(SEED_SOURCE, &ctx, &small_params(), &mut llm, &mut r, seed).unwrap().history
    };
    let a = run(11);
    assert_eq!(a.digest(), run(11).digest());
    assert_eq!(a, run(11));
    assert!(a.candidates[2].low_confidence);
}

#[test]
fn llm_exhaustion_stops_gracefully() {
    let ctx = context();
    let mut r = runner();
    let mut llm = ScriptedLlm::echo(&fenced("cost_6")).with_max_calls(5);
    let out = evolve(SEED_SOURCE, &ctx, &small_params(), &mut llm, &mut r, 0).unwrap();
    assert!(out.history.partial);
    assert!(out.history.stop_reason.contains("budget"));
    assert_eq!(out.elitist.unwrap().source_text, "cost_6");
    assert_eq!(out.history.llm_calls, 5);

    let mut silent = ScriptedLlm::new();
    let out = evolve(SEED_SOURCE, &ctx, &small_params(), &mut silent, &mut r, 0).unwrap();
    assert!(out.elitist.is_none() && out.history.partial);
}

#[test]
fn prompts_carry_instance_data() {
    let ctx = context();
    let mut r = runner();
    let mut llm = ScriptedLlm::echo(&fenced("cost_6")).with_max_calls(1);
    evolve(SEED_SOURCE, &ctx, &small_params(), &mut llm, &mut r, 0).unwrap();
    let (role, system, user) = &llm.transcript[0];
    assert_eq!(*role, Role::Generator);
    assert!(system.contains("Output Python code only"));
    assert!(user.contains("The ‘v’ example is shown as:\n[0.0, 1.0]"));
    assert!(user.contains("'Agent Action': -1") || user.contains("'Agent Action': 1"));
}

struct Recording<R> {
    inner: R,
    calls: usize,
}

impl<R: SolverRunner> SolverRunner for Recording<R> {
    fn run(
        &mut self,
        source: &str,
        request: &contractlab_core::evolution::SandboxRequest,
    ) -> Result<Vec<Vec<f64>>, RunFailure> {
        self.calls += 1;
        self.inner.run(source, request)
    }
}

fn completion(choice: u8) -> String {
    match choice % 13 {
        k @ 0..=9 => fenced(&format!("cost_{k}")),
        10 => fenced("crash"),
        11 => "no code at all".into(),
        _ => "```python\n```".into(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn evolution_invariants(
        gen in prop::collection::vec(any::<u8>(), 1..6),
        cross in prop::collection::vec(any::<u8>(), 1..8),
        muta in prop::collection::vec(any::<u8>(), 1..8),
        budget in 1usize..40,
        init_size in 1usize..6,
        half in 1usize..4,
        rng_seed in any::<u64>(),
    ) {
        let script = || {
            let mut llm = ScriptedLlm::new()
                .with_fallback(Role::ShortReflector, "s")
                .with_fallback(Role::LongReflector, "l")
                .with_fallback(Role::Generator, completion(gen[0]))
                .with_fallback(Role::Crossover, completion(cross[0]))
                .with_fallback(Role::Mutation, completion(muta[0]));
            for &g in &gen { llm = llm.push(Role::Generator, completion(g)); }
            for &c in &cross { llm = llm.push(Role::Crossover, completion(c)); }
            for &m in &muta { llm = llm.push(Role::Mutation, completion(m)); }
            llm
        };
        let params = EvolutionParams { init_size, selection_size: 2 * half, mutation_count: 1 + half % 2, budget };
        let ctx = context();
        let mut r = Recording { inner: runner(), calls: 0 };
        let out = evolve(SEED_SOURCE, &ctx, &params, &mut script(), &mut r, rng_seed).unwrap();
        let h = &out.history;

        prop_assert!(h.evaluations <= budget);
        prop_assert_eq!(h.evaluations, h.candidates.len());
        prop_assert!(!h.partial);
        prop_assert_eq!(h.evaluations, budget);
        let extraction_failures = h.candidates.iter()
            .filter(|c| matches!(&c.fitness, Fitness::Failed(f) if f.kind == FailureKind::Extraction))
            .count();
        prop_assert_eq!(r.calls + extraction_failures, h.evaluations);

        for w in h.elitist_trace.windows(2) {
            prop_assert!(w[1].fitness >= w[0].fitness);
        }
        let any_finite = h.candidates.iter().any(|c| c.fitness.score().is_some());
        let elitist = out.elitist.clone().unwrap();
        if any_finite {
            prop_assert!(elitist.fitness.score().is_some());
            let best = h.candidates.iter().filter_map(|c| c.fitness.score()).fold(f64::NEG_INFINITY, f64::max);
            // every evaluated candidate takes part in an elitist update
            prop_assert_eq!(elitist.fitness.score().unwrap(), best);
            prop_assert!(h.elitist_trace.last().unwrap().fitness == elitist.fitness.rank_key());
        }
        for c in &h.candidates {
            prop_assert!(!matches!(c.fitness, Fitness::Unevaluated));
            match c.origin {
                Origin::Crossover => {
                    prop_assert_eq!(c.parent_ids.len(), 2);
                    let (b, w) = (&h.candidates[c.parent_ids[0]], &h.candidates[c.parent_ids[1]]);
                    prop_assert!(b.fitness.rank_key() > w.fitness.rank_key());
                }
                Origin::Mutation => prop_assert_eq!(c.parent_ids.len(), 1),
                Origin::Init => prop_assert!(c.parent_ids.is_empty()),
                Origin::Seed => prop_assert!(false, "seed is not re-evaluated"),
            }
        }

        let mut r2 = Recording { inner: runner(), calls: 0 };
        let again = evolve(SEED_SOURCE, &ctx, &params, &mut script(), &mut r2, rng_seed).unwrap();
        prop_assert_eq!(h.digest(), again.history.digest());
    }
}
