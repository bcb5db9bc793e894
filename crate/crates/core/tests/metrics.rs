use shdf_core::metrics::per_prompt_squared_error;
use shdf_core::{
    build_tree, compile_plan, diversity_pairwise_cosine, execute_plan, generate_synthetic,
    make_schedule, quality_mse, run_metrics, run_standard, sweep_csv, sweep_tau, ConditionMapSpec,
    Embedding, Error, ExecOptions, PhiVariant, PromptRecord, PromptSet, SamplerVariant,
    ScheduleCurve, ScheduleParams, SweepConfig, SyntheticSpec, ToyWorld,
};

fn synthetic(clusters: usize, per: usize, dim: usize, seed: u64) -> PromptSet {
    generate_synthetic(&SyntheticSpec {
        clusters,
        per_cluster: per,
        dimension: dim,
        jitter: 0.02,
        seed,
    })
    .unwrap()
}

fn sweep_config(taus: &[f64]) -> SweepConfig {
    SweepConfig {
        taus: taus.to_vec(),
        phi: PhiVariant::Main,
        master_seed: 5,
        exec: ExecOptions::default(),
    }
}

#[test]
fn point_mass_world_converges_exactly_at_zero_tau() {
    let prompts = synthetic(3, 3, 8, 1);
    let world = ToyWorld::new(8, 8, 1e-6, ConditionMapSpec::Identity).unwrap();
    let schedule = make_schedule(40, SamplerVariant::Deterministic, ScheduleCurve::Cosine).unwrap();
    let tree = build_tree(&prompts).unwrap();
    let plan = compile_plan(&tree, &ScheduleParams::new(40, 0.0).unwrap(), None).unwrap();
    let out = execute_plan(&plan, &tree, &world, &schedule, 0, ExecOptions::default()).unwrap();
    assert!(quality_mse(&out, &world, &prompts).unwrap() <= 1e-10);
}

#[test]
fn quarter_budget_truncation_loses_to_hierarchical_run() {
    let prompts = synthetic(4, 4, 16, 2);
    let world = ToyWorld::new(16, 16, 1e-6, ConditionMapSpec::Identity).unwrap();
    let schedule = make_schedule(40, SamplerVariant::Deterministic, ScheduleCurve::Cosine).unwrap();
    let tree = build_tree(&prompts).unwrap();
    let plan = compile_plan(&tree, &ScheduleParams::new(40, 1.0).unwrap(), None).unwrap();
    let out = execute_plan(&plan, &tree, &world, &schedule, 3, ExecOptions::default()).unwrap();
    let budget = plan.total_evaluations.div_ceil(prompts.len()).max(10);
    let truncated = run_standard(
        &prompts,
        &world,
        &schedule,
        3,
        Some(budget),
        ExecOptions::default(),
    )
    .unwrap();
    assert!(
        quality_mse(&truncated, &world, &prompts).unwrap()
            > quality_mse(&out, &world, &prompts).unwrap()
    );
}

#[test]
fn duplicated_prompts_have_identical_errors() {
    let prompts = PromptSet::new(
        (0..5)
            .map(|i| PromptRecord {
                id: format!("d{i}"),
                prompt: None,
                embedding: Embedding::new(vec![0.1, 0.7, -0.2]).unwrap(),
            })
            .collect(),
    )
    .unwrap();
    let world = ToyWorld::new(3, 3, 0.4, ConditionMapSpec::Identity).unwrap();
    let schedule = make_schedule(10, SamplerVariant::Deterministic, ScheduleCurve::Cosine).unwrap();
    let tree = build_tree(&prompts).unwrap();
    let plan = compile_plan(&tree, &ScheduleParams::new(10, 1.0).unwrap(), None).unwrap();
    let out = execute_plan(&plan, &tree, &world, &schedule, 0, ExecOptions::default()).unwrap();
    let errs = per_prompt_squared_error(&out, &world, &prompts).unwrap();
    assert!(errs.iter().all(|e| *e == errs[0]));
    let m = run_metrics(&plan, &out, &world, &prompts, 0).unwrap();
    assert_eq!(m.savings_fraction, 1.0 - 1.0 / 5.0);
    assert_eq!(m.diversity_mean_pairwise_cosine, Some(1.0));
}

#[test]
fn missing_output_is_a_usage_error() {
    let prompts = synthetic(1, 2, 4, 0);
    let world = ToyWorld::new(4, 4, 1.0, ConditionMapSpec::Identity).unwrap();
    let schedule = make_schedule(4, SamplerVariant::Deterministic, ScheduleCurve::Cosine).unwrap();
    let mut out =
        run_standard(&prompts, &world, &schedule, 0, None, ExecOptions::default()).unwrap();
    out.samples.pop();
    assert!(matches!(
        quality_mse(&out, &world, &prompts),
        Err(Error::Usage(_))
    ));
}

#[test]
fn sweep_savings_match_plans_and_increase_with_tau() {
    let prompts = synthetic(16, 16, 32, 7);
    let world = ToyWorld::new(32, 32, 0.1, ConditionMapSpec::Identity).unwrap();
    let schedule = make_schedule(40, SamplerVariant::Deterministic, ScheduleCurve::Cosine).unwrap();
    let tree = build_tree(&prompts).unwrap();
    let taus = [0.0, 0.5, 1.0, 1.5];
    let rows = sweep_tau(&prompts, &tree, &world, &schedule, &sweep_config(&taus)).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].savings_fraction, 0.0);
    for w in rows.windows(2) {
        assert!(w[1].savings_fraction >= w[0].savings_fraction);
        assert!(w[1].evaluations_total <= w[0].evaluations_total);
    }
    for (row, &tau) in rows.iter().zip(&taus) {
        let plan = compile_plan(&tree, &ScheduleParams::new(40, tau).unwrap(), None).unwrap();
        assert_eq!(row.savings_fraction, plan.savings_fraction);
        assert!(row.mean_squared_error_to_target >= 0.0);
    }
    let again = sweep_tau(&prompts, &tree, &world, &schedule, &sweep_config(&taus)).unwrap();
    assert_eq!(sweep_csv(&rows), sweep_csv(&again));
}

#[test]
fn equal_plans_give_equal_metrics() {
    let prompts = synthetic(4, 4, 16, 9);
    let world = ToyWorld::new(16, 16, 0.2, ConditionMapSpec::Identity).unwrap();
    let schedule = make_schedule(20, SamplerVariant::Deterministic, ScheduleCurve::Cosine).unwrap();
    let tree = build_tree(&prompts).unwrap();
    // Both thresholds stay below every internal score at every step.
    let smallest = tree
        .nodes()
        .iter()
        .filter(|n| !n.is_leaf())
        .map(|n| n.score)
        .fold(f64::INFINITY, f64::min);
    let taus = [smallest * 0.1, smallest * 0.2];
    let rows = sweep_tau(&prompts, &tree, &world, &schedule, &sweep_config(&taus)).unwrap();
    let (mut a, b) = (rows[0].clone(), rows[1].clone());
    a.tau = b.tau;
    assert_eq!(a, b);
}

#[test]
fn diversity_is_comparable_with_and_without_sharing() {
    let prompts = synthetic(4, 16, 32, 3);
    let world = ToyWorld::new(32, 32, 0.05, ConditionMapSpec::Identity).unwrap();
    let schedule = make_schedule(40, SamplerVariant::Deterministic, ScheduleCurve::Cosine).unwrap();
    let tree = build_tree(&prompts).unwrap();
    let rows = sweep_tau(
        &prompts,
        &tree,
        &world,
        &schedule,
        &sweep_config(&[0.0, 1.0]),
    )
    .unwrap();
    let (d0, d1) = (
        rows[0].diversity_mean_pairwise_cosine.unwrap(),
        rows[1].diversity_mean_pairwise_cosine.unwrap(),
    );
    assert!((d0 - d1).abs() < 0.1, "{d0} vs {d1}");
    assert!(rows[1].savings_fraction > 0.3);
}

#[test]
fn sweep_needs_values() {
    let prompts = synthetic(1, 2, 4, 0);
    let world = ToyWorld::new(4, 4, 1.0, ConditionMapSpec::Identity).unwrap();
    let schedule = make_schedule(4, SamplerVariant::Deterministic, ScheduleCurve::Cosine).unwrap();
    let tree = build_tree(&prompts).unwrap();
    assert!(sweep_tau(&prompts, &tree, &world, &schedule, &sweep_config(&[])).is_err());
    let single = sweep_tau(&prompts, &tree, &world, &schedule, &sweep_config(&[0.0])).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single[0].savings_fraction, 0.0);
    let out = run_standard(&prompts, &world, &schedule, 0, None, ExecOptions::default()).unwrap();
    assert!(diversity_pairwise_cosine(&out, 100, 0).is_ok());
}
