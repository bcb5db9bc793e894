use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use shdf_core::io::{decode_binary, read_jsonl, write_atomic};
use shdf_core::{
    build_tree, compile_plan, execute_plan, generate_synthetic, randomize_encodings, run_metrics,
    run_standard, save_prompt_set, standard_run_metrics, sweep_csv, sweep_tau, EmbeddingTree,
    Error, ExecOptions, PromptFormat, PromptSet, Result, RunMetrics, ScheduleParams, SharePlan,
    SweepConfig, SyntheticSpec, ToyWorld, WorldConfig,
};

use crate::args::{
    Cli, Command, InputArgs, PlanArgs, PlanParams, SimulateArgs, SweepArgs, SynthArgs, TreeArgs,
    WorldArgs,
};

const DEFAULT_STEPS: usize = 40;
const DEFAULT_TARGET_STD: f64 = 1.0;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Tree(a) => cmd_tree(a),
        Command::Plan(a) => cmd_plan(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn check_output(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(Error::Usage(format!(
            "output directory {} does not exist",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn percent(fraction: f64) -> String {
    format!("{:.2}%", fraction * 100.0)
}

/// Prompts plus the raw bytes they were read from.
struct Loaded {
    prompts: PromptSet,
    bytes: Vec<u8>,
}

fn load_input(input: &InputArgs) -> Result<Option<Loaded>> {
    let Some(path) = &input.input else {
        return Ok(None);
    };
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.clone(),
        source,
    })?;
    let format = input
        .format
        .map(PromptFormat::from)
        .unwrap_or_else(|| PromptFormat::from_path(path));
    let mut prompts = match format {
        PromptFormat::Jsonl => read_jsonl(bytes.as_slice())?,
        PromptFormat::Binary => decode_binary(&bytes)?,
    };
    if input.normalize {
        prompts = prompts.normalized()?;
    }
    Ok(Some(Loaded { prompts, bytes }))
}

fn require_input(input: &InputArgs) -> Result<Loaded> {
    load_input(input)?.ok_or_else(|| Error::Usage("--input is required".into()))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Content hash identifying the tree built from these inputs.
fn input_hash(loaded: &Loaded, normalize: bool) -> String {
    let mut h = Sha256::new();
    h.update(b"shdf-tree-v1\n");
    h.update(if normalize {
        b"normalize=1\n"
    } else {
        b"normalize=0\n"
    });
    h.update(&loaded.bytes);
    hex(&h.finalize())
}

fn read_tree(path: &Path) -> Result<(EmbeddingTree, Option<String>)> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    EmbeddingTree::from_json(&text)
}

/// The embedding tree for `loaded`, going through the cache when one is given.
fn obtain_tree(input: &InputArgs, loaded: &Loaded) -> Result<EmbeddingTree> {
    let Some(cache) = &input.tree else {
        return build_tree(&loaded.prompts);
    };
    let hash = input_hash(loaded, input.normalize);
    if cache.exists() {
        match read_tree(cache) {
            Ok((tree, Some(h))) if h == hash => {
                log::info!("using cached tree {}", cache.display());
                return Ok(tree);
            }
            Ok(_) => log::warn!("tree cache {} is stale; rebuilding", cache.display()),
            Err(e) => log::warn!(
                "tree cache {} is unreadable ({e}); rebuilding",
                cache.display()
            ),
        }
    }
    let tree = build_tree(&loaded.prompts)?;
    write_atomic(cache, tree.to_json(Some(hash))?.as_bytes())?;
    Ok(tree)
}

fn ablation_tree(prompts: &PromptSet, seed: u64) -> Result<EmbeddingTree> {
    build_tree(&randomize_encodings(prompts, seed)?)
}

fn cmd_tree(args: TreeArgs) -> Result<()> {
    check_output(&args.output)?;
    let loaded = require_input(&args.input)?;
    let (tree, hash) = if args.input.ablation.is_some() {
        (ablation_tree(&loaded.prompts, args.seed)?, None)
    } else {
        (
            build_tree(&loaded.prompts)?,
            Some(input_hash(&loaded, args.input.normalize)),
        )
    };
    write_atomic(&args.output, tree.to_json(hash)?.as_bytes())?;
    if args.input.ablation.is_some() {
        println!("ablation: random-encodings (seed {})", args.seed);
    }
    println!("N: {}", tree.num_prompts());
    println!("nodes: {}", tree.len());
    println!("depth: {}", tree.max_depth());
    println!("c_max: {:.6}", tree.c_max());
    println!("inversion_count: {}", tree.inversion_count());
    Ok(())
}

fn schedule_params(params: &PlanParams, steps: usize, tau: f64) -> Result<ScheduleParams> {
    Ok(ScheduleParams::new(steps, tau)?.with_phi(params.phi.into()))
}

/// Compiles the plan and returns it with the tree that conditions execution.
fn plan_for(
    input: &InputArgs,
    loaded: &Loaded,
    params: &ScheduleParams,
    seed: u64,
) -> Result<(SharePlan, EmbeddingTree)> {
    let tree = obtain_tree(input, loaded)?;
    if input.ablation.is_some() {
        let random = ablation_tree(&loaded.prompts, seed)?;
        let plan = compile_plan(&tree, params, Some(&random))?;
        Ok((plan, random.with_member_means(&loaded.prompts)?))
    } else {
        Ok((compile_plan(&tree, params, None)?, tree))
    }
}

fn print_savings(plan: &SharePlan) {
    println!(
        "evaluations: {} of {}",
        plan.total_evaluations, plan.baseline_evaluations
    );
    println!("savings: {}", percent(plan.savings_fraction));
}

fn cmd_plan(args: PlanArgs) -> Result<()> {
    check_output(&args.output)?;
    let steps = args.params.steps.unwrap_or(DEFAULT_STEPS);
    let seed = args.params.seed.unwrap_or(0);
    let params = schedule_params(&args.params, steps, args.tau)?;
    let plan = match load_input(&args.input)? {
        Some(loaded) => plan_for(&args.input, &loaded, &params, seed)?.0,
        None => {
            let cache = args
                .input
                .tree
                .as_ref()
                .ok_or_else(|| Error::Usage("plan needs --input or --tree".into()))?;
            if args.input.ablation.is_some() {
                return Err(Error::Usage("--ablation needs --input".into()));
            }
            compile_plan(&read_tree(cache)?.0, &params, None)?
        }
    };
    write_atomic(&args.output, plan.to_json()?.as_bytes())?;
    print_savings(&plan);
    Ok(())
}

/// World config from file or defaults, with command-line overrides applied.
fn world_config(args: &WorldArgs, params: &PlanParams, prompts: &PromptSet) -> Result<WorldConfig> {
    let mut config = match &args.world {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            WorldConfig::from_json(&text)?
        }
        None => WorldConfig::identity(prompts.dim(), DEFAULT_TARGET_STD),
    };
    if let Some(k) = params.steps {
        config.schedule.steps = k;
    }
    if let Some(seed) = params.seed {
        config.master_seed = seed;
    }
    if let Some(curve) = args.schedule {
        config.schedule.curve = curve.into();
    }
    if let Some(variant) = args.variant {
        config.schedule.variant = variant.into();
    }
    Ok(config)
}

fn exec_options(args: &WorldArgs) -> ExecOptions {
    ExecOptions {
        threads: args.threads,
    }
}

fn default_metrics_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".metrics.json");
    PathBuf::from(name)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    check_output(&args.output)?;
    let metrics_path = args
        .metrics
        .clone()
        .unwrap_or_else(|| default_metrics_path(&args.output));
    check_output(&metrics_path)?;
    let loaded = require_input(&args.input)?;
    let config = world_config(&args.world, &args.params, &loaded.prompts)?;
    let world: ToyWorld = config.world(loaded.prompts.dim())?;
    let schedule = config.schedule.build()?;
    let seed = config.master_seed;
    let exec = exec_options(&args.world);

    let (outputs, metrics): (_, RunMetrics) = if args.standard {
        let out = run_standard(&loaded.prompts, &world, &schedule, seed, None, exec)?;
        let m = standard_run_metrics(&out, &world, &loaded.prompts, schedule.steps(), seed)?;
        (out, m)
    } else {
        let params = schedule_params(&args.params, schedule.steps(), args.tau)?;
        let (plan, tree) = plan_for(&args.input, &loaded, &params, seed)?;
        let out = execute_plan(&plan, &tree, &world, &schedule, seed, exec)?;
        let m = run_metrics(&plan, &out, &world, &loaded.prompts, seed)?;
        (out, m)
    };
    write_atomic(&args.output, outputs.to_jsonl()?.as_bytes())?;
    write_atomic(&metrics_path, metrics.to_json()?.as_bytes())?;
    println!(
        "evaluations: {} of {}",
        metrics.evaluations_total, metrics.baseline
    );
    println!("savings: {}", percent(metrics.savings_fraction));
    println!(
        "quality (mse): {:.6e}",
        metrics.mean_squared_error_to_target
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    check_output(&args.output)?;
    if args.sweep.is_empty() {
        return Err(Error::Usage("--sweep needs at least one value".into()));
    }
    let loaded = require_input(&args.input)?;
    let config = world_config(&args.world, &args.params, &loaded.prompts)?;
    let world = config.world(loaded.prompts.dim())?;
    let schedule = config.schedule.build()?;
    let tree = obtain_tree(&args.input, &loaded)?;
    let tree = match args.input.ablation {
        Some(_) => ablation_tree(&loaded.prompts, config.master_seed)?
            .with_member_means(&loaded.prompts)?,
        None => tree,
    };
    let sweep = SweepConfig {
        taus: args.sweep.clone(),
        phi: args.params.phi.into(),
        master_seed: config.master_seed,
        exec: exec_options(&args.world),
    };
    let rows = sweep_tau(&loaded.prompts, &tree, &world, &schedule, &sweep)?;
    write_atomic(&args.output, sweep_csv(&rows).as_bytes())?;
    for r in &rows {
        println!("tau {}: savings {}", r.tau, percent(r.savings_fraction));
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    check_output(&args.output)?;
    let prompts = generate_synthetic(&SyntheticSpec {
        clusters: args.clusters,
        per_cluster: args.per_cluster,
        dimension: args.dimension,
        jitter: args.jitter,
        seed: args.seed,
    })?;
    let format = args
        .format
        .map(PromptFormat::from)
        .unwrap_or_else(|| PromptFormat::from_path(&args.output));
    save_prompt_set(&prompts, &args.output, format)?;
    println!("wrote {} prompts", prompts.len());
    Ok(())
}
