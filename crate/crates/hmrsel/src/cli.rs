use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hmrsel_core::stats::compare;
use hmrsel_core::search::StepRecord;
use hmrsel_core::uncertainty::profile;
use hmrsel_core::{Individual, ObjectiveVector};

use crate::config::RunConfig;
use crate::error::{HarnessError, Result};
use crate::idx::write_idx;
use crate::pipeline::{self, Data, Evaluation};
use crate::report::{self, ObjectiveRow};
use crate::weights::{load_model, save_model};

#[derive(Debug, Parser)]
#[command(name = "hmrsel", version, about = "Select high-order metamorphic relation sets for a classifier")]
pub struct Cli {
    /// Run seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides HMRSEL_OUT and the config file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic splits as IDX files.
    GenData,
    /// Train the toy model on the training split.
    Train,
    /// Certainty profiles: sound, noise, bound, FGSM and per relation.
    Profile {
        /// Relation set (JSON) whose relations get their own curves.
        #[arg(long)]
        set: Option<PathBuf>,
    },
    /// Run the selection, checkpointing each restart.
    Select {
        /// Continue from checkpoints already in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Draw and assess random relation sets.
    Baseline,
    /// Compare optimised and random objective tables.
    Compare {
        /// Objective CSVs of the optimised runs, concatenated.
        #[arg(long, required = true, num_args = 1..)]
        optimized: Vec<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        random: Vec<PathBuf>,
    },
    /// Apply a saved relation set to calibration and test data.
    Evaluate {
        #[arg(long)]
        set: PathBuf,
        /// Evaluate on this IDX pair instead of the test split.
        #[arg(long, requires = "labels")]
        images: Option<PathBuf>,
        #[arg(long, requires = "images")]
        labels: Option<PathBuf>,
    },
}

/// Parses `args` and runs the command; returns the process exit status.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    cfg.apply_overrides(cli.seed, cli.out);
    report::create_dir(&cfg.out)?;
    match cli.command {
        Command::GenData => gen_data(&cfg),
        Command::Train => train(&cfg),
        Command::Profile { set } => profile_cmd(&cfg, set.as_deref()),
        Command::Select { resume } => select(&cfg, resume),
        Command::Baseline => baseline(&cfg),
        Command::Compare { optimized, random } => compare_cmd(&cfg, &optimized, &random),
        Command::Evaluate { set, images, labels } => evaluate(&cfg, &set, images.zip(labels)),
    }
}

fn gen_data(cfg: &RunConfig) -> Result<()> {
    let data = pipeline::load_data(cfg)?;
    let dir = cfg.out.join("data");
    report::create_dir(&dir)?;
    for (name, d) in [("train", &data.train), ("calibration", &data.calibration), ("test", &data.test)] {
        write_idx(d, &dir.join(format!("{name}-images.idx")), &dir.join(format!("{name}-labels.idx")))?;
    }
    println!("wrote {} / {} / {} inputs to {}", data.train.len(), data.calibration.len(), data.test.len(), dir.display());
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<()> {
    let data = pipeline::load_data(cfg)?;
    let model = pipeline::train_model(cfg, &data.train)?;
    let path = cfg.model_path();
    save_model(&model, &path)?;
    println!(
        "accuracy train {:.4} calibration {:.4} test {:.4}; model written to {}",
        model.accuracy(&data.train)?,
        model.accuracy(&data.calibration)?,
        model.accuracy(&data.test)?,
        path.display()
    );
    Ok(())
}

fn read_set(path: &Path) -> Result<Individual> {
    report::read_json::<Option<Individual>>(path)?
        .ok_or_else(|| HarnessError::malformed(path, "no relation set recorded"))
}

fn profile_cmd(cfg: &RunConfig, set: Option<&Path>) -> Result<()> {
    let model = load_model(&cfg.model_path())?;
    let data = pipeline::load_data(cfg)?;
    let b = pipeline::build_bound(&model, &data.calibration, cfg)?;
    let u = &cfg.uncertainty;
    let adversarial = pipeline::fgsm_dataset(&model, &data.calibration, cfg.fgsm_epsilon)?;
    let fgsm = profile(&model, &adversarial, u.report_samples, cfg.seed, &b.grid)?;
    let mut curves = vec![
        ("sound".to_string(), b.sound.fractions().to_vec()),
        ("noise".to_string(), b.noise.fractions().to_vec()),
        ("bound".to_string(), b.bound.values().to_vec()),
        ("fgsm".to_string(), fgsm.fractions().to_vec()),
    ];
    if let Some(ood) = &data.ood {
        let p = profile(&model, ood, u.report_samples, cfg.seed, &b.grid)?;
        curves.push(("ood".to_string(), p.fractions().to_vec()));
    }
    if let Some(path) = set {
        let ind = read_set(path)?;
        let inputs = data.calibration.images().iter().enumerate().map(|(i, im)| (i as u64, im)).collect();
        let gate = hmrsel_core::uncertainty::ChainGate::new(
            &model,
            inputs,
            &b.bound,
            u.report_samples,
            cfg.seed,
            u.tolerance,
        )?;
        for (i, chain) in ind.chains.iter().enumerate() {
            curves.push((format!("relation_{i}"), gate.chain_profile(chain)?.fractions().to_vec()));
        }
    }
    let path = cfg.out.join("profiles.csv");
    report::write_curves(&path, b.grid.points(), &curves)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn checkpoint_path(cfg: &RunConfig, step: usize) -> PathBuf {
    cfg.out.join("checkpoints").join(format!("step-{step}.json"))
}

fn select(cfg: &RunConfig, resume: bool) -> Result<()> {
    let model = load_model(&cfg.model_path())?;
    let data = pipeline::load_data(cfg)?;
    let prepared = pipeline::prepare(&model, &data, cfg)?;
    let selector = pipeline::selector(&model, &data.calibration, &prepared, cfg)?;
    report::create_dir(&cfg.out.join("checkpoints"))?;

    let mut steps: Vec<StepRecord> = Vec::new();
    if resume {
        while steps.len() < cfg.search.steps {
            let p = checkpoint_path(cfg, steps.len());
            if !p.is_file() {
                break;
            }
            steps.push(report::read_json(&p)?);
        }
        if !steps.is_empty() {
            println!("resuming after {} checkpointed step(s)", steps.len());
        }
    }
    for step in steps.len()..cfg.search.steps {
        let record = selector.run_step(step, steps.last())?;
        report::write_json(&checkpoint_path(cfg, step), &record)?;
        println!(
            "step {step}: {} evaluations, front of {}{}",
            record.evaluations,
            record.front.len(),
            if record.empty_feasible { " (no feasible set)" } else { "" }
        );
        steps.push(record);
    }
    let outcome = selector.resume(steps)?;

    let rows: Vec<ObjectiveRow> = outcome
        .final_front
        .iter()
        .enumerate()
        .filter_map(|(i, ind)| ind.objectives.map(|o| ObjectiveRow::new(format!("front_{i}"), &o)))
        .collect();
    report::write_rows(&cfg.out.join("front.csv"), &rows)?;
    report::write_json(&cfg.out.join("front.json"), &outcome.final_front)?;
    let knee = outcome.knee_individual();
    report::write_json(&cfg.out.join("knee.json"), &knee)?;
    let knee_rows: Vec<ObjectiveRow> = knee
        .and_then(|k| k.objectives)
        .map(|o| ObjectiveRow::new("knee", &o))
        .into_iter()
        .collect();
    report::write_rows(&cfg.out.join("knee.csv"), &knee_rows)?;
    let step_rows: Vec<StepRow> = outcome
        .steps
        .iter()
        .map(|s| StepRow {
            step: s.step,
            subset_size: s.subset.len(),
            evaluations: s.evaluations,
            front_size: s.front.len(),
            empty_feasible: s.empty_feasible,
        })
        .collect();
    report::write_rows(&cfg.out.join("steps.csv"), &step_rows)?;

    println!(
        "final front: {} set(s), {} rejected on re-verification",
        outcome.final_front.len(),
        outcome.rejected
    );
    match knee.and_then(|k| k.objectives) {
        Some(o) => println!("knee: {}", describe(&o)),
        None => println!("no feasible set found; knee.json is null"),
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct StepRow {
    step: usize,
    subset_size: usize,
    evaluations: usize,
    front_size: usize,
    empty_feasible: bool,
}

fn describe(o: &ObjectiveVector) -> String {
    format!(
        "coverage {:.4} similarity {:.4} kill_ratio {:.4} feasible {}",
        o.coverage, o.similarity, o.kill_ratio, o.feasible
    )
}

fn baseline(cfg: &RunConfig) -> Result<()> {
    let model = load_model(&cfg.model_path())?;
    let data = pipeline::load_data(cfg)?;
    let prepared = pipeline::prepare(&model, &data, cfg)?;
    let selector = pipeline::selector(&model, &data.calibration, &prepared, cfg)?;
    let sets = pipeline::random_baseline(&selector, cfg)?;
    let rows: Vec<ObjectiveRow> = sets
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.objectives.map(|o| ObjectiveRow::new(format!("random_{i}"), &o)))
        .collect();
    report::write_rows(&cfg.out.join("baseline.csv"), &rows)?;
    report::write_json(&cfg.out.join("baseline.json"), &sets)?;
    let infeasible = rows.iter().filter(|r| !r.feasible).count();
    println!("{} random set(s), {infeasible} infeasible", rows.len());
    Ok(())
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<ObjectiveVector>> {
    let mut all = Vec::new();
    for p in paths {
        all.extend(report::read_objectives(p)?);
    }
    Ok(all)
}

fn compare_cmd(cfg: &RunConfig, optimized: &[PathBuf], random: &[PathBuf]) -> Result<()> {
    let report = compare(&read_all(optimized)?, &read_all(random)?)?;
    report::write_comparison(&cfg.out.join("comparison.csv"), &report)?;
    report::write_json(&cfg.out.join("comparison.json"), &report)?;
    println!(
        "optimized n={} (discarded {}), random n={} (discarded {})",
        report.optimized_count, report.discarded_optimized, report.random_count, report.discarded_random
    );
    for c in &report.criteria {
        println!(
            "{:<11} {:.4}±{:.4} vs {:.4}±{:.4}  U={} p={:.4} delta={:.3} ({})",
            c.criterion.name(),
            c.optimized_mean,
            c.optimized_sd,
            c.random_mean,
            c.random_sd,
            c.u,
            c.p,
            c.delta,
            c.magnitude.name()
        );
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct EvaluationRow {
    dataset: String,
    coverage: f64,
    similarity: f64,
    kill_ratio: f64,
    feasible: bool,
    generated_images: usize,
}

impl EvaluationRow {
    fn new(name: &str, e: &Evaluation) -> Self {
        Self {
            dataset: name.into(),
            coverage: e.objectives.coverage,
            similarity: e.objectives.similarity,
            kill_ratio: e.objectives.kill_ratio,
            feasible: e.objectives.feasible,
            generated_images: e.generated_images,
        }
    }
}

fn evaluate(cfg: &RunConfig, set: &Path, held_out: Option<(PathBuf, PathBuf)>) -> Result<()> {
    let ind = read_set(set)?;
    let model = load_model(&cfg.model_path())?;
    let Data {
        train,
        calibration,
        test,
        ood,
    } = pipeline::load_data(cfg)?;
    let (name, other) = match held_out {
        Some((i, l)) => ("held_out", crate::idx::load_idx(&i, &l, cfg.data.num_classes)?),
        None => ("test", test.clone()),
    };
    let data = Data {
        train,
        calibration,
        test,
        ood,
    };
    let prepared = pipeline::prepare(&model, &data, cfg)?;
    let cal = pipeline::evaluate_set(&model, &data.calibration, &ind.chains, &prepared, cfg)?;
    let held = pipeline::evaluate_set(&model, &other, &ind.chains, &prepared, cfg)?;
    let mut rows = vec![EvaluationRow::new("calibration", &cal), EvaluationRow::new(name, &held)];
    rows.push(EvaluationRow {
        dataset: format!("delta_{name}_minus_calibration"),
        coverage: held.objectives.coverage - cal.objectives.coverage,
        similarity: held.objectives.similarity - cal.objectives.similarity,
        kill_ratio: held.objectives.kill_ratio - cal.objectives.kill_ratio,
        feasible: cal.objectives.feasible && held.objectives.feasible,
        generated_images: held.generated_images,
    });
    let path = cfg.out.join("evaluation.csv");
    report::write_rows(&path, &rows)?;
    println!("calibration: {} ({} generated)", describe(&cal.objectives), cal.generated_images);
    println!("{name}: {} ({} generated)", describe(&held.objectives), held.generated_images);
    println!("wrote {}", path.display());
    Ok(())
}
