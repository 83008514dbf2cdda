use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use roida::agent::{log_to_csv, suggest_key, train_roida, TrainConfig};
use roida::data::{build_mixture, load_dataset, save_dataset, MixtureSetting};
use roida::envs::{generate_dataset, BehaviorPolicy, EnvName, EnvSpec};
use roida::harness::{self, collect_report, final_score, run_plan, write_atomic, CellStatus, ExperimentPlan};
use roida::tensorcore::ModelCheckpoint;
use roida::{Error, Result};

#[derive(Parser)]
#[command(name = "roida", version, about = "Offline imitation learning with unlabeled auxiliary data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Roll out a behavior policy and save the transitions.
    GenData {
        #[arg(long)]
        env: EnvName,
        /// expert, random or epsilon_expert[:eps]
        #[arg(long)]
        policy: BehaviorPolicy,
        /// Number of trajectories.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build an expert set and an auxiliary set from trajectory pools.
    Mix {
        /// `x/y`: x expert trajectories in the expert set, y hidden in the auxiliary set.
        #[arg(long)]
        setting: String,
        #[arg(long)]
        expert_pool: PathBuf,
        #[arg(long)]
        suboptimal_pool: PathBuf,
        /// Suboptimal trajectories in the auxiliary set (default: the whole pool).
        #[arg(long)]
        n_suboptimal: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving `expert.tset` and `auxiliary.tset`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one policy. Any config key can be passed as `--key value`.
    Train {
        #[arg(long)]
        expert: PathBuf,
        #[arg(long)]
        aux: PathBuf,
        /// Flat key=value config file applied before command-line overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
        overrides: Vec<String>,
    },
    /// Run every missing cell of a plan file, then write the report.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        /// Results root (default: $ROIDA_RESULTS_DIR or ./results).
        #[arg(long)]
        results: Option<PathBuf>,
        /// Override the plan's worker count.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Re-aggregate a plan's results directory into report.csv and report.md.
    Report {
        /// `<results>/<plan-name>`, containing the plan.txt written by `sweep`.
        #[arg(long)]
        dir: PathBuf,
    },
    /// Print the composition of a dataset.
    Stats {
        #[arg(long)]
        data: PathBuf,
    },
    /// Gradient-check and scalar oracle suites.
    Selftest {
        /// Random models per gradient suite.
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if matches!(e, Error::Usage(_)) { 1 } else { 2 })
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::GenData {
            env,
            policy,
            n,
            seed,
            out,
        } => {
            let set = generate_dataset(&EnvSpec::new(env), policy, n, seed)?;
            save_dataset(&set, &out)?;
            println!("{}", set.summary());
        }
        Command::Mix {
            setting,
            expert_pool,
            suboptimal_pool,
            n_suboptimal,
            seed,
            out,
        } => {
            let experts = load_dataset(&expert_pool)?;
            let subs = load_dataset(&suboptimal_pool)?;
            let n_sub = n_suboptimal.unwrap_or(subs.n_trajectories());
            let setting = MixtureSetting::parse(&setting, n_sub).map_err(as_usage)?;
            let (de, d_o) = build_mixture(&setting, &experts, &subs, seed)?;
            save_dataset(&de, &out.join("expert.tset"))?;
            save_dataset(&d_o, &out.join("auxiliary.tset"))?;
            println!("expert set\n{}\n\nauxiliary set\n{}", de.summary(), d_o.summary());
        }
        Command::Train {
            expert,
            aux,
            config,
            out,
            overrides,
        } => {
            let mut cfg = match &config {
                Some(p) => TrainConfig::from_kv_text(&read_text(p)?).map_err(as_usage)?,
                None => TrainConfig::default(),
            };
            cfg.apply_overrides(&parse_overrides(&overrides)?).map_err(as_usage)?;
            cfg.validate()?;
            let de = load_dataset(&expert)?;
            let d_o = load_dataset(&aux)?;
            let env = *de.env();
            let outcome = train_roida(&de, &d_o, &cfg, &env)?;
            write_atomic(&out.join("config.txt"), cfg.to_kv_text().as_bytes())?;
            write_atomic(&out.join("log.csv"), log_to_csv(&outcome.log).as_bytes())?;
            ModelCheckpoint {
                role: "policy".into(),
                model: outcome.policy.mean_net.clone(),
                log_std: Some(outcome.policy.log_std.clone()),
            }
            .save(&out.join("policy.ckpt"))?;
            if let Some(d) = &outcome.discriminator {
                ModelCheckpoint {
                    role: "discriminator".into(),
                    model: d.net.clone(),
                    log_std: None,
                }
                .save(&out.join("discriminator.ckpt"))?;
            }
            let curve = outcome.eval_curve();
            match final_score(&curve) {
                Ok(score) => {
                    write_atomic(&out.join("final.txt"), format!("{score:?}\n").as_bytes())?;
                    println!("final score {score:.2} ({} evaluations)", curve.len());
                }
                Err(_) => println!(
                    "{} evaluations recorded; a final score needs at least {}",
                    curve.len(),
                    harness::FINAL_WINDOW
                ),
            }
        }
        Command::Sweep { plan, results, jobs } => {
            let mut plan = ExperimentPlan::parse(&read_text(&plan)?).map_err(as_usage)?;
            if let Some(j) = jobs {
                plan.jobs = j.max(1);
            }
            let root = results.unwrap_or_else(harness::results_root);
            let total = plan.n_cells();
            let done = std::sync::atomic::AtomicUsize::new(0);
            let report = run_plan(&plan, &root, |key, status| {
                let i = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                let what = match status {
                    CellStatus::Skipped => "skipped (already complete)".to_string(),
                    CellStatus::Completed(s) => format!("score {s:.2}"),
                    CellStatus::Failed(m) => format!("FAILED: {m}"),
                };
                eprintln!(
                    "[{i}/{total}] {} {} seed {}: {what}",
                    plan.settings[key.setting], plan.methods[key.method].label, key.seed
                );
            })?;
            print!("{}", report.to_markdown());
            if report.n_failed() > 0 {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Report { dir } => {
            let plan = ExperimentPlan::parse(&read_text(&dir.join("plan.txt"))?)?;
            let root = dir.parent().unwrap_or(Path::new("."));
            let report = collect_report(&plan, root)?;
            report.write(&dir)?;
            print!("{}", report.to_markdown());
        }
        Command::Stats { data } => {
            println!("{}", load_dataset(&data)?.summary());
        }
        Command::Selftest { n, seed } => {
            let start = std::time::Instant::now();
            let suites = harness::selftest::selftest(n, seed);
            for s in &suites {
                println!("{s}");
            }
            let ok = suites.iter().all(|s| s.ok());
            println!(
                "selftest {} in {:.1}s",
                if ok { "passed" } else { "FAILED" },
                start.elapsed().as_secs_f64()
            );
            if !ok {
                return Ok(ExitCode::from(2));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn as_usage(e: Error) -> Error {
    match e {
        Error::Config(m) | Error::Parse { message: m, .. } => Error::Usage(m),
        other => other,
    }
}

/// `--key value` pairs (a boolean key may omit its value).
fn parse_overrides(args: &[String]) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut i = 0;
    while i < args.len() {
        let raw = &args[i];
        let Some(flag) = raw.strip_prefix("--") else {
            return Err(Error::Usage(format!("unexpected argument `{raw}`")));
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k.replace('-', "_"), Some(v.to_string())),
            None => (flag.replace('-', "_"), None),
        };
        let known = key == "method" || TrainConfig::KEYS.contains(&key.as_str());
        if !known {
            let hint = suggest_key(&key)
                .map(|s| format!("; did you mean `--{s}`?"))
                .unwrap_or_default();
            return Err(Error::Usage(format!("unknown flag `--{flag}`{hint}")));
        }
        let is_bool = TrainConfig::default().get(&key).is_some_and(|v| v == "true" || v == "false");
        let value = match inline {
            Some(v) => v,
            None => match args.get(i + 1) {
                Some(next) if !(is_bool && next.starts_with("--")) => {
                    i += 1;
                    next.clone()
                }
                _ if is_bool => "true".to_string(),
                _ => return Err(Error::Usage(format!("flag `--{flag}` needs a value"))),
            },
        };
        out.insert(key, value);
        i += 1;
    }
    Ok(out)
}
