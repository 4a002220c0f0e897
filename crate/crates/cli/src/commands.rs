use std::path::{Path, PathBuf};
use std::time::Instant;

use optproxy::dual::{eval_dual_gap, train_doplp, DualProxy};
use optproxy::grid::{save_network, Network};
use optproxy::instance::{build_dataset, label_dataset, Dataset, Instance, Label, ProblemKind, SamplerConfig};
use optproxy::lp::{simplex_solve, LpSolution, LpStatus, StandardLp};
use optproxy::models::{EdModel, ScopfModel};
use optproxy::nn::Mlp;
use optproxy::pdl::{audit_rho_schedule, pdl_scopf_eval, pdl_scopf_train, penalty_baseline_train, PdlState, ScopfEvalReport, ScopfProblem};
use optproxy::primal::{evaluate, evaluate_dispatches, train, ProxyModel, Regime, TrainData, TrainRecord};
use optproxy::risk::{build_scenarios, run_engine, RiskReport};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cli::{Cli, Command, EvalArgs, GenArgs, ModelKind, NetworkArgs, ReportArgs, RiskArgs, SolveArgs, SolveProblem, TrainArgs};
use crate::config::{default_sampler, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{default_run_name, output_root, RunDir};
use crate::report::{curves_svg, merge, risk_curves, Table, MERGED_TABLES};

/// Contents of `model.json`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SavedModel {
    Primal { regime: String, model: ProxyModel },
    Dual { model: DualProxy },
    PdlScopf { network_hash: String, sampler: SamplerConfig, state: PdlState },
    PenaltyScopf { network_hash: String, sampler: SamplerConfig, primal: Mlp<f64> },
}

/// Execute `cli`; returns the run directory.
pub fn run(cli: Cli, argv: &[String]) -> CliResult<PathBuf> {
    let mut cfg = RunConfig::load_or_default(cli.config.as_deref())?;
    let args = apply_overrides(&mut cfg, &cli.command)?;
    let name = cli.command.name();
    let provenance = serde_json::json!({ "command": name, "args": args, "config": cfg });
    let dir_name = cli.run.clone().unwrap_or_else(|| default_run_name(name, &provenance));
    let mut dir = RunDir::create(output_root(cli.out.as_deref()).join(dir_name), name)?;
    dir.write_json("config.json", &provenance)?;
    match &cli.command {
        Command::Gen(a) => cmd_gen(&cfg, a, &mut dir)?,
        Command::Solve(a) => cmd_solve(&cfg, a, &mut dir)?,
        Command::Train(a) => cmd_train(&cfg, a, &mut dir)?,
        Command::Eval(a) => cmd_eval(&cfg, a, &mut dir)?,
        Command::Risk(a) => cmd_risk(&cfg, a, &mut dir)?,
        Command::Report(a) => cmd_report(a, &mut dir)?,
    }
    dir.finish(argv)
}

fn apply_network(cfg: &mut RunConfig, a: &NetworkArgs) {
    if let Some(n) = &a.network {
        cfg.network = Some(n.clone());
    }
    for (id, v) in &a.line_limits {
        cfg.line_limits.insert(id.clone(), *v);
    }
}

/// Fold flags into `cfg`; returns the command arguments for provenance.
fn apply_overrides(cfg: &mut RunConfig, cmd: &Command) -> CliResult<serde_json::Value> {
    match cmd {
        Command::Gen(a) => {
            apply_network(cfg, &a.net);
            let d = &mut cfg.dataset;
            d.n_instances = a.n.unwrap_or(d.n_instances);
            d.seed = a.seed.unwrap_or(d.seed);
            d.problem = a.problem.map_or(d.problem, Into::into);
            d.labels &= !a.no_labels;
        }
        Command::Solve(a) => apply_network(cfg, &a.net),
        Command::Train(a) => {
            apply_network(cfg, &a.net);
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
                cfg.dual.epochs = e;
            }
            if let Some(s) = a.seed {
                cfg.train.seed = s;
                cfg.dual.seed = s;
                cfg.pdl.seed = s;
            }
            if let Some(lr) = a.lr {
                cfg.train.lr = lr;
                cfg.dual.lr = lr;
                cfg.pdl.lr_primal = lr;
                cfg.pdl.lr_dual = lr;
            }
            if let Some(b) = a.batch_size {
                cfg.train.batch_size = b;
                cfg.dual.batch_size = b;
                cfg.pdl.minibatch = b;
            }
            cfg.pdl.outer_iterations = a.outer.unwrap_or(cfg.pdl.outer_iterations);
            cfg.pdl.inner_steps = a.inner.unwrap_or(cfg.pdl.inner_steps);
        }
        Command::Eval(a) => apply_network(cfg, &a.net),
        Command::Risk(a) => {
            apply_network(cfg, &a.net);
            let s = &mut cfg.risk.scenarios;
            s.n_scenarios = a.scenarios.unwrap_or(s.n_scenarios);
            s.horizon = a.horizon.unwrap_or(s.horizon);
            s.seed = a.seed.unwrap_or(s.seed);
            cfg.risk.oracle |= a.oracle;
        }
        Command::Report(_) => {}
    }
    let v = match cmd {
        Command::Gen(a) => serde_json::to_value(a),
        Command::Solve(a) => serde_json::to_value(a),
        Command::Train(a) => serde_json::to_value(a),
        Command::Eval(a) => serde_json::to_value(a),
        Command::Risk(a) => serde_json::to_value(a),
        Command::Report(a) => serde_json::to_value(a),
    };
    Ok(v.map_err(optproxy::Error::from)?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_dataset(path: &Path, net: &Network) -> CliResult<Dataset> {
    let ds = Dataset::load(path)?;
    if ds.network_hash != net.content_hash() {
        return Err(CliError::Schema(format!("{}: dataset was generated for a different network", path.display())));
    }
    Ok(ds)
}

fn require_problem(ds: &Dataset, want: ProblemKind, what: &str) -> CliResult<()> {
    if ds.config.problem == want {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} needs a {} dataset, got {}",
            problem_name(want),
            problem_name(ds.config.problem)
        )))
    }
}

fn problem_name(p: ProblemKind) -> String {
    serde_json::to_value(p)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| format!("{p:?}"))
}

/// Labeled test items as `(instance, label)`.
fn labeled_test(ds: &Dataset) -> Vec<(Instance, Label)> {
    ds.split
        .test
        .iter()
        .filter_map(|&i| ds.labels[i].clone().map(|l| (ds.instances[i].clone(), l)))
        .collect()
}

fn require_labeled_test(ds: &Dataset) -> CliResult<Vec<(Instance, Label)>> {
    let items = labeled_test(ds);
    if items.is_empty() {
        Err(CliError::Data("dataset has no labeled test instances".into()))
    } else {
        Ok(items)
    }
}

fn cmd_gen(cfg: &RunConfig, _a: &GenArgs, dir: &mut RunDir) -> CliResult<()> {
    let net = cfg.network()?;
    let ed = EdModel::with_penalties(net.clone(), cfg.penalties)?;
    let t0 = Instant::now();
    let raw = build_dataset(&net, &cfg.dataset.dataset_config())?;
    let ds = if cfg.dataset.labels { label_dataset(&net, &raw, &ed)? } else { raw.clone() };
    dir.timing("generate", t0.elapsed().as_secs_f64());
    ds.save(dir.join("dataset"))?;
    for part in ["train", "val", "test"] {
        dir.record(&format!("dataset/{part}.jsonl"));
    }
    save_network(&net, dir.join("network.json"))?;
    dir.record("network.json");
    dir.write_json(
        "summary.json",
        &serde_json::json!({
            "network_hash": ds.network_hash,
            "problem": ds.config.problem,
            "sampled": raw.len(),
            "kept": ds.len(),
            "labeled": ds.is_labeled(),
            "train": ds.split.train.len(),
            "val": ds.split.val.len(),
            "test": ds.split.test.len(),
        }),
    )
}

fn solve_checked(lp: &StandardLp<f64>) -> CliResult<LpSolution<f64>> {
    let sol = simplex_solve(lp)?;
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        LpStatus::Infeasible => Err(optproxy::Error::Infeasible.into()),
        LpStatus::Unbounded => Err(optproxy::Error::Unbounded.into()),
    }
}

fn cmd_solve(cfg: &RunConfig, a: &SolveArgs, dir: &mut RunDir) -> CliResult<()> {
    let ed = cfg.ed_model()?;
    let inst = match &a.instance {
        Some(p) => read_json::<Instance>(p)?,
        None => Instance::nominal(&ed.net),
    };
    inst.validate(&ed.net)?;
    let prm = ed.params(&inst);
    let duals = |sol: &LpSolution<f64>| serde_json::json!({ "z": sol.z, "z_l": sol.z_l, "z_u": sol.z_u });
    let out = match a.problem {
        SolveProblem::Ed => {
            let sol = solve_checked(&ed.build_ed_lp(&prm)?.lp)?;
            serde_json::json!({ "problem": "ed", "dispatch": ed.solve_ed(&inst)?, "duals": duals(&sol) })
        }
        SolveProblem::Dcopf => {
            let sol = solve_checked(&ed.build_dcopf_lp(&prm)?.lp)?;
            serde_json::json!({ "problem": "dcopf", "dispatch": ed.solve_dcopf(&inst)?.0, "duals": duals(&sol) })
        }
        SolveProblem::Scopf => {
            let sol = ScopfModel::all_contingencies(ed.clone())?.solve_bruteforce(&inst)?;
            serde_json::json!({ "problem": "scopf", "solution": sol })
        }
        SolveProblem::Project => {
            let path = a
                .prediction
                .as_deref()
                .ok_or_else(|| CliError::Config("--problem project needs --prediction".into()))?;
            let p_hat: Vec<f64> = read_json(path)?;
            let d = ed.projection_repair(&inst, &p_hat)?;
            let distance: f64 = d.p.iter().zip(&p_hat).map(|(x, y)| (x - y).abs()).sum();
            serde_json::json!({ "problem": "project", "dispatch": d, "l1_distance": distance })
        }
    };
    dir.write_json("dispatch.json", &out)
}

fn history_csv(hist: &[TrainRecord]) -> String {
    let mut s = String::from("epoch,loss,lambda,nu\n");
    for r in hist {
        let (l, n) = r.ld.as_ref().map_or((String::new(), String::new()), |ld| (ld.lambda.to_string(), ld.nu.to_string()));
        s.push_str(&format!("{},{},{l},{n}\n", r.epoch, r.loss));
    }
    s
}

fn write_scopf_eval(dir: &mut RunDir, model: &str, rep: &ScopfEvalReport) -> CliResult<()> {
    dir.write_json("scopf_eval.json", rep)?;
    dir.write_text(
        "scopf_gap.csv",
        &format!(
            "model,n,mean_gap,max_gap,max_violation_mw,max_violation_pu\n{model},{},{},{},{},{}\n",
            rep.n, rep.mean_gap, rep.max_gap, rep.max_violation, rep.max_violation_pu
        ),
    )?;
    let mut viol = Table::parse(&rep.violation_csv(), "violations")?;
    viol.header.insert(0, "model".into());
    viol.rows.iter_mut().for_each(|r| r.insert(0, model.to_string()));
    dir.write_text("scopf_violations.csv", &viol.to_csv())
}

fn scopf_test(ds: &Dataset) -> CliResult<Vec<(Instance, f64)>> {
    require_problem(ds, ProblemKind::Scopf, "security-constrained evaluation")?;
    Ok(require_labeled_test(ds)?
        .into_iter()
        .filter_map(|(i, l)| l.scopf.map(|s| (i, s.objective)))
        .collect())
}

fn cmd_train(cfg: &RunConfig, a: &TrainArgs, dir: &mut RunDir) -> CliResult<()> {
    let ed = cfg.ed_model()?;
    let ds = a.dataset.as_deref().map(|p| load_dataset(p, &ed.net)).transpose()?;
    let need_ds = || {
        ds.as_ref()
            .ok_or_else(|| CliError::Config(format!("--model {:?} needs --dataset", a.model)))
    };
    let t0 = Instant::now();
    match a.model {
        ModelKind::E2elr | ModelKind::Dc3 | ModelKind::Deepopf | ModelKind::Naive => {
            let ds = need_ds()?;
            let arch = a.model.architecture().expect("primal architecture");
            let regime: Regime = a.regime.into();
            let train_idx = &ds.split.train;
            let instances: Vec<Instance> = train_idx.iter().map(|&i| ds.instances[i].clone()).collect();
            let labels: Vec<Label> = if regime.needs_labels() {
                train_idx
                    .iter()
                    .map(|&i| ds.labels[i].clone())
                    .collect::<Option<_>>()
                    .ok_or_else(|| CliError::Data(format!("regime {regime} needs a labeled dataset")))?
            } else {
                Vec::new()
            };
            let data = if regime.needs_labels() {
                TrainData::Labeled { instances: &instances, labels: &labels }
            } else {
                TrainData::Unlabeled(&instances)
            };
            let mut model = ProxyModel::new(&ed, arch, &cfg.train)?;
            let hist = train(&ed, &mut model, data, regime, &cfg.train)?;
            dir.timing("train", t0.elapsed().as_secs_f64());
            dir.write_text("history.csv", &history_csv(&hist))?;
            let items: Vec<(Instance, f64)> = labeled_test(ds).into_iter().map(|(i, l)| (i, l.dispatch.objective)).collect();
            if ds.config.problem == ProblemKind::Ed && !items.is_empty() {
                let rep = evaluate(&ed, &model, &items, regime.name())?;
                dir.write_json("eval.json", &rep)?;
                dir.write_text("eval.csv", &rep.to_csv())?;
            }
            dir.write_json("model.json", &SavedModel::Primal { regime: regime.name().into(), model })
        }
        ModelKind::Doplp => {
            let ds = need_ds()?;
            let instances: Vec<Instance> = ds.split.train.iter().map(|&i| ds.instances[i].clone()).collect();
            let (proxy, hist) = train_doplp(&ed, &instances, &cfg.dual)?;
            dir.timing("train", t0.elapsed().as_secs_f64());
            let mut s = String::from("epoch,loss\n");
            hist.iter().for_each(|r| s.push_str(&format!("{},{}\n", r.epoch, r.loss)));
            dir.write_text("history.csv", &s)?;
            if ds.config.problem == ProblemKind::Dcopf {
                let items: Vec<(Instance, f64)> = labeled_test(ds).into_iter().map(|(i, l)| (i, l.dispatch.objective)).collect();
                if !items.is_empty() {
                    let rep = eval_dual_gap(&ed, &items, |inst| proxy.predict_z(inst))?;
                    dir.write_json("dual_gap.json", &rep)?;
                    dir.write_text("dual_gap.csv", &rep.to_csv())?;
                }
            }
            dir.write_json("model.json", &SavedModel::Dual { model: proxy })
        }
        ModelKind::PdlScopf | ModelKind::PenaltyScopf => {
            let sampler = match &ds {
                Some(d) => d.config.sampler.clone(),
                None => cfg.dataset.sampler.clone().unwrap_or_else(|| default_sampler(ProblemKind::Scopf)),
            };
            let network_hash = ed.net.content_hash();
            let pb = ScopfProblem::new(ScopfModel::all_contingencies(ed)?, sampler.clone());
            let (label, primal, saved) = if a.model == ModelKind::PdlScopf {
                let state = pdl_scopf_train(&pb, &cfg.pdl)?;
                let audit = audit_rho_schedule(&cfg.pdl, &state.history);
                dir.write_json("schedule_audit.json", &serde_json::json!({ "passed": audit.is_ok(), "detail": audit.err() }))?;
                let mut s = String::from("iteration,rho,rho_next,v_prev,v,primal_loss,dual_loss\n");
                for r in &state.history {
                    let vp = r.v_prev.map_or(String::new(), |v| v.to_string());
                    s.push_str(&format!("{},{},{},{vp},{},{},{}\n", r.iteration, r.rho, r.rho_next, r.v, r.primal_loss, r.dual_loss));
                }
                dir.write_text("history.csv", &s)?;
                let primal = state.primal.clone();
                ("pdl", primal, SavedModel::PdlScopf { network_hash, sampler, state })
            } else {
                let primal = penalty_baseline_train(&pb, &cfg.pdl)?;
                ("penalty", primal.clone(), SavedModel::PenaltyScopf { network_hash, sampler, primal })
            };
            dir.timing("train", t0.elapsed().as_secs_f64());
            if let Some(ds) = ds.as_ref().filter(|d| d.config.problem == ProblemKind::Scopf) {
                let items = scopf_test(ds)?;
                if !items.is_empty() {
                    write_scopf_eval(dir, label, &pdl_scopf_eval(&pb, &primal, &items)?)?;
                }
            }
            dir.write_json("model.json", &saved)
        }
    }
}

fn check_hash(saved: &str, net: &Network) -> CliResult<()> {
    if saved == net.content_hash() {
        Ok(())
    } else {
        Err(CliError::Schema("model was trained on a different network".into()))
    }
}

fn cmd_eval(cfg: &RunConfig, a: &EvalArgs, dir: &mut RunDir) -> CliResult<()> {
    let ed = cfg.ed_model()?;
    let ds = load_dataset(&a.dataset, &ed.net)?;
    let dual_report = |dir: &mut RunDir, rep: optproxy::dual::DualGapReport| -> CliResult<()> {
        dir.write_json("dual_gap.json", &rep)?;
        dir.write_text("dual_gap.csv", &rep.to_csv())
    };
    let saved = match (&a.model_file, a.replay) {
        (Some(p), false) => Some(read_json::<SavedModel>(p)?),
        (None, true) => None,
        _ => return Err(CliError::Config("pass exactly one of --model-file and --replay".into())),
    };
    match saved {
        None if a.dual => {
            require_problem(&ds, ProblemKind::Dcopf, "dual replay")?;
            let items = require_labeled_test(&ds)?;
            let z: Vec<Vec<f64>> = items
                .iter()
                .map(|(_, l)| l.duals.clone().ok_or_else(|| CliError::Data("labels carry no duals".into())))
                .collect::<CliResult<_>>()?;
            let pairs: Vec<(Instance, f64)> = items.into_iter().map(|(i, l)| (i, l.dispatch.objective)).collect();
            let rep = eval_dual_gap(&ed, &pairs, |inst| {
                let k = pairs.iter().position(|(i, _)| i == inst).expect("instance from the test set");
                Ok(z[k].clone())
            })?;
            dual_report(dir, rep)
        }
        None => {
            if ds.config.problem == ProblemKind::Scopf {
                return Err(CliError::Config("primal replay scores ed and dcopf datasets".into()));
            }
            let items = require_labeled_test(&ds)?;
            let preds: Vec<Vec<f64>> = items.iter().map(|(_, l)| l.dispatch.p.clone()).collect();
            let pairs: Vec<(Instance, f64)> = items.into_iter().map(|(i, l)| (i, l.dispatch.objective)).collect();
            let rep = evaluate_dispatches(&ed, &pairs, &preds, "oracle-replay", "oracle")?;
            dir.write_json("eval.json", &rep)?;
            dir.write_text("eval.csv", &rep.to_csv())
        }
        Some(SavedModel::Dual { model }) => {
            check_hash(&model.network_hash, &ed.net)?;
            require_problem(&ds, ProblemKind::Dcopf, "dual evaluation")?;
            let pairs: Vec<(Instance, f64)> = require_labeled_test(&ds)?.into_iter().map(|(i, l)| (i, l.dispatch.objective)).collect();
            let rep = eval_dual_gap(&ed, &pairs, |inst| model.predict_z(inst))?;
            dual_report(dir, rep)
        }
        Some(_) if a.dual => Err(CliError::Config("--dual needs a dual model".into())),
        Some(SavedModel::Primal { regime, model }) => {
            require_problem(&ds, ProblemKind::Ed, "primal evaluation")?;
            let pairs: Vec<(Instance, f64)> = require_labeled_test(&ds)?.into_iter().map(|(i, l)| (i, l.dispatch.objective)).collect();
            let rep = evaluate(&ed, &model, &pairs, &regime)?;
            dir.write_json("eval.json", &rep)?;
            dir.write_text("eval.csv", &rep.to_csv())
        }
        Some(SavedModel::PdlScopf { network_hash, sampler, state }) => {
            check_hash(&network_hash, &ed.net)?;
            let items = scopf_test(&ds)?;
            let pb = ScopfProblem::new(ScopfModel::all_contingencies(ed)?, sampler);
            write_scopf_eval(dir, "pdl", &pdl_scopf_eval(&pb, &state.primal, &items)?)
        }
        Some(SavedModel::PenaltyScopf { network_hash, sampler, primal }) => {
            check_hash(&network_hash, &ed.net)?;
            let items = scopf_test(&ds)?;
            let pb = ScopfProblem::new(ScopfModel::all_contingencies(ed)?, sampler);
            write_scopf_eval(dir, "penalty", &pdl_scopf_eval(&pb, &primal, &items)?)
        }
    }
}

fn cmd_risk(cfg: &RunConfig, a: &RiskArgs, dir: &mut RunDir) -> CliResult<()> {
    let ed = cfg.ed_model()?;
    cfg.risk.scenarios.validate()?;
    let set = build_scenarios(&ed.net, &cfg.risk.scenarios)?;
    let thr = cfg.risk.thresholds;
    let oracle = || run_engine(&ed, &set, &thr, "oracle", |_, _, inst| ed.solve_ed(inst));
    let (proxy, reference) = match &a.model_file {
        Some(p) => {
            let SavedModel::Primal { model, .. } = read_json::<SavedModel>(p)? else {
                return Err(CliError::Config("risk engines are primal models".into()));
            };
            let run = run_engine(&ed, &set, &thr, model.arch.name(), |_, _, inst| model.predict(&ed, inst))?;
            (run, if cfg.risk.oracle { Some(oracle()?) } else { None })
        }
        None => (oracle()?, None),
    };
    let lines: Vec<String> = ed.net.lines.iter().map(|l| l.id.clone()).collect();
    let rep = RiskReport::new(lines.clone(), thr, &proxy, reference.as_ref())?;
    let by_line = |c: &optproxy::risk::RiskColumns| -> serde_json::Map<String, serde_json::Value> {
        lines
            .iter()
            .enumerate()
            .map(|(l, id)| (id.clone(), c.line_probability(l).into()))
            .collect()
    };
    dir.write_json(
        "risk_summary.json",
        &serde_json::json!({
            "engine": rep.proxy.engine,
            "scenarios": rep.scenarios,
            "horizon": rep.horizon,
            "max_balance_probability": rep.proxy.max_balance(),
            "line_probability": by_line(&rep.proxy),
            "oracle_max_balance_probability": rep.oracle.as_ref().map(|o| o.max_balance()),
            "oracle_line_probability": rep.oracle.as_ref().map(by_line),
        }),
    )?;
    dir.write_json("risk.json", &rep)?;
    let csv = rep.to_csv();
    dir.write_text("risk.csv", &csv)?;
    let curves = risk_curves(&[(rep.proxy.engine.clone(), Table::parse(&csv, "risk.csv")?)])?;
    dir.write_text("risk.svg", &curves_svg("adverse-event probability", &curves))
}

fn run_label(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

fn cmd_report(a: &ReportArgs, dir: &mut RunDir) -> CliResult<()> {
    for r in &a.runs {
        if !r.is_dir() {
            return Err(CliError::Data(format!("{}: not a run directory", r.display())));
        }
    }
    let mut written = 0;
    let collect = |name: &str| -> CliResult<Vec<(String, Table)>> {
        a.runs
            .iter()
            .filter(|r| r.join(name).is_file())
            .map(|r| Ok((run_label(r), Table::read(&r.join(name))?)))
            .collect()
    };
    for name in MERGED_TABLES {
        let tables = collect(name)?;
        if !tables.is_empty() {
            dir.write_text(name, &merge(&tables)?.to_csv())?;
            written += 1;
        }
    }
    let risk = collect("risk.csv")?;
    if !risk.is_empty() {
        let curves = risk_curves(&risk)?;
        dir.write_text("risk_curves.csv", &curves.to_csv())?;
        dir.write_text("risk_curves.svg", &curves_svg("adverse-event probability", &curves))?;
        written += 1;
    }
    let mut timing = String::from("run,key,seconds\n");
    for r in &a.runs {
        let meta = r.join("meta.json");
        if meta.is_file() {
            let v: serde_json::Value = read_json(&meta)?;
            if let Some(t) = v["timings_seconds"].as_object() {
                for (k, s) in t {
                    timing.push_str(&format!("{},{k},{}\n", run_label(r), s));
                }
            }
        }
    }
    dir.record("timing.csv");
    std::fs::write(dir.join("timing.csv"), timing).map_err(|e| CliError::io(dir.join("timing.csv"), e))?;
    if written == 0 {
        return Err(CliError::Data("no report tables found in the given runs".into()));
    }
    Ok(())
}
