//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p optproxy --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use optproxy::cases;
use optproxy::dual::{completion_backward, completion_lp, eval_dual_gap, train_doplp, DualConfig};
use optproxy::instance::{build_dataset, instance_seed, label_dataset, sample_instance, DatasetConfig, Instance, SamplerConfig};
use optproxy::lp::{simplex_solve, LpStatus};
use optproxy::models::{EdModel, ScopfModel};
use optproxy::nn::grad_check;
use optproxy::pdl::{
    audit_rho_schedule, bs_layer, bs_layer_backward, bs_readout, pdl_scopf_eval, pdl_scopf_train, pdl_train, penalty_baseline_train, OuterRecord,
    PdlConfig, ScopfProblem, ToyProblem, BS_ITERATIONS,
};
use optproxy::primal::{evaluate, train, Architecture, ProxyModel, Regime, TrainConfig, TrainData};
use optproxy::repair::{power_balance_repair, power_balance_repair_backward, reserve_repair, reserve_repair_backward, RepairContext};
use optproxy::risk::{build_scenarios, run_engine, with_line_limit, RiskReport, ScenarioConfig, Thresholds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn within(secs: f64, limit: f64) -> bool {
    secs <= limit
}

fn c1_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut obj_err, mut duality, mut optimal, mut mismatch) = (0.0f64, 0.0f64, 0, 0);
    for _ in 0..200 {
        let lp = common::random_lp(&mut rng);
        let sol = simplex_solve(&lp).expect("simplex runs");
        match common::vertex_enumeration(&lp) {
            Some((obj, _)) => {
                if sol.status != LpStatus::Optimal {
                    mismatch += 1;
                    continue;
                }
                optimal += 1;
                obj_err = obj_err.max((sol.objective - obj).abs() / obj.abs().max(1.0));
                let d = lp.dual_objective(&sol.z, &sol.z_l, &sol.z_u);
                duality = duality.max((sol.objective - d).abs() / sol.objective.abs().max(1.0));
            }
            None => mismatch += usize::from(sol.status != LpStatus::Infeasible),
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        mismatch == 0 && obj_err <= 1e-8 && duality <= 1e-7 && within(secs, 30.0),
        format!("{optimal}/200 optimal, status mismatches {mismatch}, max objective err {obj_err:.1e}, max duality residual {duality:.1e}, {secs:.1}s"),
    )
}

fn c2_primal_feasibility() -> Outcome {
    let t0 = Instant::now();
    let ed = EdModel::new(cases::case30()).unwrap();
    let base = ed.net.base_loads();
    let sampler = SamplerConfig::default();
    let models: Vec<ProxyModel> = (0..5)
        .map(|s| ProxyModel::new(&ed, Architecture::E2elr, &TrainConfig { seed: 900 + s, ..TrainConfig::default() }).unwrap())
        .collect();
    let (mut bal, mut boxv, mut res, mut certified, mut errors) = (0, 0, 0, 0, 0);
    for i in 0..1000 {
        let inst = sample_instance(&ed.net, &base, &sampler, instance_seed(202, i));
        let prm = ed.params(&inst);
        let Ok(d) = models[i % models.len()].predict(&ed, &inst) else {
            errors += 1;
            continue;
        };
        let p = &d.p;
        if (p.iter().sum::<f64>() - prm.total_load).abs() > 1e-9 * (1.0 + prm.total_load) {
            bal += 1;
        }
        if p.iter().enumerate().any(|(g, &v)| v < prm.p_min[g] || v > prm.p_max[g]) {
            boxv += 1;
        }
        if ed.solve_ed(&inst).is_ok() {
            certified += 1;
            if ed.reserve_shortfall(&prm, p) > 1e-9 * (1.0 + prm.reserve) {
                res += 1;
            }
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        bal + boxv + res + errors == 0 && within(secs, 60.0),
        format!("1000 instances: balance {bal}, box {boxv}, reserve {res}/{certified} certified, errors {errors}, {secs:.1}s"),
    )
}

fn c3_dual_feasibility() -> Outcome {
    let t0 = Instant::now();
    let ed = EdModel::new(cases::case30()).unwrap();
    let base = ed.net.base_loads();
    let sampler = SamplerConfig::loads_only();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut solved, mut drawn, mut eq_fail, mut sign_fail, mut weak_fail) = (0, 0, 0, 0, 0);
    let mut max_eq = 0.0f64;
    while solved < 1000 && drawn < 5000 {
        let inst = sample_instance(&ed.net, &base, &sampler, instance_seed(303, drawn));
        drawn += 1;
        let lp = ed.build_dcopf_lp(&ed.params(&inst)).unwrap().lp;
        let sol = simplex_solve(&lp).unwrap();
        if !sol.is_optimal() {
            continue;
        }
        solved += 1;
        let z: Vec<f64> = (0..lp.n_rows()).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let ds = completion_lp(&z, &lp).unwrap();
        let eq = ds.equality_residual(&lp);
        max_eq = max_eq.max(eq);
        eq_fail += usize::from(eq > 1e-9 * (1.0 + lp.c.iter().map(|c| c.abs()).fold(0.0, f64::max)));
        sign_fail += usize::from(!ds.signs_ok());
        weak_fail += usize::from(ds.dual_objective > sol.objective + 1e-7 * sol.objective.abs());
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        solved == 1000 && eq_fail + sign_fail + weak_fail == 0 && within(secs, 120.0),
        format!("{solved} solved of {drawn} drawn: equality failures {eq_fail} (max residual {max_eq:.1e}), sign failures {sign_fail}, weak duality failures {weak_fail}, {secs:.1}s"),
    )
}

fn random_ctx(rng: &mut ChaCha8Rng, reserve: bool) -> RepairContext<f64> {
    let n = rng.gen_range(3..=6);
    let glb: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
    let gub: Vec<f64> = glb.iter().map(|&l| l + rng.gen_range(1.0..20.0)).collect();
    let rbar: Vec<f64> = glb.iter().zip(&gub).map(|(&l, &u)| rng.gen_range(0.1..=(u - l))).collect();
    let (lo, hi) = (glb.iter().sum::<f64>(), gub.iter().sum::<f64>());
    let d = rng.gen_range(lo + 0.05 * (hi - lo)..hi - 0.05 * (hi - lo));
    let r = if reserve { rng.gen_range(0.0..rbar.iter().sum::<f64>() * 0.8) } else { 0.0 };
    RepairContext::new(glb, gub, rbar, d, r).unwrap()
}

fn in_box(rng: &mut ChaCha8Rng, ctx: &RepairContext<f64>) -> Vec<f64> {
    ctx.glb.iter().zip(&ctx.gub).map(|(&l, &u)| rng.gen_range(l..u)).collect()
}

fn c4_gradients() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut lines = Vec::new();
    let mut ok = true;

    let mut worst = 0.0f64;
    let mut failed = 0;
    let mut n = 0;
    while n < 100 {
        let ctx = random_ctx(&mut rng, false);
        let x = in_box(&mut rng, &ctx);
        if (x.iter().sum::<f64>() - ctx.total_load).abs() <= 1e-3 {
            continue;
        }
        n += 1;
        let r = grad_check(
            |x| power_balance_repair(x, &ctx).unwrap().0,
            |x, ct| power_balance_repair_backward(&power_balance_repair(x, &ctx).unwrap().1, &ctx, ct),
            &x,
            1e-6,
            1e-5,
        );
        worst = worst.max(r.max_rel_err);
        failed += usize::from(!r.passed());
    }
    ok &= failed == 0;
    lines.push(format!("balance {worst:.1e}"));

    let (mut worst, mut failed, mut n) = (0.0f64, 0, 0);
    while n < 100 {
        let ctx = random_ctx(&mut rng, true);
        let Ok((x, _)) = power_balance_repair(&in_box(&mut rng, &ctx), &ctx) else { continue };
        let (_, _, tr) = reserve_repair(&x, &ctx);
        // interior: the partition and the binding term survive a small move
        let stable = (0..x.len()).all(|j| {
            [-1e-4, 1e-4].iter().all(|&d| {
                let mut y = x.clone();
                y[j] += d;
                let (_, _, t) = reserve_repair(&y, &ctx);
                t.up_set == tr.up_set && t.limit == tr.limit
            })
        });
        if !stable || tr.delta <= 0.0 {
            continue;
        }
        n += 1;
        let r = grad_check(
            |y| reserve_repair(y, &ctx).0,
            |y, ct| reserve_repair_backward(&reserve_repair(y, &ctx).2, &ctx, ct),
            &x,
            1e-6,
            1e-5,
        );
        worst = worst.max(r.max_rel_err);
        failed += usize::from(!r.passed());
    }
    ok &= failed == 0;
    lines.push(format!("reserve {worst:.1e}"));

    let ed = EdModel::new(cases::case30()).unwrap();
    let base = ed.net.base_loads();
    let (mut worst, mut failed, mut n, mut i) = (0.0f64, 0, 0, 0);
    while n < 100 {
        let inst = sample_instance(&ed.net, &base, &SamplerConfig::loads_only(), instance_seed(404, i));
        i += 1;
        let lp = ed.build_dcopf_lp(&ed.params(&inst)).unwrap().lp;
        let z: Vec<f64> = (0..lp.n_rows()).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let atz = lp.a.tmatvec(&z);
        if lp.c.iter().zip(&atz).any(|(c, a)| (c - a).abs() < 1e-2) {
            continue;
        }
        n += 1;
        let r = grad_check(
            |z| vec![completion_lp(z, &lp).unwrap().dual_objective],
            |z, ct| completion_backward(z, &lp, ct[0]).unwrap(),
            &z,
            1e-4,
            1e-5,
        );
        worst = worst.max(r.max_rel_err);
        failed += usize::from(!r.passed());
    }
    ok &= failed == 0;
    lines.push(format!("completion {worst:.1e}"));

    let (mut worst, mut failed, mut n) = (0.0f64, 0, 0);
    while n < 100 {
        let ng = rng.gen_range(3..=6);
        let p_max: Vec<f64> = (0..ng).map(|_| rng.gen_range(10.0..100.0)).collect();
        let p_min: Vec<f64> = p_max.iter().map(|&u| rng.gen_range(0.0..0.2 * u)).collect();
        let p: Vec<f64> = p_min.iter().zip(&p_max).map(|(&l, &u)| rng.gen_range(l..u)).collect();
        let gamma: Vec<f64> = (0..ng).map(|_| rng.gen_range(0.1..1.0)).collect();
        let k = rng.gen_range(0..ng);
        let nk = rng.gen_range(0.05..0.95);
        let prm = optproxy::models::EdParams {
            total_load: p.iter().sum(),
            loads: vec![p.iter().sum()],
            r_max: vec![0.0; ng],
            cost: vec![1.0; ng],
            reserve: 0.0,
            load_flow: vec![],
            p_min,
            p_max,
        };
        let near_kink = (0..ng).any(|i| i != k && (p[i] + nk * gamma[i] * (prm.p_max[i] - prm.p_min[i]) - prm.p_max[i]).abs() < 1e-3);
        if near_kink {
            continue;
        }
        n += 1;
        let res = bs_readout(&p, k, &gamma, &prm, nk);
        let r = grad_check(|x| bs_readout(x, k, &gamma, &prm, nk).p, |_, ct| bs_layer_backward(&res, ct), &p, 1e-6, 1e-4);
        worst = worst.max(r.max_rel_err);
        failed += usize::from(!r.passed());
    }
    ok &= failed == 0;
    lines.push(format!("bs read-out {worst:.1e}"));

    let secs = t0.elapsed().as_secs_f64();
    outcome(ok && within(secs, 60.0), format!("100 points each, max rel err: {}, {secs:.1}s", lines.join(", ")))
}

fn c5_ssl() -> Outcome {
    let t0 = Instant::now();
    let ed = EdModel::new(cases::case30()).unwrap();
    let ds = build_dataset(&ed.net, &DatasetConfig { n_instances: 1200, seed: 1, ..DatasetConfig::default() }).unwrap();
    let ds = label_dataset(&ed.net, &ds, &ed).unwrap();
    let train_set: Vec<Instance> = ds.split.train.iter().map(|&i| ds.instances[i].clone()).collect();
    let test: Vec<(Instance, f64)> = ds
        .split
        .test
        .iter()
        .map(|&i| (ds.instances[i].clone(), ds.labels[i].as_ref().unwrap().dispatch.objective))
        .collect();
    let cfg = TrainConfig { epochs: 100, seed: 5, ..TrainConfig::default() };
    let mut gaps = Vec::new();
    for arch in [Architecture::E2elr, Architecture::Naive] {
        let mut m = ProxyModel::new(&ed, arch, &cfg).unwrap();
        train(&ed, &mut m, TrainData::Unlabeled(&train_set), Regime::Ssl, &cfg).unwrap();
        gaps.push(evaluate(&ed, &m, &test, "ssl").unwrap());
    }
    let (e, n) = (&gaps[0], &gaps[1]);
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        e.mean_gap <= 0.03 && n.mean_gap >= 2.0 * e.mean_gap && within(secs, 600.0),
        format!(
            "{} test instances: e2elr mean gap {:.3}%, feasible {:.0}%; naive mean gap {:.2}%; ratio {:.0}x, {secs:.1}s",
            test.len(),
            100.0 * e.mean_gap,
            100.0 * e.feasibility_rate,
            100.0 * n.mean_gap,
            n.mean_gap / e.mean_gap
        ),
    )
}

fn c6_doplp() -> Outcome {
    let t0 = Instant::now();
    let ed = EdModel::new(cases::case3()).unwrap();
    let base = ed.net.base_loads();
    let sampler = SamplerConfig::loads_only();
    let mut items = Vec::new();
    let (mut i, mut congested) = (0, 0);
    while items.len() < 600 {
        let inst = sample_instance(&ed.net, &base, &sampler, instance_seed(5, i));
        i += 1;
        if let Ok((d, z)) = ed.solve_dcopf(&inst) {
            congested += usize::from(z[1..].iter().any(|v| v.abs() > 1e-9));
            items.push((inst, d.objective));
        }
    }
    let train_set: Vec<Instance> = items[..500].iter().map(|x| x.0.clone()).collect();
    let test = &items[500..];
    let (proxy, _) = train_doplp(&ed, &train_set, &DualConfig { epochs: 300, ..DualConfig::default() }).unwrap();
    let rep = eval_dual_gap(&ed, test, |inst| proxy.predict_z(inst)).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        rep.summary.geomean <= 0.05 && rep.dual_infeasible == 0 && within(secs, 600.0),
        format!(
            "case3, {congested}/600 congested: geomean dual gap {:.3}%, max {:.2}%, dual infeasible {}, {secs:.1}s",
            100.0 * rep.summary.geomean,
            100.0 * rep.summary.max,
            rep.dual_infeasible
        ),
    )
}

fn scopf_problem() -> ScopfProblem {
    let ed = EdModel::new(cases::scopf3()).unwrap();
    ScopfProblem::new(ScopfModel::all_contingencies(ed).unwrap(), SamplerConfig::scopf())
}

fn scopf_test_set(pb: &ScopfProblem) -> Vec<(Instance, optproxy::models::ScopfSolution)> {
    let net = &pb.model.ed.net;
    let base = net.base_loads();
    (0..100)
        .filter_map(|i| {
            let inst = sample_instance(net, &base, &pb.sampler, instance_seed(707, i));
            pb.model.solve_bruteforce(&inst).ok().map(|s| (inst, s))
        })
        .collect()
}

fn c7_pdl_scopf(histories: &mut Vec<(PdlConfig, Vec<OuterRecord>)>) -> Outcome {
    let t0 = Instant::now();
    let pb = scopf_problem();
    let test: Vec<(Instance, f64)> = scopf_test_set(&pb).into_iter().map(|(i, s)| (i, s.objective)).collect();
    let cfg = PdlConfig { seed: 7, ..PdlConfig::default() };
    let state = pdl_scopf_train(&pb, &cfg).unwrap();
    let pdl = pdl_scopf_eval(&pb, &state.primal, &test).unwrap();
    let pen = penalty_baseline_train(&pb, &cfg).unwrap();
    let pen = pdl_scopf_eval(&pb, &pen, &test).unwrap();
    histories.push((cfg, state.history));
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        !test.is_empty()
            && pb.model.k_gen.len() == pb.model.ed.n_gens()
            && !pb.model.k_line.is_empty()
            && pdl.max_violation_pu <= 1e-3
            && pdl.mean_gap <= 0.05
            && pdl.mean_gap <= pen.mean_gap
            && within(secs, 900.0),
        format!(
            "scopf3, {} gen + {} line contingencies, {} test: PDL max violation {:.1e} p.u., mean gap {:.2}%; penalty mean gap {:.2}% (max violation {:.1e} p.u.), {secs:.1}s",
            pb.model.k_gen.len(),
            pb.model.k_line.len(),
            test.len(),
            pdl.max_violation_pu,
            100.0 * pdl.mean_gap,
            100.0 * pen.mean_gap,
            pen.max_violation_pu
        ),
    )
}

fn c8_bs_oracle() -> Outcome {
    let t0 = Instant::now();
    let pb = scopf_problem();
    let tol = 2f64.powi(-18);
    let (mut checked, mut worst_n, mut worst_p, mut bad) = (0, 0.0f64, 0.0f64, 0);
    for (inst, sol) in scopf_test_set(&pb) {
        let prm = pb.model.ed.params(&inst);
        for c in &sol.gen_contingencies {
            if bs_readout(&sol.p, c.gen, pb.gamma(), &prm, 1.0).residual < 0.0 {
                continue;
            }
            checked += 1;
            let r = bs_layer(&sol.p, c.gen, pb.gamma(), &prm, BS_ITERATIONS);
            let dn = (r.n - c.n).abs();
            worst_n = worst_n.max(dn);
            let p_tol = (0..r.p.len()).all(|i| {
                let step = pb.gamma()[i] * (prm.p_max[i] - prm.p_min[i]) * 2f64.powi(-(BS_ITERATIONS as i32));
                let d = (r.p[i] - c.p[i]).abs();
                worst_p = worst_p.max(d);
                d <= step + 1e-9
            });
            bad += usize::from(dn > tol || !p_tol);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        checked > 0 && bad == 0 && within(secs, 60.0),
        format!("{checked} contingencies: max |Δn| {worst_n:.1e} (bound {tol:.1e}), max |Δp| {worst_p:.1e} MW, disagreements {bad}, {secs:.1}s"),
    )
}

fn c9_rho_schedule(histories: &mut Vec<(PdlConfig, Vec<OuterRecord>)>) -> Outcome {
    let toy = PdlConfig {
        rho_max: 10.0,
        outer_iterations: 10,
        inner_steps: 300,
        minibatch: 16,
        violation_batch: 32,
        lr_primal: 1e-2,
        lr_dual: 1e-2,
        hidden_width: Some(16),
        seed: 9,
        ..PdlConfig::default()
    };
    let st = pdl_train(&ToyProblem, &toy).unwrap();
    histories.push((toy, st.history));
    let mut errs = Vec::new();
    let mut increases = 0;
    let mut iterations = 0;
    for (cfg, h) in histories.iter() {
        iterations += h.len();
        increases += h.iter().filter(|r| r.rho_next > r.rho).count();
        if let Err(e) = audit_rho_schedule(cfg, h) {
            errs.push(e);
        }
    }
    outcome(
        errs.is_empty() && iterations > 0,
        format!("{} histories, {iterations} outer iterations, {increases} increases, violations: {}", histories.len(), if errs.is_empty() { "none".into() } else { errs.join("; ") }),
    )
}

fn c10_risk() -> Outcome {
    let t0 = Instant::now();
    let ed = EdModel::new(with_line_limit(&cases::case30(), "l25_26", 3.8).unwrap()).unwrap();
    let cfg = TrainConfig { epochs: 100, seed: 1, ..TrainConfig::default() };
    let mut m = ProxyModel::new(&ed, Architecture::E2elr, &cfg).unwrap();
    train(&ed, &mut m, TrainData::Stream { sampler: SamplerConfig::default(), batches_per_epoch: 16 }, Regime::Ssl, &cfg).unwrap();
    let set = build_scenarios(&ed.net, &ScenarioConfig::default()).unwrap();
    let thr = Thresholds::default();
    let oracle = run_engine(&ed, &set, &thr, "oracle", |_, _, inst| ed.solve_ed(inst)).unwrap();
    let proxy = run_engine(&ed, &set, &thr, "e2elr", |_, _, inst| m.predict(&ed, inst)).unwrap();
    let lines: Vec<String> = ed.net.lines.iter().map(|l| l.id.clone()).collect();
    let l = lines.iter().position(|x| x == "l25_26").unwrap();
    let rep = RiskReport::new(lines, thr, &proxy, Some(&oracle)).unwrap();
    let oc = rep.oracle.as_ref().unwrap();
    let (pp, po) = (rep.proxy.line_probability(l), oc.line_probability(l));
    let (bp, bo) = (rep.proxy.max_balance(), oc.max_balance());
    let secs = t0.elapsed().as_secs_f64();
    outcome(
        (pp - po).abs() <= 0.05 && po > 0.0 && bp == 0.0 && bo == 0.0 && within(secs, 600.0),
        format!(
            "{} scenarios x {} steps: forced-line probability proxy {pp:.4} oracle {po:.4}; max balance probability proxy {bp} oracle {bo}; {:.3}s vs {:.3}s per scenario, {secs:.1}s",
            rep.scenarios, rep.horizon, rep.proxy.mean_seconds_per_scenario, oc.mean_seconds_per_scenario
        ),
    )
}

fn main() -> ExitCode {
    let mut histories = Vec::new();
    let criteria: Vec<(&str, Box<dyn FnOnce(&mut Vec<(PdlConfig, Vec<OuterRecord>)>) -> Outcome>)> = vec![
        ("oracle correctness", Box::new(|_| c1_oracle())),
        ("primal feasibility by construction", Box::new(|_| c2_primal_feasibility())),
        ("dual feasibility by construction", Box::new(|_| c3_dual_feasibility())),
        ("gradient certification", Box::new(|_| c4_gradients())),
        ("desk-scale SSL training", Box::new(|_| c5_ssl())),
        ("desk-scale DOPLP", Box::new(|_| c6_doplp())),
        ("PDL-SCOPF fixture", Box::new(c7_pdl_scopf)),
        ("BSLayer-oracle agreement", Box::new(|_| c8_bs_oracle())),
        ("rho-schedule property", Box::new(c9_rho_schedule)),
        ("risk pipeline consistency", Box::new(|_| c10_risk())),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let o = run(&mut histories);
        failed += usize::from(!o.passed);
        println!("{} {:>2} {name}: {}", if o.passed { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
