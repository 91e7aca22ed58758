//! Execution of one experiment block.

use crate::config::Task;
use crate::params::*;
use rayon::prelude::*;
use rwre_core::aux::{annealed_targets, estimate_w_probability, run_aux, AllGood, AuxConfig, Classifier, PlantedBad};
use rwre_core::env::{plant_naive_trap, Environment, EnvironmentLaw};
use rwre_core::error::Error;
use rwre_core::exitstats::classify::{classify_block, ClassifyOptions};
use rwre_core::exitstats::dist::FiniteDist;
use rwre_core::exitstats::estimate::{estimate_exit, ExitMode, ExitRegion};
use rwre_core::exitstats::exact::{exact_exit, BoxRegion};
use rwre_core::exitstats::llt::llt_bounds;
use rwre_core::experiments::{reduction_diagnostics, return_probability, slowdown_direct, tgamma_test, trap_lower_bound, TrapRadius};
use rwre_core::geom::{build_ladder, choose_constants, BlockSpec, ConstantsMode};
use rwre_core::regen::{certified, detect_regenerations, iid_diagnostics, summarize, tau1_tail, RegenerationRecord, TailOptions};
use rwre_core::rng::{derive_seed, replicate_seed};
use rwre_core::walk::{run_path, run_to_stop, StopCause, StopKind, StopRule};
use rwre_core::Point;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::sync::Arc;

/// A CSV table: header plus rows of already formatted cells.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_json(&self) -> Value {
        json!({ "header": self.header, "rows": self.rows })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub outputs: Value,
    pub table: Table,
}

fn s<T: ToString>(v: T) -> String {
    v.to_string()
}

fn coords_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("x_{i}")).collect()
}

fn coord_cells(x: &Point) -> Vec<String> {
    x.coords().iter().map(s).collect()
}

fn err(e: Error) -> String {
    e.to_string()
}

fn law_of(task: &Task) -> Result<Arc<EnvironmentLaw>, String> {
    task.law.clone().map(Arc::new).ok_or_else(|| format!("kind {} needs a law", task.kind))
}

fn dim_check(what: &str, got: usize, d: usize) -> Result<(), String> {
    if got != d {
        return Err(format!("{what} has {got} coordinates, the law has dimension {d}"));
    }
    Ok(())
}

/// The fixed environment used by quenched kinds: `env_seed` of the law when
/// given, else derived from the block seed.
pub fn quenched_env(task: &Task) -> Result<Environment, String> {
    let law = law_of(task)?;
    let seed = task.law_spec.as_ref().and_then(|l| l.env_seed).unwrap_or_else(|| derive_seed(task.seed, "env"));
    Ok(Environment::from_arc(law, seed))
}

fn stop_rule(spec: Option<&StopSpec>, d: usize, steps: u64) -> Result<StopRule, String> {
    let kind = match spec {
        None | Some(StopSpec::Budget {}) => StopKind::Budget,
        Some(StopSpec::Halfspace { dir, level }) => {
            dim_check("stop.dir", dir.len(), d)?;
            StopKind::Halfspace { dir: dir.clone(), level: *level }
        }
        Some(StopSpec::Slab { dir, lo, hi }) => {
            dim_check("stop.dir", dir.len(), d)?;
            StopKind::Slab { dir: dir.clone(), lo: *lo, hi: *hi }
        }
        Some(StopSpec::Box { lo, hi }) => {
            dim_check("stop.lo", lo.len(), d)?;
            dim_check("stop.hi", hi.len(), d)?;
            StopKind::BoxExit { lo: Point::new(lo), hi: Point::new(hi) }
        }
    };
    Ok(StopRule::new(kind, steps))
}

/// Run one task. Errors are reported as messages and recorded in the ledger.
pub fn run_task(task: &Task) -> Result<RunOutput, String> {
    match (&task.params, task.kind) {
        (Params::Simulate(p), _) => simulate(task, p),
        (Params::Regen(p), _) => regen(task, p),
        (Params::Exit(p), Kind::ExitHist) => exit_hist(task, p),
        (Params::Exit(p), Kind::ExitCompare) => exit_compare(task, p),
        (Params::Llt(p), _) => llt(task, p),
        (Params::Classify(p), _) => classify(task, p),
        (Params::Tgamma(p), _) => tgamma(task, p),
        (Params::Slowdown(p), _) => slowdown(task, p),
        (Params::Trap(p), _) => trap(task, p),
        (Params::Aux(p), Kind::AuxRun) => aux_run(task, p),
        (Params::Aux(p), Kind::Wevent) => wevent(task, p),
        (Params::Returns(p), _) => returns(task, p),
        (Params::Reduction(p), _) => reduction(task, p),
        (_, k) => Err(format!("parameters do not match kind {k}")),
    }
}

fn simulate(task: &Task, p: &SimulateParams) -> Result<RunOutput, String> {
    let law = law_of(task)?;
    let d = law.dim();
    let stop = stop_rule(p.stop.as_ref(), d, p.steps)?;
    let mode = if p.quenched { ExitMode::Quenched(quenched_env(task)?) } else { ExitMode::Annealed(law) };
    let exits: Vec<_> = (0..task.samples)
        .into_par_iter()
        .map(|i| {
            let (env, mut rng) = mode.sample_env(task.seed, i as u64);
            run_to_stop(&env, Point::zero(d), &stop, &mut rng)
        })
        .collect();
    let mut header = vec!["replicate".to_string(), "steps".into(), "cause".into()];
    header.extend(coords_header(d));
    let mut table = Table { header, rows: Vec::new() };
    let mut mean = vec![0.0; d];
    let mut hits = 0usize;
    let mut steps = 0u64;
    for (i, e) in exits.iter().enumerate() {
        let cause = match e.cause {
            StopCause::Hit => "hit",
            StopCause::BudgetExhausted => "budget_exhausted",
        };
        hits += (e.cause == StopCause::Hit) as usize;
        steps += e.steps;
        for (j, m) in mean.iter_mut().enumerate() {
            *m += e.position.get(j) as f64;
        }
        let mut row = vec![s(i), s(e.steps), cause.to_string()];
        row.extend(coord_cells(&e.position));
        table.push(row);
    }
    let n = exits.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    Ok(RunOutput {
        outputs: json!({
            "replicates": exits.len(),
            "hits": hits,
            "budget_exhausted": exits.len() - hits,
            "mean_steps": steps as f64 / n,
            "mean_final_position": mean,
            "quenched": p.quenched,
        }),
        table,
    })
}

fn regen(task: &Task, p: &RegenParams) -> Result<RunOutput, String> {
    let law = law_of(task)?;
    let d = law.dim();
    let dir = p.direction.clone().unwrap_or_else(|| Point::unit(d, 0).to_f64());
    dim_check("direction", dir.len(), d)?;
    let mode = ExitMode::Annealed(law.clone());
    let stop = StopRule::budget(p.steps);
    let per_walk: Vec<Vec<RegenerationRecord>> = (0..task.samples)
        .into_par_iter()
        .map(|i| {
            let (env, mut rng) = mode.sample_env(task.seed, i as u64);
            let mut path = Vec::new();
            run_path(&env, Point::zero(d), &stop, &mut rng, &mut path);
            certified(&detect_regenerations(&path, &dir), p.min_margin).to_vec()
        })
        .collect();
    // Pool slabs 2.. of every walk behind one leading record, which the
    // summaries skip.
    let lead = per_walk.iter().find_map(|r| r.first().cloned()).ok_or("no certified regeneration in any walk")?;
    let mut pooled = vec![lead];
    for recs in &per_walk {
        pooled.extend(recs.iter().skip(1).cloned());
    }
    let summary = summarize(&pooled, f64::NEG_INFINITY).map_err(err)?;
    let diagnostics = match iid_diagnostics(&pooled, &dir, p.significance) {
        Ok(r) => serde_json::to_value(r).expect("report serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    };
    let opts = TailOptions { max_steps: p.steps, min_margin: p.min_margin };
    let tail = tau1_tail(&law, &dir, &p.u_grid, task.samples, derive_seed(task.seed, "tail"), opts);
    let mut table = Table::new(&["u", "survival", "stderr", "censored_frac"]);
    for r in &tail {
        table.push(vec![s(r.u), s(r.survival), s(r.stderr), s(r.censored_frac)]);
    }
    Ok(RunOutput {
        outputs: json!({
            "count": summary.count,
            "rho_hat": summary.rho_hat,
            "U_hat": summary.u_hat,
            "sigma2": summary.sigma2,
            "v_hat": summary.v_hat,
            "direction": summary.direction,
            "walks": task.samples,
            "diagnostics": diagnostics,
        }),
        table,
    })
}

fn exit_region(p: &ExitParams, d: usize) -> Result<(ExitRegion, Point), String> {
    let start = match &p.start {
        Some(v) => {
            dim_check("start", v.len(), d)?;
            Point::new(v)
        }
        None => Point::zero(d),
    };
    if let Some(n) = p.block {
        let theta = match &p.theta {
            Some(t) => t.clone(),
            None => Point::unit(d, 0).to_f64(),
        };
        dim_check("theta", theta.len(), d)?;
        let b = BlockSpec::new(Point::zero(d), n, &theta).map_err(err)?;
        return Ok((ExitRegion::Block(b), start));
    }
    let h = p.box_half.expect("validated");
    if h < 0 {
        return Err("box_half must be non-negative".into());
    }
    let region = BoxRegion { lo: Point::new(&vec![-h; d]), hi: Point::new(&vec![h; d]) };
    Ok((ExitRegion::Box(region), start))
}

fn exit_hist(task: &Task, p: &ExitParams) -> Result<RunOutput, String> {
    let law = law_of(task)?;
    let d = law.dim();
    let (region, start) = exit_region(p, d)?;
    let mode = if p.annealed { ExitMode::Annealed(law) } else { ExitMode::Quenched(quenched_env(task)?) };
    let h = estimate_exit(&mode, &region, start, task.samples, task.seed, p.step_budget);
    let mut header = coords_header(d);
    header.extend(["count".to_string(), "is_front".into()]);
    let mut table = Table { header, rows: Vec::new() };
    for (x, c) in &h.counts {
        let mut row = coord_cells(x);
        row.extend([s(c), s(region.is_front(x))]);
        table.push(row);
    }
    let dist = h.dist();
    Ok(RunOutput {
        outputs: json!({
            "total": h.total,
            "front_total": h.front_total,
            "front_fraction": h.front_total as f64 / h.total.max(1) as f64,
            "budget_exhausted": h.budget_exhausted,
            "support": h.counts.len(),
            "mean_exit": if dist.is_empty() { Value::Null } else { json!(dist.mean()) },
            "annealed": p.annealed,
        }),
        table,
    })
}

fn exit_compare(task: &Task, p: &ExitParams) -> Result<RunOutput, String> {
    let law = law_of(task)?;
    let d = law.dim();
    let (region, start) = exit_region(p, d)?;
    let env = quenched_env(task)?;
    let exact: FiniteDist<f64> = match &region {
        ExitRegion::Block(b) => exact_exit::<f64, _>(&env, b, &start),
        ExitRegion::Box(r) => exact_exit::<f64, _>(&env, r, &start),
    }
    .map_err(err)?
    .dist;
    let h = estimate_exit(&ExitMode::Quenched(env), &region, start, task.samples, task.seed, p.step_budget);
    let mc = h.dist();
    let tv = mc.tv(&exact);
    let mut header = coords_header(d);
    header.extend(["mc".to_string(), "exact".into()]);
    let mut table = Table { header, rows: Vec::new() };
    let sites: std::collections::BTreeSet<Point> = mc.support().chain(exact.support()).copied().collect();
    for x in &sites {
        let mut row = coord_cells(x);
        row.extend([s(mc.prob(x)), s(exact.prob(x))]);
        table.push(row);
    }
    Ok(RunOutput {
        outputs: json!({
            "tv": tv,
            "samples": h.total,
            "budget_exhausted": h.budget_exhausted,
            "exact_support": exact.len(),
            "mc_support": mc.len(),
        }),
        table,
    })
}

/// One-step law of the walk under the mean kernel.
pub fn mean_step_law(law: &EnvironmentLaw) -> FiniteDist<f64> {
    let k = law.mean_kernel();
    let d = law.dim();
    FiniteDist::from_pairs(d, (0..2 * d).filter(|&i| k.prob(i) > 0.0).map(|i| (Point::zero(d).step(i), k.prob(i))))
}

fn llt(task: &Task, p: &LltParams) -> Result<RunOutput, String> {
    let law = law_of(task)?;
    let step = mean_step_law(&law);
    let mut table = Table::new(&["n", "sup", "first", "second", "mixed", "quadrature_error", "max_abs_diff", "max_mass"]);
    let mut rows = Vec::new();
    for &n in &p.n {
        let r = llt_bounds::<f64>(&step, n).map_err(err)?;
        let max_mass = r.quadrature.data.iter().copied().fold(0.0, f64::max);
        let b = &r.bounds;
        table.push(vec![
            s(n),
            s(b.sup),
            s(b.first),
            s(b.second),
            s(b.mixed),
            s(r.quadrature_error),
            r.max_abs_diff.map(s).unwrap_or_default(),
            s(max_mass),
        ]);
        rows.push(json!({ "n": n, "bounds": b, "quadrature_error": r.quadrature_error, "max_abs_diff": r.max_abs_diff, "max_mass": max_mass }));
    }
    Ok(RunOutput { outputs: json!({ "rows": rows }), table })
}

fn classify(task: &Task, p: &ClassifyParams) -> Result<RunOutput, String> {
    let law = law_of(task)?;
    let d = law.dim();
    let z = match &p.centre {
        Some(c) => {
            dim_check("centre", c.len(), d)?;
            Point::new(c)
        }
        None => Point::zero(d),
    };
    let block = BlockSpec::new(z, p.n, &Point::unit(d, 0).to_f64()).map_err(err)?;
    let env = quenched_env(task)?;
    let opts = ClassifyOptions { delta_exit: p.delta_exit, sigmas: p.sigmas, step_budget: p.step_budget, ..ClassifyOptions::default() };
    let ev = classify_block(&env, &block, p.theta_cube, task.samples, task.seed, &opts);
    let mut header = vec!["probe".to_string()];
    header.extend(coords_header(d));
    header.extend(["front_freq", "exit_ok", "mean_gap", "mean_allowance", "mean_ok", "worst_cube_excess", "cube_ok"].map(String::from));
    let mut table = Table { header, rows: Vec::new() };
    for (i, pr) in ev.probes.iter().enumerate() {
        let mut row = vec![s(i)];
        row.extend(coord_cells(&pr.start));
        row.extend([s(pr.front_freq), s(pr.exit_ok), s(pr.mean_gap), s(pr.mean_allowance), s(pr.mean_ok), s(pr.worst_cube_excess), s(pr.cube_ok)]);
        table.push(row);
    }
    Ok(RunOutput { outputs: serde_json::to_value(&ev).expect("evidence serializes"), table })
}

fn tgamma(task: &Task, p: &TgammaParams) -> Result<RunOutput, String> {
    let law = law_of(task)?;
    let rep = tgamma_test(&law, &p.direction, &p.l, task.samples, task.seed).map_err(err)?;
    let mut table = Table::new(&["L", "samples", "backtracks", "budget_exhausted", "p_hat", "std_err", "upper"]);
    for r in &rep.rows {
        table.push(vec![s(r.l), s(r.samples), s(r.backtracks), s(r.budget_exhausted), s(r.p_hat), s(r.std_err), s(r.upper)]);
    }
    Ok(RunOutput { outputs: serde_json::to_value(&rep).expect("report serializes"), table })
}

fn slowdown(task: &Task, p: &SlowdownParams) -> Result<RunOutput, String> {
    let law = law_of(task)?;
    let mut table = Table::new(&["n", "samples", "hits", "estimate", "std_err"]);
    let mut rows = Vec::new();
    for &n in &p.n {
        let r = slowdown_direct(&law, &p.a, p.eps, n, task.samples, derive_seed(task.seed, &format!("n{n}"))).map_err(err)?;
        table.push(vec![s(r.n), s(r.samples), s(r.hits), s(r.estimate), s(r.std_err)]);
        rows.push(r);
    }
    Ok(RunOutput { outputs: json!({ "rows": rows }), table })
}

fn trap(task: &Task, p: &TrapParams) -> Result<RunOutput, String> {
    let law = law_of(task)?;
    let radius = match (p.radius, p.log_c) {
        (Some(r), _) => TrapRadius::Fixed(r),
        (None, Some(c)) => TrapRadius::Log(c),
        (None, None) => unreachable!("validated"),
    };
    let rep = trap_lower_bound(&law, p.n, radius, &p.a, p.eps, task.samples, task.seed).map_err(err)?;
    let mut table = Table::new(&["radius", "sites", "ledger", "quenched_estimate", "quenched_std_err", "ln_lower_bound"]);
    table.push(vec![s(rep.radius), s(rep.sites), s(rep.ledger), s(rep.quenched.estimate), s(rep.quenched.std_err), s(rep.ln_lower_bound)]);
    Ok(RunOutput { outputs: serde_json::to_value(&rep).expect("report serializes"), table })
}

/// Ladder, targets and classifier of an aux block.
fn aux_setup(task: &Task, p: &AuxParams) -> Result<(Environment, AuxConfig, Box<dyn Classifier>), String> {
    let law = law_of(task)?;
    let d = law.dim();
    if d < 2 {
        return Err("the auxiliary walk needs d >= 2".into());
    }
    let c = choose_constants(p.alpha, d, 1.0, ConstantsMode::Relaxed { epsilon: p.epsilon, psi: p.psi, chi: p.chi }).map_err(err)?;
    let ladder = build_ladder(p.l, &c).map_err(err)?;
    let targets = annealed_targets(&law, &ladder, p.target_samples, derive_seed(task.seed, "targets"), 10_000_000).map_err(err)?;
    let w = p.w.clone().unwrap_or_else(|| vec![0.0; d - 1]);
    let mut cfg = AuxConfig::new(ladder.clone(), targets, w, p.u).map_err(err)?;
    cfg.n_table = p.n_table;
    let cls: Box<dyn Classifier> = if p.planted_bad.is_empty() {
        Box::new(AllGood)
    } else {
        for b in &p.planted_bad {
            dim_check("planted_bad.z", b.z.len(), d)?;
        }
        Box::new(PlantedBad::new(&ladder, p.planted_bad.iter().map(|b| (b.k, Point::new(&b.z)))).map_err(err)?)
    };
    Ok((quenched_env(task)?, cfg, cls))
}

fn aux_run(task: &Task, p: &AuxParams) -> Result<RunOutput, String> {
    let (env, cfg, cls) = aux_setup(task, p)?;
    let runs_seed = derive_seed(task.seed, "runs");
    let runs: Vec<_> = (0..task.samples).into_par_iter().map(|i| run_aux(&env, cls.as_ref(), &cfg, replicate_seed(runs_seed, i as u64))).collect();
    let mut table = Table::new(&[
        "run",
        "stops",
        "stop_bound",
        "max_beta",
        "retries",
        "dropped_obligations",
        "returned_to_origin",
        "reached_exit",
        "w_holds",
        "error",
    ]);
    let mut errors = BTreeMap::<String, usize>::new();
    let mut violations = 0usize;
    let (mut max_stops, mut max_ratio, mut max_beta, mut returned, mut w_holds, mut ok) = (0u64, 0.0f64, 0i64, 0usize, 0usize, 0usize);
    for (i, r) in runs.iter().enumerate() {
        match r {
            Ok(run) => {
                ok += 1;
                max_stops = max_stops.max(run.stops);
                max_ratio = max_ratio.max(run.stops as f64 / run.stop_bound);
                max_beta = max_beta.max(run.max_beta());
                returned += run.returned_to_origin() as usize;
                let w = run.w.as_ref().is_some_and(|w| w.holds);
                w_holds += w as usize;
                table.push(vec![
                    s(i),
                    s(run.stops),
                    s(run.stop_bound),
                    s(run.max_beta()),
                    s(run.retries),
                    s(run.dropped_obligations),
                    s(run.returned_to_origin()),
                    s(run.reached_exit),
                    s(w),
                    String::new(),
                ]);
            }
            Err(e) => {
                if matches!(e, Error::InvariantViolated(_)) {
                    violations += 1;
                }
                let key = e.to_string().split(':').next().unwrap_or_default().to_string();
                *errors.entry(key).or_default() += 1;
                let mut row = vec![s(i)];
                row.extend(std::iter::repeat_n(String::new(), 8));
                row.push(e.to_string());
                table.push(row);
            }
        }
    }
    Ok(RunOutput {
        outputs: json!({
            "runs": runs.len(),
            "completed": ok,
            "errors": errors,
            "invariant_violations": violations,
            "max_stops": max_stops,
            "max_stop_ratio": max_ratio,
            "max_beta": max_beta,
            "beta_bound": cfg.beta_bound(),
            "returned_to_origin": returned,
            "w_holds": w_holds,
            "ladder": cfg.ladder,
            "M": cfg.m,
            "A_k": cfg.a_k,
            "lambda_k": cfg.lambda_k,
        }),
        table,
    })
}

fn wevent(task: &Task, p: &AuxParams) -> Result<RunOutput, String> {
    let (env, cfg, cls) = aux_setup(task, p)?;
    let tab = estimate_w_probability(&env, cls.as_ref(), &cfg, &p.w_grid, task.samples, derive_seed(task.seed, "runs")).map_err(err)?;
    let mut table = Table::new(&["w", "runs", "hits", "p_hat", "std_err", "bound", "in_range", "below_bound"]);
    for r in &tab.rows {
        let w = r.w.iter().map(s).collect::<Vec<_>>().join(" ");
        table.push(vec![w, s(r.runs), s(r.hits), s(r.p_hat), s(r.std_err), s(r.bound), s(r.in_range), s(r.below_bound)]);
    }
    Ok(RunOutput { outputs: serde_json::to_value(&tab).expect("table serializes"), table })
}

fn returns(task: &Task, p: &ReturnsParams) -> Result<RunOutput, String> {
    let law = law_of(task)?;
    dim_check("x", p.x.len(), law.dim())?;
    let x = Point::new(&p.x);
    let mut env = quenched_env(task)?;
    if let Some(r) = p.trap_radius {
        env = plant_naive_trap(&env, &x, r).map_err(err)?;
    }
    let rep = return_probability(&env, &x, p.l, task.samples, task.seed, p.reference).map_err(err)?;
    let mut table = Table::new(&["L", "samples", "escapes", "returns", "budget_exhausted", "p_hat", "std_err"]);
    table.push(vec![s(rep.l), s(rep.samples), s(rep.escapes), s(rep.returns), s(rep.budget_exhausted), s(rep.p_hat), s(rep.std_err)]);
    Ok(RunOutput { outputs: serde_json::to_value(&rep).expect("report serializes"), table })
}

fn reduction(task: &Task, p: &ReductionParams) -> Result<RunOutput, String> {
    let law = law_of(task)?;
    let rep = reduction_diagnostics(&law, p.n, p.r, p.b, task.samples, task.seed).map_err(err)?;
    let mut table = Table::new(&["term", "count", "of", "p", "std_err"]);
    for (name, f) in [("lhs", &rep.lhs), ("tail", &rep.tail), ("shortfall", &rep.shortfall), ("a_event", &rep.a_event), ("tail_given_a", &rep.tail_given_a)] {
        table.push(vec![name.to_string(), s(f.count), s(f.of), s(f.p), s(f.std_err)]);
    }
    Ok(RunOutput { outputs: serde_json::to_value(&rep).expect("report serializes"), table })
}
