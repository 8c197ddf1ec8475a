//! Command-line front end: parse a problem file, run the synthesis
//! pipeline (exponential fast path, grand-bundle certification, then
//! the general curve pipeline), run the grid oracles, and emit
//! deterministic machine-readable reports and plot data.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use otmech::bundling::{certify_grand_bundle, critical_bundle_price};
use otmech::canonical::{
    compute_boundary_curves, find_critical_price, synthesize_mechanism, verify_well_formed,
    CanonicalPartition, RegionId,
};
use otmech::distributions::{make_family, validate, Family, Instance};
use otmech::exponential::solve_two_exponential;
use otmech::measures::TransformField;
use otmech::mechanism::{
    audit_ic_ir, best_bundle_price, best_separate_prices, revenue_monte_carlo,
    revenue_quadrature, Mechanism, MenuOption,
};
use otmech::numerics::Tolerance;
use otmech::oracle::{
    discretize_instance, duality_gap, grid_measures, solve_discrete_transport, solve_grid_lp,
    solve_relaxed_grid, DiscreteInstance,
};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "otmech", about = "revenue-optimal two-item mechanism synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// problem file (TOML)
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// directory for report and plot files
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// absolute quadrature tolerance override
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// oracle grid resolution override
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Monte Carlo seed override
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// certification probe count override
    #[arg(long, global = true)]
    probes: Option<usize>,
    /// Monte Carlo sample count override
    #[arg(long, global = true)]
    mc_samples: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, PartialEq)]
enum Command {
    /// check that the item distributions meet the model assumptions
    Validate,
    /// synthesize and certify the optimal mechanism
    Solve,
    /// grand-bundle certification only
    CertifyBundle,
    /// grid LP, relaxed LP, transport, and duality gap
    Oracle,
    /// continuous solution against the grid oracles
    Compare,
    /// emit regions.csv, curves.csv, and menu.json
    Plot,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSpec {
    #[serde(default)]
    items: Vec<ItemSpec>,
    discrete: Option<DiscreteSpec>,
    #[serde(default)]
    pipeline: PipelineSpec,
}

#[derive(Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
enum ItemSpec {
    Exponential { rate: f64 },
    Powerlaw { shape: f64 },
    Beta { a: f64, b: f64 },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscreteSpec {
    types: Vec<[f64; 2]>,
    probabilities: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PipelineSpec {
    tol: f64,
    probes: usize,
    grid: usize,
    seed: u64,
    mc_samples: usize,
}

impl Default for PipelineSpec {
    fn default() -> Self {
        PipelineSpec { tol: 1e-9, probes: 200, grid: 12, seed: 17, mc_samples: 200_000 }
    }
}

impl ItemSpec {
    fn family(&self) -> Family {
        match *self {
            ItemSpec::Exponential { rate } => Family::Exponential { rate },
            ItemSpec::Powerlaw { shape } => Family::PowerLaw { shape },
            ItemSpec::Beta { a, b } => Family::Beta { a, b },
        }
    }
}

/// Accumulates the report as ordered `key = value` lines so identical
/// runs produce identical bytes; timings go to stderr only.
struct Report {
    lines: String,
    /// set when a certification ran and failed: exit 2, not 1
    inconclusive: bool,
}

impl Report {
    fn new() -> Self {
        Report { lines: String::new(), inconclusive: false }
    }

    fn put(&mut self, key: &str, value: impl std::fmt::Display) {
        writeln!(self.lines, "{key} = {value}").unwrap();
    }

    fn put_f(&mut self, key: &str, value: f64) {
        writeln!(self.lines, "{key} = {value:.12e}").unwrap();
    }

    fn section(&mut self, name: &str) {
        writeln!(self.lines, "\n[{name}]").unwrap();
    }
}

fn num(v: f64) -> String {
    format!("{v:.12e}")
}

fn main() {
    let cli = Cli::parse();
    let started = Instant::now();
    let code = match run(&cli) {
        Ok(report) => {
            print!("{}", report.lines);
            if report.inconclusive {
                2
            } else {
                0
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    eprintln!("elapsed: {:?}", started.elapsed());
    std::process::exit(code);
}

fn load_spec(cli: &Cli) -> Result<ProblemSpec> {
    let path = cli.spec.as_ref().ok_or_else(|| anyhow!("--spec <file> is required"))?;
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut spec: ProblemSpec = toml::from_str(&text).context("parsing problem file")?;
    if let Some(t) = cli.tol {
        spec.pipeline.tol = t;
    }
    if let Some(g) = cli.grid {
        spec.pipeline.grid = g;
    }
    if let Some(s) = cli.seed {
        spec.pipeline.seed = s;
    }
    if let Some(p) = cli.probes {
        spec.pipeline.probes = p;
    }
    if let Some(m) = cli.mc_samples {
        spec.pipeline.mc_samples = m;
    }
    Ok(spec)
}

fn continuous_instance(spec: &ProblemSpec) -> Result<Instance> {
    if spec.items.len() != 2 {
        bail!("continuous pipelines need exactly 2 items, got {}", spec.items.len());
    }
    let f1 = make_family(spec.items[0].family())?;
    let f2 = make_family(spec.items[1].family())?;
    Ok(Instance::new(f1, f2))
}

fn discrete_instance(spec: &ProblemSpec) -> Result<Option<DiscreteInstance>> {
    let Some(d) = &spec.discrete else { return Ok(None) };
    let types: Vec<(f64, f64)> = d.types.iter().map(|t| (t[0], t[1])).collect();
    let inst = match &d.probabilities {
        Some(p) => DiscreteInstance::new(types, p.clone())?,
        None => DiscreteInstance::uniform(types)?,
    };
    Ok(Some(inst))
}

fn run(cli: &Cli) -> Result<Report> {
    let spec = load_spec(cli)?;
    let tol = Tolerance { abs_tol: spec.pipeline.tol, ..Tolerance::default() };
    let mut report = Report::new();
    report.section("instance");
    for (i, item) in spec.items.iter().enumerate() {
        let label = match item {
            ItemSpec::Exponential { rate } => format!("exponential(rate = {rate})"),
            ItemSpec::Powerlaw { shape } => format!("powerlaw(shape = {shape})"),
            ItemSpec::Beta { a, b } => format!("beta(a = {a}, b = {b})"),
        };
        report.put(&format!("item{}", i + 1), label);
    }
    if spec.discrete.is_some() {
        report.put("discrete_types", spec.discrete.as_ref().unwrap().types.len());
    }

    match cli.command {
        Command::Validate => cmd_validate(&spec, &tol, &mut report)?,
        Command::Solve => {
            let sol = cmd_solve(&spec, &tol, &mut report)?;
            report_revenues(&spec, &tol, &sol, &mut report)?;
        }
        Command::CertifyBundle => {
            cmd_certify_bundle(&spec, &tol, &mut report)?;
        }
        Command::Oracle => cmd_oracle(&spec, &tol, &mut report)?,
        Command::Compare => cmd_compare(&spec, &tol, &mut report)?,
        Command::Plot => {
            let sol = cmd_solve(&spec, &tol, &mut report)?;
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
            emit_plot_data(&spec, &tol, &sol, &out, &mut report)?;
        }
    }

    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join("report.txt"), &report.lines)?;
    }
    Ok(report)
}

fn cmd_validate(spec: &ProblemSpec, tol: &Tolerance, report: &mut Report) -> Result<()> {
    let instance = continuous_instance(spec)?;
    report.section("validation");
    let mut all = true;
    for (i, item) in instance.items.iter().enumerate() {
        let v = validate(item, tol);
        for check in &v.checks {
            report.put(
                &format!("item{}.{}", i + 1, check.name),
                format!("{} (residual {})", if check.passed { "pass" } else { "FAIL" }, num(check.residual)),
            );
            all &= check.passed;
        }
    }
    report.put("all_passed", all);
    if !all {
        bail!("distribution validation failed");
    }
    Ok(())
}

/// The synthesized mechanism plus what the report needs to describe it.
struct Solution {
    mechanism: Mechanism,
    partition: Option<CanonicalPartition>,
}

fn cmd_solve(spec: &ProblemSpec, tol: &Tolerance, report: &mut Report) -> Result<Solution> {
    let instance = continuous_instance(spec)?;
    let rates = spec.items.iter().map(|i| match i {
        ItemSpec::Exponential { rate } => Some(*rate),
        _ => None,
    });
    if let [Some(l1), Some(l2)] = rates.collect::<Vec<_>>()[..] {
        // closed form for two exponential items
        let sol = solve_two_exponential(l1, l2, tol)?;
        report.section("solve");
        report.put("pipeline", "exponential closed form");
        report.put_f("p_star", sol.p_star);
        report.put("pure_bundling", sol.pure_bundling);
        report.section("menu");
        for (i, opt) in sol.menu.iter().enumerate() {
            report.put(
                &format!("option{}", i + 1),
                format!("q = ({}, {}), t = {}", num(opt.q.0), num(opt.q.1), num(opt.t)),
            );
        }
        return Ok(Solution { mechanism: sol.mechanism(), partition: None });
    }

    // a valid grand-bundle certificate is cheaper and conclusive
    let field = TransformField::new(instance.clone());
    let bundled = match critical_bundle_price(&field, tol) {
        Ok(p) => {
            let cert = certify_grand_bundle(&field, p, tol)?;
            let valid = cert.valid();
            report_bundle_certificate(&cert, report);
            valid.then_some(p)
        }
        Err(_) => None,
    };
    if let Some(p) = bundled {
        report.section("solve");
        report.put("pipeline", "grand bundle (certified)");
        report.put_f("p_star", p);
        report.section("menu");
        report.put("option1", format!("q = ({}, {}), t = {}", num(1.0), num(1.0), num(p)));
        let menu = vec![MenuOption::NULL, MenuOption { q: (1.0, 1.0), t: p }];
        return Ok(Solution { mechanism: Mechanism::menu(menu), partition: None });
    }

    // general pipeline: balance curves, critical price, partition
    let (s_top, s_right) = compute_boundary_curves(&field, tol)?;
    let part = find_critical_price(&field, &s_top, &s_right, tol)?;
    let wf = verify_well_formed(&field, &part, tol, spec.pipeline.probes)?;
    report.section("solve");
    report.put("pipeline", "canonical partition");
    report.put_f("p_star", part.p_star);
    report.put_f("a", part.a);
    report.put_f("b", part.b);
    report.put_f("c", part.c);
    let d = instance.d_minus();
    let continuum = part.a > d.0 + 1e-9 || part.s_at_b > d.1 + 1e-9;
    report.put("lottery_continuum", continuum);
    report.section("well_formedness");
    for check in &wf.checks {
        report.put(check.name, format!("{} (residual {})", if check.passed { "pass" } else { "FAIL" }, num(check.value)));
    }
    for check in &wf.dominance.checks {
        report.put(
            &format!("dominance.{}", check.name),
            format!("{} (margin {})", if check.passed { "pass" } else { "FAIL" }, num(check.value)),
        );
    }
    report.put("well_formed", wf.well_formed());
    if !wf.well_formed() {
        report.put("status", "inconclusive: partition failed certification");
        report.inconclusive = true;
        // Theorem 9 gives no guarantee outside well-formed partitions;
        // report and stop rather than fall back to heuristics
        return Ok(Solution { mechanism: Mechanism::menu(vec![MenuOption::NULL]), partition: Some(part) });
    }
    let mechanism = synthesize_mechanism(&part)?;
    let audit = audit_ic_ir(&mechanism, &instance, 2000, spec.pipeline.seed);
    report.put("ic_violation", num(audit.ic_violation));
    report.put("ir_violation", num(audit.ir_violation));
    Ok(Solution { mechanism, partition: Some(part) })
}

fn report_bundle_certificate(cert: &otmech::bundling::BundleCertificate, report: &mut Report) {
    report.section("bundle_certificate");
    report.put_f("p_star", cert.p_star);
    report.put_f("zero_set_margin", cert.z_subset_y_margin);
    report.put_f("line_max", cert.line_max);
    report.put_f("line_argmax", cert.line_argmax);
    report.put_f("mass_residual", cert.mass_residual);
    for check in &cert.dominance.checks {
        report.put(
            &format!("dominance.{}", check.name),
            format!("{} (margin {})", if check.passed { "pass" } else { "FAIL" }, num(check.value)),
        );
    }
    report.put("valid", cert.valid());
}

fn cmd_certify_bundle(spec: &ProblemSpec, tol: &Tolerance, report: &mut Report) -> Result<()> {
    let instance = continuous_instance(spec)?;
    let field = TransformField::new(instance);
    let p = critical_bundle_price(&field, tol)?;
    let cert = certify_grand_bundle(&field, p, tol)?;
    report_bundle_certificate(&cert, report);
    if !cert.valid() {
        report.put("status", "inconclusive: grand bundling not certified at p_star");
        report.inconclusive = true;
    }
    Ok(())
}

fn report_revenues(
    spec: &ProblemSpec,
    tol: &Tolerance,
    sol: &Solution,
    report: &mut Report,
) -> Result<()> {
    if report.inconclusive {
        return Ok(());
    }
    let instance = continuous_instance(spec)?;
    let field = TransformField::new(instance.clone());
    let mech = &sol.mechanism;
    let quad = revenue_quadrature(|z1, z2| mech.utility((z1, z2)).0, &field, tol)?;
    let (mc, ci) = revenue_monte_carlo(mech, &instance, spec.pipeline.mc_samples, spec.pipeline.seed);
    report.section("revenue");
    report.put_f("quadrature", quad);
    report.put_f("monte_carlo", mc);
    report.put_f("monte_carlo_ci95", ci);
    report.put_f("difference", (quad - mc).abs());
    let (sep, prices) = best_separate_prices(&instance, 400);
    let (bun, bp) = best_bundle_price(&instance, 400, tol);
    report.put("baseline_separate", format!("{} at ({}, {})", num(sep), num(prices.0), num(prices.1)));
    report.put("baseline_bundle", format!("{} at {}", num(bun), num(bp)));
    Ok(())
}

fn cmd_oracle(spec: &ProblemSpec, tol: &Tolerance, report: &mut Report) -> Result<()> {
    let d = match discrete_instance(spec)? {
        Some(d) => d,
        None => discretize_instance(&continuous_instance(spec)?, spec.pipeline.grid),
    };
    let (menu, revenue) = solve_grid_lp(&d)?;
    report.section("oracle");
    report.put("types", d.types.len());
    report.put_f("grid_lp_revenue", revenue);
    let distinct = {
        let mut prices: Vec<f64> = menu.iter().map(|o| o.t).collect();
        prices.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prices.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        prices.len()
    };
    report.put("distinct_payments", distinct);
    if spec.items.len() == 2 {
        let field = TransformField::new(continuous_instance(spec)?);
        let (mu, nu) = grid_measures(&field, spec.pipeline.grid, tol)?;
        let relaxed = solve_relaxed_grid(&mu, &nu)?;
        let (plan, cost) = solve_discrete_transport(&mu, &nu)?;
        let gap = duality_gap(&relaxed, &mu, &nu, &plan)?;
        report.put_f("relaxed_value", relaxed.value);
        report.put_f("transport_cost", cost);
        report.put_f("duality_gap", gap.gap);
        report.put_f("slackness_residual", gap.slackness_residual);
    }
    Ok(())
}

fn cmd_compare(spec: &ProblemSpec, tol: &Tolerance, report: &mut Report) -> Result<()> {
    let sol = cmd_solve(spec, tol, report)?;
    if report.inconclusive {
        return Ok(());
    }
    let instance = continuous_instance(spec)?;
    let field = TransformField::new(instance.clone());
    let mech = &sol.mechanism;
    let quad = revenue_quadrature(|z1, z2| mech.utility((z1, z2)).0, &field, tol)?;
    let d = discretize_instance(&instance, spec.pipeline.grid);
    let (_, lp) = solve_grid_lp(&d)?;
    report.section("compare");
    report.put_f("continuous_revenue", quad);
    report.put_f("grid_lp_revenue", lp);
    report.put_f("difference", (quad - lp).abs());
    Ok(())
}

#[derive(Serialize)]
struct MenuJson {
    p_star: Option<f64>,
    options: Vec<OptionJson>,
}

#[derive(Serialize)]
struct OptionJson {
    q1: f64,
    q2: f64,
    t: f64,
}

fn emit_plot_data(
    spec: &ProblemSpec,
    tol: &Tolerance,
    sol: &Solution,
    out: &Path,
    report: &mut Report,
) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let instance = continuous_instance(spec)?;
    let field = TransformField::new(instance.clone());
    let ((x0, x1), (y0, y1)) = field.quad_box(tol);
    let mech = &sol.mechanism;

    // sampled type square with region labels and the field's sign
    let mut regions = String::from("z1,z2,region,phi_sign\n");
    let n = 120;
    for i in 0..n {
        for j in 0..n {
            let z1 = x0 + (x1 - x0) * (i as f64 + 0.5) / n as f64;
            let z2 = y0 + (y1 - y0) * (j as f64 + 0.5) / n as f64;
            let label = match &sol.partition {
                Some(part) => match part.classify((z1, z2)) {
                    RegionId::Z => "Z",
                    RegionId::A => "A",
                    RegionId::B => "B",
                    RegionId::W => "W",
                },
                None => {
                    let (u, _) = mech.utility((z1, z2));
                    if u > 0.0 {
                        "W"
                    } else {
                        "Z"
                    }
                }
            };
            let sign = if field.phi(z1, z2) > 0.0 { 1 } else { -1 };
            writeln!(regions, "{z1:.9},{z2:.9},{label},{sign}").unwrap();
        }
    }
    std::fs::write(out.join("regions.csv"), regions)?;

    // boundary curves; blank cells outside each curve's domain
    let mut curves = String::from("z1,s,s_top,s_right\n");
    let curve_cols: Option<_> = sol.partition.as_ref().map(|p| p.s.clone());
    let aux = if spec.items.iter().all(|i| !matches!(i, ItemSpec::Exponential { .. })) {
        compute_boundary_curves(&field, tol).ok()
    } else {
        None
    };
    for i in 0..=400 {
        let z1 = x0 + (x1 - x0) * i as f64 / 400.0;
        let cell = |c: Option<&otmech::numerics::BoundaryCurve>| -> String {
            match c {
                Some(c) => {
                    let (a, b) = c.domain();
                    if z1 >= a && z1 <= b {
                        format!("{:.9}", c.eval(z1).unwrap_or(f64::NAN))
                    } else {
                        String::new()
                    }
                }
                None => String::new(),
            }
        };
        let s = cell(curve_cols.as_deref());
        let st = cell(aux.as_ref().map(|(t, _)| t));
        let sr = cell(aux.as_ref().map(|(_, r)| r));
        writeln!(curves, "{z1:.9},{s},{st},{sr}").unwrap();
    }
    std::fs::write(out.join("curves.csv"), curves)?;

    // the menu, sampled when it is a continuum
    let options = match mech {
        Mechanism::Menu(opts) => opts.clone(),
        Mechanism::Parametrized(_) => {
            let mut opts = match mech {
                Mechanism::Parametrized(f) => f.sampled_options(128),
                _ => unreachable!(),
            };
            opts.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
            opts
        }
    };
    let menu = MenuJson {
        p_star: sol.partition.as_ref().map(|p| p.p_star),
        options: options.iter().map(|o| OptionJson { q1: o.q.0, q2: o.q.1, t: o.t }).collect(),
    };
    std::fs::write(out.join("menu.json"), serde_json::to_string_pretty(&menu)?)?;

    report.section("plot");
    report.put("regions", "regions.csv");
    report.put("curves", "curves.csv");
    report.put("menu", "menu.json");
    Ok(())
}
