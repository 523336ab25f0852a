use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use adbid_core::analytic::{
    meanfield_closed_form_targeted, meanfield_value, value_population_policy, value_purchase,
    value_social_discount, value_subscription,
};
use adbid_core::model::{format_sig17, Shape};
use adbid_core::montecarlo::{
    simulate_individual, simulate_individual_logged, simulate_population, simulate_population_logged,
};
use adbid_core::solver::{
    solve_purchase, solve_social_discount, solve_social_population_with, solve_subscription, value_at_p, Schedule,
    SolveReport,
};
use adbid_core::{ModelSpec, PolicyTable, SimConfig, SocialPopulation};
use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use crate::config::{Format, RunConfig};
use crate::{Failure, EXIT_CONFIG, EXIT_SOLVER, EXIT_VERDICT, EXIT_Z};

/// Rendered result of one subcommand.
pub struct Artifact {
    pub body: String,
    /// Diagnostic lines for stderr.
    pub notes: Vec<String>,
    /// Nonzero when the run completed but a check failed.
    pub code: u8,
}

fn solver_failure(e: adbid_core::Error) -> Failure {
    Failure::new(EXIT_SOLVER, anyhow!(e))
}

fn config_failure(e: impl Into<anyhow::Error>) -> Failure {
    Failure::new(EXIT_CONFIG, e.into())
}

pub fn solve_model(cfg: &RunConfig, schedule: Schedule) -> adbid_core::Result<SolveReport> {
    let ch = &cfg.channel_t;
    match &cfg.model {
        ModelSpec::Purchase(s) => solve_purchase(s, &cfg.eta, ch),
        ModelSpec::Subscription(s) => solve_subscription(s, &cfg.eta, ch),
        ModelSpec::SocialDiscount(s) => solve_social_discount(s, &cfg.eta, ch),
        ModelSpec::SocialPopulation(s) => solve_social_population_with(s, &cfg.eta, ch, &cfg.channel_nt(), schedule),
    }
}

fn value_at_bid(cfg: &RunConfig, bid: f64) -> adbid_core::Result<f64> {
    let (eta, ch) = (&cfg.eta, &cfg.channel_t);
    match &cfg.model {
        ModelSpec::Purchase(s) => value_purchase(s, eta, ch, bid),
        ModelSpec::Subscription(s) => value_subscription(s, eta, ch, bid),
        ModelSpec::SocialDiscount(s) => value_social_discount(s, eta, ch, bid),
        ModelSpec::SocialPopulation(_) => unreachable!("population values come from a policy"),
    }
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

pub fn solve(cfg: &RunConfig, format: Format, schedule: Schedule) -> Result<Artifact, Failure> {
    let report = solve_model(cfg, schedule).map_err(solver_failure)?;
    let body = match format {
        Format::Json => json(&report),
        Format::Csv => match report.policy() {
            Some(t) => t.to_csv_string(),
            None => {
                let mut s = String::from("model,method,optimal_value,bid_min,evaluations\n");
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    cfg.model.name(),
                    method_name(&report),
                    format_sig17(report.optimal_value),
                    format_sig17(report.bid_min().unwrap_or(0.0)),
                    report.evaluations
                );
                s
            }
        },
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "model          {}", cfg.model.name());
            let _ = writeln!(s, "method         {}", method_name(&report));
            let _ = writeln!(s, "optimal_value  {}", report.optimal_value);
            if let Some(b) = report.bid_min() {
                let _ = writeln!(s, "bid_min        {b}");
            }
            let _ = writeln!(s, "evaluations    {}", report.evaluations);
            if let Some(t) = report.policy() {
                s.push('\n');
                s.push_str(&policy_table_text(t));
            }
            s
        }
    };
    let notes = vec![format!("optimal value {}", report.optimal_value)];
    Ok(Artifact { body, notes, code: 0 })
}

fn method_name(r: &SolveReport) -> String {
    serde_json::to_value(r.method).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
}

fn policy_table_text(t: &PolicyTable) -> String {
    let mut s = format!("{:>22} {:>22} {:>22} {:>22}\n", "p", "bid_T", "bid_NT", "v");
    for r in t.rows() {
        let _ = writeln!(s, "{:>22} {:>22} {:>22} {:>22}", r.p, r.bid_t, r.bid_nt, r.v);
    }
    s
}

fn json<T: Serialize>(x: &T) -> String {
    let mut s = serde_json::to_string_pretty(x).expect("reports serialize");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub model: String,
    pub mean: f64,
    pub std_error: f64,
    pub paths: u64,
    pub seed: u64,
    /// Bid simulated (single-individual models).
    pub bid: Option<f64>,
    /// Exact value of the simulated bid or policy.
    pub analytic: f64,
    pub z: f64,
    /// Optimal value of the model.
    pub optimal: f64,
}

pub struct SimulateArgs<'a> {
    pub policy: Option<&'a Path>,
    pub bid: Option<f64>,
    pub event_log: Option<&'a Path>,
}

pub fn simulate(cfg: &RunConfig, sim: &SimConfig, format: Format, args: &SimulateArgs<'_>) -> Result<Artifact, Failure> {
    let optimal = solve_model(cfg, Schedule::Dichotomy).map_err(solver_failure)?;
    let mut log = match args.event_log {
        Some(p) => Some(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display())).map_err(config_failure)?,
        )),
        None => None,
    };

    let (est, analytic, bid) = match &cfg.model {
        ModelSpec::SocialPopulation(spec) => {
            let ch_nt = cfg.channel_nt();
            let policy = match args.policy.or(cfg.policy.as_deref()) {
                Some(p) => load_policy(p, spec, cfg)?,
                None => optimal.policy().expect("population report carries a policy").clone(),
            };
            let analytic =
                value_population_policy(spec, &cfg.eta, &cfg.channel_t, &ch_nt, &policy).map_err(solver_failure)?;
            let est = match log.as_mut() {
                Some(w) => simulate_population_logged(spec, &cfg.eta, &cfg.channel_t, &ch_nt, &policy, sim, w),
                None => simulate_population(spec, &cfg.eta, &cfg.channel_t, &ch_nt, &policy, sim),
            }
            .map_err(solver_failure)?;
            (est, analytic, None)
        }
        model => {
            if args.policy.is_some() {
                return Err(config_failure(anyhow!("invalid `policy`: only the social_population model uses a policy table")));
            }
            let bid = args.bid.or(cfg.bid).or(optimal.bid_min()).expect("individual report carries a bid");
            if !(bid >= 0.0 && bid.is_finite()) {
                return Err(config_failure(anyhow!("invalid `bid`: must be a finite value >= 0, got {bid}")));
            }
            let analytic = value_at_bid(cfg, bid).map_err(solver_failure)?;
            let est = match log.as_mut() {
                Some(w) => simulate_individual_logged(model, &cfg.eta, &cfg.channel_t, bid, sim, w),
                None => simulate_individual(model, &cfg.eta, &cfg.channel_t, bid, sim),
            }
            .map_err(solver_failure)?;
            (est, analytic, Some(bid))
        }
    };

    let z = est.z_score(analytic);
    let report = SimReport {
        model: cfg.model.name().to_owned(),
        mean: est.mean,
        std_error: est.std_error,
        paths: est.paths,
        seed: sim.seed(),
        bid,
        analytic,
        z,
        optimal: optimal.optimal_value,
    };
    let body = match format {
        Format::Json => json(&report),
        Format::Csv => {
            let mut s = String::from("model,mean,std_error,paths,seed,bid,analytic,z,optimal\n");
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                report.model,
                format_sig17(report.mean),
                format_sig17(report.std_error),
                report.paths,
                report.seed,
                report.bid.map(format_sig17).unwrap_or_default(),
                format_sig17(report.analytic),
                format_sig17(report.z),
                format_sig17(report.optimal)
            );
            s
        }
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "model      {}", report.model);
            if let Some(b) = report.bid {
                let _ = writeln!(s, "bid        {b}");
            }
            let _ = writeln!(s, "mean       {}", report.mean);
            let _ = writeln!(s, "std_error  {}", report.std_error);
            let _ = writeln!(s, "paths      {}", report.paths);
            let _ = writeln!(s, "seed       {}", report.seed);
            let _ = writeln!(s, "analytic   {}", report.analytic);
            let _ = writeln!(s, "z          {}", report.z);
            let _ = writeln!(s, "optimal    {}", report.optimal);
            s
        }
    };
    let threshold = cfg.z_threshold();
    let (code, notes) = if z.abs() > threshold {
        (EXIT_Z, vec![format!("|z| = {} exceeds {threshold}", z.abs())])
    } else {
        (0, vec![format!("z = {z}")])
    };
    Ok(Artifact { body, notes, code })
}

fn load_policy(path: &Path, spec: &SocialPopulation, cfg: &RunConfig) -> Result<PolicyTable, Failure> {
    let file = File::open(path).with_context(|| format!("opening policy {}", path.display())).map_err(config_failure)?;
    let table = PolicyTable::read_csv(file).map_err(|e| config_failure(anyhow!("policy {}: {e}", path.display())))?;
    if table.m() != spec.m() {
        return Err(config_failure(anyhow!(adbid_core::Error::PolicyMismatch { expected: spec.m(), found: table.m() })));
    }
    table.check_bounds(spec.k(), &cfg.eta).map_err(|e| config_failure(anyhow!("policy {}: {e}", path.display())))?;
    Ok(table)
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    #[serde(rename = "V")]
    pub v: Option<f64>,
    pub bid_min: Option<f64>,
    #[serde(rename = "bid_T")]
    pub bid_t: Vec<f64>,
    #[serde(rename = "bid_NT")]
    pub bid_nt: Vec<f64>,
    /// Per-proportion values of a population row.
    pub v_p: Vec<f64>,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub claim: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub param: String,
    pub rows: Vec<SweepRow>,
    pub verdicts: Vec<Verdict>,
}

/// Ties within this relative band do not count as violations.
const MONOTONE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, PartialEq)]
enum Direction {
    Up,
    Down,
}

impl Direction {
    fn word(self) -> &'static str {
        match self {
            Direction::Up => "non-decreasing",
            Direction::Down => "non-increasing",
        }
    }

    fn holds(self, xs: &[f64]) -> bool {
        xs.windows(2).all(|w| {
            let band = MONOTONE_TOL * w[0].abs().max(w[1].abs()).max(1.0);
            match self {
                Direction::Up => w[1] >= w[0] - band,
                Direction::Down => w[1] <= w[0] + band,
            }
        })
    }
}

pub fn sweep(cfg: &RunConfig, format: Format, schedule: Schedule) -> Result<Artifact, Failure> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| config_failure(anyhow!("invalid `sweep`: missing section")))?;
    let mut rows = Vec::with_capacity(sw.values.len());
    let mut failed = false;
    for &value in &sw.values {
        let c = cfg.with_param(&sw.param, value).map_err(config_failure)?;
        let mut row = SweepRow {
            value,
            v: None,
            bid_min: None,
            bid_t: Vec::new(),
            bid_nt: Vec::new(),
            v_p: Vec::new(),
            status: "ok".into(),
        };
        match solve_model(&c, schedule) {
            Ok(r) => {
                row.v = Some(r.optimal_value);
                row.bid_min = r.bid_min();
                if let Some(t) = r.policy() {
                    row.bid_t = t.rows().iter().map(|x| x.bid_t).collect();
                    row.bid_nt = t.rows().iter().map(|x| x.bid_nt).collect();
                    row.v_p = t.rows().iter().map(|x| x.v).collect();
                }
            }
            Err(e) => {
                failed = true;
                row.status = format!("error: {e}");
            }
        }
        rows.push(row);
    }
    let verdicts = verdicts(cfg, &sw.param, &rows);
    let report = SweepReport { param: sw.param.clone(), rows, verdicts };

    let body = match format {
        Format::Json => json(&report),
        Format::Csv => sweep_csv(&report, false),
        Format::Table => sweep_csv(&report, true),
    };
    let mut notes: Vec<String> = report
        .verdicts
        .iter()
        .map(|v| format!("verdict\t{}\t{}", v.claim, if v.ok { "ok" } else { "VIOLATION" }))
        .collect();
    let code = if failed {
        notes.push("some sweep rows failed".into());
        EXIT_SOLVER
    } else if report.verdicts.iter().any(|v| !v.ok) {
        EXIT_VERDICT
    } else {
        0
    };
    Ok(Artifact { body, notes, code })
}

fn sweep_csv(report: &SweepReport, aligned: bool) -> String {
    let width = report.rows.iter().map(|r| r.bid_t.len()).max().unwrap_or(0);
    let mut header = vec!["param".to_owned(), "value".to_owned(), "V".to_owned()];
    if width == 0 {
        header.push("bid_min".into());
    } else {
        header.extend((0..width).map(|k| format!("bid_T_{k}")));
        header.extend((0..width).map(|k| format!("bid_NT_{k}")));
    }
    header.push("status".into());
    let num = |x: f64| if aligned { x.to_string() } else { format_sig17(x) };
    let mut lines = vec![header];
    for r in &report.rows {
        let mut cells = vec![report.param.clone(), num(r.value), r.v.map(num).unwrap_or_default()];
        if width == 0 {
            cells.push(r.bid_min.map(num).unwrap_or_default());
        } else {
            for list in [&r.bid_t, &r.bid_nt] {
                cells.extend((0..width).map(|k| list.get(k).copied().map(num).unwrap_or_default()));
            }
        }
        cells.push(if aligned || !r.status.contains([',', '"', '\n']) {
            r.status.clone()
        } else {
            format!("\"{}\"", r.status.replace('"', "\"\""))
        });
        lines.push(cells);
    }
    if !aligned {
        return lines.iter().map(|l| l.join(",") + "\n").collect();
    }
    let cols = lines[0].len();
    let widths: Vec<usize> = (0..cols).map(|c| lines.iter().map(|l| l[c].len()).max().unwrap_or(0)).collect();
    lines
        .iter()
        .map(|l| {
            let cells: Vec<String> = l.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            cells.join("  ").trim_end().to_owned() + "\n"
        })
        .collect()
}

fn verdicts(cfg: &RunConfig, param: &str, rows: &[SweepRow]) -> Vec<Verdict> {
    let mut ok_rows: Vec<&SweepRow> = rows.iter().filter(|r| r.v.is_some()).collect();
    ok_rows.sort_by(|a, b| a.value.total_cmp(&b.value));
    let series = |f: &dyn Fn(&SweepRow) -> f64| -> Vec<f64> { ok_rows.iter().map(|r| f(r)).collect() };
    let mut out = Vec::new();
    let mut claim = |text: String, dir: Direction, xs: &[f64]| out.push(Verdict { ok: dir.holds(xs), claim: text + " " + dir.word() });

    use Direction::{Down, Up};
    match (&cfg.model, param) {
        (ModelSpec::Purchase(_), "eta_I" | "eta_T") | (ModelSpec::Subscription(_), "eta_I" | "eta_T") => {
            claim(format!("V in {param}"), Up, &series(&|r| r.v.unwrap()));
            claim(format!("bid_min in {param}"), Down, &series(&|r| r.bid_min.unwrap()));
        }
        (ModelSpec::Purchase(_), "rho") => {
            claim("V in rho".into(), Down, &series(&|r| r.v.unwrap()));
            claim("bid_min in rho".into(), Up, &series(&|r| r.bid_min.unwrap()));
        }
        (ModelSpec::Subscription(_), "rho") => {
            claim("V in rho".into(), Down, &series(&|r| r.v.unwrap()));
        }
        (ModelSpec::SocialDiscount(_), "eta_I" | "eta_T" | "rho") => {
            claim(format!("V in {param}"), Down, &series(&|r| r.v.unwrap()));
            claim(format!("bid_min in {param}"), Down, &series(&|r| r.bid_min.unwrap()));
        }
        (ModelSpec::SocialPopulation(_), "eta_I" | "eta_T" | "eta_NT" | "eta_S") => {
            let m = ok_rows.first().map_or(0, |r| r.v_p.len());
            for k in 0..m {
                claim(format!("v(p_{k}) in {param}"), Down, &series(&|r| r.v_p[k]));
            }
        }
        _ => {}
    }
    if let ModelSpec::SocialPopulation(_) = cfg.model {
        for r in &ok_rows {
            let eta = cfg.with_param(param, r.value).map(|c| c.eta).unwrap_or(cfg.eta);
            claim(format!("bid_NT(p) at {param} = {}", r.value), Down, &r.bid_nt);
            if eta.eta_nt() == 0.0 {
                claim(format!("bid_T(p) at {param} = {}", r.value), Down, &r.bid_t);
            } else if eta.eta_s() == 0.0 {
                claim(format!("bid_T(p) at {param} = {}", r.value), Up, &r.bid_t);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// meanfield
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanfieldRow {
    #[serde(rename = "M")]
    pub m: usize,
    pub v_star_over_m: f64,
    pub integral: f64,
    pub gap: f64,
    pub closed_form: Option<f64>,
    pub closed_form_deviation: Option<f64>,
}

pub fn meanfield(cfg: &RunConfig, format: Format) -> Result<Artifact, Failure> {
    let ModelSpec::SocialPopulation(spec) = cfg.model else {
        return Err(config_failure(anyhow!("invalid `model`: meanfield needs the social_population model")));
    };
    let mf = cfg.meanfield.as_ref().ok_or_else(|| config_failure(anyhow!("invalid `meanfield`: missing section")))?;
    let (eta, ch_t, ch_nt, k) = (&cfg.eta, &cfg.channel_t, cfg.channel_nt(), spec.k());
    let integral = meanfield_value(mf.quad_n, |p| value_at_p(p, eta, ch_t, &ch_nt, k)).map_err(solver_failure)?;
    let closed_form = match ch_t.dist.shape() {
        Shape::Constant(b) if b > 0.0 && eta.eta_nt() == 0.0 && eta.eta_s() > 0.0 => {
            Some(meanfield_closed_form_targeted(eta, k, b).map_err(solver_failure)?)
        }
        _ => None,
    };

    let mut rows = Vec::with_capacity(mf.m_list.len());
    for &m in &mf.m_list {
        let s = SocialPopulation::new(k, m).map_err(config_failure)?;
        let r = solve_social_population_with(&s, eta, ch_t, &ch_nt, Schedule::Dichotomy).map_err(solver_failure)?;
        let per = r.optimal_value / m as f64;
        rows.push(MeanfieldRow {
            m,
            v_star_over_m: per,
            integral,
            gap: (per - integral).abs(),
            closed_form,
            closed_form_deviation: closed_form.map(|c| (c - integral).abs()),
        });
    }

    let body = match format {
        Format::Json => json(&rows),
        Format::Csv | Format::Table => {
            let aligned = format == Format::Table;
            let num = |x: f64| if aligned { format!("{x:<24}") } else { format_sig17(x) };
            let sep = if aligned { "  " } else { "," };
            let mut head = vec!["M", "V_star_over_M", "integral", "gap"];
            if closed_form.is_some() {
                head.extend(["closed_form", "closed_form_deviation"]);
            }
            let mut s = if aligned {
                head.iter().map(|h| format!("{h:<24}")).collect::<Vec<_>>().join(sep).trim_end().to_owned() + "\n"
            } else {
                head.join(sep) + "\n"
            };
            for r in &rows {
                let mut cells = vec![
                    if aligned { format!("{:<24}", r.m) } else { r.m.to_string() },
                    num(r.v_star_over_m),
                    num(r.integral),
                    num(r.gap),
                ];
                if let (Some(c), Some(d)) = (r.closed_form, r.closed_form_deviation) {
                    cells.extend([num(c), num(d)]);
                }
                s.push_str(cells.join(sep).trim_end());
                s.push('\n');
            }
            s
        }
    };
    let notes = rows.iter().map(|r| format!("M = {}: gap {}", r.m, r.gap)).collect();
    Ok(Artifact { body, notes, code: 0 })
}
