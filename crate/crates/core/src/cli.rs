//! Commands behind the `phmin` binary: `solve`, `convert` and `bench`.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::am::{
    run_am, run_multistart, standard_starts, AmConfig, AmReport, InitKind, Outcome, QpStats,
};
use crate::discrete::{discrete_problem, lift, to_continuous};
use crate::error::{PhError, Result};
use crate::io::{matrix_rows, Input, LstFile, SCHEMA};
use crate::jordan::ProblemData;
use crate::phgen::{lst_of, sample_full_degree, GenSpec, Variant};
use crate::poly::RationalLst;
use crate::verify::{check_representation, VerifyReport};

/// Reports keep at most this many trace entries unless the full trace is requested.
pub const TRACE_CAP: usize = 10_000;

/// LST tolerance used when verifying a solver result.
pub const VERIFY_TOL: f64 = 1e-4;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_FOUND: i32 = 2;

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub config: AmConfig,
    /// Total number of starts; 1 runs `config` alone.
    pub multistart: usize,
    pub seed: u64,
    pub trace_full: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            config: AmConfig::default(),
            multistart: 1,
            seed: 0,
            trace_full: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub init: String,
    pub outcome: Outcome,
    pub f_final: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub schema: String,
    /// `continuous` or `discrete`.
    pub kind: String,
    pub outcome: Outcome,
    pub f_final: Option<f64>,
    pub iterations: usize,
    pub init: String,
    pub xi: f64,
    pub beta: Vec<f64>,
    pub alpha: Option<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Option<Vec<Vec<f64>>>,
    pub alpha_tilde: Option<Vec<f64>>,
    #[serde(rename = "A_tilde")]
    pub a_tilde: Option<Vec<Vec<f64>>>,
    pub verify: Option<VerifyReport>,
    pub qp: Option<QpStats>,
    pub runs: Vec<RunSummary>,
    pub f_trace_len: usize,
    pub f_trace: Vec<f64>,
    pub wallclock_s: f64,
}

impl SolveReport {
    pub fn exit_code(&self) -> i32 {
        match (&self.outcome, &self.verify) {
            (Outcome::RepresentationFound, Some(v)) if v.pass => EXIT_OK,
            _ => EXIT_NOT_FOUND,
        }
    }
}

/// The configs for a run: `base` first, then the standard starts it does not repeat.
pub fn start_configs(problem: &ProblemData, opts: &SolveOptions) -> Vec<AmConfig> {
    let k = opts.multistart.max(1);
    let mut out = vec![opts.config.clone()];
    if k > 1 {
        let std = standard_starts(problem, k, opts.seed, &opts.config);
        out.extend(std.into_iter().filter(|c| {
            matches!(c.init, InitKind::Custom(_)) || c.init.label() != opts.config.init.label()
        }));
    }
    out.truncate(k);
    out
}

fn summary(r: &AmReport) -> RunSummary {
    RunSummary {
        init: r.init.clone(),
        outcome: r.outcome,
        f_final: r.f_final(),
        iterations: r.iterations(),
    }
}

fn run(problem: &ProblemData, opts: &SolveOptions) -> Result<(AmReport, Vec<RunSummary>)> {
    let configs = start_configs(problem, opts);
    if configs.len() == 1 {
        let r = run_am(problem, &configs[0])?;
        let s = vec![summary(&r)];
        Ok((r, s))
    } else {
        let ms = run_multistart(problem, &configs)?;
        let s = ms.runs.iter().map(summary).collect();
        Ok((ms.best, s))
    }
}

/// Runs the full pipeline on a parsed input. `Err` means the input itself is invalid.
pub fn solve_input(input: &Input, opts: &SolveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let (kind, lst, problem) = match input {
        Input::Continuous { lst, problem } => {
            let problem = match problem {
                Some(p) => {
                    crate::io::check_admissible(lst)?;
                    p.clone()
                }
                None => ProblemData::from_lst(lst)?,
            };
            ("continuous", lst.clone(), problem)
        }
        Input::Discrete(g) => {
            let (lst, problem) = discrete_problem(g)?;
            ("discrete", lst, problem)
        }
    };
    let mut report = SolveReport {
        schema: SCHEMA.into(),
        kind: kind.into(),
        outcome: Outcome::InfeasibleBeta,
        f_final: None,
        iterations: 0,
        init: opts.config.init.label().into(),
        xi: problem.xi,
        beta: problem.beta.clone(),
        alpha: None,
        a: None,
        alpha_tilde: None,
        a_tilde: None,
        verify: None,
        qp: None,
        runs: Vec::new(),
        f_trace_len: 0,
        f_trace: Vec::new(),
        wallclock_s: 0.0,
    };
    let (am, runs) = match run(&problem, opts) {
        Ok(x) => x,
        Err(PhError::InfeasibleBeta) => {
            report.wallclock_s = start.elapsed().as_secs_f64();
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    report.outcome = am.outcome;
    report.f_final = Some(am.f_final());
    report.iterations = am.iterations();
    report.init = am.init.clone();
    report.a = Some(matrix_rows(&am.final_state.a));
    report.qp = Some(am.qp);
    report.runs = runs;
    report.f_trace_len = am.f_trace.len();
    report.f_trace = if opts.trace_full {
        am.f_trace.clone()
    } else {
        am.f_trace.iter().copied().take(TRACE_CAP).collect()
    };
    if let Some(alpha) = &am.alpha {
        report.verify = Some(check_representation(
            alpha,
            &am.final_state.a,
            &lst,
            VERIFY_TOL,
        ));
        report.alpha = Some(alpha.clone());
        if kind == "discrete" {
            let d = lift(alpha, &am.final_state.a);
            report.alpha_tilde = Some(d.alpha_tilde);
            report.a_tilde = Some(matrix_rows(&d.a_tilde));
        }
    }
    report.wallclock_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// The continuous transform of a generating-function input.
pub fn convert_input(input: &Input) -> Result<LstFile> {
    match input {
        Input::Discrete(g) => Ok(LstFile::new(&to_continuous(g)?)),
        Input::Continuous { .. } => Err(PhError::InvalidInput(
            "convert expects a generating function (\"z_form\": true)".into(),
        )),
    }
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub orders: Vec<usize>,
    pub count: usize,
    pub variant: Variant,
    pub seed: u64,
    pub config: AmConfig,
}

/// One instance of a benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchCase {
    pub index: u64,
    pub complex: bool,
    pub outcome: Option<Outcome>,
    pub verified: bool,
    pub f_final: f64,
    pub iterations: usize,
    pub wallclock_s: f64,
}

impl BenchCase {
    pub fn success(&self) -> bool {
        self.outcome == Some(Outcome::RepresentationFound) && self.verified
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub real_success: usize,
    pub real_total: usize,
    pub complex_success: usize,
    pub complex_total: usize,
    pub mean_iterations: f64,
    pub mean_wallclock_s: f64,
    pub cases: Vec<BenchCase>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub schema: String,
    pub variant: Variant,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

/// Solves one generated instance; instances the pipeline rejects count as failures.
pub fn bench_case(spec: &GenSpec, k: u64, config: &AmConfig) -> BenchCase {
    let start = Instant::now();
    let mut case = BenchCase {
        index: k,
        complex: false,
        outcome: None,
        verified: false,
        f_final: f64::NAN,
        iterations: 0,
        wallclock_s: 0.0,
    };
    let prepared: Result<(RationalLst, ProblemData)> = sample_full_degree(spec, k)
        .and_then(|(alpha, a, _)| lst_of(&alpha, &a))
        .and_then(|lst| ProblemData::from_lst(&lst).map(|p| (lst, p)));
    if let Ok((lst, problem)) = prepared {
        case.complex = lst.poles.has_complex();
        match run_am(&problem, config) {
            Ok(r) => {
                case.outcome = Some(r.outcome);
                case.f_final = r.f_final();
                case.iterations = r.iterations();
                case.verified = r.alpha.as_ref().is_some_and(|alpha| {
                    check_representation(alpha, &r.final_state.a, &lst, VERIFY_TOL).pass
                });
            }
            Err(PhError::InfeasibleBeta) => case.outcome = Some(Outcome::InfeasibleBeta),
            Err(_) => {}
        }
    }
    case.wallclock_s = start.elapsed().as_secs_f64();
    case
}

pub fn bench(opts: &BenchOptions) -> Result<BenchReport> {
    let mut rows = Vec::new();
    for &n in &opts.orders {
        let spec = GenSpec {
            n,
            c: 1.0,
            variant: opts.variant,
            seed: opts.seed,
        };
        // surfaces a bad spec before fanning out
        crate::phgen::sample_ph_instance(&spec, 0)?;
        let cases: Vec<BenchCase> = (0..opts.count as u64)
            .into_par_iter()
            .map(|k| bench_case(&spec, k, &opts.config))
            .collect();
        let count = |complex: bool, ok: bool| {
            cases
                .iter()
                .filter(|c| c.complex == complex && (!ok || c.success()))
                .count()
        };
        let m = cases.len().max(1) as f64;
        rows.push(BenchRow {
            n,
            real_success: count(false, true),
            real_total: count(false, false),
            complex_success: count(true, true),
            complex_total: count(true, false),
            mean_iterations: cases.iter().map(|c| c.iterations as f64).sum::<f64>() / m,
            mean_wallclock_s: cases.iter().map(|c| c.wallclock_s).sum::<f64>() / m,
            cases,
        });
    }
    Ok(BenchReport {
        schema: SCHEMA.into(),
        variant: opts.variant,
        seed: opts.seed,
        rows,
    })
}

impl BenchReport {
    /// Plain-text summary, one line per order.
    pub fn table(&self) -> String {
        let mut s = String::from("   n  real succ.  complex succ.  mean iter  mean time (s)\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:>4}  {:>5}/{:<5} {:>6}/{:<6}  {:>9.1}  {:>13.4}\n",
                r.n,
                r.real_success,
                r.real_total,
                r.complex_success,
                r.complex_total,
                r.mean_iterations,
                r.mean_wallclock_s
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::parse_input;

    #[test]
    fn single_phase_bench() {
        let opts = BenchOptions {
            orders: vec![1],
            count: 5,
            variant: Variant::Balanced,
            seed: 3,
            config: AmConfig::default(),
        };
        let rep = bench(&opts).unwrap();
        assert_eq!(rep.rows[0].real_success, 5);
        assert_eq!(rep.rows[0].real_total, 5);
    }

    #[test]
    fn exponential_solves() {
        let input = parse_input(r#"{"form":"coeffs","p":[2.0],"q":[2.0,1.0]}"#).unwrap();
        let rep = solve_input(&input, &SolveOptions::default()).unwrap();
        assert_eq!(rep.exit_code(), EXIT_OK);
        assert_eq!(rep.kind, "continuous");
    }

    #[test]
    fn start_configs_skip_repeat() {
        let input = parse_input(r#"{"form":"coeffs","p":[2.0],"q":[2.0,1.0]}"#).unwrap();
        let Input::Continuous { lst, .. } = input else {
            panic!()
        };
        let problem = ProblemData::from_lst(&lst).unwrap();
        let opts = SolveOptions {
            config: AmConfig::with_init(InitKind::Jordan),
            multistart: 5,
            ..SolveOptions::default()
        };
        let labels: Vec<&str> = start_configs(&problem, &opts)
            .iter()
            .map(|c| c.init.label())
            .collect();
        assert_eq!(
            labels,
            [
                "jordan",
                "jordan-plus-ones",
                "minus-xi-i",
                "custom",
                "custom"
            ]
        );
    }
}
