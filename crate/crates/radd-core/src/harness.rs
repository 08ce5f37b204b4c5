//! Experiment driver for the model problem: unit-coefficient diffusion
//! (`k = 1`, `f = 0`) on a rectangle with the separable exact solution
//!
//! ```text
//! u(x, t) = exp(-pi^2 (n1^2 + n2^2) t) sin(n1 pi x1) sin(n2 pi x2).
//! ```
//!
//! Runs produce one CSV row per time level with the discrete L2 error, the
//! A-seminorm error, the scheme's monitored energy functional and the
//! running a-priori bound. Configuration is flat `key = value` text; every
//! key is also a CLI flag in the companion binary.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::decomposition::{build_three_component, build_two_component, Decomposition};
use crate::grid::{build_grid, inner_product, norm, Grid, GridFunction};
use crate::hyperbolic::{init_second_level, step_regularized_hyperbolic, step_threelevel_weighted};
use crate::operator::{assemble_diffusion, DiffusionOperator};
use crate::parabolic::{step, ParabolicState, SchemeConfig, SchemeKind};
use crate::stability::{evaluate_energy, EnergyFunctional, EnergyKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Parabolic,
    Hyperbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplittingKind {
    Two,
    Three,
    ThreeOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMode {
    Time,
    Space,
    Both,
    Subdomains,
}

impl StudyMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(StudyMode::Time),
            "space" => Ok(StudyMode::Space),
            "both" => Ok(StudyMode::Both),
            "subdomains" => Ok(StudyMode::Subdomains),
            other => Err(Error::Config(format!(
                "unknown study mode `{other}` (expected time|space|both|subdomains)"
            ))),
        }
    }
}

/// Full description of one experiment run.
///
/// The basic case pins `h = 1/40`, `tau = 0.01`, ten steps and a coarse step
/// of one half, with the `(2, 1)` mode as initial data.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: Problem,
    /// Mode indices of the initial data.
    pub mode1: u32,
    pub mode2: u32,
    pub l1: f64,
    pub l2: f64,
    /// Cells per axis.
    pub cells1: usize,
    pub cells2: usize,
    /// Final time; the step is `tau = t_final / nsteps`.
    pub t_final: f64,
    pub nsteps: usize,
    pub scheme: SchemeKind,
    pub sigma: f64,
    pub hhat: f64,
    pub splitting: SplittingKind,
    pub overlap_halfwidth: usize,
    /// Scales the initial data; zero runs the trivial solution.
    pub amplitude: f64,
    pub output_path: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: Problem::Parabolic,
            mode1: 2,
            mode2: 1,
            l1: 1.0,
            l2: 1.0,
            cells1: 40,
            cells2: 40,
            t_final: 0.1,
            nsteps: 10,
            scheme: SchemeKind::Weighted,
            sigma: 0.5,
            hhat: 0.5,
            splitting: SplittingKind::Two,
            overlap_halfwidth: 0,
            amplitude: 1.0,
            output_path: None,
        }
    }
}

impl ExperimentConfig {
    pub fn tau(&self) -> f64 {
        self.t_final / self.nsteps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.nsteps == 0 {
            return Err(Error::Config("nsteps must be positive".into()));
        }
        if !self.t_final.is_finite() || self.t_final <= 0.0 {
            return Err(Error::Config(format!(
                "final time must be positive, got {}",
                self.t_final
            )));
        }
        if self.mode1 == 0 || self.mode2 == 0 {
            return Err(Error::Config("mode indices must be positive".into()));
        }
        if self.problem == Problem::Hyperbolic
            && !matches!(self.scheme, SchemeKind::Weighted | SchemeKind::Regularized)
        {
            return Err(Error::Config(format!(
                "hyperbolic runs support weighted|regularized, got `{}`",
                self.scheme.name()
            )));
        }
        Ok(())
    }

    fn grid(&self) -> Result<Grid> {
        build_grid(self.l1, self.l2, self.cells1, self.cells2).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::Config(msg),
            other => other,
        })
    }

    fn decomposition(&self, grid: Grid) -> Result<Decomposition> {
        match self.splitting {
            SplittingKind::Two => build_two_component(grid, self.hhat),
            SplittingKind::Three => build_three_component(grid, self.hhat, 0),
            SplittingKind::ThreeOverlap => {
                build_three_component(grid, self.hhat, self.overlap_halfwidth.max(1))
            }
        }
    }
}

/// Closed-form solution of the model problem on the unit square.
pub fn exact_solution(x1: f64, x2: f64, t: f64, n1: u32, n2: u32) -> f64 {
    use std::f64::consts::PI;
    let decay = -(PI * PI) * (n1 as f64 * n1 as f64 + n2 as f64 * n2 as f64) * t;
    decay.exp() * (n1 as f64 * PI * x1).sin() * (n2 as f64 * PI * x2).sin()
}

/// One time level of the output series.
#[derive(Debug, Clone)]
pub struct ErrorRow {
    pub n: usize,
    pub t: f64,
    pub error_l2: f64,
    pub error_a: f64,
    pub energy: f64,
    pub bound: f64,
}

/// Per-level trajectory record; `rows.len() == nsteps + 1`.
#[derive(Debug, Clone)]
pub struct ErrorSeries {
    pub rows: Vec<ErrorRow>,
    pub warnings: Vec<String>,
}

impl ErrorSeries {
    /// CSV with 17 significant digits, byte-identical for identical configs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,t,error_l2,error_A,energy,bound\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.n, r.t, r.error_l2, r.error_a, r.energy, r.bound
            )
            .expect("writing to string");
        }
        out
    }

    pub fn final_error(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.error_l2)
    }
}

fn numerical_at_step(n: usize) -> Error {
    Error::Numerical(format!("solution is not finite after step {n}"))
}

/// Solver failures inside a run carry the offending step index.
fn tag_step_error(e: Error, n: usize) -> Error {
    match e {
        Error::NoConvergence { .. }
        | Error::Numerical(_)
        | Error::NotSymmetricPositiveDefinite(_) => Error::Numerical(format!("step {n}: {e}")),
        other => other,
    }
}

fn parabolic_energy_kind(kind: SchemeKind) -> EnergyKind {
    match kind {
        SchemeKind::Weighted => EnergyKind::ParabolicD,
        SchemeKind::Factorized | SchemeKind::FactorizedCommuted => EnergyKind::FactorizedB2A,
        _ => EnergyKind::ANorm,
    }
}

/// Below the stability threshold the monitored functional may turn
/// indefinite; report NaN in the energy column instead of aborting the run,
/// so instability shows up as a blowing-up error trajectory.
fn energy_or_nan(
    f: &EnergyFunctional,
    a: &Arc<DiffusionOperator>,
    dec: Option<&Decomposition>,
    states: &[&GridFunction],
    below_threshold: bool,
) -> Result<f64> {
    match evaluate_energy(f, a, dec, states) {
        Ok(v) => Ok(v),
        Err(Error::NotSymmetricPositiveDefinite(_)) if below_threshold => Ok(f64::NAN),
        Err(e) => Err(e),
    }
}

/// Runs one experiment; deterministic in the configuration.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ErrorSeries> {
    cfg.validate()?;
    let grid = cfg.grid()?;
    let a = Arc::new(assemble_diffusion(grid, |_, _| 1.0, 1.0)?);
    let tau = cfg.tau();

    let needs_decomposition = cfg.scheme != SchemeKind::Weighted;
    let dec = if needs_decomposition {
        Some(cfg.decomposition(grid)?)
    } else {
        None
    };

    let mut warnings = Vec::new();
    match cfg.problem {
        Problem::Parabolic => {
            let mut scheme_cfg = SchemeConfig::new(cfg.scheme, cfg.sigma, tau);
            if let Some(d) = &dec {
                scheme_cfg = scheme_cfg.with_decomposition(d.clone());
            }
            if scheme_cfg.below_threshold() {
                warnings.push(format!(
                    "sigma {} is below the stability threshold {} of `{}`",
                    cfg.sigma,
                    scheme_cfg.stability_threshold(),
                    cfg.scheme.name()
                ));
            }
            run_parabolic(cfg, &a, &scheme_cfg, dec.as_ref(), warnings)
        }
        Problem::Hyperbolic => {
            let threshold = match cfg.scheme {
                SchemeKind::Weighted => 0.25,
                _ => dec.as_ref().map_or(2, Decomposition::p) as f64 / 4.0,
            };
            if cfg.sigma < threshold {
                warnings.push(format!(
                    "sigma {} is below the stability threshold {threshold} of the three-level scheme",
                    cfg.sigma
                ));
            }
            run_hyperbolic(cfg, &a, dec.as_ref(), warnings)
        }
    }
}

fn run_parabolic(
    cfg: &ExperimentConfig,
    a: &Arc<DiffusionOperator>,
    scheme_cfg: &SchemeConfig,
    dec: Option<&Decomposition>,
    warnings: Vec<String>,
) -> Result<ErrorSeries> {
    let grid = *a.grid();
    let tau = cfg.tau();
    let (n1, n2) = (cfg.mode1, cfg.mode2);
    let amp = cfg.amplitude;

    let y0 = {
        let mut u = GridFunction::sample(grid, |x1, x2| exact_solution(x1, x2, 0.0, n1, n2));
        u.scale(amp);
        u
    };

    let functional = EnergyFunctional {
        kind: parabolic_energy_kind(cfg.scheme),
        sigma: cfg.sigma,
        tau,
    };
    let zero_source = |_: f64, _: f64, _: f64| 0.0;

    let below = scheme_cfg.below_threshold();
    let mut state = ParabolicState::initial(y0);
    let mut rows = Vec::with_capacity(cfg.nsteps + 1);
    let energy0 = energy_or_nan(&functional, a, dec, &[&state.y], below)?;
    rows.push(error_row_parabolic(cfg, a, &state, energy0, energy0)?);

    for k in 0..cfg.nsteps {
        state = step(&state, a, scheme_cfg, &zero_source).map_err(|e| tag_step_error(e, k + 1))?;
        if state.y.has_nan() {
            return Err(numerical_at_step(k + 1));
        }
        let energy = energy_or_nan(&functional, a, dec, &[&state.y], below)?;
        // f = 0: the a-priori estimates keep the initial energy as the bound
        rows.push(error_row_parabolic(cfg, a, &state, energy, energy0)?);
    }

    Ok(ErrorSeries { rows, warnings })
}

fn error_row_parabolic(
    cfg: &ExperimentConfig,
    a: &Arc<DiffusionOperator>,
    state: &ParabolicState,
    energy: f64,
    bound: f64,
) -> Result<ErrorRow> {
    let grid = *a.grid();
    let (n1, n2) = (cfg.mode1, cfg.mode2);
    let t = state.t;
    let mut exact = GridFunction::sample(grid, |x1, x2| exact_solution(x1, x2, t, n1, n2));
    exact.scale(cfg.amplitude);
    let mut e = state.y.clone();
    e.add_scaled(-1.0, &exact);
    let error_l2 = norm(&e);
    let error_a = inner_product(&a.apply_fn(&e)?, &e)?.max(0.0).sqrt();
    Ok(ErrorRow {
        n: state.n,
        t,
        error_l2,
        error_a,
        energy,
        bound,
    })
}

fn run_hyperbolic(
    cfg: &ExperimentConfig,
    a: &Arc<DiffusionOperator>,
    dec: Option<&Decomposition>,
    warnings: Vec<String>,
) -> Result<ErrorSeries> {
    let grid = *a.grid();
    let tau = cfg.tau();
    let (n1, n2) = (cfg.mode1, cfg.mode2);

    let mut u0 = GridFunction::sample(grid, |x1, x2| exact_solution(x1, x2, 0.0, n1, n2));
    u0.scale(cfg.amplitude);
    let zero = GridFunction::zeros(grid);

    let functional = EnergyFunctional {
        kind: match cfg.scheme {
            SchemeKind::Weighted => EnergyKind::HyperbolicWeighted,
            _ => EnergyKind::HyperbolicRegularized,
        },
        sigma: cfg.sigma,
        tau,
    };

    let below = cfg.sigma < functional.validity_threshold(dec.map_or(1, Decomposition::p));
    let mut rows = Vec::with_capacity(cfg.nsteps + 1);
    // No exact solution is asserted for the wave runs: energy only.
    rows.push(ErrorRow {
        n: 0,
        t: 0.0,
        error_l2: f64::NAN,
        error_a: f64::NAN,
        energy: f64::NAN,
        bound: f64::NAN,
    });
    if cfg.nsteps == 0 {
        return Ok(ErrorSeries { rows, warnings });
    }

    let mut state = init_second_level(&u0, &zero, a, tau, &zero)?;
    let s1 = energy_or_nan(&functional, a, dec, &[&state.y_curr, &state.y_prev], below)?;
    let mut bound = s1;
    rows.push(ErrorRow {
        n: 1,
        t: state.t,
        error_l2: f64::NAN,
        error_a: f64::NAN,
        energy: s1,
        bound,
    });

    for k in 1..cfg.nsteps {
        state = match cfg.scheme {
            SchemeKind::Weighted => step_threelevel_weighted(&state, a, cfg.sigma, tau, &zero),
            _ => step_regularized_hyperbolic(
                &state,
                a,
                dec.ok_or_else(|| Error::Config("regularized run needs a decomposition".into()))?,
                cfg.sigma,
                tau,
                &zero,
            ),
        }
        .map_err(|e| tag_step_error(e, k + 1))?;
        if state.y_curr.has_nan() {
            return Err(numerical_at_step(k + 1));
        }
        let energy = energy_or_nan(&functional, a, dec, &[&state.y_curr, &state.y_prev], below)?;
        bound *= tau.exp(); // level-wise estimate with f = 0
        rows.push(ErrorRow {
            n: k + 1,
            t: state.t,
            error_l2: f64::NAN,
            error_a: f64::NAN,
            energy,
            bound,
        });
    }

    Ok(ErrorSeries { rows, warnings })
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone)]
pub struct StudyRow {
    pub level: usize,
    pub cells: usize,
    pub nsteps: usize,
    pub hhat: f64,
    pub error_at_t: f64,
    pub observed_order: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
}

impl StudyTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("level,cells,nsteps,hhat,error,order\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{:.16e},{:.16e},{:.16e}",
                r.level,
                r.cells,
                r.nsteps,
                r.hhat,
                r.error_at_t,
                r.observed_order.unwrap_or(f64::NAN)
            )
            .expect("writing to string");
        }
        out
    }
}

/// Runs `levels` experiments, halving the selected discretization parameter
/// per level, and reports `log2(error_k / error_{k+1})` per adjacent pair.
pub fn convergence_study(
    base: &ExperimentConfig,
    levels: usize,
    mode: StudyMode,
) -> Result<StudyTable> {
    if levels < 2 {
        return Err(Error::Config(format!(
            "a study needs at least two levels, got {levels}"
        )));
    }
    let mut rows: Vec<StudyRow> = Vec::with_capacity(levels);
    for level in 0..levels {
        let factor = 1usize << level;
        let mut cfg = base.clone();
        match mode {
            StudyMode::Time => cfg.nsteps = base.nsteps * factor,
            StudyMode::Space => {
                cfg.cells1 = base.cells1 * factor;
                cfg.cells2 = base.cells2 * factor;
            }
            StudyMode::Both => {
                cfg.nsteps = base.nsteps * factor;
                cfg.cells1 = base.cells1 * factor;
                cfg.cells2 = base.cells2 * factor;
            }
            StudyMode::Subdomains => cfg.hhat = base.hhat / factor as f64,
        }
        let series = run_experiment(&cfg).map_err(|e| match e {
            Error::Alignment(msg) => Error::Alignment(format!("study level {level}: {msg}")),
            Error::DegenerateDecomposition(msg) => {
                Error::DegenerateDecomposition(format!("study level {level}: {msg}"))
            }
            other => other,
        })?;
        let error_at_t = series.final_error();
        let observed_order = rows
            .last()
            .map(|prev: &StudyRow| (prev.error_at_t / error_at_t).log2());
        rows.push(StudyRow {
            level,
            cells: cfg.cells1,
            nsteps: cfg.nsteps,
            hhat: cfg.hhat,
            error_at_t,
            observed_order,
        });
    }
    Ok(StudyTable { rows })
}

fn parse_scheme(s: &str) -> Result<SchemeKind> {
    match s {
        "weighted" => Ok(SchemeKind::Weighted),
        "factorized" => Ok(SchemeKind::Factorized),
        "factorized_commuted" | "factorized-commuted" => Ok(SchemeKind::FactorizedCommuted),
        "componentwise" => Ok(SchemeKind::Componentwise),
        "componentwise_symmetrized" | "componentwise-symmetrized" => {
            Ok(SchemeKind::ComponentwiseSymmetrized)
        }
        "regularized" => Ok(SchemeKind::Regularized),
        other => Err(Error::Config(format!("unknown scheme `{other}`"))),
    }
}

fn parse_splitting(s: &str) -> Result<SplittingKind> {
    match s {
        "two" => Ok(SplittingKind::Two),
        "three" => Ok(SplittingKind::Three),
        "three-overlap" | "three_overlap" => Ok(SplittingKind::ThreeOverlap),
        other => Err(Error::Config(format!(
            "unknown splitting `{other}` (expected two|three|three-overlap)"
        ))),
    }
}

fn parse_problem(s: &str) -> Result<Problem> {
    match s {
        "parabolic" => Ok(Problem::Parabolic),
        "hyperbolic" => Ok(Problem::Hyperbolic),
        other => Err(Error::Config(format!("unknown problem `{other}`"))),
    }
}

/// Applies one `key = value` assignment to the configuration.
pub fn apply_config_key(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse::<T>()
            .map_err(|_| Error::Config(format!("cannot parse `{value}` for key `{key}`")))
    }
    match key {
        "problem" => cfg.problem = parse_problem(value)?,
        "scheme" => cfg.scheme = parse_scheme(value)?,
        "sigma" => cfg.sigma = num(key, value)?,
        "mode1" => cfg.mode1 = num(key, value)?,
        "mode2" => cfg.mode2 = num(key, value)?,
        "l1" => cfg.l1 = num(key, value)?,
        "l2" => cfg.l2 = num(key, value)?,
        "cells1" => cfg.cells1 = num(key, value)?,
        "cells2" => cfg.cells2 = num(key, value)?,
        "T" => cfg.t_final = num(key, value)?,
        "nsteps" => cfg.nsteps = num(key, value)?,
        "hhat" => cfg.hhat = num(key, value)?,
        "splitting" => cfg.splitting = parse_splitting(value)?,
        "overlap_halfwidth" => cfg.overlap_halfwidth = num(key, value)?,
        "amplitude" => cfg.amplitude = num(key, value)?,
        "out" => cfg.output_path = Some(value.to_string()),
        other => {
            return Err(Error::Config(format!(
                "unknown configuration key `{other}`"
            )));
        }
    }
    Ok(())
}

/// Sets the spatial step: `cells_a = l_a / h`, which must divide evenly.
pub fn apply_spatial_step(cfg: &mut ExperimentConfig, h: f64) -> Result<()> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::Config(format!("h must be positive, got {h}")));
    }
    for (l, cells) in [(cfg.l1, &mut cfg.cells1), (cfg.l2, &mut cfg.cells2)] {
        let n = (l / h).round();
        if n < 2.0 || ((l / h) - n).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "h = {h} does not evenly divide the side length {l}"
            )));
        }
        *cells = n as usize;
    }
    Ok(())
}

/// Sets the time step: `nsteps = T / tau`, which must divide evenly.
pub fn apply_time_step(cfg: &mut ExperimentConfig, tau: f64) -> Result<()> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    let n = (cfg.t_final / tau).round();
    if n < 1.0 || ((cfg.t_final / tau) - n).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "tau = {tau} does not evenly divide the final time {}",
            cfg.t_final
        )));
    }
    cfg.nsteps = n as usize;
    Ok(())
}

/// Parses flat `key = value` text (with `#` comments) over the defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected `key = value`, got `{raw}`",
                lineno + 1
            )));
        };
        apply_config_key(&mut cfg, key.trim(), value.trim())?;
    }
    Ok(cfg)
}

/// Named scenario presets expanding to labelled configuration sets.
///
/// * `fig5` — basic case, weighted and factorized schemes at `sigma` 1/2, 1;
/// * `fig6` — the same with the time step halved to 0.005;
/// * `fig7` — the same with the spatial step halved to 1/80;
/// * `fig8` — factorized schemes with the coarse step reduced to 1/4;
/// * `fig9` — regularized (`sigma = 1`) vs component-wise (`sigma = 1/2`).
pub fn preset(name: &str) -> Result<Vec<(String, ExperimentConfig)>> {
    let basic = ExperimentConfig::default();
    let with = |scheme: SchemeKind, sigma: f64, tweak: &dyn Fn(&mut ExperimentConfig)| {
        let mut cfg = basic.clone();
        cfg.scheme = scheme;
        cfg.sigma = sigma;
        tweak(&mut cfg);
        cfg
    };
    let label = |prefix: &str, scheme: SchemeKind, sigma: f64| {
        format!(
            "{prefix}_{}_s{:03}",
            scheme.name(),
            (sigma * 100.0).round() as u32
        )
    };
    let reference_four = |prefix: &str, tweak: &dyn Fn(&mut ExperimentConfig)| {
        vec![
            (
                label(prefix, SchemeKind::Weighted, 0.5),
                with(SchemeKind::Weighted, 0.5, tweak),
            ),
            (
                label(prefix, SchemeKind::Weighted, 1.0),
                with(SchemeKind::Weighted, 1.0, tweak),
            ),
            (
                label(prefix, SchemeKind::Factorized, 0.5),
                with(SchemeKind::Factorized, 0.5, tweak),
            ),
            (
                label(prefix, SchemeKind::Factorized, 1.0),
                with(SchemeKind::Factorized, 1.0, tweak),
            ),
        ]
    };
    match name {
        "fig5" => Ok(reference_four("fig5", &|_| {})),
        "fig6" => Ok(reference_four("fig6", &|c| c.nsteps *= 2)),
        "fig7" => Ok(reference_four("fig7", &|c| {
            c.cells1 *= 2;
            c.cells2 *= 2;
        })),
        "fig8" => Ok(reference_four("fig8", &|c| c.hhat = 0.25)),
        "fig9" => Ok(vec![
            (
                label("fig9", SchemeKind::Regularized, 1.0),
                with(SchemeKind::Regularized, 1.0, &|_| {}),
            ),
            (
                label("fig9", SchemeKind::Componentwise, 0.5),
                with(SchemeKind::Componentwise, 0.5, &|_| {}),
            ),
        ]),
        other => Err(Error::Config(format!("unknown preset `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_solution_values() {
        assert!((exact_solution(0.25, 0.5, 0.0, 2, 1) - 1.0).abs() < 1e-15);
        let v = exact_solution(0.25, 0.5, 0.05, 2, 1);
        assert!((v - 0.08480497247111375).abs() < 1e-15);
        for t in [0.0, 0.3, 2.0] {
            assert_eq!(exact_solution(0.0, 0.3, t, 3, 4), 0.0);
        }
    }

    #[test]
    fn basic_run_has_eleven_rows_and_zero_initial_error() {
        let cfg = ExperimentConfig::default();
        let series = run_experiment(&cfg).unwrap();
        assert_eq!(series.rows.len(), 11);
        assert_eq!(series.rows[0].error_l2, 0.0);
        assert!(series.rows.iter().all(|r| r.error_l2.is_finite()));
        assert!(series.warnings.is_empty());
    }

    #[test]
    fn zero_amplitude_runs_the_trivial_solution() {
        let cfg = ExperimentConfig {
            amplitude: 0.0,
            scheme: SchemeKind::Factorized,
            sigma: 1.0,
            ..Default::default()
        };
        let series = run_experiment(&cfg).unwrap();
        assert!(series.rows.iter().all(|r| r.error_l2 == 0.0));
    }

    #[test]
    fn csv_output_is_deterministic() {
        let cfg = ExperimentConfig {
            scheme: SchemeKind::Factorized,
            sigma: 0.5,
            ..Default::default()
        };
        let a = run_experiment(&cfg).unwrap().to_csv();
        let b = run_experiment(&cfg).unwrap().to_csv();
        assert_eq!(a, b);
        assert!(a.starts_with("n,t,error_l2,error_A,energy,bound\n"));
        assert_eq!(a.lines().count(), 12);
    }

    #[test]
    fn factorized_energy_monotone_without_source() {
        let cfg = ExperimentConfig {
            scheme: SchemeKind::Factorized,
            sigma: 1.0,
            ..Default::default()
        };
        let series = run_experiment(&cfg).unwrap();
        for pair in series.rows.windows(2) {
            assert!(pair[1].energy <= pair[0].energy * (1.0 + 1e-10));
            assert!(pair[1].energy <= pair[1].bound * (1.0 + 1e-10));
        }
    }

    #[test]
    fn below_threshold_run_warns() {
        let cfg = ExperimentConfig {
            scheme: SchemeKind::Regularized,
            sigma: 0.6, // threshold is p/2 = 1
            ..Default::default()
        };
        let series = run_experiment(&cfg).unwrap();
        assert_eq!(series.warnings.len(), 1);
    }

    #[test]
    fn explicit_scheme_blowup_is_reported_with_step_index() {
        // sigma = 0 is the explicit scheme; tau lambda_max >> 2 here, so the
        // trajectory grows until it overflows and the run reports the step.
        let cfg = ExperimentConfig {
            sigma: 0.0,
            t_final: 4.0,
            nsteps: 400,
            ..Default::default()
        };
        match run_experiment(&cfg) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("step"), "{msg}"),
            other => panic!("expected a numerical failure, got {other:?}"),
        }
    }

    #[test]
    fn hyperbolic_run_reports_energy_only() {
        let cfg = ExperimentConfig {
            problem: Problem::Hyperbolic,
            scheme: SchemeKind::Weighted,
            sigma: 0.25,
            cells1: 16,
            cells2: 16,
            ..Default::default()
        };
        let series = run_experiment(&cfg).unwrap();
        assert_eq!(series.rows.len(), 11);
        assert!(series.rows[0].error_l2.is_nan());
        let s1 = series.rows[1].energy;
        assert!(s1.is_finite() && s1 > 0.0);
        // with f = 0 the weighted functional is conserved
        for r in &series.rows[1..] {
            assert!((r.energy - s1).abs() <= 1e-9 * s1);
            assert!(r.energy <= r.bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn config_text_round_trip() {
        let text = "
            # model run
            problem = parabolic
            scheme = factorized
            sigma = 1.0
            cells1 = 20
            cells2 = 20
            T = 0.05
            nsteps = 5
            hhat = 0.25
        ";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.scheme, SchemeKind::Factorized);
        assert_eq!(cfg.cells1, 20);
        assert_eq!(cfg.nsteps, 5);
        assert!((cfg.tau() - 0.01).abs() < 1e-15);
        assert!(matches!(parse_config("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(parse_config("sigma"), Err(Error::Config(_))));
    }

    #[test]
    fn spatial_and_time_step_helpers() {
        let mut cfg = ExperimentConfig::default();
        apply_spatial_step(&mut cfg, 1.0 / 80.0).unwrap();
        assert_eq!(cfg.cells1, 80);
        apply_time_step(&mut cfg, 0.005).unwrap();
        assert_eq!(cfg.nsteps, 20);
        assert!(apply_spatial_step(&mut cfg, 0.3).is_err());
        assert!(apply_time_step(&mut cfg, 0.03).is_err());
    }

    #[test]
    fn presets_expand() {
        assert_eq!(preset("fig5").unwrap().len(), 4);
        assert_eq!(preset("fig6").unwrap()[0].1.nsteps, 20);
        assert_eq!(preset("fig7").unwrap()[0].1.cells1, 80);
        assert!((preset("fig8").unwrap()[0].1.hhat - 0.25).abs() < 1e-15);
        assert_eq!(preset("fig9").unwrap().len(), 2);
        assert!(preset("fig10").is_err());
    }

    #[test]
    fn study_reports_orders() {
        let cfg = ExperimentConfig {
            cells1: 10,
            cells2: 10,
            nsteps: 5,
            ..Default::default()
        };
        let table = convergence_study(&cfg, 2, StudyMode::Both).unwrap();
        assert_eq!(table.rows.len(), 2);
        assert!(table.rows[0].observed_order.is_none());
        assert!(table.rows[1].observed_order.is_some());
        let csv = table.to_csv();
        assert!(csv.starts_with("level,cells,nsteps,hhat,error,order\n"));
    }

    #[test]
    fn study_alignment_failure_names_the_level() {
        let cfg = ExperimentConfig {
            scheme: SchemeKind::Factorized,
            sigma: 1.0,
            cells1: 10,
            cells2: 10,
            nsteps: 4,
            ..Default::default()
        };
        // hhat = 0.5 -> 0.25, which is not a multiple of h = 0.1
        let err = convergence_study(&cfg, 2, StudyMode::Subdomains).unwrap_err();
        match err {
            Error::Alignment(msg) => assert!(msg.contains("level 1"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
