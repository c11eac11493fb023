use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use kkl_core::analysis::{compare_transforms, convergence_report, oscillation_band, Band};
use kkl_core::design::{
    admissible_radius, design_poly_observer, euler_filter, functional_residual, injectivity_probe,
    poly_transform, sample_eigenvalues, CoeffVariant, ExampleTransform, FilterDesign, PolyTransform, Rejection,
    ResampleOptions, SeriesTransform, Transform, TransformMap, INJECTIVITY_WARNING_MARGIN,
};
use kkl_core::linalg::{c64, Matrix, C64};
use kkl_core::observer::{simulate, Inversion, ObserverConfig, TrajectoryRecord};
use kkl_core::system::{estimate_growth_constants, DiscreteSystem, LinearPolySystem, SystemSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisSpec, ConfigError, ExperimentConfig, FilterSpec, TransformSpec, DEFAULT_GRID_PITCH};

pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
pub const CONTRACTION_TOLERANCE: f64 = 1e-10;
pub const LIFT_TOLERANCE: f64 = 1e-12;
pub const REALIZATION_TOLERANCE: f64 = 1e-12;
/// Unicity is only judged when the series tail bound is at most this.
pub const CONCLUSIVE_TAIL_BOUND: f64 = 1e-6;
const INJECTIVITY_PAIRS: usize = 1000;

pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub allow_weak: bool,
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn out_dir(cfg: &ExperimentConfig, opts: &Options) -> anyhow::Result<PathBuf> {
    let dir = opts.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(dir, name, &text)
}

fn complex_pairs(v: &[[f64; 2]]) -> Vec<C64> {
    v.iter().map(|&[re, im]| c64(re, im)).collect()
}

/// Serialized form of a transform inside a design file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformRecord {
    Series {
        #[serde(rename = "N")]
        n: usize,
        output_sup: f64,
    },
    Sylvester(PolyTransform),
    Example(ExampleTransform),
}

impl TransformRecord {
    fn from_map(t: &TransformMap) -> Self {
        match t {
            TransformMap::Series(s) => TransformRecord::Series {
                n: s.truncation(),
                output_sup: s.output_sup(),
            },
            TransformMap::Poly(p) => TransformRecord::Sylvester(p.clone()),
            TransformMap::Example(e) => TransformRecord::Example(e.clone()),
        }
    }

    fn into_map(self, sys: &Arc<LinearPolySystem>, filter: &FilterDesign) -> anyhow::Result<TransformMap> {
        Ok(match self {
            TransformRecord::Series { n, output_sup } => TransformMap::Series(SeriesTransform::with_output_sup(
                sys.clone(),
                filter.clone(),
                n,
                output_sup,
            )?),
            TransformRecord::Sylvester(p) => TransformMap::Poly(p),
            TransformRecord::Example(e) => TransformMap::Example(e),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Largest `‖T(f(x)) − A T(x) − B h(x)‖ / (1 + ‖T(x)‖)` over the samples.
    pub residual: f64,
    pub residual_samples: usize,
    pub injectivity_margin: f64,
    pub injectivity_pairs: usize,
    pub injectivity_warning: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_bound: Option<f64>,
    #[serde(default)]
    pub rejected: Vec<Rejection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignFile {
    pub system: SystemSpec,
    pub seed: u64,
    pub filter: FilterDesign,
    pub transform: TransformRecord,
    pub inversion: Inversion,
    pub diagnostics: Diagnostics,
}

/// Plant, filter and transform ready for use.
pub struct Built {
    pub spec: SystemSpec,
    pub system: Arc<LinearPolySystem>,
    pub filter: FilterDesign,
    pub transform: TransformMap,
    pub inversion: Inversion,
    pub seed: u64,
    pub rejected: Vec<Rejection>,
}

fn default_inversion(t: &TransformMap) -> Inversion {
    match t {
        TransformMap::Example(_) => Inversion::LinearStack,
        _ => Inversion::GridNn {
            pitch: DEFAULT_GRID_PITCH,
        },
    }
}

fn sample_radius(sys: &LinearPolySystem, radius: Option<f64>) -> anyhow::Result<f64> {
    match radius {
        Some(r) => Ok(r),
        None => Ok(admissible_radius(&estimate_growth_constants(sys, DEFAULT_GRID_PITCH)?)),
    }
}

fn filter_from_spec(spec: &FilterSpec, sys: &LinearPolySystem, seed: u64) -> anyhow::Result<FilterDesign> {
    let gain = spec.input_gain.unwrap_or(1.0);
    let eigs = match (&spec.eigenvalues, &spec.sample) {
        (Some(e), None) => complex_pairs(e),
        (None, Some(s)) => sample_eigenvalues(s.count, sample_radius(sys, s.radius)?, s.seed.unwrap_or(seed))?,
        _ => return Err(config_error("filter needs exactly one of `eigenvalues` or `sample`")),
    };
    Ok(FilterDesign::new(&eigs, sys.output_dim(), gain)?)
}

/// Builds the observer pieces described by the config, or loads them from
/// `design_file`.
pub fn build(cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<Built> {
    if let Some(path) = &cfg.design_file {
        return load_design(cfg, path);
    }
    let spec = cfg.system_spec();
    let system = Arc::new(spec.build()?);
    let dt = cfg.dt();
    let mut rejected = Vec::new();
    let mut used_seed = seed;
    let (filter, transform) = match &cfg.transform {
        TransformSpec::Example { variant, lambdas } => {
            if !spec.is_oscillator() {
                return Err(config_error("the example transform is only defined for the builtin oscillator"));
            }
            if cfg.filter.is_some() {
                return Err(config_error(
                    "the example transform fixes its own filter; remove the `filter` section",
                ));
            }
            let filter = euler_filter(lambdas, dt)?;
            (filter, TransformMap::Example(ExampleTransform::new(*variant, lambdas, dt)?))
        }
        TransformSpec::Series { n } => {
            let fspec = cfg.filter.as_ref().ok_or_else(|| config_error("series transform needs a `filter`"))?;
            let filter = filter_from_spec(fspec, &system, seed)?;
            let series = SeriesTransform::new(system.clone(), filter.clone(), *n, DEFAULT_GRID_PITCH)?;
            (filter, TransformMap::Series(series))
        }
        TransformSpec::Sylvester => {
            let fspec = cfg.filter.as_ref().ok_or_else(|| config_error("sylvester transform needs a `filter`"))?;
            match &fspec.sample {
                Some(s) if s.resample => {
                    if s.count != system.state_dim() + 1 || fspec.input_gain.is_some() {
                        return Err(config_error(format!(
                            "resampling draws {} eigenvalues with unit input gain",
                            system.state_dim() + 1
                        )));
                    }
                    let opts = ResampleOptions {
                        radius: sample_radius(&system, s.radius)?,
                        ..ResampleOptions::default()
                    };
                    let d = design_poly_observer(&system, s.seed.unwrap_or(seed), opts)?;
                    used_seed = d.seed;
                    rejected = d.rejected;
                    (d.filter, TransformMap::Poly(d.transform))
                }
                _ => {
                    let filter = filter_from_spec(fspec, &system, seed)?;
                    let poly = poly_transform(&system, &filter)?;
                    (filter, TransformMap::Poly(poly))
                }
            }
        }
    };
    let inversion = cfg.inversion.unwrap_or_else(|| default_inversion(&transform));
    Ok(Built {
        spec,
        system,
        filter,
        transform,
        inversion,
        seed: used_seed,
        rejected,
    })
}

fn load_design(cfg: &ExperimentConfig, path: &Path) -> anyhow::Result<Built> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read design {}", path.display()))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let file: DesignFile = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        config_error(format!("{}: field `{}`: {}", path.display(), e.path(), e.inner()))
    })?;
    let system = Arc::new(file.system.build()?);
    let transform = file.transform.into_map(&system, &file.filter)?;
    Ok(Built {
        spec: file.system,
        system,
        filter: file.filter,
        transform,
        inversion: cfg.inversion.unwrap_or(file.inversion),
        seed: file.seed,
        rejected: file.diagnostics.rejected,
    })
}

fn max_relative_residual(b: &Built, samples: usize, seed: u64) -> anyhow::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = b.system.domain().sample(&mut rng);
        let r = functional_residual(&b.transform, b.system.as_ref(), &b.filter, &x)?;
        worst = worst.max(r / (1.0 + norm(&b.transform.eval(&x)?)));
    }
    Ok(worst)
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn series_tail(t: &TransformMap) -> Option<f64> {
    match t {
        TransformMap::Series(s) => Some(s.own_tail_bound()),
        _ => None,
    }
}

pub fn design(cfg: &ExperimentConfig, opts: &Options) -> anyhow::Result<i32> {
    let seed = cfg.resolve_seed(opts.seed)?;
    let b = build(cfg, seed)?;
    let samples = cfg.verify.samples;
    let residual = max_relative_residual(&b, samples, seed)?;
    let inj = injectivity_probe(&b.transform, b.system.as_ref(), INJECTIVITY_PAIRS, seed)?;
    let file = DesignFile {
        system: b.spec.clone(),
        seed: b.seed,
        filter: b.filter.clone(),
        transform: TransformRecord::from_map(&b.transform),
        inversion: b.inversion,
        diagnostics: Diagnostics {
            residual,
            residual_samples: samples,
            injectivity_margin: inj.margin,
            injectivity_pairs: inj.pairs.len(),
            injectivity_warning: inj.warning,
            tail_bound: series_tail(&b.transform),
            rejected: b.rejected.clone(),
        },
    };
    let dir = out_dir(cfg, opts)?;
    write_json(&dir, "design.json", &file)?;
    if inj.warning {
        eprintln!(
            "warning: injectivity margin {:.3e} is at or below {INJECTIVITY_WARNING_MARGIN:e}",
            inj.margin
        );
        if !opts.allow_weak {
            eprintln!("refusing a weak design; pass --allow-weak to accept it");
            return Ok(1);
        }
    }
    Ok(0)
}

#[derive(Debug, Clone, Serialize)]
pub struct RunStats {
    pub slope: Option<f64>,
    pub r_squared: Option<f64>,
    pub window: [f64; 2],
    pub error_floor: f64,
    pub final_error: f64,
    pub band: Option<Band>,
    pub left_domain: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

fn run_stats(rec: &TrajectoryRecord, analysis: &AnalysisSpec) -> RunStats {
    let [t0, t1] = analysis.window;
    let errors = rec.errors();
    let mut notes = Vec::new();
    let (slope, r_squared) = match convergence_report(rec, t0, t1) {
        Ok(r) => (Some(r.slope_log10_per_time), Some(r.r_squared)),
        Err(e) => {
            notes.push(format!("no regression: {e}"));
            (None, None)
        }
    };
    let band = match oscillation_band(rec, analysis.band_start) {
        Ok(b) => Some(b),
        Err(e) => {
            notes.push(format!("no band: {e}"));
            None
        }
    };
    RunStats {
        slope,
        r_squared,
        window: analysis.window,
        error_floor: errors.iter().copied().fold(f64::INFINITY, f64::min),
        final_error: errors.last().copied().unwrap_or(f64::NAN),
        band,
        left_domain: rec.left_domain,
        notes,
    }
}

fn initial_filter_state(cfg: &ExperimentConfig, filter: &FilterDesign) -> anyhow::Result<Vec<C64>> {
    match &cfg.run.xi0 {
        Some(v) if v.len() != filter.dim() => Err(config_error(format!(
            "run.xi0 has {} entries, the filter has dimension {}",
            v.len(),
            filter.dim()
        ))),
        Some(v) => Ok(complex_pairs(v)),
        None => Ok(vec![C64::default(); filter.dim()]),
    }
}

#[derive(Serialize)]
struct SimulationSummary<'a> {
    transform: &'a str,
    steps: usize,
    dt: f64,
    #[serde(flatten)]
    stats: RunStats,
}

pub fn simulate_cmd(cfg: &ExperimentConfig, opts: &Options) -> anyhow::Result<i32> {
    let seed = cfg.resolve_seed(opts.seed)?;
    let b = build(cfg, seed)?;
    let xi0 = initial_filter_state(cfg, &b.filter)?;
    let kind = b.transform.kind();
    let obs = ObserverConfig::new(b.filter, b.transform, b.inversion)?;
    let dt = cfg.dt();
    let rec = simulate(b.system.as_ref(), &obs, &cfg.run.x0, &xi0, cfg.run.steps, dt)?;
    let dir = out_dir(cfg, opts)?;
    write(&dir, "trajectory.csv", &rec.to_csv())?;
    write_json(
        &dir,
        "summary.json",
        &SimulationSummary {
            transform: kind,
            steps: cfg.run.steps,
            dt,
            stats: run_stats(&rec, &cfg.analysis),
        },
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct Figure {
    variant: CoeffVariant,
    csv: &'static str,
}

#[derive(Serialize)]
struct CompareSummary {
    lambdas: Vec<f64>,
    dt: f64,
    steps: usize,
    fig1: Figure,
    fig2: Figure,
    discrete: RunStats,
    continuous: RunStats,
}

fn gnuplot_script(n: usize, figures: [(&str, CoeffVariant); 2]) -> String {
    // Columns: k, t, x1..xn, xhat1..xhatn, err, filter_err.
    let err_col = 3 + 2 * n;
    let mut s = String::from(
        "set datafile separator \",\"\nset logscale y\nset format y \"10^{%L}\"\n\
         set xlabel \"t\"\nset ylabel \"|x - xhat|\"\nset grid\nset terminal pngcairo size 900,500\n",
    );
    for (csv, variant) in figures {
        let stem = csv.trim_end_matches(".csv");
        let label = match variant {
            CoeffVariant::Continuous => "continuous coefficients",
            CoeffVariant::Discrete => "discrete coefficients",
        };
        s.push_str(&format!(
            "\nset output \"{stem}.png\"\nset title \"Estimation error, {label}\"\n\
             plot \"{csv}\" every ::1 using 2:{err_col} with lines title \"error\"\n"
        ));
    }
    s
}

pub fn compare(cfg: &ExperimentConfig, opts: &Options) -> anyhow::Result<i32> {
    let spec = cfg.system_spec();
    if !spec.is_oscillator() || cfg.design_file.is_some() {
        bail!(config_error("compare runs on the builtin oscillator only"));
    }
    let lambdas = match &cfg.transform {
        TransformSpec::Example { lambdas, .. } => lambdas.clone(),
        _ => return Err(config_error("compare needs an `example` transform to take the lambdas from")),
    };
    let sys = spec.build()?;
    let dt = cfg.dt();
    let filter = euler_filter(&lambdas, dt)?;
    let xi0 = initial_filter_state(cfg, &filter)?;
    let run = |variant: CoeffVariant| -> anyhow::Result<TrajectoryRecord> {
        let obs = ObserverConfig::new(
            filter.clone(),
            TransformMap::Example(ExampleTransform::new(variant, &lambdas, dt)?),
            Inversion::LinearStack,
        )?;
        Ok(simulate(&sys, &obs, &cfg.run.x0, &xi0, cfg.run.steps, dt)?)
    };
    let (fig1, fig2) = std::thread::scope(|s| {
        let h = s.spawn(|| run(cfg.compare.fig1));
        let second = run(cfg.compare.fig2);
        (h.join().expect("simulation thread panicked"), second)
    });
    let (fig1, fig2) = (fig1?, fig2?);
    let (disc, cont) = match cfg.compare.fig1 {
        CoeffVariant::Discrete => (&fig1, &fig2),
        CoeffVariant::Continuous => (&fig2, &fig1),
    };
    let dir = out_dir(cfg, opts)?;
    write(&dir, "fig1.csv", &fig1.to_csv())?;
    write(&dir, "fig2.csv", &fig2.to_csv())?;
    write(
        &dir,
        "compare.gp",
        &gnuplot_script(sys.state_dim(), [("fig1.csv", cfg.compare.fig1), ("fig2.csv", cfg.compare.fig2)]),
    )?;
    write_json(
        &dir,
        "compare.json",
        &CompareSummary {
            lambdas,
            dt,
            steps: cfg.run.steps,
            fig1: Figure {
                variant: cfg.compare.fig1,
                csv: "fig1.csv",
            },
            fig2: Figure {
                variant: cfg.compare.fig2,
                csv: "fig2.csv",
            },
            discrete: run_stats(disc, &cfg.analysis),
            continuous: run_stats(cont, &cfg.analysis),
        },
    )?;
    Ok(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

fn judged(name: &'static str, value: f64, threshold: f64, detail: String) -> Check {
    Check {
        name,
        status: if value <= threshold { Status::Pass } else { Status::Fail },
        value,
        threshold,
        detail,
    }
}

/// A check on a truncated series is only meaningful when the truncation error
/// is small.
fn judged_with_tail(name: &'static str, value: f64, threshold: f64, tail: f64, detail: String) -> Check {
    if tail > CONCLUSIVE_TAIL_BOUND {
        return Check {
            name,
            status: Status::Skipped,
            value,
            threshold: threshold + tail,
            detail: format!("inconclusive: series tail bound {tail:.3e} exceeds {CONCLUSIVE_TAIL_BOUND:e}; {detail}"),
        };
    }
    judged(name, value, threshold + tail, detail)
}

#[derive(Serialize)]
struct VerifyReport {
    transform: &'static str,
    seed: u64,
    checks: Vec<Check>,
    passed: usize,
    failed: usize,
    skipped: usize,
}

fn perturbed(t: &TransformMap, delta: f64) -> anyhow::Result<TransformMap> {
    let poly = match t {
        TransformMap::Poly(p) => p.clone(),
        TransformMap::Example(e) => e.to_poly(),
        TransformMap::Series(_) => {
            return Err(config_error("verify.perturb_m needs a polynomial or example transform"))
        }
    };
    let m = poly.coefficients();
    let data = m.as_slice().iter().map(|z| z + delta).collect();
    let m = Matrix::new(m.rows(), m.cols(), data)?;
    Ok(TransformMap::Poly(PolyTransform::from_parts(m, poly.basis().clone())?))
}

fn contraction_check(b: &Built, cfg: &ExperimentConfig, tail: f64) -> anyhow::Result<Check> {
    let sys = b.system.as_ref();
    let diag = b.filter.diagonal();
    let mut x = cfg.run.x0.clone();
    if x.len() != sys.state_dim() {
        return Err(config_error("run.x0 does not match the state dimension"));
    }
    let mut xi = initial_filter_state(cfg, &b.filter)?;
    let e0: Vec<C64> = xi.iter().zip(&b.transform.eval(&x)?).map(|(a, t)| a - t).collect();
    let scale = norm(&e0).max(1.0);
    let mut worst: f64 = 0.0;
    let mut power = vec![c64(1.0, 0.0); diag.len()];
    for _ in 0..=cfg.run.steps {
        let t = b.transform.eval(&x)?;
        let gap: Vec<C64> = (0..diag.len()).map(|i| xi[i] - t[i] - power[i] * e0[i]).collect();
        worst = worst.max(norm(&gap) / scale);
        xi = b.filter.step_complex(&xi, &sys.output(&x))?;
        x = sys.forward(&x);
        for (p, l) in power.iter_mut().zip(&diag) {
            *p *= l;
        }
    }
    Ok(judged_with_tail(
        "contraction",
        worst,
        CONTRACTION_TOLERANCE,
        tail / scale,
        format!("xi_k - T(x_k) against lambda^k (xi_0 - T(x_0)), relative to max(1, |e_0|), k <= {}", cfg.run.steps),
    ))
}

fn lift_check(b: &Built, samples: usize, seed: u64) -> anyhow::Result<Check> {
    let sys = b.system.as_ref();
    let lift = sys.lift();
    let basis = sys.basis();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = sys.domain().sample(&mut rng);
        let p = basis.eval(&x);
        let lhs = basis.eval(&sys.forward(&x));
        let rhs = lift.real_mul_vec(&p)?;
        let gap = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let pn = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst = worst.max(gap / (1.0 + pn));
    }
    Ok(judged(
        "lift_identity",
        worst,
        LIFT_TOLERANCE,
        format!("|P(Fx) - D P(x)| / (1 + |P(x)|) over {samples} samples"),
    ))
}

fn unicity_check(b: &Built, cfg: &ExperimentConfig, seed: u64) -> anyhow::Result<Check> {
    let poly = match &b.transform {
        TransformMap::Poly(p) => p.clone(),
        TransformMap::Example(e) => e.to_poly(),
        TransformMap::Series(_) => poly_transform(&b.system, &b.filter)?,
    };
    let n = match &b.transform {
        TransformMap::Series(s) => s.truncation(),
        _ => cfg.verify.series_n,
    };
    let series = SeriesTransform::new(b.system.clone(), b.filter.clone(), n, DEFAULT_GRID_PITCH)?;
    let tail = series.own_tail_bound();
    if tail > CONCLUSIVE_TAIL_BOUND {
        return Ok(Check {
            name: "unicity",
            status: Status::Skipped,
            value: f64::NAN,
            threshold: tail,
            detail: format!("inconclusive: tail_bound({n}) = {tail:.3e} exceeds {CONCLUSIVE_TAIL_BOUND:e}"),
        });
    }
    let r = compare_transforms(&series, &poly, cfg.verify.unicity_samples, seed)?;
    Ok(judged(
        "unicity",
        r.max_deviation,
        r.tail_bound + r.rounding_floor,
        format!(
            "max |T_{n}(x) - M P(x)| over {} samples; tail_bound({n}) = {:.3e}, rounding floor {:.3e}",
            cfg.verify.unicity_samples, r.tail_bound, r.rounding_floor
        ),
    ))
}

fn realization_check(b: &Built, cfg: &ExperimentConfig) -> anyhow::Result<Check> {
    let sys = b.system.as_ref();
    let mut x = cfg.run.x0.clone();
    let mut xc = vec![C64::default(); b.filter.dim()];
    let mut xr = vec![0.0; 2 * b.filter.dim()];
    let mut worst: f64 = 0.0;
    let steps = 100;
    for _ in 0..steps {
        let y = sys.output(&x);
        xc = b.filter.step_complex(&xc, &y)?;
        xr = b.filter.step_real(&xr, &y)?;
        for (i, z) in xc.iter().enumerate() {
            worst = worst.max((xr[2 * i] - z.re).abs()).max((xr[2 * i + 1] - z.im).abs());
        }
        x = sys.forward(&x);
    }
    Ok(judged(
        "real_complex_filter",
        worst,
        REALIZATION_TOLERANCE,
        format!("componentwise gap between real and complex filter states over {steps} steps"),
    ))
}

pub fn verify(cfg: &ExperimentConfig, opts: &Options) -> anyhow::Result<i32> {
    let seed = cfg.resolve_seed(opts.seed)?;
    let mut b = build(cfg, seed)?;
    if let Some(delta) = cfg.verify.perturb_m {
        b.transform = perturbed(&b.transform, delta)?;
    }
    let tail = series_tail(&b.transform).unwrap_or(0.0);
    let samples = cfg.verify.samples;

    let mut checks = Vec::new();
    let residual = max_relative_residual(&b, samples, seed)?;
    checks.push(judged_with_tail(
        "functional_residual",
        residual,
        RESIDUAL_TOLERANCE,
        tail,
        format!("max |T(f(x)) - A T(x) - B h(x)| / (1 + |T(x)|) over {samples} samples"),
    ));
    checks.push(contraction_check(&b, cfg, tail)?);
    checks.push(lift_check(&b, samples, seed)?);
    checks.push(unicity_check(&b, cfg, seed)?);
    checks.push(realization_check(&b, cfg)?);
    let inj = injectivity_probe(&b.transform, b.system.as_ref(), INJECTIVITY_PAIRS, seed)?;
    checks.push(Check {
        name: "injectivity",
        status: if inj.warning { Status::Fail } else { Status::Pass },
        value: inj.margin,
        threshold: INJECTIVITY_WARNING_MARGIN,
        detail: format!("smallest |T(x1) - T(x2)| / |x1 - x2| over {} pairs", inj.pairs.len()),
    });

    let count = |s: Status| checks.iter().filter(|c| c.status == s).count();
    let (passed, failed, skipped) = (count(Status::Pass), count(Status::Fail), count(Status::Skipped));
    for c in &checks {
        let status = match c.status {
            Status::Pass => "pass",
            Status::Fail => "FAIL",
            Status::Skipped => "skipped",
        };
        eprintln!("{status:>7}  {:<20} {:.3e} (threshold {:.3e})", c.name, c.value, c.threshold);
    }
    let dir = out_dir(cfg, opts)?;
    write_json(
        &dir,
        "verify.json",
        &VerifyReport {
            transform: b.transform.kind(),
            seed,
            checks,
            passed,
            failed,
            skipped,
        },
    )?;
    Ok(if failed == 0 { 0 } else { 1 })
}
