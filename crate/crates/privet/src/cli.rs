//! Command-line front end. Every subcommand reads its options from flags
//! and, optionally, a flat `key = value` config file whose keys are the flag
//! names with `_` for `-`; flags win over the file. The resolved options
//! are written back as `config.toml` in the output directory, so a run can
//! be repeated with `--config <out>/config.toml`.
//!
//! Exit codes: 0 success, 2 invalid input or usage, 3 numerical failure.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::baselines::{aats_privacy_loss, authenticity_flags};
use crate::data::{load_matrix, save_matrix, split, DataMatrix, DtypeHint, Format, SplitSpec};
use crate::error::{invalid, PrivetError, Result};
use crate::evt::{fit_both, fit_family, Family, TailFit, TailWindow};
use crate::experiments::{
    emit_grid, generate_population, ideal_pr_curve, inject_leaks, pr_csv, pr_knee, ExternalScorer,
    GridSpec, LeakSpec, PopulationSpec, Scorer,
};
use crate::gof::{bootstrap_ks_band, pit, pp_csv, pp_curves, pp_ribbon, pp_svg, split_consistency};
use crate::knn::{nn_distances_labeled, pairwise_min_profile, Metric};
use crate::orderstats::{DecimationMode, FlagScore};
use crate::pipeline::{
    curves_csv, ecdf_points, ecdf_svg, emit_report, emit_timing, ensure_dir, fit_curve, fmt_f64,
    membership_attack, privet, write_file, MembershipConfig, PipelineConfig,
};
use crate::plot::{LineChart, Scale, Series};

/// Environment variable naming the output directory when `--out` is absent.
pub const OUT_DIR_ENV: &str = "PRIVET_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "privet", version, about = "Extreme-value nearest-neighbor privacy scores for synthetic data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Score a synthetic set against train and test sets.
    Score(ScoreArgs),
    /// Fit the tail law of a set's within-set 1-NN distances.
    Fit(FitArgs),
    /// Goodness-of-fit diagnostics of the tail fit.
    Gof(GofArgs),
    /// Membership attack on a reference set (train and validation merged).
    Attack(AttackArgs),
    /// Inject controlled leaks into a synthetic set, or generate a population.
    Leakgen(LeakgenArgs),
    /// Sweep a (f_fake, f_copy) grid and write privacy maps.
    Grid(GridArgs),
    /// Authenticity and adversarial-accuracy baselines.
    Baseline(BaselineArgs),
    /// eCDF plot of the three 1-NN distance sets with the fitted tail.
    Ecdf(EcdfArgs),
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// Flat key = value config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Master seed of every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $PRIVET_OUT_DIR, else ./privet-out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Matrix file format: csv or dense-binary (default: from the extension).
    #[arg(long)]
    pub format: Option<String>,
    /// CSV value type: auto, binary or float64.
    #[arg(long)]
    pub dtype: Option<String>,
    /// Distance: hamming or euclidean (default: from the data type).
    #[arg(long)]
    pub metric: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct WindowArgs {
    /// Lower cutoff fraction of the tail window.
    #[arg(long)]
    pub a_frac: Option<f64>,
    /// Upper quantile fraction of the tail window.
    #[arg(long)]
    pub q_frac: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct ScoringArgs {
    /// Threshold on delta_pi.
    #[arg(long, allow_hyphen_values = true)]
    pub tau: Option<f64>,
    /// Threshold on the rank-corrected delta_p.
    #[arg(long, allow_hyphen_values = true)]
    pub tau_delta_p: Option<f64>,
    /// Score deciding the leak flag: delta_pi or delta_p.
    #[arg(long)]
    pub flag: Option<String>,
    /// Remove flagged samples and rescore until none is flagged (true/false).
    #[arg(long)]
    pub decimation: Option<String>,
    /// sequential or batch.
    #[arg(long)]
    pub decimation_mode: Option<String>,
    /// Move the fitted law to each reference set's size (true/false).
    #[arg(long)]
    pub rescale: Option<String>,
    /// log10 distance offset that triggers an under/overfitting label.
    #[arg(long)]
    pub regime_tolerance: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub common: Common,
    /// Train matrix.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test (holdout) matrix.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Synthetic matrix.
    #[arg(long)]
    pub synth: Option<PathBuf>,
    /// Run without a test set (overfitting-only report).
    #[arg(long)]
    pub no_test: bool,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    /// Matrix whose within-set distances are fitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// auto, weibull or gumbel.
    #[arg(long)]
    pub family: Option<String>,
    #[command(flatten)]
    pub window: WindowArgs,
}

#[derive(Args, Debug)]
pub struct GofArgs {
    #[command(flatten)]
    pub common: Common,
    /// Matrix whose within-set 1-NN distances are analysed.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Parametric bootstrap replicates of the KS band.
    #[arg(long)]
    pub n_bootstrap: Option<usize>,
    /// Smallest q of the P-P ribbon.
    #[arg(long)]
    pub q_min: Option<f64>,
    /// Largest q of the P-P ribbon.
    #[arg(long)]
    pub q_max: Option<f64>,
    /// Number of q values in the ribbon.
    #[arg(long)]
    pub n_q: Option<usize>,
    /// Random half splits of the split-consistency check (0 skips it).
    #[arg(long)]
    pub n_splits: Option<usize>,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[command(flatten)]
    pub common: Common,
    /// Reference rows: train and validation merged.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// One 0/1 membership label per reference row (1 = train).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Synthetic matrix.
    #[arg(long)]
    pub synth: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
    /// Move the fitted law to the synthetic set's size (true/false).
    #[arg(long)]
    pub rescale: Option<String>,
    /// Known number of memorized members, for the ideal-classifier curve.
    #[arg(long)]
    pub memorized: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct PopulationArgs {
    /// Features (bits) per generated individual.
    #[arg(long)]
    pub n_features: Option<usize>,
    /// Linked sites per block of the generator.
    #[arg(long)]
    pub block_len: Option<usize>,
    /// Haplotype templates per block.
    #[arg(long)]
    pub n_templates: Option<usize>,
    /// Per-bit flip probability of the generated individuals.
    #[arg(long)]
    pub flip_rate: Option<f64>,
    /// Subpopulations with their own template weights.
    #[arg(long)]
    pub n_subpops: Option<usize>,
    /// Dirichlet concentration of the template weights.
    #[arg(long)]
    pub concentration: Option<f64>,
}

#[derive(Args, Debug)]
pub struct LeakgenArgs {
    #[command(flatten)]
    pub common: Common,
    /// Train matrix.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Synthetic matrix.
    #[arg(long)]
    pub synth: Option<PathBuf>,
    /// Fraction of synthetic rows that receive leaked bits.
    #[arg(long)]
    pub f_fake: Option<f64>,
    /// Fraction of features copied from the train neighbor.
    #[arg(long)]
    pub f_copy: Option<f64>,
    /// Generate this many individuals instead of injecting leaks.
    #[arg(long)]
    pub population: Option<usize>,
    /// With --population: also write train/test/synth splits of these sizes
    /// (comma-separated).
    #[arg(long)]
    pub split: Option<String>,
    #[command(flatten)]
    pub pop: PopulationArgs,
    /// Output matrix path (default: <out>/pseudo_synth.bin or population.bin).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[command(flatten)]
    pub common: Common,
    /// Source matrix to split; without it a population is generated.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Comma-separated f_fake values.
    #[arg(long)]
    pub f_fake: Option<String>,
    /// Comma-separated f_copy values.
    #[arg(long)]
    pub f_copy: Option<String>,
    /// Train rows of the split.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Test rows of the split.
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Synthetic rows of the split.
    #[arg(long)]
    pub n_synth: Option<usize>,
    /// Comma-separated: privet, privet_pre, authenticity.
    #[arg(long)]
    pub scorers: Option<String>,
    /// External scores, `name=dir:tau` entries separated by `;`.
    #[arg(long)]
    pub external: Option<String>,
    #[command(flatten)]
    pub pop: PopulationArgs,
    #[command(flatten)]
    pub window: WindowArgs,
    #[command(flatten)]
    pub scoring: ScoringArgs,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: Common,
    /// Train matrix.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test (holdout) matrix.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Synthetic matrix.
    #[arg(long)]
    pub synth: Option<PathBuf>,
    /// authenticity, aats or all.
    #[arg(long)]
    pub which: Option<String>,
    /// Subsample unequal sets to a common size for aats (true/false).
    #[arg(long)]
    pub subsample: Option<String>,
}

#[derive(Args, Debug)]
pub struct EcdfArgs {
    #[command(flatten)]
    pub common: Common,
    /// Train matrix.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test (holdout) matrix.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Synthetic matrix.
    #[arg(long)]
    pub synth: Option<PathBuf>,
    #[command(flatten)]
    pub window: WindowArgs,
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => invalid(format!("expected true or false, got {s:?}")),
    }
}

/// Merges flags with the config file and records the resolved values.
pub struct Resolver {
    file: toml::Table,
    used: BTreeSet<String>,
    echo: toml::Table,
}

fn scalar_text(v: &toml::Value) -> Option<String> {
    match v {
        toml::Value::String(s) => Some(s.clone()),
        toml::Value::Integer(i) => Some(i.to_string()),
        toml::Value::Float(f) => Some(f.to_string()),
        toml::Value::Boolean(b) => Some(b.to_string()),
        toml::Value::Array(a) => a
            .iter()
            .map(|x| match x {
                toml::Value::Array(_) | toml::Value::Table(_) => None,
                other => scalar_text(other),
            })
            .collect::<Option<Vec<_>>>()
            .map(|v| v.join(",")),
        _ => None,
    }
}

impl Resolver {
    pub fn new(config: Option<&Path>) -> Result<Resolver> {
        let file = match config {
            None => toml::Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| PrivetError::io(p, e))?;
                let t: toml::Table = text.parse().map_err(|e: toml::de::Error| PrivetError::Parse {
                    path: p.to_path_buf(),
                    line: 0,
                    msg: e.to_string(),
                })?;
                for (k, v) in &t {
                    if scalar_text(v).is_none() {
                        return invalid(format!("{}: key {k:?} is not a flat value", p.display()));
                    }
                }
                t
            }
        };
        Ok(Resolver {
            file,
            used: BTreeSet::new(),
            echo: toml::Table::new(),
        })
    }

    fn mark(&mut self, key: &str) {
        self.used.insert(key.to_string());
    }

    fn file_text(&mut self, key: &str) -> Option<String> {
        self.used.insert(key.to_string());
        self.file.get(key).and_then(scalar_text)
    }

    fn raw(&mut self, key: &str, cli: Option<String>) -> Option<String> {
        let f = self.file_text(key);
        cli.or(f)
    }

    pub fn f64(&mut self, key: &str, cli: Option<f64>, default: f64) -> Result<f64> {
        self.mark(key);
        let v = match cli {
            Some(v) => v,
            None => match self.file_text(key) {
                Some(s) => s.trim().parse().map_err(|_| PrivetError::Invalid(format!("{key}: bad number {s:?}")))?,
                None => default,
            },
        };
        self.echo.insert(key.into(), toml::Value::Float(v));
        Ok(v)
    }

    pub fn usize(&mut self, key: &str, cli: Option<usize>, default: usize) -> Result<usize> {
        let v = self.opt_usize(key, cli)?.unwrap_or(default);
        self.echo.insert(key.into(), toml::Value::Integer(v as i64));
        Ok(v)
    }

    pub fn opt_usize(&mut self, key: &str, cli: Option<usize>) -> Result<Option<usize>> {
        self.mark(key);
        let v = match cli {
            Some(v) => Some(v),
            None => match self.file_text(key) {
                Some(s) => Some(s.trim().parse().map_err(|_| PrivetError::Invalid(format!("{key}: bad count {s:?}")))?),
                None => None,
            },
        };
        if let Some(x) = v {
            self.echo.insert(key.into(), toml::Value::Integer(x as i64));
        }
        Ok(v)
    }

    pub fn u64(&mut self, key: &str, cli: Option<u64>, default: u64) -> Result<u64> {
        self.mark(key);
        let v = match cli {
            Some(v) => v,
            None => match self.file_text(key) {
                Some(s) => s.trim().parse().map_err(|_| PrivetError::Invalid(format!("{key}: bad integer {s:?}")))?,
                None => default,
            },
        };
        // TOML integers are signed; large seeds are echoed as strings.
        self.echo.insert(
            key.into(),
            i64::try_from(v).map_or(toml::Value::String(v.to_string()), toml::Value::Integer),
        );
        Ok(v)
    }

    pub fn bool(&mut self, key: &str, cli: Option<String>, default: bool) -> Result<bool> {
        let v = match self.raw(key, cli) {
            Some(s) => parse_bool(&s).map_err(|_| PrivetError::Invalid(format!("{key}: expected true or false, got {s:?}")))?,
            None => default,
        };
        self.echo.insert(key.into(), toml::Value::Boolean(v));
        Ok(v)
    }

    /// A switch flag: present on the command line, or `true` in the file.
    pub fn switch(&mut self, key: &str, cli: bool) -> Result<bool> {
        self.mark(key);
        let v = if cli { true } else { self.bool(key, None, false)? };
        self.echo.insert(key.into(), toml::Value::Boolean(v));
        Ok(v)
    }

    pub fn string(&mut self, key: &str, cli: Option<String>) -> Option<String> {
        let v = self.raw(key, cli);
        if let Some(s) = &v {
            self.echo.insert(key.into(), toml::Value::String(s.clone()));
        }
        v
    }

    /// A string option with a default; the resolved value is echoed.
    pub fn text(&mut self, key: &str, cli: Option<String>, default: &str) -> String {
        let v = self.raw(key, cli).unwrap_or_else(|| default.to_string());
        self.echo.insert(key.into(), toml::Value::String(v.clone()));
        v
    }

    pub fn path(&mut self, key: &str, cli: Option<PathBuf>) -> Option<PathBuf> {
        self.string(key, cli.map(|p| p.to_string_lossy().into_owned()))
            .map(PathBuf::from)
    }

    pub fn required_path(&mut self, key: &str, cli: Option<PathBuf>) -> Result<PathBuf> {
        self.path(key, cli)
            .ok_or_else(|| PrivetError::Invalid(format!("missing --{}", key.replace('_', "-"))))
    }

    pub fn parsed<T: FromStr<Err = PrivetError>>(&mut self, key: &str, cli: Option<String>) -> Result<Option<T>> {
        self.string(key, cli).map(|s| s.parse()).transpose()
    }

    /// Fails on config keys no option asked for.
    pub fn finish(&self) -> Result<()> {
        let unknown: Vec<&String> = self.file.keys().filter(|k| !self.used.contains(*k)).collect();
        if !unknown.is_empty() {
            return invalid(format!("unknown config keys: {unknown:?}"));
        }
        Ok(())
    }

    pub fn echo_toml(&self) -> String {
        toml::to_string(&self.echo).expect("flat table serializes")
    }
}

/// Options every subcommand shares, resolved.
struct Env {
    threads: Option<usize>,
    seed: u64,
    out: PathBuf,
    format: Option<Format>,
    dtype: DtypeHint,
    metric: Option<Metric>,
}

fn resolve_common(r: &mut Resolver, c: &Common) -> Result<Env> {
    let threads = r.opt_usize("threads", c.threads)?;
    if threads == Some(0) {
        return invalid("--threads must be at least 1");
    }
    let seed = r.u64("seed", c.seed, 0)?;
    let env_out = std::env::var_os(OUT_DIR_ENV).map(PathBuf::from);
    let out = r
        .path("out", c.out.clone().or(env_out))
        .unwrap_or_else(|| PathBuf::from("privet-out"));
    let format = match r.string("format", c.format.clone()) {
        None => None,
        Some(s) => Some(match s.as_str() {
            "csv" => Format::Csv,
            "dense-binary" | "dense" | "bin" => Format::DenseBinary,
            _ => return invalid(format!("unknown format {s:?} (csv|dense-binary)")),
        }),
    };
    let dtype = match r.text("dtype", c.dtype.clone(), "auto").as_str() {
        "auto" => DtypeHint::Auto,
        "binary" => DtypeHint::Binary,
        "float64" | "float" => DtypeHint::Float64,
        s => return invalid(format!("unknown dtype {s:?} (auto|binary|float64)")),
    };
    let metric = r.parsed::<Metric>("metric", c.metric.clone())?;
    Ok(Env {
        threads,
        seed,
        out,
        format,
        dtype,
        metric,
    })
}

impl Env {
    fn load(&self, path: &Path) -> Result<DataMatrix> {
        if !path.exists() {
            return Err(PrivetError::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
            ));
        }
        load_matrix(path, self.format.unwrap_or_else(|| Format::from_path(path)), self.dtype)
    }

    fn metric_for(&self, m: &DataMatrix) -> Metric {
        self.metric.unwrap_or_else(|| Metric::for_dtype(m.dtype()))
    }
}

fn resolve_window(r: &mut Resolver, w: &WindowArgs) -> Result<TailWindow> {
    let d = TailWindow::default();
    TailWindow::new(r.f64("a_frac", w.a_frac, d.a_frac)?, r.f64("q_frac", w.q_frac, d.q_frac)?)
}

fn resolve_pipeline(r: &mut Resolver, env: &Env, w: &WindowArgs, s: &ScoringArgs) -> Result<PipelineConfig> {
    let d = PipelineConfig::default();
    let flag: FlagScore = r.text("flag", s.flag.clone(), "delta_pi").parse()?;
    let mode = match r.text("decimation_mode", s.decimation_mode.clone(), "sequential").as_str() {
        "sequential" => DecimationMode::Sequential,
        "batch" => DecimationMode::Batch,
        x => return invalid(format!("unknown decimation mode {x:?} (sequential|batch)")),
    };
    let cfg = PipelineConfig {
        metric: env.metric,
        window: resolve_window(r, w)?,
        tau: r.f64("tau", s.tau, d.tau)?,
        tau_delta_p: r.f64("tau_delta_p", s.tau_delta_p, d.tau_delta_p)?,
        flag,
        decimation: r.bool("decimation", s.decimation.clone(), d.decimation)?,
        decimation_mode: mode,
        rescale: r.bool("rescale", s.rescale.clone(), d.rescale)?,
        regime_tolerance: r.f64("regime_tolerance", s.regime_tolerance, d.regime_tolerance)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_population(r: &mut Resolver, p: &PopulationArgs) -> Result<PopulationSpec> {
    let d = PopulationSpec::default();
    let flip = r.f64("flip_rate", p.flip_rate, d.flip_rate.0)?;
    let spec = PopulationSpec {
        n_features: r.usize("n_features", p.n_features, d.n_features)?,
        block_len: r.usize("block_len", p.block_len, d.block_len)?,
        n_templates: r.usize("n_templates", p.n_templates, d.n_templates)?,
        flip_rate: (flip, flip),
        n_subpops: r.usize("n_subpops", p.n_subpops, d.n_subpops)?,
        concentration: r.f64("concentration", p.concentration, d.concentration)?,
        freq_beta: d.freq_beta,
    };
    spec.validate()?;
    Ok(spec)
}

fn opt_text(v: Option<f64>) -> String {
    v.map_or("undefined".into(), fmt_f64)
}

/// Outcome of a subcommand: the summary line fields.
type Summary = Vec<(String, String)>;

fn kv(k: &str, v: impl ToString) -> (String, String) {
    (k.to_string(), v.to_string())
}

fn finish_run(r: &Resolver, env: &Env) -> Result<()> {
    ensure_dir(&env.out)?;
    write_file(&env.out.join("config.toml"), &r.echo_toml())
}

fn cmd_score(a: &ScoreArgs, r: &mut Resolver) -> Result<Summary> {
    let env = resolve_common(r, &a.common)?;
    let train_p = r.required_path("train", a.train.clone())?;
    let synth_p = r.required_path("synth", a.synth.clone())?;
    let no_test = r.switch("no_test", a.no_test)?;
    let test_p = r.path("test", a.test.clone());
    if !no_test && test_p.is_none() {
        return invalid("missing --test (or pass --no-test for an overfitting-only report)");
    }
    let cfg = resolve_pipeline(r, &env, &a.window, &a.scoring)?;
    r.finish()?;
    with_threads(env.threads, || {
        let train = env.load(&train_p)?;
        let synth = env.load(&synth_p)?;
        let test = match (&test_p, no_test) {
            (Some(p), false) => Some(env.load(p)?),
            _ => None,
        };
        let report = privet(&train, test.as_ref(), &synth, &cfg)?;
        emit_report(&report, &env.out)?;
        emit_timing(&report, &env.out)?;
        finish_run(r, &env)?;
        if !report.privacy_scores {
            eprintln!("{}", crate::pipeline::NO_TEST_BANNER);
        }
        for w in report.warnings.iter().filter(|w| w.as_str() != crate::pipeline::NO_TEST_BANNER) {
            eprintln!("warning: {w}");
        }
        Ok(vec![
            kv("command", "score"),
            kv("npl", report.global.npl),
            kv("npl_before_decimation", report.npl_before_decimation),
            kv("m", report.samples.len()),
            kv("mean_delta_pi", opt_text(report.global.mean_delta_pi)),
            kv("regime", report.regime.name()),
            kv("family", format!("{:?}", report.fit.family).to_lowercase()),
            kv("shape", fmt_f64(report.fit.shape)),
            kv("privacy_scores", report.privacy_scores),
            kv("seconds", format!("{:.3}", report.timing.total_seconds)),
            kv("out", env.out.display()),
        ])
    })
}

fn cmd_fit(a: &FitArgs, r: &mut Resolver) -> Result<Summary> {
    let env = resolve_common(r, &a.common)?;
    let data_p = r.required_path("data", a.data.clone())?;
    let family = r.text("family", a.family.clone(), "auto");
    let window = resolve_window(r, &a.window)?;
    r.finish()?;
    with_threads(env.threads, || {
        let m = env.load(&data_p)?;
        let d = pairwise_min_profile(&m, env.metric_for(&m))?;
        let (fit, alt) = match family.as_str() {
            "auto" => fit_both(&d, &window)?,
            "weibull" => (fit_family(&d.distances, &window, Family::Weibull, d.effective_reference())?, None),
            "gumbel" => (fit_family(&d.distances, &window, Family::Gumbel, d.effective_reference())?, None),
            f => return invalid(format!("unknown family {f:?} (auto|weibull|gumbel)")),
        };
        #[derive(serde::Serialize)]
        struct Out<'a> {
            fit: &'a TailFit,
            alternative: &'a Option<TailFit>,
        }
        ensure_dir(&env.out)?;
        let mut js = serde_json::to_string_pretty(&Out {
            fit: &fit,
            alternative: &alt,
        })
        .expect("fit serializes");
        js.push('\n');
        write_file(&env.out.join("fit.json"), &js)?;
        finish_run(r, &env)?;
        Ok(vec![
            kv("command", "fit"),
            kv("family", format!("{:?}", fit.family).to_lowercase()),
            kv("ln_a", fmt_f64(fit.ln_a)),
            kv("shape", fmt_f64(fit.shape)),
            kv("m", fit.m),
            kv("nll", fmt_f64(fit.nll)),
            kv("n_reference", fit.n_reference),
            kv("out", env.out.display()),
        ])
    })
}

fn cmd_gof(a: &GofArgs, r: &mut Resolver) -> Result<Summary> {
    let env = resolve_common(r, &a.common)?;
    let data_p = r.required_path("data", a.data.clone())?;
    let window = resolve_window(r, &a.window)?;
    let n_boot = r.usize("n_bootstrap", a.n_bootstrap, 200)?;
    let q_min = r.f64("q_min", a.q_min, 0.10)?;
    let q_max = r.f64("q_max", a.q_max, 0.30)?;
    let n_q = r.usize("n_q", a.n_q, 9)?;
    let n_splits = r.usize("n_splits", a.n_splits, 10)?;
    r.finish()?;
    with_threads(env.threads, || {
        let m = env.load(&data_p)?;
        let metric = env.metric_for(&m);
        let d = pairwise_min_profile(&m, metric)?;
        let (fit, _) = fit_both(&d, &window)?;
        let reference = pit(&fit, &d, &window)?;
        let band = bootstrap_ks_band(&fit, &d, &window, n_boot, env.seed)?;
        let ribbon = pp_ribbon(&d, window.a_frac, (q_min, q_max), n_q)?;
        let split = if n_splits > 0 {
            Some(split_consistency(&m, metric, &window, n_splits, env.seed)?)
        } else {
            None
        };
        let curves = pp_curves(&reference, Some(&ribbon), Some(&band), split.as_ref());
        ensure_dir(&env.out)?;
        write_file(&env.out.join("pp.csv"), &pp_csv(&curves))?;
        write_file(&env.out.join("pp.svg"), &pp_svg(&curves, "P-P plot of the tail fit"))?;
        #[derive(serde::Serialize)]
        struct Out<'a> {
            fit: &'a TailFit,
            ks_stat: f64,
            m: usize,
            critical_value: f64,
            mc_p_value: f64,
            n_bootstrap: usize,
            bootstrap_failures: usize,
            ribbon_q: &'a [f64],
            ribbon_diagonal_coverage: f64,
            ribbon_max_width: f64,
            split_max_width: Option<f64>,
            split_median_max_deviation: Option<f64>,
        }
        let out = Out {
            fit: &fit,
            ks_stat: reference.ks_stat,
            m: reference.m,
            critical_value: band.critical_value,
            mc_p_value: band.mc_p_value,
            n_bootstrap: band.n_bootstrap,
            bootstrap_failures: band.failures,
            ribbon_q: &ribbon.q_values,
            ribbon_diagonal_coverage: ribbon.diagonal_coverage,
            ribbon_max_width: ribbon.max_width,
            split_max_width: split.as_ref().map(|s| s.max_width),
            split_median_max_deviation: split.as_ref().map(|s| s.median_max_deviation),
        };
        let mut js = serde_json::to_string_pretty(&out).expect("gof serializes");
        js.push('\n');
        write_file(&env.out.join("gof.json"), &js)?;
        finish_run(r, &env)?;
        Ok(vec![
            kv("command", "gof"),
            kv("ks_stat", fmt_f64(reference.ks_stat)),
            kv("critical_value", fmt_f64(band.critical_value)),
            kv("mc_p_value", fmt_f64(band.mc_p_value)),
            kv("m", reference.m),
            kv("out", env.out.display()),
        ])
    })
}

fn read_labels(path: &Path) -> Result<Vec<bool>> {
    let text = std::fs::read_to_string(path).map_err(|e| PrivetError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || (i == 0 && t.parse::<f64>().is_err() && t != "true" && t != "false") {
            continue;
        }
        let v = match t {
            "1" | "true" => true,
            "0" | "false" => false,
            _ => {
                return Err(PrivetError::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("expected 0 or 1, got {t:?}"),
                })
            }
        };
        out.push(v);
    }
    Ok(out)
}

fn cmd_attack(a: &AttackArgs, r: &mut Resolver) -> Result<Summary> {
    let env = resolve_common(r, &a.common)?;
    let ref_p = r.required_path("reference", a.reference.clone())?;
    let synth_p = r.required_path("synth", a.synth.clone())?;
    let labels_p = r.path("labels", a.labels.clone());
    let window = resolve_window(r, &a.window)?;
    let rescale = r.bool("rescale", a.rescale.clone(), true)?;
    let memorized = r.opt_usize("memorized", a.memorized)?;
    r.finish()?;
    with_threads(env.threads, || {
        let reference = env.load(&ref_p)?;
        let synth = env.load(&synth_p)?;
        let labels = labels_p.as_deref().map(read_labels).transpose()?;
        let cfg = MembershipConfig {
            metric: env.metric,
            window,
            rescale,
        };
        let res = membership_attack(&reference, labels.as_deref(), &synth, &cfg)?;
        ensure_dir(&env.out)?;
        let mut s = String::from("reference_row,log10_pi,nn_dist,rank,label\n");
        for i in 0..res.scores.len() {
            let lab = res.labels.as_ref().map_or(String::new(), |l| u8::from(l[i]).to_string());
            let _ = writeln!(
                s,
                "{i},{},{},{},{lab}",
                fmt_f64(res.scores[i]),
                fmt_f64(res.nn_dist[i]),
                res.ranks[i]
            );
        }
        write_file(&env.out.join("scores.csv"), &s)?;
        let mut summary = vec![
            kv("command", "attack"),
            kv("n_reference", res.n_reference),
            kv("n_synth", res.n_synth),
            kv("family", format!("{:?}", res.fit.family).to_lowercase()),
        ];
        if let Some(pr) = &res.pr {
            write_file(&env.out.join("pr.csv"), &pr_csv(pr))?;
            let mut chart = LineChart::new("Membership attack", "recall", "precision", Scale::Linear, Scale::Linear);
            chart.series.push(Series::new(
                "privet",
                pr.points.iter().map(|p| (p.recall, p.precision)).collect(),
            ));
            if let Some(k) = memorized {
                if k > pr.n_positive {
                    return invalid(format!("--memorized {k} exceeds the {} members", pr.n_positive));
                }
                let ideal = ideal_pr_curve(pr.n_total, pr.n_positive, k, 400);
                let mut s = String::from("recall,precision\n");
                for (x, y) in &ideal {
                    let _ = writeln!(s, "{},{}", fmt_f64(*x), fmt_f64(*y));
                }
                write_file(&env.out.join("pr_ideal.csv"), &s)?;
                chart.series.push(Series::new("ideal", ideal).dashed());
            }
            write_file(&env.out.join("pr.svg"), &chart.to_svg())?;
            summary.push(kv("auc_pr", opt_text(pr.auc)));
            summary.push(kv("prevalence", fmt_f64(pr.prevalence)));
            if let Some(k) = pr_knee(pr) {
                summary.push(kv("knee_recall", fmt_f64(k.recall)));
                summary.push(kv("knee_precision", fmt_f64(k.precision)));
            }
        }
        finish_run(r, &env)?;
        summary.push(kv("out", env.out.display()));
        Ok(summary)
    })
}

fn cmd_leakgen(a: &LeakgenArgs, r: &mut Resolver) -> Result<Summary> {
    let env = resolve_common(r, &a.common)?;
    let population = r.opt_usize("population", a.population)?;
    if let Some(n) = population {
        let spec = resolve_population(r, &a.pop)?;
        let output = r
            .path("output", a.output.clone())
            .unwrap_or_else(|| env.out.join("population.bin"));
        let sizes = match r.string("split", a.split.clone()) {
            None => None,
            Some(s) => {
                let v: Vec<usize> = s
                    .split(',')
                    .map(|x| x.trim().parse().map_err(|_| PrivetError::Invalid(format!("split: bad size {x:?}"))))
                    .collect::<Result<_>>()?;
                if v.len() != 3 {
                    return invalid("split: expected three sizes n_train,n_test,n_synth");
                }
                Some(SplitSpec {
                    seed: env.seed,
                    n_train: v[0],
                    n_test: v[1],
                    n_synth: v[2],
                })
            }
        };
        r.finish()?;
        return with_threads(env.threads, || {
            let m = generate_population(&spec, n, env.seed)?;
            let format = env.format.unwrap_or_else(|| Format::from_path(&output));
            ensure_dir(&env.out)?;
            save_matrix(&m, &output, format)?;
            if let Some(sp) = &sizes {
                let ext = if format == Format::Csv { "csv" } else { "bin" };
                let (tr, te, sy) = split(&m, sp)?;
                for (name, part) in [("train", &tr), ("test", &te), ("synth", &sy)] {
                    save_matrix(part, &env.out.join(format!("{name}.{ext}")), format)?;
                }
            }
            finish_run(r, &env)?;
            Ok(vec![
                kv("command", "leakgen"),
                kv("population", n),
                kv("n_features", spec.n_features),
                kv("split", sizes.is_some()),
                kv("output", output.display()),
            ])
        });
    }
    let train_p = r.required_path("train", a.train.clone())?;
    let synth_p = r.required_path("synth", a.synth.clone())?;
    let f_fake = r.f64("f_fake", a.f_fake, 0.3)?;
    let f_copy = r.f64("f_copy", a.f_copy, 0.3)?;
    let output = r
        .path("output", a.output.clone())
        .unwrap_or_else(|| env.out.join("pseudo_synth.bin"));
    r.finish()?;
    with_threads(env.threads, || {
        let train = env.load(&train_p)?;
        let synth = env.load(&synth_p)?;
        let spec = LeakSpec {
            f_fake,
            f_copy,
            seed: env.seed,
        };
        let inj = inject_leaks(&train, &synth, &spec, env.metric_for(&train))?;
        if let Some(w) = &inj.warning {
            eprintln!("warning: {w}");
        }
        ensure_dir(&env.out)?;
        save_matrix(&inj.synth, &output, env.format.unwrap_or_else(|| Format::from_path(&output)))?;
        let mut s = String::from("synth_row,leak,source\n");
        for (i, (l, src)) in inj.truth.leak.iter().zip(&inj.truth.source).enumerate() {
            let _ = writeln!(s, "{i},{},{}", u8::from(*l), src.map_or(String::new(), |x| x.to_string()));
        }
        write_file(&env.out.join("truth.csv"), &s)?;
        finish_run(r, &env)?;
        Ok(vec![
            kv("command", "leakgen"),
            kv("n_leaks", inj.truth.n_leaks()),
            kv("copied_positions", (f_copy * synth.n_cols() as f64).floor() as usize),
            kv("output", output.display()),
        ])
    })
}

fn parse_list(key: &str, s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| PrivetError::Invalid(format!("{key}: bad number {x:?}")))
        })
        .collect()
}

fn parse_external(s: &str) -> Result<Vec<ExternalScorer>> {
    s.split(';')
        .filter(|e| !e.trim().is_empty())
        .map(|e| {
            let (name, rest) = e
                .split_once('=')
                .ok_or_else(|| PrivetError::Invalid(format!("external scorer {e:?}: expected name=dir:tau")))?;
            let (dir, tau) = rest
                .rsplit_once(':')
                .ok_or_else(|| PrivetError::Invalid(format!("external scorer {e:?}: expected name=dir:tau")))?;
            let tau: f64 = tau
                .parse()
                .map_err(|_| PrivetError::Invalid(format!("external scorer {e:?}: bad tau")))?;
            Ok(ExternalScorer {
                name: name.trim().to_string(),
                dir: PathBuf::from(dir),
                tau,
            })
        })
        .collect()
}

fn cmd_grid(a: &GridArgs, r: &mut Resolver) -> Result<Summary> {
    let env = resolve_common(r, &a.common)?;
    let source_p = r.path("source", a.source.clone());
    let f_fake = parse_list(
        "f_fake",
        &r.text("f_fake", a.f_fake.clone(), "0.01,0.1,0.2,0.3,0.4"),
    )?;
    let f_copy = parse_list(
        "f_copy",
        &r.text("f_copy", a.f_copy.clone(), "0.01,0.02,0.05,0.1,0.2,0.3"),
    )?;
    let n_train = r.usize("n_train", a.n_train, 1500)?;
    let n_test = r.usize("n_test", a.n_test, 1500)?;
    let n_synth = r.usize("n_synth", a.n_synth, 1500)?;
    let scorer_names = r.text("scorers", a.scorers.clone(), "privet,privet_pre,authenticity");
    let mut scorers = Vec::new();
    for s in scorer_names.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        scorers.push(match s {
            "privet" => Scorer::Privet,
            "privet_pre" => Scorer::PrivetPre,
            "authenticity" => Scorer::Authenticity,
            _ => return invalid(format!("unknown scorer {s:?} (privet|privet_pre|authenticity)")),
        });
    }
    if let Some(e) = r.string("external", a.external.clone()) {
        scorers.extend(parse_external(&e)?.into_iter().map(Scorer::External));
    }
    let pop = if source_p.is_none() {
        Some(resolve_population(r, &a.pop)?)
    } else {
        None
    };
    let pipeline = resolve_pipeline(r, &env, &a.window, &a.scoring)?;
    r.finish()?;
    with_threads(env.threads, || {
        let source = match (&source_p, &pop) {
            (Some(p), _) => env.load(p)?,
            (None, Some(spec)) => generate_population(spec, n_train + n_test + n_synth, env.seed)?,
            _ => unreachable!(),
        };
        let spec = GridSpec {
            f_fake: f_fake.clone(),
            f_copy: f_copy.clone(),
            split: SplitSpec {
                seed: env.seed,
                n_train,
                n_test,
                n_synth,
            },
            seed: env.seed,
            metric: env.metric_for(&source),
            pipeline: pipeline.clone(),
            scorers: scorers.clone(),
        };
        let grid = crate::experiments::run_grid(&source, &spec)?;
        let files = emit_grid(&grid, &env.out)?;
        finish_run(r, &env)?;
        let failed = grid.cells.iter().filter(|c| c.error.is_some()).count();
        for c in grid.cells.iter().filter(|c| c.error.is_some()) {
            eprintln!("cell f_fake={} f_copy={} failed: {}", c.f_fake, c.f_copy, c.error.as_ref().unwrap());
        }
        Ok(vec![
            kv("command", "grid"),
            kv("cells", grid.cells.len()),
            kv("failed_cells", failed),
            kv("files", files.len()),
            kv("out", env.out.display()),
        ])
    })
}

fn cmd_baseline(a: &BaselineArgs, r: &mut Resolver) -> Result<Summary> {
    let env = resolve_common(r, &a.common)?;
    let train_p = r.required_path("train", a.train.clone())?;
    let synth_p = r.required_path("synth", a.synth.clone())?;
    let which = r.text("which", a.which.clone(), "all");
    if !matches!(which.as_str(), "all" | "authenticity" | "aats") {
        return invalid(format!("unknown baseline {which:?} (authenticity|aats|all)"));
    }
    let test_p = r.path("test", a.test.clone());
    if which != "authenticity" && test_p.is_none() {
        return invalid("missing --test (needed by the aats baseline)");
    }
    let subsample = r.bool("subsample", a.subsample.clone(), false)?;
    r.finish()?;
    with_threads(env.threads, || {
        let train = env.load(&train_p)?;
        let synth = env.load(&synth_p)?;
        let metric = env.metric_for(&train);
        ensure_dir(&env.out)?;
        let mut summary = vec![kv("command", "baseline")];
        let mut js = serde_json::Map::new();
        if which != "aats" {
            let auth = authenticity_flags(&train, &synth, metric)?;
            let mut s = String::from("synth_row,inauthentic\n");
            for (i, f) in auth.flags.iter().enumerate() {
                let _ = writeln!(s, "{i},{}", u8::from(*f));
            }
            write_file(&env.out.join("authenticity.csv"), &s)?;
            summary.push(kv("in_auth", auth.in_auth));
            js.insert("in_auth".into(), auth.in_auth.into());
        }
        if which != "authenticity" {
            let test = env.load(test_p.as_ref().unwrap())?;
            let seed = subsample.then_some(env.seed);
            let pl = aats_privacy_loss(&train, &test, &synth, metric, seed)?;
            summary.push(kv("aa_train", fmt_f64(pl.aa_train.aa)));
            summary.push(kv("aa_test", fmt_f64(pl.aa_test.aa)));
            summary.push(kv("privacy_loss", fmt_f64(pl.loss)));
            js.insert("aats".into(), serde_json::to_value(pl).expect("serializes"));
        }
        let mut text = serde_json::to_string_pretty(&js).expect("serializes");
        text.push('\n');
        write_file(&env.out.join("baseline.json"), &text)?;
        finish_run(r, &env)?;
        summary.push(kv("out", env.out.display()));
        Ok(summary)
    })
}

fn cmd_ecdf(a: &EcdfArgs, r: &mut Resolver) -> Result<Summary> {
    let env = resolve_common(r, &a.common)?;
    let train_p = r.required_path("train", a.train.clone())?;
    let synth_p = r.required_path("synth", a.synth.clone())?;
    let test_p = r.path("test", a.test.clone());
    let window = resolve_window(r, &a.window)?;
    r.finish()?;
    with_threads(env.threads, || {
        let train = env.load(&train_p)?;
        let synth = env.load(&synth_p)?;
        let metric = env.metric_for(&train);
        let d_trtr = pairwise_min_profile(&train, metric)?;
        let d_str = nn_distances_labeled(&synth, &train, metric, false, "synth", "train")?;
        let mut curves = vec![
            ("d_trtr".to_string(), ecdf_points(&d_trtr.distances)),
            ("d_str".to_string(), ecdf_points(&d_str.distances)),
        ];
        if let Some(p) = &test_p {
            let test = env.load(p)?;
            let d_ste = nn_distances_labeled(&synth, &test, metric, false, "synth", "test")?;
            curves.push(("d_ste".to_string(), ecdf_points(&d_ste.distances)));
        }
        let (fit, _) = fit_both(&d_trtr, &window)?;
        curves.push(("fit".to_string(), fit_curve(&fit, &d_trtr.distances, 200)));
        ensure_dir(&env.out)?;
        write_file(&env.out.join("ecdf.csv"), &curves_csv(&curves))?;
        write_file(&env.out.join("ecdf.svg"), &ecdf_svg(&curves, "1-NN distances"))?;
        finish_run(r, &env)?;
        Ok(vec![
            kv("command", "ecdf"),
            kv("curves", curves.len()),
            kv("family", format!("{:?}", fit.family).to_lowercase()),
            kv("out", env.out.display()),
        ])
    })
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| PrivetError::Invalid(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// Run one parsed command and return its summary fields.
pub fn execute(cli: &Cli) -> Result<Summary> {
    let config = match &cli.command {
        Command::Score(a) => &a.common.config,
        Command::Fit(a) => &a.common.config,
        Command::Gof(a) => &a.common.config,
        Command::Attack(a) => &a.common.config,
        Command::Leakgen(a) => &a.common.config,
        Command::Grid(a) => &a.common.config,
        Command::Baseline(a) => &a.common.config,
        Command::Ecdf(a) => &a.common.config,
    };
    let mut r = Resolver::new(config.as_deref())?;
    match &cli.command {
        Command::Score(a) => cmd_score(a, &mut r),
        Command::Fit(a) => cmd_fit(a, &mut r),
        Command::Gof(a) => cmd_gof(a, &mut r),
        Command::Attack(a) => cmd_attack(a, &mut r),
        Command::Leakgen(a) => cmd_leakgen(a, &mut r),
        Command::Grid(a) => cmd_grid(a, &mut r),
        Command::Baseline(a) => cmd_baseline(a, &mut r),
        Command::Ecdf(a) => cmd_ecdf(a, &mut r),
    }
}

/// `key=value` pairs joined by spaces.
pub fn summary_line(s: &Summary) -> String {
    s.iter()
        .map(|(k, v)| format!("{k}={}", v.replace(' ', "_")))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn exit_code(e: &PrivetError) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

/// Entry point of the binary: parse, run, print, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(s) => {
            println!("{}", summary_line(&s));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
