//! Command-line interface: `synth`, `calibrate`, `predict`, `eval`, `sweep`.
//!
//! Every subcommand also accepts `--config <path>`, a file of `key = value`
//! lines (`#` starts a comment). Each line becomes `--key value` ahead of
//! the explicit arguments, so flags given on the command line win. A value
//! of `true` turns the key into a bare switch.
//!
//! Randomness comes from `--seed` alone. `synth` derives image `i` from
//! stream `i` of that seed, `calibrate` splits with it directly, and
//! `eval`/`sweep` split trial `t` with `seed + t`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::dataset_io::{split_dataset, write_mask, DatasetManifest, Sample, SplitSpec};
use crate::error::{Error, Result};
use crate::evaluation::{
    run_trials, sweep_alpha, write_aggregate_csv, write_histogram_csv, write_strata_csv,
    write_trials_csv, TrialConfig, TrialOutcome,
};
use crate::methods::{fit, predict, FittedMethod, MethodKind, MethodSpec};
use crate::prob_calibration::DEFAULT_N_BINS;
use crate::risk_quantile::DEFAULT_LOSS_BOUND;
use crate::stratification::{DEFAULT_MIN_STRATUM_SIZE, DEFAULT_STRATA};
use crate::synthetic::{generate, write_dataset, Miscalibration, SynthConfig};

/// Split file written next to a calibrated model.
pub const SPLIT_FILE: &str = "split.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

#[derive(Debug, Parser)]
#[command(name = "segrc", version, about = "Conformal risk control for binary segmentation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with known pixel probabilities.
    Synth(SynthArgs),
    /// Fit one method on a manifest and save it.
    Calibrate(CalibrateArgs),
    /// Write prediction masks with a saved model.
    Predict(PredictArgs),
    /// Repeated-split evaluation at one α.
    Eval(EvalArgs),
    /// Repeated-split evaluation over a range of α.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SynthArgs {
    /// Number of images.
    #[arg(long, default_value_t = 100, value_parser = positive)]
    pub n: usize,
    /// Image size as HxW.
    #[arg(long, default_value = "32x32", value_parser = parse_size)]
    pub size: (usize, usize),
    /// none, sharpen:G or flatten:G.
    #[arg(long, default_value = "none")]
    pub miscal: Miscalibration,
    /// Standard deviation of logit noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sd: f64,
    /// Smallest blob area as a fraction of the image.
    #[arg(long, default_value_t = 0.01)]
    pub scale_min: f64,
    /// Largest blob area as a fraction of the image.
    #[arg(long, default_value_t = 0.3)]
    pub scale_max: f64,
    /// Blobs per image.
    #[arg(long, default_value_t = 1, value_parser = positive)]
    pub blobs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Method parameters shared by `calibrate`, `eval` and `sweep`.
#[derive(Debug, Args)]
pub struct MethodArgs {
    /// Number of strata for CCRA-S.
    #[arg(long, default_value_t = DEFAULT_STRATA, value_parser = positive)]
    pub k: usize,
    /// Equal-count bins for the isotonic calibration.
    #[arg(long, default_value_t = DEFAULT_N_BINS, value_parser = positive)]
    pub n_bins: usize,
    /// Upper bound of the per-image loss.
    #[arg(long, default_value_t = DEFAULT_LOSS_BOUND, value_parser = non_negative)]
    pub loss_bound: f64,
    /// Strata with fewer calibration images use the global threshold.
    #[arg(long, default_value_t = DEFAULT_MIN_STRATUM_SIZE)]
    pub min_stratum: usize,
}

impl MethodArgs {
    fn spec(&self, method: MethodKind, alpha: f64) -> MethodSpec {
        MethodSpec {
            loss_bound: self.loss_bound,
            n_strata: self.k,
            n_bins: self.n_bins,
            min_stratum_size: self.min_stratum,
            ..MethodSpec::new(method, alpha)
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub method: MethodKind,
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: f64,
    #[command(flatten)]
    pub params: MethodArgs,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Validation and calibration fractions as VAL:CAL; the rest is test.
    #[arg(long, default_value = "0.2:0.5", value_parser = parse_split)]
    pub split: (f64, f64),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Predict every sample instead of the model's test split.
    #[arg(long)]
    pub all: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Trial protocol shared by `eval` and `sweep`.
#[derive(Debug, Args)]
pub struct TrialArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "crc,cra,ccra,ccra-s")]
    pub methods: Vec<MethodKind>,
    #[arg(long, default_value_t = 100, value_parser = positive)]
    pub trials: usize,
    #[arg(long, default_value = "0.2:0.5", value_parser = parse_split)]
    pub split: (f64, f64),
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bins of the coverage histograms.
    #[arg(long, default_value_t = 20, value_parser = positive)]
    pub hist_bins: usize,
    /// Report directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl TrialArgs {
    fn config(&self) -> TrialConfig {
        TrialConfig {
            n_trials: self.trials,
            val_frac: self.split.0,
            cal_frac: self.split.1,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct EvalArgs {
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: f64,
    #[command(flatten)]
    pub params: MethodArgs,
    #[command(flatten)]
    pub trial: TrialArgs,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct SweepArgs {
    /// START:STOP:STEP or a comma-separated list.
    #[arg(long, default_value = "0.01:0.20:0.01", value_parser = parse_alphas)]
    pub alphas: AlphaList,
    #[command(flatten)]
    pub params: MethodArgs,
    #[command(flatten)]
    pub trial: TrialArgs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaList(pub Vec<f64>);

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn non_negative(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be a finite number >= 0"))
    }
}

pub fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("'{s}' is not of the form HxW"))?;
    let h: usize = h.trim().parse().map_err(|_| format!("bad height in '{s}'"))?;
    let w: usize = w.trim().parse().map_err(|_| format!("bad width in '{s}'"))?;
    if h == 0 || w == 0 {
        return Err(format!("'{s}' has a zero side"));
    }
    Ok((h, w))
}

pub fn parse_alpha(s: &str) -> std::result::Result<f64, String> {
    let a: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err(format!("alpha = {a} must lie in (0, 1)"))
    }
}

pub fn parse_split(s: &str) -> std::result::Result<(f64, f64), String> {
    let (v, c) = s
        .split_once(':')
        .ok_or_else(|| format!("'{s}' is not of the form VAL:CAL"))?;
    let v: f64 = v.parse().map_err(|_| format!("bad validation fraction in '{s}'"))?;
    let c: f64 = c.parse().map_err(|_| format!("bad calibration fraction in '{s}'"))?;
    if !((0.0..1.0).contains(&v) && c > 0.0 && c < 1.0 && v + c < 1.0) {
        return Err(format!(
            "'{s}': fractions must be in [0, 1), calibration positive, and sum below 1"
        ));
    }
    Ok((v, c))
}

pub fn parse_alphas(s: &str) -> std::result::Result<AlphaList, String> {
    let alphas = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, step] = parts[..] else {
            return Err(format!("'{s}' is not of the form START:STOP:STEP"));
        };
        let start = parse_alpha(start)?;
        let stop = parse_alpha(stop)?;
        let step: f64 = step.parse().map_err(|_| format!("bad step in '{s}'"))?;
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err(format!("'{s}': need STOP >= START and STEP > 0"));
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // Rounding keeps values like 0.07 from printing as 0.07000000000000001.
        (0..=n)
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        s.split(',').map(|a| parse_alpha(a.trim())).collect::<std::result::Result<Vec<_>, _>>()?
    };
    Ok(AlphaList(alphas))
}

/// Reads `key = value` lines into `--key value` arguments.
pub fn config_args(path: &Path) -> Result<Vec<OsString>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut args = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Parameter(format!("{}:{}: expected key = value", path.display(), n + 1))
        })?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key == "config" {
            return Err(Error::Parameter("config files cannot include other config files".into()));
        }
        match value.trim() {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            v => {
                args.push(format!("--{key}").into());
                args.push(v.into());
            }
        }
    }
    Ok(args)
}

/// Splices config-file arguments in right after the subcommand name.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config = None;
    for (i, a) in args.iter().enumerate() {
        let a = a.to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        }
    }
    let Some(config) = config else {
        return Ok(args);
    };
    let Some(sub) = args.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')) else {
        return Ok(args);
    };
    let at = sub + 2;
    let mut out = args[..at].to_vec();
    out.extend(config_args(&config)?);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

#[derive(Debug)]
pub enum CliError {
    /// Bad command line; exit code 2 (or 0 for help and version).
    Usage(clap::Error),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

fn usage(msg: String) -> CliError {
    CliError::Usage(Cli::command().error(clap::error::ErrorKind::ValueValidation, msg))
}

fn set_threads() {
    if let Some(n) = std::env::var("SEGRC_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Parses and runs one command.
pub fn run<I, T>(args: I) -> std::result::Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = expand_config(args).map_err(|e| usage(e.to_string()))?;
    let cli = Cli::try_parse_from(args).map_err(CliError::Usage)?;
    set_threads();
    match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

/// Process entry point: 0 on success, 1 on runtime errors, 2 on usage errors.
pub fn main() -> ExitCode {
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(e)) => {
            let _ = e.print();
            if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(CliError::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_synth(a: &SynthArgs) -> std::result::Result<(), CliError> {
    let config = SynthConfig {
        n_images: a.n,
        height: a.size.0,
        width: a.size.1,
        object_scale_range: (a.scale_min, a.scale_max),
        miscalibration: a.miscal,
        noise_sd: a.noise_sd,
        seed: a.seed,
        n_blobs: a.blobs,
        ..SynthConfig::default()
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let data = generate(&config)?;
    let manifest = write_dataset(&a.out, &data)?;
    eprintln!("wrote {} samples to {}", manifest.len(), a.out.display());
    Ok(())
}

fn load_ids(manifest: &DatasetManifest, ids: &[String]) -> Result<Vec<Sample>> {
    ids.iter()
        .map(|id| {
            let record = manifest
                .get(id)
                .ok_or_else(|| Error::Manifest(format!("sample '{id}' not in manifest")))?;
            manifest.load_sample(record)
        })
        .collect()
}

fn cmd_calibrate(a: &CalibrateArgs) -> std::result::Result<(), CliError> {
    let spec = a.params.spec(a.method, a.alpha);
    spec.validate().map_err(|e| usage(e.to_string()))?;
    if a.method.uses_curve() && a.split.0 == 0.0 {
        return Err(usage(format!("{} needs a validation fraction above 0", a.method)));
    }
    let manifest = DatasetManifest::load(&a.manifest)?;
    let split = split_dataset(&manifest, a.split.0, a.split.1, a.seed)?;
    let val = if a.method.uses_curve() {
        load_ids(&manifest, &split.val_ids)?
    } else {
        Vec::new()
    };
    let cal = load_ids(&manifest, &split.cal_ids)?;
    let fitted = fit(&spec, &val, &cal)?;
    create_dir(&a.out)?;
    fitted.save(&a.out)?;
    split.write_csv(a.out.join(SPLIT_FILE))?;
    eprintln!(
        "{}: tau = {} from {} calibration images ({} with empty masks skipped)",
        a.method, fitted.tau, fitted.n_cal, fitted.n_excluded
    );
    Ok(())
}

fn cmd_predict(a: &PredictArgs) -> std::result::Result<(), CliError> {
    let fitted = FittedMethod::load(&a.model)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let ids = if a.all {
        manifest.ids()
    } else {
        let path = a.model.join(SPLIT_FILE);
        if !path.is_file() {
            return Err(Error::Model(format!(
                "{} has no {SPLIT_FILE}; pass --all to predict every sample",
                a.model.display()
            ))
            .into());
        }
        SplitSpec::read_csv(path)?.test_ids
    };
    create_dir(&a.out)?;
    let mut table = String::from("sample_id,stratum,tau,set_size,fnr\n");
    for id in &ids {
        let record = manifest
            .get(id)
            .ok_or_else(|| Error::Manifest(format!("sample '{id}' not in manifest")))?;
        let sample = manifest.load_sample(record)?;
        let prepared = fitted.prepare(&sample.probs);
        let (tau, stratum) = fitted.threshold_for(&prepared);
        let pred = fitted.predict_prepared(&prepared);
        write_mask(a.out.join(format!("{id}_pred.npy")), &pred.set.to_mask())?;
        let fnr = match crate::evaluation::evaluate_image(id, &pred.set, &sample.mask, stratum)? {
            Some(r) => format!("{:.6}", r.fnr),
            None => String::new(),
        };
        let stratum = stratum.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(table, "{id},{stratum},{tau},{},{fnr}", pred.set.size());
    }
    let path = a.out.join(PREDICTIONS_FILE);
    std::fs::write(&path, table).map_err(|e| Error::io(&path, e))?;
    eprintln!("wrote {} prediction masks to {}", ids.len(), a.out.display());
    // Keeps `predict` usable as a library call as well.
    let _ = predict;
    Ok(())
}

fn write_reports(out: &Path, outcome: &TrialOutcome, hist_bins: usize, aggregate: &str) -> Result<()> {
    create_dir(out)?;
    write_trials_csv(out.join("trials.csv"), &outcome.rows)?;
    write_aggregate_csv(out.join(aggregate), &outcome.reports)?;
    if !outcome.stratum_reports.is_empty() {
        write_strata_csv(out.join("strata.csv"), &outcome.stratum_reports)?;
    }
    write_histogram_csv(out.join("coverage_hist.csv"), outcome, hist_bins)
}

fn print_summary(outcome: &TrialOutcome) {
    println!("method  alpha  coverage (sd samples / sd trials)  gap (sd samples / sd trials)  size");
    for r in &outcome.reports {
        println!(
            "{:<7} {:<6} {:.4} ({:.4} / {:.4})  {:.4} ({:.4} / {:.4})  {:.1}",
            r.method.to_string(),
            r.alpha,
            r.marginal_coverage,
            r.coverage_sd_samples,
            r.coverage_sd_trials,
            r.coverage_gap,
            r.gap_sd_samples,
            r.gap_sd_trials,
            r.mean_set_size
        );
    }
}

fn trial_specs(params: &MethodArgs, methods: &[MethodKind], alpha: f64) -> std::result::Result<Vec<MethodSpec>, CliError> {
    if methods.is_empty() {
        return Err(usage("no methods given".into()));
    }
    let specs: Vec<MethodSpec> = methods.iter().map(|&m| params.spec(m, alpha)).collect();
    for s in &specs {
        s.validate().map_err(|e| usage(e.to_string()))?;
    }
    Ok(specs)
}

fn cmd_eval(a: &EvalArgs) -> std::result::Result<(), CliError> {
    let specs = trial_specs(&a.params, &a.trial.methods, a.alpha)?;
    let data = DatasetManifest::load(&a.trial.manifest)?.load_all()?;
    let outcome = run_trials(&data, &specs, &a.trial.config())?;
    write_reports(&a.trial.out, &outcome, a.trial.hist_bins, "aggregate.csv")?;
    print_summary(&outcome);
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> std::result::Result<(), CliError> {
    let specs = trial_specs(&a.params, &a.trial.methods, a.alphas.0[0])?;
    let data = DatasetManifest::load(&a.trial.manifest)?.load_all()?;
    let outcome = sweep_alpha(&data, &specs, &a.alphas.0, &a.trial.config())?;
    write_reports(&a.trial.out, &outcome, a.trial.hist_bins, "sweep.csv")?;
    print_summary(&outcome);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sizes_and_splits() {
        assert_eq!(parse_size("64x32"), Ok((64, 32)));
        assert!(parse_size("0x4").is_err());
        assert!(parse_size("64").is_err());
        assert_eq!(parse_split("0.2:0.5"), Ok((0.2, 0.5)));
        assert!(parse_split("0.5:0.5").is_err());
        assert!(parse_alpha("1.5").is_err());
        assert!(parse_alpha("0").is_err());
    }

    #[test]
    fn alpha_ranges() {
        let AlphaList(a) = parse_alphas("0.01:0.20:0.01").unwrap();
        assert_eq!(a.len(), 20);
        assert_eq!(a[6], 0.07);
        assert_eq!(a[19], 0.2);
        assert_eq!(parse_alphas("0.05, 0.1").unwrap().0, vec![0.05, 0.1]);
        assert!(parse_alphas("0.2:0.1:0.01").is_err());
    }

    #[test]
    fn config_file_is_overridden_by_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "# defaults\nalpha = 0.2\nmethod=crc\nn_bins = 10\n").unwrap();
        let args: Vec<OsString> = ["segrc", "calibrate", "--config", cfg.to_str().unwrap(), "--alpha", "0.05"]
            .iter()
            .map(OsString::from)
            .collect();
        let expanded = expand_config(args).unwrap();
        let cli = Cli::try_parse_from(
            expanded
                .into_iter()
                .chain(["--manifest", "m.csv", "--out", "o"].map(OsString::from)),
        )
        .unwrap();
        let Command::Calibrate(c) = cli.command else { panic!("wrong command") };
        assert_eq!(c.alpha, 0.05);
        assert_eq!(c.method, MethodKind::Crc);
        assert_eq!(c.params.n_bins, 10);
    }

    #[test]
    fn usage_errors() {
        for args in [
            vec!["segrc", "synth", "--size", "0x4", "--out", "d"],
            vec!["segrc", "calibrate", "--method", "crc", "--alpha", "1.5", "--manifest", "m", "--out", "o"],
            vec!["segrc", "eval", "--alpha", "0.1", "--trials", "0", "--manifest", "m", "--out", "o"],
        ] {
            assert!(matches!(run(args), Err(CliError::Usage(_))));
        }
    }
}
