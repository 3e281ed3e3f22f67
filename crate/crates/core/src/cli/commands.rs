//! One function per subcommand. Each writes human-readable progress to `log`
//! and files under its output path.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelSection, RunConfig};
use super::persist::{load_model, save_model, write_atomic};
use crate::baselines::{empirical_covariance, model_covariance};
use crate::compiler::{export, ExportFormat};
use crate::datagen::{game_of_life_dataset, load_dataset, mn_sample, save_dataset, BitDataset, GridMN};
use crate::engine::{Engine, FbmModel, ZString};
use crate::error::{invalid, Error, Result};
use crate::flo::FloAnsatz;
use crate::loss::{KernelSpec, KernelStrings};
use crate::magic::{MagicAngles, REGISTER_MODES};
use crate::oracle::exact_distribution;
use crate::trainer::{compile_layers, evaluate_loss, train_with, Checkpoint, TrainConfig, TrainHistory};

/// Largest model the oracle check accepts.
pub const ORACLE_CHECK_MAX_MODES: usize = 12;
/// Deviation above which the oracle check fails.
pub const ORACLE_CHECK_TOLERANCE: f64 = 1e-8;

fn say(log: &mut dyn Write, msg: impl AsRef<str>) {
    let _ = writeln!(log, "{}", msg.as_ref());
}

/// `"3x4"` (or `3×4`) to `(rows, cols)`.
pub fn parse_dims(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split(['x', 'X', '×']).collect();
    let bad = || invalid(format!("bad dimension string '{s}', expected ROWSxCOLS"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let r = parts[0].trim().parse().map_err(|_| bad())?;
    let c = parts[1].trim().parse().map_err(|_| bad())?;
    Ok((r, c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    GridMn,
    GameOfLife,
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid-mn" => Ok(Self::GridMn),
            "game-of-life" => Ok(Self::GameOfLife),
            other => Err(invalid(format!(
                "unknown dataset kind '{other}' (grid-mn, game-of-life)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GenerateArgs {
    pub kind: DatasetKind,
    pub dims: String,
    pub count: usize,
    /// Game-of-Life evolution steps.
    pub steps: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn generate(args: &GenerateArgs, log: &mut dyn Write) -> Result<BitDataset> {
    let (rows, cols) = parse_dims(&args.dims)?;
    let data = match args.kind {
        DatasetKind::GridMn => mn_sample(
            &GridMN::generate(rows, cols, args.seed)?,
            args.count,
            args.seed.wrapping_add(1),
        ),
        DatasetKind::GameOfLife => game_of_life_dataset(rows, cols, args.steps, args.count, args.seed)?,
    };
    save_dataset(&data, &args.out)?;
    say(
        log,
        format!(
            "wrote {} rows of {} bits to {}",
            data.len(),
            data.n(),
            args.out.display()
        ),
    );
    Ok(data)
}

/// Random initial model for a configuration's model section.
pub fn init_model(section: &ModelSection, seed: u64) -> Result<FbmModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let random = FbmModel::random(section.registers, section.layers, &mut rng);
    FbmModel::new(random.magic().clone(), random.ansatz().clone(), section.k, section.m)
}

#[derive(Debug, Clone, Default)]
pub struct TrainArgs {
    pub config: PathBuf,
    /// Overrides the configured output directory.
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    pub seed: Option<u64>,
    /// Continue from this checkpoint instead of a fresh model.
    pub resume: Option<PathBuf>,
}

/// Training and held-out data according to the data section.
pub fn load_training_data(cfg: &RunConfig) -> Result<(BitDataset, Option<BitDataset>)> {
    let all = load_dataset(&cfg.data.train)?;
    if all.n() != cfg.variables() {
        return Err(invalid(format!(
            "dataset has {} columns but N·k = {}",
            all.n(),
            cfg.variables()
        )));
    }
    if let Some(test) = &cfg.data.test {
        let test = load_dataset(test)?;
        if test.n() != all.n() {
            return Err(invalid("test and training datasets have different widths"));
        }
        return Ok((all, Some(test)));
    }
    match cfg.data.split {
        Some(f) => {
            let (a, b) = all.split(f, cfg.model.seed)?;
            Ok((a, Some(b)))
        }
        None => Ok((all, None)),
    }
}

/// Builds the trainer configuration; shared with `eval` so frozen strings match.
pub fn train_config(cfg: &RunConfig, data: &BitDataset, log: &mut dyn Write) -> Result<TrainConfig> {
    let (kernels, median) = cfg.resolve_kernels(data)?;
    if let Some((small, large)) = median {
        say(log, format!("median heuristic bandwidths: {small} and {large}"));
    }
    let mut tc = TrainConfig::new(cfg.training.epochs, cfg.training.lr, kernels, cfg.model.seed);
    tc.resample_strings = cfg.training.resample;
    tc.exact_strings = cfg.training.exact;
    Ok(tc)
}

pub struct TrainOutput {
    pub model: FbmModel,
    pub history: TrainHistory,
    pub model_path: PathBuf,
    pub history_path: PathBuf,
}

fn parse_history(text: &str) -> Vec<String> {
    text.lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(str::to_owned)
        .collect()
}

pub fn train(args: &TrainArgs, log: &mut dyn Write) -> Result<TrainOutput> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        cfg.model.seed = s;
    }
    let dir = args.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
    fs::create_dir_all(&dir)?;
    let (data, _) = load_training_data(&cfg)?;
    let mut tc = train_config(&cfg, &data, log)?;
    let model_path = dir.join("model.json");
    let history_path = dir.join("history.csv");
    let checkpoint_path = dir.join("checkpoint.json");

    let (model, mut previous) = match &args.resume {
        Some(p) => {
            let (m, file) = load_model(p)?;
            if m.variables() != data.n() || m.ansatz().layers() != cfg.model.layers {
                return Err(invalid("checkpoint does not match the configured model"));
            }
            tc.start_epoch = file.epoch;
            // earlier rows live beside the checkpoint, or in the output directory
            let beside = p.parent().map(|d| d.join("history.csv"));
            let text = beside
                .iter()
                .chain(std::iter::once(&history_path))
                .find_map(|h| fs::read_to_string(h).ok());
            let rows = match text {
                Some(t) => parse_history(&t)
                    .into_iter()
                    .filter(|r| {
                        r.split(',')
                            .next()
                            .and_then(|e| e.parse::<usize>().ok())
                            .is_some_and(|e| e <= file.epoch)
                    })
                    .collect(),
                None => Vec::new(),
            };
            say(log, format!("resuming from epoch {}", file.epoch));
            (m, rows)
        }
        None => (init_model(&cfg.model, cfg.model.seed)?, Vec::new()),
    };
    tc.checkpoint = Some(Checkpoint {
        path: checkpoint_path,
        every: cfg.output.checkpoint_every,
        seed: cfg.model.seed,
    });
    let total = tc.start_epoch + tc.epochs;
    let report_every = (tc.epochs / 20).max(1);
    let run = train_with(&model, &data, &tc, |epoch, h| {
        if epoch % report_every == 0 || epoch == total {
            say(
                log,
                format!(
                    "epoch {epoch}/{total} loss {:.6e} grad {:.3e}",
                    h.loss[h.len() - 1],
                    h.grad_norm[h.len() - 1]
                ),
            );
        }
    })?;

    let mut csv = String::from("epoch,loss,grad_norm,seconds\n");
    for row in previous.drain(..) {
        csv.push_str(&row);
        csv.push('\n');
    }
    csv.push_str(&run.history.to_csv()["epoch,loss,grad_norm,seconds\n".len()..]);
    write_atomic(&history_path, &csv)?;
    if let Some(err) = run.aborted {
        say(log, format!("training aborted: {err}"));
        return Err(err);
    }
    save_model(&run.model, cfg.model.seed, total, &model_path)?;
    if let Some(f) = run.history.final_loss {
        say(log, format!("final loss {f:.17e}"));
    }
    say(
        log,
        format!("wrote {} and {}", model_path.display(), history_path.display()),
    );
    Ok(TrainOutput {
        model: run.model,
        history: run.history,
        model_path,
        history_path,
    })
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub sigmas: Vec<f64>,
    pub ell_max: usize,
    pub n_ops: usize,
    pub seed: u64,
    /// Enumerate every string up to `ell_max` with exact kernel weights
    /// instead of sampling.
    pub exact: bool,
    /// Also report the training objective of this configuration, on the
    /// strings the final epoch used.
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub mmd: Vec<(f64, f64)>,
    pub training_loss: Option<f64>,
    pub model_covariance: Vec<f64>,
    pub data_covariance: Vec<f64>,
}

fn matrix_csv(n: usize, m: &[f64]) -> String {
    let mut out = String::new();
    for i in 0..n {
        let row: Vec<String> = m[i * n..(i + 1) * n].iter().map(|x| format!("{x:.17e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn eval(args: &EvalArgs, log: &mut dyn Write) -> Result<EvalOutput> {
    let (model, file) = load_model(&args.model)?;
    let data = load_dataset(&args.data)?;
    if data.n() != model.variables() {
        return Err(invalid(format!(
            "model has {} variables but the dataset has {} columns",
            model.variables(),
            data.n()
        )));
    }
    let n = data.n();
    let mut mmd = Vec::with_capacity(args.sigmas.len());
    say(log, "sigma,mmd2");
    for &sigma in &args.sigmas {
        let spec = KernelSpec::gaussian(sigma, args.ell_max.min(n), args.n_ops);
        let groups = if args.exact {
            vec![KernelStrings::enumerate(&spec, n)?]
        } else {
            vec![KernelStrings::sample(&spec, n, args.seed)?]
        };
        let v = evaluate_loss(&model, &data, &groups)?.value;
        say(log, format!("{sigma},{v:.17e}"));
        mmd.push((sigma, v));
    }
    let training_loss = match &args.config {
        Some(c) => {
            let mut cfg = RunConfig::load(c)?;
            cfg.model.seed = file.seed;
            let tc = train_config(&cfg, &data, log)?;
            let last = file.epoch.saturating_sub(1);
            let groups = tc.strings_for_epoch(n, last)?;
            let v = evaluate_loss(&model, &data, &groups)?.value;
            say(log, format!("training objective {v:.17e}"));
            Some(v)
        }
        None => None,
    };
    let model_covariance = model_covariance(&model)?;
    let data_covariance = empirical_covariance(&data)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        let mut csv = String::from("sigma,mmd2\n");
        for (s, v) in &mmd {
            csv.push_str(&format!("{s},{v:.17e}\n"));
        }
        fs::write(dir.join("mmd.csv"), csv)?;
        fs::write(dir.join("covariance_model.csv"), matrix_csv(n, &model_covariance))?;
        fs::write(dir.join("covariance_data.csv"), matrix_csv(n, &data_covariance))?;
        say(log, format!("wrote metrics to {}", dir.display()));
    }
    Ok(EvalOutput {
        mmd,
        training_loss,
        model_covariance,
        data_covariance,
    })
}

#[derive(Debug, Clone)]
pub struct ExportArgs {
    pub model: PathBuf,
    pub format: ExportFormat,
    pub out: PathBuf,
    /// Merge all layers into one before export.
    pub compile: bool,
}

pub fn export_cmd(args: &ExportArgs, log: &mut dyn Write) -> Result<String> {
    let (mut model, _) = load_model(&args.model)?;
    if args.compile {
        model = compile_layers(&model)?;
    }
    let text = export(&model, args.format);
    fs::write(&args.out, &text)?;
    say(log, format!("wrote circuit to {}", args.out.display()));
    Ok(text)
}

#[derive(Debug, Clone)]
pub struct OracleCheckArgs {
    pub model: PathBuf,
    pub max_len: usize,
}

/// Largest engine/oracle disagreement over all strings up to `max_len`.
pub fn oracle_deviation(model: &FbmModel, max_len: usize) -> Result<f64> {
    if model.modes() > ORACLE_CHECK_MAX_MODES {
        return Err(Error::Refused(format!(
            "model has {} modes; the oracle check supports at most {ORACLE_CHECK_MAX_MODES}",
            model.modes()
        )));
    }
    let n = model.variables();
    let strings = ZString::all_up_to(n, max_len.min(n));
    let dist = exact_distribution(model)?;
    let values = Engine::with_max_len(model, max_len).batch(&strings)?;
    Ok(strings
        .iter()
        .zip(values)
        .map(|(z, v)| (v - dist.parity_expectation(z)).abs())
        .fold(0.0, f64::max))
}

pub fn oracle_check(args: &OracleCheckArgs, log: &mut dyn Write) -> Result<f64> {
    let (model, _) = load_model(&args.model)?;
    let dev = oracle_deviation(&model, args.max_len)?;
    say(
        log,
        format!(
            "max |engine − oracle| over Z-strings of length ≤ {} on {} modes: {dev:.3e}",
            args.max_len,
            model.modes()
        ),
    );
    if dev >= ORACLE_CHECK_TOLERANCE {
        return Err(Error::Numerical(format!(
            "deviation {dev:.3e} exceeds {ORACLE_CHECK_TOLERANCE:.0e}"
        )));
    }
    Ok(dev)
}

/// Fresh random model written as a checkpoint; handy for `export` and `oracle-check`.
pub fn random_model_file(registers: usize, layers: usize, seed: u64, path: &Path) -> Result<FbmModel> {
    let section = ModelSection {
        registers,
        k: 3,
        m: 1,
        layers,
        seed,
    };
    let model = init_model(&section, seed)?;
    save_model(&model, seed, 0, path)?;
    Ok(model)
}

/// The vacuum model with `α = 0` and identity ansatz.
pub fn vacuum_model(registers: usize, layers: usize) -> Result<FbmModel> {
    FbmModel::new(
        MagicAngles::zeros(registers),
        FloAnsatz::zeros(REGISTER_MODES * registers, layers),
        3,
        1,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dims() {
        assert_eq!(parse_dims("3x4").unwrap(), (3, 4));
        assert_eq!(parse_dims("6×7").unwrap(), (6, 7));
        assert!(parse_dims("3-4").is_err());
        assert!(parse_dims("3x").is_err());
    }

    #[test]
    fn oracle_check_refuses_large_models() {
        let big = vacuum_model(40, 1).unwrap();
        assert!(matches!(oracle_deviation(&big, 2), Err(Error::Refused(_))));
    }
}
