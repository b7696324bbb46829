use std::fs;
use std::path::{Path, PathBuf};

use dean_core::data::{load_idx, make_blobs, write_combined_results, write_events, write_results, CurveGroup, Dataset};
use dean_core::harness::{run_experiment, ExperimentConfig, RunResult};
use dean_core::strategies::StrategyId;
use dean_core::verify::{run_all, VerifyOptions};

use crate::config::{DataSource, Settings};
use crate::error::CliError;

/// Image/label file pairs tried in order inside the MNIST directory.
pub const MNIST_FILES: [(&str, &str); 4] = [
    ("train-images-idx3-ubyte.gz", "train-labels-idx1-ubyte.gz"),
    ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    ("mnist-10k-images-idx3-ubyte.gz", "mnist-10k-labels-idx1-ubyte.gz"),
    ("mnist-10k-images-idx3-ubyte", "mnist-10k-labels-idx1-ubyte"),
];

/// Seed of the synthetic blobs; fixed so every repetition sees the same
/// data and only the splits vary.
pub const BLOBS_SEED: u64 = 0x0b10_b5;

pub fn load_dataset(source: &DataSource) -> Result<Dataset, CliError> {
    match source {
        DataSource::Blobs {
            classes,
            per_class,
            dim,
            separation,
        } => Ok(make_blobs(*classes, *per_class, *dim, *separation, BLOBS_SEED)?),
        DataSource::Mnist { dir } => {
            for (images, labels) in MNIST_FILES {
                let (i, l) = (dir.join(images), dir.join(labels));
                if i.exists() && l.exists() {
                    return Ok(load_idx(&i, &l)?);
                }
            }
            Err(CliError::Usage(format!(
                "no MNIST files found in {} (expected e.g. {} and {}); set DEAN_DATA_DIR or run scripts/fetch_mnist.sh",
                dir.display(),
                MNIST_FILES[0].0,
                MNIST_FILES[0].1
            )))
        }
    }
}

/// `runs/<timestamp>` unless a directory was given.
pub fn output_dir(requested: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = match requested {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from("runs").join(chrono::Local::now().format("%Y%m%d-%H%M%S").to_string()),
    };
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
    Ok(dir)
}

fn write_config(config: &ExperimentConfig, path: &Path) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(config).map_err(dean_core::Error::from)?;
    fs::write(path, json + "\n").map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn summary_line(result: &RunResult) -> String {
    let last = result.final_point();
    format!(
        "{} denoise={} epsilon={}: final accuracy {:.2}% ± {:.2} over {} repetition(s) at {} labels, sigma {:.4}",
        result.strategy,
        result.denoise,
        result.epsilon,
        100.0 * last.accuracy_mean,
        100.0 * last.accuracy_std,
        result.repetitions.len(),
        last.acquired,
        last.sigma_mean
    )
}

/// Runs one experiment and writes `results.csv`, `events.jsonl` and
/// `config.json` into `out`.
pub fn cmd_run(settings: &Settings, out: &Path) -> Result<RunResult, CliError> {
    let data = load_dataset(&settings.source)?;
    let config = &settings.experiment;
    let result = run_experiment(config, &data)?;
    write_results(&result, &out.join("results.csv"))?;
    write_events(&result.events(), &out.join("events.jsonl"))?;
    write_config(config, &out.join("config.json"))?;
    println!("{}", summary_line(&result));
    println!("results written to {}", out.display());
    Ok(result)
}

/// One cell of the ablation grid.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub variant: &'static str,
    pub epochs: usize,
    pub result: RunResult,
}

/// Epochs of the "uncertain" variant.
pub const UNCERTAIN_EPOCHS: usize = 20;

/// Every strategy with and without denoising, for the configured epochs
/// ("regular") and for [`UNCERTAIN_EPOCHS`] ("uncertain"). Writes
/// `ablation.csv`, `events.jsonl` and `config.json`.
pub fn cmd_ablate(settings: &Settings, strategies: &[StrategyId], out: &Path) -> Result<Vec<AblationCell>, CliError> {
    let data = load_dataset(&settings.source)?;
    let base = &settings.experiment;
    let mut cells = Vec::new();
    let mut events = Vec::new();
    for (variant, epochs) in [("regular", base.model.epochs), ("uncertain", UNCERTAIN_EPOCHS)] {
        for &strategy in strategies {
            for denoise in [false, true] {
                let mut config = base.clone();
                config.strategy = strategy;
                config.denoise = denoise;
                config.model.epochs = epochs;
                let result = run_experiment(&config, &data)?;
                println!(
                    "[{variant}, {epochs} epochs] {} | seed set {}",
                    summary_line(&result),
                    result
                        .repetitions
                        .iter()
                        .map(|r| format!("{:016x}", r.seed_set_hash))
                        .collect::<Vec<_>>()
                        .join(",")
                );
                events.extend(result.events());
                cells.push(AblationCell {
                    variant,
                    epochs,
                    result,
                });
            }
        }
    }
    let groups: Vec<CurveGroup<'_>> = cells
        .iter()
        .map(|c| CurveGroup {
            variant: c.variant,
            epochs: c.epochs,
            result: &c.result,
        })
        .collect();
    write_combined_results(&groups, &out.join("ablation.csv"))?;
    write_events(&events, &out.join("events.jsonl"))?;
    write_config(base, &out.join("config.json"))?;
    println!("results written to {}", out.display());
    Ok(cells)
}

/// Prints one line per check; fails when any check fails.
pub fn cmd_verify(opts: &VerifyOptions) -> Result<(), CliError> {
    let checks = run_all(opts)?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    for check in &checks {
        println!("{check}");
    }
    if failed > 0 {
        eprintln!("failed checks:");
        for check in checks.iter().filter(|c| !c.passed) {
            eprintln!(
                "  {}: observed {:.6}, expected bound {:.6}",
                check.name, check.observed, check.expected
            );
        }
        return Err(CliError::Verification(failed));
    }
    println!("all {} checks passed", checks.len());
    Ok(())
}
