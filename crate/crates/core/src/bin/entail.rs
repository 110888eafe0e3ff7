use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use entail::evec::read_evec;
use entail::manifest::load_manifest;
use entail::pipeline::{
    evaluate_pipeline, predict_pipeline, read_predictions, train_pipeline, write_predictions,
    EmbeddingPaths, ModelPair, PipelineConfig, PipelineError,
};
use entail::synth::{generate, SynthSpec};

#[derive(Debug, Parser)]
#[command(
    name = "entail",
    version,
    about = "Multi-modal entailment classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct EmbeddingArgs {
    #[arg(long, value_name = "F")]
    text_claims: PathBuf,
    #[arg(long, value_name = "F")]
    text_docs: PathBuf,
    #[arg(long, value_name = "F")]
    image_claims: PathBuf,
    #[arg(long, value_name = "F")]
    image_docs: PathBuf,
}

impl From<EmbeddingArgs> for EmbeddingPaths {
    fn from(a: EmbeddingArgs) -> Self {
        EmbeddingPaths {
            text_claims: a.text_claims,
            text_docs: a.text_docs,
            image_claims: a.image_claims,
            image_docs: a.image_docs,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the text and image entailment classifiers.
    Train {
        #[arg(long, value_name = "M")]
        manifest: PathBuf,
        #[command(flatten)]
        embeddings: EmbeddingArgs,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, value_name = "C")]
        config: Option<PathBuf>,
    },
    /// Predict and consolidate task labels.
    Predict {
        #[arg(long, value_name = "M")]
        manifest: PathBuf,
        #[arg(long, value_name = "DIR")]
        models: PathBuf,
        /// prose-a, table-a, b, or a custom heuristic from --config.
        #[arg(long)]
        heuristic: Option<String>,
        #[command(flatten)]
        embeddings: EmbeddingArgs,
        #[arg(long, value_name = "P.jsonl")]
        out: PathBuf,
        #[arg(long, value_name = "C")]
        config: Option<PathBuf>,
    },
    /// Score predictions against gold categories.
    Evaluate {
        #[arg(long, value_name = "P.jsonl")]
        predictions: PathBuf,
        #[arg(long, value_name = "M")]
        manifest: PathBuf,
        #[arg(long, value_name = "R.json")]
        report: PathBuf,
        #[arg(long, value_name = "C.csv")]
        confusion: Option<PathBuf>,
    },
    /// Print the header and first ids of an EVEC file.
    InspectEvec { file: PathBuf },
    /// Write a synthetic manifest and embedding stores.
    Synth {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        records: usize,
        #[arg(long, default_value_t = 0)]
        structure_seed: u64,
        #[arg(long, default_value_t = 1)]
        sample_seed: u64,
        #[arg(long, default_value = "syn")]
        id_prefix: String,
    },
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, PipelineError> {
    let config = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    config.with_env_seed()
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), PipelineError> {
    fs::write(path, contents).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Train {
            manifest,
            embeddings,
            out,
            config,
        } => {
            let config = load_config(config.as_deref())?;
            let manifest = load_manifest(&manifest)?;
            let summary = train_pipeline(&manifest, &embeddings.into(), &config, &out)?;
            eprintln!(
                "trained on {} records: text accuracy {:.4}, image accuracy {:.4}",
                summary.records, summary.text_train_accuracy, summary.image_train_accuracy
            );
        }
        Command::Predict {
            manifest,
            models,
            heuristic,
            embeddings,
            out,
            config,
        } => {
            let config = load_config(config.as_deref())?;
            let registry = config.heuristics()?;
            let heuristic = registry.get(heuristic.as_deref().unwrap_or(&config.heuristic))?;
            let manifest = load_manifest(&manifest)?;
            let models = ModelPair::load(&models)?;
            let preds =
                predict_pipeline(&manifest, &embeddings.into(), &models, heuristic.as_ref())?;
            let invalid = preds.iter().filter(|p| !p.pair_valid).count();
            write_predictions(&preds, &out)?;
            eprintln!(
                "{} predictions ({invalid} rewritten by {})",
                preds.len(),
                heuristic.name()
            );
        }
        Command::Evaluate {
            predictions,
            manifest,
            report,
            confusion,
        } => {
            let preds = read_predictions(&predictions)?;
            let manifest = load_manifest(&manifest)?;
            let (summary, cm) = evaluate_pipeline(&preds, &manifest)?;
            let json = serde_json::to_string_pretty(&summary).expect("report serializes");
            write(&report, json + "\n")?;
            if let Some(path) = confusion {
                write(&path, cm.to_csv())?;
            }
            println!("weighted_f1 {:.6}", summary.weighted_f1);
        }
        Command::InspectEvec { file } => {
            let store = read_evec(&file).map_err(|source| PipelineError::Evec {
                path: file.clone(),
                source,
            })?;
            println!("dim {}", store.dim());
            println!("count {}", store.len());
            for id in store.ids().take(5) {
                println!("id {id}");
            }
        }
        Command::Synth {
            out,
            records,
            structure_seed,
            sample_seed,
            id_prefix,
        } => {
            let spec = SynthSpec {
                records,
                structure_seed,
                sample_seed,
                id_prefix,
                ..Default::default()
            };
            let evec_err = |source| PipelineError::Evec {
                path: out.clone(),
                source,
            };
            generate(&spec)
                .and_then(|d| d.write_to(&out))
                .map_err(evec_err)?;
            eprintln!("wrote {records} synthetic records to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
