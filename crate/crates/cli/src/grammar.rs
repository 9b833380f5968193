//! The `grammar` command.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use regband::grammar::{build_grammar, BlockProfile, DerivationSampling, Grammar};
use regband::prior::Confidence;
use regband::seed;

use crate::manifest::SeedList;
use crate::{stdout_err, CliError};

#[derive(Debug, Clone, Args)]
pub struct GrammarParams {
    #[arg(long, default_value_t = 4)]
    pub n_stages_max: usize,
    #[arg(long, default_value_t = 1)]
    pub model_scale_max: usize,
    /// Default block counts per stage (JSON with `conv`, `residual`,
    /// `decoder`); the standard profile when absent.
    #[arg(long)]
    pub blocks: Option<PathBuf>,
}

impl GrammarParams {
    pub fn build(&self) -> Result<Grammar, CliError> {
        let blocks = match &self.blocks {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("malformed block profile `{}`: {e}", path.display())))?
            }
            None => BlockProfile::standard(self.n_stages_max),
        };
        Ok(build_grammar(self.n_stages_max, self.model_scale_max, blocks)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SampleMode {
    Uniform,
    Prior,
}

#[derive(Debug, Clone, Subcommand)]
pub enum GrammarCommand {
    /// Print the number of derivations.
    Count(#[command(flatten)] GrammarParams),
    /// Print derivations in lexicographic order of their choices.
    Enumerate {
        #[command(flatten)]
        params: GrammarParams,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Print one sampled derivation per seed.
    Sample {
        #[command(flatten)]
        params: GrammarParams,
        #[arg(long, value_enum, default_value_t = SampleMode::Uniform)]
        mode: SampleMode,
        #[arg(long, default_value = "medium")]
        confidence: Confidence,
        /// A seed, a list `1,2,5` or a half-open range `0..1000`.
        #[arg(long, default_value = "0")]
        seed: SeedList,
    },
}

pub fn cmd_grammar(command: &GrammarCommand, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        GrammarCommand::Count(params) => {
            writeln!(out, "{}", params.build()?.count_derivations()).map_err(stdout_err)?;
        }
        GrammarCommand::Enumerate { params, limit } => {
            let g = params.build()?;
            for d in g.enumerate(limit.unwrap_or(usize::MAX)) {
                writeln!(out, "{d}").map_err(stdout_err)?;
            }
        }
        GrammarCommand::Sample { params, mode, confidence, seed: seeds } => {
            let g = params.build()?;
            let center = g.default_derivation();
            let sampling = match mode {
                SampleMode::Uniform => DerivationSampling::Uniform,
                SampleMode::Prior => DerivationSampling::Prior { center: &center, confidence: *confidence },
            };
            for &s in &seeds.0 {
                let d = g.sample(&sampling, &mut seed::rng(s));
                writeln!(out, "{d}").map_err(stdout_err)?;
            }
        }
    }
    Ok(())
}
