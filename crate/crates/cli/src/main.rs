use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use sne_core::codec::{baseline_decode, encode_image, EncodeMode, QuantTable, QuantizedRepresentation};
use sne_core::corpus::desk_corpus;
use sne_core::estimator::{decode_image, load_checkpoint, save_checkpoint, SkipMode};
use sne_core::eval::{ksweep, read_pnm, write_pnm, MetricReport};
use sne_core::image::ImageBuffer;
use sne_core::trainer::{render_log, train, EpochLog, RunConfig};

#[derive(Parser)]
#[command(name = "sne", version, about = "Block-DCT coding with learned recurrent decoding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantize a PGM/PPM image into an SNEQ1 file.
    Encode {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Scales the quantization table; smaller is coarser. In (0, 1].
        #[arg(long, default_value_t = 1.0)]
        quality: f64,
        #[arg(long, default_value_t = 8)]
        block_edge: usize,
        #[arg(long, default_value = "aligned")]
        mode: EncodeMode,
    },
    /// Reconstruct by plain dequantization and inverse DCT.
    DecodeBaseline {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train a model from a key = value run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the worker thread count in the config.
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "model.snec")]
        checkpoint: PathBuf,
        #[arg(long, default_value = "train_log.csv")]
        log: PathBuf,
        /// Print each epoch's log row to stderr.
        #[arg(long)]
        verbose: bool,
    },
    /// Reconstruct with the trained source estimator.
    Decode {
        input: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(short = 'k', long, default_value_t = 2)]
        k: usize,
        /// Skip mode; defaults to the one stored in the checkpoint.
        #[arg(long)]
        skip: Option<SkipMode>,
    },
    /// Compare two images and print key=value metrics.
    Eval {
        reference: PathBuf,
        test: PathBuf,
        /// SNEQ1 file whose bpp estimate is reported alongside.
        #[arg(long)]
        rep: Option<PathBuf>,
    },
    /// PSNR as a function of refinement steps, from one checkpoint.
    SweepK {
        input: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short = 'k', long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
        k: Vec<usize>,
    },
    /// Write the built-in synthetic desk corpus as PGM files.
    DeskCorpus {
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_pnm(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn write_image(path: &Path, img: &ImageBuffer) -> Result<()> {
    fs::write(path, write_pnm(img)?).with_context(|| format!("writing {}", path.display()))
}

fn read_rep(path: &Path) -> Result<QuantizedRepresentation> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    QuantizedRepresentation::from_bytes(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn read_params(path: &Path) -> Result<sne_core::SneParams> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    load_checkpoint(&bytes).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Encode { input, output, quality, block_edge, mode } => {
            let img = read_image(&input)?;
            let rep = encode_image(&img, &QuantTable::standard(block_edge, quality)?, mode)?;
            fs::write(&output, rep.to_bytes()).with_context(|| format!("writing {}", output.display()))?;
            println!("bpp={}", rep.bpp_estimate());
        }
        Command::DecodeBaseline { input, output } => {
            write_image(&output, &baseline_decode(&read_rep(&input)?)?)?;
        }
        Command::Train { config, seed, threads, checkpoint, log, verbose } => {
            let mut cfg = RunConfig::from_file(&config).with_context(|| format!("loading {}", config.display()))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(threads) = threads {
                cfg.threads = threads;
            }
            let (train_set, val_set) = cfg.load_images()?;
            let out = train(&cfg, &train_set, &val_set, |row: &EpochLog| {
                if verbose {
                    eprintln!("{}", row.csv_row());
                }
            })?;
            fs::write(&checkpoint, save_checkpoint(&out.params))
                .with_context(|| format!("writing {}", checkpoint.display()))?;
            fs::write(&log, render_log(&out.log)).with_context(|| format!("writing {}", log.display()))?;
            if let Some(last) = out.log.last() {
                println!("epochs={}", out.log.len());
                println!("train_loss={}", last.train_loss);
                println!("val_psnr={}", last.val_psnr);
            }
        }
        Command::Decode { input, checkpoint, output, k, skip } => {
            let params = read_params(&checkpoint)?;
            let skip = skip.unwrap_or(params.config.skip);
            write_image(&output, &decode_image(&read_rep(&input)?, &params, k, skip)?)?;
        }
        Command::Eval { reference, test, rep } => {
            let bpp = match rep {
                Some(p) => Some(read_rep(&p)?.bpp_estimate()),
                None => None,
            };
            print!("{}", MetricReport::compute(&read_image(&reference)?, &read_image(&test)?, bpp)?);
        }
        Command::SweepK { input, reference, checkpoint, k } => {
            let params = read_params(&checkpoint)?;
            print!("{}", ksweep(&read_rep(&input)?, &read_image(&reference)?, &params, &k)?);
        }
        Command::DeskCorpus { out } => {
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (i, img) in desk_corpus().iter().enumerate() {
                write_image(&out.join(format!("desk_{i:02}.pgm")), img)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn rejects_missing_subcommand_flags() {
        assert!(Cli::try_parse_from(["sne", "decode", "a.sneq"]).is_err());
        assert!(Cli::try_parse_from(["sne", "encode", "a.pgm", "-o", "b", "--mode", "diagonal"]).is_err());
        let ok = Cli::try_parse_from(["sne", "sweep-k", "a", "--reference", "b", "--checkpoint", "c", "-k", "1,3"]);
        match ok.unwrap().command {
            Command::SweepK { k, .. } => assert_eq!(k, vec![1, 3]),
            _ => unreachable!(),
        }
    }
}
