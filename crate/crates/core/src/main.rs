use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qgcn::image::ImageBuffer;
use qgcn::jpeg::{
    build_qmap, compress_simulate, parse_jpeg_metadata, scaled_ijg_tables, Subsampling,
};
use qgcn::metrics::QualityReport;
use qgcn::model::{load_checkpoint, restore_image, Model, ModelConfig};
use qgcn::synth::write_corpus;
use qgcn::tensor::gradcheck;
use qgcn::train::{
    ingest_dataset, resolution_sweep, sweep_eval, train, write_resolution_svg, TrainConfig,
};
use qgcn::{Error, Result};

#[derive(Parser)]
#[command(name = "qgcn", version, about = "JPEG artifact removal conditioned on quantization tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubsampleArg {
    #[value(name = "420")]
    S420,
    #[value(name = "444")]
    S444,
}

impl From<SubsampleArg> for Subsampling {
    fn from(v: SubsampleArg) -> Subsampling {
        match v {
            SubsampleArg::S420 => Subsampling::S420,
            SubsampleArg::S444 => Subsampling::S444,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the quality-scaled quantization tables as JSON.
    Qtable {
        #[arg(long)]
        qf: u8,
    },
    /// Write quantization-map planes as PGM files.
    Qmap {
        #[arg(long)]
        qf: u8,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        /// Single-plane map (luminance table only).
        #[arg(long)]
        gray: bool,
        /// Output prefix; planes land at PREFIX_luma.pgm / PREFIX_chroma.pgm.
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a JPEG file at marker level and print its metadata.
    Inspect { file: PathBuf },
    /// Run the degradation simulator over a lossless image.
    Simulate {
        #[arg(long)]
        qf: u8,
        #[arg(long, value_enum, default_value = "420")]
        subsample: SubsampleArg,
        input: PathBuf,
        output: PathBuf,
    },
    /// Full-reference quality metrics for an image pair.
    Metrics {
        reference: PathBuf,
        test: PathBuf,
        /// Adds IPSNR, treating TEST as restored and this as degraded.
        #[arg(long)]
        degraded: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Train a model per the given config.
    Train(TrainArgs),
    /// Restore an image with a trained model.
    Restore(RestoreArgs),
    /// Quality-factor sweep of a trained model over a test directory.
    Sweep(SweepArgs),
    /// Finite-difference verification of every differentiable op.
    Gradcheck {
        #[arg(long, default_value_t = 0xC0FFEE)]
        seed: u64,
    },
    /// Generate a deterministic synthetic lossless corpus.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value_t = 384)]
        width: usize,
        #[arg(long, default_value_t = 384)]
        height: usize,
        #[arg(long)]
        gray: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    /// Training config, TOML or JSON. Omit for the desk-scale preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of lossless training images.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoints, manifest, and the loss curve.
    #[arg(long)]
    out: PathBuf,
    /// Model config JSON. Omit for the toy preset.
    #[arg(long)]
    model_config: Option<PathBuf>,
    /// Train the grayscale variant.
    #[arg(long)]
    gray: bool,
    /// Resume from an existing checkpoint instead of a fresh init.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluation images that must stay disjoint from training data.
    #[arg(long)]
    testset: Option<PathBuf>,
}

#[derive(Args)]
struct RestoreArgs {
    #[arg(long)]
    model: PathBuf,
    /// Degraded input: a real JPEG (pair with --pixels) or a
    /// simulator-degraded PNG (pair with --qf).
    input: PathBuf,
    output: PathBuf,
    /// Decoded pixels of the JPEG input, PNG/PPM/PGM.
    #[arg(long)]
    pixels: Option<PathBuf>,
    /// Quality factor that produced a simulator-degraded input.
    #[arg(long)]
    qf: Option<u8>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated quality factors, e.g. 10,20,30,40,50.
    #[arg(long, value_delimiter = ',')]
    qfs: Vec<u8>,
    #[arg(long)]
    testset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "420")]
    subsample: SubsampleArg,
    /// Optional per-side downscale denominators for a resolution study.
    #[arg(long, value_delimiter = ',')]
    resolutions: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}

fn load_testset(dir: &PathBuf) -> Result<Vec<(String, ImageBuffer)>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
                Some("png") | Some("ppm") | Some("pgm") | Some("pnm")
            )
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Dataset(format!("no lossless images under {}", dir.display())));
    }
    files
        .into_iter()
        .map(|p| {
            Ok((
                p.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                ImageBuffer::load(&p)?,
            ))
        })
        .collect()
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Qtable { qf } => {
            let (luma, chroma) = scaled_ijg_tables(qf)?;
            let out = serde_json::json!({
                "qf": qf,
                "luma": luma.entries,
                "chroma": chroma.entries,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("tables serialize"));
        }
        Command::Qmap { qf, width, height, gray, out } => {
            let (luma, chroma) = scaled_ijg_tables(qf)?;
            let qmap = build_qmap(width, height, &luma, if gray { None } else { Some(&chroma) })?;
            let names = ["luma", "chroma"];
            for k in 0..qmap.plane_count() {
                let data: Vec<u8> = qmap.plane(k).iter().map(|&v| v as u8).collect();
                let img = ImageBuffer::new(width, height, qgcn::image::ColorSpace::Gray, data)?;
                let path = out.with_file_name(format!(
                    "{}_{}.pgm",
                    out.file_name().unwrap_or_default().to_string_lossy(),
                    names[k]
                ));
                img.save(&path)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Inspect { file } => {
            let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
            let meta = parse_jpeg_metadata(&bytes)?;
            println!("{}", serde_json::to_string_pretty(&meta).expect("metadata serializes"));
        }
        Command::Simulate { qf, subsample, input, output } => {
            let img = ImageBuffer::load(&input)?;
            let (degraded, _, _) = compress_simulate(&img, qf, subsample.into())?;
            degraded.save(&output)?;
            println!("wrote {}", output.display());
        }
        Command::Metrics { reference, test, degraded, format } => {
            let r = ImageBuffer::load(&reference)?;
            let t = ImageBuffer::load(&test)?;
            let report = match degraded {
                Some(d) => QualityReport::compute_with_degraded(&r, &ImageBuffer::load(&d)?, &t)?,
                None => QualityReport::compute(&r, &t)?,
            };
            match format {
                Format::Json => {
                    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"))
                }
                Format::Csv => {
                    println!("{}", QualityReport::csv_header());
                    println!("{}", report.csv_row(&test.display().to_string(), None));
                }
            }
        }
        Command::Train(args) => run_train(args)?,
        Command::Restore(args) => run_restore(args)?,
        Command::Sweep(args) => run_sweep(args)?,
        Command::Gradcheck { seed } => {
            let reports = gradcheck::run_op_suite(seed)?;
            let mut all_ok = true;
            for r in &reports {
                println!("{}", r);
                all_ok &= r.passed;
            }
            if !all_ok {
                return Err(Error::invalid("gradcheck", "finite-difference suite failed"));
            }
        }
        Command::SynthData { out, count, width, height, gray, seed } => {
            let paths = write_corpus(&out, count, width, height, !gray, seed)?;
            println!("wrote {} images under {}", paths.len(), out.display());
        }
    }
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => TrainConfig::from_file(path)?,
        None => TrainConfig::toy(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }

    let mut model = match (&args.resume, &args.model_config) {
        (Some(ckpt), _) => load_checkpoint(ckpt)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mc: ModelConfig =
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
            Model::init(mc, config.seed)?
        }
        (None, None) => Model::init(ModelConfig::toy(!args.gray), config.seed)?,
    };
    if model.config.is_color() == args.gray {
        return Err(Error::Config(
            "--gray flag conflicts with the model config's channel mode".into(),
        ));
    }

    let store = ingest_dataset(
        &args.data,
        config.crop_size,
        config.crop_stride,
        model.config.is_color(),
        config.validation_fraction,
    )?;
    let eval_paths = match &args.testset {
        Some(dir) => std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect(),
        None => Vec::new(),
    };

    let report = train(&config, &mut model, &store, Some(&args.out), &eval_paths)?;
    println!(
        "trained: stage1 loss {:.5} -> {:.5}, final {:.5}; artifacts in {}",
        report.stage1_initial_loss,
        report.stage1_final_loss,
        report.final_loss,
        args.out.display()
    );
    Ok(())
}

fn run_restore(args: RestoreArgs) -> Result<()> {
    let model = load_checkpoint(&args.model)?;
    let is_jpeg = matches!(
        args.input.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("jpg") | Some("jpeg")
    );

    let (pixels, luma, chroma) = if is_jpeg {
        let pixels_path = args.pixels.as_ref().ok_or_else(|| {
            Error::invalid("restore", "a JPEG input needs --pixels with its decoded image")
        })?;
        let bytes = std::fs::read(&args.input).map_err(|e| Error::io(&args.input, e))?;
        let meta = parse_jpeg_metadata(&bytes)?;
        let pixels = ImageBuffer::load(pixels_path)?;
        if pixels.width() != meta.width || pixels.height() != meta.height {
            return Err(Error::invalid(
                "restore",
                format!(
                    "decoded pixels are {}x{}, JPEG header says {}x{}",
                    pixels.width(),
                    pixels.height(),
                    meta.width,
                    meta.height
                ),
            ));
        }
        let luma = meta
            .table_for_component(0)
            .ok_or_else(|| Error::JpegParse("no luminance table".into()))?
            .clone();
        let chroma = if pixels.is_gray() {
            None
        } else {
            Some(
                meta.table_for_component(1)
                    .ok_or_else(|| Error::JpegParse("no chrominance table".into()))?
                    .clone(),
            )
        };
        (pixels, luma, chroma)
    } else {
        let qf = args
            .qf
            .ok_or_else(|| Error::invalid("restore", "a lossless degraded input needs --qf"))?;
        let pixels = ImageBuffer::load(&args.input)?;
        let (luma, chroma) = scaled_ijg_tables(qf)?;
        let chroma = if pixels.is_gray() { None } else { Some(chroma) };
        (pixels, luma, chroma)
    };

    let restored = restore_image(&model, &pixels, &luma, chroma.as_ref())?;
    restored.save(&args.output)?;
    println!("wrote {}", args.output.display());
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    if args.qfs.is_empty() {
        return Err(Error::invalid("sweep", "--qfs must list at least one quality factor"));
    }
    let model = load_checkpoint(&args.model)?;
    let mut testset = load_testset(&args.testset)?;
    if !model.config.is_color() {
        // grayscale model over color sources: evaluate on luminance
        testset = testset
            .into_iter()
            .map(|(name, img)| {
                let luma = qgcn::image::luminance_f64(&img);
                Ok((
                    name,
                    ImageBuffer::from_planes_f64(
                        img.width(),
                        img.height(),
                        qgcn::image::ColorSpace::Gray,
                        &[luma],
                    )?,
                ))
            })
            .collect::<Result<_>>()?;
    }
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;

    let result = sweep_eval(&model, &testset, &args.qfs, args.subsample.into())?;
    result.write_csv(args.out.join("sweep.csv"))?;
    result.write_svg(args.out.join("sweep.svg"), "model")?;
    for (qf, _, _, _, ipsnr) in &result.qf_means {
        println!("qf {:>3}: mean IPSNR {:+.4} dB", qf, ipsnr);
    }

    if !args.resolutions.is_empty() {
        let res =
            resolution_sweep(&model, &testset, &args.qfs, &args.resolutions, args.subsample.into())?;
        for (d, r) in &res {
            r.write_csv(args.out.join(format!("sweep_res{}.csv", d)))?;
        }
        write_resolution_svg(&res, args.out.join("sweep_resolution.svg"))?;
    }
    println!("sweep artifacts in {}", args.out.display());
    Ok(())
}
