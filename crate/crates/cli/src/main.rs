use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use specdiff::experiments::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use specdiff::experiments::pgm::{export_samples_pgm, load_pgm_dir, read_pgm};
use specdiff::experiments::train::{log_csv, Trainer};
use specdiff::experiments::{evaluate_spectra, gen_checkerboard, CheckerboardConfig, TrainConfig};
use specdiff::transforms::radial::{mean_radial_profile, radial_power_spectrum};
use specdiff::transforms::{dwt, filter_bank, WaveletKind};
use specdiff::{diffusion, selfcheck, Error, SamplerKind, SamplerSpec, SignalGrid};

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_DIVERGED: u8 = 4;
const EXIT_CHECKPOINT: u8 = 5;

#[derive(Parser)]
#[command(name = "specdiff", version, about = "Spectrally regularized diffusion on toy images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a checkerboard dataset as PGM files plus `manifest.txt`.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 512, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(2..))]
        size: u64,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
        tile: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a denoiser from a `key = value` config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `out_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw samples from a checkpoint.
    Sample {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value = "ddim")]
        sampler: SamplerKind,
        #[arg(long, default_value_t = 50)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean radial power spectrum of a PGM file or directory.
    Spectrum {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare generated and reference image sets.
    Eval {
        #[arg(long)]
        gen: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Directory receiving `spectra.csv` and `summary.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the numerical self-checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Apply a single transform to one PGM image.
    Transform {
        #[arg(long, value_enum)]
        op: TransformOp,
        #[arg(long, default_value = "haar")]
        wavelet: WaveletKind,
        #[arg(long, default_value_t = 1)]
        levels: usize,
        #[arg(long = "in")]
        input: PathBuf,
        /// A CSV file for `fft`, a directory for `dwt`.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TransformOp {
    Fft,
    Dwt,
}

/// Error plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Shape { .. }
            | Error::Config(_)
            | Error::Usage(_)
            | Error::Validation(_)
            | Error::SingularSchedule { .. } => EXIT_USAGE,
            Error::NonFiniteGradient(_) | Error::Diverged { .. } => EXIT_DIVERGED,
            Error::Checkpoint(_) => EXIT_CHECKPOINT,
            Error::Image { .. } | Error::Io(_) => EXIT_IO,
        };
        Failure::new(code, e.to_string())
    }
}

fn io_context(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::new(EXIT_IO, format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents).map_err(io_context(path))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(io_context(path))
}

fn gen_data(out: &Path, n: u64, size: u64, tile: u64, seed: u64) -> Result<(), Failure> {
    let cfg = CheckerboardConfig {
        count: n as usize,
        size: size as usize,
        tile: tile as usize,
        seed,
    };
    let data = gen_checkerboard(&cfg)?;
    create_dir(out)?;
    export_samples_pgm(&data, &out.join("img_"))?;
    write_file(&out.join("manifest.txt"), cfg.echo())
}

/// Resolves the `data` key against the config file's directory.
fn dataset_path(cfg: &TrainConfig, config_path: &Path) -> Result<PathBuf, Failure> {
    let Some(data) = &cfg.data else {
        return Err(Failure::new(EXIT_USAGE, "config key `data` is not set"));
    };
    let path = if data.is_relative() {
        config_path.parent().unwrap_or(Path::new(".")).join(data)
    } else {
        data.clone()
    };
    if !path.is_dir() {
        return Err(Failure::new(
            EXIT_USAGE,
            format!("config key `data` names {}, which is not a directory", path.display()),
        ));
    }
    Ok(path)
}

fn train(config_path: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let text = fs::read_to_string(config_path).map_err(io_context(config_path))?;
    let cfg = TrainConfig::parse(&text)?;
    let out = match (out, &cfg.out_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => o.clone(),
        (None, None) => return Err(Failure::new(EXIT_USAGE, "no output directory: pass --out or set `out_dir`")),
    };
    let data = load_pgm_dir(&dataset_path(&cfg, config_path)?)?;
    create_dir(&out)?;

    let mut trainer = Trainer::new(&cfg, data)?;
    write_file(&out.join("config.txt"), trainer.config.echo())?;
    let snapshot_cfg = trainer.config.clone();
    let result = trainer.run(|step, net| {
        let path = out.join(format!("checkpoint_{step:06}.spdm"));
        save_checkpoint(&Checkpoint::from_net(&snapshot_cfg, net), &path)
    });
    // The log is written even when training stops early so the failing step
    // can be inspected.
    write_file(&out.join("metrics.csv"), log_csv(&trainer.log))?;
    result?;

    let ckpt_path = out.join("checkpoint.spdm");
    save_checkpoint(&Checkpoint::from_net(&trainer.config, &trainer.net), &ckpt_path)?;
    let last = trainer.log.last().expect("at least one training step");
    println!(
        "steps={} loss_denoise={:.12e} loss_spectral={:.12e} loss_total={:.12e} checkpoint={}",
        trainer.steps_done(),
        last.loss.denoise,
        last.loss.spectral,
        last.loss.total,
        ckpt_path.display()
    );
    Ok(())
}

fn sample(ckpt: &Path, n: u64, kind: SamplerKind, steps: usize, seed: u64, out: &Path) -> Result<(), Failure> {
    let loaded = load_checkpoint(ckpt)
        .map_err(|e| Failure::new(EXIT_CHECKPOINT, format!("cannot load {}: {e}", ckpt.display())))?;
    let (cfg, net) = loaded
        .restore()
        .map_err(|e| Failure::new(EXIT_CHECKPOINT, format!("cannot restore {}: {e}", ckpt.display())))?;
    let spec = SamplerSpec { kind, steps, seed };
    let samples = diffusion::sample(&net, &cfg.schedule()?, &spec, n as usize)?;
    create_dir(out)?;
    export_samples_pgm(&samples, &out.join("sample_"))?;
    Ok(())
}

/// A single PGM file or every PGM of a directory.
fn load_images(path: &Path) -> Result<SignalGrid, Failure> {
    if path.is_dir() {
        return Ok(load_pgm_dir(path)?);
    }
    let (h, w, px) = read_pgm(path)?;
    Ok(SignalGrid::from_vec(vec![1, h, w], px)?)
}

fn spectrum(input: &Path, out: &Path) -> Result<(), Failure> {
    let images = load_images(input)?;
    let profile = mean_radial_profile(&images, None)?;
    write_file(out, profile.to_csv())
}

fn eval(gen: &Path, reference: &Path, out: &Path) -> Result<(), Failure> {
    let g = load_images(gen)?;
    let r = load_images(reference)?;
    let m = evaluate_spectra(&g, &r, None)?;
    create_dir(out)?;
    write_file(&out.join("spectra.csv"), m.spectra_csv())?;
    write_file(&out.join("summary.csv"), m.summary_csv())?;
    println!("{}", m.summary_line());
    Ok(())
}

fn verify(seed: u64) -> Result<(), Failure> {
    let results = selfcheck::run_all(seed)?;
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Failure::new(EXIT_VERIFY, format!("{failed} of {} checks failed", results.len())));
    }
    Ok(())
}

fn band_csv(shape: &[usize], coeffs: &[f64]) -> String {
    let width = *shape.last().expect("bands have at least one axis");
    let mut out = String::new();
    for row in coeffs.chunks(width) {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:.12e}")).collect();
        writeln!(out, "{}", cells.join(",")).expect("writing to a String");
    }
    out
}

fn transform(op: TransformOp, wavelet: WaveletKind, levels: usize, input: &Path, out: &Path) -> Result<(), Failure> {
    let (h, w, px) = read_pgm(input)?;
    match op {
        TransformOp::Fft => write_file(out, radial_power_spectrum(&px, h, w, None)?.to_csv()),
        TransformOp::Dwt => {
            let p = dwt(&px, &[h, w], &filter_bank(wavelet)?, levels)?;
            create_dir(out)?;
            let a = &p.approx;
            write_file(&out.join(format!("L{}_A.csv", a.level)), band_csv(&a.shape, &a.coeffs))?;
            for b in p.details.iter().flatten() {
                let name = format!("L{}_{}.csv", b.level, b.orientation.name());
                write_file(&out.join(name), band_csv(&b.shape, &b.coeffs))?;
            }
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::GenData { out, n, size, tile, seed } => gen_data(&out, n, size, tile, seed),
        Command::Train { config, out } => train(&config, out.as_deref()),
        Command::Sample {
            ckpt,
            n,
            sampler,
            steps,
            seed,
            out,
        } => sample(&ckpt, n, sampler, steps, seed, &out),
        Command::Spectrum { input, out } => spectrum(&input, &out),
        Command::Eval { gen, reference, out } => eval(&gen, &reference, &out),
        Command::Verify { seed } => verify(seed),
        Command::Transform {
            op,
            wavelet,
            levels,
            input,
            out,
        } => transform(op, wavelet, levels, &input, &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
