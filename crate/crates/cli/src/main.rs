//! `retarget`: content-aware resizing of images and frame sequences.

mod options;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use retarget_core::metrics::{ars, DEFAULT_CELL_SIZE};
use retarget_core::raster::write_pgm16;
use retarget_core::seam::retarget_seam;
use retarget_core::segment::segment;
use retarget_core::warp::{retarget_video, retarget_warp};
use retarget_core::{FieldChain, ImportanceMap, RasterImage};

use options::*;

#[derive(Debug, Parser)]
#[command(name = "retarget", version, about = "Content-aware image and video retargeting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Resize one image.
    Retarget(JobArgs),
    /// Resize one image to a size at least as large as the source.
    Enlarge(JobArgs),
    /// Warp a directory of frames; outputs keep the frame names.
    Video(VideoArgs),
    /// Write the importance map an energy source produces for an image.
    Energy(EnergyCmd),
    /// Write the segmentation labels as a 16-bit PGM.
    Segment(SegmentCmd),
    /// Score a deformation file by aspect-ratio similarity.
    Ars(ArsCmd),
    /// Resize every image in a directory.
    Batch(BatchArgs),
}

#[derive(Debug, Clone, Args)]
struct JobSettings {
    #[command(flatten)]
    target: TargetArgs,
    /// Resizing operator.
    #[arg(long, value_enum, default_value = "seam")]
    op: Operator,
    #[command(flatten)]
    energy: EnergyArgs,
    /// Also write the deformation next to the output (`.field` extension).
    #[arg(long)]
    emit_deformation: bool,
    #[command(flatten)]
    warp: WarpArgs,
}

#[derive(Debug, Args)]
struct JobArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    settings: JobSettings,
}

#[derive(Debug, Args)]
struct VideoArgs {
    /// Directory of numbered frames, processed in name order.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    energy: EnergyArgs,
    #[arg(long)]
    emit_deformation: bool,
    #[command(flatten)]
    warp: WarpArgs,
}

#[derive(Debug, Args)]
struct EnergyCmd {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    energy: EnergyArgs,
}

#[derive(Debug, Args)]
struct SegmentCmd {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    segment: SegmentArgs,
}

#[derive(Debug, Args)]
struct ArsCmd {
    /// The source image the deformation starts from.
    #[arg(long)]
    original: PathBuf,
    /// Deformation file written with `--emit-deformation`.
    #[arg(long)]
    field: PathBuf,
    /// Importance map weighting the cells; gradient energy of the original
    /// when omitted.
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_CELL_SIZE)]
    cell: usize,
    /// Write per-cell values as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BatchArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Concurrent jobs; defaults to the number of processors.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    settings: JobSettings,
}

fn run_job(input: &Path, out: &Path, s: &JobSettings, enlarge: bool) -> CliResult<()> {
    let img = RasterImage::load(input)?;
    let target = resolve_target(s.target.width, s.target.height, img.dims())?;
    if enlarge && (target.width < img.width() || target.height < img.height()) {
        return Err(Failure::usage(format!(
            "enlarge target {}x{} is smaller than the {}x{} source",
            target.width,
            target.height,
            img.width(),
            img.height()
        )));
    }
    let provider = s.energy.energy.provider(img.dims())?;
    let (result, field) = match s.op {
        Operator::Seam => retarget_seam(&img, &provider, target)?,
        Operator::Warp => {
            retarget_warp(&img, &provider, target, &s.warp.config(false)?, &s.warp.options()?)?
        }
    };
    result.save(out)?;
    if s.emit_deformation {
        field.save(field_path(out))?;
    }
    Ok(())
}

fn run_video(a: &VideoArgs) -> CliResult<()> {
    let files = list_images(&a.input)?;
    if files.is_empty() {
        return Err(Failure::usage(format!("no frames in {}", a.input.display())));
    }
    let frames = files.iter().map(RasterImage::load).collect::<Result<Vec<_>, _>>()?;
    let dims = frames[0].dims();
    let target = resolve_target(a.target.width, a.target.height, dims)?;
    let provider = a.energy.energy.provider(dims)?;
    let warped = retarget_video(&frames, &provider, target, &a.warp.config(true)?, &a.warp.options()?)?;
    std::fs::create_dir_all(&a.out).map_err(retarget_core::Error::from)?;
    for (file, frame) in files.iter().zip(warped) {
        let out = a.out.join(file.file_name().expect("listed files have names"));
        frame.image.save(&out)?;
        if a.emit_deformation {
            frame.field.save(field_path(&out))?;
        }
    }
    Ok(())
}

fn run_energy(a: &EnergyCmd) -> CliResult<()> {
    let img = RasterImage::load(&a.input)?;
    let map = a.energy.energy.provider(img.dims())?.evaluate(&img)?;
    map.save(&a.out)?;
    Ok(())
}

fn run_segment(a: &SegmentCmd) -> CliResult<()> {
    let img = RasterImage::load(&a.input)?;
    let labels = segment(&img, &a.segment.params()?)?;
    write_pgm16(&a.out, labels.width, labels.height, &labels.ids)?;
    println!("{}", labels.count());
    Ok(())
}

fn run_ars(a: &ArsCmd) -> CliResult<()> {
    if a.cell == 0 {
        return Err(Failure::usage("--cell must be positive"));
    }
    let original = RasterImage::load(&a.original)?;
    let field = FieldChain::load(&a.field)?;
    let map = match &a.map {
        Some(path) => ImportanceMap::load(path, original.dims())?,
        None => retarget_core::energy::gradient_energy(&original),
    };
    let report = ars(&field, &map, a.cell)?;
    if let Some(csv) = &a.csv {
        std::fs::write(csv, report.to_csv()).map_err(retarget_core::Error::from)?;
    }
    println!("{:.6}", report.score);
    Ok(())
}

fn run_batch(a: &BatchArgs) -> CliResult<()> {
    let files = list_images(&a.input)?;
    if files.is_empty() {
        return Err(Failure::usage(format!("no images in {}", a.input.display())));
    }
    std::fs::create_dir_all(&a.out).map_err(retarget_core::Error::from)?;
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, files.len());
    let next = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(file) = files.get(i) else { break };
                let out = a.out.join(file.file_name().expect("listed files have names"));
                if let Err(f) = run_job(file, &out, &a.settings, false) {
                    failures.lock().unwrap().push((file.clone(), f));
                }
            });
        }
    });
    let mut failures = failures.into_inner().unwrap();
    if failures.is_empty() {
        return Ok(());
    }
    failures.sort_by(|a, b| a.0.cmp(&b.0));
    for (file, f) in &failures {
        eprintln!("failed: {}: {}", file.display(), f.message);
    }
    Err(Failure {
        code: failures.iter().map(|(_, f)| f.code).max().unwrap_or(2),
        message: format!("{} of {} files failed", failures.len(), files.len()),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Retarget(a) => run_job(&a.input, &a.out, &a.settings, false),
        Command::Enlarge(a) => run_job(&a.input, &a.out, &a.settings, true),
        Command::Video(a) => run_video(a),
        Command::Energy(a) => run_energy(a),
        Command::Segment(a) => run_segment(a),
        Command::Ars(a) => run_ars(a),
        Command::Batch(a) => run_batch(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
