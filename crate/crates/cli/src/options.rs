use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use retarget_core::energy::{EnergyProvider, Refresh};
use retarget_core::seam::TargetSpec;
use retarget_core::segment::SegmentationParams;
use retarget_core::warp::{SolverConfig, WarpEnergyConfig, WarpMode, WarpOptions};
use retarget_core::{Dims, Error, ImportanceMap};

/// Environment variable holding the external provider command used by
/// `--energy cmd`.
pub const ENERGY_CMD_ENV: &str = "RETARGET_ENERGY_CMD";

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            e if e.is_numerical() => 3,
            Error::DegenerateTarget(_) | Error::InvalidProvider(_) => 1,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

/// One side of the target: absolute pixels or a percentage of the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extent {
    Pixels(usize),
    /// Percentage as an exact fraction `num / den` (so `33.5%` is 335/10).
    Percent { num: u64, den: u64 },
}

impl std::str::FromStr for Extent {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if let Some(p) = s.strip_suffix('%') {
            let (int, frac) = p.split_once('.').unwrap_or((p, ""));
            if int.is_empty() && frac.is_empty()
                || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())
                || frac.len() > 9
            {
                return Err(format!("bad percentage {s:?}"));
            }
            let den = 10u64.pow(frac.len() as u32);
            let num: u64 = format!("{int}{frac}").parse().map_err(|_| format!("bad percentage {s:?}"))?;
            if num == 0 || num > 400 * den {
                return Err(format!("percentage {s} outside (0%, 400%]"));
            }
            Ok(Extent::Percent { num, den })
        } else {
            let px: usize = s.parse().map_err(|_| format!("bad size {s:?}"))?;
            if px == 0 {
                return Err("size must be positive".into());
            }
            Ok(Extent::Pixels(px))
        }
    }
}

impl Extent {
    /// Resolves against the source length, rounding halves up.
    pub fn resolve(self, source: usize) -> usize {
        match self {
            Extent::Pixels(px) => px,
            Extent::Percent { num, den } => {
                let scaled = source as u128 * num as u128;
                let d = 100 * den as u128;
                ((2 * scaled + d) / (2 * d)) as usize
            }
        }
    }
}

pub fn resolve_target(width: Option<Extent>, height: Option<Extent>, source: Dims) -> CliResult<TargetSpec> {
    let w = width.map_or(source.width, |e| e.resolve(source.width));
    let h = height.map_or(source.height, |e| e.resolve(source.height));
    if w == 0 || h == 0 {
        return Err(Failure::usage(format!("target {w}x{h} rounds to zero")));
    }
    Ok(TargetSpec::new(w, h))
}

/// Where per-pixel importance comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnergyArg {
    Gradient,
    Map(PathBuf),
    /// `None` means "read the command from the environment".
    Command(Option<String>),
}

impl std::str::FromStr for EnergyArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gradient" => Ok(EnergyArg::Gradient),
            "cmd" => Ok(EnergyArg::Command(None)),
            _ => {
                if let Some(p) = s.strip_prefix("map:") {
                    Ok(EnergyArg::Map(PathBuf::from(p)))
                } else if let Some(c) = s.strip_prefix("cmd:") {
                    Ok(EnergyArg::Command(Some(c.to_string())))
                } else {
                    Err(format!("unknown energy source {s:?}; use gradient, map:PATH or cmd:PROGRAM"))
                }
            }
        }
    }
}

impl EnergyArg {
    /// Builds the provider for an image of size `dims`.
    pub fn provider(&self, dims: Dims) -> CliResult<EnergyProvider> {
        match self {
            EnergyArg::Gradient => Ok(EnergyProvider::gradient()),
            EnergyArg::Map(path) => Ok(EnergyProvider::static_map(ImportanceMap::load(path, dims)?)),
            EnergyArg::Command(cmd) => {
                let line = match cmd {
                    Some(c) => c.clone(),
                    None => std::env::var(ENERGY_CMD_ENV)
                        .map_err(|_| Failure::usage(format!("--energy cmd needs {ENERGY_CMD_ENV}")))?,
                };
                Ok(EnergyProvider::command(&line, Refresh::CarryWithImage)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Operator {
    Seam,
    Warp,
}

#[derive(Debug, Clone, Args)]
pub struct TargetArgs {
    /// Target width: pixels, or a percentage such as `50%`.
    #[arg(long)]
    pub width: Option<Extent>,
    /// Target height: pixels, or a percentage such as `75%`.
    #[arg(long)]
    pub height: Option<Extent>,
}

#[derive(Debug, Clone, Args)]
pub struct EnergyArgs {
    /// `gradient`, `map:PATH` (grayscale map) or `cmd:PROGRAM` (`cmd` alone
    /// reads RETARGET_ENERGY_CMD).
    #[arg(long, default_value = "gradient")]
    pub energy: EnergyArg,
}

#[derive(Debug, Clone, Args)]
pub struct SegmentArgs {
    /// Gaussian smoothing before segmentation.
    #[arg(long, default_value_t = 0.8)]
    pub sigma: f64,
    /// Merge threshold scale; larger values give larger patches.
    #[arg(long, default_value_t = 300.0)]
    pub k: f64,
    /// Patches smaller than this are merged into a neighbour.
    #[arg(long = "min-size", default_value_t = 50)]
    pub min_size: usize,
}

impl SegmentArgs {
    pub fn params(&self) -> CliResult<SegmentationParams> {
        let p = SegmentationParams {
            smoothing_sigma: self.sigma,
            threshold_k: self.k,
            min_patch_size: self.min_size,
        };
        p.validate().map_err(|e| Failure::usage(e.to_string()))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Args)]
pub struct WarpArgs {
    /// Use the fixed similarity weight α instead of per-patch importance.
    #[arg(long)]
    pub legacy: bool,
    /// Similarity weight for `--legacy`.
    #[arg(long, default_value_t = 0.8)]
    pub alpha: f64,
    /// Mesh cell size in pixels.
    #[arg(long, default_value_t = 20)]
    pub cell: usize,
    #[command(flatten)]
    pub segment: SegmentArgs,
}

impl WarpArgs {
    pub fn config(&self, video: bool) -> CliResult<WarpEnergyConfig> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Failure::usage("--alpha must lie in [0, 1]"));
        }
        let mode = match (self.legacy, video) {
            (false, false) => WarpMode::ModifiedImage,
            (false, true) => WarpMode::ModifiedVideo,
            (true, false) => WarpMode::LegacyImage,
            (true, true) => WarpMode::LegacyVideo,
        };
        Ok(WarpEnergyConfig { mode, alpha: self.alpha, ..Default::default() })
    }

    pub fn options(&self) -> CliResult<WarpOptions> {
        if self.cell < 2 {
            return Err(Failure::usage("--cell must be at least 2"));
        }
        Ok(WarpOptions {
            cell_size: self.cell,
            segmentation: self.segment.params()?,
            solver: SolverConfig::default(),
        })
    }
}

/// `out.png` becomes `out.field`.
pub fn field_path(out: &Path) -> PathBuf {
    out.with_extension("field")
}

/// Image files in `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Failure {
        code: 2,
        message: format!("cannot read {}: {e}", dir.display()),
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|x| x.to_str())
                    .is_some_and(|x| matches!(x.to_ascii_lowercase().as_str(), "png" | "ppm" | "pnm" | "pgm"))
        })
        .collect();
    files.sort();
    Ok(files)
}
