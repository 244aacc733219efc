//! Per-pixel energy for the retargeting operators.
//!
//! Energy comes from one of three sources: the luminance gradient, a fixed
//! importance map read from disk, or an external program speaking the
//! provider protocol `<cmd> <input.ppm> <output.pgm>`.

use std::path::PathBuf;
use std::process::Command;

use crate::error::{Error, Result};
use crate::raster::{to_luminance, Dims, ImportanceMap, RasterImage};

/// Largest possible `|dx| + |dy|` on 8-bit luminance.
const GRADIENT_SCALE: f64 = 510.0;

/// Gradient-magnitude energy `(|∂L/∂x| + |∂L/∂y|) / 510` on BT.601 luminance.
///
/// Forward differences; the last column (row) replicates its neighbour so its
/// horizontal (vertical) difference is zero.
pub fn gradient_energy(img: &RasterImage) -> ImportanceMap {
    let lum = to_luminance(img);
    let (w, h) = (lum.width(), lum.height());
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let here = lum.get(x, y);
            let dx = if x + 1 < w { lum.get(x + 1, y) - here } else { 0.0 };
            let dy = if y + 1 < h { lum.get(x, y + 1) - here } else { 0.0 };
            values.push(((dx.abs() + dy.abs()) / GRADIENT_SCALE).min(1.0));
        }
    }
    ImportanceMap::from_raw_unchecked(w, h, values)
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnergySource {
    Gradient,
    StaticMap(ImportanceMap),
    /// Program plus leading arguments; the input and output paths are appended.
    Command(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refresh {
    /// Ask the source again on every iteration.
    RecomputeEachIteration,
    /// Compute once, then shrink or grow the map in lockstep with the image.
    CarryWithImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyProvider {
    source: EnergySource,
    refresh: Refresh,
}

impl EnergyProvider {
    pub fn new(source: EnergySource, refresh: Refresh) -> Result<Self> {
        match (&source, refresh) {
            (EnergySource::StaticMap(_), Refresh::RecomputeEachIteration) => Err(
                Error::InvalidProvider("a static map cannot be regenerated; use carry-with-image"),
            ),
            (EnergySource::Gradient, Refresh::CarryWithImage) => Err(Error::InvalidProvider(
                "gradient energy is always recomputed",
            )),
            (EnergySource::Command(argv), _) if argv.is_empty() => {
                Err(Error::InvalidProvider("empty provider command"))
            }
            _ => Ok(EnergyProvider { source, refresh }),
        }
    }

    pub fn gradient() -> Self {
        EnergyProvider {
            source: EnergySource::Gradient,
            refresh: Refresh::RecomputeEachIteration,
        }
    }

    pub fn static_map(map: ImportanceMap) -> Self {
        EnergyProvider {
            source: EnergySource::StaticMap(map),
            refresh: Refresh::CarryWithImage,
        }
    }

    /// Splits `command_line` on whitespace into program and arguments.
    pub fn command(command_line: &str, refresh: Refresh) -> Result<Self> {
        let argv = command_line.split_whitespace().map(str::to_owned).collect();
        EnergyProvider::new(EnergySource::Command(argv), refresh)
    }

    pub fn source(&self) -> &EnergySource {
        &self.source
    }

    pub fn refresh(&self) -> Refresh {
        self.refresh
    }

    pub fn carries(&self) -> bool {
        self.refresh == Refresh::CarryWithImage
    }

    /// Energy for one iteration of a retargeting loop.
    ///
    /// In carry mode a `carried` map, when present, is returned unchanged;
    /// without one the source is consulted (the first iteration).
    pub fn energy_for_iteration(
        &self,
        current: &RasterImage,
        carried: Option<&ImportanceMap>,
    ) -> Result<ImportanceMap> {
        if let (Refresh::CarryWithImage, Some(map)) = (self.refresh, carried) {
            map.ensure_dims(current.dims())?;
            return Ok(map.clone());
        }
        self.evaluate(current)
    }

    /// Asks the source for a fresh map of `img`.
    pub fn evaluate(&self, img: &RasterImage) -> Result<ImportanceMap> {
        match &self.source {
            EnergySource::Gradient => Ok(gradient_energy(img)),
            EnergySource::StaticMap(map) => {
                map.ensure_dims(img.dims())?;
                Ok(map.clone())
            }
            EnergySource::Command(argv) => run_provider(argv, img),
        }
    }
}

fn run_provider(argv: &[String], img: &RasterImage) -> Result<ImportanceMap> {
    let dir = tempfile::tempdir()?;
    let input: PathBuf = dir.path().join("input.ppm");
    let output: PathBuf = dir.path().join("output.pgm");
    img.save(&input)?;
    let status = Command::new(&argv[0])
        .args(&argv[1..])
        .arg(&input)
        .arg(&output)
        .status()
        .map_err(|e| Error::ProviderFailure(format!("cannot run {}: {e}", argv[0])))?;
    if !status.success() {
        return Err(Error::ProviderFailure(format!("{} exited with {status}", argv[0])));
    }
    let expected: Dims = img.dims();
    ImportanceMap::load(&output, expected).map_err(|e| match e {
        Error::DimensionMismatch { expected, found } => Error::ProviderFailure(format!(
            "provider wrote a {}x{} map for a {}x{} image",
            found.0, found.1, expected.0, expected.1
        )),
        other => Error::ProviderFailure(other.to_string()),
    })
}
