//! Pixel grids, importance maps and their file formats.
//!
//! Everything is row-major with the origin at the top-left corner, `x`
//! growing rightwards and `y` downwards. Images are always 8-bit RGB; alpha
//! is dropped and 16-bit sources are truncated to their high byte.

use std::fs;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// Width and height in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub const fn new(width: usize, height: usize) -> Self {
        Dims { width, height }
    }

    pub fn area(self) -> usize {
        self.width * self.height
    }

    pub fn transposed(self) -> Self {
        Dims::new(self.height, self.width)
    }

    fn pair(self) -> (usize, usize) {
        (self.width, self.height)
    }
}

fn check_nonzero(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        Err(Error::ZeroDimension { width, height })
    } else {
        Ok(())
    }
}

/// Interleaved 8-bit RGB image.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_nonzero(width, height)?;
        if data.len() != width * height * Self::CHANNELS {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                found: (data.len() / Self::CHANNELS / height.max(1), height),
            });
        }
        Ok(RasterImage {
            width,
            height,
            data,
        })
    }

    /// A `width`×`height` image filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        check_nonzero(width, height)?;
        let data = rgb.repeat(width * height);
        Ok(RasterImage {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        check_nonzero(width, height)?;
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Ok(RasterImage {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn transposed(&self) -> RasterImage {
        let mut data = Vec::with_capacity(self.data.len());
        for x in 0..self.width {
            for y in 0..self.height {
                data.extend_from_slice(&self.pixel(x, y));
            }
        }
        RasterImage {
            width: self.height,
            height: self.width,
            data,
        }
    }

    /// Reads a PNG or binary PPM, auto-detected from the file contents.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let decoded = decode_file(path)?;
        let (width, height) = (decoded.width() as usize, decoded.height() as usize);
        check_nonzero(width, height)?;
        let data = match decoded {
            DynamicImage::ImageRgb8(buf) => buf.into_raw(),
            DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageRgba8(_) => decoded.to_rgb8().into_raw(),
            other => {
                // Wide samples: keep the high byte.
                other.to_rgb16().into_raw().into_iter().map(|s| (s >> 8) as u8).collect()
            }
        };
        RasterImage::new(width, height, data)
    }

    /// Writes PNG for `.png` paths and binary PPM (P6, maxval 255) otherwise.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if has_png_extension(path) {
            let buf = image::RgbImage::from_raw(self.width as u32, self.height as u32, self.data.clone())
                .expect("buffer length matches dimensions");
            buf.save_with_format(path, ImageFormat::Png)
                .map_err(|e| encode_error(path, e))
        } else {
            let mut out = BufWriter::new(fs::File::create(path)?);
            write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
            out.write_all(&self.data)?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Row-major grid of `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_nonzero(width, height)?;
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                found: (values.len() / height, height),
            });
        }
        Ok(ScalarGrid {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Per-pixel importance in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ImportanceMap {
    /// Fails if any value lies outside `[0, 1]` (NaN included).
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        check_nonzero(width, height)?;
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                found: (values.len() / height, height),
            });
        }
        if let Some(bad) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ProviderFailure(format!(
                "importance value {bad} outside [0, 1]"
            )));
        }
        Ok(ImportanceMap {
            width,
            height,
            values,
        })
    }

    pub fn uniform(width: usize, height: usize, value: f64) -> Result<Self> {
        ImportanceMap::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        ImportanceMap::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.width, self.height)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn transposed(&self) -> ImportanceMap {
        let mut values = Vec::with_capacity(self.values.len());
        for x in 0..self.width {
            for y in 0..self.height {
                values.push(self.get(x, y));
            }
        }
        ImportanceMap {
            width: self.height,
            height: self.width,
            values,
        }
    }

    pub(crate) fn from_raw_unchecked(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        ImportanceMap {
            width,
            height,
            values,
        }
    }

    /// Fails with `DimensionMismatch` unless the map is `expected` in size.
    pub fn ensure_dims(&self, expected: Dims) -> Result<()> {
        if self.dims() != expected {
            return Err(Error::DimensionMismatch {
                expected: expected.pair(),
                found: self.dims().pair(),
            });
        }
        Ok(())
    }

    /// Reads an 8-bit grayscale PGM or single-channel PNG; sample `u` becomes `u / 255`.
    pub fn load(path: impl AsRef<Path>, expected: Dims) -> Result<Self> {
        let path = path.as_ref();
        let decoded = decode_file(path)?;
        let (width, height) = (decoded.width() as usize, decoded.height() as usize);
        check_nonzero(width, height)?;
        let samples: Vec<u8> = match decoded {
            DynamicImage::ImageLuma8(buf) => buf.into_raw(),
            DynamicImage::ImageLuma16(buf) => {
                buf.into_raw().into_iter().map(|s| (s >> 8) as u8).collect()
            }
            _ => {
                return Err(Error::Decode {
                    path: path.to_owned(),
                    reason: "importance maps must be single-channel".into(),
                })
            }
        };
        let map = ImportanceMap::from_raw_unchecked(
            width,
            height,
            samples.into_iter().map(|u| f64::from(u) / 255.0).collect(),
        );
        map.ensure_dims(expected)?;
        Ok(map)
    }

    /// Reads a map of whatever size the file holds.
    pub fn load_any(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let decoded = decode_file(path)?;
        let dims = Dims::new(decoded.width() as usize, decoded.height() as usize);
        ImportanceMap::load(path, dims)
    }

    /// 8-bit quantization, `round(255 v)`.
    pub fn to_u8(&self) -> Vec<u8> {
        self.values
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    /// Writes an 8-bit PGM (P5), or a grayscale PNG for `.png` paths.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let samples = self.to_u8();
        if has_png_extension(path) {
            let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, samples)
                .expect("buffer length matches dimensions");
            buf.save_with_format(path, ImageFormat::Png)
                .map_err(|e| encode_error(path, e))
        } else {
            write_pgm8(path, self.width, self.height, &samples)
        }
    }
}

pub(crate) fn write_pgm8(path: &Path, width: usize, height: usize, samples: &[u8]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.write_all(samples)?;
    out.flush()?;
    Ok(())
}

/// Writes a 16-bit big-endian PGM (maxval 65535), clamping each sample.
pub fn write_pgm16(path: impl AsRef<Path>, width: usize, height: usize, samples: &[usize]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path.as_ref())?);
    write!(out, "P5\n{width} {height}\n65535\n")?;
    for &s in samples {
        out.write_all(&(s.min(u16::MAX as usize) as u16).to_be_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// BT.601 luma, `0.299 R + 0.587 G + 0.114 B`, in `[0, 255]`.
#[inline]
pub fn luma([r, g, b]: [u8; 3]) -> f64 {
    0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)
}

pub fn to_luminance(img: &RasterImage) -> ScalarGrid {
    let values = img.data.chunks_exact(3).map(|p| luma([p[0], p[1], p[2]])).collect();
    ScalarGrid {
        width: img.width,
        height: img.height,
        values,
    }
}

fn has_png_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn encode_error(path: &Path, e: image::ImageError) -> Error {
    match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Decode {
            path: path.to_owned(),
            reason: other.to_string(),
        },
    }
}

fn decode_file(path: &Path) -> Result<DynamicImage> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::FileNotFound(path.to_owned()))
        }
        Err(e) => return Err(e.into()),
    };
    let decode_err = |reason: String| Error::Decode {
        path: path.to_owned(),
        reason,
    };
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| decode_err(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => return Err(decode_err(format!("unsupported format {other:?}"))),
        None => return Err(decode_err("unrecognized format".into())),
    }
    reader.decode().map_err(|e| decode_err(e.to_string()))
}
