//! Seam carving: repeatedly find the cheapest 8-connected seam and remove
//! (or duplicate) it until one axis reaches its target length.
//!
//! Horizontal seams run through the vertical machinery on transposed data.

use crate::energy::{EnergyProvider, EnergySource};
use crate::error::{Error, Result};
use crate::field::{DeformationField, FieldChain};
use crate::raster::{Dims, ImportanceMap, RasterImage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    /// One pixel per row; removing it narrows the image.
    Vertical,
    /// One pixel per column; removing it shortens the image.
    Horizontal,
}

impl Orientation {
    /// Index of the coordinate a seam moves along, and the one it is indexed by.
    pub(crate) fn axes(self) -> (usize, usize) {
        match self {
            Orientation::Vertical => (0, 1),
            Orientation::Horizontal => (1, 0),
        }
    }

    pub(crate) fn tag(self) -> char {
        match self {
            Orientation::Vertical => 'v',
            Orientation::Horizontal => 'h',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seam {
    pub orientation: Orientation,
    /// Column per row (vertical) or row per column (horizontal).
    pub positions: Vec<usize>,
    pub total_energy: f64,
}

impl Seam {
    pub fn is_connected(&self) -> bool {
        self.positions.windows(2).all(|w| w[0].abs_diff(w[1]) <= 1)
    }

    /// Checks length, bounds and 8-connectivity against an image of `dims`.
    pub fn validate(&self, dims: Dims) -> Result<()> {
        let (len, bound) = match self.orientation {
            Orientation::Vertical => (dims.height, dims.width),
            Orientation::Horizontal => (dims.width, dims.height),
        };
        if self.positions.len() != len {
            return Err(Error::InvalidSeam(format!(
                "{} positions for {len} lines",
                self.positions.len()
            )));
        }
        if let Some(p) = self.positions.iter().find(|&&p| p >= bound) {
            return Err(Error::InvalidSeam(format!("position {p} out of bounds {bound}")));
        }
        if !self.is_connected() {
            return Err(Error::InvalidSeam("not 8-connected".into()));
        }
        Ok(())
    }
}

/// Which image axis a pass changes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Width,
    Height,
}

impl Axis {
    pub fn seam_orientation(self) -> Orientation {
        match self {
            Axis::Width => Orientation::Vertical,
            Axis::Height => Orientation::Horizontal,
        }
    }

    fn length(self, dims: Dims) -> usize {
        match self {
            Axis::Width => dims.width,
            Axis::Height => dims.height,
        }
    }
}

/// Requested output size. Both axes may differ from the source; operators
/// that work one axis at a time handle width first, then height.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TargetSpec {
    pub width: usize,
    pub height: usize,
}

impl TargetSpec {
    pub fn new(width: usize, height: usize) -> Self {
        TargetSpec { width, height }
    }

    pub fn dims(self) -> Dims {
        Dims::new(self.width, self.height)
    }

    /// The single-axis passes needed to get from `current` here.
    pub fn passes(self, current: Dims) -> Vec<(Axis, usize)> {
        let mut out = Vec::new();
        if self.width != current.width {
            out.push((Axis::Width, self.width));
        }
        if self.height != current.height {
            out.push((Axis::Height, self.height));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Remove,
    Insert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeamPlan {
    pub iterations: usize,
    pub direction: Direction,
    pub orientation: Orientation,
}

/// Number of seams and direction for one axis: `|current − target|`.
pub fn plan(current: Dims, axis: Axis, target: usize) -> Result<SeamPlan> {
    if target == 0 {
        return Err(Error::DegenerateTarget(format!(
            "{axis:?} target of 0 pixels from {}x{}",
            current.width, current.height
        )));
    }
    let len = axis.length(current);
    Ok(SeamPlan {
        iterations: len.abs_diff(target),
        direction: if target > len {
            Direction::Insert
        } else {
            Direction::Remove
        },
        orientation: axis.seam_orientation(),
    })
}

/// Minimum-energy vertical seam of a row-major `width`×`height` grid.
///
/// Ties go to the smallest bottom-row column, then to the smallest
/// predecessor column while backtracking.
fn min_vertical_seam(values: &[f64], width: usize, height: usize) -> (Vec<usize>, f64) {
    let mut cost = values[..width].to_vec();
    cost.reserve(width * (height - 1));
    for y in 1..height {
        let prev = (y - 1) * width;
        for x in 0..width {
            let lo = x.saturating_sub(1);
            let hi = (x + 1).min(width - 1);
            let best = cost[prev + lo..=prev + hi]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            cost.push(values[y * width + x] + best);
        }
    }
    let last = (height - 1) * width;
    let mut x = argmin(&cost[last..last + width], 0);
    let total = cost[last + x];
    let mut positions = vec![0; height];
    positions[height - 1] = x;
    for y in (0..height - 1).rev() {
        let lo = x.saturating_sub(1);
        let hi = (x + 1).min(width - 1);
        x = argmin(&cost[y * width + lo..=y * width + hi], lo);
        positions[y] = x;
    }
    (positions, total)
}

fn argmin(slice: &[f64], offset: usize) -> usize {
    let mut best = 0;
    for (i, &v) in slice.iter().enumerate().skip(1) {
        if v < slice[best] {
            best = i;
        }
    }
    best + offset
}

/// Globally cheapest 8-connected seam through `energy`.
pub fn min_seam(energy: &ImportanceMap, orientation: Orientation) -> Seam {
    let (positions, total_energy) = match orientation {
        Orientation::Vertical => min_vertical_seam(energy.values(), energy.width(), energy.height()),
        Orientation::Horizontal => {
            let t = energy.transposed();
            min_vertical_seam(t.values(), t.width(), t.height())
        }
    };
    Seam {
        orientation,
        positions,
        total_energy,
    }
}

fn drop_vertical<T: Copy>(data: &[T], width: usize, stride: usize, positions: &[usize]) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len() - positions.len() * stride);
    for (y, &p) in positions.iter().enumerate() {
        let row = &data[y * width * stride..(y + 1) * width * stride];
        out.extend_from_slice(&row[..p * stride]);
        out.extend_from_slice(&row[(p + 1) * stride..]);
    }
    out
}

fn remove_vertical(img: &RasterImage, positions: &[usize]) -> RasterImage {
    let data = drop_vertical(img.data(), img.width(), 3, positions);
    RasterImage::new(img.width() - 1, img.height(), data).expect("width stays positive")
}

fn remove_vertical_map(map: &ImportanceMap, positions: &[usize]) -> ImportanceMap {
    let values = drop_vertical(map.values(), map.width(), 1, positions);
    ImportanceMap::from_raw_unchecked(map.width() - 1, map.height(), values)
}

/// Deletes the seam's pixels from `img` and, when given, from `map`.
pub fn remove_seam(
    img: &RasterImage,
    map: Option<&ImportanceMap>,
    seam: &Seam,
) -> Result<(RasterImage, Option<ImportanceMap>)> {
    seam.validate(img.dims())?;
    if let Some(m) = map {
        m.ensure_dims(img.dims())?;
    }
    let along = match seam.orientation {
        Orientation::Vertical => img.width(),
        Orientation::Horizontal => img.height(),
    };
    if along < 2 {
        return Err(Error::InvalidSeam(
            "removing the seam would leave an empty image".into(),
        ));
    }
    Ok(match seam.orientation {
        Orientation::Vertical => (
            remove_vertical(img, &seam.positions),
            map.map(|m| remove_vertical_map(m, &seam.positions)),
        ),
        Orientation::Horizontal => (
            remove_vertical(&img.transposed(), &seam.positions).transposed(),
            map.map(|m| remove_vertical_map(&m.transposed(), &seam.positions).transposed()),
        ),
    })
}

/// Energy for one iteration of a pass that may run on transposed data.
struct PassEnergy<'a> {
    provider: &'a EnergyProvider,
    transposed: bool,
}

impl PassEnergy<'_> {
    fn get(&self, current: &RasterImage, carried: Option<&ImportanceMap>) -> Result<ImportanceMap> {
        if let (true, Some(m)) = (self.provider.carries(), carried) {
            m.ensure_dims(current.dims())?;
            return Ok(m.clone());
        }
        if !self.transposed {
            return self.provider.evaluate(current);
        }
        match self.provider.source() {
            // |dx| + |dy| is symmetric under transposition.
            EnergySource::Gradient => Ok(crate::energy::gradient_energy(current)),
            _ => Ok(self.provider.evaluate(&current.transposed())?.transposed()),
        }
    }
}

#[inline]
fn average(a: u8, b: u8) -> u8 {
    (u16::from(a) + u16::from(b)).div_ceil(2) as u8
}

/// Inserts one new pixel before each listed column of every row; the new
/// pixel averages its left neighbour and the seam pixel.
fn insert_vertical(img: &RasterImage, columns: &[Vec<usize>]) -> RasterImage {
    let w = img.width();
    let added = columns[0].len();
    let mut data = Vec::with_capacity((w + added) * img.height() * 3);
    for (y, cols) in columns.iter().enumerate() {
        let mut next = cols.iter().peekable();
        for x in 0..w {
            while next.next_if(|&&c| c == x).is_some() {
                let left = img.pixel(x.saturating_sub(1), y);
                let here = img.pixel(x, y);
                data.extend((0..3).map(|c| average(left[c], here[c])));
            }
            data.extend_from_slice(&img.pixel(x, y));
        }
    }
    RasterImage::new(w + added, img.height(), data).expect("consistent insertion")
}

fn insert_vertical_map(map: &ImportanceMap, columns: &[Vec<usize>]) -> ImportanceMap {
    let w = map.width();
    let added = columns[0].len();
    let mut values = Vec::with_capacity((w + added) * map.height());
    for (y, cols) in columns.iter().enumerate() {
        let mut next = cols.iter().peekable();
        for x in 0..w {
            while next.next_if(|&&c| c == x).is_some() {
                values.push(0.5 * (map.get(x.saturating_sub(1), y) + map.get(x, y)));
            }
            values.push(map.get(x, y));
        }
    }
    ImportanceMap::from_raw_unchecked(w + added, map.height(), values)
}

/// State of a pass over vertical seams (data already transposed for
/// horizontal passes).
struct Pass<'a> {
    energy: PassEnergy<'a>,
    orientation: Orientation,
}

impl Pass<'_> {
    fn remove(
        &self,
        mut img: RasterImage,
        mut carried: Option<ImportanceMap>,
        count: usize,
    ) -> Result<(RasterImage, Option<ImportanceMap>, Vec<Seam>)> {
        let mut log = Vec::with_capacity(count);
        for _ in 0..count {
            let e = self.energy.get(&img, carried.as_ref())?;
            let (positions, total_energy) = min_vertical_seam(e.values(), e.width(), e.height());
            img = remove_vertical(&img, &positions);
            if self.energy.provider.carries() {
                carried = Some(remove_vertical_map(&e, &positions));
            }
            log.push(Seam {
                orientation: self.orientation,
                positions,
                total_energy,
            });
        }
        Ok((img, carried, log))
    }

    /// One insertion batch of at most `img.width()` seams, chosen by removing
    /// them from a scratch copy.
    fn insert_batch(
        &self,
        img: RasterImage,
        carried: Option<ImportanceMap>,
        count: usize,
    ) -> Result<(RasterImage, Option<ImportanceMap>, Vec<Seam>)> {
        let (w, h) = (img.width(), img.height());
        debug_assert!(count <= w);
        let mut ids: Vec<usize> = (0..w * h).map(|i| i % w).collect();
        let mut scratch = img.clone();
        let mut scratch_map = carried.clone();
        let mut seams = Vec::with_capacity(count);
        let mut first_energy = None;
        for k in 0..count {
            let e = self.energy.get(&scratch, scratch_map.as_ref())?;
            if first_energy.is_none() {
                first_energy = Some(e.clone());
            }
            let sw = scratch.width();
            let (positions, total_energy) = min_vertical_seam(e.values(), sw, h);
            let original: Vec<usize> = positions
                .iter()
                .enumerate()
                .map(|(y, &p)| ids[y * sw + p])
                .collect();
            if k + 1 < count {
                ids = drop_vertical(&ids, sw, 1, &positions);
                scratch = remove_vertical(&scratch, &positions);
                if self.energy.provider.carries() {
                    scratch_map = Some(remove_vertical_map(&e, &positions));
                }
            }
            seams.push(Seam {
                orientation: self.orientation,
                positions: original,
                total_energy,
            });
        }
        let mut columns = vec![Vec::with_capacity(count); h];
        for seam in &seams {
            for (y, &c) in seam.positions.iter().enumerate() {
                columns[y].push(c);
            }
        }
        for cols in &mut columns {
            cols.sort_unstable();
        }
        let out = insert_vertical(&img, &columns);
        let map = if self.energy.provider.carries() {
            let base = carried.or(first_energy).expect("at least one seam");
            Some(insert_vertical_map(&base, &columns))
        } else {
            None
        };
        Ok((out, map, seams))
    }
}

fn run_pass(
    img: RasterImage,
    carried: Option<ImportanceMap>,
    provider: &EnergyProvider,
    axis: Axis,
    target: usize,
) -> Result<(RasterImage, Option<ImportanceMap>, FieldChain)> {
    let plan = plan(img.dims(), axis, target)?;
    let source = img.dims();
    let transposed = axis == Axis::Height;
    let pass = Pass {
        energy: PassEnergy {
            provider,
            transposed,
        },
        orientation: plan.orientation,
    };
    let (mut work, mut work_map) = if transposed {
        (img.transposed(), carried.map(|m| m.transposed()))
    } else {
        (img, carried)
    };
    let mut chain = FieldChain::new();
    match plan.direction {
        Direction::Remove => {
            let (out, map, seams) = pass.remove(work, work_map, plan.iterations)?;
            chain.push(DeformationField::SeamRemoval { source, seams });
            work = out;
            work_map = map;
        }
        Direction::Insert => {
            let mut remaining = plan.iterations;
            while remaining > 0 {
                let batch = remaining.min(work.width());
                let batch_source = if transposed {
                    work.dims().transposed()
                } else {
                    work.dims()
                };
                let (out, map, seams) = pass.insert_batch(work, work_map, batch)?;
                chain.push(DeformationField::SeamInsertion {
                    source: batch_source,
                    seams,
                });
                work = out;
                work_map = map;
                remaining -= batch;
            }
        }
    }
    if transposed {
        Ok((work.transposed(), work_map.map(|m| m.transposed()), chain))
    } else {
        Ok((work, work_map, chain))
    }
}

/// Grows `img` by `k` seams of the given orientation.
pub fn insert_seams(
    img: &RasterImage,
    provider: &EnergyProvider,
    k: usize,
    orientation: Orientation,
) -> Result<(RasterImage, FieldChain)> {
    if k == 0 {
        return Ok((img.clone(), FieldChain::new()));
    }
    let (axis, len) = match orientation {
        Orientation::Vertical => (Axis::Width, img.width()),
        Orientation::Horizontal => (Axis::Height, img.height()),
    };
    let target = len.checked_add(k).ok_or_else(|| {
        Error::DegenerateTarget(format!("cannot grow {len} pixels by {k}"))
    })?;
    let (out, _, chain) = run_pass(img.clone(), None, provider, axis, target)?;
    Ok((out, chain))
}

/// Seam-carves `img` to `target`, width first, then height.
pub fn retarget_seam(
    img: &RasterImage,
    provider: &EnergyProvider,
    target: TargetSpec,
) -> Result<(RasterImage, FieldChain)> {
    if target.width == 0 || target.height == 0 {
        return Err(Error::DegenerateTarget(format!(
            "target {}x{}",
            target.width, target.height
        )));
    }
    let mut current = img.clone();
    let mut carried = None;
    let mut chain = FieldChain::new();
    for (axis, len) in target.passes(img.dims()) {
        let (out, map, steps) = run_pass(current, carried, provider, axis, len)?;
        current = out;
        carried = map;
        chain.extend(steps);
    }
    Ok((current, chain))
}
