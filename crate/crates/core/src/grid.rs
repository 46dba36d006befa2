//! Georeferenced raster model anchored to one global lon/lat lattice.
//!
//! Every [`GridSpec`] is expressed as integer cell offsets from the
//! (-180°, +90°) corner at a resolution stored in nano-arc-seconds, so two
//! grids with the same resolution are cell-aligned by construction and
//! aligning them is pure index arithmetic.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const NANO_PER_ARCSEC: u64 = 1_000_000_000;
pub const NANO_PER_DEGREE: u64 = 3600 * NANO_PER_ARCSEC;
const FULL_LON: u64 = 360 * NANO_PER_DEGREE;
const FULL_LAT: u64 = 180 * NANO_PER_DEGREE;

/// Mean Earth radius in metres used for cell areas.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Grid coordinates within this distance of an integer are snapped to it.
const GRID_SNAP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridSpec {
    res_nano: u64,
    col0: u64,
    row0: u64,
    width: usize,
    height: usize,
}

impl GridSpec {
    /// Builds a grid from lattice offsets: `col0` columns east of -180° and
    /// `row0` rows south of +90°.
    pub fn from_lattice(
        res_nano: u64,
        col0: u64,
        row0: u64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if res_nano == 0 {
            return Err(Error::invalid("resolution must be positive"));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "grid dimensions must be positive, got {width}x{height}"
            )));
        }
        let east = (col0 + width as u64).checked_mul(res_nano);
        let south = (row0 + height as u64).checked_mul(res_nano);
        match (east, south) {
            (Some(e), Some(s)) if e <= FULL_LON && s <= FULL_LAT => {}
            _ => {
                return Err(Error::invalid(
                    "grid extends beyond [-180, 180] x [-90, 90]",
                ))
            }
        }
        Ok(Self {
            res_nano,
            col0,
            row0,
            width,
            height,
        })
    }

    /// Builds a grid from its north-west corner. The corner must sit on the
    /// global lattice of `resolution_arcsec` within 1e-9°.
    pub fn new(
        origin_lon: f64,
        origin_lat: f64,
        resolution_arcsec: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        Self::snapped(origin_lon, origin_lat, resolution_arcsec, width, height, 1e-9)
    }

    /// Like [`GridSpec::new`] with a caller-chosen snapping tolerance in degrees.
    pub fn snapped(
        origin_lon: f64,
        origin_lat: f64,
        resolution_arcsec: f64,
        width: usize,
        height: usize,
        tolerance_deg: f64,
    ) -> Result<Self> {
        if !(resolution_arcsec.is_finite() && resolution_arcsec > 0.0) {
            return Err(Error::invalid(format!(
                "resolution must be positive, got {resolution_arcsec}"
            )));
        }
        let res_nano = (resolution_arcsec * NANO_PER_ARCSEC as f64).round() as u64;
        if res_nano == 0 {
            return Err(Error::invalid("resolution below one nano-arc-second"));
        }
        let res_deg = res_nano as f64 / NANO_PER_DEGREE as f64;
        let col = (origin_lon + 180.0) / res_deg;
        let row = (90.0 - origin_lat) / res_deg;
        let (col_r, row_r) = (col.round(), row.round());
        if (col - col_r).abs() * res_deg > tolerance_deg
            || (row - row_r).abs() * res_deg > tolerance_deg
        {
            return Err(Error::alignment(format!(
                "origin ({origin_lon}, {origin_lat}) is not on the {resolution_arcsec}\" lattice"
            )));
        }
        if col_r < 0.0 || row_r < 0.0 {
            return Err(Error::invalid(
                "grid extends beyond [-180, 180] x [-90, 90]",
            ));
        }
        Self::from_lattice(res_nano, col_r as u64, row_r as u64, width, height)
    }

    /// Smallest grid on the lattice of `resolution_arcsec` covering the box
    /// `[west, east] x [south, north]`.
    pub fn covering(west: f64, south: f64, east: f64, north: f64, resolution_arcsec: f64) -> Result<Self> {
        if !(west < east && south < north) || !(west >= -180.0 && east <= 180.0 && south >= -90.0 && north <= 90.0) {
            return Err(Error::invalid(format!("bad bounding box [{west}, {east}] x [{south}, {north}]")));
        }
        let res_nano = (resolution_arcsec * NANO_PER_ARCSEC as f64).round() as u64;
        if res_nano == 0 {
            return Err(Error::invalid("resolution below one nano-arc-second"));
        }
        let per_deg = NANO_PER_DEGREE as f64 / res_nano as f64;
        let c0 = snap((west + 180.0) * per_deg).floor() as u64;
        let c1 = snap((east + 180.0) * per_deg).ceil() as u64;
        let r0 = snap((90.0 - north) * per_deg).floor() as u64;
        let r1 = snap((90.0 - south) * per_deg).ceil() as u64;
        Self::from_lattice(res_nano, c0, r0, (c1 - c0) as usize, (r1 - r0) as usize)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn col0(&self) -> u64 {
        self.col0
    }

    pub fn row0(&self) -> u64 {
        self.row0
    }

    pub fn resolution_nano(&self) -> u64 {
        self.res_nano
    }

    pub fn resolution_arcsec(&self) -> f64 {
        self.res_nano as f64 / NANO_PER_ARCSEC as f64
    }

    pub fn resolution_deg(&self) -> f64 {
        self.res_nano as f64 / NANO_PER_DEGREE as f64
    }

    pub fn origin_lon(&self) -> f64 {
        self.lon_of_col_edge(0.0)
    }

    pub fn origin_lat(&self) -> f64 {
        self.lat_of_row_edge(0.0)
    }

    pub fn east_lon(&self) -> f64 {
        self.lon_of_col_edge(self.width as f64)
    }

    pub fn south_lat(&self) -> f64 {
        self.lat_of_row_edge(self.height as f64)
    }

    fn lon_of_col_edge(&self, col: f64) -> f64 {
        -180.0 + (self.col0 as f64 + col) * self.resolution_deg()
    }

    fn lat_of_row_edge(&self, row: f64) -> f64 {
        90.0 - (self.row0 as f64 + row) * self.resolution_deg()
    }

    /// Geodetic centre (lon, lat) of a cell.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.lon_of_col_edge(col as f64 + 0.5),
            self.lat_of_row_edge(row as f64 + 0.5),
        )
    }

    /// Latitude of the centres of `row`.
    pub fn row_center_lat(&self, row: usize) -> f64 {
        self.lat_of_row_edge(row as f64 + 0.5)
    }

    /// Continuous grid coordinates of a lon/lat point: x grows east in
    /// columns, y grows south in rows, (0, 0) is the north-west corner.
    pub fn to_grid(&self, lon: f64, lat: f64) -> (f64, f64) {
        let cells_per_deg = NANO_PER_DEGREE as f64 / self.res_nano as f64;
        let x = (lon + 180.0) * cells_per_deg - self.col0 as f64;
        let y = (90.0 - lat) * cells_per_deg - self.row0 as f64;
        (snap(x), snap(y))
    }

    /// Cell containing a lon/lat point (half-open cells), if inside the grid.
    pub fn cell_of(&self, lon: f64, lat: f64) -> Option<(usize, usize)> {
        let (x, y) = self.to_grid(lon, lat);
        let (c, r) = (x.floor(), y.floor());
        if c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height {
            Some((r as usize, c as usize))
        } else {
            None
        }
    }

    /// True when both grids share resolution (and hence the lattice).
    pub fn same_lattice(&self, other: &GridSpec) -> bool {
        self.res_nano == other.res_nano
    }

    /// True when `other` lies on the same lattice and inside `self`.
    pub fn contains(&self, other: &GridSpec) -> bool {
        self.same_lattice(other)
            && other.col0 >= self.col0
            && other.row0 >= self.row0
            && other.col0 + other.width as u64 <= self.col0 + self.width as u64
            && other.row0 + other.height as u64 <= self.row0 + self.height as u64
    }

    /// The grid covering the same footprint on the lattice `factor` times
    /// coarser. Partial blocks on the edges are included.
    pub fn coarsened(&self, factor: usize) -> Result<GridSpec> {
        if factor == 0 {
            return Err(Error::invalid("aggregation factor must be >= 1"));
        }
        let f = factor as u64;
        let c0 = self.col0 / f;
        let r0 = self.row0 / f;
        let c1 = (self.col0 + self.width as u64).div_ceil(f);
        let r1 = (self.row0 + self.height as u64).div_ceil(f);
        GridSpec::from_lattice(
            self.res_nano * f,
            c0,
            r0,
            (c1 - c0) as usize,
            (r1 - r0) as usize,
        )
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::alignment(format!(
                "grid mismatch: {self:?} vs {other:?}"
            )))
        }
    }

    /// Surface area of one cell in `row`, in km².
    pub fn cell_area_km2(&self, row: usize) -> Result<f64> {
        if row >= self.height {
            return Err(Error::Index {
                index: row,
                len: self.height,
            });
        }
        Ok(self.cell_area_km2_unchecked(row))
    }

    pub(crate) fn cell_area_km2_unchecked(&self, row: usize) -> f64 {
        let delta = self.resolution_deg().to_radians();
        let side = EARTH_RADIUS_M * delta;
        side * side * self.row_center_lat(row).to_radians().cos() / 1e6
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < GRID_SNAP {
        r
    } else {
        v
    }
}

/// Free-function form of [`GridSpec::cell_area_km2`].
pub fn cell_area_km2(spec: &GridSpec, row: usize) -> Result<f64> {
    spec.cell_area_km2(row)
}

// ---------------------------------------------------------------------------
// Bit helpers shared by the binary raster operations.

#[inline]
pub(crate) fn word_count(bits: usize) -> usize {
    bits.div_ceil(64)
}

/// Reads `n <= 64` bits starting at bit `start`.
#[inline]
pub(crate) fn read_bits(words: &[u64], start: usize, n: usize) -> u64 {
    debug_assert!(n <= 64);
    if n == 0 {
        return 0;
    }
    let w = start / 64;
    let off = start % 64;
    let mut v = words[w] >> off;
    if off != 0 && off + n > 64 {
        v |= words[w + 1] << (64 - off);
    }
    if n < 64 {
        v &= (1u64 << n) - 1;
    }
    v
}

/// ORs `n <= 64` bits of `value` in at bit `start`.
#[inline]
pub(crate) fn or_bits(words: &mut [u64], start: usize, n: usize, value: u64) {
    if n == 0 {
        return;
    }
    let value = if n < 64 { value & ((1u64 << n) - 1) } else { value };
    let w = start / 64;
    let off = start % 64;
    words[w] |= value << off;
    if off != 0 && off + n > 64 {
        words[w + 1] |= value >> (64 - off);
    }
}

/// Sets bits `[start, end)`.
pub(crate) fn set_bit_range(words: &mut [u64], start: usize, end: usize) {
    let mut pos = start;
    while pos < end {
        let n = (end - pos).min(64 - pos % 64);
        or_bits(words, pos, n, u64::MAX);
        pos += n;
    }
}

/// Copies bit range `[src_start, src_start + len)` into `dst` at `dst_start` (OR).
pub(crate) fn copy_bits(src: &[u64], src_start: usize, dst: &mut [u64], dst_start: usize, len: usize) {
    let mut done = 0;
    while done < len {
        let n = (len - done).min(64);
        let v = read_bits(src, src_start + done, n);
        or_bits(dst, dst_start + done, n, v);
        done += n;
    }
}

const PAR_CHUNK_WORDS: usize = 1 << 14;

/// Bit-per-cell settlement layer (1 = settled), row-major without padding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryRaster {
    spec: GridSpec,
    words: Vec<u64>,
}

impl BinaryRaster {
    pub fn zeros(spec: GridSpec) -> Self {
        Self {
            spec,
            words: vec![0; word_count(spec.len())],
        }
    }

    pub fn ones(spec: GridSpec) -> Self {
        let mut r = Self::zeros(spec);
        set_bit_range(&mut r.words, 0, spec.len());
        r
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut r = Self::zeros(spec);
        for row in 0..spec.height() {
            for col in 0..spec.width() {
                if f(row, col) {
                    r.set(row, col, true);
                }
            }
        }
        r
    }

    /// Wraps packed words; bits past `width * height` must be zero.
    pub fn from_words(spec: GridSpec, words: Vec<u64>) -> Result<Self> {
        if words.len() != word_count(spec.len()) {
            return Err(Error::invalid(format!(
                "expected {} words for {} cells, got {}",
                word_count(spec.len()),
                spec.len(),
                words.len()
            )));
        }
        let tail = spec.len() % 64;
        if tail != 0 && words[words.len() - 1] >> tail != 0 {
            return Err(Error::invalid("bits set past the end of the raster"));
        }
        Ok(Self { spec, words })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        debug_assert!(row < self.spec.height && col < self.spec.width);
        let i = row * self.spec.width + col;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        assert!(row < self.spec.height && col < self.spec.width, "cell out of range");
        let i = row * self.spec.width + col;
        if value {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Sets cells `[col_start, col_end)` of `row`.
    pub fn set_span(&mut self, row: usize, col_start: usize, col_end: usize) {
        assert!(row < self.spec.height && col_end <= self.spec.width);
        if col_start < col_end {
            let base = row * self.spec.width;
            set_bit_range(&mut self.words, base + col_start, base + col_end);
        }
    }

    /// Number of settled cells.
    pub fn count_settled(&self) -> u64 {
        self.words
            .par_chunks(PAR_CHUNK_WORDS)
            .map(|c| c.iter().map(|w| w.count_ones() as u64).sum::<u64>())
            .sum()
    }

    /// Settled cells in `row`.
    pub fn count_row(&self, row: usize) -> u64 {
        let w = self.spec.width;
        let mut total = 0;
        let mut pos = row * w;
        let end = pos + w;
        while pos < end {
            let n = (end - pos).min(64 - pos % 64);
            total += read_bits(&self.words, pos, n).count_ones() as u64;
            pos += n;
        }
        total
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// `(|self ∩ other|, |self ∪ other|)` in one pass.
    pub fn intersection_union(&self, other: &BinaryRaster) -> Result<(u64, u64)> {
        self.spec.check_same(&other.spec)?;
        Ok(self
            .words
            .par_chunks(PAR_CHUNK_WORDS)
            .zip(other.words.par_chunks(PAR_CHUNK_WORDS))
            .map(|(a, b)| {
                a.iter().zip(b).fold((0u64, 0u64), |(i, u), (x, y)| {
                    (i + (x & y).count_ones() as u64, u + (x | y).count_ones() as u64)
                })
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1)))
    }

    fn zip_words(&self, other: &BinaryRaster, f: impl Fn(u64, u64) -> u64 + Sync) -> Result<BinaryRaster> {
        self.spec.check_same(&other.spec)?;
        let words = self
            .words
            .par_iter()
            .zip(other.words.par_iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(BinaryRaster { spec: self.spec, words })
    }

    pub fn and(&self, other: &BinaryRaster) -> Result<BinaryRaster> {
        self.zip_words(other, |a, b| a & b)
    }

    pub fn or(&self, other: &BinaryRaster) -> Result<BinaryRaster> {
        self.zip_words(other, |a, b| a | b)
    }

    pub fn and_not(&self, other: &BinaryRaster) -> Result<BinaryRaster> {
        self.zip_words(other, |a, b| a & !b)
    }

    pub fn or_assign(&mut self, other: &BinaryRaster) -> Result<()> {
        self.spec.check_same(&other.spec)?;
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= *b;
        }
        Ok(())
    }

    /// Iterates settled cells as `(row, col)` in row-major order.
    pub fn iter_settled(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let width = self.spec.width;
        self.words.iter().enumerate().flat_map(move |(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let bit = w.trailing_zeros() as usize;
                w &= w - 1;
                let i = wi * 64 + bit;
                Some((i / width, i % width))
            })
        })
    }

    /// Extracts the sub-grid `sub`, which must share the lattice and lie inside.
    pub fn window(&self, sub: &GridSpec) -> Result<BinaryRaster> {
        if !self.spec.same_lattice(sub) {
            return Err(Error::alignment(format!(
                "window resolution {}\" differs from raster resolution {}\"",
                sub.resolution_arcsec(),
                self.spec.resolution_arcsec()
            )));
        }
        if !self.spec.contains(sub) {
            return Err(Error::alignment("window is not contained in the raster"));
        }
        let dc = (sub.col0 - self.spec.col0) as usize;
        let dr = (sub.row0 - self.spec.row0) as usize;
        let mut out = BinaryRaster::zeros(*sub);
        for r in 0..sub.height {
            copy_bits(
                &self.words,
                (r + dr) * self.spec.width + dc,
                &mut out.words,
                r * sub.width,
                sub.width,
            );
        }
        Ok(out)
    }
}

/// Free-function form of [`BinaryRaster::count_settled`].
pub fn count_settled(r: &BinaryRaster) -> u64 {
    r.count_settled()
}

/// Free-function form of [`BinaryRaster::window`].
pub fn window(r: &BinaryRaster, sub: &GridSpec) -> Result<BinaryRaster> {
    r.window(sub)
}

/// Real-valued layer; the no-data sentinel is NaN (any non-finite input is
/// stored as NaN).
#[derive(Clone, Debug)]
pub struct NumericRaster {
    spec: GridSpec,
    values: Vec<f32>,
}

impl NumericRaster {
    pub fn new(spec: GridSpec, mut values: Vec<f32>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::invalid(format!(
                "expected {} values, got {}",
                spec.len(),
                values.len()
            )));
        }
        for v in values.iter_mut().filter(|v| !v.is_finite()) {
            *v = f32::NAN;
        }
        Ok(Self { spec, values })
    }

    pub fn filled(spec: GridSpec, value: f32) -> Self {
        Self {
            spec,
            values: vec![value; spec.len()],
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// `None` for no-data.
    pub fn get(&self, row: usize, col: usize) -> Option<f32> {
        let v = self.values[row * self.spec.width + col];
        v.is_finite().then_some(v)
    }
}

pub const CATEGORY_NODATA: u8 = 255;

/// Small-integer class layer with code 255 as no-data.
#[derive(Clone, Debug)]
pub struct CategoricalRaster {
    spec: GridSpec,
    codes: Vec<u8>,
    categories: Vec<u8>,
}

impl CategoricalRaster {
    pub fn new(spec: GridSpec, codes: Vec<u8>, categories: &[u8]) -> Result<Self> {
        if codes.len() != spec.len() {
            return Err(Error::invalid(format!(
                "expected {} codes, got {}",
                spec.len(),
                codes.len()
            )));
        }
        let mut allowed = [false; 256];
        for &c in categories {
            allowed[c as usize] = true;
        }
        if let Some(bad) = codes
            .iter()
            .find(|&&c| c != CATEGORY_NODATA && !allowed[c as usize])
        {
            return Err(Error::invalid(format!("code {bad} is not a declared category")));
        }
        let mut categories = categories.to_vec();
        categories.sort_unstable();
        categories.dedup();
        Ok(Self {
            spec,
            codes,
            categories,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    pub fn categories(&self) -> &[u8] {
        &self.categories
    }

    pub fn get(&self, row: usize, col: usize) -> Option<u8> {
        let c = self.codes[row * self.spec.width + col];
        (c != CATEGORY_NODATA).then_some(c)
    }
}
