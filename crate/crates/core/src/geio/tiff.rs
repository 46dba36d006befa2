//! Minimal single-band GeoTIFF support.
//!
//! Reads classic TIFF (either byte order), striped or tiled, uncompressed or
//! deflate, with uint8 / int16 / float32 samples and model-pixel-scale +
//! tiepoint georeferencing. Tags outside that set are ignored unless they
//! change how pixels must be interpreted, in which case the read fails and
//! names the tag. The writer emits little-endian files using the same subset.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use flate2::read::ZlibDecoder;
use flate2::write::ZlibEncoder;

use crate::error::{Error, Result};
use crate::grid::{CategoricalRaster, GridSpec, NumericRaster, CATEGORY_NODATA};

const TAG_IMAGE_WIDTH: u16 = 256;
const TAG_IMAGE_LENGTH: u16 = 257;
const TAG_BITS_PER_SAMPLE: u16 = 258;
const TAG_COMPRESSION: u16 = 259;
const TAG_PHOTOMETRIC: u16 = 262;
const TAG_STRIP_OFFSETS: u16 = 273;
const TAG_SAMPLES_PER_PIXEL: u16 = 277;
const TAG_ROWS_PER_STRIP: u16 = 278;
const TAG_STRIP_BYTE_COUNTS: u16 = 279;
const TAG_PLANAR_CONFIG: u16 = 284;
const TAG_PREDICTOR: u16 = 317;
const TAG_TILE_WIDTH: u16 = 322;
const TAG_TILE_LENGTH: u16 = 323;
const TAG_TILE_OFFSETS: u16 = 324;
const TAG_TILE_BYTE_COUNTS: u16 = 325;
const TAG_SAMPLE_FORMAT: u16 = 339;
const TAG_MODEL_PIXEL_SCALE: u16 = 33550;
const TAG_MODEL_TIEPOINT: u16 = 33922;
const TAG_MODEL_TRANSFORMATION: u16 = 34264;
const TAG_GEO_KEY_DIRECTORY: u16 = 34735;
const TAG_GDAL_NODATA: u16 = 42113;

const KEY_MODEL_TYPE: u16 = 1024;
const KEY_RASTER_TYPE: u16 = 1025;
const KEY_GEOGRAPHIC_TYPE: u16 = 2048;
const KEY_PROJECTED_CS_TYPE: u16 = 3072;

const MODEL_PROJECTED: u16 = 1;
const MODEL_GEOGRAPHIC: u16 = 2;
const RASTER_PIXEL_IS_POINT: u16 = 2;
/// ESRI code of the world Mollweide projection.
pub const MOLLWEIDE_CODE: u16 = 54009;

/// Grid snapping tolerance for files not written on the global lattice.
const SNAP_TOLERANCE_DEG: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleType {
    U8,
    I16,
    F32,
}

impl SampleType {
    fn bytes(self) -> usize {
        match self {
            SampleType::U8 => 1,
            SampleType::I16 => 2,
            SampleType::F32 => 4,
        }
    }

    fn bits_and_format(self) -> (u16, u16) {
        match self {
            SampleType::U8 => (8, 1),
            SampleType::I16 => (16, 2),
            SampleType::F32 => (32, 3),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BandData {
    U8(Vec<u8>),
    I16(Vec<i16>),
    F32(Vec<f32>),
}

impl BandData {
    pub fn sample_type(&self) -> SampleType {
        match self {
            BandData::U8(_) => SampleType::U8,
            BandData::I16(_) => SampleType::I16,
            BandData::F32(_) => SampleType::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            BandData::U8(v) => v.len(),
            BandData::I16(v) => v.len(),
            BandData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn value(&self, i: usize) -> f64 {
        match self {
            BandData::U8(v) => v[i] as f64,
            BandData::I16(v) => v[i] as f64,
            BandData::F32(v) => v[i] as f64,
        }
    }
}

/// Georeferencing of a Mollweide (ESRI:54009) raster in metres.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MollweideGrid {
    pub west_m: f64,
    pub north_m: f64,
    pub pixel_m: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Georef {
    Geographic(GridSpec),
    Mollweide(MollweideGrid),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeoTiff {
    pub georef: Georef,
    pub width: usize,
    pub height: usize,
    pub data: BandData,
    pub nodata: Option<f64>,
}

impl GeoTiff {
    pub fn from_numeric(raster: &NumericRaster, sample_type: SampleType, nodata: Option<f64>) -> Result<Self> {
        let spec = *raster.spec();
        let vals = raster.values();
        let fill = |v: f32| -> Result<f64> {
            if v.is_finite() {
                Ok(v as f64)
            } else {
                nodata.ok_or_else(|| Error::invalid("no-data cells present but no nodata value given"))
            }
        };
        let data = match sample_type {
            SampleType::F32 => BandData::F32(vals.to_vec()),
            SampleType::U8 => BandData::U8(
                vals.iter()
                    .map(|&v| fill(v).map(|x| x.round().clamp(0.0, 255.0) as u8))
                    .collect::<Result<_>>()?,
            ),
            SampleType::I16 => BandData::I16(
                vals.iter()
                    .map(|&v| fill(v).map(|x| x.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16))
                    .collect::<Result<_>>()?,
            ),
        };
        let nodata = match sample_type {
            SampleType::F32 if nodata.is_none() && vals.iter().any(|v| v.is_nan()) => Some(f64::NAN),
            _ => nodata,
        };
        Ok(Self {
            georef: Georef::Geographic(spec),
            width: spec.width(),
            height: spec.height(),
            data,
            nodata,
        })
    }

    pub fn from_categorical(raster: &CategoricalRaster) -> Self {
        let spec = *raster.spec();
        Self {
            georef: Georef::Geographic(spec),
            width: spec.width(),
            height: spec.height(),
            data: BandData::U8(raster.codes().to_vec()),
            nodata: Some(CATEGORY_NODATA as f64),
        }
    }

    pub fn spec(&self) -> Result<GridSpec> {
        match &self.georef {
            Georef::Geographic(s) => Ok(*s),
            Georef::Mollweide(_) => Err(Error::format(
                "ProjectedCSTypeGeoKey",
                "Mollweide raster has no lon/lat grid; reproject it first",
            )),
        }
    }

    fn is_nodata(&self, v: f64) -> bool {
        match self.nodata {
            Some(nd) if nd.is_nan() => v.is_nan(),
            Some(nd) => v == nd,
            None => !v.is_finite(),
        }
    }

    /// Real-valued view; no-data cells become NaN.
    pub fn to_numeric(&self) -> Result<NumericRaster> {
        let spec = self.spec()?;
        let values = (0..self.data.len())
            .map(|i| {
                let v = self.data.value(i);
                if self.is_nodata(v) {
                    f32::NAN
                } else {
                    v as f32
                }
            })
            .collect();
        NumericRaster::new(spec, values)
    }

    /// Class view for uint8 bands; no-data cells become code 255.
    pub fn to_categorical(&self, categories: &[u8]) -> Result<CategoricalRaster> {
        let spec = self.spec()?;
        let codes = self.category_codes()?;
        CategoricalRaster::new(spec, codes, categories)
    }

    fn category_codes(&self) -> Result<Vec<u8>> {
        match &self.data {
            BandData::U8(v) => Ok(v
                .iter()
                .map(|&c| if self.is_nodata(c as f64) { CATEGORY_NODATA } else { c })
                .collect()),
            _ => Err(Error::format("bits-per-sample", "categorical layers must be uint8")),
        }
    }
}

// ---------------------------------------------------------------------------
// Reading

struct Cursor<'a> {
    buf: &'a [u8],
    big_endian: bool,
}

impl Cursor<'_> {
    fn bytes(&self, off: usize, n: usize) -> Result<&[u8]> {
        self.buf
            .get(off..off.checked_add(n).ok_or_else(|| Error::format("offset", "overflow"))?)
            .ok_or_else(|| Error::format("offset", format!("read of {n} bytes at {off} past end of file")))
    }

    fn u16(&self, off: usize) -> Result<u16> {
        let b: [u8; 2] = self.bytes(off, 2)?.try_into().unwrap();
        Ok(if self.big_endian { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) })
    }

    fn u32(&self, off: usize) -> Result<u32> {
        let b: [u8; 4] = self.bytes(off, 4)?.try_into().unwrap();
        Ok(if self.big_endian { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) })
    }

    fn f64(&self, off: usize) -> Result<f64> {
        let b: [u8; 8] = self.bytes(off, 8)?.try_into().unwrap();
        Ok(if self.big_endian { f64::from_be_bytes(b) } else { f64::from_le_bytes(b) })
    }
}

struct Entry {
    tag: u16,
    kind: u16,
    count: usize,
    /// Offset of the value bytes (inline or external).
    value_offset: usize,
}

fn type_size(kind: u16) -> Option<usize> {
    match kind {
        1 | 2 | 6 | 7 => Some(1),
        3 | 8 => Some(2),
        4 | 9 | 11 => Some(4),
        5 | 10 | 12 => Some(8),
        _ => None,
    }
}

fn tag_name(tag: u16) -> &'static str {
    match tag {
        TAG_IMAGE_WIDTH => "image-width",
        TAG_IMAGE_LENGTH => "image-length",
        TAG_BITS_PER_SAMPLE => "bits-per-sample",
        TAG_COMPRESSION => "compression",
        TAG_STRIP_OFFSETS => "strip-offsets",
        TAG_SAMPLES_PER_PIXEL => "samples-per-pixel",
        TAG_ROWS_PER_STRIP => "rows-per-strip",
        TAG_STRIP_BYTE_COUNTS => "strip-byte-counts",
        TAG_PLANAR_CONFIG => "planar-configuration",
        TAG_PREDICTOR => "predictor",
        TAG_TILE_WIDTH => "tile-width",
        TAG_TILE_LENGTH => "tile-length",
        TAG_TILE_OFFSETS => "tile-offsets",
        TAG_TILE_BYTE_COUNTS => "tile-byte-counts",
        TAG_SAMPLE_FORMAT => "sample-format",
        TAG_MODEL_PIXEL_SCALE => "model-pixel-scale",
        TAG_MODEL_TIEPOINT => "model-tiepoint",
        TAG_MODEL_TRANSFORMATION => "model-transformation",
        TAG_GEO_KEY_DIRECTORY => "geo-key-directory",
        _ => "unknown",
    }
}

struct Ifd<'a> {
    cur: Cursor<'a>,
    entries: Vec<Entry>,
}

impl<'a> Ifd<'a> {
    fn parse(buf: &'a [u8]) -> Result<Self> {
        if buf.len() < 8 {
            return Err(Error::format("header", "file too short for a TIFF header"));
        }
        let big_endian = match &buf[..2] {
            b"II" => false,
            b"MM" => true,
            _ => return Err(Error::format("header", "missing TIFF byte-order mark")),
        };
        let cur = Cursor { buf, big_endian };
        match cur.u16(2)? {
            42 => {}
            43 => return Err(Error::format("header", "BigTIFF is not supported")),
            v => return Err(Error::format("header", format!("bad TIFF magic {v}"))),
        }
        let ifd = cur.u32(4)? as usize;
        let n = cur.u16(ifd)? as usize;
        let mut entries = Vec::with_capacity(n);
        for i in 0..n {
            let base = ifd + 2 + i * 12;
            let tag = cur.u16(base)?;
            let kind = cur.u16(base + 2)?;
            let count = cur.u32(base + 4)? as usize;
            let size = match type_size(kind) {
                Some(s) => s,
                None => continue,
            };
            let value_offset = if size * count <= 4 { base + 8 } else { cur.u32(base + 8)? as usize };
            entries.push(Entry {
                tag,
                kind,
                count,
                value_offset,
            });
        }
        Ok(Self { cur, entries })
    }

    fn find(&self, tag: u16) -> Option<&Entry> {
        self.entries.iter().find(|e| e.tag == tag)
    }

    fn uints(&self, tag: u16) -> Result<Option<Vec<u64>>> {
        let Some(e) = self.find(tag) else { return Ok(None) };
        let mut out = Vec::with_capacity(e.count);
        for i in 0..e.count {
            let v = match e.kind {
                1 | 7 => self.cur.bytes(e.value_offset + i, 1)?[0] as u64,
                3 => self.cur.u16(e.value_offset + 2 * i)? as u64,
                4 => self.cur.u32(e.value_offset + 4 * i)? as u64,
                _ => return Err(Error::format(tag_name(tag), format!("unexpected field type {}", e.kind))),
            };
            out.push(v);
        }
        Ok(Some(out))
    }

    fn uint(&self, tag: u16) -> Result<Option<u64>> {
        Ok(self.uints(tag)?.and_then(|v| v.first().copied()))
    }

    fn required(&self, tag: u16) -> Result<u64> {
        self.uint(tag)?
            .ok_or_else(|| Error::format(tag_name(tag), "required tag missing"))
    }

    fn doubles(&self, tag: u16) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.find(tag) else { return Ok(None) };
        if e.kind != 12 {
            return Err(Error::format(tag_name(tag), "expected DOUBLE values"));
        }
        (0..e.count)
            .map(|i| self.cur.f64(e.value_offset + 8 * i))
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn ascii(&self, tag: u16) -> Result<Option<String>> {
        let Some(e) = self.find(tag) else { return Ok(None) };
        let raw = self.cur.bytes(e.value_offset, e.count)?;
        let s = String::from_utf8_lossy(raw);
        Ok(Some(s.trim_end_matches('\0').trim().to_string()))
    }
}

pub fn read_geotiff(path: impl AsRef<Path>) -> Result<GeoTiff> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    decode_geotiff(&buf)
}

pub fn decode_geotiff(buf: &[u8]) -> Result<GeoTiff> {
    let ifd = Ifd::parse(buf)?;
    let width = ifd.required(TAG_IMAGE_WIDTH)? as usize;
    let height = ifd.required(TAG_IMAGE_LENGTH)? as usize;
    if width == 0 || height == 0 {
        return Err(Error::format("image-width", "empty image"));
    }
    let spp = ifd.uint(TAG_SAMPLES_PER_PIXEL)?.unwrap_or(1);
    if spp != 1 {
        return Err(Error::format(
            "samples-per-pixel",
            format!("{spp} bands; only single-band files are supported"),
        ));
    }
    let bits = ifd.uint(TAG_BITS_PER_SAMPLE)?.unwrap_or(1);
    let format = ifd.uint(TAG_SAMPLE_FORMAT)?.unwrap_or(1);
    let sample_type = match (bits, format) {
        (8, 1) => SampleType::U8,
        (16, 2) => SampleType::I16,
        (32, 3) => SampleType::F32,
        (8 | 16 | 32, _) => {
            return Err(Error::format(
                "sample-format",
                format!("{bits}-bit samples with format {format} are not supported"),
            ))
        }
        _ => return Err(Error::format("bits-per-sample", format!("{bits}-bit samples are not supported"))),
    };
    let compression = ifd.uint(TAG_COMPRESSION)?.unwrap_or(1);
    let deflate = match compression {
        1 => false,
        8 | 32946 => true,
        c => return Err(Error::format("compression", format!("compression scheme {c} is not supported"))),
    };
    let predictor = ifd.uint(TAG_PREDICTOR)?.unwrap_or(1);
    match (predictor, sample_type) {
        (1, _) | (2, SampleType::U8 | SampleType::I16) => {}
        _ => return Err(Error::format("predictor", format!("predictor {predictor} is not supported"))),
    }
    if ifd.find(TAG_MODEL_TRANSFORMATION).is_some() {
        return Err(Error::format(
            "model-transformation",
            "affine model transformations are not supported; use pixel scale + tiepoint",
        ));
    }

    let bps = sample_type.bytes();
    let mut raw = vec![0u8; width * height * bps];
    let decode_block = |index: usize, offsets: &[u64], counts: &[u64], expect: usize| -> Result<Vec<u8>> {
        let (off, len) = (offsets[index] as usize, counts[index] as usize);
        let bytes = ifd.cur.bytes(off, len)?;
        let mut out = if deflate {
            let mut out = Vec::with_capacity(expect);
            ZlibDecoder::new(bytes)
                .read_to_end(&mut out)
                .map_err(|e| Error::format("compression", format!("bad deflate stream: {e}")))?;
            out
        } else {
            bytes.to_vec()
        };
        if out.len() < expect {
            return Err(Error::format("strip-byte-counts", "block shorter than its declared size"));
        }
        out.truncate(expect);
        Ok(out)
    };

    if let Some(offsets) = ifd.uints(TAG_TILE_OFFSETS)? {
        let tw = ifd.required(TAG_TILE_WIDTH)? as usize;
        let th = ifd.required(TAG_TILE_LENGTH)? as usize;
        let counts = ifd
            .uints(TAG_TILE_BYTE_COUNTS)?
            .ok_or_else(|| Error::format("tile-byte-counts", "required tag missing"))?;
        let across = width.div_ceil(tw);
        let down = height.div_ceil(th);
        if offsets.len() < across * down || counts.len() < across * down {
            return Err(Error::format("tile-offsets", "fewer tiles than the image needs"));
        }
        for ty in 0..down {
            for tx in 0..across {
                let i = ty * across + tx;
                let mut block = decode_block(i, &offsets, &counts, tw * th * bps)?;
                undo_predictor(&mut block, predictor, sample_type, tw, th, ifd.cur.big_endian);
                for r in 0..th {
                    let y = ty * th + r;
                    if y >= height {
                        break;
                    }
                    let x0 = tx * tw;
                    let n = tw.min(width - x0);
                    let src = &block[r * tw * bps..(r * tw + n) * bps];
                    raw[(y * width + x0) * bps..(y * width + x0 + n) * bps].copy_from_slice(src);
                }
            }
        }
    } else {
        let offsets = ifd
            .uints(TAG_STRIP_OFFSETS)?
            .ok_or_else(|| Error::format("strip-offsets", "required tag missing"))?;
        let counts = ifd
            .uints(TAG_STRIP_BYTE_COUNTS)?
            .ok_or_else(|| Error::format("strip-byte-counts", "required tag missing"))?;
        let rps = (ifd.uint(TAG_ROWS_PER_STRIP)?.unwrap_or(height as u64) as usize).min(height);
        let strips = height.div_ceil(rps);
        if offsets.len() < strips || counts.len() < strips {
            return Err(Error::format("strip-offsets", "fewer strips than the image needs"));
        }
        for s in 0..strips {
            let rows = rps.min(height - s * rps);
            let mut block = decode_block(s, &offsets, &counts, rows * width * bps)?;
            undo_predictor(&mut block, predictor, sample_type, width, rows, ifd.cur.big_endian);
            let start = s * rps * width * bps;
            raw[start..start + block.len()].copy_from_slice(&block);
        }
    }

    let data = match sample_type {
        SampleType::U8 => BandData::U8(raw),
        SampleType::I16 => BandData::I16(
            raw.chunks_exact(2)
                .map(|b| {
                    let b = [b[0], b[1]];
                    if ifd.cur.big_endian { i16::from_be_bytes(b) } else { i16::from_le_bytes(b) }
                })
                .collect(),
        ),
        SampleType::F32 => BandData::F32(
            raw.chunks_exact(4)
                .map(|b| {
                    let b = [b[0], b[1], b[2], b[3]];
                    if ifd.cur.big_endian { f32::from_be_bytes(b) } else { f32::from_le_bytes(b) }
                })
                .collect(),
        ),
    };

    let nodata = match ifd.ascii(TAG_GDAL_NODATA)? {
        Some(s) if s.eq_ignore_ascii_case("nan") => Some(f64::NAN),
        Some(s) => Some(
            s.parse()
                .map_err(|_| Error::format("gdal-nodata", format!("unparseable no-data value {s:?}")))?,
        ),
        None => None,
    };

    let georef = read_georef(&ifd, width, height)?;
    Ok(GeoTiff {
        georef,
        width,
        height,
        data,
        nodata,
    })
}

fn undo_predictor(block: &mut [u8], predictor: u64, st: SampleType, width: usize, rows: usize, big_endian: bool) {
    if predictor != 2 {
        return;
    }
    match st {
        SampleType::U8 => {
            for r in 0..rows {
                let row = &mut block[r * width..(r + 1) * width];
                for i in 1..width {
                    row[i] = row[i].wrapping_add(row[i - 1]);
                }
            }
        }
        SampleType::I16 => {
            let get = |b: &[u8], i: usize| {
                let v = [b[2 * i], b[2 * i + 1]];
                if big_endian { u16::from_be_bytes(v) } else { u16::from_le_bytes(v) }
            };
            for r in 0..rows {
                let row = &mut block[r * width * 2..(r + 1) * width * 2];
                for i in 1..width {
                    let v = get(row, i).wrapping_add(get(row, i - 1));
                    let b = if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
                    row[2 * i..2 * i + 2].copy_from_slice(&b);
                }
            }
        }
        SampleType::F32 => {}
    }
}

fn read_georef(ifd: &Ifd<'_>, width: usize, height: usize) -> Result<Georef> {
    let scale = ifd
        .doubles(TAG_MODEL_PIXEL_SCALE)?
        .ok_or_else(|| Error::format("model-pixel-scale", "georeferencing tag missing"))?;
    let tie = ifd
        .doubles(TAG_MODEL_TIEPOINT)?
        .ok_or_else(|| Error::format("model-tiepoint", "georeferencing tag missing"))?;
    if scale.len() < 2 || tie.len() < 6 {
        return Err(Error::format("model-tiepoint", "truncated georeferencing values"));
    }
    let (sx, sy) = (scale[0], scale[1]);
    if !(sx > 0.0 && sy > 0.0) || (sx - sy).abs() > 1e-12 * sx.max(sy) {
        return Err(Error::format("model-pixel-scale", format!("non-square or non-positive pixels {sx} x {sy}")));
    }

    let mut model_type = MODEL_GEOGRAPHIC;
    let mut raster_type = 1;
    let mut projected = None;
    if let Some(keys) = ifd.uints(TAG_GEO_KEY_DIRECTORY)? {
        if keys.len() < 4 {
            return Err(Error::format("geo-key-directory", "truncated directory"));
        }
        let n = keys[3] as usize;
        for k in 0..n {
            let base = 4 + 4 * k;
            let Some(entry) = keys.get(base..base + 4) else {
                return Err(Error::format("geo-key-directory", "truncated key entry"));
            };
            // Only short values stored inline (location 0) carry the codes we need.
            if entry[1] != 0 {
                continue;
            }
            let value = entry[3] as u16;
            match entry[0] as u16 {
                KEY_MODEL_TYPE => model_type = value,
                KEY_RASTER_TYPE => raster_type = value,
                KEY_PROJECTED_CS_TYPE => projected = Some(value),
                KEY_GEOGRAPHIC_TYPE => {}
                _ => {}
            }
        }
    }

    // PixelIsPoint tiepoints refer to pixel centres.
    let half = if raster_type == RASTER_PIXEL_IS_POINT { 0.5 } else { 0.0 };
    let west = tie[3] - (tie[0] + half) * sx;
    let north = tie[4] + (tie[1] + half) * sy;

    match model_type {
        MODEL_GEOGRAPHIC => {
            let spec = GridSpec::snapped(west, north, sx * 3600.0, width, height, SNAP_TOLERANCE_DEG)?;
            if (spec.resolution_deg() - sx).abs() * width.max(height) as f64 > SNAP_TOLERANCE_DEG {
                return Err(Error::alignment(format!(
                    "pixel size {sx}° does not match a lattice resolution within tolerance"
                )));
            }
            Ok(Georef::Geographic(spec))
        }
        MODEL_PROJECTED if projected == Some(MOLLWEIDE_CODE) => Ok(Georef::Mollweide(MollweideGrid {
            west_m: west,
            north_m: north,
            pixel_m: sx,
            width,
            height,
        })),
        MODEL_PROJECTED => Err(Error::format(
            "ProjectedCSTypeGeoKey",
            format!("projected CRS {projected:?} is not supported (only lon/lat and Mollweide)"),
        )),
        other => Err(Error::format("GTModelTypeGeoKey", format!("model type {other} is not supported"))),
    }
}

// ---------------------------------------------------------------------------
// Writing

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Compression {
    #[default]
    None,
    Deflate,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct WriteOptions {
    pub compression: Compression,
    /// Tile size (multiples of 16); striped when `None`.
    pub tile: Option<(usize, usize)>,
}

enum Field {
    Short(Vec<u16>),
    Long(Vec<u32>),
    Double(Vec<f64>),
    Ascii(String),
}

impl Field {
    fn kind_count(&self) -> (u16, usize) {
        match self {
            Field::Short(v) => (3, v.len()),
            Field::Long(v) => (4, v.len()),
            Field::Double(v) => (12, v.len()),
            Field::Ascii(s) => (2, s.len() + 1),
        }
    }

    fn bytes(&self) -> Vec<u8> {
        match self {
            Field::Short(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Field::Long(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Field::Double(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            Field::Ascii(s) => s.bytes().chain(std::iter::once(0)).collect(),
        }
    }
}

fn sample_bytes(data: &BandData) -> Vec<u8> {
    match data {
        BandData::U8(v) => v.clone(),
        BandData::I16(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
        BandData::F32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
    }
}

fn compress(block: &[u8], c: Compression) -> Result<Vec<u8>> {
    match c {
        Compression::None => Ok(block.to_vec()),
        Compression::Deflate => {
            let mut enc = ZlibEncoder::new(Vec::new(), flate2::Compression::default());
            enc.write_all(block)
                .and_then(|_| enc.finish())
                .map_err(|e| Error::format("compression", e.to_string()))
        }
    }
}

/// Encodes a GeoTIFF into memory.
pub fn encode_geotiff(tiff: &GeoTiff, options: &WriteOptions) -> Result<Vec<u8>> {
    let (width, height) = (tiff.width, tiff.height);
    if tiff.data.len() != width * height {
        return Err(Error::invalid("band length does not match dimensions"));
    }
    let st = tiff.data.sample_type();
    let bps = st.bytes();
    let raw = sample_bytes(&tiff.data);

    let mut blocks = Vec::new();
    let mut layout: Vec<(u16, Field)> = Vec::new();
    match options.tile {
        Some((tw, th)) => {
            if tw == 0 || th == 0 || tw % 16 != 0 || th % 16 != 0 {
                return Err(Error::invalid("tile dimensions must be positive multiples of 16"));
            }
            for ty in 0..height.div_ceil(th) {
                for tx in 0..width.div_ceil(tw) {
                    let mut block = vec![0u8; tw * th * bps];
                    for r in 0..th {
                        let y = ty * th + r;
                        if y >= height {
                            break;
                        }
                        let x0 = tx * tw;
                        let n = tw.min(width - x0);
                        block[r * tw * bps..(r * tw + n) * bps]
                            .copy_from_slice(&raw[(y * width + x0) * bps..(y * width + x0 + n) * bps]);
                    }
                    blocks.push(compress(&block, options.compression)?);
                }
            }
            layout.push((TAG_TILE_WIDTH, Field::Long(vec![tw as u32])));
            layout.push((TAG_TILE_LENGTH, Field::Long(vec![th as u32])));
        }
        None => {
            let rps = (8192 / (width * bps)).clamp(1, height);
            for s in 0..height.div_ceil(rps) {
                let r0 = s * rps;
                let r1 = (r0 + rps).min(height);
                blocks.push(compress(&raw[r0 * width * bps..r1 * width * bps], options.compression)?);
            }
            layout.push((TAG_ROWS_PER_STRIP, Field::Long(vec![rps as u32])));
        }
    }

    let (bits, fmt) = st.bits_and_format();
    let mut fields: Vec<(u16, Field)> = vec![
        (TAG_IMAGE_WIDTH, Field::Long(vec![width as u32])),
        (TAG_IMAGE_LENGTH, Field::Long(vec![height as u32])),
        (TAG_BITS_PER_SAMPLE, Field::Short(vec![bits])),
        (
            TAG_COMPRESSION,
            Field::Short(vec![if options.compression == Compression::Deflate { 8 } else { 1 }]),
        ),
        (TAG_PHOTOMETRIC, Field::Short(vec![1])),
        (TAG_SAMPLES_PER_PIXEL, Field::Short(vec![1])),
        (TAG_PLANAR_CONFIG, Field::Short(vec![1])),
        (TAG_SAMPLE_FORMAT, Field::Short(vec![fmt])),
    ];
    fields.extend(layout);

    let (scale, tie, keys) = match &tiff.georef {
        Georef::Geographic(spec) => (
            spec.resolution_deg(),
            [spec.origin_lon(), spec.origin_lat()],
            vec![1, 1, 0, 3, KEY_MODEL_TYPE, 0, 1, MODEL_GEOGRAPHIC, KEY_RASTER_TYPE, 0, 1, 1, KEY_GEOGRAPHIC_TYPE, 0, 1, 4326],
        ),
        Georef::Mollweide(g) => (
            g.pixel_m,
            [g.west_m, g.north_m],
            vec![1, 1, 0, 3, KEY_MODEL_TYPE, 0, 1, MODEL_PROJECTED, KEY_RASTER_TYPE, 0, 1, 1, KEY_PROJECTED_CS_TYPE, 0, 1, MOLLWEIDE_CODE],
        ),
    };
    fields.push((TAG_MODEL_PIXEL_SCALE, Field::Double(vec![scale, scale, 0.0])));
    fields.push((TAG_MODEL_TIEPOINT, Field::Double(vec![0.0, 0.0, 0.0, tie[0], tie[1], 0.0])));
    fields.push((TAG_GEO_KEY_DIRECTORY, Field::Short(keys)));
    if let Some(nd) = tiff.nodata {
        let text = if nd.is_nan() { "nan".to_string() } else { format!("{nd}") };
        fields.push((TAG_GDAL_NODATA, Field::Ascii(text)));
    }
    let offsets_tag = if options.tile.is_some() { TAG_TILE_OFFSETS } else { TAG_STRIP_OFFSETS };
    let counts_tag = if options.tile.is_some() { TAG_TILE_BYTE_COUNTS } else { TAG_STRIP_BYTE_COUNTS };
    fields.push((counts_tag, Field::Long(blocks.iter().map(|b| b.len() as u32).collect())));
    // Placeholder; patched once the data offsets are known.
    fields.push((offsets_tag, Field::Long(vec![0; blocks.len()])));
    fields.sort_by_key(|(t, _)| *t);

    // Layout: header | IFD | external field values | pixel blocks.
    let ifd_offset = 8usize;
    let ifd_len = 2 + fields.len() * 12 + 4;
    let mut extern_len = 0usize;
    for (_, f) in &fields {
        let n = f.bytes().len();
        if n > 4 {
            extern_len += n + (n & 1);
        }
    }
    let mut data_offset = ifd_offset + ifd_len + extern_len;
    let mut block_offsets = Vec::with_capacity(blocks.len());
    for b in &blocks {
        block_offsets.push(data_offset as u32);
        data_offset += b.len();
    }
    for (tag, f) in fields.iter_mut() {
        if *tag == offsets_tag {
            *f = Field::Long(block_offsets.clone());
        }
    }

    let mut out = Vec::with_capacity(data_offset);
    out.extend_from_slice(b"II");
    out.extend_from_slice(&42u16.to_le_bytes());
    out.extend_from_slice(&(ifd_offset as u32).to_le_bytes());
    out.extend_from_slice(&(fields.len() as u16).to_le_bytes());
    let mut extern_data = Vec::new();
    let extern_base = ifd_offset + ifd_len;
    for (tag, f) in &fields {
        let (kind, count) = f.kind_count();
        let bytes = f.bytes();
        out.extend_from_slice(&tag.to_le_bytes());
        out.extend_from_slice(&kind.to_le_bytes());
        out.extend_from_slice(&(count as u32).to_le_bytes());
        if bytes.len() <= 4 {
            let mut inline = [0u8; 4];
            inline[..bytes.len()].copy_from_slice(&bytes);
            out.extend_from_slice(&inline);
        } else {
            out.extend_from_slice(&((extern_base + extern_data.len()) as u32).to_le_bytes());
            extern_data.extend_from_slice(&bytes);
            if bytes.len() & 1 == 1 {
                extern_data.push(0);
            }
        }
    }
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&extern_data);
    for b in &blocks {
        out.extend_from_slice(b);
    }
    Ok(out)
}

pub fn write_geotiff(path: impl AsRef<Path>, tiff: &GeoTiff, options: &WriteOptions) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_geotiff(tiff, options)?;
    let mut f = File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes)
        .and_then(|_| f.flush())
        .map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Mollweide

/// Sphere radius of ESRI:54009.
const MOLLWEIDE_RADIUS_M: f64 = 6_378_137.0;

/// Forward Mollweide projection of a lon/lat point, in metres.
pub fn mollweide_forward(lon: f64, lat: f64) -> (f64, f64) {
    let phi = lat.to_radians();
    let lambda = lon.to_radians();
    let target = std::f64::consts::PI * phi.sin();
    // Solve 2θ + sin 2θ = π sin φ by Newton iteration on θ' = 2θ.
    let mut t = phi * 2.0;
    if (phi.abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-12 {
        t = std::f64::consts::PI * phi.signum();
    } else {
        for _ in 0..50 {
            let f = t + t.sin() - target;
            let step = f / (1.0 + t.cos());
            t -= step;
            if step.abs() < 1e-14 {
                break;
            }
        }
    }
    let theta = t / 2.0;
    let r = MOLLWEIDE_RADIUS_M;
    let x = r * 2.0 * std::f64::consts::SQRT_2 / std::f64::consts::PI * lambda * theta.cos();
    let y = r * std::f64::consts::SQRT_2 * theta.sin();
    (x, y)
}

/// Nearest-neighbour resampling of a Mollweide class raster onto `target`:
/// each target cell takes the source pixel containing its projected centre.
pub fn reproject_mollweide(tiff: &GeoTiff, target: &GridSpec, categories: &[u8]) -> Result<CategoricalRaster> {
    let Georef::Mollweide(g) = &tiff.georef else {
        return Err(Error::invalid("raster is not in Mollweide"));
    };
    let codes_in = tiff.category_codes()?;
    let mut codes = vec![CATEGORY_NODATA; target.len()];
    for row in 0..target.height() {
        for col in 0..target.width() {
            let (lon, lat) = target.cell_center(row, col);
            let (x, y) = mollweide_forward(lon, lat);
            let px = ((x - g.west_m) / g.pixel_m).floor();
            let py = ((g.north_m - y) / g.pixel_m).floor();
            if px >= 0.0 && py >= 0.0 && (px as usize) < g.width && (py as usize) < g.height {
                codes[row * target.width() + col] = codes_in[py as usize * g.width + px as usize];
            }
        }
    }
    CategoricalRaster::new(*target, codes, categories)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> GridSpec {
        GridSpec::new(30.0, -1.0, 3.0, 4, 4).unwrap()
    }

    fn float_tiff() -> GeoTiff {
        let vals: Vec<f32> = (0..16).map(|i| i as f32 * 0.1 - 0.7).collect();
        let mut vals = vals;
        vals[5] = f32::NAN;
        GeoTiff::from_numeric(&NumericRaster::new(spec(), vals).unwrap(), SampleType::F32, None).unwrap()
    }

    #[test]
    fn float_round_trip_is_exact() {
        let t = float_tiff();
        let back = decode_geotiff(&encode_geotiff(&t, &WriteOptions::default()).unwrap()).unwrap();
        assert_eq!(back.georef, t.georef);
        let (BandData::F32(a), BandData::F32(b)) = (&t.data, &back.data) else { panic!() };
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(back.to_numeric().unwrap().get(1, 1).is_none());
    }

    #[test]
    fn deflate_and_tiles_match_plain() {
        let spec = GridSpec::new(30.0, -1.0, 1.0, 37, 21).unwrap();
        let codes: Vec<u8> = (0..spec.len()).map(|i| (i * 7 % 13) as u8).collect();
        let t = GeoTiff {
            georef: Georef::Geographic(spec),
            width: 37,
            height: 21,
            data: BandData::U8(codes),
            nodata: None,
        };
        let plain = decode_geotiff(&encode_geotiff(&t, &WriteOptions::default()).unwrap()).unwrap();
        for opts in [
            WriteOptions { compression: Compression::Deflate, tile: None },
            WriteOptions { compression: Compression::None, tile: Some((16, 16)) },
            WriteOptions { compression: Compression::Deflate, tile: Some((32, 16)) },
        ] {
            let other = decode_geotiff(&encode_geotiff(&t, &opts).unwrap()).unwrap();
            assert_eq!(other, plain);
        }
    }

    #[test]
    fn int16_with_nodata() {
        let vals = vec![-5.0, 300.0, f32::NAN, 7.0];
        let spec = GridSpec::new(0.0, 0.0, 30.0, 2, 2).unwrap();
        let t = GeoTiff::from_numeric(&NumericRaster::new(spec, vals).unwrap(), SampleType::I16, Some(-32768.0)).unwrap();
        let back = decode_geotiff(&encode_geotiff(&t, &WriteOptions::default()).unwrap()).unwrap();
        let n = back.to_numeric().unwrap();
        assert_eq!(n.get(0, 0), Some(-5.0));
        assert_eq!(n.get(0, 1), Some(300.0));
        assert_eq!(n.get(1, 0), None);
    }

    fn patch_short_tag(bytes: &mut [u8], tag: u16, value: u16) {
        let n = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        for i in 0..n {
            let base = 10 + 12 * i;
            if u16::from_le_bytes([bytes[base], bytes[base + 1]]) == tag {
                bytes[base + 8..base + 10].copy_from_slice(&value.to_le_bytes());
                return;
            }
        }
        panic!("tag {tag} not found");
    }

    #[test]
    fn two_band_file_names_samples_per_pixel() {
        let mut bytes = encode_geotiff(&float_tiff(), &WriteOptions::default()).unwrap();
        patch_short_tag(&mut bytes, TAG_SAMPLES_PER_PIXEL, 2);
        let err = decode_geotiff(&bytes).unwrap_err();
        assert!(matches!(err, Error::Format { ref tag, .. } if tag == "samples-per-pixel"), "{err}");
    }

    #[test]
    fn unsupported_compression_and_format_named() {
        let mut bytes = encode_geotiff(&float_tiff(), &WriteOptions::default()).unwrap();
        patch_short_tag(&mut bytes, TAG_COMPRESSION, 5);
        assert!(matches!(decode_geotiff(&bytes), Err(Error::Format { ref tag, .. }) if tag == "compression"));
        let mut bytes = encode_geotiff(&float_tiff(), &WriteOptions::default()).unwrap();
        patch_short_tag(&mut bytes, TAG_SAMPLE_FORMAT, 1);
        assert!(matches!(decode_geotiff(&bytes), Err(Error::Format { ref tag, .. }) if tag == "sample-format"));
    }

    #[test]
    fn off_lattice_origin_snaps_within_tolerance() {
        let t = float_tiff();
        let mut bytes = encode_geotiff(&t, &WriteOptions::default()).unwrap();
        // Nudge the tiepoint longitude by 1e-8 degrees: still accepted.
        let tie_pos = find_double(&bytes, spec().origin_lon());
        let nudged = spec().origin_lon() + 1e-8;
        bytes[tie_pos..tie_pos + 8].copy_from_slice(&nudged.to_le_bytes());
        assert_eq!(decode_geotiff(&bytes).unwrap().spec().unwrap(), spec());
        // A 1e-4 degree shift is rejected.
        let shifted = spec().origin_lon() + 1e-4;
        bytes[tie_pos..tie_pos + 8].copy_from_slice(&shifted.to_le_bytes());
        assert!(matches!(decode_geotiff(&bytes), Err(Error::Alignment(_))));
    }

    fn find_double(bytes: &[u8], v: f64) -> usize {
        let pat = v.to_le_bytes();
        bytes.windows(8).position(|w| w == pat).unwrap()
    }

    #[test]
    fn mollweide_equator_and_pole() {
        let (x, y) = mollweide_forward(0.0, 0.0);
        assert!(x.abs() < 1e-6 && y.abs() < 1e-6);
        let (_, y) = mollweide_forward(0.0, 90.0);
        assert!((y - MOLLWEIDE_RADIUS_M * std::f64::consts::SQRT_2).abs() < 1e-3);
        let (x, _) = mollweide_forward(180.0, 0.0);
        assert!((x - 2.0 * std::f64::consts::SQRT_2 * MOLLWEIDE_RADIUS_M).abs() < 1e-3);
    }

    #[test]
    fn mollweide_file_reprojects() {
        let g = MollweideGrid {
            west_m: -2000.0,
            north_m: 2000.0,
            pixel_m: 1000.0,
            width: 4,
            height: 4,
        };
        let codes: Vec<u8> = (0..16).map(|i| if i % 4 < 2 { 11 } else { 30 }).collect();
        let t = GeoTiff {
            georef: Georef::Mollweide(g),
            width: 4,
            height: 4,
            data: BandData::U8(codes),
            nodata: Some(255.0),
        };
        let back = decode_geotiff(&encode_geotiff(&t, &WriteOptions::default()).unwrap()).unwrap();
        assert_eq!(back.georef, t.georef);
        assert!(back.to_numeric().is_err());
        // 30" grid straddling the origin: west half lands in code 11, east in 30.
        let target = GridSpec::new(-0.025, 0.025, 30.0, 6, 6).unwrap();
        let cats = back_reproject(&back, &target);
        assert_eq!(cats.get(2, 1), Some(11));
        assert_eq!(cats.get(2, 4), Some(30));
        // Centres beyond the source extent stay no-data.
        assert_eq!(cats.get(2, 0), None);
    }

    fn back_reproject(t: &GeoTiff, target: &GridSpec) -> CategoricalRaster {
        reproject_mollweide(t, target, &[11, 30]).unwrap()
    }
}
