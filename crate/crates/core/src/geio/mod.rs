//! File formats: GeoTIFF subset, footprint CSV, GeoJSON extents and regions,
//! HDI tables, binary raster caches and report writers.

pub mod cache;
pub mod report;
pub mod tiff;
pub mod vector;

pub use cache::{read_binary_raster, write_binary_raster};
pub use report::{fmt_g6, write_report, Report, ReportFormat};
pub use tiff::{read_geotiff, write_geotiff, BandData, Compression, GeoTiff, Georef, SampleType, WriteOptions};
pub use vector::{
    read_extents_geojson, read_extents_geojson_with, read_footprints_csv, read_footprints_csv_with, read_hdi_csv,
    read_regions_geojson, read_regions_geojson_with, write_extents_geojson, write_footprints_csv, write_hdi_csv,
    write_regions_geojson, AdminRegion, ExtentOptions, ExtentRecord, FootprintCsvOptions, FootprintRecord, HdiTable,
    MissingProperty, RegionOptions,
};
