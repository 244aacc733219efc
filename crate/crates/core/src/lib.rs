//! Content-aware image and video retargeting.
//!
//! Two operators resize an image to a new width and height while protecting
//! the regions an importance map marks as salient:
//!
//! * [`seam::retarget_seam`] removes (or inserts) connected low-energy seams.
//! * [`warp::retarget_warp`] deforms a quad mesh laid over a segmentation of
//!   the image, keeping important patches similar and letting the rest scale.
//!
//! Both return a [`field::FieldChain`] describing where every source point
//! went, which [`metrics::ars`] turns into a quality score.
//!
//! ```
//! use retarget_core::{energy::EnergyProvider, seam::{retarget_seam, TargetSpec}, RasterImage};
//!
//! let img = RasterImage::from_fn(12, 8, |x, y| [(x * 20) as u8, (y * 30) as u8, 90]).unwrap();
//! let (out, field) = retarget_seam(&img, &EnergyProvider::gradient(), TargetSpec::new(9, 8)).unwrap();
//! assert_eq!((out.width(), out.height()), (9, 8));
//! assert_eq!(field.steps.len(), 1);
//! ```

pub mod energy;
pub mod error;
pub mod field;
pub mod metrics;
pub mod raster;
pub mod seam;
pub mod segment;
pub mod warp;

pub use error::{Error, Result};
pub use field::{DeformationField, FieldChain, MeshCorrespondence};
pub use raster::{Dims, ImportanceMap, RasterImage, ScalarGrid};
