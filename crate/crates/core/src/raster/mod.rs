//! Image containers and the raster primitives shared by every pipeline stage.

mod image;
pub mod io;
mod ops;

pub use self::image::{BinaryImage, Bounds, GrayImage, PixelPoint, Roi};
pub use self::ops::{count_intersection, dilate, extract_roi, perimeter_pixels_in, rasterize_ellipse_perimeter, scale_image};
