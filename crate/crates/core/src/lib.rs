//! Joint optimization of a neural signed distance function and a
//! neural cross field over triangle meshes, plus the field analysis and
//! quad-mesh metrics used to evaluate the result.

pub mod analysis;
pub mod angle;
pub mod checkpoint;
pub mod diff;
pub mod error;
pub mod feature_lines;
pub mod linalg;
pub mod losses;
pub mod mesh;
pub mod obj;
pub mod quad;
pub mod sampling;
pub mod sdf;
pub mod shapes;
pub mod train;
pub mod trig;

pub use error::{Error, Result};
