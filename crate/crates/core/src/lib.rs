//! Content-adaptive multiscale superpixels.
//!
//! An image is Haar-transformed per channel, detail coefficients are hard
//! thresholded with an iteratively estimated universal threshold, and the
//! surviving coefficients tag a quadtree whose leaves become the superpixel
//! cells. Small cells gather along edges and texture, large cells fill flat
//! regions, and the cell count follows the image content.
//!
//! ```
//! use wavemesh::imageio::{pad_image, Image, PadMode};
//! use wavemesh::mesh::superpixel_image;
//! use wavemesh::graph::build_rag;
//!
//! let mut data = vec![0.0; 28 * 28];
//! for y in 8..20 {
//!     for x in 10..18 {
//!         data[y * 28 + x] = 1.0;
//!     }
//! }
//! let img = pad_image(&Image::new(28, 28, 1, data).unwrap(), PadMode::Zero).uncropped();
//! let mesh = superpixel_image(&img, 1.0).unwrap();
//! let graph = build_rag(&mesh, &img).unwrap();
//! assert_eq!(graph.nodes.len(), mesh.len());
//! assert!(mesh.len() > 1);
//! ```

pub mod cli;
pub mod error;
pub mod filter;
pub mod graph;
pub mod imageio;
pub mod mesh;
pub mod metrics;
pub mod wavelet;

pub use error::{Error, Result};
pub use filter::{apply_threshold, estimate_threshold, universal_threshold, FilterMask, Threshold};
pub use graph::{build_rag, wavepool, Aggregation, PoolAssignment, RagGraph};
pub use imageio::{pad_image, Crop, Image, PadMode};
pub use mesh::{build_tag_tree, calibrate_multiplier, generate_mesh, superpixel_image, Cell, SuperpixelMesh, TagTree};
pub use metrics::{asa, explained_variation, mesh_stats, GroundTruthSegmentation, MeshStats};
pub use wavelet::{forward_haar, inverse_haar, Direction, ImageChannel, WaveletPyramid};
