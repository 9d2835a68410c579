//! Bottom-up scene understanding from per-pixel class scores.
//!
//! A multi-scale fully convolutional labeler produces class-score maps that
//! are fused by a per-pixel maximum and turned into a segmentation. The
//! segmentation then drives two further tasks: scene classification from
//! class histograms, presence vectors or spatial pyramids with linear and
//! additive-kernel SVMs, and object detection from the connected components
//! of each object class. Metrics cover all three tasks.
//!
//! | module | contents |
//! |---|---|
//! | [`grid`] | label maps, score maps, images, boxes, palettes, PNG/PXSM I/O |
//! | [`data`] | the ToyRooms synthetic dataset and manifests |
//! | [`net`] | the multi-scale network, its training loop and checkpoints |
//! | [`labeling`] | softmax, max fusion, argmax labeling |
//! | [`features`] | histograms, presence vectors, spatial pyramid |
//! | [`svm`] | kernels, dual coordinate descent, one-vs-rest models |
//! | [`detect`] | connected components and scored detections |
//! | [`eval`] | segmentation, scene and detection metrics |
//! | [`render`] | label and detection overlays |
//! | [`pipeline`] | end-to-end runs driven by a key=value config |

pub mod data;
pub mod detect;
pub mod error;
pub mod eval;
pub mod features;
pub mod grid;
pub mod labeling;
pub mod net;
pub mod pipeline;
pub mod render;
pub mod svm;

pub use error::{Error, Result};
pub use grid::{BoundingBox, ClassPalette, Grid, LabelMap, RgbImage, ScoreMap, IGNORE};
