//! Interactive training of a convolutional membrane classifier from sparse
//! annotations, plus the segmentation evaluation pipeline used to compare it
//! against dense offline training and gray-value thresholding.

pub mod image;
pub mod nn;
pub mod sampling;
pub mod segmetrics;
pub mod trainer;
