//! Information-density driven preprocessing and self-annotation for GUI
//! screenshots.

pub mod budget;
pub mod crop;
pub mod edge;
pub mod imaging;
pub mod spectral;
pub mod srdl;
pub mod synth;
