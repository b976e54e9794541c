pub mod decode;
pub mod fit;
pub mod gen_synthetic;
pub mod simulate;
pub mod stats;
