pub mod error;
pub mod geometry;
pub mod map;
pub mod nest;
pub mod orbit;
pub mod renorm;
pub mod run;
pub mod search;
pub mod scalar;

pub use error::{Error, Result};
pub use map::{make_map, Family, Side, UnimodalMap};
pub use scalar::{BigScalar, Precision, RInterval};
pub use geometry::{GeometryReport, ParabolicProximity};
pub use nest::{build_nest, Nest, NestConfig, NestLevel, Termination};
pub use orbit::{LandingResult, OrbitCache};
pub use renorm::{Branch, CombinatoricsRecord, EssentialBound, LandingInterval, NestExplorer};
pub use run::{RunConfig, RunRecord};
pub use search::{KneadingSequence, SearchTarget};
