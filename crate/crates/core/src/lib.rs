//! Slicing-based topological shape descriptors and occlusion-aware object
//! recognition from depth images.

pub mod classifier;
pub mod cloud;
pub mod datagen;
pub mod descriptor;
pub mod error;
pub mod evaluation;
pub mod library;
pub mod normalize;
pub mod recognition;
pub mod slicing;
pub mod topology;
pub mod vectorize;

pub use classifier::{ProbClassifier, SoftmaxConfig, SoftmaxRegression};
pub use cloud::{DepthScene, Frame, Intrinsics, Point3, PointCloud, RigidTransform};
pub use datagen::{DataConfig, Dataset, Suite};
pub use descriptor::SlicedDiagrams;
pub use error::{Error, Result};
pub use evaluation::{evaluate, EvalConfig, EvalReport, EvalRow};
pub use library::{train_library, ModelLibrary, TrainConfig, TrainingView, ViewSet};
pub use normalize::{compute_obb, normalize, AlignedCloud, MirrorMask, ObbFrame};
pub use recognition::{recognize, recognize_scene, Observation, OccludedEnd, RecognitionConfig, RecognitionResult, ScalePolicy};
pub use slicing::{ColumnOrigin, ColumnizedSlice, Slice, SliceParams};
pub use topology::{EssentialPolicy, PersistenceDiagram, PersistencePair};
pub use vectorize::{ObjectDescriptor, PiParams, Weighting};
