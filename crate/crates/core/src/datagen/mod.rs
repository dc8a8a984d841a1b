//! Synthetic scenes: primitive meshes, ray-cast depth rendering, training
//! views, occluder placement and the evaluation suites.

pub mod mesh;
pub mod render;
pub mod scene;
pub mod suite;
pub mod views;

pub use mesh::{PrimitiveKind, TriMesh};
pub use render::render_depth;
pub use scene::{look_at, Camera, SceneObject, SceneSpec, OCCLUDER_LABEL};
pub use suite::{generate, load_dataset, write_dataset, ClassSpec, DataConfig, Dataset, Family, Suite, CATALOG};
pub use views::{gen_occluded_scene, gen_occluded_scene_along, gen_training_views, icosahedron_directions, OccludedScene, OccluderConfig, RenderedView};
