//! Local-region interpretation: primitives, relations, candidate search and a
//! random-forest relevance model.

pub mod candidates;
pub mod edgemap;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod forest;
pub mod formats;
pub mod geometry;
pub mod pipeline;
pub mod relations;
pub mod synth;

pub use candidates::{build_candidate_pool, CandidateConfig, CandidatePool};
pub use edgemap::{compute_edge_map, EdgeMap, EdgeParams};
pub use error::{Error, Result};
pub use experiment::{run_ablation, run_tier, AblationReport, ExperimentData, TierRun};
pub use evaluate::{ablation_compare, evaluate_dataset, AblationResult, EvalConfig, MetricsReport, SlotMetrics};
pub use forest::{predict, train_forest, ForestConfig, TrainedForest};
pub use formats::{AnnotationRecord, BindingLiteral, DatasetManifest, InterpretationRecord, Label, ManifestEntry, Split};
pub use geometry::{
    ContourPrimitive, LocalRegionImage, PointKind, PointPrimitive, Primitive, PrimitiveType, RegionPrimitive, Vec2,
};
pub use pipeline::{
    interpret, Assignment, ModelSchema, SlotSpec, TrainConfig, TrainReport, TrainedModel, TrainingMeta,
};
pub use relations::{compute_relation_vector, LibraryTier, RelationSchema, RelationVector};
pub use synth::{brute_force_interpret, generate_dataset, generate_scene, head8_schema, SceneParams, SyntheticScene};
