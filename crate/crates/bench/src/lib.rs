//! Shared inputs for the benchmarks.

use locint_core::pipeline::train_interpretation_model;
use locint_core::synth::SyntheticDataset;
use locint_core::{generate_dataset, head8_schema, ForestConfig, LibraryTier, SceneParams, Split, TrainConfig, TrainedModel};

/// A small dataset and a model trained on it with reduced forest and beam sizes.
pub fn trained_fixture(seed: u64) -> (SyntheticDataset, TrainedModel) {
    let data = generate_dataset(40, 80, &SceneParams::default(), seed).expect("dataset");
    let pos: Vec<_> = data.train_positives().collect();
    let anns: Vec<_> = pos.iter().map(|s| s.annotation.clone()).collect();
    let imgs: Vec<_> = pos.iter().map(|s| s.image.clone()).collect();
    let negs: Vec<_> = data.negatives_in(Split::Train).cloned().collect();
    let config = TrainConfig { forest: ForestConfig { n_trees: 40, ..ForestConfig::new(seed) }, ..TrainConfig::new(seed) };
    let (model, _) =
        train_interpretation_model(&anns, &imgs, &negs, &head8_schema(LibraryTier::Full), &config).expect("training");
    (data, model)
}
