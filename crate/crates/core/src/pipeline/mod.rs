//! Training and inference orchestration.

mod gate;
mod mining;
mod search;
mod train;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{Primitive, PrimitiveType};
use crate::relations::LibraryTier;

pub use gate::{fit_gate, GateBox, GeometricGate, Interval, PairGate};
pub use mining::{gradient_descriptor, mine_confusable_windows, MinedWindow, MiningConfig, Window};
pub use search::{
    brute_force_over, interpret, interpret_with, interpret_with_pool, prepare_slot_candidates, Diagnostics,
    Interpretation, SlotCandidate, SlotCandidates,
};
pub use train::{
    build_positive_vectors, refine_annotations, sample_negative_vectors, train_interpretation_model, NegativeSampling,
    TrainConfig, TrainReport, TrainedModel, TrainingMeta,
};

/// One named, typed position of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub id: String,
    pub name: String,
    pub primitive_type: PrimitiveType,
}

/// Slot layout for one local-region class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSchema {
    pub class_name: String,
    pub slots: Vec<SlotSpec>,
    pub relation_tier: LibraryTier,
}

impl ModelSchema {
    pub fn new(class_name: impl Into<String>, slots: Vec<SlotSpec>, relation_tier: LibraryTier) -> Result<Self> {
        let s = Self { class_name: class_name.into(), slots, relation_tier };
        s.validate()?;
        Ok(s)
    }

    /// Schema with slots `s0, s1, …` of the given types.
    pub fn from_types(class_name: &str, types: &[PrimitiveType], relation_tier: LibraryTier) -> Self {
        Self {
            class_name: class_name.to_string(),
            slots: types
                .iter()
                .enumerate()
                .map(|(i, t)| SlotSpec { id: format!("s{i}"), name: format!("slot {i}"), primitive_type: *t })
                .collect(),
            relation_tier,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots.is_empty() {
            return Err(invalid("schema needs at least one slot"));
        }
        let ids: BTreeSet<&str> = self.slots.iter().map(|s| s.id.as_str()).collect();
        if ids.len() != self.slots.len() {
            return Err(invalid("schema slot ids must be unique"));
        }
        Ok(())
    }

    pub fn slot_index(&self, id: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.id == id)
    }

    pub fn with_tier(&self, tier: LibraryTier) -> Self {
        Self { relation_tier: tier, ..self.clone() }
    }
}

/// A (partial or complete) binding of primitives to slots.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pub bindings: BTreeMap<String, Primitive>,
    pub score: Option<f64>,
}

impl Assignment {
    /// Builds an assignment from primitives listed in schema slot order.
    pub fn from_slots(schema: &ModelSchema, prims: Vec<Primitive>, score: Option<f64>) -> Result<Self> {
        if prims.len() != schema.slots.len() {
            return Err(invalid("primitive count does not match schema"));
        }
        let mut bindings = BTreeMap::new();
        for (slot, p) in schema.slots.iter().zip(prims) {
            if p.primitive_type() != slot.primitive_type {
                return Err(invalid(format!("slot `{}` expects a {}", slot.id, slot.primitive_type)));
            }
            bindings.insert(slot.id.clone(), p);
        }
        Ok(Self { bindings, score })
    }

    pub fn get(&self, slot_id: &str) -> Option<&Primitive> {
        self.bindings.get(slot_id)
    }

    pub fn is_complete(&self, schema: &ModelSchema) -> bool {
        schema.slots.iter().all(|s| self.bindings.contains_key(&s.id))
    }
}
