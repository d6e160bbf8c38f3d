//! Two-stage model fitting, the optimizer it runs on, and hyperparameter
//! grid search.
//!
//! Stage one trains the emission and posterior networks against the full
//! variational objective with the hidden-state prior held uniform; stage
//! two freezes them and trains the prior network alone on the transition
//! term. The freeze is checkable from outside: [`group_hashes`] fingerprints
//! each parameter family, and a [`TrainReport`] carries the fingerprints
//! taken between and after the stages.

mod adam;
mod grid;
mod stages;

pub use adam::{clip_global_norm, Adam, CLIP_GLOBAL_NORM};
pub use grid::{
    CellScore, GridAxes, GridCell, GridOutcome, GridSearch, SelectionMetric,
};
pub use stages::{fit, EpochRecord, StageOutcome, TrainConfig, TrainReport};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::{NhmmModel, ParamGroup};

/// Hex digests of the three parameter families. Two models agree on a
/// family exactly when the digests match, so a stage that must not touch a
/// family can prove it did not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupHashes {
    pub emissions: String,
    pub prior: String,
    pub posterior: String,
}

/// Fingerprints each parameter family over the canonical parameter order:
/// name bytes, a zero separator, shape extents, then raw values.
pub fn group_hashes(model: &NhmmModel) -> GroupHashes {
    let mut digests = [Sha256::new(), Sha256::new(), Sha256::new()];
    for (name, tensor) in model.params() {
        let digest = match ParamGroup::of(&name) {
            ParamGroup::Emission => &mut digests[0],
            ParamGroup::Prior => &mut digests[1],
            ParamGroup::Posterior => &mut digests[2],
        };
        digest.update(name.as_bytes());
        digest.update([0u8]);
        for &dim in tensor.shape() {
            digest.update((dim as u64).to_le_bytes());
        }
        for &value in tensor.data() {
            digest.update(value.to_le_bytes());
        }
    }
    let mut hex = digests
        .into_iter()
        .map(|d| d.finalize().iter().map(|b| format!("{b:02x}")).collect::<String>());
    GroupHashes {
        emissions: hex.next().unwrap(),
        prior: hex.next().unwrap(),
        posterior: hex.next().unwrap(),
    }
}
