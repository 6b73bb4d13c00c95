//! Synthetic scene generator, simulated detector/proxy models, and the
//! bundled simulator profile that stands in for trained neural models.

pub mod detector;
pub mod rng;
pub mod scene;

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use detector::{detect, proxy_scores, NoiseModel, ProxyLevel, SimulatedDetector};
pub use rng::{stream_rng, STREAM_DETECT, STREAM_PROXY, STREAM_SCENE, STREAM_TRAINING};
pub use scene::{generate, generate_clip, Clip, PathSpec, SceneError, SceneSpec, SyntheticDataset};

use crate::cost::{ArchId, CostModel, ProxyLevelId};
use crate::geometry::FrameDims;

/// Everything the pipeline needs to stand in for trained models: the cost
/// model plus per-architecture detector noise and the trained proxy levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimProfile {
    pub cost: CostModel,
    pub arch_noise: BTreeMap<ArchId, NoiseModel>,
    pub proxy_levels: Vec<ProxyLevel>,
}

impl SimProfile {
    /// Two detector architectures (a heavy accurate one and a light fast
    /// one) and five proxy levels over the given native frame size, with
    /// noise that worsens as resolution drops so speed/accuracy curves are
    /// non-trivial.
    pub fn default_for(native: FrameDims) -> Self {
        let mut detect_tables = BTreeMap::new();
        detect_tables.insert(ArchId(0), CostModel::affine_arch_table(native, 0.5, 0.05));
        detect_tables.insert(ArchId(1), CostModel::affine_arch_table(native, 0.2, 0.02));

        let mut proxy_costs = BTreeMap::new();
        let mut proxy_levels = Vec::new();
        let flips = [0.001, 0.005, 0.02, 0.05, 0.1];
        let grades = [0.15, 0.2, 0.3, 0.4, 0.45];
        for i in 0..5u32 {
            let id = ProxyLevelId(i);
            proxy_costs.insert(id, 0.35 * libm::pow(0.6, f64::from(i)));
            proxy_levels.push(ProxyLevel { id, flip: flips[i as usize], grade: grades[i as usize] });
        }

        let cost = CostModel::new(detect_tables, proxy_costs, 0.004, 0.01, 0.05)
            .expect("default cost tables are valid");

        let mut arch_noise = BTreeMap::new();
        arch_noise.insert(
            ArchId(0),
            NoiseModel {
                miss_midpoint: 10.0,
                miss_steepness: 0.7,
                jitter_base: 0.5,
                dup_rate: 0.02,
            },
        );
        arch_noise.insert(
            ArchId(1),
            NoiseModel {
                miss_midpoint: 18.0,
                miss_steepness: 0.45,
                jitter_base: 1.0,
                dup_rate: 0.008,
            },
        );

        Self { cost, arch_noise, proxy_levels }
    }

    /// Same structure with all detector and proxy noise removed; the full
    /// pipeline is then an exact oracle at native settings.
    pub fn noiseless_for(native: FrameDims) -> Self {
        let mut p = Self::default_for(native);
        for noise in p.arch_noise.values_mut() {
            *noise = NoiseModel::zero();
        }
        for level in &mut p.proxy_levels {
            *level = ProxyLevel::noiseless(level.id);
        }
        p
    }

    pub fn noise_for(&self, arch: ArchId) -> NoiseModel {
        self.arch_noise.get(&arch).copied().unwrap_or_else(NoiseModel::zero)
    }

    pub fn proxy_level(&self, id: ProxyLevelId) -> Option<&ProxyLevel> {
        self.proxy_levels.iter().find(|l| l.id == id)
    }
}
