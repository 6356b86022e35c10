//! Fixtures shared by the benchmarks.

use asynctrig::certificate::synthesize_unperturbed;
use asynctrig::{DiscretePlant, HorizonBank, PlantModel, UnperturbedCertificate};

/// Bank for the second-order plant at `t` with lengths in `[l_min, l_max]`.
pub fn bank(t: f64, l_min: usize, l_max: usize) -> HorizonBank {
    let dp = DiscretePlant::new(&PlantModel::second_order(), t).expect("valid plant");
    HorizonBank::build(&dp, l_min, l_max, 1 << 20).expect("bank fits the cap")
}

/// Certificate on the first stable candidate that admits one.
pub fn certificate(bank: &HorizonBank, t: f64) -> UnperturbedCertificate {
    bank.stable_candidates()
        .into_iter()
        .find_map(|i| synthesize_unperturbed(&bank.transitions[i], &bank.horizons[i], 0.0, t).ok())
        .expect("a stable horizon exists")
}
