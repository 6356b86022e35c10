//! The four reference experiments on the second-order plant.

use std::fmt;
use std::str::FromStr;

use asynctrig::horizon::DEFAULT_CAP;
use asynctrig::{Disturbance, Mode, PlantModel};

use crate::config::{
    CertificateSection, Discretization, HorizonSection, OutputSection, PartitionSection, RunConfig,
    SimulationSection,
};
use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    OnlineUnperturbed,
    OfflineUnperturbed,
    OnlinePerturbed,
    OfflinePerturbed,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::OnlineUnperturbed,
        Preset::OfflineUnperturbed,
        Preset::OnlinePerturbed,
        Preset::OfflinePerturbed,
    ];

    pub fn mode(self) -> Mode {
        match self {
            Preset::OnlineUnperturbed => Mode::OnlineUnperturbed,
            Preset::OfflineUnperturbed => Mode::OfflineUnperturbed,
            Preset::OnlinePerturbed => Mode::OnlinePerturbed,
            Preset::OfflinePerturbed => Mode::OfflinePerturbed,
        }
    }

    pub fn name(self) -> &'static str {
        self.mode().name()
    }

    /// Utilization reduction reported for the original experiment.
    pub fn reported_reduction(self) -> f64 {
        match self {
            Preset::OnlineUnperturbed => 0.7358,
            Preset::OfflineUnperturbed => 0.7027,
            Preset::OnlinePerturbed => 0.6894,
            Preset::OfflinePerturbed => 0.5921,
        }
    }

    pub fn config(self) -> RunConfig {
        let mode = self.mode();
        let perturbed = mode.is_perturbed();
        let (t, l_min, l_max, regions, x0, total_steps) = match self {
            Preset::OnlineUnperturbed => (0.3, 1, 3, 0, vec![5.0, -2.0, 5.0, -2.0], 100),
            Preset::OfflineUnperturbed => (0.205, 1, 6, 15, vec![15.0, -1.5, 15.0, -1.5], 150),
            Preset::OnlinePerturbed => (0.205, 1, 6, 0, vec![5.0, -2.0], 150),
            Preset::OfflinePerturbed => (0.205, 3, 6, 15, vec![15.0, -1.5, 15.0, -1.5], 150),
        };
        RunConfig {
            plant: if perturbed { PlantModel::second_order_perturbed() } else { PlantModel::second_order() },
            discretization: Discretization { t },
            horizons: HorizonSection { l_min, l_max, cap: DEFAULT_CAP },
            mode,
            certificate: CertificateSection::default(),
            partition: PartitionSection { regions },
            simulation: SimulationSection {
                x0,
                total_steps,
                seed: 0,
                substeps: 100,
                disturbance: perturbed.then(Disturbance::sine_5pi),
            },
            output: OutputSection::default(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                CliError::Config(format!("unknown preset {s:?}; expected one of {}", names.join(", ")))
            })
    }
}
