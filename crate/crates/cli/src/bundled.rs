//! Scenarios shipped with the binary.

use qcl_core::error::Result;
use qcl_core::scenario::{parse_scenario, Scenario};

pub struct Bundled {
    pub name: &'static str,
    pub json: &'static str,
}

impl Bundled {
    pub fn parse(&self) -> Result<Scenario> {
        parse_scenario(self.json)
    }
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(Bundled { name: $name, json: include_str!(concat!("../scenarios/", $name, ".json")) }),*]
    };
}

pub const ALL: &[Bundled] = bundled![
    "free_packet_qt",
    "coherent_state_qt",
    "quartic_ehrenfest",
    "burgers_focusing_qa",
    "gaussian_qa_cwe",
    "free_shear_pm",
    "harmonic_qa_2d",
    "vortex_qt_2d",
];

pub fn find(name: &str) -> Option<&'static Bundled> {
    ALL.iter().find(|b| b.name == name)
}
