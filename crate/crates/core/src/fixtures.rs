//! Bundled benchmark instances (fully antiferromagnetic complete graphs).

use crate::ising::IsingProblem;

pub const K4_ANTIFERROMAGNET: &str = include_str!("../fixtures/k4_antiferromagnet.json");
pub const K8_HARDER: &str = include_str!("../fixtures/k8_harder.json");
pub const K8_EASIER: &str = include_str!("../fixtures/k8_easier.json");
pub const K10_HARDER: &str = include_str!("../fixtures/k10_harder.json");
pub const K10_EASIER: &str = include_str!("../fixtures/k10_easier.json");

fn parse(text: &str) -> IsingProblem {
    IsingProblem::from_json(text).expect("bundled fixture parses")
}

/// `K_4` with every `J_ij = 1` and no fields.
pub fn k4_antiferromagnet() -> IsingProblem {
    parse(K4_ANTIFERROMAGNET)
}

pub fn k8_harder() -> IsingProblem {
    parse(K8_HARDER)
}

pub fn k8_easier() -> IsingProblem {
    parse(K8_EASIER)
}

pub fn k10_harder() -> IsingProblem {
    parse(K10_HARDER)
}

pub fn k10_easier() -> IsingProblem {
    parse(K10_EASIER)
}

/// Looks up a fixture by file stem, e.g. `"k8_harder"`.
pub fn by_name(name: &str) -> Option<IsingProblem> {
    match name {
        "k4_antiferromagnet" | "k4" => Some(k4_antiferromagnet()),
        "k8_harder" => Some(k8_harder()),
        "k8_easier" => Some(k8_easier()),
        "k10_harder" => Some(k10_harder()),
        "k10_easier" => Some(k10_easier()),
        _ => None,
    }
}
