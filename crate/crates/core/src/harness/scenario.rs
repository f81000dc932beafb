//! Named presets. Each is a TOML document that overrides and environment
//! variables are layered on, exactly as for a configuration file.
//!
//! All PKS presets start from the same Gaussian blob (mass `1.5 * 8 pi`,
//! `sigma = 0.4`, centred at the origin) with the chemical at the x-average of
//! its equilibrium, so its x-dependent part vanishes. Blow-up is declared once
//! `max n` reaches 5 times its initial value: on the default 64 x 257 grid a
//! collapsing core outruns the x resolution long before the library default of
//! 1000 could be reached.

use std::path::Path;

use toml::Table;

use super::config::{from_document, parse_document, RunConfig};
use crate::error::{PksError, Result};

pub const SCENARIOS: [&str; 4] = [
    "blowup_noflow",
    "suppression",
    "passive_scalar_ed",
    "elliptic_comparison",
];

const BLOWUP_NOFLOW: &str = r#"
[model]
A = 1.0

[model.shear]
name = "couette"
amplitude = 0.0

[initial.density]
kind = "gaussian_blob"

[initial.chemical]
kind = "mean_equilibrium"

[time]
t_end = 10.0
cfl = 0.5
blowup_factor = 5.0

[output]
directory = "pks-out/blowup_noflow"
stride = 0.025
"#;

const SUPPRESSION: &str = r#"
[model]
A = 1.0e4

[initial.density]
kind = "gaussian_blob"

[initial.chemical]
kind = "mean_equilibrium"

[time]
cfl = 1.0
blowup_factor = 5.0

[output]
directory = "pks-out/suppression"

[fit]
column = "h2"
window = [5.0, 50.0]
scaled = true
"#;

const PASSIVE_SCALAR_ED: &str = r#"
[grid]
nx = 8
ny = 1025

[model]
A = 1.0e3

[initial.density]
kind = "single_mode"
k = 1
amplitude = 1.0
width = 1.0

[time]
mode = "passive_scalar"
t_end_scaled = 3.5

[hypo]
k_report = 1

[output]
directory = "pks-out/passive_scalar_ed"

[fit]
column = "phi_k1"
window = [1.5, 3.0]
scaled = true
"#;

/// The raw preset document for `name`.
pub fn preset(name: &str) -> Result<Table> {
    let text = match name {
        "blowup_noflow" => BLOWUP_NOFLOW,
        "suppression" | "elliptic_comparison" => SUPPRESSION,
        "passive_scalar_ed" => PASSIVE_SCALAR_ED,
        other => {
            return Err(PksError::Config(format!(
                "unknown scenario '{other}'; valid names: {}",
                SCENARIOS.join(", ")
            )))
        }
    };
    let mut doc = parse_document(text, Path::new(name))?;
    if name == "elliptic_comparison" {
        super::config::apply_override(&mut doc, "model.epsilon", "0")?;
        super::config::apply_override(
            &mut doc,
            "output.directory",
            "\"pks-out/elliptic_comparison\"",
        )?;
    }
    Ok(doc)
}

/// Resolved configuration of a preset after `overrides`.
pub fn scenario_config(name: &str, overrides: &[(String, String)]) -> Result<RunConfig> {
    from_document(preset(name)?, overrides)
}
