//! Built-in scenarios.

use crate::config::Config;
use crate::error::CliError;

/// `(name, source)` in listing order.
pub const BUILTIN: &[(&str, &str)] = &[
    ("fig3a", include_str!("../scenarios/fig3a.toml")),
    ("fig3b", include_str!("../scenarios/fig3b.toml")),
    ("fig4", include_str!("../scenarios/fig4.toml")),
    ("fig5", include_str!("../scenarios/fig5.toml")),
    ("fig6-sweep", include_str!("../scenarios/fig6-sweep.toml")),
    ("transit", include_str!("../scenarios/transit.toml")),
    ("ext-shift", include_str!("../scenarios/ext-shift.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn load(name: &str) -> Result<Config, CliError> {
    let text = source(name).ok_or_else(|| {
        let known: Vec<&str> = names().collect();
        CliError::Config(format!("unknown scenario '{name}' (known: {})", known.join(", ")))
    })?;
    Config::parse(text, name)
}
