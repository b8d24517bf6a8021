//! Configurations bundled with the binary.

pub struct Preset {
    pub name: &'static str,
    pub source: &'static str,
}

macro_rules! presets {
    ($($name:literal),* $(,)?) => {
        &[$(Preset { name: $name, source: include_str!(concat!("../../../presets/", $name, ".toml")) }),*]
    };
}

pub const PRESETS: &[Preset] = presets!(
    "euclid-equality",
    "ou-contraction",
    "hemisphere-talagrand",
    "sphere-logsobolev",
    "disk-boundary",
    "annulus-nonconvex",
);

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

impl Preset {
    /// The `description` field of the preset.
    pub fn description(&self) -> String {
        crate::config::parse(self.source).ok().and_then(|c| c.description).unwrap_or_default()
    }
}
