//! Built-in configurations, addressable as `preset:NAME`.

const PRESETS: &[(&str, &str)] = &[
    ("bulk-2d", include_str!("../../../presets/bulk-2d.toml")),
    ("bulk-2d-compliance", include_str!("../../../presets/bulk-2d-compliance.toml")),
    ("bulk-3d", include_str!("../../../presets/bulk-3d.toml")),
    ("fatigue-bulk-3d", include_str!("../../../presets/fatigue-bulk-3d.toml")),
    ("fatigue-shear-2d", include_str!("../../../presets/fatigue-shear-2d.toml")),
    ("fatigue-shear-3d", include_str!("../../../presets/fatigue-shear-3d.toml")),
    ("gradcheck-2d", include_str!("../../../presets/gradcheck-2d.toml")),
    ("gradcheck-3d", include_str!("../../../presets/gradcheck-3d.toml")),
    ("poisson-2d", include_str!("../../../presets/poisson-2d.toml")),
    ("shear-2d", include_str!("../../../presets/shear-2d.toml")),
    ("shear-2d-compliance", include_str!("../../../presets/shear-2d-compliance.toml")),
];

/// Config text of a built-in preset.
pub fn get(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}
