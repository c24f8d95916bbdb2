use asg_core::CodebookMode;

/// (name, k, m, mode) for the reference configurations.
pub const PRESETS: &[(&str, usize, usize, CodebookMode)] = &[
    ("mbert-k512-m48", 512, 48, CodebookMode::Separate),
    ("xlmr-k1024-m48", 1024, 48, CodebookMode::Separate),
    ("mt5-k1024-m32", 1024, 32, CodebookMode::Separate),
    ("mt5-k2048-m32", 2048, 32, CodebookMode::Separate),
    ("mt5-k8192-m32", 8192, 32, CodebookMode::Separate),
    ("mt5-k1024-m64", 1024, 64, CodebookMode::Separate),
    ("mt5-shared-k16384-m32", 16384, 32, CodebookMode::Shared),
    ("mt5-shared-k32768-m32", 32768, 32, CodebookMode::Shared),
    ("mt5-shared-k32768-m64", 32768, 64, CodebookMode::Shared),
    ("biobert-k128-m48", 128, 48, CodebookMode::Separate),
    ("biobert-k512-m48", 512, 48, CodebookMode::Separate),
];

pub fn lookup(name: &str) -> Option<(usize, usize, CodebookMode)> {
    PRESETS
        .iter()
        .find(|(n, ..)| *n == name)
        .map(|&(_, k, m, mode)| (k, m, mode))
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, ..)| *n).collect()
}
