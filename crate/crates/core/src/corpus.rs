//! Contracts bundled with the toolkit.

pub const PUZZLE: &str = include_str!("../corpus/puzzle.txsc");
pub const BLOCKKING: &str = include_str!("../corpus/blockking.txsc");

/// Every bundled contract as `(file name, source)`.
pub const CONTRACTS: [(&str, &str); 2] = [("puzzle.txsc", PUZZLE), ("blockking.txsc", BLOCKKING)];

/// Check exclusions used to rewrite the Puzzle contract.
pub const PUZZLE_TRANSFORM: &str = include_str!("../corpus/puzzle.transform.toml");
/// The Puzzle contract as rewritten under [`PUZZLE_TRANSFORM`].
pub const PUZZLE_TRANSFORMED: &str = include_str!("../corpus/puzzle.transformed.txsc");

pub fn source(file: &str) -> Option<&'static str> {
    CONTRACTS.iter().find(|(f, _)| *f == file).map(|(_, s)| *s)
}

/// Bundled simulation scenarios as `(name, TOML)`.
pub const SCENARIOS: [(&str, &str); 5] = [
    ("puzzle", include_str!("../corpus/scenarios/puzzle.toml")),
    ("blockking", include_str!("../corpus/scenarios/blockking.toml")),
    ("blockking-locked", include_str!("../corpus/scenarios/blockking-locked.toml")),
    ("lost-callback", include_str!("../corpus/scenarios/lost-callback.toml")),
    ("out-of-gas", include_str!("../corpus/scenarios/out-of-gas.toml")),
];

pub fn scenario(name: &str) -> Option<&'static str> {
    SCENARIOS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}
