//! Seeded generator of terminal-area arrival traffic.

mod config;
mod generate;

pub use config::{AirspaceConfig, EntryFix, MergeFix, Noise, PerWtc, SeparationMatrix};
pub use generate::{
    check_separation, dogleg_apex, generate_corpus, inversion_rate, nominal_route_nm,
    sequencing_delay, Corpus, GeneratedFlight, GenerationReport, SeparationViolation,
};
