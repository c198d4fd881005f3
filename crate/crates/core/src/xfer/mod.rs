//! Rewrite rules: representation, generation, storage, matching, and application.

mod format;
mod generate;
mod influence;
mod matching;
mod rule;

pub use format::{load_ruleset, parse_ruleset, ruleset_to_string, save_ruleset, FORMAT_VERSION};
pub use generate::{generate_ruleset, GenConfig, GenReport};
pub use influence::influenced_gates;
pub use matching::{apply, match_at, match_at_pos, valid_xfers, Match};
pub use rule::{ibm_extra_rules, RuleSet, Transformation};
