//! Configuration files shipped with the crate. Each can be overridden by a
//! file path in the pipeline config.

pub const SCHEMA: &str = include_str!("../resources/schema.csv");
pub const LEXICON: &str = include_str!("../resources/lexicon.tsv");
pub const PATTERNS: &str = include_str!("../resources/patterns.tsv");
pub const CODE_MAP: &str = include_str!("../resources/code_map.tsv");
pub const HEADERS: &str = include_str!("../resources/headers.tsv");
