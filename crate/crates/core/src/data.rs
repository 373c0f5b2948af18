//! Default artifacts compiled into the library. Every one of them can be
//! replaced by a user-supplied file in the same format.

pub const SUBSTITUTIONS_TSV: &str = include_str!("../data/substitutions.tsv");
pub const RULESET_JSON: &str = include_str!("../data/ruleset.json");
pub const TOXICITY_TSV: &str = include_str!("../data/toxicity.tsv");
pub const VALENCE_TSV: &str = include_str!("../data/valence.tsv");
pub const BOOSTERS_TSV: &str = include_str!("../data/boosters.tsv");
pub const NEGATORS_TXT: &str = include_str!("../data/negators.txt");
pub const THESAURUS_TSV: &str = include_str!("../data/thesaurus.tsv");
pub const STOPWORDS_TXT: &str = include_str!("../data/stopwords.txt");
pub const MILDER_TSV: &str = include_str!("../data/milder.tsv");
