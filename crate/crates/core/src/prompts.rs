//! Versioned prompt texts for the LLM-backed steps.

use std::collections::BTreeMap;
use std::path::Path;

use crate::store::sha256_hex;

pub const REWRITE_V1: &str = include_str!("../assets/prompts/rewrite_v1.txt");
pub const TOPICS_V1: &str = include_str!("../assets/prompts/topics_v1.txt");
pub const PARAPHRASE_V1: &str = include_str!("../assets/prompts/paraphrase_v1.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub rewrite: String,
    pub topics: String,
    pub paraphrase: String,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            rewrite: REWRITE_V1.to_string(),
            topics: TOPICS_V1.to_string(),
            paraphrase: PARAPHRASE_V1.to_string(),
        }
    }
}

impl PromptSet {
    /// Loads `rewrite.txt`, `topics.txt` and `paraphrase.txt` from `dir`,
    /// falling back to the shipped text for any file that is absent.
    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        let mut set = Self::default();
        for (name, slot) in [
            ("rewrite.txt", &mut set.rewrite),
            ("topics.txt", &mut set.topics),
            ("paraphrase.txt", &mut set.paraphrase),
        ] {
            let path = dir.join(name);
            if path.is_file() {
                *slot = std::fs::read_to_string(path)?;
            }
        }
        Ok(set)
    }

    pub fn hashes(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("paraphrase".to_string(), sha256_hex(&self.paraphrase)),
            ("rewrite".to_string(), sha256_hex(&self.rewrite)),
            ("topics".to_string(), sha256_hex(&self.topics)),
        ])
    }
}
