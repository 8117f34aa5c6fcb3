//! Closed vocabulary shared by instructions and landmark summaries.

use std::collections::HashMap;

#[derive(Debug)]
pub struct Vocab {
    words: Vec<&'static str>,
    index: HashMap<&'static str, u32>,
}

pub const PAD: u32 = 0;

/// District names, one per geo-cell, in cell order.
pub const DISTRICTS: [&str; 16] = [
    "harborside",
    "milltown",
    "oldgate",
    "parkrow",
    "ironfield",
    "lakeview",
    "stonecross",
    "easthollow",
    "westmoor",
    "northbank",
    "southferry",
    "clayhill",
    "birchway",
    "saltmarket",
    "kingsyard",
    "foxglen",
];

const WORDS: &[&str] = &[
    // specials and punctuation
    "[pad]",
    ".",
    // navigation verbs and function words
    "you",
    "start",
    "facing",
    "go",
    "walk",
    "head",
    "straight",
    "turn",
    "left",
    "right",
    "at",
    "past",
    "toward",
    "the",
    "then",
    "stop",
    "by",
    "blocks",
    "block",
    "corner",
    "reach",
    "continue",
    "ahead",
    "and",
    // counting words
    "one",
    "two",
    "three",
    "four",
    "five",
    "six",
    // tints
    "red",
    "blue",
    "green",
    "yellow",
    "purple",
    "orange",
    // fills
    "plain",
    "striped",
    "dotted",
    "checked",
    // shape nouns
    "fountain",
    "kiosk",
    "tower",
    "statue",
    "bench",
    "sign",
    "arch",
    "booth",
    // districts
    "harborside",
    "milltown",
    "oldgate",
    "parkrow",
    "ironfield",
    "lakeview",
    "stonecross",
    "easthollow",
    "westmoor",
    "northbank",
    "southferry",
    "clayhill",
    "birchway",
    "saltmarket",
    "kingsyard",
    "foxglen",
    // summary filler
    "stands",
    "in",
    "quarter",
    "it",
    "serves",
    "visitors",
    "note",
    "its",
    "front",
    "trade",
    "daily",
    "busy",
    "quiet",
    "famous",
    "local",
    "morning",
    "evening",
    "market",
    "crowd",
    "school",
    "garden",
    "office",
    "bakery",
    "library",
    "museum",
    "near",
    "painted",
    "stone",
    "timber",
    "brick",
];

impl Vocab {
    fn build() -> Vocab {
        let mut index = HashMap::new();
        for (i, &w) in WORDS.iter().enumerate() {
            let prev = index.insert(w, i as u32);
            assert!(prev.is_none(), "duplicate vocabulary word {}", w);
        }
        Vocab { words: WORDS.to_vec(), index }
    }

    /// The process-wide vocabulary. Construction is deterministic, so ids
    /// are stable across runs and machines.
    pub fn shared() -> &'static Vocab {
        use std::sync::OnceLock;
        static V: OnceLock<Vocab> = OnceLock::new();
        V.get_or_init(Vocab::build)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of a known word. Generators only emit vocabulary words, so a miss
    /// is a programming error.
    pub fn id(&self, w: &str) -> u32 {
        *self.index.get(w).unwrap_or_else(|| panic!("word not in vocabulary: {}", w))
    }

    pub fn word(&self, id: u32) -> &'static str {
        self.words[id as usize]
    }

    pub fn number_word(&self, n: usize) -> u32 {
        let w = match n {
            1 => "one",
            2 => "two",
            3 => "three",
            4 => "four",
            5 => "five",
            6 => "six",
            _ => panic!("no counting word for {}", n),
        };
        self.id(w)
    }

    pub fn district(&self, cell: usize) -> u32 {
        self.id(DISTRICTS[cell])
    }

    pub fn decode(&self, toks: &[u32]) -> String {
        toks.iter().map(|&t| self.word(t)).collect::<Vec<_>>().join(" ")
    }
}
