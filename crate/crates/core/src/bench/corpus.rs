//! Seeded synthetic inputs for tests and benchmarks.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn zeros(n: usize) -> Vec<u8> {
    vec![0; n]
}

pub fn random(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = vec![0u8; n];
    rng.fill(v.as_mut_slice());
    v
}

/// Uniform i.i.d. text over `ACGT`.
pub fn dna(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect()
}

const FUNCTION_WORDS: &[&str] = &[
    "the", "of", "and", "to", "a", "in", "that", "is", "was", "he", "for", "it", "with", "as", "his", "on", "be",
    "at", "by", "i", "this", "had", "not", "are", "but", "from", "or", "have", "an", "they", "which", "one", "you",
    "were", "her", "all", "she", "there", "would", "their", "we", "him", "been", "has", "when", "who", "will",
    "more", "no", "if", "out", "so", "said", "what", "up", "its", "about", "into", "than", "them", "can", "only",
    "other", "new", "some", "could", "time", "these", "two", "may", "then", "do", "first", "any", "my", "now",
    "such", "like", "our", "over", "man", "me", "even", "most", "made", "after", "also", "did", "many", "before",
    "must", "through", "back", "years", "where", "much", "your", "way", "well", "down", "should", "because",
    "each", "just", "those", "people", "how", "too", "little", "state", "good", "very", "make", "world", "still",
    "own", "see", "men", "work", "long", "get", "here", "between", "both", "life", "being", "under", "never",
    "day", "same", "another", "know", "while", "last", "might", "us", "great", "old", "year", "off", "come",
    "since", "against", "go", "came", "right", "used", "take", "three",
];

const TOPICS: &[&[&str]] = &[
    &[
        "river", "valley", "mountain", "forest", "rain", "winter", "village", "bridge", "stone", "water", "snow",
        "field", "harvest", "farmer", "road", "north", "cold", "wind", "trees", "hills",
    ],
    &[
        "government", "council", "election", "minister", "policy", "law", "court", "citizens", "public", "vote",
        "party", "members", "office", "report", "committee", "budget", "tax", "reform", "power", "nation",
    ],
    &[
        "music", "song", "band", "album", "guitar", "concert", "singer", "record", "stage", "audience", "piano",
        "tour", "sound", "voice", "rhythm", "studio", "songs", "played", "released", "single",
    ],
    &[
        "system", "data", "computer", "network", "program", "memory", "software", "users", "machine", "signal",
        "process", "design", "code", "file", "version", "method", "model", "server", "input", "output",
    ],
    &[
        "ship", "sea", "captain", "island", "coast", "sailors", "harbor", "voyage", "waves", "boat", "crew",
        "storm", "port", "ocean", "deck", "anchor", "shore", "fleet", "sail", "tide",
    ],
];

/// Word-level English-like prose: Zipf-weighted function words mixed with a
/// topic vocabulary that changes between paragraphs, with capitalized
/// sentences, commas, and blank-line paragraph breaks.
pub fn english_like(n: usize, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zipf = |len: usize| WeightedIndex::new((1..=len).map(|r| 1.0 / r as f64)).unwrap();
    let common = zipf(FUNCTION_WORDS.len());
    let topical = zipf(TOPICS[0].len());
    let mut out = Vec::with_capacity(n + 64);
    while out.len() < n {
        let topic = TOPICS[rng.gen_range(0..TOPICS.len())];
        for _ in 0..rng.gen_range(3..8) {
            let words = rng.gen_range(6..18);
            for w in 0..words {
                let word = if rng.gen_bool(0.35) {
                    topic[topical.sample(&mut rng)]
                } else {
                    FUNCTION_WORDS[common.sample(&mut rng)]
                };
                if w == 0 {
                    let mut chars = word.bytes();
                    out.push(chars.next().unwrap().to_ascii_uppercase());
                    out.extend(chars);
                } else {
                    out.extend_from_slice(word.as_bytes());
                }
                if w + 1 < words {
                    if rng.gen_bool(0.08) {
                        out.push(b',');
                    }
                    out.push(b' ');
                }
            }
            out.extend_from_slice(b". ");
        }
        out.extend_from_slice(b"\n\n");
    }
    out.truncate(n);
    out
}

/// Concatenation of text, DNA, random and zero segments of equal length.
pub fn mixed(n: usize, seed: u64) -> Vec<u8> {
    let q = n / 4;
    let mut out = english_like(q, seed);
    out.extend(dna(q, seed ^ 1));
    out.extend(random(q, seed ^ 2));
    out.extend(zeros(n - 3 * q));
    out
}
