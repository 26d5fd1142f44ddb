//! Small text utilities shared by the agents, the dialogue engine and export:
//! tokenizing, whole-word matching, n-gram overlap and the two keyword
//! lexicons (emotion and conflict).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Lowercase word tokens. Apostrophes inside a word are kept ("can't").
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        let ch = if ch == '\u{2019}' { '\'' } else { ch };
        if ch.is_alphanumeric() || ch == '\'' {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            push_word(&mut out, &mut cur);
        }
    }
    if !cur.is_empty() {
        push_word(&mut out, &mut cur);
    }
    out
}

fn push_word(out: &mut Vec<String>, cur: &mut String) {
    let w = cur.trim_matches('\'');
    if !w.is_empty() {
        out.push(w.to_owned());
    }
    cur.clear();
}

/// Whitespace-separated word count, the unit of the token estimator.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Estimated tokens: words x 1.3, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    (word_count(text) * 13).div_ceil(10)
}

/// Position of the first whole-word, case-insensitive occurrence of `phrase`.
pub fn find_phrase(haystack: &[String], phrase: &str) -> Option<usize> {
    let needle = words(phrase);
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle.as_slice())
}

pub fn contains_phrase(text: &str, phrase: &str) -> bool {
    find_phrase(&words(text), phrase).is_some()
}

/// Case- and punctuation-insensitive form used for repeat detection.
pub fn normalized(text: &str) -> String {
    words(text).join(" ")
}

fn ngrams(ws: &[String]) -> BTreeSet<String> {
    if ws.len() < 2 {
        ws.iter().cloned().collect()
    } else {
        ws.windows(2).map(|w| format!("{} {}", w[0], w[1])).collect()
    }
}

/// Jaccard similarity of word bigrams (unigrams for one-word lines).
pub fn bigram_jaccard(a: &str, b: &str) -> f64 {
    let (ga, gb) = (ngrams(&words(a)), ngrams(&words(b)));
    if ga.is_empty() && gb.is_empty() {
        return 0.0;
    }
    let inter = ga.intersection(&gb).count() as f64;
    let union = ga.union(&gb).count() as f64;
    inter / union
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emotion {
    Angry,
    Sad,
    Afraid,
    Joyful,
    Calm,
}

impl Emotion {
    pub const ALL: [Emotion; 5] = [
        Emotion::Angry,
        Emotion::Sad,
        Emotion::Afraid,
        Emotion::Joyful,
        Emotion::Calm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Angry => "angry",
            Emotion::Sad => "sad",
            Emotion::Afraid => "afraid",
            Emotion::Joyful => "joyful",
            Emotion::Calm => "calm",
        }
    }

    pub fn parse(s: &str) -> Option<Emotion> {
        let s = s.trim().to_lowercase();
        Emotion::ALL.into_iter().find(|e| e.as_str() == s)
    }

    /// Noun used when a line's mood qualifies an action ("approach with anger").
    pub fn tone_noun(self) -> &'static str {
        match self {
            Emotion::Angry => "anger",
            Emotion::Sad => "sorrow",
            Emotion::Afraid => "fear",
            Emotion::Joyful => "joy",
            Emotion::Calm => "calm",
        }
    }

    fn cues(self) -> &'static [&'static str] {
        match self {
            Emotion::Angry => &[
                "angry",
                "anger",
                "furious",
                "evil",
                "tyrant",
                "dare",
                "enough",
                "hate",
                "tired",
                "oaf",
                "stupid",
                "sniveling",
                "asshole",
                "bull",
                "kill",
                "excuses",
                "nonsense",
                "greed",
                "terrible",
                "undoing",
            ],
            Emotion::Sad => &[
                "sad",
                "sadness",
                "sorry",
                "sorrow",
                "died",
                "tears",
                "starving",
                "grieving",
                "lament",
                "orphanage",
                "hungry",
                "eaten",
                "please",
                "cry",
                "chance",
                "past",
            ],
            Emotion::Afraid => &[
                "afraid",
                "fear",
                "scared",
                "run",
                "help",
                "danger",
                "threaten",
                "desperation",
                "careful",
                "consequence",
                "fallout",
            ],
            Emotion::Joyful => &[
                "ha",
                "glad",
                "delightful",
                "thank",
                "appreciate",
                "hope",
                "dream",
                "joys",
                "triumph",
                "great",
                "date",
                "wonderful",
                "love",
                "happy",
            ],
            Emotion::Calm => &[
                "calm",
                "reasonable",
                "order",
                "consider",
                "perhaps",
                "noted",
                "indeed",
                "peace",
                "welcome",
                "hello",
                "good",
            ],
        }
    }
}

/// Dominant emotion by keyword hits; ties go to the earlier entry of [`Emotion::ALL`].
pub fn classify_emotion(text: &str) -> Option<Emotion> {
    let ws = words(text);
    let mut best: Option<(usize, Emotion)> = None;
    for e in Emotion::ALL {
        let hits = ws.iter().filter(|w| e.cues().contains(&w.as_str())).count();
        if hits > 0 && best.is_none_or(|(h, _)| hits > h) {
            best = Some((hits, e));
        }
    }
    best.map(|(_, e)| e)
}

/// Weighted conflict cues; multi-word entries match as whole phrases.
const CONFLICT_CUES: &[(&str, f64)] = &[
    ("gun", 3.0),
    ("pistol", 3.0),
    ("weapon", 3.0),
    ("kill", 3.0),
    ("end your life", 3.0),
    ("vengeance", 2.0),
    ("revenge", 2.0),
    ("died", 2.0),
    ("die", 2.0),
    ("death", 2.0),
    ("evil", 2.0),
    ("tyrant", 2.0),
    ("threaten", 2.0),
    ("steal", 2.0),
    ("fight", 2.0),
    ("attack", 2.0),
    ("hate", 2.0),
    ("blood", 2.0),
    ("point it at", 2.0),
    ("how dare", 2.0),
    ("enough", 1.0),
    ("starving", 1.0),
    ("greed", 1.0),
    ("tired", 1.0),
    ("terrible", 1.0),
    ("run", 1.0),
    ("oaf", 1.0),
    ("stupid", 1.0),
    ("nonsense", 1.0),
    ("excuses", 1.0),
    ("authority", 1.0),
    ("crime", 1.0),
    ("folly", 1.0),
    ("desperation", 1.0),
    ("undoing", 1.0),
    ("asshole", 1.0),
    ("sniveling", 1.0),
];

/// Density at which tension saturates at 10.
pub const TENSION_SATURATION: f64 = 0.1;

/// Weighted conflict-cue hits in `text`.
pub fn conflict_hits(text: &str) -> f64 {
    let ws = words(text);
    let mut total = 0.0;
    for (cue, weight) in CONFLICT_CUES {
        let needle = words(cue);
        if needle.len() > ws.len() {
            continue;
        }
        let n = ws.windows(needle.len()).filter(|w| *w == needle.as_slice()).count();
        total += n as f64 * weight;
    }
    total
}

/// Weighted conflict hits per word, 0 for empty text.
pub fn conflict_density(text: &str) -> f64 {
    let n = words(text).len();
    if n == 0 {
        0.0
    } else {
        conflict_hits(text) / n as f64
    }
}

/// Tension 1..=10 from conflict density.
pub fn tension_of(text: &str) -> u8 {
    let x = (conflict_density(text) / TENSION_SATURATION).min(1.0);
    1 + (9.0 * x).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_strip_punctuation_and_case() {
        assert_eq!(
            words("Give Mary her bread-back!"),
            ["give", "mary", "her", "bread", "back"]
        );
        assert_eq!(words("you're \u{2018}Robin\u{2019}"), ["you're", "robin"]);
    }

    #[test]
    fn estimator_rounds_up() {
        let hundred = vec!["w"; 100].join(" ");
        assert_eq!(estimate_tokens(&hundred), 130);
        assert_eq!(estimate_tokens("one"), 2);
        assert_eq!(estimate_tokens(""), 0);
    }

    #[test]
    fn phrase_match_is_whole_word() {
        assert!(contains_phrase("my sack of money!", "Sack of Money"));
        assert!(!contains_phrase("Maryland is far", "mary"));
    }

    #[test]
    fn jaccard_bounds() {
        assert_eq!(bigram_jaccard("a b c", "a b c"), 1.0);
        assert_eq!(bigram_jaccard("a b", "c d"), 0.0);
    }

    #[test]
    fn calm_greeting_has_low_tension() {
        assert!(tension_of("Hello there, welcome to the hall. Good day to you.") <= 2);
    }

    #[test]
    fn gun_line_saturates() {
        let line = "I take this gun in my hands and I point it at thee. Robin, run! I will kill him!";
        assert!(tension_of(line) >= 8);
    }
}
