use super::{ExportBundle, ExportError};
use crate::backend::{DigestBeat, GenerationBackend, SynopsisDigest};
use crate::text::tension_of;

pub fn synopsis_digest(bundle: &ExportBundle) -> SynopsisDigest {
    SynopsisDigest {
        title: bundle.title.clone(),
        location: bundle.roles.location.clone(),
        beats: bundle
            .beat_lines()
            .into_iter()
            .map(|(m, lines)| DigestBeat {
                summary: m.card.summary.clone(),
                characters: m.card.characters.clone(),
                tension: bundle.frame_of(m).tension,
                lines: lines
                    .into_iter()
                    .map(|l| (bundle.name_of(&l.speaker), l.text.clone()))
                    .collect(),
            })
            .collect(),
    }
}

/// Marble index ranges for the three paragraphs; short timelines reuse marbles.
fn terciles(k: usize) -> [std::ops::Range<usize>; 3] {
    std::array::from_fn(|i| {
        let (a, b) = (i * k / 3, (i + 1) * k / 3);
        if a < b {
            a..b
        } else {
            let j = a.min(k - 1);
            j..j + 1
        }
    })
}

fn sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    for (n, &(i, c)) in bytes.iter().enumerate() {
        let next_is_space = bytes.get(n + 1).is_none_or(|(_, c)| c.is_whitespace());
        if matches!(c, '.' | '!' | '?') && next_is_space {
            let s = text[start..i + c.len_utf8()].trim();
            if !s.is_empty() {
                out.push(s);
            }
            start = i + c.len_utf8();
        }
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest);
    }
    out
}

/// The most conflicted sentence in the given beats, earliest on ties.
fn best_quote(beats: &[DigestBeat]) -> Option<(&str, &str)> {
    let mut best: Option<(u8, &str, &str)> = None;
    for b in beats {
        for (who, text) in &b.lines {
            for s in sentences(text)
                .into_iter()
                .filter(|s| !s.contains(['"', '\u{201C}', '\u{201D}']))
            {
                let t = tension_of(s);
                if best.is_none_or(|(bt, _, _)| t > bt) {
                    best = Some((t, who, s));
                }
            }
        }
    }
    best.map(|(_, w, s)| (w, s))
}

fn sentence(s: &str) -> String {
    let s = s.trim();
    if s.ends_with(['.', '!', '?']) {
        s.to_owned()
    } else {
        format!("{s}.")
    }
}

/// Three paragraphs from the digest: each summarizes a third of the beats and
/// quotes its most conflicted line.
pub fn template_synopsis(digest: &SynopsisDigest) -> Option<String> {
    let k = digest.beats.len();
    if k == 0 {
        return None;
    }
    let openers = [
        format!("{} opens in {}.", digest.title, digest.location),
        "The story develops.".to_owned(),
        "The story comes to its end.".to_owned(),
    ];
    let paragraphs: Vec<String> = terciles(k)
        .into_iter()
        .zip(openers)
        .map(|(range, opener)| {
            let beats = &digest.beats[range.clone()];
            let mut p = opener;
            for b in beats {
                p.push(' ');
                p.push_str(&sentence(&b.summary));
            }
            // Nearest beat with dialogue when this third has none.
            let quote = best_quote(beats).or_else(|| {
                (1..k).find_map(|d| {
                    let lo = range.start.checked_sub(d).map(|i| &digest.beats[i..i + 1]);
                    let hi = (range.end - 1 + d < k).then(|| &digest.beats[range.end - 1 + d..range.end + d]);
                    hi.and_then(best_quote).or_else(|| lo.and_then(best_quote))
                })
            });
            if let Some((who, q)) = quote {
                p.push_str(&format!(" {who} says, \"{q}\""));
            }
            p
        })
        .collect();
    Some(paragraphs.join("\n\n"))
}

/// Text between straight or curly double quotes.
pub fn quoted_segments(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, c) in text.char_indices() {
        match (c, open) {
            ('"' | '\u{201C}', None) => open = Some(i + c.len_utf8()),
            ('"' | '\u{201D}', Some(s)) => {
                out.push(&text[s..i]);
                open = None;
            }
            _ => {}
        }
    }
    out
}

/// Three paragraphs, each quoting at least one line from `history` verbatim.
pub fn validate_synopsis(text: &str, history: &[&str]) -> Result<(), String> {
    let paras: Vec<&str> = text.split("\n\n").map(str::trim).filter(|p| !p.is_empty()).collect();
    if paras.len() != 3 {
        return Err(format!("expected 3 paragraphs, found {}", paras.len()));
    }
    for (i, p) in paras.iter().enumerate() {
        let ok = quoted_segments(p)
            .iter()
            .any(|q| !q.trim().is_empty() && history.iter().any(|h| h.contains(q)));
        if !ok {
            return Err(format!("paragraph {} quotes no dialogue line", i + 1));
        }
    }
    Ok(())
}

/// Asks the backend; a reply that breaks the format falls back to the template.
pub fn export_summary(bundle: &ExportBundle, backend: &dyn GenerationBackend) -> Result<String, ExportError> {
    if bundle.marbles.is_empty() {
        return Err(ExportError::EmptyTimeline);
    }
    let digest = synopsis_digest(bundle);
    let text = backend.compose_synopsis(&digest)?;
    let history: Vec<&str> = bundle.dialogue.iter().map(|l| l.text.as_str()).collect();
    match validate_synopsis(&text, &history) {
        Ok(()) => Ok(text),
        Err(reason) => {
            tracing::warn!(%reason, "backend synopsis rejected; using the template");
            Ok(template_synopsis(&digest).expect("digest has beats"))
        }
    }
}
