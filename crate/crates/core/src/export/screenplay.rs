use serde::{Deserialize, Serialize};

use super::{ExportBundle, ExportError};
use crate::log::DialogueLine;

pub const FADE_IN: &str = "FADE IN:";
pub const FADE_OUT: &str = "FADE OUT.";
pub const THE_END: &str = "THE END";
pub const DIALOGUE_MARKER: &str = "======= SYSTEM: DIALOGUE HISTORY STARTED =======";
pub const PROVENANCE_NOTE: &str =
    "The sentences below in quotation marks (\"\") are generated by the AI agent, and without are the user input.";
const TRACKING_NOTE: &str = "Ready to track conversations...";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    User,
    AI,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenplayLine {
    /// Uppercase cue.
    pub speaker: String,
    pub text: String,
    pub provenance: Provenance,
    /// None for scripted preamble lines.
    pub event_id: Option<u64>,
}

impl ScreenplayLine {
    fn from_dialogue(l: &DialogueLine, name: &str) -> Self {
        Self {
            speaker: name.to_uppercase(),
            text: l.text.clone(),
            provenance: if l.is_ai() { Provenance::AI } else { Provenance::User },
            event_id: Some(l.event_id),
        }
    }

    /// The dialogue paragraph as printed.
    pub fn rendered_text(&self) -> String {
        let flat = self.text.split_whitespace().collect::<Vec<_>>().join(" ");
        match self.provenance {
            Provenance::AI => format!("\"{flat}\""),
            Provenance::User => flat,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenplayBeat {
    pub marble_id: String,
    pub summary: String,
    pub lines: Vec<ScreenplayLine>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CastEntry {
    pub name: String,
    pub lines: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Screenplay {
    pub slug: String,
    /// Most lines first; ties in scene order.
    pub cast: Vec<CastEntry>,
    pub preamble: Vec<ScreenplayLine>,
    pub beats: Vec<ScreenplayBeat>,
}

fn join_names(names: &[&str]) -> String {
    match names {
        [] => String::new(),
        [one] => (*one).to_owned(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

impl Screenplay {
    pub fn lines(&self) -> impl Iterator<Item = &ScreenplayLine> {
        self.beats.iter().flat_map(|b| b.lines.iter())
    }

    /// Fountain-style plain text.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut para = |s: &str| {
            out.push_str(s);
            out.push_str("\n\n");
        };
        para(FADE_IN);
        para(&self.slug);
        let names: Vec<&str> = self.cast.iter().map(|c| c.name.as_str()).collect();
        para(&format!("{} are present.", join_names(&names)));
        let counts: Vec<String> = self.cast.iter().map(|c| format!("{} {}", c.name, c.lines)).collect();
        para(&format!("[[Lines by character: {}]]", counts.join(", ")));
        let block = |l: &ScreenplayLine| format!("{}\n{}", l.speaker, l.rendered_text());
        for l in &self.preamble {
            para(&block(l));
        }
        para(DIALOGUE_MARKER);
        para(PROVENANCE_NOTE);
        para(TRACKING_NOTE);
        for (i, b) in self.beats.iter().enumerate() {
            para(&format!(
                "# {}. {}",
                i + 1,
                b.summary.split_whitespace().collect::<Vec<_>>().join(" ")
            ));
            for l in &b.lines {
                para(&block(l));
            }
        }
        para(FADE_OUT);
        out.push_str(THE_END);
        out.push('\n');
        out
    }
}

pub fn export_screenplay(bundle: &ExportBundle) -> Result<Screenplay, ExportError> {
    if bundle.marbles.is_empty() {
        return Err(ExportError::EmptyTimeline);
    }
    let beats: Vec<ScreenplayBeat> = bundle
        .beat_lines()
        .into_iter()
        .map(|(m, lines)| ScreenplayBeat {
            marble_id: m.marble_id.clone(),
            summary: m.card.summary.clone(),
            lines: lines
                .into_iter()
                .map(|l| ScreenplayLine::from_dialogue(l, &bundle.name_of(&l.speaker)))
                .collect(),
        })
        .collect();
    let mut cast: Vec<(usize, usize, CastEntry)> = bundle
        .cast
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let n = bundle.dialogue.iter().filter(|l| l.speaker == c.id).count();
            (
                n,
                i,
                CastEntry {
                    name: c.name.clone(),
                    lines: n,
                },
            )
        })
        .collect();
    cast.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(Screenplay {
        slug: bundle.environment_label.to_uppercase(),
        cast: cast.into_iter().map(|(_, _, c)| c).collect(),
        preamble: bundle
            .preamble
            .iter()
            .map(|p| ScreenplayLine {
                speaker: bundle.name_of(&p.speaker).to_uppercase(),
                text: p.text.clone(),
                provenance: Provenance::User,
                event_id: None,
            })
            .collect(),
        beats,
    })
}

/// A dialogue block read back from rendered text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LintedLine {
    pub speaker: String,
    pub text: String,
    pub quoted: bool,
    /// After the dialogue-history marker.
    pub recorded: bool,
}

fn is_cue(s: &str) -> bool {
    s.chars().any(char::is_alphabetic)
        && s.chars().all(|c| !c.is_lowercase())
        && !s.starts_with('#')
        && !s.starts_with("[[")
        && !s.starts_with('=')
        && ![FADE_IN, FADE_OUT, THE_END].contains(&s)
}

/// Checks the structural conventions and returns every dialogue block.
pub fn lint_screenplay(text: &str) -> Result<Vec<LintedLine>, Vec<String>> {
    let paras: Vec<&str> = text.split("\n\n").map(str::trim).filter(|p| !p.is_empty()).collect();
    let mut errors = Vec::new();
    if paras.first() != Some(&FADE_IN) {
        errors.push(format!("must open with `{FADE_IN}`"));
    }
    match paras.get(1) {
        Some(slug)
            if (slug.starts_with("INT.") || slug.starts_with("EXT.")) && !slug.chars().any(char::is_lowercase) => {}
        _ => errors.push("second paragraph must be an uppercase INT./EXT. slug line".into()),
    }
    let n = paras.len();
    if n < 2 || paras[n - 2] != FADE_OUT || paras[n - 1] != THE_END {
        errors.push(format!("must close with `{FADE_OUT}` then `{THE_END}`"));
    }
    let markers = paras.iter().filter(|p| **p == DIALOGUE_MARKER).count();
    if markers != 1 {
        errors.push(format!("expected one dialogue-history marker, found {markers}"));
    }
    let mut out = Vec::new();
    let mut recorded = false;
    for (i, p) in paras.iter().enumerate() {
        if *p == DIALOGUE_MARKER {
            recorded = true;
            continue;
        }
        let mut parts = p.splitn(2, '\n');
        let head = parts.next().unwrap_or_default();
        let Some(body) = parts.next() else {
            continue;
        };
        if !is_cue(head) {
            errors.push(format!("paragraph {i}: `{head}` is not an uppercase speaker cue"));
            continue;
        }
        if body.contains('\n') || body.trim().is_empty() {
            errors.push(format!("paragraph {i}: dialogue must be one non-empty line"));
            continue;
        }
        let quoted = body.len() >= 2 && body.starts_with('"') && body.ends_with('"');
        out.push(LintedLine {
            speaker: head.to_owned(),
            text: if quoted {
                body[1..body.len() - 1].to_owned()
            } else {
                body.to_owned()
            },
            quoted,
            recorded,
        });
    }
    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testkit::*;
    use super::*;

    fn sample() -> ExportBundle {
        bundle(
            vec![
                (1000, "Robin confronts Lord Pemberton", 5, vec![]),
                (3000, "Robin steals the gold", 4, vec![]),
            ],
            vec![
                line(0, 500, "robin", "You evil man.", false),
                line(
                    1,
                    600,
                    "pemberton",
                    "If you seek something from me, Robin, make it clear.",
                    true,
                ),
                line(2, 2500, "robin", "Now I have your sack of money!", false),
            ],
        )
    }

    #[test]
    fn conventions() {
        let sp = export_screenplay(&sample()).unwrap();
        let text = sp.render();
        assert!(text.starts_with("FADE IN:\n\nEXT. CITY HALL - DAY\n\n"));
        assert!(text.ends_with("FADE OUT.\n\nTHE END\n"));
        assert!(text.contains("LORD PEMBERTON\n\"If you seek something from me, Robin, make it clear.\"\n"));
        assert!(text.contains("ROBIN HOOD\nYou evil man.\n"));
        assert!(text.contains("Robin Hood, Lord Pemberton and Mary are present."));
        assert_eq!(
            sp.cast[0],
            CastEntry {
                name: "Robin Hood".into(),
                lines: 2
            }
        );
        let linted = lint_screenplay(&text).unwrap();
        let recorded: Vec<_> = linted.iter().filter(|l| l.recorded).collect();
        assert_eq!(recorded.len(), 3);
        assert!(recorded[1].quoted && !recorded[0].quoted);
        assert_eq!(linted.iter().filter(|l| !l.recorded).count(), 5);
    }

    #[test]
    fn no_ai_lines_means_no_quotes() {
        let b = bundle(vec![(100, "a", 1, vec![])], vec![line(0, 50, "mary", "Hello.", false)]);
        let linted = lint_screenplay(&export_screenplay(&b).unwrap().render()).unwrap();
        assert!(linted.iter().all(|l| !l.quoted));
    }

    #[test]
    fn linter_rejects_broken_text() {
        let good = export_screenplay(&sample()).unwrap().render();
        assert!(lint_screenplay(&good.replace("FADE IN:", "FADE")).is_err());
        assert!(lint_screenplay(&good.replace("THE END", "END")).is_err());
        assert!(lint_screenplay(&good.replace("ROBIN HOOD\n", "Robin Hood\n")).is_err());
    }
}
