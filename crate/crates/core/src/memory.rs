use serde::{Deserialize, Serialize};

/// The four per-round history streams plus the condensed summary handed to the strategist.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryState {
    pub memory_scene: Vec<String>,
    pub memory_thought: Vec<String>,
    pub memory_guide: Vec<String>,
    pub memory_comforting: Vec<String>,
    pub summary: String,
}

impl MemoryState {
    pub(crate) fn truncate(&mut self, len: usize) {
        self.memory_scene.truncate(len);
        self.memory_thought.truncate(len);
        self.memory_guide.truncate(len);
        self.memory_comforting.truncate(len);
    }
}

/// Renders a history stream for a prompt placeholder: one `Round k: ...` line per
/// entry, empty text when there is no history yet.
pub fn render_stream(entries: &[String]) -> String {
    entries
        .iter()
        .enumerate()
        .map(|(k, text)| format!("Round {}: {}", k + 1, text.trim()))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One summary line per round, `scene — thoughts`.
pub fn summary_line(scene: &str, thoughts: &str) -> String {
    format!("{} — {}", scene.trim(), thoughts.trim())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stream_renders_empty() {
        assert_eq!(render_stream(&[]), "");
    }

    #[test]
    fn stream_lines_are_numbered_from_one() {
        let s = render_stream(&["a ".into(), "b".into()]);
        assert_eq!(s, "Round 1: a\nRound 2: b");
    }

    #[test]
    fn summary_line_joins_scene_and_thoughts() {
        assert_eq!(summary_line(" s ", "t\n"), "s — t");
    }
}
