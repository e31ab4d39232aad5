//! Line-oriented chat loop over one session. Generic over its input and
//! output so scripted runs can be captured byte for byte.

use std::io::{BufRead, Write};

use crate::arbiter::Answer;
use crate::context::{DialogueState, Reward};
use crate::engine::Engine;
use crate::kb::EntityId;

pub const HELP: &str = "commands: :why  :docs  :sheet <id>  :reward +|-  :quit";

fn print_answer(out: &mut impl Write, a: &Answer) -> std::io::Result<()> {
    writeln!(out, "A: {}", a.short_text)?;
    writeln!(out, "   confidence={:.2} source={}", a.confidence, a.source)
}

/// Run until `:quit` or end of input. Errors are printed, never fatal.
pub fn run(engine: &Engine, state: &mut DialogueState, input: impl BufRead, out: &mut impl Write, prompt: bool) -> std::io::Result<()> {
    if prompt {
        writeln!(out, "{HELP}")?;
    }
    let mut lines = input.lines();
    loop {
        if prompt {
            write!(out, "> ")?;
            out.flush()?;
        }
        let Some(line) = lines.next() else {
            break;
        };
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (cmd, arg) = line.split_once(char::is_whitespace).map_or((line, ""), |(c, a)| (c, a.trim()));
        match cmd {
            ":quit" | ":q" => break,
            ":help" => writeln!(out, "{HELP}")?,
            ":why" => match state.turns.last() {
                None => writeln!(out, "no answer yet")?,
                Some(t) => {
                    for triple in &t.answer.provenance {
                        writeln!(out, "  {}", triple.to_debug())?;
                    }
                    for q in t.answer.query_debug.lines() {
                        writeln!(out, "  | {q}")?;
                    }
                }
            },
            ":docs" => {
                let excerpts = engine.excerpts(state, 3);
                if excerpts.is_empty() {
                    writeln!(out, "no excerpts")?;
                }
                for e in excerpts {
                    writeln!(out, "  [{}] {} ({:.3}): {}", e.paragraph.doc_id, e.paragraph.source_title, e.score, e.paragraph.text)?;
                }
            }
            ":sheet" => match EntityId::new(arg).map_err(|e| e.to_string()).and_then(|id| {
                engine.kb.entity_sheet(&id, &engine.lang).map_err(|e| e.to_string())
            }) {
                Ok(sheet) => {
                    writeln!(out, "  {} ({})", sheet.label, sheet.id)?;
                    writeln!(out, "  {}", sheet.description)?;
                    let types: Vec<&str> = sheet.types.iter().map(|(_, l)| l.as_str()).collect();
                    writeln!(out, "  types: {}", types.join(", "))?;
                    if let Some(img) = &sheet.image_ref {
                        writeln!(out, "  image: {img}")?;
                    }
                }
                Err(e) => writeln!(out, "error: {e}")?,
            },
            ":reward" => {
                let result = arg
                    .parse::<Reward>()
                    .map_err(|e| e.to_string())
                    .and_then(|r| match state.turns.len() {
                        0 => Err("no turn to reward".to_owned()),
                        n => engine.record_reward(state, n - 1, r).map_err(|e| e.to_string()),
                    });
                match result {
                    Ok(()) => writeln!(out, "reward recorded")?,
                    Err(e) => writeln!(out, "error: {e}")?,
                }
            }
            _ if cmd.starts_with(':') => writeln!(out, "unknown command {cmd}; {HELP}")?,
            _ => match engine.ask(state, line) {
                Ok(a) => print_answer(out, &a)?,
                Err(e) => writeln!(out, "error: {e}")?,
            },
        }
    }
    Ok(())
}
