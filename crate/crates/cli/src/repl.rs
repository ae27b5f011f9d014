//! Line-oriented chat on a terminal (or any reader/writer pair).

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use anyhow::Result;
use labrag_core::chat::{LabAssistant, Session, Stage, DISCLAIMER};

pub fn run(assistant: &LabAssistant, mut input: impl BufRead, mut out: impl Write) -> Result<()> {
    writeln!(out, "Ask for the normal range of a lab test. An empty line quits.")?;
    loop {
        let Some(question) = prompt(&mut input, &mut out, "> ")? else {
            return Ok(());
        };
        if question.is_empty() {
            return Ok(());
        }
        let mut session = match assistant.ask(&question) {
            Ok(s) => s,
            Err(e) => {
                writeln!(out, "error: {e}")?;
                continue;
            }
        };
        if session.stage() == Stage::AwaitingFactors && !collect(assistant, &mut session, &mut input, &mut out)? {
            return Ok(());
        }
        report(&session, &mut out)?;
    }
}

/// Ask each pending question until every answer is accepted. Returns false
/// if the input ended first.
fn collect(
    assistant: &LabAssistant,
    session: &mut Session,
    input: &mut impl BufRead,
    out: &mut impl Write,
) -> Result<bool> {
    let questions = session.pending_questions().to_vec();
    let mut answers = BTreeMap::new();
    for q in &questions {
        let label = match (q.choices.is_empty(), q.allows_free_text) {
            (true, _) => format!("{}? ", q.factor),
            (false, false) => format!("{} [{}]? ", q.factor, q.choices.join(" / ")),
            (false, true) => format!("{} (e.g. {})? ", q.factor, q.choices.join(", ")),
        };
        loop {
            let Some(value) = prompt(input, out, &label)? else {
                return Ok(false);
            };
            if q.accept(&value).is_some() {
                answers.insert(q.factor.clone(), value);
                break;
            }
            writeln!(out, "Please choose one of: {}", q.choices.join(", "))?;
        }
    }
    if let Err(e) = assistant.submit_answers(session, &answers) {
        if session.stage() != Stage::Failed {
            writeln!(out, "error: {e}")?;
        }
    }
    Ok(true)
}

fn report(session: &Session, out: &mut impl Write) -> Result<()> {
    if let Some(a) = session.answer() {
        writeln!(out, "Normal range: {}", a.text)?;
        writeln!(out, "Source: {}", a.source_url)?;
        writeln!(out, "{DISCLAIMER}")?;
    } else if let Some(f) = session.failure() {
        writeln!(out, "No answer ({}): {}", f.code, f.message)?;
    }
    Ok(())
}

fn prompt(input: &mut impl BufRead, out: &mut impl Write, label: &str) -> Result<Option<String>> {
    write!(out, "{label}")?;
    out.flush()?;
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(line.trim().to_string()))
}
