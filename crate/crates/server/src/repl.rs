//! Line-oriented chat loop for the `chat` subcommand.

use std::io::{self, BufRead, Write};

use longdial::memory::time_decay;

use crate::service::Service;

const HELP: &str = "\
commands:
  /advance DURATION   move the simulated clock forward (e.g. 90m, 2h, 1d, 1w, or seconds)
  /memory             list stored memories and the last retrieval
  /personas           list the traits collected so far
  /help               show this text
  /quit               leave (state is already saved)";

/// Parses `90`, `90s`, `45m`, `2h`, `1d` or `1w` into seconds.
pub fn parse_duration(text: &str) -> Option<i64> {
    let text = text.trim();
    let (digits, unit) = match text.find(|c: char| !c.is_ascii_digit()) {
        Some(i) => text.split_at(i),
        None => (text, "s"),
    };
    let n: i64 = digits.parse().ok()?;
    let scale = match unit {
        "s" => 1,
        "m" => 60,
        "h" => 3_600,
        "d" => 86_400,
        "w" => 604_800,
        _ => return None,
    };
    n.checked_mul(scale)
}

/// Reads lines from `input` until EOF or `/quit`. Errors from the agent are
/// reported inline and the loop continues.
pub async fn run<R: BufRead, W: Write>(service: &Service, id: &str, input: R, out: &mut W) -> io::Result<()> {
    let view = service.view(id).map_err(io::Error::other)?;
    let (user, agent) = (view.snapshot.user_name.clone(), view.snapshot.agent_name.clone());
    writeln!(out, "conversation {id}: {user} talking to {agent}. Type /help for commands.")?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line.split_once(' ').map_or((line, ""), |(c, rest)| (c, rest.trim())) {
            ("/quit" | "/exit", _) => break,
            ("/help", _) => writeln!(out, "{HELP}")?,
            ("/advance", arg) => match parse_duration(arg) {
                Some(secs) => match service.advance_clock(id, secs).await {
                    Ok(now) => writeln!(out, "clock is now {now}")?,
                    Err(e) => writeln!(out, "error: {e}")?,
                },
                None => writeln!(out, "error: cannot read duration {arg:?}")?,
            },
            ("/memory", _) => print_memory(service, id, out)?,
            ("/personas", _) => print_personas(service, id, out)?,
            (cmd, _) if cmd.starts_with('/') => writeln!(out, "unknown command {cmd}; try /help")?,
            _ => match service.send_message(id, line).await {
                Ok(report) => {
                    if let Some(record) = &report.user_observation.new_record {
                        let session = report.user_observation.session_index;
                        writeln!(out, "--- session {session} begins; earlier session stored as {record} ---")?;
                    }
                    for hit in &report.retrieval.hits {
                        writeln!(out, "  (recalled {}: {})", hit.record.timestamp.iso_date(), hit.record.summary)?;
                    }
                    writeln!(out, "{agent}: {}", report.response)?;
                }
                Err(e) => writeln!(out, "error: {e}")?,
            },
        }
    }
    Ok(())
}

fn print_memory<W: Write>(service: &Service, id: &str, out: &mut W) -> io::Result<()> {
    let view = service.view(id).map_err(io::Error::other)?;
    let now = view.now();
    let tau = service.config().retrieval.tau_hours;
    let bank = &view.snapshot.bank;
    writeln!(out, "session {}, {} stored memories", view.snapshot.cache.session_index(), bank.len())?;
    for r in bank.records() {
        let lambda = time_decay(now.seconds_since(r.timestamp).max(0) as f64 / 3600.0, tau);
        writeln!(out, "  {} {} decay={lambda:.3} {}", r.record_id, r.timestamp.iso_date(), r.summary)?;
    }
    if let Some(last) = &view.last_retrieval {
        if last.sentinel {
            writeln!(out, "last retrieval: nothing relevant")?;
        }
        for h in &last.hits {
            let s = &h.scores;
            writeln!(
                out,
                "last retrieval: {} sem={:.3} top={:.3} decay={:.3} overall={:.3}",
                h.record.record_id, s.s_sem, s.s_top, s.lambda_t, s.s_overall
            )?;
        }
    }
    Ok(())
}

fn print_personas<W: Write>(service: &Service, id: &str, out: &mut W) -> io::Result<()> {
    let view = service.view(id).map_err(io::Error::other)?;
    for bank in [&view.snapshot.personas.user, &view.snapshot.personas.agent] {
        writeln!(out, "{} ({} traits)", bank.name, bank.len())?;
        for t in bank.traits() {
            writeln!(out, "  - {}", t.text)?;
        }
    }
    Ok(())
}
