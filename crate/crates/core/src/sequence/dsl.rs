//! Line-oriented text format for pulse sequences.
//!
//! ```text
//! # comment
//! optical burn -5MHz -> 5MHz 1 300ms
//! rf 21.475MHz 92W 1000us phase=90
//! wait 500us
//! readout 0MHz 100us
//! ```
//!
//! Keywords are case-insensitive; units are exactly MHz, kHz, GHz, us, ms, s,
//! W and deg. A unit may be attached to its number or follow it as a separate
//! token.

use std::fmt::Write;

use super::{
    normalize_phase, OpticalPulse, OpticalRole, PulseEvent, PulseSequence, ReadoutWindow, RfPulse,
    Wait,
};
use crate::error::{Error, Result};
use crate::units::{split_number, Dimension, Unit};

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

impl Token<'_> {
    fn syntax(&self, message: impl Into<String>) -> Error {
        Error::Syntax {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }

    fn semantic(&self, message: impl Into<String>) -> Error {
        Error::Semantic {
            line: self.line,
            column: self.column,
            token: self.text.to_string(),
            message: message.into(),
        }
    }
}

fn tokenize(line: &str, line_no: usize) -> Vec<Token<'_>> {
    let code = line.split('#').next().unwrap_or("");
    let mut tokens = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in code.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push((s, code.len()));
    }
    tokens
        .into_iter()
        .map(|(s, e)| Token {
            text: &code[s..e],
            line: line_no,
            column: code[..s].chars().count() + 1,
        })
        .collect()
}

fn sequence_unit(s: &str) -> Option<Unit> {
    Unit::SEQUENCE_UNITS.into_iter().find(|u| u.symbol() == s)
}

struct Cursor<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    line: usize,
    line_len: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<Token<'a>> {
        self.tokens.get(self.pos).copied()
    }

    fn next(&mut self, what: &str) -> Result<Token<'a>> {
        let tok = self.peek().ok_or_else(|| Error::Syntax {
            line: self.line,
            column: self.line_len + 1,
            message: format!("expected {what}, found end of line"),
        })?;
        self.pos += 1;
        Ok(tok)
    }

    /// A number with an optional unit, attached or as the following token.
    fn quantity(&mut self, what: &str) -> Result<(f64, Option<Unit>, Token<'a>)> {
        let tok = self.next(what)?;
        let (value, suffix) = split_number(tok.text)
            .ok_or_else(|| tok.syntax(format!("expected {what}, found `{}`", tok.text)))?;
        if !value.is_finite() {
            return Err(tok.semantic("number is not finite"));
        }
        if !suffix.is_empty() {
            let unit = sequence_unit(suffix)
                .ok_or_else(|| tok.semantic(format!("unknown unit `{suffix}`")))?;
            return Ok((value, Some(unit), tok));
        }
        if let Some(next) = self.peek() {
            if let Some(unit) = sequence_unit(next.text) {
                self.pos += 1;
                return Ok((value, Some(unit), tok));
            }
        }
        Ok((value, None, tok))
    }

    fn dimensioned(&mut self, what: &str, dim: Dimension, target: Unit) -> Result<(f64, Token<'a>)> {
        let (value, unit, tok) = self.quantity(what)?;
        let unit = unit.ok_or_else(|| tok.semantic(format!("{what} needs a unit")))?;
        if unit.dimension() != dim {
            return Err(tok.semantic(format!("{what} cannot be given in {unit}")));
        }
        Ok((unit.convert(value, target).expect("same dimension"), tok))
    }

    fn frequency(&mut self, what: &str) -> Result<f64> {
        self.dimensioned(what, Dimension::Frequency, Unit::MHz).map(|(v, _)| v)
    }

    fn duration(&mut self) -> Result<f64> {
        let (value, tok) = self.dimensioned("duration", Dimension::Time, Unit::Us)?;
        if !(value > 0.0) {
            return Err(tok.semantic("duration must be positive"));
        }
        Ok(value)
    }

    fn power(&mut self, require_watt: bool) -> Result<f64> {
        let (value, unit, tok) = self.quantity("power")?;
        match unit {
            Some(Unit::W) => {}
            None if !require_watt => {}
            None => return Err(tok.semantic("RF power needs the unit W")),
            Some(u) => return Err(tok.semantic(format!("power cannot be given in {u}"))),
        }
        if value < 0.0 {
            return Err(tok.semantic("power must be non-negative"));
        }
        Ok(value)
    }

    fn finish(&self) -> Result<()> {
        match self.peek() {
            Some(tok) => Err(tok.syntax(format!("unexpected token `{}`", tok.text))),
            None => Ok(()),
        }
    }
}

fn parse_line(mut cur: Cursor<'_>) -> Result<PulseEvent> {
    let head = cur.next("keyword")?;
    let event = match head.text.to_ascii_lowercase().as_str() {
        "optical" => {
            let role_tok = cur.next("optical role")?;
            let role = match role_tok.text.to_ascii_lowercase().as_str() {
                "burn" => OpticalRole::Burn,
                "probe" => OpticalRole::Probe,
                "erase" => OpticalRole::Erase,
                other => return Err(role_tok.syntax(format!("unknown optical role `{other}`"))),
            };
            let start = cur.frequency("detuning")?;
            let stop = match cur.peek() {
                Some(t) if t.text == "->" => {
                    cur.pos += 1;
                    cur.frequency("chirp end detuning")?
                }
                _ => start,
            };
            let power = cur.power(false)?;
            let duration = cur.duration()?;
            PulseEvent::Optical(OpticalPulse {
                detuning_start: start,
                detuning_stop: stop,
                power,
                duration,
                role,
            })
        }
        "rf" => {
            let frequency = cur.frequency("RF frequency")?;
            let power = cur.power(true)?;
            let duration = cur.duration()?;
            let mut phase = 0.0;
            if let Some(tok) = cur.peek() {
                let lower = tok.text.to_ascii_lowercase();
                if let Some(rest) = lower.strip_prefix("phase=") {
                    cur.pos += 1;
                    let rest_raw = &tok.text[tok.text.len() - rest.len()..];
                    let (value, suffix) = split_number(rest_raw)
                        .ok_or_else(|| tok.syntax("expected a phase in degrees"))?;
                    if !suffix.is_empty() && suffix != "deg" {
                        return Err(tok.semantic(format!("unknown unit `{suffix}`")));
                    }
                    if !value.is_finite() {
                        return Err(tok.semantic("phase is not finite"));
                    }
                    phase = value;
                    if let Some(next) = cur.peek() {
                        if next.text == "deg" && suffix.is_empty() {
                            cur.pos += 1;
                        }
                    }
                }
            }
            PulseEvent::Rf(RfPulse::new(frequency, power, phase, duration))
        }
        "wait" => PulseEvent::Wait(Wait {
            duration: cur.duration()?,
        }),
        "readout" => {
            let detuning = cur.frequency("readout detuning")?;
            let duration = cur.duration()?;
            PulseEvent::Readout(ReadoutWindow { detuning, duration })
        }
        other => return Err(head.syntax(format!("unknown keyword `{other}`"))),
    };
    cur.finish()?;
    Ok(event)
}

/// Parses the text format into a sequence. The label is empty.
pub fn parse_sequence(text: &str) -> Result<PulseSequence> {
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let tokens = tokenize(line, i + 1);
        if tokens.is_empty() {
            continue;
        }
        let line_len = line.split('#').next().unwrap_or("").chars().count();
        events.push(parse_line(Cursor {
            tokens,
            pos: 0,
            line: i + 1,
            line_len,
        })?);
    }
    if events.is_empty() {
        return Err(Error::Syntax {
            line: 1,
            column: 1,
            message: "empty sequence".into(),
        });
    }
    let seq = PulseSequence {
        events,
        label: String::new(),
    };
    seq.validate()?;
    Ok(seq)
}

/// Normalized text form: frequencies in MHz, times in µs, phases in [0, 360).
/// Numbers use the shortest representation that parses back exactly.
pub fn format_sequence(seq: &PulseSequence) -> String {
    let mut out = String::new();
    if !seq.label.is_empty() {
        let _ = writeln!(out, "# {}", seq.label.replace('\n', " "));
    }
    for event in &seq.events {
        let _ = match event {
            PulseEvent::Optical(p) if p.is_chirp() => writeln!(
                out,
                "optical {} {}MHz -> {}MHz {} {}us",
                p.role.keyword(),
                p.detuning_start,
                p.detuning_stop,
                p.power,
                p.duration
            ),
            PulseEvent::Optical(p) => writeln!(
                out,
                "optical {} {}MHz {} {}us",
                p.role.keyword(),
                p.detuning_start,
                p.power,
                p.duration
            ),
            PulseEvent::Rf(p) => writeln!(
                out,
                "rf {}MHz {}W {}us phase={}",
                p.frequency,
                p.power,
                p.duration,
                normalize_phase(p.phase)
            ),
            PulseEvent::Wait(w) => writeln!(out, "wait {}us", w.duration),
            PulseEvent::Readout(r) => writeln!(out, "readout {}MHz {}us", r.detuning, r.duration),
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rf_line() {
        let seq = parse_sequence("rf 21.475MHz 92W 1000us phase=0").unwrap();
        assert_eq!(
            seq.events,
            vec![PulseEvent::Rf(RfPulse {
                frequency: 21.475,
                power: 92.0,
                phase: 0.0,
                duration: 1000.0
            })]
        );
    }

    #[test]
    fn empty_input_is_a_syntax_error() {
        assert!(matches!(parse_sequence(""), Err(Error::Syntax { .. })));
        assert!(matches!(
            parse_sequence("# only a comment\n\n"),
            Err(Error::Syntax { .. })
        ));
    }

    #[test]
    fn waits_accumulate() {
        let seq = parse_sequence("wait 500us\nwait 500us").unwrap();
        assert_eq!(seq.events.len(), 2);
        assert_eq!(seq.total_duration(), 1000.0);
    }

    #[test]
    fn unknown_unit_points_at_token() {
        let err = parse_sequence("wait 1us\nrf 21.475Mz 92W 1000us").unwrap_err();
        match err {
            Error::Semantic {
                line,
                column,
                token,
                ..
            } => {
                assert_eq!((line, column), (2, 4));
                assert_eq!(token, "21.475Mz");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_sequence_units() {
        assert!(parse_sequence("wait 3Hz").is_err());
        assert!(parse_sequence("rf 21.475MHz 92W 10rad/s").is_err());
        assert!(parse_sequence("wait 3µs").is_err());
    }

    #[test]
    fn negative_duration_is_semantic() {
        assert!(matches!(
            parse_sequence("wait -5us"),
            Err(Error::Semantic { .. })
        ));
    }

    #[test]
    fn keywords_are_case_insensitive_and_units_may_be_separate() {
        let seq = parse_sequence("OPTICAL Burn -5 MHz -> 5 MHz 1 300 ms\nRF 33.944 MHz 6 W 1 ms PHASE=450\nReadout 0MHz 10us").unwrap();
        match seq.events[0] {
            PulseEvent::Optical(p) => {
                assert_eq!(p.detuning_start, -5.0);
                assert_eq!(p.detuning_stop, 5.0);
                assert_eq!(p.duration, 300_000.0);
                assert_eq!(p.role, OpticalRole::Burn);
            }
            _ => panic!(),
        }
        match seq.events[1] {
            PulseEvent::Rf(p) => {
                assert_eq!(p.phase, 90.0);
                assert_eq!(p.duration, 1000.0);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn trailing_tokens_are_rejected() {
        let err = parse_sequence("wait 5us extra").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 1, column: 10, .. }), "{err}");
    }

    #[test]
    fn missing_argument_reports_end_of_line() {
        assert!(matches!(
            parse_sequence("rf 21.475MHz 92W"),
            Err(Error::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn format_reparses() {
        let text = "optical probe -7.5MHz -> 7.5MHz 0 1000us\nrf 21.475MHz 92W 35.714285714285715us phase=90\nwait 0.1us\nreadout 0MHz 100us\n";
        let seq = parse_sequence(text).unwrap();
        assert_eq!(format_sequence(&seq), text);
    }
}
