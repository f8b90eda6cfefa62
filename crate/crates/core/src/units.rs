//! Physical constants, unit conversions and unit-suffixed quantity parsing.
//!
//! Conventions used across the crate: optical detunings and RF / transition
//! frequencies in MHz, spin detunings in kHz, sequence times in µs, RF power
//! in W. The dephasing bath uses SI (rad/s, s).

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Deserializer};

/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// μ0 / 4π, T m / A.
pub const MU0_OVER_4PI: f64 = 1.000_000_000_55e-7;
/// One ångström in metres.
pub const ANGSTROM: f64 = 1e-10;

/// Converts a bath coupling quoted in cycles (kHz) to angular frequency (rad/s).
pub fn khz_to_rad_per_s(b_khz: f64) -> f64 {
    2.0 * PI * 1e3 * b_khz
}

/// Inverse of [`khz_to_rad_per_s`].
pub fn rad_per_s_to_khz(sigma: f64) -> f64 {
    sigma / (2.0 * PI * 1e3)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Time,
    Power,
    Angle,
    AngularFrequency,
}

/// A recognised unit suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    GHz,
    MHz,
    KHz,
    Hz,
    S,
    Ms,
    Us,
    W,
    Deg,
    RadPerS,
}

impl Unit {
    /// Units accepted by the pulse-sequence language.
    pub const SEQUENCE_UNITS: [Unit; 8] = [
        Unit::MHz,
        Unit::KHz,
        Unit::GHz,
        Unit::Us,
        Unit::Ms,
        Unit::S,
        Unit::W,
        Unit::Deg,
    ];

    pub fn parse(s: &str) -> Option<Unit> {
        Some(match s {
            "GHz" => Unit::GHz,
            "MHz" => Unit::MHz,
            "kHz" => Unit::KHz,
            "Hz" => Unit::Hz,
            "s" => Unit::S,
            "ms" => Unit::Ms,
            "us" | "µs" => Unit::Us,
            "W" => Unit::W,
            "deg" => Unit::Deg,
            "rad/s" => Unit::RadPerS,
            _ => return None,
        })
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::GHz => "GHz",
            Unit::MHz => "MHz",
            Unit::KHz => "kHz",
            Unit::Hz => "Hz",
            Unit::S => "s",
            Unit::Ms => "ms",
            Unit::Us => "us",
            Unit::W => "W",
            Unit::Deg => "deg",
            Unit::RadPerS => "rad/s",
        }
    }

    pub fn dimension(self) -> Dimension {
        match self {
            Unit::GHz | Unit::MHz | Unit::KHz | Unit::Hz => Dimension::Frequency,
            Unit::S | Unit::Ms | Unit::Us => Dimension::Time,
            Unit::W => Dimension::Power,
            Unit::Deg => Dimension::Angle,
            Unit::RadPerS => Dimension::AngularFrequency,
        }
    }

    /// Scale to the canonical unit of the dimension (MHz, µs, W, deg, rad/s).
    fn canonical_scale(self) -> f64 {
        match self {
            Unit::GHz => 1e3,
            Unit::MHz => 1.0,
            Unit::KHz => 1e-3,
            Unit::Hz => 1e-6,
            Unit::S => 1e6,
            Unit::Ms => 1e3,
            Unit::Us => 1.0,
            Unit::W | Unit::Deg | Unit::RadPerS => 1.0,
        }
    }

    /// Converts `value` expressed in `self` into `target` (same dimension).
    pub fn convert(self, value: f64, target: Unit) -> Option<f64> {
        (self.dimension() == target.dimension())
            .then(|| value * self.canonical_scale() / target.canonical_scale())
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Splits `"21.475MHz"` into `(21.475, "MHz")`. The unit part may be empty.
pub fn split_number(s: &str) -> Option<(f64, &str)> {
    let s = s.trim();
    let bytes = s.as_bytes();
    let mut end = 0;
    let mut seen_digit = false;
    let mut seen_e = false;
    while end < bytes.len() {
        let c = bytes[end] as char;
        let ok = match c {
            '0'..='9' => {
                seen_digit = true;
                true
            }
            '+' | '-' => end == 0 || matches!(bytes[end - 1] as char, 'e' | 'E'),
            '.' => !seen_e,
            'e' | 'E' => {
                // exponent only when followed by a digit or sign+digit
                let rest = &s[end + 1..];
                let rest = rest.strip_prefix(['+', '-']).unwrap_or(rest);
                seen_digit && !seen_e && rest.starts_with(|c: char| c.is_ascii_digit()) && {
                    seen_e = true;
                    true
                }
            }
            _ => false,
        };
        if !ok {
            break;
        }
        end += 1;
    }
    if !seen_digit {
        return None;
    }
    let value: f64 = s[..end].parse().ok()?;
    Some((value, s[end..].trim()))
}

/// Parses a quantity string with an optional unit suffix. A bare number is
/// interpreted in `default`.
pub fn parse_quantity(s: &str, default: Unit) -> Result<f64, String> {
    let (value, suffix) = split_number(s).ok_or_else(|| format!("`{s}` is not a number"))?;
    if suffix.is_empty() {
        return Ok(value);
    }
    let unit = Unit::parse(suffix).ok_or_else(|| format!("unknown unit `{suffix}` in `{s}`"))?;
    // cycles-per-second bath couplings are bridged to rad/s explicitly
    if default == Unit::RadPerS && unit.dimension() == Dimension::Frequency {
        let khz = unit.convert(value, Unit::KHz).expect("frequency");
        return Ok(khz_to_rad_per_s(khz));
    }
    unit.convert(value, default)
        .ok_or_else(|| format!("`{s}` has unit {unit}, expected a {:?}", default.dimension()))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(f64),
    Int(i64),
    Str(String),
}

pub(crate) fn de_with<'de, D: Deserializer<'de>>(d: D, unit: Unit) -> Result<f64, D::Error> {
    match NumOrStr::deserialize(d)? {
        NumOrStr::Num(v) => Ok(v),
        NumOrStr::Int(v) => Ok(v as f64),
        NumOrStr::Str(s) => parse_quantity(&s, unit).map_err(serde::de::Error::custom),
    }
}

pub(crate) fn de_khz<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    de_with(d, Unit::KHz)
}

pub(crate) fn de_us<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    de_with(d, Unit::Us)
}

pub(crate) fn de_s<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    de_with(d, Unit::S)
}

pub(crate) fn de_rad_per_s<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    de_with(d, Unit::RadPerS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_numbers_and_suffixes() {
        assert_eq!(split_number("21.475MHz"), Some((21.475, "MHz")));
        assert_eq!(split_number("-5 MHz"), Some((-5.0, "MHz")));
        assert_eq!(split_number("1e-3s"), Some((1e-3, "s")));
        assert_eq!(split_number("2.5e3"), Some((2500.0, "")));
        assert_eq!(split_number("3ms"), Some((3.0, "ms")));
        assert_eq!(split_number("MHz"), None);
    }

    #[test]
    fn converts_quantities() {
        assert_eq!(parse_quantity("13ms", Unit::Us).unwrap(), 13_000.0);
        assert_eq!(parse_quantity("300", Unit::Us).unwrap(), 300.0);
        assert!((parse_quantity("33944kHz", Unit::MHz).unwrap() - 33.944).abs() < 1e-12);
        assert!(parse_quantity("92W", Unit::Us).is_err());
        assert!(parse_quantity("21.475Mz", Unit::MHz).is_err());
    }

    #[test]
    fn bath_coupling_bridge() {
        let sigma = parse_quantity("12kHz", Unit::RadPerS).unwrap();
        assert!((sigma - 2.0 * PI * 12e3).abs() < 1e-9);
        assert_eq!(parse_quantity("100rad/s", Unit::RadPerS).unwrap(), 100.0);
        assert!((rad_per_s_to_khz(sigma) - 12.0).abs() < 1e-12);
    }
}
