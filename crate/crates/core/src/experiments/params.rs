//! Unit-tagged parameter types for experiment specs.
//!
//! A quantity is either a bare number in the parameter's default unit or a
//! string with a unit suffix (`"92W"`, `"1.5ms"`). Grids are explicit lists
//! or `{ start, stop, points, log }` ranges.

use std::fmt;
use std::marker::PhantomData;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::units::{de_with, Unit};

pub trait UnitTag {
    const UNIT: Unit;
}

macro_rules! unit_tag {
    ($name:ident, $unit:expr) => {
        #[derive(Debug, Clone, Copy, PartialEq)]
        pub struct $name;
        impl UnitTag for $name {
            const UNIT: Unit = $unit;
        }
    };
}

unit_tag!(MHz, Unit::MHz);
unit_tag!(Us, Unit::Us);
unit_tag!(Ms, Unit::Ms);
unit_tag!(S, Unit::S);
unit_tag!(W, Unit::W);
unit_tag!(Deg, Unit::Deg);
unit_tag!(RadPerS, Unit::RadPerS);

/// A scalar in the unit `U`.
pub struct Q<U>(pub f64, PhantomData<U>);

impl<U> Q<U> {
    pub fn new(v: f64) -> Self {
        Q(v, PhantomData)
    }
}

impl<U> Clone for Q<U> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<U> Copy for Q<U> {}

impl<U> PartialEq for Q<U> {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0
    }
}

impl<U: UnitTag> fmt::Debug for Q<U> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.0, U::UNIT)
    }
}

impl<'de, U: UnitTag> Deserialize<'de> for Q<U> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        de_with(d, U::UNIT).map(Q::new)
    }
}

impl<U> Serialize for Q<U> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

#[derive(Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged, bound(serialize = "", deserialize = "U: UnitTag"))]
pub enum Grid<U> {
    List(Vec<Q<U>>),
    Range {
        start: Q<U>,
        stop: Q<U>,
        points: usize,
        #[serde(default)]
        log: bool,
    },
}

impl<U: UnitTag> fmt::Debug for Grid<U> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Grid::List(v) => f.debug_list().entries(v).finish(),
            Grid::Range { start, stop, points, log } => {
                write!(f, "{start:?}..{stop:?} ({points} points{})", if *log { ", log" } else { "" })
            }
        }
    }
}

impl<U> Grid<U> {
    pub fn range(start: f64, stop: f64, points: usize) -> Self {
        Grid::Range {
            start: Q::new(start),
            stop: Q::new(stop),
            points,
            log: false,
        }
    }

    pub fn log_range(start: f64, stop: f64, points: usize) -> Self {
        Grid::Range {
            start: Q::new(start),
            stop: Q::new(stop),
            points,
            log: true,
        }
    }

    pub fn list(values: &[f64]) -> Self {
        Grid::List(values.iter().map(|&v| Q::new(v)).collect())
    }

    /// Expanded values; non-empty and finite.
    pub fn values(&self, name: &str) -> Result<Vec<f64>> {
        let v: Vec<f64> = match self {
            Grid::List(v) => v.iter().map(|q| q.0).collect(),
            Grid::Range { start, stop, points, log } => {
                let (a, b, n) = (start.0, stop.0, *points);
                if n == 0 {
                    return Err(Error::config(format!("{name}: points must be >= 1")));
                }
                if *log && !(a > 0.0 && b > 0.0) {
                    return Err(Error::config(format!("{name}: log grid needs positive bounds")));
                }
                (0..n)
                    .map(|i| {
                        let f = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                        if *log {
                            (a.ln() + f * (b.ln() - a.ln())).exp()
                        } else {
                            a + f * (b - a)
                        }
                    })
                    .collect()
            }
        };
        if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::config(format!("{name}: grid must be non-empty and finite")));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Deserialize)]
    struct P {
        f: Q<MHz>,
        t: Grid<Us>,
    }

    #[test]
    fn units_and_grids() {
        let p: P = serde_json::from_str(r#"{"f": "21475kHz", "t": {"start": "1ms", "stop": 2000, "points": 3}}"#).unwrap();
        assert!((p.f.0 - 21.475).abs() < 1e-12);
        assert_eq!(p.t.values("t").unwrap(), vec![1000.0, 1500.0, 2000.0]);
        let p: P = serde_json::from_str(r#"{"f": 1, "t": ["1s", 5]}"#).unwrap();
        assert_eq!(p.t.values("t").unwrap(), vec![1e6, 5.0]);
        let g: Grid<S> = Grid::log_range(0.1, 10.0, 3);
        let v = g.values("w").unwrap();
        assert!((v[1] - 1.0).abs() < 1e-12);
        assert!(serde_json::from_str::<P>(r#"{"f": "3W", "t": [1]}"#).is_err());
        assert!(Grid::<S>::list(&[]).values("w").is_err());
    }
}
