//! Float serialization shared by checkpoints and buffer dumps.
//!
//! Values are printed with 17 significant digits, which round-trips every
//! f64 exactly.

use crate::error::{Error, Result};
use std::fmt::Write as _;

pub(crate) fn write_floats(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        write!(out, "{v:.16e}").unwrap();
    }
    out.push('\n');
}

pub(crate) fn parse_floats(text: &str, line: usize, expected: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|t| {
            t.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("invalid real `{t}`"),
            })
        })
        .collect::<Result<_>>()?;
    if values.len() != expected {
        return Err(Error::Parse {
            line,
            msg: format!("expected {expected} values, found {}", values.len()),
        });
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;

    #[test]
    fn floats_round_trip_bitwise() {
        let mut rng = Rng::new(8);
        let values: Vec<f64> = (0..64).map(|_| rng.uniform(-1e3, 1e3) * rng.next_f64()).collect();
        let mut text = String::new();
        write_floats(&mut text, &values);
        let back = parse_floats(text.trim_end(), 1, values.len()).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
