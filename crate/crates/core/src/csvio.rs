//! Shared CSV helpers. Floats are written with 17 significant digits so
//! that every value round-trips bit-exactly.

use std::io::Write;

use nalgebra::DVector;

use crate::error::Result;

pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header names `prefix1..prefixN`.
pub fn indexed(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}{i}"))
}

pub(crate) fn push_vector(row: &mut Vec<String>, v: Option<&DVector<f64>>, dim: usize) {
    match v {
        Some(v) => row.extend(v.iter().map(|x| format_float(*x))),
        None => row.extend(std::iter::repeat_n(String::new(), dim)),
    }
}

pub fn write_rows<W: Write>(writer: W, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 7.0, f64::MIN_POSITIVE] {
            let s = format_float(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }
}
