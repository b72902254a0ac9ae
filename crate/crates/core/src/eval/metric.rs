use crate::error::{Error, Result};
use crate::types::ComplexPressure;

/// Printed in place of an exact-reconstruction (−∞ dB) score.
pub const NEG_INF_SENTINEL: &str = "< -300";

/// Normalized mean squared error in dB over complex values.
///
/// Returns `f64::NEG_INFINITY` when the prediction is exact.
pub fn nmse(predictions: &[ComplexPressure], truths: &[ComplexPressure]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::Dimension {
            expected: truths.len(),
            got: predictions.len(),
        });
    }
    if truths.is_empty() {
        return Err(Error::Dataset("nmse needs at least one pair".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in predictions.iter().zip(truths) {
        num += (*p - *t).norm_sqr();
        den += t.norm_sqr();
    }
    if den == 0.0 {
        return Err(Error::Domain("nmse is undefined when every truth is zero".into()));
    }
    if num == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (num / den).log10())
}

/// Formats an NMSE value for tables.
pub fn format_db(db: f64) -> String {
    if db == f64::NEG_INFINITY {
        NEG_INF_SENTINEL.to_string()
    } else {
        format!("{db}")
    }
}

/// Inverse of [`format_db`].
pub fn parse_db(text: &str) -> Result<f64> {
    let t = text.trim();
    if t == NEG_INF_SENTINEL {
        return Ok(f64::NEG_INFINITY);
    }
    t.parse::<f64>()
        .map_err(|_| Error::Schema(format!("not an NMSE value: `{t}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(n: usize) -> Vec<ComplexPressure> {
        (0..n)
            .map(|i| ComplexPressure::new((i as f64 * 0.7).sin(), (i as f64 * 1.3).cos()))
            .collect()
    }

    #[test]
    fn anchor_cases() {
        let p = field(40);
        assert_eq!(nmse(&p, &p).unwrap(), f64::NEG_INFINITY);
        let zero = vec![ComplexPressure::ZERO; 40];
        assert!(nmse(&zero, &p).unwrap().abs() <= 1e-12);
        let half: Vec<_> = p.iter().map(|v| v.scale(0.5)).collect();
        assert!((nmse(&half, &p).unwrap() - (-6.020599913279624)).abs() <= 1e-9);
    }

    #[test]
    fn invariant_under_common_complex_scaling_and_reordering() {
        let t = field(25);
        let p: Vec<_> = t.iter().enumerate().map(|(i, v)| *v + ComplexPressure::new(0.01 * i as f64, -0.02)).collect();
        let base = nmse(&p, &t).unwrap();
        let c = ComplexPressure::from_polar(3.7, 0.9);
        let ps: Vec<_> = p.iter().map(|v| *v * c).collect();
        let ts: Vec<_> = t.iter().map(|v| *v * c).collect();
        assert!((nmse(&ps, &ts).unwrap() - base).abs() <= 1e-10);
        let mut idx: Vec<usize> = (0..25).collect();
        idx.reverse();
        idx.swap(3, 11);
        let pr: Vec<_> = idx.iter().map(|&i| p[i]).collect();
        let tr: Vec<_> = idx.iter().map(|&i| t[i]).collect();
        assert!((nmse(&pr, &tr).unwrap() - base).abs() <= 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = field(3);
        assert!(nmse(&t[..2], &t).is_err());
        assert!(nmse(&[], &[]).is_err());
        let zero = vec![ComplexPressure::ZERO; 3];
        assert!(nmse(&t, &zero).is_err());
    }

    #[test]
    fn sentinel_round_trips() {
        assert_eq!(format_db(f64::NEG_INFINITY), "< -300");
        assert_eq!(parse_db("< -300").unwrap(), f64::NEG_INFINITY);
        assert_eq!(parse_db(&format_db(-12.5)).unwrap(), -12.5);
        assert!(parse_db("abc").is_err());
    }
}
