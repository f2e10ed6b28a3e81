//! BLER curve CSV output.
//!
//! Header: `snr_db,n_samples,bler_intech,bler_ctc_1,...,bler_ctc_N,max_bler_ctc`.
//! Receivers are numbered from 1. A curve without an in-technology receiver
//! leaves `bler_intech` empty. Floats use the shortest representation that
//! round-trips exactly.

use std::fmt::Write as _;

use deepctc_core::eval::{BlerCurve, BlerPoint};

pub fn header(receivers: usize) -> String {
    let mut h = String::from("snr_db,n_samples,bler_intech");
    for i in 1..=receivers {
        let _ = write!(h, ",bler_ctc_{i}");
    }
    h.push_str(",max_bler_ctc");
    h
}

pub fn row(point: &BlerPoint) -> String {
    let mut r = format!("{},{},", point.snr_db, point.n_samples);
    if let Some(b) = point.bler_intech() {
        let _ = write!(r, "{b}");
    }
    for b in point.bler_ctc() {
        let _ = write!(r, ",{b}");
    }
    r.push(',');
    if let Some(b) = point.max_bler_ctc() {
        let _ = write!(r, "{b}");
    }
    r
}

pub fn to_string(curve: &BlerCurve) -> String {
    let mut out = header(curve.receivers());
    out.push('\n');
    for p in curve.points() {
        out.push_str(&row(p));
        out.push('\n');
    }
    out
}

/// One table for several curves, each row prefixed with its `alpha`.
pub fn summary(curves: &[(f64, &BlerCurve)]) -> String {
    let receivers = curves.iter().map(|(_, c)| c.receivers()).max().unwrap_or(0);
    let mut out = format!("alpha,{}\n", header(receivers));
    for (alpha, curve) in curves {
        for p in curve.points() {
            let _ = writeln!(out, "{alpha},{}", row(p));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use deepctc_core::otfg::OtfgSpec;
    use deepctc_core::ModelConfig;

    fn grid(t: usize, f: usize) -> OtfgSpec {
        OtfgSpec::new(t, f).unwrap()
    }

    #[test]
    fn joint_curve_layout() {
        let cfg = ModelConfig::joint(4, 2, grid(2, 2), vec![grid(1, 4)], 0.9);
        let points = vec![
            BlerPoint {
                snr_db: -2.0,
                n_samples: 1000,
                intech_errors: Some(123),
                ctc_errors: vec![7],
            },
            BlerPoint {
                snr_db: 0.5,
                n_samples: 1000,
                intech_errors: Some(0),
                ctc_errors: vec![1],
            },
        ];
        let text = to_string(&BlerCurve::new(cfg, points).unwrap());
        assert_eq!(
            text,
            "snr_db,n_samples,bler_intech,bler_ctc_1,max_bler_ctc\n\
             -2,1000,0.123,0.007,0.007\n\
             0.5,1000,0,0.001,0.001\n"
        );
    }

    #[test]
    fn broadcast_leaves_intech_empty() {
        let cfg = ModelConfig::broadcast(4, grid(4, 4), vec![grid(4, 4), grid(1, 16)]);
        let p = BlerPoint {
            snr_db: 3.0,
            n_samples: 3,
            intech_errors: None,
            ctc_errors: vec![1, 2],
        };
        let curve = BlerCurve::new(cfg, vec![p]).unwrap();
        let text = to_string(&curve);
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("snr_db,n_samples,bler_intech,bler_ctc_1,bler_ctc_2,max_bler_ctc")
        );
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(fields[2], "");
        let third: f64 = fields[3].parse().unwrap();
        assert_eq!(third, 1.0 / 3.0);
        assert_eq!(fields[5], fields[4]);
        assert!(summary(&[(0.5, &curve)]).starts_with("alpha,snr_db,"));
    }
}
