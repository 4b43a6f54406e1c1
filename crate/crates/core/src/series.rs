//! Uniformly sampled waveforms and their CSV form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Sampled simulation output.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TimeSeries {
    #[serde(with = "nullable")]
    pub t: Vec<f64>,
    #[serde(with = "nullable")]
    pub v_dc: Vec<f64>,
    #[serde(with = "nullable")]
    pub i_l: Vec<f64>,
    #[serde(with = "nullable")]
    pub v_o: Vec<f64>,
    /// Actuated duty ratio.
    #[serde(with = "nullable")]
    pub duty: Vec<f64>,
    /// Set point; NaN for open-loop runs.
    #[serde(with = "nullable")]
    pub reference: Vec<f64>,
    /// Discrete switching state per sample (switched simulation only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Vec<String>>,
    /// Set when the run was cut short by a non-finite or runaway state.
    pub unstable: bool,
    /// Set when the duty command hit a limit at any time.
    pub saturation_engaged: bool,
}

pub const CHANNELS: [&str; 5] = ["v_dc", "i_l", "v_o", "duty", "reference"];

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        match name {
            "t" => Some(&self.t),
            "v_dc" => Some(&self.v_dc),
            "i_l" => Some(&self.i_l),
            "v_o" => Some(&self.v_o),
            "duty" => Some(&self.duty),
            "reference" => Some(&self.reference),
            _ => None,
        }
    }

    /// Sample spacing (s); zero for fewer than two samples.
    pub fn step(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    pub(crate) fn push(&mut self, t: f64, x: &[f64; 3], duty: f64, reference: f64) {
        self.t.push(t);
        self.v_dc.push(x[0]);
        self.i_l.push(x[1]);
        self.v_o.push(x[2]);
        self.duty.push(duty);
        self.reference.push(reference);
    }

    /// Index of the last sample at or before `t`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let dt = self.step().max(f64::MIN_POSITIVE);
        self.t.iter().rposition(|s| *s <= t + 1e-9 * dt)
    }

    /// CSV with header `t,v_dc,i_l,v_o,duty,reference[,mode]`, 9 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,v_dc,i_l,v_o,duty,reference");
        if self.mode.is_some() {
            out.push_str(",mode");
        }
        out.push('\n');
        for k in 0..self.len() {
            let row = [self.t[k], self.v_dc[k], self.i_l[k], self.v_o[k], self.duty[k], self.reference[k]];
            out.push_str(&join_numbers(&row));
            if let Some(m) = &self.mode {
                out.push(',');
                out.push_str(&m[k]);
            }
            out.push('\n');
        }
        out
    }
}

/// Formats a number with 9 significant digits.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.8e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn join_numbers(row: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{}", fmt_num(*v));
    }
    s
}

/// Serde adapter writing non-finite samples as `null` and reading `null` back as NaN.
pub mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.is_finite().then_some(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v: Vec<Option<f64>> = Vec::deserialize(d)?;
        Ok(v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }

    /// The same mapping for a single value.
    pub mod scalar {
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            match v.is_finite() {
                true => s.serialize_f64(*v),
                false => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_shape() {
        let mut ts = TimeSeries::default();
        ts.push(0.0, &[1.0, 2.0, 3.0], 0.5, 3.0);
        ts.push(1e-5, &[1.0, 2.0, 3.25], 0.5, 3.0);
        let csv = ts.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,v_dc,i_l,v_o,duty,reference");
        assert_eq!(lines[2], "1.00000000e-5,1.00000000e0,2.00000000e0,3.25000000e0,5.00000000e-1,3.00000000e0");
        assert!(!csv.contains('\r'));
        assert_eq!(ts.index_at(5e-6), Some(0));
        assert_eq!(ts.index_at(1e-5), Some(1));
    }

    #[test]
    fn nine_significant_digits_round_trip() {
        let v = 1.0 / 3.0;
        let back: f64 = fmt_num(v).parse().unwrap();
        assert!((back - v).abs() / v < 1e-8);
        assert_eq!(fmt_num(f64::NAN), "nan");
    }

    #[test]
    fn json_keeps_missing_samples() {
        let mut ts = TimeSeries::default();
        ts.push(0.0, &[1.0, 2.0, 3.0], 0.5, f64::NAN);
        let text = serde_json::to_string(&ts).unwrap();
        assert!(text.contains("\"reference\":[null]"));
        let back: TimeSeries = serde_json::from_str(&text).unwrap();
        assert!(back.reference[0].is_nan());
        assert_eq!(back.v_o, ts.v_o);
    }
}
