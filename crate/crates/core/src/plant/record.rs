use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::Mode;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub time: f64,
    pub theta: f64,
    pub omega: f64,
    pub mode: Mode,
    pub p_out: f64,
    pub v_d: f64,
    pub v_q: f64,
    pub delta_p_ref: f64,
    /// Cumulative phase correction, rad.
    pub delta_theta_c: f64,
}

#[derive(Serialize, Deserialize)]
struct Row {
    time: f64,
    theta: f64,
    omega: f64,
    mode: u8,
    p_out: f64,
    v_d: f64,
    v_q: f64,
    delta_p_ref: f64,
    delta_theta_c: f64,
}

impl From<&TrajectorySample> for Row {
    fn from(s: &TrajectorySample) -> Self {
        Row {
            time: s.time,
            theta: s.theta,
            omega: s.omega,
            mode: s.mode.as_binary(),
            p_out: s.p_out,
            v_d: s.v_d,
            v_q: s.v_q,
            delta_p_ref: s.delta_p_ref,
            delta_theta_c: s.delta_theta_c,
        }
    }
}

impl TryFrom<Row> for TrajectorySample {
    type Error = Error;
    fn try_from(r: Row) -> Result<Self> {
        Ok(TrajectorySample {
            time: r.time,
            theta: r.theta,
            omega: r.omega,
            mode: Mode::from_binary(r.mode)?,
            p_out: r.p_out,
            v_d: r.v_d,
            v_q: r.v_q,
            delta_p_ref: r.delta_p_ref,
            delta_theta_c: r.delta_theta_c,
        })
    }
}

/// Uniformly sampled closed-loop trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrajectoryRecord {
    pub samples: Vec<TrajectorySample>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<&TrajectorySample> {
        self.samples.last()
    }

    pub fn peak_theta(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.theta)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Number of saturated-to-normal transitions.
    pub fn release_count(&self) -> usize {
        self.samples
            .windows(2)
            .filter(|w| w[0].mode == Mode::Saturated && w[1].mode == Mode::Normal)
            .count()
    }

    /// Checks strictly increasing, uniformly spaced time stamps.
    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 2 {
            return Ok(());
        }
        let dt = self.samples[1].time - self.samples[0].time;
        for w in self.samples.windows(2) {
            let h = w[1].time - w[0].time;
            if !(h > 0.0) || (h - dt).abs() > 1e-9 * dt.max(1.0) {
                return Err(Error::Csv(format!(
                    "non-uniform time step at t = {}",
                    w[0].time
                )));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.samples {
            w.serialize(Row::from(s))?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let samples = r
            .deserialize::<Row>()
            .map(|row| {
                row.map_err(Error::from)
                    .and_then(TrajectorySample::try_from)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(time: f64, theta: f64, mode: Mode) -> TrajectorySample {
        TrajectorySample {
            time,
            theta,
            omega: 1.0 + theta * 1e-3,
            mode,
            p_out: 0.1 * theta,
            v_d: 1.01,
            v_q: -0.3,
            delta_p_ref: -1.5,
            delta_theta_c: -0.05,
        }
    }

    #[test]
    fn header_matches_format() {
        let rec = TrajectoryRecord {
            samples: vec![sample(0.0, 0.4, Mode::Normal)],
        };
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,theta,omega,mode,p_out,v_d,v_q,delta_p_ref,delta_theta_c\n"));
        assert!(text.lines().nth(1).unwrap().split(',').nth(3) == Some("1"));
    }

    #[test]
    fn counts_releases() {
        let modes = [
            Mode::Normal,
            Mode::Saturated,
            Mode::Normal,
            Mode::Saturated,
            Mode::Saturated,
            Mode::Normal,
        ];
        let rec = TrajectoryRecord {
            samples: modes
                .iter()
                .enumerate()
                .map(|(i, &m)| sample(i as f64, 0.0, m))
                .collect(),
        };
        assert_eq!(rec.release_count(), 2);
        assert!(rec.validate().is_ok());
    }

    #[test]
    fn rejects_bad_mode() {
        let text =
            "time,theta,omega,mode,p_out,v_d,v_q,delta_p_ref,delta_theta_c\n0,0,1,2,0,0,0,0,0\n";
        assert!(TrajectoryRecord::read_csv(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_lossless(thetas in proptest::collection::vec(-10.0f64..10.0, 1..40), flip in any::<bool>()) {
            let samples = thetas
                .iter()
                .enumerate()
                .map(|(i, &t)| sample(i as f64 * 5e-4, t * std::f64::consts::PI / 7.0, if flip ^ (i % 3 == 0) { Mode::Saturated } else { Mode::Normal }))
                .collect();
            let rec = TrajectoryRecord { samples };
            let mut buf = Vec::new();
            rec.write_csv(&mut buf).unwrap();
            let back = TrajectoryRecord::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back, rec);
        }
    }
}
