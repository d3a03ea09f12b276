use std::io::{Read, Write};

use thiserror::Error;

use crate::grid::GridCase;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("stream schema error at row {row}: {message}")]
    Schema { row: usize, message: String },
    #[error("stream header error: {0}")]
    Header(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One synchronized measurement frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PmuFrame {
    pub n: u64,
    pub t: f64,
    /// Generator angles in degrees, as carried on the wire.
    pub delta_deg: Vec<f64>,
    /// Generator speed deviations, p.u.
    pub omega: Vec<f64>,
    pub island: Vec<usize>,
    /// Bus voltage magnitudes, p.u., in stream bus order.
    pub vmag: Vec<f64>,
    /// Branch voltage-angle differences, deg; `None` for open branches.
    pub theta_deg: Vec<Option<f64>>,
}

impl PmuFrame {
    pub fn delta_rad(&self) -> Vec<f64> {
        self.delta_deg.iter().map(|d| d.to_radians()).collect()
    }

    pub fn machine_count(&self) -> usize {
        self.delta_deg.len()
    }

    /// Largest |θ| among in-service branches as `(branch index, deg)`.
    pub fn theta_max(&self) -> Option<(usize, f64)> {
        self.theta_deg
            .iter()
            .enumerate()
            .filter_map(|(k, t)| t.map(|t| (k, t.abs())))
            .fold(None, |best, cur| match best {
                Some((_, b)) if b >= cur.1 => best,
                _ => Some(cur),
            })
    }

    /// Lowest bus voltage as `(bus position, p.u.)`.
    pub fn vmin(&self) -> Option<(usize, f64)> {
        self.vmag
            .iter()
            .copied()
            .enumerate()
            .fold(None, |best, cur| match best {
                Some((_, b)) if b <= cur.1 => best,
                _ => Some(cur),
            })
    }
}

/// Uniformly sampled frame sequence plus the bus/branch layout of its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PmuStream {
    pub t_s: f64,
    pub bus_ids: Vec<u32>,
    pub branches: Vec<(u32, u32)>,
    pub frames: Vec<PmuFrame>,
}

impl PmuStream {
    pub fn for_case(case: &GridCase, t_s: f64) -> Self {
        PmuStream {
            t_s,
            bus_ids: case.buses.iter().map(|b| b.id).collect(),
            branches: case.branches.iter().map(|b| (b.from, b.to)).collect(),
            frames: Vec::new(),
        }
    }

    pub fn machine_count(&self) -> usize {
        self.frames.first().map_or(0, PmuFrame::machine_count)
    }

    pub fn branch_label(&self, k: usize) -> String {
        let (f, t) = self.branches[k];
        format!("{f}-{t}")
    }

    fn theta_columns(&self) -> Vec<String> {
        let mut seen = std::collections::HashMap::new();
        self.branches
            .iter()
            .map(|(f, t)| {
                let base = format!("theta_{f}_{t}");
                let count = seen.entry(base.clone()).or_insert(0usize);
                *count += 1;
                if *count == 1 {
                    base
                } else {
                    format!("{base}_{count}")
                }
            })
            .collect()
    }

    pub fn header(&self) -> Vec<String> {
        let m = self.machine_count();
        let mut cols = vec!["n".to_string(), "t".to_string()];
        cols.extend((1..=m).map(|i| format!("delta_{i}")));
        cols.extend((1..=m).map(|i| format!("omega_{i}")));
        cols.extend((1..=m).map(|i| format!("island_{i}")));
        cols.extend(self.bus_ids.iter().map(|b| format!("vmag_{b}")));
        cols.extend(self.theta_columns());
        cols
    }

    /// Writes the stream as CSV. Floats use the shortest round-trip form so a
    /// re-read stream is bit-identical.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), StreamError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        for f in &self.frames {
            let mut rec: Vec<String> = vec![f.n.to_string(), f.t.to_string()];
            rec.extend(f.delta_deg.iter().map(f64::to_string));
            rec.extend(f.omega.iter().map(f64::to_string));
            rec.extend(f.island.iter().map(usize::to_string));
            rec.extend(f.vmag.iter().map(f64::to_string));
            rec.extend(f.theta_deg.iter().map(|t| t.map_or(String::new(), |v| v.to_string())));
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, StreamError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header.len() < 2 || header[0] != "n" || header[1] != "t" {
            return Err(StreamError::Header("expected leading columns n, t".into()));
        }
        let count = |prefix: &str| header.iter().filter(|h| h.starts_with(prefix)).count();
        let m = count("delta_");
        if m == 0 || count("omega_") != m || count("island_") != m {
            return Err(StreamError::Header("delta_/omega_/island_ column counts differ or are zero".into()));
        }
        for (i, expect) in (1..=m)
            .map(|i| format!("delta_{i}"))
            .chain((1..=m).map(|i| format!("omega_{i}")))
            .chain((1..=m).map(|i| format!("island_{i}")))
            .enumerate()
        {
            if header[2 + i] != expect {
                return Err(StreamError::Header(format!("column {} should be {expect}", 2 + i)));
            }
        }
        let rest = &header[2 + 3 * m..];
        let mut bus_ids = Vec::new();
        let mut branches = Vec::new();
        for h in rest {
            if let Some(b) = h.strip_prefix("vmag_") {
                if !branches.is_empty() {
                    return Err(StreamError::Header("vmag_ columns must precede theta_ columns".into()));
                }
                bus_ids.push(b.parse().map_err(|_| StreamError::Header(format!("bad column {h}")))?);
            } else if let Some(pair) = h.strip_prefix("theta_") {
                let mut it = pair.split('_');
                let parse = |s: Option<&str>| -> Result<u32, StreamError> {
                    s.and_then(|s| s.parse().ok())
                        .ok_or_else(|| StreamError::Header(format!("bad column {h}")))
                };
                branches.push((parse(it.next())?, parse(it.next())?));
            } else {
                return Err(StreamError::Header(format!("unexpected column {h}")));
            }
        }

        let mut frames = Vec::new();
        for (r, rec) in rd.records().enumerate() {
            let row = r + 1;
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(StreamError::Schema {
                    row,
                    message: format!("expected {} fields, found {}", header.len(), rec.len()),
                });
            }
            let num = |k: usize| -> Result<f64, StreamError> {
                let v: f64 = rec[k].trim().parse().map_err(|_| StreamError::Schema {
                    row,
                    message: format!("column {} is not a number: {:?}", header[k], &rec[k]),
                })?;
                if !v.is_finite() {
                    return Err(StreamError::Schema {
                        row,
                        message: format!("column {} is not finite", header[k]),
                    });
                }
                Ok(v)
            };
            let int = |k: usize| -> Result<u64, StreamError> {
                rec[k].trim().parse().map_err(|_| StreamError::Schema {
                    row,
                    message: format!("column {} is not an integer", header[k]),
                })
            };
            let n = int(0)?;
            let t = num(1)?;
            let delta_deg = (0..m).map(|i| num(2 + i)).collect::<Result<_, _>>()?;
            let omega = (0..m).map(|i| num(2 + m + i)).collect::<Result<_, _>>()?;
            let island = (0..m)
                .map(|i| int(2 + 2 * m + i).map(|v| v as usize))
                .collect::<Result<_, _>>()?;
            let base = 2 + 3 * m;
            let vmag = (0..bus_ids.len()).map(|k| num(base + k)).collect::<Result<_, _>>()?;
            let tb = base + bus_ids.len();
            let theta_deg = (0..branches.len())
                .map(|k| {
                    if rec[tb + k].trim().is_empty() {
                        Ok(None)
                    } else {
                        num(tb + k).map(Some)
                    }
                })
                .collect::<Result<_, _>>()?;
            frames.push(PmuFrame {
                n,
                t,
                delta_deg,
                omega,
                island,
                vmag,
                theta_deg,
            });
        }
        let t_s = match frames.as_slice() {
            [a, b, ..] => b.t - a.t,
            _ => 1.0 / 60.0,
        };
        for (r, pair) in frames.windows(2).enumerate() {
            let dt = pair[1].t - pair[0].t;
            if pair[1].n != pair[0].n + 1 || (dt - t_s).abs() > 1e-6 * t_s.max(1e-3) {
                return Err(StreamError::Schema {
                    row: r + 2,
                    message: "frames are not uniformly sampled".into(),
                });
            }
        }
        Ok(PmuStream {
            t_s,
            bus_ids,
            branches,
            frames,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PmuStream {
        let frame = |n: u64| PmuFrame {
            n,
            t: n as f64 / 60.0,
            delta_deg: vec![1.0 / 3.0 + n as f64, -2.5],
            omega: vec![1e-5, -3.3e-7],
            island: vec![0, 0],
            vmag: vec![1.01, 0.99],
            theta_deg: vec![Some(12.25), None],
        };
        PmuStream {
            t_s: 1.0 / 60.0,
            bus_ids: vec![1, 2],
            branches: vec![(1, 2), (2, 1)],
            frames: (0..3).map(frame).collect(),
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = sample();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n,t,delta_1,delta_2,omega_1,omega_2,island_1,island_2,vmag_1,vmag_2,theta_1_2,theta_2_1"));
        let back = PmuStream::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.frames, s.frames);
        assert_eq!(back.bus_ids, s.bus_ids);
    }

    #[test]
    fn nan_row_is_named() {
        let s = sample();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen("-2.5", "NaN", 2);
        match PmuStream::read_csv(text.as_bytes()) {
            Err(StreamError::Schema { row: 1, message }) => assert!(message.contains("delta_2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_header_rejected() {
        assert!(matches!(
            PmuStream::read_csv("a,b\n1,2\n".as_bytes()),
            Err(StreamError::Header(_))
        ));
    }

    #[test]
    fn extremes() {
        let f = &sample().frames[0];
        assert_eq!(f.theta_max(), Some((0, 12.25)));
        assert_eq!(f.vmin(), Some((1, 0.99)));
    }
}
