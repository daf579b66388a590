use std::io::{BufRead, Write};

use crate::basis::variable_names;
use crate::error::{Error, Result};
use crate::report::fmt_sci;
use crate::scalar::Real;

use super::BrownianPath;

/// States on a uniform time grid together with the increments that drove them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<T> {
    state_dim: usize,
    /// `(steps + 1) x state_dim`, row-major
    states: Vec<T>,
    increments: BrownianPath<T>,
    model_tag: String,
}

impl<T: Real> TrajectoryRecord<T> {
    pub fn new(
        state_dim: usize,
        states: Vec<T>,
        increments: BrownianPath<T>,
        model_tag: String,
    ) -> Self {
        debug_assert_eq!(states.len(), (increments.steps() + 1) * state_dim);
        Self {
            state_dim,
            states,
            increments,
            model_tag,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn steps(&self) -> usize {
        self.increments.steps()
    }

    pub fn dt(&self) -> T {
        self.increments.dt()
    }

    pub fn times(&self) -> Vec<T> {
        let dt = self.dt();
        (0..=self.steps())
            .map(|i| T::from_usize_lossy(i) * dt)
            .collect()
    }

    pub fn state(&self, i: usize) -> &[T] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn states(&self) -> &[T] {
        &self.states
    }

    pub fn increments(&self) -> &BrownianPath<T> {
        &self.increments
    }

    pub fn model_tag(&self) -> &str {
        &self.model_tag
    }
}

/// Writes the columnar text form: a `#` provenance line, a header row
/// `t,x,y,...,dB1,dB2,...`, then one line per time point with 15 significant
/// digits. The increment on row `i` drives the step from `t_i` to `t_{i+1}`;
/// the final row has no successor and carries zeros.
pub fn write_trajectory<T: Real, W: Write>(rec: &TrajectoryRecord<T>, mut out: W) -> Result<()> {
    let n = rec.state_dim;
    let m = rec.increments.channels();
    writeln!(
        out,
        "# model={} dt={}",
        rec.model_tag,
        fmt_sci(rec.dt().to_f64_lossy(), 17)
    )?;
    let mut header = vec!["t".to_string()];
    header.extend(variable_names(n));
    header.extend((1..=m).map(|k| format!("dB{k}")));
    writeln!(out, "{}", header.join(","))?;
    let times = rec.times();
    let zeros = vec![T::zero(); m];
    let mut line = String::new();
    for (i, t) in times.iter().enumerate() {
        line.clear();
        line.push_str(&fmt_sci(t.to_f64_lossy(), 15));
        for v in rec.state(i) {
            line.push(',');
            line.push_str(&fmt_sci(v.to_f64_lossy(), 15));
        }
        let inc = if i < rec.steps() {
            rec.increments.increment(i)
        } else {
            &zeros
        };
        for v in inc {
            line.push(',');
            line.push_str(&fmt_sci(v.to_f64_lossy(), 15));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_trajectory<T: Real, R: BufRead>(input: R) -> Result<TrajectoryRecord<T>> {
    let mut tag = String::new();
    let mut dt: Option<f64> = None;
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            for kv in meta.split_whitespace() {
                match kv.split_once('=') {
                    Some(("model", v)) => tag = v.to_string(),
                    Some(("dt", v)) => dt = v.parse().ok(),
                    _ => {}
                }
            }
            continue;
        }
        if header.is_none() {
            header = Some(line.split(',').map(|s| s.trim().to_string()).collect());
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: lineno + 1,
                message: e.to_string(),
            })?;
        rows.push(row);
    }
    let header = header.ok_or(Error::Parse {
        line: 0,
        message: "missing header".into(),
    })?;
    let m = header.iter().filter(|h| h.starts_with("dB")).count();
    let n = header.len() - 1 - m;
    if rows.len() < 2 {
        return Err(Error::Parse {
            line: 0,
            message: "trajectory needs at least two rows".into(),
        });
    }
    for (i, r) in rows.iter().enumerate() {
        if r.len() != header.len() {
            return Err(Error::Parse {
                line: i + 3,
                message: format!("expected {} columns, got {}", header.len(), r.len()),
            });
        }
    }
    let dt = dt.unwrap_or(rows[1][0] - rows[0][0]);
    let states = rows
        .iter()
        .flat_map(|r| r[1..=n].iter().map(|&v| T::lit(v)))
        .collect();
    let increments = rows[..rows.len() - 1]
        .iter()
        .flat_map(|r| r[n + 1..].iter().map(|&v| T::lit(v)))
        .collect();
    let path = BrownianPath::from_increments(T::lit(dt), m, increments)?;
    Ok(TrajectoryRecord::new(n, states, path, tag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{builtin_model, euler_maruyama, sample_brownian, Builtin, NoiseParams};

    #[test]
    fn text_round_trip_to_fifteen_digits() {
        let m = builtin_model(Builtin::Lorenz, NoiseParams::new(0.9)).unwrap();
        let path = sample_brownian(200, 3, 0.01, 8).unwrap();
        let rec = euler_maruyama(&m, &[-8.0, 7.0, 27.0], &path).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().nth(1).unwrap() == "t,x,y,z,dB1,dB2,dB3");
        assert_eq!(text.lines().count(), 2 + 201);
        let back: TrajectoryRecord<f64> = read_trajectory(&buf[..]).unwrap();
        assert_eq!(back.steps(), 200);
        assert_eq!(back.model_tag(), "lorenz");
        assert_eq!(back.dt(), 0.01);
        for (a, b) in back.states().iter().zip(rec.states()) {
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1.0));
        }
        for (a, b) in back
            .increments()
            .as_slice()
            .iter()
            .zip(rec.increments().as_slice())
        {
            assert!((a - b).abs() <= 1e-14 * b.abs().max(1e-3));
        }
    }
}
