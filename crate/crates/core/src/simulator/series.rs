//! Uniformly sampled multi-channel series and their CSV form.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Relative slack on the sampling grid when reading files.
const GRID_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub names: Vec<String>,
    /// One row per sample, one entry per channel.
    pub values: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, names: Vec<String>, values: Vec<Vec<f64>>) -> Result<TimeSeries> {
        if !(dt > 0.0) {
            return Err(Error::Config(format!("sampling step must be positive, got {dt}")));
        }
        if let Some(i) = values.iter().position(|r| r.len() != names.len()) {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} values for {} channels",
                values[i].len(),
                names.len()
            )));
        }
        Ok(TimeSeries { t0, dt, names, values })
    }

    /// Single-channel series.
    pub fn scalar(name: &str, t0: f64, dt: f64, values: Vec<f64>) -> TimeSeries {
        TimeSeries {
            t0,
            dt,
            names: vec![name.to_string()],
            values: values.into_iter().map(|v| vec![v]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn channels(&self) -> usize {
        self.names.len()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[c]).collect()
    }

    /// Linear interpolation of channel `c`, clamped to the covered interval.
    pub fn sample(&self, t: f64, c: usize) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let s = ((t - self.t0) / self.dt).max(0.0);
        let i = s.floor() as usize;
        if i + 1 >= n {
            return self.values[n - 1][c];
        }
        let f = s - i as f64;
        self.values[i][c] * (1.0 - f) + self.values[i + 1][c] * f
    }

    /// Root mean square of each channel.
    pub fn rms(&self) -> Vec<f64> {
        let n = self.len().max(1) as f64;
        (0..self.channels())
            .map(|c| (self.values.iter().map(|r| r[c] * r[c]).sum::<f64>() / n).sqrt())
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend(self.names.iter().cloned());
        out.write_record(&header)?;
        for (i, row) in self.values.iter().enumerate() {
            let mut rec = vec![format!("{}", self.time(i))];
            rec.extend(row.iter().map(|v| format!("{v}")));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<TimeSeries> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(r);
        let header = rdr.headers()?.clone();
        if header.get(0) != Some("t") || header.len() < 2 {
            return Err(Error::Parse("header must be `t,ch0[,ch1...]`".into()));
        }
        let names: Vec<String> = header.iter().skip(1).map(String::from).collect();
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let nums = rec
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::Parse(format!("row {}: {e}", i + 1)))?;
            if nums.len() != names.len() + 1 {
                return Err(Error::Parse(format!("row {} has {} fields", i + 1, nums.len())));
            }
            times.push(nums[0]);
            values.push(nums[1..].to_vec());
        }
        if times.len() < 2 {
            return Err(Error::Parse("a series needs at least two rows".into()));
        }
        let dt = times[1] - times[0];
        if !(dt > 0.0) {
            return Err(Error::NonUniformSampling(2));
        }
        for (i, &t) in times.iter().enumerate() {
            let expected = times[0] + i as f64 * dt;
            if (t - expected).abs() > GRID_TOLERANCE * dt {
                return Err(Error::NonUniformSampling(i + 1));
            }
        }
        TimeSeries::new(times[0], dt, names, values)
    }
}

pub fn load_series(path: impl AsRef<Path>) -> Result<TimeSeries> {
    TimeSeries::read_csv(std::fs::File::open(path)?)
}

pub fn store_series(ts: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    ts.write_csv(std::fs::File::create(path)?)
}
