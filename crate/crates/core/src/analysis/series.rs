//! `FieldSeries`: sampled observables per replica, with CSV round-trip.
//!
//! CSV layout: `# key=value` metadata lines, then a header
//! `replica,seed,time,<channel>:<label>,...` and one row per replica and
//! sample time.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use crate::error::{domain, Error, Result};

pub const SERIES_FORMAT: &str = "field-series";
pub const SERIES_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    /// `Z_t(f)`.
    Field,
    /// Compensator integrand `3^{-n/2} Σ (h(η(x)) - φ) Δ_n f(x)`.
    Integrand,
    /// Event-exact integral of the integrand.
    Compensator,
    /// Event-resolution quadratic variation `Σ (ΔZ)²`.
    Qv,
    /// Time-integrated per-site Boltzmann-Gibbs statistic.
    Bg,
    /// Time-integrated block statistic built from `V_{n,k}`.
    BgBlock,
    /// Running maximum of `|ΔZ|` over events.
    MaxJump,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::Field,
        Channel::Integrand,
        Channel::Compensator,
        Channel::Qv,
        Channel::Bg,
        Channel::BgBlock,
        Channel::MaxJump,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Field => "field",
            Channel::Integrand => "integrand",
            Channel::Compensator => "compensator",
            Channel::Qv => "qv",
            Channel::Bg => "bg",
            Channel::BgBlock => "bg_block",
            Channel::MaxJump => "max_jump",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| domain(format!("unknown channel {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaSeries {
    pub replica: u64,
    pub seed: u64,
    /// `values[t][column]`, columns as in [`FieldSeries::columns`].
    pub values: Vec<Vec<f64>>,
}

/// Rectangular `replicas × times × (label, channel)` table.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSeries {
    pub meta: BTreeMap<String, String>,
    pub labels: Vec<String>,
    pub channels: Vec<Channel>,
    pub times: Vec<f64>,
    pub replicas: Vec<ReplicaSeries>,
}

impl FieldSeries {
    pub fn new(labels: Vec<String>, channels: Vec<Channel>, times: Vec<f64>) -> Self {
        Self {
            meta: BTreeMap::new(),
            labels,
            channels,
            times,
            replicas: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.labels.len() * self.channels.len()
    }

    /// Column order: label-major, channels inner.
    pub fn columns(&self) -> Vec<(String, Channel)> {
        self.labels
            .iter()
            .flat_map(|l| self.channels.iter().map(move |c| (l.clone(), *c)))
            .collect()
    }

    pub fn label_index(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| domain(format!("series has no test function {label:?}")))
    }

    pub fn has_channel(&self, channel: Channel) -> bool {
        self.channels.contains(&channel)
    }

    fn column(&self, label: &str, channel: Channel) -> Result<usize> {
        let l = self.label_index(label)?;
        let c = self
            .channels
            .iter()
            .position(|&c| c == channel)
            .ok_or_else(|| domain(format!("series has no {channel} channel")))?;
        Ok(l * self.channels.len() + c)
    }

    /// Time series of one channel, one row per replica.
    pub fn channel(&self, label: &str, channel: Channel) -> Result<Vec<Vec<f64>>> {
        let col = self.column(label, channel)?;
        Ok(self
            .replicas
            .iter()
            .map(|r| r.values.iter().map(|row| row[col]).collect())
            .collect())
    }

    pub fn push(&mut self, replica: ReplicaSeries) -> Result<()> {
        if replica.values.len() != self.times.len()
            || replica.values.iter().any(|row| row.len() != self.width())
        {
            return Err(domain("replica series is not rectangular"));
        }
        if replica.values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(domain("replica series contains non-finite values"));
        }
        self.replicas.push(replica);
        Ok(())
    }

    pub fn set_meta(&mut self, key: &str, value: impl fmt::Display) {
        self.meta.insert(key.to_string(), value.to_string());
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| domain(format!("series metadata lacks {key:?}")))
    }

    pub fn meta_parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let s = self.meta_str(key)?;
        s.parse()
            .map_err(|e: T::Err| domain(format!("metadata {key}={s:?}: {e}")))
    }

    /// Uniform spacing of the time grid, if it is uniform.
    pub fn spacing(&self) -> Option<f64> {
        if self.times.len() < 2 {
            return None;
        }
        let dt = self.times[1] - self.times[0];
        let uniform = dt > 0.0
            && self
                .times
                .windows(2)
                .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt.max(1.0));
        uniform.then_some(dt)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# format={SERIES_FORMAT}")?;
        writeln!(out, "# version={SERIES_VERSION}")?;
        for (k, v) in &self.meta {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(domain(format!("metadata {k:?} cannot be serialized")));
            }
            writeln!(out, "# {k}={v}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["replica".to_string(), "seed".into(), "time".into()];
        header.extend(self.columns().into_iter().map(|(l, c)| format!("{c}:{l}")));
        w.write_record(&header)?;
        for r in &self.replicas {
            for (t, row) in self.times.iter().zip(&r.values) {
                let mut rec = vec![r.replica.to_string(), r.seed.to_string(), t.to_string()];
                rec.extend(row.iter().map(f64::to_string));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            what: "field series",
            reason,
        };
        let mut reader = BufReader::new(input);
        let mut meta = BTreeMap::new();
        let header;
        loop {
            let mut line = String::new();
            if reader.read_line(&mut line)? == 0 {
                return Err(bad("missing header".into()));
            }
            match line.strip_prefix('#') {
                Some(rest) => {
                    let (k, v) = rest
                        .trim()
                        .split_once('=')
                        .ok_or_else(|| bad(format!("bad metadata line {line:?}")))?;
                    meta.insert(k.to_string(), v.to_string());
                }
                None => {
                    header = line;
                    break;
                }
            }
        }
        if meta.remove("format").as_deref() != Some(SERIES_FORMAT) {
            return Err(bad("not a field-series file".into()));
        }
        match meta.remove("version").map(|v| v.parse::<u32>()) {
            Some(Ok(SERIES_VERSION)) => {}
            other => return Err(bad(format!("unsupported version {other:?}"))),
        }

        let cols: Vec<&str> = header.trim_end().split(',').collect();
        if cols.len() < 3 || cols[..3] != ["replica", "seed", "time"] {
            return Err(bad("header must start with replica,seed,time".into()));
        }
        let mut labels: Vec<String> = Vec::new();
        let mut channels: Vec<Channel> = Vec::new();
        let mut pairs = Vec::new();
        for c in &cols[3..] {
            let (ch, label) = c
                .split_once(':')
                .ok_or_else(|| bad(format!("column {c:?} is not channel:label")))?;
            let ch: Channel = ch.parse()?;
            if !labels.iter().any(|l| l == label) {
                labels.push(label.to_string());
            }
            if !channels.contains(&ch) {
                channels.push(ch);
            }
            pairs.push((label.to_string(), ch));
        }
        let mut series = FieldSeries::new(labels, channels, Vec::new());
        if series.columns() != pairs {
            return Err(bad("columns are not a label-major channel grid".into()));
        }
        series.meta = meta;

        let mut rows = csv::ReaderBuilder::new()
            .has_headers(false)
            .from_reader(reader);
        let mut current: Option<ReplicaSeries> = None;
        let mut times = Vec::new();
        let mut first_done = false;
        for rec in rows.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .ok_or_else(|| bad("short row".into()))?
                    .parse::<f64>()
                    .map_err(|e| bad(e.to_string()))
            };
            let replica: u64 = rec[0].parse().map_err(|e| bad(format!("replica: {e}")))?;
            let seed: u64 = rec[1].parse().map_err(|e| bad(format!("seed: {e}")))?;
            if rec.len() != cols.len() {
                return Err(bad("row width differs from header".into()));
            }
            let t = num(2)?;
            let values = (3..cols.len()).map(num).collect::<Result<Vec<_>>>()?;
            if current.as_ref().is_some_and(|c| c.replica != replica) {
                let done = current.take().unwrap();
                if !first_done {
                    series.times = std::mem::take(&mut times);
                    first_done = true;
                }
                series.push(done)?;
            }
            let entry = current.get_or_insert_with(|| ReplicaSeries {
                replica,
                seed,
                values: Vec::new(),
            });
            if first_done {
                let i = entry.values.len();
                if series.times.get(i) != Some(&t) {
                    return Err(bad(format!("replica {replica} has a different time grid")));
                }
            } else {
                times.push(t);
            }
            entry.values.push(values);
        }
        if let Some(done) = current {
            if !first_done {
                series.times = times;
            }
            series.push(done)?;
        }
        Ok(series)
    }
}
