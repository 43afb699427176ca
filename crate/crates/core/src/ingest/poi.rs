use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Precomputed POI densities keyed by `(stop_id, buffer radius in metres)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoiTable {
    entries: BTreeMap<(String, u32), Vec<f64>>,
}

impl PoiTable {
    pub fn insert(&mut self, stop_id: impl Into<String>, radius: u32, densities: Vec<f64>) {
        self.entries.insert((stop_id.into(), radius), densities);
    }

    pub fn get(&self, stop_id: &str, radius: u32) -> Option<&[f64]> {
        self.entries.get(&(stop_id.to_string(), radius)).map(Vec::as_slice)
    }

    pub fn radii(&self) -> Vec<u32> {
        let mut r: Vec<u32> = self.entries.keys().map(|k| k.1).collect();
        r.sort_unstable();
        r.dedup();
        r
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// CSV with columns `stop_id,radius,densities` where densities are
    /// `;`-separated.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["stop_id", "radius", "densities"]).map_err(csv_err)?;
        for ((stop, radius), d) in &self.entries {
            let joined = d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";");
            wr.write_record([stop.as_str(), &radius.to_string(), &joined]).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, path: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut table = PoiTable::default();
        for (i, rec) in rd.records().enumerate() {
            let line = i + 2;
            let parse_err = |message: String| Error::Parse { path: path.to_string(), line, message };
            let rec = rec.map_err(|e| parse_err(e.to_string()))?;
            if rec.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, found {}", rec.len())));
            }
            let radius: u32 = rec[1].parse().map_err(|_| parse_err(format!("bad radius {:?}", &rec[1])))?;
            let densities = parse_vec(&rec[2]).map_err(parse_err)?;
            table.insert(&rec[0], radius, densities);
        }
        Ok(table)
    }
}

pub(crate) fn parse_vec(s: &str) -> std::result::Result<Vec<f64>, String> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';')
        .map(|x| x.parse::<f64>().map_err(|_| format!("bad number {x:?}")))
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = PoiTable::default();
        t.insert("S001", 300, vec![1.5, 0.0, 2.25]);
        t.insert("S001", 200, vec![0.5, 0.0, 1.0]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = PoiTable::read_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, t);
        assert_eq!(back.radii(), vec![200, 300]);
    }

    #[test]
    fn reports_bad_line() {
        let data = "stop_id,radius,densities\nS1,300,1;2\nS2,x,1\n";
        match PoiTable::read_csv(data.as_bytes(), "poi.csv") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
