//! Per-packet records, KPIs, eCDFs and the CSV dataset.
//!
//! Dataset columns, in order:
//!
//! `Timestamp,Test Id,Packet Id,Sender Address,Receiver Address,TTL,Tx Power,Priority Class,Delivered,Number of hops,PDT`
//!
//! Addresses are written as `0x` + four uppercase hex digits. `Timestamp` is
//! the reception wall-clock in milliseconds for delivered rows (origination +
//! PDT) and the origination wall-clock otherwise. `Number of hops` and `PDT`
//! are empty on undelivered rows.
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pdu::Address;

pub const DATASET_HEADER: [&str; 11] = [
    "Timestamp",
    "Test Id",
    "Packet Id",
    "Sender Address",
    "Receiver Address",
    "TTL",
    "Tx Power",
    "Priority Class",
    "Delivered",
    "Number of hops",
    "PDT",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PacketRecord {
    /// Origination wall-clock, ms.
    pub timestamp_ms: u64,
    pub test_id: u32,
    pub packet_id: u32,
    pub sender_address: Address,
    pub receiver_address: Address,
    /// Initial TTL.
    pub ttl: u8,
    pub tx_power_dbm: i8,
    pub priority_class: u8,
    pub delivered: bool,
    /// Relays traversed by the first delivered copy.
    pub number_of_hops: Option<u8>,
    pub pdt_ms: Option<u64>,
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no records")]
    Empty,
    #[error("no values")]
    NoValues,
    #[error("value {0} is not a number")]
    NotANumber(f64),
    #[error("TTL at delivery {at_delivery} exceeds initial TTL {initial}")]
    TtlIncreased { initial: u8, at_delivery: u8 },
    #[error("dataset is missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("dataset row {row}, column `{column}`: {message}")]
    BadValue {
        row: usize,
        column: &'static str,
        message: String,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl MetricsError {
    pub fn is_io(&self) -> bool {
        match self {
            MetricsError::Io(_) => true,
            MetricsError::Csv(e) => e.is_io_error(),
            _ => false,
        }
    }
}

pub fn hops_from_ttl(initial_ttl: u8, ttl_at_delivery: u8) -> Result<u8, MetricsError> {
    initial_ttl
        .checked_sub(ttl_at_delivery)
        .ok_or(MetricsError::TtlIncreased {
            initial: initial_ttl,
            at_delivery: ttl_at_delivery,
        })
}

/// KPIs of one priority class. PDT and hop statistics cover delivered
/// packets only and are `None` when nothing was delivered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorityKpi {
    pub priority: u8,
    pub sent: u64,
    pub delivered: u64,
    pub pdr: f64,
    pub hops_avg: Option<f64>,
    pub pdt_avg: Option<f64>,
    /// Sample standard deviation.
    pub pdt_std: Option<f64>,
    pub pdt_min: Option<u64>,
    pub pdt_max: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiTable {
    pub classes: Vec<PriorityKpi>,
}

impl KpiTable {
    pub fn get(&self, priority: u8) -> Option<&PriorityKpi> {
        self.classes.iter().find(|k| k.priority == priority)
    }
}

#[derive(Default)]
struct Accum {
    sent: u64,
    delivered: u64,
    hops: u64,
    pdt_sum: u128,
    pdt_sq: u128,
    pdt_min: Option<u64>,
    pdt_max: Option<u64>,
}

/// Sums are kept in integers so the result does not depend on record order.
pub fn compute_kpis(records: &[PacketRecord]) -> Result<KpiTable, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut by_class: BTreeMap<u8, Accum> = BTreeMap::new();
    for r in records {
        let a = by_class.entry(r.priority_class).or_default();
        a.sent += 1;
        if !r.delivered {
            continue;
        }
        a.delivered += 1;
        a.hops += u64::from(r.number_of_hops.unwrap_or(0));
        let pdt = r.pdt_ms.unwrap_or(0);
        a.pdt_sum += u128::from(pdt);
        a.pdt_sq += u128::from(pdt) * u128::from(pdt);
        a.pdt_min = Some(a.pdt_min.map_or(pdt, |m| m.min(pdt)));
        a.pdt_max = Some(a.pdt_max.map_or(pdt, |m| m.max(pdt)));
    }
    let classes = by_class
        .into_iter()
        .map(|(priority, a)| {
            let n = a.delivered;
            let (hops_avg, pdt_avg, pdt_std) = if n == 0 {
                (None, None, None)
            } else {
                let nn = u128::from(n);
                let std = if n > 1 {
                    let num = nn * a.pdt_sq - a.pdt_sum * a.pdt_sum;
                    (num as f64 / (nn * (nn - 1)) as f64).sqrt()
                } else {
                    0.0
                };
                (
                    Some(a.hops as f64 / n as f64),
                    Some(a.pdt_sum as f64 / n as f64),
                    Some(std),
                )
            };
            PriorityKpi {
                priority,
                sent: a.sent,
                delivered: n,
                pdr: n as f64 / a.sent as f64,
                hops_avg,
                pdt_avg,
                pdt_std,
                pdt_min: a.pdt_min,
                pdt_max: a.pdt_max,
            }
        })
        .collect();
    Ok(KpiTable { classes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestKpis {
    pub test_id: u32,
    #[serde(flatten)]
    pub table: KpiTable,
}

/// KPI tables grouped by test id; this is the JSON report format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub tests: Vec<TestKpis>,
}

impl KpiReport {
    pub fn test(&self, test_id: u32) -> Option<&KpiTable> {
        self.tests
            .iter()
            .find(|t| t.test_id == test_id)
            .map(|t| &t.table)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn kpi_report(records: &[PacketRecord]) -> Result<KpiReport, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut by_test: BTreeMap<u32, Vec<PacketRecord>> = BTreeMap::new();
    for r in records {
        by_test.entry(r.test_id).or_default().push(r.clone());
    }
    let tests = by_test
        .into_iter()
        .map(|(test_id, rs)| {
            Ok(TestKpis {
                test_id,
                table: compute_kpis(&rs)?,
            })
        })
        .collect::<Result<_, MetricsError>>()?;
    Ok(KpiReport { tests })
}

/// Empirical CDF as `(value, fraction of values <= value)` steps.
pub fn ecdf(values: &[f64]) -> Result<Vec<(f64, f64)>, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::NoValues);
    }
    if let Some(&v) = values.iter().find(|v| v.is_nan()) {
        return Err(MetricsError::NotANumber(v));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (k, v) in sorted.into_iter().enumerate() {
        let frac = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => out.push((v, frac)),
        }
    }
    Ok(out)
}

/// Smallest value whose cumulative fraction reaches `q`.
pub fn quantile(points: &[(f64, f64)], q: f64) -> Option<f64> {
    points
        .iter()
        .find(|(_, f)| *f >= q - 1e-12)
        .or(points.last())
        .map(|(v, _)| *v)
}

/// Delivered PDTs of one class, in ms.
pub fn pdts(records: &[PacketRecord], priority: u8) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.priority_class == priority && r.delivered)
        .filter_map(|r| r.pdt_ms)
        .map(|v| v as f64)
        .collect()
}

pub fn write_ecdf<W: Write>(points: &[(f64, f64)], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["pdt_ms", "fraction"])?;
    for (v, f) in points {
        w.write_record([v.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn hex(a: Address) -> String {
    format!("0x{:04X}", a.0)
}

pub fn write_dataset<W: Write>(records: &[PacketRecord], out: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DATASET_HEADER)?;
    for r in records {
        let shown_ts = r.timestamp_ms + r.pdt_ms.filter(|_| r.delivered).unwrap_or(0);
        w.write_record([
            shown_ts.to_string(),
            r.test_id.to_string(),
            r.packet_id.to_string(),
            hex(r.sender_address),
            hex(r.receiver_address),
            r.ttl.to_string(),
            r.tx_power_dbm.to_string(),
            r.priority_class.to_string(),
            u8::from(r.delivered).to_string(),
            r.number_of_hops.map(|h| h.to_string()).unwrap_or_default(),
            r.pdt_ms.map(|p| p.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_dataset(records: &[PacketRecord], path: &Path) -> Result<(), MetricsError> {
    let f = File::create(path)?;
    write_dataset(records, io::BufWriter::new(f))
}

pub fn read_dataset<R: Read>(input: R) -> Result<Vec<PacketRecord>, MetricsError> {
    let mut rd = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rd.headers()?.clone();
    let mut idx = [0usize; 11];
    for (slot, name) in idx.iter_mut().zip(DATASET_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or(MetricsError::MissingColumn(name))?;
    }
    let mut out = Vec::new();
    for (n, row) in rd.records().enumerate() {
        let row = row?;
        let line = n + 2;
        let cell = |c: usize| -> (&'static str, &str) {
            (DATASET_HEADER[c], row.get(idx[c]).unwrap_or(""))
        };
        let bad = |column: &'static str, message: String| MetricsError::BadValue {
            row: line,
            column,
            message,
        };
        fn num<T: std::str::FromStr>(
            (column, v): (&'static str, &str),
            bad: &dyn Fn(&'static str, String) -> MetricsError,
        ) -> Result<T, MetricsError> {
            v.parse()
                .map_err(|_| bad(column, format!("cannot parse `{v}`")))
        }
        fn opt<T: std::str::FromStr>(
            (column, v): (&'static str, &str),
            bad: &dyn Fn(&'static str, String) -> MetricsError,
        ) -> Result<Option<T>, MetricsError> {
            if v.is_empty() {
                Ok(None)
            } else {
                num((column, v), bad).map(Some)
            }
        }
        let addr = |(column, v): (&'static str, &str)| -> Result<Address, MetricsError> {
            v.strip_prefix("0x")
                .or_else(|| v.strip_prefix("0X"))
                .and_then(|h| u16::from_str_radix(h, 16).ok())
                .map(Address)
                .ok_or_else(|| {
                    bad(
                        column,
                        format!("expected 0x-prefixed hex address, got `{v}`"),
                    )
                })
        };
        let delivered = match cell(8).1 {
            "1" => true,
            "0" => false,
            other => {
                return Err(bad(
                    DATASET_HEADER[8],
                    format!("expected 0 or 1, got `{other}`"),
                ))
            }
        };
        let shown_ts: u64 = num(cell(0), &bad)?;
        let pdt_ms: Option<u64> = opt(cell(10), &bad)?;
        let origin_ts = if delivered {
            shown_ts
                .checked_sub(pdt_ms.unwrap_or(0))
                .ok_or_else(|| bad(DATASET_HEADER[0], "timestamp earlier than PDT".into()))?
        } else {
            shown_ts
        };
        out.push(PacketRecord {
            timestamp_ms: origin_ts,
            test_id: num(cell(1), &bad)?,
            packet_id: num(cell(2), &bad)?,
            sender_address: addr(cell(3))?,
            receiver_address: addr(cell(4))?,
            ttl: num(cell(5), &bad)?,
            tx_power_dbm: num(cell(6), &bad)?,
            priority_class: num(cell(7), &bad)?,
            delivered,
            number_of_hops: opt(cell(9), &bad)?,
            pdt_ms,
        });
    }
    Ok(out)
}

pub fn import_dataset(path: &Path) -> Result<Vec<PacketRecord>, MetricsError> {
    read_dataset(io::BufReader::new(File::open(path)?))
}
