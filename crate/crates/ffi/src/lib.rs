//! C ABI over `meshqos`.
//!
//! Every function returns an [`MqStatus`]. On failure a message describing
//! the error is available from [`mq_last_error`] on the same thread. Handles
//! are opaque and must be released with their `_free` function.
#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use meshqos::metrics::{self, MetricsError};
use meshqos::pdu::{self, Address, NetworkPdu, PduError, MAX_PAYLOAD};
use meshqos::scenario::{Scenario, ScenarioError};

// Literal so the header generator can see the values.
pub const MQ_MAX_PAYLOAD: usize = 11;
/// Largest encoded network PDU.
pub const MQ_MAX_PDU_LEN: usize = 19;
const _: () = assert!(MQ_MAX_PAYLOAD == MAX_PAYLOAD);
const _: () = assert!(MQ_MAX_PDU_LEN == pdu::HEADER_LEN + MAX_PAYLOAD);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A value does not fit its wire field.
    Range = 3,
    Parse = 4,
    Validation = 5,
    Io = 6,
    BufferTooSmall = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

/// A loaded, validated scenario.
pub struct MqScenario(Scenario);

/// The output of one simulation run.
pub struct MqRun(meshqos::RunOutput);

/// One dataset row. Absent hop counts and PDTs are -1.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MqRecord {
    pub timestamp_ms: u64,
    pub test_id: u32,
    pub packet_id: u32,
    pub sender_address: u16,
    pub receiver_address: u16,
    pub ttl: u8,
    pub tx_power_dbm: i8,
    pub priority_class: u8,
    pub delivered: bool,
    pub number_of_hops: i16,
    pub pdt_ms: i64,
}

/// A network PDU with its payload inline.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct MqPdu {
    pub src: u16,
    pub dst: u16,
    pub ttl: u8,
    pub seq: u16,
    pub priority: u8,
    pub payload_len: u8,
    pub payload: [u8; MQ_MAX_PAYLOAD],
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(MqStatus, String);

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        let status = match e {
            ScenarioError::Parse(_) => MqStatus::Parse,
            ScenarioError::UnknownBuiltin(_) => MqStatus::InvalidArgument,
            ScenarioError::Invalid(_) => MqStatus::Validation,
        };
        Failure(status, e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        let status = if e.is_io() {
            MqStatus::Io
        } else {
            MqStatus::InvalidArgument
        };
        Failure(status, e.to_string())
    }
}

impl From<PduError> for Failure {
    fn from(e: PduError) -> Self {
        let status = match e {
            PduError::FieldOutOfRange(_) | PduError::InvalidField { .. } => MqStatus::Range,
            PduError::Truncated(_) => MqStatus::Parse,
            PduError::PayloadTooLong(_) => MqStatus::Range,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MqStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f` behind a panic guard and records its error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MqStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MqStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            MqStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MqStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn boxed<T>(out: &mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Loads a built-in scenario (`experiment1`, `experiment2`).
#[no_mangle]
pub unsafe extern "C" fn mq_scenario_builtin(
    name: *const c_char,
    out: *mut *mut MqScenario,
) -> MqStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let name = str_arg(name, "name")?;
        boxed(out, MqScenario(Scenario::builtin(name)?));
        Ok(())
    })
}

/// Parses and validates a scenario from TOML text.
#[no_mangle]
pub unsafe extern "C" fn mq_scenario_from_toml(
    text: *const c_char,
    out: *mut *mut MqScenario,
) -> MqStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let text = str_arg(text, "text")?;
        boxed(out, MqScenario(meshqos::load_scenario(text)?));
        Ok(())
    })
}

/// Reads, parses and validates a scenario file.
#[no_mangle]
pub unsafe extern "C" fn mq_scenario_load(
    path: *const c_char,
    out: *mut *mut MqScenario,
) -> MqStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure(MqStatus::Io, format!("{path}: {e}")))?;
        let s = meshqos::load_scenario(&text).map_err(|e| {
            let Failure(status, msg) = Failure::from(e);
            Failure(status, format!("{path}: {msg}"))
        })?;
        boxed(out, MqScenario(s));
        Ok(())
    })
}

/// Overrides every flow's packet count.
#[no_mangle]
pub unsafe extern "C" fn mq_scenario_set_packet_count(
    scenario: *mut MqScenario,
    packet_count: u32,
) -> MqStatus {
    guard(|| {
        let s = out_arg(scenario, "scenario")?;
        if packet_count == 0 {
            return Err(Failure(
                MqStatus::InvalidArgument,
                "packet_count must be at least 1".into(),
            ));
        }
        for f in &mut s.0.traffic {
            f.packet_count = packet_count;
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mq_scenario_flow_count(
    scenario: *const MqScenario,
    out: *mut usize,
) -> MqStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(scenario, "scenario")?.0.traffic.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mq_scenario_free(scenario: *mut MqScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Simulates `scenario` with `seed`. The scenario is not modified.
#[no_mangle]
pub unsafe extern "C" fn mq_run(
    scenario: *const MqScenario,
    seed: u64,
    out: *mut *mut MqRun,
) -> MqStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = ref_arg(scenario, "scenario")?;
        boxed(out, MqRun(meshqos::run(&s.0, seed)?));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mq_run_free(run: *mut MqRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

#[no_mangle]
pub unsafe extern "C" fn mq_run_record_count(run: *const MqRun, out: *mut usize) -> MqStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(run, "run")?.0.records.len();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mq_run_get_record(
    run: *const MqRun,
    index: usize,
    out: *mut MqRecord,
) -> MqStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let records = &ref_arg(run, "run")?.0.records;
        let r = records.get(index).ok_or_else(|| {
            Failure(
                MqStatus::Range,
                format!("record {index} out of range ({} records)", records.len()),
            )
        })?;
        *out = MqRecord {
            timestamp_ms: r.timestamp_ms,
            test_id: r.test_id,
            packet_id: r.packet_id,
            sender_address: r.sender_address.0,
            receiver_address: r.receiver_address.0,
            ttl: r.ttl,
            tx_power_dbm: r.tx_power_dbm,
            priority_class: r.priority_class,
            delivered: r.delivered,
            number_of_hops: r.number_of_hops.map_or(-1, i16::from),
            pdt_ms: r
                .pdt_ms
                .map_or(-1, |v| i64::try_from(v).unwrap_or(i64::MAX)),
        };
        Ok(())
    })
}

/// KPI report as JSON. Release the string with [`mq_string_free`].
#[no_mangle]
pub unsafe extern "C" fn mq_run_kpi_json(run: *const MqRun, out: *mut *mut c_char) -> MqStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let report = metrics::kpi_report(&ref_arg(run, "run")?.0.records)?;
        let json = CString::new(report.to_json())
            .map_err(|_| Failure(MqStatus::InvalidArgument, "JSON contains NUL".into()))?;
        *out = json.into_raw();
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Writes the run's dataset CSV to `path`.
#[no_mangle]
pub unsafe extern "C" fn mq_run_export_csv(run: *const MqRun, path: *const c_char) -> MqStatus {
    guard(|| {
        let run = ref_arg(run, "run")?;
        let path = str_arg(path, "path")?;
        metrics::export_dataset(&run.0.records, Path::new(path)).map_err(|e| {
            let Failure(status, msg) = Failure::from(e);
            Failure(status, format!("{path}: {msg}"))
        })
    })
}

/// Packs a sequence number and priority into the 24-bit SEQ field.
#[no_mangle]
pub unsafe extern "C" fn mq_pack_seq_priority(seq: u32, priority: u32, out: *mut u32) -> MqStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let seq = u16::try_from(seq)
            .map_err(|_| Failure(MqStatus::Range, format!("seq {seq} exceeds 65535")))?;
        let priority = u8::try_from(priority)
            .map_err(|_| Failure(MqStatus::Range, format!("priority {priority} exceeds 255")))?;
        *out = pdu::pack_seq_priority(seq, priority);
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mq_unpack_seq_priority(
    field: u32,
    seq: *mut u16,
    priority: *mut u8,
) -> MqStatus {
    guard(|| {
        let seq = out_arg(seq, "seq")?;
        let priority = out_arg(priority, "priority")?;
        (*seq, *priority) = pdu::unpack_seq_priority(field)?;
        Ok(())
    })
}

fn to_pdu(p: &MqPdu) -> Result<NetworkPdu, Failure> {
    let len = usize::from(p.payload_len);
    if len > MAX_PAYLOAD {
        return Err(PduError::PayloadTooLong(len).into());
    }
    Ok(NetworkPdu {
        src: Address(p.src),
        dst: Address(p.dst),
        ttl: p.ttl,
        seq: p.seq,
        priority: p.priority,
        payload: p.payload[..len].to_vec(),
    })
}

/// Encodes `pdu` into `buf`. `written` receives the encoded length, also when
/// the buffer is too small.
#[no_mangle]
pub unsafe extern "C" fn mq_pdu_encode(
    pdu: *const MqPdu,
    buf: *mut u8,
    capacity: usize,
    written: *mut usize,
) -> MqStatus {
    guard(|| {
        let written = out_arg(written, "written")?;
        let bytes = pdu::encode_network_pdu(&to_pdu(ref_arg(pdu, "pdu")?)?)?;
        *written = bytes.len();
        if capacity < bytes.len() {
            return Err(Failure(
                MqStatus::BufferTooSmall,
                format!("need {} bytes, buffer has {capacity}", bytes.len()),
            ));
        }
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn mq_pdu_decode(bytes: *const u8, len: usize, out: *mut MqPdu) -> MqStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if bytes.is_null() {
            return Err(null("bytes"));
        }
        // Any malformed frame is a parse failure, whatever field is at fault.
        let p = pdu::decode_network_pdu(std::slice::from_raw_parts(bytes, len))
            .map_err(|e| Failure(MqStatus::Parse, e.to_string()))?;
        let mut payload = [0u8; MQ_MAX_PAYLOAD];
        payload[..p.payload.len()].copy_from_slice(&p.payload);
        *out = MqPdu {
            src: p.src.0,
            dst: p.dst.0,
            ttl: p.ttl,
            seq: p.seq,
            priority: p.priority,
            payload_len: p.payload.len() as u8,
            payload,
        };
        Ok(())
    })
}
