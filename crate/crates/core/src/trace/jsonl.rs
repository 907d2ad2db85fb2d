//! Newline-delimited JSON readers and writers for packet and radio logs.
//!
//! packet-jsonl: `{run_id, seq, op, dir, tx_us, rx_us, len}`
//! radio-jsonl:  `{run_id, op, t_s, rsrp_dbm, ul_tx_pwr_dbm, cell_id, lat, lon}`
//!
//! Unknown fields are ignored. A trace directory holds `packets.jsonl`,
//! `radio.jsonl` and a `meta.json` sidecar carrying the run-level fields the
//! line formats do not.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    sort_packets, Direction, DualTrace, GeoPosition, Operator, PacketRecord, PerOperator,
    RadioSample, Scenario, ScenarioMeta, TraceError, PROBE_PAYLOAD_LEN,
};

pub const PACKETS_FILE: &str = "packets.jsonl";
pub const RADIO_FILE: &str = "radio.jsonl";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Skip lines that fail to parse instead of failing; they are listed in
    /// the [`LoadReport`].
    pub lenient: bool,
    /// Enforce the target-rate consistency check.
    pub check_rate: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            lenient: false,
            check_rate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub path: PathBuf,
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub skipped: Vec<SkippedLine>,
}

impl LoadReport {
    pub fn skipped_count(&self) -> usize {
        self.skipped.len()
    }
}

#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub trace: DualTrace,
    pub report: LoadReport,
}

/// Run-level fields stored in `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub run_id: String,
    pub target_rate_bps: f64,
    pub scenario: Scenario,
    pub duration_s: f64,
    pub distance_km: f64,
    #[serde(default)]
    pub notes: String,
}

impl TraceMeta {
    pub fn of(trace: &DualTrace) -> Self {
        Self {
            run_id: trace.run_id.clone(),
            target_rate_bps: trace.target_rate_bps,
            scenario: trace.meta.scenario,
            duration_s: trace.meta.duration_s,
            distance_km: trace.meta.distance_km,
            notes: trace.meta.notes.clone(),
        }
    }

    /// Derives duration and target rate from the UL packet stream when no
    /// sidecar is available. Distance is unknown and set to zero.
    pub fn infer(run_id: &str, packets: &[PacketRecord], scenario: Scenario) -> Option<Self> {
        let ul: Vec<&PacketRecord> = packets.iter().filter(|p| p.direction == Direction::Ul).collect();
        let t0 = ul.iter().map(|p| p.tx_us).min()?;
        let t1 = ul.iter().map(|p| p.tx_us).max()?;
        let per_op = ul.len() as f64 / 2.0;
        if per_op < 2.0 || t1 == t0 {
            return None;
        }
        // N packets span N-1 intervals; the run lasts N intervals.
        let interval_s = (t1 - t0) as f64 / 1e6 / (per_op - 1.0);
        let duration_s = interval_s * per_op;
        Some(Self {
            run_id: run_id.to_string(),
            target_rate_bps: f64::from(PROBE_PAYLOAD_LEN) * 8.0 / interval_s,
            scenario,
            duration_s,
            distance_km: 0.0,
            notes: "inferred from packet stream".into(),
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PacketLine {
    run_id: String,
    seq: u64,
    op: Operator,
    dir: Direction,
    tx_us: u64,
    rx_us: Option<u64>,
    len: u32,
}

#[derive(Debug, Serialize, Deserialize)]
struct RadioLine {
    run_id: String,
    op: Operator,
    t_s: u64,
    rsrp_dbm: f64,
    ul_tx_pwr_dbm: f64,
    cell_id: CellId,
    lat: Option<f64>,
    lon: Option<f64>,
}

/// Cell identifiers appear as strings or integers depending on the modem.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum CellId {
    Text(String),
    Number(i64),
}

impl CellId {
    fn into_string(self) -> String {
        match self {
            CellId::Text(s) => s,
            CellId::Number(n) => n.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceError + '_ {
    move |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn open(path: &Path) -> Result<BufReader<File>, TraceError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

/// Run id seen in the file and the records with their line numbers.
type Parsed<T> = (Option<String>, Vec<(usize, T)>);

/// Parses every non-blank line, tracking the run id and the line number.
fn parse_lines<T, R>(
    reader: R,
    path: &Path,
    opts: LoadOptions,
    report: &mut LoadReport,
    mut run_id_of: impl FnMut(&T) -> &str,
) -> Result<Parsed<T>, TraceError>
where
    T: for<'de> Deserialize<'de>,
    R: BufRead,
{
    let mut run_id: Option<String> = None;
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: T = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) if opts.lenient => {
                report.skipped.push(SkippedLine {
                    path: path.to_path_buf(),
                    line: line_no,
                    reason: e.to_string(),
                });
                continue;
            }
            Err(e) => {
                return Err(TraceError::Schema {
                    path: path.to_path_buf(),
                    line: line_no,
                    message: e.to_string(),
                })
            }
        };
        let rid = run_id_of(&parsed);
        match &run_id {
            None => run_id = Some(rid.to_string()),
            Some(expected) if expected != rid => {
                return Err(TraceError::Invariant {
                    path: Some(path.to_path_buf()),
                    line: Some(line_no),
                    message: format!("run_id '{rid}' differs from '{expected}'"),
                })
            }
            Some(_) => {}
        }
        out.push((line_no, parsed));
    }
    Ok((run_id, out))
}

/// Reads packet-jsonl from any reader. `path` is used for error context only.
pub fn read_packets<R: BufRead>(
    reader: R,
    path: &Path,
    opts: LoadOptions,
    report: &mut LoadReport,
) -> Result<(Option<String>, Vec<PacketRecord>), TraceError> {
    let (run_id, lines) = parse_lines::<PacketLine, _>(reader, path, opts, report, |l| &l.run_id)?;
    let mut packets = Vec::with_capacity(lines.len());
    for (line_no, l) in lines {
        if let Some(rx) = l.rx_us {
            if rx < l.tx_us {
                return Err(TraceError::Invariant {
                    path: Some(path.to_path_buf()),
                    line: Some(line_no),
                    message: format!("packet seq {} has rx_us {rx} before tx_us {}", l.seq, l.tx_us),
                });
            }
        }
        packets.push(PacketRecord {
            seq: l.seq,
            operator: l.op,
            direction: l.dir,
            tx_us: l.tx_us,
            rx_us: l.rx_us,
            payload_len: l.len,
        });
    }
    Ok((run_id, packets))
}

pub fn read_radio<R: BufRead>(
    reader: R,
    path: &Path,
    opts: LoadOptions,
    report: &mut LoadReport,
) -> Result<(Option<String>, PerOperator<Vec<RadioSample>>), TraceError> {
    let (run_id, lines) = parse_lines::<RadioLine, _>(reader, path, opts, report, |l| &l.run_id)?;
    let mut radio: PerOperator<Vec<RadioSample>> = PerOperator::default();
    for (line_no, l) in lines {
        let series = &mut radio[l.op];
        if let Some(prev) = series.last() {
            if l.t_s <= prev.t_s {
                return Err(TraceError::Invariant {
                    path: Some(path.to_path_buf()),
                    line: Some(line_no),
                    message: format!(
                        "radio samples of operator {} not time-ordered ({} after {})",
                        l.op, l.t_s, prev.t_s
                    ),
                });
            }
        }
        let position = match (l.lat, l.lon) {
            (Some(lat), Some(lon)) => Some(GeoPosition { lat, lon }),
            _ => None,
        };
        series.push(RadioSample {
            operator: l.op,
            t_s: l.t_s,
            rsrp_dbm: l.rsrp_dbm,
            ul_tx_pwr_dbm: l.ul_tx_pwr_dbm,
            cell_id: l.cell_id.into_string(),
            position,
        });
    }
    Ok((run_id, radio))
}

pub fn load_packets(
    path: &Path,
    opts: LoadOptions,
    report: &mut LoadReport,
) -> Result<(Option<String>, Vec<PacketRecord>), TraceError> {
    read_packets(open(path)?, path, opts, report)
}

pub fn load_radio(
    path: &Path,
    opts: LoadOptions,
    report: &mut LoadReport,
) -> Result<(Option<String>, PerOperator<Vec<RadioSample>>), TraceError> {
    read_radio(open(path)?, path, opts, report)
}

/// Loads and validates a trace from its two line files and optional sidecar.
///
/// Without a sidecar, the run-level fields are inferred from the packet
/// stream (see [`TraceMeta::infer`]) and the scenario is taken from `scenario`.
pub fn load_trace(
    packets_path: &Path,
    radio_path: &Path,
    meta: Option<TraceMeta>,
    scenario: Scenario,
    opts: LoadOptions,
) -> Result<LoadedTrace, TraceError> {
    let mut report = LoadReport::default();
    let (pkt_run, mut packets) = load_packets(packets_path, opts, &mut report)?;
    let (radio_run, radio) = load_radio(radio_path, opts, &mut report)?;

    if let (Some(a), Some(b)) = (&pkt_run, &radio_run) {
        if a != b {
            return Err(TraceError::Invariant {
                path: Some(radio_path.to_path_buf()),
                line: None,
                message: format!("radio run_id '{b}' differs from packet run_id '{a}'"),
            });
        }
    }
    let run_id = pkt_run.or(radio_run).unwrap_or_default();

    // Validate in file order first so errors point at file lines.
    super::validate_packets(&packets).map_err(|e| with_path(e, packets_path))?;
    sort_packets(&mut packets);

    let meta = match meta {
        Some(m) => m,
        None => TraceMeta::infer(&run_id, &packets, scenario).ok_or_else(|| TraceError::Invariant {
            path: Some(packets_path.to_path_buf()),
            line: None,
            message: "cannot infer run metadata: need at least two UL packets per operator".into(),
        })?,
    };
    if !meta.run_id.is_empty() && !run_id.is_empty() && meta.run_id != run_id {
        return Err(TraceError::invariant(format!(
            "meta run_id '{}' differs from packet run_id '{run_id}'",
            meta.run_id
        )));
    }

    let trace = DualTrace {
        run_id: if run_id.is_empty() { meta.run_id.clone() } else { run_id },
        target_rate_bps: meta.target_rate_bps,
        packets,
        radio,
        meta: ScenarioMeta {
            scenario: meta.scenario,
            duration_s: meta.duration_s,
            distance_km: meta.distance_km,
            notes: meta.notes,
        },
    };
    trace.validate(opts.check_rate)?;
    Ok(LoadedTrace { trace, report })
}

fn with_path(err: TraceError, path: &Path) -> TraceError {
    match err {
        TraceError::Invariant { path: None, line, message } => TraceError::Invariant {
            path: Some(path.to_path_buf()),
            line,
            message,
        },
        other => other,
    }
}

/// Loads `packets.jsonl`, `radio.jsonl` and `meta.json` from a directory.
pub fn load_trace_dir(dir: &Path, opts: LoadOptions) -> Result<LoadedTrace, TraceError> {
    let meta_path = dir.join(META_FILE);
    let meta = if meta_path.exists() {
        let text = std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        Some(serde_json::from_str::<TraceMeta>(&text).map_err(|e| TraceError::Schema {
            path: meta_path.clone(),
            line: e.line(),
            message: e.to_string(),
        })?)
    } else {
        None
    };
    load_trace(
        &dir.join(PACKETS_FILE),
        &dir.join(RADIO_FILE),
        meta,
        Scenario::Synthetic,
        opts,
    )
}

pub fn write_packets<W: Write>(mut w: W, run_id: &str, packets: &[PacketRecord]) -> std::io::Result<()> {
    for p in packets {
        let line = PacketLine {
            run_id: run_id.to_string(),
            seq: p.seq,
            op: p.operator,
            dir: p.direction,
            tx_us: p.tx_us,
            rx_us: p.rx_us,
            len: p.payload_len,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes both operators' samples, operator A first.
pub fn write_radio<W: Write>(
    mut w: W,
    run_id: &str,
    radio: &PerOperator<Vec<RadioSample>>,
) -> std::io::Result<()> {
    for (_, series) in radio.iter() {
        for s in series {
            let line = RadioLine {
                run_id: run_id.to_string(),
                op: s.operator,
                t_s: s.t_s,
                rsrp_dbm: s.rsrp_dbm,
                ul_tx_pwr_dbm: s.ul_tx_pwr_dbm,
                cell_id: CellId::Text(s.cell_id.clone()),
                lat: s.position.map(|p| p.lat),
                lon: s.position.map(|p| p.lon),
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()
}

/// Writes a trace directory; returns the paths written.
pub fn write_trace_dir(trace: &DualTrace, dir: &Path) -> Result<Vec<PathBuf>, TraceError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let packets_path = dir.join(PACKETS_FILE);
    let radio_path = dir.join(RADIO_FILE);
    let meta_path = dir.join(META_FILE);

    let f = File::create(&packets_path).map_err(io_err(&packets_path))?;
    write_packets(BufWriter::new(f), &trace.run_id, &trace.packets).map_err(io_err(&packets_path))?;

    let f = File::create(&radio_path).map_err(io_err(&radio_path))?;
    write_radio(BufWriter::new(f), &trace.run_id, &trace.radio).map_err(io_err(&radio_path))?;

    let mut text = serde_json::to_string_pretty(&TraceMeta::of(trace)).expect("meta serializes");
    text.push('\n');
    std::fs::write(&meta_path, text).map_err(io_err(&meta_path))?;
    Ok(vec![packets_path, radio_path, meta_path])
}
