use std::fs::File;
use std::io::{BufReader, BufWriter, LineWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use paaf_core::kpi::{kpi_rows, write_kpi_csv};
use paaf_core::policy::{parse_policies, pd_presets, switching_presets, Mode, PolicyConfig};
use paaf_core::probe::{compute_oneway, run_sender, EchoServer, SenderConfig, SystemClock, TelemetrySnapshot};
use paaf_core::replay::{
    outcome_row, pareto_front, read_outcome_csv, replay_aggregation, replay_baseline, replay_fd, replay_pd,
    replay_switching, sensitivity_sweep, write_decision_log, write_outcome_csv, OperatorSlice, OutcomeRow,
    ReplayOutcome, Timeline, TimingConfig,
};
use paaf_core::synth::{synth_dual_trace, SynthConfig};
use paaf_core::trace::{
    load_packets, load_trace_dir, write_packets, write_trace_dir, Direction, DualTrace, LoadOptions, LoadReport,
    Operator, PacketRecord, PACKETS_FILE, RADIO_FILE,
};

use crate::manifest::RunManifest;
use crate::{
    Internal, PolicyOverrides, ProbeEchoArgs, ProbeJoinArgs, ProbeSendArgs, ReplayArgs, ReportArgs, SweepArgs,
    SynthArgs, TimingArgs, TraceArgs,
};

fn out_dir(explicit: Option<PathBuf>, root: &Path, command: &str, name: &str) -> anyhow::Result<PathBuf> {
    let dir = explicit.unwrap_or_else(|| root.join(command).join(name));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

pub fn synth(args: SynthArgs, root: &Path) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("synth");
    let mut cfg: SynthConfig = match (&args.config, args.preset.as_deref()) {
        (Some(path), _) => {
            manifest.config_paths.push(path.clone());
            read_json(path)?
        }
        (None, Some("flat")) => SynthConfig::flat(60.0, 1e6, -95.0, 0),
        (None, _) => SynthConfig::rural_like(0),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(d) = args.duration_s {
        cfg.duration_s = d;
    }
    if let Some(r) = args.rate_bps {
        cfg.target_rate_bps = r;
    }
    if let Some(id) = args.run_id {
        cfg.run_id = id;
    }
    let what = args
        .config
        .as_ref()
        .map_or_else(|| "preset".to_string(), |p| p.display().to_string());
    let trace = synth_dual_trace(&cfg).with_context(|| format!("synthesizing from {what}"))?;
    let dir = out_dir(args.out, root, "synth", &cfg.run_id)?;
    for path in write_trace_dir(&trace, &dir)? {
        manifest.output(&dir, &path);
    }
    let used = dir.join("synth_config.json");
    let mut text = serde_json::to_string_pretty(&cfg).expect("config serializes");
    text.push('\n');
    std::fs::write(&used, text).with_context(|| format!("writing {}", used.display()))?;
    manifest.output(&dir, &used);
    manifest.seed = Some(cfg.seed);
    manifest.write(&dir)?;
    let ul = trace.uplink(Operator::A).count();
    log::info!("wrote {} ({ul} UL packets per operator)", dir.display());
    Ok(())
}

fn load(input: &TraceArgs, manifest: &mut RunManifest) -> anyhow::Result<DualTrace> {
    load_path(&input.trace, input.lenient, !input.no_rate_check, manifest)
}

fn load_path(dir: &Path, lenient: bool, check_rate: bool, manifest: &mut RunManifest) -> anyhow::Result<DualTrace> {
    let loaded = load_trace_dir(dir, LoadOptions { lenient, check_rate })
        .with_context(|| format!("loading trace {}", dir.display()))?;
    report_skipped(&loaded.report);
    manifest.inputs.push(dir.to_path_buf());
    Ok(loaded.trace)
}

fn report_skipped(report: &LoadReport) {
    for s in &report.skipped {
        log::warn!("skipped {}:{}: {}", s.path.display(), s.line, s.reason);
    }
}

fn timing(args: &TimingArgs, manifest: &mut RunManifest) -> anyhow::Result<TimingConfig> {
    let mut t = match &args.timing {
        Some(path) => {
            manifest.config_paths.push(path.clone());
            read_json(path)?
        }
        None => TimingConfig::default(),
    };
    if let Some(v) = args.heartbeat_ms {
        t.heartbeat_ms = v;
    }
    if let Some(v) = args.radio_obs_delay_ms {
        t.radio_obs_delay_ms = v;
    }
    if let Some(v) = args.warmup_ms {
        t.warmup_ms = v;
    }
    t.validate()?;
    Ok(t)
}

fn policies(path: &Path, overrides: Option<&PolicyOverrides>, manifest: &mut RunManifest) -> anyhow::Result<Vec<PolicyConfig>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut list = parse_policies(&text).with_context(|| format!("parsing {}", path.display()))?;
    manifest.config_paths.push(path.to_path_buf());
    if let Some(o) = overrides {
        for p in &mut list {
            if let Some(v) = o.theta_r {
                p.theta_r_dbm = v;
            }
            if let Some(v) = o.theta_u {
                p.theta_u_dbm = v;
            }
            if let Some(v) = o.theta_l {
                p.theta_l_ms = v;
            }
            if let Some(v) = o.dwell_ms {
                p.dwell_ms = v;
            }
            p.validate().with_context(|| format!("policy '{}'", p.name))?;
        }
    }
    if list.is_empty() {
        bail!("{} contains no policies", path.display());
    }
    Ok(list)
}

fn run_policy(tl: &Timeline, cfg: &PolicyConfig, timing: &TimingConfig) -> anyhow::Result<ReplayOutcome> {
    let out = match cfg.mode {
        Mode::Switching => replay_switching(tl, cfg, timing),
        Mode::PartialDuplication => replay_pd(tl, cfg, timing),
    };
    out.with_context(|| format!("replaying '{}'", cfg.name))
}

/// File-name form of a strategy label.
fn slug(label: &str) -> String {
    let mut s = String::new();
    for c in label.chars() {
        if c.is_ascii_alphanumeric() {
            s.push(c.to_ascii_lowercase());
        } else if !s.ends_with('-') {
            s.push('-');
        }
    }
    s.trim_matches('-').to_string()
}

fn check_outcome(o: &ReplayOutcome, packets: usize) -> anyhow::Result<()> {
    if o.losses.total() as usize != o.effective_latencies.len() || (o.strategy != "Link Aggregation" && o.effective_latencies.len() != packets) {
        return Err(Internal(format!("'{}' lost track of packets", o.strategy)).into());
    }
    Ok(())
}

pub fn replay(args: ReplayArgs, root: &Path) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("replay");
    let trace = load(&args.input, &mut manifest)?;
    let timing = timing(&args.timing, &mut manifest)?;
    let loaded = match &args.policy {
        Some(p) => Some(policies(p, Some(&args.overrides), &mut manifest)?),
        None => None,
    };
    let strategies: Vec<String> = if args.strategies.is_empty() {
        let mut s = vec!["baseline_A".to_string(), "baseline_B".into(), "fd".into()];
        if loaded.is_some() {
            s.push("policies".into());
        } else {
            s.extend(["switching_table".into(), "pd_table".into()]);
        }
        s
    } else {
        args.strategies.iter().map(|s| s.trim().to_string()).collect()
    };

    let tl = Timeline::new(&trace)?;
    let n = tl.slots.len();
    let p = args.primary;
    let mut outcomes = Vec::new();
    for name in &strategies {
        match name.as_str() {
            "baseline_A" => outcomes.push(replay_baseline(&tl, Operator::A)?),
            "baseline_B" => outcomes.push(replay_baseline(&tl, Operator::B)?),
            "fd" => outcomes.push(replay_fd(&tl, p)?),
            "aggregation" => {
                let half = |path: &Option<PathBuf>, op: Operator, m: &mut RunManifest| -> anyhow::Result<Option<OperatorSlice>> {
                    match path {
                        Some(dir) => Ok(OperatorSlice::from_trace(&load_path(dir, args.input.lenient, !args.input.no_rate_check, m)?, op)),
                        None => Ok(None),
                    }
                };
                let hp = half(&args.agg_primary, p, &mut manifest)?;
                let hq = half(&args.agg_secondary, p.other(), &mut manifest)?;
                outcomes.push(replay_aggregation(hp.as_ref(), hq.as_ref())?);
            }
            "policies" => {
                let list = loaded
                    .as_ref()
                    .ok_or_else(|| anyhow!("strategy 'policies' needs --policy"))?;
                for cfg in list {
                    outcomes.push(run_policy(&tl, cfg, &timing)?);
                }
            }
            "switching_table" => {
                outcomes.push(replay_baseline(&tl, p)?);
                for cfg in switching_presets(p) {
                    outcomes.push(run_policy(&tl, &cfg, &timing)?);
                }
            }
            "pd_table" => {
                for cfg in pd_presets(p) {
                    outcomes.push(run_policy(&tl, &cfg, &timing)?);
                }
            }
            other => bail!(
                "unknown strategy '{other}' (expected baseline_A, baseline_B, fd, aggregation, policies, switching_table or pd_table)"
            ),
        }
    }
    for o in &outcomes {
        check_outcome(o, n)?;
    }

    let dir = out_dir(args.out, root, "replay", &trace.run_id)?;
    let rows: Vec<OutcomeRow> = outcomes.iter().map(outcome_row).collect();
    let csv_path = dir.join("outcomes.csv");
    write_outcome_csv(create(&csv_path)?, &rows)?;
    manifest.output(&dir, &csv_path);

    let logs = dir.join("decisions");
    let mut made_logs = false;
    for o in outcomes.iter().filter(|o| !o.decision_log.is_empty() || o.strategy.contains("PAAF")) {
        if !made_logs {
            std::fs::create_dir_all(&logs).with_context(|| format!("creating {}", logs.display()))?;
            made_logs = true;
        }
        let path = logs.join(format!("{}.jsonl", slug(&o.strategy)));
        write_decision_log(create(&path)?, &o.decision_log)?;
        manifest.output(&dir, &path);
    }

    let kpi_path = dir.join("kpi.csv");
    write_kpi_csv(create(&kpi_path)?, &kpi_rows(&trace)?)?;
    manifest.output(&dir, &kpi_path);
    manifest.write(&dir)?;
    log::info!("{} strategies replayed into {}", rows.len(), dir.display());
    Ok(())
}

pub fn sweep(args: SweepArgs, root: &Path) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("sweep");
    if args.grid.is_empty() {
        bail!("--grid needs at least one value");
    }
    let trace = load(&args.input, &mut manifest)?;
    let timing = timing(&args.timing, &mut manifest)?;
    let list = policies(&args.policy, None, &mut manifest)?;
    let base = match &args.policy_name {
        Some(name) => list
            .into_iter()
            .find(|p| &p.name == name)
            .ok_or_else(|| anyhow!("no policy named '{name}' in {}", args.policy.display()))?,
        None => list.into_iter().next().expect("checked non-empty"),
    };
    let tl = Timeline::new(&trace)?;
    let rows = sensitivity_sweep(&tl, &base, args.param, &args.grid, &timing)?;
    let dir = out_dir(args.out, root, "sweep", &trace.run_id)?;
    let path = dir.join("sweep.csv");
    let mut w = create(&path)?;
    writeln!(w, "param,value,overhead_pct,p95,p99")?;
    let param = match args.param {
        paaf_core::replay::SweepParam::ThetaR => "theta_r",
        paaf_core::replay::SweepParam::ThetaU => "theta_u",
    };
    for r in &rows {
        writeln!(w, "{param},{},{},{},{}", r.value, r.overhead_pct, r.p95, r.p99)?;
    }
    w.flush()?;
    manifest.output(&dir, &path);
    manifest.write(&dir)?;
    log::info!("{} sweep points written to {}", rows.len(), path.display());
    Ok(())
}

/// Same naming as outcomes.csv: 1.2 gives cost_w12, 2 gives cost_w20.
fn weight_column(w: f64) -> String {
    let tenths = w * 10.0;
    if tenths.fract() == 0.0 {
        format!("cost_w{tenths}")
    } else {
        format!("cost_w{}", format!("{w}").replace('.', "p"))
    }
}

pub fn report(args: ReportArgs, root: &Path) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("report");
    if let Some(&bad) = args.weights.iter().find(|w| !(**w >= 1.0 && w.is_finite())) {
        bail!("cost weights must be >= 1, got {bad}");
    }
    let mut rows: Vec<(String, OutcomeRow)> = Vec::new();
    for path in &args.outcomes {
        let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        let source = path.display().to_string();
        let table = read_outcome_csv(BufReader::new(f)).with_context(|| format!("reading {source}"))?;
        rows.extend(table.into_iter().map(|r| (source.clone(), r)));
        manifest.inputs.push(path.clone());
    }
    if rows.is_empty() {
        bail!("no outcome rows in the given files");
    }

    let dir = out_dir(args.out, root, "report", "report")?;
    let mut header = vec![
        "source", "strategy", "primary", "p50", "p90", "p95", "p99", "p999", "late_loss_pct", "true_loss_pct",
        "use_A_pct", "use_B_pct", "overhead_pct", "within_150ms_pct",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    header.extend(args.weights.iter().map(|&w| weight_column(w)));
    let write = |path: &Path, subset: &[&(String, OutcomeRow)]| -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(&header)?;
        for (source, r) in subset {
            let mut rec = vec![source.clone(), r.strategy.clone(), r.primary.to_string()];
            rec.extend(
                [
                    r.p50, r.p90, r.p95, r.p99, r.p999, r.late_loss_pct, r.true_loss_pct, r.use_a_pct, r.use_b_pct,
                    r.overhead_pct, r.within_150ms_pct,
                ]
                .iter()
                .map(f64::to_string),
            );
            rec.extend(args.weights.iter().map(|&wt| r.cost(wt).to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    };
    let all: Vec<&(String, OutcomeRow)> = rows.iter().collect();
    let report_path = dir.join("report.csv");
    write(&report_path, &all)?;
    manifest.output(&dir, &report_path);

    let points: Vec<(f64, f64)> = rows.iter().map(|(_, r)| (r.within_150ms_pct, r.overhead_pct)).collect();
    let front: Vec<&(String, OutcomeRow)> = pareto_front(&points).into_iter().map(|i| &rows[i]).collect();
    let pareto_path = dir.join("pareto.csv");
    write(&pareto_path, &front)?;
    manifest.output(&dir, &pareto_path);
    manifest.write(&dir)?;
    log::info!("{} rows, {} on the Pareto front", rows.len(), front.len());
    Ok(())
}

fn log_dir(log: &Path) -> PathBuf {
    match log.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

pub fn probe_send(args: ProbeSendArgs) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("probe-send");
    if !(args.duration_s > 0.0 && args.duration_s.is_finite()) {
        bail!("--duration-s must be positive");
    }
    let mut cfg = SenderConfig::new(args.rate_bps, args.dest, args.operator, Duration::from_secs_f64(args.duration_s));
    if let Some(b) = args.bind {
        cfg.bind = b;
    }
    if let Some(path) = &args.telemetry {
        cfg.telemetry = read_json::<Vec<TelemetrySnapshot>>(path)?;
        manifest.config_paths.push(path.clone());
    }
    let dir = log_dir(&args.log);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let report = run_sender(&cfg, Arc::new(SystemClock))?;
    let mut all = report.tx_log.clone();
    all.extend(report.dl_log.iter().cloned());
    write_packets(create(&args.log)?, &args.run_id, &all).with_context(|| format!("writing {}", args.log.display()))?;
    manifest.output(&dir, &args.log);
    manifest.write(&dir)?;
    log::info!(
        "sent {} packets, {} echoes back, {} clock steps, {} malformed echoes",
        report.tx_log.len(),
        report.dl_log.len(),
        report.clock_steps,
        report.malformed_echoes
    );
    Ok(())
}

pub fn probe_echo(args: ProbeEchoArgs) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("probe-echo");
    let server = EchoServer::bind(args.listen, Arc::new(SystemClock))?;
    let dir = log_dir(&args.log);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let file = File::create(&args.log).with_context(|| format!("creating {}", args.log.display()))?;
    let mut out = LineWriter::new(file);
    manifest.output(&dir, &args.log);
    manifest.write(&dir)?;
    log::info!("echoing on {}", server.local_addr()?);

    let stop = Arc::new(AtomicBool::new(false));
    if let Some(d) = args.duration_s {
        let stop = Arc::clone(&stop);
        let d = Duration::from_secs_f64(d.max(0.0));
        std::thread::spawn(move || {
            std::thread::sleep(d);
            stop.store(true, Ordering::Relaxed);
        });
    }
    let mut write_err = None;
    let stats = server.run(&stop, &mut |r: &PacketRecord| {
        if write_err.is_none() {
            if let Err(e) = write_packets(&mut out, &args.run_id, std::slice::from_ref(r)) {
                write_err = Some(e);
                stop.store(true, Ordering::Relaxed);
            }
        }
    })?;
    if let Some(e) = write_err {
        return Err(e).with_context(|| format!("writing {}", args.log.display()));
    }
    out.flush()?;
    log::info!("received {}, echoed {}, malformed {}", stats.received, stats.echoed, stats.malformed);
    Ok(())
}

pub fn probe_join(args: ProbeJoinArgs, root: &Path) -> anyhow::Result<()> {
    let mut manifest = RunManifest::new("probe-join");
    let opts = LoadOptions::default();
    let mut report = LoadReport::default();
    let mut tx = Vec::new();
    let mut dl = Vec::new();
    let mut run_id = None;
    for path in &args.sender_logs {
        let (rid, packets) = load_packets(path, opts, &mut report)?;
        run_id = run_id.or(rid);
        for p in packets {
            match p.direction {
                Direction::Ul => tx.push(p),
                Direction::Dl => dl.push(p),
            }
        }
        manifest.inputs.push(path.clone());
    }
    let (_, rx) = load_packets(&args.echo_log, opts, &mut report)?;
    manifest.inputs.push(args.echo_log.clone());
    report_skipped(&report);

    let ul = compute_oneway(&tx, &rx, args.clock_offset_us);
    // echoes are stamped by the server and received by the sender
    let down = compute_oneway(&dl, &dl, -args.clock_offset_us);
    for (what, r) in [("UL", &ul), ("DL", &down)] {
        if r.duplicates + r.unmatched_rx + r.negative_clamped > 0 {
            log::warn!(
                "{what}: {} duplicates, {} unmatched receptions, {} negative latencies clamped",
                r.duplicates,
                r.unmatched_rx,
                r.negative_clamped
            );
        }
    }
    let mut packets = ul.packets;
    packets.extend(down.packets);
    paaf_core::trace::sort_packets(&mut packets);

    let run_id = run_id.unwrap_or_else(|| "probe".into());
    let dir = out_dir(args.out, root, "probe-join", &run_id)?;
    let pk = dir.join(PACKETS_FILE);
    write_packets(create(&pk)?, &run_id, &packets).with_context(|| format!("writing {}", pk.display()))?;
    manifest.output(&dir, &pk);
    if let Some(radio) = &args.radio {
        let dest = dir.join(RADIO_FILE);
        std::fs::copy(radio, &dest).with_context(|| format!("copying {}", radio.display()))?;
        manifest.inputs.push(radio.clone());
        manifest.output(&dir, &dest);
    }
    manifest.write(&dir)?;
    let lost = packets.iter().filter(|p| p.direction == Direction::Ul && p.rx_us.is_none()).count();
    log::info!("{} UL packets joined, {lost} lost", tx.len());
    Ok(())
}
