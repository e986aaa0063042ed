mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use tlg::array::{build_array, dump, eval_waveform};
use tlg::cell::{
    assess, calibrate, cell_read, configure, read_transient, truth_table, CalibratedParams, CellError, GateKind,
    ReadSwitches, Variant, INPUT_VECTORS, READ_LABELS,
};
use tlg::devices::DeviceSet;
use tlg::mapper::{
    emit_program, input_vector, parse_netlist, place_and_route, program_cells, random_netlist, row_voltages, verify,
    MapError, Netlist, ProgramBundle,
};
use tlg::metrics::{design_report, PowerMode, REFERENCE_ARRAY_AREA_NM2, REFERENCE_ARRAY_POWER_NW};
use tlg::programmer::{apply_write, CellMemristors, PulseWindow};

use config::{ConfigError, RunConfig};

/// Spacing of successive input vectors in array waveforms (s).
const VECTOR_PERIOD: f64 = 1e-6;
/// Largest generated netlist for `--seed`.
const RANDOM_MAX_GATES: usize = 12;
const RANDOM_MAX_INPUTS: usize = 6;

#[derive(Parser)]
#[command(name = "tlg", version, about = "Programmable memristive threshold-logic crossbar simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for output files
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Disable switch threshold drop and series resistance
    #[arg(long)]
    ideal_switches: bool,
}

#[derive(Args, Clone)]
struct Design {
    /// Netlist file to map
    #[arg(long, conflicts_with = "seed")]
    netlist: Option<PathBuf>,
    /// Generate a random mappable netlist from this seed instead of reading one
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit cell thresholds and coupling; writes calibration.json
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Print a gate's truth table and control settings
    TruthTable {
        #[arg(value_parser = parse_gate)]
        gate: GateKind,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        #[command(flatten)]
        common: Common,
    },
    /// Read one cell through a transient and dump its node waveforms
    SimulateCell {
        #[arg(value_parser = parse_gate)]
        gate: GateKind,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<Variant>,
        /// Input A voltage; with --b reads one vector instead of all four
        #[arg(long, requires = "b")]
        a: Option<f64>,
        #[arg(long, requires = "a")]
        b: Option<f64>,
        /// Hold time per input vector, e.g. 1us
        #[arg(long, default_value = "1us")]
        hold: String,
        #[command(flatten)]
        common: Common,
    },
    /// Map a netlist, emit write schedules and simulate the programming pulse
    Program {
        #[command(flatten)]
        design: Design,
        #[command(flatten)]
        common: Common,
    },
    /// Map, program and verify a netlist against its truth table
    MapRun {
        #[command(flatten)]
        design: Design,
        #[command(flatten)]
        common: Common,
    },
    /// Area and power report for an array or a mapped netlist
    Report {
        #[command(flatten)]
        design: Design,
        /// worst-case or per-config
        #[arg(long)]
        power_mode: Option<String>,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_gate(s: &str) -> Result<GateKind, String> {
    s.parse().map_err(|e: CellError| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: CellError| e.to_string())
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{stage}: {message}")]
    Domain { stage: &'static str, message: String },
}

impl CliError {
    fn domain(stage: &'static str, e: impl std::fmt::Display) -> Self {
        Self::Domain { stage, message: e.to_string() }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Domain { .. } => 3,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::Usage(format!("config: {e}"))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

struct Context {
    cfg: RunConfig,
    devices: DeviceSet,
}

impl Context {
    fn new(common: &Common) -> Result<Self, CliError> {
        let mut cfg = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &common.out_dir {
            cfg.out_dir = d.clone();
        }
        cfg.ideal_switches |= common.ideal_switches;
        let devices = cfg.effective_devices()?;
        Ok(Self { cfg, devices })
    }

    fn apply_design(&mut self, design: &Design) {
        if let Some(r) = design.rows {
            self.cfg.rows = r;
        }
        if let Some(c) = design.cols {
            self.cfg.cols = c;
        }
        if let Some(v) = design.variant {
            self.cfg.variant = v;
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    /// Calibration from the config, a calibration file, or a previous
    /// `calibrate` run in the output directory.
    fn stored_calibration(&self) -> Result<Option<CalibratedParams>, CliError> {
        let m = self.cfg.manual;
        match (m.v_th1, m.v_th2, m.g_x) {
            (Some(a), Some(b), Some(g)) => {
                return assess(a, b, g, &self.devices).map(Some).map_err(|e| CliError::domain("calibration", e))
            }
            (None, None, None) => {}
            _ => return Err(CliError::Usage("config: v_th1, v_th2 and g_x must be given together".into())),
        }
        let path = match &self.cfg.calibration_file {
            Some(p) => p.clone(),
            None => {
                let p = self.out("calibration.json");
                if !p.exists() {
                    return Ok(None);
                }
                p
            }
        };
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        let cal = serde_json::from_str(&text)
            .map_err(|e| CliError::domain("calibration", format!("{}: {e}", path.display())))?;
        Ok(Some(cal))
    }

    fn require_calibration(&self) -> Result<CalibratedParams, CliError> {
        self.stored_calibration()?.ok_or_else(|| {
            CliError::domain("calibration", format!("{} (run `tlg calibrate` first)", CellError::NotCalibrated))
        })
    }

    fn calibration_or_fit(&self) -> Result<CalibratedParams, CliError> {
        match self.stored_calibration()? {
            Some(c) => Ok(c),
            None => calibrate(&self.cfg.search_space(&self.devices), &self.devices)
                .map_err(|e| CliError::domain("calibration", e)),
        }
    }

    fn netlist(&self, design: &Design) -> Result<Netlist, CliError> {
        match (&design.netlist, design.seed) {
            (Some(p), _) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                parse_netlist(&text).map_err(|e| CliError::domain("parse", e))
            }
            (None, Some(seed)) => {
                Ok(random_netlist(seed, RANDOM_MAX_GATES, RANDOM_MAX_INPUTS, self.cfg.rows, self.cfg.cols))
            }
            (None, None) => Err(CliError::Usage("need --netlist or --seed".into())),
        }
    }

    fn bundle(&self, netlist: &Netlist) -> Result<ProgramBundle, CliError> {
        let mapping = place_and_route(netlist, self.cfg.rows, self.cfg.cols, self.cfg.variant)
            .map_err(|e| CliError::domain("place", e))?;
        let mut bundle = emit_program(&mapping, &self.devices);
        if let Some(p) = self.cfg.pulse {
            let w = PulseWindow::new(0.0, p).map_err(|e| CliError::domain("program", e))?;
            bundle.window = w;
            for s in &mut bundle.schedules {
                s.schedule = s.schedule.clone().retimed(w);
            }
        }
        Ok(bundle)
    }
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::domain("output", format!("{}: {e}", path.display()));
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Calibrate { common } => cmd_calibrate(&Context::new(&common)?),
        Command::TruthTable { gate, variant, common } => {
            let ctx = Context::new(&common)?;
            cmd_truth_table(&ctx, gate, variant.unwrap_or(ctx.cfg.variant))
        }
        Command::SimulateCell { gate, variant, a, b, hold, common } => {
            let ctx = Context::new(&common)?;
            let hold = config::parse_quantity(&hold, config::Unit::Second).map_err(CliError::Usage)?;
            let vectors = match (a, b) {
                (Some(a), Some(b)) => vec![(a, b)],
                _ => INPUT_VECTORS.iter().map(|&(a, b)| (rail(a, &ctx.devices), rail(b, &ctx.devices))).collect(),
            };
            cmd_simulate_cell(&ctx, gate, variant.unwrap_or(ctx.cfg.variant), &vectors, hold)
        }
        Command::Program { design, common } => {
            let mut ctx = Context::new(&common)?;
            ctx.apply_design(&design);
            cmd_program(&ctx, &design)
        }
        Command::MapRun { design, common } => {
            let mut ctx = Context::new(&common)?;
            ctx.apply_design(&design);
            cmd_map_run(&ctx, &design)
        }
        Command::Report { design, power_mode, common } => {
            let mut ctx = Context::new(&common)?;
            ctx.apply_design(&design);
            if let Some(m) = power_mode {
                ctx.cfg.power_mode = m.parse().map_err(|_| CliError::Usage(format!("unknown power mode `{m}`")))?;
            }
            cmd_report(&ctx, &design)
        }
    }
}

fn rail(bit: bool, d: &DeviceSet) -> f64 {
    if bit {
        d.v_dd
    } else {
        0.0
    }
}

fn cmd_calibrate(ctx: &Context) -> Result<(), CliError> {
    let cal = match calibrate(&ctx.cfg.search_space(&ctx.devices), &ctx.devices) {
        Ok(c) => c,
        Err(CellError::CalibrationFailed { violations }) => {
            for v in &violations {
                eprintln!("violated: {v}");
            }
            return Err(CliError::domain("calibration", format!("{} constraint(s) cannot be met", violations.len())));
        }
        Err(e) => return Err(CliError::domain("calibration", e)),
    };
    let path = ctx.out("calibration.json");
    write_atomic(&path, &(serde_json::to_string_pretty(&cal).expect("plain data") + "\n"))?;
    println!("v_th1 = {} V", cal.v_th1);
    println!("v_th2 = {} V", cal.v_th2);
    println!("g_x = {} S", cal.g_x);
    println!("noise margin = {:.6} V", cal.noise_margin);
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_truth_table(ctx: &Context, gate: GateKind, variant: Variant) -> Result<(), CliError> {
    let cal = ctx.require_calibration()?;
    let config = configure(gate, variant);
    let read = ReadSwitches::from_devices(&ctx.devices);
    let table = truth_table(&config, Some(&cal), &ctx.devices, Some(&read)).map_err(|e| CliError::domain("cell", e))?;
    println!("{gate} ({variant}): {config}");
    println!("a b | out");
    for ((a, b), out) in INPUT_VECTORS.iter().zip(table) {
        println!("{} {} | {}", u8::from(*a), u8::from(*b), u8::from(out));
    }
    Ok(())
}

fn cmd_simulate_cell(
    ctx: &Context,
    gate: GateKind,
    variant: Variant,
    vectors: &[(f64, f64)],
    hold: f64,
) -> Result<(), CliError> {
    let cal = ctx.require_calibration()?;
    let config = configure(gate, variant);
    let read = ReadSwitches::from_devices(&ctx.devices);
    println!("{gate} ({variant}): {config}");
    println!("a b | n1 x n2 | out margin");
    for &(a, b) in vectors {
        let r =
            cell_read(&config, a, b, Some(&cal), &ctx.devices, Some(&read)).map_err(|e| CliError::domain("cell", e))?;
        println!("{a} {b} | {:.6} {} {:.6} | {} {:.6}", r.n1, r.x, r.n2, r.out, r.margin);
    }
    let run = read_transient(&config, &cal, &ctx.devices, Some(&read), vectors, hold, ctx.cfg.dt)
        .map_err(|e| CliError::domain("simulate", e))?;
    let mut worst: f64 = 0.0;
    for label in READ_LABELS {
        let x = run.waveform.channel(&format!("x({label})")).expect("state channel");
        worst = worst.max((x[x.len() - 1] - x[0]).abs());
    }
    let path = ctx.out(&format!("cell_{}_{}.csv", gate.to_string().to_lowercase(), variant));
    write_atomic(&path, &run.waveform.to_csv())?;
    println!("largest state change over the read: {worst:e}");
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_program(ctx: &Context, design: &Design) -> Result<(), CliError> {
    let netlist = ctx.netlist(design)?;
    let bundle = ctx.bundle(&netlist)?;
    println!(
        "pulse window {:.4e} s .. {:.4e} s, {} cell schedule(s)",
        bundle.window.t_start,
        bundle.window.t_end,
        bundle.schedules.len()
    );
    let gates: BTreeMap<(usize, usize), &str> =
        bundle.mapping.cells.iter().map(|c| ((c.row, c.col), c.gate.as_str())).collect();
    for cs in &bundle.schedules {
        let outcome = apply_write(&CellMemristors::blank(), &cs.schedule, &ctx.devices)
            .map_err(|e| CliError::domain("program", format!("cell ({},{}): {e}", cs.row, cs.col)))?;
        let switches: Vec<String> = cs.schedule.events.iter().map(|e| e.switch.to_string()).collect();
        let mut line = format!("cell ({},{}) {}:", cs.row, cs.col, gates[&(cs.row, cs.col)]);
        if switches.is_empty() {
            line.push_str(" no writes");
        } else {
            let _ = write!(line, " [{}]", switches.join(" "));
        }
        for (id, _) in &outcome.targets {
            let _ = write!(line, " {id} x={:.6}", outcome.final_states.get(*id).x());
        }
        let drift = outcome.drift.iter().map(|(_, d)| *d).fold(0.0, f64::max);
        let _ = write!(line, " max disturb {drift:e}");
        println!("{line}");
    }
    write_atomic(&ctx.out("program.json"), &(bundle.to_json() + "\n"))?;
    write_atomic(&ctx.out("schedules.csv"), &bundle.schedules_csv())?;
    println!("wrote {}", ctx.out("program.json").display());
    Ok(())
}

fn cmd_map_run(ctx: &Context, design: &Design) -> Result<(), CliError> {
    let netlist = ctx.netlist(design)?;
    let bundle = ctx.bundle(&netlist)?;
    let cal = ctx.calibration_or_fit()?;
    print!("{}", bundle.mapping);

    let report = match verify(&bundle, &netlist, &cal, &ctx.devices) {
        Ok(r) => r,
        Err(MapError::VerificationFailed { counterexample, expected, got, report }) => {
            write_atomic(&ctx.out("verify.json"), &(report.to_json() + "\n"))?;
            return Err(CliError::domain(
                "verify",
                format!(
                    "inputs {counterexample} give {got}, expected {expected} ({} mismatching vector(s))",
                    report.mismatches
                ),
            ));
        }
        Err(e) => return Err(CliError::domain("verify", e)),
    };
    write_atomic(&ctx.out("verify.json"), &(report.to_json() + "\n"))?;

    let mapping = &bundle.mapping;
    let cells = program_cells(&bundle, &ctx.devices).map_err(|e| CliError::domain("program", e))?;
    let n = netlist.inputs.len();
    let vectors: Vec<_> =
        (0..1usize << n).map(|k| row_voltages(mapping, &netlist, &input_vector(n, k), ctx.devices.v_dd)).collect();
    let wf = eval_waveform(&mapping.topology, &mapping.routing, &cells, &vectors, &cal, &ctx.devices, VECTOR_PERIOD)
        .map_err(|e| CliError::domain("simulate", e))?;
    write_atomic(&ctx.out("waveform.csv"), &wf.to_csv())?;
    write_atomic(&ctx.out("array.txt"), &dump(&mapping.topology, &mapping.routing, &cells, &ctx.devices))?;

    let passed = report.vectors.iter().filter(|v| v.pass).count();
    println!(
        "verified {passed}/{} vectors, {} mismatches, noise margin {:.6} V",
        report.vectors.len(),
        report.mismatches,
        report.noise_margin_v
    );
    println!("wrote {}", ctx.out("verify.json").display());
    Ok(())
}

fn cmd_report(ctx: &Context, design: &Design) -> Result<(), CliError> {
    let (topology, configs, mode) = if design.netlist.is_some() || design.seed.is_some() {
        let netlist = ctx.netlist(design)?;
        let mapping = place_and_route(&netlist, ctx.cfg.rows, ctx.cfg.cols, ctx.cfg.variant)
            .map_err(|e| CliError::domain("place", e))?;
        let configs = mapping.configs();
        (mapping.topology, configs, ctx.cfg.power_mode)
    } else {
        // no design: every position is charged at its worst-case figure
        let topology =
            build_array(ctx.cfg.rows, ctx.cfg.cols, ctx.cfg.variant).map_err(|e| CliError::domain("array", e))?;
        let configs = (0..topology.rows)
            .flat_map(|r| (0..topology.cols).map(move |c| (r, c)))
            .map(|k| (k, configure(GateKind::Nand, topology.variant)))
            .collect();
        (topology, configs, PowerMode::WorstCase)
    };
    let mut report =
        design_report(&topology, &configs, &ctx.cfg.costs, mode).map_err(|e| CliError::domain("report", e))?;
    if (topology.rows, topology.cols) == (3, 4) {
        report = report.with_reference(REFERENCE_ARRAY_AREA_NM2, REFERENCE_ARRAY_POWER_NW);
    }
    print!("{report}");
    write_atomic(&ctx.out("report.json"), &(report.to_json() + "\n"))?;
    println!("wrote {}", ctx.out("report.json").display());
    Ok(())
}
