use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Map, Value};

use sqkd_core::emulator::{
    expected_covariance, generate_samples, normalize_to_shot_noise, reconstruct_covariance, security_estimate,
    security_from_data, vacuum_calibration, EmulationConfig, ReconstructedCM,
};
use sqkd_core::figures::{
    HolevoSweep, KeyRateSweep, ModulationGrid, SecurityRegionSweep, SweepSpec, DEFAULT_SQUEEZING_SNU,
};
use sqkd_core::finite_size::DEFAULT_EPS;
use sqkd_core::format::fmt_sig;
use sqkd_core::gaussian::{db_to_snu, PHYSICAL_TOL};
use sqkd_core::{
    beta_threshold, delta_correction, key_rate_finite, security_report, CovarianceMatrix, Decibel, Error,
    FiniteSizeParams, ProtocolParams, SecurityReport,
};

use crate::args::{
    check_config_keys, merge, read_config, Cli, Command, EmulateArgs, EmulationArgs, Fig4Args, FigureArgs, FiniteArgs,
    Format, GlobalArgs, GridArgs, ProtocolArgs, ReportArgs, SweepArgs, ValidateArgs,
};

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    /// Secure-key or physicality check came out negative.
    Negative,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Negative => 2,
        }
    }
}

pub fn run(cli: Cli) -> Result<Status> {
    let config = match &cli.global.config {
        Some(path) => read_config(path)?,
        None => Map::new(),
    };
    fn resolve<T>(args: &T, config: &Map<String, Value>) -> Result<T>
    where
        T: Serialize + serde::de::DeserializeOwned + Default,
    {
        check_config_keys::<GlobalArgs, T>(config)?;
        merge(args, config)
    }
    let global: GlobalArgs = merge(&cli.global, &config)?;
    match &cli.command {
        Command::Report(a) => report(&global, &resolve(a, &config)?),
        Command::Fig2(a) => fig2(&global, &resolve(a, &config)?),
        Command::Fig3(a) => fig3(&global, &resolve(a, &config)?),
        Command::Fig4(a) => fig4(&global, &resolve(a, &config)?),
        Command::Emulate(a) => emulate(&global, &resolve(a, &config)?),
        Command::Validate(a) => validate(&global, &resolve(a, &config)?),
        Command::Sweep(a) => sweep(&global, &resolve(a, &config)?),
    }
}

fn variance(db: Option<f64>, snu: Option<f64>, name: &str) -> Result<Option<f64>> {
    match (db, snu) {
        (Some(_), Some(_)) => bail!("give either --{name}-db or --{name}, not both"),
        (Some(d), None) => Ok(Some(db_to_snu(Decibel(d)))),
        (None, s) => Ok(s),
    }
}

/// Single-point parameters: `--va` and `--eta` are required, `v_r` defaults to 0.5.
fn point_params(a: &ProtocolArgs) -> Result<ProtocolParams> {
    let v_r = variance(a.vr_db, a.vr, "vr")?.unwrap_or(DEFAULT_SQUEEZING_SNU);
    let v_a = variance(a.va_db, a.va, "va")?.context("--va or --va-db is required")?;
    let eta = a.eta.context("--eta is required")?;
    finish_params(a, v_r, v_a, eta)
}

/// Sweep base: every parameter has a default.
fn sweep_base(a: &ProtocolArgs) -> Result<ProtocolParams> {
    let v_r = variance(a.vr_db, a.vr, "vr")?.unwrap_or(DEFAULT_SQUEEZING_SNU);
    let v_a = variance(a.va_db, a.va, "va")?.unwrap_or((1.0 - v_r).max(0.0));
    finish_params(a, v_r, v_a, a.eta.unwrap_or(0.5))
}

fn finish_params(a: &ProtocolArgs, v_r: f64, v_a: f64, eta: f64) -> Result<ProtocolParams> {
    let p = ProtocolParams {
        v_r,
        delta_v: a.dv.unwrap_or(0.0),
        v_a,
        eta,
        epsilon: a.eps.unwrap_or(0.0),
        v_n: a.vn.unwrap_or(0.0),
        beta: a.beta.unwrap_or(1.0),
    };
    p.validate()?;
    Ok(p)
}

fn finite_params(a: &FiniteArgs) -> Result<Option<FiniteSizeParams>> {
    let Some(n_key) = a.n_key else {
        if a.n_total.is_some() {
            bail!("--n-total needs --n-key");
        }
        return Ok(None);
    };
    let fp = FiniteSizeParams {
        n_key,
        n_total: a.n_total.unwrap_or(2.0 * n_key),
        eps_smooth: a.eps_smooth.unwrap_or(DEFAULT_EPS),
        eps_pa: a.eps_pa.unwrap_or(DEFAULT_EPS),
    };
    fp.validate()?;
    Ok(Some(fp))
}

fn emulation_config(a: &EmulationArgs, global: &GlobalArgs) -> Result<EmulationConfig> {
    let d = EmulationConfig::default();
    let cfg = EmulationConfig {
        n_samples: a.n_samples.unwrap_or(d.n_samples),
        seed: global.seed.unwrap_or(d.seed),
        eta_bob_det: a.eta_bob_det.unwrap_or(d.eta_bob_det),
        eta_eve_det: a.eta_eve_det.unwrap_or(d.eta_eve_det),
        alice_p_placeholder: a.alice_p_var.unwrap_or(d.alice_p_placeholder),
        detector_imperfections: !a.ideal_detectors.unwrap_or(false),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn threshold_json(p: &ProtocolParams, fp: Option<&FiniteSizeParams>) -> Result<Value> {
    match beta_threshold(p, fp) {
        Ok(t) => Ok(serde_json::to_value(t)?),
        Err(Error::UndefinedThreshold) => Ok(Value::Null),
        Err(e) => Err(e.into()),
    }
}

/// Writes to `--out` when given, otherwise to stdout.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(bytes)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Re-encodes CSV produced by this tool as a JSON array of row objects. Integers
/// and finite reals become JSON numbers; everything else stays a string.
fn csv_to_json(csv_text: &[u8]) -> Result<Vec<u8>> {
    let text = std::str::from_utf8(csv_text)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let rows: Vec<Value> = lines
        .map(|line| {
            let obj: Map<String, Value> = header
                .iter()
                .zip(line.split(','))
                .map(|(k, v)| {
                    let value = match (v.parse::<i64>(), v.parse::<f64>()) {
                        (Ok(n), _) => json!(n),
                        (_, Ok(x)) if x.is_finite() => json!(x),
                        _ => json!(v),
                    };
                    (k.to_string(), value)
                })
                .collect();
            Value::Object(obj)
        })
        .collect();
    json_bytes(&rows)
}

fn emit_table(global: &GlobalArgs, csv_text: Vec<u8>) -> Result<()> {
    let bytes = match global.format.unwrap_or(Format::Csv) {
        Format::Csv => csv_text,
        Format::Json => csv_to_json(&csv_text)?,
    };
    emit(global.out.as_deref(), &bytes)
}

fn report_csv(p: &ProtocolParams, r: &SecurityReport, finite: Option<(f64, f64)>) -> Vec<u8> {
    let mut header = String::from(
        "v_r,delta_v,v_a,eta,epsilon,v_n,beta,i_ab,chi_e,key_rate,c_eb,c_ea,i_eb_classical,i_ea_classical,qmi_eb",
    );
    let mut values = vec![
        p.v_r,
        p.delta_v,
        p.v_a,
        p.eta,
        p.epsilon,
        p.v_n,
        p.beta,
        r.i_ab,
        r.chi_e,
        r.key_rate,
        r.c_eb,
        r.c_ea,
        r.i_eb_classical,
        r.i_ea_classical,
        r.qmi_eb,
    ];
    if let Some((delta, rate)) = finite {
        header.push_str(",delta,key_rate_finite");
        values.extend([delta, rate]);
    }
    let row: Vec<String> = values.into_iter().map(fmt_sig).collect();
    format!("{header}\n{}\n", row.join(",")).into_bytes()
}

fn report(global: &GlobalArgs, a: &ReportArgs) -> Result<Status> {
    let p = point_params(&a.protocol)?;
    let fp = finite_params(&a.finite)?;
    let r = security_report(&p)?;
    let finite = match &fp {
        Some(fp) => Some((delta_correction(fp)?, key_rate_finite(&p, fp)?)),
        None => None,
    };
    let deciding_rate = finite.map_or(r.key_rate, |(_, rate)| rate);
    let secure = deciding_rate > 0.0;

    let bytes = match global.format.unwrap_or(Format::Json) {
        Format::Csv => report_csv(&p, &r, finite),
        Format::Json => {
            let finite_json = match (&fp, finite) {
                (Some(fp), Some((delta, rate))) => json!({
                    "params": fp,
                    "delta": delta,
                    "key_rate_finite": rate,
                    "beta_threshold": threshold_json(&p, Some(fp))?,
                }),
                _ => Value::Null,
            };
            json_bytes(&json!({
                "params": p,
                "report": r,
                "secure": secure,
                "beta_threshold": threshold_json(&p, None)?,
                "finite_size": finite_json,
            }))?
        }
    };
    emit(global.out.as_deref(), &bytes)?;
    Ok(if secure { Status::Success } else { Status::Negative })
}

fn modulation_grid(g: &GridArgs, db_default: (f64, f64, f64), snu_default: (f64, f64, f64)) -> ModulationGrid {
    if g.va_min.is_some() || g.va_max.is_some() || g.va_step.is_some() {
        ModulationGrid::snu(
            g.va_min.unwrap_or(snu_default.0),
            g.va_max.unwrap_or(snu_default.1),
            g.va_step.unwrap_or(snu_default.2),
        )
    } else {
        ModulationGrid::db(
            g.va_db_min.unwrap_or(db_default.0),
            g.va_db_max.unwrap_or(db_default.1),
            g.va_db_step.unwrap_or(db_default.2),
        )
    }
}

fn figure_squeezing(a: &FigureArgs) -> Result<f64> {
    if let Some(s) = a.squeezing_db {
        if a.vr.is_some() || a.vr_db.is_some() {
            bail!("--squeezing-db conflicts with --vr/--vr-db");
        }
        return Ok(db_to_snu(Decibel(-s)));
    }
    Ok(variance(a.vr_db, a.vr, "vr")?.unwrap_or(DEFAULT_SQUEEZING_SNU))
}

const FIG_DB_GRID: (f64, f64, f64) = (-20.0, 10.0, 0.1);
const FIG_SNU_GRID: (f64, f64, f64) = (0.0, 20.0, 0.01);

fn fig2(global: &GlobalArgs, a: &FigureArgs) -> Result<Status> {
    let d = HolevoSweep::default();
    let sweep = HolevoSweep {
        transmissions: a.transmissions.clone().unwrap_or(d.transmissions),
        grid: modulation_grid(&a.grid, FIG_DB_GRID, FIG_SNU_GRID),
        v_r: figure_squeezing(a)?,
        delta_v: a.dv.unwrap_or(0.0),
        v_n: a.vn.unwrap_or(0.0),
    };
    let mut out = Vec::new();
    HolevoSweep::write_csv(&sweep.run()?, &mut out)?;
    emit_table(global, out)?;
    Ok(Status::Success)
}

fn fig3(global: &GlobalArgs, a: &FigureArgs) -> Result<Status> {
    let d = KeyRateSweep::default();
    let sweep = KeyRateSweep {
        transmissions: a.transmissions.clone().unwrap_or(d.transmissions),
        grid: modulation_grid(&a.grid, FIG_DB_GRID, FIG_SNU_GRID),
        beta: a.beta.unwrap_or(d.beta),
        v_r: figure_squeezing(a)?,
        delta_v: a.dv.unwrap_or(0.0),
        v_n: a.vn.unwrap_or(0.0),
    };
    let mut out = Vec::new();
    KeyRateSweep::write_csv(&sweep.run()?, &mut out)?;
    emit_table(global, out)?;
    Ok(Status::Success)
}

fn fig4(global: &GlobalArgs, a: &Fig4Args) -> Result<Status> {
    let d = SecurityRegionSweep::default();
    let template = FiniteSizeParams {
        eps_smooth: a.eps_smooth.unwrap_or(DEFAULT_EPS),
        eps_pa: a.eps_pa.unwrap_or(DEFAULT_EPS),
        ..d.finite_template
    };
    let default_grid = (d.grid.min, d.grid.max, d.grid.step);
    let sweep = SecurityRegionSweep {
        eta: a.eta.unwrap_or(d.eta),
        epsilons: a.eps.clone().unwrap_or(d.epsilons),
        grid: modulation_grid(&a.grid, default_grid, (0.0, 100.0, 0.05)),
        finite_sizes: a.finite_sizes.clone().unwrap_or(d.finite_sizes),
        v_r: variance(a.vr_db, a.vr, "vr")?.unwrap_or(d.v_r),
        v_n: a.vn.unwrap_or(0.0),
        finite_template: template,
    };
    let mut out = Vec::new();
    sweep.write_csv(&sweep.run()?, &mut out)?;
    emit_table(global, out)?;
    Ok(Status::Success)
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn report_fields(r: &SecurityReport) -> [(&'static str, f64); 8] {
    [
        ("i_ab", r.i_ab),
        ("chi_e", r.chi_e),
        ("key_rate", r.key_rate),
        ("c_eb", r.c_eb),
        ("c_ea", r.c_ea),
        ("i_eb_classical", r.i_eb_classical),
        ("i_ea_classical", r.i_ea_classical),
        ("qmi_eb", r.qmi_eb),
    ]
}

fn emulate(global: &GlobalArgs, a: &EmulateArgs) -> Result<Status> {
    let p = point_params(&a.protocol)?;
    let cfg = emulation_config(&a.emulation, global)?;
    let dir = global.out.clone().unwrap_or_else(|| PathBuf::from("emulation"));
    fs::create_dir_all(&dir).with_context(|| format!("creating output directory {}", dir.display()))?;

    let raw = generate_samples(&p, &cfg)?;
    let calibration = vacuum_calibration(&p, &cfg)?;
    let batch = normalize_to_shot_noise(&raw, &calibration)?;
    let recon = reconstruct_covariance(&batch)?;

    let model_cm = expected_covariance(&p, &cfg)?;
    let model = security_from_data(&ReconstructedCM::exact(model_cm.clone()), p.beta, p.v_n)?;
    let estimate = security_estimate(&recon, p.beta, p.v_n);
    let max_distance = recon
        .sigma_distances(&model_cm)
        .into_iter()
        .flatten()
        .fold(0.0f64, f64::max);

    let mut samples = create_file(&dir.join("samples.csv"))?;
    batch.write_csv(&mut samples)?;
    samples
        .flush()
        .with_context(|| format!("writing {}", dir.join("samples.csv").display()))?;

    let recon_path = dir.join("reconstruction.json");
    fs::write(&recon_path, json_bytes(&recon)?).with_context(|| format!("writing {}", recon_path.display()))?;

    let (data_json, data_error) = match &estimate {
        Ok(est) => (json!({ "report": est.report, "sigma": est.sigma }), Value::Null),
        Err(e) => (Value::Null, json!(e.to_string())),
    };
    let report_path = dir.join("report.json");
    let report_json = json!({
        "params": p,
        "config": cfg,
        "data": data_json,
        "data_error": data_error,
        "model": model,
        "channel": security_report(&p)?,
        "max_entry_sigma_distance": max_distance,
    });
    fs::write(&report_path, json_bytes(&report_json)?).with_context(|| format!("writing {}", report_path.display()))?;

    let mut stdout = io::stdout().lock();
    writeln!(
        stdout,
        "samples: {}  seed: {}  output: {}",
        cfg.n_samples,
        cfg.seed,
        dir.display()
    )?;
    writeln!(
        stdout,
        "max covariance-entry distance from model: {} sigma",
        fmt_sig(max_distance)
    )?;
    match &estimate {
        Ok(est) => {
            writeln!(
                stdout,
                "{:<16}{:>16}{:>16}{:>16}{:>10}",
                "quantity", "data", "sigma", "model", "|z|"
            )?;
            for ((name, data), ((_, sigma), (_, expected))) in report_fields(&est.report)
                .into_iter()
                .zip(report_fields(&est.sigma).into_iter().zip(report_fields(&model)))
            {
                let z = if sigma > 0.0 {
                    (data - expected).abs() / sigma
                } else {
                    f64::NAN
                };
                writeln!(
                    stdout,
                    "{name:<16}{:>16}{:>16}{:>16}{:>10}",
                    fmt_short(data),
                    fmt_short(sigma),
                    fmt_short(expected),
                    fmt_short(z)
                )?;
            }
        }
        Err(e) => writeln!(stdout, "data-derived report unavailable: {e}")?,
    }
    Ok(Status::Success)
}

fn fmt_short(x: f64) -> String {
    if x.is_finite() && x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e6) {
        format!("{x:.4e}")
    } else {
        format!("{x:.6}")
    }
}

fn parse_matrix(text: &str) -> Result<CovarianceMatrix> {
    let value: Value = serde_json::from_str(text).context("malformed JSON")?;
    let rows = match value {
        Value::Object(mut m) => m.remove("matrix").context("object has no \"matrix\" field")?,
        other => other,
    };
    let rows: Vec<Vec<f64>> = serde_json::from_value(rows).context("matrix must be an array of numeric rows")?;
    Ok(CovarianceMatrix::from_rows(&rows)?)
}

fn validate(global: &GlobalArgs, a: &ValidateArgs) -> Result<Status> {
    let path = a.matrix.as_deref().context("a matrix JSON path is required")?;
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cm = parse_matrix(&text).with_context(|| format!("in {}", path.display()))?;
    let tolerance = a.tolerance.unwrap_or(PHYSICAL_TOL);
    if !(tolerance >= 0.0 && tolerance.is_finite()) {
        bail!("--tolerance must be non-negative");
    }
    let (eigenvalues, reason) = match cm.symplectic_eigenvalues() {
        Ok(nu) => (Some(nu), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let min = eigenvalues
        .as_ref()
        .map(|nu| nu.iter().copied().fold(f64::INFINITY, f64::min));
    let physical = min.is_some_and(|m| m >= 1.0 - tolerance);

    let bytes = match global.format {
        Some(Format::Json) => json_bytes(&json!({
            "n_modes": cm.n_modes(),
            "symplectic_eigenvalues": eigenvalues,
            "min_symplectic_eigenvalue": min,
            "tolerance": tolerance,
            "physical": physical,
            "reason": reason,
        }))?,
        _ => {
            let mut s = String::new();
            match &eigenvalues {
                Some(nu) => {
                    let list: Vec<String> = nu.iter().map(|v| fmt_sig(*v)).collect();
                    s.push_str(&format!("symplectic eigenvalues: [{}]\n", list.join(", ")));
                }
                None => s.push_str(&format!(
                    "symplectic eigenvalues: unavailable ({})\n",
                    reason.unwrap_or_default()
                )),
            }
            let verdict = if physical { "PASS" } else { "FAIL" };
            s.push_str(&format!("physical: {verdict} (nu >= 1 - {})\n", fmt_sig(tolerance)));
            s.into_bytes()
        }
    };
    emit(global.out.as_deref(), &bytes)?;
    Ok(if physical { Status::Success } else { Status::Negative })
}

fn sweep(global: &GlobalArgs, a: &SweepArgs) -> Result<Status> {
    let spec = match &a.spec {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut spec: SweepSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing sweep spec {}", path.display()))?;
            if let (Some(seed), Some(cfg)) = (global.seed, spec.emulate.as_mut()) {
                cfg.seed = seed;
            }
            spec
        }
        None => {
            let grid = match (&a.grid, a.from, a.to, a.step) {
                (Some(g), None, None, None) => g.clone(),
                (None, Some(from), Some(to), Some(step)) => even_grid(from, to, step)?,
                _ => bail!("give either --grid or all of --from/--to/--step"),
            };
            SweepSpec {
                base: sweep_base(&a.protocol)?,
                axis: a.axis()?,
                grid,
                finite_size: finite_params(&a.finite)?,
                emulate: if a.emulate.unwrap_or(false) {
                    Some(emulation_config(&a.emulation, global)?)
                } else {
                    None
                },
            }
        }
    };
    let rows = spec.run()?;
    let bytes = match global.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut out = Vec::new();
            spec.write_csv(&rows, &mut out)?;
            out
        }
        Format::Json => json_bytes(&rows)?,
    };
    emit(global.out.as_deref(), &bytes)?;
    Ok(Status::Success)
}

fn even_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(from.is_finite() && to.is_finite() && step > 0.0) {
        bail!("invalid grid --from {from} --to {to} --step {step}");
    }
    let count = ((to - from).abs() / step + 1e-9).floor() as usize + 1;
    let sign = if to >= from { 1.0 } else { -1.0 };
    Ok((0..count).map(|k| from + sign * step * k as f64).collect())
}
