use std::collections::BTreeSet;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use sqkd_core::figures::SweepAxis;

#[derive(Debug, Parser)]
#[command(
    name = "sqkd",
    version,
    about = "Security analysis of squeezed-state CV-QKD: Holevo information, key rates, \
             finite-size security regions and Monte-Carlo emulation.",
    after_help = "Exit codes: 0 success (secure / physical), 2 success but insecure or unphysical, 1 error.\n\
                  All variances are in shot-noise units (vacuum = 1); information is in bits.\n\
                  --config FILE reads a flat JSON object whose keys are the long flag names with '_' \
                  for '-' (e.g. {\"vr_db\": -3, \"eta\": 0.5}); flags given on the command line win.\n\
                  CSV output: UTF-8, one header row, '.' decimal separator, 12 significant digits; \
                  non-finite values print as inf/-inf/nan."
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GlobalArgs {
    /// Seed for every random draw; equal seeds give bit-identical output.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (figure and sweep commands) or directory (emulate). Default: stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// JSON file supplying defaults for any flag.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Security report for a single parameter point (JSON by default).
    #[command(
        after_help = "Exit code 0 when the key rate is positive (the finite-size rate if --n-key is given), 2 otherwise.\n\
                            CSV columns: v_r,delta_v,v_a,eta,epsilon,v_n,beta,i_ab,chi_e,key_rate,c_eb,c_ea,\
                            i_eb_classical,i_ea_classical,qmi_eb[,delta,key_rate_finite]"
    )]
    Report(ReportArgs),
    /// Holevo information versus modulation (squeezed series plus a coherent reference at eta = 0.58).
    #[command(after_help = concat!(
        "CSV columns: protocol,eta,v_a_db,v_a_snu,chi_e_bits\n",
        "  protocol  squeezed | coherent\n",
        "  v_a_db    modulation in dB relative to shot noise (-inf at v_a = 0)\n",
        "Every series starts at v_a = 0 and contains v_a = 1 - v_r when inside the grid.\n",
        "Default squeezing is exactly 0.5 SNU (-3.0103 dB)."))]
    Fig2(FigureArgs),
    /// Asymptotic key rate versus modulation at a fixed reconciliation efficiency.
    #[command(after_help = concat!(
        "CSV columns: protocol,eta,beta,v_a_db,v_a_snu,key_rate_bits\n",
        "Uses a dB grid (--va-db-min/max/step) unless a linear SNU grid (--va-min/max/step) is given.\n",
        "Default squeezing is exactly 0.5 SNU (-3.0103 dB)."))]
    Fig3(FigureArgs),
    /// Minimum reconciliation efficiency for security (beta*) versus modulation.
    #[command(after_help = concat!(
        "CSV columns: protocol,epsilon,v_a_db,v_a_snu,beta_star_asymptotic,beta_star_n_<N>...,secure_flag\n",
        "  beta_star_n_<N>  finite-size threshold for N exchanged signals, half of them used for the key\n",
        "  secure_flag      1 if the asymptotic beta* < 1, else 0\n",
        "beta* > 1 means insecure for every beta; inf means no mutual information.\n",
        "Rows: for each epsilon, the squeezed series then the coherent series."))]
    Fig4(Fig4Args),
    /// Monte-Carlo emulation of the experiment: samples, reconstruction and data-derived report.
    #[command(after_help = concat!(
        "Writes into --out DIR (default ./emulation):\n",
        "  samples.csv          columns x_a,x_b,p_b,x_e,p_e (shot-noise normalized)\n",
        "  reconstruction.json  {\"matrix\": 6x6 (A,B,E), \"n_samples\", \"standard_errors\"}\n",
        "  report.json          data report with 1-sigma errors and the model prediction\n",
        "Prints a data-vs-model table with sigma distances. Exit 0 whenever the run completes."))]
    Emulate(EmulateArgs),
    /// Checks a covariance matrix for physicality (symplectic eigenvalues >= 1 - tolerance).
    #[command(
        after_help = "Input: JSON nested array of rows, or an object with a \"matrix\" field \
                            (e.g. emulate's reconstruction.json). Exit 0 if physical, 2 if not."
    )]
    Validate(ValidateArgs),
    /// One-dimensional sweep of any protocol parameter.
    #[command(after_help = concat!(
        "CSV columns: <axis>,v_r,delta_v,v_a_db,v_a_snu,eta,epsilon,v_n,beta,i_ab,chi_e,key_rate,",
        "c_eb,c_ea,i_eb_classical,i_ea_classical,qmi_eb[,key_rate_finite][,i_ab_data,chi_e_data,key_rate_data]\n",
        "Parameters not swept default to v_r = 0.5, v_a = 1 - v_r, eta = 0.5, beta = 1, others 0.\n",
        "--spec FILE reads a complete sweep ({\"base\", \"axis\", \"grid\", \"finite_size\", \"emulate\"}).\n",
        "Emulated grid point k uses seed + k."))]
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ProtocolArgs {
    /// Squeezed-quadrature variance in dB (negative = squeezed).
    #[arg(long, allow_negative_numbers = true, conflicts_with = "vr")]
    pub vr_db: Option<f64>,
    /// Squeezed-quadrature variance in SNU (1 = coherent).
    #[arg(long)]
    pub vr: Option<f64>,
    /// Excess anti-squeezing: P variance is 1/v_r + dv.
    #[arg(long)]
    pub dv: Option<f64>,
    /// Modulation variance in dB.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "va")]
    pub va_db: Option<f64>,
    /// Modulation variance in SNU.
    #[arg(long)]
    pub va: Option<f64>,
    /// Channel transmittance in (0, 1).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Untrusted excess noise, referred to the channel input.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Trusted electronic noise of Bob's detector.
    #[arg(long)]
    pub vn: Option<f64>,
    /// Reconciliation efficiency in (0, 1].
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct FiniteArgs {
    /// Samples used for the key; enables the finite-size correction.
    #[arg(long)]
    pub n_key: Option<f64>,
    /// Signals exchanged in total (default 2 * n_key).
    #[arg(long)]
    pub n_total: Option<f64>,
    /// Smoothing parameter (default 1e-10).
    #[arg(long)]
    pub eps_smooth: Option<f64>,
    /// Privacy-amplification failure probability (default 1e-10).
    #[arg(long)]
    pub eps_pa: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub finite: FiniteArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct GridArgs {
    /// Lower end of the dB modulation grid.
    #[arg(long, allow_negative_numbers = true)]
    pub va_db_min: Option<f64>,
    /// Upper end of the dB modulation grid.
    #[arg(long, allow_negative_numbers = true)]
    pub va_db_max: Option<f64>,
    /// Spacing of the dB modulation grid.
    #[arg(long)]
    pub va_db_step: Option<f64>,
    /// Lower end of a linear SNU grid (replaces the dB grid).
    #[arg(long)]
    pub va_min: Option<f64>,
    /// Upper end of the linear SNU grid.
    #[arg(long)]
    pub va_max: Option<f64>,
    /// Spacing of the linear SNU grid.
    #[arg(long)]
    pub va_step: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct FigureArgs {
    /// Transmissions of the squeezed series, comma separated; pass the flag with no value for none.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub transmissions: Option<Vec<f64>>,
    /// Squeezing in dB below shot noise (default: exactly 0.5 SNU).
    #[arg(long, conflicts_with_all = ["vr", "vr_db"])]
    pub squeezing_db: Option<f64>,
    /// Squeezed-quadrature variance in dB (negative = squeezed).
    #[arg(long, allow_negative_numbers = true, conflicts_with = "vr")]
    pub vr_db: Option<f64>,
    /// Squeezed-quadrature variance in SNU.
    #[arg(long)]
    pub vr: Option<f64>,
    /// Excess anti-squeezing (default 0).
    #[arg(long)]
    pub dv: Option<f64>,
    /// Trusted electronic noise of Bob's detector (default 0).
    #[arg(long)]
    pub vn: Option<f64>,
    /// Reconciliation efficiency (fig3 only; default 0.95).
    #[arg(long)]
    pub beta: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct Fig4Args {
    /// Channel transmittance (default 0.001).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Excess-noise levels, comma separated (default 0,0.035).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub eps: Option<Vec<f64>>,
    /// Total exchanged signals for each finite-size curve (default 1e10,1e11).
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    pub finite_sizes: Option<Vec<f64>>,
    /// Squeezed-quadrature variance in dB (default: exactly 0.5 SNU).
    #[arg(long, allow_negative_numbers = true, conflicts_with = "vr")]
    pub vr_db: Option<f64>,
    /// Squeezed-quadrature variance in SNU.
    #[arg(long)]
    pub vr: Option<f64>,
    /// Trusted electronic noise of Bob's detector (default 0).
    #[arg(long)]
    pub vn: Option<f64>,
    /// Smoothing parameter (default 1e-10).
    #[arg(long)]
    pub eps_smooth: Option<f64>,
    /// Privacy-amplification failure probability (default 1e-10).
    #[arg(long)]
    pub eps_pa: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EmulationArgs {
    /// Number of samples (default 1000000).
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Bob's homodyne efficiency (default 0.85).
    #[arg(long)]
    pub eta_bob_det: Option<f64>,
    /// Eve's homodyne efficiency (default 0.95).
    #[arg(long)]
    pub eta_eve_det: Option<f64>,
    /// Treat both detectors as ideal.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub ideal_detectors: Option<bool>,
    /// Variance written into Alice's unmeasured P entry (default 100).
    #[arg(long)]
    pub alice_p_var: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct EmulateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub emulation: EmulationArgs,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ValidateArgs {
    /// JSON file holding the matrix.
    pub matrix: Option<PathBuf>,
    /// Allowed shortfall of symplectic eigenvalues below one (default 1e-9).
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    /// Complete sweep specification (JSON); other sweep flags are then ignored.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Swept parameter: v_a_db, eta, beta, epsilon or v_n.
    #[arg(long)]
    pub axis: Option<String>,
    /// Explicit grid values, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, num_args = 1..)]
    pub grid: Option<Vec<f64>>,
    /// Evenly spaced grid: first value.
    #[arg(long, allow_negative_numbers = true)]
    pub from: Option<f64>,
    /// Evenly spaced grid: last value (included when on the grid).
    #[arg(long, allow_negative_numbers = true)]
    pub to: Option<f64>,
    /// Evenly spaced grid: spacing.
    #[arg(long)]
    pub step: Option<f64>,
    /// Also emulate every grid point and report data-derived quantities.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub emulate: Option<bool>,
    #[command(flatten)]
    #[serde(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub finite: FiniteArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub emulation: EmulationArgs,
}

impl SweepArgs {
    pub fn axis(&self) -> Result<SweepAxis> {
        let name = self.axis.as_deref().context("--axis is required without --spec")?;
        Ok(name.parse()?)
    }
}

/// Pairs of flags that give the same quantity; setting one on the command line
/// discards the other from the config file.
const ALTERNATIVES: [(&str, &str); 4] = [
    ("vr_db", "vr"),
    ("va_db", "va"),
    ("squeezing_db", "vr"),
    ("squeezing_db", "vr_db"),
];

fn field_names<T: Serialize + Default>() -> BTreeSet<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

pub fn read_config(path: &std::path::Path) -> Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    match serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))? {
        Value::Object(m) => Ok(m),
        _ => bail!("config {} must be a JSON object", path.display()),
    }
}

/// Rejects config keys that belong to neither `G` nor `T`.
pub fn check_config_keys<G, T>(config: &Map<String, Value>) -> Result<()>
where
    G: Serialize + Default,
    T: Serialize + Default,
{
    let mut known = field_names::<G>();
    known.extend(field_names::<T>());
    let unknown: Vec<&String> = config.keys().filter(|k| !known.contains(*k)).collect();
    if !unknown.is_empty() {
        bail!("unknown config keys for this command: {unknown:?}");
    }
    Ok(())
}

/// Config values overlaid with every option actually given on the command line.
pub fn merge<T>(cli: &T, config: &Map<String, Value>) -> Result<T>
where
    T: Serialize + DeserializeOwned + Default,
{
    let known = field_names::<T>();
    let mut merged: Map<String, Value> = config
        .iter()
        .filter(|(k, _)| known.contains(*k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    if let Value::Object(given) = serde_json::to_value(cli)? {
        for (k, v) in given {
            if v.is_null() {
                continue;
            }
            for (a, b) in ALTERNATIVES {
                if k == a {
                    merged.remove(b);
                } else if k == b {
                    merged.remove(a);
                }
            }
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).context("invalid value in config")
}
