//! Parameter sweeps and the data series behind the standard figures: Holevo
//! information and key rate against modulation, and β-threshold security regions.
//!
//! Grid points are evaluated in parallel; rows always come out in grid order.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::emulator::{generate_samples, reconstruct_covariance, security_from_data, EmulationConfig};
use crate::error::{invalid, Error, Result};
use crate::finite_size::{beta_threshold, key_rate_finite, BetaThreshold, FiniteSizeParams};
use crate::format::fmt_sig;
use crate::gaussian::{db_to_snu, snu_to_db, Decibel};
use crate::protocol::{holevo_eb, key_rate_asymptotic, security_report, ProtocolParams, SecurityReport};

/// Squeezed-quadrature variance used by the figure commands: exactly half the
/// shot noise, so that the decoupling modulation is exactly 0.5 SNU.
pub const DEFAULT_SQUEEZING_SNU: f64 = 0.5;

/// Transmission of the coherent-state reference series.
pub const COHERENT_REFERENCE_ETA: f64 = 0.58;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Squeezed,
    Coherent,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Squeezed => "squeezed",
            Protocol::Coherent => "coherent",
        })
    }
}

/// Evenly spaced modulation values, in dB or linear SNU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModulationGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
    pub in_db: bool,
}

impl ModulationGrid {
    pub fn db(min: f64, max: f64, step: f64) -> Self {
        Self {
            min,
            max,
            step,
            in_db: true,
        }
    }

    pub fn snu(min: f64, max: f64, step: f64) -> Self {
        Self {
            min,
            max,
            step,
            in_db: false,
        }
    }

    /// Grid values converted to SNU, ascending.
    pub fn values_snu(&self) -> Result<Vec<f64>> {
        if !(self.min.is_finite() && self.max.is_finite() && self.step > 0.0 && self.max >= self.min) {
            return Err(invalid(format!(
                "invalid modulation grid min={} max={} step={}",
                self.min, self.max, self.step
            )));
        }
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        if count > 10_000_000 {
            return Err(invalid(format!("modulation grid has {count} points")));
        }
        let values: Vec<f64> = (0..count).map(|k| self.min + self.step * k as f64).collect();
        if self.in_db {
            Ok(values.into_iter().map(|d| db_to_snu(Decibel(d))).collect())
        } else if self.min < 0.0 {
            Err(invalid(format!(
                "linear modulation grid starts below zero ({})",
                self.min
            )))
        } else {
            Ok(values)
        }
    }

    /// Grid values plus `extra` points that fall inside the range, sorted and deduplicated.
    pub fn values_with(&self, extra: &[f64]) -> Result<Vec<f64>> {
        let mut values = self.values_snu()?;
        let (lo, hi) = (values[0], values[values.len() - 1]);
        values.extend(extra.iter().copied().filter(|v| *v >= lo && *v <= hi));
        values.sort_by(f64::total_cmp);
        values.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1e-300));
        Ok(values)
    }
}

fn va_db(v_a: f64) -> f64 {
    snu_to_db(v_a).map(Decibel::value).unwrap_or(f64::NEG_INFINITY)
}

fn join(fields: &[String]) -> String {
    fields.join(",")
}

/// Holevo information against modulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolevoSweep {
    pub transmissions: Vec<f64>,
    pub grid: ModulationGrid,
    pub v_r: f64,
    pub delta_v: f64,
    pub v_n: f64,
}

impl Default for HolevoSweep {
    fn default() -> Self {
        Self {
            transmissions: vec![0.098, 0.58, 0.9],
            grid: ModulationGrid::db(-20.0, 10.0, 0.1),
            v_r: DEFAULT_SQUEEZING_SNU,
            delta_v: 0.0,
            v_n: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolevoRow {
    pub protocol: Protocol,
    pub eta: f64,
    pub v_a_snu: f64,
    pub chi_e_bits: f64,
}

impl HolevoSweep {
    /// Coherent reference series at η = 0.58 first, then one squeezed series per
    /// transmission. Every series starts at `v_a = 0` and contains the decoupling
    /// point when it lies in the grid range.
    pub fn run(&self) -> Result<Vec<HolevoRow>> {
        let grid = self.series_grid()?;
        let mut series = vec![(Protocol::Coherent, COHERENT_REFERENCE_ETA)];
        series.extend(self.transmissions.iter().map(|&eta| (Protocol::Squeezed, eta)));
        let mut rows = Vec::new();
        for (protocol, eta) in series {
            let base = self.base(protocol, eta);
            let chunk = grid
                .par_iter()
                .map(|&v_a| {
                    Ok(HolevoRow {
                        protocol,
                        eta,
                        v_a_snu: v_a,
                        chi_e_bits: holevo_eb(&base.with_v_a(v_a))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.extend(chunk);
        }
        Ok(rows)
    }

    fn base(&self, protocol: Protocol, eta: f64) -> ProtocolParams {
        match protocol {
            Protocol::Squeezed => ProtocolParams::squeezed(self.v_r, 0.0, eta).with_delta_v(self.delta_v),
            Protocol::Coherent => ProtocolParams::coherent(0.0, eta),
        }
        .with_v_n(self.v_n)
    }

    fn series_grid(&self) -> Result<Vec<f64>> {
        let mut grid = self.grid.values_with(&[1.0 - self.v_r])?;
        grid.insert(0, 0.0);
        grid.dedup();
        Ok(grid)
    }

    pub const CSV_HEADER: &'static str = "protocol,eta,v_a_db,v_a_snu,chi_e_bits";

    pub fn write_csv<W: Write>(rows: &[HolevoRow], mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in rows {
            let f = [
                r.protocol.to_string(),
                fmt_sig(r.eta),
                fmt_sig(va_db(r.v_a_snu)),
                fmt_sig(r.v_a_snu),
                fmt_sig(r.chi_e_bits),
            ];
            writeln!(out, "{}", join(&f))?;
        }
        Ok(())
    }
}

/// Asymptotic key rate against modulation at a fixed reconciliation efficiency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyRateSweep {
    pub transmissions: Vec<f64>,
    pub grid: ModulationGrid,
    pub beta: f64,
    pub v_r: f64,
    pub delta_v: f64,
    pub v_n: f64,
}

impl Default for KeyRateSweep {
    fn default() -> Self {
        Self {
            transmissions: vec![0.098, 0.5, 0.9],
            grid: ModulationGrid::db(-20.0, 10.0, 0.1),
            beta: 0.95,
            v_r: DEFAULT_SQUEEZING_SNU,
            delta_v: 0.0,
            v_n: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyRateRow {
    pub protocol: Protocol,
    pub eta: f64,
    pub beta: f64,
    pub v_a_snu: f64,
    pub key_rate_bits: f64,
}

impl KeyRateSweep {
    /// Coherent reference at η = 0.58, then squeezed series. `beta = 0` is
    /// accepted here (every rate is then `−χ_E ≤ 0`).
    pub fn run(&self) -> Result<Vec<KeyRateRow>> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid(format!("beta must lie in [0, 1], got {}", self.beta)));
        }
        let mut grid = self.grid.values_with(&[1.0 - self.v_r])?;
        grid.insert(0, 0.0);
        grid.dedup();
        let mut series = vec![(Protocol::Coherent, COHERENT_REFERENCE_ETA)];
        series.extend(self.transmissions.iter().map(|&eta| (Protocol::Squeezed, eta)));
        let mut rows = Vec::new();
        for (protocol, eta) in series {
            let base = match protocol {
                Protocol::Squeezed => ProtocolParams::squeezed(self.v_r, 0.0, eta).with_delta_v(self.delta_v),
                Protocol::Coherent => ProtocolParams::coherent(0.0, eta),
            }
            .with_v_n(self.v_n);
            let beta = self.beta;
            let chunk = grid
                .par_iter()
                .map(|&v_a| {
                    let p = base.with_v_a(v_a);
                    let rate = beta * crate::protocol::mutual_information_ab(&p)? - holevo_eb(&p)?;
                    Ok(KeyRateRow {
                        protocol,
                        eta,
                        beta,
                        v_a_snu: v_a,
                        key_rate_bits: rate,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.extend(chunk);
        }
        Ok(rows)
    }

    pub const CSV_HEADER: &'static str = "protocol,eta,beta,v_a_db,v_a_snu,key_rate_bits";

    pub fn write_csv<W: Write>(rows: &[KeyRateRow], mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in rows {
            let f = [
                r.protocol.to_string(),
                fmt_sig(r.eta),
                fmt_sig(r.beta),
                fmt_sig(va_db(r.v_a_snu)),
                fmt_sig(r.v_a_snu),
                fmt_sig(r.key_rate_bits),
            ];
            writeln!(out, "{}", join(&f))?;
        }
        Ok(())
    }
}

/// Modulation maximizing the key rate within one series (first maximum wins).
pub fn argmax_modulation(rows: &[KeyRateRow], protocol: Protocol, eta: f64) -> Option<(f64, f64)> {
    rows.iter().filter(|r| r.protocol == protocol && r.eta == eta).fold(
        None,
        |best: Option<(f64, f64)>, r| match best {
            Some((_, rate)) if rate >= r.key_rate_bits => best,
            _ => Some((r.v_a_snu, r.key_rate_bits)),
        },
    )
}

/// β-threshold regions of the squeezed and coherent protocols at a fixed
/// transmission, asymptotically and at each finite block size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecurityRegionSweep {
    pub eta: f64,
    pub epsilons: Vec<f64>,
    pub grid: ModulationGrid,
    /// Total exchanged signals for each finite-size curve.
    pub finite_sizes: Vec<f64>,
    pub v_r: f64,
    pub v_n: f64,
    /// Template for the finite-size settings; `n_key`/`n_total` are rescaled to each size.
    pub finite_template: FiniteSizeParams,
}

impl Default for SecurityRegionSweep {
    fn default() -> Self {
        Self {
            eta: 0.001,
            epsilons: vec![0.0, 0.035],
            grid: ModulationGrid::db(-5.0, 20.0, 0.1),
            finite_sizes: vec![1e10, 1e11],
            v_r: DEFAULT_SQUEEZING_SNU,
            v_n: 0.0,
            finite_template: FiniteSizeParams::with_total(1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub protocol: Protocol,
    pub epsilon: f64,
    pub v_a_snu: f64,
    pub asymptotic: BetaThreshold,
    /// One threshold per entry of `finite_sizes`.
    pub finite: Vec<BetaThreshold>,
}

impl SecurityRegionSweep {
    pub fn finite_params(&self, n_total: f64) -> FiniteSizeParams {
        let fraction = self.finite_template.n_key / self.finite_template.n_total;
        FiniteSizeParams {
            n_key: n_total * fraction,
            n_total,
            ..self.finite_template
        }
    }

    /// For each excess noise: squeezed rows, then coherent rows. Points without
    /// mutual information get `β* = ∞`.
    pub fn run(&self) -> Result<Vec<RegionRow>> {
        let grid = self.grid.values_with(&[1.0 - self.v_r])?;
        let sizes: Vec<FiniteSizeParams> = self.finite_sizes.iter().map(|&n| self.finite_params(n)).collect();
        for fp in &sizes {
            fp.validate()?;
        }
        let threshold = |p: &ProtocolParams, fp: Option<&FiniteSizeParams>| match beta_threshold(p, fp) {
            Err(Error::UndefinedThreshold) => Ok(BetaThreshold {
                beta_star: f64::INFINITY,
                secure: false,
            }),
            other => other,
        };
        let mut rows = Vec::new();
        for &epsilon in &self.epsilons {
            for protocol in [Protocol::Squeezed, Protocol::Coherent] {
                let v_r = match protocol {
                    Protocol::Squeezed => self.v_r,
                    Protocol::Coherent => 1.0,
                };
                let base = ProtocolParams::squeezed(v_r, 0.0, self.eta)
                    .with_epsilon(epsilon)
                    .with_v_n(self.v_n);
                let chunk = grid
                    .par_iter()
                    .map(|&v_a| {
                        let p = base.with_v_a(v_a);
                        Ok(RegionRow {
                            protocol,
                            epsilon,
                            v_a_snu: v_a,
                            asymptotic: threshold(&p, None)?,
                            finite: sizes.iter().map(|fp| threshold(&p, Some(fp))).collect::<Result<_>>()?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                rows.extend(chunk);
            }
        }
        Ok(rows)
    }

    pub fn csv_header(&self) -> String {
        let mut cols = vec![
            "protocol".to_string(),
            "epsilon".into(),
            "v_a_db".into(),
            "v_a_snu".into(),
            "beta_star_asymptotic".into(),
        ];
        cols.extend(self.finite_sizes.iter().map(|n| format!("beta_star_n_{n:e}")));
        cols.push("secure_flag".into());
        join(&cols)
    }

    pub fn write_csv<W: Write>(&self, rows: &[RegionRow], mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        for r in rows {
            let mut f = vec![
                r.protocol.to_string(),
                fmt_sig(r.epsilon),
                fmt_sig(va_db(r.v_a_snu)),
                fmt_sig(r.v_a_snu),
                fmt_sig(r.asymptotic.beta_star),
            ];
            f.extend(r.finite.iter().map(|t| fmt_sig(t.beta_star)));
            f.push(u8::from(r.asymptotic.secure).to_string());
            writeln!(out, "{}", join(&f))?;
        }
        Ok(())
    }
}

/// Parameter swept by a generic [`SweepSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    VADb,
    Eta,
    Beta,
    Epsilon,
    VN,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::VADb => "v_a_db",
            SweepAxis::Eta => "eta",
            SweepAxis::Beta => "beta",
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::VN => "v_n",
        }
    }

    fn apply(self, base: &ProtocolParams, value: f64) -> ProtocolParams {
        match self {
            SweepAxis::VADb => base.with_v_a(db_to_snu(Decibel(value))),
            SweepAxis::Eta => base.with_eta(value),
            SweepAxis::Beta => base.with_beta(value),
            SweepAxis::Epsilon => base.with_epsilon(value),
            SweepAxis::VN => base.with_v_n(value),
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "v_a_db" | "va-db" => SweepAxis::VADb,
            "eta" => SweepAxis::Eta,
            "beta" => SweepAxis::Beta,
            "epsilon" | "eps" => SweepAxis::Epsilon,
            "v_n" | "vn" => SweepAxis::VN,
            other => return Err(invalid(format!("unknown sweep axis '{other}'"))),
        })
    }
}

/// One-dimensional sweep of a protocol parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: ProtocolParams,
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub finite_size: Option<FiniteSizeParams>,
    #[serde(default)]
    pub emulate: Option<EmulationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub params: ProtocolParams,
    pub report: SecurityReport,
    pub key_rate_finite: Option<f64>,
    pub emulated: Option<SecurityReport>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(invalid("sweep grid is empty"));
        }
        let increasing = self.grid.windows(2).all(|w| w[1] > w[0]);
        let decreasing = self.grid.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(invalid("sweep grid must be strictly monotone"));
        }
        for &v in &self.grid {
            self.axis.apply(&self.base, v).validate().map_err(|e| {
                invalid(format!(
                    "grid value {v} is outside the domain of {}: {e}",
                    self.axis.name()
                ))
            })?;
        }
        if let Some(fp) = &self.finite_size {
            fp.validate()?;
        }
        if let Some(cfg) = &self.emulate {
            cfg.validate()?;
        }
        Ok(())
    }

    /// Evaluates every grid point. Emulated points use seed `cfg.seed + index`.
    pub fn run(&self) -> Result<Vec<SweepRow>> {
        self.validate()?;
        self.grid
            .par_iter()
            .enumerate()
            .map(|(k, &value)| {
                let params = self.axis.apply(&self.base, value);
                let report = security_report(&params)?;
                debug_assert!((report.key_rate - key_rate_asymptotic(&params)?).abs() < 1e-12);
                let key_rate_finite = self.finite_size.map(|fp| key_rate_finite(&params, &fp)).transpose()?;
                let emulated = match &self.emulate {
                    Some(cfg) => {
                        let cfg = EmulationConfig {
                            seed: cfg.seed.wrapping_add(k as u64),
                            ..*cfg
                        };
                        let recon = reconstruct_covariance(&generate_samples(&params, &cfg)?)?;
                        Some(security_from_data(&recon, params.beta, params.v_n)?)
                    }
                    None => None,
                };
                Ok(SweepRow {
                    value,
                    params,
                    report,
                    key_rate_finite,
                    emulated,
                })
            })
            .collect()
    }

    pub fn csv_header(&self) -> String {
        let mut cols: Vec<&str> = vec![
            self.axis.name(),
            "v_r",
            "delta_v",
            "v_a_db",
            "v_a_snu",
            "eta",
            "epsilon",
            "v_n",
            "beta",
            "i_ab",
            "chi_e",
            "key_rate",
            "c_eb",
            "c_ea",
            "i_eb_classical",
            "i_ea_classical",
            "qmi_eb",
        ];
        if self.finite_size.is_some() {
            cols.push("key_rate_finite");
        }
        if self.emulate.is_some() {
            cols.extend(["i_ab_data", "chi_e_data", "key_rate_data"]);
        }
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        for r in rows {
            let p = &r.params;
            let rep = &r.report;
            let mut f: Vec<String> = [
                r.value,
                p.v_r,
                p.delta_v,
                va_db(p.v_a),
                p.v_a,
                p.eta,
                p.epsilon,
                p.v_n,
                p.beta,
                rep.i_ab,
                rep.chi_e,
                rep.key_rate,
                rep.c_eb,
                rep.c_ea,
                rep.i_eb_classical,
                rep.i_ea_classical,
                rep.qmi_eb,
            ]
            .iter()
            .map(|&v| fmt_sig(v))
            .collect();
            if let Some(k) = r.key_rate_finite {
                f.push(fmt_sig(k));
            }
            if let Some(e) = &r.emulated {
                f.extend([fmt_sig(e.i_ab), fmt_sig(e.chi_e), fmt_sig(e.key_rate)]);
            }
            writeln!(out, "{}", join(&f))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_grid_includes_decoupling_point() {
        let grid = ModulationGrid::db(-20.0, 10.0, 0.1).values_with(&[0.5]).unwrap();
        assert!(grid.contains(&0.5));
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(grid.len(), 302);
        assert!(ModulationGrid::db(1.0, 0.0, 0.1).values_snu().is_err());
        assert!(ModulationGrid::snu(-1.0, 1.0, 0.1).values_snu().is_err());
        assert!(ModulationGrid::snu(0.0, 1.0, 0.0).values_snu().is_err());
    }

    #[test]
    fn holevo_sweep_without_transmissions_is_reference_only() {
        let sweep = HolevoSweep {
            transmissions: vec![],
            grid: ModulationGrid::db(-10.0, 0.0, 1.0),
            ..HolevoSweep::default()
        };
        let rows = sweep.run().unwrap();
        assert!(rows
            .iter()
            .all(|r| r.protocol == Protocol::Coherent && r.eta == COHERENT_REFERENCE_ETA));
        assert_eq!(rows[0].v_a_snu, 0.0);
        assert_eq!(rows[0].chi_e_bits, 0.0);
    }

    #[test]
    fn key_rate_sweep_beta_zero_is_never_secure() {
        let sweep = KeyRateSweep {
            beta: 0.0,
            grid: ModulationGrid::db(-10.0, 5.0, 0.5),
            ..KeyRateSweep::default()
        };
        assert!(sweep.run().unwrap().iter().all(|r| r.key_rate_bits <= 0.0));
    }

    #[test]
    fn sweep_spec_validation() {
        let base = ProtocolParams::squeezed(0.5, 0.5, 0.5);
        let spec = |axis, grid: Vec<f64>| SweepSpec {
            base,
            axis,
            grid,
            finite_size: None,
            emulate: None,
        };
        assert!(spec(SweepAxis::Eta, vec![0.1, 0.5, 0.9]).validate().is_ok());
        assert!(spec(SweepAxis::Eta, vec![0.9, 0.5, 0.1]).validate().is_ok());
        assert!(spec(SweepAxis::Eta, vec![]).validate().is_err());
        assert!(spec(SweepAxis::Eta, vec![0.1, 0.1]).validate().is_err());
        assert!(spec(SweepAxis::Eta, vec![0.5, 1.5]).validate().is_err());
        assert!(spec(SweepAxis::Beta, vec![0.0, 0.5]).validate().is_err());
        assert!("v_a_db".parse::<SweepAxis>().is_ok());
        assert!("bogus".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn sweep_rows_follow_grid_order() {
        let spec = SweepSpec {
            base: ProtocolParams::squeezed(0.5, 0.5, 0.5),
            axis: SweepAxis::VADb,
            grid: (0..50).map(|k| -10.0 + 0.3 * k as f64).collect(),
            finite_size: Some(FiniteSizeParams::with_total(1e10)),
            emulate: None,
        };
        let rows = spec.run().unwrap();
        assert_eq!(rows.len(), 50);
        assert!(rows.windows(2).all(|w| w[1].value > w[0].value));
        assert!(rows
            .iter()
            .all(|r| r.key_rate_finite.unwrap() < 0.5 * r.report.key_rate));
        let mut out = Vec::new();
        spec.write_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 51);
        assert!(text.starts_with("v_a_db,v_r,"));
    }
}
