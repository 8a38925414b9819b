//! Scenario files: the on-disk JSON representation, unit normalization
//! (power quantities in GW or MW, scarcity slope per GW or per MW), and the
//! loader that turns a file into a validated [`ScenarioSpec`].
//!
//! Uncertainty can be stated either as Ornstein-Uhlenbeck volatilities or as
//! terminal moments at the file's `moment_horizon` (fuels: terminal standard
//! deviation of the log cost; demands: terminal standard deviation or
//! variance), whichever is more convenient to pin down.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    CouplingSpec, FuelSpec, MarketSpec, NumericsSpec, ScenarioSpec, TechnologySpec,
};
use crate::scenarios::ou_sigma_for_terminal_std;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerUnit {
    MW,
    GW,
}

impl PowerUnit {
    fn to_mw(self, v: f64) -> f64 {
        match self {
            PowerUnit::MW => v,
            PowerUnit::GW => v * 1_000.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BetaUnit {
    #[serde(rename = "per_MW")]
    PerMw,
    #[serde(rename = "per_GW")]
    PerGw,
}

impl BetaUnit {
    fn to_per_mw(self, v: f64) -> f64 {
        match self {
            BetaUnit::PerMw => v,
            BetaUnit::PerGw => v / 1_000.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitsBlock {
    pub power: PowerUnit,
    pub beta: BetaUnit,
}

impl Default for UnitsBlock {
    fn default() -> Self {
        UnitsBlock {
            power: PowerUnit::MW,
            beta: BetaUnit::PerMw,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuelFile {
    pub name: String,
    /// Cost level at the valuation time, EUR/MWh.
    pub initial_cost: f64,
    /// Long-run cost level, EUR/MWh.
    pub long_run_cost: f64,
    /// Mean-reversion speed, 1/year.
    pub mean_reversion: f64,
    /// Log-cost volatility per sqrt(year); exclusive with `terminal_log_std`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volatility: Option<f64>,
    /// Terminal standard deviation of the log cost at `moment_horizon`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_log_std: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityFile {
    pub constant: f64,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TechnologyFile {
    /// Name of the fuel this technology burns.
    pub fuel: String,
    pub capacity: CapacityFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandFile {
    pub constant: f64,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
    pub mean_reversion: f64,
    /// OU volatility (power unit per sqrt(year)); exclusive with the
    /// terminal moment fields.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volatility: Option<f64>,
    /// Terminal standard deviation at `moment_horizon`, power units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_std: Option<f64>,
    /// Terminal variance at `moment_horizon`, squared power units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_variance: Option<f64>,
    #[serde(default)]
    pub initial_deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketFile {
    pub alpha: f64,
    /// Scarcity slope in the file's beta unit (nonpositive).
    pub beta: f64,
    pub demand: DemandFile,
    pub technologies: Vec<TechnologyFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingFile {
    pub flow_min: f64,
    pub flow_max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsFile {
    #[serde(default = "default_quadrature_tolerance")]
    pub quadrature_tolerance: f64,
    #[serde(default = "default_quadrature_shifts")]
    pub quadrature_shifts: usize,
    #[serde(default = "default_max_points")]
    pub max_points_per_shift: usize,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    #[serde(default = "default_grid_step")]
    pub brute_force_grid_step_mw: f64,
    #[serde(default = "default_max_fuels")]
    pub max_fuels: usize,
    /// Horizon (years) at which terminal moments are stated.
    #[serde(default = "default_moment_horizon")]
    pub moment_horizon: f64,
}

fn default_quadrature_tolerance() -> f64 {
    NumericsSpec::default().quadrature_tolerance
}
fn default_quadrature_shifts() -> usize {
    NumericsSpec::default().quadrature_shifts
}
fn default_max_points() -> usize {
    NumericsSpec::default().max_points_per_shift
}
fn default_mc_samples() -> usize {
    NumericsSpec::default().mc_samples
}
fn default_grid_step() -> f64 {
    NumericsSpec::default().brute_force_grid_step
}
fn default_max_fuels() -> usize {
    NumericsSpec::default().max_fuels
}
fn default_moment_horizon() -> f64 {
    1.0
}

impl Default for NumericsFile {
    fn default() -> Self {
        NumericsFile {
            quadrature_tolerance: default_quadrature_tolerance(),
            quadrature_shifts: default_quadrature_shifts(),
            max_points_per_shift: default_max_points(),
            mc_samples: default_mc_samples(),
            brute_force_grid_step_mw: default_grid_step(),
            max_fuels: default_max_fuels(),
            moment_horizon: default_moment_horizon(),
        }
    }
}

/// On-disk scenario representation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub units: UnitsBlock,
    #[serde(default)]
    pub valuation_time: f64,
    pub seed: u64,
    pub fuels: Vec<FuelFile>,
    pub market_a: MarketFile,
    pub market_b: MarketFile,
    pub coupling: CouplingFile,
    /// Row-major correlation of the drivers (fuels, demand A, demand B);
    /// omitted means independent drivers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub numerics: NumericsFile,
}

impl ScenarioFile {
    /// Normalizes units and resolves terminal-moment inputs into a validated
    /// [`ScenarioSpec`].
    pub fn into_spec(self) -> Result<ScenarioSpec> {
        let units = &self.units;
        let tau = self.numerics.moment_horizon;
        if !(tau > 0.0) {
            return Err(Error::validation("numerics.moment_horizon", "must be > 0"));
        }
        let mut fuels = Vec::with_capacity(self.fuels.len());
        for (i, f) in self.fuels.iter().enumerate() {
            let path = |s: &str| format!("fuels[{i}].{s}");
            if !(f.initial_cost > 0.0) {
                return Err(Error::validation(path("initial_cost"), "must be > 0"));
            }
            if !(f.long_run_cost > 0.0) {
                return Err(Error::validation(path("long_run_cost"), "must be > 0"));
            }
            let volatility = match (f.volatility, f.terminal_log_std) {
                (Some(v), None) => v,
                (None, Some(sd)) => {
                    if sd < 0.0 {
                        return Err(Error::validation(path("terminal_log_std"), "must be >= 0"));
                    }
                    ou_sigma_for_terminal_std(sd, f.mean_reversion, tau)
                }
                _ => {
                    return Err(Error::validation(
                        path("volatility"),
                        "exactly one of `volatility` and `terminal_log_std` is required",
                    ));
                }
            };
            fuels.push(FuelSpec {
                name: f.name.clone(),
                initial_log_cost: f.initial_cost.ln(),
                mean_reversion: f.mean_reversion,
                long_run_log_mean: f.long_run_cost.ln(),
                volatility,
            });
        }
        let resolve_market = |m: &MarketFile, mname: &str| -> Result<MarketSpec> {
            let mut technologies = Vec::with_capacity(m.technologies.len());
            for (k, t) in m.technologies.iter().enumerate() {
                let fuel = self
                    .fuels
                    .iter()
                    .position(|f| f.name == t.fuel)
                    .ok_or_else(|| {
                        Error::validation(
                            format!("{mname}.technologies[{k}].fuel"),
                            format!("unknown fuel `{}`", t.fuel),
                        )
                    })?;
                technologies.push(TechnologySpec {
                    fuel,
                    capacity_const: units.power.to_mw(t.capacity.constant),
                    capacity_cos: units.power.to_mw(t.capacity.cos),
                    capacity_sin: units.power.to_mw(t.capacity.sin),
                });
            }
            let d = &m.demand;
            let demand_vol = match (d.volatility, d.terminal_std, d.terminal_variance) {
                (Some(v), None, None) => units.power.to_mw(v),
                (None, Some(sd), None) => {
                    if sd < 0.0 {
                        return Err(Error::validation(
                            format!("{mname}.demand.terminal_std"),
                            "must be >= 0",
                        ));
                    }
                    ou_sigma_for_terminal_std(units.power.to_mw(sd), d.mean_reversion, tau)
                }
                (None, None, Some(var)) => {
                    if var < 0.0 {
                        return Err(Error::validation(
                            format!("{mname}.demand.terminal_variance"),
                            "must be >= 0",
                        ));
                    }
                    ou_sigma_for_terminal_std(
                        units.power.to_mw(var.sqrt()),
                        d.mean_reversion,
                        tau,
                    )
                }
                _ => {
                    return Err(Error::validation(
                        format!("{mname}.demand"),
                        "exactly one of `volatility`, `terminal_std`, `terminal_variance` is required",
                    ));
                }
            };
            Ok(MarketSpec {
                technologies,
                alpha: m.alpha,
                beta: units.beta.to_per_mw(m.beta),
                demand_const: units.power.to_mw(d.constant),
                demand_cos: units.power.to_mw(d.cos),
                demand_sin: units.power.to_mw(d.sin),
                demand_mean_reversion: d.mean_reversion,
                demand_vol,
                initial_demand_dev: units.power.to_mw(d.initial_deviation),
            })
        };
        let market_a = resolve_market(&self.market_a, "market_a")?;
        let market_b = resolve_market(&self.market_b, "market_b")?;
        let dim = fuels.len() + 2;
        let correlation = match &self.correlation {
            None => {
                let mut ident = vec![0.0; dim * dim];
                for i in 0..dim {
                    ident[i * dim + i] = 1.0;
                }
                ident
            }
            Some(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::validation(
                        "correlation",
                        format!("expected a {dim}x{dim} matrix (fuels, demand A, demand B)"),
                    ));
                }
                rows.iter().flatten().copied().collect()
            }
        };
        let spec = ScenarioSpec {
            fuels,
            market_a,
            market_b,
            coupling: CouplingSpec {
                flow_min: units.power.to_mw(self.coupling.flow_min),
                flow_max: units.power.to_mw(self.coupling.flow_max),
            },
            correlation,
            valuation_time: self.valuation_time,
            seed: self.seed,
            numerics: NumericsSpec {
                quadrature_tolerance: self.numerics.quadrature_tolerance,
                quadrature_shifts: self.numerics.quadrature_shifts,
                max_points_per_shift: self.numerics.max_points_per_shift,
                mc_samples: self.numerics.mc_samples,
                brute_force_grid_step: self.numerics.brute_force_grid_step_mw,
                max_fuels: self.numerics.max_fuels,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical (MW, per-MW, explicit-volatility) file form of a spec.
    pub fn from_spec(spec: &ScenarioSpec) -> ScenarioFile {
        let fuel_file = |f: &FuelSpec| FuelFile {
            name: f.name.clone(),
            initial_cost: f.initial_log_cost.exp(),
            long_run_cost: f.long_run_log_mean.exp(),
            mean_reversion: f.mean_reversion,
            volatility: Some(f.volatility),
            terminal_log_std: None,
        };
        let market_file = |m: &MarketSpec| MarketFile {
            alpha: m.alpha,
            beta: m.beta,
            demand: DemandFile {
                constant: m.demand_const,
                cos: m.demand_cos,
                sin: m.demand_sin,
                mean_reversion: m.demand_mean_reversion,
                volatility: Some(m.demand_vol),
                terminal_std: None,
                terminal_variance: None,
                initial_deviation: m.initial_demand_dev,
            },
            technologies: m
                .technologies
                .iter()
                .map(|t| TechnologyFile {
                    fuel: spec.fuels[t.fuel].name.clone(),
                    capacity: CapacityFile {
                        constant: t.capacity_const,
                        cos: t.capacity_cos,
                        sin: t.capacity_sin,
                    },
                })
                .collect(),
        };
        let dim = spec.state_dim();
        ScenarioFile {
            units: UnitsBlock::default(),
            valuation_time: spec.valuation_time,
            seed: spec.seed,
            fuels: spec.fuels.iter().map(fuel_file).collect(),
            market_a: market_file(&spec.market_a),
            market_b: market_file(&spec.market_b),
            coupling: CouplingFile {
                flow_min: spec.coupling.flow_min,
                flow_max: spec.coupling.flow_max,
            },
            correlation: Some(
                (0..dim)
                    .map(|i| (0..dim).map(|j| spec.correlation[i * dim + j]).collect())
                    .collect(),
            ),
            numerics: NumericsFile {
                quadrature_tolerance: spec.numerics.quadrature_tolerance,
                quadrature_shifts: spec.numerics.quadrature_shifts,
                max_points_per_shift: spec.numerics.max_points_per_shift,
                mc_samples: spec.numerics.mc_samples,
                brute_force_grid_step_mw: spec.numerics.brute_force_grid_step,
                max_fuels: spec.numerics.max_fuels,
                moment_horizon: default_moment_horizon(),
            },
        }
    }
}

/// Loads, normalizes, and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    let file: ScenarioFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    file.into_spec()
}

/// Writes a spec in the canonical file form.
pub fn write_scenario(spec: &ScenarioSpec, path: impl AsRef<Path>) -> Result<()> {
    let file = ScenarioFile::from_spec(spec);
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Parse(format!("serialization failed: {e}")))?;
    std::fs::write(path.as_ref(), text + "\n")
        .map_err(|e| Error::Parse(format!("cannot write {}: {e}", path.as_ref().display())))
}
