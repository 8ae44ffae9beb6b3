//! TOML run configuration. Every field is optional; missing values come
//! from the scenario defaults, so a file may be as short as one line.

use std::path::{Path, PathBuf};

use msstefan_core::engine::{GeometryConfig, OutputConfig, Scenario, SimulationConfig, SolverConfig};
use msstefan_core::micro_sap::SapParams;
use msstefan_core::thermo::PhaseMaterial;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] msstefan_core::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioName {
    Reduced,
    Sap,
}

impl From<ScenarioName> for Scenario {
    fn from(s: ScenarioName) -> Self {
        match s {
            ScenarioName::Reduced => Scenario::Reduced,
            ScenarioName::Sap => Scenario::Sap,
        }
    }
}

impl From<Scenario> for ScenarioName {
    fn from(s: Scenario) -> Self {
        match s {
            Scenario::Reduced => ScenarioName::Reduced,
            Scenario::Sap => ScenarioName::Sap,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryFile {
    pub r_tree: Option<f64>,
    pub delta: Option<f64>,
    pub gamma_hat: Option<f64>,
    pub s0_fraction: Option<f64>,
    pub m_macro: Option<usize>,
    pub m_micro: Option<usize>,
    pub cell_resolution: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialFile {
    pub c_i: Option<f64>,
    pub c_w: Option<f64>,
    pub k_i: Option<f64>,
    pub k_w: Option<f64>,
    pub rho_i: Option<f64>,
    pub rho_w: Option<f64>,
    pub h_i: Option<f64>,
    pub h_w: Option<f64>,
    pub t_c: Option<f64>,
    pub c_inf: Option<f64>,
    pub smoothing_width: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SapFile {
    pub r_f: Option<f64>,
    pub l_v: Option<f64>,
    pub l_f: Option<f64>,
    pub v_f: Option<f64>,
    pub v_v: Option<f64>,
    pub fiber_area: Option<f64>,
    pub wall_thickness: Option<f64>,
    pub fibers_per_vessel: Option<f64>,
    pub g: Option<f64>,
    pub henry: Option<f64>,
    pub molar_mass_gas: Option<f64>,
    pub r_gas: Option<f64>,
    pub sigma_w: Option<f64>,
    pub sugar_concentration: Option<f64>,
    pub wall_conductivity: Option<f64>,
    pub s_gi0: Option<f64>,
    pub r0: Option<f64>,
    pub u0: Option<f64>,
    pub p_gf0: Option<f64>,
    pub p_gv0: Option<f64>,
    pub gas_diffusivity: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverFile {
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub dt_init: Option<f64>,
    pub dt_max: Option<f64>,
    pub dt_min: Option<f64>,
    pub macro_diffusivity_factor: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputFile {
    /// Seconds.
    pub snapshot_times: Option<Vec<f64>>,
    /// Metres.
    pub probe_radii: Option<Vec<f64>>,
    pub directory: Option<PathBuf>,
}

/// On-disk form of a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: ScenarioName,
    pub t_end: Option<f64>,
    pub initial_temperature: Option<f64>,
    pub ambient_temperature: Option<f64>,
    #[serde(default)]
    pub geometry: GeometryFile,
    #[serde(default)]
    pub material: MaterialFile,
    #[serde(default)]
    pub sap: SapFile,
    #[serde(default)]
    pub solver: SolverFile,
    #[serde(default)]
    pub output: OutputFile,
}

/// A resolved configuration plus where to write results.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimulationConfig,
    pub directory: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:expr, $src:expr, $($f:ident),+) => {
        $( if let Some(v) = $src.$f.clone() { $dst.$f = v; } )+
    };
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, path)
    }

    /// Fills in scenario defaults and validates.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let scenario: Scenario = self.scenario.into();
        let mut c = SimulationConfig::for_scenario(scenario);
        overlay!(c, self, t_end, initial_temperature, ambient_temperature);
        overlay!(c.geometry, self.geometry, r_tree, delta, gamma_hat, s0_fraction, m_macro, m_micro, cell_resolution);
        let mat = &self.material;
        overlay!(c.material, mat, c_i, c_w, k_i, k_w, rho_i, rho_w, h_i, h_w, t_c, c_inf, smoothing_width);
        // the corner width follows the latent gap unless given explicitly
        if mat.smoothing_width.is_none() && (mat.h_i.is_some() || mat.h_w.is_some()) {
            c.material.smoothing_width = 0.02 * (c.material.h_w - c.material.h_i);
        }
        if mat.c_inf.is_none() && mat.c_w.is_some() {
            c.material.c_inf = 1.0e3 * c.material.c_w;
        }
        overlay!(
            c.sap, self.sap, r_f, l_v, l_f, v_f, v_v, fiber_area, wall_thickness, fibers_per_vessel, g, henry,
            molar_mass_gas, r_gas, sigma_w, sugar_concentration, wall_conductivity, s_gi0, r0, u0, p_gf0, p_gv0,
            gas_diffusivity
        );
        if scenario == Scenario::Sap && self.geometry.gamma_hat.is_none() {
            c.geometry.gamma_hat = c.sap.r_f / c.geometry.delta;
        }
        overlay!(c.solver, self.solver, rtol, atol, dt_init, dt_max, dt_min, macro_diffusivity_factor);
        overlay!(c.output, self.output, snapshot_times, probe_radii);
        c.validate()?;
        Ok(RunConfig { sim: c, directory: self.output.directory.clone() })
    }

    /// Fully populated file for a resolved configuration.
    pub fn from_resolved(r: &RunConfig) -> Self {
        let c = &r.sim;
        let GeometryConfig { r_tree, delta, gamma_hat, s0_fraction, m_macro, m_micro, cell_resolution } = c.geometry;
        let PhaseMaterial { c_i, c_w, k_i, k_w, rho_i, rho_w, h_i, h_w, t_c, c_inf, smoothing_width } = c.material;
        let s: &SapParams = &c.sap;
        let SolverConfig { rtol, atol, dt_init, dt_max, dt_min, macro_diffusivity_factor } = c.solver;
        let OutputConfig { snapshot_times, probe_radii } = c.output.clone();
        ConfigFile {
            scenario: c.scenario.into(),
            t_end: Some(c.t_end),
            initial_temperature: Some(c.initial_temperature),
            ambient_temperature: Some(c.ambient_temperature),
            geometry: GeometryFile {
                r_tree: Some(r_tree),
                delta: Some(delta),
                gamma_hat: Some(gamma_hat),
                s0_fraction: Some(s0_fraction),
                m_macro: Some(m_macro),
                m_micro: Some(m_micro),
                cell_resolution: Some(cell_resolution),
            },
            material: MaterialFile {
                c_i: Some(c_i),
                c_w: Some(c_w),
                k_i: Some(k_i),
                k_w: Some(k_w),
                rho_i: Some(rho_i),
                rho_w: Some(rho_w),
                h_i: Some(h_i),
                h_w: Some(h_w),
                t_c: Some(t_c),
                c_inf: Some(c_inf),
                smoothing_width: Some(smoothing_width),
            },
            sap: SapFile {
                r_f: Some(s.r_f),
                l_v: Some(s.l_v),
                l_f: Some(s.l_f),
                v_f: Some(s.v_f),
                v_v: Some(s.v_v),
                fiber_area: Some(s.fiber_area),
                wall_thickness: Some(s.wall_thickness),
                fibers_per_vessel: Some(s.fibers_per_vessel),
                g: Some(s.g),
                henry: Some(s.henry),
                molar_mass_gas: Some(s.molar_mass_gas),
                r_gas: Some(s.r_gas),
                sigma_w: Some(s.sigma_w),
                sugar_concentration: Some(s.sugar_concentration),
                wall_conductivity: Some(s.wall_conductivity),
                s_gi0: Some(s.s_gi0),
                r0: Some(s.r0),
                u0: Some(s.u0),
                p_gf0: Some(s.p_gf0),
                p_gv0: Some(s.p_gv0),
                gas_diffusivity: Some(s.gas_diffusivity),
            },
            solver: SolverFile {
                rtol: Some(rtol),
                atol: Some(atol),
                dt_init: Some(dt_init),
                dt_max: Some(dt_max),
                dt_min: Some(dt_min),
                macro_diffusivity_factor: Some(macro_diffusivity_factor),
            },
            output: OutputFile {
                snapshot_times: Some(snapshot_times),
                probe_radii: Some(probe_radii),
                directory: r.directory.clone(),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config structs always serialize")
    }
}

/// Default file for a scenario with every field spelled out.
pub fn default_file(scenario: Scenario) -> ConfigFile {
    ConfigFile::from_resolved(&RunConfig { sim: SimulationConfig::for_scenario(scenario), directory: None })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let f = ConfigFile::parse("scenario = \"sap\"", Path::new("x.toml")).unwrap();
        let r = f.resolve().unwrap();
        assert_eq!(r.sim, SimulationConfig::sap());
    }

    #[test]
    fn unknown_key_is_rejected_with_location() {
        let e = ConfigFile::parse("scenario = \"reduced\"\n[geometry]\nm_macor = 3\n", Path::new("x.toml")).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("m_macor"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn out_of_range_value_names_the_parameter() {
        let f = ConfigFile::parse("scenario = \"reduced\"\n[geometry]\ngamma_hat = 0.7\n", Path::new("x.toml")).unwrap();
        let msg = f.resolve().unwrap_err().to_string();
        assert!(msg.contains("gamma_hat"), "{msg}");
    }

    #[test]
    fn echo_round_trips() {
        for s in [Scenario::Reduced, Scenario::Sap] {
            let f = default_file(s);
            let back = ConfigFile::parse(&f.to_toml(), Path::new("echo.toml")).unwrap();
            assert_eq!(back, f);
            assert_eq!(back.resolve().unwrap().sim, SimulationConfig::for_scenario(s));
        }
    }
}
