//! Line-oriented `key = value` configuration with `[section]` headers, and the
//! presets shipped with the crate.
//!
//! Comments start with `#` or `;` at the beginning of a line or after
//! whitespace. Keys are unique within a section; unknown keys are rejected.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cost::{CostSpec, PlanRequest};
use crate::designs::AtsdParams;
use crate::error::{Error, Result};
use crate::montecarlo::{EstimatorId, ExperimentConfig};
use crate::population::{
    generate_population, load_population, AuxModel, Condition, Population, PopulationSpec, Variable,
};

/// Environment variable that replaces the configured seed.
pub const SEED_ENV: &str = "ATSD_SEED";

/// Parsed file. Tracks which keys were read so leftovers can be reported.
#[derive(Debug, Default)]
pub struct Ini {
    sections: BTreeMap<String, BTreeMap<String, (String, usize)>>,
    used: RefCell<BTreeSet<(String, String)>>,
}

fn strip_comment(line: &str) -> &str {
    let trimmed = line.trim_start();
    if trimmed.starts_with('#') || trimmed.starts_with(';') {
        return "";
    }
    let bytes = line.as_bytes();
    for i in 1..bytes.len() {
        if (bytes[i] == b'#' || bytes[i] == b';') && bytes[i - 1].is_ascii_whitespace() {
            return &line[..i];
        }
    }
    line
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut section = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = strip_comment(raw).trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::Config(format!("line {line_no}: unterminated section header")))?;
                section = name.trim().to_ascii_lowercase();
                ini.sections.entry(section.clone()).or_default();
                continue;
            }
            let (key, value) =
                line.split_once('=').ok_or_else(|| Error::Config(format!("line {line_no}: expected `key = value`")))?;
            let key = key.trim().to_ascii_lowercase();
            if key.is_empty() {
                return Err(Error::Config(format!("line {line_no}: empty key")));
            }
            let entries = ini.sections.entry(section.clone()).or_default();
            if let Some((_, first)) = entries.get(&key) {
                return Err(Error::Config(format!("line {line_no}: `{key}` already set on line {first}")));
            }
            entries.insert(key, (value.trim().to_string(), line_no));
        }
        Ok(ini)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        let (value, _) = self.sections.get(section)?.get(key)?;
        self.used.borrow_mut().insert((section.to_string(), key.to_string()));
        Some(value)
    }

    pub fn parsed<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(section, key)
            .map(|v| v.parse::<T>().map_err(|e| Error::Config(format!("[{section}] {key} = {v}: {e}"))))
            .transpose()
    }

    pub fn required<T: FromStr>(&self, section: &str, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parsed(section, key)?.ok_or_else(|| Error::Config(format!("missing [{section}] {key}")))
    }

    /// Errors on any key that was never read.
    pub fn finish(&self) -> Result<()> {
        let used = self.used.borrow();
        for (section, entries) in &self.sections {
            for (key, (_, line)) in entries {
                if !used.contains(&(section.clone(), key.clone())) {
                    return Err(Error::Config(format!("line {line}: unknown key `{key}` in [{section}]")));
                }
            }
        }
        Ok(())
    }
}

/// Preset files compiled into the crate.
pub const PRESETS: [(&str, &str); 5] = [
    ("population1", include_str!("../presets/population1.ini")),
    ("population2", include_str!("../presets/population2.ini")),
    ("table2", include_str!("../presets/table2.ini")),
    ("table3", include_str!("../presets/table3.ini")),
    ("table4", include_str!("../presets/table4.ini")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Reads `name` as a preset name first, then as a file path.
pub fn read_config(name: &str) -> Result<(String, Option<PathBuf>)> {
    if let Some(text) = preset(name) {
        return Ok((text.to_string(), None));
    }
    let path = PathBuf::from(name);
    let text =
        std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read config `{name}`: {e}")))?;
    Ok((text, Some(path)))
}

/// Value of `ATSD_SEED` if set.
pub fn seed_override() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v} is not an unsigned 64-bit integer"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Config(format!("{SEED_ENV}: {e}"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PopulationSource {
    Spec(PopulationSpec),
    File(PathBuf),
}

impl PopulationSource {
    pub fn build(&self) -> Result<Population> {
        match self {
            PopulationSource::Spec(spec) => generate_population(spec),
            PopulationSource::File(path) => load_population(path),
        }
    }
}

fn aux_model(ini: &Ini, section: &str, prefix: &str) -> Result<AuxModel> {
    let base = AuxModel::copy_of_target();
    let key = |k: &str| format!("{prefix}.{k}");
    Ok(AuxModel {
        keep: ini.parsed(section, &key("keep"))?.unwrap_or(base.keep),
        extra_per_cluster: ini.parsed(section, &key("extra_per_cluster"))?.unwrap_or(base.extra_per_cluster),
        background_clusters: ini.parsed(section, &key("background_clusters"))?.unwrap_or(base.background_clusters),
        background_points: ini.parsed(section, &key("background_points"))?.unwrap_or(base.background_points),
        background_dispersion: ini
            .parsed(section, &key("background_dispersion"))?
            .unwrap_or(base.background_dispersion),
    })
}

/// Generator parameters from a `[population]` section.
pub fn population_spec(ini: &Ini) -> Result<PopulationSpec> {
    let s = "population";
    Ok(PopulationSpec {
        grid_side: ini.parsed(s, "grid_side")?.unwrap_or(20),
        psus: ini.parsed(s, "psus")?.unwrap_or(4),
        cluster_rate: ini.required(s, "cluster_rate")?,
        points_per_cluster: ini.required(s, "points_per_cluster")?,
        dispersion: ini.required(s, "dispersion")?,
        x: aux_model(ini, s, "x")?,
        z: aux_model(ini, s, "z")?,
        seed: ini.required(s, "seed")?,
    })
}

/// Resolves `[population]`: `preset = name`, `file = path` or inline generator keys.
pub fn population_source(ini: &Ini, base_dir: Option<&Path>) -> Result<PopulationSource> {
    if !ini.has_section("population") {
        return Err(Error::Config("missing [population] section".into()));
    }
    if let Some(name) = ini.get("population", "preset") {
        let text = preset(name).ok_or_else(|| Error::Config(format!("unknown population preset `{name}`")))?;
        let inner = Ini::parse(text)?;
        let spec = population_spec(&inner)?;
        inner.finish()?;
        return Ok(PopulationSource::Spec(spec));
    }
    if let Some(file) = ini.get("population", "file") {
        let path = base_dir.map_or_else(|| PathBuf::from(file), |d| d.join(file));
        return Ok(PopulationSource::File(path));
    }
    population_spec(ini).map(PopulationSource::Spec)
}

/// A complete experiment scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub population: PopulationSource,
    pub target: Variable,
    pub aux: Variable,
    pub request: PlanRequest,
    pub estimators: Vec<EstimatorId>,
    pub reference: EstimatorId,
    pub replicates: usize,
    pub seed: u64,
    pub oracle_outer: usize,
    pub max_error_rate: f64,
}

fn list<T: FromStr<Err = Error>>(value: &str) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|v| !v.is_empty()).map(T::from_str).collect()
}

impl Scenario {
    pub fn from_ini(ini: &Ini, base_dir: Option<&Path>) -> Result<Self> {
        let population = population_source(ini, base_dir)?;
        let target: Variable = ini.parsed("scenario", "target")?.unwrap_or(Variable::Y);
        let aux: Variable = ini.required("scenario", "aux")?;
        let condition = match ini.get("design", "condition") {
            Some(v) => v.parse()?,
            None => Condition::on(aux),
        };
        let atsd = AtsdParams {
            m: ini.required("design", "m")?,
            n1h: ini.required("design", "n1h")?,
            n2h1: ini.required("design", "n2h1")?,
            d: ini.required("design", "d")?,
            condition,
        };
        let ats_condition = match ini.get("design", "ats_condition") {
            Some(v) => v.parse()?,
            None => Condition::on(target),
        };
        let request = PlanRequest {
            cost: CostSpec::new(ini.required("cost", "c_aux")?, ini.required("cost", "c_tar")?)?,
            atsd,
            ats_d: ini.required("design", "ats_d")?,
            ats_condition,
            ats_n1: ini.parsed("design", "ats_n1")?,
        };
        let estimators = match ini.get("experiment", "estimators") {
            Some(v) => list(v)?,
            None => EstimatorId::DEFAULT.to_vec(),
        };
        let reference = match ini.get("experiment", "reference") {
            Some(v) => v.parse()?,
            None => EstimatorId::YbarS,
        };
        let scenario = Scenario {
            population,
            target,
            aux,
            request,
            estimators,
            reference,
            replicates: ini.parsed("experiment", "replicates")?.unwrap_or(10_000),
            seed: ini.required("experiment", "seed")?,
            oracle_outer: ini.parsed("experiment", "oracle_outer")?.unwrap_or(2_000),
            max_error_rate: ini.parsed("experiment", "max_error_rate")?.unwrap_or(0.01),
        };
        ini.finish()?;
        Ok(scenario)
    }

    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        Self::from_ini(&Ini::parse(text)?, base_dir)
    }

    pub fn experiment_config(
        &self,
        plan: crate::cost::EffortPlan,
        threads: usize,
        keep_replicates: bool,
    ) -> ExperimentConfig {
        ExperimentConfig {
            target: self.target,
            aux: self.aux,
            plan,
            estimators: self.estimators.clone(),
            reference: self.reference,
            replicates: self.replicates,
            master_seed: self.seed,
            threads,
            oracle_outer: self.oracle_outer,
            max_error_rate: self.max_error_rate,
            keep_replicates,
        }
    }

    /// Fully resolved configuration; parsing it back gives an equal scenario.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        out.push_str("[population]\n");
        match &self.population {
            PopulationSource::Spec(spec) => out.push_str(&render_spec(spec)),
            PopulationSource::File(path) => {
                let _ = writeln!(out, "file = {}", path.display());
            }
        }
        let r = &self.request;
        let _ = write!(
            out,
            "\n[scenario]\ntarget = {}\naux = {}\n\n[design]\nm = {}\nn1h = {}\nn2h1 = {}\nd = {}\ncondition = {}\nats_d = {}\nats_condition = {}\n",
            self.target, self.aux, r.atsd.m, r.atsd.n1h, r.atsd.n2h1, r.atsd.d, r.atsd.condition, r.ats_d, r.ats_condition
        );
        if let Some(n1) = r.ats_n1 {
            let _ = writeln!(out, "ats_n1 = {n1}");
        }
        let estimators: Vec<&str> = self.estimators.iter().map(|e| e.label()).collect();
        let _ = write!(
            out,
            "\n[cost]\nc_aux = {:?}\nc_tar = {:?}\n\n[experiment]\nreplicates = {}\nseed = {}\nestimators = {}\nreference = {}\noracle_outer = {}\nmax_error_rate = {:?}\n",
            r.cost.c_aux,
            r.cost.c_tar,
            self.replicates,
            self.seed,
            estimators.join(", "),
            self.reference.label(),
            self.oracle_outer,
            self.max_error_rate
        );
        out
    }
}

/// `[population]` body for a generator spec; floats use round-trip formatting.
pub fn render_spec(spec: &PopulationSpec) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "grid_side = {}", spec.grid_side);
    let _ = writeln!(out, "psus = {}", spec.psus);
    let _ = writeln!(out, "cluster_rate = {:?}", spec.cluster_rate);
    let _ = writeln!(out, "points_per_cluster = {:?}", spec.points_per_cluster);
    let _ = writeln!(out, "dispersion = {:?}", spec.dispersion);
    for (name, m) in [("x", &spec.x), ("z", &spec.z)] {
        let _ = writeln!(out, "{name}.keep = {:?}", m.keep);
        let _ = writeln!(out, "{name}.extra_per_cluster = {:?}", m.extra_per_cluster);
        let _ = writeln!(out, "{name}.background_clusters = {:?}", m.background_clusters);
        let _ = writeln!(out, "{name}.background_points = {:?}", m.background_points);
        let _ = writeln!(out, "{name}.background_dispersion = {:?}", m.background_dispersion);
    }
    let _ = writeln!(out, "seed = {}", spec.seed);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_sections_and_duplicates() {
        let ini = Ini::parse("# head\n[a]\nk = 1 # trailing\nurl = x#y\n\n[b]\nk=2\n").unwrap();
        assert_eq!(ini.get("a", "k"), Some("1"));
        assert_eq!(ini.get("a", "url"), Some("x#y"));
        assert_eq!(ini.get("b", "k"), Some("2"));
        ini.finish().unwrap();
        assert!(Ini::parse("[a]\nk = 1\nk = 2\n").is_err());
        assert!(Ini::parse("[a\n").is_err());
        assert!(Ini::parse("[a]\njust words\n").is_err());
    }

    #[test]
    fn unknown_keys_are_reported() {
        let ini = Ini::parse("[a]\nk = 1\ntypo = 2\n").unwrap();
        ini.get("a", "k");
        let err = ini.finish().unwrap_err().to_string();
        assert!(err.contains("typo"), "{err}");
    }

    #[test]
    fn every_scenario_preset_parses_and_round_trips() {
        for name in ["table2", "table3", "table4"] {
            let scenario = Scenario::parse(preset(name).unwrap(), None).unwrap();
            let again = Scenario::parse(&scenario.to_ini(), None).unwrap();
            assert_eq!(scenario, again, "{name}");
        }
        for name in ["population1", "population2"] {
            let ini = Ini::parse(preset(name).unwrap()).unwrap();
            let spec = population_spec(&ini).unwrap();
            ini.finish().unwrap();
            let again = Ini::parse(&format!("[population]\n{}", render_spec(&spec))).unwrap();
            assert_eq!(population_spec(&again).unwrap(), spec);
        }
    }
}
