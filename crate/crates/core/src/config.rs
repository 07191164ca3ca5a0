//! Flat experiment configuration: a TOML file of `key = value` pairs, every
//! key overridable from the command line by a flag of the same name.
//!
//! Keys are kebab-case. Unknown keys are rejected; keys without a default
//! (such as `eps` for a simulation) are reported by name when missing.

use crate::error::{Error, Result};
use crate::kernel::CutoffKernel;
use crate::noise::{MollifierProfile, SpaceTimeLattice};
use crate::renorm::{CubicCoefficients, ZeroMode};
use crate::solver::InitialData;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct Config {
    // global
    pub seed: u64,
    /// Worker threads, 0 for all cores.
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Relative quadrature tolerance.
    pub tolerance: f64,

    // model: preset coefficients, individually overridable
    pub preset: Preset,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub beta3: Option<f64>,
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub gamma3: Option<f64>,
    pub gamma4: Option<f64>,
    pub a1: Option<f64>,
    pub a2: Option<f64>,

    // lattice
    pub d: usize,
    pub n: usize,
    pub side: f64,
    /// Defaults to the largest power of two `<= eps_min^2 / 4`.
    pub dt: Option<f64>,
    pub t_end: f64,

    // noise and renormalisation
    pub eps: Option<f64>,
    pub profile: MollifierProfile,
    pub renorm: bool,
    /// Horizon `T` of the cutoff `chi` in `Q`.
    pub horizon: f64,
    /// Time cut of the continuum constants; defaults to `2 horizon`.
    pub t_cut: Option<f64>,
    pub c2_resolution: usize,

    // constants
    pub eps_list: Option<Vec<f64>>,
    pub modes: Vec<String>,

    // kernel-verify
    pub n_max: u32,
    pub k_degree: u32,
    pub ell_degree: u32,
    pub samples: usize,
    pub support_samples: usize,
    pub corrupt_shift: bool,

    // simulate
    pub init: InitKind,
    pub init_u: f64,
    pub init_v: f64,
    pub init_mode: usize,
    pub blowup_threshold: f64,
    pub snapshot_every: usize,
    pub dump_fields: bool,

    // converge
    pub eps_halvings: usize,
    pub seeds: usize,
    /// Heat-smoothing time of the auxiliary negative-norm distance.
    pub smoothing: f64,

    // objects
    pub realisations: usize,
    pub stride: usize,
    pub zero_mode: ZeroMode,
}

/// Every configuration key, in declaration order.
pub const KEYS: &[&str] = &[
    "seed", "workers", "out-dir", "tolerance",
    "preset", "alpha1", "alpha2", "beta1", "beta2", "beta3", "gamma1", "gamma2", "gamma3", "gamma4", "a1", "a2",
    "d", "n", "side", "dt", "t-end",
    "eps", "profile", "renorm", "horizon", "t-cut", "c2-resolution",
    "eps-list", "modes",
    "n-max", "k-degree", "ell-degree", "samples", "support-samples", "corrupt-shift",
    "init", "init-u", "init-v", "init-mode", "blowup-threshold", "snapshot-every", "dump-fields",
    "eps-halvings", "seeds", "smoothing",
    "realisations", "stride", "zero-mode",
];

/// Keys whose command-line value is a comma-separated list.
pub const LIST_KEYS: &[&str] = &["eps-list", "modes"];

/// Turn a command-line value into the TOML value of `key`: lists split on
/// commas, anything that does not parse as a TOML literal is a string.
pub fn parse_override(key: &str, raw: &str) -> Result<toml::Value> {
    let literal = |s: &str| -> toml::Value {
        format!("v = {s}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(s.to_string()))
    };
    if !KEYS.contains(&key) {
        return Err(Error::Config(format!("unknown key `{key}`")));
    }
    Ok(if LIST_KEYS.contains(&key) {
        toml::Value::Array(raw.split(',').map(|s| literal(s.trim())).collect())
    } else {
        literal(raw.trim())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// `F = u + v - u^3`, `dv/dt = u - v`.
    Standard,
    /// All coefficients zero unless set.
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    Zero,
    Constant,
    Cosine,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 0,
            out_dir: PathBuf::from("out"),
            tolerance: 1e-8,
            preset: Preset::Standard,
            alpha1: None,
            alpha2: None,
            beta1: None,
            beta2: None,
            beta3: None,
            gamma1: None,
            gamma2: None,
            gamma3: None,
            gamma4: None,
            a1: None,
            a2: None,
            d: 3,
            n: 32,
            side: 1.0,
            dt: None,
            t_end: 0.25,
            eps: None,
            profile: MollifierProfile::Radial,
            renorm: true,
            horizon: 1.0,
            t_cut: None,
            c2_resolution: 1,
            eps_list: None,
            modes: vec!["continuum".into(), "lattice".into()],
            n_max: 5,
            k_degree: 2,
            ell_degree: 2,
            samples: 16,
            support_samples: 2000,
            corrupt_shift: false,
            init: InitKind::Zero,
            init_u: 0.0,
            init_v: 0.0,
            init_mode: 1,
            blowup_threshold: 1e6,
            snapshot_every: 0,
            dump_fields: false,
            eps_halvings: 3,
            seeds: 8,
            smoothing: 1e-2,
            realisations: 64,
            stride: 4,
            zero_mode: ZeroMode::Exclude,
        }
    }
}

impl Config {
    /// Read `path` (if any) and apply `overrides` on top, key by key.
    pub fn load(path: Option<&Path>, overrides: toml::Table) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        table.extend(overrides);
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        let positive = [
            ("side", self.side),
            ("t-end", self.t_end),
            ("horizon", self.horizon),
            ("tolerance", self.tolerance),
            ("blowup-threshold", self.blowup_threshold),
            ("smoothing", self.smoothing),
        ];
        for (k, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("`{k}` must be positive, got {v}")));
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) {
                return Err(Error::Config(format!("`dt` must be positive, got {dt}")));
            }
        }
        Ok(())
    }

    /// Canonical TOML of the resolved configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    /// SHA-256 of the canonical TOML.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn require_eps(&self) -> Result<f64> {
        let eps = self.eps.ok_or_else(|| Error::MissingKey("eps".into()))?;
        if !(eps > 0.0) {
            return Err(Error::Config(format!("`eps` must be positive, got {eps}")));
        }
        Ok(eps)
    }

    pub fn coefficients(&self) -> CubicCoefficients {
        let mut c = match self.preset {
            Preset::Standard => CubicCoefficients::standard_fhn(),
            Preset::Custom => CubicCoefficients::zero(),
        };
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.alpha1, self.alpha1);
        set(&mut c.alpha2, self.alpha2);
        set(&mut c.beta1, self.beta1);
        set(&mut c.beta2, self.beta2);
        set(&mut c.beta3, self.beta3);
        set(&mut c.gamma1, self.gamma1);
        set(&mut c.gamma2, self.gamma2);
        set(&mut c.gamma3, self.gamma3);
        set(&mut c.gamma4, self.gamma4);
        set(&mut c.a1, self.a1);
        set(&mut c.a2, self.a2);
        c
    }

    pub fn cutoff_kernel(&self) -> Result<CutoffKernel> {
        let c = self.coefficients();
        CutoffKernel::new(c.a1, c.a2, self.horizon)
    }

    pub fn t_cut(&self) -> f64 {
        self.t_cut.unwrap_or(2.0 * self.horizon)
    }

    /// Lattice resolving every `eps` down to `eps_min`.
    pub fn lattice(&self, eps_min: f64) -> Result<SpaceTimeLattice> {
        let dt = match self.dt {
            Some(dt) => dt,
            None => 2f64.powi((0.25 * eps_min * eps_min).log2().floor() as i32),
        };
        let steps = (self.t_end / dt).round() as usize;
        if steps == 0 {
            return Err(Error::Config(format!("t-end = {} is shorter than dt = {dt}", self.t_end)));
        }
        SpaceTimeLattice::new(self.d, self.n, self.side, dt, steps)
    }

    pub fn initial_data(&self) -> InitialData {
        match self.init {
            InitKind::Zero => InitialData::Zero,
            InitKind::Constant => InitialData::Constant {
                u: self.init_u,
                v: self.init_v,
            },
            InitKind::Cosine => InitialData::Cosine {
                mode: self.init_mode,
                u_amp: self.init_u,
                v_amp: self.init_v,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> toml::Table {
        text.parse().unwrap()
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        let back = Config::from_table(table(&cfg.to_toml())).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "eps = 0.25\nn = 16\nseed = 3\n").unwrap();
        let cfg = Config::load(Some(&path), table("n = 8")).unwrap();
        assert_eq!((cfg.eps, cfg.n, cfg.seed), (Some(0.25), 8, 3));
        let err = Config::from_table(table("epsilon = 0.1")).unwrap_err();
        assert!(err.to_string().contains("epsilon"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn keys_cover_every_field() {
        let mut t = table(&Config::default().to_toml());
        for k in ["alpha1", "alpha2", "beta1", "beta2", "beta3", "gamma1", "gamma2", "gamma3", "gamma4", "a1", "a2"] {
            t.insert(k.into(), toml::Value::Float(0.0));
        }
        t.insert("dt".into(), toml::Value::Float(0.01));
        t.insert("eps".into(), toml::Value::Float(0.1));
        t.insert("t-cut".into(), toml::Value::Float(2.0));
        t.insert("eps-list".into(), toml::Value::Array(vec![toml::Value::Float(0.1)]));
        let mut keys: Vec<&str> = t.keys().map(|k| k.as_str()).collect();
        keys.sort();
        let mut expected = KEYS.to_vec();
        expected.sort();
        assert_eq!(keys, expected);
        assert!(Config::from_table(t).is_ok());
    }

    #[test]
    fn override_values() {
        assert_eq!(parse_override("n", "16").unwrap(), toml::Value::Integer(16));
        assert_eq!(parse_override("renorm", "false").unwrap(), toml::Value::Boolean(false));
        assert_eq!(parse_override("profile", "tensor").unwrap(), toml::Value::String("tensor".into()));
        assert_eq!(
            parse_override("eps-list", "0.5, 0.25").unwrap(),
            toml::Value::Array(vec![toml::Value::Float(0.5), toml::Value::Float(0.25)])
        );
        assert_eq!(
            parse_override("modes", "lattice").unwrap(),
            toml::Value::Array(vec![toml::Value::String("lattice".into())])
        );
        assert!(parse_override("bogus", "1").is_err());
    }

    #[test]
    fn missing_eps_is_named() {
        let err = Config::default().require_eps().unwrap_err();
        assert!(matches!(err, Error::MissingKey(ref k) if k == "eps"));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn coefficients_and_lattice() {
        let cfg = Config::from_table(table("preset = \"custom\"\ngamma1 = -2.0\na2 = -0.5")).unwrap();
        let c = cfg.coefficients();
        assert_eq!((c.gamma1, c.a2, c.alpha1), (-2.0, -0.5, 0.0));
        assert_eq!(Config::default().coefficients(), CubicCoefficients::standard_fhn());
        let lat = Config::default().lattice(0.0625).unwrap();
        assert_eq!(lat.dt, 1.0 / 1024.0);
        assert_eq!(lat.n_steps, 256);
        lat.check_resolves(0.0625).unwrap();
    }
}
