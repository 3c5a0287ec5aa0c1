//! Parameter records shared by every engine.
//!
//! Battery qubits occupy indices `0..n_b`, charger qubits `n_b..n_b + n_c`.

use serde::{Deserialize, Serialize};

use crate::collective::CollectiveState;
use crate::error::{invalid, Result};
use crate::sector::{SectorBasis, SectorState};

/// Uniform-coupling model: one onsite potential and one intra-part coupling
/// per part, plus a single battery-charger coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub n_b: u64,
    pub n_c: u64,
    pub v_b: f64,
    pub v_c: f64,
    pub j_b: f64,
    pub j_c: f64,
    pub j_bc: f64,
}

impl SystemSpec {
    pub fn new(n_b: u64, n_c: u64, v_b: f64, v_c: f64, j_b: f64, j_c: f64, j_bc: f64) -> Result<Self> {
        let spec = Self { n_b, n_c, v_b, v_c, j_b, j_c, j_bc };
        spec.validate()?;
        Ok(spec)
    }

    /// `V_B = 1`, `V_C = 1 - delta_v`, all couplings equal to `j`.
    pub fn homogeneous(n_b: u64, n_c: u64, j: f64, delta_v: f64) -> Result<Self> {
        Self::new(n_b, n_c, 1.0, 1.0 - delta_v, j, j, j)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_b == 0 {
            return Err(invalid("n_b", "must be at least 1"));
        }
        if self.n_c == 0 {
            return Err(invalid("n_c", "must be at least 1"));
        }
        let reals = [("v_b", self.v_b), ("v_c", self.v_c), ("j_b", self.j_b), ("j_c", self.j_c), ("j_bc", self.j_bc)];
        for (name, x) in reals {
            if !x.is_finite() {
                return Err(invalid(name, format!("{x} is not finite")));
            }
        }
        Ok(())
    }

    pub fn delta_v(&self) -> f64 {
        self.v_b - self.v_c
    }

    /// Largest number of excitations the battery can take, `min(N_B, N_C)`.
    pub fn k_max(&self) -> u64 {
        self.n_b.min(self.n_c)
    }

    pub fn n_total(&self) -> u64 {
        self.n_b + self.n_c
    }

    /// Effective bosonic frequency `J_B N_B + J_C N_C + delta V`.
    pub fn omega(&self) -> f64 {
        self.j_b * self.n_b as f64 + self.j_c * self.n_c as f64 + self.delta_v()
    }

    /// Effective pair-creation coupling `J_BC sqrt(N_B N_C)`.
    pub fn g(&self) -> f64 {
        self.j_bc * (self.n_b as f64 * self.n_c as f64).sqrt()
    }
}

/// Per-site potentials and per-pair couplings of the general (disordered) model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTable {
    n_b: usize,
    v: Vec<f64>,
    /// Row-major `n x n`, symmetric with zero diagonal.
    j: Vec<f64>,
}

impl CouplingTable {
    /// Builds a table from explicit data. `j` is row-major `n x n`.
    pub fn new(n_b: usize, v: Vec<f64>, j: Vec<f64>) -> Result<Self> {
        let n = v.len();
        if n_b == 0 || n_b >= n {
            return Err(invalid("n_b", format!("battery size {n_b} must be in 1..{n}")));
        }
        if j.len() != n * n {
            return Err(invalid("j", format!("expected {} entries, got {}", n * n, j.len())));
        }
        for m in 0..n {
            if j[m * n + m] != 0.0 {
                return Err(invalid("j", format!("diagonal entry ({m},{m}) is nonzero")));
            }
            for k in 0..m {
                if j[m * n + k] != j[k * n + m] {
                    return Err(invalid("j", format!("entry ({m},{k}) breaks symmetry")));
                }
            }
        }
        if v.iter().chain(j.iter()).any(|x| !x.is_finite()) {
            return Err(invalid("j", "non-finite entry"));
        }
        Ok(Self { n_b, v, j })
    }

    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        spec.validate()?;
        let n_b = spec.n_b as usize;
        let n = spec.n_total() as usize;
        let mut v = vec![spec.v_c; n];
        v[..n_b].fill(spec.v_b);
        let mut j = vec![0.0; n * n];
        for m in 0..n {
            for k in 0..n {
                if m == k {
                    continue;
                }
                j[m * n + k] = match (m < n_b, k < n_b) {
                    (true, true) => spec.j_b,
                    (false, false) => spec.j_c,
                    _ => spec.j_bc,
                };
            }
        }
        Ok(Self { n_b, v, j })
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn n_c(&self) -> usize {
        self.v.len() - self.n_b
    }

    pub fn is_battery(&self, site: usize) -> bool {
        site < self.n_b
    }

    pub fn potential(&self, site: usize) -> f64 {
        self.v[site]
    }

    pub fn potentials(&self) -> &[f64] {
        &self.v
    }

    pub fn coupling(&self, m: usize, n: usize) -> f64 {
        self.j[m * self.n() + n]
    }

    /// `J` by flat row-major index `m * n + k`.
    pub(crate) fn coupling_at(&self, index: usize) -> f64 {
        self.j[index]
    }

    /// Flat `n * n` coupling matrix.
    pub(crate) fn couplings_flat(&self) -> &[f64] {
        &self.j
    }

    /// Sets `J_mn = J_nm = value`. Diagonal entries cannot be set.
    pub fn set_coupling(&mut self, m: usize, n: usize, value: f64) {
        assert!(m != n, "diagonal couplings are fixed at zero");
        let size = self.n();
        self.j[m * size + n] = value;
        self.j[n * size + m] = value;
    }

    /// Returns the equivalent [`SystemSpec`] when every potential and coupling
    /// is uniform within its partition block.
    pub fn as_uniform(&self) -> Option<SystemSpec> {
        let n = self.n();
        let n_b = self.n_b;
        let v_b = self.v[0];
        let v_c = self.v[n_b];
        if self.v[..n_b].iter().any(|&x| x != v_b) || self.v[n_b..].iter().any(|&x| x != v_c) {
            return None;
        }
        let j_bc = self.coupling(0, n_b);
        let j_b = if n_b > 1 { self.coupling(0, 1) } else { 0.0 };
        let j_c = if n - n_b > 1 { self.coupling(n_b, n_b + 1) } else { 0.0 };
        for m in 0..n {
            for k in (m + 1)..n {
                let expected = match (m < n_b, k < n_b) {
                    (true, true) => j_b,
                    (false, false) => j_c,
                    _ => j_bc,
                };
                if self.coupling(m, k) != expected {
                    return None;
                }
            }
        }
        Some(SystemSpec { n_b: n_b as u64, n_c: (n - n_b) as u64, v_b, v_c, j_b, j_c, j_bc })
    }
}

/// One battery-charger pair of the parallel reference battery, replicated
/// `n_pairs` times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub j_pair: f64,
    pub v_b: f64,
    pub v_c: f64,
    pub n_pairs: u64,
}

impl PairSpec {
    pub fn delta_v(&self) -> f64 {
        self.v_b - self.v_c
    }

    /// Rabi frequency `sqrt(4 J_pair^2 + delta V^2)`.
    pub fn omega(&self) -> f64 {
        (4.0 * self.j_pair * self.j_pair + self.delta_v().powi(2)).sqrt()
    }

    /// The pair as a uniform `1 + 1` model.
    pub fn as_system(&self) -> SystemSpec {
        SystemSpec { n_b: 1, n_c: 1, v_b: self.v_b, v_c: self.v_c, j_b: 0.0, j_c: 0.0, j_bc: self.j_pair }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    /// Geometric spacing from `t_min` to `t_max`.
    Logarithmic {
        t_min: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_max: f64,
    pub n_samples: usize,
    pub spacing: Spacing,
}

impl TimeGrid {
    pub fn uniform(t_max: f64, n_samples: usize) -> Result<Self> {
        let grid = Self { t_max, n_samples, spacing: Spacing::Uniform };
        grid.validate()?;
        Ok(grid)
    }

    pub fn logarithmic(t_min: f64, t_max: f64, n_samples: usize) -> Result<Self> {
        let grid = Self { t_max, n_samples, spacing: Spacing::Logarithmic { t_min } };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(invalid("n_samples", "must be positive"));
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(invalid("t_max", format!("{} is not a finite non-negative time", self.t_max)));
        }
        if self.n_samples > 1 && self.t_max == 0.0 {
            return Err(invalid("t_max", "must be positive for more than one sample"));
        }
        if let Spacing::Logarithmic { t_min } = self.spacing {
            if !(t_min > 0.0 && t_min < self.t_max) {
                return Err(invalid("t_min", format!("{t_min} must lie in (0, t_max)")));
            }
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.n_samples;
        if n == 1 {
            return vec![match self.spacing {
                Spacing::Uniform => 0.0,
                Spacing::Logarithmic { .. } => self.t_max,
            }];
        }
        let last = (n - 1) as f64;
        match self.spacing {
            Spacing::Uniform => (0..n).map(|i| self.t_max * i as f64 / last).collect(),
            Spacing::Logarithmic { t_min } => {
                let ratio = (self.t_max / t_min).ln();
                (0..n).map(|i| if i + 1 == n { self.t_max } else { t_min * (ratio * i as f64 / last).exp() }).collect()
            }
        }
    }
}

/// `|k = 0>`: battery empty, charger full.
pub fn make_initial_collective(spec: &SystemSpec) -> CollectiveState {
    CollectiveState::initial(spec)
}

/// Unit amplitude on the configuration with every charger bit set.
pub fn make_initial_sector(table: &CouplingTable) -> Result<SectorState> {
    let basis = SectorBasis::new(table.n(), table.n_c())?;
    Ok(SectorState::charger_full(std::sync::Arc::new(basis), table.n_b()))
}
