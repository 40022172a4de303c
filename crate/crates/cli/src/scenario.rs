//! Turn a parsed configuration into concrete objects: potentials, dressed
//! families, and Weyl-data providers (computed or file-backed).

use std::path::Path;
use std::sync::Arc;

use zcf_core::gbdt::{mkdv_soliton, SolitonFamily};
use zcf_core::linalg::{c, zeros};
use zcf_core::mkdv_weyl::{AnalyticConstV, MkdvPotential, WeylProvider};
use zcf_core::pencil::{Coeff, Domain2D};
use zcf_core::{C64, CMat};

use crate::config::{CliError, CliResult, PotentialSpec, RunConfig, WeylTableSpec};

pub fn parse_cmat(rows: &[Vec<[f64; 2]>], what: &str) -> CliResult<CMat> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(CliError::config(format!("{what} must be a non-empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::config(format!("{what} has rows of unequal length")));
    }
    let mut m = zeros(rows.len(), ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, entry) in row.iter().enumerate() {
            m[(i, j)] = c(entry[0], entry[1]);
        }
    }
    Ok(m)
}

pub fn domain_of(cfg: &RunConfig) -> CliResult<Domain2D> {
    let d = cfg.domain;
    Ok(Domain2D::new(d.x_max, d.t_max, d.nx, d.nt)?)
}

/// Build the potential described by the configuration; dressed scenarios
/// also return the family so later stages can reuse its evaluator.
pub fn build_potential(cfg: &RunConfig) -> CliResult<(MkdvPotential, Option<SolitonFamily>)> {
    match &cfg.potential {
        PotentialSpec::Zero { p } => {
            if *p == 0 {
                return Err(CliError::config("block size p must be at least 1"));
            }
            Ok((MkdvPotential::zero(*p), None))
        }
        PotentialSpec::Constant { value } => {
            Ok((MkdvPotential::constant_scalar(c(value[0], value[1])), None))
        }
        PotentialSpec::GbdtSoliton { a1, pi1 } => {
            let a1 = parse_cmat(a1, "potential.a1")?;
            let pi1 = parse_cmat(pi1, "potential.pi1")?;
            if a1.nrows() != a1.ncols() {
                return Err(CliError::config("potential.a1 must be square"));
            }
            if pi1.nrows() != a1.nrows() || pi1.ncols() % 2 != 0 || pi1.ncols() < 2 {
                return Err(CliError::config(
                    "potential.pi1 must have as many rows as a1 and an even number of columns",
                ));
            }
            let p = pi1.ncols() / 2;
            let fam = mkdv_soliton(a1, pi1, p, domain_of(cfg)?)?;
            let pot = fam.potential();
            Ok((pot, Some(fam)))
        }
        PotentialSpec::Tabulated { path, bound } => {
            if !(*bound > 0.0) {
                return Err(CliError::config("potential.bound must be positive"));
            }
            let table = VTable::load(path)?;
            let closure: Coeff = Arc::new(move |x, t| CMat::from_element(1, 1, table.value(x, t)));
            Ok((MkdvPotential::from_v(1, closure, *bound, 1e-3), None))
        }
    }
}

/// Scalar potential samples on a rectilinear grid with bilinear
/// interpolation; queries outside the grid clamp to its edge.
struct VTable {
    xs: Vec<f64>,
    ts: Vec<f64>,
    vals: Vec<C64>,
}

impl VTable {
    fn load(path: &Path) -> CliResult<VTable> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut points = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Option<Vec<f64>> =
                fields.iter().map(|f| f.parse::<f64>().ok()).collect();
            match parsed {
                Some(nums) if nums.len() == 4 => {
                    points.push((nums[0], nums[1], c(nums[2], nums[3])));
                }
                // A single leading non-numeric line is taken as a header.
                _ if idx == 0 => continue,
                _ => {
                    return Err(CliError::config(format!(
                        "{}:{}: expected 4 comma-separated numbers",
                        path.display(),
                        idx + 1
                    )));
                }
            }
        }
        let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let mut ts: Vec<f64> = points.iter().map(|p| p.1).collect();
        ts.sort_by(f64::total_cmp);
        ts.dedup();
        if xs.len() < 2 || ts.len() < 2 {
            return Err(CliError::config(format!(
                "{}: need at least a 2 x 2 grid of samples",
                path.display()
            )));
        }
        if points.len() != xs.len() * ts.len() {
            return Err(CliError::config(format!(
                "{}: {} samples do not fill the {} x {} grid",
                path.display(),
                points.len(),
                xs.len(),
                ts.len()
            )));
        }
        let mut vals = vec![c(f64::NAN, 0.0); xs.len() * ts.len()];
        for (x, t, v) in points {
            let i = xs.binary_search_by(|a| a.total_cmp(&x)).expect("x is a grid value");
            let j = ts.binary_search_by(|a| a.total_cmp(&t)).expect("t is a grid value");
            vals[i * ts.len() + j] = v;
        }
        if vals.iter().any(|v| v.re.is_nan()) {
            return Err(CliError::config(format!(
                "{}: duplicated sample leaves another grid point unset",
                path.display()
            )));
        }
        Ok(VTable { xs, ts, vals })
    }

    fn value(&self, x: f64, t: f64) -> C64 {
        let (i, fx) = locate(&self.xs, x);
        let (j, ft) = locate(&self.ts, t);
        let nt = self.ts.len();
        let v00 = self.vals[i * nt + j];
        let v01 = self.vals[i * nt + j + 1];
        let v10 = self.vals[(i + 1) * nt + j];
        let v11 = self.vals[(i + 1) * nt + j + 1];
        let a = v00 * (1.0 - fx) + v10 * fx;
        let b = v01 * (1.0 - fx) + v11 * fx;
        a * (1.0 - ft) + b * ft
    }
}

/// Cell index and fractional offset of `x` in the sorted grid, clamped to
/// the covered range.
fn locate(grid: &[f64], x: f64) -> (usize, f64) {
    let last = grid.len() - 1;
    if x <= grid[0] {
        return (0, 0.0);
    }
    if x >= grid[last] {
        return (last - 1, 1.0);
    }
    let hi = grid.partition_point(|&g| g <= x).min(last);
    let lo = hi - 1;
    let f = (x - grid[lo]) / (grid[hi] - grid[lo]);
    (lo, f)
}

/// Trivial data source of the free system: phi vanishes identically.
pub struct ZeroWeyl {
    pub p: usize,
}

impl WeylProvider for ZeroWeyl {
    fn p(&self) -> usize {
        self.p
    }

    fn margin(&self) -> f64 {
        0.0
    }

    fn phi(&self, _t: f64, _z: C64) -> zcf_core::Result<CMat> {
        Ok(zeros(self.p, self.p))
    }
}

/// Weyl values read from a file: samples along one horizontal contour,
/// linearly interpolated in Re z.
pub struct WeylTable {
    re: Vec<f64>,
    phi: Vec<C64>,
    im0: f64,
    margin: f64,
}

impl WeylTable {
    pub fn load(spec: &WeylTableSpec) -> CliResult<WeylTable> {
        if !(spec.margin >= 0.0) {
            return Err(CliError::config("weyl_table.margin must be nonnegative"));
        }
        let text = std::fs::read_to_string(&spec.path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", spec.path.display())))?;
        let mut rows: Vec<(f64, f64, C64)> = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Option<Vec<f64>> =
                fields.iter().map(|f| f.parse::<f64>().ok()).collect();
            match parsed {
                Some(nums) if nums.len() == 4 => rows.push((nums[0], nums[1], c(nums[2], nums[3]))),
                _ if idx == 0 => continue,
                _ => {
                    return Err(CliError::config(format!(
                        "{}:{}: expected 4 comma-separated numbers",
                        spec.path.display(),
                        idx + 1
                    )));
                }
            }
        }
        if rows.len() < 2 {
            return Err(CliError::config(format!(
                "{}: need at least two Weyl samples",
                spec.path.display()
            )));
        }
        let im0 = rows[0].1;
        if rows.iter().any(|r| (r.1 - im0).abs() > 1e-9 * im0.abs().max(1.0)) {
            return Err(CliError::config(format!(
                "{}: all samples must share one contour height Im z",
                spec.path.display()
            )));
        }
        if !(im0 < 0.0) {
            return Err(CliError::config(format!(
                "{}: the contour must lie in the open lower half plane",
                spec.path.display()
            )));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        if rows.windows(2).any(|w| w[1].0 - w[0].0 <= 0.0) {
            return Err(CliError::config(format!(
                "{}: duplicate Re z samples",
                spec.path.display()
            )));
        }
        Ok(WeylTable {
            re: rows.iter().map(|r| r.0).collect(),
            phi: rows.iter().map(|r| r.2).collect(),
            im0,
            margin: spec.margin,
        })
    }

    /// The transform contour is z = xi + i eta with phi evaluated at z/2,
    /// so a table along Im w = im0 pins eta to 2 im0.
    pub fn forced_eta(&self) -> f64 {
        2.0 * self.im0
    }

    /// Largest truncation radius the table can feed, including the
    /// radius-doubling confirmation pass.
    pub fn max_a_trunc(&self) -> f64 {
        let last = self.re.len() - 1;
        self.re[last].min(-self.re[0]).max(0.0)
    }
}

impl WeylProvider for WeylTable {
    fn p(&self) -> usize {
        1
    }

    fn margin(&self) -> f64 {
        self.margin
    }

    fn phi(&self, _t: f64, z: C64) -> zcf_core::Result<CMat> {
        if (z.im - self.im0).abs() > 1e-9 * self.im0.abs().max(1.0) {
            return Err(zcf_core::Error::invalid(format!(
                "Weyl table holds the contour Im z = {}, not {}",
                self.im0, z.im
            )));
        }
        let last = self.re.len() - 1;
        if z.re < self.re[0] || z.re > self.re[last] {
            return Err(zcf_core::Error::invalid(format!(
                "Re z = {} outside the tabulated range [{}, {}]",
                z.re, self.re[0], self.re[last]
            )));
        }
        let (i, f) = locate(&self.re, z.re);
        Ok(CMat::from_element(1, 1, self.phi[i] * (1.0 - f) + self.phi[i + 1] * f))
    }
}

/// Boundary spectral data for the inverse problem: a file if configured,
/// otherwise the closed-form or dressed provider matching the potential.
/// Returns the provider together with a forced contour height, if any.
pub fn weyl_source(
    cfg: &RunConfig,
    fam: Option<&SolitonFamily>,
) -> CliResult<(Box<dyn WeylProvider>, Option<f64>)> {
    if let Some(spec) = &cfg.invert.weyl_table {
        let table = WeylTable::load(spec)?;
        if cfg.invert.a_trunc > table.max_a_trunc() + 1e-9 {
            return Err(CliError::config(format!(
                "a_trunc = {} exceeds the table coverage {:.3} (radius doubling included)",
                cfg.invert.a_trunc,
                table.max_a_trunc()
            )));
        }
        let eta = table.forced_eta();
        return Ok((Box::new(table), Some(eta)));
    }
    match &cfg.potential {
        PotentialSpec::Zero { p } => Ok((Box::new(ZeroWeyl { p: *p }), None)),
        PotentialSpec::Constant { value } => {
            Ok((Box::new(AnalyticConstV { c: c(value[0], value[1]) }), None))
        }
        PotentialSpec::GbdtSoliton { .. } => {
            let fam = fam.ok_or_else(|| CliError::config("dressed family missing"))?;
            Ok((Box::new(fam.weyl()), None))
        }
        PotentialSpec::Tabulated { .. } => Err(CliError::config(
            "a tabulated potential carries no boundary spectral data; supply invert.weyl_table",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_table_reproduces_a_product_profile() {
        let dir = std::env::temp_dir().join("zcf-vtable-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("v.csv");
        let mut text = String::from("x,t,Re v,Im v\n");
        for i in 0..=4 {
            for j in 0..=2 {
                let (x, t) = (0.5 * i as f64, 0.5 * j as f64);
                text.push_str(&format!("{x},{t},{},0.0\n", x * t));
            }
        }
        std::fs::write(&path, text).unwrap();
        let table = VTable::load(&path).unwrap();
        // The product x t is exactly bilinear, so interpolation is exact.
        assert!((table.value(0.7, 0.3).re - 0.21).abs() < 1e-12);
        assert!((table.value(1.95, 0.99).re - 1.9305).abs() < 1e-12);
        // Clamped outside the covered rectangle.
        assert!((table.value(5.0, 2.0).re - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weyl_table_interpolates_and_guards_its_contour() {
        let dir = std::env::temp_dir().join("zcf-wtable-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("w.csv");
        let mut text = String::from("Re z,Im z,Re phi,Im phi\n");
        for k in -40..=40 {
            let re = 0.25 * k as f64;
            text.push_str(&format!("{re},-0.75,{},{}\n", re, -re));
        }
        std::fs::write(&path, text).unwrap();
        let spec = WeylTableSpec { path, margin: 0.3 };
        let table = WeylTable::load(&spec).unwrap();
        assert!((table.forced_eta() + 1.5).abs() < 1e-12);
        let v = table.phi(0.0, c(1.3, -0.75)).unwrap()[(0, 0)];
        assert!((v - c(1.3, -1.3)).norm() < 1e-12);
        assert!(table.phi(0.0, c(0.1, -0.8)).is_err());
        assert!(table.phi(0.0, c(30.0, -0.75)).is_err());
    }
}
