//! Extended (output-filtered) system, its partition into unmeasured and measured
//! coordinates, and the design checks run on every candidate output split.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, blkdiag, hcat, vcat, RANK_TOL};
use crate::platoon_model::{measurement_matrices, PlatoonParams, CH_RELVEL};

/// Number of physical coordinates (p, v, a for both cars).
pub const PLANT_STATES: usize = 6;
/// Number of measured channels.
pub const OUTPUTS: usize = 4;

pub const PLANT_COORD_NAMES: [&str; 6] = ["p_lead", "v_lead", "a_lead", "p_fol", "v_fol", "a_fol"];
/// Order in which unit selectors are tried when completing the state transform.
pub const SELECTOR_ORDER: [usize; 6] = [0, 1, 2, 3, 5, 4];
const V_LEAD: usize = 1;

/// Reordering of the four measurement channels and the number `h` of channels
/// that are low-pass filtered and moved into the state equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OutputPartition {
    /// `permutation[k]` is the original channel placed at position k (0-based)
    pub permutation: [usize; 4],
    pub h: usize,
}

impl OutputPartition {
    pub fn validate(&self) -> Result<()> {
        let mut seen = [false; 4];
        for &c in &self.permutation {
            if c >= 4 || seen[c] {
                return Err(Error::InvalidPartition(format!(
                    "permutation {:?} is not a bijection on 0..4",
                    self.permutation
                )));
            }
            seen[c] = true;
        }
        if self.h > OUTPUTS {
            return Err(Error::InvalidPartition(format!("h = {} exceeds {OUTPUTS}", self.h)));
        }
        Ok(())
    }

    pub fn t_y(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(4, 4);
        for (k, &c) in self.permutation.iter().enumerate() {
            t[(k, c)] = 1.0;
        }
        t
    }

    /// Channels left in y1 (not filtered), original indices.
    pub fn y1_channels(&self) -> &[usize] {
        &self.permutation[..OUTPUTS - self.h]
    }

    /// Channels moved to the filter, original indices.
    pub fn y2_channels(&self) -> &[usize] {
        &self.permutation[OUTPUTS - self.h..]
    }

    pub fn relvel_in_y1(&self) -> bool {
        self.y1_channels().contains(&CH_RELVEL)
    }

    /// All 4!·5 candidates.
    pub fn enumerate_all() -> Vec<OutputPartition> {
        let mut perms = Vec::with_capacity(24);
        permutations(&mut [0, 1, 2, 3], 0, &mut perms);
        perms.sort();
        let mut out = Vec::with_capacity(120);
        for h in 0..=OUTPUTS {
            for p in &perms {
                out.push(OutputPartition { permutation: *p, h });
            }
        }
        out
    }

    pub fn label(&self) -> String {
        let order: Vec<String> = self.permutation.iter().map(|c| (c + 1).to_string()).collect();
        format!("[{}] h={}", order.join(" "), self.h)
    }
}

fn permutations(a: &mut [usize; 4], k: usize, out: &mut Vec<[usize; 4]>) {
    if k == a.len() {
        out.push(*a);
        return;
    }
    for i in k..a.len() {
        a.swap(k, i);
        permutations(a, k + 1, out);
        a.swap(k, i);
    }
}

#[derive(Clone, Debug)]
pub struct ExtendedMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub c_off: DVector<f64>,
    pub d: DMatrix<f64>,
    pub h_mat: DMatrix<f64>,
    pub a_f: DMatrix<f64>,
    pub partition: OutputPartition,
    /// offset of the filtered channels (input to the filter through B)
    pub c2: DVector<f64>,
    pub n: usize,
    pub p: usize,
    pub h: usize,
}

/// Builds the extended system for the given output split.
///
/// `a_f_diag` holds the (negative) filter poles, one per filtered channel.
pub fn build_extended(params: &PlatoonParams, part: &OutputPartition, a_f_diag: &[f64]) -> Result<ExtendedMatrices> {
    params.validate()?;
    part.validate()?;
    let h = part.h;
    if a_f_diag.len() != h {
        return Err(Error::InvalidParameter(format!(
            "filter gain has {} entries, expected h = {h}",
            a_f_diag.len()
        )));
    }
    if a_f_diag.iter().any(|x| !(x.is_finite() && *x < 0.0)) {
        return Err(Error::InvalidParameter(
            "filter gain must be strictly negative definite".into(),
        ));
    }
    let tau_hat = params.tau_hat();
    let tau_f = params.follower.tau;
    let mut a_hat = DMatrix::zeros(6, 6);
    for (base, tau) in [(0, tau_hat), (3, tau_f)] {
        a_hat[(base, base + 1)] = 1.0;
        a_hat[(base + 1, base + 2)] = 1.0;
        a_hat[(base + 2, base + 2)] = -1.0 / tau;
    }
    let mut b_hat = DMatrix::zeros(6, 2);
    b_hat[(2, 0)] = 1.0 / tau_hat;
    b_hat[(5, 1)] = 1.0 / tau_f;
    let mut e = DMatrix::zeros(6, 1);
    e[(2, 0)] = 1.0 / tau_hat;
    let f = -&e;

    let (c_raw, c_off_raw) = measurement_matrices(params.leader.length);
    let ty = part.t_y();
    let c_perm = &ty * c_raw;
    let c_off_perm = &ty * c_off_raw;
    let p = OUTPUTS;
    let q = p - h;
    let c1 = c_perm.rows(0, q).into_owned();
    let c2m = c_perm.rows(q, h).into_owned();
    let c1_off = c_off_perm.rows(0, q).into_owned();
    let c2_off = c_off_perm.rows(q, h).into_owned();
    let a_f = linalg::diag(a_f_diag);

    let n = PLANT_STATES + h;
    let a_e = vcat(&hcat(&a_hat, &DMatrix::zeros(6, h)), &hcat(&(-&a_f * &c2m), &a_f));
    let b_e = blkdiag(&b_hat, &(-&a_f));
    let e_e = blkdiag(&e, &(-&a_f));
    let f_e = blkdiag(&f, &(-&a_f));
    let c_e = blkdiag(&c1, &DMatrix::identity(h, h));
    let mut c_off = DVector::zeros(p);
    c_off.rows_mut(0, q).copy_from(&c1_off);
    let d = vcat(&DMatrix::identity(q, q), &DMatrix::zeros(h, q));
    Ok(ExtendedMatrices {
        a: a_e,
        b: b_e,
        e: e_e,
        f: f_e,
        c: c_e,
        c_off,
        h_mat: d.clone(),
        d,
        a_f,
        partition: *part,
        c2: c2_off,
        n,
        p,
        h,
    })
}

/// Extra freedom in the top rows of the state transform: T = [S + K·C_e; C_e].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CompletionGain {
    /// plain unit selectors
    #[default]
    Natural,
    /// places the leader-velocity coordinate of the unmeasured block at the given pole,
    /// using the measured channel that sees only the leader velocity
    LeaderVelocityPole(f64),
    /// explicit K, (n-p) x p, row-major
    Matrix(Vec<Vec<f64>>),
}

#[derive(Clone, Debug)]
pub struct PartitionedSystem {
    pub t: DMatrix<f64>,
    pub t_inv: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub a11: DMatrix<f64>,
    pub a12: DMatrix<f64>,
    pub a21: DMatrix<f64>,
    pub a22: DMatrix<f64>,
    pub b1: DMatrix<f64>,
    pub b2: DMatrix<f64>,
    pub e1: DMatrix<f64>,
    pub e2: DMatrix<f64>,
    pub f1: DMatrix<f64>,
    pub f2: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub h_mat: DMatrix<f64>,
    pub c_off: DVector<f64>,
    /// physical coordinate selected by each row of S
    pub selectors: Vec<usize>,
    pub ext: ExtendedMatrices,
    pub n: usize,
    pub p: usize,
    pub h: usize,
}

impl PartitionedSystem {
    pub fn nx1(&self) -> usize {
        self.n - self.p
    }

    /// Reassembled transformed matrix [[A11, A12], [A21, A22]].
    pub fn a_bar(&self) -> DMatrix<f64> {
        vcat(&hcat(&self.a11, &self.a12), &hcat(&self.a21, &self.a22))
    }

    /// Maps an extended state (physical coordinates then filter states) to (x1, x2).
    pub fn to_partitioned(&self, x_e: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let x = &self.t * x_e;
        let m = self.nx1();
        (x.rows(0, m).into_owned(), x.rows(m, self.p).into_owned())
    }

    pub fn from_partitioned(&self, x1: &DVector<f64>, x2: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.n);
        x.rows_mut(0, x1.len()).copy_from(x1);
        x.rows_mut(x1.len(), x2.len()).copy_from(x2);
        &self.t_inv * x
    }

    /// Index of a physical coordinate within x1, if it was selected.
    pub fn x1_index_of(&self, coord: usize) -> Option<usize> {
        self.selectors.iter().position(|&s| s == coord)
    }
}

fn selector_rows(ext: &ExtendedMatrices) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let n = ext.n;
    let need = n - ext.p;
    let mut rows = ext.c.clone();
    let mut chosen = Vec::new();
    let mut base_rank = linalg::rank(&rows, RANK_TOL);
    if base_rank < ext.p {
        return Err(Error::SingularCompletion(format!(
            "C_e has rank {base_rank} < {}",
            ext.p
        )));
    }
    for &coord in &SELECTOR_ORDER {
        if chosen.len() == need {
            break;
        }
        let mut sel = DMatrix::zeros(1, n);
        sel[(0, coord)] = 1.0;
        let trial = vcat(&rows, &sel);
        let r = linalg::rank(&trial, RANK_TOL);
        if r > base_rank {
            rows = trial;
            base_rank = r;
            chosen.push(coord);
        }
    }
    if chosen.len() < need {
        let names: Vec<&str> = chosen.iter().map(|&c| PLANT_COORD_NAMES[c]).collect();
        return Err(Error::SingularCompletion(format!(
            "only {} of {need} independent selectors found ({}); the measured channels collide with the remaining coordinates",
            chosen.len(),
            names.join(", ")
        )));
    }
    let mut s = DMatrix::zeros(need, n);
    for (i, &c) in chosen.iter().enumerate() {
        s[(i, c)] = 1.0;
    }
    Ok((s, chosen))
}

fn partition_with(
    ext: &ExtendedMatrices,
    s: &DMatrix<f64>,
    k: &DMatrix<f64>,
    selectors: Vec<usize>,
) -> Result<PartitionedSystem> {
    let n = ext.n;
    let p = ext.p;
    let m = n - p;
    let top = s + k * &ext.c;
    let t = vcat(&top, &ext.c);
    let t_inv = t
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularCompletion("state transform is singular".into()))?;
    let a = &t * &ext.a * &t_inv;
    let b = &t * &ext.b;
    let e = &t * &ext.e;
    let f = &t * &ext.f;
    let ct = &ext.c * &t_inv;
    let mut expect = DMatrix::zeros(p, n);
    expect.view_mut((0, m), (p, p)).fill_with_identity();
    if linalg::max_abs(&(ct - expect)) > 1e-9 {
        return Err(Error::SingularCompletion("C_e T^-1 is not [0 I]".into()));
    }
    Ok(PartitionedSystem {
        a11: a.view((0, 0), (m, m)).into_owned(),
        a12: a.view((0, m), (m, p)).into_owned(),
        a21: a.view((m, 0), (p, m)).into_owned(),
        a22: a.view((m, m), (p, p)).into_owned(),
        b1: b.rows(0, m).into_owned(),
        b2: b.rows(m, p).into_owned(),
        e1: e.rows(0, m).into_owned(),
        e2: e.rows(m, p).into_owned(),
        f1: f.rows(0, m).into_owned(),
        f2: f.rows(m, p).into_owned(),
        d: ext.d.clone(),
        h_mat: ext.h_mat.clone(),
        c_off: ext.c_off.clone(),
        t,
        t_inv,
        k: k.clone(),
        selectors,
        ext: ext.clone(),
        n,
        p,
        h: ext.h,
    })
}

/// Partition with natural selectors (no completion gain).
pub fn build_partitioned(ext: &ExtendedMatrices) -> Result<PartitionedSystem> {
    build_partitioned_with(ext, &CompletionGain::Natural)
}

pub fn build_partitioned_with(ext: &ExtendedMatrices, completion: &CompletionGain) -> Result<PartitionedSystem> {
    let (s, sel) = selector_rows(ext)?;
    let m = ext.n - ext.p;
    let zero = DMatrix::zeros(m, ext.p);
    let natural = partition_with(ext, &s, &zero, sel.clone())?;
    match completion {
        CompletionGain::Natural => Ok(natural),
        CompletionGain::Matrix(rows) => {
            if rows.len() != m || rows.iter().any(|r| r.len() != ext.p) {
                return Err(Error::InvalidParameter(format!(
                    "completion matrix must be {m} x {}",
                    ext.p
                )));
            }
            let k = DMatrix::from_fn(m, ext.p, |i, j| rows[i][j]);
            partition_with(ext, &s, &k, sel)
        }
        CompletionGain::LeaderVelocityPole(pole) => {
            if !(pole.is_finite() && *pole < 0.0) {
                return Err(Error::InvalidParameter("leader velocity pole must be < 0".into()));
            }
            let jv = natural
                .x1_index_of(V_LEAD)
                .ok_or_else(|| Error::InvalidParameter("leader velocity is not an unmeasured coordinate".into()))?;
            let a21 = &natural.a21;
            let row = (0..ext.p).find(|&i| {
                let lead = a21[(i, jv)].abs();
                lead > 1e-9 && (0..m).all(|j| j == jv || a21[(i, j)].abs() <= 1e-12 * lead.max(1.0))
            });
            let i = row
                .ok_or_else(|| Error::InvalidParameter("no measured channel sees the leader velocity alone".into()))?;
            let mut k = zero;
            k[(jv, i)] = pole / a21[(i, jv)];
            partition_with(ext, &s, &k, sel)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleClass {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub re: f64,
    pub im: f64,
    pub class: PoleClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleReport {
    /// eigenvalues of A11 restricted to the controllable subspace of the pair
    pub poles: Vec<Pole>,
    pub controllable_dim: usize,
    /// eigenvalues of A11 itself, for comparison
    pub raw: Vec<Pole>,
    pub pass_strict: bool,
    pub pass_lenient: bool,
}

impl PoleReport {
    pub fn pass(&self, strict: bool) -> bool {
        if strict {
            self.pass_strict
        } else {
            self.pass_lenient
        }
    }
}

/// Marginal band for pole classification. Repeated eigenvalues at zero split
/// by about sqrt(machine eps) * |A|, so the band must be wider than that.
pub const DEFAULT_TOL_MARGINAL: f64 = 1e-6;

fn classify(ev: &[Complex<f64>], tol: f64) -> Vec<Pole> {
    ev.iter()
        .map(|l| Pole {
            re: l.re,
            im: l.im,
            class: if l.re < -tol {
                PoleClass::Stable
            } else if l.re.abs() <= tol {
                PoleClass::Marginal
            } else {
                PoleClass::Unstable
            },
        })
        .collect()
}

pub fn check_pole_pair(a11: &DMatrix<f64>, g: &DMatrix<f64>, tol_marginal: f64) -> Result<PoleReport> {
    if !a11.is_square() || g.nrows() != a11.nrows() {
        return Err(Error::InvalidParameter(format!(
            "pole pair shapes {:?} and {:?} do not match",
            a11.shape(),
            g.shape()
        )));
    }
    let v = linalg::controllable_subspace(a11, g, RANK_TOL);
    let poles = classify(&linalg::restricted_eigenvalues(a11, &v), tol_marginal);
    let raw = classify(&linalg::eigenvalues(a11), tol_marginal);
    let pass_lenient = poles.iter().all(|p| p.class != PoleClass::Unstable);
    let pass_strict = poles.iter().all(|p| p.class == PoleClass::Stable);
    Ok(PoleReport {
        poles,
        controllable_dim: v.ncols(),
        raw,
        pass_strict,
        pass_lenient,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    /// rank of A21·A11†·F1 − F2
    pub rank_attack_map: usize,
    pub rank_f_e: usize,
    pub required: usize,
    pub dim_ok: bool,
    pub pass: bool,
}

/// A21·A11†·F1 − F2 with the pseudo-inverse.
pub fn attack_map_pinv(sys: &PartitionedSystem) -> DMatrix<f64> {
    let pinv = linalg::pseudo_inverse(&sys.a11, RANK_TOL);
    &sys.a21 * pinv * &sys.f1 - &sys.f2
}

pub fn check_rank_condition(sys: &PartitionedSystem, tol: f64) -> RankReport {
    let m = attack_map_pinv(sys);
    let rank_attack_map = linalg::rank(&m, tol);
    let rank_f_e = linalg::rank(&sys.ext.f, tol);
    let required = 1 + sys.h;
    let dim_ok = sys.p >= required;
    RankReport {
        rank_attack_map,
        rank_f_e,
        required,
        dim_ok,
        pass: dim_ok && rank_attack_map == required && rank_f_e == required,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub partition: OutputPartition,
    pub label: String,
    pub relvel_in_y1: bool,
    /// construction problem, when the design could not be built
    pub diagnosis: Option<String>,
    pub poles_e: Option<PoleReport>,
    pub poles_f: Option<PoleReport>,
    pub rank: Option<RankReport>,
    pub dim_check: bool,
}

impl DesignReport {
    /// Observer and threshold exist: (A11, E1) poles acceptable.
    pub fn pole_admissible(&self, strict: bool) -> bool {
        self.poles_e.as_ref().is_some_and(|r| r.pass(strict))
    }

    /// Full design gate: both pole pairs and the rank/dimension condition.
    pub fn pass(&self, strict: bool) -> bool {
        self.pole_admissible(strict)
            && self.poles_f.as_ref().is_some_and(|r| r.pass(strict))
            && self.rank.as_ref().is_some_and(|r| r.pass)
    }
}

pub fn design_report(sys: &PartitionedSystem, tol_marginal: f64) -> Result<DesignReport> {
    let part = sys.ext.partition;
    let poles_e = check_pole_pair(&sys.a11, &sys.e1, tol_marginal)?;
    let poles_f = check_pole_pair(&sys.a11, &sys.f1, tol_marginal)?;
    let rank = check_rank_condition(sys, RANK_TOL);
    Ok(DesignReport {
        partition: part,
        label: part.label(),
        relvel_in_y1: part.relvel_in_y1(),
        diagnosis: None,
        poles_e: Some(poles_e),
        poles_f: Some(poles_f),
        dim_check: rank.dim_ok,
        rank: Some(rank),
    })
}

pub fn evaluate_design(
    params: &PlatoonParams,
    part: &OutputPartition,
    a_fil: f64,
    completion: &CompletionGain,
    tol_marginal: f64,
) -> DesignReport {
    let built =
        build_extended(params, part, &vec![a_fil; part.h]).and_then(|ext| build_partitioned_with(&ext, completion));
    match built {
        Ok(sys) => design_report(&sys, tol_marginal).unwrap_or_else(|e| failed_report(part, e)),
        Err(e) => failed_report(part, e),
    }
}

fn failed_report(part: &OutputPartition, e: Error) -> DesignReport {
    DesignReport {
        partition: *part,
        label: part.label(),
        relvel_in_y1: part.relvel_in_y1(),
        diagnosis: Some(e.to_string()),
        poles_e: None,
        poles_f: None,
        rank: None,
        dim_check: OUTPUTS > part.h,
    }
}

/// Runs every (T_y, h) candidate through the checks, natural completion.
pub fn enumerate_valid_designs(params: &PlatoonParams, a_fil: f64, tol_marginal: f64) -> Vec<DesignReport> {
    OutputPartition::enumerate_all()
        .iter()
        .map(|p| evaluate_design(params, p, a_fil, &CompletionGain::Natural, tol_marginal))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_relative_eq;

    fn table1_sys(completion: CompletionGain) -> PartitionedSystem {
        let ext = build_extended(&presets::table1_platoon(), &presets::table1_partition(), &[-5.0; 3]).unwrap();
        build_partitioned_with(&ext, &completion).unwrap()
    }

    #[test]
    fn h0_is_the_plain_model() {
        let part = OutputPartition {
            permutation: [0, 1, 2, 3],
            h: 0,
        };
        let ext = build_extended(&presets::table1_platoon(), &part, &[]).unwrap();
        assert_eq!(ext.n, 6);
        assert_eq!(ext.a.shape(), (6, 6));
        assert_relative_eq!(ext.a[(2, 2)], -1.0 / 0.11, epsilon = 1e-12);
    }

    #[test]
    fn chosen_design_blocks() {
        let ext = build_extended(&presets::table1_platoon(), &presets::table1_partition(), &[-5.0; 3]).unwrap();
        assert_eq!(ext.n, 9);
        assert_eq!(ext.b.shape(), (9, 5));
        assert_eq!(ext.e.shape(), (9, 4));
        for k in 0..3 {
            assert_eq!(ext.e[(6 + k, 1 + k)], 5.0);
        }
        assert_relative_eq!(ext.f[(2, 0)], -1.0 / 0.11, epsilon = 1e-12);
        assert_relative_eq!(ext.f[(2, 0)], -9.090909090909, epsilon = 1e-9);
        // y1 is the relative velocity
        assert_eq!(
            ext.c.row(0).iter().copied().collect::<Vec<_>>()[..6],
            [0.0, 1.0, 0.0, 0.0, -1.0, 0.0]
        );
    }

    #[test]
    fn chosen_design_coordinates() {
        let sys = table1_sys(CompletionGain::Natural);
        assert_eq!(sys.selectors, vec![0, 1, 2, 3, 5]);
        let ct = &sys.ext.c * &sys.t_inv;
        for i in 0..4 {
            for j in 0..9 {
                let want = if j == 5 + i { 1.0 } else { 0.0 };
                assert_relative_eq!(ct[(i, j)], want, epsilon = 1e-12);
            }
        }
        let back = &sys.t_inv * sys.a_bar() * &sys.t;
        assert!(linalg::max_abs(&(back - &sys.ext.a)) < 1e-10);
    }

    #[test]
    fn fully_filtered_completion_is_a_permutation() {
        // every measured channel is filtered, so T only reorders coordinates
        let part = OutputPartition {
            permutation: [0, 1, 2, 3],
            h: 4,
        };
        let ext = build_extended(&presets::table1_platoon(), &part, &[-5.0; 4]).unwrap();
        let sys = build_partitioned(&ext).unwrap();
        for i in 0..10 {
            let row = sys.t.row(i);
            assert_eq!(row.iter().filter(|x| **x == 1.0).count(), 1);
            assert_eq!(row.iter().filter(|x| **x != 0.0).count(), 1);
        }
    }

    #[test]
    fn leader_velocity_pole_moves_the_mode() {
        let sys = table1_sys(CompletionGain::LeaderVelocityPole(-2.0));
        let jv = sys.x1_index_of(1).unwrap();
        assert_relative_eq!(sys.a11[(jv, jv)], -2.0, epsilon = 1e-12);
        // the follower acceleration coordinate is untouched by the completion
        let ja = sys.x1_index_of(5).unwrap();
        assert_eq!(sys.t.row(ja).iter().filter(|x| **x != 0.0).count(), 1);
    }

    #[test]
    fn pole_pair_examples() {
        let r = check_pole_pair(&(-DMatrix::<f64>::identity(3, 3)), &DMatrix::identity(3, 1), 1e-8).unwrap();
        assert!(r.pass_strict);
        let a = linalg::diag(&[1.0, -1.0]);
        let g = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let r = check_pole_pair(&a, &g, 1e-8).unwrap();
        assert!(r.pass_strict);
        assert_eq!(r.poles.len(), 1);
        assert!(check_pole_pair(&a, &DMatrix::zeros(3, 1), 1e-8).is_err());
    }

    #[test]
    fn rank_condition_on_chosen_design() {
        let sys = table1_sys(CompletionGain::Natural);
        let r = check_rank_condition(&sys, RANK_TOL);
        assert!(r.dim_ok);
        assert_eq!(r.rank_attack_map, 4);
        assert!(r.pass);
    }

    #[test]
    fn h4_fails_dimension() {
        let part = OutputPartition {
            permutation: [1, 0, 2, 3],
            h: 4,
        };
        let rep = evaluate_design(&presets::table1_platoon(), &part, -5.0, &CompletionGain::Natural, 1e-6);
        assert!(!rep.dim_check);
        assert!(!rep.pass(false));
    }

    #[test]
    fn enumeration_counts() {
        let all = OutputPartition::enumerate_all();
        assert_eq!(all.len(), 120);
        let set: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(set.len(), 120);
    }
}
