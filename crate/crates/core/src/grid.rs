//! Network model, Kron reduction of passive buses and state-space assembly.
//!
//! State ordering is `x = [θ; ω]`, angles first. For an allocation `m` the
//! linearized swing dynamics read
//!
//! ```text
//! A = [ 0        I      ]    B = [ 0          ]    C = [ N^½  0  ]
//!     [ -M⁻¹L   -M⁻¹D  ]        [ M⁻¹ W^½    ]        [ 0    S^½ ]
//! ```
//!
//! with `M = diag(m)`, `D = diag(d)`, `W = diag(w)`, `S = diag(s)`, `L` the
//! (reduced) susceptance Laplacian and `N` the angle-penalty Laplacian.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Weighted undirected edge between two bus indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(from: usize, to: usize, weight: f64) -> Self {
        Edge { from, to, weight }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub damping: f64,
    pub inertia_floor: f64,
    pub inertia_cap: f64,
    pub disturbance_weight: f64,
    pub freq_penalty: f64,
    pub passive: bool,
}

impl Bus {
    /// An active bus with unit disturbance and unit frequency penalty.
    pub fn new(id: usize, damping: f64, inertia_floor: f64, inertia_cap: f64) -> Self {
        Bus {
            id,
            damping,
            inertia_floor,
            inertia_cap,
            disturbance_weight: 1.0,
            freq_penalty: 1.0,
            passive: false,
        }
    }

    pub fn passive(id: usize) -> Self {
        Bus {
            id,
            damping: 0.0,
            inertia_floor: 0.0,
            inertia_cap: 0.0,
            disturbance_weight: 0.0,
            freq_penalty: 0.0,
            passive: true,
        }
    }

    fn validate(&self, idx: usize) -> Result<()> {
        if self.passive {
            return Ok(());
        }
        let field = |name: &str| format!("buses[{idx}].{name}");
        if !(self.damping > 0.0) || !self.damping.is_finite() {
            return Err(Error::invalid(field("damping"), "must be finite and > 0"));
        }
        if !(self.inertia_floor > 0.0) || !self.inertia_floor.is_finite() {
            return Err(Error::invalid(
                field("inertia_floor"),
                "must be finite and > 0",
            ));
        }
        if !(self.inertia_cap >= self.inertia_floor) {
            return Err(Error::invalid(
                field("inertia_cap"),
                format!(
                    "cap {} is below floor {}",
                    self.inertia_cap, self.inertia_floor
                ),
            ));
        }
        if !(self.disturbance_weight >= 0.0) || !self.disturbance_weight.is_finite() {
            return Err(Error::invalid(
                field("disturbance"),
                "must be finite and >= 0",
            ));
        }
        if !(self.freq_penalty > 0.0) || !self.freq_penalty.is_finite() {
            return Err(Error::invalid(
                field("freq_penalty"),
                "must be finite and > 0",
            ));
        }
        Ok(())
    }
}

/// Builds the weighted Laplacian of `edges` on `n` nodes without checking
/// connectivity. Parallel edges add up; self-loops are ignored.
pub fn laplacian_unchecked(edges: &[Edge], n: usize) -> Result<DMatrix<f64>> {
    let mut l = DMatrix::zeros(n, n);
    for (k, e) in edges.iter().enumerate() {
        if e.from >= n || e.to >= n {
            return Err(Error::invalid(
                format!("edges[{k}]"),
                format!("endpoint out of range for {n} nodes"),
            ));
        }
        if !(e.weight >= 0.0) || !e.weight.is_finite() {
            return Err(Error::invalid(
                format!("edges[{k}].weight"),
                format!("weight {} must be finite and >= 0", e.weight),
            ));
        }
        if e.from == e.to {
            continue;
        }
        l[(e.from, e.from)] += e.weight;
        l[(e.to, e.to)] += e.weight;
        l[(e.from, e.to)] -= e.weight;
        l[(e.to, e.from)] -= e.weight;
    }
    Ok(l)
}

/// Weighted Laplacian `l_ij = -b_ij`, `l_ii = Σ_j b_ij`; rejects negative
/// weights and disconnected graphs.
pub fn build_laplacian(edges: &[Edge], n: usize) -> Result<DMatrix<f64>> {
    let l = laplacian_unchecked(edges, n)?;
    check_connected(&l, &(0..n).collect::<Vec<_>>())?;
    Ok(l)
}

/// Fiedler-value connectivity test: λ₂(L) must exceed `1e-9 · max degree`.
pub fn is_connected(l: &DMatrix<f64>) -> bool {
    let n = l.nrows();
    if n <= 1 {
        return true;
    }
    let max_degree = l.diagonal().max();
    if max_degree <= 0.0 {
        return false;
    }
    let mut eig = SymmetricEigen::new(l.clone())
        .eigenvalues
        .as_slice()
        .to_vec();
    eig.sort_by(|a, b| a.total_cmp(b));
    eig[1] > 1e-9 * max_degree
}

/// Returns `Disconnected` carrying the ids (via `ids`) of the first component
/// that does not contain node 0.
pub(crate) fn check_connected(l: &DMatrix<f64>, ids: &[usize]) -> Result<()> {
    if is_connected(l) {
        return Ok(());
    }
    let n = l.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && l[(i, j)] < 0.0 {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    let component: Vec<usize> = match seen.iter().position(|s| !s) {
        Some(start) => {
            // collect the component of `start`
            let mut comp = vec![false; n];
            comp[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(i) = queue.pop_front() {
                for j in 0..n {
                    if !comp[j] && l[(i, j)] < 0.0 {
                        comp[j] = true;
                        queue.push_back(j);
                    }
                }
            }
            (0..n).filter(|&j| comp[j]).map(|j| ids[j]).collect()
        }
        // Numerically disconnected (tiny weights) although every node is reachable.
        None => (1..n).map(|j| ids[j]).collect(),
    };
    Err(Error::Disconnected { component })
}

/// Schur complement `L_rr - L_rp L_pp⁻¹ L_pr` eliminating the `passive` node
/// indices. Retained nodes keep their relative order.
pub fn kron_reduce(l: &DMatrix<f64>, passive: &[usize]) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            found: l.ncols(),
        });
    }
    let mut is_passive = vec![false; n];
    for &p in passive {
        if p >= n {
            return Err(Error::Reduction(format!("passive index {p} out of range")));
        }
        is_passive[p] = true;
    }
    let p_idx: Vec<usize> = (0..n).filter(|&i| is_passive[i]).collect();
    let r_idx: Vec<usize> = (0..n).filter(|&i| !is_passive[i]).collect();
    if r_idx.is_empty() {
        return Err(Error::Reduction("every bus is passive".into()));
    }
    if p_idx.is_empty() {
        return Ok(l.clone());
    }
    let sub = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| l[(rows[i], cols[j])])
    };
    let l_rr = sub(&r_idx, &r_idx);
    let l_rp = sub(&r_idx, &p_idx);
    let l_pp = sub(&p_idx, &p_idx);
    let chol = l_pp
        .cholesky()
        .ok_or_else(|| Error::Reduction("passive block is singular".into()))?;
    let mut reduced = l_rr - &l_rp * chol.solve(&l_rp.transpose());
    symmetrize(&mut reduced);
    Ok(reduced)
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Symmetric PSD square root. Eigenvalues below `1e-12 · λ_max` are roundoff
/// and map to zero, so exact null vectors of `m` stay null.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cutoff = 1e-12 * lmax;
    let roots = eig
        .eigenvalues
        .map(|v| if v > cutoff { v.sqrt() } else { 0.0 });
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&roots) * q.transpose()
}

/// Moore–Penrose pseudo-inverse of a symmetric matrix, dropping eigenvalues
/// below `1e-10 · λ_max`.
pub fn pseudo_inverse_symmetric(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cutoff = 1e-10 * lmax;
    let inv = eig
        .eigenvalues
        .map(|v| if v.abs() > cutoff { 1.0 / v } else { 0.0 });
    let q = &eig.eigenvectors;
    q * DMatrix::from_diagonal(&inv) * q.transpose()
}

/// A validated network, reduced onto its non-passive buses.
#[derive(Debug, Clone)]
pub struct GridModel {
    buses: Vec<Bus>,
    lines: Vec<Edge>,
    retained: Vec<usize>,
    laplacian: DMatrix<f64>,
}

impl GridModel {
    /// `lines` refer to bus ids, not positions.
    pub fn new(buses: Vec<Bus>, lines: Vec<Edge>) -> Result<Self> {
        if buses.is_empty() {
            return Err(Error::invalid("buses", "at least one bus is required"));
        }
        let mut index: BTreeMap<usize, usize> = BTreeMap::new();
        for (k, b) in buses.iter().enumerate() {
            if index.insert(b.id, k).is_some() {
                return Err(Error::invalid(
                    format!("buses[{k}].id"),
                    format!("duplicate bus id {}", b.id),
                ));
            }
            b.validate(k)?;
        }
        let mut positional = Vec::with_capacity(lines.len());
        for (k, e) in lines.iter().enumerate() {
            let lookup = |id: usize, end: &str| {
                index.get(&id).copied().ok_or_else(|| {
                    Error::invalid(format!("lines[{k}].{end}"), format!("unknown bus id {id}"))
                })
            };
            positional.push(Edge::new(
                lookup(e.from, "from")?,
                lookup(e.to, "to")?,
                e.weight,
            ));
        }
        let n_all = buses.len();
        let full = laplacian_unchecked(&positional, n_all).map_err(|err| match err {
            Error::InvalidInput { field, reason } => Error::InvalidInput {
                field: field
                    .replace("edges", "lines")
                    .replace(".weight", ".susceptance"),
                reason,
            },
            other => other,
        })?;
        let all_ids: Vec<usize> = buses.iter().map(|b| b.id).collect();
        check_connected(&full, &all_ids)?;

        let passive: Vec<usize> = (0..n_all).filter(|&k| buses[k].passive).collect();
        let retained: Vec<usize> = (0..n_all).filter(|&k| !buses[k].passive).collect();
        let laplacian = kron_reduce(&full, &passive)?;
        let retained_ids: Vec<usize> = retained.iter().map(|&k| buses[k].id).collect();
        check_connected(&laplacian, &retained_ids)?;

        Ok(GridModel {
            buses,
            lines,
            retained,
            laplacian,
        })
    }

    /// Number of retained buses (the dimension of the reduced model).
    pub fn n(&self) -> usize {
        self.retained.len()
    }

    pub fn laplacian(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    pub fn all_buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Edge] {
        &self.lines
    }

    pub fn retained_buses(&self) -> impl Iterator<Item = &Bus> + '_ {
        self.retained.iter().map(move |&k| &self.buses[k])
    }

    /// Original bus ids of the retained buses, in reduced-model order.
    pub fn retained_ids(&self) -> Vec<usize> {
        self.retained_buses().map(|b| b.id).collect()
    }

    /// Position of bus `id` in the reduced model, if it is retained.
    pub fn reduced_index(&self, id: usize) -> Option<usize> {
        self.retained_buses().position(|b| b.id == id)
    }

    fn collect(&self, f: impl Fn(&Bus) -> f64) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.retained_buses().map(f))
    }

    pub fn damping(&self) -> DVector<f64> {
        self.collect(|b| b.damping)
    }

    pub fn inertia_floor(&self) -> DVector<f64> {
        self.collect(|b| b.inertia_floor)
    }

    pub fn inertia_cap(&self) -> DVector<f64> {
        self.collect(|b| b.inertia_cap)
    }

    pub fn disturbance(&self) -> DVector<f64> {
        self.collect(|b| b.disturbance_weight)
    }

    pub fn freq_penalty(&self) -> DVector<f64> {
        self.collect(|b| b.freq_penalty)
    }
}

/// Frequency penalty `S` of the coherency output.
#[derive(Debug, Clone, PartialEq)]
pub enum FrequencyPenalty {
    /// Fixed diagonal `S = diag(s)`.
    Diagonal(DVector<f64>),
    /// Kinetic-energy penalty `S = c·M`; moves with the allocation.
    KineticEnergy(f64),
}

impl FrequencyPenalty {
    /// Diagonal of `S` at allocation `m`.
    pub fn weights(&self, m: &DVector<f64>) -> DVector<f64> {
        match self {
            FrequencyPenalty::Diagonal(s) => s.clone(),
            FrequencyPenalty::KineticEnergy(c) => m * *c,
        }
    }

    /// `∂s_i/∂m_i`; zero for a fixed diagonal.
    pub fn sensitivity(&self) -> f64 {
        match self {
            FrequencyPenalty::Diagonal(_) => 0.0,
            FrequencyPenalty::KineticEnergy(c) => *c,
        }
    }
}

/// Output and input weighting: angle penalty `N`, frequency penalty `S` and
/// disturbance variances `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceSpec {
    pub angle_penalty: DMatrix<f64>,
    pub freq_penalty: FrequencyPenalty,
    pub disturbance: DVector<f64>,
}

impl PerformanceSpec {
    pub fn new(
        angle_penalty: DMatrix<f64>,
        freq_penalty: FrequencyPenalty,
        disturbance: DVector<f64>,
    ) -> Result<Self> {
        let n = angle_penalty.nrows();
        if angle_penalty.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                found: angle_penalty.ncols(),
            });
        }
        if disturbance.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: disturbance.len(),
            });
        }
        let scale = 1.0 + angle_penalty.amax();
        if (&angle_penalty - angle_penalty.transpose()).amax() > 1e-12 * scale {
            return Err(Error::invalid(
                "performance.angle_penalty",
                "must be symmetric",
            ));
        }
        let row_sums = angle_penalty.column_sum();
        if row_sums.amax() > 1e-10 * scale {
            return Err(Error::invalid(
                "performance.angle_penalty",
                "rows must sum to zero (N·1 = 0)",
            ));
        }
        if let Some((i, w)) = disturbance
            .iter()
            .enumerate()
            .find(|(_, w)| !(**w >= 0.0) || !w.is_finite())
        {
            return Err(Error::invalid(
                format!("disturbance[{i}]"),
                format!("{w} must be finite and >= 0"),
            ));
        }
        match &freq_penalty {
            FrequencyPenalty::Diagonal(s) => {
                if s.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        found: s.len(),
                    });
                }
                if let Some((i, v)) = s.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                    return Err(Error::invalid(
                        format!("freq_penalty[{i}]"),
                        format!("{v} must be > 0"),
                    ));
                }
            }
            FrequencyPenalty::KineticEnergy(c) => {
                if !(*c >= 0.0) || !c.is_finite() {
                    return Err(Error::invalid("performance.c_times_m", "c must be >= 0"));
                }
            }
        }
        Ok(PerformanceSpec {
            angle_penalty,
            freq_penalty,
            disturbance,
        })
    }

    pub fn n(&self) -> usize {
        self.disturbance.len()
    }

    /// Same spec with a different disturbance vector.
    pub fn with_disturbance(&self, disturbance: DVector<f64>) -> Result<Self> {
        PerformanceSpec::new(
            self.angle_penalty.clone(),
            self.freq_penalty.clone(),
            disturbance,
        )
    }
}

/// `N = I - 11ᵀ/n`, penalizing deviation from the network average.
pub fn average_penalty(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64)
}

/// Linear swing model `(A, B, C)` for one allocation, together with the
/// diagonal data it was built from.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub n: usize,
    pub m: DVector<f64>,
    pub damping: DVector<f64>,
    pub disturbance: DVector<f64>,
    /// Diagonal of `S` at this allocation.
    pub freq_penalty: DVector<f64>,
    pub laplacian: DMatrix<f64>,
    pub angle_penalty: DMatrix<f64>,
}

impl StateSpace {
    /// Right null vector `v₀ = [1; 0]` of `A` (absolute angle drift).
    pub fn null_vector(&self) -> DVector<f64> {
        let mut v = DVector::zeros(2 * self.n);
        v.rows_mut(0, self.n).fill(1.0);
        v
    }

    /// Left null vector `ξ = [D·1; M·1]`, `Aᵀξ = 0`.
    pub fn left_null_vector(&self) -> DVector<f64> {
        let mut xi = DVector::zeros(2 * self.n);
        xi.rows_mut(0, self.n).copy_from(&self.damping);
        xi.rows_mut(self.n, self.n).copy_from(&self.m);
        xi
    }

    /// `CᵀC = blkdiag(N, S)`, formed directly rather than through the roots.
    pub fn output_weight(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut q = DMatrix::zeros(2 * n, 2 * n);
        q.view_mut((0, 0), (n, n)).copy_from(&self.angle_penalty);
        q.view_mut((n, n), (n, n)).set_diagonal(&self.freq_penalty);
        q
    }
}

/// Assembles `(A, B, C)` for allocation `m`. Only positivity of `m` is
/// enforced here; box and budget limits belong to the allocator.
pub fn assemble_state_space(
    grid: &GridModel,
    spec: &PerformanceSpec,
    m: &DVector<f64>,
) -> Result<StateSpace> {
    let n = grid.n();
    if spec.n() != n {
        return Err(Error::Dimension {
            expected: n,
            found: spec.n(),
        });
    }
    if m.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: m.len(),
        });
    }
    let ids = grid.retained_ids();
    for (i, &mi) in m.iter().enumerate() {
        if !(mi > 0.0) || !mi.is_finite() {
            return Err(Error::IllPosed {
                bus: ids[i],
                value: mi,
            });
        }
    }
    let l = grid.laplacian();
    let d = grid.damping();
    let w = &spec.disturbance;
    let s = spec.freq_penalty.weights(m);

    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).fill_with_identity();
    for i in 0..n {
        let inv = 1.0 / m[i];
        for j in 0..n {
            a[(n + i, j)] = -l[(i, j)] * inv;
        }
        a[(n + i, n + i)] = -d[i] * inv;
    }

    let mut b = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        b[(n + i, i)] = w[i].sqrt() / m[i];
    }

    let mut c = DMatrix::zeros(2 * n, 2 * n);
    c.view_mut((0, 0), (n, n))
        .copy_from(&psd_sqrt(&spec.angle_penalty));
    for i in 0..n {
        c[(n + i, n + i)] = s[i].sqrt();
    }

    Ok(StateSpace {
        a,
        b,
        c,
        n,
        m: m.clone(),
        damping: d,
        disturbance: w.clone(),
        freq_penalty: s,
        laplacian: l.clone(),
        angle_penalty: spec.angle_penalty.clone(),
    })
}
