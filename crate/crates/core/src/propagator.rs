//! Time evolution of [`CompositeState`]s and eigen-analysis of sector
//! Hamiltonians.
//!
//! Continuous evolution is piecewise constant over the samples of a
//! [`SampledControls`] block. Each constant piece is applied with a Lanczos
//! approximation of `e^{−iHt}` (or a dense eigendecomposition when the policy
//! asks for it), split into substeps whenever `‖H‖·t` is large.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{domain, Error, Result};
use crate::fock::{
    CompositeState, LinearOperator, SectorHamiltonian, SectorRegistry, SparseOperator, C64,
};
use crate::schedule::{apply_rotation, apply_virtual_phase, ControlEvent, SampledControls};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// How a single exponential is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Dense eigendecomposition of every piece.
    Exact,
    /// Lanczos subspace with adaptive size and substepping.
    #[default]
    Krylov,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepPolicy {
    /// Longest interval covered by one exponential; longer pieces are split.
    pub max_step: f64,
    /// Local error target per exponential (2-norm).
    pub tolerance: f64,
    pub method: Method,
    /// Largest Lanczos subspace before a substep is halved.
    pub krylov_max_dim: usize,
    /// Largest dimension accepted by dense eigensolves.
    pub dense_cap: usize,
    /// Doubly occupied weight above which rotation events fail.
    pub rotation_threshold: f64,
}

impl Default for StepPolicy {
    fn default() -> Self {
        Self {
            max_step: 2e-9,
            tolerance: 1e-8,
            method: Method::Krylov,
            krylov_max_dim: 40,
            dense_cap: 4096,
            rotation_threshold: 1e-6,
        }
    }
}

impl StepPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_step > 0.0) {
            return domain(format!("max_step must be positive, got {}", self.max_step));
        }
        if !(self.tolerance > 0.0) {
            return domain(format!("tolerance must be positive, got {}", self.tolerance));
        }
        if self.krylov_max_dim < 2 {
            return domain("Krylov subspace must allow at least 2 vectors");
        }
        Ok(())
    }
}

/// Scratch space for Lanczos exponentials of one dimension.
#[derive(Debug, Clone)]
pub struct KrylovWorkspace {
    dim: usize,
    m_max: usize,
    basis: Vec<C64>,
    w: Vec<C64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    d: Vec<f64>,
    e: Vec<f64>,
    z: Vec<f64>,
    coeff: Vec<C64>,
    /// Subspace size of the last converged exponential; convergence checks
    /// start just below it.
    last_m: usize,
}

impl KrylovWorkspace {
    pub fn new(dim: usize, m_max: usize) -> Self {
        let m_max = m_max.min(dim).max(1);
        Self {
            dim,
            m_max,
            basis: vec![ZERO; (m_max + 1) * dim],
            w: vec![ZERO; dim],
            alpha: vec![0.0; m_max],
            beta: vec![0.0; m_max],
            d: vec![0.0; m_max],
            e: vec![0.0; m_max],
            z: vec![0.0; m_max * m_max.max(2)],
            coeff: vec![ZERO; m_max],
            last_m: 0,
        }
    }
}

fn norm(x: &[C64]) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL.
///
/// `d` holds the diagonal, `e[i]` couples `i` and `i + 1`. On return `d` holds
/// eigenvalues and column `k` of the row-major `z` the k-th eigenvector.
fn tridiagonal_eigen(d: &mut [f64], e: &mut [f64], z: &mut [f64]) -> Result<()> {
    let rows: Vec<usize> = (0..d.len()).collect();
    tridiagonal_eigen_rows(d, e, &rows, z)
}

/// As [`tridiagonal_eigen`] but only accumulates the eigenvector rows listed
/// in `rows`; row `r` of `z` holds component `rows[r]` of every eigenvector.
fn tridiagonal_eigen_rows(d: &mut [f64], e: &mut [f64], rows: &[usize], z: &mut [f64]) -> Result<()> {
    let n = d.len();
    let nr = rows.len();
    z[..nr * n].iter_mut().for_each(|v| *v = 0.0);
    for (r, &i) in rows.iter().enumerate() {
        z[r * n + i] = 1.0;
    }
    if n == 0 {
        return Ok(());
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numeric("tridiagonal QL did not converge".into()));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = (g * g + 1.0).sqrt();
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..nr {
                    let zf = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * zf;
                    z[k * n + i] = c * z[k * n + i] - s * zf;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// One Lanczos exponential `x ← e^{−i(H − shift)t} x`. Returns `false`
/// (leaving `x` untouched) when the subspace limit is hit first.
fn lanczos_exp(
    op: &dyn LinearOperator,
    shift: f64,
    t: f64,
    x: &mut [C64],
    tol: f64,
    ws: &mut KrylovWorkspace,
) -> Result<bool> {
    let n = ws.dim;
    let beta0 = norm(x);
    if beta0 == 0.0 || t == 0.0 {
        return Ok(true);
    }
    for (v, a) in ws.basis[..n].iter_mut().zip(x.iter()) {
        *v = a / beta0;
    }
    for j in 0..ws.m_max {
        let (head, tail) = ws.basis.split_at_mut((j + 1) * n);
        let vj = &head[j * n..];
        op.apply(vj, &mut ws.w);
        for (w, v) in ws.w.iter_mut().zip(vj) {
            *w -= v * shift;
        }
        let alpha = dot(vj, &ws.w).re;
        ws.alpha[j] = alpha;
        for (w, v) in ws.w.iter_mut().zip(vj) {
            *w -= v * alpha;
        }
        if j > 0 {
            let b = ws.beta[j - 1];
            for (w, v) in ws.w.iter_mut().zip(&head[(j - 1) * n..j * n]) {
                *w -= v * b;
            }
        }
        // Full reorthogonalization keeps the short recurrence honest.
        for i in 0..=j {
            let vi = &head[i * n..(i + 1) * n];
            let h = dot(vi, &ws.w);
            for (w, v) in ws.w.iter_mut().zip(vi) {
                *w -= v * h;
            }
        }
        let beta = norm(&ws.w);
        ws.beta[j] = beta;

        let m = j + 1;
        let scale = alpha.abs() + if j > 0 { ws.beta[j - 1] } else { 0.0 } + f64::MIN_POSITIVE;
        let breakdown = beta <= 1e-13 * scale;
        let check = m + 2 >= ws.last_m || m == ws.m_max;
        let done = breakdown || m == n || (check && beta * t.abs() * last_coefficient(&ws.alpha[..m], &ws.beta[..m], &mut ws.d, &mut ws.e, &mut ws.z, t)? <= tol);
        if done {
            ws.last_m = m;
            ws.d[..m].copy_from_slice(&ws.alpha[..m]);
            ws.e[..m].copy_from_slice(&ws.beta[..m]);
            let z = &mut ws.z[..m * m];
            tridiagonal_eigen(&mut ws.d[..m], &mut ws.e[..m], z)?;
            for i in 0..m {
                let mut acc = ZERO;
                for k in 0..m {
                    acc += C64::from_polar(z[i * m + k] * z[k], -t * ws.d[k]);
                }
                ws.coeff[i] = acc;
            }
            let phase = C64::from_polar(beta0, -shift * t);
            x.iter_mut().for_each(|a| *a = ZERO);
            for i in 0..m {
                let c = ws.coeff[i] * phase;
                for (a, v) in x.iter_mut().zip(&head[i * n..(i + 1) * n]) {
                    *a += v * c;
                }
            }
            let after = norm(x);
            if after > 0.0 {
                let r = beta0 / after;
                x.iter_mut().for_each(|a| *a *= r);
            }
            return Ok(true);
        }
        if m < ws.m_max {
            let inv = 1.0 / beta;
            for (v, w) in tail[..n].iter_mut().zip(&ws.w) {
                *v = w * inv;
            }
        }
    }
    ws.last_m = 0;
    Ok(false)
}

/// `|e_mᵀ exp(−iTt) e_1|` for the leading `m × m` block of the Lanczos
/// tridiagonal; only the first and last eigenvector rows are needed. Times
/// `β_m |t|` it estimates the local error.
fn last_coefficient(alpha: &[f64], beta: &[f64], d: &mut [f64], e: &mut [f64], z: &mut [f64], t: f64) -> Result<f64> {
    let m = alpha.len();
    d[..m].copy_from_slice(alpha);
    e[..m].copy_from_slice(beta);
    tridiagonal_eigen_rows(&mut d[..m], &mut e[..m], &[0, m - 1], &mut z[..2 * m])?;
    let c: C64 = (0..m).map(|k| C64::from_polar(z[m + k] * z[k], -t * d[k])).sum();
    Ok(c.norm())
}

fn lanczos_adaptive(
    op: &dyn LinearOperator,
    shift: f64,
    t: f64,
    x: &mut [C64],
    tol: f64,
    ws: &mut KrylovWorkspace,
    depth: u32,
) -> Result<()> {
    if lanczos_exp(op, shift, t, x, tol, ws)? {
        return Ok(());
    }
    if depth >= 24 {
        return Err(Error::Numeric(format!(
            "Lanczos exponential did not converge within {} vectors (dim {}, step {t:.3e} s)",
            ws.m_max, ws.dim
        )));
    }
    lanczos_adaptive(op, shift, 0.5 * t, x, tol, ws, depth + 1)?;
    lanczos_adaptive(op, shift, 0.5 * t, x, tol, ws, depth + 1)
}

/// `x ← e^{−iHt} x` with automatic substepping.
pub(crate) fn krylov_propagate(
    op: &dyn LinearOperator,
    t: f64,
    x: &mut [C64],
    policy: &StepPolicy,
    ws: &mut KrylovWorkspace,
) -> Result<()> {
    if x.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
        return Err(Error::Numeric("non-finite amplitudes entering a propagation step".into()));
    }
    let (lo, hi) = op.spectral_bounds();
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Numeric("non-finite Hamiltonian entries".into()));
    }
    let shift = 0.5 * (lo + hi);
    let half_width = 0.5 * (hi - lo);
    let by_norm = (half_width * t.abs() / 10.0).ceil();
    let by_step = (t.abs() / policy.max_step).ceil();
    let n_sub = by_norm.max(by_step).max(1.0) as usize;
    let h = t / n_sub as f64;
    for _ in 0..n_sub {
        lanczos_adaptive(op, shift, h, x, policy.tolerance, ws, 0)?;
    }
    Ok(())
}

/// Dense `e^{−iHt} x` through a full eigendecomposition.
fn dense_propagate(h: &SparseOperator, t: f64, x: &mut [C64], cap: usize) -> Result<()> {
    let es = eigensolve_with_cap(h, cap)?;
    let y = es.propagate(t, x);
    x.copy_from_slice(&y);
    Ok(())
}

/// `e^{−iH·dt}` applied to `x`.
pub fn matexp_apply(h: &SparseOperator, dt: f64, x: &[C64], policy: &StepPolicy) -> Result<Vec<C64>> {
    policy.validate()?;
    if x.len() != h.dim() {
        return domain(format!("vector of length {} for a {}-dim operator", x.len(), h.dim()));
    }
    if !dt.is_finite() {
        return domain("time step must be finite");
    }
    let mut y = x.to_vec();
    match policy.method {
        Method::Exact => dense_propagate(h, dt, &mut y, policy.dense_cap)?,
        Method::Krylov => {
            let mut ws = KrylovWorkspace::new(h.dim(), policy.krylov_max_dim);
            krylov_propagate(h, dt, &mut y, policy, &mut ws)?;
        }
    }
    Ok(y)
}

/// Applies constant-detuning pieces to every sector of a state, caching
/// Lanczos scratch space per sector.
pub(crate) struct SectorEngine<'a> {
    registry: &'a SectorRegistry,
    policy: &'a StepPolicy,
    workspaces: HashMap<usize, KrylovWorkspace>,
    diag: Vec<f64>,
}

impl<'a> SectorEngine<'a> {
    pub(crate) fn new(registry: &'a SectorRegistry, policy: &'a StepPolicy) -> Self {
        Self {
            registry,
            policy,
            workspaces: HashMap::new(),
            diag: Vec::new(),
        }
    }

    pub(crate) fn evolve_sector(&mut self, n: usize, amps: &mut [C64], detunings: &[f64], t: f64) -> Result<()> {
        if t == 0.0 || amps.iter().all(|a| *a == ZERO) {
            return Ok(());
        }
        let sector = self.registry.sector(n);
        if sector.dim() == 1 {
            sector.diagonal_into(detunings, &mut self.diag);
            amps[0] *= C64::from_polar(1.0, -self.diag[0] * t);
            return Ok(());
        }
        match self.policy.method {
            Method::Exact => {
                let h = sector.sparse(detunings)?;
                dense_propagate(&h, t, amps, self.policy.dense_cap)
            }
            Method::Krylov => {
                let mut diag = std::mem::take(&mut self.diag);
                sector.diagonal_into(detunings, &mut diag);
                let h = SectorHamiltonian::from_diagonal(sector, diag);
                let m_max = self.policy.krylov_max_dim;
                let ws = self
                    .workspaces
                    .entry(n)
                    .or_insert_with(|| KrylovWorkspace::new(sector.dim(), m_max));
                let res = krylov_propagate(&h, t, amps, self.policy, ws);
                self.diag = h.into_diagonal();
                res
            }
        }
    }

    pub(crate) fn evolve_constant(&mut self, psi: &mut CompositeState, detunings: &[f64], t: f64) -> Result<()> {
        for (n, amps) in psi.sectors_mut() {
            self.evolve_sector(n, amps, detunings, t)?;
        }
        Ok(())
    }
}

pub(crate) fn apply_event(
    psi: &CompositeState,
    event: &ControlEvent,
    registry: &SectorRegistry,
    policy: &StepPolicy,
    observer: &mut dyn FnMut(&str, &CompositeState),
) -> Result<Option<CompositeState>> {
    Ok(match event {
        ControlEvent::Rotation { site, angle, phase } => Some(apply_rotation(
            psi,
            registry,
            *site,
            *angle,
            *phase,
            policy.rotation_threshold,
        )?),
        ControlEvent::VirtualPhase { site, phase } => Some(apply_virtual_phase(psi, registry, *site, *phase)),
        ControlEvent::Marker(label) => {
            observer(label, psi);
            None
        }
    })
}

pub(crate) fn check_controls(controls: &SampledControls, registry: &SectorRegistry) -> Result<()> {
    if controls.n_sites() != registry.n_sites() {
        return domain(format!(
            "controls drive {} sites, lattice has {}",
            controls.n_sites(),
            registry.n_sites()
        ));
    }
    if !(controls.dt() > 0.0) {
        return domain("controls have no valid sample step");
    }
    if controls.events().windows(2).any(|w| w[0].0 > w[1].0) {
        return domain("control events are not in time order");
    }
    if (0..controls.n_samples()).any(|k| controls.sample(k).iter().any(|d| !d.is_finite())) {
        return domain("control samples contain non-finite detunings");
    }
    Ok(())
}

/// Evolve through a sampled control block.
pub fn evolve_sampled(
    state: &CompositeState,
    controls: &SampledControls,
    registry: &SectorRegistry,
    policy: &StepPolicy,
) -> Result<CompositeState> {
    evolve_sampled_observed(state, controls, registry, policy, &mut |_, _| {})
}

/// As [`evolve_sampled`], calling `observer` with the state at every marker.
pub fn evolve_sampled_observed(
    state: &CompositeState,
    controls: &SampledControls,
    registry: &SectorRegistry,
    policy: &StepPolicy,
    observer: &mut dyn FnMut(&str, &CompositeState),
) -> Result<CompositeState> {
    policy.validate()?;
    check_controls(controls, registry)?;
    let mut psi = state.clone();
    let mut engine = SectorEngine::new(registry, policy);
    let events = controls.events();
    let n = controls.n_samples();
    let dt = controls.dt();
    let mut ev = 0;
    let mut k = 0;
    loop {
        while ev < events.len() && events[ev].0 == k {
            if let Some(next) = apply_event(&psi, &events[ev].1, registry, policy, observer)? {
                psi = next;
            }
            ev += 1;
        }
        if k >= n {
            break;
        }
        let next_event = events.get(ev).map_or(usize::MAX, |e| e.0);
        let mut k2 = k + 1;
        while k2 < n && k2 < next_event && controls.sample(k2) == controls.sample(k) {
            k2 += 1;
        }
        engine.evolve_constant(&mut psi, controls.sample(k), (k2 - k) as f64 * dt)?;
        k = k2;
    }
    Ok(psi)
}

/// Sectors up to this dimension may use dense block propagation.
const BLOCK_DENSE_CAP: usize = 256;

/// [`evolve_sampled`] for many states through the same controls. Without
/// events other than markers, sectors carrying at least a quarter of their
/// dimension in vectors are propagated densely as one block, which shares a
/// single eigendecomposition per constant piece across all vectors.
pub fn evolve_sampled_many(
    states: &[CompositeState],
    controls: &SampledControls,
    registry: &SectorRegistry,
    policy: &StepPolicy,
) -> Result<Vec<CompositeState>> {
    policy.validate()?;
    check_controls(controls, registry)?;
    if controls.events().iter().any(|(_, e)| !matches!(e, ControlEvent::Marker(_))) {
        return states.iter().map(|s| evolve_sampled(s, controls, registry, policy)).collect();
    }
    let mut out: Vec<CompositeState> = states.iter().map(|_| CompositeState::new()).collect();
    let numbers: std::collections::BTreeSet<usize> = states.iter().flat_map(|s| s.sector_numbers()).collect();
    for n in numbers {
        let owners: Vec<usize> = (0..states.len()).filter(|&i| states[i].sector(n).is_some()).collect();
        let sector = registry.sector(n);
        let dim = sector.dim();
        if dim > BLOCK_DENSE_CAP || 4 * owners.len() < dim {
            let mut engine = SectorEngine::new(registry, policy);
            for &i in &owners {
                let mut amps = states[i].sector(n).expect("owner").to_vec();
                for_each_piece(controls, |det, t| engine.evolve_sector(n, &mut amps, det, t))?;
                out[i].set_sector(n, amps);
            }
            continue;
        }
        let k = owners.len();
        let mut re = DMatrix::from_fn(dim, k, |r, c| states[owners[c]].sector(n).expect("owner")[r].re);
        let mut im = DMatrix::from_fn(dim, k, |r, c| states[owners[c]].sector(n).expect("owner")[r].im);
        let hopping = sector.dense_hopping();
        let mut diag = Vec::new();
        for_each_piece(controls, |det, t| {
            sector.diagonal_into(det, &mut diag);
            let mut h = hopping.clone();
            for (r, d) in diag.iter().enumerate() {
                h[(r, r)] += d;
            }
            let eig = SymmetricEigen::new(h);
            let v = &eig.eigenvectors;
            let a = v.tr_mul(&re);
            let b = v.tr_mul(&im);
            let (mut pa, mut pb) = (a.clone(), b.clone());
            for (row, &e) in eig.eigenvalues.iter().enumerate() {
                let (s, c) = (-e * t).sin_cos();
                for col in 0..k {
                    let (x, y) = (a[(row, col)], b[(row, col)]);
                    pa[(row, col)] = c * x - s * y;
                    pb[(row, col)] = s * x + c * y;
                }
            }
            re = v * pa;
            im = v * pb;
            Ok(())
        })?;
        for (c, &i) in owners.iter().enumerate() {
            out[i].set_sector(n, (0..dim).map(|r| C64::new(re[(r, c)], im[(r, c)])).collect());
        }
    }
    Ok(out)
}

/// Calls `f(detunings, duration)` for every run of identical samples.
fn for_each_piece(controls: &SampledControls, mut f: impl FnMut(&[f64], f64) -> Result<()>) -> Result<()> {
    let n = controls.n_samples();
    let mut k = 0;
    while k < n {
        let mut k2 = k + 1;
        while k2 < n && controls.sample(k2) == controls.sample(k) {
            k2 += 1;
        }
        f(controls.sample(k), (k2 - k) as f64 * controls.dt())?;
        k = k2;
    }
    Ok(())
}

/// Eigenvalues in ascending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigensystem {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl Eigensystem {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, k: usize) -> Vec<C64> {
        self.vectors.column(k).iter().copied().collect()
    }

    /// Expansion coefficients `⟨v_k|x⟩`.
    pub fn coefficients(&self, x: &[C64]) -> Vec<C64> {
        (0..self.dim())
            .map(|k| self.vectors.column(k).iter().zip(x).map(|(v, a)| v.conj() * a).sum())
            .collect()
    }

    /// `Σ_k c_k e^{−iE_k t} v_k`.
    pub fn synthesize(&self, coeffs: &[C64], t: f64) -> Vec<C64> {
        let mut y = vec![ZERO; self.dim()];
        for (k, c) in coeffs.iter().enumerate() {
            if *c == ZERO {
                continue;
            }
            let ck = c * C64::from_polar(1.0, -self.values[k] * t);
            for (yi, v) in y.iter_mut().zip(self.vectors.column(k).iter()) {
                *yi += v * ck;
            }
        }
        y
    }

    /// `e^{−iHt} x`.
    pub fn propagate(&self, t: f64, x: &[C64]) -> Vec<C64> {
        self.synthesize(&self.coefficients(x), t)
    }

    /// Index of the eigenvector with the largest overlap with `x`.
    pub fn max_overlap_index(&self, x: &[C64]) -> usize {
        self.coefficients(x)
            .iter()
            .map(|c| c.norm_sqr())
            .enumerate()
            .fold((0, -1.0), |best, (k, p)| if p > best.1 { (k, p) } else { best })
            .0
    }
}

/// Default dimension cap for dense eigensolves.
pub const DENSE_CAP: usize = 4096;

/// Full spectrum of a Hermitian sector operator.
pub fn eigensolve_sector(h: &SparseOperator) -> Result<Eigensystem> {
    eigensolve_with_cap(h, DENSE_CAP)
}

pub fn eigensolve_with_cap(h: &SparseOperator, cap: usize) -> Result<Eigensystem> {
    let n = h.dim();
    if n > cap {
        return Err(Error::Capability(format!(
            "dimension {n} exceeds the dense cap {cap}; restrict to a smaller sector"
        )));
    }
    let (values, vectors) = if h.is_real() {
        let m = DMatrix::from_fn(n, n, |r, c| h.get(r, c).re);
        let eig = SymmetricEigen::new(m);
        (eig.eigenvalues.iter().copied().collect::<Vec<_>>(), eig.eigenvectors.map(|v| C64::new(v, 0.0)))
    } else {
        let eig = SymmetricEigen::new(h.to_dense());
        (eig.eigenvalues.iter().copied().collect::<Vec<_>>(), eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted_values = order.iter().map(|&k| values[k]).collect();
    let sorted_vectors = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    Ok(Eigensystem {
        values: sorted_values,
        vectors: sorted_vectors,
    })
}

/// Which instantaneous eigenstate a fidelity refers to.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetRank {
    /// Position in the ascending spectrum.
    Index(usize),
    Lowest,
    Highest,
    /// The eigenstate with the largest overlap with this reference.
    MaxOverlapWith(CompositeState),
}

impl TargetRank {
    fn resolve(&self, es: &Eigensystem, n: usize) -> Result<usize> {
        let dim = es.dim();
        match self {
            TargetRank::Index(k) if *k < dim => Ok(*k),
            TargetRank::Index(k) => domain(format!("eigenstate index {k} out of range for dim {dim}")),
            TargetRank::Lowest => Ok(0),
            TargetRank::Highest => Ok(dim - 1),
            TargetRank::MaxOverlapWith(reference) => reference
                .sector(n)
                .map(|v| es.max_overlap_index(v))
                .ok_or_else(|| Error::Domain(format!("reference state has no sector {n}"))),
        }
    }
}

fn check_degeneracy(es: &Eigensystem, k: usize, tol: f64) -> Result<()> {
    let e = es.values[k];
    let neighbours = [k.checked_sub(1), (k + 1 < es.dim()).then_some(k + 1)];
    for j in neighbours.into_iter().flatten() {
        if (es.values[j] - e).abs() < tol {
            return Err(Error::Ambiguous(format!(
                "eigenvalue {k} ({e:.6e}) is degenerate with eigenvalue {j} ({:.6e})",
                es.values[j]
            )));
        }
    }
    Ok(())
}

/// Squared overlap of each sector component with the targeted eigenstate of
/// that sector's Hamiltonian. Overlaps are not renormalized by sector weight.
pub fn adiabatic_fidelity(
    state: &CompositeState,
    hamiltonians: &BTreeMap<usize, SparseOperator>,
    target: &TargetRank,
    degeneracy_tol: f64,
) -> Result<BTreeMap<usize, f64>> {
    let mut out = BTreeMap::new();
    for (&n, h) in hamiltonians {
        let Some(amps) = state.sector(n) else { continue };
        if amps.len() != h.dim() {
            return domain(format!("sector {n}: state dim {} vs operator dim {}", amps.len(), h.dim()));
        }
        let es = eigensolve_sector(h)?;
        let k = target.resolve(&es, n)?;
        check_degeneracy(&es, k, degeneracy_tol)?;
        let overlap: C64 = es.vectors.column(k).iter().zip(amps).map(|(v, a)| v.conj() * a).sum();
        out.insert(n, overlap.norm_sqr());
    }
    Ok(out)
}

/// An eigenstate followed by continuity along a sequence of Hamiltonians.
#[derive(Debug, Clone)]
pub struct TrackedState {
    pub indices: Vec<usize>,
    pub energies: Vec<f64>,
    pub vector: Vec<C64>,
}

/// Follow eigenstate `start` of `path[0]` by maximum overlap between
/// consecutive snapshots. This resolves level crossings and degeneracies the
/// way adiabatic continuation does, rather than by spectral rank.
pub fn track_eigenstate(path: &[SparseOperator], start: usize) -> Result<TrackedState> {
    let first = path.first().ok_or_else(|| Error::Domain("empty Hamiltonian path".into()))?;
    let es = eigensolve_sector(first)?;
    if start >= es.dim() {
        return domain(format!("start index {start} out of range"));
    }
    let mut vector = es.vector(start);
    let mut indices = vec![start];
    let mut energies = vec![es.values[start]];
    for h in &path[1..] {
        let es = eigensolve_sector(h)?;
        let k = es.max_overlap_index(&vector);
        let mut v = es.vector(k);
        // Fix the gauge so the tracked vector varies smoothly.
        let ov = v.iter().zip(&vector).map(|(a, b)| a.conj() * b).sum::<C64>();
        if ov.norm() > 0.0 {
            let ph = ov / ov.norm();
            v.iter_mut().for_each(|a| *a *= ph);
        }
        vector = v;
        indices.push(k);
        energies.push(es.values[k]);
    }
    Ok(TrackedState {
        indices,
        energies,
        vector,
    })
}
