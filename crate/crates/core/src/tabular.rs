//! Tabular bottleneck solvers.
//!
//! Both objectives are minimized by the self-consistent iteration
//!
//! ```text
//! q(z|x) ∝ q(z) exp(-w KL[p(y|x) || q(y|z)])
//! q(z)   = Σ_x p(x) q(z|x)
//! q(y|z) = Σ_x p(x,y) q(z|x) / q(z)
//! ```
//!
//! with prediction weight `w = β` for IB and `w = γ + 1` for CEB, since
//! I(X;Z|Y) - γ I(Y;Z) = I(X;Z) - (γ + 1) I(Y;Z) under Z <- X <-> Y.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::info::{mutual_information, Axis, DiscreteJoint, ThreeWayJoint};
use crate::scalar::Scalar;

/// A row-stochastic channel q(z|x).
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTable<T> {
    nx: usize,
    nz: usize,
    table: Vec<T>,
}

impl<T: Scalar> EncoderTable<T> {
    pub fn new(nx: usize, nz: usize, table: Vec<T>) -> Result<Self> {
        if nx == 0 || nz == 0 || table.len() != nx * nz {
            return Err(Error::Shape(format!("encoder {nx}x{nz} with {} entries", table.len())));
        }
        let enc = Self { nx, nz, table };
        enc.validate()?;
        Ok(enc)
    }

    pub fn from_fn(nx: usize, nz: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let table = (0..nx)
            .flat_map(|x| (0..nz).map(move |z| (x, z)))
            .map(|(x, z)| T::of(f(x, z)))
            .collect();
        Self::new(nx, nz, table)
    }

    /// Rows drawn from a symmetric Dirichlet(1).
    pub fn random_dirichlet<R: Rng + ?Sized>(nx: usize, nz: usize, rng: &mut R) -> Self {
        let mut table = Vec::with_capacity(nx * nz);
        for _ in 0..nx {
            let draws: Vec<f64> = (0..nz).map(|_| Exp1.sample(rng)).collect();
            let total: f64 = draws.iter().sum();
            table.extend(draws.into_iter().map(|d| T::of(d / total)));
        }
        Self { nx, nz, table }
    }

    pub fn validate(&self) -> Result<()> {
        for x in 0..self.nx {
            let row = self.row(x);
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < T::zero()) {
                return Err(Error::InvalidProbability {
                    index: x * self.nz,
                    value: v.as_f64(),
                });
            }
            let sum: T = row.iter().copied().sum();
            if (sum.as_f64() - 1.0).abs() > T::NORM_TOL {
                return Err(Error::RowNotStochastic {
                    row: x,
                    sum: sum.as_f64(),
                });
            }
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn row(&self, x: usize) -> &[T] {
        &self.table[x * self.nz..(x + 1) * self.nz]
    }

    pub fn get(&self, x: usize, z: usize) -> T {
        self.table[x * self.nz + z]
    }

    pub fn table(&self) -> &[T] {
        &self.table
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.table
            .iter()
            .zip(&other.table)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Which tabular objective is being minimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TabularObjective {
    Ib,
    Ceb,
}

impl std::str::FromStr for TabularObjective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ib" => Ok(Self::Ib),
            "ceb" => Ok(Self::Ceb),
            other => Err(Error::InvalidArgument(format!("unknown objective `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Keep a copy of every iterate in the trace.
    pub record_iterates: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iters: 10_000,
            record_iterates: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry<T> {
    pub i_xz: T,
    pub i_yz: T,
    pub objective: T,
}

#[derive(Debug, Clone)]
pub struct SolveTrace<T> {
    /// Entry 0 is the initial encoder; entry k follows the k-th update.
    pub entries: Vec<TraceEntry<T>>,
    pub iterates: Vec<EncoderTable<T>>,
    pub converged: bool,
    pub iterations: usize,
    /// Max-abs change of q(z|x) in the last update.
    pub final_change: T,
}

/// q(z) and q(y|z) (z-major) implied by an encoder.
fn remarginalize<T: Scalar>(j: &DiscreteJoint<T>, enc: &EncoderTable<T>) -> (Vec<T>, Vec<T>) {
    let (nx, ny, nz) = (j.nx(), j.ny(), enc.nz());
    let mut qz = vec![T::zero(); nz];
    let mut qyz = vec![T::zero(); nz * ny];
    for x in 0..nx {
        for z in 0..nz {
            let q = enc.get(x, z);
            for y in 0..ny {
                let w = j.get(x, y) * q;
                qz[z] += w;
                qyz[z * ny + y] += w;
            }
        }
    }
    for z in 0..nz {
        if qz[z].as_f64() > T::LOG_ZERO {
            for y in 0..ny {
                qyz[z * ny + y] /= qz[z];
            }
        }
    }
    (qz, qyz)
}

fn kl_row<T: Scalar>(p: &[T], q: &[T]) -> T {
    let mut acc = T::zero();
    for (&pi, &qi) in p.iter().zip(q) {
        if pi.as_f64() <= T::LOG_ZERO {
            continue;
        }
        if qi.as_f64() <= T::LOG_ZERO {
            return T::infinity();
        }
        acc += pi * (pi / qi).ln();
    }
    acc
}

fn update<T: Scalar>(
    j: &DiscreteJoint<T>,
    enc: &EncoderTable<T>,
    weight: T,
    iteration: usize,
) -> Result<EncoderTable<T>> {
    let (qz, qyz) = remarginalize(j, enc);
    let (ny, nz) = (j.ny(), enc.nz());
    let mut table = Vec::with_capacity(enc.table.len());
    let mut logits = vec![T::zero(); nz];
    for x in 0..j.nx() {
        let pyx = j.conditional_y(x);
        for z in 0..nz {
            logits[z] = if qz[z].as_f64() <= T::LOG_ZERO {
                T::neg_infinity()
            } else {
                qz[z].ln() - weight * kl_row(&pyx, &qyz[z * ny..(z + 1) * ny])
            };
        }
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        if !max.is_finite() {
            return Err(Error::Numerical {
                iteration,
                detail: format!("row {x} has no reachable z"),
            });
        }
        let start = table.len();
        table.extend(logits.iter().map(|&l| (l - max).exp()));
        let total: T = table[start..].iter().copied().sum();
        for v in &mut table[start..] {
            *v /= total;
        }
        if table[start..].iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                iteration,
                detail: format!("non-finite q(z|x) in row {x}"),
            });
        }
    }
    Ok(EncoderTable {
        nx: enc.nx,
        nz,
        table,
    })
}

/// I(X;Z) and I(Y;Z) of the channel `enc` applied to `j`.
pub fn plane_coordinates<T: Scalar>(j: &DiscreteJoint<T>, enc: &EncoderTable<T>) -> Result<(T, T)> {
    let t = ThreeWayJoint::from_channel(j, enc)?;
    Ok((
        t.mutual_information(Axis::X, Axis::Z),
        t.mutual_information(Axis::Y, Axis::Z),
    ))
}

fn run<T: Scalar>(
    j: &DiscreteJoint<T>,
    weight: T,
    init: &EncoderTable<T>,
    opts: &SolveOptions,
    objective: impl Fn(T, T) -> T,
) -> Result<(EncoderTable<T>, SolveTrace<T>)> {
    if init.nx() != j.nx() {
        return Err(Error::Shape(format!(
            "init encoder has {} rows, joint has {}",
            init.nx(),
            j.nx()
        )));
    }
    init.validate()?;
    let entry = |enc: &EncoderTable<T>| -> Result<TraceEntry<T>> {
        let (i_xz, i_yz) = plane_coordinates(j, enc)?;
        Ok(TraceEntry {
            i_xz,
            i_yz,
            objective: objective(i_xz, i_yz),
        })
    };
    let mut enc = init.clone();
    let mut trace = SolveTrace {
        entries: vec![entry(&enc)?],
        iterates: if opts.record_iterates { vec![enc.clone()] } else { Vec::new() },
        converged: false,
        iterations: 0,
        final_change: T::infinity(),
    };
    let tol = T::of(opts.tol);
    for it in 1..=opts.max_iters {
        let next = update(j, &enc, weight, it)?;
        let change = next.max_abs_diff(&enc);
        enc = next;
        trace.entries.push(entry(&enc)?);
        if opts.record_iterates {
            trace.iterates.push(enc.clone());
        }
        trace.iterations = it;
        trace.final_change = change;
        if change <= tol {
            trace.converged = true;
            break;
        }
    }
    Ok((enc, trace))
}

/// Minimizes I(X;Z) - β I(Y;Z) from `init`; the cardinality of Z is `init.nz()`.
pub fn ib_solve<T: Scalar>(
    j: &DiscreteJoint<T>,
    beta: T,
    init: &EncoderTable<T>,
    opts: &SolveOptions,
) -> Result<(EncoderTable<T>, SolveTrace<T>)> {
    if !(beta > T::zero()) || !beta.is_finite() {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    run(j, beta, init, opts, |i_xz, i_yz| i_xz - beta * i_yz)
}

/// Minimizes I(X;Z|Y) - γ I(Y;Z) with γ = e^ρ.
pub fn ceb_solve<T: Scalar>(
    j: &DiscreteJoint<T>,
    rho: T,
    init: &EncoderTable<T>,
    opts: &SolveOptions,
) -> Result<(EncoderTable<T>, SolveTrace<T>)> {
    if !rho.is_finite() {
        return Err(Error::InvalidArgument(format!("rho must be finite, got {rho}")));
    }
    let gamma = rho.exp();
    run(j, gamma + T::one(), init, opts, |i_xz, i_yz| {
        (i_xz - i_yz) - gamma * i_yz
    })
}

/// One point of an information-plane sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub rho: f64,
    pub i_xz: f64,
    pub i_yz: f64,
    pub residual: f64,
    pub objective: f64,
    pub converged: bool,
    pub restart: usize,
    /// Set when every restart at this ρ failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Cardinality of Z; `None` uses |Y|.
    pub z_cardinality: Option<usize>,
    pub solve: SolveOptions,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            seed: 0,
            z_cardinality: None,
            solve: SolveOptions::default(),
        }
    }
}

/// The `restart`-th initial encoder of a sweep; shared across all ρ.
pub fn restart_init<T: Scalar>(nx: usize, nz: usize, seed: u64, restart: usize) -> EncoderTable<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    EncoderTable::random_dirichlet(nx, nz, &mut rng)
}

/// Solves at every ρ keeping the best of `restarts` random inits.
///
/// Ties on the objective go to the lower restart index. A ρ whose restarts all
/// fail yields a point with `error` set and NaN coordinates.
pub fn plane_sweep<T: Scalar>(
    j: &DiscreteJoint<T>,
    rhos: &[f64],
    objective: TabularObjective,
    opts: &SweepOptions,
) -> Result<Vec<PlanePoint>> {
    if rhos.is_empty() {
        return Err(Error::InvalidArgument("empty rho grid".into()));
    }
    if opts.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let nz = opts.z_cardinality.unwrap_or(j.ny());
    let inits: Vec<EncoderTable<T>> = (0..opts.restarts)
        .map(|r| restart_init(j.nx(), nz, opts.seed, r))
        .collect();
    let points = rhos
        .iter()
        .map(|&rho| {
            let mut best: Option<PlanePoint> = None;
            let mut last_err = None;
            for (r, init) in inits.iter().enumerate() {
                let solved = match objective {
                    TabularObjective::Ceb => ceb_solve(j, T::of(rho), init, &opts.solve),
                    TabularObjective::Ib => ib_solve(j, T::of(rho.exp() + 1.0), init, &opts.solve),
                };
                match solved {
                    Ok((_, trace)) => {
                        let last = *trace.entries.last().expect("trace has the initial entry");
                        let cand = PlanePoint {
                            rho,
                            i_xz: last.i_xz.as_f64(),
                            i_yz: last.i_yz.as_f64(),
                            residual: (last.i_xz - last.i_yz).as_f64(),
                            objective: last.objective.as_f64(),
                            converged: trace.converged,
                            restart: r,
                            error: None,
                        };
                        if best.as_ref().is_none_or(|b| cand.objective < b.objective) {
                            best = Some(cand);
                        }
                    }
                    Err(e) => last_err = Some(e.to_string()),
                }
            }
            best.unwrap_or(PlanePoint {
                rho,
                i_xz: f64::NAN,
                i_yz: f64::NAN,
                residual: f64::NAN,
                objective: f64::NAN,
                converged: false,
                restart: 0,
                error: last_err,
            })
        })
        .collect();
    Ok(points)
}

/// I(X;Y) of the joint, the ceiling for every plane point's I(Y;Z).
pub fn predictive_ceiling<T: Scalar>(j: &DiscreteJoint<T>) -> T {
    mutual_information(j)
}
