//! Exact information quantities on finite discrete distributions.
//!
//! Everything is in nats. Probabilities at or below [`Scalar::LOG_ZERO`] are
//! treated as exact zeros wherever a logarithm is taken.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tabular::EncoderTable;

fn check_mass<T: Scalar>(values: &[T]) -> Result<()> {
    let mut total = 0.0;
    for (index, v) in values.iter().enumerate() {
        let v = v.as_f64();
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidProbability { index, value: v });
        }
        total += v;
    }
    if (total - 1.0).abs() > T::NORM_TOL {
        return Err(Error::NotNormalized(total));
    }
    Ok(())
}

/// A normalized distribution over a finite alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector<T> {
    probs: Vec<T>,
}

impl<T: Scalar> ProbVector<T> {
    pub fn new(probs: Vec<T>) -> Result<Self> {
        check_mass(&probs)?;
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        let p = T::one() / T::of(n as f64);
        Self { probs: vec![p; n] }
    }

    /// Empirical distribution of `labels` over `n` classes.
    pub fn empirical(labels: &[usize], n: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("no labels".into()));
        }
        let mut counts = vec![0usize; n];
        for &l in labels {
            if l >= n {
                return Err(Error::InvalidArgument(format!("label {l} outside 0..{n}")));
            }
            counts[l] += 1;
        }
        let total = T::of(labels.len() as f64);
        Ok(Self {
            probs: counts.into_iter().map(|c| T::of(c as f64) / total).collect(),
        })
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Shannon entropy of `p` in nats.
pub fn entropy<T: Scalar>(p: &ProbVector<T>) -> T {
    raw_entropy(p.probs())
}

fn raw_entropy<T: Scalar>(probs: &[T]) -> T {
    let h = -probs.iter().map(|&p| p.xlogx()).sum::<T>();
    if h < T::zero() {
        T::zero()
    } else {
        h
    }
}

/// Joint distribution p(x, y) stored row-major with x indexing rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "JointJson", into = "JointJson", bound = "T: Scalar")]
pub struct DiscreteJoint<T: Scalar> {
    nx: usize,
    ny: usize,
    table: Vec<T>,
}

#[derive(Serialize, Deserialize)]
struct JointJson {
    table: Vec<Vec<f64>>,
}

impl<T: Scalar> TryFrom<JointJson> for DiscreteJoint<T> {
    type Error = Error;

    fn try_from(value: JointJson) -> Result<Self> {
        DiscreteJoint::from_rows(
            &value
                .table
                .into_iter()
                .map(|r| r.into_iter().map(T::of).collect())
                .collect::<Vec<Vec<T>>>(),
        )
    }
}

impl<T: Scalar> From<DiscreteJoint<T>> for JointJson {
    fn from(j: DiscreteJoint<T>) -> Self {
        JointJson {
            table: (0..j.nx)
                .map(|x| j.row(x).iter().map(|v| v.as_f64()).collect())
                .collect(),
        }
    }
}

impl<T: Scalar> DiscreteJoint<T> {
    pub fn new(nx: usize, ny: usize, table: Vec<T>) -> Result<Self> {
        if nx == 0 || ny == 0 || table.len() != nx * ny {
            return Err(Error::Shape(format!(
                "joint of {nx}x{ny} needs {} entries, got {}",
                nx * ny,
                table.len()
            )));
        }
        check_mass(&table)?;
        Ok(Self { nx, ny, table })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let nx = rows.len();
        let ny = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ny) {
            return Err(Error::Shape("ragged joint table".into()));
        }
        Self::new(nx, ny, rows.concat())
    }

    /// Normalizes a table of non-negative weights.
    pub fn from_weights(nx: usize, ny: usize, weights: Vec<T>) -> Result<Self> {
        let total: T = weights.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::InvalidArgument("weights must have positive mass".into()));
        }
        Self::new(nx, ny, weights.into_iter().map(|w| w / total).collect())
    }

    /// Product distribution p(x) p(y).
    pub fn independent(px: &ProbVector<T>, py: &ProbVector<T>) -> Self {
        let table = px
            .probs()
            .iter()
            .flat_map(|&a| py.probs().iter().map(move |&b| a * b))
            .collect();
        Self {
            nx: px.len(),
            ny: py.len(),
            table,
        }
    }

    /// Uniform x over `nx` values, each mapped to label `x % ny`.
    pub fn uniform_deterministic(nx: usize, ny: usize) -> Result<Self> {
        let mut w = vec![T::zero(); nx * ny];
        for x in 0..nx {
            w[x * ny + x % ny] = T::one();
        }
        Self::from_weights(nx, ny, w)
    }

    /// Uniform x with the correct label `x % ny` kept with probability
    /// `1 - noise` and the rest spread evenly over the other labels.
    pub fn noisy_deterministic(nx: usize, ny: usize, noise: f64) -> Result<Self> {
        let mut w = vec![T::zero(); nx * ny];
        let off = if ny > 1 { noise / (ny - 1) as f64 } else { 0.0 };
        for x in 0..nx {
            for y in 0..ny {
                w[x * ny + y] = T::of(if y == x % ny { 1.0 - noise } else { off });
            }
        }
        Self::from_weights(nx, ny, w)
    }

    /// Random table with i.i.d. uniform weights.
    pub fn random<R: Rng + ?Sized>(nx: usize, ny: usize, rng: &mut R) -> Self {
        let w = (0..nx * ny)
            .map(|_| T::of(rng.random::<f64>() + 1e-3))
            .collect();
        Self::from_weights(nx, ny, w).expect("positive weights")
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.table[x * self.ny + y]
    }

    pub fn row(&self, x: usize) -> &[T] {
        &self.table[x * self.ny..(x + 1) * self.ny]
    }

    pub fn table(&self) -> &[T] {
        &self.table
    }

    pub fn marginal_x(&self) -> ProbVector<T> {
        ProbVector {
            probs: (0..self.nx).map(|x| self.row(x).iter().copied().sum()).collect(),
        }
    }

    pub fn marginal_y(&self) -> ProbVector<T> {
        ProbVector {
            probs: (0..self.ny)
                .map(|y| (0..self.nx).map(|x| self.get(x, y)).sum())
                .collect(),
        }
    }

    /// p(y|x) for row `x`; uniform when p(x) = 0.
    pub fn conditional_y(&self, x: usize) -> Vec<T> {
        let row = self.row(x);
        let px: T = row.iter().copied().sum();
        if px.as_f64() <= T::LOG_ZERO {
            return vec![T::one() / T::of(self.ny as f64); self.ny];
        }
        row.iter().map(|&v| v / px).collect()
    }

    pub fn joint_entropy(&self) -> T {
        raw_entropy(&self.table)
    }

    pub fn transpose(&self) -> Self {
        let mut table = Vec::with_capacity(self.table.len());
        for y in 0..self.ny {
            for x in 0..self.nx {
                table.push(self.get(x, y));
            }
        }
        Self {
            nx: self.ny,
            ny: self.nx,
            table,
        }
    }

    /// Reads a table from CSV without a header: one row per x value.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map(T::of)
                        .map_err(|e| Error::InvalidArgument(format!("bad cell `{f}`: {e}")))
                })
                .collect::<Result<Vec<T>>>()?;
            rows.push(row);
        }
        Self::from_rows(&rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        for x in 0..self.nx {
            wtr.write_record(self.row(x).iter().map(|v| format!("{}", v.as_f64())))?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Loads `.json` files as JSON and anything else as CSV.
    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        if path.extension().is_some_and(|e| e == "json") {
            Ok(serde_json::from_reader(file)?)
        } else {
            Self::read_csv(file)
        }
    }
}

/// I(X;Y) = H(X) + H(Y) - H(X,Y).
pub fn mutual_information<T: Scalar>(j: &DiscreteJoint<T>) -> T {
    let mi = entropy(&j.marginal_x()) + entropy(&j.marginal_y()) - j.joint_entropy();
    mi.max(T::zero())
}

/// Which variable of a three-way joint is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl TryFrom<usize> for Axis {
    type Error = Error;

    fn try_from(value: usize) -> Result<Self> {
        match value {
            0 => Ok(Axis::X),
            1 => Ok(Axis::Y),
            2 => Ok(Axis::Z),
            other => Err(Error::InvalidAxis(format!("{other} (expected 0, 1 or 2)"))),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::InvalidAxis(other.to_string())),
        }
    }
}

/// p(x, y, z) over X×Y×Z, stored with z varying fastest.
#[derive(Debug, Clone)]
pub struct ThreeWayJoint<T: Scalar> {
    dims: [usize; 3],
    table: Vec<T>,
    markov: bool,
}

impl<T: Scalar> ThreeWayJoint<T> {
    pub fn new(dims: [usize; 3], table: Vec<T>) -> Result<Self> {
        if dims.contains(&0) || table.len() != dims.iter().product::<usize>() {
            return Err(Error::Shape(format!("three-way joint {dims:?} vs {} entries", table.len())));
        }
        check_mass(&table)?;
        Ok(Self {
            dims,
            table,
            markov: false,
        })
    }

    /// p(x,y) q(z|x): the Markov chain Z <- X <-> Y.
    pub fn from_channel(joint: &DiscreteJoint<T>, encoder: &EncoderTable<T>) -> Result<Self> {
        if encoder.nx() != joint.nx() {
            return Err(Error::Shape(format!(
                "encoder has {} inputs, joint has {}",
                encoder.nx(),
                joint.nx()
            )));
        }
        let (nx, ny, nz) = (joint.nx(), joint.ny(), encoder.nz());
        let mut table = Vec::with_capacity(nx * ny * nz);
        for x in 0..nx {
            for y in 0..ny {
                let pxy = joint.get(x, y);
                table.extend(encoder.row(x).iter().map(|&q| pxy * q));
            }
        }
        Ok(Self {
            dims: [nx, ny, nz],
            table,
            markov: true,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn is_markov(&self) -> bool {
        self.markov
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> T {
        let [_, ny, nz] = self.dims;
        self.table[(x * ny + y) * nz + z]
    }

    /// Marginal over the pair of axes `(a, b)` as a joint with `a` on rows.
    pub fn pair(&self, a: Axis, b: Axis) -> DiscreteJoint<T> {
        let idx = |ax: Axis| ax as usize;
        let (na, nb) = (self.dims[idx(a)], self.dims[idx(b)]);
        let mut table = vec![T::zero(); na * nb];
        let [nx, ny, nz] = self.dims;
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let c = [x, y, z];
                    table[c[idx(a)] * nb + c[idx(b)]] += self.get(x, y, z);
                }
            }
        }
        DiscreteJoint {
            nx: na,
            ny: nb,
            table,
        }
    }

    pub fn mutual_information(&self, a: Axis, b: Axis) -> T {
        mutual_information(&self.pair(a, b))
    }
}

/// I(A;B|C) where C is `conditioned` and A, B are the two remaining axes.
pub fn conditional_mi<T: Scalar>(j: &ThreeWayJoint<T>, conditioned: Axis) -> T {
    let (a, b) = match conditioned {
        Axis::X => (Axis::Y, Axis::Z),
        Axis::Y => (Axis::X, Axis::Z),
        Axis::Z => (Axis::X, Axis::Y),
    };
    let h_ac = j.pair(a, conditioned).joint_entropy();
    let h_bc = j.pair(b, conditioned).joint_entropy();
    let h_c = entropy(&j.pair(conditioned, a).marginal_x());
    let h_abc = raw_entropy(&j.table);
    (h_ac + h_bc - h_abc - h_c).max(T::zero())
}

/// The four entropies entering the consistency metric, in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimates<T> {
    pub h_z: T,
    pub h_z_given_y: T,
    pub h_y: T,
    pub h_y_given_z: T,
}

impl<T: Scalar> EntropyEstimates<T> {
    /// Exact entropies of a joint p(y, z) with y on rows.
    pub fn exact(p_yz: &DiscreteJoint<T>) -> Self {
        let h_yz = p_yz.joint_entropy();
        let h_y = entropy(&p_yz.marginal_x());
        let h_z = entropy(&p_yz.marginal_y());
        Self {
            h_z,
            h_z_given_y: h_yz - h_y,
            h_y,
            h_y_given_z: h_yz - h_z,
        }
    }
}

/// |H(Z) - H(Z|Y) - H(Y) + H(Y|Z)|: zero when both estimates of I(Y;Z) agree.
pub fn consistency_metric<T: Scalar>(e: &EntropyEstimates<T>) -> T {
    (e.h_z - e.h_z_given_y - e.h_y + e.h_y_given_z).abs()
}

/// Distances from the point where I(X;Y) = I(X;Z) = I(Y;Z).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MniGaps<T> {
    /// I(X;Z) - I(Y;Z), the residual information I(X;Z|Y) under the Markov chain.
    pub residual: T,
    /// I(X;Y) - I(Y;Z), predictive information still missing from Z.
    pub necessity_gap: T,
}

impl<T: Scalar> MniGaps<T> {
    pub fn at_mni(&self, tol: T) -> bool {
        self.residual.abs() <= tol && self.necessity_gap.abs() <= tol
    }
}

pub fn mni_gaps<T: Scalar>(i_xz: T, i_yz: T, i_xy: T) -> MniGaps<T> {
    MniGaps {
        residual: i_xz - i_yz,
        necessity_gap: i_xy - i_yz,
    }
}

/// I(Y;Z) / I(X;Z) for the channel `encoder`; zero when I(X;Z) vanishes.
pub fn eta_ratio<T: Scalar>(j: &DiscreteJoint<T>, encoder: &EncoderTable<T>) -> Result<T> {
    let t = ThreeWayJoint::from_channel(j, encoder)?;
    let i_xz = t.mutual_information(Axis::X, Axis::Z);
    if i_xz.as_f64() <= 1e-12 {
        return Ok(T::zero());
    }
    Ok(t.mutual_information(Axis::Y, Axis::Z) / i_xz)
}

/// Largest [`eta_ratio`] seen over `trials` random channels with `nz` outputs.
///
/// A certificate that the ratio stays below 1 on `j`, not the exact supremum.
pub fn eta_search<T: Scalar, R: Rng + ?Sized>(
    j: &DiscreteJoint<T>,
    nz: usize,
    trials: usize,
    rng: &mut R,
) -> Result<T> {
    let mut best = T::zero();
    for _ in 0..trials {
        let enc = EncoderTable::random_dirichlet(j.nx(), nz, rng);
        best = best.max(eta_ratio(j, &enc)?);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sum_oracle(j: &DiscreteJoint<f64>) -> f64 {
        let px = j.marginal_x();
        let py = j.marginal_y();
        let mut acc = 0.0;
        for x in 0..j.nx() {
            for y in 0..j.ny() {
                let p = j.get(x, y);
                if p > 0.0 {
                    acc += p * (p / (px.probs()[x] * py.probs()[y])).ln();
                }
            }
        }
        acc
    }

    #[test]
    fn entropy_examples() {
        let u = ProbVector::<f64>::uniform(10);
        assert!((entropy(&u) - 10f64.ln()).abs() < 1e-12);
        assert!((entropy(&u) - std::f64::consts::LN_10).abs() < 1e-4);
        let delta = ProbVector::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(entropy(&delta), 0.0);
        let coin = ProbVector::new(vec![0.5f64, 0.5]).unwrap();
        assert!((entropy(&coin) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_vector_is_rejected() {
        assert!(matches!(
            ProbVector::new(vec![0.5f64, 0.6]),
            Err(Error::NotNormalized(_))
        ));
        assert!(matches!(
            ProbVector::new(vec![1.5f64, -0.5]),
            Err(Error::InvalidProbability { index: 1, .. })
        ));
    }

    #[test]
    fn mi_of_product_and_bijection() {
        let px = ProbVector::new(vec![0.2f64, 0.3, 0.5]).unwrap();
        let py = ProbVector::new(vec![0.6f64, 0.4]).unwrap();
        assert!(mutual_information(&DiscreteJoint::independent(&px, &py)).abs() < 1e-12);
        let bij = DiscreteJoint::<f64>::uniform_deterministic(4, 4).unwrap();
        assert!((mutual_information(&bij) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mi_matches_double_sum_random_3x3() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let j = DiscreteJoint::<f64>::random(3, 3, &mut rng);
        assert!((mutual_information(&j) - sum_oracle(&j)).abs() < 1e-12);
    }

    #[test]
    fn mi_matches_oracle_up_to_16x16() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for nx in 1..=16 {
            for ny in [1, 2, 5, 16] {
                let j = DiscreteJoint::<f64>::random(nx, ny, &mut rng);
                let mi = mutual_information(&j);
                assert!((mi - sum_oracle(&j)).abs() < 1e-12, "{nx}x{ny}");
                let hx = entropy(&j.marginal_x());
                let hy = entropy(&j.marginal_y());
                assert!(mi <= hx.min(hy) + 1e-9);
            }
        }
    }

    fn triple_sum(t: &ThreeWayJoint<f64>) -> f64 {
        // I(X;Z|Y) written out term by term.
        let [nx, ny, nz] = t.dims();
        let pxy = t.pair(Axis::X, Axis::Y);
        let pyz = t.pair(Axis::Y, Axis::Z);
        let py = pxy.marginal_y();
        let mut acc = 0.0;
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    let p = t.get(x, y, z);
                    if p > 0.0 {
                        acc += p * (p * py.probs()[y] / (pxy.get(x, y) * pyz.get(y, z))).ln();
                    }
                }
            }
        }
        acc
    }

    #[test]
    fn conditional_mi_matches_triple_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Vec<f64> = (0..3 * 4 * 2).map(|_| rng.random::<f64>() + 0.01).collect();
        let s: f64 = w.iter().sum();
        let t = ThreeWayJoint::new([3, 4, 2], w.iter().map(|v| v / s).collect()).unwrap();
        assert!((conditional_mi(&t, Axis::Y) - triple_sum(&t)).abs() < 1e-12);
    }

    #[test]
    fn chain_rule_on_markov_joint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let j = DiscreteJoint::<f64>::random(4, 3, &mut rng);
        let enc = EncoderTable::random_dirichlet(4, 3, &mut rng);
        let t = ThreeWayJoint::from_channel(&j, &enc).unwrap();
        assert!(t.is_markov());
        assert!(conditional_mi(&t, Axis::X) < 1e-9);
        let lhs = conditional_mi(&t, Axis::Y);
        let rhs = t.mutual_information(Axis::X, Axis::Z) - t.mutual_information(Axis::Y, Axis::Z);
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn axis_parsing() {
        assert!(Axis::try_from(3).is_err());
        assert_eq!("Y".parse::<Axis>().unwrap(), Axis::Y);
        assert!("w".parse::<Axis>().is_err());
    }

    #[test]
    fn consistency_examples() {
        let e = EntropyEstimates {
            h_z: 2.0f64,
            h_z_given_y: 1.0,
            h_y: 2.5,
            h_y_given_z: 1.5,
        };
        assert!(consistency_metric(&e) < 1e-12);
        let e = EntropyEstimates { h_y_given_z: 1.25, ..e };
        assert!((consistency_metric(&e) - 0.25).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = DiscreteJoint::<f64>::random(5, 6, &mut rng);
        assert!(consistency_metric(&EntropyEstimates::exact(&p)) < 1e-12);
    }

    #[test]
    fn mni_gap_examples() {
        let g = mni_gaps(std::f64::consts::LN_10, std::f64::consts::LN_10, std::f64::consts::LN_10);
        assert!(g.at_mni(1e-12));
        let g = mni_gaps(3.0f64, 2.0, 2.25);
        assert!((g.residual - 1.0).abs() < 1e-12);
        assert!((g.necessity_gap - 0.25).abs() < 1e-12);
        assert!(mni_gaps(0.0f64, 0.0, 0.0).at_mni(0.0));
    }

    #[test]
    fn eta_examples() {
        // Z is an exact copy of the label of a deterministic map.
        let j = DiscreteJoint::<f64>::uniform_deterministic(8, 4).unwrap();
        let copy = EncoderTable::from_fn(8, 4, |x, z| if z == x % 4 { 1.0 } else { 0.0 }).unwrap();
        assert!((eta_ratio(&j, &copy).unwrap() - 1.0).abs() < 1e-12);

        let px = ProbVector::new(vec![0.25f64; 4]).unwrap();
        let py = ProbVector::new(vec![0.1f64, 0.9]).unwrap();
        let ind = DiscreteJoint::independent(&px, &py);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = EncoderTable::random_dirichlet(4, 3, &mut rng);
        assert!(eta_ratio(&ind, &enc).unwrap().abs() < 1e-9);
    }

    #[test]
    fn eta_bound_on_noisy_joint() {
        let j = DiscreteJoint::<f64>::noisy_deterministic(4, 4, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        let best = eta_search(&j, 4, 1000, &mut rng).unwrap();
        assert!(best < 1.0, "max ratio {best}");
    }

    #[test]
    fn csv_and_json_roundtrip() {
        let j = DiscreteJoint::<f64>::noisy_deterministic(3, 2, 0.1).unwrap();
        let mut buf = Vec::new();
        j.write_csv(&mut buf).unwrap();
        let back = DiscreteJoint::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, j);
        let s = serde_json::to_string(&j).unwrap();
        assert!(s.starts_with("{\"table\":[["));
        let back: DiscreteJoint<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, j);
        assert!(serde_json::from_str::<DiscreteJoint<f64>>("{\"table\":[[0.5,0.6]]}").is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let j = DiscreteJoint::<f32>::uniform_deterministic(4, 4).unwrap();
        assert!((mutual_information(&j) - 4f32.ln()).abs() < 1e-5);
    }
}
