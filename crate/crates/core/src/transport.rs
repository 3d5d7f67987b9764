//! One-dimensional optimal transport through inverse cumulative distributions.
//!
//! A raw profile `s` of length `N` is augmented to `N + 2` cells by
//! prepending `0.0` and `1.0`, normalized to a probability vector, summed into
//! a cdf on the uniform node grid `x_1 = x_min < ... < x_{N+2} = x_max` and
//! inverted by piecewise-linear interpolation onto a uniform probability grid
//! `p_1 = 0 < ... < p_M = 1`. In that representation the W2 distance is an L2
//! norm and barycenters are convex combinations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simplex::SimplexWeights;

/// Number of cells prepended by [`augment`].
pub const AUGMENTED_CELLS: usize = 2;

/// Spatial interval carrying the distributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: f64,
    pub x_max: f64,
}

impl Domain {
    pub const UNIT: Domain = Domain { x_min: 0.0, x_max: 1.0 };

    pub fn new(x_min: f64, x_max: f64) -> Result<Self> {
        if !(x_min < x_max) {
            return Err(Error::InvalidInput(format!(
                "domain requires x_min < x_max, got ({x_min}, {x_max})"
            )));
        }
        Ok(Self { x_min, x_max })
    }

    /// `n` equispaced nodes including both ends.
    pub fn nodes(&self, n: usize) -> Vec<f64> {
        uniform_nodes(self.x_min, self.x_max, n)
    }
}

fn uniform_nodes(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| a + i as f64 * h).collect();
            v[n - 1] = b;
            v
        }
    }
}

/// Probability vector on the augmented grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDensity {
    pub values: Vec<f64>,
    /// Sum of the raw (pre-augmentation) cell values.
    pub raw_sum: f64,
}

/// Cumulative sums on the spatial node grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteCdf {
    pub values: Vec<f64>,
}

/// Generalized inverse of a cdf sampled on a uniform probability grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteIcdf {
    pub values: Vec<f64>,
}

impl DiscreteIcdf {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_monotone(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }
}

/// Prepend the `0.0` and `1.0` cells.
pub fn augment(raw: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(raw.len() + AUGMENTED_CELLS);
    out.push(0.0);
    out.push(1.0);
    out.extend_from_slice(raw);
    out
}

pub fn normalize(aug: &[f64]) -> Result<AugmentedDensity> {
    if aug.len() < AUGMENTED_CELLS {
        return Err(Error::InvalidInput(
            "augmented vector shorter than the augmentation".into(),
        ));
    }
    if let Some(v) = aug.iter().find(|&&v| !(v >= 0.0 && v.is_finite())) {
        return Err(Error::InvalidInput(format!("negative or non-finite density value {v}")));
    }
    let total: f64 = aug.iter().sum();
    if total <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(AugmentedDensity {
        values: aug.iter().map(|v| v / total).collect(),
        raw_sum: aug[AUGMENTED_CELLS..].iter().sum(),
    })
}

/// Running sums, rescaled by the final sum so that the flat tail equals 1
/// exactly instead of `1 - eps`.
pub fn cdf(u: &AugmentedDensity) -> DiscreteCdf {
    let mut acc = 0.0;
    let mut values: Vec<f64> = u
        .values
        .iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect();
    if acc > 0.0 {
        values.iter_mut().for_each(|v| *v /= acc);
    }
    DiscreteCdf { values }
}

/// Invert the nondecreasing samples `f` taken at increasing `nodes`,
/// evaluated at the sorted `queries`. For each query `q` the smallest index
/// `i >= 1` with `f[i] >= q` is located and the value is interpolated
/// linearly on `[nodes[i-1], nodes[i]]`. Flat segments return the left node.
/// Queries beyond the last sample return the last node. One pass over both
/// arrays.
fn generalized_inverse(nodes: &[f64], f: &[f64], queries: &[f64]) -> Vec<f64> {
    debug_assert_eq!(nodes.len(), f.len());
    let last = nodes.len() - 1;
    let mut i = 1;
    queries
        .iter()
        .map(|&q| {
            while i <= last && f[i] < q {
                i += 1;
            }
            if i > last {
                return nodes[last];
            }
            let (f0, f1) = (f[i - 1], f[i]);
            let (x0, x1) = (nodes[i - 1], nodes[i]);
            if f1 <= f0 {
                return x0;
            }
            let theta = ((q - f0) / (f1 - f0)).clamp(0.0, 1.0);
            x0 + (x1 - x0) * theta
        })
        .collect()
}

/// Sample the generalized inverse of `c` on `m` uniform probability nodes.
pub fn icdf(c: &DiscreteCdf, m: usize, domain: Domain) -> Result<DiscreteIcdf> {
    if m < 2 {
        return Err(Error::InvalidInput(format!("icdf needs M >= 2, got {m}")));
    }
    if c.values.len() < 2 {
        return Err(Error::InvalidInput("cdf needs at least 2 nodes".into()));
    }
    let x = domain.nodes(c.values.len());
    let p = uniform_nodes(0.0, 1.0, m);
    Ok(DiscreteIcdf {
        values: generalized_inverse(&x, &c.values, &p),
    })
}

/// Re-invert an icdf onto `n_out` spatial nodes, giving an approximate cdf.
pub fn invert_icdf(ic: &DiscreteIcdf, n_out: usize, domain: Domain) -> Result<DiscreteCdf> {
    if ic.len() < 2 || n_out < 2 {
        return Err(Error::InvalidInput("inversion needs at least 2 nodes".into()));
    }
    let p = uniform_nodes(0.0, 1.0, ic.len());
    let x = domain.nodes(n_out);
    Ok(DiscreteCdf {
        values: generalized_inverse(&p, &ic.values, &x),
    })
}

/// First-order backward differences, `u_1 = cdf_1`.
pub fn pdf_from_cdf(c: &DiscreteCdf) -> Vec<f64> {
    let mut prev = 0.0;
    c.values
        .iter()
        .map(|&v| {
            let d = v - prev;
            prev = v;
            d
        })
        .collect()
}

/// Root mean square of `a - b`: the L2 norm on a uniform grid with weight `1 / len`.
pub fn discrete_l2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

pub fn w2_distance(a: &DiscreteIcdf, b: &DiscreteIcdf) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(discrete_l2(&a.values, &b.values))
}

/// Pointwise convex combination of atom icdfs.
pub fn barycenter(atoms: &[DiscreteIcdf], w: &SimplexWeights) -> Result<DiscreteIcdf> {
    if atoms.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: atoms.len(),
            got: w.len(),
        });
    }
    let m = atoms.first().map_or(0, DiscreteIcdf::len);
    let mut out = vec![0.0; m];
    for (atom, &lambda) in atoms.iter().zip(w.values()) {
        if atom.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: atom.len(),
            });
        }
        if lambda == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(&atom.values) {
            *o += lambda * a;
        }
    }
    Ok(DiscreteIcdf { values: out })
}

/// Euclidean norm of `iicdf - cdf` for one snapshot: the cdf of the augmented
/// profile against its re-inversion through an `m`-node icdf.
pub fn round_trip_error(raw: &[f64], m: usize, domain: Domain) -> Result<f64> {
    let c = cdf(&normalize(&augment(raw))?);
    let back = invert_icdf(&icdf(&c, m, domain)?, c.values.len(), domain)?;
    Ok(c.values
        .iter()
        .zip(&back.values)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Full forward pipeline: augment, normalize, cdf, icdf with `m` nodes.
pub fn profile_to_icdf(raw: &[f64], m: usize, domain: Domain) -> Result<DiscreteIcdf> {
    let u = normalize(&augment(raw))?;
    icdf(&cdf(&u), m, domain)
}

/// Backward pipeline: invert, differentiate, drop the augmentation cells and
/// rescale so that `sum(out) * dx == mass`. Returns `n_raw` values.
pub fn icdf_to_profile(ic: &DiscreteIcdf, n_raw: usize, mass: f64, dx: f64, domain: Domain) -> Result<Vec<f64>> {
    let c = invert_icdf(ic, n_raw + AUGMENTED_CELLS, domain)?;
    let u = pdf_from_cdf(&c);
    let retained: f64 = u[AUGMENTED_CELLS..].iter().map(|v| v.max(0.0)).sum();
    if mass <= 0.0 || retained <= 0.0 {
        return Ok(vec![0.0; n_raw]);
    }
    let scale = mass / (retained * dx);
    Ok(u[AUGMENTED_CELLS..].iter().map(|v| v.max(0.0) * scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(n: usize, height: f64, right: f64) -> Vec<f64> {
        // cell i covers [i/n, (i+1)/n]; full cells inside [0, right]
        (0..n)
            .map(|i| {
                if ((i as f64 + 0.5) / n as f64) < right {
                    height
                } else {
                    0.0
                }
            })
            .collect()
    }

    #[test]
    fn augment_examples() {
        assert_eq!(augment(&[0.0, 0.0, 0.0]), vec![0.0, 1.0, 0.0, 0.0, 0.0]);
        let raw = [0.3, 0.2, 0.5];
        let s: f64 = augment(&raw).iter().sum();
        assert!((s - 2.0).abs() < 1e-15);
    }

    #[test]
    fn normalize_examples() {
        let u = normalize(&[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(u.values, vec![0.0, 1.0, 0.0, 0.0]);
        let a = [0.0, 1.0, 0.25, 0.5];
        let scaled: Vec<f64> = a.iter().map(|v| 7.0 * v).collect();
        let (ua, us) = (normalize(&a).unwrap(), normalize(&scaled).unwrap());
        for (x, y) in ua.values.iter().zip(&us.values) {
            assert!((x - y).abs() < 1e-16);
        }
        assert!(matches!(normalize(&[0.0, 0.0, 0.0]), Err(Error::ZeroMass)));
    }

    #[test]
    fn cdf_examples() {
        let ind = AugmentedDensity {
            values: vec![0.0, 0.0, 1.0, 0.0],
            raw_sum: 1.0,
        };
        assert_eq!(cdf(&ind).values, vec![0.0, 0.0, 1.0, 1.0]);
        let uni = AugmentedDensity {
            values: vec![0.25; 4],
            raw_sum: 0.5,
        };
        assert_eq!(cdf(&uni).values, vec![0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn icdf_of_linear_ramp_is_identity() {
        let n = 101;
        let c = DiscreteCdf {
            values: uniform_nodes(0.0, 1.0, n),
        };
        let ic = icdf(&c, n, Domain::UNIT).unwrap();
        for (j, v) in ic.values.iter().enumerate() {
            assert!((v - j as f64 / (n - 1) as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_snapshot_icdf_is_near_identity() {
        let n = 1000;
        let ic = profile_to_icdf(&vec![1.0; n], n + 2, Domain::UNIT).unwrap();
        let dx = 1.0 / (n + 1) as f64;
        for (j, v) in ic.values.iter().enumerate() {
            let p = j as f64 / (n + 1) as f64;
            assert!((v - p).abs() <= 2.0 * dx, "j={j}: {v} vs {p}");
        }
    }

    #[test]
    fn dirac_icdf_is_constant_at_its_location() {
        let mut u = vec![0.0; 12];
        u[7] = 1.0;
        let c = cdf(&AugmentedDensity {
            values: u,
            raw_sum: 1.0,
        });
        let ic = icdf(&c, 50, Domain::UNIT).unwrap();
        let x7 = 7.0 / 11.0;
        let dx = 1.0 / 11.0;
        assert_eq!(ic.values[0], 0.0);
        assert!(ic.values[1..].iter().all(|v| (v - x7).abs() <= dx));
    }

    #[test]
    fn block_density_icdf_scales_probability() {
        let n = 1000;
        let ic = profile_to_icdf(&block(n, 10.0, 0.1), n + 2, Domain::UNIT).unwrap();
        let m = ic.len();
        for (j, v) in ic.values.iter().enumerate() {
            let p = j as f64 / (m - 1) as f64;
            assert!((v - 0.1 * p).abs() < 5e-3, "j={j}: {v}");
        }
    }

    #[test]
    fn inversion_of_identity_icdf_is_linear_ramp() {
        let m = 64;
        let ic = DiscreteIcdf {
            values: uniform_nodes(0.0, 1.0, m),
        };
        let c = invert_icdf(&ic, 33, Domain::UNIT).unwrap();
        for (i, v) in c.values.iter().enumerate() {
            assert!((v - i as f64 / 32.0).abs() < 1e-12);
        }
        let u = pdf_from_cdf(&c);
        assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for v in &u[1..] {
            assert!((v - 1.0 / 32.0).abs() < 1e-12);
        }
    }

    #[test]
    fn step_cdf_differentiates_to_indicator() {
        let c = DiscreteCdf {
            values: vec![0.0, 0.0, 1.0, 1.0, 1.0],
        };
        assert_eq!(pdf_from_cdf(&c), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn reference_w2_values() {
        let n = 1002;
        let m = n + 2;
        let s1 = profile_to_icdf(&block(n, 10.0, 0.1), m, Domain::UNIT).unwrap();
        let s2 = profile_to_icdf(&block(n, 2.0, 0.5), m, Domain::UNIT).unwrap();
        let s3 = profile_to_icdf(&block(n, 1.0, 1.0), m, Domain::UNIT).unwrap();
        let d12 = w2_distance(&s1, &s2).unwrap();
        let d23 = w2_distance(&s2, &s3).unwrap();
        assert!((d12 - 0.23).abs() < 0.01, "{d12}");
        assert!((d23 - 0.29).abs() < 0.01, "{d23}");
        assert_eq!(w2_distance(&s1, &s1).unwrap(), 0.0);
        let short = DiscreteIcdf { values: vec![0.0; 3] };
        assert!(w2_distance(&s1, &short).is_err());
    }

    #[test]
    fn barycenter_vertex_and_translation() {
        let n = 400;
        let m = n + 2;
        let bump = |start: usize| -> Vec<f64> {
            (0..n)
                .map(|i| if (start..start + 40).contains(&i) { 1.0 } else { 0.0 })
                .collect()
        };
        let a = profile_to_icdf(&bump(100), m, Domain::UNIT).unwrap();
        let b = profile_to_icdf(&bump(200), m, Domain::UNIT).unwrap();
        let mid = profile_to_icdf(&bump(150), m, Domain::UNIT).unwrap();
        let atoms = [a.clone(), b];
        let w = SimplexWeights::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(barycenter(&atoms, &w).unwrap(), a);
        let half = barycenter(&atoms, &SimplexWeights::uniform(2)).unwrap();
        // the injected boundary cell is not translated, so compare away from p = 0
        let start = m / 10;
        let err = discrete_l2(&half.values[start..], &mid.values[start..]);
        assert!(err < 2.0 / n as f64, "{err}");
        assert!(half.is_monotone());
    }

    #[test]
    fn round_trip_reconstruction_preserves_mass() {
        let n = 500;
        let raw: Vec<f64> = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) / n as f64;
                if x < 0.6 {
                    1.0 - 0.5 * x
                } else {
                    0.0
                }
            })
            .collect();
        let dx = 1.0 / n as f64;
        let mass: f64 = raw.iter().sum::<f64>() * dx;
        let ic = profile_to_icdf(&raw, n + 2, Domain::UNIT).unwrap();
        let back = icdf_to_profile(&ic, n, mass, dx, Domain::UNIT).unwrap();
        let rec_mass: f64 = back.iter().sum::<f64>() * dx;
        assert!((rec_mass - mass).abs() < 1e-12 * mass);
        let err = crate::snapshot::relative_l1_error(&raw, &back);
        assert!(err < 1e-2, "{err}");
        assert!(icdf_to_profile(&ic, n, -1.0, dx, Domain::UNIT)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }
}
