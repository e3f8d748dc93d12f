#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use riesz_lab::{GroupSpec, LatticeFunction, RieszCoefficients, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_c(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Complex Gaussian coefficients; `real` draws real entries only.
pub fn random_alpha(rng: &mut ChaCha8Rng, m: usize, n: usize, real: bool) -> RieszCoefficients {
    let draw = |rng: &mut ChaCha8Rng| {
        let z = normal_c(rng);
        if real {
            C64::new(z.re, 0.0)
        } else {
            z
        }
    };
    let ax = (0..m).map(|_| draw(rng)).collect();
    let ay = (0..n)
        .map(|_| (0..n).map(|_| draw(rng)).collect())
        .collect();
    RieszCoefficients::new(ax, ay).unwrap()
}

/// A mix of dense, sparse and peaked test functions.
pub fn random_function(rng: &mut ChaCha8Rng, group: &GroupSpec) -> LatticeFunction {
    let kind = rng.random_range(0..3);
    let n = group.len();
    let values = (0..n)
        .map(|_| match kind {
            0 => normal_c(rng),
            1 => {
                if rng.random::<f64>() < 0.1 {
                    normal_c(rng)
                } else {
                    C64::new(0.0, 0.0)
                }
            }
            _ => normal_c(rng) * rng.random::<f64>().powi(6),
        })
        .collect::<Vec<_>>();
    let mut f = LatticeFunction::new(group.clone(), values, riesz_lab::Domain::Spatial).unwrap();
    if f.sup_norm() == 0.0 {
        f.values_mut()[0] = C64::new(1.0, 0.0);
    }
    f
}

pub fn random_mask(rng: &mut ChaCha8Rng, len: usize) -> Vec<bool> {
    let density: f64 = rng.random();
    (0..len).map(|_| rng.random::<f64>() < density).collect()
}

/// Small groups of mixed type.
pub fn group_cycle() -> Vec<GroupSpec> {
    vec![
        GroupSpec::discrete(&[6, 5]).unwrap(),
        GroupSpec::torus(&[16, 16]).unwrap(),
        GroupSpec::new(vec![4], vec![16]).unwrap(),
        GroupSpec::discrete(&[8]).unwrap(),
        GroupSpec::new(vec![3, 4], vec![8]).unwrap(),
    ]
}
