use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RmMdpModel;
use crate::rng::{derive_seed, stream, StreamRng};

const INSTANCE_SALT: u64 = 0x1a57;
const LOWER_BOUND_SALT: u64 = 0x10b0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    pub delta_min: f64,
}

fn dirichlet_ones(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    // Normalized unit exponentials; `1 - U` lies in (0, 1].
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

/// Random model with `w = 1/2`. Each state-action is uninformative
/// (`p1 = p2`) with probability 1/2; otherwise its separation is drawn from
/// `[delta_min, min(p_+, 1 - p_+)]` with `p_+` restricted so that interval
/// is never empty.
pub fn random_instance(spec: InstanceSpec, seed: u64) -> Result<RmMdpModel> {
    let InstanceSpec { states, actions, horizon, delta_min } = spec;
    if !(0.0..=0.5).contains(&delta_min) {
        return Err(Error::InvalidParameter(format!("delta_min = {delta_min} must lie in [0, 0.5]")));
    }
    if states == 0 || actions == 0 {
        return Err(Error::InvalidParameter("need at least one state and one action".into()));
    }
    let mut rng = stream(derive_seed(seed, INSTANCE_SALT), 0);
    let mut transitions = Vec::with_capacity(states * actions * states);
    for _ in 0..states * actions {
        transitions.extend(dirichlet_ones(&mut rng, states));
    }
    let initial = dirichlet_ones(&mut rng, states);
    let (lo, hi) = (0.25f64.max(delta_min), 0.75f64.min(1.0 - delta_min));
    let mut p1 = Vec::with_capacity(states * actions);
    let mut p2 = Vec::with_capacity(states * actions);
    for _ in 0..states * actions {
        if rng.random::<bool>() {
            let p = rng.random::<f64>();
            p1.push(p);
            p2.push(p);
        } else {
            let p_plus = lo + (hi - lo) * rng.random::<f64>();
            let room = p_plus.min(1.0 - p_plus);
            let mag = delta_min + (room - delta_min) * rng.random::<f64>();
            let m = if rng.random::<bool>() { mag } else { -mag };
            p1.push((p_plus + m).clamp(0.0, 1.0));
            p2.push((p_plus - m).clamp(0.0, 1.0));
        }
    }
    let model = RmMdpModel { states, actions, horizon, transitions, initial, weight: 0.5, p1, p2 };
    model.validate().into_result()?;
    Ok(model)
}

/// Two-step hard instance with its special actions.
#[derive(Clone, Debug, PartialEq)]
pub struct LowerBoundInstance {
    pub model: RmMdpModel,
    /// Informative first action.
    pub first: usize,
    /// Second-step actions favoured by context 1 and context 2.
    pub second: [usize; 2],
}

/// `S = 2`, `H = 2`: `s1` always moves to `s2`. Every reward is `Ber(1/2)`
/// except `a1*` at `s1` (`1/2 +/- sqrt(eps)` in contexts 1/2) and
/// `a21*, a22*` at `s2` (opposite splits).
pub fn lower_bound_instance(actions: usize, eps: f64, seed: u64) -> Result<LowerBoundInstance> {
    if actions < 3 {
        return Err(Error::InvalidParameter(format!("need A >= 3, got {actions}")));
    }
    if !(eps > 0.0 && eps < 0.25) {
        return Err(Error::InvalidParameter(format!("eps = {eps} must lie in (0, 1/4)")));
    }
    let mut rng = stream(derive_seed(seed, LOWER_BOUND_SALT), 0);
    let first = rng.random_range(0..actions);
    let a21 = rng.random_range(0..actions);
    let mut a22 = rng.random_range(0..actions - 1);
    if a22 >= a21 {
        a22 += 1;
    }
    let g = eps.sqrt();
    let mut p1 = vec![0.5; 2 * actions];
    let mut p2 = vec![0.5; 2 * actions];
    p1[first] = 0.5 + g;
    p2[first] = 0.5 - g;
    p1[actions + a21] = 0.5 + g;
    p2[actions + a21] = 0.5 - g;
    p1[actions + a22] = 0.5 - g;
    p2[actions + a22] = 0.5 + g;
    let mut transitions = Vec::with_capacity(2 * actions * 2);
    for _ in 0..2 * actions {
        transitions.extend([0.0, 1.0]);
    }
    let model = RmMdpModel { states: 2, actions, horizon: 2, transitions, initial: vec![1.0, 0.0], weight: 0.5, p1, p2 };
    model.validate().into_result()?;
    Ok(LowerBoundInstance { model, first, second: [a21, a22] })
}

pub fn make_lower_bound_instance(actions: usize, eps: f64, seed: u64) -> Result<RmMdpModel> {
    Ok(lower_bound_instance(actions, eps, seed)?.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derive_reward_stats;

    #[test]
    fn separation_respects_delta_min() {
        for seed in 0..50 {
            let m = random_instance(InstanceSpec { states: 3, actions: 2, horizon: 2, delta_min: 0.5 }, seed).unwrap();
            let d = derive_reward_stats(&m);
            assert!(d.delta_x.iter().all(|&v| v == 0.0 || v >= 0.5 - 1e-12), "{:?}", d.delta_x);
        }
    }

    #[test]
    fn same_seed_same_model() {
        let spec = InstanceSpec { states: 2, actions: 3, horizon: 3, delta_min: 0.2 };
        assert_eq!(random_instance(spec, 4).unwrap(), random_instance(spec, 4).unwrap());
        assert_ne!(random_instance(spec, 4).unwrap(), random_instance(spec, 5).unwrap());
    }

    #[test]
    fn zero_delta_min_allows_small_gaps() {
        let spec = InstanceSpec { states: 4, actions: 3, horizon: 2, delta_min: 0.0 };
        let smallest = (0..200)
            .flat_map(|seed| derive_reward_stats(&random_instance(spec, seed).unwrap()).delta_x)
            .filter(|&d| d > 0.0)
            .fold(f64::INFINITY, f64::min);
        assert!(smallest < 0.01, "{smallest}");
    }

    #[test]
    fn lower_bound_parameters_checked() {
        assert!(lower_bound_instance(2, 0.04, 0).is_err());
        assert!(lower_bound_instance(3, 0.25, 0).is_err());
        let inst = lower_bound_instance(5, 0.04, 9).unwrap();
        assert_ne!(inst.second[0], inst.second[1]);
    }
}
