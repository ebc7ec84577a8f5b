use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AttrSet, StyleDistribution, StyleError};
use crate::scene::{resolve_roles, InstanceId, SceneGraph};
use crate::vocab::{ClassId, ClassVocab, Role};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// One draw per background class; foreground instances drawn
    /// independently, with same-class children of an instance sharing a draw.
    CoherentBgRandomFg,
    AllRandom,
    AllCoherent,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::CoherentBgRandomFg => "coherent_bg_random_fg",
            Strategy::AllRandom => "all_random",
            Strategy::AllCoherent => "all_coherent",
        })
    }
}

impl FromStr for Strategy {
    type Err = StyleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "coherent_bg_random_fg" => Ok(Strategy::CoherentBgRandomFg),
            "all_random" => Ok(Strategy::AllRandom),
            "all_coherent" => Ok(Strategy::AllCoherent),
            _ => Err(StyleError::UnknownStrategy(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleReport {
    pub seed: u64,
    pub strategy: Strategy,
    /// Classes absent from the distribution, with how many instances got `{}`.
    pub missing_classes: BTreeMap<ClassId, usize>,
    /// Background instances left alone because the background is frozen.
    pub frozen_skipped: usize,
}

/// Identifies which instances share one draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum DrawKey {
    Class(ClassId),
    Child(InstanceId, ClassId),
    Instance(InstanceId),
}

impl DrawKey {
    fn stream(self) -> u64 {
        match self {
            DrawKey::Class(c) => (1 << 63) | u64::from(c),
            DrawKey::Child(p, c) => (1 << 62) | (u64::from(p) << 16) | u64::from(c),
            DrawKey::Instance(id) => u64::from(id),
        }
    }
}

/// Draw from one class's outcomes on the stream for `key`.
fn draw(outcomes: &[(AttrSet, f64)], seed: u64, key: DrawKey) -> AttrSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(key.stream());
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (set, p) in outcomes {
        acc += p;
        if u < acc {
            return set.clone();
        }
    }
    outcomes.last().map(|(s, _)| s.clone()).unwrap_or_default()
}

/// Reassign every instance's attributes by sampling `dist`. Each shared draw
/// has its own generator stream, so results do not depend on visiting order.
pub fn sample_styles(
    scene: &SceneGraph,
    dist: &StyleDistribution,
    strategy: Strategy,
    seed: u64,
    classes: &ClassVocab,
) -> (SceneGraph, SampleReport) {
    let roles = resolve_roles(scene, classes);
    let mut out = scene.clone();
    let mut report = SampleReport {
        seed,
        strategy,
        missing_classes: BTreeMap::new(),
        frozen_skipped: 0,
    };
    let mut cache: BTreeMap<DrawKey, AttrSet> = BTreeMap::new();
    for inst in out.instances.values_mut() {
        let role = roles.get(&inst.id).copied().unwrap_or(Role::Background);
        if role == Role::Background && scene.frozen_background {
            report.frozen_skipped += 1;
            continue;
        }
        let Some(outcomes) = dist.get(inst.class_id) else {
            *report.missing_classes.entry(inst.class_id).or_insert(0) += 1;
            inst.attributes.clear();
            continue;
        };
        let key = match strategy {
            Strategy::AllCoherent => DrawKey::Class(inst.class_id),
            Strategy::AllRandom => DrawKey::Instance(inst.id),
            Strategy::CoherentBgRandomFg => match role {
                Role::Background => DrawKey::Class(inst.class_id),
                Role::Foreground => match inst.parent {
                    Some(p) if roles.get(&p) == Some(&Role::Foreground) => DrawKey::Child(p, inst.class_id),
                    _ => DrawKey::Instance(inst.id),
                },
            },
        };
        inst.attributes = cache
            .entry(key)
            .or_insert_with(|| draw(outcomes, seed, key))
            .clone();
    }
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{build_hierarchy, Instance, InstanceMask};
    use crate::stylekit::fit_distribution;

    fn vocab() -> ClassVocab {
        ClassVocab::from_names(&[
            ("car", Role::Foreground),
            ("tree", Role::Background),
            ("wheel", Role::Background),
            ("sky", Role::Background),
        ])
        .unwrap()
    }

    /// Three trees, two cars with two wheels each, one sky with no distribution entry.
    fn street() -> SceneGraph {
        let mut v = vec![];
        for i in 0..3 {
            let x = 2.0 + 6.0 * i as f64;
            v.push(Instance::new(i + 1, 2, InstanceMask::rect(x, 2.0, x + 4.0, 10.0)));
        }
        for (k, x) in [(0u32, 4.0), (1, 30.0)] {
            let car = 10 + k * 10;
            v.push(Instance::new(car, 1, InstanceMask::rect(x, 30.0, x + 20.0, 45.0)));
            v.push(Instance::new(car + 1, 3, InstanceMask::rect(x + 2.0, 40.0, x + 6.0, 44.0)));
            v.push(Instance::new(car + 2, 3, InstanceMask::rect(x + 12.0, 40.0, x + 16.0, 44.0)));
        }
        v.push(Instance::new(40, 4, InstanceMask::rect(0.0, 50.0, 64.0, 64.0)));
        build_hierarchy(v, 64, 64).unwrap()
    }

    fn dist() -> StyleDistribution {
        let mut d = StyleDistribution::default();
        d.classes.insert(1, vec![(AttrSet::new(), 0.25), (AttrSet::from([0]), 0.5), (AttrSet::from([0, 1]), 0.25)]);
        d.classes.insert(2, vec![(AttrSet::new(), 0.5), (AttrSet::from([2]), 0.5)]);
        d.classes.insert(3, vec![(AttrSet::from([1]), 0.3), (AttrSet::from([0]), 0.7)]);
        d
    }

    #[test]
    fn coherent_background_shares_one_draw() {
        let s = street();
        assert_eq!(s.get(11).unwrap().parent, Some(10));
        for seed in 0..50 {
            let (out, report) = sample_styles(&s, &dist(), Strategy::CoherentBgRandomFg, seed, &vocab());
            let trees: Vec<_> = (1..=3).map(|i| out.get(i).unwrap().attributes.clone()).collect();
            assert!(trees.iter().all(|t| *t == trees[0]));
            assert_eq!(out.get(11).unwrap().attributes, out.get(12).unwrap().attributes);
            assert_eq!(out.get(21).unwrap().attributes, out.get(22).unwrap().attributes);
            assert_eq!(report.missing_classes, BTreeMap::from([(4, 1)]));
            assert!(out.get(40).unwrap().attributes.is_empty());
        }
    }

    #[test]
    fn foreground_draws_are_independent() {
        let s = street();
        let differs = (0..100).any(|seed| {
            let (out, _) = sample_styles(&s, &dist(), Strategy::CoherentBgRandomFg, seed, &vocab());
            out.get(10).unwrap().attributes != out.get(20).unwrap().attributes
        });
        assert!(differs);
        let wheels_differ = (0..100).any(|seed| {
            let (out, _) = sample_styles(&s, &dist(), Strategy::CoherentBgRandomFg, seed, &vocab());
            out.get(11).unwrap().attributes != out.get(21).unwrap().attributes
        });
        assert!(wheels_differ);
    }

    #[test]
    fn all_coherent_and_all_random() {
        let s = street();
        for seed in 0..30 {
            let (out, _) = sample_styles(&s, &dist(), Strategy::AllCoherent, seed, &vocab());
            assert_eq!(out.get(10).unwrap().attributes, out.get(20).unwrap().attributes);
            assert_eq!(out.get(11).unwrap().attributes, out.get(22).unwrap().attributes);
        }
        let trees_differ = (0..100).any(|seed| {
            let (out, _) = sample_styles(&s, &dist(), Strategy::AllRandom, seed, &vocab());
            out.get(1).unwrap().attributes != out.get(2).unwrap().attributes
        });
        assert!(trees_differ);
    }

    #[test]
    fn deterministic_per_seed() {
        let s = street();
        let a = sample_styles(&s, &dist(), Strategy::CoherentBgRandomFg, 42, &vocab());
        let b = sample_styles(&s, &dist(), Strategy::CoherentBgRandomFg, 42, &vocab());
        assert_eq!(a, b);
        assert_eq!(a.1.seed, 42);
    }

    #[test]
    fn frozen_background_is_untouched() {
        let mut s = street();
        s.frozen_background = true;
        s.instances.get_mut(&1).unwrap().attributes = AttrSet::from([1]);
        let (out, report) = sample_styles(&s, &dist(), Strategy::AllRandom, 1, &vocab());
        assert_eq!(out.get(1).unwrap().attributes, AttrSet::from([1]));
        assert_eq!(report.frozen_skipped, 4);
    }

    #[test]
    fn frequencies_converge() {
        // one car per scene, 10^5 seeds
        let s = build_hierarchy(vec![Instance::new(1, 1, InstanceMask::rect(0.0, 0.0, 4.0, 4.0))], 8, 8).unwrap();
        let d = dist();
        let scenes: Vec<_> = (0..100_000)
            .map(|seed| sample_styles(&s, &d, Strategy::AllRandom, seed, &vocab()).0)
            .collect();
        let fit = fit_distribution(&scenes).unwrap();
        for ((a, p), (b, q)) in d.get(1).unwrap().iter().zip(fit.get(1).unwrap()) {
            assert_eq!(a, b);
            assert!((p - q).abs() < 0.01, "{p} vs {q}");
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in [Strategy::CoherentBgRandomFg, Strategy::AllRandom, Strategy::AllCoherent] {
            assert_eq!(s.to_string().parse::<Strategy>().unwrap(), s);
        }
        assert!("random".parse::<Strategy>().is_err());
    }
}
