//! The body-part skeleton used by the synthetic fixtures and the stick
//! based metrics: a 14-class joint set, limb sticks, and the canonical
//! standing-pose template the scene sampler perturbs.

use crate::model::PartClass;

/// Class ids of the default skeleton.
pub const HEAD: usize = 0;
pub const NECK: usize = 1;
pub const SHOULDER_R: usize = 2;
pub const ELBOW_R: usize = 3;
pub const WRIST_R: usize = 4;
pub const SHOULDER_L: usize = 5;
pub const ELBOW_L: usize = 6;
pub const WRIST_L: usize = 7;
pub const HIP_R: usize = 8;
pub const KNEE_R: usize = 9;
pub const ANKLE_R: usize = 10;
pub const HIP_L: usize = 11;
pub const KNEE_L: usize = 12;
pub const ANKLE_L: usize = 13;

pub const NUM_CLASSES: usize = 14;

pub fn part_classes() -> Vec<PartClass> {
    [
        "head", "neck", "sho-r", "elb-r", "wri-r", "sho-l", "elb-l", "wri-l", "hip-r", "kne-r",
        "ank-r", "hip-l", "kne-l", "ank-l",
    ]
    .iter()
    .enumerate()
    .map(|(id, name)| PartClass {
        id,
        name: (*name).to_string(),
    })
    .collect()
}

/// A reduced 8-class skeleton (head, neck, shoulders, wrists, hips) for
/// fast end-to-end corpora.
pub fn part_classes_reduced() -> Vec<PartClass> {
    [
        "head", "neck", "sho-r", "wri-r", "sho-l", "wri-l", "hip-r", "hip-l",
    ]
    .iter()
    .enumerate()
    .map(|(id, name)| PartClass {
        id,
        name: (*name).to_string(),
    })
    .collect()
}

/// One limb stick between two joint classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Stick {
    pub name: &'static str,
    pub a: usize,
    pub b: usize,
}

/// Sticks of the full skeleton (PCP evaluates these).
pub fn sticks() -> Vec<Stick> {
    vec![
        Stick { name: "head", a: HEAD, b: NECK },
        Stick { name: "u-arm-r", a: SHOULDER_R, b: ELBOW_R },
        Stick { name: "f-arm-r", a: ELBOW_R, b: WRIST_R },
        Stick { name: "u-arm-l", a: SHOULDER_L, b: ELBOW_L },
        Stick { name: "f-arm-l", a: ELBOW_L, b: WRIST_L },
        Stick { name: "thigh-r", a: HIP_R, b: KNEE_R },
        Stick { name: "shank-r", a: KNEE_R, b: ANKLE_R },
        Stick { name: "thigh-l", a: HIP_L, b: KNEE_L },
        Stick { name: "shank-l", a: KNEE_L, b: ANKLE_L },
    ]
}

/// Sticks available when poses use the reduced class set.
pub fn sticks_for(num_classes: usize) -> Vec<Stick> {
    if num_classes == NUM_CLASSES {
        sticks()
    } else {
        vec![
            Stick { name: "head", a: 0, b: 1 },
            Stick { name: "arm-r", a: 2, b: 3 },
            Stick { name: "arm-l", a: 4, b: 5 },
            Stick { name: "torso-r", a: 1, b: 6 },
            Stick { name: "torso-l", a: 1, b: 7 },
        ]
    }
}

/// Joint offsets of the canonical standing pose in units of the head size,
/// indexed by class id. x grows right, y grows down; the head sits at the
/// origin.
pub fn template(num_classes: usize) -> Vec<(f64, f64)> {
    let full = [
        (0.0, 0.0),    // head
        (0.0, 0.8),    // neck
        (0.6, 1.0),    // sho-r
        (0.75, 1.8),   // elb-r
        (0.8, 2.6),    // wri-r
        (-0.6, 1.0),   // sho-l
        (-0.75, 1.8),  // elb-l
        (-0.8, 2.6),   // wri-l
        (0.35, 2.6),   // hip-r
        (0.4, 3.6),    // kne-r
        (0.45, 4.6),   // ank-r
        (-0.35, 2.6),  // hip-l
        (-0.4, 3.6),   // kne-l
        (-0.45, 4.6),  // ank-l
    ];
    if num_classes == NUM_CLASSES {
        return full.to_vec();
    }
    // Reduced set: head, neck, sho-r, wri-r, sho-l, wri-l, hip-r, hip-l.
    vec![
        full[HEAD],
        full[NECK],
        full[SHOULDER_R],
        full[WRIST_R],
        full[SHOULDER_L],
        full[WRIST_L],
        full[HIP_R],
        full[HIP_L],
    ]
}

/// Classes whose distance defines the torso reference size for PCK, per
/// class-set size: a shoulder and the opposite hip.
pub fn torso_reference(num_classes: usize) -> (usize, usize) {
    if num_classes == NUM_CLASSES {
        (SHOULDER_L, HIP_R)
    } else {
        (4, 6) // sho-l, hip-r in the reduced set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_ids_are_dense() {
        for (i, c) in part_classes().iter().enumerate() {
            assert_eq!(c.id, i);
        }
        assert_eq!(part_classes().len(), NUM_CLASSES);
        assert_eq!(template(NUM_CLASSES).len(), NUM_CLASSES);
        assert_eq!(template(8).len(), 8);
    }

    #[test]
    fn sticks_reference_valid_classes() {
        for s in sticks() {
            assert!(s.a < NUM_CLASSES && s.b < NUM_CLASSES);
        }
        for s in sticks_for(8) {
            assert!(s.a < 8 && s.b < 8);
        }
    }
}
