//! Built-in scenarios: the attack-free reference platoon and six attacks on
//! its ACC vehicle over t in [50, 80] s.

use fdi_core::dsl::InjectionMode;
use fdi_core::model::{IdmParams, OvrvParams};
use fdi_core::validate::MeasurementDomain;

use crate::config::{
    AttackConfig, Limits, MetricsSettings, OutputSettings, ScenarioConfig, VehicleConfig,
};

/// Preset names with a one-line description.
pub const PRESETS: [(&str, &str); 7] = [
    ("baseline", "no attack"),
    (
        "case1",
        "g1 = 0.1*sin(s) - 0.1*s, g2 = 0.1*sin(dv) - 0.1*dv (admissible)",
    ),
    (
        "case2",
        "g1 = 0.4*sin(s) - 0.5*s, g2 = 0.4*sin(dv) - 0.5*dv (admissible)",
    ),
    ("case3", "g1 = -0.9*s, g2 = -0.9*dv (admissible)"),
    (
        "case4",
        "g1 = -2*s, g2 = -2*dv (inadmissible, vehicle 2 stops)",
    ),
    ("case5", "g1 = 10*s, g2 = -5*dv (inadmissible, collision)"),
    (
        "case6",
        "g1 = sin(s) + 20*s, g2 = sin(dv) - 20*dv (inadmissible, collision)",
    ),
];

const ATTACKS: [(&str, &str, &str); 6] = [
    ("case1", "0.1*sin(s) - 0.1*s", "0.1*sin(dv) - 0.1*dv"),
    ("case2", "0.4*sin(s) - 0.5*s", "0.4*sin(dv) - 0.5*dv"),
    ("case3", "-0.9*s", "-0.9*dv"),
    ("case4", "-2*s", "-2*dv"),
    ("case5", "10*s", "-5*dv"),
    ("case6", "sin(s) + 20*s", "sin(dv) - 20*dv"),
];

pub const ATTACK_ON: f64 = 50.0;
pub const ATTACK_OFF: f64 = 80.0;
const PLATOON_SIZE: usize = 10;

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    let attack = if name == "baseline" {
        None
    } else {
        let (_, g1, g2) = ATTACKS.iter().find(|(n, _, _)| *n == name)?;
        Some(AttackConfig {
            g1: g1.to_string(),
            g2: g2.to_string(),
            mode: InjectionMode::Additive,
            t_on: ATTACK_ON,
            t_off: ATTACK_OFF,
        })
    };
    let mut vehicles = vec![
        VehicleConfig::Leader {
            speed: 21.0,
            length: 5.0,
        },
        VehicleConfig::Acc {
            params: OvrvParams::default(),
            attack,
        },
    ];
    vehicles.extend((3..=PLATOON_SIZE).map(|_| VehicleConfig::Idm {
        params: IdmParams::default(),
    }));
    Some(ScenarioConfig {
        preset: Some(name.to_string()),
        name: name.to_string(),
        dt: 0.05,
        t_end: 200.0,
        v_star: 21.0,
        limits: Limits::default(),
        vehicles,
        metrics: MetricsSettings::default(),
        domain: MeasurementDomain::default(),
        output: OutputSettings::default(),
    })
}
