//! Property suites over the public API.

use std::path::Path;

use proptest::prelude::*;

use myo_core::assembly::{DofMap, SystemState};
use myo_core::config::{load_config_str, parse_quantity};
use myo_core::constitutive::curves::{force_velocity, passive_muscle};
use myo_core::constitutive::{evaluate_stress, MaterialLibrary, StressOptions, TissueKind};
use myo_core::dynamics::{parse_checkpoint, write_checkpoint, Checkpoint};
use myo_core::elements::ElementType;
use myo_core::kinematics::{fibre_measures, fibre_strain_rate, from_f, RatePoint};
use myo_core::mesh::{generate_block, parse_mesh, write_mesh, BlockSpec, Divisions, ImportOptions};
use myo_core::scenarios::{ActivationProgram, ActivationState, Excitation, ProbeSeries};
use myo_core::tensor::{Mat3, Vec3};

fn excitation() -> impl Strategy<Value = Excitation> {
    prop_oneof![
        (-1.0..2.0f64).prop_map(|level| Excitation::Constant { level }),
        (0.01..1.0f64, 0.0..1.0f64, -1.0..3.0f64, 0.0..0.5f64).prop_map(
            |(period, duty, level, delay)| {
                Excitation::SquareWave {
                    period,
                    duty,
                    level,
                    delay,
                }
            }
        ),
    ]
}

fn program() -> impl Strategy<Value = ActivationProgram> {
    prop_oneof![
        Just(ActivationProgram::None),
        (0.0..1.0f64, 0.01..1.0f64, 0.0..=1.0f64).prop_map(|(t_start, len, level)| {
            ActivationProgram::Ramp {
                t_start,
                t_end: t_start + len,
                level,
            }
        }),
        (0.0..=1.0f64).prop_map(|level| ActivationProgram::Hold { level }),
        (1e-3..0.2f64, 0.01..=1.0f64, excitation(), 0.0..=1.0f64).prop_map(
            |(tau_act, beta_deact, excitation, a0)| {
                ActivationProgram::Zajac {
                    tau_act,
                    beta_deact,
                    excitation,
                    a0,
                }
            }
        ),
    ]
}

fn matrix(scale: f64) -> impl Strategy<Value = Mat3> {
    prop::array::uniform9(-scale..scale).prop_map(|v| Mat3::from_row_slice(&v))
}

proptest! {
    #[test]
    fn activation_stays_in_unit_interval(p in program(), steps in prop::collection::vec(1e-4..0.05f64, 1..80)) {
        let mut s = ActivationState::new(p);
        prop_assert!((0.0..=1.0).contains(&s.a));
        let mut t = 0.0;
        for dt in steps {
            t += dt;
            let a = s.advance(t);
            prop_assert!((0.0..=1.0).contains(&a), "a = {a} at t = {t}");
        }
    }

    #[test]
    fn csv_round_trips_exactly(rows in prop::collection::vec(prop::collection::vec(-1e6..1e6f64, 3), 1..20)) {
        let mut s = ProbeSeries::new(vec!["a".into(), "b,c".into()]);
        for r in &rows {
            s.push(r[0], vec![r[1], r[2]]);
        }
        let csv = s.to_csv();
        let mut lines = csv.lines();
        prop_assert_eq!(lines.next().unwrap(), "t,a,\"b,c\"");
        for (line, r) in lines.zip(&rows) {
            let vals: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
            prop_assert_eq!(&vals, r);
        }
    }

    #[test]
    fn mesh_text_round_trips(
        l in 1e-3..0.5f64, w in 1e-3..0.1f64, h in 1e-3..0.1f64,
        nx in 1usize..4, ny in 1usize..3, nz in 1usize..3, q2 in any::<bool>(),
    ) {
        let et = if q2 { ElementType::Q2P1 } else { ElementType::Q1P0 };
        let mesh = generate_block(&BlockSpec { length: l, width: w, height: h }, Divisions::new(nx, ny, nz), et).unwrap();
        let text = write_mesh(&mesh);
        let back = parse_mesh(&text, ImportOptions::default()).unwrap();
        prop_assert_eq!(&back, &mesh);
        prop_assert_eq!(write_mesh(&back), text);
        prop_assert!((mesh.volume() - l * w * h).abs() <= 1e-12 * l * w * h);
    }

    #[test]
    fn checkpoint_round_trips(seed in prop::collection::vec(-1.0..1.0f64, 64)) {
        let mesh = generate_block(&BlockSpec::default(), Divisions::new(2, 1, 1), ElementType::Q2P1).unwrap();
        let dofs = DofMap::new(&mesh, &[]).unwrap();
        let mut s = SystemState::rest(&dofs);
        for (i, v) in s.u.iter_mut().enumerate() { *v = seed[i % 64] * 1e-3; }
        for (i, v) in s.p.iter_mut().enumerate() { *v = seed[(i + 7) % 64] * 1e4; }
        for (i, v) in s.v.iter_mut().enumerate() { *v = seed[(i + 3) % 64]; }
        s.t = seed[0].abs();
        let act = vec![seed[1].abs(), seed[2].abs()];
        let cp = Checkpoint::new(&mesh, &s, &act);
        let text = write_checkpoint(&cp);
        let back = parse_checkpoint(&text).unwrap();
        prop_assert_eq!(&back, &cp);
        prop_assert_eq!(write_checkpoint(&back), text);
    }

    #[test]
    fn isochoric_stress_ignores_dilation(g in matrix(0.25), c in 0.8..1.25f64, a in 0.0..=1.0f64, e in -3.0..3.0f64) {
        let params = MaterialLibrary::default().tissue(TissueKind::Muscle);
        let a0 = Vec3::new(0.0, 0.6, 0.8);
        let eval = |f: Mat3| {
            let dp = fibre_measures(&from_f(f).unwrap(), &a0);
            evaluate_stress(&dp, &RatePoint::with_epsbar(e), 0.0, a, &params, StressOptions::default()).unwrap().tau_iso
        };
        let f = Mat3::identity() + g;
        let t1 = eval(f);
        let t2 = eval(f * c);
        prop_assert!((t1 - t2).norm() <= 1e-9 * t1.norm().max(1.0), "{t1} vs {t2}");
    }

    #[test]
    fn spherical_rate_has_no_fibre_strain_rate(g in matrix(0.3), c in -5.0..5.0f64, a in prop::array::uniform3(-1.0..1.0f64)) {
        let a0 = Vec3::from(a);
        prop_assume!(a0.norm() > 0.1);
        let dp = fibre_measures(&from_f(Mat3::identity() + g).unwrap(), &a0.normalize());
        let r = fibre_strain_rate(&dp, &(Mat3::identity() * c));
        prop_assert!(r.epsbar.abs() <= 1e-12 * c.abs().max(1.0));
    }

    #[test]
    fn force_velocity_is_bounded_and_monotone(x in -10.0..10.0f64, dx in 0.0..1.0f64, e0 in 0.5..10.0f64) {
        // The last cubic peaks at 1.59512 just before the plateau knot, so
        // bound and monotonicity hold to 2e-4.
        let a = force_velocity(x, e0);
        let b = force_velocity(x + dx, e0);
        prop_assert!((0.0..=1.5952).contains(&a));
        prop_assert!(b >= a - 2e-4);
    }

    #[test]
    fn passive_muscle_is_nonnegative_and_monotone(l in 0.5..2.0f64, dl in 0.0..0.2f64) {
        let (a, da) = passive_muscle(l);
        let (b, _) = passive_muscle(l + dl);
        prop_assert!(a >= 0.0 && da >= 0.0 && b >= a);
    }

    #[test]
    fn millimetres_convert_exactly(x in 0.0..1e4f64) {
        let text = format!("{x} mm");
        prop_assert_eq!(parse_quantity(&text).unwrap().unwrap(), x / 1000.0);
    }
}

#[test]
fn zajac_constant_excitation_follows_exponential() {
    let tau = 0.04;
    let mut s = ActivationState::new(ActivationProgram::Zajac {
        tau_act: tau,
        beta_deact: 0.3,
        excitation: Excitation::Constant { level: 1.0 },
        a0: 0.0,
    });
    let dt = tau / 4000.0;
    let mut prev = 0.0;
    for k in 1..=20000 {
        let t = k as f64 * dt;
        let a = s.advance(t);
        assert!(a >= prev);
        prev = a;
        // Implicit Euler lags the exact solution by O(dt / tau).
        assert!((a - (1.0 - (-t / tau).exp())).abs() < 1e-4, "t = {t}: {a}");
    }
}

#[test]
fn zajac_decay_without_excitation() {
    let (tau, beta, a0) = (0.05, 0.25, 0.8);
    let mut s = ActivationState::new(ActivationProgram::Zajac {
        tau_act: tau,
        beta_deact: beta,
        excitation: Excitation::Constant { level: 0.0 },
        a0,
    });
    let dt = tau / 4000.0;
    for k in 1..=20000 {
        let t = k as f64 * dt;
        let a = s.advance(t);
        assert!(
            (a - a0 * (-beta * t / tau).exp()).abs() < 1e-4,
            "t = {t}: {a}"
        );
    }
}

#[test]
fn resolved_config_echo_reloads_identically() {
    let overrides = vec![
        "materials.muscle.sigma0=2.5e5".to_string(),
        "time.dt=2e-4".to_string(),
        "mesh.block.length=\"60 mm\"".to_string(),
    ];
    let a = load_config_str("", &overrides, Path::new(".")).unwrap();
    let b = load_config_str(&a.echo().unwrap(), &[], Path::new(".")).unwrap();
    assert_eq!(a.materials, b.materials);
    assert_eq!(a.config.time, b.config.time);
    assert_eq!(a.config.mesh, b.config.mesh);
    assert_eq!(b.materials.muscle.sigma0, 2.5e5);
}
