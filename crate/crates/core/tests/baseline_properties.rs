use acam_core::baseline_grid::{grid_calibrate, GridOptions, GridSettings};
use acam_core::geometry::{make_cube_array, BoardLayout, MicArray, Pose};
use acam_core::simulator::{generate_scenario, SimConfig, KNOWN_REFERENCE_POSITION};
use acam_core::tdoa_model::{predict, MeasurementSet, PairingStrategy};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const REF: usize = 8;

struct Setup {
    truth: MicArray,
    poses: Vec<Pose>,
    z: MeasurementSet,
}

fn setup(truth: MicArray, seed: u64) -> Setup {
    let cfg = SimConfig {
        boards: 20,
        known_reference: true,
        ..Default::default()
    };
    let scenario = generate_scenario(&cfg, seed).unwrap();
    let strategy = PairingStrategy::SingleReference(REF);
    let g = predict(&truth, &scenario.events, strategy, 340.0).unwrap();
    let z = MeasurementSet::new(g, strategy, scenario.events.clone(), truth.len()).unwrap();
    Setup {
        truth,
        poses: scenario.poses,
        z,
    }
}

fn with_reference(mut p: Vec<Vector3<f64>>) -> MicArray {
    p.push(KNOWN_REFERENCE_POSITION);
    MicArray::new(p).unwrap()
}

fn solve(s: &Setup, nominal: &MicArray, settings: GridSettings) -> MicArray {
    let opts = GridOptions {
        settings,
        nominal_array: nominal.clone(),
        known_ref_in_board1: s.poses[0].camera_to_board(&s.truth.positions()[REF]),
        reference_index: REF,
    };
    grid_calibrate(&s.z, &s.poses, &opts, 340.0)
        .unwrap()
        .estimate
}

fn random_truth(rng: &mut ChaCha8Rng) -> MicArray {
    let cube = make_cube_array(0.5, Vector3::zeros()).unwrap();
    with_reference(
        cube.positions()
            .iter()
            .map(|p| p + Vector3::from_fn(|_, _| rng.gen_range(-0.1..0.1)))
            .collect(),
    )
}

/// Unit-weight squared range residual of microphone `m` placed at `p`, with
/// the reference at its true position (single-reference rows only).
fn mic_cost(s: &Setup, m: usize, p: &Vector3<f64>) -> f64 {
    let r = s.truth.positions()[REF];
    s.z.events()
        .iter()
        .enumerate()
        .map(|(e, ev)| {
            let v = s.z.values()[e * 8 + m];
            let d = (p - ev.source_position).norm() - (r - ev.source_position).norm() - 340.0 * v;
            d * d
        })
        .sum()
}

fn nearest_node(p: &Vector3<f64>, nominal: &Vector3<f64>, res: f64) -> Vector3<f64> {
    nominal + ((p - nominal) / res).map(|v| v.round()) * res
}

#[test]
fn off_grid_estimate_beats_the_nearest_node() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let res = 0.05;
    let settings = GridSettings {
        search_half_width: 0.3,
        resolution: res,
    };
    let nominal = with_reference(
        make_cube_array(0.5, Vector3::zeros())
            .unwrap()
            .positions()
            .to_vec(),
    );
    for trial in 0..10 {
        let s = setup(random_truth(&mut rng), trial);
        let est = solve(&s, &nominal, settings);
        for m in 0..8 {
            let truth = s.truth.positions()[m];
            let nearest = nearest_node(&truth, &nominal.positions()[m], res);
            let err = (est.positions()[m] - truth).norm();
            // The search minimizes the residual, not the distance to the truth.
            assert!(
                mic_cost(&s, m, &est.positions()[m]) <= mic_cost(&s, m, &nearest) * (1.0 + 1e-12)
            );
            assert!(err <= 3f64.sqrt() * res, "mic {m}: {err}");
        }
    }
}

#[test]
fn mean_error_over_random_off_grid_truths() {
    // 100 independent off-grid microphone positions.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let res = 0.05;
    let settings = GridSettings {
        search_half_width: 0.15,
        resolution: res,
    };
    let cube = make_cube_array(0.5, Vector3::zeros()).unwrap();
    let nominal = with_reference(cube.positions().to_vec());
    let mut errors = Vec::new();
    for trial in 0..13 {
        let s = setup(random_truth(&mut rng), 100 + trial);
        let est = solve(&s, &nominal, settings);
        for m in 0..8 {
            errors.push((est.positions()[m] - s.truth.positions()[m]).norm());
        }
    }
    let errors = &errors[..100];
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    assert!(mean >= 0.5 * 3f64.sqrt() / 2.0 * res, "mean {mean}");
}

#[test]
fn finer_nested_grids_never_raise_the_cost() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let nominal = with_reference(
        make_cube_array(0.5, Vector3::zeros())
            .unwrap()
            .positions()
            .to_vec(),
    );
    for trial in 0..3 {
        let s = setup(random_truth(&mut rng), 200 + trial);
        let mut previous = [f64::INFINITY; 8];
        // Each grid contains every node of the previous one.
        for res in [0.1, 0.05, 0.025, 0.0125] {
            let est = solve(
                &s,
                &nominal,
                GridSettings {
                    search_half_width: 0.2,
                    resolution: res,
                },
            );
            for (m, prev) in previous.iter_mut().enumerate() {
                let cost = mic_cost(&s, m, &est.positions()[m]);
                assert!(
                    cost <= *prev * (1.0 + 1e-12),
                    "trial {trial} mic {m} res {res}"
                );
                *prev = cost;
                let err = (est.positions()[m] - s.truth.positions()[m]).norm();
                assert!(err <= 3f64.sqrt() * res);
            }
        }
    }
}

#[test]
fn source_on_the_reference_is_degenerate() {
    let truth = with_reference(
        make_cube_array(0.5, Vector3::zeros())
            .unwrap()
            .positions()
            .to_vec(),
    );
    let pose = Pose::from_rotation(nalgebra::Rotation3::identity(), Vector3::zeros());
    // One board source sits exactly on the known reference microphone.
    let board =
        BoardLayout::new(vec![KNOWN_REFERENCE_POSITION, Vector3::new(0.3, 0.2, 1.0)]).unwrap();
    let events = acam_core::tdoa_model::events_from_poses(&[pose], &board);
    let strategy = PairingStrategy::SingleReference(REF);
    let z = MeasurementSet::new(nalgebra::DVector::zeros(16), strategy, events, 9).unwrap();
    let opts = GridOptions {
        settings: GridSettings::default(),
        nominal_array: truth,
        known_ref_in_board1: KNOWN_REFERENCE_POSITION,
        reference_index: REF,
    };
    let err = grid_calibrate(&z, &[pose], &opts, 340.0).unwrap_err();
    assert!(
        matches!(err, acam_core::Error::DegenerateGeometry { mic: REF, .. }),
        "{err:?}"
    );
}
