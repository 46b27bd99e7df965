//! Cross-module flows at moderate scale: the pieces composed the way an
//! experiment uses them.

use swsim::codec::{build_pair, rate_region_experiment, PairParams};
use swsim::painting::{paint, recover_bases};
use swsim::partitions::{empirical_block_entropy, Scope, SlidingBlockPartition};
use swsim::seeding::sub_seed;
use swsim::sources::{JointSource, Orbit};
use swsim::towers::{build_tower, names_along_tower};
use swsim::typicality::{conditional_name_map, typical_names, NameModel};

fn mid_params(seed: u64) -> PairParams {
    PairParams {
        a: 2,
        b: 2,
        ell: 6,
        eta: 0.005,
        m_s: 400,
        m_l: 400,
        target_coverage_s: 0.99,
        target_coverage_l: 0.99,
        marker_window: 8,
        eps0: 0.25,
        min_blocks: 50,
        seed,
    }
}

#[test]
fn hand_rolled_pipeline_composes() {
    let src = JointSource::dsbs(0.11);
    let orbit = src.sample_orbit(400_000, 1).unwrap();
    let region = src.rate_region();

    // Coordinate partitions realize the generator tracks.
    let px = SlidingBlockPartition::coordinate(Scope::XOnly, 2);
    let py = SlidingBlockPartition::coordinate(Scope::YOnly, 2);
    let x_track = px.evaluate(&orbit).unwrap();
    let y_track = py.evaluate(&orbit).unwrap();

    let tower = build_tower(&orbit, Scope::YOnly, 500, 8, 0.99, sub_seed(1, "tower")).unwrap();
    assert!(tower.coverage >= 0.99);

    // Typical names of the y process capture nearly all blocks.
    let typical = typical_names(
        &tower,
        &y_track,
        &NameModel::IidExact(src.y_marginal()),
        0.05,
    );
    assert!(typical.captured_fraction >= 0.9);

    // Conditional association from x names to y names stays in budget.
    let map = conditional_name_map(&tower, &x_track, &y_track, 0.05, region.h_given_x);
    assert!(map.coverage >= 0.95);
    assert!(map.max_fiber_log2() <= map.fiber_bound_log2);

    // Paint y names and recover the tower from the painted track alone.
    let pd = swsim::codebooks::PaintingData::new(
        swsim::codebooks::Codebook::new(494, 6, 2).unwrap(),
        sub_seed(1, "paint"),
    )
    .unwrap();
    let names = names_along_tower(&tower, &y_track);
    let painted = paint(orbit.len(), &tower, &names, &pd, 6).unwrap();
    assert_eq!(
        recover_bases(&painted, 6),
        tower.complete_bases(orbit.len())
    );

    // The painted track carries almost a full bit per symbol.
    let h = empirical_block_entropy(&painted, 7).unwrap();
    assert!(h >= 0.9, "painted entropy {h}");
}

#[test]
fn sweep_errors_shrink_into_the_region() {
    let src = JointSource::dsbs(0.11);
    let orbit = src.sample_orbit(300_000, 7).unwrap();
    let params = mid_params(7);
    let grid = [(2, 2), (2, 3), (3, 2), (3, 3)];
    let cells = rate_region_experiment(&src, &orbit, &grid, &params, 2);
    assert!(cells.iter().all(|c| c.failure.is_none()));
    let err = |a: usize, b: usize| {
        cells
            .iter()
            .find(|c| c.a == a && c.b == b)
            .unwrap()
            .error_frac
    };
    // All cells sit inside the region; enlarging alphabets must not hurt
    // beyond Monte Carlo noise.
    for (a, b) in [(2usize, 3usize), (3, 2), (3, 3)] {
        assert!(err(a, b) <= err(2, 2) + 0.05, "cell ({a},{b})");
    }
    assert!(err(2, 2) < 0.1);
}

#[test]
fn joint_markov_source_decodes_in_region() {
    let src = JointSource::new_joint_markov(
        2,
        2,
        vec![
            vec![0.70, 0.10, 0.10, 0.10],
            vec![0.10, 0.70, 0.10, 0.10],
            vec![0.10, 0.10, 0.70, 0.10],
            vec![0.10, 0.10, 0.10, 0.70],
        ],
    )
    .unwrap();
    let region = src.rate_region();
    assert!((region.h_given_x).max(region.h_given_y) < 1.0);
    assert!(region.h + 0.25 < 2.0);
    let orbit = src.sample_orbit(300_000, 9).unwrap();
    let codec = build_pair(&orbit, &src, &mid_params(9)).unwrap();
    assert!(codec.region_warnings.is_empty());
    let report = codec.decode_self().unwrap();
    assert!(report.error_fraction < 0.1, "{report:?}");
}

#[test]
fn orbit_files_roundtrip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let src = JointSource::dsbs(0.2);
    let orbit = src.sample_orbit(10_000, 3).unwrap();
    let path = dir.path().join("orbit.bin");
    orbit.dump(&path).unwrap();
    let back = Orbit::load(&path).unwrap();
    assert_eq!(back.xs, orbit.xs);
    assert_eq!(back.ys, orbit.ys);

    let track = orbit.x_track();
    let tpath = dir.path().join("track.bin");
    track.dump(&tpath).unwrap();
    let tback = swsim::partitions::SymbolTrack::load(&tpath).unwrap();
    assert_eq!(tback, track);
}
