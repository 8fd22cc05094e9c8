use scope_nav::episode::{run_episode, EpisodeConfig, EpisodeSpec, Termination, Variant};
use scope_nav::estimator::{EstimateRequest, EstimateSource, EstimatorError, PotentialEstimator};
use scope_nav::frontier::{frontier_regions, snapshot_frontier, FrontierConfig, FrontierRegion};
use scope_nav::remote::stub::{StubMode, StubServer};
use scope_nav::remote::{Fallback, RemoteConfig, RemoteEstimator, RemoteValidatorClient, AGGREGATE_TOLERANCE};
use scope_nav::scene::{generate_scene, GenParams, SceneMap};
use scope_nav::sim::{sense_panorama, AgentState, OccupancyBelief, SensorConfig};

struct Fixture {
    map: SceneMap,
    belief: OccupancyBelief,
    regions: Vec<FrontierRegion>,
}

fn fixture() -> Fixture {
    let map = generate_scene(9, &GenParams::default()).unwrap();
    let sensor = SensorConfig::default();
    let agent = AgentState::at(map.spawn, map.cell_size);
    let (belief, _) = sense_panorama(&map, &agent, &OccupancyBelief::for_scene(&map), 0, &sensor);
    let cfg = FrontierConfig { min_cluster_size: 1, ..FrontierConfig::default() };
    let mut regions = frontier_regions(&belief, &cfg, map.cell_size);
    for r in &mut regions {
        r.snapshot = Some(snapshot_frontier(&map, &belief, r, &sensor, &cfg));
    }
    Fixture { map, belief, regions }
}

fn requests<'a>(f: &'a Fixture, goal: &'a scope_nav::scene::ResolvedGoal) -> Vec<EstimateRequest<'a>> {
    f.regions
        .iter()
        .cycle()
        .take(12)
        .map(|r| EstimateRequest {
            map: &f.map,
            belief: &f.belief,
            region: r,
            snapshot: r.snapshot.as_ref().unwrap(),
            goal,
            step: 0,
        })
        .collect()
}

fn fast(url: String) -> RemoteConfig {
    RemoteConfig { retries: 0, timeout_ms: 3000, ..RemoteConfig::new(url) }
}

#[test]
fn batch_keeps_order_and_bounds_concurrency() {
    let f = fixture();
    let goal = f.map.resolve(&f.map.goals[0]);
    let reqs = requests(&f, &goal);
    let stub = StubServer::start(StubMode::Slow(40)).unwrap();
    let est = RemoteEstimator::new(fast(stub.url()));
    let out = est.estimate_batch(&reqs);
    assert_eq!(out.len(), reqs.len());
    for (r, e) in reqs.iter().zip(&out) {
        let e = e.as_ref().unwrap();
        assert_eq!(e.source, EstimateSource::Remote);
        // the stub echoes the ray fraction as explorability
        assert_eq!(e.vector.explore, r.snapshot.unknown_ray_fraction);
    }
    assert!(stub.peak_in_flight() <= 4, "peak {}", stub.peak_in_flight());
    assert!(stub.peak_in_flight() > 1, "batch ran serially");
    assert_eq!(stub.request_count(), reqs.len());
}

#[test]
fn bearer_token_is_sent() {
    let f = fixture();
    let goal = f.map.resolve(&f.map.goals[0]);
    let reqs = requests(&f, &goal);
    let stub = StubServer::start(StubMode::Valid).unwrap();
    let cfg = RemoteConfig { token: Some("s3cret".into()), ..fast(stub.url()) };
    RemoteEstimator::new(cfg).estimate(&reqs[0]).unwrap();
    assert_eq!(stub.last_authorization().as_deref(), Some("Bearer s3cret"));
}

#[test]
fn schema_violations_are_malformed() {
    let f = fixture();
    let goal = f.map.resolve(&f.map.goals[0]);
    let reqs = requests(&f, &goal);
    for mode in [StubMode::Malformed, StubMode::OutOfRange, StubMode::MissingField] {
        let stub = StubServer::start(mode).unwrap();
        let err = RemoteEstimator::new(fast(stub.url())).estimate(&reqs[0]).unwrap_err();
        assert!(matches!(err, EstimatorError::MalformedResponse(_)), "{mode:?}: {err:?}");
        // schema errors are not retried
        assert_eq!(stub.request_count(), 1);
    }
}

#[test]
fn disagreeing_aggregate_is_recomputed() {
    let f = fixture();
    let goal = f.map.resolve(&f.map.goals[0]);
    let reqs = requests(&f, &goal);
    let stub = StubServer::start(StubMode::DisagreeingAggregate).unwrap();
    let e = RemoteEstimator::new(fast(stub.url())).estimate(&reqs[0]).unwrap();
    let mean = (e.vector.sem + e.vector.explore + e.vector.goal) / 3.0;
    assert!((e.aggregate - mean).abs() <= AGGREGATE_TOLERANCE);
}

#[test]
fn retries_recover_from_transient_errors() {
    let f = fixture();
    let goal = f.map.resolve(&f.map.goals[0]);
    let reqs = requests(&f, &goal);
    let stub = StubServer::start(StubMode::FlakyThenValid(2)).unwrap();
    let cfg = RemoteConfig { retries: 2, ..fast(stub.url()) };
    RemoteEstimator::new(cfg).estimate(&reqs[0]).unwrap();
    assert_eq!(stub.request_count(), 3);

    let stub = StubServer::start(StubMode::ServerError).unwrap();
    let cfg = RemoteConfig { retries: 1, ..fast(stub.url()) };
    let err = RemoteEstimator::new(cfg).estimate(&reqs[0]).unwrap_err();
    assert!(matches!(err, EstimatorError::RemoteUnavailable(_)));
    assert_eq!(stub.request_count(), 2);
}

#[test]
fn unreachable_endpoint_is_unavailable() {
    let f = fixture();
    let goal = f.map.resolve(&f.map.goals[0]);
    let reqs = requests(&f, &goal);
    let url = {
        let stub = StubServer::start(StubMode::Valid).unwrap();
        stub.url()
    };
    let err = RemoteEstimator::new(fast(url)).estimate(&reqs[0]).unwrap_err();
    assert!(matches!(err, EstimatorError::RemoteUnavailable(_)), "{err:?}");
}

#[test]
fn validator_client_follows_the_schema() {
    let f = fixture();
    let goal = f.map.resolve(&scope_nav::scene::GoalSpec::ObjectCategory(f.map.objects[0].category.clone()));
    let pose = scope_nav::sim::Pose { position: f.map.spawn.center(f.map.cell_size), heading: 0.0 };
    let stub = StubServer::start(StubMode::Valid).unwrap();
    let client = RemoteValidatorClient::new(fast(stub.url()));
    let v = client.validate(&goal, &f.map.objects, &pose, &f.map.objects[0]).unwrap();
    assert!(v.confirm);
    assert!((0.0..=1.0).contains(&v.confidence));
}

#[test]
fn episodes_run_against_the_stub() {
    let scene = generate_scene(3, &GenParams::default()).unwrap();
    let spec = EpisodeSpec::new("gen-3", Variant::Full, 5);

    let stub = StubServer::start(StubMode::Valid).unwrap();
    let cfg = EpisodeConfig {
        remote_estimator: Some(fast(stub.url())),
        remote_validator: Some(fast(stub.url())),
        ..EpisodeConfig::default()
    };
    let trace = run_episode(&scene, &spec, &cfg);
    assert!(trace.steps().all(|s| s.estimator_fallbacks == 0));
    assert!(trace.steps().flat_map(|s| &s.frontiers).all(|f| f.estimate.source == EstimateSource::Remote));
    assert_eq!(trace.subtasks().count(), scene.goals.len());

    // estimator down, neutral fallback: the episode continues on neutral scores
    let down = StubServer::start(StubMode::ServerError).unwrap();
    let cfg = EpisodeConfig {
        remote_estimator: Some(RemoteConfig { fallback: Fallback::Neutral, ..fast(down.url()) }),
        ..EpisodeConfig::default()
    };
    let trace = run_episode(&scene, &spec, &cfg);
    assert!(trace.steps().any(|s| s.estimator_fallbacks > 0));
    assert!(trace.steps().flat_map(|s| &s.frontiers).all(|f| f.estimate.source == EstimateSource::Fallback));
    assert_eq!(trace.subtasks().count(), scene.goals.len());

    // estimator down, fail-episode: every goal ends as a remote failure
    let cfg = EpisodeConfig {
        remote_estimator: Some(RemoteConfig { fallback: Fallback::FailEpisode, ..fast(down.url()) }),
        ..EpisodeConfig::default()
    };
    let trace = run_episode(&scene, &spec, &cfg);
    assert!(trace.subtasks().all(|s| s.termination == Termination::RemoteFailure));

    // validator answers out of schema under the neutral fallback: declarations
    // are treated as unverified rejections, never as confirmations
    let bad = StubServer::start(StubMode::MissingField).unwrap();
    let cfg = EpisodeConfig {
        remote_validator: Some(RemoteConfig { fallback: Fallback::Neutral, ..fast(bad.url()) }),
        ..EpisodeConfig::default()
    };
    let trace = run_episode(&scene, &spec, &cfg);
    let verdicts: Vec<_> = trace.decisions().flat_map(|d| &d.verdicts).collect();
    assert!(!verdicts.is_empty());
    assert!(verdicts.iter().all(|v| v.rationale.starts_with("fallback:") && v.confidence == 0.5));
}
