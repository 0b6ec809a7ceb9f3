use contdef::automaton::Mode;
use contdef::harness::{run_scenario, FailureKind, ScenarioConfig, SimEvent, Simulation};
use contdef::{AgentId, Error, Position3};

const BASE: &str = r#"
name = "four"
n = 2
dt = 0.001
duration = 1.0
leaders = [1, 2, 3]

[[agents]]
id = 1
position = [0.0, 0.0, 2.0]

[[agents]]
id = 2
position = [20.0, 0.0, 2.0]

[[agents]]
id = 3
position = [10.0, 18.0, 2.0]

[[agents]]
id = 4
position = [10.0, 6.0, 2.0]
"#;

fn ramp(speed: f64) -> String {
    let mut s = BASE.to_string();
    for (id, x, y) in [(1, 0.0, 0.0), (2, 20.0, 0.0), (3, 10.0, 18.0)] {
        s += &format!(
            "\n[[leader_trajectory]]\nid = {id}\nwaypoints = [{{ t = 0.0, position = [{x}, {y}, 2.0] }}, {{ t = 10.0, position = [{}, {y}, 2.0] }}]\n",
            x + 10.0 * speed
        );
    }
    s
}

fn scenario(text: &str) -> ScenarioConfig {
    ScenarioConfig::from_toml_str(text).unwrap()
}

#[test]
fn static_team_is_a_fixed_point() {
    let cfg = scenario(BASE);
    let mut sim = Simulation::new(cfg.clone()).unwrap();
    sim.run().unwrap();
    for (id, r) in cfg.reference_positions() {
        assert!((sim.position(id).unwrap() - r).norm() <= 1e-12);
    }
    let log = sim.log();
    assert!(log.rows.iter().all(|r| r.mode == Mode::Hdm));
    assert_eq!(log.events.len(), 1);
    assert_eq!(log.events[0].kind(), "network_built");
}

#[test]
fn ramp_tracking_matches_the_closed_form_lag() {
    let (v, g) = (1.0, 25.0);
    let mut sim = Simulation::new(scenario(&ramp(v))).unwrap();
    for _ in 0..2000 {
        sim.step().unwrap();
        let t = sim.time();
        let decay = (-g * t).exp();
        let leader_lag = v / g * (1.0 - decay);
        let follower_lag = 2.0 * v / g * (1.0 - decay) - v * t * decay;
        let leader = sim.position(AgentId(1)).unwrap();
        let follower = sim.position(AgentId(4)).unwrap();
        assert!((v * t - leader.x - leader_lag).abs() <= 1e-9, "leader at t = {t}");
        assert!((10.0 + v * t - follower.x - follower_lag).abs() <= 1e-9, "follower at t = {t}");
        assert!((follower.y - 6.0).abs() <= 1e-12);
    }
    assert_eq!(sim.mode().mode, Mode::Hdm);
}

#[test]
fn zero_duration_logs_the_initial_row_only() {
    let log = run_scenario(&scenario(&BASE.replace("duration = 1.0", "duration = 0.0"))).unwrap();
    assert_eq!(log.rows.len(), 1);
    assert_eq!(log.rows[0].time, 0.0);
    assert_eq!(log.rows[0].agents[3].actual, [10.0, 6.0, 2.0]);
}

#[test]
fn time_column_advances_by_the_stride() {
    let cfg = scenario(&ramp(1.0).replace("leaders = [1, 2, 3]", "leaders = [1, 2, 3]\nlog_stride = 20"));
    let log = run_scenario(&cfg).unwrap();
    assert_eq!(log.rows.len(), 51);
    for pair in log.rows.windows(2) {
        assert_eq!(pair[1].tick - pair[0].tick, 20);
        assert!((pair[1].time - pair[0].time - 0.02).abs() <= 1e-12);
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg = scenario(&(ramp(2.0) + "\n[[failures]]\nagent = 4\ntime = 0.3\nkind = \"freeze\"\n"));
    assert_eq!(run_scenario(&cfg).unwrap(), run_scenario(&cfg).unwrap());
}

#[test]
fn frozen_agent_holds_its_position() {
    let cfg = scenario(&(ramp(2.0) + "\n[[failures]]\nagent = 4\ntime = 0.3\nkind = \"freeze\"\n"));
    let mut sim = Simulation::new(cfg).unwrap();
    while sim.time() < 0.3 - 1e-9 {
        sim.step().unwrap();
    }
    let held = sim.position(AgentId(4)).unwrap();
    while sim.tick() < 1000 {
        sim.step().unwrap();
        assert_eq!(sim.position(AgentId(4)).unwrap(), held);
    }
    let log = sim.log();
    let injected: Vec<_> = log.events_of("failure_injected").collect();
    assert_eq!(injected.len(), 1);
    assert!((injected[0].time - 0.3).abs() <= 1e-9);
    assert!(log.events_of("anomaly_detected").next().is_some());
}

#[test]
fn drifting_agent_moves_at_its_velocity() {
    let cfg = scenario(&(BASE.to_string() + "\n[[failures]]\nagent = 4\ntime = 0.5\nkind = \"drift\"\nvelocity = [0.0, 2.0, 0.0]\n"));
    assert_eq!(cfg.failures[0].kind, FailureKind::Drift { velocity: [0.0, 2.0, 0.0] });
    let mut sim = Simulation::new(cfg).unwrap();
    sim.run().unwrap();
    let r = sim.position(AgentId(4)).unwrap();
    assert!((r - Position3::new(10.0, 7.0, 2.0)).norm() <= 1e-9, "{r}");
}

#[test]
fn failures_beyond_the_run_never_fire() {
    let cfg = scenario(&(BASE.to_string() + "\n[[failures]]\nagent = 4\ntime = 5.0\nkind = \"freeze\"\n"));
    let log = run_scenario(&cfg).unwrap();
    assert_eq!(log.events_of("failure_injected").count(), 0);
}

#[test]
fn missing_dt_is_reported_by_name() {
    let e = ScenarioConfig::from_toml_str(&BASE.replace("dt = 0.001\n", "")).unwrap_err();
    assert_eq!(e, Error::Scenario("dt required".into()));
}

#[test]
fn duplicate_ids_are_rejected() {
    let e = ScenarioConfig::from_toml_str(&BASE.replace("id = 4", "id = 3")).unwrap_err();
    assert!(matches!(e, Error::Scenario(_)));
    assert!(e.to_string().contains("duplicate agent id 3"));
}

#[test]
fn network_summary_is_logged() {
    let log = run_scenario(&scenario(BASE)).unwrap();
    assert_eq!(log.networks.len(), 1);
    let net = &log.networks[0];
    assert_eq!(net.leaders, vec![AgentId(1), AgentId(2), AgentId(3)]);
    assert_eq!(net.interior, vec![AgentId(4)]);
    let w = &net.weights[&AgentId(4)];
    assert!(w.iter().all(|x| (x - 1.0 / 3.0).abs() <= 1e-12));
    assert!(matches!(log.events[0].event, SimEvent::NetworkBuilt { .. }));
}
