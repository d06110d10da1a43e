import io

import pytest

from capchain.netsim import (PROFILES, PROFILE_DELAYS, ProcessingProfile,
                             ScenarioError, ScriptedEventError,
                             ac_overhead_ms, build_topology, latency_bench_config,
                             run_latency_bench, run_overhead_bench, run_scenario,
                             summarize, write_measurements_csv,
                             write_stage_traces_csv, write_summary_text)

RULE_GET = {"action": "GET", "resource": "/api/data", "conditions": []}


def base_config(seed=42, **overrides):
    config = {
        "seed": seed,
        "block_interval_ms": 15000,
        "nodes": [
            {"name": "supervisor", "role": "supervisor"},
            {"name": "master", "role": "master", "zone": "zone-a",
             "members": ["sat-client", "sat-provider", "ground-provider"]},
            {"name": "sat-client", "role": "client", "profile": "satellite"},
            {"name": "sat-provider", "role": "satellite", "profile": "satellite",
             "services": ["/api/data"]},
            {"name": "ground-provider", "role": "ground", "profile": "ground",
             "services": ["/api/data"]},
        ],
        "channels": [
            {"a": "sat-client", "b": "sat-provider", "one_way_delay_ms": 5.0},
            {"a": "sat-client", "b": "ground-provider", "one_way_delay_ms": 3.75},
        ],
        "script": [],
    }
    config.update(overrides)
    return config


class TestBuildTopology:
    def test_five_node_testbed_builds(self):
        sim = build_topology(base_config())
        assert len(sim.nodes) == 5
        assert sim.chain.height == 1  # bootstrap block
        assert sim.zone_contract.get_vzone("zone-a").master == \
            sim.nodes["master"].vid
        assert len({node.vid for node in sim.nodes.values()}) == 5

    def test_duplicate_name_rejected(self):
        config = base_config()
        config["nodes"].append({"name": "master", "role": "client"})
        with pytest.raises(ScenarioError, match="duplicate node name"):
            build_topology(config)

    def test_channel_referencing_unknown_node_rejected(self):
        config = base_config()
        config["channels"].append({"a": "sat-client", "b": "ghost"})
        with pytest.raises(ScenarioError, match="unknown node"):
            build_topology(config)

    def test_exactly_one_supervisor_required(self):
        config = base_config()
        config["nodes"][0]["role"] = "client"
        del config["nodes"][0]["name"]
        config["nodes"][0]["name"] = "not-supervisor"
        with pytest.raises(ScenarioError, match="supervisor"):
            build_topology(config)

    def test_seed_required(self):
        config = base_config()
        del config["seed"]
        with pytest.raises(ScenarioError, match="seed"):
            build_topology(config)

    def test_zone_owned_twice_rejected(self):
        config = base_config()
        config["nodes"].append({"name": "master2", "role": "master",
                                "zone": "zone-a"})
        with pytest.raises(ScenarioError, match="owned by more than one"):
            build_topology(config)


class TestRunScenario:
    def test_empty_script_yields_no_measurements(self):
        _, result = run_scenario(base_config())
        assert result.measurements == []

    def test_warmed_request_stream_hits_cache(self):
        config = latency_bench_config("satellite", seed=42, requests=100)
        _, result = run_scenario(config)
        assert len(result.measurements) == 100
        assert result.measurements[0].cache_hit is False
        assert all(m.cache_hit for m in result.measurements[1:])
        assert all(m.outcome == "grant" for m in result.measurements)

    def test_script_event_with_unknown_node_fails_with_index(self):
        config = base_config(script=[
            {"at": 100, "op": "request", "requester": "ghost",
             "provider": "sat-provider", "method": "GET", "uri": "/api/data"},
        ])
        sim = build_topology(config)
        with pytest.raises(ScriptedEventError, match="event 0"):
            sim.run()

    def test_unserved_resource_fails(self):
        config = base_config(script=[
            {"at": 100, "op": "request", "requester": "sat-client",
             "provider": "sat-provider", "method": "GET", "uri": "/api/missing"},
        ])
        with pytest.raises(ScriptedEventError, match="does not serve"):
            build_topology(config).run()

    def test_revocation_denies_after_next_block(self):
        interval = 15000
        script = [
            {"at": 100, "op": "issue", "master": "master", "subject": "sat-client",
             "rules": [RULE_GET], "validity_ms": 10**7},
        ]
        request_times = [16000 + 500 * k for k in range(40)]
        for at in request_times:
            script.append({"at": at, "op": "request", "requester": "sat-client",
                           "provider": "sat-provider", "method": "GET",
                           "uri": "/api/data"})
        revoke_at = 21000
        script.append({"at": revoke_at, "op": "revoke", "master": "master",
                       "subject": "sat-client"})
        _, result = run_scenario(base_config(script=script))
        confirm_at = 30000  # next block after the revoke submission
        for m in result.measurements:
            if m.at_ms >= confirm_at + interval:
                assert m.outcome == "deny"
        late_grants = [m for m in result.measurements
                       if m.outcome == "grant" and m.at_ms > confirm_at]
        assert late_grants == []

    def test_registration_flow_confirms_via_block(self):
        config = base_config()
        config["nodes"].append({"name": "newcomer", "role": "client"})
        config["channels"].append({"a": "newcomer", "b": "sat-provider",
                                   "one_way_delay_ms": 5.0})
        # newcomer is not among bootstrap members; register dynamically
        config["nodes"][1]["members"] = ["sat-client", "sat-provider",
                                         "ground-provider"]
        config["script"] = [
            {"at": 100, "op": "register", "node": "newcomer", "master": "master"},
            {"at": 16000, "op": "advance"},
        ]
        sim, result = run_scenario(config)
        confirmed = [r for r in result.registrations if r["status"] == "confirmed"]
        assert len(confirmed) == 1
        assert confirmed[0]["vid"] == sim.nodes["newcomer"].vid.hex
        record = sim.zone_contract.get_vnode(sim.nodes["newcomer"].vid)
        assert record.vzone_id == "zone-a"

    def test_expectation_mismatch_reported(self):
        script = [{"at": 16000, "op": "request", "requester": "sat-client",
                   "provider": "sat-provider", "method": "GET",
                   "uri": "/api/data", "expect": "grant"}]
        _, result = run_scenario(base_config(script=script))
        # no token was issued, so the grant expectation fails
        assert len(result.expectation_failures) == 1

    def test_dropped_messages_time_out(self):
        config = base_config()
        config["channels"][0]["drop_rate"] = 0.999999
        config["timeout_ms"] = 4000
        config["script"] = [
            {"at": 100, "op": "request", "requester": "sat-client",
             "provider": "sat-provider", "method": "GET", "uri": "/api/data"},
        ]
        _, result = run_scenario(config)
        assert result.measurements[0].outcome == "timeout"
        assert result.measurements[0].total_ms == 4000


class TestLatencyModel:
    def test_satellite_steady_state_totals(self):
        _, result = run_latency_bench("satellite", seed=42, requests=100)
        summary = summarize(result.measurements)
        assert summary["steady_mean_ms"] == pytest.approx(250.0, abs=1e-9)
        assert summary["first_request_ms"] == pytest.approx(310.0, abs=1e-9)
        assert abs(summary["steady_ac_share"] - 0.86) <= 0.02

    def test_ground_steady_state_totals(self):
        _, result = run_latency_bench("ground", seed=42, requests=100)
        summary = summarize(result.measurements)
        assert summary["steady_mean_ms"] == pytest.approx(60.0, abs=1e-9)

    def test_first_request_strictly_slower_than_steady_median(self):
        for profile in ("satellite", "ground"):
            _, result = run_latency_bench(profile, seed=9, requests=50)
            summary = summarize(result.measurements)
            assert summary["first_request_ms"] > summary["steady_median_ms"]

    def test_enforcement_overhead_about_nine_ms(self):
        with_ac, without_ac = run_overhead_bench(seed=5, requests=100)
        overhead = ac_overhead_ms(with_ac.measurements, without_ac.measurements)
        assert overhead == pytest.approx(9.0, abs=1e-9)
        assert summarize(without_ac.measurements)["steady_mean_ms"] == \
            pytest.approx(35.0, abs=1e-9)

    def test_accounting_identity_total_equals_costs_plus_transport(self):
        _, result = run_latency_bench("satellite", seed=13, requests=20)
        profile = PROFILES["satellite"]
        delay = PROFILE_DELAYS["satellite"]
        for m in result.measurements:
            stage_sum = sum(r.duration_ms for r in m.trace.records)
            expected = (profile.data_parse + stage_sum
                        + profile.service_handler + 2 * delay)
            assert m.total_ms == expected

    def test_split_validation_costs_sum_exactly(self):
        profile = PROFILES["satellite"]
        costs = profile.stage_costs()
        assert costs["token_status"] + costs["rule_match"] + \
            costs["condition_check"] == profile.capac_validation

    def test_negative_profile_cost_rejected(self):
        with pytest.raises(ScenarioError):
            ProcessingProfile(identity_auth=-1.0)


class TestDeterminism:
    def test_identical_seeds_reproduce_measurements_and_chain(self):
        def run():
            sim, result = run_scenario(latency_bench_config("satellite", 77, 30))
            measurements = io.StringIO()
            write_measurements_csv(result.measurements, measurements)
            traces = io.StringIO()
            write_stage_traces_csv(result.measurements, traces)
            return (measurements.getvalue(), traces.getvalue(),
                    sim.chain.export_chain_text(), sim.chain.gas_report_text())
        assert run() == run()

    def test_different_seeds_differ_in_addresses(self):
        sim_a = build_topology(base_config(seed=1))
        sim_b = build_topology(base_config(seed=2))
        assert sim_a.nodes["master"].vid != sim_b.nodes["master"].vid


class TestReports:
    def test_measurement_csv_columns_stable(self):
        _, result = run_latency_bench("satellite", seed=4, requests=3)
        out = io.StringIO()
        write_measurements_csv(result.measurements, out)
        header = out.getvalue().splitlines()[0]
        assert header == ("request_id,at_ms,requester,provider,method,uri,"
                          "outcome,stage,reason,cache_hit,block_height,total_ms")

    def test_summary_text_contains_per_stage_breakdown(self):
        _, result = run_latency_bench("satellite", seed=4, requests=10)
        out = io.StringIO()
        write_summary_text(summarize(result.measurements), out)
        text = out.getvalue()
        for stage in ("identity_auth", "token_fetch", "token_status",
                      "rule_match", "condition_check"):
            assert f"stage_mean_ms.{stage}:" in text
        assert "steady_mean_ms: 250" in text
