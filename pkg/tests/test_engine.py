import random

import pytest

from conftest import chain_definition, sh_config, sweep_definition
from sciflow.bridge import BackendDescriptor, BridgeRegistry
from sciflow.engine import (
    LEGAL_TRANSITIONS,
    Engine,
    fold_events,
)
from sciflow.errors import (
    AlreadyTerminal,
    AttemptCapExceeded,
    IncompleteDefinition,
    NotInErrorState,
    SweepDepthExceeded,
    UnknownInstance,
    UnresolvableBackendSelector,
)
from sciflow.model import (
    BackendSelector,
    Edge,
    ExecutableRef,
    Graph,
    InputBinding,
    JobConfig,
    NodeSpec,
    PortKind,
    PortSpec,
    WorkflowDefinition,
    configure_workflow,
)
from sciflow.repository import Repository


def states(engine, iid):
    snap = engine.instance_snapshot(iid)
    return {(j["node"], tuple(j["coord"])): j["state"] for j in snap["jobs"]}


class TestSubmit:
    def test_single_node_ready(self, engine):
        defn = chain_definition(1)
        iid = engine.submit_workflow(defn, "alice")
        assert states(engine, iid) == {("n0", ()): "ready"}
        assert engine.refresh_status(iid) == "submitted"

    def test_linear_chain_initial_states(self, engine):
        iid = engine.submit_workflow(chain_definition(3), "alice")
        st = states(engine, iid)
        assert st[("n0", ())] == "ready"
        assert st[("n1", ())] == "init"
        assert st[("n2", ())] == "init"

    def test_unresolvable_selector(self, engine):
        g = Graph("g", nodes=(NodeSpec("a", output_ports=(PortSpec("out", 0),)),))
        cfg = JobConfig(node="a", executable_ref=ExecutableRef(kind="command", command="true"),
                        backend_binding=BackendSelector(tags={"antimatter"}))
        defn = configure_workflow(g, {"a": cfg})
        with pytest.raises(UnresolvableBackendSelector):
            engine.submit_workflow(defn, "alice")

    def test_incomplete_definition(self, engine):
        defn = chain_definition(2)
        stripped = WorkflowDefinition(graph=defn.graph, configs={"n0": defn.configs["n0"]},
                                      metadata={}, files={})
        with pytest.raises(IncompleteDefinition):
            engine.submit_workflow(stripped, "alice")

    def test_unknown_instance(self, engine):
        with pytest.raises(UnknownInstance):
            engine.tick("nonexistent")
        with pytest.raises(UnknownInstance):
            engine.refresh_status("nonexistent")

    def test_sweep_depth_cap(self, repo, bridge):
        engine = Engine(repo, bridge, max_sweep_depth=0)
        with pytest.raises(SweepDepthExceeded):
            engine.submit_workflow(sweep_definition(), "alice")


class TestTickProgress:
    def test_chain_promotion_after_upstream_finishes(self, engine):
        iid = engine.submit_workflow(chain_definition(2), "alice")
        engine.tick(iid)  # dispatch n0
        trs = engine.tick(iid)  # n0 completes; n1 promoted and dispatched
        moves = {(t.node, t.frm, t.to) for t in trs}
        assert ("n1", "init", "ready") in moves
        assert engine.run_to_quiescence(iid, max_ticks=10) == "finished"

    def test_terminal_tick_is_empty_fixpoint(self, engine):
        iid = engine.submit_workflow(chain_definition(2), "alice")
        assert engine.run_to_quiescence(iid, max_ticks=10) == "finished"
        assert engine.tick(iid) == []
        assert engine.tick(iid) == []

    def test_generator_finish_expands_consumers(self, engine):
        iid = engine.submit_workflow(sweep_definition(count=5), "alice")
        engine.tick(iid)
        trs = engine.tick(iid)  # gen finished: 5 work instances created
        created = [t for t in trs if t.node == "work" and t.to == "ready"]
        assert len(created) == 5
        # expansion size equals the sweep planner's, by construction
        from sciflow.model import NodeSpec as NS, PortSpec as PS
        from sciflow.sweep import GeneratorManifest, plan_sweep

        plan = plan_sweep(NS("work", input_ports=(PS("item", 0),)),
                          {"item": GeneratorManifest.for_port("gen", "items", 5)})
        inst_states = states(engine, iid)
        work_coords = sorted(c for (n, c) in inst_states if n == "work")
        assert work_coords == sorted(plan.instance_coords)

    def test_full_sweep_collects(self, engine, repo):
        iid = engine.submit_workflow(sweep_definition(count=3), "alice")
        assert engine.run_to_quiescence(iid, max_ticks=20) == "finished"
        amap = engine.artifact_map(iid)
        total_ref = amap[("gather", (), "total")]
        assert repo.get_blob(total_ref) == b"ITEM0\nITEM1\nITEM2\n"

    def test_quiescence_within_bound(self, engine):
        defn = chain_definition(4)
        iid = engine.submit_workflow(defn, "alice")
        jobs = 4
        bound = 2 * jobs + 4
        for ticks in range(1, bound + 1):
            engine.tick(iid)
            if engine.refresh_status(iid) in ("finished", "error", "aborted"):
                break
        assert engine.refresh_status(iid) == "finished"
        assert ticks <= bound


class TestFailureHandling:
    def failing_definition(self):
        g = Graph("g", nodes=(
            NodeSpec("boom", output_ports=(PortSpec("out", 0),)),
            NodeSpec("after", input_ports=(PortSpec("inp", 0),), output_ports=(PortSpec("res", 0),)),
        ), edges=(Edge("boom", "out", "after", "inp"),))
        configs = {
            "boom": sh_config("boom", "echo FAIL >&2; exit 9\n"),
            "after": sh_config("after", "cat inp > res\n", inputs=("inp",)),
        }
        return configure_workflow(g, configs)

    def test_failed_job_blocks_downstream_and_errors_at_quiescence(self, engine):
        iid = engine.submit_workflow(self.failing_definition(), "alice")
        status = engine.run_to_quiescence(iid, max_ticks=20)
        assert status == "error"
        st = states(engine, iid)
        assert st[("boom", ())] == "error"
        assert st[("after", ())] == "init"  # blocked, never dispatched

    def test_stderr_captured_on_failure(self, engine):
        iid = engine.submit_workflow(self.failing_definition(), "alice")
        engine.run_to_quiescence(iid, max_ticks=20)
        snap = engine.instance_snapshot(iid)
        boom = next(j for j in snap["jobs"] if j["node"] == "boom")
        assert boom["exit_code"] == 9
        assert engine.stream_bytes(iid, boom["id"], "stderr") == b"FAIL\n"

    def test_missing_declared_output_errors_job(self, engine):
        g = Graph("g", nodes=(NodeSpec("quiet", output_ports=(PortSpec("out", 0),)),))
        defn = configure_workflow(g, {"quiet": sh_config("quiet", "true\n")})
        iid = engine.submit_workflow(defn, "alice")
        assert engine.run_to_quiescence(iid, max_ticks=10) == "error"

    def test_running_plus_error_is_still_running(self, engine):
        g = Graph("g", nodes=(
            NodeSpec("boom", output_ports=(PortSpec("out", 0),)),
            NodeSpec("slow", output_ports=(PortSpec("out", 0),)),
        ))
        configs = {
            "boom": sh_config("boom", "exit 1\n", hint=0.01),
            "slow": sh_config("slow", "echo ok > out\n", hint=10_000.0),
        }
        engine.sim_step = 1.0  # slow job stays running across several ticks
        iid = engine.submit_workflow(configure_workflow(g, configs), "alice")
        engine.tick(iid)
        engine.tick(iid)
        st = states(engine, iid)
        assert st[("boom", ())] == "error"
        assert st[("slow", ())] in ("submitted", "running")
        assert engine.refresh_status(iid) == "running"

    def test_resubmit_recovers_and_downstream_proceeds(self, engine, repo, tmp_path):
        flag = tmp_path / "fail_once"
        flag.write_text("1")
        g = Graph("g", nodes=(
            NodeSpec("flaky", output_ports=(PortSpec("out", 0),)),
            NodeSpec("after", input_ports=(PortSpec("inp", 0),), output_ports=(PortSpec("res", 0),)),
        ), edges=(Edge("flaky", "out", "after", "inp"),))
        script = f'if [ -f "{flag}" ]; then rm "{flag}"; exit 7; fi\necho recovered > out\n'
        configs = {
            "flaky": sh_config("flaky", script),
            "after": sh_config("after", "cat inp > res\n", inputs=("inp",)),
        }
        iid = engine.submit_workflow(configure_workflow(g, configs), "alice")
        assert engine.run_to_quiescence(iid, max_ticks=20) == "error"
        job_id = next(j["id"] for j in engine.instance_snapshot(iid)["jobs"] if j["node"] == "flaky")
        assert engine.resubmit_failed(iid, job_id) == 2
        assert engine.run_to_quiescence(iid, max_ticks=20) == "finished"
        amap = engine.artifact_map(iid)
        assert repo.get_blob(amap[("after", (), "res")]) == b"recovered\n"
        # prior attempt's streams are retained under attempt 1
        inst = engine.load_instance(iid)
        flaky = inst.jobs[("flaky", ())]
        assert 1 in flaky.artifacts_by_attempt and 2 in flaky.artifacts_by_attempt

    def test_resubmit_epochs(self, engine):
        iid = engine.submit_workflow(chain_definition(2), "alice")
        engine.run_to_quiescence(iid, max_ticks=10)
        job_id = next(j["id"] for j in engine.instance_snapshot(iid)["jobs"])
        with pytest.raises(NotInErrorState):
            engine.resubmit_failed(iid, job_id)

    def test_attempt_cap(self, repo, bridge):
        engine = Engine(repo, bridge, attempt_cap=2)
        g = Graph("g", nodes=(NodeSpec("boom", output_ports=(PortSpec("out", 0),)),))
        iid = engine.submit_workflow(
            configure_workflow(g, {"boom": sh_config("boom", "exit 1\n")}), "alice")
        engine.run_to_quiescence(iid, max_ticks=10)
        job_id = engine.instance_snapshot(iid)["jobs"][0]["id"]
        engine.resubmit_failed(iid, job_id)
        engine.run_to_quiescence(iid, max_ticks=10)
        with pytest.raises(AttemptCapExceeded):
            engine.resubmit_failed(iid, job_id)


class TestAbort:
    def test_abort_pending_and_running(self, engine):
        iid = engine.submit_workflow(chain_definition(3), "alice")
        engine.tick(iid)
        engine.abort(iid)
        assert engine.refresh_status(iid) == "aborted"
        assert all(s == "aborted" for s in states(engine, iid).values())

    def test_abort_terminal_rejected(self, engine):
        iid = engine.submit_workflow(chain_definition(1), "alice")
        engine.run_to_quiescence(iid, max_ticks=10)
        with pytest.raises(AlreadyTerminal):
            engine.abort(iid)

    def test_abort_absorbing_under_ticks(self, engine):
        iid = engine.submit_workflow(chain_definition(3), "alice")
        engine.tick(iid)
        engine.abort(iid)
        finished_before = {k for k, s in states(engine, iid).items() if s == "finished"}
        for _ in range(5):
            engine.tick(iid)
            now = states(engine, iid)
            assert {k for k, s in now.items() if s == "finished"} == finished_before
            assert all(s in ("finished", "error", "aborted") for s in now.values())


class TestEventLog:
    def test_no_forbidden_transitions_in_log(self, engine, repo):
        iid = engine.submit_workflow(sweep_definition(3), "alice")
        engine.run_to_quiescence(iid, max_ticks=30)
        events = repo.load_events(iid)
        for e in events:
            if e["type"] == "job_transition":
                assert (e["from"], e["to"]) in LEGAL_TRANSITIONS

    def test_dispatch_preceded_by_input_staging(self, engine, repo):
        iid = engine.submit_workflow(sweep_definition(3), "alice")
        engine.run_to_quiescence(iid, max_ticks=30)
        staged_hashes = set()
        for e in repo.load_events(iid):
            if e["type"] == "artifact_staged":
                staged_hashes.add(e["hash"])
            elif e["type"] == "job_transition" and e["to"] == "submitted":
                for port, digest in e["detail"].get("inputs", {}).items():
                    for h in digest.split(","):
                        assert h in staged_hashes, f"dispatch before staging of {port}"

    def test_fold_matches_live_state(self, engine, repo):
        iid = engine.submit_workflow(sweep_definition(3), "alice")
        engine.run_to_quiescence(iid, max_ticks=30)
        live = engine.instance_snapshot(iid)
        folded = fold_events(iid, repo.load_events(iid))
        assert folded.status() == live["status"]
        assert {(j.node, j.coord): j.state for j in folded.jobs_by_id.values()} == {
            (j["node"], tuple(j["coord"])): j["state"] for j in live["jobs"]}
        assert folded.seq == live["seq"]

    def test_reload_from_disk(self, repo, bridge):
        engine = Engine(repo, bridge)
        iid = engine.submit_workflow(chain_definition(2), "alice")
        engine.run_to_quiescence(iid, max_ticks=10)
        final = engine.instance_snapshot(iid)
        fresh = Engine(repo, bridge)  # new engine over the same store
        assert fresh.instance_snapshot(iid) == final

    def test_inflight_jobs_error_after_reload(self, repo, bridge):
        engine = Engine(repo, bridge, sim_step=0.001)
        g = Graph("g", nodes=(NodeSpec("slow", output_ports=(PortSpec("out", 0),)),))
        defn = configure_workflow(g, {"slow": sh_config("slow", "echo x > out\n", hint=10_000.0)})
        iid = engine.submit_workflow(defn, "alice")
        engine.tick(iid)
        assert states(engine, iid)[("slow", ())] == "submitted"
        fresh = Engine(repo, bridge)  # handles are not persisted
        status = fresh.run_to_quiescence(iid, max_ticks=10)
        assert status == "error"
        job = fresh.instance_snapshot(iid)["jobs"][0]
        assert job["state"] == "error"


class TestInterleavings:
    def test_random_interleavings_preserve_invariants(self, tmp_path):
        # seeded tick/abort/resubmit interleavings over a 6-node workflow
        failures = []
        for seed in range(25):
            rng = random.Random(seed)
            repo = Repository(tmp_path / f"store{seed}")
            bridge = BridgeRegistry()
            bridge.register_backend(BackendDescriptor(
                id="pbs", kind="cluster_sim", capability_tags=frozenset({"cluster"}),
                slots=2, seed=seed))
            engine = Engine(repo, bridge)
            defn = chain_definition(6)
            iid = engine.submit_workflow(defn, "alice")
            aborted = False
            for _ in range(rng.randint(1, 12)):
                op = rng.random()
                try:
                    if op < 0.70:
                        engine.tick(iid)
                    elif op < 0.85 and not aborted:
                        engine.abort(iid)
                        aborted = True
                    else:
                        jobs = engine.instance_snapshot(iid)["jobs"]
                        err = [j for j in jobs if j["state"] == "error"]
                        if err:
                            engine.resubmit_failed(iid, err[0]["id"])
                except (AlreadyTerminal, NotInErrorState):
                    pass
            # drive to quiescence and audit the full log
            bound = 2 * 6 + 4
            for _ in range(bound):
                if engine.refresh_status(iid) in ("finished", "error", "aborted"):
                    break
                engine.tick(iid)
            status = engine.refresh_status(iid)
            if status not in ("finished", "error", "aborted"):
                failures.append((seed, "no quiescence", status))
            for e in repo.load_events(iid):
                if e["type"] == "job_transition" and (e["from"], e["to"]) not in LEGAL_TRANSITIONS:
                    failures.append((seed, "forbidden", e))
            if aborted and status != "aborted":
                failures.append((seed, "abort not absorbing", status))
        assert not failures, failures
