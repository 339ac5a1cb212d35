import textwrap

import pytest

from smallog.errors import (
    ConfigurationError,
    DomainError,
    PredictorFailure,
    ProtocolError,
)
from smallog.event_model import END_MARKER, RoleSource, extract_registry
from smallog.prediction import (
    PredictorHandle,
    generate_instances,
    predict,
    predict_all,
    read_instances_file,
    read_label_lines,
    read_registry_file,
    run_external,
    target_space,
    train_baseline,
    with_role_payload,
    write_instances_file,
    write_registry_file,
    write_targets_file,
)

from conftest import make_log, make_trace, uniform_log


def registry_of(log, role_source=None):
    return extract_registry(log, role_source)


class TestTargetSpace:
    def test_targets_end_with_marker(self, sample_log):
        registry = registry_of(sample_log)
        acts = target_space(registry, "next_activity")
        assert acts[-1] == END_MARKER
        assert acts[:-1] == registry.activities
        roles = target_space(registry, "next_role")
        assert roles[-1] == END_MARKER

    def test_unknown_task(self, sample_log):
        with pytest.raises(ConfigurationError):
            target_space(registry_of(sample_log), "next_timestamp")


class TestInstances:
    def test_fixture_activity_instances(self, sample_log):
        instances = generate_instances(sample_log, "next_activity", registry_of(sample_log))
        assert len(instances) == 9
        case1 = [i for i in instances if i.case_id == "Case1"]
        assert [(i.prefix_length, i.target) for i in case1] == [
            (1, "T"),
            (2, "W"),
            (3, END_MARKER),
        ]
        assert case1[1].prefix == (("A", "MF"), ("T", "SL"))

    def test_ordered_by_case_then_length(self, sample_log):
        instances = generate_instances(sample_log, "next_activity", registry_of(sample_log))
        coords = [(i.case_id, i.prefix_length) for i in instances]
        assert coords == sorted(coords)

    def test_role_targets_from_resources(self, sample_log):
        instances = generate_instances(sample_log, "next_role", registry_of(sample_log))
        case1 = [i for i in instances if i.case_id == "Case1"]
        assert [i.target for i in case1] == ["SL", "KH", END_MARKER]

    def test_unregistered_activity_rejected(self, sample_log):
        small = sample_log.restrict(["Case1"])
        registry = registry_of(small)  # lacks activity C
        with pytest.raises(DomainError, match="registry"):
            generate_instances(sample_log, "next_activity", registry)

    def test_underivable_role_names_position(self):
        log = make_log([make_trace("c", ["A", "B"], resources=["r1", None])])
        registry = registry_of(make_log([make_trace("d", ["A", "B"], resources=["r1", "r2"])]))
        with pytest.raises(DomainError, match="position 2"):
            generate_instances(log, "next_role", registry)

    def test_activity_task_tolerates_missing_roles(self):
        log = make_log([make_trace("c", ["A", "B"])])
        instances = generate_instances(log, "next_activity", registry_of(log))
        assert [i.target for i in instances] == ["B", END_MARKER]
        assert instances[0].prefix == (("A", None),)


class TestTraining:
    def test_deterministic_counts(self):
        log = uniform_log(10, ["A", "B", "C"])
        model = train_baseline(log, "next_activity", 1, registry_of(log))
        assert model.tables[("A",)] == {"B": 10}
        assert model.tables[("B",)] == {"C": 10}
        assert model.tables[("C",)] == {END_MARKER: 10}
        assert model.tables[()] == {"B": 10, "C": 10, END_MARKER: 10}

    def test_branching_counts(self):
        log = make_log([
            make_trace("x", ["A", "B"]),
            make_trace("y", ["A", "C"], start=10),
        ])
        model = train_baseline(log, "next_activity", 1, registry_of(log))
        assert model.tables[("A",)] == {"B": 1, "C": 1}

    def test_windows_capped_by_order(self):
        log = uniform_log(1, ["A", "B", "C", "D"])
        model = train_baseline(log, "next_activity", 2, registry_of(log))
        assert ("A", "B", "C") not in model.tables
        assert model.tables[("B", "C")] == {"D": 1}

    def test_order_below_one_rejected(self, sample_log):
        with pytest.raises(ConfigurationError):
            train_baseline(sample_log, "next_activity", 0, registry_of(sample_log))

    def test_empty_training_log_rejected(self, sample_log):
        from smallog.event_model import EventLog

        with pytest.raises(DomainError):
            train_baseline(EventLog.from_traces([]), "next_activity", 1, registry_of(sample_log))


class TestPredict:
    def build_model(self):
        # AB appears twice, AC once: context (A) prefers B; context (Z) is
        # unseen so prediction backs off.
        log = make_log([
            make_trace("x1", ["A", "B"]),
            make_trace("x2", ["A", "B"], start=10),
            make_trace("x3", ["A", "C"], start=20),
        ])
        return train_baseline(log, "next_activity", 3, registry_of(log)), log

    def test_longest_context_wins(self):
        model, log = self.build_model()
        instances = generate_instances(log, "next_activity", registry_of(log))
        by_key = {(i.case_id, i.prefix_length): i for i in instances}
        assert predict(model, by_key[("x1", 1)]) == "B"
        assert predict(model, by_key[("x3", 2)]) == END_MARKER

    def test_tie_breaks_to_lexicographic_minimum(self):
        log = make_log([
            make_trace("x", ["A", "B"]),
            make_trace("y", ["A", "C"], start=10),
        ])
        model = train_baseline(log, "next_activity", 1, registry_of(log))
        instance = generate_instances(
            log.restrict(["x"]), "next_activity", registry_of(log)
        )[0]
        assert predict(model, instance) == "B"

    def test_global_fallback_uses_empty_window(self):
        # A prefix of unseen labels backs off to the global distribution.
        train = make_log([
            make_trace("t1", ["A", "B"]),
            make_trace("t2", ["A", "B"], start=10),
        ])
        registry = registry_of(make_log([
            make_trace("t1", ["A", "B"]),
            make_trace("t2", ["Z"], start=10),
        ]))
        model = train_baseline(train, "next_activity", 2, registry)
        probe = make_log([make_trace("p", ["Z"])])
        instance = generate_instances(probe, "next_activity", registry)[0]
        # Global counts: B twice, END twice; tie resolves to the marker
        # or B by lexicographic order (B < ⟂END).
        assert predict(model, instance) == "B"

    def test_self_accuracy_on_deterministic_log(self):
        log = uniform_log(25, ["A", "B", "C", "D"])
        registry = registry_of(log)
        model = train_baseline(log, "next_activity", 3, registry)
        instances = generate_instances(log, "next_activity", registry)
        predictions = predict_all(model, instances)
        assert predictions == [i.target for i in instances]

    def test_role_task_predicts_roles(self, sample_log):
        registry = registry_of(sample_log)
        model = train_baseline(sample_log, "next_role", 2, registry)
        instances = generate_instances(sample_log, "next_role", registry)
        predictions = predict_all(model, instances)
        assert set(predictions) <= set(target_space(registry, "next_role"))


class TestHandleValidation:
    def test_builtin_defaults(self):
        handle = PredictorHandle("markov")
        assert handle.kind == "builtin_markov" and handle.order == 3

    def test_name_rules(self):
        for bad in ("", " padded ", "a/b"):
            with pytest.raises(ConfigurationError):
                PredictorHandle(bad)

    def test_external_needs_placeholders(self):
        with pytest.raises(ConfigurationError, match="placeholders"):
            PredictorHandle("x", kind="external", command="run {train}")
        PredictorHandle("x", kind="external", command="run {train} {instances} {out}")

    def test_builtin_rejects_command(self):
        with pytest.raises(ConfigurationError):
            PredictorHandle("x", command="run")

    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            PredictorHandle("x", kind="neural")


class TestProtocolFiles:
    def test_registry_round_trip(self, sample_log, tmp_path):
        registry = registry_of(sample_log)
        path = tmp_path / "registry.txt"
        write_registry_file(registry, path)
        loaded = read_registry_file(path)
        assert loaded.activities == registry.activities
        assert loaded.roles == registry.roles
        assert loaded.end_marker == END_MARKER

    def test_instances_round_trip(self, sample_log, tmp_path):
        registry = registry_of(sample_log)
        instances = generate_instances(sample_log, "next_activity", registry)
        path = tmp_path / "instances.csv"
        write_instances_file(instances, "next_activity", path)
        assert b"\r\n" in path.read_bytes()
        loaded, task = read_instances_file(path)
        assert task == "next_activity"
        assert [i.case_id for i in loaded] == [i.case_id for i in instances]
        assert [i.prefix for i in loaded] == [i.prefix for i in instances]
        # Targets never travel through the protocol.
        assert all(i.target is None for i in loaded)

    def test_instances_file_rejects_mixed_tasks(self, sample_log, tmp_path):
        registry = registry_of(sample_log)
        instances = generate_instances(sample_log, "next_activity", registry)
        path = tmp_path / "instances.csv"
        write_instances_file(instances, "next_activity", path)
        lines = path.read_bytes().split(b"\r\n")
        lines[2] = lines[2].replace(b"next_activity", b"next_role")
        path.write_bytes(b"\r\n".join(lines))
        with pytest.raises(ProtocolError, match="task"):
            read_instances_file(path)

    def test_delimiter_label_is_rejected(self, tmp_path):
        log = make_log([make_trace("c", ["A|B", "C"])])
        instances = generate_instances(log, "next_activity", registry_of(log))
        with pytest.raises(DomainError, match="delimiter"):
            write_instances_file(instances, "next_activity", tmp_path / "i.csv")

    def test_targets_file(self, sample_log, tmp_path):
        registry = registry_of(sample_log)
        instances = generate_instances(sample_log, "next_activity", registry)
        path = tmp_path / "targets.txt"
        write_targets_file(instances, path)
        labels = read_label_lines(path, len(instances), "target")
        assert labels == [i.target for i in instances]

    def test_label_line_count_enforced(self, tmp_path):
        path = tmp_path / "labels.txt"
        path.write_text("A\nB\n")
        with pytest.raises(ProtocolError, match="2"):
            read_label_lines(path, 3, "prediction")

    def test_role_payload_materialization(self, sample_log):
        enriched = with_role_payload(sample_log)
        assert "role" in enriched.payload_keys
        event = enriched.traces["Case1"].events[0]
        assert event.payload["role"] == "MF"

    def test_role_payload_respects_mapping(self, sample_log):
        source = RoleSource(mapping={
            "MF": "intake", "MK": "intake",
            "SL": "assessor", "PE": "assessor",
            "KH": "closer", "SJ": "closer",
        })
        enriched = with_role_payload(sample_log, source)
        assert enriched.traces["Case1"].events[0].payload["role"] == "intake"


def write_script(tmp_path, body: str):
    script = tmp_path / "predictor.py"
    script.write_text(textwrap.dedent(body))
    return script


CONSTANT_PREDICTOR = """\
    import csv, sys
    instances, out, label = sys.argv[1], sys.argv[2], sys.argv[3]
    with open(instances, newline="") as fh:
        n = sum(1 for _ in csv.DictReader(fh))
    with open(out, "w") as fh:
        fh.write((label + "\\n") * n)
"""


class TestRunExternal:
    def setup_cell(self, sample_log, tmp_path):
        registry = registry_of(sample_log)
        instances = generate_instances(sample_log, "next_activity", registry)
        scratch = tmp_path / "scratch"
        return registry, instances, scratch

    def handle(self, command):
        return PredictorHandle("ext", kind="external", command=command, timeout=30)

    def test_happy_path(self, sample_log, tmp_path):
        registry, instances, scratch = self.setup_cell(sample_log, tmp_path)
        script = write_script(tmp_path, CONSTANT_PREDICTOR)
        handle = self.handle(
            f"python3 {script} {{instances}} {{out}} T {{train}} {{registry}}"
        )
        predictions = run_external(
            handle, sample_log, instances, registry, scratch, "next_activity"
        )
        assert predictions == ["T"] * len(instances)
        # The protocol files stay behind for audit.
        assert (scratch / "train.csv").exists()
        assert (scratch / "registry.txt").exists()

    def test_train_file_carries_role_column(self, sample_log, tmp_path):
        registry, instances, scratch = self.setup_cell(sample_log, tmp_path)
        script = write_script(tmp_path, CONSTANT_PREDICTOR)
        handle = self.handle(f"python3 {script} {{instances}} {{out}} T {{train}}")
        run_external(handle, sample_log, instances, registry, scratch, "next_activity")
        header = (scratch / "train.csv").read_bytes().split(b"\r\n")[0]
        assert b"role" in header.split(b",")

    def test_nonzero_exit_is_failure_with_stderr_tail(self, sample_log, tmp_path):
        registry, instances, scratch = self.setup_cell(sample_log, tmp_path)
        script = write_script(
            tmp_path,
            """\
            import sys
            print("model exploded", file=sys.stderr)
            sys.exit(3)
            """,
        )
        handle = self.handle(f"python3 {script} {{train}} {{instances}} {{out}}")
        with pytest.raises(PredictorFailure, match="model exploded"):
            run_external(handle, sample_log, instances, registry, scratch, "next_activity")

    def test_missing_output_file(self, sample_log, tmp_path):
        registry, instances, scratch = self.setup_cell(sample_log, tmp_path)
        script = write_script(tmp_path, "pass\n")
        handle = self.handle(f"python3 {script} {{train}} {{instances}} {{out}}")
        with pytest.raises(ProtocolError, match="predictions.txt"):
            run_external(handle, sample_log, instances, registry, scratch, "next_activity")

    def test_short_output(self, sample_log, tmp_path):
        registry, instances, scratch = self.setup_cell(sample_log, tmp_path)
        script = write_script(
            tmp_path,
            """\
            import sys
            open(sys.argv[2], "w").write("T\\n")
            """,
        )
        handle = self.handle(f"python3 {script} {{train}} {{out}} {{instances}}")
        with pytest.raises(ProtocolError):
            run_external(handle, sample_log, instances, registry, scratch, "next_activity")

    def test_unregistered_label(self, sample_log, tmp_path):
        registry, instances, scratch = self.setup_cell(sample_log, tmp_path)
        script = write_script(tmp_path, CONSTANT_PREDICTOR)
        handle = self.handle(
            f"python3 {script} {{instances}} {{out}} NOPE {{train}}"
        )
        with pytest.raises(ProtocolError, match="NOPE"):
            run_external(handle, sample_log, instances, registry, scratch, "next_activity")

    def test_nonexistent_command(self, sample_log, tmp_path):
        registry, instances, scratch = self.setup_cell(sample_log, tmp_path)
        handle = self.handle("/does/not/exist {train} {instances} {out}")
        with pytest.raises(PredictorFailure, match="failed to start"):
            run_external(handle, sample_log, instances, registry, scratch, "next_activity")

    def test_timeout(self, sample_log, tmp_path):
        registry, instances, scratch = self.setup_cell(sample_log, tmp_path)
        script = write_script(tmp_path, "import time\ntime.sleep(30)\n")
        handle = PredictorHandle(
            "slow",
            kind="external",
            command=f"python3 {script} {{train}} {{instances}} {{out}}",
            timeout=0.5,
        )
        with pytest.raises(PredictorFailure, match="timeout"):
            run_external(handle, sample_log, instances, registry, scratch, "next_activity")

    def test_builtin_handle_rejected(self, sample_log, tmp_path):
        registry, instances, scratch = self.setup_cell(sample_log, tmp_path)
        with pytest.raises(ConfigurationError):
            run_external(
                PredictorHandle("markov"),
                sample_log,
                instances,
                registry,
                scratch,
                "next_activity",
            )
