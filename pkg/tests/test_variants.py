from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from smallog.errors import ConfigurationError, DomainError
from smallog.event_model import ACTIVITY, CASE_ID, RESOURCE, TIMESTAMP, EventLog
from smallog.variants import (
    DEFAULT_PERSPECTIVE,
    PerspectiveSet,
    VariantDistribution,
    distribution,
    distribution_distance,
    partition,
    ranked_classes,
    variant_key,
)

from conftest import make_log, make_trace


ACT = PerspectiveSet((ACTIVITY,))
ACT_RES = PerspectiveSet((ACTIVITY, RESOURCE))
RES = PerspectiveSet((RESOURCE,))


class TestPerspectiveSet:
    def test_rejects_identity_and_time_keys(self):
        for key in (CASE_ID, TIMESTAMP):
            with pytest.raises(ConfigurationError):
                PerspectiveSet((ACTIVITY, key))
        forced = PerspectiveSet((TIMESTAMP,), allow_degenerate=True)
        assert TIMESTAMP in forced.keys

    def test_rejects_empty_and_duplicates(self):
        with pytest.raises(ConfigurationError):
            PerspectiveSet(())
        with pytest.raises(ConfigurationError):
            PerspectiveSet((ACTIVITY, ACTIVITY))

    def test_str_is_comma_joined(self):
        assert str(ACT_RES) == "activity,resource"
        assert str(DEFAULT_PERSPECTIVE) == "activity"


class TestVariantKey:
    def test_same_activities_same_key(self):
        a = make_trace("a", ["X", "Y"], resources=["r1", "r2"])
        b = make_trace("b", ["X", "Y"], resources=["r9", None])
        assert variant_key(a, ACT) == variant_key(b, ACT)
        assert variant_key(a, ACT_RES) != variant_key(b, ACT_RES)

    def test_length_difference_separates(self):
        a = make_trace("a", ["X"])
        b = make_trace("b", ["X", "X"])
        assert variant_key(a, ACT) != variant_key(b, ACT)

    def test_trailing_absence_is_padding_neutral(self):
        # A missing resource on a final extra event must not equal the
        # shorter trace: activity still differs at that position.
        a = make_trace("a", ["X"], resources=["r1"])
        b = make_trace("b", ["X", "Y"], resources=["r1", None])
        assert variant_key(a, ACT_RES) != variant_key(b, ACT_RES)

    def test_resource_only_view_can_merge_different_lengths(self):
        # Under {resource}, a trailing resource-free event is invisible.
        a = make_trace("a", ["X"], resources=["r1"])
        b = make_trace("b", ["X", "Y"], resources=["r1", None])
        assert variant_key(a, RES) == variant_key(b, RES)

    def test_undeclared_payload_key_raises(self):
        from smallog.event_model import payload_key

        trace = make_trace("a", ["X"])
        with pytest.raises(DomainError, match="payload"):
            variant_key(trace, PerspectiveSet((payload_key("nope"),)))


def padded_equivalent(t1, t2, perspective) -> bool:
    """Reference oracle: compare position by position after padding with None."""
    n = max(len(t1), len(t2))

    def value(trace, i, key):
        if i >= len(trace):
            return None
        from smallog.event_model import attribute_of

        return attribute_of(trace.events[i], key)

    return all(
        value(t1, i, k) == value(t2, i, k)
        for i in range(n)
        for k in perspective.keys
    )


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.lists(st.sampled_from("AB"), min_size=1, max_size=3),
            st.lists(st.sampled_from(["r", ""]), min_size=3, max_size=3),
        ),
        min_size=2,
        max_size=5,
    )
)
def test_key_equality_matches_padded_comparison(rows):
    traces = [
        make_trace(
            f"c{i}",
            acts,
            start=i * 10,
            resources=[r or None for r in res[: len(acts)]],
        )
        for i, (acts, res) in enumerate(rows)
    ]
    for perspective in (ACT, ACT_RES, RES):
        for t1 in traces:
            for t2 in traces:
                keys_equal = variant_key(t1, perspective) == variant_key(t2, perspective)
                assert keys_equal == padded_equivalent(t1, t2, perspective)


class TestPartition:
    def test_fixture_activity_classes(self, sample_log):
        part = partition(sample_log, ACT)
        sizes = sorted(len(v) for v in part.classes.values())
        assert sizes == [1, 2]
        big = max(part.classes.values(), key=len)
        assert big == ("Case2", "Case3")

    def test_fixture_joint_classes_are_singletons(self, sample_log):
        part = partition(sample_log, ACT_RES)
        assert all(len(v) == 1 for v in part.classes.values())
        assert len(part.classes) == 3

    def test_fixture_resource_view_merges_case1_case2(self, sample_log):
        part = partition(sample_log, RES)
        merged = [v for v in part.classes.values() if len(v) == 2]
        assert merged == [("Case1", "Case2")]

    def test_partition_covers_log_exactly(self, sample_log):
        part = partition(sample_log, ACT)
        members = [c for v in part.classes.values() for c in v]
        assert sorted(members) == sorted(sample_log.traces)
        assert part.log_size == len(sample_log)

    def test_empty_log_has_empty_partition(self):
        part = partition(EventLog.from_traces([]), ACT)
        assert part.classes == {} and part.log_size == 0

    def test_ranking_orders_by_size_then_member(self):
        log = make_log([
            make_trace("z", ["A"]),
            make_trace("m", ["B"]),
            make_trace("n", ["B"]),
            make_trace("a", ["C"]),
        ])
        ranked = ranked_classes(partition(log, ACT))
        assert [members for _, members in ranked] == [("m", "n"), ("a",), ("z",)]


class TestDistribution:
    def test_fixture_probabilities(self, sample_log):
        dist = distribution(partition(sample_log, ACT))
        assert sorted(dist.probabilities.values()) == [Fraction(1, 3), Fraction(2, 3)]
        assert sum(dist.probabilities.values()) == 1

    def test_empty_partition_rejected(self):
        with pytest.raises(DomainError):
            distribution(partition(EventLog.from_traces([]), ACT))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.sampled_from(["A", "B", "AB", "BA"]), min_size=1, max_size=12))
    def test_probabilities_sum_to_one(self, shapes):
        log = make_log(
            [make_trace(f"c{i:02d}", list(shape), start=i * 10) for i, shape in enumerate(shapes)]
        )
        dist = distribution(partition(log, ACT))
        assert sum(dist.probabilities.values()) == Fraction(1)
        assert all(0 < p <= 1 for p in dist.probabilities.values())

    def test_refinement_never_merges(self):
        # Adding a perspective key can only split classes, never merge them.
        log = make_log([
            make_trace("a", ["X", "Y"], resources=["r1", "r1"]),
            make_trace("b", ["X", "Y"], resources=["r2", "r1"]),
            make_trace("c", ["X", "Z"], resources=["r1", "r1"]),
        ])
        coarse = partition(log, ACT)
        fine = partition(log, ACT_RES)
        for members in fine.classes.values():
            keys = {variant_key(log.traces[c], ACT) for c in members}
            assert len(keys) == 1
        assert len(fine.classes) >= len(coarse.classes)


def dist_of(pairs) -> VariantDistribution:
    return VariantDistribution({k: Fraction(*v) for k, v in pairs.items()})


class TestDistance:
    def test_identical_is_zero(self, sample_log):
        d = distribution(partition(sample_log, ACT))
        assert distribution_distance(d, d) == 0

    def test_disjoint_supports_are_one_apart(self):
        d1 = dist_of({("x",): (1, 1)})
        d2 = dist_of({("y",): (1, 1)})
        assert distribution_distance(d1, d2) == 1

    def test_half_overlap(self):
        d1 = dist_of({("a",): (1, 2), ("b",): (1, 2)})
        d2 = dist_of({("a",): (1, 1)})
        assert distribution_distance(d1, d2) == Fraction(1, 2)

    def test_symmetry_and_triangle(self):
        keys = [("a",), ("b",), ("c",)]
        d1 = dist_of({keys[0]: (1, 2), keys[1]: (1, 2)})
        d2 = dist_of({keys[0]: (1, 4), keys[1]: (1, 4), keys[2]: (1, 2)})
        d3 = dist_of({keys[2]: (1, 1)})
        assert distribution_distance(d1, d2) == distribution_distance(d2, d1)
        assert (
            distribution_distance(d1, d3)
            <= distribution_distance(d1, d2) + distribution_distance(d2, d3)
        )

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.integers(min_value=0, max_value=5), min_size=3, max_size=3),
        st.lists(st.integers(min_value=0, max_value=5), min_size=3, max_size=3),
    )
    def test_bounds_and_identity(self, w1, w2):
        keys = [("a",), ("b",), ("c",)]

        def normalize(weights):
            total = sum(weights)
            if total == 0:
                weights, total = [1, 0, 0], 1
            return VariantDistribution(
                {k: Fraction(w, total) for k, w in zip(keys, weights) if w}
            )

        d1, d2 = normalize(w1), normalize(w2)
        dist = distribution_distance(d1, d2)
        assert 0 <= dist <= 1
        assert (dist == 0) == (d1.probabilities == d2.probabilities)
