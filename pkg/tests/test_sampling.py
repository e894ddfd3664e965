"""Shot sampling, drift schedules, and level-hopping execution plans."""

from __future__ import annotations

import numpy as np
import pytest

from lkik import pauli
from lkik.coefficients import taylor_coefficients
from lkik.experiments import over_rotation_survival
from lkik.liouville import Observable, identity_superop, state_from_density
from lkik.sampling import (
    PROBABILITY_TOLERANCE,
    ChannelConsistencyError,
    CoverageError,
    DriftSchedule,
    DriftSegment,
    ExecutionPlan,
    PlanResult,
    run_plan,
    sample_shot,
    survival_probability,
)

LEVELS = (0, 1, 2)
WEIGHTS = [float(x) for x in taylor_coefficients(2).weights]


def mitigated_target(delta: float) -> float:
    return sum(
        w * over_rotation_survival(j, {"delta": delta})
        for w, j in zip(WEIGHTS, LEVELS)
    )


class TestSampleShot:
    def _setup(self, state_bits: str, obs_bits: str):
        chan = identity_superop(1)
        obs = Observable(pauli.basis_projector(obs_bits), 1)
        state = state_from_density(pauli.basis_state(state_bits))
        return chan, obs, state

    def test_certain_outcomes(self):
        rng = np.random.default_rng(0)
        chan, obs, state = self._setup("0", "0")
        assert all(sample_shot(chan, obs, state, rng) == 1 for _ in range(50))
        chan, obs, state = self._setup("0", "1")
        assert all(sample_shot(chan, obs, state, rng) == 0 for _ in range(50))

    def test_frequency_matches_probability(self):
        rng = np.random.default_rng(42)
        chan = identity_superop(1)
        obs = Observable(pauli.basis_projector("0"), 1)
        state = state_from_density(pauli.plus_state(1))
        hits = sum(sample_shot(chan, obs, state, rng) for _ in range(100_000))
        assert abs(hits / 100_000 - 0.5) < 0.005

    def test_small_excursions_are_clamped(self):
        chan = identity_superop(1)
        state = state_from_density(pauli.basis_state("0"))
        obs = Observable((1.0 + PROBABILITY_TOLERANCE / 2) * pauli.basis_projector("0"), 1)
        assert survival_probability(chan, obs, state) == 1.0

    def test_large_excursions_raise(self):
        chan = identity_superop(1)
        state = state_from_density(pauli.basis_state("0"))
        obs = Observable(1.2 * pauli.basis_projector("0"), 1)
        with pytest.raises(ChannelConsistencyError):
            survival_probability(chan, obs, state)


class TestDriftSchedule:
    def test_piecewise_lookup(self):
        sched = DriftSchedule(
            [DriftSegment(3, {"delta": 0.1}), DriftSegment(2, {"delta": 0.2})]
        )
        assert sched.params_at(0) == {"delta": 0.1}
        assert sched.params_at(2) == {"delta": 0.1}
        assert sched.params_at(3) == {"delta": 0.2}
        assert sched.total_shots == 5

    def test_lookup_past_the_end(self):
        sched = DriftSchedule.constant({"delta": 0.1}, 4)
        with pytest.raises(CoverageError):
            sched.params_at(4)
        with pytest.raises(IndexError):
            sched.params_at(-1)

    def test_linear_ramp(self):
        seg = DriftSegment(5, {"delta": 0.0}, {"delta": 1.0})
        assert seg.params_at(0)["delta"] == 0.0
        assert seg.params_at(2)["delta"] == pytest.approx(0.5)
        assert seg.params_at(4)["delta"] == 1.0
        assert not seg.constant

    def test_ramp_endpoints_must_match(self):
        with pytest.raises(ValueError, match="same parameters"):
            DriftSegment(5, {"delta": 0.0}, {"xi": 1.0})

    def test_segment_ids(self):
        sched = DriftSchedule(
            [DriftSegment(3, {"d": 0.0}), DriftSegment(3, {"d": 1.0})]
        )
        assert list(sched.segment_ids(6)) == [0, 0, 0, 1, 1, 1]
        with pytest.raises(CoverageError, match="covers 6"):
            sched.segment_ids(7)

    def test_validation(self):
        with pytest.raises(ValueError, match="at least one segment"):
            DriftSchedule([])
        with pytest.raises(ValueError, match="at least one shot"):
            DriftSegment(0, {"d": 0.0})


class TestExecutionPlan:
    def test_total_shots(self):
        plan = ExecutionPlan("hopping", 5, 7, (0, 1, 2), 1)
        assert plan.total_shots == 105

    @pytest.mark.parametrize(
        "kwargs, message",
        [
            (dict(policy="zigzag"), "policy"),
            (dict(n_hop=0), "n_hop"),
            (dict(rounds=0), "rounds"),
            (dict(levels=()), "at least one amplification level"),
        ],
    )
    def test_validation(self, kwargs, message):
        base = dict(policy="hopping", n_hop=5, rounds=7, levels=(0, 1), seed=1)
        base.update(kwargs)
        with pytest.raises(ValueError, match=message):
            ExecutionPlan(**base)


def naive_reference(family, drift, plan, weights, replicate=0):
    """Plain-loop reimplementation of the plan estimator.

    The uniform stream is keyed by ``(seed, policy-id, replicate)`` with
    hopping = 0 and sequential = 1; shots execute round-major under hopping
    and level-major under sequential.
    """
    policy_id = {"hopping": 0, "sequential": 1}[plan.policy]
    gen = np.random.Generator(
        np.random.Philox(np.random.SeedSequence((plan.seed, policy_id, replicate)))
    )
    u = gen.random(plan.total_shots)
    round_values = []
    for r in range(plan.rounds):
        x = 0.0
        for k, (w, level) in enumerate(zip(weights, plan.levels)):
            hits = 0
            for s in range(plan.n_hop):
                if plan.policy == "hopping":
                    g = (r * len(plan.levels) + k) * plan.n_hop + s
                else:
                    g = (k * plan.rounds + r) * plan.n_hop + s
                p = min(max(family(level, drift.params_at(g)), 0.0), 1.0)
                hits += int(u[g] < p)
            x += w * hits / plan.n_hop
        round_values.append(x)
    return float(np.mean(round_values)), [float(x) for x in round_values]


class TestRunPlan:
    def test_matches_naive_reference_exactly(self):
        drift = DriftSchedule(
            [DriftSegment(40, {"delta": 0.08}), DriftSegment(50, {"delta": 0.16})]
        )
        for policy in ("hopping", "sequential"):
            plan = ExecutionPlan(policy, 5, 6, LEVELS, 123)
            got = run_plan(over_rotation_survival, drift, plan, WEIGHTS)
            want_est, want_rounds = naive_reference(
                over_rotation_survival, drift, plan, WEIGHTS
            )
            # Same shots, same hits; only the weighted-sum order may differ,
            # so agreement is to rounding and nothing looser.
            assert got.estimate == pytest.approx(want_est, abs=1e-12)
            np.testing.assert_allclose(got.round_values, want_rounds, atol=1e-12)

    def test_ramp_matches_naive_reference(self):
        drift = DriftSchedule(
            [DriftSegment(90, {"delta": 0.05}, {"delta": 0.2})]
        )
        plan = ExecutionPlan("hopping", 5, 6, LEVELS, 77)
        got = run_plan(over_rotation_survival, drift, plan, WEIGHTS)
        want_est, _ = naive_reference(over_rotation_survival, drift, plan, WEIGHTS)
        assert got.estimate == pytest.approx(want_est, abs=1e-12)

    def test_bitwise_reproducible(self):
        drift = DriftSchedule.constant({"delta": 0.1}, 10_000)
        plan = ExecutionPlan("hopping", 10, 20, LEVELS, 99)
        a = run_plan(over_rotation_survival, drift, plan, WEIGHTS)
        b = run_plan(over_rotation_survival, drift, plan, WEIGHTS)
        assert a.estimate == b.estimate
        assert np.array_equal(a.round_values, b.round_values)

    def test_replicates_and_policies_use_distinct_streams(self):
        drift = DriftSchedule.constant({"delta": 0.1}, 10_000)
        plan = ExecutionPlan("hopping", 10, 20, LEVELS, 99)
        base = run_plan(over_rotation_survival, drift, plan, WEIGHTS)
        rep = run_plan(over_rotation_survival, drift, plan, WEIGHTS, replicate=1)
        seq = run_plan(
            over_rotation_survival,
            drift,
            ExecutionPlan("sequential", 10, 20, LEVELS, 99),
            WEIGHTS,
        )
        assert rep.estimate != base.estimate
        assert seq.estimate != base.estimate
        assert rep.replicate == 1

    def test_result_record(self):
        drift = DriftSchedule.constant({"delta": 0.1}, 10_000)
        plan = ExecutionPlan("sequential", 10, 20, LEVELS, 3)
        res = run_plan(over_rotation_survival, drift, plan, WEIGHTS)
        assert isinstance(res, PlanResult)
        assert res.policy == "sequential"
        assert (res.n_hop, res.rounds, res.seed) == (10, 20, 3)
        assert res.estimate == pytest.approx(float(np.mean(res.round_values)))
        assert res.stderr == pytest.approx(
            float(np.std(res.round_values, ddof=1) / np.sqrt(20))
        )

    def test_policies_agree_without_drift(self):
        drift = DriftSchedule.constant({"delta": 0.1}, 50 * 200 * 3)
        hop = run_plan(
            over_rotation_survival, drift,
            ExecutionPlan("hopping", 50, 200, LEVELS, 5), WEIGHTS,
        )
        seq = run_plan(
            over_rotation_survival, drift,
            ExecutionPlan("sequential", 50, 200, LEVELS, 5), WEIGHTS,
        )
        sigma = float(np.hypot(hop.stderr, seq.stderr))
        assert abs(hop.estimate - seq.estimate) < 3 * sigma
        assert abs(hop.estimate - mitigated_target(0.1)) < 4 * hop.stderr

    def test_stderr_scales_with_rounds(self):
        drift = DriftSchedule.constant({"delta": 0.1}, 10**9)
        quarter = np.mean([
            run_plan(
                over_rotation_survival, drift,
                ExecutionPlan("hopping", 10, 100, LEVELS, 1000 + k), WEIGHTS,
            ).stderr
            for k in range(30)
        ])
        full = np.mean([
            run_plan(
                over_rotation_survival, drift,
                ExecutionPlan("hopping", 10, 400, LEVELS, 2000 + k), WEIGHTS,
            ).stderr
            for k in range(30)
        ])
        assert quarter / full == pytest.approx(2.0, rel=0.1)

    def test_hopping_tracks_abrupt_drift(self):
        # Halfway through, the over-rotation angle doubles.  Hopping rounds
        # interleave the levels through both halves, so their combination
        # stays near the time-averaged target; sequential runs each level in
        # a different noise epoch and lands visibly off.
        n_hop, rounds = 20, 300
        total = n_hop * rounds * len(LEVELS)
        drift = DriftSchedule(
            [
                DriftSegment(total // 2, {"delta": 0.08}),
                DriftSegment(total - total // 2, {"delta": 0.16}),
            ],
            label="abrupt",
        )
        target = 0.5 * (mitigated_target(0.08) + mitigated_target(0.16))
        hop = run_plan(
            over_rotation_survival, drift,
            ExecutionPlan("hopping", n_hop, rounds, LEVELS, 42), WEIGHTS,
        )
        seq = run_plan(
            over_rotation_survival, drift,
            ExecutionPlan("sequential", n_hop, rounds, LEVELS, 42), WEIGHTS,
        )
        assert abs(hop.estimate - target) < abs(seq.estimate - target) / 3

    def test_weight_count_must_match_levels(self):
        drift = DriftSchedule.constant({"delta": 0.1}, 1000)
        plan = ExecutionPlan("hopping", 5, 6, LEVELS, 1)
        with pytest.raises(ValueError, match="weights"):
            run_plan(over_rotation_survival, drift, plan, [1.0, -0.5])

    def test_inconsistent_family_raises(self):
        drift = DriftSchedule.constant({"delta": 0.1}, 1000)
        plan = ExecutionPlan("hopping", 5, 6, (0,), 1)
        with pytest.raises(ChannelConsistencyError):
            run_plan(lambda level, params: 1.2, drift, plan, [1.0])

    def test_short_schedule_raises(self):
        drift = DriftSchedule.constant({"delta": 0.1}, 89)
        plan = ExecutionPlan("hopping", 5, 6, LEVELS, 1)  # needs 90
        with pytest.raises(CoverageError):
            run_plan(over_rotation_survival, drift, plan, WEIGHTS)
