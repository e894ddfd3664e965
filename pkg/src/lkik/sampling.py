"""Shot-level Monte Carlo evaluation under time-varying noise.

Mitigated expectation values are affine combinations of survival
probabilities measured on noise-amplified circuits.  When the noise
parameters drift while the shots are being collected, the *execution order*
of those shots decides whether the combination stays unbiased:

* **hopping** (drift-resilient): every round draws a small block of shots at
  each amplification level before moving on, so all levels see the same
  noise snapshot and the weighted combination cancels the noise round by
  round;
* **sequential** (drift-sensitive): all shots of level 0 are taken first,
  then level 1, and so on — each level sees a different noise epoch and the
  combination is biased, typically to unphysical values.

Shots are Bernoulli draws of projector survival probabilities from a
counter-based RNG (Philox), keyed by ``(seed, policy, replicate)`` and laid
out in execution order, so streams are bitwise reproducible and the two
policies consume distinct, individually reproducible streams.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Callable, Mapping, Sequence

import numpy as np

from .liouville import DensityVector, Observable, SuperOperator, expectation

__all__ = [
    "ChannelConsistencyError",
    "CoverageError",
    "DriftSegment",
    "DriftSchedule",
    "ExecutionPlan",
    "PlanResult",
    "survival_probability",
    "sample_shot",
    "run_plan",
]

#: Survival probabilities may stray this far outside [0, 1] before the
#: channel is rejected as inconsistent (they are clamped within the band).
PROBABILITY_TOLERANCE = 1e-3

_POLICIES = ("hopping", "sequential")
_POLICY_ID = {name: i for i, name in enumerate(_POLICIES)}


class ChannelConsistencyError(ValueError):
    """Raised when a survival probability is too far outside [0, 1]."""


class CoverageError(ValueError):
    """Raised when a drift schedule covers fewer shots than a plan needs."""


@dataclasses.dataclass(frozen=True)
class DriftSegment:
    """A run of shots sharing one noise-parameter set.

    ``params`` holds named noise parameters (e.g. ``{"delta": 0.08}``).
    When ``end_params`` is given the segment is a linear ramp: each numeric
    parameter is interpolated per shot from ``params`` to ``end_params``.
    """

    shots: int
    params: Mapping[str, float]
    end_params: Mapping[str, float] | None = None

    def __post_init__(self) -> None:
        if self.shots < 1:
            raise ValueError(f"segment must cover at least one shot, got {self.shots}")
        if self.end_params is not None and set(self.end_params) != set(self.params):
            raise ValueError("ramp endpoints must name the same parameters")

    def params_at(self, offset: int) -> dict[str, float]:
        """Parameters for the shot at ``offset`` within this segment."""
        if self.end_params is None:
            return dict(self.params)
        frac = offset / max(self.shots - 1, 1)
        return {
            key: (1.0 - frac) * float(self.params[key]) + frac * float(self.end_params[key])
            for key in self.params
        }

    @property
    def constant(self) -> bool:
        return self.end_params is None or all(
            float(self.end_params[k]) == float(self.params[k]) for k in self.params
        )


@dataclasses.dataclass(frozen=True)
class DriftSchedule:
    """Noise parameters as a piecewise function of the global shot index."""

    segments: tuple[DriftSegment, ...]
    label: str = ""

    def __init__(self, segments: Sequence[DriftSegment], label: str = "") -> None:
        object.__setattr__(self, "segments", tuple(segments))
        object.__setattr__(self, "label", label)
        if not self.segments:
            raise ValueError("drift schedule needs at least one segment")

    @classmethod
    def constant(cls, params: Mapping[str, float], shots: int, label: str = "") -> "DriftSchedule":
        return cls([DriftSegment(shots, dict(params))], label=label)

    @property
    def total_shots(self) -> int:
        return sum(seg.shots for seg in self.segments)

    def params_at(self, index: int) -> dict[str, float]:
        """Parameters governing the shot at global index ``index``."""
        if index < 0:
            raise IndexError(f"shot index must be non-negative, got {index}")
        offset = index
        for seg in self.segments:
            if offset < seg.shots:
                return seg.params_at(offset)
            offset -= seg.shots
        raise CoverageError(
            f"drift schedule covers {self.total_shots} shots, index {index} requested"
        )

    def segment_ids(self, total: int) -> np.ndarray:
        """Segment index for each global shot in ``range(total)``."""
        if total > self.total_shots:
            raise CoverageError(
                f"drift schedule covers {self.total_shots} shots, plan needs {total}"
            )
        bounds = np.cumsum([seg.shots for seg in self.segments])
        return np.searchsorted(bounds, np.arange(total), side="right")


@dataclasses.dataclass(frozen=True)
class ExecutionPlan:
    """How the shot budget is spread over amplification levels and time.

    ``n_hop`` shots are taken per level per round; the policy fixes whether
    rounds iterate over levels (``hopping``) or levels over rounds
    (``sequential``).  Total shots = ``n_hop * rounds * len(levels)`` either
    way, so the two policies are directly comparable.
    """

    policy: str
    n_hop: int
    rounds: int
    levels: tuple[int, ...]
    seed: int

    def __init__(
        self,
        policy: str,
        n_hop: int,
        rounds: int,
        levels: Sequence[int],
        seed: int,
    ) -> None:
        if policy not in _POLICIES:
            raise ValueError(f"policy must be one of {_POLICIES}, got {policy!r}")
        if n_hop < 1:
            raise ValueError(f"n_hop must be >= 1, got {n_hop}")
        if rounds < 1:
            raise ValueError(f"rounds must be >= 1, got {rounds}")
        if not levels:
            raise ValueError("plan needs at least one amplification level")
        object.__setattr__(self, "policy", policy)
        object.__setattr__(self, "n_hop", int(n_hop))
        object.__setattr__(self, "rounds", int(rounds))
        object.__setattr__(self, "levels", tuple(int(j) for j in levels))
        object.__setattr__(self, "seed", int(seed))

    @property
    def total_shots(self) -> int:
        return self.n_hop * self.rounds * len(self.levels)


@dataclasses.dataclass(frozen=True)
class PlanResult:
    """Outcome of one executed plan."""

    policy: str
    estimate: float
    stderr: float
    round_values: np.ndarray
    n_hop: int
    rounds: int
    seed: int
    replicate: int

    def as_dict(self) -> dict:
        return {
            "policy": self.policy,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "n_hop": self.n_hop,
            "rounds": self.rounds,
            "seed": self.seed,
            "replicate": self.replicate,
        }


def survival_probability(
    channel: SuperOperator,
    observable: Observable,
    state: DensityVector,
) -> float:
    """Projector survival probability, clamped to [0, 1].

    Values outside ``[-PROBABILITY_TOLERANCE, 1 + PROBABILITY_TOLERANCE]``
    indicate an inconsistent channel/observable pair and raise
    :class:`ChannelConsistencyError`; smaller excursions are numerical noise
    and are clamped.
    """
    p = expectation(observable, DensityVector(channel.data @ state.data, state.qubits))
    if p < -PROBABILITY_TOLERANCE or p > 1.0 + PROBABILITY_TOLERANCE:
        raise ChannelConsistencyError(
            f"survival probability {p} outside [0, 1] beyond tolerance "
            f"{PROBABILITY_TOLERANCE}; channel and observable are inconsistent"
        )
    return min(max(p, 0.0), 1.0)


def sample_shot(
    channel: SuperOperator,
    observable: Observable,
    state: DensityVector,
    rng: np.random.Generator,
) -> int:
    """One Bernoulli shot of the survival probability."""
    p = survival_probability(channel, observable, state)
    return int(rng.random() < p)


def _stream(plan: ExecutionPlan, replicate: int) -> np.ndarray:
    """Uniform draws for the whole plan, flat in execution order."""
    key = np.random.SeedSequence((plan.seed, _POLICY_ID[plan.policy], replicate))
    gen = np.random.Generator(np.random.Philox(key))
    return gen.random(plan.total_shots)


def _probability_array(
    family: Callable[[int, Mapping[str, float]], float],
    drift: DriftSchedule,
    plan: ExecutionPlan,
) -> np.ndarray:
    """Survival probability for every (round, level, shot) cell.

    The returned array is indexed ``[round, level, shot]`` regardless of
    policy; the policy only decides which *global shot index* (and hence
    which drift segment) each cell maps to.
    """
    rounds, n_levels, n_hop = plan.rounds, len(plan.levels), plan.n_hop
    seg_flat = drift.segment_ids(plan.total_shots)
    if plan.policy == "hopping":
        seg = seg_flat.reshape(rounds, n_levels, n_hop)
    else:
        seg = seg_flat.reshape(n_levels, rounds, n_hop).transpose(1, 0, 2)

    probs = np.empty((rounds, n_levels, n_hop))
    cache: dict[tuple, float] = {}

    def prob(level: int, params: Mapping[str, float]) -> float:
        key = (level, tuple(sorted(params.items())))
        if key not in cache:
            cache[key] = float(family(level, params))
        return cache[key]

    all_constant = all(seg.constant for seg in drift.segments)
    if all_constant:
        table = np.empty((len(drift.segments), n_levels))
        for s, segment in enumerate(drift.segments):
            for k, level in enumerate(plan.levels):
                table[s, k] = prob(level, segment.params)
        probs = table[seg, np.arange(n_levels)[None, :, None]]
        return probs

    # Ramp segments: resolve parameters per global shot index (cached per
    # distinct parameter set, so constant stretches stay cheap).
    for r in range(rounds):
        for k, level in enumerate(plan.levels):
            for s in range(n_hop):
                if plan.policy == "hopping":
                    g = (r * n_levels + k) * n_hop + s
                else:
                    g = (k * rounds + r) * n_hop + s
                probs[r, k, s] = prob(level, drift.params_at(g))
    return probs


def run_plan(
    family: Callable[[int, Mapping[str, float]], float],
    drift: DriftSchedule,
    plan: ExecutionPlan,
    weights: Sequence[float],
    *,
    replicate: int = 0,
) -> PlanResult:
    """Execute a plan and combine the per-level shot means with ``weights``.

    ``family`` maps ``(amplification level, noise parameters)`` to the
    survival probability of the corresponding amplified circuit (use
    :func:`survival_probability` to adapt a channel-building family).
    Probabilities follow the same clamp/consistency contract as
    :func:`sample_shot`.

    Per round ``r`` the estimator is ``x_r = sum_j w_j * mean(shots[r, j])``;
    the estimate is the mean of the ``x_r`` and the standard error their
    sample deviation over ``sqrt(rounds)``.  Under the hopping policy every
    round is a self-contained mitigated measurement, which is what makes the
    combination drift-resilient.
    """
    w = np.asarray([float(x) for x in weights])
    if w.shape != (len(plan.levels),):
        raise ValueError(
            f"{len(plan.levels)} amplification levels need {len(plan.levels)} "
            f"weights, got {w.size}"
        )
    probs = _probability_array(family, drift, plan)
    out_of_band = (probs < -PROBABILITY_TOLERANCE) | (probs > 1.0 + PROBABILITY_TOLERANCE)
    if np.any(out_of_band):
        bad = probs[out_of_band].flat[0]
        raise ChannelConsistencyError(
            f"survival probability {bad} outside [0, 1] beyond tolerance "
            f"{PROBABILITY_TOLERANCE}"
        )
    probs = np.clip(probs, 0.0, 1.0)

    uniforms = _stream(plan, replicate)
    rounds, n_levels, n_hop = plan.rounds, len(plan.levels), plan.n_hop
    if plan.policy == "hopping":
        u = uniforms.reshape(rounds, n_levels, n_hop)
    else:
        u = uniforms.reshape(n_levels, rounds, n_hop).transpose(1, 0, 2)

    level_means = (u < probs).mean(axis=2)
    round_values = level_means @ w
    estimate = float(round_values.mean())
    if rounds > 1:
        stderr = float(round_values.std(ddof=1) / math.sqrt(rounds))
    else:
        stderr = float("nan")
    return PlanResult(
        policy=plan.policy,
        estimate=estimate,
        stderr=stderr,
        round_values=round_values,
        n_hop=n_hop,
        rounds=rounds,
        seed=plan.seed,
        replicate=replicate,
    )
