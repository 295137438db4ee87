"""Sequential history measures over a frame.

The probability of an outcome sequence is the state evaluated on the
two-sided ordered product of the corresponding time-indexed projections,
computed here by sandwiching the density matrix step by step.  The measure
is additive in each final slot (dropping the last outcome marginalizes), so
exhaustive enumeration doubles as a consistency oracle for the sampler.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

from .errors import InvariantViolation
from .events import HeisenbergFrame, run_trajectory
from .operators import DensityState, PartitionOfUnity
from .seeding import substream

logger = logging.getLogger(__name__)

MAX_TREE_LEAVES = 10 ** 6

__all__ = [
    "MeasurementProtocol",
    "ConsistencyReport",
    "lsw_probability",
    "consistency_check",
    "enumerate_protocols",
    "sampler_vs_measure",
]


@dataclass(frozen=True)
class MeasurementProtocol:
    """A finite record: outcome labels with the times they were obtained at."""

    outcomes: tuple
    times: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "outcomes", tuple(self.outcomes))
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if len(self.outcomes) != len(self.times):
            raise ValueError("outcomes and times must have equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise ValueError("protocol times must be strictly increasing")

    def __len__(self):
        return len(self.outcomes)


def _partition_for(frame: HeisenbergFrame, k: int, label) -> PartitionOfUnity:
    candidates = frame.partitions[k]
    if len(candidates) == 1:
        return candidates[0]
    matching = [p for p in candidates if label in p.labels]
    if len(matching) != 1:
        raise ValueError(
            f"ambiguous candidate partition for label {label!r} at time {frame.times[k]}")
    return matching[0]


def lsw_probability(frame: HeisenbergFrame, initial: DensityState,
                    protocol: MeasurementProtocol) -> float:
    """Probability of a finite outcome sequence under the history measure.

    Applies the projections innermost-first on the density matrix; the trace
    of the final unnormalized state is the sequence probability.  Rounding
    can push the value marginally outside [0, 1]; it is clamped and the
    clamp magnitude logged.
    """
    if len(protocol) == 0:
        return 1.0
    sigma = initial.matrix
    for t, label in zip(protocol.times, protocol.outcomes):
        k = frame.index_of(t)
        P = _partition_for(frame, k, label).projection_for(label)
        sigma = P @ sigma @ P
    value = float(np.real(np.trace(sigma)))
    clamped = min(max(value, 0.0), 1.0)
    if clamped != value:
        logger.debug("history probability clamped by %.3e", abs(value - clamped))
    return clamped


def enumerate_protocols(frame: HeisenbergFrame, steps: int) -> list[MeasurementProtocol]:
    """All outcome sequences over the first ``steps`` frame times."""
    if steps > len(frame.times):
        raise ValueError(f"frame has only {len(frame.times)} times, {steps} steps requested")
    label_sets = []
    leaves = 1
    for k in range(steps):
        if len(frame.partitions[k]) != 1:
            raise ValueError("history enumeration needs exactly one candidate per time")
        labels = frame.partitions[k][0].labels
        leaves *= len(labels)
        if leaves > MAX_TREE_LEAVES:
            raise ValueError(f"outcome tree too large: more than {MAX_TREE_LEAVES} leaves")
        label_sets.append(labels)
    times = frame.times[:steps]
    return [MeasurementProtocol(combo, times)
            for combo in itertools.product(*label_sets)]


@dataclass(frozen=True)
class ConsistencyReport:
    steps: int
    leaves: int
    max_marginal_residual: float
    normalization_residual: float


def consistency_check(frame: HeisenbergFrame, initial: DensityState,
                      steps: int, tol: float = 1e-12) -> ConsistencyReport:
    """Verify prefix-marginal consistency and total normalization.

    For every strict prefix, the measures of its one-step extensions must
    sum back to the measure of the prefix; the full-length measures must sum
    to one.  Residuals beyond ``tol`` raise.
    """
    leaves = 1
    for k in range(steps):
        if len(frame.partitions[k]) != 1:
            raise ValueError("history enumeration needs exactly one candidate per time")
        leaves *= len(frame.partitions[k][0].labels)
        if leaves > MAX_TREE_LEAVES:
            raise ValueError(f"outcome tree too large: more than {MAX_TREE_LEAVES} leaves")

    max_marginal = 0.0
    total = 0.0

    def walk(k: int, sigma: np.ndarray, mass: float):
        nonlocal max_marginal, total
        if k == steps:
            total += mass
            return
        partition = frame.partitions[k][0]
        child_sum = 0.0
        for P in partition.projections:
            child = P @ sigma @ P
            child_mass = float(np.real(np.trace(child)))
            child_sum += child_mass
            walk(k + 1, child, child_mass)
        max_marginal = max(max_marginal, abs(child_sum - mass))

    walk(0, initial.matrix, 1.0)
    norm_residual = abs(total - 1.0)
    if max_marginal > tol or norm_residual > tol:
        raise InvariantViolation(
            f"history measure inconsistent: marginal residual {max_marginal:.3e}, "
            f"normalization residual {norm_residual:.3e}")
    return ConsistencyReport(steps, leaves, max_marginal, norm_residual)


def sampler_vs_measure(frame: HeisenbergFrame, initial: DensityState,
                       steps: int, samples: int, seed: int = 0) -> float:
    """Total-variation distance between sampled and exact history measures.

    Runs the trajectory sampler (always-record, unconditional projective
    steps) ``samples`` times against the exact enumeration of all length-
    ``steps`` sequences.
    """
    protocols = enumerate_protocols(frame, steps)
    exact = {p.outcomes: lsw_probability(frame, initial, p) for p in protocols}
    sub = HeisenbergFrame(frame.times[:steps], frame.propagators[:steps],
                          frame.partitions[:steps], frame.restrictions[:steps])
    counts: dict[tuple, int] = {}
    rng = substream(seed)
    for _ in range(samples):
        result = run_trajectory(sub, initial, record_policy="always",
                                rng_seed=rng, require_detection=False)
        key = tuple(rec.outcome for rec in result.history)
        counts[key] = counts.get(key, 0) + 1
    tv = 0.0
    seen = set(exact) | set(counts)
    for key in seen:
        tv += abs(counts.get(key, 0) / samples - exact.get(key, 0.0))
    return 0.5 * tv
