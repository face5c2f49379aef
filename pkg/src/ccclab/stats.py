"""
Statistical functionals over joint distributions.

A *family* is any callable ``(a, b) -> JointDistribution`` over at least the
outcome variables ``A`` and ``B``; :func:`ccclab.experiments.family` builds one
from an experiment config.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from math import pi
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import PreconditionError
from .joint import ZERO_EVENT, JointDistribution

Family = Callable[[float, float], JointDistribution]

DEFAULT_GRID = (0.0, pi / 8, pi / 4, 3 * pi / 8, pi / 2)


@dataclass(frozen=True)
class ChshSettings:
    a: float
    a_prime: float
    b: float
    b_prime: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.a, self.a_prime, self.b, self.b_prime)


CANONICAL = ChshSettings(0.0, pi / 4, pi / 8, 3 * pi / 8)


def canonical_settings(bell_index: int = 0) -> ChshSettings:
    """Maximally violating settings for a pair in Bell state ``bell_index``.

    With real-plane bases, Bell states 0 and 3 correlate through ``a - b`` and
    states 1 and 2 through ``a + b``; for the latter the B-side angles are
    mirrored.  States 1 and 3 reach ``S = -2*sqrt(2)``.
    """
    if bell_index in (1, 2):
        return ChshSettings(CANONICAL.a, CANONICAL.a_prime, -CANONICAL.b, -CANONICAL.b_prime)
    if bell_index in (0, 3):
        return CANONICAL
    raise PreconditionError(f"BellIndex out of range: {bell_index!r}")


@dataclass(frozen=True)
class CorrelationReport:
    E: float
    chsh: float | None
    no_signaling_gap: float
    selection_sensitivity: float


def condition(joint: JointDistribution, variable: str, value) -> JointDistribution:
    """Postselect on ``variable == value``: renormalize and drop the variable."""
    return joint.restrict(variable, value).drop(variable)


def _outcome_pair(joint: JointDistribution) -> JointDistribution:
    if len(joint.variables) == 2:
        return joint
    return joint.marginal("A", "B")


def correlator(joint: JointDistribution) -> float:
    """E = P(equal) - P(unequal) for a joint over two binary variables."""
    joint = _outcome_pair(joint)
    if any(len(d) != 2 for d in joint.domains):
        raise PreconditionError(f"correlator needs binary variables, got domains {joint.domains}")
    t = joint.table
    return float(t[0, 0] + t[1, 1] - t[0, 1] - t[1, 0])


def chsh_terms(evaluate: Family, s: ChshSettings) -> tuple[float, float, float, float]:
    """E(a,b), E(a,b'), E(a',b), E(a',b')."""
    return tuple(
        correlator(evaluate(x, y)) for x, y in ((s.a, s.b), (s.a, s.b_prime), (s.a_prime, s.b), (s.a_prime, s.b_prime))
    )


def chsh(evaluate: Family, s: ChshSettings = CANONICAL) -> float:
    """S = E(a,b) - E(a,b') + E(a',b) + E(a',b')."""
    e_ab, e_abp, e_apb, e_apbp = chsh_terms(evaluate, s)
    return e_ab - e_abp + e_apb + e_apbp


def _grid(values: Iterable[float]) -> tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if not values:
        raise PreconditionError("settings grid must be nonempty")
    return values


def _evaluate_grid(evaluate: Family, a_values, b_values) -> dict:
    return {(a, b): evaluate(a, b) for a in a_values for b in b_values}


def no_signaling_gap(evaluate: Family, a_values: Sequence[float] = DEFAULT_GRID, b_values: Sequence[float] | None = None) -> float:
    """Largest change of one wing's outcome marginal under a change of the other wing's setting."""
    a_values = _grid(a_values)
    b_values = a_values if b_values is None else _grid(b_values)
    joints = _evaluate_grid(evaluate, a_values, b_values)
    p_a = {k: j.marginal("A").table for k, j in joints.items()}
    p_b = {k: j.marginal("B").table for k, j in joints.items()}
    gap = 0.0
    for a in a_values:
        for b, b2 in permutations(b_values, 2):
            gap = max(gap, float(np.max(np.abs(p_a[a, b] - p_a[a, b2]))))
    for b in b_values:
        for a, a2 in permutations(a_values, 2):
            gap = max(gap, float(np.max(np.abs(p_b[a, b] - p_b[a2, b]))))
    return gap


def _membership(joint: JointDistribution, variable: str, value) -> tuple[np.ndarray, np.ndarray]:
    """P(variable=value | A, B) on the (A, B) grid, plus a mask of defined cells."""
    ab = joint.marginal("A", "B", variable)
    k = ab.index_of(variable, value)
    p_ab = ab.table.sum(axis=2)
    defined = p_ab > ZERO_EVENT
    cond = np.divide(ab.table[:, :, k], p_ab, out=np.zeros_like(p_ab), where=defined)
    return cond, defined


def selection_sensitivity(
    evaluate: Family,
    m,
    a_values: Sequence[float],
    b_values: Sequence[float],
    variable: str = "M",
) -> float:
    """How much ensemble membership ``variable == m`` responds to a settings change.

    Max over outcome cells (A, B) and over pairs of A-side settings at fixed b
    (and B-side pairs at fixed a) of the change in ``P(variable=m | A, B, a, b)``.
    Cells with zero probability under either setting are skipped.
    """
    a_values, b_values = _grid(a_values), _grid(b_values)
    table = {k: _membership(j, variable, m) for k, j in _evaluate_grid(evaluate, a_values, b_values).items()}

    def diff(k1, k2):
        (c1, d1), (c2, d2) = table[k1], table[k2]
        both = d1 & d2
        return float(np.max(np.abs(c1 - c2)[both])) if both.any() else 0.0

    best = 0.0
    for b in b_values:
        for a, a2 in permutations(a_values, 2):
            best = max(best, diff((a, b), (a2, b)))
    for a in a_values:
        for b, b2 in permutations(b_values, 2):
            best = max(best, diff((a, b), (a, b2)))
    return best


def correlation(joint: JointDistribution, x: str, y: str) -> float:
    """Pearson correlation of two numerically valued variables."""
    pair = joint.marginal(x, y)
    xs = np.asarray(pair.domains[0], dtype=float)
    ys = np.asarray(pair.domains[1], dtype=float)
    t = pair.table
    px, py = t.sum(axis=1), t.sum(axis=0)
    mx, my = px @ xs, py @ ys
    cov = xs @ t @ ys - mx * my
    vx, vy = px @ xs**2 - mx**2, py @ ys**2 - my**2
    if vx <= 0 or vy <= 0:
        raise PreconditionError(f"correlation undefined: {x!r} or {y!r} is constant")
    return float(cov / np.sqrt(vx * vy))


def correlation_report(
    evaluate: Family,
    a: float,
    b: float,
    settings: ChshSettings | None = None,
    grid: Sequence[float] = DEFAULT_GRID,
    membership: tuple[str, object] | None = None,
) -> CorrelationReport:
    """Bundle E at (a, b), optional CHSH, the no-signaling gap over ``grid`` and,
    when ``membership=(variable, value)`` is given, its selection sensitivity."""
    sens = 0.0
    if membership is not None:
        sens = selection_sensitivity(evaluate, membership[1], grid, grid, variable=membership[0])
    return CorrelationReport(
        E=correlator(evaluate(a, b)),
        chsh=None if settings is None else chsh(evaluate, settings),
        no_signaling_gap=no_signaling_gap(evaluate, grid),
        selection_sensitivity=sens,
    )
