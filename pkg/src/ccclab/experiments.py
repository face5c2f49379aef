"""
Evaluators for the four experiment shapes.

``V``
    One Bell pair prepared in state ``prep``; wings measured at angles ``a``
    (qubit A) and ``b`` (qubit B).
``W``
    Two Bell pairs ``source1`` on (A, inner1) and ``source2`` on (inner2, B).
    The wings are measured first, then the inner pair is Bell-measured (M).
    ``mode`` selects the full ensemble, postselection on M, or a boundary
    constraint that forces M (final-state projection).
``delayed V``
    A V experiment whose preparation is one of the four Bell states, uniformly
    at random, recorded only later as D.

Exact joints are computed two independent ways: by contracting the full state
against the measurement bases (order-free projector algebra), and by walking
the A, B, M collapse sequence with :mod:`ccclab.qcore`.  Sampling walks the
same sequence, one counter-based Philox block per trial.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np

from . import qcore
from .errors import ImpossibleConstraintError, PreconditionError
from .joint import JointDistribution, empirical
from .rng import trial_uniforms
from .stats import condition

BIT = (0, 1)
BELL = (0, 1, 2, 3)
W_LABELS = ("A", "inner1", "inner2", "B")
QA, QI1, QI2, QB = range(4)


@dataclass(frozen=True)
class Unconstrained:
    pass


@dataclass(frozen=True)
class PostselectOn:
    m: int

    def __post_init__(self):
        qcore.check_bell_index(self.m)


@dataclass(frozen=True)
class ConstrainTo:
    m: int

    def __post_init__(self):
        qcore.check_bell_index(self.m)


Mode = Union[Unconstrained, PostselectOn, ConstrainTo]


@dataclass(frozen=True)
class VConfig:
    prep: int = 0
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self):
        qcore.check_bell_index(self.prep)


@dataclass(frozen=True)
class WConfig:
    a: float = 0.0
    b: float = 0.0
    source1: int = 0
    source2: int = 0
    mode: Mode = field(default_factory=Unconstrained)

    def __post_init__(self):
        qcore.check_bell_index(self.source1)
        qcore.check_bell_index(self.source2)
        if not isinstance(self.mode, (Unconstrained, PostselectOn, ConstrainTo)):
            raise PreconditionError(f"unknown W mode {self.mode!r}")


@dataclass(frozen=True)
class DelayedVConfig:
    a: float = 0.0
    b: float = 0.0


Config = Union[VConfig, WConfig, DelayedVConfig]


@dataclass(frozen=True)
class RunRecord:
    """One sampled trial.  ``weight`` is the probability of the recorded outcome path."""

    trial: int
    a: float
    b: float
    A: int
    B: int
    M: int | None = None
    D: int | None = None
    accepted: bool = True
    weight: float = 1.0


def v_state(prep: int) -> qcore.StateVector:
    return qcore.bell_state(prep, labels=("A", "B"))


def w_state(source1: int = 0, source2: int = 0) -> qcore.StateVector:
    return qcore.tensor(
        qcore.bell_state(source1, labels=W_LABELS[:2]),
        qcore.bell_state(source2, labels=W_LABELS[2:]),
    )


# -- exact joints by contraction ---------------------------------------------


def run_v_exact(cfg: VConfig) -> JointDistribution:
    """Joint of (A, B) for a Bell pair measured in real-plane bases."""
    va, vb = qcore.basis_vectors(cfg.a), qcore.basis_vectors(cfg.b)
    amp = np.einsum("xi,yj,ij->xy", va, vb, v_state(cfg.prep).tensor())
    return JointDistribution(("A", "B"), (BIT, BIT), np.abs(amp) ** 2)


def run_w_exact(cfg: WConfig) -> JointDistribution:
    """Full-ensemble joint of (A, B, M) for the W experiment."""
    if isinstance(cfg.mode, ConstrainTo):
        raise PreconditionError("run_w_exact needs an unconstrained W config; use run_w_constrained_exact")
    va, vb = qcore.basis_vectors(cfg.a), qcore.basis_vectors(cfg.b)
    bell = qcore.BELL_VECTORS.reshape(4, 2, 2).conj()
    amp = np.einsum("xi,yl,mjk,ijkl->xym", va, vb, bell, w_state(cfg.source1, cfg.source2).tensor())
    return JointDistribution(("A", "B", "M"), (BIT, BIT, BELL), np.abs(amp) ** 2)


def run_w_postselected_exact(cfg: WConfig) -> JointDistribution:
    """(A, B) joint of the W runs whose M outcome matched the postselection target."""
    if not isinstance(cfg.mode, PostselectOn):
        raise PreconditionError("postselected joint needs mode PostselectOn(m)")
    return condition(run_w_exact(replace(cfg, mode=Unconstrained())), "M", cfg.mode.m)


def run_v_delayed_exact(a: float, b: float) -> JointDistribution:
    """Joint of (A, B, D): uniform mixture over the four preparations, D records which."""
    table = np.stack([run_v_exact(VConfig(d, a, b)).table / 4 for d in BELL], axis=-1)
    return JointDistribution(("A", "B", "D"), (BIT, BIT, BELL), table)


# -- sequential collapse path ---------------------------------------------------


@dataclass(frozen=True)
class _Branches:
    """Conditional tables of the A -> B -> inner-pair collapse sequence."""

    p_a: np.ndarray  # (2,)        P(A)
    p_b: np.ndarray  # (2, 2)      P(B | A)
    p_m: np.ndarray | None  # (2, 2, 4)   P(M | A, B), W only

    def path(self) -> np.ndarray:
        ab = self.p_a[:, None] * self.p_b
        return ab if self.p_m is None else ab[:, :, None] * self.p_m


def _branches(state: qcore.StateVector, q_a: int, q_b: int, a: float, b: float, inner=None) -> _Branches:
    p_a = np.zeros(2)
    p_b = np.tile([1.0, 0.0], (2, 1))
    p_m = None if inner is None else np.tile([1.0, 0.0, 0.0, 0.0], (2, 2, 1))
    pa0, post_a0, pa1, post_a1 = qcore.measure_distribution(state, q_a, a)
    p_a[:] = pa0, pa1
    for A, post_a in enumerate((post_a0, post_a1)):
        if post_a is None:
            continue
        pb0, post_b0, pb1, post_b1 = qcore.measure_distribution(post_a, q_b, b)
        p_b[A] = pb0, pb1
        if inner is None:
            continue
        for B, post_b in enumerate((post_b0, post_b1)):
            if post_b is not None:
                p_m[A, B] = qcore.bell_weights(post_b, *inner)
    return _Branches(p_a, p_b, p_m)


def _w_branches(cfg: WConfig) -> _Branches:
    return _branches(w_state(cfg.source1, cfg.source2), QA, QB, cfg.a, cfg.b, inner=(QI1, QI2))


def _constrained_table(state: qcore.StateVector, a: float, b: float, m: int) -> np.ndarray:
    """Unnormalized P(A, B, M=m) along the A, B, M sequence."""
    table = np.zeros((2, 2))
    pa0, post_a0, pa1, post_a1 = qcore.measure_distribution(state, QA, a)
    for A, (pa, post_a) in enumerate(((pa0, post_a0), (pa1, post_a1))):
        if post_a is None:
            continue
        pb0, post_b0, pb1, post_b1 = qcore.measure_distribution(post_a, QB, b)
        for B, (pb, post_b) in enumerate(((pb0, post_b0), (pb1, post_b1))):
            if post_b is not None:
                table[A, B] = pa * pb * qcore.bell_project(post_b, QI1, QI2, m, renormalize=False)[0]
    return table


def _constrained_joint(state: qcore.StateVector, a: float, b: float, m: int) -> JointDistribution:
    table = _constrained_table(state, a, b, m)
    total = float(table.sum())
    if total < qcore.ZERO_WEIGHT:
        raise ImpossibleConstraintError(f"boundary constraint M={m} has total weight {total:.3g}")
    return JointDistribution(("A", "B"), (BIT, BIT), table / total)


def run_w_constrained_exact(cfg: WConfig) -> JointDistribution:
    """(A, B) joint when a final boundary condition forces the inner Bell outcome.

    Each (A, B) branch is weighted by the probability that the inner pair
    projects onto the constrained Bell state, and the result is renormalized.
    """
    if not isinstance(cfg.mode, ConstrainTo):
        raise PreconditionError("run_w_constrained_exact needs mode ConstrainTo(m)")
    return _constrained_joint(w_state(cfg.source1, cfg.source2), cfg.a, cfg.b, cfg.mode.m)


def run_w_sequential(cfg: WConfig) -> JointDistribution:
    """Full W joint assembled from the A, B, M collapse sequence (second route to run_w_exact)."""
    return JointDistribution(("A", "B", "M"), (BIT, BIT, BELL), _w_branches(cfg).path())


def exact_joint(cfg: Config) -> JointDistribution:
    """The joint an experiment reports: (A, B) for V, postselected and constrained W; (A, B, M) for full W; (A, B, D) for delayed V."""
    if isinstance(cfg, VConfig):
        return run_v_exact(cfg)
    if isinstance(cfg, DelayedVConfig):
        return run_v_delayed_exact(cfg.a, cfg.b)
    if isinstance(cfg, WConfig):
        if isinstance(cfg.mode, ConstrainTo):
            return run_w_constrained_exact(cfg)
        if isinstance(cfg.mode, PostselectOn):
            return run_w_postselected_exact(cfg)
        return run_w_exact(cfg)
    raise PreconditionError(f"unknown experiment config {cfg!r}")


def family(cfg: Config) -> Callable[[float, float], JointDistribution]:
    """Settings -> exact joint, with every other field of ``cfg`` held fixed."""
    return lambda a, b: exact_joint(replace(cfg, a=a, b=b))


# -- sampling ---------------------------------------------------------------------


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse CDF: smallest k with u < cumsum(probs)[k]."""
    cum = np.cumsum(probs, axis=-1)[..., :-1]
    return (u[:, None] >= cum).sum(axis=1)


def sample_columns(cfg: Config, trials: int, seed: int, stream: int = 0, start: int = 0) -> dict[str, np.ndarray]:
    """Vectorized sampler; returns one array per RunRecord field (``-1`` marks an absent M or D)."""
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    u = trial_uniforms(seed, trials, start=start, stream=stream)
    idx = np.arange(start, start + trials)
    none = np.full(trials, -1)
    accepted = np.ones(trials, dtype=bool)

    if isinstance(cfg, VConfig):
        br = _branches(v_state(cfg.prep), 0, 1, cfg.a, cfg.b)
        A = (u[:, 0] >= br.p_a[0]).astype(int)
        B = (u[:, 1] >= br.p_b[A, 0]).astype(int)
        M, D, weight = none, none, br.path()[A, B]
    elif isinstance(cfg, DelayedVConfig):
        D = np.minimum((u[:, 0] * 4).astype(int), 3)
        A, B, weight = np.empty(trials, int), np.empty(trials, int), np.empty(trials)
        for d in BELL:
            sel = D == d
            br = _branches(v_state(d), 0, 1, cfg.a, cfg.b)
            A[sel] = u[sel, 1] >= br.p_a[0]
            B[sel] = u[sel, 2] >= br.p_b[A[sel], 0]
            weight[sel] = br.path()[A[sel], B[sel]] / 4
        M = none
    elif isinstance(cfg, WConfig) and isinstance(cfg.mode, ConstrainTo):
        table = run_w_constrained_exact(cfg).table
        p_a = table.sum(axis=1)
        p_b = np.divide(table, p_a[:, None], out=np.tile([1.0, 0.0], (2, 1)), where=p_a[:, None] > 0)
        A = (u[:, 0] >= p_a[0]).astype(int)
        B = (u[:, 1] >= p_b[A, 0]).astype(int)
        M, D, weight = np.full(trials, cfg.mode.m), none, table[A, B]
    elif isinstance(cfg, WConfig):
        br = _w_branches(cfg)
        A = (u[:, 0] >= br.p_a[0]).astype(int)
        B = (u[:, 1] >= br.p_b[A, 0]).astype(int)
        M = _inverse_cdf(br.p_m[A, B], u[:, 2])
        D, weight = none, br.path()[A, B, M]
        if isinstance(cfg.mode, PostselectOn):
            accepted = M == cfg.mode.m
    else:
        raise PreconditionError(f"unknown experiment config {cfg!r}")
    return {
        "trial": idx,
        "A": np.asarray(A, dtype=int),
        "B": np.asarray(B, dtype=int),
        "M": np.asarray(M, dtype=int),
        "D": np.asarray(D, dtype=int),
        "accepted": accepted,
        "weight": np.asarray(weight, dtype=float),
    }


def _records(cfg: Config, cols: dict[str, np.ndarray]) -> list[RunRecord]:
    a, b = float(cfg.a), float(cfg.b)
    return [
        RunRecord(
            trial=int(t),
            a=a,
            b=b,
            A=int(A),
            B=int(B),
            M=None if M < 0 else int(M),
            D=None if D < 0 else int(D),
            accepted=bool(acc),
            weight=float(w),
        )
        for t, A, B, M, D, acc, w in zip(*(cols[k] for k in ("trial", "A", "B", "M", "D", "accepted", "weight")))
    ]


def sample(cfg: Config, trials: int, seed: int, stream: int = 0) -> list[RunRecord]:
    """Seeded run records; rejected trials are kept with ``accepted=False``."""
    return _records(cfg, sample_columns(cfg, trials, seed, stream))


def sample_trial(cfg: Config, seed: int, trial: int, stream: int = 0) -> RunRecord:
    """One trial regenerated from its own counter block, walking the states with
    :func:`ccclab.qcore.sample_measurement` instead of precomputed tables."""
    u = trial_uniforms(seed, 1, start=trial, stream=stream)[0]
    if isinstance(cfg, WConfig) and isinstance(cfg.mode, ConstrainTo):
        # final-state projection is not a forward collapse; reuse the table path
        return _records(cfg, sample_columns(cfg, 1, seed, stream, start=trial))[0]
    if isinstance(cfg, DelayedVConfig):
        D = min(int(u[0] * 4), 3)
        state, q, u = v_state(D), (0, 1), u[1:]
    elif isinstance(cfg, VConfig):
        D, state, q = None, v_state(cfg.prep), (0, 1)
    else:
        D, state, q = None, w_state(cfg.source1, cfg.source2), (QA, QB)
    pa = qcore.measure_distribution(state, q[0], cfg.a)
    A, post = qcore.sample_measurement(state, q[0], cfg.a, u[0])
    pb = qcore.measure_distribution(post, q[1], cfg.b)
    B, post = qcore.sample_measurement(post, q[1], cfg.b, u[1])
    weight = pa[2 * A] * pb[2 * B]
    M, accepted = None, True
    if isinstance(cfg, WConfig):
        w = qcore.bell_weights(post, QI1, QI2)
        M = int(_inverse_cdf(w[None, :], np.array([u[2]]))[0])
        weight *= w[M]
        if isinstance(cfg.mode, PostselectOn):
            accepted = M == cfg.mode.m
    if D is not None:
        weight /= 4
    return RunRecord(trial, float(cfg.a), float(cfg.b), A, B, M, D, accepted, float(weight))


def sampled_joint(cfg: Config, cols: dict[str, np.ndarray]) -> JointDistribution:
    """Empirical counterpart of :func:`exact_joint` (accepted trials only)."""
    acc = cols["accepted"]
    if isinstance(cfg, DelayedVConfig):
        return empirical(("A", "B", "D"), (BIT, BIT, BELL), [cols["A"], cols["B"], cols["D"]])
    if isinstance(cfg, WConfig) and isinstance(cfg.mode, Unconstrained):
        return empirical(("A", "B", "M"), (BIT, BIT, BELL), [cols["A"], cols["B"], cols["M"]])
    return empirical(("A", "B"), (BIT, BIT), [cols["A"][acc], cols["B"][acc]])
