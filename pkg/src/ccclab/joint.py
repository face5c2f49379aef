"""Finite joint distributions over named discrete variables."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Hashable, Iterator, Sequence

import numpy as np

from .errors import NormalizationError, PreconditionError, ZeroProbabilityError

SUM_TOL = 1e-9
ZERO_EVENT = 1e-15


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Probability table with one axis per variable.

    ``domains[i]`` lists the values of ``variables[i]`` in axis order.  Every
    domain tuple has a cell, possibly zero.
    """

    variables: tuple[str, ...]
    domains: tuple[tuple[Hashable, ...], ...]
    table: np.ndarray

    def __post_init__(self):
        variables = tuple(self.variables)
        domains = tuple(tuple(d) for d in self.domains)
        table = np.array(self.table, dtype=float)
        if len(set(variables)) != len(variables):
            raise PreconditionError(f"duplicate variable names in {variables}")
        if len(domains) != len(variables):
            raise PreconditionError("one domain per variable required")
        if table.shape != tuple(len(d) for d in domains):
            raise PreconditionError(f"table shape {table.shape} does not match domains")
        if np.any(table < -1e-15) or not np.all(np.isfinite(table)):
            raise NormalizationError("probabilities must be finite and non-negative")
        total = float(table.sum())
        if abs(total - 1.0) > SUM_TOL:
            raise NormalizationError(f"probabilities sum to {total!r}, expected 1")
        table = np.clip(table, 0.0, None)
        table.setflags(write=False)
        object.__setattr__(self, "variables", variables)
        object.__setattr__(self, "domains", domains)
        object.__setattr__(self, "table", table)

    @classmethod
    def from_mapping(cls, variables: Sequence[str], domains, probs: dict) -> "JointDistribution":
        """Build from ``{outcome_tuple: p}``; absent tuples get probability 0."""
        domains = tuple(tuple(d) for d in domains)
        table = np.zeros(tuple(len(d) for d in domains))
        for outcome, p in probs.items():
            table[tuple(d.index(v) for d, v in zip(domains, outcome))] += p
        return cls(tuple(variables), domains, table)

    def axis(self, variable: str) -> int:
        try:
            return self.variables.index(variable)
        except ValueError:
            raise PreconditionError(f"unknown variable {variable!r}; have {self.variables}") from None

    def domain(self, variable: str) -> tuple:
        return self.domains[self.axis(variable)]

    def index_of(self, variable: str, value) -> int:
        dom = self.domain(variable)
        try:
            return dom.index(value)
        except ValueError:
            raise PreconditionError(f"{value!r} not in domain of {variable!r}: {dom}") from None

    def prob(self, **assignment) -> float:
        """Probability of a partial assignment, e.g. ``joint.prob(A=0, B=1)``."""
        idx = [slice(None)] * len(self.variables)
        for var, val in assignment.items():
            idx[self.axis(var)] = self.index_of(var, val)
        return float(self.table[tuple(idx)].sum())

    def marginal(self, *variables: str) -> "JointDistribution":
        axes = [self.axis(v) for v in variables]
        others = tuple(i for i in range(len(self.variables)) if i not in axes)
        summed = self.table.sum(axis=others) if others else self.table
        # summed keeps remaining axes in original order; permute to requested order
        kept = sorted(axes)
        perm = [kept.index(a) for a in axes]
        return JointDistribution(tuple(variables), tuple(self.domains[a] for a in axes), np.transpose(summed, perm))

    def restrict(self, variable: str, value) -> "JointDistribution":
        """Condition on ``variable == value`` and renormalize, keeping the variable."""
        ax, k = self.axis(variable), self.index_of(variable, value)
        mass = float(np.take(self.table, k, axis=ax).sum())
        if mass <= ZERO_EVENT:
            raise ZeroProbabilityError(f"P({variable}={value!r}) = {mass:.3g}; cannot condition")
        table = np.zeros_like(self.table)
        idx = [slice(None)] * table.ndim
        idx[ax] = k
        table[tuple(idx)] = self.table[tuple(idx)] / mass
        return JointDistribution(self.variables, self.domains, table)

    def drop(self, variable: str) -> "JointDistribution":
        rest = [v for v in self.variables if v != variable]
        return self.marginal(*rest)

    def with_constant(self, variable: str, domain: Sequence, value) -> "JointDistribution":
        """Append a variable that takes ``value`` with probability one."""
        domain = tuple(domain)
        extra = np.zeros(len(domain))
        extra[domain.index(value)] = 1.0
        return JointDistribution(self.variables + (variable,), self.domains + (domain,), np.multiply.outer(self.table, extra))

    def items(self) -> Iterator[tuple[tuple, float]]:
        """``(outcome_tuple, p)`` pairs in row-major domain order."""
        for idx in product(*(range(len(d)) for d in self.domains)):
            yield tuple(d[i] for d, i in zip(self.domains, idx)), float(self.table[idx])

    def as_dict(self) -> dict:
        return dict(self.items())

    def distance(self, other: "JointDistribution") -> float:
        """Sup-norm distance; variables and domains must match."""
        if self.variables != other.variables or self.domains != other.domains:
            raise PreconditionError(f"incompatible joints: {self.variables} vs {other.variables}")
        return float(np.max(np.abs(self.table - other.table)))

    def __repr__(self):
        cells = ", ".join(f"{''.join(map(str, k))}: {p:.6g}" for k, p in self.items() if p)
        return f"JointDistribution({', '.join(self.variables)}; {cells})"


def uniform(variables: Sequence[str], domains) -> JointDistribution:
    domains = tuple(tuple(d) for d in domains)
    shape = tuple(len(d) for d in domains)
    return JointDistribution(tuple(variables), domains, np.full(shape, 1.0 / np.prod(shape)))


def empirical(variables: Sequence[str], domains, columns: Sequence[np.ndarray]) -> JointDistribution:
    """Frequency table from parallel integer-coded columns (index into each domain)."""
    domains = tuple(tuple(d) for d in domains)
    shape = tuple(len(d) for d in domains)
    if not len(columns) or len(columns[0]) == 0:
        raise ZeroProbabilityError("no samples to tabulate")
    flat = np.ravel_multi_index(tuple(np.asarray(c, dtype=np.intp) for c in columns), shape)
    counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    return JointDistribution(tuple(variables), domains, counts / counts.sum())
