"""
Discrete structural causal models with explicit exogenous noise.

Every node owns a mechanism that maps its parents' values to a partition of
the unit interval, and takes the value whose cell contains its exogenous draw
``U ~ Uniform[0, 1)``.  A conditional probability table is the special case
where the cells follow the domain order (inverse-CDF convention).  Nodes may
share a noise key, which is how one draw can drive several variables.

Because the noise partition is explicit, exact queries need no sampling: the
joint, interventional distributions and counterfactual flip rates are all
computed by intersecting intervals.

Three query modes:

* conditioning: :func:`ccclab.stats.condition` on :func:`scm_joint`;
* intervention: :func:`intervene` replaces a node's mechanism by a constant;
* clamping: :func:`clamp` attaches a boundary constraint.  Queries on a
  clamped model apply interventions first and then condition on the
  constraint, so the constraint holds with probability one under every query.
"""
from __future__ import annotations

import enum
import graphlib
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import permutations, product
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from .errors import ImpossibleConstraintError, PreconditionError
from .joint import ZERO_EVENT, JointDistribution, empirical
from .rng import DRAWS_PER_TRIAL, trial_uniforms

MAX_CELLS = 10**6
CPT_TOL = 1e-12
EPS_EXACT = 1e-9
EPS_SAMPLED = 0.01

ACCEPT, REJECT = "accept", "reject"

Segment = tuple[Hashable, float, float]
Partition = Callable[[tuple], Sequence[Segment]]


@dataclass(frozen=True)
class Dag:
    nodes: tuple[str, ...]
    parents: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        nodes = tuple(self.nodes)
        if len(set(nodes)) != len(nodes):
            raise PreconditionError(f"duplicate node names in {nodes}")
        parents = {n: tuple(self.parents.get(n, ())) for n in nodes}
        for n, ps in parents.items():
            missing = [p for p in ps if p not in parents]
            if missing:
                raise PreconditionError(f"node {n!r} has unknown parents {missing}")
        try:
            order = tuple(graphlib.TopologicalSorter(parents).static_order())
        except graphlib.CycleError as exc:
            raise PreconditionError(f"graph has a cycle: {exc.args[1]}") from None
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "_order", order)

    @property
    def topological_order(self) -> tuple[str, ...]:
        return self._order

    def children(self, node: str) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if node in self.parents[n])

    def ancestors(self, node: str) -> set[str]:
        seen, stack = set(), list(self.parents[node])
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(self.parents[n])
        return seen

    def descendants(self, node: str) -> set[str]:
        seen, stack = set(), list(self.children(node))
        while stack:
            n = stack.pop()
            if n not in seen:
                seen.add(n)
                stack.extend(self.children(n))
        return seen


def colliders(dag: Dag) -> set[str]:
    """Nodes with two or more direct causes."""
    return {n for n in dag.nodes if len(dag.parents[n]) >= 2}


@dataclass(frozen=True)
class Constraint:
    node: str
    value: Hashable


@dataclass(frozen=True)
class Node:
    name: str
    domain: tuple
    parents: tuple[str, ...]
    partition: Partition = field(compare=False)
    noise: str = ""

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple(self.domain))
        object.__setattr__(self, "parents", tuple(self.parents))
        if not self.noise:
            object.__setattr__(self, "noise", self.name)
        if len(set(self.domain)) != len(self.domain) or not self.domain:
            raise PreconditionError(f"node {self.name!r} needs a nonempty domain of distinct values")


def cpt_partition(domain: Sequence, row: Sequence[float]) -> list[Segment]:
    """Inverse-CDF cells for one CPT row: value k owns [cum[k-1], cum[k])."""
    row = np.asarray(row, dtype=float)
    if row.shape != (len(domain),) or np.any(row < 0) or abs(row.sum() - 1.0) > CPT_TOL:
        raise PreconditionError(f"CPT row {row.tolist()} must be {len(domain)} non-negative entries summing to 1")
    edges = np.concatenate([[0.0], np.cumsum(row)])
    edges[-1] = 1.0
    return [(v, float(lo), float(hi)) for v, lo, hi in zip(domain, edges[:-1], edges[1:])]


def cpt_node(name: str, domain: Sequence, parents: Sequence[str] = (), cpt=None, noise: str = "") -> Node:
    """Node from a CPT.

    ``cpt`` is a single row (root nodes), a mapping from parent-value tuples to
    rows, or a callable taking the parent-value tuple.  Mapping rows are
    validated eagerly.
    """
    domain, parents = tuple(domain), tuple(parents)
    if callable(cpt):
        return Node(name, domain, parents, lambda pv: cpt_partition(domain, cpt(pv)), noise)
    if not parents:
        cells = cpt_partition(domain, cpt)
        return Node(name, domain, parents, lambda pv: cells, noise)
    table = {tuple(k): cpt_partition(domain, row) for k, row in dict(cpt).items()}
    return Node(name, domain, parents, lambda pv: table[tuple(pv)], noise)


def constant_node(name: str, domain: Sequence, value) -> Node:
    domain = tuple(domain)
    if value not in domain:
        raise PreconditionError(f"{value!r} not in domain of {name!r}: {domain}")
    cells = [(value, 0.0, 1.0)]
    return Node(name, domain, (), lambda pv: cells, noise=f"{name}:do")


def fair_node(name: str, domain: Sequence = (0, 1)) -> Node:
    domain = tuple(domain)
    return cpt_node(name, domain, cpt=[1.0 / len(domain)] * len(domain))


@dataclass(frozen=True)
class DiscreteScm:
    """Nodes with noise-partition mechanisms, plus an optional boundary constraint."""

    nodes: tuple[Node, ...]
    constraint: Constraint | None = None

    def __post_init__(self):
        nodes = tuple(self.nodes)
        object.__setattr__(self, "nodes", nodes)
        dag = Dag(tuple(n.name for n in nodes), {n.name: n.parents for n in nodes})
        object.__setattr__(self, "_dag", dag)
        object.__setattr__(self, "_by_name", {n.name: n for n in nodes})
        if self.constraint is not None:
            self.node(self.constraint.node)
            self._check_value(self.constraint.node, self.constraint.value)

    @property
    def dag(self) -> Dag:
        return self._dag

    @property
    def names(self) -> tuple[str, ...]:
        return self._dag.nodes

    @property
    def clamped(self) -> bool:
        return self.constraint is not None

    def node(self, name: str) -> Node:
        try:
            return self._by_name[name]
        except KeyError:
            raise PreconditionError(f"unknown node {name!r}; have {self.names}") from None

    def domain(self, name: str) -> tuple:
        return self.node(name).domain

    def _check_value(self, name: str, value):
        if value not in self.domain(name):
            raise PreconditionError(f"{value!r} not in domain of {name!r}: {self.domain(name)}")

    def unclamped(self) -> "DiscreteScm":
        return replace(self, constraint=None)


# -- exact enumeration ------------------------------------------------------------


def _check_size(scm: DiscreteScm, copies: int = 1):
    cells = int(np.prod([len(n.domain) for n in scm.nodes], dtype=float)) ** copies
    if cells > MAX_CELLS:
        raise PreconditionError(f"joint has {cells} cells, above the {MAX_CELLS} enumeration bound")


def _walk(steps, on_leaf):
    """Depth-first walk over the noise partition.

    ``steps`` is a sequence of ``(key, node)``; a node's parents are looked up
    under ``key`` so that twin-network copies can share noise but not values.
    ``on_leaf(values, weight)`` receives the full assignment and its measure.
    """
    values: dict = {}
    intervals: dict[str, tuple[float, float]] = {}

    def visit(i: int, weight: float):
        if i == len(steps):
            on_leaf(values, weight)
            return
        key, node = steps[i]
        segments = node.partition(tuple(values[(key, p)] for p in node.parents))
        lo, hi = intervals.get(node.noise, (0.0, 1.0))
        total = sum(s_hi - s_lo for _, s_lo, s_hi in segments)
        if abs(total - 1.0) > CPT_TOL:
            raise PreconditionError(f"mechanism of {node.name!r} does not partition [0, 1) (measure {total!r})")
        for value, s_lo, s_hi in segments:
            n_lo, n_hi = max(lo, s_lo), min(hi, s_hi)
            if n_hi <= n_lo:
                continue
            values[(key, node.name)] = value
            intervals[node.noise] = (n_lo, n_hi)
            visit(i + 1, weight * (n_hi - n_lo) / (hi - lo))
        intervals[node.noise] = (lo, hi)
        values.pop((key, node.name), None)

    visit(0, 1.0)


def _ordered(scm: DiscreteScm, key=0):
    return [(key, scm.node(n)) for n in scm.dag.topological_order]


def _raw_joint(scm: DiscreteScm) -> JointDistribution:
    _check_size(scm)
    names = scm.names
    domains = tuple(scm.domain(n) for n in names)
    table = np.zeros(tuple(len(d) for d in domains))

    def leaf(values, weight):
        table[tuple(d.index(values[(0, n)]) for n, d in zip(names, domains))] += weight

    _walk(_ordered(scm), leaf)
    return JointDistribution(names, domains, table)


def scm_joint(scm: DiscreteScm) -> JointDistribution:
    """Exact joint over all nodes; for a clamped model, conditioned on the constraint."""
    joint = _raw_joint(scm)
    if scm.constraint is None:
        return joint
    c = scm.constraint
    if joint.prob(**{c.node: c.value}) <= ZERO_EVENT:
        raise ImpossibleConstraintError(f"constraint {c.node}={c.value!r} has probability 0 under this model")
    return joint.restrict(c.node, c.value)


def intervene(scm: DiscreteScm, node: str, value) -> DiscreteScm:
    """do(node=value): the mechanism becomes a constant and incoming edges are cut."""
    scm._check_value(node, value)
    nodes = tuple(constant_node(n.name, n.domain, value) if n.name == node else n for n in scm.nodes)
    return replace(scm, nodes=nodes)


def intervene_all(scm: DiscreteScm, assignments: Mapping[str, Hashable]) -> DiscreteScm:
    for node, value in assignments.items():
        scm = intervene(scm, node, value)
    return scm


def clamp(scm: DiscreteScm, c: Constraint) -> DiscreteScm:
    """Attach a boundary constraint; it must be possible in the model as given."""
    if scm.constraint is not None and scm.constraint != c:
        raise PreconditionError(f"model is already clamped by {scm.constraint}")
    scm._check_value(c.node, c.value)
    if _raw_joint(scm).prob(**{c.node: c.value}) <= ZERO_EVENT:
        raise ImpossibleConstraintError(f"constraint {c.node}={c.value!r} is impossible in the unclamped model")
    return replace(scm, constraint=c)


def query(scm: DiscreteScm, do: Mapping[str, Hashable] | None = None) -> JointDistribution:
    """Joint under ``do`` interventions, honoring the model's constraint if clamped."""
    return scm_joint(intervene_all(scm, do or {}))


# -- dependence and classification ---------------------------------------------


def _conditionals(joint: JointDistribution, x: str, y: str):
    pair = joint.marginal(x, y).table
    px = pair.sum(axis=1)
    return [pair[i] / px[i] for i in range(len(px)) if px[i] > ZERO_EVENT]


def dependence(joint: JointDistribution, x: str, y: str) -> float:
    """max over x, x', y of |P(Y=y | X=x) - P(Y=y | X=x')|; zero-probability x are skipped."""
    rows = _conditionals(joint, x, y)
    return max((float(np.max(np.abs(r1 - r2))) for r1, r2 in permutations(rows, 2)), default=0.0)


def _total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(p - q).sum())


def interventional_dependence(scm: DiscreteScm, x: str, y: str) -> float:
    """max over x, x' of TV(P(Y | do(X=x)), P(Y | do(X=x'))) under the model's own semantics."""
    dists = [query(scm, {x: v}).marginal(y).table for v in scm.domain(x)]
    return max((_total_variation(p, q) for p, q in permutations(dists, 2)), default=0.0)


def membership_sensitivity(scm: DiscreteScm, x: str, y: str, c: str, value) -> float:
    """How much intervening on X moves P(C=value | Y=y); skipped where P(Y=y | do(X)) = 0."""
    rows = []
    for v in scm.domain(x):
        pair = query(scm, {x: v}).marginal(y, c)
        k = pair.index_of(c, value)
        py = pair.table.sum(axis=1)
        rows.append((np.divide(pair.table[:, k], py, out=np.zeros_like(py), where=py > ZERO_EVENT), py > ZERO_EVENT))
    best = 0.0
    for (r1, d1), (r2, d2) in permutations(rows, 2):
        both = d1 & d2
        if both.any():
            best = max(best, float(np.max(np.abs(r1 - r2)[both])))
    return best


class Verdict(str, enum.Enum):
    NO_DEPENDENCE = "NoDependence"
    FRAGILE_ARTIFACT = "FragileArtifact"
    ROBUST_CONNECTION = "RobustConnection"


@dataclass(frozen=True)
class CccVerdict:
    verdict: Verdict
    dependence: float
    interventional_dependence: float
    selection_sensitivity: float


def classify_ccc(scm: DiscreteScm, x: str, y: str, c: str, value, eps: float = EPS_EXACT) -> CccVerdict:
    """Classify the X-Y association induced by collider ``c`` at ``value``.

    * NoDependence: X and Y are independent given ``c == value``.
    * RobustConnection: the dependence survives interventions on X, which can
      only happen when the collider is clamped.
    * FragileArtifact: the dependence is present under conditioning but
      intervening on X leaves Y's distribution unchanged.
    """
    dag = scm.dag
    for name in (x, y, c):
        scm.node(name)
    scm._check_value(c, value)
    if c not in colliders(dag):
        raise PreconditionError(f"{c!r} is not a collider")
    if x not in dag.ancestors(c):
        raise PreconditionError(f"{x!r} is not an ancestor of {c!r}")
    if y == x or y in dag.descendants(x):
        raise PreconditionError(f"{y!r} is a descendant of {x!r}; its dependence is not a collider effect")

    d_cond = dependence(scm_joint(scm).restrict(c, value), x, y)
    d_int = interventional_dependence(scm, x, y)
    sens = membership_sensitivity(scm, x, y, c, value)
    if d_cond <= eps:
        verdict = Verdict.NO_DEPENDENCE
    elif d_int > eps:
        verdict = Verdict.ROBUST_CONNECTION
    else:
        verdict = Verdict.FRAGILE_ARTIFACT
    return CccVerdict(verdict, d_cond, d_int, sens)


def counterfactual_flip_rate(scm: DiscreteScm, x: str, x_from, x_to, y: str) -> float:
    """Probability over the exogenous noise that Y differs between do(X=x_from) and do(X=x_to).

    Both worlds share every noise draw.  For a clamped model the rate is taken
    over the noise where the constraint holds in both worlds.
    """
    w1, w2 = intervene(scm, x, x_from), intervene(scm, x, x_to)
    _check_size(scm, copies=2)
    c = scm.constraint
    acc = {"flip": 0.0, "kept": 0.0}

    def leaf(values, weight):
        if c is not None and (values[(1, c.node)] != c.value or values[(2, c.node)] != c.value):
            return
        acc["kept"] += weight
        if values[(1, y)] != values[(2, y)]:
            acc["flip"] += weight

    _walk(_ordered(w1, 1) + _ordered(w2, 2), leaf)
    if acc["kept"] <= ZERO_EVENT:
        raise ImpossibleConstraintError(f"constraint {c} cannot hold in both counterfactual worlds")
    return acc["flip"] / acc["kept"]


# -- sampling through the noise form ----------------------------------------------


def sample_scm(scm: DiscreteScm, trials: int, seed: int, stream: int = 0) -> dict[str, np.ndarray]:
    """Draw trials through the exogenous-noise form.

    Returns value indices per node plus an ``accepted`` mask (the constraint,
    if any).  Each trial owns a fixed run of Philox blocks, so trials are
    reproducible individually.
    """
    if trials < 1:
        raise PreconditionError("trials must be >= 1")
    keys = sorted({n.noise for n in scm.nodes})
    blocks = -(-len(keys) // DRAWS_PER_TRIAL)
    u = trial_uniforms(seed, trials, stream=stream, blocks=blocks)
    noise = {k: u[:, i] for i, k in enumerate(keys)}
    out: dict[str, np.ndarray] = {}
    for name in scm.dag.topological_order:
        node = scm.node(name)
        idx = np.full(trials, -1)
        par_doms = [scm.domain(p) for p in node.parents]
        for combo in product(*(range(len(d)) for d in par_doms)):
            sel = np.ones(trials, dtype=bool)
            for p, k in zip(node.parents, combo):
                sel &= out[p] == k
            if not sel.any():
                continue
            draws = noise[node.noise][sel]
            vals = idx[sel]
            for value, lo, hi in node.partition(tuple(d[k] for d, k in zip(par_doms, combo))):
                vals[(draws >= lo) & (draws < hi)] = node.domain.index(value)
            idx[sel] = vals
        out[name] = idx
    c = scm.constraint
    out["accepted"] = np.ones(trials, dtype=bool) if c is None else out[c.node] == scm.domain(c.node).index(c.value)
    return out


def sampled_joint(scm: DiscreteScm, cols: dict[str, np.ndarray]) -> JointDistribution:
    acc = cols["accepted"]
    return empirical(scm.names, [scm.domain(n) for n in scm.names], [cols[n][acc] for n in scm.names])


# -- built-in models ----------------------------------------------------------------


def ivy_scm() -> DiscreteScm:
    """Admission to Ivy College: admitted = academic OR athletic, independent fair priors."""
    return DiscreteScm(
        (
            fair_node("academic"),
            fair_node("athletic"),
            cpt_node(
                "admitted",
                (0, 1),
                ("academic", "athletic"),
                {(ac, at): [0.0, 1.0] if (ac or at) else [1.0, 0.0] for ac in (0, 1) for at in (0, 1)},
            ),
        )
    )


@lru_cache(maxsize=4096)
def _quantum_cells(a: float, b: float) -> tuple[float, float, float, float]:
    from .experiments import VConfig, run_v_exact

    return tuple(float(p) for p in run_v_exact(VConfig(0, a, b)).table.reshape(-1))


def _settings(values) -> tuple[float, ...]:
    vals = tuple(float(v) for v in np.atleast_1d(values))
    if not vals:
        raise PreconditionError("at least one setting required")
    return vals


def toy_dces(a, b, constrained: bool = False) -> DiscreteScm:
    """Classical model reproducing the quantum (A, B) statistics by selection.

    ``a`` and ``b`` are a setting or a sequence of settings; each becomes a
    root node with a uniform prior over the given values.  ``Q`` is the V
    joint for Bell state 0 at the chosen settings, ordered 00, 01, 10, 11.

    Unconstrained: A and B are independent fair bits and the accept flag M is
    drawn with P(accept | A, B) = Q(A, B) / max Q.  Conditioning on acceptance
    reproduces Q exactly.

    Constrained: one shared draw U picks the (A, B) cell from Q by inverse CDF;
    M accepts iff (A, B) is the cell U picked, and the model is clamped to
    M = accept.  Unintervened, acceptance is certain.
    """
    a_vals, b_vals = _settings(a), _settings(b)
    settings = (fair_node("a", a_vals), fair_node("b", b_vals))
    parents = ("a", "b", "A", "B")
    if not constrained:

        def accept(pv):
            qa, qb, A, B = pv
            q = _quantum_cells(qa, qb)
            r = q[2 * A + B] / max(q)
            return [(ACCEPT, 0.0, r), (REJECT, r, 1.0)]

        return DiscreteScm(settings + (fair_node("A"), fair_node("B"), Node("M", (ACCEPT, REJECT), parents, accept)))

    def cells(qa, qb):
        edges = np.concatenate([[0.0], np.cumsum(_quantum_cells(qa, qb))])
        edges[-1] = 1.0
        return [(k, float(edges[k]), float(edges[k + 1])) for k in range(4)]

    def outcome_a(pv):
        return [(k >> 1, lo, hi) for k, lo, hi in cells(*pv)]

    def outcome_b(pv):
        return [(k & 1, lo, hi) for k, lo, hi in cells(*pv)]

    def boundary(pv):
        qa, qb, A, B = pv
        _, lo, hi = cells(qa, qb)[2 * A + B]
        return [(REJECT, 0.0, lo), (ACCEPT, lo, hi), (REJECT, hi, 1.0)]

    model = DiscreteScm(
        settings
        + (
            Node("A", (0, 1), ("a", "b"), outcome_a, noise="U_AB"),
            Node("B", (0, 1), ("a", "b"), outcome_b, noise="U_AB"),
            Node("M", (ACCEPT, REJECT), parents, boundary, noise="U_AB"),
        )
    )
    return clamp(model, Constraint("M", ACCEPT))


def collider_control() -> DiscreteScm:
    """X -> C <- N with C = X XOR N, plus an unconnected fair bit Y."""
    xor = {(x, n): [1.0, 0.0] if x == n else [0.0, 1.0] for x in (0, 1) for n in (0, 1)}
    return DiscreteScm((fair_node("X"), fair_node("N"), fair_node("Y"), cpt_node("C", (0, 1), ("X", "N"), xor)))


# -- model files -----------------------------------------------------------------------


def model_from_dict(spec: Mapping) -> DiscreteScm:
    """Build a CPT model from its JSON description.

    ``cpt`` rows are listed in ``itertools.product`` order over the parents'
    domains (first parent varies slowest); a root node has a single row.
    """
    try:
        raw_nodes = spec["nodes"]
        domains = {n["name"]: tuple(n["domain"]) for n in raw_nodes}
        nodes = []
        for n in raw_nodes:
            parents = tuple(n.get("parents", ()))
            rows = n["cpt"]
            if not parents:
                if len(rows) != 1:
                    raise PreconditionError(f"root node {n['name']!r} needs exactly one CPT row")
                nodes.append(cpt_node(n["name"], n["domain"], cpt=rows[0]))
                continue
            combos = list(product(*(domains[p] for p in parents)))
            if len(rows) != len(combos):
                raise PreconditionError(f"node {n['name']!r} needs {len(combos)} CPT rows, got {len(rows)}")
            nodes.append(cpt_node(n["name"], n["domain"], parents, dict(zip(combos, rows))))
    except (KeyError, TypeError) as exc:
        raise PreconditionError(f"malformed model description: {exc!r}") from None
    scm = DiscreteScm(tuple(nodes))
    if spec.get("clamp"):
        scm = clamp(scm, Constraint(spec["clamp"]["node"], spec["clamp"]["value"]))
    return scm
