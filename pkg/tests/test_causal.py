from itertools import product
from math import pi

import numpy as np
import pytest

from ccclab import causal
from ccclab.causal import (
    ACCEPT,
    Constraint,
    Dag,
    Verdict,
    clamp,
    classify_ccc,
    colliders,
    counterfactual_flip_rate,
    cpt_node,
    dependence,
    fair_node,
    intervene,
    ivy_scm,
    model_from_dict,
    query,
    scm_joint,
    toy_dces,
)
from ccclab.errors import ImpossibleConstraintError, PreconditionError
from ccclab.joint import JointDistribution, uniform
from ccclab.stats import chsh, condition, correlation, CANONICAL

from .conftest import GRID
from .oracles import TSIRELSON, flip_oracle as _flip_oracle, v_table, within_sigma

CANONICAL_PAIRS = [(CANONICAL.a, CANONICAL.b), (CANONICAL.a, CANONICAL.b_prime), (CANONICAL.a_prime, CANONICAL.b), (CANONICAL.a_prime, CANONICAL.b_prime)]
HOLLY = Constraint("admitted", 1)


def _ivy_enumeration():
    """Four equally likely students; admitted = academic or athletic."""
    return {(ac, at, int(ac or at)): 0.25 for ac in (0, 1) for at in (0, 1)}


class TestDag:
    def test_chain_has_no_collider(self):
        assert colliders(Dag(("X", "Y", "Z"), {"Y": ("X",), "Z": ("Y",)})) == set()

    def test_v_structure(self):
        assert colliders(Dag(("X", "Y", "C"), {"C": ("X", "Y")})) == {"C"}

    def test_ivy(self):
        assert colliders(ivy_scm().dag) == {"admitted"}

    def test_cycle_rejected(self):
        with pytest.raises(PreconditionError):
            Dag(("X", "Y"), {"X": ("Y",), "Y": ("X",)})

    def test_unknown_parent(self):
        with pytest.raises(PreconditionError):
            Dag(("X",), {"X": ("Z",)})

    def test_ancestry(self):
        d = Dag(("X", "Y", "Z"), {"Y": ("X",), "Z": ("Y",)})
        assert d.ancestors("Z") == {"X", "Y"}
        assert d.descendants("X") == {"Y", "Z"}
        assert d.topological_order == ("X", "Y", "Z")


class TestJoint:
    def test_ivy(self):
        j = scm_joint(ivy_scm())
        assert j.prob(admitted=1) == pytest.approx(0.75, abs=1e-15)
        oracle = JointDistribution.from_mapping(j.variables, j.domains, _ivy_enumeration())
        assert j.distance(oracle) == 0.0

    def test_fair_coin(self):
        j = scm_joint(causal.DiscreteScm((fair_node("coin"),)))
        assert j.as_dict() == {("0",) if False else (0,): 0.5, (1,): 0.5}

    def test_xor_collider(self):
        xor = {(x, y): [1.0, 0.0] if x == y else [0.0, 1.0] for x in (0, 1) for y in (0, 1)}
        scm = causal.DiscreteScm((fair_node("X"), fair_node("Y"), cpt_node("C", (0, 1), ("X", "Y"), xor)))
        j = scm_joint(scm)
        assert j.prob(C=0) == pytest.approx(0.5, abs=1e-15)
        assert dependence(j, "X", "Y") == 0.0

    def test_matches_cpt_product(self):
        # three-node chain with non-uniform rows: noise enumeration equals the CPT product
        rows_y = {(0,): [0.2, 0.8], (1,): [0.7, 0.3]}
        rows_z = {(0,): [0.1, 0.6, 0.3], (1,): [0.5, 0.25, 0.25]}
        scm = causal.DiscreteScm((
            cpt_node("X", (0, 1), cpt=[0.35, 0.65]),
            cpt_node("Y", (0, 1), ("X",), rows_y),
            cpt_node("Z", ("r", "g", "b"), ("Y",), rows_z),
        ))
        px = [0.35, 0.65]
        expected = {
            (x, y, z): px[x] * rows_y[(x,)][y] * rows_z[(y,)][k]
            for x, y, (k, z) in product((0, 1), (0, 1), enumerate("rgb"))
        }
        j = scm_joint(scm)
        for key, p in expected.items():
            assert j.prob(X=key[0], Y=key[1], Z=key[2]) == pytest.approx(p, abs=1e-15)

    def test_cpt_row_must_sum_to_one(self):
        with pytest.raises(PreconditionError):
            cpt_node("X", (0, 1), cpt=[0.5, 0.4])

    def test_size_bound(self):
        big = causal.DiscreteScm(tuple(fair_node(f"N{i}", range(10)) for i in range(7)))
        with pytest.raises(PreconditionError):
            scm_joint(big)


class TestInterventions:
    def test_academic_unaffected(self):
        assert query(ivy_scm(), {"athletic": 0}).prob(academic=1) == pytest.approx(0.5, abs=1e-15)

    def test_admission_rate(self):
        assert query(ivy_scm(), {"athletic": 0}).prob(admitted=1) == pytest.approx(0.5, abs=1e-15)

    def test_root_becomes_point_mass(self):
        j = query(ivy_scm(), {"academic": 1})
        assert j.prob(academic=1) == 1.0
        assert j.prob(admitted=1) == 1.0

    def test_cuts_parents(self):
        scm = intervene(ivy_scm(), "admitted", 0)
        assert scm.dag.parents["admitted"] == ()
        assert colliders(scm.dag) == set()

    def test_value_outside_domain(self):
        with pytest.raises(PreconditionError):
            intervene(ivy_scm(), "athletic", 2)


class TestClamp:
    def test_holly_counterfactual(self):
        assert query(clamp(ivy_scm(), HOLLY), {"athletic": 0}).prob(academic=1) == pytest.approx(1.0, abs=1e-15)

    def test_clamped_anticorrelation(self):
        j = scm_joint(clamp(ivy_scm(), HOLLY))
        # oracle: among admitted students P(both) = 1/3 and each marginal is 2/3
        both, m = 1 / 3, 2 / 3
        assert correlation(j, "academic", "athletic") == pytest.approx((both - m * m) / (m * (1 - m)), abs=1e-12)
        assert correlation(j, "academic", "athletic") == pytest.approx(-0.5, abs=1e-12)

    def test_certain_constraint_changes_nothing(self):
        scm = causal.DiscreteScm((fair_node("X"), cpt_node("T", (0, 1), cpt=[0.0, 1.0])))
        assert scm_joint(clamp(scm, Constraint("T", 1))).distance(scm_joint(scm)) == 0.0

    def test_impossible_under_intervention(self):
        model = clamp(ivy_scm(), HOLLY)
        with pytest.raises(ImpossibleConstraintError):
            query(model, {"academic": 0, "athletic": 0})

    def test_impossible_in_unclamped_model(self):
        with pytest.raises(ImpossibleConstraintError):
            clamp(intervene(ivy_scm(), "admitted", 0), HOLLY)

    def test_observational_queries_match_conditioning(self):
        for scm, c in [(ivy_scm(), HOLLY), (toy_dces(0.0, pi / 8), Constraint("M", ACCEPT)), (causal.collider_control(), Constraint("C", 0))]:
            observed = condition(scm_joint(scm), c.node, c.value)
            clamped = scm_joint(clamp(scm, c)).drop(c.node)
            assert clamped.distance(observed) < 1e-12

    def test_clamping_differs_from_conditioning_under_intervention(self):
        conditioned = condition(query(ivy_scm(), {"athletic": 0}), "admitted", 1)
        clamped = query(clamp(ivy_scm(), HOLLY), {"athletic": 0})
        assert conditioned.prob(academic=1) == pytest.approx(1.0)
        assert query(ivy_scm(), {"athletic": 0}).prob(academic=1) == pytest.approx(0.5)
        assert clamped.prob(academic=1) == pytest.approx(1.0)


class TestDependence:
    def test_product(self):
        assert dependence(uniform(("X", "Y"), ((0, 1), (0, 1, 2))), "X", "Y") == 0.0

    def test_ivy_admitted(self):
        j = condition(scm_joint(ivy_scm()), "admitted", 1)
        assert dependence(j, "athletic", "academic") == pytest.approx(abs(1.0 - 0.5), abs=1e-12)

    def test_perfectly_correlated(self):
        j = JointDistribution.from_mapping(("X", "Y"), ((0, 1), (0, 1)), {(0, 0): 0.5, (1, 1): 0.5})
        assert dependence(j, "X", "Y") == 1.0

    def test_zero_probability_rows_skipped(self):
        j = JointDistribution.from_mapping(("X", "Y"), ((0, 1, 2), (0, 1)), {(0, 0): 0.5, (1, 0): 0.5})
        assert dependence(j, "X", "Y") == 0.0


class TestClassifier:
    def test_ivy_unclamped_fragile(self):
        v = classify_ccc(ivy_scm(), "athletic", "academic", "admitted", 1)
        assert v.verdict is Verdict.FRAGILE_ARTIFACT
        assert v.dependence == pytest.approx(0.5) and v.interventional_dependence == 0.0

    def test_ivy_clamped_robust(self):
        v = classify_ccc(clamp(ivy_scm(), HOLLY), "athletic", "academic", "admitted", 1)
        assert v.verdict is Verdict.ROBUST_CONNECTION
        assert v.interventional_dependence == pytest.approx(1.0 - 0.5, abs=1e-12)
        assert v.selection_sensitivity == 0.0

    def test_severed_control(self):
        v = classify_ccc(causal.collider_control(), "X", "Y", "C", 0)
        assert v.verdict is Verdict.NO_DEPENDENCE

    @pytest.mark.parametrize("a,b", CANONICAL_PAIRS)
    def test_toys(self, a, b):
        assert classify_ccc(toy_dces(a, b), "A", "B", "M", ACCEPT).verdict is Verdict.FRAGILE_ARTIFACT
        assert classify_ccc(toy_dces(a, b, constrained=True), "A", "B", "M", ACCEPT).verdict is Verdict.ROBUST_CONNECTION

    def test_toy_without_b_edge(self):
        # the accept flag ignores B: no collider path between A and B
        def accept(pv):
            return [(ACCEPT, 0.0, 0.3 + 0.4 * pv[0]), ("reject", 0.3 + 0.4 * pv[0], 1.0)]

        scm = causal.DiscreteScm((fair_node("A"), fair_node("B"), fair_node("N"), causal.Node("M", (ACCEPT, "reject"), ("A", "N"), accept)))
        assert classify_ccc(scm, "A", "B", "M", ACCEPT).verdict is Verdict.NO_DEPENDENCE

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            classify_ccc(ivy_scm(), "athletic", "admitted", "academic", 1)
        with pytest.raises(PreconditionError):
            classify_ccc(causal.collider_control(), "Y", "X", "C", 0)


class TestToy:
    @pytest.mark.parametrize("a,b", [(x, y) for x in GRID for y in GRID])
    def test_rejection_identity(self, a, b):
        post = condition(scm_joint(toy_dces(a, b)), "M", ACCEPT).marginal("A", "B")
        np.testing.assert_allclose(post.table, v_table(0, a, b), atol=1e-9)

    def test_acceptance_rate(self):
        q = v_table(0, 0.0, pi / 8)
        rate = scm_joint(toy_dces(0.0, pi / 8)).prob(M=ACCEPT)
        assert rate == pytest.approx(1 / (4 * q.max()), abs=1e-12)
        assert rate == pytest.approx(0.585786, abs=1e-6)

    def test_constrained_always_accepts(self):
        scm = toy_dces(0.3, 1.4, constrained=True)
        assert scm.clamped
        assert scm_joint(scm.unclamped()).prob(M=ACCEPT) == pytest.approx(1.0, abs=1e-15)
        np.testing.assert_allclose(scm_joint(scm).marginal("A", "B").table, v_table(0, 0.3, 1.4), atol=1e-12)

    def test_postselected_chsh(self):
        fam = lambda a, b: condition(scm_joint(toy_dces(a, b)), "M", ACCEPT).marginal("A", "B")
        assert chsh(fam, CANONICAL) == pytest.approx(TSIRELSON, abs=1e-6)

    def test_settings_domain(self):
        scm = toy_dces([0.0, pi / 4], pi / 8)
        assert scm.domain("a") == (0.0, pi / 4)
        assert scm_joint(scm).prob(a=0.0) == pytest.approx(0.5)


class TestFlipRate:
    def test_symmetric_pair_is_zero(self):
        # Q(.|0, pi/8) and Q(.|pi/4, pi/8) coincide, so the cell boundaries do too
        rate = counterfactual_flip_rate(toy_dces([0.0, pi / 4], pi / 8, True), "a", 0.0, pi / 4, "B")
        assert rate == pytest.approx(_flip_oracle(v_table(0, 0, pi / 8).ravel(), v_table(0, pi / 4, pi / 8).ravel(), lambda k: k & 1), abs=1e-12)
        assert rate < 1e-12

    def test_asymmetric_pair(self):
        q1, q2 = v_table(0, 0.0, 3 * pi / 8).ravel(), v_table(0, pi / 4, 3 * pi / 8).ravel()
        rate = counterfactual_flip_rate(toy_dces([0.0, pi / 4], 3 * pi / 8, True), "a", 0.0, pi / 4, "B")
        assert rate == pytest.approx(_flip_oracle(q1, q2, lambda k: k & 1), abs=1e-12)
        assert rate > 0.5

    def test_same_value(self):
        assert counterfactual_flip_rate(toy_dces(0.0, pi / 8, True), "a", 0.0, 0.0, "B") == 0.0

    def test_unconstrained_b_ignores_a(self):
        assert counterfactual_flip_rate(toy_dces([0.0, pi / 4], pi / 8), "a", 0.0, pi / 4, "B") == 0.0

    def test_positive_iff_distributions_differ(self):
        b = 0.3
        for a1 in GRID:
            for a2 in GRID:
                scm = toy_dces(sorted({a1, a2}), b, True)
                rate = counterfactual_flip_rate(scm, "a", a1, a2, "B")
                oracle = _flip_oracle(v_table(0, a1, b).ravel(), v_table(0, a2, b).ravel(), lambda k: k & 1)
                assert rate == pytest.approx(oracle, abs=1e-12)
                differ = np.max(np.abs(v_table(0, a1, b) - v_table(0, a2, b))) > 1e-12
                assert (rate > 1e-9) == differ

    def test_ivy_twin_network(self):
        # with noise fixed, switching athletic 1 -> 0 changes admission exactly when academic = 0
        assert counterfactual_flip_rate(ivy_scm(), "athletic", 1, 0, "admitted") == pytest.approx(0.5)
        # clamped: both worlds must be admitted, which forces academic = 1; nothing flips
        assert counterfactual_flip_rate(clamp(ivy_scm(), HOLLY), "athletic", 1, 0, "academic") == 0.0


class TestNoiseSampling:
    @pytest.mark.parametrize(
        "scm",
        [ivy_scm(), toy_dces(0.0, pi / 8), toy_dces([0.0, pi / 4], [pi / 8, 3 * pi / 8]), causal.collider_control()],
        ids=["ivy", "toy", "toy-settings", "control"],
    )
    def test_faithful(self, scm):
        n = 100_000
        emp = causal.sampled_joint(scm, causal.sample_scm(scm, n, 31337))
        exact = scm_joint(scm)
        assert within_sigma(emp.table, exact.table, n).all()

    def test_clamped_sampling_accepts_all(self):
        scm = toy_dces(0.0, pi / 8, True)
        cols = causal.sample_scm(scm, 20_000, 5)
        assert cols["accepted"].all()
        emp = causal.sampled_joint(scm, cols)
        assert within_sigma(emp.marginal("A", "B").table, v_table(0, 0.0, pi / 8), 20_000).all()

    def test_deterministic(self):
        a = causal.sample_scm(ivy_scm(), 100, 8)
        b = causal.sample_scm(ivy_scm(), 100, 8)
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])


class TestModelFile:
    IVY = {
        "nodes": [
            {"name": "academic", "domain": [0, 1], "parents": [], "cpt": [[0.5, 0.5]]},
            {"name": "athletic", "domain": [0, 1], "parents": [], "cpt": [[0.5, 0.5]]},
            {"name": "admitted", "domain": [0, 1], "parents": ["academic", "athletic"], "cpt": [[1, 0], [0, 1], [0, 1], [0, 1]]},
        ]
    }

    def test_matches_builtin(self):
        assert scm_joint(model_from_dict(self.IVY)).distance(scm_joint(ivy_scm())) == 0.0

    def test_clamp_block(self):
        spec = dict(self.IVY, clamp={"node": "admitted", "value": 1})
        model = model_from_dict(spec)
        assert model.constraint == HOLLY
        assert query(model, {"athletic": 0}).prob(academic=1) == pytest.approx(1.0)

    def test_wrong_row_count(self):
        bad = {"nodes": [dict(self.IVY["nodes"][0]), dict(self.IVY["nodes"][1]), dict(self.IVY["nodes"][2], cpt=[[1, 0]])]}
        with pytest.raises(PreconditionError):
            model_from_dict(bad)

    def test_missing_field(self):
        with pytest.raises(PreconditionError):
            model_from_dict({"nodes": [{"name": "x"}]})
