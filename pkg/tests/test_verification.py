import json
import math

import numpy as np
import pytest

from graphhelmholtz.geometry import GraphDomainSpec
from graphhelmholtz.verification import ANCHORS, Check, VerificationReport, _clean, coercivity_floor, run_suite

TWO_PI = 2 * math.pi


class TestReport:
    def test_check_semantics(self):
        assert Check("a", "rellich", 1e-9, 1e-8).passed
        assert not Check("a", "rellich", math.nan, 1e-8).passed
        assert Check("b", "coercivity-lower", 0.5, 0.4, kind="min").passed
        with pytest.raises(ValueError):
            Check("c", "no-such-anchor", 0.0, 1.0)
        with pytest.raises(ValueError):
            Check("c", "rellich", 0.0, 1.0, kind="avg")

    def test_json_and_summary(self):
        rep = VerificationReport()
        rep.record("ok", "rellich", 1e-12, 1e-8, N=32)
        rep.record("bad", "linearity", 1.0, 1e-8)
        data = json.loads(rep.to_json())
        assert [set(d) for d in data] == [{"name", "anchor", "value", "tol", "pass", "context"}] * 2
        assert data[0]["context"] == {"N": 32}
        s = rep.summary()
        assert s["total"] == 2 and s["passed"] == 1 and s["failed"] == ["bad"] and s["worst_check"] == "bad"
        assert not rep.all_passed and rep["ok"].passed
        assert "1/2 checks passed" in rep.summary_text()
        with pytest.raises(KeyError):
            rep["missing"]
        with pytest.raises(TypeError):
            rep.add("x")

    def test_clean(self):
        assert _clean(0.1 + 0.2) == 0.3
        assert _clean({"a": np.float64(math.inf), "b": (np.int64(3), True)}) == {"a": "inf", "b": [3, True]}

    def test_coercivity_floor_flat(self):
        assert math.isclose(coercivity_floor(0.0), 1.0)
        assert coercivity_floor(5.0) < coercivity_floor(2.0) < 1.0


@pytest.mark.parametrize(
    "dom",
    [GraphDomainSpec("flat"), GraphDomainSpec("slope", {"c": 2.0}), GraphDomainSpec("sine", {"alpha": 0.5})],
    ids=["flat", "slope2", "sine"],
)
def test_full_suite_on_reference_grid(dom, ref_grid):
    rep = run_suite(dom, ref_grid, seed=3)
    failed = [(c.name, c.value, c.tol) for c in rep.checks if not c.passed]
    assert not failed
    assert rep["coverage_audit"].value == 0
    assert {c.anchor for c in rep.checks} == set(ANCHORS)
    if dom.kind == "flat":
        assert run_suite(dom, ref_grid, seed=3).to_json() == rep.to_json()
