import json
import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdcouple import optimize as O
from qdcouple.optimize import Dimension, Objective, OptimizationRun, ParameterBox


def test_objective_values():
    assert Objective()(0.906, 16.5) == pytest.approx(0.906 ** 2 / 85 + 16.5 / 200)
    assert Objective()(0.906, 16.5) == pytest.approx(0.09216, abs=1e-5)
    assert Objective()(0.0, 0.0) == 0
    assert Objective(purcell_floor=5)(0.9, 4.0) == -math.inf
    with pytest.raises(ValueError):
        Objective(0, 0)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 100))
def test_objective_monotone_in_eta(e1, e2, fp):
    lo, hi = sorted((e1, e2))
    assert Objective()(lo, fp) <= Objective()(hi, fp)


def test_box_validation_and_mapping():
    with pytest.raises(ValueError):
        ParameterBox((Dimension("a", 1, 1),))
    with pytest.raises(ValueError):
        ParameterBox((Dimension("a", 0, 1), Dimension("a", 0, 2)))
    box = ParameterBox.from_dict({"radius": [1000, 2000], "h": {"bounds": [255, 295], "unit": "nm"}})
    x = np.array([1500.0, 260.0])
    assert np.allclose(box.from_unit(box.to_unit(x)), x)
    assert box.contains(x) and not box.contains([2500.0, 260.0])


def quad1d(x):
    return 0.0, -(x[0] - 0.37) ** 2


BOX1 = ParameterBox((Dimension("x", 0.0, 1.0),))


def _run(seed, budget, evaluator=quad1d, box=BOX1):
    run = OptimizationRun(box, Objective(w_eta=0, w_f=1), seed=seed)
    run.run(evaluator, budget)
    return run


def test_seeded_determinism():
    a, b = _run(3, 14), _run(3, 14)
    assert [e.point for e in a.history] == [e.point for e in b.history]
    assert [e.f for e in a.history] == [e.f for e in b.history]
    assert _run(4, 1).history[0].point != a.history[0].point


def test_incumbent_monotone():
    run = _run(1, 20)
    tr = run.incumbent_trace()
    assert np.all(np.diff(tr) >= 0)
    assert tr[-1] == run.incumbent.f


def test_quadratic_concentrates():
    # xi is in objective units, so the quadratic's curvature must dwarf it near x*
    run = _run(0, 30, lambda x: (0.0, -1e3 * (x[0] - 0.37) ** 2))
    guided = np.array([e.point[0] for e in run.history[run.n_init:]])
    assert np.mean(np.abs(guided - 0.37) < 0.01) >= 0.5
    assert abs(run.incumbent.point[0] - 0.37) < 0.01


def test_floor_excluded_from_incumbent():
    run = OptimizationRun(BOX1, Objective(purcell_floor=10.0))
    run.observe([0.2], 0.99, 5.0)
    run.observe([0.4], 0.10, 12.0)
    assert run.incumbent.point == (0.4,)
    X, y = run._xy()
    assert np.all(np.isfinite(y))


def test_duplicate_jittered(caplog):
    run = OptimizationRun(BOX1)
    run.observe([0.5], 0.5, 1.0)
    with caplog.at_level(logging.WARNING):
        ev = run.observe([0.5], 0.5, 1.0)
    assert "duplicate" in caplog.text
    assert ev.point != (0.5,) and abs(ev.point[0] - 0.5) < 1e-4


def test_observe_rejects():
    run = OptimizationRun(BOX1)
    with pytest.raises(ValueError):
        run.observe([1.5], 0.5, 1.0)
    with pytest.raises(ValueError):
        run.observe([0.5], math.nan, 1.0)


def test_batch_points_distinct():
    run = _run(2, 12)
    batch = run.suggest_batch(3)
    assert len(run.history) == 12
    assert len({tuple(np.round(b, 9)) for b in batch}) == 3


def test_save_load_resume(tmp_path):
    run = _run(5, 12)
    run.save(tmp_path / "r.json")
    back = OptimizationRun.load(tmp_path / "r.json")
    assert back.history == run.history and back.seed == 5
    back.run(quad1d, 14)
    assert len(back.history) == 14
    json.loads((tmp_path / "r.json").read_text())


def test_history_csv(tmp_path):
    run = OptimizationRun(BOX1, seed=0)
    run.run(lambda x: (0.5, x[0]), 3, history_csv=tmp_path / "h.csv")
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "iteration,x,eta_ext,purcell,f,seconds" and len(lines) == 4


def test_grid_points_row_major():
    box = ParameterBox.from_dict({"a": [0, 1], "b": [10, 20]})
    assert O.grid_points(box, 2) == [(0, 10), (0, 20), (1, 10), (1, 20)]
    assert O.grid_points(box, [1, 3])[1] == (0.5, 15.0)


def test_grid_scan_corner_and_budget(tmp_path):
    box = ParameterBox.from_dict({"a": [0, 1], "b": [0, 1]})
    rows = O.grid_scan(box, 2, lambda x: x[0] + 2 * x[1])
    assert max(rows, key=lambda r: r.values[0]).point == (1, 1)
    with pytest.raises(O.BudgetExceeded):
        O.grid_scan(box, 5, lambda x: 0.0, budget=10)


def test_grid_scan_checkpoint(tmp_path):
    box = ParameterBox.from_dict({"a": [0, 1]})
    calls = []

    def ev(x):
        calls.append(float(x[0]))
        if x[0] > 0.9:
            raise RuntimeError("solver diverged")
        return x[0]

    ck = tmp_path / "scan.jsonl"
    rows = O.grid_scan(box, 3, ev, checkpoint=ck)
    assert rows[-1].error.startswith("RuntimeError") and rows[0].values == (0.0,)
    calls.clear()
    again = O.grid_scan(box, 3, ev, checkpoint=ck)
    assert calls == [] and again == rows


def test_branin_minima():
    for x in [(-math.pi, 12.275), (math.pi, 2.275), (9.42478, 2.475)]:
        assert O.branin(x) == pytest.approx(O.BRANIN_OPTIMUM, abs=1e-5)


def test_branin_reached():
    n = O.evaluations_to_reach(0)
    assert n is not None and n <= 150


def test_surrogate_shape():
    ev = O.PillarSurrogate().evaluator()
    eta, fp = ev([1398.0, 274.9])
    assert 0 <= eta <= 1 and fp > 0.8
    # a larger pillar has less side loss away from resonance effects
    assert ev([2000.0, 274.9])[1] != ev([1000.0, 274.9])[1]
