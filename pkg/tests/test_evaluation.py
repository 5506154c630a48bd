import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lldm.dynamics import DynamicsSpec
from lldm.encoding import Dataset
from lldm.evaluation import (ExperimentConfig, Metrics, Residuals, accuracy, baseline_accuracy, deviance_residuals,
                             deviance_terms, logreg_comparator, read_residuals_csv, run_subgraph_experiment,
                             select_xi, split, split_indices, write_metrics_json, write_residuals_csv)
from lldm.factorization import SmfConfig
from lldm.logistic import nll
from lldm.model import LldmModel, predict_prob

from .test_model import separable_dataset

FCA5 = DynamicsSpec("fca", 5)


def const_model(k=2, T=1, beta=0.0, intercept=0.0):
    f = np.ones((1, k, k, T)) / np.sqrt(k * k * T)
    return LldmModel(f, [beta], FCA5, intercept)


def toy(labels, k=2, T=1, seed=0):
    rng = np.random.default_rng(seed)
    n = len(labels)
    return Dataset(rng.random((n, k, k, T)), labels, {"dynamics": "fca", "kappa": 5})


class TestSplit:
    def test_sizes(self):
        tr, te = split_indices(10, 0.8, 0)
        assert len(tr) == 8 and len(te) == 2
        assert sorted(np.r_[tr, te].tolist()) == list(range(10))

    def test_floor(self):
        tr, te = split_indices(7, 0.5, 1)
        assert len(tr) == 3 and len(te) == 4

    def test_deterministic(self):
        assert np.array_equal(split_indices(50, 0.8, 3)[0], split_indices(50, 0.8, 3)[0])
        assert not np.array_equal(split_indices(50, 0.8, 3)[0], split_indices(50, 0.8, 4)[0])

    @pytest.mark.parametrize("n,frac", [(1, 0.5), (10, 0.0), (10, 1.0), (3, 0.2)])
    def test_errors(self, n, frac):
        with pytest.raises(ValueError):
            split_indices(n, frac, 0)

    def test_dataset_split(self):
        ds = toy(np.arange(20) % 2)
        tr, te = split(ds, 0.75, 2)
        assert len(tr) == 15 and len(te) == 5


class TestMetrics:
    def test_example(self):
        m = Metrics.from_predictions([1, 0, 1, 1], [1, 0, 0, 1])
        assert (m.accuracy, m.tp, m.tn, m.fp, m.fn, m.n) == (0.75, 2, 1, 1, 0, 4)

    @given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=50))
    def test_complement_flips(self, pairs):
        pred, lab = map(np.array, zip(*pairs))
        a = Metrics.from_predictions(pred, lab).accuracy
        b = Metrics.from_predictions(pred, ~lab).accuracy
        assert a + b == pytest.approx(1.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            Metrics.from_predictions([1], [1, 0])
        with pytest.raises(ValueError):
            Metrics.from_predictions([], [])

    def test_accuracy_constant_model(self):
        ds = toy([1, 1, 0, 1])
        assert accuracy(const_model(beta=1.0), ds).accuracy == 0.75
        assert accuracy(const_model(beta=-1.0), ds).accuracy == 0.25

    def test_json(self, tmp_path):
        write_metrics_json(Metrics.from_predictions([1, 0], [1, 1]), tmp_path / "m.json", seed=7)
        d = json.loads((tmp_path / "m.json").read_text())
        assert d == {"accuracy": 0.5, "tp": 1, "tn": 0, "fp": 0, "fn": 1, "n": 2, "seed": 7}

    def test_baseline_accuracy(self):
        # both trajectories end concentrated, so the baseline always says 1
        trajs = [np.array([[0, 2], [1, 1]]), np.array([[3, 3]])]
        m = baseline_accuracy(trajs, [1, 0], FCA5, np.random.default_rng(0))
        assert m.tp == 1 and m.fp == 1


class TestResiduals:
    def test_half(self):
        res = deviance_residuals(const_model(), toy([1, 0]))
        assert res.deviance.tolist() == pytest.approx([1.17741, -1.17741], abs=1e-5)
        assert np.all(res.fitted == 0.5)

    def test_confident(self):
        x = np.ones((2, 2, 1))
        ds = Dataset(np.array([x, x]), [1, 0], {"dynamics": "fca", "kappa": 5})
        m = const_model(beta=np.log(9) / 2)  # <f, x> = 2, so p = 0.9
        res = deviance_residuals(m, ds)
        assert res.deviance[0] == pytest.approx(np.sqrt(-2 * np.log(0.9)))
        assert res.deviance[1] == pytest.approx(-np.sqrt(-2 * np.log(0.1)))

    def test_clamped(self):
        assert deviance_terms([0.0], [1.0])[0] == pytest.approx(-2 * np.log(1e-12), rel=1e-6)
        assert np.isfinite(deviance_terms([1.0, 0.0], [0.0, 1.0])).all()

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-2, 2))
    def test_sum_squares_is_twice_nll(self, seed, beta, b):
        rng = np.random.default_rng(seed)
        ds = toy((rng.random(30) < 0.5).astype(int), k=3, T=2, seed=seed)
        m = const_model(k=3, T=2, beta=beta, intercept=b)
        res = deviance_residuals(m, ds)
        z = np.log(res.fitted / (1 - res.fitted))
        assert np.sum(res.deviance ** 2) == pytest.approx(2 * nll(z, ds.labels), rel=1e-9)
        assert np.all(np.sign(res.deviance) == np.where(ds.labels == 1, 1, -1))

    def test_csv_round_trip(self, tmp_path):
        m = const_model(k=3, T=2, beta=0.37, intercept=-0.2)
        res = deviance_residuals(m, toy(np.arange(12) % 2, k=3, T=2, seed=5))
        write_residuals_csv(res, tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().splitlines()
        assert lines[0] == "index,label,fitted,deviance" and len(lines) == 13
        digits = len(lines[1].split(",")[2].lstrip("0.").replace(".", ""))
        assert digits >= 9
        back = read_residuals_csv(tmp_path / "r.csv")
        assert np.array_equal(back.fitted, res.fitted) and np.array_equal(back.deviance, res.deviance)
        assert np.array_equal(back.index, res.index) and np.array_equal(back.label, res.label)

    def test_bad_header(self, tmp_path):
        (tmp_path / "r.csv").write_text("a,b\n")
        with pytest.raises(ValueError):
            read_residuals_csv(tmp_path / "r.csv")

    def test_rows(self):
        r = Residuals(np.arange(2), np.array([1, 0]), np.array([0.6, 0.4]), np.array([1.0, -1.0]))
        assert list(r.rows())[1] == (1, 0, 0.4, -1.0) and len(r) == 2


class TestComparators:
    @pytest.mark.filterwarnings("ignore:fewer examples")
    def test_logreg_separable(self):
        ds = separable_dataset(n=40)
        tr, te = split(ds, 0.75, 0)
        assert logreg_comparator(tr, te).accuracy == 1.0

    def test_select_xi(self):
        ds = separable_dataset(n=50, seed=3)
        model, xi, scores = select_xi(ds, 1, (0.1, 0.5), SmfConfig(iters=20, fit_intercept=True))
        assert set(scores) == {0.1, 0.5} and xi in scores
        # ties go to the earliest grid value
        assert xi == min(x for x, s in scores.items() if s == max(scores.values()))
        assert 0 <= predict_prob(model, ds.cats).min()

    def test_select_xi_empty(self):
        with pytest.raises(ValueError):
            select_xi(separable_dataset(), 1, ())


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore:fewer examples")
def test_small_experiment():
    cfg = ExperimentConfig(count=120, seeds=(0,), rank=2, iters=15, nodes=60, neighbors=4, xi_grid=(0.5,),
                           with_logreg=True)
    out = run_subgraph_experiment(cfg)
    run = out["runs"][0]
    for key in ("lldm", "lldm_t", "lldm_nmf", "baseline", "logreg"):
        assert 0 <= run[key] <= 1 and key in out["summary"]
    assert out["config"]["seeds"] == [0]
    json.dumps(out)
