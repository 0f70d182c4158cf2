import json

import numpy as np
import pytest

import admitlab

VCGFM = admitlab.descriptor(
    "vcGFM",
    params={"inertia_h": 2.6, "damping_xi": 2.0, "delay": 100e-6},
    circuit={"preset": "table1"},
    op={"p": 1.0, "q": 0.0, "v": 1.0},
)


def test_inventory():
    assert admitlab.structures() == ["pqGFL", "pvGFL", "viGFL", "ccGFM", "vcGFM"]
    assert admitlab.learners() == ["LR", "DT", "RF", "NBC", "XGB", "SVM", "KNN"]


def test_sweep_tends_to_filter():
    grid = admitlab.log_grid(1.0, 1e4, 50)
    y = admitlab.sweep(VCGFM, grid)
    assert np.allclose(y["freq_hz"], grid)
    assert y["dd"].dtype == np.complex128
    f = admitlab.filter_admittance(VCGFM, [1e4])
    assert abs(abs(y["dd"][-1]) / abs(f["dd"][0]) - 1.0) < 0.05


def test_measure_matches_sweep():
    grid = [5.0, 50.0, 500.0]
    m = admitlab.measure(VCGFM, grid_hz=grid)
    y = admitlab.sweep(VCGFM, grid)
    assert m["dropped_hz"] == []
    db = 20 * np.log10(np.abs(m["dd"]) / np.abs(y["dd"]))
    assert np.all(np.abs(db) < 1.0)


def test_errors_carry_a_code():
    with pytest.raises(admitlab.AdmitlabError) as err:
        admitlab.sweep(json.dumps({"structure": "xxGFM"}), [1.0])
    assert err.value.code == "InvalidArgument"
    assert "vcGFM" in str(err.value)


def test_generate_train_predict(tmp_path):
    counts = {"counts": {"pqGFL": 30, "pvGFL": 30, "ccGFM": 30, "vcGFM": 30}, "grid": {"points": 20}}
    ds = admitlab.generate(json.dumps(counts), 3, ["pqGFL", "pvGFL", "ccGFM", "vcGFM"])
    assert ds["x"].shape == (120, 80)
    assert len(ds["feature_names"]) == 80

    again = admitlab.generate(json.dumps(counts), 3, ["pqGFL", "pvGFL", "ccGFM", "vcGFM"], threads=2)
    assert np.array_equal(ds["x"], again["x"])

    model = admitlab.train("RF", ds["x"], ds["structure"], ds["id"], ds["feature_names"],
                           hyperparams_json='{"rf_n_trees": 20}', seed=3)
    truth = np.array([1 if m == "GFM" else 0 for m in ds["mode"]])
    assert np.mean(model.predict(ds["x"]) == truth) > 0.95

    weights, ranked = model.importances(3)
    assert abs(sum(weights) - 1.0) < 1e-9
    assert len(ranked) == 3

    path = tmp_path / "rf.model"
    model.save(path)
    back = admitlab.Model.load(path)
    assert back.learner == "RF"
    assert np.array_equal(back.predict(ds["x"]), model.predict(ds["x"]))

    cv = admitlab.cross_validate("DT", ds["x"], ds["structure"], 3, 5, ds["id"])
    assert len(cv["accuracies"]) == 3
    assert 0.0 <= cv["mean"] <= 1.0


def test_unknown_learner_is_rejected():
    with pytest.raises(admitlab.AdmitlabError):
        admitlab.train("FOO", np.zeros((4, 2)), ["pqGFL", "pqGFL", "ccGFM", "ccGFM"])
