"""End-to-end smoke checks for the python module.

Exercises the bound surface lightly: manifold identities, a tiny training
pipeline on generated data, serialization round trips, and error mapping.
Run with PYTHONPATH pointing at the built extension.
"""

import json
import math
import os
import tempfile

import numpy as np

import spdreg


def random_spd(rng, n):
    a = rng.standard_normal((n, n))
    return a @ a.T + n * np.eye(n)


def test_manifold():
    rng = np.random.default_rng(7)
    a = random_spd(rng, 6)
    b = random_spd(rng, 6)

    d = spdreg.riemannian_distance(a, b)
    assert d > 0
    assert abs(spdreg.riemannian_distance(a, a)) < 1e-10

    v = spdreg.tangent_vectorize(a, b)
    assert v.shape == (spdreg.tangent_dim(6),)
    assert abs(np.linalg.norm(v) - d) < 1e-8 * max(1.0, d)

    # log/exp round trip through the maps at a base point
    w = spdreg.log_map(a, b)
    back = spdreg.exp_map(a, w)
    assert np.allclose(back, b, atol=1e-8)

    # the intrinsic mean of {X, X} is X; commuting pair gives the geometric mean
    m = spdreg.intrinsic_mean([a, a])
    assert np.allclose(m, a, atol=1e-8)
    d1 = np.diag([1.0, 4.0, 9.0])
    d2 = np.diag([4.0, 1.0, 1.0])
    gm = spdreg.intrinsic_mean([d1, d2])
    assert np.allclose(gm, np.diag([2.0, 2.0, 3.0]), atol=1e-7)

    log_a = spdreg.matrix_log(a)
    assert np.allclose(spdreg.matrix_exp(log_a), a, atol=1e-8)


def test_errors():
    try:
        spdreg.riemannian_distance(np.eye(3), -np.eye(3))
    except spdreg.Error:
        pass
    else:
        raise AssertionError("negative definite input should raise spdreg.Error")


def test_pipeline():
    cfg = spdreg.GeneratorConfig()
    cfg.channels = 8
    cfg.sample_rate = 100.0
    cfg.session_length = 300.0
    cfg.event_rate = 4.0
    cfg.coupling = 0.9
    cfg.seed = 42

    session = spdreg.generate_session(cfg, "smoke")
    rec = session.recording
    assert rec.channels == 8
    assert len(rec.events) > 30
    assert len(session.truth.true_rts) == len(rec.events)

    pp = spdreg.PreprocessConfig()
    pp.trial_length_s = 2.0
    trials, skipped = spdreg.preprocess_session(rec, pp)
    assert len(trials) > 30
    assert trials[0].data.shape == (8, 200)

    psd = spdreg.PsdConfig()
    psd.sample_rate = 100.0
    psd.window_length = 100

    f1 = spdreg.extract_fs1(trials[0], psd)
    assert f1.shape == (16,)  # 2 bands x 8 channels

    bank = spdreg.train_filter_bank(trials, spdreg.FilterConfig(3, 2))
    assert bank.weights.shape == (8, 6)
    f2 = spdreg.extract_fs2(trials[0], bank, psd)
    assert f2.shape == (12,)  # 2 bands x 6 filters

    model = spdreg.TangentSpaceModel.fit(trials, bank)
    f3 = spdreg.extract_fs3(trials[0], model)
    assert f3.shape == (spdreg.tangent_dim(6),)

    # tangent features of the reference mean itself vanish
    zero = spdreg.tangent_vectorize(model.reference_mean, model.reference_mean)
    assert np.linalg.norm(zero) < 1e-10

    x = np.vstack([spdreg.extract_fs3(t, model) for t in trials])
    y = np.array([t.label for t in trials])

    lasso = spdreg.lasso_fit_cv(x, y, fold_count=4, grid_size=30)
    predictions = np.array([lasso.predict(row) for row in x])
    cc = np.corrcoef(predictions, y)[0, 1]
    assert cc > 0.5, f"in-sample cc too low: {cc:.3f}"

    # lambda at or above lambda_max zeroes every coefficient
    lam_max = spdreg.lasso_lambda_max(x, y)
    empty = spdreg.lasso_fit(x, y, lam_max * 1.01)
    assert np.all(empty.coefficients == 0.0)

    knn = spdreg.KnnModel(5, x, y)
    p0 = knn.predict(x[0])
    assert abs(p0 - y[0]) < 1e-9  # exact match short-circuits


def test_serialization():
    cfg = spdreg.GeneratorConfig()
    cfg.channels = 6
    cfg.sample_rate = 100.0
    cfg.session_length = 200.0
    cfg.event_rate = 4.0
    cfg.seed = 3
    session = spdreg.generate_session(cfg)
    trials, _ = spdreg.preprocess_session(session.recording)

    bank = spdreg.train_filter_bank(trials, spdreg.FilterConfig(2, 2))
    bank2 = spdreg.SpatialFilterBank.from_json(bank.to_json())
    assert np.array_equal(bank.weights, bank2.weights)
    assert json.loads(bank.to_json())["config"]["k_classes"] == 2

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "session.bin")
        spdreg.write_session(path, session.recording)
        rec2 = spdreg.read_session(path)
        assert rec2.channels == session.recording.channels
        assert len(rec2.events) == len(session.recording.events)
        assert math.isclose(rec2.events[0].rt, session.recording.events[0].rt,
                            rel_tol=0, abs_tol=1e-12)

        tpath = os.path.join(tmp, "trials.bin")
        spdreg.write_trials(tpath, trials, 100.0, "smoke")
        loaded, fs, sid = spdreg.read_trials(tpath)
        assert fs == 100.0
        assert sid == "smoke"
        assert len(loaded) == len(trials)
        assert np.allclose(loaded[0].data, trials[0].data, atol=1e-6)


def main():
    tests = [test_manifold, test_errors, test_pipeline, test_serialization]
    for test in tests:
        test()
        print(f"ok {test.__name__}")
    print(f"{len(tests)} python smoke tests passed")


if __name__ == "__main__":
    main()
