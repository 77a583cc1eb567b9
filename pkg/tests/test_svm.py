import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedpkt.errors import DimensionMismatch, EmptyData, ValidationError
from fedpkt.features import Feature, build_vocabulary
from fedpkt.metrics import confusion
from fedpkt.svm import (Hyperparams, SvmModel, client_update, coefficients_csv, dump_model, hinge_loss,
                        load_model, objective, predict, predict_many, subgradient, top_coefficients,
                        train_centralized)

from conftest import ex, planted_examples


def model(*w):
    return SvmModel(np.array(w, dtype=float))


def full_batch_oracle(w, examples, eta):
    """One explicitly summed full-batch step, written without numpy tricks."""
    w = [float(x) for x in w]
    total = [0.0] * len(w)
    for e in examples:
        dot = 0.0
        for i in e.indices:
            dot += w[i]
        if e.label * dot < 1.0:
            for i in e.indices:
                total[i] += e.label
    return np.array([wi + eta / len(examples) * ti for wi, ti in zip(w, total)])


def random_examples(rng, n, dim):
    out = []
    for j in range(n):
        k = int(rng.integers(1, min(dim, 6) + 1))
        out.append(ex(rng.choice(dim, size=k, replace=False).tolist(), int(rng.choice([-1, 1])), f"e{j}"))
    return out


def test_hinge_loss_examples():
    assert hinge_loss(model(0, 0), ex([0, 1], 1)) == 1.0
    assert hinge_loss(model(2), ex([0], 1)) == 0.0
    assert hinge_loss(model(2), ex([0], -1)) == 3.0
    with pytest.raises(DimensionMismatch):
        hinge_loss(model(1), ex([3], 1))


def test_subgradient_examples():
    assert subgradient(model(0, 0, 0), ex([0, 2], 1)) == {0: -1.0, 2: -1.0}
    assert subgradient(model(5), ex([0], 1)) == {}


def test_finite_difference_at_point():
    m, e, h = model(0.3), ex([0], 1), 1e-6
    fd = (hinge_loss(model(0.3 + h), e) - hinge_loss(model(0.3 - h), e)) / (2 * h)
    assert abs(fd - subgradient(m, e)[0]) <= 1e-4


def test_client_update_single_forced_step():
    out = client_update(model(0.0), [ex([0], 1)], Hyperparams(eta=1.0, batch_size=None))
    assert out.weights.tolist() == [1.0]


def test_client_update_satisfied_examples_no_change():
    m = model(2.0, -2.0)
    out = client_update(m, [ex([0], 1), ex([1], -1)], Hyperparams(eta=0.5, batch_size=None))
    assert np.array_equal(out.weights, m.weights)


def test_client_update_matches_full_batch_oracle():
    rng = np.random.default_rng(11)
    data = random_examples(rng, 20, 8)
    w0 = rng.normal(size=8)
    out = client_update(SvmModel(w0.copy()), data, Hyperparams(eta=0.37, batch_size=None, epochs=1))
    assert np.array_equal(out.weights, full_batch_oracle(w0, data, 0.37))


def test_client_update_leaves_input_untouched():
    m = model(0.0, 0.0)
    client_update(m, [ex([0], 1)], Hyperparams(eta=1.0))
    assert m.weights.tolist() == [0.0, 0.0]


def test_client_update_errors():
    with pytest.raises(EmptyData):
        client_update(model(0.0), [], Hyperparams())
    with pytest.raises(DimensionMismatch):
        client_update(model(0.0), [ex([4], 1)], Hyperparams())


def test_l2_shrink_applied_per_batch():
    out = client_update(model(0.0), [ex([0], 1)], Hyperparams(eta=1.0, lam=0.1, batch_size=None))
    assert out.weights[0] == pytest.approx(1.0 * (1 - 2 * 1.0 * 0.1), abs=0)


def test_minibatches_cover_each_example_once_per_epoch():
    # with eta tiny every example violates the margin, so each epoch adds y/|b| to its own coordinate
    data = [ex([i], 1 if i % 2 else -1) for i in range(7)]
    out = client_update(SvmModel(np.zeros(7)), data, Hyperparams(eta=1e-3, batch_size=3, epochs=1, seed=5))
    sizes = np.abs(out.weights) * 1e3
    assert sorted(np.round(1 / sizes).astype(int).tolist()) == [1, 3, 3, 3, 3, 3, 3]


def test_hyperparams_validation():
    with pytest.raises(ValidationError):
        Hyperparams(eta=0)
    with pytest.raises(ValidationError):
        Hyperparams(lam=-1)
    with pytest.raises(ValidationError):
        Hyperparams(batch_size=0)
    assert Hyperparams(batch_size=float("inf")).batch_size is None


def test_train_centralized_separable_planted():
    _, examples = planted_examples(n=3000, seed=2, noise=0.0)
    vocab, _ = planted_examples(n=3000, seed=2, noise=0.0)
    m = train_centralized(examples, Hyperparams(eta=0.1, batch_size=10, seed=1), 5, len(vocab))
    truth = [e.label for e in examples]
    assert confusion(predict_many(m, examples), truth).f1 == 1.0


def test_train_centralized_zero_passes():
    data = [ex([0], 1), ex([1], -1)]
    m = train_centralized(data, Hyperparams(), 0, 2)
    assert not m.weights.any()
    assert predict_many(m, data).tolist() == [-1, -1]
    assert confusion(predict_many(m, data), [1, -1]).f1 == 0.0


def test_train_centralized_deterministic():
    rng = np.random.default_rng(0)
    data = random_examples(rng, 60, 10)
    h = Hyperparams(eta=0.2, batch_size=7, seed=99)
    assert train_centralized(data, h, 3, 10) == train_centralized(data, h, 3, 10)


def test_predict_examples():
    assert predict(model(0.0), ex([0], 1)) == -1
    assert predict(model(1.0), [0]) == 1
    assert predict(model(-1.0), [0]) == -1
    assert predict(model(0.0, 0.0), []) == -1


def test_top_coefficients_examples():
    vocab = build_vocabulary([{Feature("uri_key", t) for t in "abc"}])
    pos, neg = top_coefficients(model(3, -2, 1), vocab, 1)
    assert pos == [(vocab.features[0], 3.0)] and neg == [(vocab.features[1], -2.0)]
    pos, neg = top_coefficients(model(3, -2, 1), vocab, 3)
    assert [w for _, w in pos] == [3.0, 1.0, -2.0]
    assert [w for _, w in neg] == [-2.0, 1.0, 3.0]
    assert coefficients_csv(model(3, -2, 1), vocab, 1).splitlines()[1] == "positive,1,uri_key,a,3.0"


def test_top_coefficients_planted_key():
    vocab, examples = planted_examples(n=3000, seed=2, noise=0.0)
    m = train_centralized(examples, Hyperparams(seed=1), 5, len(vocab))
    pos, _ = top_coefficients(m, vocab, 5)
    assert {f.token for f, _ in pos} & {"gaid", "adid"}


def test_model_file_round_trip():
    m = SvmModel(np.array([0.5, -1.25, 3e-300]), "abc123", 4)
    h = Hyperparams(eta=0.05, batch_size=None, epochs=2, seed=7)
    blob = dump_model(m, h)
    assert blob.startswith(b"FEDPKT-SVM/1\n")
    m2, h2 = load_model(blob)
    assert m2 == m and h2 == h
    with pytest.raises(ValidationError):
        load_model(blob[:-1])


def test_divergence_is_reported():
    data = [ex([0], 1)] * 3
    with pytest.raises(ValidationError):
        client_update(model(0.0), data, Hyperparams(eta=1e308, lam=1e10, batch_size=1))


# -- properties ---------------------------------------------------------------

@given(st.integers(0, 2**31))
@settings(max_examples=50, deadline=None)
def test_gradient_check_random(seed):
    rng = np.random.default_rng(seed)
    dim = 6
    w = rng.normal(scale=0.8, size=dim)
    e = random_examples(rng, 1, dim)[0]
    m = SvmModel(w)
    if abs(1 - e.label * w[list(e.indices)].sum()) <= 1e-3:
        return
    g = subgradient(m, e)
    h = 1e-7
    for i in e.indices:
        wp, wm = w.copy(), w.copy()
        wp[i] += h
        wm[i] -= h
        fd = (hinge_loss(SvmModel(wp), e) - hinge_loss(SvmModel(wm), e)) / (2 * h)
        exact = g.get(i, 0.0)
        assert abs(fd - exact) <= 1e-5 * max(1.0, abs(exact))


@given(st.integers(0, 2**31), st.floats(1e-3, 10.0))
@settings(max_examples=50, deadline=None)
def test_predict_scale_invariant(seed, c):
    rng = np.random.default_rng(seed)
    w = rng.normal(size=5)
    data = random_examples(rng, 10, 5)
    assert np.array_equal(predict_many(SvmModel(w), data), predict_many(SvmModel(c * w), data))


@given(st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_full_batch_oracle_random(seed):
    rng = np.random.default_rng(seed)
    data = random_examples(rng, int(rng.integers(1, 30)), 9)
    w0 = rng.normal(size=9)
    eta = float(rng.uniform(0.01, 2))
    got = client_update(SvmModel(w0.copy()), data, Hyperparams(eta=eta, batch_size=None))
    np.testing.assert_allclose(got.weights, full_batch_oracle(w0, data, eta), rtol=1e-12, atol=0)


def test_objective_non_increasing_on_separable_data():
    # disjoint supports per label keep full-batch steps monotone for small eta
    data = [ex([0, 2], 1), ex([0, 3], 1), ex([1, 4], -1), ex([1, 5], -1)]
    m = SvmModel(np.zeros(6))
    h = Hyperparams(eta=0.05, batch_size=None)
    prev = objective(m, data)
    for _ in range(60):
        m = client_update(m, data, h)
        cur = objective(m, data)
        assert cur <= prev + 1e-12
        prev = cur
    assert prev == 0.0
