import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedpkt.errors import (ClientTooSmall, DimensionMismatch, EmptyUpdateSet, ValidationError,
                           VocabMismatch)
from fedpkt.federated import (FedConfig, aggregate, crowdsourcing_curve, round_log_lines,
                              rounds_to_target_sweep, run_federated, sample_clients, sweep_csv)
from fedpkt.partition import ClientDataset, SplitSpec, make_clients
from fedpkt.seeding import derive_seed, rng_for
from fedpkt.svm import Hyperparams, SvmModel, client_update, train_centralized

from conftest import ex, planted_examples


def vec(*w):
    return SvmModel(np.array(w, dtype=float))


@pytest.fixture(scope="module")
def planted_clients():
    vocab, examples = planted_examples(n=2000, seed=5, noise=0.05)
    return vocab, make_clients(examples, SplitSpec(k=5, seed=2))


def test_sample_clients_examples():
    rng = np.random.default_rng(0)
    assert len(sample_clients(10, 0.05, rng)) == 1
    assert sample_clients(5, 1.0, rng) == [0, 1, 2, 3, 4]
    got = sample_clients(20, 0.2, rng)
    assert len(got) == 4 and len(set(got)) == 4 and all(0 <= i < 20 for i in got)


def test_fedconfig_m_uses_floor():
    assert FedConfig(K=10, C=0.05).m == 1
    assert FedConfig(K=20, C=0.2).m == 4
    assert FedConfig(K=3, C=0.5).m == 1
    assert FedConfig(K=10, C=0.3).m == 3


@pytest.mark.parametrize("field,value", [("K", 0), ("C", 0.0), ("C", 1.5), ("B", 0), ("E", 0),
                                         ("R_max", 0), ("eta", 0.0), ("lam", -1.0), ("target_f1", 2.0),
                                         ("eval_set", "x"), ("aggregation", "x"), ("workers", 0)])
def test_fedconfig_validation(field, value):
    with pytest.raises(ValidationError):
        replace(FedConfig(), **{field: value}).validate()


def test_aggregate_examples():
    assert aggregate([(vec(1), 1), (vec(5), 3)]).weights.tolist() == [4.0]
    m = vec(0.1, -0.7, 3.3)
    assert np.array_equal(aggregate([(m, 2), (m, 9), (m, 1)]).weights, m.weights)
    assert np.array_equal(aggregate([(m, 7)]).weights, m.weights)


def test_aggregate_errors():
    with pytest.raises(EmptyUpdateSet):
        aggregate([])
    with pytest.raises(DimensionMismatch):
        aggregate([(vec(1), 1), (vec(1, 2), 1)])
    with pytest.raises(ClientTooSmall):
        aggregate([(vec(1), 0)])


@given(st.lists(st.tuples(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), st.integers(1, 50)),
                min_size=1, max_size=6), st.randoms(use_true_random=False))
@settings(max_examples=100, deadline=None)
def test_aggregate_permutation_invariant(items, rnd):
    updates = [(vec(*w), n) for w, n in items]
    shuffled = list(updates)
    rnd.shuffle(shuffled)
    assert np.array_equal(aggregate(updates).weights, aggregate(shuffled).weights)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=5), st.lists(st.integers(1, 1000), min_size=1, max_size=8))
@settings(max_examples=100, deadline=None)
def test_aggregate_idempotent(w, ns):
    m = vec(*w)
    assert np.array_equal(aggregate([(m, n) for n in ns]).weights, m.weights)


@given(st.lists(st.tuples(st.floats(-10, 10), st.integers(1, 20)), min_size=1, max_size=6))
@settings(max_examples=100, deadline=None)
def test_aggregate_matches_weighted_mean(items):
    got = aggregate([(vec(w), n) for w, n in items]).weights[0]
    total = sum(n for _, n in items)
    want = sum(w * n for w, n in items) / total
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_fedsgd_degenerate_case():
    vocab, examples = planted_examples(n=1500, seed=1)
    dim = len(vocab)
    cfg = FedConfig(K=1, C=1.0, B=None, E=1, R_max=1, eta=0.1, lam=0.0, seed=4)
    fed = run_federated([ClientDataset(0, examples, examples[:50])], cfg, dim).final_model.weights
    cen = train_centralized(examples, Hyperparams(eta=0.1, batch_size=None, seed=123), 1, dim).weights
    assert np.array_equal(fed, cen)


def test_identical_clients_first_round_is_one_update():
    data = [ex([0, 1], 1), ex([2], -1), ex([1, 3], 1), ex([2, 3], -1)]
    clients = [ClientDataset(k, list(data), list(data)) for k in range(3)]
    cfg = FedConfig(K=3, C=1.0, B=None, E=2, R_max=1, eta=0.3)
    got = run_federated(clients, cfg, 4).final_model.weights
    want = client_update(SvmModel.zeros(4), data, Hyperparams(eta=0.3, batch_size=None, epochs=2)).weights
    assert np.array_equal(got, want)


def test_round_logs_shape(planted_clients):
    vocab, clients = planted_clients
    cfg = FedConfig(K=5, C=0.4, B=10, E=1, R_max=6, seed=8, eval_set="both")
    res = run_federated(clients, cfg, len(vocab))
    assert [l.round for l in res.logs] == list(range(1, 7))
    for l in res.logs:
        assert len(l.selected_clients) == 2 and l.selected_clients == sorted(l.selected_clients)
        assert set(l.per_client_f1) == {0, 1, 2, 3, 4}
    recs = [json.loads(s) for s in round_log_lines(res.logs).splitlines()]
    assert "wall_time_ms" not in recs[0] and recs[0]["round"] == 1
    assert "wall_time_ms" in json.loads(round_log_lines(res.logs, timing=True).splitlines()[0])


def test_deterministic_across_workers(planted_clients):
    vocab, clients = planted_clients
    cfg = FedConfig(K=5, C=0.6, B=10, E=2, R_max=5, seed=3)
    runs = [run_federated(clients, replace(cfg, workers=w), len(vocab)) for w in (1, 4, 1)]
    ref = runs[0]
    for r in runs[1:]:
        assert np.array_equal(r.final_model.weights, ref.final_model.weights)
        assert round_log_lines(r.logs) == round_log_lines(ref.logs)


def test_sampling_stream_is_per_round():
    # the round-t sample depends on (seed, t) only
    a = sample_clients(20, 0.2, rng_for(7, "sample", 3))
    b = sample_clients(20, 0.2, rng_for(7, "sample", 3))
    assert a == b
    assert derive_seed(7, 3, 1) != derive_seed(7, 3, 2)


def test_target_reached_on_planted_corpus():
    vocab, examples = planted_examples(n=5000, seed=0, noise=0.0)
    reached = []
    for s in range(5):
        clients = make_clients(examples, SplitSpec(k=5, seed=derive_seed(s, "clients")))
        cfg = FedConfig(K=5, C=1.0, B=10, E=5, R_max=20, target_f1=0.95, seed=s)
        res = run_federated(clients, cfg, len(vocab))
        reached.append(res.reached_target and res.rounds_to_target <= 20)
        assert res.rounds_to_target == res.rounds_for(0.95)
    assert all(reached)


def test_rounds_for_monotone(planted_clients):
    vocab, clients = planted_clients
    res = run_federated(clients, FedConfig(K=5, C=0.2, eta=0.01, R_max=15, seed=1), len(vocab))
    targets = [0.5, 0.7, 0.8, 0.9, 0.95, 0.99]
    rounds = [res.rounds_for(t) for t in targets]
    seen = [r for r in rounds if r is not None]
    assert seen == sorted(seen)
    # once censored, every higher target is censored too
    first_none = next((i for i, r in enumerate(rounds) if r is None), len(rounds))
    assert all(r is None for r in rounds[first_none:])


def test_run_federated_errors(planted_clients):
    vocab, clients = planted_clients
    with pytest.raises(ValidationError):
        run_federated(clients[:3], FedConfig(K=5), len(vocab))
    with pytest.raises(VocabMismatch):
        run_federated(clients, FedConfig(K=5, R_max=1), len(vocab), "aaa", ["aaa", "bbb", "aaa", "aaa", "aaa"])
    empty = [ClientDataset(0, [], [ex([0], 1)])]
    with pytest.raises(ClientTooSmall):
        run_federated(empty, FedConfig(K=1, R_max=1), 3)


def test_all_clients_aggregation_differs_for_partial_participation(planted_clients):
    vocab, clients = planted_clients
    cfg = FedConfig(K=5, C=0.2, R_max=1, seed=2)
    a = run_federated(clients, cfg, len(vocab)).final_model.weights
    b = run_federated(clients, replace(cfg, aggregation="all_clients"), len(vocab)).final_model.weights
    sel = run_federated(clients, cfg, len(vocab)).logs[0].selected_clients
    n_sel = sum(clients[k].n_k for k in sel)
    n_all = sum(c.n_k for c in clients)
    # non-participants hold w_0 = 0, so the update is scaled by their share
    np.testing.assert_allclose(b, a * n_sel / n_all, rtol=1e-12, atol=1e-15)


def test_sweep_vacuous_target(planted_clients):
    vocab, clients = planted_clients
    base = FedConfig(K=5, R_max=10, target_f1=0.0, seed=1)
    rows = rounds_to_target_sweep(clients, base, len(vocab), [(1.0, 10, 1), (0.2, None, 2)], runs=3)
    for r in rows:
        assert r.rounds == [1, 1, 1] and r.censored_runs == 0


def test_sweep_single_point_and_csv(planted_clients):
    vocab, clients = planted_clients
    base = FedConfig(K=5, R_max=30, target_f1=0.85, seed=1)
    (row,) = rounds_to_target_sweep(clients, base, len(vocab), [(0.4, None, 1)], runs=1)
    assert row.mean_rounds == row.min_rounds == row.max_rounds
    text = sweep_csv([row])
    assert text.splitlines()[0] == "C,B,E,mean_rounds,min_rounds,max_rounds,censored_runs"
    assert text.splitlines()[1].startswith("0.4,inf,1,")


def test_sweep_censoring(planted_clients):
    vocab, clients = planted_clients
    base = FedConfig(K=5, R_max=2, target_f1=1.0, eta=1e-4, seed=1)
    (row,) = rounds_to_target_sweep(clients, base, len(vocab), [(1.0, 10, 1)], runs=2)
    assert row.censored_runs == 2 and row.mean_rounds is None
    assert sweep_csv([row]).splitlines()[1] == "1,10,1,,,,2"


def test_sweep_requires_grid_and_target(planted_clients):
    vocab, clients = planted_clients
    with pytest.raises(ValidationError):
        rounds_to_target_sweep(clients, FedConfig(K=5, target_f1=0.9), len(vocab), [])
    with pytest.raises(ValidationError):
        rounds_to_target_sweep(clients, FedConfig(K=5), len(vocab), [(1.0, 10, 1)])


def test_crowdsourcing_curve_endpoints(planted_clients):
    vocab, clients = planted_clients
    clients = sorted(clients, key=lambda c: c.n_k)
    cfg = FedConfig(K=5, B=10, E=1, R_max=3, seed=6)
    pts = crowdsourcing_curve(clients, cfg, len(vocab), runs=2)
    assert [p.k for p in pts] == [1, 2, 3, 4, 5]
    # with every client federated, both evaluation sets coincide
    assert pts[-1].f1_subset == pts[-1].f1_all


def test_crowdsourcing_requires_sorted(planted_clients):
    vocab, clients = planted_clients
    unsorted = sorted(clients, key=lambda c: -c.n_k)
    if [c.n_k for c in unsorted] == sorted(c.n_k for c in unsorted):
        pytest.skip("all clients have equal size")
    with pytest.raises(ValidationError):
        crowdsourcing_curve(unsorted, FedConfig(K=5, R_max=1), len(vocab), runs=1)


def test_crowdsourcing_noise_client_dips():
    # the fourth client holds flipped labels; adding it should hurt F1 on everyone's test
    vocab, examples = planted_examples(n=3000, seed=9, noise=0.0)
    clients = make_clients(examples, SplitSpec(k=5, seed=1))
    clients = sorted(clients, key=lambda c: c.n_k)
    bad = clients[3]
    flipped = [replace(e, label=-e.label) for e in bad.train]
    clients[3] = ClientDataset(bad.client_id, flipped, bad.test)
    cfg = FedConfig(K=5, B=10, E=1, R_max=1, eta=0.1, seed=2)
    pts = crowdsourcing_curve(clients, cfg, len(vocab), runs=3)
    f1_all = [p.f1_all for p in pts]
    assert f1_all[3] < f1_all[2]
