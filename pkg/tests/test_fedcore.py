import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partition_oracle import partition as oracle_partition
from qfedfisher import oracles, qsim
from qfedfisher.fedcore import (
    Adam,
    ClientRecord,
    ClientUpdate,
    GlobalModel,
    InsufficientDataError,
    RoundConfig,
    aggregate_fedadam,
    aggregate_fedavg,
    aggregate_fedfisher,
    client_retention,
    client_weights,
    dirichlet_partition,
    evaluate,
    local_train,
    run_round,
    sample_clients,
)
from qfedfisher.qsim import CircuitLayout
from qfedfisher.vqc import Task

# partitioning ---------------------------------------------------------------

ALPHA_01_GOLDEN = [
    [0, 99, 1, 0], [0, 100, 0, 0], [0, 13, 86, 1], [0, 88, 12, 0], [100, 0, 0, 0],
    [0, 0, 1, 99], [0, 0, 0, 100], [100, 0, 0, 0], [0, 0, 0, 100], [7, 0, 93, 0],
]


def test_single_client_gets_exact_quota():
    labels = np.repeat(np.arange(3), 50)
    (part,) = dirichlet_partition(labels, 1, 0.5, 40, seed=1)
    assert part.size == 40 and np.unique(part).size == 40


def test_alpha_01_matches_golden_and_oracle():
    labels = np.repeat(np.arange(4), 300)
    parts = dirichlet_partition(labels, 10, 0.1, 100, seed=12345)
    hist = [np.bincount(labels[p], minlength=4).tolist() for p in parts]
    assert hist == ALPHA_01_GOLDEN
    ref = oracle_partition(labels.tolist(), 10, 0.1, 100, 12345)
    assert [p.tolist() for p in parts] == ref


@pytest.mark.parametrize("seed", range(5))
def test_matches_oracle_on_uneven_pools(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 5, size=700)
    parts = dirichlet_partition(labels, 6, 0.3, 110, seed=seed)
    assert [p.tolist() for p in parts] == oracle_partition(labels.tolist(), 6, 0.3, 110, seed)


def test_near_uniform_limit():
    labels = np.repeat(np.arange(4), 2000)
    worst = 0.0
    for seed in range(10):
        for p in dirichlet_partition(labels, 10, 1e6, 100, seed=seed):
            share = np.bincount(labels[p], minlength=4) / 100
            worst = max(worst, np.abs(share - 0.25).max())
    assert worst <= 0.05


def test_insufficient_data():
    with pytest.raises(InsufficientDataError):
        dirichlet_partition(np.zeros(10, dtype=int), 3, 1.0, 4, seed=0)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n_clients=st.integers(1, 8),
    quota=st.integers(1, 30),
    alpha=st.sampled_from([0.05, 0.1, 0.5, 1.0, 100.0]),
)
def test_partitions_disjoint_with_exact_quota(seed, n_clients, quota, alpha):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 4, size=n_clients * quota + int(rng.integers(0, 50)))
    parts = dirichlet_partition(labels, n_clients, alpha, quota, seed)
    assert all(p.size == quota for p in parts)
    flat = np.concatenate(parts)
    assert flat.size == n_clients * quota
    assert np.unique(flat).size == flat.size


def test_sample_clients():
    np.testing.assert_array_equal(sample_clients(10, 1.0, 3, seed=0), np.arange(10))
    ids = sample_clients(100, 0.05, 1, seed=7)
    assert ids.size == 5 and np.unique(ids).size == 5
    np.testing.assert_array_equal(ids, sample_clients(100, 0.05, 1, seed=7))
    assert sample_clients(20, 0.25, 1, seed=7).size == 5
    assert sample_clients(3, 0.01, 1, seed=7).size == 1
    draws = {tuple(sample_clients(100, 0.05, r, seed=7)) for r in range(1, 20)}
    assert len(draws) > 1


# Adam -----------------------------------------------------------------------

def test_adam_first_step_is_signed_lr():
    g = np.array([3.0, -0.2, 1e-3])
    x = Adam(lr=0.01).step(np.zeros(3), g)
    np.testing.assert_allclose(x, -0.01 * np.sign(g), rtol=1e-4)


def test_adam_matches_hand_stepped_recursion():
    rng = np.random.default_rng(0)
    grads = rng.normal(size=(6, 4))
    opt = Adam(lr=0.05)
    x = np.ones(4)
    ref = oracles.adam_sequence(np.ones(4), grads.tolist(), 0.05)
    for g, expected in zip(grads, ref):
        x = opt.step(x, g)
        np.testing.assert_allclose(x, expected, atol=1e-12, rtol=0)


# aggregation ----------------------------------------------------------------

def upd(cid, params, n=1, fisher=None):
    return ClientUpdate(cid, np.asarray(params, float), n, None if fisher is None else np.asarray(fisher, float))


def test_fedavg_examples():
    np.testing.assert_array_equal(aggregate_fedavg([upd(0, [1.5, -2.0])]), [1.5, -2.0])
    np.testing.assert_array_equal(aggregate_fedavg([upd(0, [0.0]), upd(1, [2.0])]), [1.0])
    np.testing.assert_array_equal(aggregate_fedavg([upd(0, [0.0], 100), upd(1, [4.0], 300)]), [3.0])
    with pytest.raises(ValueError):
        aggregate_fedavg([])


def test_client_weights_sum_to_one():
    w = client_weights([upd(i, [0.0], n) for i, n in enumerate([3, 17, 500, 1])])
    assert abs(w.sum() - 1) < 1e-12


def test_fedadam_examples():
    model = GlobalModel(np.array([0.5, -1.0]))
    out = aggregate_fedadam([upd(0, [0.5, -1.0])], model, server_lr=0.01)
    np.testing.assert_array_equal(out, [0.5, -1.0])

    model = GlobalModel(np.zeros(3))
    avg = np.array([1.0, -2.0, 0.5])
    out = aggregate_fedadam([upd(0, avg)], model, server_lr=0.01)
    # delta = global - avg; first Adam step moves by -lr * sign(delta)
    np.testing.assert_allclose(out, -0.01 * np.sign(-avg), rtol=1e-6)


def test_fedadam_three_rounds_match_hand_stepped_oracle():
    rng = np.random.default_rng(3)
    model = GlobalModel(rng.normal(size=4))
    x0 = model.params.tolist()
    averages = []
    for r in range(3):
        clients = [upd(i, rng.normal(size=4), int(rng.integers(1, 50))) for i in range(3)]
        averages.append(aggregate_fedavg(clients).tolist())
        model = GlobalModel(aggregate_fedadam(clients, model, server_lr=0.02), r + 1, model.adam)
    # hand recursion with persistent moments; pseudo-gradient = x_{t-1} - avg_t
    x, m, v = list(x0), [0.0] * 4, [0.0] * 4
    for t, avg in enumerate(averages, start=1):
        for j in range(4):
            g = x[j] - avg[j]
            m[j] = 0.9 * m[j] + 0.1 * g
            v[j] = 0.999 * v[j] + 0.001 * g * g
            x[j] -= 0.02 * (m[j] / (1 - 0.9**t)) / ((v[j] / (1 - 0.999**t)) ** 0.5 + 1e-8)
    np.testing.assert_allclose(model.params, x, atol=1e-12, rtol=0)


def test_fedfisher_examples():
    theta, sub = aggregate_fedfisher([upd(0, [0.0], 1, [1.0]), upd(1, [2.0], 1, [1.0])], 0.01)
    np.testing.assert_array_equal(theta, [1.0])
    assert sub.size == 0

    clients = [upd(0, [0.0, 1.0], 10, [0.002, 0.9]), upd(1, [4.0, 3.0], 30, [0.003, 0.1])]
    theta, sub = aggregate_fedfisher(clients, 0.01)
    avg = aggregate_fedavg(clients)
    assert sub.tolist() == [0]
    assert theta[0] == avg[0]
    assert theta[1] == pytest.approx((0.9 * 1 + 0.1 * 3) / 1.0, abs=1e-15)


def test_fedfisher_all_zero_fisher_with_zero_threshold_falls_back():
    clients = [upd(0, [1.0], 1, [0.0]), upd(1, [3.0], 1, [0.0])]
    theta, sub = aggregate_fedfisher(clients, 0.0)
    assert theta.tolist() == [2.0] and sub.tolist() == [0]


def test_fedfisher_errors():
    with pytest.raises(ValueError):
        aggregate_fedfisher([], 0.01)
    with pytest.raises(ValueError):
        aggregate_fedfisher([upd(0, [1.0, 2.0], 1, [1.0])], 0.01)
    with pytest.raises(ValueError):
        aggregate_fedfisher([upd(0, [1.0])], 0.01)


def test_fedfisher_mixed_instance_matches_oracle():
    rng = np.random.default_rng(42)
    thetas = rng.normal(size=(3, 6))
    fishers = rng.uniform(size=(3, 6)) * np.array([[1, 1, 0, 1, 0, 0.001]] * 3)
    sizes = [50, 120, 30]
    updates = [upd(i, thetas[i], sizes[i], fishers[i]) for i in range(3)]
    got, sub = aggregate_fedfisher(updates, 0.01)
    ref, ref_sub = oracles.fedfisher(thetas.tolist(), fishers.tolist(), sizes, 0.01)
    assert np.abs(got - ref).max() < 1e-12
    assert sub.tolist() == ref_sub
    assert ref_sub  # the instance exercises the substitution branch


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), delta=st.sampled_from([0.0, 0.01, 0.3, 1.5]))
def test_substitution_exactness_and_order_invariance(seed, delta):
    rng = np.random.default_rng(seed)
    c, p = int(rng.integers(1, 6)), int(rng.integers(1, 21))
    thetas = rng.normal(size=(c, p))
    fishers = rng.uniform(size=(c, p)) * (rng.uniform(size=(c, p)) < 0.6)
    sizes = rng.integers(1, 100, size=c)
    updates = [upd(i, thetas[i], int(sizes[i]), fishers[i]) for i in range(c)]
    theta, sub = aggregate_fedfisher(updates, delta)
    avg = aggregate_fedavg(updates)
    f_s = fishers.sum(0)
    g_s = (fishers * thetas).sum(0)
    in_sub = np.zeros(p, bool)
    in_sub[sub] = True
    assert (theta[in_sub] == avg[in_sub]).all()
    assert (np.abs(theta[~in_sub] * f_s[~in_sub] - g_s[~in_sub]) < 1e-12).all()
    shuffled = [updates[i] for i in rng.permutation(c)]
    theta2, sub2 = aggregate_fedfisher(shuffled, delta)
    np.testing.assert_array_equal(theta, theta2)
    np.testing.assert_array_equal(sub, sub2)
    np.testing.assert_array_equal(avg, aggregate_fedavg(shuffled))


def test_retention_examples():
    np.testing.assert_array_equal(client_retention([1, 2], [0.5, 0.2], [9, 9], 0.01), [1, 2])
    np.testing.assert_array_equal(client_retention([1, 2], [0.0, 0.001], [9, 8], 0.01), [9, 8])
    np.testing.assert_array_equal(client_retention([1, 1], [0.5, 0.001], [9, 9], 0.01), [1, 9])
    with pytest.raises(ValueError):
        client_retention([1, 1], [0.5], [9, 9], 0.01)


# local training and rounds ----------------------------------------------------

def toy_client(cid=0, n=40, seed=0, n_qubits=2):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n)
    # class 1 leans toward the last qubit being |1>
    dim = 2**n_qubits
    feats = rng.uniform(0.1, 1.0, size=(n, dim))
    feats[labels == 1, dim // 2 :] *= 4
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    return ClientRecord(cid, feats, labels)


def test_local_train_zero_gradients_leave_params():
    layout = CircuitLayout(2, 1)
    states = np.tile(qsim.amplitude_encode([0, 0, 1, 0]).amplitudes, (5, 1))
    client = ClientRecord(0, states, np.ones(5, dtype=int))
    res = local_train(client, np.zeros(4), layout, Task.make_binary(), epochs=2, batch_size=2, lr=0.1, seed=1)
    np.testing.assert_array_equal(res.params, np.zeros(4))


def test_local_train_loss_decreases():
    layout = CircuitLayout(2, 2)
    task = Task.make_binary()
    good = 0
    for seed in range(5):
        client = toy_client(seed=seed)
        start = np.random.default_rng(100 + seed).normal(0, 1, layout.n_params)
        res = local_train(client, start, layout, task, epochs=6, batch_size=8, lr=0.05, seed=seed)
        drops = np.diff(res.epoch_losses) < 0
        good += drops.sum() >= 4
    assert good == 5


def test_local_train_returns_normalized_fisher():
    layout = CircuitLayout(2, 3)
    res = local_train(toy_client(), np.full(layout.n_params, 0.3), layout, Task.make_binary(), lr=0.01, seed=0)
    assert ((res.fisher >= 0) & (res.fisher <= 1)).all()
    assert res.train_loss > 0 and len(res.epoch_losses) == 1


def test_local_train_empty_partition():
    client = ClientRecord(0, np.zeros((0, 4)), np.zeros(0, dtype=int))
    with pytest.raises(ValueError):
        local_train(client, np.zeros(4), CircuitLayout(2, 1), Task.make_binary())


def test_evaluate_perfect_predictions():
    layout = CircuitLayout(2, 1)
    states = np.array([qsim.amplitude_encode(v).amplitudes for v in ([1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 1, 0])])
    # label 0 <-> last qubit |0>; third state: q1 = 1 half the time... keep the first two only
    ev = evaluate(np.zeros(4), layout, Task.make_binary(), states[:2], [0, 1])
    assert ev.accuracy == 1.0
    np.testing.assert_array_equal(ev.confusion, [[1, 0], [0, 1]])
    with pytest.raises(ValueError):
        evaluate(np.zeros(4), layout, Task.make_binary(), states[:0], [])


def test_untrained_multiclass_is_near_chance():
    rng = np.random.default_rng(0)
    layout = CircuitLayout(4, 3)
    task = Task.multiclass(4)
    labels = np.repeat(np.arange(4), 100)
    accs = []
    for seed in range(5):
        r = np.random.default_rng(seed)
        states = np.array([qsim.amplitude_encode(r.normal(size=16)).amplitudes for _ in labels])
        params = rng.normal(0, 1, layout.n_params)
        ev = evaluate(params, layout, task, states, labels)
        assert ev.confusion.sum() == labels.size
        accs.append(ev.accuracy)
    assert abs(np.mean(accs) - 0.25) < 0.05


def _federation(n_clients=3, seed=0):
    clients = [toy_client(i, n=24, seed=seed + i) for i in range(n_clients)]
    test = toy_client(99, n=30, seed=seed + 50)
    return clients, test


def _run(strategy, rounds=2, threads=None, n_clients=3, retention=True, delta=0.01):
    from concurrent.futures import ThreadPoolExecutor

    layout = CircuitLayout(2, 2)
    task = Task.make_binary()
    clients, test = _federation(n_clients)
    cfg = RoundConfig(n_clients=n_clients, participation=1.0, local_lr=0.05, batch_size=8, strategy=strategy,
                      seed=5, client_retention=retention, fisher_threshold=delta, record_timing=False)
    model = GlobalModel(np.random.default_rng(0).normal(size=layout.n_params))
    reports = []
    ex = ThreadPoolExecutor(threads) if threads else None
    for _ in range(rounds):
        model, rep, _ = run_round(model, clients, cfg, layout=layout, task=task,
                                  test_states=test.states, test_labels=test.labels, executor=ex)
        reports.append(rep)
    if ex:
        ex.shutdown()
    return model, reports, clients


def test_single_client_fedavg_round_returns_client_params():
    model, reports, clients = _run("fedavg", rounds=1, n_clients=1)
    np.testing.assert_array_equal(model.params, clients[0].params)
    assert model.round == 1 and reports[0].round == 1


def test_single_client_fedfisher_round_returns_client_params():
    model, _, clients = _run("fedfisher", rounds=1, n_clients=1, delta=0.0)
    kept = clients[0].fisher > 1e-12
    np.testing.assert_allclose(model.params[kept], clients[0].params[kept], rtol=0, atol=1e-15)
    np.testing.assert_array_equal(model.params[~kept], clients[0].params[~kept])


def test_fedfisher_zero_threshold_positive_fisher_no_substitution():
    layout = CircuitLayout(2, 1)
    updates = [upd(i, np.random.default_rng(i).normal(size=4), 10, np.full(4, 0.3)) for i in range(3)]
    _, sub = aggregate_fedfisher(updates, 0.0)
    assert sub.size == 0


@pytest.mark.parametrize("strategy", ["fedavg", "fedadam", "fedfisher"])
def test_rounds_are_deterministic_and_thread_invariant(strategy):
    m1, r1, _ = _run(strategy)
    m2, r2, _ = _run(strategy)
    m3, r3, _ = _run(strategy, threads=3)
    assert r1 == r2 == r3
    np.testing.assert_array_equal(m1.params, m2.params)
    np.testing.assert_array_equal(m1.params, m3.params)


def test_round_counter_and_adam_state_persist():
    model, reports, _ = _run("fedadam", rounds=3)
    assert [r.round for r in reports] == [1, 2, 3]
    assert model.adam is not None and model.adam.t == 3


def test_round_config_validation():
    with pytest.raises(ValueError):
        RoundConfig(strategy="fedprox")
    with pytest.raises(ValueError):
        RoundConfig(participation=0.0)
    with pytest.raises(ValueError):
        RoundConfig(fisher_threshold=-1)
    with pytest.raises(ValueError):
        RoundConfig(dirichlet_alpha=0)


def test_retention_changes_round_two_start_only_when_enabled():
    # round 1 is identical; from round 2 retained clients start off-global
    on, r_on, _ = _run("fedfisher", rounds=2, retention=True, delta=0.0)
    off, r_off, _ = _run("fedfisher", rounds=2, retention=False, delta=0.0)
    assert r_on[0] == r_off[0]
    assert not np.array_equal(on.params, off.params)
    # a threshold above every normalized Fisher value substitutes everything
    big_on, _, _ = _run("fedfisher", rounds=2, retention=True, delta=2.0)
    big_off, _, _ = _run("fedfisher", rounds=2, retention=False, delta=2.0)
    np.testing.assert_array_equal(big_on.params, big_off.params)
    # other strategies ignore the flag
    a, _, _ = _run("fedavg", rounds=2, retention=True)
    b, _, _ = _run("fedavg", rounds=2, retention=False)
    np.testing.assert_array_equal(a.params, b.params)


def test_retention_is_off_by_default():
    assert RoundConfig().client_retention is False
