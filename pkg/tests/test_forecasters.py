import numpy as np
import pytest

from latent_atlas import autodiff as ad
from latent_atlas.autodiff import Tensor
from latent_atlas.errors import ConfigError, Diverged, ShapeError, SingularSystem
from latent_atlas.forecasters import (
    TRUE_SYSTEM,
    EchoStateNetwork,
    Forecaster,
    ForecasterCheckpoint,
    ForecasterSpec,
    collect_latents,
    error_report,
    evaluate,
    fit,
    load_checkpoint,
    predict,
    ridge_solve,
    train,
)
from latent_atlas.forecasters.nn import GRUCell, MultiHeadAttention

TOY = dict(L=4, H=3, latent_dim=3, width=5, depth=1, d_model=4, heads=2, reservoir_size=12)


def toy(family, propagator="identity", **kw):
    return ForecasterSpec(family, propagator, **{**TOY, **kw})


def zero_params(model):
    for p in model.parameters().values():
        p.data[...] = 0.0


def windows(rng, n=5, L=4, d=2):
    return rng.normal(size=(n, L, d))


def test_spec_validation():
    with pytest.raises(ConfigError):
        ForecasterSpec("esn", "koopman")
    with pytest.raises(ConfigError):
        ForecasterSpec("cnn")
    with pytest.raises(ConfigError):
        ForecasterSpec("mlp", latent_dim=0)
    assert ForecasterSpec("transformer", "node").label == "N-TF"
    assert ForecasterSpec("a_rnn").label == "A-RNN"
    with pytest.raises(ConfigError):
        ForecasterSpec.from_dict({"family": "mlp", "colour": 1})


def test_zero_mlp_encoder_returns_last_bias():
    m = Forecaster(toy("mlp"), 2)
    zero_params(m)
    m.encoder.net.out.bias.data[:] = [1.0, -2.0, 0.5]
    z = m.encode(windows(np.random.default_rng(0)))
    np.testing.assert_array_equal(z.data, np.tile([1.0, -2.0, 0.5], (5, 1)))


def test_encode_is_deterministic_per_seed():
    x = windows(np.random.default_rng(1))
    a = Forecaster(toy("rnn", seed=3), 2).encode(x).data
    b = Forecaster(toy("rnn", seed=3), 2).encode(x).data
    c = Forecaster(toy("rnn", seed=4), 2).encode(x).data
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_gru_zero_input_zero_state_gives_zero():
    # r = u = sigmoid(0) = 1/2, n = tanh(0 + r * 0) = 0, h' = (1 - u) n + u h = 0
    m = Forecaster(toy("rnn"), 2)
    z = m.encode(np.zeros((3, 4, 2)))
    np.testing.assert_array_equal(z.data, 0.0)


def test_gru_cell_matches_hand_equations():
    rng = np.random.default_rng(2)
    cell = GRUCell(rng, 2, 3)
    for p in (cell.b_x, cell.b_h):
        p.data[:] = rng.normal(size=p.shape)
    x, h = rng.normal(size=(4, 2)), rng.normal(size=(4, 3))
    out = cell(cell.input_part(Tensor(x)), Tensor(h)).data
    sig = lambda v: 1 / (1 + np.exp(-v))
    gx = x @ cell.w_x.data + cell.b_x.data
    gh = h @ cell.w_h.data + cell.b_h.data
    r, u = sig(gx[:, :3] + gh[:, :3]), sig(gx[:, 3:6] + gh[:, 3:6])
    n = np.tanh(gx[:, 6:] + r * gh[:, 6:])
    np.testing.assert_allclose(out, (1 - u) * n + u * h, atol=1e-14)


def test_transformer_encoder_shape_and_shape_error():
    m = Forecaster(toy("transformer"), 2)
    assert m.encode(windows(np.random.default_rng(0))).shape == (5, 3)
    with pytest.raises(ShapeError):
        m.encode(np.zeros((5, 3, 2)))


def test_causal_attention_ignores_future_tokens():
    rng = np.random.default_rng(5)
    att = MultiHeadAttention(rng, 4, 2)
    x = rng.normal(size=(2, 6, 4))
    y = x.copy()
    y[:, 4:] += rng.normal(size=(2, 2, 4))
    a = att(Tensor(x), causal=True).data
    b = att(Tensor(y), causal=True).data
    np.testing.assert_allclose(a[:, :4], b[:, :4], atol=1e-12)
    assert not np.allclose(a[:, 4:], b[:, 4:])


def test_propagators():
    z = np.random.default_rng(0).normal(size=(4, 3))
    ident = Forecaster(toy("mlp"), 2)
    np.testing.assert_array_equal(ident.propagate(z).data, z)

    koop = Forecaster(toy("mlp", "koopman"), 2)
    koop.propagator.K.data = np.eye(3)
    np.testing.assert_array_equal(koop.propagate(z).data, z)
    koop.propagator.steps = 0
    koop.propagator.K.data = np.random.default_rng(1).normal(size=(3, 3))
    np.testing.assert_array_equal(koop.propagate(z).data, z)

    node = Forecaster(toy("mlp", "node"), 2)
    zero_params(node.propagator)
    np.testing.assert_array_equal(node.propagate(z).data, z)


def test_koopman_applies_k_h_times():
    koop = Forecaster(toy("mlp", "koopman", H=3), 2)
    K = koop.propagator.K.data
    z = np.random.default_rng(2).normal(size=(2, 3))
    expected = (np.linalg.matrix_power(K, 3) @ z.T).T
    np.testing.assert_allclose(koop.propagate(z).data, expected, atol=1e-13)


def test_node_step_doubling_is_stable():
    node = Forecaster(ForecasterSpec("mlp", "node", H=50, latent_dim=8, width=16, dt=0.01), 3)
    z = Tensor(np.random.default_rng(0).normal(size=(6, 8)))
    a = node.propagator(z).data
    b = node.propagator(z, n_steps=100).data
    assert np.max(np.abs(a - b)) < 1e-4


def test_zero_head_decodes_to_tiled_bias():
    m = Forecaster(toy("mlp"), 2)
    zero_params(m.decoder)
    m.decoder.net.out.bias.data[:] = np.arange(6.0)
    out = m.decode(np.ones((2, 3))).data
    np.testing.assert_array_equal(out, np.tile(np.arange(6.0).reshape(3, 2), (2, 1, 1)))

    r = Forecaster(toy("rnn"), 2)
    zero_params(r.decoder.head)
    r.decoder.head.bias.data[:] = [4.0, -1.0]
    np.testing.assert_array_equal(r.decode(np.ones((2, 3))).data, np.tile([4.0, -1.0], (2, 3, 1)))


@pytest.mark.parametrize("family", ["mlp", "rnn", "a_rnn", "transformer"])
def test_forward_is_decode_of_encode(family):
    m = Forecaster(toy(family), 2)
    x = windows(np.random.default_rng(0))
    np.testing.assert_array_equal(m(x).data, m.decode(m.propagate(m.encode(x))).data)
    assert m(x).shape == (5, 3, 2)


@pytest.mark.parametrize("family,prop", [
    ("mlp", "identity"), ("mlp", "koopman"), ("mlp", "node"), ("rnn", "identity"),
    ("a_rnn", "identity"), ("transformer", "identity"), ("transformer", "koopman"),
])
def test_grad_check_each_family(family, prop):
    rng = np.random.default_rng(7)
    m = Forecaster(toy(family, prop, H=2), 2)
    for p in m.parameters().values():
        p.data += 0.1 * rng.normal(size=p.shape)
    x, y = windows(rng, n=3), rng.normal(size=(3, 2, 2))
    teacher = y if family == "a_rnn" else None
    err = ad.grad_check_params(lambda: ad.mse(m(x, teacher=teacher), y), m.parameters(), max_coords=6, rng=rng)
    assert err < 1e-5


def test_a_rnn_teacher_forcing_matches_free_run_on_constant_signal(constant_set):
    spec = ForecasterSpec("a_rnn", L=4, H=5, latent_dim=6)
    ck = train(spec, constant_set, epochs_max=40, stride=4, lr=3e-3)
    x = constant_set.splits["test"][:, :4]
    m = ck.model()
    free = m(x).data
    forced = m(x, teacher=np.full((len(x), 5, 3), 0.3)).data
    # both input streams are ~0.3, so the decoded sequences coincide up to the fit error
    assert np.max(np.abs(free - 0.3)) < 1e-2
    assert np.max(np.abs(free - forced)) < 1e-3


def test_train_constant_dataset_reaches_tiny_val_mse(constant_set):
    ck = train(ForecasterSpec("mlp", L=5, H=5, latent_dim=4, width=8), constant_set, epochs_max=50)
    assert ck.val_mse < 1e-6


def test_train_is_deterministic_and_patience_zero(small_hopf):
    spec = ForecasterSpec("mlp", L=10, H=5, latent_dim=4, width=8)
    a = train(spec, small_hopf, epochs_max=4, stride=3)
    b = train(spec, small_hopf, epochs_max=4, stride=3)
    assert a.train_log == b.train_log
    assert [e["lr"] for e in a.train_log] == pytest.approx([1e-3 * 0.95 ** i for i in range(4)])

    log = train(spec, small_hopf, epochs_max=30, patience=0, stride=3).train_log
    vals = [e["val_mse"] for e in log]
    # stops right after the first epoch that fails to improve on the best so far
    assert len(log) == 30 or vals[-1] >= min(vals[:-1])
    assert all(vals[i] < min(vals[:i]) for i in range(1, len(vals) - 1))


def test_fit_raises_diverged_on_nan_loss():
    w = Tensor(np.ones(2), requires_grad=True)
    with pytest.raises(Diverged):
        fit({"w": w}, lambda rows: ad.mul(ad.sum(w), float("nan")), lambda: 0.0, 4, seed=0, epochs_max=2)


def test_checkpoint_round_trip_is_bit_exact(small_hopf, tmp_path):
    ck = train(ForecasterSpec("rnn", L=10, H=5, latent_dim=4), small_hopf, epochs_max=2, stride=4)
    ck.save(tmp_path / "c.npz")
    back = load_checkpoint(tmp_path / "c.npz")
    assert isinstance(back, ForecasterCheckpoint)
    assert evaluate(back, small_hopf, "val").mse == ck.val_mse
    assert evaluate(back, small_hopf).to_dict() == evaluate(ck, small_hopf).to_dict()
    assert back.train_log == ck.train_log and back.spec == ck.spec


def test_error_report_oracles():
    t = np.random.default_rng(0).normal(size=(7, 4, 2))
    zero = error_report(t, t)
    assert (zero.mse, zero.rmse, zero.mae) == (0.0, 0.0, 0.0)
    one = error_report(t + 1.0, t)
    assert one.mse == pytest.approx(1.0) and one.rmse == pytest.approx(1.0) and one.mae == pytest.approx(1.0)
    rnd = error_report(t + np.random.default_rng(1).normal(size=t.shape), t)
    assert 0 <= rnd.mae <= rnd.rmse


def test_collect_latents_contract(small_hopf):
    ck = train(ForecasterSpec("mlp", L=10, H=5, latent_dim=4, width=8), small_hopf, epochs_max=1)
    idx = np.array([[0, 3], [2, 10], [1, 0]])
    lm = collect_latents(ck, small_hopf, idx)
    one = collect_latents(ck, small_hopf, idx[:1])
    assert one.Z.shape == (1, 4)
    perm = collect_latents(ck, small_hopf, idx[[2, 0, 1]])
    np.testing.assert_array_equal(perm.Z, lm.Z[[2, 0, 1]])
    ref = collect_latents(TRUE_SYSTEM, small_hopf, idx, L=10, H=5)
    np.testing.assert_array_equal(ref.Z[1], small_hopf.splits["test"][2, 10:20].reshape(-1))
    with pytest.raises(IndexError):
        collect_latents(ck, small_hopf, [[0, 70]])


def test_esn_trivial_reservoir_stays_zero():
    esn = EchoStateNetwork(ForecasterSpec("esn", reservoir_size=1, L=5, H=2), 1)
    esn.W = np.zeros((1, 1))
    esn.U = np.ones((1, 1))
    np.testing.assert_array_equal(esn.run(np.zeros((2, 5, 1))), 0.0)


def test_esn_spectral_radius_and_contraction():
    esn = EchoStateNetwork(ForecasterSpec("esn", reservoir_size=50, spectral_radius=0.8), 3)
    assert np.max(np.abs(np.linalg.eigvals(esn.W))) == pytest.approx(0.8)
    r = np.random.default_rng(0).uniform(-1, 1, size=(4, 50))
    for _ in range(300):
        r = np.tanh(r @ esn.W.T)
    assert np.max(np.abs(r)) < 1e-6


def test_esn_ridge_residual_and_limits(small_hopf):
    spec = ForecasterSpec("esn", L=10, H=5, reservoir_size=30, ridge_lambda=1e-3)
    ck = train(spec, small_hopf)
    esn = ck.model()
    from latent_atlas.dynsys import split_windows

    w = split_windows(small_hopf.splits["train"], 10, 5)
    G, Y = esn.fit_readout(w.inputs, w.targets, 1e-3)
    A = G.T @ G + 1e-3 * np.eye(G.shape[1])
    resid = A @ esn.W_out - G.T @ Y
    assert np.linalg.norm(resid) / np.linalg.norm(G.T @ Y) < 1e-8

    esn.fit_readout(w.inputs, w.targets, 1e12)
    assert np.max(np.abs(predict(esn, w.inputs[:5]))) < 1e-6


def test_ridge_singular_at_zero_lambda():
    G = np.ones((6, 3))
    with pytest.raises(SingularSystem):
        ridge_solve(G, np.ones((6, 1)), 0.0)
    assert ridge_solve(G, np.ones((6, 1)), 1e-6).shape == (3, 1)
