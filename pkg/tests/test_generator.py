import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from inkrnn import generator as G
from inkrnn import ink, optim
from inkrnn import numcore as nc
from inkrnn.errors import InvalidConfig, TokenError
from inkrnn.generator import GenConfig, GeneratorModel, MixtureParams

MINI = GenConfig(n_classes=3, embed_dim=4, transform_dim=3, hidden_dim=6, output_dim=5, n_mixtures=2)


def mini(seed=0, std=0.5, **kw):
    cfg = GenConfig(**{**MINI.to_dict(), **kw})
    return GeneratorModel.init(cfg, np.random.default_rng(seed), std=std)


def random_tokens(rng, k):
    t = np.zeros((k, 5))
    t[:-1, :2] = rng.normal(0, 0.5, (k - 1, 2))
    pens = rng.choice(2, size=k - 1, p=[0.8, 0.2])
    t[np.arange(k - 1), 2 + pens] = 1
    t[-1, 4] = 1
    return t


def fixed_head_model(M=1, pi=None, mu=(0.0, 0.0), log_sigma=(0.0, 0.0), pen=(0.0, 0.0, 0.0), **kw):
    """All weights zero, so o_t = 0 and both heads emit their biases."""
    m = GeneratorModel.init(GenConfig(n_classes=2, embed_dim=2, transform_dim=2, hidden_dim=3, output_dim=2, n_mixtures=M, **kw), np.random.default_rng(0))
    for k in m.params:
        m.params[k][...] = 0.0
    b = np.zeros(5 * M)
    b[:M] = 0.0 if pi is None else pi
    b[M : 2 * M], b[2 * M : 3 * M] = mu
    b[3 * M : 4 * M], b[4 * M :] = log_sigma
    m.params["b_gmm"][:] = b
    m.params["b_softmax"][:] = pen
    return m


# --- config -----------------------------------------------------------------


def test_full_scale_preset():
    cfg = G.preset("gen-paper", 3755)
    assert (cfg.embed_dim, cfg.transform_dim, cfg.hidden_dim, cfg.output_dim, cfg.n_mixtures) == (500, 300, 1000, 300, 30)
    assert cfg.dropout == 0.3 and cfg.loss_weights == (1.0, 5.0, 100.0) and cfg.max_len == 200


def test_desk_preset():
    cfg = G.preset("desk-gen", 10)
    assert (cfg.embed_dim, cfg.transform_dim, cfg.hidden_dim, cfg.output_dim, cfg.n_mixtures) == (32, 32, 128, 64, 5)


@pytest.mark.parametrize("kw", [dict(hidden_dim=0), dict(loss_weights=(1, 0, 1)), dict(loss_weights=(1, 1)), dict(dropout=1.0)])
def test_invalid_config(kw):
    with pytest.raises(InvalidConfig):
        GenConfig(**kw)


def test_config_dict_round_trip():
    cfg = G.preset("desk-gen", 7, n_mixtures=3)
    assert GenConfig.from_dict(cfg.to_dict()) == cfg


def test_init_shapes_and_biases():
    m = mini()
    assert m.params["E"].shape == (4, 3)
    assert m.params["W_gmm"].shape == (10, 5)
    assert all(np.all(v == 0) for k, v in m.params.items() if k.startswith("b"))


# --- single step ------------------------------------------------------------


def test_zero_step():
    m = mini()
    p = {k: np.zeros_like(v) for k, v in m.params.items()}
    h, o, _ = G.gen_step(p, np.zeros(6), np.ones(2), np.array([1.0, 0, 0]), np.ones(4))
    assert np.all(h.value == 0) and np.all(o.value == 0)


def test_scalar_oracle():
    rng = np.random.default_rng(4)
    cfg = GenConfig(n_classes=2, embed_dim=1, transform_dim=1, hidden_dim=1, output_dim=1, n_mixtures=1)
    m = GeneratorModel.init(cfg, rng, std=1.0)
    p = {k: v + rng.normal(size=v.shape) for k, v in m.params.items()}
    q = {k: v.reshape(-1) for k, v in p.items()}
    h0, c = 0.3, float(q["E"][1])
    d, s = np.array([0.4, -0.7]), np.array([0.0, 1.0, 0.0])

    def sig(v):
        return 1 / (1 + math.exp(-v))

    dp = math.tanh(q["W_d"] @ d + q["b_d"][0])
    sp = math.tanh(q["W_s"] @ s + q["b_s"][0])

    def pre(g, h):
        return q[f"W{g}"][0] * h + q[f"U{g}"][0] * dp + q[f"V{g}"][0] * sp + q[f"M{g}"][0] * c + q[f"b{g}"][0]

    r = sig(pre("_r", h0))
    z = sig(pre("_z", h0))
    ht = math.tanh(pre("", r * h0))
    h1 = z * h0 + (1 - z) * ht
    o1 = math.tanh(pre("_o", h1))
    h, o, trace = G.gen_step(p, np.array([h0]), d, s, p["E"][:, 1])
    assert abs(h.value.item() - h1) < 1e-12
    assert abs(o.value.item() - o1) < 1e-12
    assert abs(trace.r.value.item() - r) < 1e-12


def test_embedding_conditions_output():
    m = mini()
    args = (np.zeros(6), np.array([0.1, 0.2]), np.array([1.0, 0, 0]))
    _, o0, _ = G.gen_step(m.params, *args, m.params["E"][:, 0])
    _, o1, _ = G.gen_step(m.params, *args, m.params["E"][:, 1])
    assert not np.allclose(o0.value, o1.value)


def test_step_dropout_only_in_train_mode():
    m = mini()
    args = (m.params, np.zeros(6), np.array([0.1, 0.2]), np.array([1.0, 0, 0]), m.params["E"][:, 0])
    _, a, _ = G.gen_step(*args)
    _, b, _ = G.gen_step(*args, mode="eval", rng=np.random.default_rng(0), dropout=0.5)
    _, c, _ = G.gen_step(*args, mode="train", rng=np.random.default_rng(0), dropout=0.5)
    np.testing.assert_array_equal(a.value, b.value)
    assert np.any(c.value == 0)


def test_fused_unroll_matches_literal_steps(rng):
    m = mini()
    toks = [random_tokens(rng, 5), random_tokens(rng, 3)]
    inputs, _, _ = G._teacher_batch(toks)
    o_fused = G._unroll(m.config, m.params, inputs, np.array([2, 0]), False, None).value
    for b, cls in enumerate([2, 0]):
        h = np.zeros(6)
        for t in range(len(toks[b])):
            h, o, _ = G.gen_step(m.params, h, inputs[b, t, :2], inputs[b, t, 2:], m.params["E"][:, cls])
            h = h.value
            np.testing.assert_allclose(o.value, o_fused[b, t], atol=1e-12)


# --- heads and mixture ------------------------------------------------------


def test_zero_heads():
    m = mini()
    p = {k: np.zeros_like(v) for k, v in m.params.items()}
    mix = G.gmm_head(np.zeros(5), p)
    np.testing.assert_allclose(mix.pi, [0.5, 0.5])
    assert np.all(mix.mu_x == 0) and np.all(mix.sigma_y == 1)
    np.testing.assert_allclose(G.pen_head(np.zeros(5), p), [1 / 3] * 3, atol=1e-15)


def test_head_bias_values():
    m = fixed_head_model(log_sigma=(np.log(2.0), 0.0), pen=(0.0, 0.0, 5.0))
    mix = G.gmm_head(np.zeros(2), m.params)
    assert mix.sigma_x[0] == pytest.approx(2.0, abs=1e-12)
    # e^5 / (e^5 + 2)
    assert G.pen_head(np.zeros(2), m.params)[2] == pytest.approx(math.exp(5) / (math.exp(5) + 2), abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_head_invariants(seed):
    r = np.random.default_rng(seed)
    m = mini(seed % 5, std=3.0)
    o = r.normal(0, 5, (4, 5))
    mix = G.gmm_head(o, m.params)
    assert np.all(np.abs(mix.pi.sum(axis=-1) - 1) < 1e-12) and np.all(mix.pi > 0)
    assert np.all(mix.sigma_x > 0) and np.all(mix.sigma_y > 0)
    pen = G.pen_head(o, m.params)
    assert np.all(np.abs(pen.sum(axis=-1) - 1) < 1e-12)


def unit_mixture():
    one = np.ones(1)
    return MixtureParams(one, 0 * one, 0 * one, one, one)


def test_density_at_origin():
    assert abs(G.gmm_density(unit_mixture(), 0.0, 0.0) - 1 / (2 * np.pi)) < 1e-9


def random_mixture(r, M):
    pi = r.dirichlet(np.ones(M))
    return MixtureParams(pi, r.uniform(-3, 3, M), r.uniform(-3, 3, M), r.uniform(0.3, 2, M), r.uniform(0.3, 2, M))


@given(st.integers(0, 2**32 - 1), st.integers(1, 5))
def test_density_properties(seed, M):
    r = np.random.default_rng(seed)
    mix = random_mixture(r, M)
    pts = r.uniform(-6, 6, (20, 2))
    dens = G.gmm_density(mix, pts[:, 0], pts[:, 1])
    assert np.all(dens > 0)
    np.testing.assert_allclose(np.log(dens), G.gmm_log_density(mix, pts[:, 0], pts[:, 1]), atol=1e-9)
    comps = [G.gmm_density(MixtureParams(np.ones(1), mix.mu_x[[j]], mix.mu_y[[j]], mix.sigma_x[[j]], mix.sigma_y[[j]]), pts[:, 0], pts[:, 1]) for j in range(M)]
    np.testing.assert_allclose(dens, sum(w * c for w, c in zip(mix.pi, comps)), rtol=1e-12)


def test_density_integrates_to_one():
    r = np.random.default_rng(0)
    g = np.linspace(-10, 10, 801)
    X, Y = np.meshgrid(g, g)
    step = g[1] - g[0]
    for _ in range(10):
        mix = random_mixture(r, int(r.integers(1, 6)))
        assert abs(G.gmm_density(mix, X, Y).sum() * step**2 - 1) < 1e-2


def test_log_density_far_tail_is_finite():
    assert np.isfinite(G.gmm_log_density(unit_mixture(), 100.0, 0.0))


def test_sample_mean_matches_mixture_mean():
    r = np.random.default_rng(1)
    mix = random_mixture(r, 3)
    draws = G.gmm_sample(mix, r, size=100_000)
    mean = np.array([mix.pi @ mix.mu_x, mix.pi @ mix.mu_y])
    se = draws.std(axis=0) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - mean) < 3 * se)


# --- loss -------------------------------------------------------------------


def test_unit_weights_equal_plain_cross_entropy(rng):
    m = mini(loss_weights=(1.0, 1.0, 1.0))
    for _ in range(20):
        t = random_tokens(rng, int(rng.integers(2, 9)))
        c = int(rng.integers(3))
        assert abs(G.gen_loss(m, t, c, weighted=True) - G.gen_loss(m, t, c, weighted=False)) < 1e-12


def _normal(x, mu, s):
    return math.exp(-0.5 * ((x - mu) / s) ** 2) / (s * math.sqrt(2 * math.pi))


@pytest.mark.parametrize("terminal", [False, True])
def test_two_token_hand_computation(terminal):
    mu, ls, pen = (0.2, -0.1), (math.log(0.5), math.log(1.5)), (0.3, -0.4, 0.1)
    m = fixed_head_model(mu=mu, log_sigma=ls, pen=pen, terminal_direction=terminal)
    tokens = np.array([[0.7, -0.3, 1, 0, 0], [0, 0, 0, 0, 1]], dtype=float)
    e = [math.exp(v) for v in pen]
    p = [v / sum(e) for v in e]
    sx, sy = 0.5, 1.5
    expect = -(math.log(_normal(0.7, 0.2, sx) * _normal(-0.3, -0.1, sy)) + 1 * math.log(p[0]))
    expect -= 100 * math.log(p[2])
    if terminal:
        expect -= math.log(_normal(0.0, 0.2, sx) * _normal(0.0, -0.1, sy))
    assert abs(G.gen_loss(m, tokens, 1) - expect) < 1e-9


def test_loss_sums_over_characters_and_averages_over_batch(rng):
    m = mini()
    a, b = random_tokens(rng, 4), random_tokens(rng, 6)
    la, lb = G.gen_loss(m, a, 0), G.gen_loss(m, b, 2)
    loss, _, _ = G.loss_and_grad(m, [(a, 0), (b, 2)], mode="eval")
    assert loss == pytest.approx((la + lb) / 2, abs=1e-12)


@pytest.mark.parametrize("mode", ["eval", "train"])
def test_gradient_matches_finite_differences(mode, rng):
    m = mini(std=0.5)
    tokens = random_tokens(rng, 3)

    def f(q):
        return G.gen_loss(m, tokens, 1, mode, np.random.default_rng(9), params=q)

    _, g, _ = G.loss_and_grad(m, [(tokens, 1)], np.random.default_rng(9), mode)
    fd = nc.finite_difference(f, m.params)
    for k in m.params:
        assert nc.relative_error(g[k], fd[k]).max() < 1e-4, k
    assert np.any(g["E"][:, 1] != 0)
    assert np.all(g["E"][:, [0, 2]] == 0)


@pytest.mark.parametrize(
    "tokens",
    [
        np.zeros((0, 5)),
        np.array([[0, 0, 1, 0, 0]], dtype=float),
        np.array([[0, 0, 0, 0, 1], [0, 0, 0, 0, 1]], dtype=float),
        np.array([[0, 0, 0.5, 0.5, 0], [0, 0, 0, 0, 1]], dtype=float),
        np.array([[np.nan, 0, 1, 0, 0], [0, 0, 0, 0, 1]], dtype=float),
        np.zeros((2, 4)),
    ],
)
def test_malformed_tokens(tokens):
    with pytest.raises(TokenError):
        G.gen_loss(mini(), tokens, 0)


def test_bad_class_id(rng):
    with pytest.raises(InvalidConfig):
        G.gen_loss(mini(), random_tokens(rng, 3), 3)


def test_training_lowers_loss():
    r = np.random.default_rng(0)
    data = [(random_tokens(r, 4), i % 3) for i in range(12)]
    m = mini(dropout=0.0)
    before = np.mean([G.gen_loss(m, t, c) for t, c in data])
    G.train(m, data, optim.OptConfig(lr=1e-2, batch_size=4, max_epochs=10), r)
    assert np.mean([G.gen_loss(m, t, c) for t, c in data]) < before


# --- sampling ---------------------------------------------------------------


def test_rigged_end_of_char_stops_at_once():
    m = fixed_head_model(pen=(0.0, 0.0, 20.0))
    s = G.sample_character(m, 0, np.random.default_rng(0))
    assert len(s) == 1 and not s.truncated


def test_cap_sets_truncated_flag():
    m = fixed_head_model(pen=(5.0, 0.0, 0.0))
    s = G.sample_character(m, 0, np.random.default_rng(0), max_len=7)
    assert s.truncated and len(s) == 8 and s.n_strokes == 1


def test_degenerate_sigma_gives_deterministic_path():
    m = fixed_head_model(mu=(0.3, -0.2), log_sigma=(-20.0, -20.0), pen=(1.0, 0.0, 0.0))
    s = G.sample_character(m, 1, np.random.default_rng(0), max_len=10)
    np.testing.assert_allclose(np.diff(s.xy, axis=0), np.tile([0.3, -0.2], (10, 1)), atol=1e-6)


def test_sampling_is_seeded():
    m = mini(std=0.5)
    a = G.sample_characters(m, [0, 1, 2], np.random.default_rng(3), max_len=20)
    b = G.sample_characters(m, [0, 1, 2], np.random.default_rng(3), max_len=20)
    for x, y in zip(a, b):
        assert x.points == y.points and x.truncated == y.truncated


def test_batched_sampling_matches_single():
    m = mini(std=0.5)
    batch = G.sample_characters(m, [2], np.random.default_rng(3), max_len=15)[0]
    single = G.sample_character(m, 2, np.random.default_rng(3), max_len=15)
    assert batch.points == single.points


def test_samples_end_in_end_of_char_or_flagged():
    m = mini(std=1.0)
    m.params["b_softmax"][:] = [0.0, 0.0, 1.0]
    for s in G.sample_characters(m, [0, 1, 2] * 10, np.random.default_rng(0), max_len=12):
        # a flagged sample used every step; an unflagged one stopped early
        assert s.truncated == (len(s) == 13)


def test_pen_up_starts_new_stroke():
    m = fixed_head_model(pen=(0.0, 5.0, 0.0), mu=(1.0, 0.0), log_sigma=(-20.0, -20.0))
    s = G.sample_character(m, 0, np.random.default_rng(0), max_len=3)
    assert s.n_strokes == 4


def test_hard_max_ties_go_to_pen_down():
    m = fixed_head_model(pen=(0.0, 0.0, 0.0))
    s = G.sample_character(m, 0, np.random.default_rng(0), max_len=4)
    assert s.truncated and s.n_strokes == 1


# --- embedding neighbours ---------------------------------------------------


def test_nearest_neighbors_oracle(rng):
    E = rng.normal(size=(4, 9))
    for c in range(9):
        dist = [(float(np.linalg.norm(E[:, j] - E[:, c])), j) for j in range(9) if j != c]
        assert G.nearest_neighbors(E, c, 3) == [j for _, j in sorted(dist)[:3]]


def test_identical_columns_are_mutual_neighbours(rng):
    E = rng.normal(size=(3, 5))
    E[:, 4] = E[:, 1]
    assert G.nearest_neighbors(E, 1, 1) == [4]
    assert G.nearest_neighbors(E, 4, 1) == [1]
    assert 1 not in G.nearest_neighbors(E, 1, 4)


def test_nearest_neighbors_bad_k(rng):
    with pytest.raises(InvalidConfig):
        G.nearest_neighbors(rng.normal(size=(2, 3)), 0, 3)


def test_tokens_round_trip_through_sampler_format(rng):
    s = ink.InkSequence.from_points([(0, 0, 0), (1, 0, 0), (1, 1, 1), (2, 1, 1)])
    back = ink.tokens_to_ink(ink.to_gen_tokens(s))
    assert back.points == s.points
