import numpy as np
import pytest

from scgfm.decoder import (Decoder, decode, decode_backward, init_decoder, lipschitz_bound,
                           spectral_norm)


def zero_decoder(k=3, hidden=4, r=19):
    return Decoder(np.zeros((hidden, k)), np.zeros(hidden), np.zeros((r, hidden)), np.zeros(r))


def test_zero_parameters_give_zero():
    assert not decode(zero_decoder(), np.array([0.2, 0.3, 0.5])).any()


def test_output_length():
    assert decode(init_decoder(16, 0), np.full(16, 1 / 16)).shape == (19,)


def test_linear_pass_through(rng):
    k = 3
    w2 = rng.normal(size=(19, k))
    d = Decoder(np.eye(k), np.zeros(k), w2, np.zeros(19))
    w = np.array([0.1, 0.6, 0.3])
    np.testing.assert_allclose(decode(d, w), w2 @ w)


def test_zero_upstream():
    d = init_decoder(5, 1)
    grads, gw = decode_backward(d, np.full(5, 0.2), np.zeros(19))
    assert all(not g.any() for g in grads) and not gw.any() and gw.shape == (5,)


def test_backward_matches_finite_differences(rng):
    h = 1e-6
    for seed in range(3):
        d = init_decoder(4, seed, hidden=8)
        w = rng.dirichlet(np.ones(4))
        up = rng.normal(size=19)
        grads, gw = decode_backward(d, w, up)

        def f(params, x):
            return up @ decode(Decoder.from_params(params), x)

        params = [p.copy() for p in d.params()]
        for pi, p in enumerate(params):
            for idx in np.ndindex(p.shape):
                hp = [q.copy() for q in params]
                hm = [q.copy() for q in params]
                hp[pi][idx] += h
                hm[pi][idx] -= h
                fd = (f(hp, w) - f(hm, w)) / (2 * h)
                assert grads[pi][idx] == pytest.approx(fd, rel=1e-5, abs=1e-8)
        for i in range(4):
            e = np.zeros(4)
            e[i] = h
            fd = (f(params, w + e) - f(params, w - e)) / (2 * h)
            assert gw[i] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_spectral_norm(rng):
    m = rng.normal(size=(19, 64))
    assert spectral_norm(m) == pytest.approx(np.linalg.norm(m, 2), rel=1e-6)
    assert spectral_norm(np.zeros((3, 3))) == 0


def test_lipschitz_bound_cases():
    assert lipschitz_bound(zero_decoder()) == 0
    d = Decoder(np.eye(3), np.zeros(3), np.eye(3), np.zeros(3))
    assert lipschitz_bound(d) == pytest.approx(1)


def test_lipschitz_bound_holds_on_random_pairs(rng):
    d = init_decoder(16, 3)
    bound = lipschitz_bound(d)
    for _ in range(10_000):
        w, v = rng.dirichlet(np.ones(16)), rng.dirichlet(np.ones(16))
        assert np.linalg.norm(decode(d, w) - decode(d, v)) <= bound * np.linalg.norm(w - v) + 1e-9


def test_shapes_checked():
    with pytest.raises(ValueError):
        decode(init_decoder(3, 0), np.ones(4))
    with pytest.raises(ValueError):
        Decoder(np.zeros((4, 3)), np.zeros(5), np.zeros((19, 4)), np.zeros(19))
