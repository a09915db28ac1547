import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eulernet.optim import RangerConfig, RangerState, radam_scale, ranger_step
from eulernet.tensor import NonFiniteError, Tensor

from _oracles import ranger_scalar


def run(grad_fn, w0, steps, cfg):
    p = {"w": Tensor(np.array(w0), dtype=np.float64)}
    state = RangerState()
    trace = []
    for _ in range(steps):
        ranger_step(p, {"w": np.array(grad_fn(float(p["w"].data)))}, state, cfg)
        trace.append(float(p["w"].data))
    return trace


def quad(w):
    return 2 * (w - 3)


class TestRanger:
    def test_matches_scalar_reference_without_lookahead(self):
        cfg = RangerConfig(lr=1e-2, lookahead_k=0)
        got = run(quad, 0.0, 300, cfg)
        ref = ranger_scalar(quad, 0.0, 300, 1e-2, lookahead=False)
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)

    def test_matches_scalar_reference_with_lookahead(self):
        got = run(quad, 0.0, 300, RangerConfig(lr=1e-2))
        ref = ranger_scalar(quad, 0.0, 300, 1e-2)
        np.testing.assert_allclose(got, ref, rtol=0, atol=1e-12)

    def test_quadratic_converges(self):
        trace = run(quad, 0.0, 2000, RangerConfig(lr=5e-2))
        assert abs(trace[-1] - 3) < 1e-2

    def test_k1_alpha1_is_inner_optimizer(self):
        a = run(quad, 0.5, 100, RangerConfig(lr=1e-2, lookahead_k=1, lookahead_alpha=1.0))
        b = run(quad, 0.5, 100, RangerConfig(lr=1e-2, lookahead_k=0))
        assert a == b

    def test_zero_gradients_leave_params(self):
        p = {"a": Tensor(np.arange(4.0)), "b": Tensor(np.ones((2, 2)))}
        before = {k: v.data.copy() for k, v in p.items()}
        state = RangerState()
        for _ in range(12):
            ranger_step(p, {k: np.zeros(v.shape) for k, v in p.items()}, state, RangerConfig())
        for k in p:
            np.testing.assert_array_equal(p[k].data, before[k])

    def test_nonfinite_gradient_aborts_before_any_update(self):
        p = {"a": Tensor(np.ones(3)), "b": Tensor(np.ones(3))}
        state = RangerState()
        with pytest.raises(NonFiniteError, match="b"):
            ranger_step(p, {"a": np.ones(3), "b": np.array([0, np.nan, 0])}, state, RangerConfig())
        assert state.step == 0
        np.testing.assert_array_equal(p["a"].data, 1.0)

    def test_rectification_starts_after_warmup(self):
        cfg = RangerConfig()
        active = [radam_scale(t, cfg)[1] for t in range(1, 10)]
        assert active[:4] == [False] * 4 and all(active[5:])

    @pytest.mark.parametrize("kw", [dict(lr=0), dict(lookahead_alpha=0), dict(lookahead_alpha=1.5),
                                    dict(lookahead_k=-1)])
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            RangerConfig(**kw)


@settings(max_examples=30, deadline=None)
@given(w0=st.floats(-5, 5), c=st.floats(-5, 5), k=st.integers(1, 7), alpha=st.floats(0.1, 1.0))
def test_agrees_with_reference_on_random_quadratics(w0, c, k, alpha):
    def g(w):
        return 2 * (w - c)

    got = run(g, w0, 60, RangerConfig(lr=5e-2, lookahead_k=k, lookahead_alpha=alpha))
    ref = ranger_scalar(g, w0, 60, 5e-2, k=k, alpha=alpha)
    np.testing.assert_allclose(got, ref, rtol=0, atol=1e-10)
