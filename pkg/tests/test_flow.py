"""Masked rectified flow: operators, oracle transport, preservation laws."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenelat.errors import (
    DivisionNearZeroError,
    FieldError,
    ShapeMismatchError,
    TimeOutOfRangeError,
)
from scenelat.flow import (
    FlowConfig,
    StraightPathField,
    euler_step,
    forward_step,
    gaussian_tensor,
    masked_complete,
    oracle_field,
)
from scenelat.rng import NoiseStream


class FixedStream:
    """Harness hook: a stream whose every draw is a constant."""

    def __init__(self, value):
        self.value = value

    def standard_normal(self, shape, dtype=np.float32):
        return np.full(shape, self.value, dtype=dtype)


class ZeroField:
    def evaluate(self, x, t, condition=None):
        return np.zeros_like(x)


class ConstantField:
    def __init__(self, c):
        self.c = c

    def evaluate(self, x, t, condition=None):
        return np.full_like(x, self.c)


class FailingField:
    def evaluate(self, x, t, condition=None):
        raise RuntimeError("backend down")


# --- forward_step ---

def test_forward_step_t0_returns_x_bitwise():
    x = NoiseStream(1).standard_normal(1000)
    out = forward_step(x, 0.0, 0.0, NoiseStream(2))
    assert out.tobytes() == x.tobytes()


def test_forward_step_t1_returns_noise_bitwise():
    x = NoiseStream(3).standard_normal(500)
    eps = NoiseStream(4).standard_normal(500)
    out = forward_step(x, 1.0, 0.0, NoiseStream(4))
    assert out.tobytes() == eps.tobytes()


def test_forward_step_midpoint_forced_eps():
    x = np.array([2.0], np.float32)
    out = forward_step(x, 0.5, 0.0, FixedStream(1.0))
    assert out[0] == pytest.approx(1.5, abs=0)


def test_forward_step_zero_eps_hook_is_linear_decay():
    x = NoiseStream(6).standard_normal(100)
    for t in (0.25, 0.5, 0.75):
        out = forward_step(x, t, 0.0, FixedStream(0.0))
        assert np.array_equal(out, np.float32(1.0 - t) * x)


def test_forward_step_rejects_bad_time():
    x = np.zeros(4, np.float32)
    with pytest.raises(TimeOutOfRangeError):
        forward_step(x, -0.1, 0.0, NoiseStream(0))
    with pytest.raises(TimeOutOfRangeError):
        forward_step(x, 1.5, 0.0, NoiseStream(0))


@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31), st.integers(min_value=1, max_value=64))
def test_forward_step_endpoints_property(seed, n):
    x = NoiseStream(seed).standard_normal(n)
    noise_src = NoiseStream(seed + 1)
    eps = NoiseStream(seed + 1).standard_normal(n)
    assert forward_step(x, 0.0, 0.0, noise_src).tobytes() == x.tobytes()
    assert forward_step(x, 1.0, 0.0, NoiseStream(seed + 1)).tobytes() == eps.tobytes()


# --- euler_step ---

def test_euler_zero_field_identity():
    x = NoiseStream(7).standard_normal(64)
    assert np.array_equal(euler_step(x, 0.5, 0.1, ZeroField()), x)


def test_euler_constant_field():
    x = np.ones(8, np.float32)
    out = euler_step(x, 1.0, 0.1, ConstantField(2.0))
    assert np.allclose(out, 1.0 - 0.2)


def test_euler_propagates_field_failure():
    with pytest.raises(FieldError):
        euler_step(np.zeros(4, np.float32), 1.0, 0.5, FailingField())


def test_euler_rejects_shape_change():
    class Widening:
        def evaluate(self, x, t, condition=None):
            return np.zeros(x.size * 2, x.dtype)
    with pytest.raises(ShapeMismatchError):
        euler_step(np.zeros(4, np.float32), 1.0, 0.5, Widening())


# --- oracle field ---

def test_oracle_on_trajectory_is_time_invariant():
    target = NoiseStream(10).standard_normal(256)
    eps = NoiseStream(11).standard_normal(256)
    fld = oracle_field(target, 0.0)
    vals = []
    for t in (0.1, 0.5, 1.0):
        x_t = np.float32(1.0 - t) * target + np.float32(t) * eps
        vals.append(fld.evaluate(x_t, t))
    expect = eps - target
    for v in vals:
        assert np.allclose(v, expect, atol=1e-5)


def test_oracle_single_euler_step_hits_target():
    target = NoiseStream(12).standard_normal(512)
    eps = NoiseStream(13).standard_normal(512)
    out = euler_step(eps, 1.0, 1.0, oracle_field(target, 0.0))
    assert np.abs(out - target).max() <= 1e-6


def test_oracle_zero_target_is_contraction():
    fld = oracle_field(np.zeros(16, np.float32), 0.0)
    x = np.full(16, 3.0, np.float32)
    assert np.allclose(fld.evaluate(x, 0.5), x / 0.5)


def test_oracle_division_near_zero():
    fld = oracle_field(np.zeros(4, np.float32), 0.0)
    with pytest.raises(DivisionNearZeroError):
        fld.evaluate(np.zeros(4, np.float32), 0.0)


# --- masked_complete ---

def test_all_preserved_returns_known_bitwise():
    x_known = NoiseStream(20).standard_normal((32, 32, 32))
    mask = np.zeros_like(x_known, dtype=bool)
    cfg = FlowConfig(steps=10, resamples=2, seed=1)
    out = masked_complete(x_known, mask, ZeroField(), None, cfg, NoiseStream(cfg.seed))
    assert out.tobytes() == x_known.tobytes()


@pytest.mark.parametrize("steps,resamples", [(1, 1), (10, 1), (50, 2)])
def test_all_regenerated_oracle_exact(steps, resamples):
    target = NoiseStream(21).standard_normal((24, 24, 24))
    mask = np.ones_like(target, dtype=bool)
    cfg = FlowConfig(steps=steps, resamples=resamples, seed=3)
    out = masked_complete(np.zeros_like(target), mask, oracle_field(target),
                          None, cfg, NoiseStream(cfg.seed))
    assert np.abs(out - target).max() <= 1e-5


def test_mixed_mask_preserves_and_completes():
    rng = np.random.default_rng(0)
    target = NoiseStream(22).standard_normal(4000)
    x_known = target.copy()
    mask = rng.random(4000) < 0.5  # True = regenerate
    cfg = FlowConfig(steps=50, resamples=2, seed=9)
    out = masked_complete(x_known, mask, oracle_field(target), None, cfg,
                          NoiseStream(cfg.seed))
    assert out[~mask].tobytes() == x_known[~mask].tobytes()
    assert np.abs(out[mask] - target[mask]).max() <= 1e-4


class DampingField:
    """History-sensitive field: pulls x toward zero, keeps noise visible."""

    def evaluate(self, x, t, condition=None):
        return np.tanh(x)


def test_masked_complete_deterministic_per_seed():
    x_known = NoiseStream(23).standard_normal((500, 8))
    mask = NoiseStream(24).standard_normal((500, 8)) > 0
    cfg = FlowConfig(steps=20, resamples=2, seed=77)
    field = DampingField()
    a = masked_complete(x_known, mask, field, None, cfg, NoiseStream(cfg.seed))
    b = masked_complete(x_known, mask, field, None, cfg, NoiseStream(cfg.seed))
    assert a.tobytes() == b.tobytes()
    c = masked_complete(x_known, mask, field, None, cfg, NoiseStream(cfg.seed + 1))
    assert c.tobytes() != a.tobytes()


def test_oracle_output_independent_of_noise_path():
    # the straight-path field self-corrects: any noise seed lands on target
    target = NoiseStream(26).standard_normal((500, 8))
    mask = np.ones_like(target, dtype=bool)
    cfg = FlowConfig(steps=20, resamples=2, seed=1)
    fld = StraightPathField(target)
    a = masked_complete(np.zeros_like(target), mask, fld, None, cfg, NoiseStream(1))
    b = masked_complete(np.zeros_like(target), mask, fld, None, cfg, NoiseStream(2))
    assert np.abs(a - target).max() <= 1e-5
    assert np.abs(b - target).max() <= 1e-5


def test_masked_complete_shape_mismatch():
    cfg = FlowConfig(steps=1, resamples=1)
    with pytest.raises(ShapeMismatchError):
        masked_complete(np.zeros(4, np.float32), np.zeros(5, bool), ZeroField(),
                        None, cfg, NoiseStream(0))


def test_output_shape_closure():
    x = np.zeros((7, 3), np.float32)
    cfg = FlowConfig(steps=3, resamples=2, seed=2)
    out = masked_complete(x, np.ones_like(x, bool), ConstantField(0.5), None,
                          cfg, NoiseStream(cfg.seed))
    assert out.shape == x.shape and out.dtype == x.dtype


# --- gaussian_tensor ---

def test_gaussian_tensor_determinism_and_moments():
    a = gaussian_tensor((1000,), NoiseStream(42))
    b = gaussian_tensor((1000,), NoiseStream(42))
    assert a.tobytes() == b.tobytes()
    big = gaussian_tensor((1_000_000,), NoiseStream(43)).astype(np.float64)
    assert abs(big.mean()) < 0.01 and abs(big.var() - 1.0) < 0.02


def test_flow_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(steps=0)
    with pytest.raises(ValueError):
        FlowConfig(resamples=0)
    with pytest.raises(ValueError):
        FlowConfig(sigma_min=1.0)
