import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lipbound import Activation, Conv2dOperator, SequentialNet, random_net

settings.register_profile(
    "ci",
    max_examples=25,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


def small_conv_net(seed, input_hw=(12, 12), in_channels=1):
    """Small random conv stack for corpus-style tests (fits 12x12 inputs)."""
    rng = np.random.default_rng(seed)
    channel_plan = [in_channels, int(rng.integers(2, 4)), int(rng.integers(2, 5)), 2]
    strides = [(1, 1), (2, 2), (1, 1)]
    paddings = [(1, 1), (0, 0), (0, 0)]
    layers = []
    h, w = input_hw
    relu = Activation("relu")
    for i in range(3):
        c_in, c_out = channel_plan[i], channel_plan[i + 1]
        fan_in = c_in * 9
        weight = rng.standard_normal((c_out, c_in, 3, 3)) / np.sqrt(fan_in)
        bias = rng.standard_normal(c_out) / np.sqrt(fan_in)
        op = Conv2dOperator(weight, bias, stride=strides[i], padding=paddings[i],
                            input_hw=(h, w))
        layers.append(op)
        if i < 2:
            layers.append(relu)
        _, h, w = op.output_shape
    return SequentialNet(layers)


def dense_corpus_net(seed):
    """Random ReLU MLP with K <= 6 affine layers, widths <= 16."""
    rng = np.random.default_rng((4242, seed))
    depth = int(rng.integers(2, 7))
    in_dim = 2 if seed % 2 == 0 else int(rng.integers(2, 9))
    widths = [in_dim] + [int(w) for w in rng.integers(2, 17, size=depth - 1)]
    widths.append(int(rng.integers(1, 9)))
    return random_net(widths, seed=int(rng.integers(0, 2**31)))


@pytest.fixture(scope="session")
def dense_corpus():
    return [dense_corpus_net(i) for i in range(12)]


@pytest.fixture(scope="session")
def conv_corpus():
    return [small_conv_net((777, i)) for i in range(3)]
