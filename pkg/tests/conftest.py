import numpy as np
import pytest

from echopath.cli import mc_params
from echopath.phantom import PhantomSpec, generate_phantom
from echopath.sequence import segment_sequence


@pytest.fixture(scope="session")
def phantom_cnr5():
    """Default 24-frame phantom at CNR 5 with its ground truth."""
    spec = PhantomSpec(target_cnr=5.0)
    seq, truth = generate_phantom(spec)
    return spec, seq, truth


@pytest.fixture(scope="session")
def segmented_cnr5(phantom_cnr5):
    """Full-sequence segmentation of the CNR-5 phantom, debug retained."""
    _, seq, truth = phantom_cnr5
    result = segment_sequence(seq, truth.uips, mc_params(), keep_debug=True)
    return seq, truth, result


@pytest.fixture(scope="session")
def still_phantom():
    """Single-frame motionless phantom for per-frame tests."""
    spec = PhantomSpec(n_frames=1, cycle_fraction=0.0, target_cnr=5.0)
    seq, truth = generate_phantom(spec)
    return spec, seq, truth


def rng(seed=0):
    return np.random.default_rng(seed)
