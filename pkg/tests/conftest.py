import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_linear_net(w, cond_dim=0):
    """A 3-layer ReLU net that computes exactly w.x everywhere.

    Hidden units split into a positive and a negated copy of each input,
    so relu(x) - relu(-x) reconstructs x; condition columns are ignored.
    """
    from afrnet.autodiff import MlpParams

    w = np.asarray(w, dtype=np.float64).ravel()
    d = w.size
    w1 = np.zeros((d + cond_dim, 2 * d))
    w1[:d, :d] = np.eye(d)
    w1[:d, d:] = -np.eye(d)
    w2 = np.eye(2 * d)
    w3 = np.concatenate([w, -w])[:, None]
    return MlpParams(
        w1, np.zeros((1, 2 * d)),
        w2, np.zeros((1, 2 * d)),
        w3, np.zeros((1, 1)),
    )


def make_zero_net(in_dim, hidden, out_dim, bias=0.0):
    """All-zero weights; constant ``bias`` on the output."""
    from afrnet.autodiff import MlpParams

    return MlpParams(
        np.zeros((in_dim, hidden)), np.zeros((1, hidden)),
        np.zeros((hidden, hidden)), np.zeros((1, hidden)),
        np.zeros((hidden, out_dim)), np.full((1, out_dim), float(bias)),
    )
