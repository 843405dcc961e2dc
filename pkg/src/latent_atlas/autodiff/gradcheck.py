"""Central finite-difference check of the backward pass."""

import numpy as np

from .tensor import Tensor, backward, no_grad


def grad_check(f, point, h=1e-5):
    """Max relative error between reverse-mode and finite-difference gradients.

    Parameters
    ----------
    f : callable
        Takes one :class:`Tensor` per array in ``point`` and returns a scalar
        :class:`Tensor`.
    point : ndarray or sequence of ndarray
        Where to differentiate.
    h : float
        Finite-difference step.

    Returns
    -------
    float
        ``max |g_ad - g_fd| / max(1, |g_fd|)`` over all coordinates.
    """
    single = isinstance(point, np.ndarray) or np.isscalar(point)
    arrays = [np.array(point, dtype=np.float64)] if single else [np.array(p, dtype=np.float64) for p in point]
    inputs = [Tensor(a, requires_grad=True) for a in arrays]
    leaves = backward(f(*inputs))
    analytic = [leaves.get(t, np.zeros_like(t.data)) for t in inputs]

    worst = 0.0
    with no_grad():
        for k, base in enumerate(arrays):
            flat = base.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = f(*[Tensor(a) for a in arrays]).item()
                flat[i] = orig - h
                down = f(*[Tensor(a) for a in arrays]).item()
                flat[i] = orig
                fd = (up - down) / (2 * h)
                ad = analytic[k].reshape(-1)[i]
                worst = max(worst, abs(ad - fd) / max(1.0, abs(fd)))
    return worst


def grad_check_params(loss_fn, params, h=1e-5, max_coords=None, rng=None):
    """Same check against a closure over named parameter tensors.

    ``loss_fn()`` must rebuild the forward pass from the current ``params``
    values. With ``max_coords`` set, a random subset of coordinates per
    parameter is checked.
    """
    leaves = backward(loss_fn())
    worst = 0.0
    with no_grad():
        for p in params.values():
            ad_full = leaves.get(p, np.zeros_like(p.data)).reshape(-1)
            flat = p.data.reshape(-1)
            coords = range(flat.size)
            if max_coords is not None and flat.size > max_coords:
                coords = (rng or np.random.default_rng(0)).choice(flat.size, max_coords, replace=False)
            for i in coords:
                orig = flat[i]
                flat[i] = orig + h
                up = loss_fn().item()
                flat[i] = orig - h
                down = loss_fn().item()
                flat[i] = orig
                fd = (up - down) / (2 * h)
                worst = max(worst, abs(ad_full[i] - fd) / max(1.0, abs(fd)))
    return worst
