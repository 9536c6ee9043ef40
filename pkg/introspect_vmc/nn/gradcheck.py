"""Central finite-difference verification of analytic gradients."""

import logging
from typing import Callable, Optional

import numpy as np

from introspect_vmc.exceptions import ConfigurationError
from introspect_vmc.nn.layers import Module

logger = logging.getLogger(__name__)


def gradient_check(
    module: Module,
    loss_fn: Callable[[bool], float],
    epsilon: float = 1e-5,
    max_checks_per_param: Optional[int] = None,
    abs_floor: float = 1e-5,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Compare analytic and numeric gradients for every parameter of ``module``.

    ``loss_fn(backward)`` must run the forward pass with frozen noise, return
    the scalar loss and, when ``backward`` is true, accumulate gradients into
    the module. Relative error is ``|a - n| / max(|a|, |n|, abs_floor)``.
    Returns the worst relative error over the checked entries.
    """
    if not epsilon > 0:
        raise ConfigurationError("epsilon must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)

    module.zero_grad()
    loss_fn(True)
    analytic = {path: grad.copy() for path, _, grad in module.named_parameters()}

    worst = 0.0
    for path, param, _ in module.named_parameters():
        flat = param.reshape(-1)
        indices = np.arange(flat.size)
        if max_checks_per_param is not None and flat.size > max_checks_per_param:
            indices = rng.choice(flat.size, size=max_checks_per_param, replace=False)

        grad_flat = analytic[path].reshape(-1)
        for index in indices:
            original = flat[index]
            flat[index] = original + epsilon
            plus = loss_fn(False)
            flat[index] = original - epsilon
            minus = loss_fn(False)
            flat[index] = original

            numeric = (plus - minus) / (2.0 * epsilon)
            exact = grad_flat[index]
            denom = max(abs(exact), abs(numeric), abs_floor)
            error = abs(exact - numeric) / denom
            if error > worst:
                worst = error
                logger.debug("Worst gradient error so far %.3e at %s[%d]", error, path, index)
    return worst
