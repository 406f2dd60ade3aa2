"""BIC and MMDL scores with l1 degrees of freedom."""
import math
from dataclasses import dataclass

import numpy as np

from .glasso import EDGE_TOL

CRITERIA = ("bic", "mmdl")


@dataclass(frozen=True)
class ScoreBreakdown:
    nll: float
    transition_cost: float
    state_costs: tuple
    total: float
    criterion: str


def degrees_of_freedom(state, tol=EDGE_TOL):
    """Mean dimension plus nonzero entries on and above the precision diagonal."""
    prec = state.precision
    return int(state.dim + np.count_nonzero(np.abs(np.triu(prec)) > tol))


def score(fit, criterion="mmdl", tol=EDGE_TOL):
    """Score a fitted model.

    BIC charges every state ``0.5 * log(n) * Df``; MMDL charges
    ``0.5 * log(n * pi_k) * Df``, using each state's effective size. Both
    charge ``0.5 * log(n) * K * (K - 1)`` for the transition matrix.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"unknown criterion {criterion!r}")
    resp = fit.resp
    n, K = resp.n, resp.num_states
    log_n = math.log(n)
    nll = -float(resp.log_likelihood)
    transition_cost = 0.5 * log_n * K * (K - 1)
    costs = []
    for k, state in enumerate(fit.model.states):
        df = degrees_of_freedom(state, tol)
        if criterion == "bic":
            costs.append(0.5 * log_n * df)
        else:
            if not resp.pi[k] > 0:
                raise ValueError(f"state {k} has zero effective size; MMDL undefined")
            costs.append(0.5 * math.log(n * resp.pi[k]) * df)
    total = nll + transition_cost + math.fsum(costs)
    return ScoreBreakdown(nll=nll, transition_cost=transition_cost,
                          state_costs=tuple(costs), total=total, criterion=criterion)
