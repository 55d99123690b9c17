import numpy as np
import pytest

import resolvent_lab as rl
from resolvent_lab.carleman import CarlemanConfig, GridSpec, min_ell, search_tau0
from resolvent_lab.potentials import (PotentialModel, REFERENCE_GRID,
                                      holder_seminorm)
from resolvent_lab.radial import ResolventQuery
from resolvent_lab.scaling import GridPolicy, sweep

H_SWEEP = (0.2, 0.15, 0.1, 0.07, 0.05)


@pytest.fixture(scope="session")
def kernel():
    return rl.bump_kernel()


@pytest.fixture(scope="session")
def zero_model():
    return rl.build_potential("zero")


@pytest.fixture(scope="session")
def power_law_model():
    return rl.build_potential("power_law", {"c": 0.5, "delta": 1.0})


@pytest.fixture(scope="session")
def barrier_model():
    return rl.build_potential("barrier_well", {})


@pytest.fixture(scope="session")
def holder_model():
    return rl.build_potential("holder_bump", {"c": 0.1, "alpha": 0.5, "freq": 2.0})


@pytest.fixture(scope="session")
def weak_holder_class_model():
    """Smooth decaying potential viewed as a member of the alpha=1/2 class."""

    def v(r):
        return 0.05 * (np.asarray(r, dtype=float) + 1.0) ** (-3.0)

    hc = holder_seminorm(v, 0.5, 4.0, REFERENCE_GRID) * 1.25
    model = PotentialModel("weak_decay", v, v, alpha=0.5, beta=4.0,
                           holder_const=hc)
    model.validate()
    return model


# certificates are searched at the largest sweep h: the audit terms that
# depend on h are hardest there, so the found tau0 covers the smaller h too
@pytest.fixture(scope="session")
def barrier_certificate(barrier_model):
    cfg = CarlemanConfig.lipschitz(3.0, 0.6, 4.0, min_ell(0.25, 3.0, 0.6),
                                   E=1.0, h=max(H_SWEEP), d=3)
    C = rl.recommended_audit_constant(barrier_model)
    return search_tau0(cfg, barrier_model.envelope, C, GridSpec(), 4096.0)


@pytest.fixture(scope="session")
def holder_certificate(holder_model):
    cfg = CarlemanConfig.holder(0.5, 0.7, 4.0, min_ell(1.0, 4.0, 0.7),
                                E=1.0, h=max(H_SWEEP), d=3, k=1.0)
    C = rl.recommended_audit_constant(holder_model)
    return search_tau0(cfg, holder_model.envelope, C, GridSpec(), 4096.0)


@pytest.fixture(scope="session")
def free_sweep(zero_model):
    template = ResolventQuery(d=3, E=1.0, h=1.0, eps=1.0, sign=1, s=0.7,
                              potential=zero_model)
    return sweep(template, H_SWEEP, [1e-2], GridPolicy(l_max=8),
                 signs=(1,), seed=2024, threads=2)


def cheap_policy(**overrides):
    """Small-domain policy for fast unit tests (tail tolerance relaxed)."""
    defaults = dict(tail_tol=0.05, dr_factor=0.1, l_max=2)
    defaults.update(overrides)
    return GridPolicy(**defaults)
