import numpy as np

from spawnglmb.assignment import CostRow, CostTable
from spawnglmb.gaussian import Gaussian, GaussianMixture
from spawnglmb.labels import make_birth_label


def table_from_eta(eta) -> CostTable:
    """Cost table with given entries and placeholder rows, for sampler tests."""
    eta = np.asarray(eta, dtype=float)
    rows = tuple(
        CostRow(
            label=make_birth_label(1, i + 1),
            kind="survive",
            prob=0.5,
            predicted=GaussianMixture.single(Gaussian(np.zeros(4), np.eye(4))),
        )
        for i in range(eta.shape[0])
    )
    return CostTable(rows=rows, eta=eta, n_meas=eta.shape[1] - 2)
