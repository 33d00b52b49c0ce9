"""Small synthetic tables shared by the harness tests."""

import numpy as np

from onebitpc.reftables import ReferenceTable, TableMeta, observable_powers
from onebitpc.waveforms import qam_constellation

GRID = np.arange(-30.0, 30.01, 0.5)


def synthetic_table(M=256, tau=7, L=3, order=16, rho_min=5.0, ser=True):
    meta = TableMeta(M=M, tau=tau, gap_db=5.0, L=L, order=order, trials=1000, seed=0)
    shift = float(np.mean(observable_powers(0.0, 3, 5.0)))
    pmse = 0.02 + 1e-4 * (GRID - rho_min - shift) ** 2
    if ser:
        s = np.minimum(1e-6 * 10 ** (np.abs(GRID - rho_min) / 5), 0.9)
        cen = np.tile(qam_constellation(order).points, (GRID.size, 1))
    else:
        s = np.full(GRID.size, np.nan)
        cen = np.zeros((GRID.size, 0))
    return ReferenceTable(meta, GRID, pmse, s, cen)
