"""Compiled lattice kernel for the cell motility/proliferation simulator."""

import numpy as np
from numba import njit


@njit(cache=True)
def simulate_cell_grid(rows, cols, init_rows, n_init, pm, pp, steps, seed):
    """Simulate ``steps`` lattice steps from a fresh random placement.

    Returns (hamming distance to the initial grid, final cell count).
    Deterministic given ``seed``.
    """
    np.random.seed(seed)
    occ = np.zeros((rows, cols), np.uint8)

    # Place n_init cells uniformly without collision in the top init_rows rows.
    perm = np.random.permutation(init_rows * cols)
    max_cells = rows * cols
    cell_r = np.empty(max_cells, np.int64)
    cell_c = np.empty(max_cells, np.int64)
    for i in range(n_init):
        r = perm[i] // cols
        c = perm[i] % cols
        occ[r, c] = 1
        cell_r[i] = r
        cell_c[i] = c
    init = occ.copy()
    n = n_init

    for _ in range(steps):
        order = np.random.permutation(n)
        for oi in range(n):
            ci = order[oi]
            r = cell_r[ci]
            c = cell_c[ci]
            if np.random.random() < pm:
                k = np.random.randint(4)
                nr = r + (1 if k == 0 else (-1 if k == 1 else 0))
                nc = c + (1 if k == 2 else (-1 if k == 3 else 0))
                if 0 <= nr < rows and 0 <= nc < cols and occ[nr, nc] == 0:
                    occ[r, c] = 0
                    occ[nr, nc] = 1
                    cell_r[ci] = nr
                    cell_c[ci] = nc
                    r = nr
                    c = nc
            if np.random.random() < pp:
                k = np.random.randint(4)
                nr = r + (1 if k == 0 else (-1 if k == 1 else 0))
                nc = c + (1 if k == 2 else (-1 if k == 3 else 0))
                if 0 <= nr < rows and 0 <= nc < cols and occ[nr, nc] == 0:
                    occ[nr, nc] = 1
                    cell_r[n] = nr
                    cell_c[n] = nc
                    n += 1

    hamming = 0
    for r in range(rows):
        for c in range(cols):
            if occ[r, c] != init[r, c]:
                hamming += 1
    return hamming, n
