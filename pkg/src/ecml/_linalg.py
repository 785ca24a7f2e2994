"""Small array helpers shared by the feature and cascade modules."""

import numpy as np


def freeze_array(arr):
    """Return a read-only C-contiguous view or copy of ``arr``."""
    if arr.flags.writeable or not arr.flags.c_contiguous:
        arr = arr.copy(order="C")
        arr.setflags(write=False)
    return arr


def symmetrize(m):
    return 0.5 * (m + m.T)


def fix_column_signs(q, tol=1e-12):
    """Flip each column so its first entry larger than ``tol`` is positive.

    Pins the sign freedom of eigenvector columns so repeated decompositions
    of the same matrix are reproducible.
    """
    lead_rows = (np.abs(q) > tol).argmax(axis=0)
    lead = q[lead_rows, np.arange(q.shape[1])]
    signs = np.where(lead < 0.0, -1.0, 1.0)
    return q * signs
