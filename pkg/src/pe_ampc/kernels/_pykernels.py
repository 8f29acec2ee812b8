"""Pure NumPy implementations of the excitation kernels.

Semantics are shared with the compiled ``_ckernels`` module; both are
exercised against each other in the test suite.
"""

import numpy as np


def pe_gram(seq, end, l, h):
    """Windowed Gram matrix of stacked blocks ending at row ``end``.

    ``seq`` has shape (T, m).  The block at time ``t`` is
    ``[seq[t], seq[t-1], ..., seq[t-h+1]]`` flattened to length ``m*h``;
    the result is the sum of ``block(t) block(t)^T`` for ``t`` in
    ``end-l+1 .. end``.
    """
    seq = np.asarray(seq, dtype=float)
    if seq.ndim == 1:
        seq = seq[:, None]
    m = seq.shape[1]
    first = end - l - h + 2
    if first < 0 or end >= seq.shape[0]:
        raise IndexError("insufficient history for the requested window")
    G = np.zeros((m * h, m * h))
    for t in range(end - l + 1, end + 1):
        blk = seq[t - h + 1:t + 1][::-1].reshape(-1)
        G += np.outer(blk, blk)
    return G


def pe_screen(tail, cands, pinned, l, h, rho0, margin):
    """Feasibility of each candidate under every future window check.

    ``tail`` holds the last ``l+h-2`` past values (shape (l+h-2, m)),
    ``cands`` the candidate values for the current instant (shape (C, m)),
    and ``pinned`` the ``h-1`` future values fixed by periodic repetition.
    A candidate passes when, for each of the ``h`` windows ending at the
    current and following instants, ``G - rho0*I`` has smallest eigenvalue
    greater than ``margin``.
    """
    tail = np.asarray(tail, dtype=float)
    cands = np.asarray(cands, dtype=float)
    pinned = np.asarray(pinned, dtype=float)
    m = tail.shape[1]
    C = cands.shape[0]
    nb = l + h - 2
    L = nb + h
    seqs = np.empty((C, L, m))
    seqs[:, :nb] = tail
    seqs[:, nb] = cands
    seqs[:, nb + 1:] = pinned
    # blocks[c, t] is the stacked regressor ending at row t (valid for t >= h-1)
    idx = np.arange(h - 1, L)[:, None] - np.arange(h)[None, :]
    blocks = seqs[:, idx, :].reshape(C, idx.shape[0], m * h)
    eye = np.eye(m * h)
    ok = np.ones(C, dtype=bool)
    for k in range(h):
        end = nb + k - (h - 1)
        W = blocks[:, end - l + 1:end + 1]
        G = np.einsum("cti,ctj->cij", W, W) - rho0 * eye
        ok &= np.linalg.eigvalsh(G)[:, 0] > margin
    return ok
