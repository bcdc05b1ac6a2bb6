"""Pure NumPy implementations of the hot kernels.

Signatures mirror ``_ckernels.pyx`` exactly. Sequences are passed ragged:
``tokens`` holds every token back to back and ``offsets[j]:offsets[j+1]``
slices sequence ``j``. ``start[j]`` is ``-1`` when the first token is drawn
from the initial distribution, otherwise the token whose transition row is
used (a prompt's last token).
"""

from bisect import bisect_left

import numpy as np


def _prev_states(start, tokens, offsets):
    prev = np.empty_like(tokens)
    if tokens.size:
        prev[1:] = tokens[:-1]
    lengths = np.diff(offsets)
    nonempty = lengths > 0
    prev[offsets[:-1][nonempty]] = start[nonempty]
    return prev, lengths


def _last_states(start, tokens, offsets):
    lengths = np.diff(offsets)
    last = start.copy()
    ne = lengths > 0
    last[ne] = tokens[offsets[1:][ne] - 1]
    return last, lengths


def markov_logprob(logp_init, logp_trans, cls, start, tokens, offsets, eos, max_len):
    n = offsets.size - 1
    prev, lengths = _prev_states(start, tokens, offsets)
    seq_id = np.repeat(np.arange(n), lengths)
    c = cls[seq_id]
    safe_prev = np.where(prev < 0, 0, prev)
    step = np.where(prev < 0, logp_init[c, tokens], logp_trans[c, safe_prev, tokens])
    out = np.bincount(seq_id, weights=step, minlength=n).astype(np.float64)
    last, _ = _last_states(start, tokens, offsets)
    term = lengths < max_len
    safe_last = np.where(last < 0, 0, last)
    eos_lp = np.where(last < 0, logp_init[cls, eos], logp_trans[cls, safe_last, eos])
    out += np.where(term, eos_lp, 0.0)
    return out


def markov_grad(p_init, p_trans, cls, start, tokens, offsets, coefs, eos, max_len, g_init, g_trans):
    """Accumulate ``sum_j coefs[j] * d log pi(seq_j) / d logits`` into ``g_*``."""
    n = offsets.size - 1
    C, V = p_init.shape
    prev, lengths = _prev_states(start, tokens, offsets)
    seq_id = np.repeat(np.arange(n), lengths)
    c = cls[seq_id]
    w = coefs[seq_id]

    last, _ = _last_states(start, tokens, offsets)
    term = lengths < max_len
    # every scored transition: (class, prev state, target, weight)
    all_c = np.concatenate([c, cls[term]])
    all_prev = np.concatenate([prev, last[term]])
    all_tgt = np.concatenate([tokens, np.full(int(term.sum()), eos, dtype=tokens.dtype)])
    all_w = np.concatenate([w, coefs[term]])

    init = all_prev < 0
    np.add.at(g_init, (all_c[init], all_tgt[init]), all_w[init])
    row_w = np.bincount(all_c[init], weights=all_w[init], minlength=C)
    g_init -= row_w[:, None] * p_init

    tr = ~init
    np.add.at(g_trans, (all_c[tr], all_prev[tr], all_tgt[tr]), all_w[tr])
    flat_row = all_c[tr] * V + all_prev[tr]
    row_w = np.bincount(flat_row, weights=all_w[tr], minlength=C * V).reshape(C, V)
    g_trans -= row_w[:, :, None] * p_trans


def hv2d(points, ref):
    """Exact 2-D hypervolume (maximization) of points strictly above ``ref``."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] == 0:
        return 0.0
    order = np.lexsort((-pts[:, 1], -pts[:, 0]))  # x descending, ties by y descending
    vol = 0.0
    best_y = ref[1]
    for i in order:
        x, y = pts[i]
        if y > best_y:
            vol += (x - ref[0]) * (y - best_y)
            best_y = y
    return vol


def hv3d(points, ref):
    """Exact 3-D hypervolume by sweeping the third axis downward.

    The (x, y) projections seen so far are kept as a staircase sorted by x
    ascending (y strictly descending); its area times the z-gap to the next
    point gives each slab.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n == 0:
        return 0.0
    order = np.argsort(-pts[:, 2], kind="stable")
    xs: list[float] = []
    ys: list[float] = []
    rx, ry, rz = (float(v) for v in ref)
    area = 0.0
    vol = 0.0
    for idx, i in enumerate(order):
        x, y, z = (float(v) for v in pts[i])
        pos = bisect_left(xs, x)
        if not (pos < len(xs) and ys[pos] >= y):
            hi = pos + 1 if pos < len(xs) and xs[pos] == x else pos
            lo = pos
            while lo > 0 and ys[lo - 1] <= y:
                lo -= 1
            xs[lo:hi] = [x]
            ys[lo:hi] = [y]
            area = _staircase_area(xs, ys, rx, ry)
        z_next = float(pts[order[idx + 1], 2]) if idx + 1 < n else rz
        vol += area * (z - z_next)
    return vol


def _staircase_area(xs, ys, rx, ry):
    area = 0.0
    prev_x = rx
    for x, y in zip(xs, ys):
        area += (x - prev_x) * (y - ry)
        prev_x = x
    return area


def energy_grad(S, T, eos, max_len, n_letters, seq):
    """Gradient of ``-log pi`` w.r.t. a relaxed one-hot input, letter columns only.

    The Markov log-likelihood is bilinear in consecutive one-hot rows, so the
    gradient at a one-hot point picks out the neighbouring table rows/columns.
    """
    L = seq.shape[0]
    g = np.empty((L, n_letters))
    g[0] = -S[:n_letters]
    if L > 1:
        g[1:] = -T[seq[:-1], :n_letters]
        g[:-1] -= T[:n_letters, seq[1:]].T
    if L < max_len:
        g[L - 1] -= T[:n_letters, eos]
    return g


def sequence_energy(S, T, eos, max_len, seq):
    e = -S[seq[0]]
    for t in range(1, seq.shape[0]):
        e -= T[seq[t - 1], seq[t]]
    if seq.shape[0] < max_len:
        e -= T[seq[-1], eos]
    return e


def _proposal(S, T, eos, max_len, n_letters, seq, temp):
    g = energy_grad(S, T, eos, max_len, n_letters, seq)
    cur = g[np.arange(seq.shape[0]), seq]
    d = -(g - cur[:, None]) / temp
    d[np.arange(seq.shape[0]), seq] = -np.inf
    d = d.ravel()
    dmax = d.max()
    cs = np.cumsum(np.exp(d - dmax))
    return d, dmax, cs


def gwg_proposal_logprobs(S, T, eos, max_len, n_letters, seq, temp):
    """Normalized proposal log-probabilities over the ``(L, n_letters)`` grid."""
    d, dmax, cs = _proposal(S, T, eos, max_len, n_letters, seq, temp)
    return (d - dmax - np.log(cs[-1])).reshape(seq.shape[0], n_letters)


def gwg_chain(S, T, eos, max_len, n_letters, seq0, temp, uniforms):
    """Run one Gibbs-with-Gradients chain driven by pre-drawn uniforms.

    ``uniforms[s, 0]`` selects the proposal by inverse CDF and
    ``uniforms[s, 1]`` decides acceptance. Returns the state after every step,
    its energy and the acceptance flags.
    """
    n_steps = uniforms.shape[0]
    L = seq0.shape[0]
    seq = seq0.copy()
    energy = sequence_energy(S, T, eos, max_len, seq)
    states = np.empty((n_steps, L), dtype=np.int64)
    energies = np.empty(n_steps)
    accepted = np.zeros(n_steps, dtype=np.uint8)
    for s in range(n_steps):
        d, dmax, cs = _proposal(S, T, eos, max_len, n_letters, seq, temp)
        total = cs[-1]
        idx = int(np.searchsorted(cs, uniforms[s, 0] * total, side="right"))
        idx = min(idx, cs.shape[0] - 1)
        while d[idx] == -np.inf:  # only reachable through rounding at the upper end
            idx -= 1
        pos, tok = divmod(idx, n_letters)
        log_fwd = d[idx] - dmax - np.log(total)

        cand = seq.copy()
        cand[pos] = tok
        rd, rmax, rcs = _proposal(S, T, eos, max_len, n_letters, cand, temp)
        log_rev = rd[pos * n_letters + seq[pos]] - rmax - np.log(rcs[-1])
        e_cand = sequence_energy(S, T, eos, max_len, cand)
        log_accept = -(e_cand - energy) + log_rev - log_fwd
        if np.log(uniforms[s, 1]) < log_accept:
            seq = cand
            energy = e_cand
            accepted[s] = 1
        states[s] = seq
        energies[s] = energy
    return states, energies, accepted


def markov_sample(S, T, eos, max_len, temperature, top_p, uniforms):
    """Ancestral nucleus sampling; ``uniforms`` is ``(n, max_len)``.

    Returns ``(tokens, lengths)`` with ``tokens`` padded by ``-1``.
    """
    n = uniforms.shape[0]
    out = np.full((n, max_len), -1, dtype=np.int64)
    lengths = np.zeros(n, dtype=np.int64)
    V = S.shape[0]
    for j in range(n):
        row = S
        for t in range(max_len):
            x = row / temperature
            e = np.exp(x - x.max())
            order = np.argsort(-e, kind="stable")
            cs = np.cumsum(e[order])
            nkeep = min(int(np.searchsorted(cs, top_p * cs[-1], side="left")) + 1, V)
            target = uniforms[j, t] * cs[nkeep - 1]
            pick = min(int(np.searchsorted(cs[:nkeep], target, side="right")), nkeep - 1)
            tok = int(order[pick])
            if tok == eos:
                break
            out[j, t] = tok
            lengths[j] += 1
            row = T[tok]
    return out, lengths
