# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; see ``_fallback.py`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def markov_logprob(const double[:, ::1] logp_init, const double[:, :, ::1] logp_trans,
                   const long[::1] cls, const long[::1] start, const long[::1] tokens,
                   const long[::1] offsets, long eos, long max_len):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t j, t
    cdef long c, prev, tok
    cdef double acc
    for j in range(n):
        c = cls[j]
        prev = start[j]
        acc = 0.0
        for t in range(offsets[j], offsets[j + 1]):
            tok = tokens[t]
            if prev < 0:
                acc += logp_init[c, tok]
            else:
                acc += logp_trans[c, prev, tok]
            prev = tok
        if offsets[j + 1] - offsets[j] < max_len:
            if prev < 0:
                acc += logp_init[c, eos]
            else:
                acc += logp_trans[c, prev, eos]
        out[j] = acc
    return out_arr


def markov_grad(const double[:, ::1] p_init, const double[:, :, ::1] p_trans,
                const long[::1] cls, const long[::1] start, const long[::1] tokens,
                const long[::1] offsets, const double[::1] coefs, long eos, long max_len,
                double[:, ::1] g_init, double[:, :, ::1] g_trans):
    cdef Py_ssize_t n = offsets.shape[0] - 1
    cdef Py_ssize_t V = p_init.shape[1]
    cdef Py_ssize_t j, t, v
    cdef long c, prev, tok
    cdef double w
    for j in range(n):
        c = cls[j]
        w = coefs[j]
        if w == 0.0:
            continue
        prev = start[j]
        for t in range(offsets[j], offsets[j + 1] + 1):
            if t == offsets[j + 1]:
                if offsets[j + 1] - offsets[j] >= max_len:
                    break
                tok = eos
            else:
                tok = tokens[t]
            if prev < 0:
                g_init[c, tok] += w
                for v in range(V):
                    g_init[c, v] -= w * p_init[c, v]
            else:
                g_trans[c, prev, tok] += w
                for v in range(V):
                    g_trans[c, prev, v] -= w * p_trans[c, prev, v]
            prev = tok


def hv2d(const double[:, :] points, ref):
    cdef Py_ssize_t n = points.shape[0]
    if n == 0:
        return 0.0
    pts = np.asarray(points)
    cdef long[::1] order = np.ascontiguousarray(np.lexsort((-pts[:, 1], -pts[:, 0])), dtype=np.int64)
    cdef double rx = ref[0], ry = ref[1]
    cdef double vol = 0.0, best_y = ry, x, y
    cdef Py_ssize_t k, i
    for k in range(n):
        i = order[k]
        x = points[i, 0]
        y = points[i, 1]
        if y > best_y:
            vol += (x - rx) * (y - best_y)
            best_y = y
    return vol


def hv3d(const double[:, :] points, ref):
    cdef Py_ssize_t n = points.shape[0]
    if n == 0:
        return 0.0
    pts = np.asarray(points)
    cdef long[::1] order = np.ascontiguousarray(np.argsort(-pts[:, 2], kind="stable"), dtype=np.int64)
    xs_arr = np.empty(n, dtype=np.float64)
    ys_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] xs = xs_arr
    cdef double[::1] ys = ys_arr
    cdef Py_ssize_t m = 0, idx, i, pos, lo, hi, t, shift
    cdef double rx = ref[0], ry = ref[1], rz = ref[2]
    cdef double x, y, z, z_next, area = 0.0, vol = 0.0, prev_x
    for idx in range(n):
        i = order[idx]
        x = points[i, 0]
        y = points[i, 1]
        z = points[i, 2]
        # first index with xs >= x
        lo = 0
        hi = m
        while lo < hi:
            t = (lo + hi) // 2
            if xs[t] < x:
                lo = t + 1
            else:
                hi = t
        pos = lo
        if not (pos < m and ys[pos] >= y):
            hi = pos + 1 if (pos < m and xs[pos] == x) else pos
            lo = pos
            while lo > 0 and ys[lo - 1] <= y:
                lo -= 1
            shift = (hi - lo) - 1  # net removal count
            if shift > 0:
                for t in range(hi, m):
                    xs[t - shift] = xs[t]
                    ys[t - shift] = ys[t]
            elif shift < 0:
                t = m - 1
                while t >= hi:
                    xs[t + 1] = xs[t]
                    ys[t + 1] = ys[t]
                    t -= 1
            m -= shift
            xs[lo] = x
            ys[lo] = y
            area = 0.0
            prev_x = rx
            for t in range(m):
                area += (xs[t] - prev_x) * (ys[t] - ry)
                prev_x = xs[t]
        if idx + 1 < n:
            z_next = points[order[idx + 1], 2]
        else:
            z_next = rz
        vol += area * (z - z_next)
    return vol


cdef void _energy_grad(const double[::1] S, const double[:, ::1] T, long eos, long max_len,
                       long n_letters, long[::1] seq, double[:, ::1] g) noexcept nogil:
    cdef Py_ssize_t L = seq.shape[0], t, v
    for t in range(L):
        for v in range(n_letters):
            if t == 0:
                g[t, v] = -S[v]
            else:
                g[t, v] = -T[seq[t - 1], v]
            if t < L - 1:
                g[t, v] -= T[v, seq[t + 1]]
            elif L < max_len:
                g[t, v] -= T[v, eos]


cdef double _energy(const double[::1] S, const double[:, ::1] T, long eos, long max_len,
                    long[::1] seq) noexcept nogil:
    cdef Py_ssize_t L = seq.shape[0], t
    cdef double e = -S[seq[0]]
    for t in range(1, L):
        e -= T[seq[t - 1], seq[t]]
    if L < max_len:
        e -= T[seq[L - 1], eos]
    return e


cdef double _proposal(const double[::1] S, const double[:, ::1] T, long eos, long max_len,
                      long n_letters, long[::1] seq, double temp, double[:, ::1] g,
                      double[::1] d, double[::1] cs) noexcept nogil:
    """Fill proposal logits ``d`` and their shifted cumulative sums ``cs``; return the max."""
    cdef Py_ssize_t L = seq.shape[0], t, v, k
    cdef double cur, dmax = -INFINITY, acc = 0.0
    _energy_grad(S, T, eos, max_len, n_letters, seq, g)
    for t in range(L):
        cur = g[t, seq[t]]
        for v in range(n_letters):
            k = t * n_letters + v
            if v == seq[t]:
                d[k] = -INFINITY
            else:
                d[k] = -(g[t, v] - cur) / temp
                if d[k] > dmax:
                    dmax = d[k]
    for k in range(L * n_letters):
        if d[k] != -INFINITY:
            acc += exp(d[k] - dmax)
        cs[k] = acc
    return dmax


def gwg_chain(const double[::1] S, const double[:, ::1] T, long eos, long max_len, long n_letters,
              const long[::1] seq0, double temp, const double[:, ::1] uniforms):
    cdef Py_ssize_t n_steps = uniforms.shape[0], L = seq0.shape[0], K = L * n_letters
    cdef Py_ssize_t s, t, idx, lo, hi, mid, pos
    cdef long tok, old
    seq_arr = np.array(seq0, dtype=np.int64)
    cand_arr = np.array(seq0, dtype=np.int64)
    cdef long[::1] seq = seq_arr
    cdef long[::1] cand = cand_arr
    states_arr = np.empty((n_steps, L), dtype=np.int64)
    energies_arr = np.empty(n_steps, dtype=np.float64)
    accepted_arr = np.zeros(n_steps, dtype=np.uint8)
    cdef long[:, ::1] states = states_arr
    cdef double[::1] energies = energies_arr
    cdef unsigned char[::1] accepted = accepted_arr
    cdef double[:, ::1] g = np.empty((L, n_letters), dtype=np.float64)
    cdef double[::1] d = np.empty(K, dtype=np.float64)
    cdef double[::1] cs = np.empty(K, dtype=np.float64)
    cdef double[::1] rd = np.empty(K, dtype=np.float64)
    cdef double[::1] rcs = np.empty(K, dtype=np.float64)
    cdef double energy, e_cand, dmax, rmax, total, target, log_fwd, log_rev, log_accept
    with nogil:
        energy = _energy(S, T, eos, max_len, seq)
        for s in range(n_steps):
            dmax = _proposal(S, T, eos, max_len, n_letters, seq, temp, g, d, cs)
            total = cs[K - 1]
            target = uniforms[s, 0] * total
            lo = 0
            hi = K
            while lo < hi:  # first index with cs > target
                mid = (lo + hi) // 2
                if cs[mid] <= target:
                    lo = mid + 1
                else:
                    hi = mid
            idx = lo if lo < K else K - 1
            while d[idx] == -INFINITY:
                idx -= 1
            pos = idx // n_letters
            tok = idx % n_letters
            log_fwd = d[idx] - dmax - log(total)

            for t in range(L):
                cand[t] = seq[t]
            old = seq[pos]
            cand[pos] = tok
            rmax = _proposal(S, T, eos, max_len, n_letters, cand, temp, g, rd, rcs)
            log_rev = rd[pos * n_letters + old] - rmax - log(rcs[K - 1])
            e_cand = _energy(S, T, eos, max_len, cand)
            log_accept = -(e_cand - energy) + log_rev - log_fwd
            if log(uniforms[s, 1]) < log_accept:
                seq[pos] = tok
                energy = e_cand
                accepted[s] = 1
            for t in range(L):
                states[s, t] = seq[t]
            energies[s] = energy
    return states_arr, energies_arr, accepted_arr


def markov_sample(const double[::1] S, const double[:, ::1] T, long eos, long max_len,
                  double temperature, double top_p, const double[:, ::1] uniforms):
    cdef Py_ssize_t n = uniforms.shape[0], V = S.shape[0]
    out_arr = np.full((n, max_len), -1, dtype=np.int64)
    lengths_arr = np.zeros(n, dtype=np.int64)
    cdef long[:, ::1] out = out_arr
    cdef long[::1] lengths = lengths_arr
    cdef double[::1] e = np.empty(V, dtype=np.float64)
    cdef double[::1] cs = np.empty(V, dtype=np.float64)
    cdef long[::1] order = np.empty(V, dtype=np.int64)
    cdef Py_ssize_t j, t, v, a, b, nkeep, pick
    cdef long tok, key
    cdef double xmax, acc, target
    cdef const double[::1] row
    for j in range(n):
        row = S
        for t in range(max_len):
            xmax = -INFINITY
            for v in range(V):
                if row[v] / temperature > xmax:
                    xmax = row[v] / temperature
            for v in range(V):
                e[v] = exp(row[v] / temperature - xmax)
                order[v] = v
            # stable insertion sort, descending by e
            for a in range(1, V):
                key = order[a]
                b = a - 1
                while b >= 0 and e[order[b]] < e[key]:
                    order[b + 1] = order[b]
                    b -= 1
                order[b + 1] = key
            acc = 0.0
            for v in range(V):
                acc += e[order[v]]
                cs[v] = acc
            nkeep = 0
            while nkeep < V and cs[nkeep] < top_p * cs[V - 1]:
                nkeep += 1
            nkeep += 1
            if nkeep > V:
                nkeep = V
            target = uniforms[j, t] * cs[nkeep - 1]
            pick = 0
            while pick < nkeep and cs[pick] <= target:
                pick += 1
            if pick > nkeep - 1:
                pick = nkeep - 1
            tok = order[pick]
            if tok == eos:
                break
            out[j, t] = tok
            lengths[j] += 1
            row = T[tok]
    return out_arr, lengths_arr
