"""Time the compiled kernels against the NumPy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat 5] [--quick] [--json out.json]
"""

import argparse
import json
import sys
import timeit

import numpy as np

from tcheby import _kernels
from tcheby.core import Vocabulary
from tcheby.policy import Context, SequencePolicy, encode_batch


def workloads(quick: bool):
    rng = np.random.default_rng(0)
    n_seq, seq_len, n_chain, n_hv = (200, 30, 500, 200) if quick else (2000, 60, 5000, 2000)
    pol = SequencePolicy.random(Vocabulary("ACDEFGHIKLMNPQRSTVWY"), seq_len, rng)
    seqs = ["".join(rng.choice(list(pol.vocab.alphabet), size=int(rng.integers(seq_len // 2, seq_len + 1))))
            for _ in range(n_seq)]
    b = encode_batch(pol, [Context()] * n_seq, seqs)
    lpi, lpt = pol.log_tables()
    pi, pt = pol.prob_tables()
    coefs = rng.normal(size=n_seq)
    first, trans = pol.start_row(None)
    eos, L, V = pol.vocab.eos, pol.max_len, pol.vocab.n_letters
    seq0 = pol.vocab.encode(seqs[0][: L // 2]).astype(np.int64)
    u_chain = rng.random((n_chain, 2))
    u_samp = rng.random((n_seq, L))
    t = rng.uniform(0, np.pi / 2, size=n_hv)
    P2 = np.column_stack([np.cos(t), np.sin(t)]) * rng.uniform(0.5, 1, size=(n_hv, 1))
    P3 = rng.dirichlet(np.ones(3), size=n_hv // 4) ** 0.5

    def grad(mod):
        gi, gt = np.zeros_like(pi), np.zeros_like(pt)
        mod.markov_grad(pi, pt, b.cls, b.start, b.tokens, b.offsets, coefs, eos, L, gi, gt)

    return {
        f"markov_logprob ({n_seq} seqs)": lambda m: m.markov_logprob(lpi, lpt, b.cls, b.start, b.tokens, b.offsets,
                                                                     eos, L),
        f"markov_grad ({n_seq} seqs)": grad,
        f"markov_sample ({n_seq} draws, top-p 0.9)": lambda m: m.markov_sample(first, trans, eos, L, 1.0, 0.9, u_samp),
        f"gwg_chain ({n_chain} steps)": lambda m: m.gwg_chain(first, trans, eos, L, V, seq0, 2.0, u_chain),
        f"hv2d ({n_hv} points)": lambda m: m.hv2d(P2, np.zeros(2)),
        f"hv3d ({n_hv // 4} points)": lambda m: m.hv3d(P3, np.zeros(3)),
    }


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--quick", action="store_true", help="small workloads for smoke testing")
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)

    mods = _kernels.backends()
    if "cython" not in mods:
        print("compiled extension not built; timing the fallback only", file=sys.stderr)
    results = []
    print(f"{'kernel':<40} " + " ".join(f"{n + ' [ms]':>14}" for n in mods) + f" {'speedup':>9}")
    for name, fn in workloads(args.quick).items():
        row = {"kernel": name}
        for bname, mod in mods.items():
            fn(mod)  # warm-up
            row[bname] = 1e3 * min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        if "cython" in row:
            row["speedup"] = row["python"] / row["cython"]
        results.append(row)
        print(f"{name:<40} " + " ".join(f"{row[n]:>14.3f}" for n in mods)
              + (f" {row['speedup']:>8.1f}x" if "speedup" in row else ""))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
