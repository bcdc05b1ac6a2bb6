"""Command-line front end.

Every subcommand writes its outputs plus ``manifest.json`` (config hash, seed,
library versions) into ``--out``. Usage and configuration errors exit with
status 1 and runtime failures with status 2; in both cases a single JSON line
``{"error": ..., "message": ...}`` goes to stderr and nothing is written.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__, _kernels
from .core import (AMINO_ACIDS, PRESETS, ConfigError, DatasetError, PreferenceVector, RunConfig,
                   compute_reward_stats, load_dataset, save_dataset)

logger = logging.getLogger("tcheby")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _lambda_grid(text: str) -> list[PreferenceVector]:
    """``"1/3,2/3;1/2,1/2"`` -> list of preference vectors."""
    try:
        return [PreferenceVector.parse(part) for part in text.split(";") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"--lambda: {exc}") from None


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None


def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        doc = yaml.safe_load(p.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML/JSON: {str(exc).splitlines()[0]}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"config file {path} must contain a key/value mapping")
    return doc


def build_config(args) -> tuple[RunConfig, list[PreferenceVector]]:
    """Merge preset, config file and flags (in that order) into a validated RunConfig."""
    doc = _load_config(args.config)
    preset = doc.pop("preset", None)
    merged = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    merged.update(doc)
    for flag, key in (("algo", "algorithm"), ("tau", "tau"), ("gamma", "gamma"), ("alpha", "alpha"),
                      ("beta", "beta"), ("delta", "delta"), ("seed", "seed")):
        v = getattr(args, flag, None)
        if v is not None:
            merged[key] = v
    if getattr(args, "checkpoints", None) is not None:
        merged["checkpoints"] = _floats(args.checkpoints)
    grid = _lambda_grid(args.lam) if getattr(args, "lam", None) else None
    if grid:
        merged["lam"] = grid[0].weights.tolist()
    try:
        cfg = RunConfig.from_dict(merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, grid or [cfg.preference]


def _versions() -> dict:
    return {"tcheby": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "backend": _kernels.BACKEND}


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def write_manifest(out: Path, command: str, params: dict, seed, inputs=()) -> None:
    blob = json.dumps(params, sort_keys=True, default=str).encode()
    doc = {"command": command, "params": params, "config_hash": hashlib.sha256(blob).hexdigest()[:16],
           "seed": seed, "inputs": {str(p): _file_digest(p) for p in inputs}, "versions": _versions()}
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def _dump_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- subcommands

def cmd_synth(args):
    from .synth import SyntheticSpec, gen_landscape, save_spec

    try:
        spec = SyntheticSpec(k=args.k, correlation=args.correlation, front=args.front, n_contexts=args.contexts,
                             items_per_context=args.items, seq_len=args.seq_len, alphabet=args.alphabet,
                             noise=args.noise, max_mutations=args.max_mutations, test_fraction=args.test_fraction,
                             seed=args.seed if args.seed is not None else 0)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    land = gen_landscape(spec)

    def write(out):
        save_dataset(land.train, out / "train.csv")
        if land.test is not None:
            save_dataset(land.test, out / "test.csv")
        save_spec(spec, out / "synth_spec.json")
        _dump_json(out / "wild_types.json", land.wild_types)
        write_manifest(out, "synth", spec.to_dict(), spec.seed)
    return write


def cmd_stats(args):
    ds = load_dataset(args.data, vocab=_vocab(args))
    cfg, _ = build_config(args)
    stats = compute_reward_stats(ds, cfg.gamma)

    def write(out):
        _dump_json(out / "stats.json", {"objectives": list(ds.objectives), **stats.to_dict()})
        write_manifest(out, "stats", {"gamma": cfg.gamma}, None, [args.data])
    return write


def _vocab(args):
    from .core import Vocabulary
    return Vocabulary(args.alphabet)


def cmd_pretrain(args):
    from .policy import mle_pretrain, save_policy

    ds = load_dataset(args.data, vocab=_vocab(args))
    classes = {g.context_id: i for i, g in enumerate(ds.groups)} if args.per_context else {}
    policy = mle_pretrain(ds, epochs=args.epochs, lr=args.lr, max_len=args.max_len, context_classes=classes,
                          n_classes=max(len(classes), 1))

    def write(out):
        save_policy(policy, out / "ref.json")
        write_manifest(out, "pretrain", {"epochs": args.epochs, "lr": args.lr, "max_len": policy.max_len,
                                         "per_context": args.per_context}, None, [args.data])
    return write


def run_name(cfg: RunConfig, lam: PreferenceVector) -> str:
    return f"{cfg.algorithm}_lam{lam.label()}_s{cfg.seed}"


def cmd_train(args):
    from dataclasses import replace

    from .policy import load_policy
    from .trainer import train, write_run

    cfg, grid = build_config(args)
    if args.steps is not None:
        # keep the configured warmup fraction when only the length changes
        warm = int(round(cfg.warmup_steps * args.steps / max(cfg.total_steps, 1)))
        cfg = replace(cfg, total_steps=args.steps, warmup_steps=min(warm, max(args.steps - 1, 0)))
    ds = load_dataset(args.data, vocab=_vocab(args))
    ref = load_policy(args.ref)
    if any(len(lam) != ds.k for lam in grid):
        raise ConfigError(f"preference vectors must have {ds.k} entries")
    stats = compute_reward_stats(ds, cfg.gamma)
    runs = []
    for lam in grid:
        c = replace(cfg, lam=tuple(lam.weights.tolist()))
        metrics = []
        ckpts = train(c, ds, ref, stats=stats, metrics_log=metrics)
        runs.append((run_name(c, lam), c, ckpts, metrics))

    def write(out):
        for name, c, ckpts, metrics in runs:
            write_run(out / name, ckpts, metrics)
            _dump_json(out / name / "run.json", {"name": name, "config": c.to_dict(), "config_hash": c.digest()})
        write_manifest(out, "train", {"config": cfg.to_dict(), "lambda_grid": [g.weights.tolist() for g in grid]},
                       cfg.seed, [args.data, args.ref])
    return write


def _run_dirs(root: Path):
    return sorted(p.parent for p in root.glob("*/run.json")) or ([root] if (root / "run.json").exists() else [])


def _evaluate_runs(run_roots, ref, test, normalization):
    from .evaluate import wis_expected_rewards
    from .trainer import read_run

    rows = []
    for root in run_roots:
        dirs = _run_dirs(Path(root))
        if not dirs:
            raise DatasetError(f"{root}: no training runs found")
        for d in dirs:
            meta = json.loads((d / "run.json").read_text())
            lam = PreferenceVector(np.array(meta["config"]["lam"]))
            for frac, pol in read_run(d):
                er = wis_expected_rewards(pol, ref, test, normalization)
                rows.append((meta["name"], meta["config"]["algorithm"], lam.label(), frac, er.values,
                             float(np.mean(er.ess))))
    return rows


def _front_outputs(out: Path, rows, objectives, reference):
    from .evaluate import checkpoint_front

    Y = np.array([r[4] for r in rows])
    sel = checkpoint_front(Y, reference)
    _write_csv(out / "front.csv", ["run", "algorithm", "lambda", "checkpoint", *objectives, "selected"],
               [(rows[i][0], rows[i][1], rows[i][2], f"{rows[i][3]:.2f}", *rows[i][4], int(i in sel.selected))
                for i in sel.front])
    _dump_json(out / "hypervolume.json", {
        "hypervolume": sel.hypervolume, "reference": sel.reference.tolist(), "front_size": len(sel.front),
        "n_candidates": len(rows),
        "selected": [{"run": rows[i][0], "checkpoint": round(rows[i][3], 2)} for i in sel.selected]})
    return sel


def _reference(args):
    return None if getattr(args, "reference", None) is None else np.array(_floats(args.reference))


def cmd_eval(args):
    from .policy import load_policy

    ref = load_policy(args.ref)
    test = load_dataset(args.test, vocab=ref.vocab)
    rows = _evaluate_runs(args.runs, ref, test, args.normalization)
    reference = _reference(args)

    def write(out):
        _write_csv(out / "expected_rewards.csv",
                   ["run", "algorithm", "lambda", "checkpoint", *test.objectives, "ess_mean"],
                   [(r[0], r[1], r[2], f"{r[3]:.2f}", *r[4], r[5]) for r in rows])
        _front_outputs(out, rows, test.objectives, reference)
        write_manifest(out, "eval", {"runs": [str(r) for r in args.runs], "normalization": args.normalization,
                                     "reference": None if reference is None else reference.tolist()},
                       None, [args.ref, args.test])
    return write


def _read_expected(paths):
    rows, objectives = [], None
    for p in paths:
        with open(p, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            objs = header[4:-1]
            if objectives is not None and objs != objectives:
                raise DatasetError(f"{p}: objective columns differ from the first file")
            objectives = objs
            for r in reader:
                rows.append((r[0], r[1], r[2], float(r[3]), np.array([float(x) for x in r[4:-1]]), float(r[-1])))
    if not rows:
        raise DatasetError("no expected-reward rows")
    return rows, objectives


def cmd_front(args):
    rows, objectives = _read_expected(args.expected)
    reference = _reference(args)

    def write(out):
        _front_outputs(out, rows, objectives, reference)
        write_manifest(out, "front", {"reference": None if reference is None else reference.tolist()}, None,
                       args.expected)
    return write


def cmd_report(args):
    """Per-algorithm hypervolumes over pooled expected rewards with one shared reference."""
    from .evaluate import default_reference, hypervolume, pareto_mask

    rows, objectives = _read_expected(args.expected)
    Y = np.array([r[4] for r in rows])
    reference = _reference(args)
    reference = default_reference(Y) if reference is None else reference
    algos = sorted({r[1] for r in rows})
    table = []
    for a in algos:
        idx = [i for i, r in enumerate(rows) if r[1] == a]
        front = Y[idx][pareto_mask(Y[idx])]
        table.append((a, hypervolume(front, reference), len(front), len(idx)))

    def write(out):
        _write_csv(out / "report.csv", ["algorithm", "hypervolume", "front_size", "n_candidates"], table)
        write_manifest(out, "report", {"reference": reference.tolist()}, None, args.expected)
    return write


def cmd_generate(args):
    from .policy import Context, load_policy, sample

    policy = load_policy(args.policy)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    ctx = Context(args.context, args.prompt)
    if args.method == "topp":
        if not 0 < args.top_p <= 1 or not args.temperature > 0:
            raise ConfigError("top_p must lie in (0, 1] and temperature must be > 0")
        seqs = sample(policy, ctx, temperature=args.temperature, top_p=args.top_p, rng=rng, n=args.n)
        rows = [(i, s) for i, s in enumerate(seqs) if s]
        header = ["index", "sequence"]
        params = {"method": "topp", "n": args.n, "top_p": args.top_p, "temperature": args.temperature}
    else:
        from .gwg import run_trajectories

        if not args.wild_type:
            raise ConfigError("--wild-type is required for --method gwg")
        if not args.proposal_temp > 0 or not 0 <= args.burn_in < 1:
            raise ConfigError("proposal_temp must be > 0 and burn_in in [0, 1)")
        samples = run_trajectories(policy, ctx, args.wild_type, args.trajectories, args.steps, args.max_mutations,
                                   args.proposal_temp, rng, burn_in=args.burn_in, thin=args.thin)
        rows = [(s.trajectory, s.step, s.sequence, s.energy, s.n_mutations) for s in samples]
        header = ["trajectory", "step", "sequence", "energy", "n_mutations"]
        params = {"method": "gwg", "wild_type": args.wild_type, "n_trajectories": args.trajectories,
                  "n_steps": args.steps, "max_mutations": args.max_mutations, "proposal_temp": args.proposal_temp,
                  "burn_in": args.burn_in, "thin": args.thin}
    params.update(context=args.context, prompt=args.prompt)

    def write(out):
        _write_csv(out / "sequences.csv", header, rows)
        write_manifest(out, "generate", params, args.seed, [args.policy])
    return write


def cmd_gp_fit(args):
    from .gp import HyperPriors, KmerFeatures, fit_map

    ds = load_dataset(args.data, vocab=_vocab(args))
    feats = KmerFeatures(ds.vocab.alphabet)
    seqs = [s for g in ds.groups for s in g.sequences]
    X = feats(seqs)
    Y = ds.all_rewards()
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    priors = HyperPriors(dim=feats.dim)
    models = [fit_map(X, Y[:, i], priors, restarts=args.restarts, rng=rng) for i in range(ds.k)]

    def write(out):
        _dump_json(out / "gp.json", {"objectives": list(ds.objectives), "data": str(args.data),
                                     "data_sha256": _file_digest(args.data), "alphabet": ds.vocab.alphabet,
                                     "feature_dim": feats.dim, "models": [m.to_dict() for m in models]})
        write_manifest(out, "gp-fit", {"restarts": args.restarts}, args.seed, [args.data])
    return write


def cmd_gp_ehv(args):
    from .core import Vocabulary
    from .gp import GPModel, KmerFeatures, expected_hypervolume

    doc = json.loads(Path(args.gp).read_text())
    vocab = Vocabulary(doc["alphabet"])
    train = load_dataset(doc["data"], objectives=doc["objectives"], vocab=vocab)
    if _file_digest(doc["data"]) != doc["data_sha256"]:
        raise DatasetError(f"{doc['data']} changed since the GP was fitted")
    feats = KmerFeatures(vocab.alphabet)
    X = feats([s for g in train.groups for s in g.sequences])
    Y = train.all_rewards()
    models = [GPModel(d["mean"], d["lengthscale"], d["signal_var"], d["noise_var"], X, Y[:, i])
              for i, d in enumerate(doc["models"])]
    with open(args.candidates, newline="") as fh:
        cands = [r["sequence"] for r in csv.DictReader(fh)]
    bad = [s for s in cands if set(s) - set(vocab.alphabet)]
    if bad:
        raise DatasetError(f"{len(bad)} candidate(s) contain letters outside the alphabet")
    if args.reference is not None:
        reference = np.array(_floats(args.reference))
    else:
        test = load_dataset(args.test, objectives=doc["objectives"], vocab=vocab)
        reference = test.all_rewards().min(axis=0)
    sizes = _ints(args.sizes)
    if not cands or max(sizes) > len(cands):
        raise ConfigError(f"subset sizes {sizes} need at least {max(sizes)} candidates, found {len(cands)}")
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    res = expected_hypervolume(models, feats(cands), sizes, args.n_qmc, args.repeats, reference, rng)

    def write(out):
        _write_csv(out / "ehv.csv", ["k", "mean", "std"], res.rows)
        _dump_json(out / "ehv.json", res.metadata)
        write_manifest(out, "gp-ehv", res.metadata, args.seed,
                       [args.gp, args.candidates] + ([args.test] if args.test else []))
    return write


def cmd_scalarize(args):
    from .scalarize import scalarize_group

    cfg, grid = build_config(args)
    ds = load_dataset(args.data, vocab=_vocab(args))
    stats = compute_reward_stats(ds, cfg.gamma)
    rows = []
    for lam in grid:
        if len(lam) != ds.k:
            raise ConfigError(f"preference vectors must have {ds.k} entries")
        for m, g in enumerate(ds.groups):
            R = scalarize_group(args.method, g.rewards, m, lam.weights, stats, tau=cfg.tau)
            rows.extend((g.context_id, s, lam.label(), args.method, float(v)) for s, v in zip(g.sequences, R))

    def write(out):
        _write_csv(out / "scalarized.csv", ["context_id", "sequence", "lambda", "method", "value"], rows)
        write_manifest(out, "scalarize", {"method": args.method, "gamma": cfg.gamma, "tau": cfg.tau,
                                          "lambda_grid": [g.weights.tolist() for g in grid]}, None, [args.data])
    return write


# ---------------------------------------------------------------- parser

def _common(p, run_flags=True):
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--config", help="YAML/JSON file of RunConfig keys (optional 'preset')")
    p.add_argument("--alphabet", default=AMINO_ACIDS)
    if run_flags:
        p.add_argument("--lambda", dest="lam", help="preference grid, e.g. '1/3,2/3;1/2,1/2;2/3,1/3'")
        p.add_argument("--algo", help="dpo-lin | odpo-lin | odpo-stz | odpo-sq | stomp")
        for name in ("tau", "gamma", "alpha", "beta", "delta"):
            p.add_argument(f"--{name}", type=float)
        p.add_argument("--checkpoints", help="comma-separated training fractions")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tcheby", description="Multi-objective preference optimization toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic landscape")
    _common(p, run_flags=False)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--correlation", type=float, default=0.0)
    p.add_argument("--front", choices=("convex", "concave"), default="convex")
    p.add_argument("--contexts", type=int, default=1)
    p.add_argument("--items", type=int, default=300)
    p.add_argument("--seq-len", type=int, default=12)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--max-mutations", type=int, default=3)
    p.add_argument("--test-fraction", type=float, default=0.3)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="reward statistics of a dataset")
    _common(p)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("pretrain", help="fit the reference policy by maximum likelihood")
    _common(p, run_flags=False)
    p.add_argument("--data", required=True)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--lr", type=float, default=2.0)
    p.add_argument("--max-len", type=int)
    p.add_argument("--per-context", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="train one run per preference vector")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ref", required=True, help="reference policy checkpoint")
    p.add_argument("--steps", type=int, help="total steps; the warmup fraction is kept")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="WIS expected rewards of every checkpoint")
    _common(p, run_flags=False)
    p.add_argument("--runs", nargs="+", required=True, help="train output directories")
    p.add_argument("--ref", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--normalization", choices=("double", "standard"), default="double")
    p.add_argument("--reference", help="hypervolume reference point, comma-separated")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("front", help="Pareto front and hypervolume of expected rewards")
    _common(p, run_flags=False)
    p.add_argument("--expected", nargs="+", required=True)
    p.add_argument("--reference")
    p.set_defaults(func=cmd_front)

    p = sub.add_parser("generate", help="sample sequences from a policy")
    _common(p, run_flags=False)
    p.add_argument("--policy", required=True)
    p.add_argument("--method", choices=("topp", "gwg"), default="topp")
    p.add_argument("--context", default="")
    p.add_argument("--prompt", default="")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--top-p", type=float, default=0.95)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--wild-type")
    p.add_argument("--trajectories", type=int, default=1500)
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--max-mutations", type=int, default=10)
    p.add_argument("--proposal-temp", type=float, default=2.0)
    p.add_argument("--burn-in", type=float, default=0.1)
    p.add_argument("--thin", type=int, default=1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("gp-fit", help="fit one GP per objective")
    _common(p, run_flags=False)
    p.add_argument("--data", required=True)
    p.add_argument("--restarts", type=int, default=5)
    p.set_defaults(func=cmd_gp_fit)

    p = sub.add_parser("gp-ehv", help="expected hypervolume of generated candidates")
    _common(p, run_flags=False)
    p.add_argument("--gp", required=True)
    p.add_argument("--candidates", required=True, help="CSV with a 'sequence' column")
    p.add_argument("--test", help="test set; its per-objective minimum is the reference point")
    p.add_argument("--reference")
    p.add_argument("--sizes", default="12,24,48,96,192,384")
    p.add_argument("--n-qmc", type=int, default=256)
    p.add_argument("--repeats", type=int, default=100)
    p.set_defaults(func=cmd_gp_ehv)

    p = sub.add_parser("scalarize", help="per-item scalarized rewards")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("linear", "stz", "st", "hard-tcheby"), default="st")
    p.set_defaults(func=cmd_scalarize)

    p = sub.add_parser("report", help="per-algorithm hypervolumes with a shared reference")
    _common(p, run_flags=False)
    p.add_argument("--expected", nargs="+", required=True)
    p.add_argument("--reference")
    p.set_defaults(func=cmd_report)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": " ".join(str(message).split())}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", exc, 1)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "gp-ehv" and args.test is None and args.reference is None:
        return _fail("config", "gp-ehv needs --test or --reference", 1)
    try:
        # every stage computes fully in memory before anything touches the output directory
        write = args.func(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write(out)
    except (ConfigError, UsageError) as exc:
        return _fail("config", exc, 1)
    except (DatasetError, FileNotFoundError) as exc:
        return _fail("data", exc, 2)
    except Exception as exc:  # noqa: BLE001
        logger.debug("runtime failure", exc_info=True)
        return _fail("runtime", f"{type(exc).__name__}: {exc}", 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
