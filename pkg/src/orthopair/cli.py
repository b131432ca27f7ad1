"""Command-line entry point: ``orthopair <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric/training failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import logging
import sys
import traceback
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import (
    FORMATS,
    SplitSpec,
    bundled_lexicon,
    extract_candidates,
    load_lexicon,
    load_pairs,
    split,
    write_pairs,
    write_rejects,
)
from .errors import DegenerateLatticeError, OrthoPairError, TrainingDivergedError
from .strings import LD_BUCKETS, Alphabet, ld_histogram

log = logging.getLogger("orthopair")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
MANIFEST = "manifest.json"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# helpers


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _prepare_out(out, force: bool) -> Path:
    out = Path(out)
    if out.exists() and any(out.iterdir()) and not force:
        raise UsageError(f"output directory {out} is not empty (use --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_manifest(out: Path, args, inputs, started: datetime) -> None:
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "force")}
    manifest = {
        "command": args.command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs if p is not None},
        "seed": getattr(args, "seed", None),
        "tool_version": __version__,
        "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
    }
    _write(out / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")


def _lexicon(path):
    return bundled_lexicon() if path is None else load_lexicon(path)


def _alphabet(pairs, lexicon) -> Alphabet:
    return Alphabet.from_tokens([t for p in pairs for t in (p.variant, p.standard)] + list(lexicon.tokens))


def _train_config(args):
    from .training import TrainConfig

    return TrainConfig(
        batch_size=args.batch_size,
        validation_frequency=args.val_freq,
        patience=args.patience,
        max_epochs=args.max_epochs,
        seed=args.seed,
        d_emb=args.emb_size,
        layers=args.layers,
        learning_rate=args.lr,
    )


# ---------------------------------------------------------------------------
# commands


def cmd_characterize(args):
    rejects = []
    pairs = load_pairs(args.corpus, args.format, lowercase=not args.keep_case, rejects=rejects)
    hist = ld_histogram(pairs)
    lines = ["bucket,count,percent"]
    lines += [f"{k}LD,{c},{p:.1f}" for k, c, p in hist.rows()]
    table = "\n".join(lines) + "\n"
    summary = (
        f"{Path(args.corpus).name}: "
        + "  ".join(f"{k}LD {hist.percentages[k]:.1f}%" for k in LD_BUCKETS)
        + f"  (n={hist.total}, ld0={hist.zero_ld}, rejected={len(rejects)})"
    )
    print(summary)
    if args.out:
        out = _prepare_out(args.out, args.force)
        _write(out / "ld_histogram.csv", table)
        if rejects:
            write_rejects(out / "rejects.tsv", rejects)
        return out, [args.corpus]
    return None, [args.corpus]


def cmd_extract(args):
    lexicon = _lexicon(args.lexicon)
    rows = []
    for path in args.text:
        text = Path(path).read_text(encoding="utf-8")
        for cand, sentence in extract_candidates(text, lexicon):
            rows.append((cand, sentence, Path(path).name))
    if args.sample is not None and args.sample < len(rows):
        rng = np.random.default_rng(args.seed)
        keep = sorted(rng.choice(len(rows), size=args.sample, replace=False))
        rows = [rows[i] for i in keep]
    out = _prepare_out(args.out, args.force)
    lines = ["candidate\tcontext\tsource_id"] + ["\t".join(r) for r in rows]
    _write(out / "candidates.tsv", "\n".join(lines) + "\n")
    print(f"{len(rows)} candidates")
    return out, [*args.text, args.lexicon]


def cmd_split(args):
    rejects = []
    pairs = load_pairs(args.corpus, args.format, rejects=rejects)
    try:
        spec = SplitSpec(tuple(args.fractions), args.seed, args.grouping)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    parts = split(pairs, spec)
    out = _prepare_out(args.out, args.force)
    for name, part in zip(("train", "val", "test"), parts):
        write_pairs(out / f"{name}.tsv", part)
    if rejects:
        write_rejects(out / "rejects.tsv", rejects)
    print("train/val/test sizes: " + "/".join(str(len(p)) for p in parts))
    return out, [args.corpus]


def cmd_gen_negatives(args):
    from .negatives import NegativeStrategy, generate_negatives, negative_ld_csv

    pairs = load_pairs(args.corpus, args.format)
    lexicon = _lexicon(args.lexicon)
    sets = {}
    for kind in args.strategy:
        for n in args.n:
            sets[(kind, n)] = generate_negatives(pairs, lexicon, NegativeStrategy(kind, n, args.seed))
    out = _prepare_out(args.out, args.force)
    for (kind, n), s in sets.items():
        _write(out / f"negatives_{kind}_{n}.tsv", s.to_tsv())
    _write(out / "negative_ld.csv", negative_ld_csv(sets))
    for (kind, n), s in sets.items():
        print(f"{kind:>6} n={n:<3} rows={len(s.rows):<6} avg_ld={s.avg_ld:.3f}")
    return out, [args.corpus, args.lexicon]


def _labeled(pairs, lexicon, kind, n, seed):
    from .negatives import NegativeStrategy, generate_negatives, labeled_pairs

    negs = generate_negatives(pairs, lexicon, NegativeStrategy(kind, n, seed))
    return labeled_pairs(pairs, negs), negs


def cmd_train(args):
    from .training import build_model, train

    train_pairs = load_pairs(args.train, args.format)
    val_pairs = load_pairs(args.val, args.format)
    lexicon = _lexicon(args.lexicon)
    cfg = _train_config(args)
    kind, n = args.strategy[0], args.n[0]
    train_data, _ = _labeled(train_pairs, lexicon, kind, n, args.seed)
    val_data, _ = _labeled(val_pairs, lexicon, kind, n, args.seed + 1)
    out = _prepare_out(args.out, args.force)
    model = build_model(_alphabet(train_pairs + val_pairs, lexicon), cfg)
    _, report = train(model, train_data, val_data, cfg, checkpoint_dir=out)
    (out / "last.pt").unlink(missing_ok=True)
    print(f"best val F1 {report.best_f1:.4f} at step {report.best_step} (tau={report.best_tau:.4f}, stop: {report.stop_reason})")
    return out, [args.train, args.val, args.lexicon]


def cmd_evaluate(args):
    from . import neural
    from .evaluation import classify_pairs

    model = neural.load(args.model)
    test_pairs = load_pairs(args.test, args.format)
    lexicon = _lexicon(args.lexicon)
    data, _ = _labeled(test_pairs, lexicon, args.strategy[0], args.n[0], args.seed + 2)
    report = classify_pairs(model, data)
    out = _prepare_out(args.out, args.force)
    _write(out / "summary.csv", report.summary_csv())
    print(f"P {report.precision:.4f}  R {report.recall:.4f}  F1 {report.f1:.4f}  (tau={report.tau:.4f})")
    return out, [args.model, args.test, args.lexicon]


def cmd_rank(args):
    from . import neural
    from .evaluation import rank_against_lexicon

    model = neural.load(args.model)
    test_pairs = load_pairs(args.test, args.format)
    lexicon = _lexicon(args.lexicon)
    report = rank_against_lexicon(model, test_pairs, lexicon)
    out = _prepare_out(args.out, args.force)
    _write(out / "summary.csv", report.summary_csv())
    _write(out / "ranks.tsv", report.ranks_tsv())
    print(f"MRR {report.mrr:.4f} over {len(report.queries)} queries (coverage {report.coverage:.3f})")
    return out, [args.model, args.test, args.lexicon]


def run_cell(kind, n, train_pairs, val_pairs, test_pairs, lexicon, alphabet, cfg, cell_dir):
    """Train and evaluate one (strategy, n) cell; returns (report, avg_ld of train negatives)."""
    import torch

    from .evaluation import classify_pairs, rank_against_lexicon
    from .training import build_model, train

    torch.set_num_threads(1)
    cell_dir = Path(cell_dir)
    train_data, train_negs = _labeled(train_pairs, lexicon, kind, n, cfg.seed)
    val_data, _ = _labeled(val_pairs, lexicon, kind, n, cfg.seed + 1)
    test_data, _ = _labeled(test_pairs, lexicon, kind, n, cfg.seed + 2)
    model = build_model(alphabet, cfg)
    model, _ = train(model, train_data, val_data, cfg, checkpoint_dir=cell_dir)
    (cell_dir / "last.pt").unlink(missing_ok=True)
    report = classify_pairs(model, test_data).merge(rank_against_lexicon(model, test_pairs, lexicon))
    _write(cell_dir / "eval_summary.csv", report.summary_csv())
    _write(cell_dir / "ranks.tsv", report.ranks_tsv())
    return report, train_negs.avg_ld


def cmd_sweep(args):
    from .evaluation import mrr_by_n_csv, sweep_report

    pairs = load_pairs(args.corpus, args.format)
    lexicon = _lexicon(args.lexicon)
    try:
        spec = SplitSpec(tuple(args.fractions), args.seed, args.grouping)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    train_pairs, val_pairs, test_pairs = split(pairs, spec)
    cfg = _train_config(args)
    alphabet = _alphabet(pairs, lexicon)
    out = _prepare_out(args.out, args.force)
    for name, part in zip(("train", "val", "test"), (train_pairs, val_pairs, test_pairs)):
        write_pairs(out / f"split_{name}.tsv", part)

    cells = [(k, n) for k in args.strategy for n in args.n]
    results, avg_lds, failures = {}, {}, {}

    def submit(pool, kind, n):
        cell_dir = out / "cells" / f"{kind}-{n}"
        cell_dir.mkdir(parents=True, exist_ok=True)
        job = (kind, n, train_pairs, val_pairs, test_pairs, lexicon, alphabet, cfg, str(cell_dir))
        return pool.submit(run_cell, *job) if pool else job

    if args.jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = {submit(pool, k, n): (k, n) for k, n in cells}
            for fut in concurrent.futures.as_completed(futures):
                key = futures[fut]
                try:
                    results[key], avg_lds[key] = fut.result()
                except Exception as exc:  # recorded per cell; the sweep continues
                    failures[key] = f"{type(exc).__name__}: {exc}"
    else:
        for k, n in cells:
            try:
                results[(k, n)], avg_lds[(k, n)] = run_cell(*submit(None, k, n))
            except Exception as exc:
                log.debug("cell %s-%s failed\n%s", k, n, traceback.format_exc())
                failures[(k, n)] = f"{type(exc).__name__}: {exc}"
            else:
                r = results[(k, n)]
                print(f"{k:>6} n={n:<3} F1 {r.f1:.4f}  MRR {r.mrr:.4f}  avg_ld {avg_lds[(k, n)]:.3f}")

    _write(out / "sweep.csv", sweep_report(results))
    _write(out / "mrr_by_n.csv", mrr_by_n_csv(results))
    _write(out / "negative_ld.csv", _avg_ld_csv(avg_lds))
    if failures:
        lines = ["strategy\tn\terror"] + [f"{k}\t{n}\t{e}" for (k, n), e in sorted(failures.items())]
        _write(out / "failures.tsv", "\n".join(lines) + "\n")
        for (k, n), e in sorted(failures.items()):
            print(f"cell {k}-{n} failed: {e}", file=sys.stderr)
    return out, [args.corpus, args.lexicon], (EXIT_NUMERIC if failures else EXIT_OK)


def _avg_ld_csv(avg_lds) -> str:
    from .negatives import KINDS

    rows = sorted(avg_lds.items(), key=lambda kv: (KINDS.index(kv[0][0]), kv[0][1]))
    lines = ["strategy,n,avg_ld"] + [f"{k},{n},{v:.6f}" for (k, n), v in rows]
    return "\n".join(lines) + "\n"


def cmd_report(args):
    sweep_dir = Path(args.sweep_dir)
    rows = [line.split(",") for line in (sweep_dir / "sweep.csv").read_text().splitlines()[1:] if line]
    lds = {}
    ld_path = sweep_dir / "negative_ld.csv"
    if ld_path.exists():
        for line in ld_path.read_text().splitlines()[1:]:
            k, n, v = line.split(",")
            lds[(k, n)] = v
    lines = [f"{'Model':<8}{'Count':>6}{'F':>9}{'MRR':>9}{'avg LD':>9}"]
    for k, n, f1, mrr in rows:
        lines.append(f"{k:<8}{n:>6}{float(f1):>9.2f}{float(mrr):>9.2f}{lds.get((k, n), ''):>9}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        out = _prepare_out(args.out, args.force)
        _write(out / "summary.txt", text)
        return out, [sweep_dir / "sweep.csv"]
    return None, []


def cmd_synth(args):
    from .synthetic import SYSTEM_A, SYSTEM_B, synthetic_pairs

    lexicon = _lexicon(args.lexicon)
    systems = {"a": (SYSTEM_A,), "b": (SYSTEM_B,), "ab": (SYSTEM_A, SYSTEM_B)}[args.systems]
    pairs = synthetic_pairs(lexicon.tokens, args.count, seed=args.seed, systems=systems)
    out = _prepare_out(args.out, args.force)
    write_pairs(out / "pairs.tsv", pairs)
    print(f"{len(pairs)} synthetic pairs")
    return out, [args.lexicon]


# ---------------------------------------------------------------------------
# parser


def _add_common(p, corpus=True, out=True, out_required=True):
    if corpus:
        p.add_argument("--corpus", required=True, help="pair file")
        p.add_argument("--format", choices=FORMATS, default="gb-tsv")
    if out:
        p.add_argument("--out", required=out_required, help="output directory")
        p.add_argument("--force", action="store_true", help="write into a non-empty output directory")
    p.add_argument("--seed", type=int, default=0)


def _add_negatives(p, multi=False):
    p.add_argument("--lexicon", help="one token per line (default: bundled 1k English words)")
    nargs = "+" if multi else 1
    p.add_argument("--strategy", choices=("random", "ld", "mixed"), nargs=nargs, default=["random"])
    p.add_argument("--n", type=int, nargs=nargs, default=[10])


def _add_training(p):
    p.add_argument("--emb-size", type=int, default=256)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--batch-size", type=int, default=512)
    p.add_argument("--val-freq", type=int, default=50, help="validate every N batches")
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orthopair", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("characterize", help="LD histogram of a pair corpus")
    _add_common(p, out_required=False)
    p.add_argument("--keep-case", action="store_true", help="do not case-fold tokens")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("extract", help="candidate variants from raw text files")
    p.add_argument("--text", nargs="+", required=True)
    p.add_argument("--lexicon")
    p.add_argument("--sample", type=int, help="keep a seeded random sample of candidates")
    _add_common(p, corpus=False)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("split", help="train/val/test split of a pair corpus")
    _add_common(p)
    p.add_argument("--fractions", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    p.add_argument("--grouping", choices=("variant-type", "pair"), default="variant-type")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("gen-negatives", help="generate negative pairs")
    _add_common(p)
    _add_negatives(p, multi=True)
    p.set_defaults(func=cmd_gen_negatives)

    p = sub.add_parser("train", help="train a neural edit distance model")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--format", choices=FORMATS, default="gb-tsv")
    _add_common(p, corpus=False)
    _add_negatives(p)
    _add_training(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="pair classification F1 on a test split")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--format", choices=FORMATS, default="gb-tsv")
    _add_common(p, corpus=False)
    _add_negatives(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rank", help="MRR of test variants against a lexicon")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--format", choices=FORMATS, default="gb-tsv")
    p.add_argument("--lexicon")
    _add_common(p, corpus=False)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("sweep", help="train and evaluate every (strategy, n) cell")
    _add_common(p)
    _add_negatives(p, multi=True)
    p.set_defaults(strategy=["random", "ld", "mixed"], n=[10, 20, 30, 50])
    _add_training(p)
    p.add_argument("--fractions", type=float, nargs=3, default=[0.8, 0.1, 0.1])
    p.add_argument("--grouping", choices=("variant-type", "pair"), default="variant-type")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="F1 and MRR summary of a sweep directory")
    p.add_argument("--sweep-dir", required=True)
    p.add_argument("--out")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="synthetic variant corpus from a lexicon")
    p.add_argument("--lexicon")
    p.add_argument("--count", type=int, default=500)
    p.add_argument("--systems", choices=("a", "b", "ab"), default="a")
    _add_common(p, corpus=False)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    started = datetime.now(timezone.utc)
    try:
        result = args.func(args)
    except UsageError as exc:
        print(f"orthopair: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingDivergedError, DegenerateLatticeError) as exc:
        print(f"orthopair: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OrthoPairError, OSError, ValueError) as exc:
        print(f"orthopair: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    out, inputs, *rest = result
    if out is not None:
        _write_manifest(out, args, inputs, started)
    return rest[0] if rest else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
