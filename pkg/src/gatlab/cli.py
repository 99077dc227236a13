"""Command-line entry point: ``gatlab <command> [flags]``.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 tolerance breach.
Settings may also come from a ``--config`` file of ``key = value`` lines;
explicit flags win over the file, and the file wins over built-in defaults.
The default output directory is taken from ``$GATLAB_OUT`` (else ``runs``).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dataset as ds
from . import gradients, metrics, report, training
from .models import VARIANTS, VariantConfig, load_checkpoint, save_checkpoint

log = logging.getLogger("gatlab")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_TOLERANCE = 0, 1, 2, 3
OUT_ENV = "GATLAB_OUT"

# built-in defaults for options that a config file may also set
DEFAULTS = dict(
    experiment="I",
    variant="gat-theta-n",
    seed=0,
    data_seed=0,
    epochs=training.TrainConfig.epochs,
    batch=training.TrainConfig.batch_size,
    lr=training.TrainConfig.lr,
    optimizer="adam",
    loss="abs",
    m_train=ds.DEFAULT_M,
    m_test=ds.DEFAULT_M,
    dprime=None,
    audit=False,
    seeds=10,
    out_dir=None,
)
CONFIG_KEYS = {"experiment", "variant", "seed", "data_seed", "epochs", "batch", "lr", "optimizer",
               "loss", "m_train", "m_test", "dprime", "audit", "seeds", "out_dir"}


class ValidationError(ValueError):
    pass


class ToleranceError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


# -- config handling ---------------------------------------------------------------

def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"not a boolean: {text!r}")


def read_config(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key == "batch_size":
                key = "batch"
            if key not in CONFIG_KEYS:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def _resolve(args) -> None:
    """Fill unset options from the config file, then from DEFAULTS."""
    conf = read_config(args.config) if getattr(args, "config", None) else {}
    for key, default in DEFAULTS.items():
        if not hasattr(args, key) or getattr(args, key) is not None:
            continue
        if key in conf:
            raw = conf[key]
            if key == "audit":
                value = _bool(raw)
            elif key == "variant":
                value = [v.strip() for v in raw.split(",") if v.strip()]
            elif key in ("experiment", "optimizer", "loss", "out_dir"):
                value = raw
            elif key == "lr":
                value = _number(float, raw, key)
            else:
                value = _number(int, raw, key)
        else:
            value = [default] if key == "variant" else default
        setattr(args, key, value)
    if getattr(args, "out_dir", "") is None:
        args.out_dir = os.environ.get(OUT_ENV, "runs")


def _number(kind, raw, key):
    try:
        return kind(raw)
    except ValueError:
        raise ValidationError(f"{key}: expected {kind.__name__}, got {raw!r}") from None


def _variants(args) -> list[str]:
    names = []
    for item in args.variant:
        names.extend(v.strip() for v in item.split(",") if v.strip())
    for v in names:
        if v not in VARIANTS:
            raise ValidationError(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}")
    return names


def _experiment(args) -> ds.ExperimentSpec:
    if args.experiment not in ("I", "II"):
        raise ValidationError(f"experiment must be I or II, got {args.experiment!r}")
    try:
        spec = ds.ExperimentSpec(args.experiment, m_train=args.m_train, m_test=args.m_test,
                                 seed=args.data_seed)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    if args.dprime is not None and args.dprime != spec.latent_dim:
        raise ValidationError(
            f"experiment {spec.kind} needs latent dimension d'={spec.latent_dim}; got --dprime {args.dprime}"
        )
    return spec


def _train_config(args, seed: int) -> training.TrainConfig:
    try:
        return training.TrainConfig(epochs=args.epochs, batch_size=args.batch, lr=args.lr,
                                    optimizer=args.optimizer, seed=seed, loss=args.loss,
                                    audit=args.audit)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None


def _writable_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    if not os.access(p, os.W_OK):
        raise PermissionError(f"output directory not writable: {p}")
    return p


# -- commands -------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    if args.experiment not in ("I", "II"):
        raise ValidationError(f"experiment must be I or II, got {args.experiment!r}")
    if args.m < 1:
        raise ValidationError(f"--m must be >= 1, got {args.m}")
    spec = ds.ExperimentSpec(args.experiment, m_train=args.m, seed=args.seed)
    out = Path(args.out) if args.out else Path(args.out_dir) / f"data_{spec.kind}_seed{args.seed}.csv"
    _writable_dir(out.parent)
    data = ds.generate(spec)
    ds.save(data, out)
    lo, hi = spec.value_range
    print(f"wrote {len(data)} samples to {out}; values in [{lo:g}, {hi:g}] (= [0, {hi / np.pi:g}*pi])")
    return EXIT_OK


def _run_outputs(res: training.RunResult, cfg: VariantConfig, out: Path) -> None:
    stem = f"{res.variant}_seed{res.seed}"
    save_checkpoint(res.params, cfg, out / f"{stem}.ckpt", seed=res.seed)
    if res.failed:
        return
    res.histogram.to_csv(out / f"{stem}_hist.csv")
    report.histogram_svg(res.histogram, out / f"{stem}_hist.svg", title=stem)
    report.loss_svg(res.loss_trace, out / f"{stem}_loss.svg", title=stem)
    with open(out / f"{stem}_loss.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,loss\n")
        for e, v in enumerate(res.loss_trace):
            fh.write(f"{e},{v:.17g}\n")
    if res.audit:
        with open(out / f"{stem}_audit.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("epoch,fraction_dead,batch_dead,grad_theta_r\n")
            for rec in res.audit:
                fh.write(f"{rec['epoch']},{rec['fraction_dead']:.17g},{rec['batch_dead']:.17g},"
                         f"{rec['grad_theta_r']:.17g}\n")


def cmd_train(args) -> int:
    _resolve(args)
    names = _variants(args)
    if len(names) != 1:
        raise ValidationError("train takes exactly one variant; use sweep for several")
    spec = _experiment(args)
    cfg = VariantConfig(names[0], d_prime=spec.latent_dim)
    tcfg = _train_config(args, args.seed)
    out = _writable_dir(args.out_dir)

    res = training.train(cfg, spec, tcfg)
    _run_outputs(res, cfg, out)
    metrics.write_sweep_csv([res], out / f"run_{res.variant}_seed{res.seed}.csv")
    print(res.summary_row())
    return EXIT_OK


def cmd_sweep(args) -> int:
    _resolve(args)
    names = _variants(args)
    spec = _experiment(args)
    if args.seeds < 1:
        raise ValidationError("--seeds must be >= 1")
    tcfg = _train_config(args, 0)
    out = _writable_dir(args.out_dir)
    cfgs = [VariantConfig(v, d_prime=spec.latent_dim) for v in names]
    by_cfg = {c.variant: c for c in cfgs}

    def progress(res):
        _run_outputs(res, by_cfg[res.variant], out)
        print(res.summary_row(), flush=True)

    results = training.sweep(cfgs, spec, tcfg, args.seeds, progress=progress)
    summary = metrics.summarize_sweep(results, out_dir=out)
    _print_summary(summary)
    return EXIT_OK


def _print_summary(summary) -> None:
    print(f"{'variant':<18} {'TPR med':>8} {'TPR IQR':>8} {'ME med':>8} {'mean max err':>13}")
    for v in summary.variants:
        if v not in summary.tpr:
            continue
        b = summary.box(v, "tpr")
        print(f"{v:<18} {b.median:>8.3f} {b.iqr:>8.3f} {summary.median(v, 'me'):>8.4f} "
              f"{float(np.mean(summary.max_error[v])):>13.4f}")


def cmd_grad_check(args) -> int:
    if args.trials < 1:
        raise ValidationError("--trials must be >= 1")
    results = gradients.grad_check_trials(trials=args.trials, seed=args.seed)
    worst = max(chk.max_rel_error for _, chk in results)
    print(f"{'param':<8} {'d_prime':>7} {'trials':>6} {'|analytic|':>11} {'|autodiff|':>11} "
          f"{'|finite diff|':>13} {'max rel err':>11}")
    for dp in sorted({dp for dp, _ in results}):
        group = [chk for d, chk in results if d == dp]
        norms = [np.mean([np.linalg.norm(getattr(c, k)) for c in group])
                 for k in ("analytic", "autodiff", "finite_diff")]
        err = max(c.max_rel_error for c in group)
        print(f"{'theta_r':<8} {dp:>7} {len(group):>6} {norms[0]:>11.4e} {norms[1]:>11.4e} "
              f"{norms[2]:>13.4e} {err:>11.3e}")
    print(f"overall max rel. error {worst:.3e} (tolerance {args.tol:g})")
    if not worst <= args.tol:
        raise ToleranceError(f"gradient check failed: {worst:.3e} > {args.tol:g}")
    return EXIT_OK


def cmd_analyze_signs(args) -> int:
    for p in (args.checkpoint, args.data):
        if not Path(p).is_file():
            raise FileNotFoundError(f"no such file: {p}")
    params, cfg, _ = load_checkpoint(args.checkpoint)
    data = ds.load(args.data)
    if len(data) == 0:
        raise ValidationError(f"{args.data} holds no samples")
    graph = ds.ExperimentSpec(n_nodes=data.n_nodes).graph()
    nodes = None if args.nodes is None else [int(s) for s in args.nodes.split(",")]
    rep = gradients.sign_condition(params, graph, data.x, cfg=cfg, nodes=nodes)
    print(rep.table())
    return EXIT_OK


def cmd_report(args) -> int:
    src = Path(args.sweep_dir)
    if not src.is_dir():
        raise FileNotFoundError(f"no such directory: {src}")
    out = _writable_dir(args.out or src)
    summary = metrics.load_sweep_dir(src)
    report.seed_lines_svg(summary, out / "robustness.svg")
    report.boxplots_svg(summary, out / "boxplots.svg")
    _print_summary(summary)
    print(f"wrote {out / 'robustness.svg'} and {out / 'boxplots.svg'}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------

def _training_flags(p: argparse.ArgumentParser, multi: bool) -> None:
    p.add_argument("--config", help="key = value file supplying defaults for these flags")
    p.add_argument("--variant", action="append", default=None,
                   help=("variant name" + (" (repeat or comma-separate for several)" if multi else ""))
                   + f"; one of {', '.join(VARIANTS)}")
    p.add_argument("--experiment", help="I or II (default I)")
    p.add_argument("--data-seed", dest="data_seed", type=int, help="dataset seed (default 0)")
    p.add_argument("--epochs", type=int, help=f"default {DEFAULTS['epochs']}")
    p.add_argument("--batch", type=int, help=f"mini-batch size (default {DEFAULTS['batch']})")
    p.add_argument("--lr", type=float, help=f"learning rate (default {DEFAULTS['lr']:g})")
    p.add_argument("--optimizer", help="adam or sgd (default adam)")
    p.add_argument("--loss", help="abs or signed (default abs)")
    p.add_argument("--m-train", dest="m_train", type=int, help="training samples (default 20000)")
    p.add_argument("--m-test", dest="m_test", type=int, help="test samples (default 20000)")
    p.add_argument("--dprime", type=int, help="latent dimension; must match the experiment")
    p.add_argument("--audit", action="store_const", const=True, default=None,
                   help="record the per-epoch gradient audit")
    p.add_argument("--out-dir", dest="out_dir", help=f"output directory (default ${OUT_ENV} or ./runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gatlab", description="Attention-selection experiments on star graphs.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a dataset CSV")
    p.add_argument("--experiment", default="I", help="I or II")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m", type=int, default=ds.DEFAULT_M, help="number of samples")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--out-dir", dest="out_dir", default=os.environ.get(OUT_ENV, "runs"))
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one variant with one seed")
    _training_flags(p, multi=False)
    p.add_argument("--seed", type=int, help="initialization and batch-order seed (default 0)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="train variants over seeds 0..E-1")
    _training_flags(p, multi=True)
    p.add_argument("--seeds", type=int, help="number of seeds E (default 10)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("grad-check", help="compare analytic, autodiff and finite-difference gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4, help="max pairwise relative error")
    p.set_defaults(func=cmd_grad_check)

    p = sub.add_parser("analyze-signs", help="same-sign analysis of a checkpoint on a dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--nodes", help="comma-separated query nodes (default: all)")
    p.set_defaults(func=cmd_analyze_signs)

    p = sub.add_parser("report", help="redraw sweep plots from sweep_*.csv files")
    p.add_argument("--sweep-dir", dest="sweep_dir", required=True)
    p.add_argument("--out", help="output directory (default: the sweep directory)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ToleranceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    except ds.DatasetParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
