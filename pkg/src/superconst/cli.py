"""Command-line interface.

Subcommands: train, eval, baseline, constellation, compare, gradcheck.
Exit codes: 0 success, 2 configuration error, 3 numeric failure (the last
good checkpoint path is printed). SUPERCONST_OUTDIR sets the default output
directory; explicit --out paths are used verbatim.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import evaluate, modelio
from .baselines import (QpskNomaConfig, ber_16qam, ber_qpsk_noma_strong_sic,
                        ber_qpsk_noma_weak, mc_ber_16qam, mc_qpsk_noma)
from .channel import snr_to_sigma2, snr2_from
from .errors import ConfigError, NumericError, TrainingError
from .model import message_indices
from .nn import grad_check
from .rng import RngStream
from .training import (PRESETS, Trainer, preset_config, sample_batch,
                       system_loss, system_loss_and_grads, train)

GRADCHECK_TOLERANCE = 1e-4


def _outdir() -> Path:
    return Path(os.environ.get("SUPERCONST_OUTDIR", "."))


def _resolve_out(given: Optional[str], default_name: str) -> Path:
    if given:
        return Path(given)
    return _outdir() / default_name


def parse_grid(text: str) -> List[float]:
    """"start:stop:step" (stop inclusive) or a comma list of dB values."""
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) != 3:
                raise ValueError("expected start:stop:step")
            start, stop, step = parts
            if step <= 0 or stop < start:
                raise ValueError("need step > 0 and stop >= start")
            count = int(np.floor((stop - start) / step + 1e-9)) + 1
            return [start + i * step for i in range(count)]
        return [float(p) for p in text.split(",") if p.strip() != ""]
    except ValueError as exc:
        raise ConfigError(f"bad SNR grid {text!r}: {exc}") from exc


def _default_test_gains(meta: dict):
    """Test-time (h1, h2): the trained channel, with uniform h2 at midrange."""
    channel = (meta.get("training") or {}).get("channel") or {}
    h1 = float(channel.get("h1", 1.0))
    if channel.get("kind") == "uniform":
        h2 = 0.5 * (float(channel["h2_min"]) + float(channel["h2_max"]))
    else:
        h2 = float(channel.get("h2", 2.0))
    return h1, h2


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------
# train

def cmd_train(args) -> int:
    cfg_dict = {}
    if args.config:
        try:
            cfg_dict = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if args.preset:
        cfg_dict["preset"] = args.preset
    for key in ("iterations", "seed", "batch_size", "loss_weight", "snr1_train_db",
                "lr", "history_every"):
        value = getattr(args, key)
        if value is not None:
            cfg_dict[key] = value
    config, preset = modelio.config_from_dict(cfg_dict)

    label = preset or "custom"
    out = _resolve_out(args.out, f"train-{label}-seed{config.seed}.model.json")
    history_path = (out.with_suffix(".history.csv") if out.suffix == ".json"
                    else Path(str(out) + ".history.csv"))

    def log(i, breakdown):
        if not args.quiet:
            print(f"iter {i + 1}/{config.iterations}  loss1={breakdown.loss1:.4f}  "
                  f"loss2={breakdown.loss2:.4f}  total={breakdown.total:.4f}",
                  file=sys.stderr)

    hook = None
    if args.checkpoint_every:
        def hook(ckpt):
            path = Path(str(out) + f".iter{ckpt.iteration}")
            modelio.save_model(path, ckpt, preset)

    try:
        checkpoint = train(config, checkpoint_every=args.checkpoint_every or 0,
                           checkpoint_hook=hook, log=log)
    except TrainingError as exc:
        failed = Path(str(out) + ".failed.json")
        if exc.checkpoint is not None:
            modelio.save_model(failed, exc.checkpoint, preset)
        print(f"training aborted at iteration {exc.iteration}: {exc}", file=sys.stderr)
        print(f"last checkpoint: {failed}", file=sys.stderr)
        return 3

    modelio.save_model(out, checkpoint, preset)
    provenance = modelio.config_to_dict(config, preset)
    _write(history_path, modelio.history_csv(checkpoint.history, provenance))
    print(f"model: {out}")
    print(f"history: {history_path}")
    return 0


# ---------------------------------------------------------------------------
# eval

def cmd_eval(args) -> int:
    system, meta = modelio.load_model(args.model)
    grid = parse_grid(args.snr_grid)
    h1, h2 = _default_test_gains(meta)
    if args.h1 is not None:
        h1 = args.h1
    if args.h2 is not None:
        h2 = args.h2
    points = evaluate.measure_ber(
        system, h1, h2, grid, min_error_events=args.min_error_events,
        max_symbols=args.max_symbols, seed=args.seed)
    provenance = {
        "command": "eval", "model": args.model, "snr_grid": grid,
        "seed": args.seed, "min_error_events": args.min_error_events,
        "max_symbols": args.max_symbols, "h1": h1, "h2": h2,
        "model_training": meta["training"], "model_iteration": meta["iteration"],
    }
    out = _resolve_out(args.out, f"eval-{Path(args.model).stem}-seed{args.seed}")
    _write(Path(str(out) + ".csv"), evaluate.ber_points_csv(points, provenance))
    _write(Path(str(out) + ".json"),
           json.dumps(evaluate.ber_report_dict(points, provenance), indent=1, sort_keys=True) + "\n")
    print(f"ber curve: {out}.csv")
    return 0


# ---------------------------------------------------------------------------
# baseline

def cmd_baseline(args) -> int:
    if args.kind == "qpsk-noma":
        grid = parse_grid(args.snr_grid)
        lines = []
        rows = []
        for snr_db in grid:
            cfg = QpskNomaConfig.at_snr1(snr_db, alpha=args.alpha, h1=args.h1, h2=args.h2,
                                         allow_overlap=args.allow_low_alpha)
            row = [snr_db, ber_qpsk_noma_weak(cfg), ber_qpsk_noma_strong_sic(cfg)]
            if args.mc:
                b1, b2, s1, s2 = mc_qpsk_noma(cfg, args.mc, RngStream(args.seed, len(rows)))
                row += [b1, s1, b2, s2]
            rows.append(row)
        header = "snr1_db,ber1,ber2"
        if args.mc:
            header += ",mc_ber1,mc_stderr1,mc_ber2,mc_stderr2"
        provenance = {"command": "baseline", "kind": "qpsk-noma", "alpha": args.alpha,
                      "h1": args.h1, "h2": args.h2, "snr_grid": grid,
                      "mc": args.mc, "seed": args.seed}
        lines.append("# provenance: " + json.dumps(provenance, sort_keys=True))
        lines.append(header)
        for row in rows:
            lines.append(",".join(repr(float(v)) for v in row))
        out = _resolve_out(args.out, "baseline-qpsk-noma.csv")
        _write(out, "\n".join(lines) + "\n")
        print(f"baseline table: {out}")
        return 0

    # 16qam: evaluated at the strong user's symbol SNR.
    grid = parse_grid(args.snr_grid) if args.snr_grid else [args.snr1]
    if grid == [None]:
        raise ConfigError("16qam baseline needs --snr1 or --snr-grid")
    lines = []
    rows = []
    for snr1_db in grid:
        snr_symbol = snr2_from(snr1_db, 1.0, args.h_ratio)
        row = [snr1_db, snr_symbol, ber_16qam(snr_symbol)]
        if args.mc:
            mc, stderr = mc_ber_16qam(snr_symbol, args.mc, RngStream(args.seed, len(rows)))
            row += [mc, stderr]
        rows.append(row)
    header = "snr1_db,snr_symbol_db,ber"
    if args.mc:
        header += ",mc_ber,mc_stderr"
    provenance = {"command": "baseline", "kind": "16qam", "h_ratio": args.h_ratio,
                  "snr_grid": grid, "mc": args.mc, "seed": args.seed}
    lines.append("# provenance: " + json.dumps(provenance, sort_keys=True))
    lines.append(header)
    for row in rows:
        lines.append(",".join(repr(float(v)) for v in row))
    out = _resolve_out(args.out, "baseline-16qam.csv")
    _write(out, "\n".join(lines) + "\n")
    print(f"baseline table: {out}")
    return 0


# ---------------------------------------------------------------------------
# constellation

def cmd_constellation(args) -> int:
    system, meta = modelio.load_model(args.model)
    report = evaluate.extract_constellation(system.tx)
    h1, h2 = _default_test_gains(meta)
    provenance = {
        "command": "constellation", "model": args.model, "seed": args.seed,
        "noisy": args.noisy, "snr1_db": args.snr, "user": args.user,
        "h1": h1, "h2": h2, "model_iteration": meta["iteration"],
    }
    noisy_samples = None
    noisy_labels = None
    if args.noisy:
        rng = RngStream(args.seed, 0)
        k = system.k1 + system.k2
        bits = rng.bits((args.noisy, k))
        x = report.codebook.symbols[message_indices(bits)]
        sigma2 = snr_to_sigma2(args.snr, h1, system.tx.power)
        h_k = h1 if args.user == 1 else h2
        noisy_samples = x + rng.complex_gaussian(sigma2, args.noisy) / h_k
        own = bits[:, : system.k1] if args.user == 1 else bits[:, system.k1:]
        noisy_labels = message_indices(own)
    out = _resolve_out(args.out, f"constellation-{Path(args.model).stem}")
    _write(Path(str(out) + ".csv"), evaluate.constellation_csv(report, provenance))
    _write(Path(str(out) + ".json"),
           json.dumps(evaluate.constellation_report_dict(report, provenance),
                      indent=1, sort_keys=True) + "\n")
    _write(Path(str(out) + ".svg"),
           evaluate.render_constellation_svg(report, noisy_samples, noisy_labels, provenance))
    print(f"constellation: {out}.csv {out}.svg")
    return 0


# ---------------------------------------------------------------------------
# compare

def cmd_compare(args) -> int:
    system, meta = modelio.load_model(args.model)
    snr_list = parse_grid(args.snr_list)
    table = evaluate.compare_with_baselines(
        system, h1=args.h1, h2=args.h2, snr_list=snr_list, alpha=args.alpha,
        seed=args.seed, min_error_events=args.min_error_events,
        max_symbols=args.max_symbols)
    provenance = {
        "command": "compare", "model": args.model, "snr_list": snr_list,
        "alpha": args.alpha, "h1": args.h1, "h2": args.h2, "seed": args.seed,
        "model_training": meta["training"], "model_iteration": meta["iteration"],
    }
    out = _resolve_out(args.out, f"compare-{Path(args.model).stem}.csv")
    _write(out, evaluate.comparison_csv(table, provenance))
    print(f"comparison table: {out}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck

def run_gradcheck(seed: int, batch_size: int = 4, eps: float = 1e-5) -> dict:
    """Finite-difference check of the full system on a small frozen batch."""
    config = preset_config("case1", iterations=1, batch_size=batch_size, seed=seed)
    trainer = Trainer(config)
    batch = sample_batch(config, trainer.rng_bits, trainer.rng_channel, trainer.rng_noise)
    breakdown, grads = system_loss_and_grads(trainer.system, batch,
                                             loss_weight=config.loss_weight)
    weights = (breakdown.w1, breakdown.w2)
    params = trainer.system.params()

    def loss_fn() -> float:
        return system_loss(trainer.system, batch, weights)

    worst = grad_check(params, grads.flat(), loss_fn, eps)
    return {
        "max_relative_error": worst,
        "tolerance": GRADCHECK_TOLERANCE,
        "n_parameters": int(sum(p.size for p in params)),
        "batch_size": batch_size,
        "eps": eps,
        "seed": seed,
        "passed": bool(worst < GRADCHECK_TOLERANCE),
    }


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(args.seed, batch_size=args.batch, eps=args.eps)
    status = "PASS" if report["passed"] else "FAIL"
    print(f"gradcheck {status}: max relative error {report['max_relative_error']:.3e} "
          f"over {report['n_parameters']} parameters (tolerance {report['tolerance']:g})")
    if args.out:
        _write(Path(args.out), json.dumps(report, indent=1, sort_keys=True) + "\n")
    return 0 if report["passed"] else 1


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="superconst",
        description="Train and evaluate learned super-constellations for two-user downlink NOMA.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a system from a preset or config file")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="JSON config file (unknown keys rejected)")
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--loss-weight", dest="loss_weight", type=float)
    p.add_argument("--snr1", dest="snr1_train_db", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--history-every", dest="history_every", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="measure BER curves for a trained model")
    p.add_argument("model")
    p.add_argument("--snr-grid", dest="snr_grid", default="0:20:1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h1", type=float)
    p.add_argument("--h2", type=float)
    p.add_argument("--min-error-events", dest="min_error_events", type=int,
                   default=evaluate.DEFAULT_MIN_ERROR_EVENTS)
    p.add_argument("--max-symbols", dest="max_symbols", type=int,
                   default=evaluate.DEFAULT_MAX_SYMBOLS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="closed-form (and Monte-Carlo) reference BER")
    p.add_argument("kind", choices=["qpsk-noma", "16qam"])
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--h1", type=float, default=1.0)
    p.add_argument("--h2", type=float, default=2.0)
    p.add_argument("--h-ratio", dest="h_ratio", type=float, default=2.0)
    p.add_argument("--snr1", type=float)
    p.add_argument("--snr-grid", dest="snr_grid", default=None)
    p.add_argument("--allow-low-alpha", dest="allow_low_alpha", action="store_true")
    p.add_argument("--mc", type=int, help="also simulate this many symbols per point")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("constellation", help="export the learned codebook (CSV/JSON/SVG)")
    p.add_argument("model")
    p.add_argument("--noisy", type=int, default=0, help="overlay this many noisy samples")
    p.add_argument("--snr", type=float, default=10.0)
    p.add_argument("--user", type=int, choices=[1, 2], default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_constellation)

    p = sub.add_parser("compare", help="worse-user BER table against baselines")
    p.add_argument("model")
    p.add_argument("--snr-list", dest="snr_list", default="14,16,18")
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--h1", type=float, default=1.0)
    p.add_argument("--h2", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-error-events", dest="min_error_events", type=int,
                   default=evaluate.DEFAULT_MIN_ERROR_EVENTS)
    p.add_argument("--max-symbols", dest="max_symbols", type=int,
                   default=evaluate.DEFAULT_MAX_SYMBOLS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gradcheck", help="finite-difference check of the full system gradient")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch", type=int, default=4)
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"numeric failure at iteration {exc.iteration}: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
