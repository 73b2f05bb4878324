"""Command-line entry point: ``dilab <subcommand> [flags]``.

Exit codes: 0 success, 1 a verified inequality failed, 2 usage error.
Settings resolve as flags, then ``--config`` JSON, then built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundReport, evaluate_bounds
from .core import BOUNDED_LOSSES, PreconditionError, loss_family
from .dataset import build_domains, load_mnist, save_dataset
from .divergence import build_class_conditionals, hypothesis_aware_divergence, source_min_loss
from .gap import GapReport, gap_bound, resample_losses
from .instances import Instance, random_instance
from .rng import make_rng
from .suites import all_suites
from .tradeoff import TradeoffReport, verify_tradeoff

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunManifest:
    command: str
    config_hash: str
    seed: int
    version: str
    started: str
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def config_hash(command: str, config: dict) -> str:
    blob = json.dumps({"command": command, "config": config}, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


DEFAULTS: dict[str, dict] = {
    "generate-dataset": {"backend": "vector", "out": "dataset", "seed": 0, "n_per_domain": 10_000,
                         "sources": 7, "mnist_images": None, "mnist_labels": None},
    "verify-bounds": {"instances": 1000, "seed": 0, "loss": "all", "out": "bounds.csv"},
    "divergence": {"loss": "log", "input": None, "seed": 0},
    "gap": {"n": 100, "delta": 0.05, "resamples": 10_000, "seed": 7, "instances": 1, "loss": "brier",
            "input": None, "out": "gap.csv"},
    "tradeoff": {"instances": 1000, "seed": 3, "smooth": 0.01, "out": "tradeoff.csv"},
    "sweep": {"mode": "dg", "grid": "default", "seeds": 5, "out": "sweep.csv", "iters": 2000, "seed": 0,
              "workers": None, "targets": "close,far", "sources": 7},
    "report": {"input": "sweep.csv", "out": "report.csv"},
    "selftest": {"instances": 100, "seed": 0},
}


def build_parser() -> _Parser:
    p = _Parser(prog="dilab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON file with settings for this subcommand")
        s.add_argument("--manifest", help="manifest path (default: next to the main output)")
        return s

    s = cmd("generate-dataset", "generate colored-digit domains")
    s.add_argument("--backend", choices=["vector", "idx"])
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--n-per-domain", type=int)
    s.add_argument("--sources", type=int)
    s.add_argument("--mnist-images")
    s.add_argument("--mnist-labels")

    s = cmd("verify-bounds", "check both mixture bounds on random instances")
    s.add_argument("--instances", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--loss", choices=["zero-one", "brier", "hellinger", "all"])
    s.add_argument("--out")

    s = cmd("divergence", "hypothesis-aware divergence of the class conditionals of an instance")
    s.add_argument("--loss", choices=["zero-one", "brier", "hellinger", "log"])
    s.add_argument("--input", help="instance JSON; a random instance is used when omitted")
    s.add_argument("--seed", type=int)

    s = cmd("gap", "Chebyshev coverage of the empirical source loss")
    s.add_argument("--n", type=int)
    s.add_argument("--delta", type=float)
    s.add_argument("--resamples", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--instances", type=int)
    s.add_argument("--loss", choices=["zero-one", "brier", "hellinger"])
    s.add_argument("--input")
    s.add_argument("--out")

    s = cmd("tradeoff", "check the label-marginal trade-off inequalities")
    s.add_argument("--instances", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--smooth", type=float)
    s.add_argument("--out")

    s = cmd("sweep", "train over the λ grid")
    s.add_argument("--mode", choices=["dg", "msda"])
    s.add_argument("--grid", help="'default' or a JSON list (DG: λ values; MSDA: [λ_ss, λ_st] pairs)")
    s.add_argument("--seeds", type=int)
    s.add_argument("--seed", type=int, help="data seed")
    s.add_argument("--iters", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--targets", help="MSDA targets, comma separated")
    s.add_argument("--sources", type=int, help="number of source domains")
    s.add_argument("--out")

    s = cmd("report", "median over seeds per (λ, iteration)")
    s.add_argument("--input")
    s.add_argument("--out")

    s = cmd("selftest", "run every property suite at reduced size")
    s.add_argument("--instances", type=int)
    s.add_argument("--seed", type=int)
    return p


def resolve(command: str, ns: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    if ns.config:
        try:
            extra = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {ns.config}: {e}") from e
        unknown = set(extra) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(extra)
    for k in cfg:
        v = getattr(ns, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


# ---------------------------------------------------------------- commands


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])


def cmd_generate(cfg: dict) -> tuple[int, list[str]]:
    images = digits = None
    if cfg["backend"] == "idx":
        if not (cfg["mnist_images"] and cfg["mnist_labels"]):
            raise UsageError("--backend idx needs --mnist-images and --mnist-labels")
        images, digits = load_mnist(cfg["mnist_images"], cfg["mnist_labels"])
    doms = build_domains(cfg["seed"], cfg["n_per_domain"], cfg["backend"], cfg["sources"], images, digits)
    out = Path(cfg["out"])
    save_dataset(out, doms, cfg["seed"], cfg["backend"])
    print(f"wrote {len(doms)} domains to {out}")
    return EXIT_OK, [str(out / "records.bin"), str(out / "manifest.json")]


def cmd_verify_bounds(cfg: dict) -> tuple[int, list[str]]:
    losses = BOUNDED_LOSSES if cfg["loss"] == "all" else (loss_family(cfg["loss"]),)
    rows, bad = [], 0
    for loss in losses:
        for i in range(cfg["instances"]):
            inst = random_instance(make_rng(cfg["seed"], "bounds", loss.kind.value, i))
            rep = evaluate_bounds(inst.sources, inst.pi, inst.target, inst.g, inst.h_hat, loss)
            bad += not rep.ok
            rows.append([i] + rep.csv_row())
    out = Path(cfg["out"])
    _write_csv(out, ["instance"] + BoundReport.csv_header(), rows)
    print(f"{len(rows)} bound reports, {bad} violations -> {out}")
    return (EXIT_VIOLATION if bad else EXIT_OK), [str(out)]


def _load_instance(cfg: dict, tag: str) -> Instance:
    if cfg["input"]:
        try:
            return Instance.from_dict(json.loads(Path(cfg["input"]).read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as e:
            raise UsageError(f"cannot read instance {cfg['input']}: {e}") from e
    return random_instance(make_rng(cfg["seed"], tag))


def cmd_divergence(cfg: dict) -> tuple[int, list[str]]:
    inst = _load_instance(cfg, "divergence-cli")
    loss = loss_family(cfg["loss"])
    ccm = build_class_conditionals(inst.sources, inst.pi, inst.g)
    res = hypothesis_aware_divergence(ccm.qs, ccm.alpha, loss)
    direct = source_min_loss(inst.sources, inst.pi, inst.g, loss)
    identity_err = abs(res.raw + direct - res.constant)
    print(json.dumps({**res.to_dict(), "source_min_loss": direct, "identity_error": identity_err,
                      "dropped_classes": list(ccm.dropped)}))
    ok = res.divergence >= -1e-10 and identity_err <= 1e-10
    return (EXIT_OK if ok else EXIT_VIOLATION), []


def cmd_gap(cfg: dict) -> tuple[int, list[str]]:
    loss = loss_family(cfg["loss"])
    rows, bad = [], 0
    count = 1 if cfg["input"] else cfg["instances"]
    for i in range(count):
        inst = _load_instance(cfg, f"gap-cli-{i}")
        seed = int(make_rng(cfg["seed"], "gap-cli-seed", i).integers(2**31))
        rep = gap_bound(inst.sources, inst.pi, inst.g, inst.h_hat, loss, cfg["n"], cfg["delta"])
        losses = resample_losses(inst, loss, cfg["n"], cfg["resamples"], seed)
        rep = replace(rep, empirical_coverage=float(np.mean(np.abs(losses - rep.population_loss) <= rep.epsilon)),
                      seed=seed, resamples=cfg["resamples"])
        bad += rep.empirical_coverage < 1 - rep.delta
        rows.append(rep.csv_row())
        print(rep.to_json())
    out = Path(cfg["out"])
    _write_csv(out, GapReport.csv_header(), rows)
    return (EXIT_VIOLATION if bad else EXIT_OK), [str(out)]


def cmd_tradeoff(cfg: dict) -> tuple[int, list[str]]:
    rows, bad = [], 0
    for i in range(cfg["instances"]):
        inst = random_instance(make_rng(cfg["seed"], "tradeoff", i), smoothing=cfg["smooth"])
        rep = verify_tradeoff(inst.sources, inst.pi, inst.target, inst.g, inst.h_hat)
        bad += not rep.ok
        rows.append([i] + rep.csv_row())
    out = Path(cfg["out"])
    _write_csv(out, ["instance", *TradeoffReport.CSV_FIELDS], rows)
    print(f"{len(rows)} trade-off reports, {bad} violations -> {out}")
    return (EXIT_VIOLATION if bad else EXIT_OK), [str(out)]


def _parse_grid(mode: str, raw):
    if raw == "default" or raw is None:
        return None
    grid = json.loads(raw) if isinstance(raw, str) else raw
    if mode == "dg":
        return tuple(float(v) for v in grid)
    return tuple((float(a), float(b)) for a, b in grid)


def cmd_sweep(cfg: dict) -> tuple[int, list[str]]:
    from .trainer.sweep import sweep
    from .trainer.train import TrainConfig, write_records

    try:
        grid = _parse_grid(cfg["mode"], cfg["grid"])
    except (ValueError, TypeError) as e:
        raise UsageError(f"bad --grid {cfg['grid']!r}: {e}") from e
    base = TrainConfig(iters=cfg["iters"], data_seed=cfg["seed"], source_count=cfg["sources"])
    targets = tuple(t.strip() for t in cfg["targets"].split(",") if t.strip())
    records = sweep(cfg["mode"], base, range(cfg["seeds"]), grid, targets, cfg["workers"])
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        write_records(records, fh)
    print(f"{len(records)} sweep records -> {out}")
    return EXIT_OK, [str(out)]


def cmd_report(cfg: dict) -> tuple[int, list[str]]:
    from .trainer.sweep import median_report
    from .trainer.train import read_records

    try:
        with open(cfg["input"]) as fh:
            records = read_records(fh)
    except OSError as e:
        raise UsageError(f"cannot read {cfg['input']}: {e}") from e
    rows = median_report(records)
    out = Path(cfg["out"])
    header = list(rows[0]) if rows else []
    _write_csv(out, header, [[r[k] for k in header] for r in rows])
    print(f"{len(rows)} aggregated rows -> {out}")
    return EXIT_OK, [str(out)]


def cmd_selftest(cfg: dict) -> tuple[int, list[str]]:
    from .trainer.gradcheck import check_all_heads

    results = all_suites(cfg["instances"], cfg["seed"])
    bad = 0
    for r in results:
        print(r.line())
        bad += not r.passed
    errs = check_all_heads(cfg["seed"])
    for name, e in errs.items():
        ok = e < 1e-5
        bad += not ok
        print(f"{'PASS' if ok else 'FAIL'} gradient[{name}]: relative error {e:.2e}")
    return (EXIT_VIOLATION if bad else EXIT_OK), []


COMMANDS = {
    "generate-dataset": cmd_generate,
    "verify-bounds": cmd_verify_bounds,
    "divergence": cmd_divergence,
    "gap": cmd_gap,
    "tradeoff": cmd_tradeoff,
    "sweep": cmd_sweep,
    "report": cmd_report,
    "selftest": cmd_selftest,
}


def _manifest_path(ns, outputs: list[str], command: str) -> Path | None:
    if ns.manifest:
        return Path(ns.manifest)
    if outputs:
        first = Path(outputs[0])
        return first.with_name(first.name + ".manifest.json")
    return None


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if not ns.command:
            raise UsageError("dilab: a subcommand is required: " + ", ".join(COMMANDS))
        cfg = resolve(ns.command, ns)
        manifest = RunManifest(ns.command, config_hash(ns.command, cfg), int(cfg.get("seed") or 0),
                               __version__, _now(), config=cfg)
        code, outputs = COMMANDS[ns.command](cfg)
    except (UsageError, PreconditionError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    path = _manifest_path(ns, outputs, ns.command)
    if path is not None:
        manifest.finished = _now()
        manifest.outputs = outputs
        path.parent.mkdir(parents=True, exist_ok=True)
        manifest.write(path)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
