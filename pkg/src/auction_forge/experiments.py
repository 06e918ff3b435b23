"""Experiment runs on disk: data, training, evaluation, baselines, sweeps, checks.

Every run writes into one directory and records a ``manifest.json`` with
the config, its hash, the derived stream seeds and the artifact paths.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import __version__, gradcheck, properties
from .config import ExperimentConfig, derive_seeds, training_key
from .env import SampleBatch, generate_dataset, load_dataset, save_dataset
from .evaluator import CSV_COLUMNS, RegretReport, evaluate, revenue
from .myerson import ItemWiseMyerson, baseline_revenue
from .net import MechanismNet, NetConfig
from .trainer import train

log = logging.getLogger(__name__)

TRAIN_DATA = "data/train.bin"
TEST_DATA = "data/test.bin"
MODEL = "model.ckpt"
HISTORY = "history.jsonl"
REPORT = "report.json"
BASELINE = "baseline.json"
OOS = "oos.csv"


def write_manifest(out: Path, command: str, config: ExperimentConfig, artifacts: list[str],
                   extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "seeds": {"master": config.seed, **derive_seeds(config.seed)},
        "artifacts": sorted(artifacts),
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S"),
        **(extra or {}),
    }
    path = out / f"manifest.{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (out / "manifest.json").write_text(path.read_text())
    return path


def _datasets(config: ExperimentConfig, out: Path, need_train: bool) -> tuple[SampleBatch | None, SampleBatch]:
    """Load the run's data files if present, otherwise draw and save them. Existing files are never rewritten."""
    seeds = derive_seeds(config.seed)
    spec = config.spec()
    batches = {}
    wanted = [("test", TEST_DATA, config.test_samples)]
    if need_train:
        wanted.insert(0, ("train", TRAIN_DATA, config.train_samples))
    for name, rel, count in wanted:
        path = out / rel
        if path.exists():
            batch = load_dataset(path)
            if (batch.spec.id, batch.n, batch.m, len(batch)) != (spec.id, spec.n, spec.m, count):
                raise ValueError(f"{path}: holds {batch.spec.id} ({batch.n}x{batch.m}, {len(batch)} samples), "
                                 f"config asks for {spec.id} ({spec.n}x{spec.m}, {count})")
        else:
            batch = generate_dataset(spec, count, seeds[f"{name}-data"])
            path.parent.mkdir(parents=True, exist_ok=True)
            save_dataset(batch, path)
        batches[name] = batch
    return batches.get("train"), batches["test"]


def gen_data(config: ExperimentConfig, out: Path) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    _datasets(config, out, need_train=True)
    arts = [TRAIN_DATA, TEST_DATA]
    write_manifest(out, "gen-data", config, arts)
    return arts


def net_config(config: ExperimentConfig) -> NetConfig:
    return NetConfig.for_setting(config.spec(), **dataclasses.asdict(config.net))


def train_run(config: ExperimentConfig, out: Path) -> tuple[MechanismNet, list[dict]]:
    out.mkdir(parents=True, exist_ok=True)
    seeds = derive_seeds(config.seed)
    train_data, _ = _datasets(config, out, need_train=True)
    mech = MechanismNet(net_config(config), seed=seeds["init"])
    tcfg = dataclasses.replace(config.train, seed=seeds["train"])
    ckpt_dir = out / "checkpoints" if tcfg.checkpoint_every else None
    if ckpt_dir:
        ckpt_dir.mkdir(exist_ok=True)
    mech, history = train(mech, train_data, tcfg, history_path=out / HISTORY, checkpoint_dir=ckpt_dir)
    mech.save(out / MODEL, extra={"config_hash": config.hash(), "epochs": len(history)})
    arts = [TRAIN_DATA, TEST_DATA, MODEL, HISTORY]
    if ckpt_dir:
        arts += [str(p.relative_to(out)) for p in sorted(ckpt_dir.glob("*.ckpt"))]
    write_manifest(out, "train", config, arts)
    return mech, history.records


def _protocol(config: ExperimentConfig) -> dict:
    e = config.eval
    return dict(restarts=e.restarts, steps=e.steps, lr=e.lr, seed=derive_seeds(config.seed)["eval"],
                batch_size=e.batch_size)


def _regret_subset(config: ExperimentConfig, test: SampleBatch) -> SampleBatch:
    k = config.eval.regret_samples
    return test if k == 0 or k >= len(test) else test.subset(slice(0, k))


def evaluate_on(mechanism, config: ExperimentConfig, test: SampleBatch, tag: str,
                revenue_fn=None) -> RegretReport:
    """Regret on the configured subset; revenue on the whole test set."""
    report = evaluate(mechanism, _regret_subset(config, test), tag=tag, **_protocol(config))
    report.revenue = revenue_fn(test) if revenue_fn else revenue(mechanism, test, config.eval.batch_size)
    report.samples = len(test)
    report.seed = config.seed
    return report


def load_model(out: Path, checkpoint: str | Path | None = None) -> MechanismNet:
    path = Path(checkpoint) if checkpoint else out / MODEL
    if not path.exists():
        raise FileNotFoundError(f"no trained model at {path}; run `train` first or pass --checkpoint")
    return MechanismNet.load(path)


def eval_run(config: ExperimentConfig, out: Path, checkpoint: str | Path | None = None) -> RegretReport:
    out.mkdir(parents=True, exist_ok=True)
    mech = load_model(out, checkpoint)
    _, test = _datasets(config, out, need_train=False)
    report = evaluate_on(mech, config, test, tag="learned")
    (out / REPORT).write_text(report.to_json() + "\n")
    (out / "report.csv").write_text(report.to_csv())
    write_manifest(out, "eval", config, [TEST_DATA, REPORT, "report.csv"])
    return report


def baseline_run(config: ExperimentConfig, out: Path) -> RegretReport:
    out.mkdir(parents=True, exist_ok=True)
    spec = config.spec()
    _, test = _datasets(config, out, need_train=False)
    report = evaluate_on(ItemWiseMyerson(spec), config, test, tag=ItemWiseMyerson.tag,
                         revenue_fn=lambda data: baseline_revenue(spec, data))
    (out / BASELINE).write_text(report.to_json() + "\n")
    (out / "baseline.csv").write_text(report.to_csv())
    write_manifest(out, "baseline", config, [TEST_DATA, BASELINE, "baseline.csv"])
    return report


def sweep_oos(config: ExperimentConfig, out: Path, checkpoint: str | Path | None = None) -> list[RegretReport]:
    """Evaluate one trained network at every (n', m') in the configured grid, without touching its parameters.

    Test data at size (n', m') is drawn from the test-data stream, so the
    cell matching the training size reproduces ``eval`` exactly.
    """
    out.mkdir(parents=True, exist_ok=True)
    mech = load_model(out, checkpoint)
    base = config.spec()
    reports = []
    for n in config.oos_bidders or [base.n]:
        for m in config.oos_items or [base.m]:
            cell = dataclasses.replace(config, n=n, m=m, test_samples=config.oos_samples)
            test = generate_dataset(cell.spec(), cell.test_samples, derive_seeds(config.seed)["test-data"])
            rep = evaluate_on(mech, cell, test, tag="learned")
            log.info("oos n=%d m=%d revenue %.4f regret %.5f", n, m, rep.revenue, rep.mean_regret)
            reports.append(rep)
    with open(out / OOS, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        w.writeheader()
        for rep in reports:
            w.writerow(rep.csv_row())
    write_manifest(out, "sweep-oos", config, [OOS])
    return reports


def grad_check_run(config: ExperimentConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    results = gradcheck.run_suite(seed=config.seed)
    summary = {
        "cases": len(results),
        "failures": [dataclasses.asdict(r) for r in results if not r.passed],
        "max_relative_error": max(r.error for r in results),
        "tolerance": gradcheck.TOLERANCE,
        "per_kind_max": {k: max(r.error for r in results if r.kind == k) for k in sorted({r.kind for r in results})},
    }
    (out / "gradcheck.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "grad-check", config, ["gradcheck.json"])
    return summary


def prop_check_run(config: ExperimentConfig, out: Path, checkpoint: str | Path | None = None) -> dict:
    """Equivariance and feasibility on fresh random networks; regret only when a trained model is available."""
    out.mkdir(parents=True, exist_ok=True)
    cases, worst = properties.equivariance_suite(config.prop_cases, [(2, 3), (3, 1), (5, 10)], seed=config.seed)
    done, violations = properties.feasibility_suite(config.prop_passes, seed=config.seed)
    summary = {
        "equivariance": {"cases": cases, "max_deviation": worst, "passed": worst < 1e-4},
        "feasibility": {"forward_passes": done, "violations": violations,
                        "passed": sum(violations.values()) == 0},
    }
    model = Path(checkpoint) if checkpoint else out / MODEL
    if model.exists():
        mech = MechanismNet.load(model)
        _, test = _datasets(config, out, need_train=False)
        rep = evaluate_on(mech, config, test, tag="learned")
        summary["regret"] = {"mean_regret": rep.mean_regret, "revenue": rep.revenue}
    else:
        summary["regret"] = {"skipped": "no trained model"}
    (out / "props.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "prop-check", config, ["props.json"])
    return summary


# -- summaries ------------------------------------------------------------------

SUMMARY_COLUMNS = ["setting", "mechanism", "n", "m", "revenue", "mean_regret", "seed"]


def _collect_reports(root: Path) -> list[RegretReport]:
    reports = []
    for path in sorted(root.rglob("*.json")):
        if path.name in (REPORT, BASELINE):
            reports.append(RegretReport.from_json(path.read_text()))
    for path in sorted(root.rglob(OOS)):
        with open(path) as fh:
            for row in csv.DictReader(fh):
                reports.append(RegretReport(
                    per_bidder_regret=[float(r) for r in row["per_bidder_regret"].split(";")],
                    mean_regret=float(row["mean_regret"]), revenue=float(row["revenue"]),
                    samples=int(row["samples"]), restarts=int(row["restarts"]), steps=int(row["steps"]),
                    setting=row["setting"], mechanism=row["mechanism"] + "_oos", n=int(row["n"]), m=int(row["m"]),
                    seed=int(row["seed"]), regret_samples=int(row["regret_samples"])))
    return reports


def summarize(root: Path) -> dict[str, Path]:
    """Tidy per-run rows, per-cell mean / sd over seeds, and plot-ready CSV series."""
    root = Path(root)
    reports = _collect_reports(root)
    histories = sorted(root.rglob(HISTORY))
    if not reports and not histories:
        raise FileNotFoundError(f"{root}: no artifacts to summarize; expected any of {REPORT}, {BASELINE}, "
                                f"{OOS} or {HISTORY} somewhere under it")
    paths = {}
    rows = [{c: getattr(r, c) for c in SUMMARY_COLUMNS} for r in reports]
    paths["summary"] = root / "summary.csv"
    with open(paths["summary"], "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)

    cells: dict[tuple, list[dict]] = {}
    for r in rows:
        cells.setdefault((r["setting"], r["mechanism"], r["n"], r["m"]), []).append(r)
    agg_cols = ["setting", "mechanism", "n", "m", "runs", "revenue_mean", "revenue_sd", "mean_regret_mean",
                "mean_regret_sd"]
    paths["aggregate"] = root / "summary_by_cell.csv"
    with open(paths["aggregate"], "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=agg_cols, lineterminator="\n")
        w.writeheader()
        for key in sorted(cells):
            group = cells[key]
            rev = np.array([g["revenue"] for g in group], dtype=np.float64)
            rgt = np.array([g["mean_regret"] for g in group], dtype=np.float64)
            sd = (lambda a: float(a.std(ddof=1)) if len(a) > 1 else 0.0)
            w.writerow(dict(zip(agg_cols[:4], key), runs=len(group), revenue_mean=float(rev.mean()),
                            revenue_sd=sd(rev), mean_regret_mean=float(rgt.mean()), mean_regret_sd=sd(rgt)))

    # revenue and regret against item count and bidder count, one series per (setting, mechanism)
    for axis, other in (("m", "n"), ("n", "m")):
        path = root / f"plot_revenue_vs_{axis}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["series", other, axis, "revenue_mean", "mean_regret_mean"])
            for key in sorted(cells, key=lambda k: (k[0], k[1], k[3 if axis == "n" else 2], k[2 if axis == "n" else 3])):
                group = cells[key]
                setting, mech, n, m = key
                w.writerow([f"{setting}/{mech}", n if other == "n" else m, m if axis == "m" else n,
                            float(np.mean([g["revenue"] for g in group])),
                            float(np.mean([g["mean_regret"] for g in group]))])
        paths[f"plot_{axis}"] = path

    if histories:
        path = root / "plot_training_curves.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run", "epoch", "revenue", "mean_regret", "loss", "rho"])
            for h in histories:
                run = str(h.parent.relative_to(root)) or "."
                for line in h.read_text().splitlines():
                    r = json.loads(line)
                    w.writerow([run, r["epoch"], r["revenue"], r["mean_regret"], r["loss"], r["rho"]])
        paths["curves"] = path
    return paths


def ensure_trained(config: ExperimentConfig, out: Path) -> tuple[MechanismNet, list[dict]]:
    """Reuse ``out``'s model when its train manifest records the same training fields, otherwise train afresh."""
    manifest = out / "manifest.train.json"
    if manifest.exists() and (out / MODEL).exists():
        record = json.loads(manifest.read_text())
        if training_key(record["config"]) == training_key(config):
            history = [json.loads(l) for l in (out / HISTORY).read_text().splitlines()]
            return MechanismNet.load(out / MODEL), history
        log.warning("%s was trained with a different config; retraining", out)
    return train_run(config, out)
