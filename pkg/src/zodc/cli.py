"""Command-line pipeline: prepare, train-ref, condense, eval, attack, budget, report, run."""

from __future__ import annotations

import argparse
import contextlib
import csv
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .attacks import AttackError, MiaConfig, attack_table, run_aia, run_mia
from .condenser import CondenseError, NumericalError, SyntheticDataset, condense, default_trainer
from .config import ConfigError, PipelineConfig, validate_config
from .datakit import (DataError, fit_feature_scaler, generate_benchmark, load_csv, save_csv,
                      scale_survival_times, split)
from .evalkit import (MetricError, classification_report, km_sup_distance, risk_group_curves,
                      survival_report)
from .models import (ConvergenceError, ModelError, load_model, save_model, train_cox, train_gbdt,
                     train_logistic)
from .privacy import DpLedger, PrivacyError, epsilon_curve

log = logging.getLogger("zodc")

EXIT_OK, EXIT_VALIDATION, EXIT_DEPENDENCY, EXIT_NUMERICAL = 0, 2, 3, 4
STAGES = ("prepare", "train-ref", "condense", "eval", "attack", "budget", "report")
RESERVED = ("label", "time", "event")


class DependencyError(RuntimeError):
    pass


class NumericalFailure(RuntimeError):
    pass


# ----------------------------------------------------------------- file helpers


def write_json(path, doc):
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(_clean(doc), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@contextlib.contextmanager
def output_lock(out):
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, ".zodc.lock")
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DependencyError(f"output directory {out} is locked by another run "
                              f"(remove {path} if that run is gone)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        os.remove(path)


# ------------------------------------------------------------------ run context


class Pipeline:
    def __init__(self, cfg: PipelineConfig, force=False):
        self.cfg = cfg
        self.force = force
        self.out = cfg.out
        self.manifest_path = self.path("manifest.json")
        if os.path.exists(self.manifest_path):
            self.manifest = read_json(self.manifest_path)
        else:
            self.manifest = {}
        self.manifest.update(tool_version=__version__, config_hash=cfg.config_hash())
        self.manifest.setdefault("stages", {})

    def path(self, *parts):
        return os.path.join(self.out, *parts)

    def ensure_dirs(self):
        for sub in ("data", "models", "condensed", "reports"):
            os.makedirs(self.path(sub), exist_ok=True)

    # stage bookkeeping

    def stage_key(self, inputs):
        h = hashlib.sha256(self.cfg.config_hash().encode())
        for p in sorted(inputs):
            if not os.path.exists(p):
                continue
            h.update(p.encode())
            h.update(file_digest(p).encode())
        return h.hexdigest()

    def require(self, paths, producer):
        for p in paths:
            if not os.path.exists(p):
                raise DependencyError(f"missing artifact {p}; run the '{producer}' stage first")

    def run_stage(self, name):
        inputs, body = getattr(self, "stage_" + name.replace("-", "_"))()
        key = self.stage_key(inputs)
        entry = self.manifest["stages"].get(name)
        if (not self.force and entry and entry.get("key") == key
                and all(os.path.exists(p) for p in entry.get("artifacts", []))):
            print(f"[{name}] up to date, skipping (use --force to rerun)", file=sys.stderr)
            self.show(name)
            return
        t0 = time.perf_counter()
        artifacts, failure = body()
        self.manifest["stages"][name] = {
            "key": key, "config_hash": self.cfg.config_hash(),
            "artifacts": sorted(artifacts), "seconds": round(time.perf_counter() - t0, 3),
        }
        write_json(self.manifest_path, self.manifest)
        print(f"[{name}] wrote {len(artifacts)} artifact(s)", file=sys.stderr)
        self.show(name)
        if failure:
            raise NumericalFailure(failure)

    def show(self, name):
        """Print the human-readable output of ``budget`` and ``report`` from their artifacts."""
        if name == "budget":
            for ipc in self.cfg.condense.ipc:
                p = self.path("reports", f"budget_ipc{ipc}.csv")
                if not os.path.exists(p):
                    print(f"ipc {ipc}: no privacy ledger (DP disabled)")
                    continue
                print(f"ipc {ipc}: delta={self.cfg.dp.delta:g}")
                with open(p) as fh:
                    for row in csv.DictReader(fh):
                        print(f"  steps {int(row['steps']):6d}  epsilon {float(row['epsilon']):.4f}")
        elif name == "report":
            with open(self.path("reports", "summary.csv")) as fh:
                rows = list(csv.DictReader(fh))
            print(format_table(rows, list(rows[0])))

    # data access through the on-disk formats only

    def data_paths(self):
        return [self.path("data", f"{s}.csv") for s in ("train", "val", "test")]

    def load_split(self, name):
        return self.load_file(self.path("data", f"{name}.csv"))

    def load_file(self, path):
        kw = {"time_column": "time", "event_column": "event"} if self.cfg.survival else {}
        return load_csv(path, **kw)

    def condensed_paths(self, ipc):
        return self.path("condensed", f"ipc{ipc}.csv"), self.path("condensed", f"ipc{ipc}.json")

    def load_condensed(self, ipc):
        csv_path, _ = self.condensed_paths(ipc)
        data = self.load_file(csv_path)
        if self.cfg.survival:
            return SyntheticDataset(data.features, times=data.times, events=data.events,
                                    feature_names=data.feature_names)
        return SyntheticDataset(data.features, labels=data.labels, feature_names=data.feature_names)

    def risk(self, model, X):
        pred = model.predict(X)
        return -pred if self.cfg.task == "aft" else pred

    def all_condensed(self):
        return [p for ipc in self.cfg.condense.ipc for p in self.condensed_paths(ipc)]

    # ---------------------------------------------------------------- stages

    def stage_prepare(self):
        cfg = self.cfg
        inputs = [cfg.dataset.path] if cfg.dataset.path else []

        def body():
            ds = cfg.dataset
            if ds.path:
                if cfg.survival:
                    data = load_csv(ds.path, time_column=ds.time_column, event_column=ds.event_column)
                else:
                    data = load_csv(ds.path, label_column=ds.label_column)
            else:
                b = ds.benchmark
                data = generate_benchmark(b.kind, b.n, b.d, b.seed, cfg.benchmark_params())
            clash = set(data.feature_names) & set(RESERVED)
            if clash:
                raise DataError(f"feature names {sorted(clash)} collide with outcome columns")
            parts = split(data, cfg.split_spec())
            scaler = fit_feature_scaler(parts[0])
            parts = [p.with_features(scaler.apply(p.features)) for p in parts]
            meta = {"feature_scaler": scaler.to_dict(), "n_rows": [p.n for p in parts]}
            if cfg.survival:
                _, tscale = scale_survival_times(parts[0].times, parts[0].events)
                parts = [p.with_times(tscale.transform(p.times)) for p in parts]
                meta["time_scale"] = tscale.scale_s
            paths = self.data_paths()
            for p, path in zip(parts, paths):
                save_csv(p, path)
            write_json(self.path("data", "scaler.json"), meta)
            return paths + [self.path("data", "scaler.json")], None
        return inputs, body

    def stage_train_ref(self):
        cfg = self.cfg
        inputs = self.data_paths()[:2]

        def body():
            self.require(inputs, "prepare")
            train, val = self.load_split("train"), self.load_split("val")
            kind = cfg.model.kind
            if kind == "gbdt":
                model = train_gbdt(train, val, cfg.gbdt_config())
            elif kind == "cox":
                model = train_cox(train, cfg.cox_config())
            else:
                model = train_logistic(train, cfg.model.logistic_l2)
            path = self.path("models", "reference.json")
            save_model(model, path)
            return [path], None
        return inputs, body

    def stage_condense(self):
        cfg = self.cfg
        ref_path = self.path("models", "reference.json")
        inputs = self.data_paths()[:2] + [ref_path]

        def body():
            self.require(self.data_paths()[:2], "prepare")
            self.require([ref_path], "train-ref")
            train, val = self.load_split("train"), self.load_split("val")
            model = load_model(ref_path)
            dp = cfg.dp_config()
            written, failure = [], None
            for ipc in cfg.condense.ipc:
                ccfg = cfg.condense_config(ipc)
                syn, ledger, history = condense(train, val, model, ccfg, dp)
                csv_path, side_path = self.condensed_paths(ipc)
                save_csv(syn.as_dataset(), csv_path)
                sidecar = {
                    "ipc": ipc,
                    "rows": syn.m,
                    "config": asdict(ccfg),
                    "dp": asdict(dp) if dp else None,
                    "model_fingerprint": model.fingerprint(),
                    "history": history.to_dict(),
                    "ledger": ledger.to_dict(dp.delta) if ledger is not None else None,
                }
                write_json(side_path, sidecar)
                written += [csv_path, side_path]
                if history.stopped.startswith("numerical"):
                    failure = f"ipc {ipc}: {history.stopped} (last good snapshot written)"
            return written, failure
        return inputs, body

    def stage_eval(self):
        cfg = self.cfg
        ref_path = self.path("models", "reference.json")
        inputs = self.data_paths() + [ref_path] + self.all_condensed()

        def body():
            self.require(self.data_paths(), "prepare")
            self.require([ref_path], "train-ref")
            self.require(self.all_condensed(), "condense")
            ref = load_model(ref_path)
            val, test = self.load_split("val"), self.load_split("test")
            trainer = default_trainer(ref)
            models = {"full": ref}
            for ipc in cfg.condense.ipc:
                models[f"ipc{ipc}"] = trainer(self.load_condensed(ipc).as_dataset())

            written = []
            full_groups = None
            for label, model in models.items():
                rep = self._utility(model, val, test)
                doc = rep.to_dict()
                if cfg.survival:
                    groups = risk_group_curves(self.risk(model, test.features), test.times,
                                               test.events, cfg.eval.km_groups)
                    for g, curve in enumerate(groups):
                        p = self.path("reports", f"km_{label}_g{g}.csv")
                        curve.to_csv(p)
                        written.append(p)
                    if full_groups is None:
                        full_groups = groups
                    doc["km_sup_distance"] = [km_sup_distance(a, b) for a, b in zip(full_groups, groups)]
                p = self.path("reports", f"utility_{label}.json")
                write_json(p, doc)
                written.append(p)
            return written, None
        return inputs, body

    def _utility(self, model, val, test):
        n, seed = self.cfg.eval.n_resamples, self.cfg.seed
        if self.cfg.survival:
            return survival_report(self.risk(model, test.features), test.times, test.events, n, seed)
        return classification_report(model.predict(val.features), val.labels,
                                     model.predict(test.features), test.labels, n, seed)

    def stage_attack(self):
        cfg = self.cfg
        paths = [self.data_paths()[0], self.data_paths()[2]]
        inputs = paths + self.all_condensed()

        def body():
            if not cfg.attack.enabled:
                return [], None
            self.require(paths, "prepare")
            self.require(self.all_condensed(), "condense")
            train, test = self.load_split("train"), self.load_split("test")
            a = cfg.attack
            mia = MiaConfig(a.k_neighbors, n_trees=a.n_trees, max_depth=a.max_depth,
                            learning_rate=a.learning_rate, train_frac=a.train_frac,
                            repeats=a.repeats, seed=cfg.seed)
            # balanced member / nonmember pools
            n = min(train.n, test.n, a.max_members or train.n)
            rng = np.random.default_rng([cfg.seed, 7])
            members = train.features[np.sort(rng.choice(train.n, n, replace=False))]
            nonmembers = test.features[np.sort(rng.choice(test.n, n, replace=False))]
            real_table, columns = attack_table(test)
            written = []
            for ipc in cfg.condense.ipc:
                syn = self.load_condensed(ipc)
                side = read_json(self.condensed_paths(ipc)[1])
                eps = side["ledger"]["report"]["epsilon"] if side.get("ledger") else None
                doc = {"ipc": ipc, "epsilon": eps,
                       "mia": run_mia(members, nonmembers, syn.X, mia, eps, cfg.dp.delta).to_dict(),
                       "aia": []}
                syn_table, syn_cols = attack_table(syn.as_dataset())
                for target in a.aia_targets:
                    if target not in columns:
                        raise DataError(f"attack target {target!r} is not a column "
                                        f"(have {columns})")
                    rep = run_aia(syn_table, real_table, columns, target, mia, a.aia_seeds)
                    doc["aia"].append(rep.to_dict())
                p = self.path("reports", f"attack_ipc{ipc}.json")
                write_json(p, doc)
                written.append(p)
            return written, None
        return inputs, body

    def stage_budget(self):
        cfg = self.cfg
        sidecars = [self.condensed_paths(i)[1] for i in cfg.condense.ipc]

        def body():
            self.require(sidecars, "condense")
            written = []
            for ipc, side_path in zip(cfg.condense.ipc, sidecars):
                side = read_json(side_path)
                if not side.get("ledger"):
                    continue
                ledger = DpLedger.from_dict(side["ledger"])
                curve = epsilon_curve(ledger, cfg.dp.delta, cfg.condense.eval_every)
                p = self.path("reports", f"budget_ipc{ipc}.csv")
                with open(p + ".tmp", "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(["steps", "epsilon"])
                    w.writerows((s, repr(e)) for s, e in curve)
                os.replace(p + ".tmp", p)
                written.append(p)
            return written, None
        return sidecars, body

    def stage_report(self):
        cfg = self.cfg
        labels = ["full"] + [f"ipc{i}" for i in cfg.condense.ipc]
        utility = [self.path("reports", f"utility_{lab}.json") for lab in labels]
        attack = [self.path("reports", f"attack_ipc{i}.json") for i in cfg.condense.ipc]
        sidecars = [self.condensed_paths(i)[1] for i in cfg.condense.ipc]
        attack_inputs = attack if cfg.attack.enabled else []

        def body():
            self.require(utility, "eval")
            self.require(sidecars, "condense")
            self.require(attack_inputs, "attack")
            rows = []
            metric = "c_index" if cfg.survival else "auroc"
            for lab in labels:
                u = read_json(self.path("reports", f"utility_{lab}.json"))["metrics"][metric]
                row = {"setting": lab, "metric": metric, "mean": u["mean"],
                       "ci_low": u["ci_low"], "ci_high": u["ci_high"],
                       "epsilon": None, "mia_auroc": None, "mia_advantage": None}
                if lab != "full":
                    ipc = int(lab[3:])
                    side = read_json(self.condensed_paths(ipc)[1])
                    if side.get("ledger"):
                        row["epsilon"] = side["ledger"]["report"]["epsilon"]
                    if cfg.attack.enabled:
                        mia = read_json(self.path("reports", f"attack_ipc{ipc}.json"))["mia"]
                        row["mia_auroc"] = mia["auroc"][0]
                        row["mia_advantage"] = mia["membership_advantage"][0]
                rows.append(row)
            p = self.path("reports", "summary.csv")
            cols = list(rows[0])
            with open(p + ".tmp", "w", newline="") as fh:
                w = csv.DictWriter(fh, cols, lineterminator="\n")
                w.writeheader()
                w.writerows({k: _fmt(v) for k, v in r.items()} for r in rows)
            os.replace(p + ".tmp", p)
            return [p], None
        return utility + sidecars + attack_inputs, body


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def format_table(rows, cols):
    cells = [[_fmt(r[c]) or "-" for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.ljust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


# ------------------------------------------------------------------------- main


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline YAML file")
    common.add_argument("--force", action="store_true", help="rerun stages that are up to date")
    common.add_argument("--seed", type=int, default=None, help="override the global seed")
    common.add_argument("--ipc", type=int, action="append", default=None,
                        help="instances per class; repeat for a sweep")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="zodc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in STAGES + ("run",):
        sub.add_parser(name, parents=[common])
    return parser


def _fail(code, kind, message, **extra):
    print(json.dumps({"error": kind, "message": message, **extra}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = validate_config(args.config, {"seed": args.seed, "ipc": args.ipc, "out": args.out})
    except ConfigError as exc:
        print(json.dumps(exc.to_dict()), file=sys.stderr)
        return EXIT_VALIDATION

    stages = STAGES if args.command == "run" else (args.command,)
    try:
        with output_lock(cfg.out):
            pipe = Pipeline(cfg, force=args.force)
            pipe.ensure_dirs()
            for stage in stages:
                pipe.run_stage(stage)
    except DependencyError as exc:
        return _fail(EXIT_DEPENDENCY, "dependency", str(exc))
    except (NumericalFailure, NumericalError, ConvergenceError, FloatingPointError) as exc:
        return _fail(EXIT_NUMERICAL, "numerical", str(exc))
    except (DataError, ModelError, MetricError, AttackError, CondenseError, PrivacyError,
            ConfigError) as exc:
        return _fail(EXIT_VALIDATION, "validation", str(exc))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
