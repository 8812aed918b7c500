"""Pipeline configuration: a YAML file with every default filled in and every key checked."""

from __future__ import annotations

import difflib
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields

import yaml

from .condenser import CondenseConfig
from .datakit import BenchmarkParams, SplitSpec
from .models import CoxConfig, GbdtConfig
from .privacy import DpConfig, PrivacyError

TASKS = ("classification", "cox", "aft")
MODEL_KINDS = {"classification": ("gbdt", "logistic"), "cox": ("cox",), "aft": ("gbdt",)}


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message

    def to_dict(self):
        return {"error": "validation", "field": self.field, "message": self.message}


@dataclass
class BenchmarkSection:
    kind: str = "two_gaussians"
    n: int = 5000
    d: int = 10
    seed: int | None = None
    params: dict = field(default_factory=dict)


@dataclass
class DatasetSection:
    path: str | None = None
    label_column: str = "label"
    time_column: str | None = None
    event_column: str | None = None
    benchmark: BenchmarkSection | None = None


@dataclass
class SplitSection:
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2
    stratify: bool = True


@dataclass
class ModelSection:
    kind: str | None = None
    gbdt: dict = field(default_factory=dict)
    cox: dict = field(default_factory=dict)
    logistic_l2: float = 1.0


@dataclass
class CondenseSection:
    ipc: list = field(default_factory=lambda: [50])
    class_ratio: tuple = (1.0, 1.0)
    rho: float = 0.1
    alpha_eps: float = 1e-12
    fd_step_range: tuple = (0.025, 2.0)
    optimizer_lr: float = 0.001
    max_iters: int = 2000
    eval_every: int = 50
    patience: int = 5
    k_strata: int = 4
    n_bins: int = 10
    max_resample: int = 10


@dataclass
class DpSection:
    enabled: bool = False
    clip_norm: float = 1.0
    sigma_base: float = 1.0
    sigma_grid_multipliers: tuple = DpConfig.sigma_grid_multipliers
    delta: float = 1e-5


@dataclass
class AttackSection:
    enabled: bool = True
    k_neighbors: int = 5
    n_trees: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    train_frac: float = 0.8
    repeats: int = 5
    max_members: int | None = None
    aia_targets: list = field(default_factory=list)
    aia_seeds: int = 5


@dataclass
class EvalSection:
    n_resamples: int = 1000
    km_groups: int = 2


@dataclass
class PipelineConfig:
    dataset: DatasetSection = field(default_factory=DatasetSection)
    task: str = "classification"
    split: SplitSection = field(default_factory=SplitSection)
    model: ModelSection = field(default_factory=ModelSection)
    condense: CondenseSection = field(default_factory=CondenseSection)
    dp: DpSection = field(default_factory=DpSection)
    attack: AttackSection = field(default_factory=AttackSection)
    eval: EvalSection = field(default_factory=EvalSection)
    out: str = "runs/default"
    seed: int = 0

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    @property
    def survival(self) -> bool:
        return self.task != "classification"

    # builders for the library configs

    def split_spec(self) -> SplitSpec:
        s = self.split
        return SplitSpec(s.train_frac, s.val_frac, s.test_frac, self.seed, s.stratify)

    def gbdt_config(self) -> GbdtConfig:
        params = dict(self.model.gbdt)
        params.setdefault("seed", self.seed)
        if self.task == "aft":
            params["objective"] = "aft_normal"
        return GbdtConfig(**params)

    def cox_config(self) -> CoxConfig:
        return CoxConfig(**self.model.cox)

    def condense_config(self, ipc) -> CondenseConfig:
        params = asdict(self.condense)
        params.pop("ipc")
        return CondenseConfig(ipc=int(ipc), seed=self.seed, **params)

    def dp_config(self, check_only=False) -> DpConfig | None:
        if not (self.dp.enabled or check_only):
            return None
        p = self.dp
        return DpConfig(clip_norm=p.clip_norm, sigma_base=p.sigma_base,
                        sigma_grid_multipliers=p.sigma_grid_multipliers, delta=p.delta,
                        noise_seed=self.seed)

    def benchmark_params(self) -> BenchmarkParams:
        return BenchmarkParams(**self.dataset.benchmark.params)


def _build(cls, doc, prefix):
    """Instantiate dataclass ``cls`` from a mapping, rejecting unknown keys."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError(prefix or "<root>", f"expected a mapping, got {type(doc).__name__}")
    _check_keys(prefix.rstrip("."), doc, cls)
    kwargs = {}
    for key, value in doc.items():
        sub = SECTIONS.get((cls, key))
        if sub is not None and (value is not None or key != "benchmark"):
            value = _build(sub, value, f"{prefix}{key}.")
        kwargs[key] = value
    return cls(**kwargs)


SECTIONS = {
    (PipelineConfig, "dataset"): DatasetSection,
    (PipelineConfig, "split"): SplitSection,
    (PipelineConfig, "model"): ModelSection,
    (PipelineConfig, "condense"): CondenseSection,
    (PipelineConfig, "dp"): DpSection,
    (PipelineConfig, "attack"): AttackSection,
    (PipelineConfig, "eval"): EvalSection,
    (DatasetSection, "benchmark"): BenchmarkSection,
}


def _check_keys(name, given, cls):
    """Reject keys that are not fields of ``cls``, suggesting the closest one."""
    allowed = [f.name for f in fields(cls)]
    for key in given:
        if key not in allowed:
            hint = difflib.get_close_matches(str(key), allowed, n=1, cutoff=0.6)
            extra = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ConfigError(f"{name}.{key}" if name else str(key), f"unknown key{extra}")


def _validate(cfg: PipelineConfig, base_dir):
    if cfg.task not in TASKS:
        raise ConfigError("task", f"must be one of {TASKS}, got {cfg.task!r}")
    try:
        cfg.seed = int(cfg.seed)
    except (TypeError, ValueError):
        raise ConfigError("seed", f"must be an integer, got {cfg.seed!r}") from None

    ds = cfg.dataset
    if (ds.path is None) == (ds.benchmark is None):
        raise ConfigError("dataset", "give exactly one of 'path' or 'benchmark'")
    if ds.path is not None:
        ds.path = os.path.normpath(os.path.join(base_dir, ds.path))
        if not os.path.exists(ds.path):
            raise ConfigError("dataset.path", f"file not found: {ds.path}")
        if cfg.survival and (ds.time_column is None or ds.event_column is None):
            raise ConfigError("dataset", f"task {cfg.task!r} needs time_column and event_column")
    else:
        bench = ds.benchmark
        want = "two_gaussians" if cfg.task == "classification" else "weibull_survival"
        if bench.kind != want:
            raise ConfigError("dataset.benchmark.kind", f"task {cfg.task!r} needs {want!r}")
        if bench.seed is None:
            bench.seed = cfg.seed
        _check_keys("dataset.benchmark.params", bench.params, BenchmarkParams)

    s = cfg.split
    for name in ("train_frac", "val_frac", "test_frac"):
        v = getattr(s, name)
        if not isinstance(v, (int, float)) or not 0 < v < 1:
            raise ConfigError(f"split.{name}", f"must lie in (0, 1), got {v!r}")
    if abs(s.train_frac + s.val_frac + s.test_frac - 1) > 1e-9:
        raise ConfigError("split", "fractions must sum to 1")

    m = cfg.model
    kinds = MODEL_KINDS[cfg.task]
    if m.kind is None:
        m.kind = kinds[0]
    if m.kind not in kinds:
        raise ConfigError("model.kind", f"task {cfg.task!r} allows {kinds}, got {m.kind!r}")
    _check_keys("model.gbdt", m.gbdt, GbdtConfig)
    _check_keys("model.cox", m.cox, CoxConfig)

    c = cfg.condense
    if isinstance(c.ipc, int):
        c.ipc = [c.ipc]
    if not isinstance(c.ipc, list) or not c.ipc or any(not isinstance(i, int) or i < 1 for i in c.ipc):
        raise ConfigError("condense.ipc", f"must be a positive integer or a list of them, got {c.ipc!r}")
    c.ipc = sorted(set(c.ipc))
    c.class_ratio = tuple(c.class_ratio)
    c.fd_step_range = tuple(c.fd_step_range)
    if not 0 < c.rho < 1:
        raise ConfigError("condense.rho", f"must lie in (0, 1), got {c.rho}")
    if len(c.fd_step_range) != 2 or not 0 < c.fd_step_range[0] < c.fd_step_range[1]:
        raise ConfigError("condense.fd_step_range", f"must satisfy 0 < lo < hi, got {c.fd_step_range}")
    if c.k_strata < 2:
        raise ConfigError("condense.k_strata", "must be >= 2")
    if not c.optimizer_lr > 0:
        raise ConfigError("condense.optimizer_lr", "must be positive")

    cfg.dp.sigma_grid_multipliers = tuple(cfg.dp.sigma_grid_multipliers)
    a = cfg.attack
    if a.k_neighbors < 1:
        raise ConfigError("attack.k_neighbors", "must be >= 1")
    if a.repeats < 1:
        raise ConfigError("attack.repeats", "must be >= 1")
    if cfg.eval.n_resamples < 100:
        raise ConfigError("eval.n_resamples", "must be at least 100")
    cfg.out = os.path.normpath(os.path.join(base_dir, cfg.out))

    # let the library configs run their own checks
    for what, build in (("model.gbdt", cfg.gbdt_config), ("model.cox", cfg.cox_config),
                        ("condense", lambda: cfg.condense_config(c.ipc[0])), ("dp", lambda: cfg.dp_config(check_only=True))):
        try:
            build()
        except (TypeError, ValueError, PrivacyError) as exc:
            raise ConfigError(what, str(exc)) from None
    return cfg


def config_from_dict(doc, base_dir=".", overrides=None) -> PipelineConfig:
    doc = dict(doc or {})
    overrides = overrides or {}
    if overrides.get("seed") is not None:
        doc["seed"] = overrides["seed"]
    if overrides.get("out") is not None:
        doc["out"] = os.path.abspath(overrides["out"])
    if overrides.get("ipc"):
        doc["condense"] = dict(doc.get("condense") or {}, ipc=list(overrides["ipc"]))
    try:
        cfg = _build(PipelineConfig, doc, "")
    except TypeError as exc:
        raise ConfigError("<root>", str(exc)) from None
    return _validate(cfg, base_dir)


def validate_config(path, overrides=None) -> PipelineConfig:
    if not os.path.exists(path):
        raise ConfigError("--config", f"file not found: {path}")
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError("--config", f"not valid YAML: {exc}") from None
    if doc is not None and not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a mapping")
    return config_from_dict(doc, os.path.dirname(os.path.abspath(path)), overrides)
