"""Config-driven experiment runs: data -> noise -> SelNLPL -> pseudo labeling.

Configs are INI files (see ``configs/``). The master seed fans out to one
independent stream per stage, ``SeedSequence(seed, spawn_key=(stage,))``:

    0 data generation / splitting    3 SelNLPL phase training
    1 noise injection                4 pseudo labeling
    2 SelNLPL network init           5 PL-only baseline

so any stage can be re-run in isolation with identical randomness.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data import LabeledDataset, load_idx, make_blobs, split
from .engine import Network
from .metrics import filter_metrics
from .noise import (
    NoiseSpec,
    NoisyDataset,
    format_asymm_map,
    inject_noise,
    parse_asymm_map,
    write_audit_csv,
)
from .pipeline import (
    DEFAULT_GAMMA,
    PhaseConfig,
    PhaseStarvationError,
    pseudo_label_pipeline,
    pseudo_schedule,
    run_selnlpl,
    train_pl_baseline,
)

log = logging.getLogger(__name__)

STAGE_DATA, STAGE_NOISE, STAGE_INIT, STAGE_SELNLPL, STAGE_PSEUDO, STAGE_BASELINE = range(6)

PHASE_DEFAULTS = {
    "NL": dict(epochs=50, lr=0.02),
    "SelNL": dict(epochs=50, lr=0.02),
    "SelPL": dict(epochs=50, lr=0.1, threshold=DEFAULT_GAMMA),
    "PL": dict(epochs=50, lr=0.1),
}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  {p}" for p in self.problems))


def stage_rng(seed: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stage,)))


def stage_seed(seed: int, stage: int) -> int:
    return int(stage_rng(seed, stage).integers(2**63 - 1))


@dataclass
class DataSpec:
    source: str = "blobs"
    n_classes: int = 4
    per_class_n: int = 500
    n_features: int = 16
    separation: float = 4.0
    train_fraction: float = 0.9
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    limit: int | None = None


@dataclass
class ExperimentConfig:
    data: DataSpec = field(default_factory=DataSpec)
    noise_kind: str = "symm_inc"
    noise_ratio: float = 0.3
    asymm_map: dict | None = None
    exact_count: bool = False
    hidden: tuple[int, ...] = (64, 64)
    phases: list[PhaseConfig] = field(
        default_factory=lambda: [PhaseConfig(k, **PHASE_DEFAULTS[k]) for k in ("NL", "SelNL", "SelPL")]
    )
    gamma: float = DEFAULT_GAMMA
    pseudo_label: bool = True
    pseudo_clean: PhaseConfig = field(default_factory=lambda: pseudo_schedule("PseudoCleanTrain"))
    pseudo_final: PhaseConfig = field(default_factory=lambda: pseudo_schedule("PseudoFinalTrain"))
    baseline: PhaseConfig | None = None
    seed: int = 0
    out: str | None = None

    def noise_spec(self) -> NoiseSpec:
        return NoiseSpec(self.noise_kind, self.noise_ratio, self.asymm_map,
                         seed=stage_seed(self.seed, STAGE_NOISE), exact_count=self.exact_count)


# -- INI (de)serialization ----------------------------------------------------

def _phase_items(cfg: PhaseConfig) -> dict:
    items = {"epochs": cfg.epochs, "lr": repr(cfg.lr), "batch_size": cfg.batch_size,
             "momentum": repr(cfg.momentum), "weight_decay": repr(cfg.weight_decay)}
    if cfg.kind == "SelPL":
        items["threshold"] = repr(cfg.threshold)
    if cfg.k is not None:
        items["k"] = cfg.k
    if cfg.lr_milestones:
        items["milestones"] = ",".join(map(str, cfg.lr_milestones))
        items["lr_decay"] = repr(cfg.lr_decay)
    return {k: str(v) for k, v in items.items()}


def to_ini(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    exp = {"seed": str(cfg.seed), "pseudo_label": str(cfg.pseudo_label).lower()}
    if cfg.out:
        exp["out"] = cfg.out
    cp["experiment"] = exp
    d = cfg.data
    data = {"source": d.source, "hidden": ",".join(map(str, cfg.hidden))}
    if d.source == "blobs":
        data.update(n_classes=str(d.n_classes), per_class_n=str(d.per_class_n),
                    n_features=str(d.n_features), separation=repr(d.separation),
                    train_fraction=repr(d.train_fraction))
    else:
        data.update(n_classes=str(d.n_classes), train_images=d.train_images,
                    train_labels=d.train_labels, train_fraction=repr(d.train_fraction))
        if d.test_images:
            data.update(test_images=d.test_images, test_labels=d.test_labels)
        if d.limit:
            data["limit"] = str(d.limit)
    cp["data"] = data
    noise = {"kind": cfg.noise_kind, "ratio": repr(cfg.noise_ratio),
             "exact_count": str(cfg.exact_count).lower()}
    if cfg.asymm_map:
        noise["asymm_map"] = format_asymm_map(cfg.asymm_map)
    cp["noise"] = noise
    cp["selnlpl"] = {"phases": ",".join(p.kind for p in cfg.phases), "gamma": repr(cfg.gamma)}
    for p in cfg.phases:
        cp[f"phase.{p.kind}"] = _phase_items(p)
    cp["pseudo.clean"] = _phase_items(cfg.pseudo_clean)
    cp["pseudo.final"] = _phase_items(cfg.pseudo_final)
    if cfg.baseline is not None:
        cp["baseline"] = _phase_items(cfg.baseline)
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


class _Reader:
    """Typed getters that collect problems instead of failing on the first one."""

    def __init__(self, cp):
        self.cp = cp
        self.problems = []

    def get(self, section, key, conv, default=None, required=False):
        if not self.cp.has_option(section, key) or self.cp.get(section, key).strip() == "":
            if required:
                self.problems.append(f"[{section}] {key}: required")
            return default
        raw = self.cp.get(section, key).strip()
        try:
            return conv(raw)
        except (ValueError, TypeError) as e:
            self.problems.append(f"[{section}] {key} = {raw!r}: {e}")
            return default


def _bool(s):
    v = s.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _ints(s):
    return tuple(int(x) for x in s.split(",") if x.strip())


def _read_phase(r: _Reader, section: str, kind: str, base: PhaseConfig | None = None,
                gamma: float = DEFAULT_GAMMA):
    base_kw = {}
    if base is not None:
        base_kw = dict(epochs=base.epochs, lr=base.lr, batch_size=base.batch_size,
                       momentum=base.momentum, weight_decay=base.weight_decay,
                       lr_milestones=base.lr_milestones, lr_decay=base.lr_decay)
    else:
        base_kw = dict(PHASE_DEFAULTS.get(kind, {}))
        base_kw.pop("threshold", None)
    kw = {}
    for key, conv, name in [("epochs", int, "epochs"), ("lr", float, "lr"),
                            ("batch_size", int, "batch_size"), ("momentum", float, "momentum"),
                            ("weight_decay", float, "weight_decay"), ("milestones", _ints, "lr_milestones"),
                            ("lr_decay", float, "lr_decay"), ("k", int, "k"),
                            ("threshold", float, "threshold")]:
        v = r.get(section, key, conv)
        if v is not None:
            kw[name] = v
    if base is not None and base.lr_milestones and "epochs" in kw and "lr_milestones" not in kw:
        kw["lr_milestones"] = (int(round(0.4 * kw["epochs"])), int(round(0.6 * kw["epochs"])))
    merged = {**base_kw, **kw}
    if kind == "SelPL":
        merged.setdefault("threshold", gamma)
    try:
        return PhaseConfig(kind, **merged)
    except (ValueError, TypeError) as e:
        r.problems.append(f"[{section}] {e}")
        return None


def from_ini(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError([str(e)]) from None
    r = _Reader(cp)
    known = {"experiment", "data", "noise", "selnlpl", "pseudo.clean", "pseudo.final", "baseline"}
    for s in cp.sections():
        if s not in known and not s.startswith("phase."):
            r.problems.append(f"[{s}]: unknown section")

    cfg = ExperimentConfig()
    cfg.seed = r.get("experiment", "seed", int, 0)
    cfg.pseudo_label = r.get("experiment", "pseudo_label", _bool, True)
    cfg.out = r.get("experiment", "out", str)

    d = DataSpec()
    d.source = r.get("data", "source", str, "blobs")
    if d.source not in ("blobs", "idx"):
        r.problems.append(f"[data] source = {d.source!r}: expected blobs or idx")
    d.n_classes = r.get("data", "n_classes", int, d.n_classes if d.source == "blobs" else 10)
    d.train_fraction = r.get("data", "train_fraction", float, d.train_fraction)
    if d.source == "blobs":
        d.per_class_n = r.get("data", "per_class_n", int, d.per_class_n)
        d.n_features = r.get("data", "n_features", int, d.n_features)
        d.separation = r.get("data", "separation", float, d.separation)
    else:
        d.train_images = r.get("data", "train_images", str, required=True)
        d.train_labels = r.get("data", "train_labels", str, required=True)
        d.test_images = r.get("data", "test_images", str)
        d.test_labels = r.get("data", "test_labels", str)
        if bool(d.test_images) != bool(d.test_labels):
            r.problems.append("[data] test_images and test_labels must be given together")
        d.limit = r.get("data", "limit", int)
    if not 0 < d.train_fraction < 1:
        r.problems.append("[data] train_fraction: must lie in (0, 1)")
    cfg.data = d
    cfg.hidden = r.get("data", "hidden", _ints, cfg.hidden)

    cfg.noise_kind = r.get("noise", "kind", str, "symm_inc")
    cfg.noise_ratio = r.get("noise", "ratio", float, 0.3)
    cfg.asymm_map = r.get("noise", "asymm_map", parse_asymm_map)
    cfg.exact_count = r.get("noise", "exact_count", _bool, False)
    try:
        cfg.noise_spec()
    except ValueError as e:
        r.problems.append(f"[noise] {e}")

    kinds = r.get("selnlpl", "phases", lambda s: [x.strip() for x in s.split(",") if x.strip()],
                  ["NL", "SelNL", "SelPL"])
    cfg.gamma = r.get("selnlpl", "gamma", float, DEFAULT_GAMMA)
    if not 0 < cfg.gamma < 1:
        r.problems.append("[selnlpl] gamma: must lie in (0, 1)")
    phases = []
    for kind in kinds:
        if kind not in PHASE_DEFAULTS:
            r.problems.append(f"[selnlpl] phases: unknown phase {kind!r}")
            continue
        p = _read_phase(r, f"phase.{kind}", kind, gamma=cfg.gamma)
        if p is not None:
            phases.append(p)
    if not kinds:
        r.problems.append("[selnlpl] phases: at least one phase required")
    cfg.phases = phases
    cfg.pseudo_clean = _read_phase(r, "pseudo.clean", "PseudoCleanTrain",
                                   pseudo_schedule("PseudoCleanTrain"))
    cfg.pseudo_final = _read_phase(r, "pseudo.final", "PseudoFinalTrain",
                                   pseudo_schedule("PseudoFinalTrain"))
    if cp.has_section("baseline"):
        cfg.baseline = _read_phase(r, "baseline", "PL", pseudo_schedule("PL", 150))
    if r.problems:
        raise ConfigError(r.problems)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError([f"{path}: {e.strerror}"]) from None
    return from_ini(text)


# -- artifacts ------------------------------------------------------------------

def atomic_write(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    atomic_write(path, buf.getvalue())


def write_json(path, doc):
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


TRACE_HEADER = ["epoch", "train_loss_pl", "train_acc", "test_acc", "n_selected"]


def write_trace(path, trace):
    write_csv(path, TRACE_HEADER, trace.rows())


def write_partition(path, partition, true_noisy=None):
    rows = []
    for i, (conf, noisy) in enumerate(zip(partition.confidence, partition.noisy_mask)):
        row = [i, float(conf), "noisy" if noisy else "clean"]
        row.append("" if true_noisy is None else int(true_noisy[i]))
        rows.append(row)
    write_csv(path, ["id", "confidence", "assigned", "is_noisy"], rows)


def write_confidences(path, conf, true_noisy):
    write_csv(path, ["id", "confidence", "is_noisy"],
              ([i, float(c), int(t)] for i, (c, t) in enumerate(zip(conf, true_noisy))))


def phase_tag(index: int, kind: str) -> str:
    return f"{index + 1}_{kind}"


# -- running ------------------------------------------------------------------------

def prepare_data(cfg: ExperimentConfig):
    """Build the (noisy train, clean test) pair the config describes."""
    d = cfg.data
    rng = stage_rng(cfg.seed, STAGE_DATA)
    if d.source == "blobs":
        full = make_blobs(d.n_classes, d.per_class_n, d.n_features, d.separation, rng)
        train, test = split(full, d.train_fraction, rng)
    else:
        train = load_idx(d.train_images, d.train_labels, d.n_classes)
        if d.limit and d.limit < len(train):
            train, _ = split(train, d.limit / len(train), rng)
        if d.test_images:
            test = load_idx(d.test_images, d.test_labels, d.n_classes)
        else:
            train, test = split(train, d.train_fraction, rng)
    noisy = inject_noise(train, cfg.noise_spec())
    return noisy, test


@dataclass
class ExperimentResult:
    report: dict
    train: NoisyDataset
    test: LabeledDataset
    net: Network
    partition: object
    traces: list
    pseudo: object = None
    baseline_trace: object = None


def _r(x, nd=6):
    return None if x is None or (isinstance(x, float) and np.isnan(x)) else round(float(x), nd)


def run_experiment(cfg: ExperimentConfig, out_dir=None, data=None) -> ExperimentResult:
    """Run one configured experiment; write artifacts into ``out_dir`` if given.

    Phase traces are written as each phase finishes, so a starved phase leaves
    the earlier artifacts in place before the error propagates.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        atomic_write(out / "config.ini", to_ini(replace(cfg, out=str(out))))
    train, test = data if data is not None else prepare_data(cfg)
    truth = train.is_noisy
    sizes = [train.n_features, *cfg.hidden, train.n_classes]
    if out is not None:
        write_audit_csv(out / "noise_audit.csv", train)

    def on_phase_end(i, pcfg, net, trace):
        if out is None:
            return
        tag = phase_tag(i, pcfg.kind)
        write_trace(out / f"trace_{tag}.csv", trace)
        write_confidences(out / f"confidence_{tag}.csv", trace.final_confidence, truth)

    net = Network.init(sizes, seed=stage_seed(cfg.seed, STAGE_INIT))
    net, partition, traces = run_selnlpl(net, train, cfg.phases, stage_rng(cfg.seed, STAGE_SELNLPL),
                                         test=test, gamma=cfg.gamma, on_phase_end=on_phase_end)
    frep = filter_metrics(partition, truth)
    if out is not None:
        write_partition(out / "partition.csv", partition, truth)

    report = {
        "phases": [p.kind for p in cfg.phases],
        "n_train": len(train),
        "n_test": len(test),
        "actual_noise": _r(frep.actual_noise_pct),
        "estimated_noise": _r(frep.estimated_noise_pct),
        "recall": _r(frep.recall_pct),
        "precision": _r(frep.precision_pct),
        "selnlpl_test_acc": _r(traces[-1].test_acc[-1]),
    }
    result = ExperimentResult(report, train, test, net, partition, traces)

    if cfg.pseudo_label:
        pseudo = pseudo_label_pipeline(train, partition, sizes, stage_rng(cfg.seed, STAGE_PSEUDO),
                                       cfg.pseudo_clean, cfg.pseudo_final, test=test)
        result.pseudo = pseudo
        report["pseudo_test_acc"] = _r(pseudo.test_acc)
        report["final_test_acc"] = _r(pseudo.test_acc)
        if out is not None:
            write_trace(out / "trace_pseudo_clean.csv", pseudo.traces[0])
            write_trace(out / "trace_pseudo_final.csv", pseudo.traces[1])
    else:
        report["final_test_acc"] = report["selnlpl_test_acc"]

    if cfg.baseline is not None:
        _, bt = train_pl_baseline(train, sizes, cfg.baseline, stage_rng(cfg.seed, STAGE_BASELINE),
                                  test=test)
        result.baseline_trace = bt
        report["baseline_test_acc"] = _r(bt.test_acc[-1])
        report["baseline_best_test_acc"] = _r(max(bt.test_acc))
        if out is not None:
            write_trace(out / "trace_baseline.csv", bt)

    if out is not None:
        write_json(out / "report.json", report)
    return result

