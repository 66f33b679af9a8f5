"""Phase machine for selective negative/positive learning, filtering and pseudo labeling.

A run is a list of ``PhaseConfig``; the default NL -> SelNL -> SelPL sequence
can be shortened to get the ablation variants. Selection is decided per
mini-batch using the network as it is at that moment, and "confidence" is
always the probability given to the observed (possibly wrong) label.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import Network, OptimizerState, sgd_step
from .losses import default_k, gen_complementary, nl_loss_multi, pl_loss, soft_ce_loss

log = logging.getLogger(__name__)

PHASE_KINDS = ("NL", "SelNL", "SelPL", "PL", "PseudoCleanTrain", "PseudoFinalTrain")
NL_KINDS = ("NL", "SelNL")
DEFAULT_GAMMA = 0.5


class PipelineError(RuntimeError):
    pass


class PhaseStarvationError(PipelineError):
    def __init__(self, kind, threshold, epoch):
        self.kind, self.threshold, self.epoch = kind, threshold, epoch
        super().__init__(
            f"phase {kind} selected no samples in epoch {epoch} "
            f"(selection threshold p_y > {threshold:.4g})"
        )


class CannotBootstrapError(PipelineError):
    pass


@dataclass
class PhaseConfig:
    kind: str
    epochs: int = 50
    lr: float = 0.02
    batch_size: int = 128
    threshold: float | None = None
    k: int | None = None
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_milestones: tuple[int, ...] = ()
    lr_decay: float = 0.1

    def __post_init__(self):
        if self.kind not in PHASE_KINDS:
            raise ValueError(f"unknown phase kind {self.kind!r}; expected one of {PHASE_KINDS}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError(f"{self.kind}: epochs and batch_size must be >= 1")
        if self.lr < 0:
            raise ValueError(f"{self.kind}: learning rate must be >= 0")
        if self.kind == "SelNL" and self.threshold is not None:
            raise ValueError("SelNL threshold is fixed at 1/c and cannot be set")
        if self.kind == "SelPL":
            if self.threshold is None:
                self.threshold = DEFAULT_GAMMA
            if not 0 < self.threshold < 1:
                raise ValueError("SelPL threshold must lie in (0, 1)")
        elif self.kind != "SelNL" and self.threshold is not None:
            raise ValueError(f"{self.kind} phases do not select samples; drop the threshold")
        if self.k is not None:
            if self.kind not in NL_KINDS:
                raise ValueError("k only applies to NL phases")
            if self.k < 1:
                raise ValueError("k must be >= 1")
        self.lr_milestones = tuple(int(m) for m in self.lr_milestones)

    def selection_threshold(self, n_classes: int) -> float | None:
        if self.kind == "SelNL":
            return 1.0 / n_classes
        return self.threshold

    def lr_at(self, epoch: int) -> float:
        drops = sum(epoch >= m for m in self.lr_milestones)
        return self.lr * self.lr_decay**drops


def default_phases(epochs: int = 50, gamma: float = DEFAULT_GAMMA, k: int | None = None,
                   nl_lr: float = 0.02, pl_lr: float = 0.1, batch_size: int = 128):
    return [
        PhaseConfig("NL", epochs, nl_lr, batch_size, k=k),
        PhaseConfig("SelNL", epochs, nl_lr, batch_size, k=k),
        PhaseConfig("SelPL", epochs, pl_lr, batch_size, threshold=gamma),
    ]


def pseudo_schedule(kind: str, epochs: int = 50, lr: float = 0.1, batch_size: int = 128):
    """Step schedule dropping the rate x0.1 at 40% and 60% of the budget."""
    return PhaseConfig(kind, epochs, lr, batch_size,
                       lr_milestones=(int(round(0.4 * epochs)), int(round(0.6 * epochs))))


ABLATIONS = {
    "1": ("NL", "SelNL", "SelPL"),
    "2": ("NL", "SelNL"),
    "3": ("NL", "SelPL"),
    "4": ("NL",),
}


def compose(phases, kinds) -> list[PhaseConfig]:
    """Pick phases by kind, keeping their settings, e.g. to drop SelNL."""
    by_kind = {p.kind: p for p in phases}
    missing = [k for k in kinds if k not in by_kind]
    if missing:
        raise ValueError(f"no configuration for phases {missing}")
    return [by_kind[k] for k in kinds]


@dataclass
class PhaseTrace:
    kind: str
    train_loss: list[float] = field(default_factory=list)  # mean -log p_y on observed labels
    train_acc: list[float] = field(default_factory=list)  # vs observed labels
    test_acc: list[float] = field(default_factory=list)  # NaN without a test set
    n_selected: list[int] = field(default_factory=list)
    final_confidence: np.ndarray | None = None

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def rows(self):
        for i in range(self.epochs):
            yield (i + 1, self.train_loss[i], self.train_acc[i], self.test_acc[i],
                   self.n_selected[i])


@dataclass
class FilterPartition:
    confidence: np.ndarray
    gamma: float

    @property
    def clean_mask(self) -> np.ndarray:
        return self.confidence > self.gamma

    @property
    def noisy_mask(self) -> np.ndarray:
        return ~self.clean_mask

    @property
    def clean_idx(self) -> np.ndarray:
        return np.flatnonzero(self.clean_mask)

    @property
    def noisy_idx(self) -> np.ndarray:
        return np.flatnonzero(self.noisy_mask)

    @property
    def estimated_noise(self) -> float:
        return float(self.noisy_mask.mean())


def confidences(net: Network, data) -> np.ndarray:
    p = net.predict_proba(data.features)
    return p[np.arange(len(p)), data.labels]


def _evaluate(net, data, test):
    p = net.predict_proba(data.features)
    py = p[np.arange(len(p)), data.labels]
    loss = float(pl_loss(p, data.labels).loss.mean())
    acc = 100.0 * float(np.mean(np.argmax(p, axis=1) == data.labels))
    if test is None:
        test_acc = float("nan")
    else:
        tp = net.predict_proba(test.features)
        test_acc = 100.0 * float(np.mean(np.argmax(tp, axis=1) == test.labels))
    return loss, acc, test_acc, py


def train_phase(net: Network, data, cfg: PhaseConfig, rng: np.random.Generator,
                test=None, targets=None):
    """Train ``net`` in place for one phase; returns ``(net, PhaseTrace)``.

    ``targets`` (an ``(N, c)`` matrix of target distributions) is only used by
    PseudoFinalTrain; without it the observed labels are used one-hot.
    """
    c = data.n_classes
    if net.n_classes != c:
        raise PipelineError(f"network has {net.n_classes} outputs, data has {c} classes")
    if targets is not None:
        if cfg.kind != "PseudoFinalTrain":
            raise PipelineError("soft targets are only used by PseudoFinalTrain")
        targets = np.asarray(targets, dtype=np.float64)
        if targets.shape != (len(data), c):
            raise PipelineError(f"targets shape {targets.shape} != {(len(data), c)}")
    x_all, y_all = data.features, data.labels
    n = len(y_all)
    thr = cfg.selection_threshold(c)
    k = cfg.k if cfg.k is not None else default_k(c)
    nl = cfg.kind in NL_KINDS
    state = OptimizerState.for_network(net, max(cfg.lr, 1e-300), cfg.momentum, cfg.weight_decay)
    trace = PhaseTrace(cfg.kind)

    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        perm = rng.permutation(n)
        selected = 0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            yb = y_all[idx]

            def grad_fn(p):
                rows = np.arange(len(p))
                mask = np.ones(len(p), bool) if thr is None else p[rows, yb] > thr
                m = int(mask.sum())
                grad = np.zeros_like(p)
                if m == 0:
                    return 0, grad
                if nl:
                    ybars = gen_complementary(yb[mask], c, rng, k=k)
                    out = nl_loss_multi(p[mask], ybars)
                elif targets is not None:
                    out = soft_ce_loss(p[mask], targets[idx[mask]])
                else:
                    out = pl_loss(p[mask], yb[mask])
                grad[mask] = out.grad / m
                return m, grad

            m, _, grads = net.forward_backward(x_all[idx], grad_fn)
            if m:
                selected += m
                sgd_step(net, grads, state, lr=lr)
        if selected == 0:
            raise PhaseStarvationError(cfg.kind, thr if thr is not None else 0.0, epoch + 1)
        loss, acc, test_acc, conf = _evaluate(net, data, test)
        trace.train_loss.append(loss)
        trace.train_acc.append(acc)
        trace.test_acc.append(test_acc)
        trace.n_selected.append(selected)
        log.debug("%s epoch %d: loss %.4f acc %.2f test %.2f selected %d",
                  cfg.kind, epoch + 1, loss, acc, test_acc, selected)
    trace.final_confidence = conf
    return net, trace


def run_selnlpl(net: Network, data, configs, rng: np.random.Generator, test=None,
                gamma: float | None = None, on_phase_end=None):
    """Run the phases in order, then split the training set by confidence > gamma.

    ``gamma`` defaults to the last SelPL phase's threshold, else 0.5.
    ``on_phase_end(index, cfg, net, trace)`` is called after each phase.
    Returns ``(net, FilterPartition, traces)``.
    """
    configs = list(configs)
    if not configs:
        raise PipelineError("no phases configured")
    if gamma is None:
        sel = [c.threshold for c in configs if c.kind == "SelPL"]
        gamma = sel[-1] if sel else DEFAULT_GAMMA
    traces = []
    for i, cfg in enumerate(configs):
        net, trace = train_phase(net, data, cfg, rng, test=test)
        traces.append(trace)
        if on_phase_end is not None:
            on_phase_end(i, cfg, net, trace)
    partition = FilterPartition(traces[-1].final_confidence.copy(), gamma)
    return net, partition, traces


@dataclass
class PseudoLabelResult:
    net: Network  # final network trained on clean + relabeled data
    clean_net: Network  # network trained on the clean subset only
    soft_targets: np.ndarray  # (N, c) targets used for the final step
    traces: list[PhaseTrace]
    test_acc: float  # NaN without a test set


def pseudo_label_pipeline(data, partition: FilterPartition, sizes, rng: np.random.Generator,
                          clean_cfg: PhaseConfig | None = None,
                          final_cfg: PhaseConfig | None = None, test=None) -> PseudoLabelResult:
    """Train on the clean part, relabel the noisy part with soft outputs, retrain on both.

    Both networks start from fresh initializations drawn from ``rng``.
    """
    clean_cfg = clean_cfg or pseudo_schedule("PseudoCleanTrain")
    final_cfg = final_cfg or pseudo_schedule("PseudoFinalTrain")
    if clean_cfg.kind != "PseudoCleanTrain":
        clean_cfg = replace(clean_cfg, kind="PseudoCleanTrain")
    if final_cfg.kind != "PseudoFinalTrain":
        final_cfg = replace(final_cfg, kind="PseudoFinalTrain")
    if len(partition.confidence) != len(data):
        raise PipelineError("partition does not cover the training set")
    clean_idx, noisy_idx = partition.clean_idx, partition.noisy_idx
    if len(clean_idx) == 0:
        raise CannotBootstrapError("clean subset is empty; nothing to train the relabeling network on")
    c = data.n_classes

    clean_net = Network.init(sizes, seed=int(rng.integers(2**63 - 1)))
    clean_net, t_clean = train_phase(clean_net, data.subset(clean_idx), clean_cfg, rng, test=test)

    targets = np.zeros((len(data), c))
    targets[clean_idx, data.labels[clean_idx]] = 1.0
    if len(noisy_idx):
        targets[noisy_idx] = clean_net.predict_proba(data.features[noisy_idx])

    net = Network.init(sizes, seed=int(rng.integers(2**63 - 1)))
    net, t_final = train_phase(net, data, final_cfg, rng, test=test, targets=targets)
    test_acc = t_final.test_acc[-1]
    return PseudoLabelResult(net, clean_net, targets, [t_clean, t_final], test_acc)


def train_pl_baseline(data, sizes, cfg: PhaseConfig, rng: np.random.Generator, test=None):
    """Plain cross-entropy training on the noisy labels from a fresh network."""
    net = Network.init(sizes, seed=int(rng.integers(2**63 - 1)))
    return train_phase(net, data, replace(cfg, kind="PL", threshold=None, k=None), rng, test=test)
