"""Training protocol, inference and weight files."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..estimator import Wrench
from . import autodiff as ad
from .data import Standardizer, TooShort, batches, gather, rolling_origin_folds, window_ends
from .models import ModelSpec, WeightSet, forward, init_weights


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    cv_epochs: int = 30
    cv_patience: int = 5
    cv_folds: int = 3
    max_epochs: int = 150
    patience: int = 10
    val_frac: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    float32: bool = False
    grad_clip: float | None = None
    time_budget_s: float | None = None   # per fit; best checkpoint is kept when hit
    target: str = "residual"             # or "wrench"

    def __post_init__(self):
        if self.target not in ("residual", "wrench"):
            raise ValueError("target must be 'residual' or 'wrench'")
        if self.lr <= 0 or self.batch_size < 1:
            raise ValueError("lr and batch_size must be positive")
        if not 0 < self.val_frac < 1:
            raise ValueError("val_frac must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class TrainLog:
    epochs: list = field(default_factory=list)       # final fit: (epoch, train, val, seconds)
    cv: list = field(default_factory=list)           # per candidate: mean val MSE and fold values
    selected: dict | None = None
    best_epoch: int = -1
    best_val: float = float("inf")
    stopped: str = ""
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    def __init__(self, params: dict, lr, b1, b2, eps):
        self.p, self.lr, self.b1, self.b2, self.eps = params, lr, b1, b2, eps
        self.m = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.v = {k: np.zeros_like(v.data) for k, v in params.items()}
        self.t = 0

    def step(self):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k, t in self.p.items():
            g = t.grad
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            t.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            t.grad = None


def _as_params(ws: WeightSet) -> dict:
    return {k: ad.Tensor(v.copy(), requires_grad=True, dtype=v.dtype) for k, v in ws.tensors.items()}


def predict_scaled(ws: WeightSet, X: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Inference-mode forward over (B, T_w, 6) scaled windows."""
    dtype = next(iter(ws.tensors.values())).dtype
    out = np.empty((X.shape[0], ws.spec.n_out), dtype=float)
    with ad.no_grad():
        for s in range(0, X.shape[0], chunk):
            out[s:s + chunk] = forward(ws.spec, ws.tensors, X[s:s + chunk].astype(dtype)).data
    return out


def _mse(ws, Xs, Ys, ends, T_w) -> float:
    total = 0.0
    for s in range(0, ends.size, 8192):
        b = gather(Xs, Ys, ends[s:s + 8192], T_w)
        total += float(((predict_scaled(ws, b.X) - b.Y) ** 2).sum())
    return total / (ends.size * Ys.shape[1])


def _fit(spec, Xs, Ys, tr_ends, va_ends, cfg: TrainConfig, epochs, patience, log=None):
    """Adam on MSE with early stopping; returns (best weights, best val, history)."""
    dtype = np.float32 if cfg.float32 else np.float64
    ws = init_weights(spec, cfg.seed, dtype)
    params = _as_params(ws)
    opt = Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng([cfg.seed, 0x7A1])
    Xs, Ys = Xs.astype(dtype), Ys.astype(dtype)
    best, best_val, best_epoch, bad = ws, float("inf"), -1, 0
    history, stopped = [], "max_epochs"
    t0 = time.perf_counter()
    for epoch in range(epochs):
        run = 0.0
        for sel in batches(tr_ends.size, cfg.batch_size, rng):
            b = gather(Xs, Ys, tr_ends[sel], spec.T_w)
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    loss = ad.mse_loss(forward(spec, params, b.X, training=True, rng=rng), b.Y)
                    loss.backward()
            except ad.NonFiniteError as exc:
                raise TrainingDiverged(f"epoch {epoch}, step {opt.t}: {exc}") from exc
            if cfg.grad_clip is not None:
                norm = np.sqrt(sum(float((p.grad ** 2).sum()) for p in params.values()
                                   if p.grad is not None))
                if norm > cfg.grad_clip:
                    for p in params.values():
                        if p.grad is not None:
                            p.grad *= cfg.grad_clip / norm
            opt.step()
            run += float(loss.data) * sel.size
        cur = WeightSet(spec, {k: p.data.copy() for k, p in params.items()}, cfg.seed)
        val = _mse(cur, Xs, Ys, va_ends, spec.T_w)
        tr = run / tr_ends.size
        history.append((epoch, tr, val, time.perf_counter() - t0))
        if log is not None:
            log(epoch, tr, val)
        if not np.isfinite(val) or not np.isfinite(tr):
            raise TrainingDiverged(f"epoch {epoch}: train {tr}, val {val}")
        if val < best_val:
            best, best_val, best_epoch, bad = cur, val, epoch, 0
        else:
            bad += 1
            if bad >= patience:
                stopped = "early_stop"
                break
        if cfg.time_budget_s is not None and time.perf_counter() - t0 > cfg.time_budget_s:
            stopped = "time_budget"
            break
    return best, best_val, best_epoch, history, stopped


def analytic_baseline(theta_e, params) -> np.ndarray:
    """Analytic estimate per row; rows it cannot evaluate become zero."""
    from ..estimator import estimate_wrench_batch
    out = estimate_wrench_batch(theta_e, params, strict=False)
    return np.nan_to_num(out)


def _targets(dataset, cfg, params):
    """Per-row label aligned so that row e+1 is the target of a window ending at e."""
    if cfg.target == "wrench":
        return dataset.wrench
    base = analytic_baseline(dataset.theta_e, params)
    # window ending at e predicts W[e+1] - analytic(theta[e]); stored at e+1
    out = np.zeros_like(dataset.wrench)
    out[1:] = dataset.wrench[1:] - base[:-1]
    return out


def train(spec: ModelSpec | list, dataset, cfg: TrainConfig | None = None, *, params=None,
          log=None):
    """Fit a model on a (training-split) dataset.

    With ``cfg.target == "residual"`` (default) the network learns the
    error of the analytic estimator (nominal ``params``) evaluated on the
    newest sample of each window, and inference adds that estimate back.

    With several candidate specs, rolling-origin CV (``cv_folds`` folds,
    ``cv_epochs``/``cv_patience``) picks the lowest mean validation MSE.
    The winner is retrained with the final ``val_frac`` of windows held out
    for early stopping; the best checkpoint is returned.

    Returns (WeightSet, Standardizer, TrainLog).
    """
    cfg = cfg or TrainConfig()
    cands = list(spec) if isinstance(spec, (list, tuple)) else [spec]
    if len({c.T_w for c in cands}) != 1:
        raise ValueError("candidates must share the window length")
    T_w = cands[0].T_w
    t0 = time.perf_counter()
    ends = window_ends(dataset.t, dataset.rate, T_w)
    n_va = max(1, int(round(ends.size * cfg.val_frac)))
    if ends.size - n_va < cfg.batch_size:
        raise TooShort("not enough windows to train")
    # statistics from the samples the training windows can see
    fit_stop = ends[-n_va] + 1
    from ..geometry import DesignParams
    params = params or DesignParams()
    Y = _targets(dataset, cfg, params)
    std = Standardizer.fit(dataset.theta_e[:fit_stop], Y[1:fit_stop])
    Xs, Ys = std.scale_in(dataset.theta_e), std.scale_out(Y)
    tlog = TrainLog()
    chosen = cands[0]
    if len(cands) > 1:
        scores = []
        for c in cands:
            vals = []
            for tr, va in rolling_origin_folds(ends.size - n_va, cfg.cv_folds):
                _, v, _, _, _ = _fit(c, Xs, Ys, ends[tr], ends[va], cfg, cfg.cv_epochs,
                                     cfg.cv_patience)
                vals.append(v)
            scores.append(float(np.mean(vals)))
            tlog.cv.append({"spec": c.to_dict(), "mean_val_mse": scores[-1], "folds": vals})
        chosen = cands[int(np.argmin(scores))]
    tlog.selected = chosen.to_dict()
    best, val, ep, hist, stopped = _fit(chosen, Xs, Ys, ends[:-n_va], ends[-n_va:], cfg,
                                        cfg.max_epochs, cfg.patience, log)
    tlog.epochs, tlog.best_val, tlog.best_epoch, tlog.stopped = hist, val, ep, stopped
    tlog.seconds = time.perf_counter() - t0
    best.meta.update(train_config=cfg.to_dict(), best_epoch=ep, best_val=val,
                     target=cfg.target, params=params.to_dict())
    return best, std, tlog


# -- inference -------------------------------------------------------------------

def _model_params(ws: WeightSet):
    from ..geometry import DesignParams
    return DesignParams.from_dict(ws.meta["params"]) if "params" in ws.meta else DesignParams()


def predict_series(ws: WeightSet, std: Standardizer, theta_e: np.ndarray, ends=None) -> np.ndarray:
    """Predicted wrench ``W[e+1]`` for each window ending at ``e`` (N units)."""
    T_w = ws.spec.T_w
    raw = np.asarray(theta_e, dtype=float)
    th = std.scale_in(raw)
    if ends is None:
        ends = np.arange(T_w - 1, th.shape[0])
    ends = np.asarray(ends)
    out = np.empty((ends.size, ws.spec.n_out))
    for s in range(0, ends.size, 8192):
        idx = ends[s:s + 8192, None] + np.arange(-T_w + 1, 1)
        out[s:s + 8192] = std.unscale_out(predict_scaled(ws, th[idx]))
    if ws.meta.get("target", "wrench") == "residual":
        out += analytic_baseline(raw[ends], _model_params(ws))
    return out


def predict_wrench(ws: WeightSet, std: Standardizer, history) -> Wrench:
    """Wrench expected one sample after the last row of ``history`` (>= T_w rows)."""
    h = np.asarray(history, dtype=float)
    if h.ndim != 2 or h.shape[1] != ws.spec.n_in:
        raise ValueError("history must be (T, 6)")
    if h.shape[0] < ws.spec.T_w:
        raise TooShort(f"history has {h.shape[0]} rows, need {ws.spec.T_w}")
    x = std.scale_in(h[-ws.spec.T_w:])[None]
    y = std.unscale_out(predict_scaled(ws, x))[0]
    if ws.meta.get("target", "wrench") == "residual":
        y = y + analytic_baseline(h[-1:], _model_params(ws))[0]
    return Wrench.from_vector(y, "E")


# -- weight files ----------------------------------------------------------------

def weights_to_dict(ws: WeightSet, std: Standardizer | None = None) -> dict:
    return {
        "format": "delta6-weights/1",
        "spec": ws.spec.to_dict(),
        "seed": ws.seed,
        "meta": ws.meta,
        "standardizer": None if std is None else std.to_dict(),
        "tensors": [{"name": k, "shape": list(v.shape), "dtype": str(v.dtype),
                     "values": v.reshape(-1).tolist()} for k, v in ws.tensors.items()],
    }


def weights_from_dict(d: dict):
    if d.get("format") != "delta6-weights/1":
        raise ValueError("not a delta6 weights file")
    spec = ModelSpec.from_dict(d["spec"])
    tensors = {t["name"]: np.asarray(t["values"], dtype=t.get("dtype", "float64")).reshape(t["shape"])
               for t in d["tensors"]}
    ws = WeightSet(spec, tensors, d.get("seed", 0), d.get("meta", {}))
    std = None if d.get("standardizer") is None else Standardizer.from_dict(d["standardizer"])
    return ws, std


def save_weights(path, ws: WeightSet, std: Standardizer | None = None):
    from ..io import atomic_write_text
    atomic_write_text(path, json.dumps(weights_to_dict(ws, std)))


def load_weights(path):
    with open(path) as fh:
        return weights_from_dict(json.load(fh))


def with_spec(spec: ModelSpec, **kw) -> ModelSpec:
    return replace(spec, **kw)
