"""Two-branch weekly-mobility classifier.

One branch embeds the three tokenized mobility indicators and concatenates
them into a coarse 96-dim feature. The other runs the week's activity
events through a two-level LSTM -- a low-level pass over each day's events
whose initial hidden state is handed down from the high-level day-to-day
LSTM -- and projects the final high-level state to a detailed 32-dim
feature. A fully connected head over the 128-dim concatenation produces
class probabilities.

Training runs in three phases: the branches are first pretrained separately
against their own classification heads, then everything is optimized
jointly through the shared head. All gradients are hand-derived (see
``nn``); the ablation switch zeroes one branch's contribution to reproduce
"without branch" baselines mechanically.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import checkpoint as ckpt
from .activity import CATEGORY_CODES, TIME_BINS
from .evaluate import f1_macro
from .geo import GeoPoint, GridSpec
from .indicators import RangeTokenizer
from .nn import (
    AdamState,
    LstmGrads,
    LstmParams,
    TokenOutOfRange,
    adam_step,
    dense,
    dense_backward,
    init_lstm,
    lstm_step_backward,
    lstm_step_forward,
    softmax,
    softmax_xent,
)

ABLATION_MODES = ("full", "deep_only", "recurrent_only")

UNKNOWN_CELL_TOKEN = 0


class EmptyTrainSet(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSample:
    """One (user, week) training instance.

    ``days`` holds exactly 7 ordered event lists of
    (cell_token, time_bin, category_code) triples.
    """

    user_id: str
    week_start: int
    deep_tokens: tuple[int, int, int]
    days: tuple[tuple[tuple[int, int, int], ...], ...]
    label: int

    def __post_init__(self) -> None:
        if len(self.days) != 7:
            raise ValueError(f"sample needs 7 day lists, got {len(self.days)}")


@dataclass(frozen=True)
class ModelDims:
    num_classes: int
    rg_vocab: int
    td_vocab: int
    ad_vocab: int
    cell_vocab: int  # observed cells + 1 unknown token
    embed_dim: int = 32
    hidden_dim: int = 64
    recurrent_dim: int = 32
    time_vocab: int = TIME_BINS
    category_vocab: int = len(CATEGORY_CODES)

    @property
    def deep_dim(self) -> int:
        return 3 * self.embed_dim

    @property
    def joint_dim(self) -> int:
        return self.deep_dim + self.recurrent_dim


@dataclass(frozen=True)
class TrainConfig:
    pretrain_epochs: int = 50
    joint_epochs: int = 50
    lr: float = 0.001
    batch: int = 32
    seed: int = 7
    num_classes: int = 2

    def __post_init__(self) -> None:
        if self.pretrain_epochs < 1 or self.joint_epochs < 1:
            raise ValueError("epoch counts must be positive")
        if not 2 <= self.num_classes <= 5:
            raise ValueError("num_classes must be in [2, 5]")


class CellVocab:
    """Maps observed grid cells to embedding tokens; unseen cells share
    token 0."""

    def __init__(self, cells: Sequence[tuple[int, int]]):
        self.cells = sorted(set(cells))
        self._index = {cell: i + 1 for i, cell in enumerate(self.cells)}

    def __len__(self) -> int:
        return len(self.cells) + 1

    def token(self, row: int, col: int) -> int:
        return self._index.get((row, col), UNKNOWN_CELL_TOKEN)


class TwoBranchModel:
    """Parameter store plus forward/backward passes for both branches."""

    def __init__(self, dims: ModelDims, params: dict[str, np.ndarray], ablation: str = "full"):
        if ablation not in ABLATION_MODES:
            raise ValueError(f"ablation must be one of {ABLATION_MODES}")
        self.dims = dims
        self.params = params
        self.ablation = ablation
        # artifacts carried for persistence; set by the pipeline before save()
        self.tokenizers: dict[str, RangeTokenizer] = {}
        self.grid: GridSpec | None = None
        self.cell_vocab: CellVocab | None = None
        self.config_text: str = ""
        self._check_dims()

    # -- construction -------------------------------------------------------

    @classmethod
    def create(
        cls,
        dims: ModelDims,
        seed: int,
        pretrained: dict[str, np.ndarray] | None = None,
        ablation: str = "full",
    ) -> "TwoBranchModel":
        rng = np.random.default_rng(seed)
        e = dims.embed_dim
        bound = 0.5 / e

        def emb(vocab: int) -> np.ndarray:
            return rng.uniform(-bound, bound, size=(vocab, e))

        def head(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
            s = 1.0 / np.sqrt(n_in)
            return rng.uniform(-s, s, size=(n_in, n_out)), np.zeros(n_out)

        params: dict[str, np.ndarray] = {
            "emb_rg": emb(dims.rg_vocab),
            "emb_td": emb(dims.td_vocab),
            "emb_ad": emb(dims.ad_vocab),
            "emb_cell": emb(dims.cell_vocab),
            "emb_time": emb(dims.time_vocab),
            "emb_cat": emb(dims.category_vocab),
        }
        low = init_lstm(3 * e, dims.hidden_dim, rng)
        high = init_lstm(dims.hidden_dim, dims.hidden_dim, rng)
        params["low_w"], params["low_u"], params["low_b"] = low.w, low.u, low.b
        params["high_w"], params["high_u"], params["high_b"] = high.w, high.u, high.b
        params["proj_w"], params["proj_b"] = head(dims.hidden_dim, dims.recurrent_dim)
        params["deep_head_w"], params["deep_head_b"] = head(dims.deep_dim, dims.num_classes)
        params["rec_head_w"], params["rec_head_b"] = head(dims.recurrent_dim, dims.num_classes)
        params["joint_w"], params["joint_b"] = head(dims.joint_dim, dims.num_classes)
        if pretrained:
            for name, table in pretrained.items():
                if params[name].shape != table.shape:
                    raise ValueError(f"pretrained table {name} has shape {table.shape}, expected {params[name].shape}")
                params[name] = table.copy()
        return cls(dims, params, ablation=ablation)

    def _check_dims(self) -> None:
        d = self.dims
        expected = {
            "emb_rg": (d.rg_vocab, d.embed_dim),
            "emb_td": (d.td_vocab, d.embed_dim),
            "emb_ad": (d.ad_vocab, d.embed_dim),
            "emb_cell": (d.cell_vocab, d.embed_dim),
            "emb_time": (d.time_vocab, d.embed_dim),
            "emb_cat": (d.category_vocab, d.embed_dim),
            "low_w": (3 * d.embed_dim, 4 * d.hidden_dim),
            "low_u": (d.hidden_dim, 4 * d.hidden_dim),
            "low_b": (4 * d.hidden_dim,),
            "high_w": (d.hidden_dim, 4 * d.hidden_dim),
            "high_u": (d.hidden_dim, 4 * d.hidden_dim),
            "high_b": (4 * d.hidden_dim,),
            "proj_w": (d.hidden_dim, d.recurrent_dim),
            "proj_b": (d.recurrent_dim,),
            "deep_head_w": (d.deep_dim, d.num_classes),
            "deep_head_b": (d.num_classes,),
            "rec_head_w": (d.recurrent_dim, d.num_classes),
            "rec_head_b": (d.num_classes,),
            "joint_w": (d.joint_dim, d.num_classes),
            "joint_b": (d.num_classes,),
        }
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ValueError(f"parameter {name} has shape {self.params[name].shape}, expected {shape}")

    @property
    def low_lstm(self) -> LstmParams:
        return LstmParams(self.params["low_w"], self.params["low_u"], self.params["low_b"])

    @property
    def high_lstm(self) -> LstmParams:
        return LstmParams(self.params["high_w"], self.params["high_u"], self.params["high_b"])

    # -- forward ------------------------------------------------------------

    def _deep_tokens_checked(self, sample: LabeledSample) -> tuple[int, int, int]:
        vocabs = (self.dims.rg_vocab, self.dims.td_vocab, self.dims.ad_vocab)
        for tok, vocab in zip(sample.deep_tokens, vocabs):
            if not 0 <= tok < vocab:
                raise TokenOutOfRange(f"indicator token {tok} outside vocab {vocab}")
        return sample.deep_tokens

    def encode_deep(self, sample: LabeledSample) -> np.ndarray:
        """Concatenated indicator embeddings (deep branch feature)."""
        t_rg, t_td, t_ad = self._deep_tokens_checked(sample)
        return np.concatenate([
            self.params["emb_rg"][t_rg],
            self.params["emb_td"][t_td],
            self.params["emb_ad"][t_ad],
        ])

    def _recurrent_forward(self, sample: LabeledSample):
        """Run both LSTM levels over the week; returns (out32, cache)."""
        d = self.dims
        e = d.embed_dim
        low = self.low_lstm
        high = self.high_lstm
        emb_cell = self.params["emb_cell"]
        emb_time = self.params["emb_time"]
        emb_cat = self.params["emb_cat"]
        zeros_h = np.zeros(d.hidden_dim)

        h_high = zeros_h
        c_high = zeros_h
        day_caches = []
        for day in sample.days:
            ev_caches = []
            h = h_high  # day's low-level hidden state starts from yesterday's summary state
            c = zeros_h
            for cell_t, time_t, cat_t in day:
                if not 0 <= cell_t < d.cell_vocab:
                    raise TokenOutOfRange(f"cell token {cell_t} outside vocab {d.cell_vocab}")
                x = np.concatenate([emb_cell[cell_t], emb_time[time_t], emb_cat[cat_t]])
                h, c, cache = lstm_step_forward(x, h, c, low)
                ev_caches.append((cell_t, time_t, cat_t, cache))
            day_summary = h if ev_caches else zeros_h
            h_high, c_high, high_cache = lstm_step_forward(day_summary, h_high, c_high, high)
            day_caches.append((ev_caches, high_cache))
        out = dense(h_high, self.params["proj_w"], self.params["proj_b"])
        return out, (day_caches, h_high)

    def encode_recurrent(self, sample: LabeledSample) -> np.ndarray:
        """Projected final high-level hidden state (recurrent branch feature)."""
        out, _ = self._recurrent_forward(sample)
        return out

    def _recurrent_backward(self, d_out: np.ndarray, cache, grads: dict[str, np.ndarray]) -> None:
        day_caches, h_high = cache
        low = self.low_lstm
        high = self.high_lstm
        e = self.dims.embed_dim
        low_g = LstmGrads(grads["low_w"], grads["low_u"], grads["low_b"])
        high_g = LstmGrads(grads["high_w"], grads["high_u"], grads["high_b"])

        dh_high, d_proj_w, d_proj_b = dense_backward(d_out, h_high, self.params["proj_w"])
        grads["proj_w"] += d_proj_w
        grads["proj_b"] += d_proj_b
        dc_high = np.zeros_like(dh_high)
        for ev_caches, high_cache in reversed(day_caches):
            d_day, dh_high_prev, dc_high = lstm_step_backward(dh_high, dc_high, high_cache, high, high_g)
            if ev_caches:
                dh = d_day
                dc = np.zeros_like(dh)
                for cell_t, time_t, cat_t, ev_cache in reversed(ev_caches):
                    dx, dh, dc = lstm_step_backward(dh, dc, ev_cache, low, low_g)
                    grads["emb_cell"][cell_t] += dx[:e]
                    grads["emb_time"][time_t] += dx[e : 2 * e]
                    grads["emb_cat"][cat_t] += dx[2 * e :]
                # dh is now the gradient at the day's initial hidden state,
                # which was yesterday's high-level state
                dh_high_prev = dh_high_prev + dh
            dh_high = dh_high_prev

    def forward(self, sample: LabeledSample) -> np.ndarray:
        """Class probability vector under the model's ablation mode."""
        deep = self.encode_deep(sample) if self.ablation != "recurrent_only" else np.zeros(self.dims.deep_dim)
        rec = self.encode_recurrent(sample) if self.ablation != "deep_only" else np.zeros(self.dims.recurrent_dim)
        logits = dense(np.concatenate([deep, rec]), self.params["joint_w"], self.params["joint_b"])
        return softmax(logits)

    def extract_embedding(self, sample: LabeledSample) -> np.ndarray:
        """128-dim concatenation of both branch features."""
        deep = self.encode_deep(sample) if self.ablation != "recurrent_only" else np.zeros(self.dims.deep_dim)
        rec = self.encode_recurrent(sample) if self.ablation != "deep_only" else np.zeros(self.dims.recurrent_dim)
        return np.concatenate([deep, rec])

    # -- per-sample losses ---------------------------------------------------

    def _zero_grads(self, names: Sequence[str]) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(self.params[name]) for name in names}

    def _deep_loss(self, sample: LabeledSample, grads: dict[str, np.ndarray]) -> float:
        vec = self.encode_deep(sample)
        logits = dense(vec, self.params["deep_head_w"], self.params["deep_head_b"])
        loss, dlogits = softmax_xent(logits, sample.label)
        dvec, dw, db = dense_backward(dlogits, vec, self.params["deep_head_w"])
        grads["deep_head_w"] += dw
        grads["deep_head_b"] += db
        e = self.dims.embed_dim
        t_rg, t_td, t_ad = sample.deep_tokens
        grads["emb_rg"][t_rg] += dvec[:e]
        grads["emb_td"][t_td] += dvec[e : 2 * e]
        grads["emb_ad"][t_ad] += dvec[2 * e :]
        return loss

    def _recurrent_loss(self, sample: LabeledSample, grads: dict[str, np.ndarray]) -> float:
        vec, cache = self._recurrent_forward(sample)
        logits = dense(vec, self.params["rec_head_w"], self.params["rec_head_b"])
        loss, dlogits = softmax_xent(logits, sample.label)
        dvec, dw, db = dense_backward(dlogits, vec, self.params["rec_head_w"])
        grads["rec_head_w"] += dw
        grads["rec_head_b"] += db
        self._recurrent_backward(dvec, cache, grads)
        return loss

    def _joint_loss(self, sample: LabeledSample, grads: dict[str, np.ndarray]) -> float:
        d = self.dims
        use_deep = self.ablation != "recurrent_only"
        use_rec = self.ablation != "deep_only"
        deep = self.encode_deep(sample) if use_deep else np.zeros(d.deep_dim)
        rec_cache = None
        if use_rec:
            rec, rec_cache = self._recurrent_forward(sample)
        else:
            rec = np.zeros(d.recurrent_dim)
        z = np.concatenate([deep, rec])
        logits = dense(z, self.params["joint_w"], self.params["joint_b"])
        loss, dlogits = softmax_xent(logits, sample.label)
        dz, dw, db = dense_backward(dlogits, z, self.params["joint_w"])
        grads["joint_w"] += dw
        grads["joint_b"] += db
        if use_deep:
            e = d.embed_dim
            t_rg, t_td, t_ad = sample.deep_tokens
            grads["emb_rg"][t_rg] += dz[:e]
            grads["emb_td"][t_td] += dz[e : 2 * e]
            grads["emb_ad"][t_ad] += dz[2 * e : 3 * e]
        if use_rec:
            self._recurrent_backward(dz[d.deep_dim :], rec_cache, grads)
        return loss

    # -- parameter groups ----------------------------------------------------

    def param_group(self, phase: str) -> list[str]:
        deep_keys = ["emb_rg", "emb_td", "emb_ad"]
        rec_keys = [
            "emb_cell", "emb_time", "emb_cat",
            "low_w", "low_u", "low_b",
            "high_w", "high_u", "high_b",
            "proj_w", "proj_b",
        ]
        if phase == "deep":
            return deep_keys + ["deep_head_w", "deep_head_b"]
        if phase == "recurrent":
            return rec_keys + ["rec_head_w", "rec_head_b"]
        if phase == "joint":
            keys: list[str] = []
            if self.ablation != "recurrent_only":
                keys += deep_keys
            if self.ablation != "deep_only":
                keys += rec_keys
            return keys + ["joint_w", "joint_b"]
        raise ValueError(f"unknown phase {phase!r}")

    def batch_loss_and_grads(self, batch: Sequence[LabeledSample], phase: str):
        """Mean loss and mean gradients over a batch, in sample order."""
        names = self.param_group(phase)
        grads = self._zero_grads(names)
        loss_fn = {"deep": self._deep_loss, "recurrent": self._recurrent_loss, "joint": self._joint_loss}[phase]
        total = 0.0
        for sample in batch:
            total += loss_fn(sample, grads)
        n = float(len(batch))
        for g in grads.values():
            g /= n
        return total / n, grads

    # -- persistence ----------------------------------------------------------

    def save(self, path: str) -> None:
        meta = {
            "dims": {
                "num_classes": self.dims.num_classes,
                "rg_vocab": self.dims.rg_vocab,
                "td_vocab": self.dims.td_vocab,
                "ad_vocab": self.dims.ad_vocab,
                "cell_vocab": self.dims.cell_vocab,
                "embed_dim": self.dims.embed_dim,
                "hidden_dim": self.dims.hidden_dim,
                "recurrent_dim": self.dims.recurrent_dim,
            },
            "ablation": self.ablation,
            "tokenizers": {
                name: {
                    "min_value": t.min_value,
                    "max_value": t.max_value,
                    "granularity": t.granularity,
                    "vocab": t.vocab,
                }
                for name, t in self.tokenizers.items()
            },
            "grid": None
            if self.grid is None
            else {
                "origin_lat": self.grid.origin.lat,
                "origin_lon": self.grid.origin.lon,
                "cell_size_m": self.grid.cell_size_m,
                "rows": self.grid.rows,
                "cols": self.grid.cols,
            },
            "categories": dict(sorted(CATEGORY_CODES.items(), key=lambda kv: kv[1])),
        }
        sections: list[tuple[str, bytes]] = [
            ("meta", json.dumps(meta, sort_keys=True).encode("utf-8")),
            ("config", self.config_text.encode("utf-8")),
        ]
        cells = self.cell_vocab.cells if self.cell_vocab is not None else []
        sections.append(("cells", "\n".join(f"{r},{c}" for r, c in cells).encode("utf-8")))
        for name in sorted(self.params):
            sections.append((f"tensor:{name}", ckpt.tensor_to_bytes(self.params[name])))
        ckpt.write_container(path, sections)

    @classmethod
    def load(cls, path: str) -> "TwoBranchModel":
        sections = ckpt.read_container(path)
        meta = json.loads(sections["meta"].decode("utf-8"))
        dims = ModelDims(**meta["dims"])
        params = {
            name[len("tensor:") :]: ckpt.tensor_from_bytes(section)
            for name, section in sections.items()
            if name.startswith("tensor:")
        }
        model = cls(dims, params, ablation=meta["ablation"])
        model.config_text = sections.get("config", b"").decode("utf-8")
        model.tokenizers = {
            name: RangeTokenizer(**kw) for name, kw in meta["tokenizers"].items()
        }
        if meta["grid"] is not None:
            g = meta["grid"]
            model.grid = GridSpec(GeoPoint(g["origin_lat"], g["origin_lon"]), g["cell_size_m"], g["rows"], g["cols"])
        cells_text = sections.get("cells", b"").decode("utf-8")
        cells = [tuple(int(v) for v in line.split(",")) for line in cells_text.splitlines() if line]
        model.cell_vocab = CellVocab(cells)
        return model


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------

def _epoch_batches(n: int, batch: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch):
        yield order[start : start + batch]


def _eval_f1(model: TwoBranchModel, samples: Sequence[LabeledSample] | None) -> float:
    if not samples:
        return float("nan")
    truth = [s.label for s in samples]
    pred = predict(model, samples).tolist()
    return f1_macro(truth, pred)


def _run_phase(
    model: TwoBranchModel,
    phase: str,
    train_set: Sequence[LabeledSample],
    epochs: int,
    cfg: TrainConfig,
    rng: np.random.Generator,
    eval_set: Sequence[LabeledSample] | None,
    history: list[dict],
    on_epoch=None,
) -> None:
    group = model.param_group(phase)
    opt = AdamState.for_params({k: model.params[k] for k in group}, lr=cfg.lr)
    for epoch in range(1, epochs + 1):
        losses = []
        for idx in _epoch_batches(len(train_set), cfg.batch, rng):
            batch = [train_set[i] for i in idx]
            loss, grads = model.batch_loss_and_grads(batch, phase)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss in phase {phase}")
            adam_step(model.params, grads, opt)
            losses.append(loss)
        row = {
            "phase": phase,
            "epoch": epoch,
            "loss": float(np.mean(losses)),
            "eval_f1": _eval_f1(model, eval_set),
        }
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)


def pretrain(
    model: TwoBranchModel,
    train_set: Sequence[LabeledSample],
    cfg: TrainConfig,
    eval_set: Sequence[LabeledSample] | None = None,
    on_epoch=None,
) -> list[dict]:
    """Phase one: train each branch separately against its own head.

    The deep branch updates only the indicator tables plus its head; the
    recurrent branch updates the event tables, both LSTMs, the projection
    and its head. Under an ablation mode the absent branch is skipped.
    """
    if not train_set:
        raise EmptyTrainSet("pretrain on empty training set")
    history: list[dict] = []
    rng = np.random.default_rng(cfg.seed)
    if model.ablation != "recurrent_only":
        _run_phase(model, "deep", train_set, cfg.pretrain_epochs, cfg, rng, eval_set, history, on_epoch)
    if model.ablation != "deep_only":
        _run_phase(model, "recurrent", train_set, cfg.pretrain_epochs, cfg, rng, eval_set, history, on_epoch)
    return history


def train_joint(
    model: TwoBranchModel,
    train_set: Sequence[LabeledSample],
    cfg: TrainConfig,
    eval_set: Sequence[LabeledSample] | None = None,
    best_path: str | None = None,
    on_epoch=None,
) -> list[dict]:
    """Phase two: optimize both branches and the joint head together.

    When ``best_path`` is given and an eval set is present, the checkpoint
    with the best held-out macro-F1 is saved there.
    """
    if not train_set:
        raise EmptyTrainSet("joint training on empty training set")
    history: list[dict] = []
    rng = np.random.default_rng(cfg.seed + 1)
    best_f1 = -1.0

    def track(row: dict) -> None:
        nonlocal best_f1
        if on_epoch is not None:
            on_epoch(row)
        if best_path is not None and eval_set and row["eval_f1"] >= best_f1:
            best_f1 = row["eval_f1"]
            model.save(best_path)

    _run_phase(model, "joint", train_set, cfg.joint_epochs, cfg, rng, eval_set, history, track)
    return history


def predict(model: TwoBranchModel, samples: Sequence[LabeledSample]) -> np.ndarray:
    """Argmax class per sample."""
    return np.array([int(np.argmax(model.forward(s))) for s in samples], dtype=np.int64)


def extract_embeddings(model: TwoBranchModel, samples: Sequence[LabeledSample]) -> np.ndarray:
    """(n, 128) matrix of concatenated branch features."""
    if not samples:
        return np.zeros((0, model.dims.joint_dim))
    return np.stack([model.extract_embedding(s) for s in samples])
