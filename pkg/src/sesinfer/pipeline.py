"""Stage implementations behind the CLI: preprocess, featurize, pretrain,
train, evaluate, predict, sweep.

Intermediate artifacts are CSV files whose leading comment lines carry the
hash of the configuration that produced them; downstream stages refuse
mismatched inputs unless forced. All floats are written with ``repr`` so
identical runs produce byte-identical artifacts.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import checkpoint as ckpt
from .activity import CATEGORY_CODES, build_poi_index, build_week_events, write_category_table
from .config import RunConfig
from .embed import build_corpus, train_skipgram
from .evaluate import accuracy, ami, ari, f1_macro, kmeans, normalize01, split_train_test, Partition
from .geo import CellId
from .indicators import RangeTokenizer, activity_diversity, radius_of_gyration, temporality_diversity
from .ingest import FormatError, parse_pois, parse_prices, segment_weeks
from .model import (
    CellVocab,
    LabeledSample,
    ModelDims,
    TrainConfig,
    TwoBranchModel,
    extract_embeddings,
    predict,
    pretrain,
    train_joint,
)
from .preprocess import (
    NoNightActivity,
    derive_label,
    detect_stay_points,
    filter_noise,
    infer_home,
    price_at,
)


class StageError(RuntimeError):
    pass


class HashMismatch(StageError):
    pass


# ---------------------------------------------------------------------------
# Hash-stamped CSV artifacts
# ---------------------------------------------------------------------------

def write_artifact(path: str, header: Sequence[str], rows: Iterable[Sequence], meta: dict[str, str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for key, value in meta.items():
            fh.write(f"# {key}={value}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt_field(v) for v in row) + "\n")


def _fmt_field(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def read_artifact(path: str) -> tuple[dict[str, str], list[str], list[list[str]]]:
    meta: dict[str, str] = {}
    header: list[str] = []
    rows: list[list[str]] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("# "):
                key, _, value = line[2:].partition("=")
                meta[key] = value
                continue
            if not header:
                header = line.split(",")
                continue
            if line:
                rows.append(line.split(","))
    return meta, header, rows


def check_hash(meta: dict[str, str], cfg: RunConfig, source: str, force: bool) -> None:
    found = meta.get("config", "")
    if found != cfg.hash():
        message = f"{source} was produced under config {found or '<none>'}, current is {cfg.hash()}"
        if not force:
            raise HashMismatch(message + " (use --force to override)")


# ---------------------------------------------------------------------------
# Streaming trajectory reader (user-grouped files)
# ---------------------------------------------------------------------------

def iter_user_streams(path: str):
    """Yield (user_id, sorted records) from a user-grouped trajectory CSV.

    Large trajectory files are written with each user's rows contiguous;
    this keeps only one user in memory. A user id that reappears after its
    block ended is a format error (re-sort the file or use
    ``parse_trajectories``).
    """
    from .geo import GeoPoint
    from .ingest import TrajectoryRecord

    seen: set[str] = set()
    current: str | None = None
    bucket: list[TrajectoryRecord] = []
    malformed = 0
    total = 0

    def finish(records: list[TrajectoryRecord]):
        records.sort(key=lambda r: r.ts)
        deduped: list[TrajectoryRecord] = []
        for rec in records:
            if deduped and rec.ts == deduped[-1].ts:
                continue
            deduped.append(rec)
        return deduped

    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "user_id,lat,lon,ts":
            raise FormatError(1, f"expected header 'user_id,lat,lon,ts', got {header!r}")
        for line_no, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            total += 1
            parts = line.split(",")
            try:
                if len(parts) != 4:
                    raise ValueError(f"expected 4 fields, got {len(parts)}")
                user_id = parts[0]
                point = GeoPoint(float(parts[1]), float(parts[2]))
                ts = int(parts[3])
                if ts < 0:
                    raise ValueError("negative timestamp")
            except ValueError:
                malformed += 1
                continue
            if user_id != current:
                if user_id in seen:
                    raise FormatError(line_no, f"user {user_id!r} reappears; file must be grouped by user")
                if current is not None:
                    yield current, finish(bucket)
                seen.add(user_id)
                current = user_id
                bucket = []
            bucket.append(TrajectoryRecord(user_id, point, ts))
    if current is not None:
        yield current, finish(bucket)
    if total and malformed / total > 0.01:
        raise FormatError(0, f"{malformed} of {total} lines malformed")


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------

def run_preprocess(cfg: RunConfig, data_dir: str, out_dir: str) -> dict[str, int]:
    """Raw world files -> stay/activity events, week stats, user labels."""
    os.makedirs(out_dir, exist_ok=True)
    grid = cfg.grid()
    tz = cfg.tz_offset_s
    pois, _ = parse_pois(os.path.join(data_dir, "pois.csv"))
    prices, _ = parse_prices(os.path.join(data_dir, "prices.csv"))
    poi_index = build_poi_index(pois, grid)

    stay_rows: list[list] = []
    week_rows: list[list] = []
    label_rows: list[list] = []
    stats = {"users": 0, "weeks": 0, "stays": 0, "out_of_area_stays": 0, "users_without_home": 0}

    for user_id, records in iter_user_streams(os.path.join(data_dir, "trajectories.csv")):
        stats["users"] += 1
        all_stays = []
        for week in segment_weeks(records, tz, cfg.min_week_records):
            filtered = filter_noise(week.records, cfg.v_max_mps)
            if not filtered:
                continue
            stays = detect_stay_points(filtered, cfg.stay_radius_m, cfg.stay_duration_s, grid)
            all_stays.extend(stays)
            in_area = [s for s in stays if s.cell is not None]
            stats["out_of_area_stays"] += len(stays) - len(in_area)
            stats["weeks"] += 1
            stats["stays"] += len(in_area)
            rg = radius_of_gyration([r.point for r in filtered])
            week_rows.append([user_id, week.week_start, len(week.records), len(filtered), rg])
            days = build_week_events(week, in_area, poi_index, grid, tz, include_center=cfg.include_center_cell)
            for day_events in days:
                for ev in day_events:
                    s = ev.stay
                    stay_rows.append([
                        user_id, week.week_start, ev.day_index, s.arrival_ts, s.departure_ts,
                        s.duration_s, s.centroid.lat, s.centroid.lon, s.cell.row, s.cell.col,
                        ev.category, ev.time_bin, s.member_count,
                    ])
        try:
            home = infer_home(all_stays, tz, cfg.night_start_hour, cfg.night_end_hour, cfg.home_rank_by)
        except NoNightActivity:
            stats["users_without_home"] += 1
            continue
        price = price_at(home, prices, grid)
        label = derive_label(price, cfg.price_min, cfg.price_max, cfg.num_classes)
        label_rows.append([user_id, label.class_index, price, home.row, home.col])

    meta = {"config": cfg.hash()}
    write_artifact(
        os.path.join(out_dir, "stays.csv"),
        ["user_id", "week_start", "day_index", "arrival_ts", "departure_ts", "duration_s",
         "lat", "lon", "row", "col", "category", "time_bin", "member_count"],
        stay_rows, meta,
    )
    write_artifact(
        os.path.join(out_dir, "weekstats.csv"),
        ["user_id", "week_start", "n_records", "n_filtered", "rg_m"],
        week_rows, meta,
    )
    write_artifact(
        os.path.join(out_dir, "labels.csv"),
        ["user_id", "class", "price", "home_row", "home_col"],
        label_rows, meta,
    )
    return stats


# ---------------------------------------------------------------------------
# featurize
# ---------------------------------------------------------------------------

@dataclass
class RawSample:
    """One (user, week) feature row as stored in samples.csv."""

    user_id: str
    week_start: int
    label: int
    rg: float
    td: float
    ad: float
    deep_tokens: tuple[int, int, int]
    days: list[list[tuple[int, int, int, int]]]  # (row, col, time_bin, category_code)


def _encode_days(days: list[list[tuple[int, int, int, int]]]) -> str:
    return "|".join(" ".join(f"{r}:{c}:{tb}:{cat}" for r, c, tb, cat in day) for day in days)


def _decode_days(text: str) -> list[list[tuple[int, int, int, int]]]:
    days = []
    for segment in text.split("|"):
        events = []
        if segment:
            for token in segment.split(" "):
                r, c, tb, cat = token.split(":")
                events.append((int(r), int(c), int(tb), int(cat)))
        days.append(events)
    if len(days) != 7:
        raise ValueError(f"expected 7 day segments, got {len(days)}")
    return days


@dataclass
class _StayLite:
    """Just enough of a stay for the entropy indicators."""

    cell: CellId
    duration_s: int


def run_featurize(cfg: RunConfig, pre_dir: str, out_path: str, force: bool = False) -> dict[str, int]:
    """Stay/label artifacts -> one tokenized sample per usable user-week."""
    meta_s, _, stay_rows = read_artifact(os.path.join(pre_dir, "stays.csv"))
    meta_w, _, week_rows = read_artifact(os.path.join(pre_dir, "weekstats.csv"))
    meta_l, _, label_rows = read_artifact(os.path.join(pre_dir, "labels.csv"))
    for meta, name in ((meta_s, "stays.csv"), (meta_w, "weekstats.csv"), (meta_l, "labels.csv")):
        check_hash(meta, cfg, name, force)

    labels = {row[0]: int(row[1]) for row in label_rows}
    rg_by_week = {(row[0], int(row[1])): float(row[4]) for row in week_rows}

    by_week: dict[tuple[str, int], list[list[str]]] = {}
    for row in stay_rows:
        by_week.setdefault((row[0], int(row[1])), []).append(row)

    # assemble indicator values first so tokenizers can optionally be refit
    assembled = []
    stats = {"samples": 0, "dropped_few_stays": 0, "dropped_unlabeled": 0}
    for key in sorted(by_week):
        user_id, week_start = key
        rows = sorted(by_week[key], key=lambda r: int(r[3]))
        if user_id not in labels:
            stats["dropped_unlabeled"] += 1
            continue
        if len(rows) < 2:
            stats["dropped_few_stays"] += 1
            continue
        stays = [_StayLite(CellId(int(r[8]), int(r[9])), int(r[5])) for r in rows]
        td = temporality_diversity(stays, by_cell=cfg.aggregate_td_by_cell)
        ad = activity_diversity(stays)
        rg = rg_by_week[key]
        days: list[list[tuple[int, int, int, int]]] = [[] for _ in range(7)]
        for r in rows:
            days[int(r[2])].append((int(r[8]), int(r[9]), int(r[11]), CATEGORY_CODES[r[10]]))
        assembled.append((user_id, week_start, labels[user_id], rg, td, ad, days))

    tokenizers = cfg.tokenizers()
    if cfg.refit_tokenizers and assembled:
        for name, values in (
            ("rg", [a[3] for a in assembled]),
            ("td", [a[4] for a in assembled]),
            ("ad", [a[5] for a in assembled]),
        ):
            old = tokenizers[name]
            lo, hi = min(values), max(values)
            hi = hi if hi > lo else lo + old.granularity
            tokenizers[name] = RangeTokenizer(lo, hi, old.granularity)

    out_rows = []
    for user_id, week_start, label, rg, td, ad, days in assembled:
        toks = (tokenizers["rg"].token(rg), tokenizers["td"].token(td), tokenizers["ad"].token(ad))
        out_rows.append([user_id, week_start, label, rg, td, ad, toks[0], toks[1], toks[2], _encode_days(days)])
        stats["samples"] += 1

    meta = {"config": cfg.hash()}
    for name, t in tokenizers.items():
        meta[f"tokenizer_{name}"] = f"{t.min_value!r},{t.max_value!r},{t.granularity!r},{t.vocab}"
    write_artifact(
        out_path,
        ["user_id", "week_start", "label", "rg_m", "td", "ad", "rg_tok", "td_tok", "ad_tok", "days"],
        out_rows, meta,
    )
    return stats


def load_samples(path: str) -> tuple[list[RawSample], dict[str, str]]:
    meta, _, rows = read_artifact(path)
    samples = [
        RawSample(
            user_id=r[0],
            week_start=int(r[1]),
            label=int(r[2]),
            rg=float(r[3]),
            td=float(r[4]),
            ad=float(r[5]),
            deep_tokens=(int(r[6]), int(r[7]), int(r[8])),
            days=_decode_days(r[9]),
        )
        for r in rows
    ]
    return samples, meta


def tokenizers_from_meta(meta: dict[str, str], cfg: RunConfig) -> dict[str, RangeTokenizer]:
    out = {}
    for name in ("rg", "td", "ad"):
        key = f"tokenizer_{name}"
        if key in meta:
            lo, hi, g, vocab = meta[key].split(",")
            out[name] = RangeTokenizer(float(lo), float(hi), float(g), int(vocab))
    return out or cfg.tokenizers()


def to_labeled(raw: RawSample, vocab: CellVocab) -> LabeledSample:
    days = tuple(
        tuple((vocab.token(r, c), tb, cat) for r, c, tb, cat in day) for day in raw.days
    )
    return LabeledSample(raw.user_id, raw.week_start, raw.deep_tokens, days, raw.label)


# ---------------------------------------------------------------------------
# pretrain-embed / train
# ---------------------------------------------------------------------------

def run_pretrain_embed(cfg: RunConfig, samples_path: str, out_path: str, force: bool = False) -> dict[str, int]:
    """Skip-gram pretraining of the three indicator embedding tables."""
    samples, meta = load_samples(samples_path)
    check_hash(meta, cfg, "samples", force)
    if not samples:
        raise StageError("no samples to pretrain on")
    tokenizers = tokenizers_from_meta(meta, cfg)
    train, _ = split_train_test(samples, cfg.train_ratio, cfg.seed)
    corpora = build_corpus(train)
    sections: list[tuple[str, bytes]] = [("meta", f'{{"config": "{cfg.hash()}"}}'.encode())]
    for i, (name, corpus) in enumerate(zip(("rg", "td", "ad"), corpora)):
        table = train_skipgram(
            corpus,
            vocab=tokenizers[name].vocab,
            dim=cfg.embed_dim,
            window=cfg.sg_window,
            negatives=cfg.sg_negatives,
            epochs=cfg.sg_epochs,
            lr=cfg.sg_lr,
            seed=cfg.seed + i,
        )
        sections.append((f"tensor:emb_{name}", ckpt.tensor_to_bytes(table.weights)))
    ckpt.write_container(out_path, sections)
    return {"sequences": len(corpora[0].sequences)}


def _load_pretrained_tables(path: str) -> dict[str, np.ndarray]:
    sections = ckpt.read_container(path)
    return {
        name[len("tensor:") :]: ckpt.tensor_from_bytes(data)
        for name, data in sections.items()
        if name.startswith("tensor:")
    }


def run_train(
    cfg: RunConfig,
    samples_path: str,
    out_dir: str,
    embeddings_path: str | None = None,
    force: bool = False,
) -> dict[str, float]:
    """Pretrain both branches, then joint-train; saves the checkpoint with
    the best held-out macro-F1 plus the full training log."""
    os.makedirs(out_dir, exist_ok=True)
    samples, meta = load_samples(samples_path)
    check_hash(meta, cfg, "samples", force)
    if not samples:
        raise StageError("no samples to train on")
    tokenizers = tokenizers_from_meta(meta, cfg)
    train_raw, test_raw = split_train_test(samples, cfg.train_ratio, cfg.seed)
    if not train_raw:
        raise StageError("training split is empty")

    vocab = CellVocab([(r, c) for s in train_raw for day in s.days for r, c, _, _ in day])
    train_set = [to_labeled(s, vocab) for s in train_raw]
    test_set = [to_labeled(s, vocab) for s in test_raw]

    dims = ModelDims(
        num_classes=cfg.num_classes,
        rg_vocab=tokenizers["rg"].vocab,
        td_vocab=tokenizers["td"].vocab,
        ad_vocab=tokenizers["ad"].vocab,
        cell_vocab=len(vocab),
        embed_dim=cfg.embed_dim,
        hidden_dim=cfg.lstm_hidden,
        recurrent_dim=cfg.recurrent_dim,
    )
    pretrained = _load_pretrained_tables(embeddings_path) if embeddings_path else None
    model = TwoBranchModel.create(dims, seed=cfg.seed, pretrained=pretrained, ablation=cfg.ablation)
    model.tokenizers = tokenizers
    model.grid = cfg.grid()
    model.cell_vocab = vocab
    model.config_text = cfg.text()

    tcfg = TrainConfig(
        pretrain_epochs=cfg.pretrain_epochs,
        joint_epochs=cfg.joint_epochs,
        lr=cfg.learning_rate,
        batch=cfg.batch_size,
        seed=cfg.seed,
        num_classes=cfg.num_classes,
    )
    model_path = os.path.join(out_dir, "model.bin")
    history = pretrain(model, train_set, tcfg, eval_set=test_set)
    history += train_joint(model, train_set, tcfg, eval_set=test_set, best_path=model_path if test_set else None)
    if not test_set:
        model.save(model_path)

    write_artifact(
        os.path.join(out_dir, "trainlog.csv"),
        ["phase", "epoch", "loss", "eval_f1"],
        [[h["phase"], h["epoch"], h["loss"], h["eval_f1"]] for h in history],
        {"config": cfg.hash()},
    )
    write_category_table(os.path.join(out_dir, "categories.csv"))
    joint_rows = [h for h in history if h["phase"] == "joint"]
    return {"final_loss": joint_rows[-1]["loss"], "best_f1": max(h["eval_f1"] for h in joint_rows)}


# ---------------------------------------------------------------------------
# evaluate / predict
# ---------------------------------------------------------------------------

def run_evaluate(
    cfg: RunConfig,
    checkpoint_path: str,
    samples_path: str,
    labels_path: str,
    out_path: str,
    force: bool = False,
) -> list[list]:
    """Classification metrics at the trained class count plus k-means
    clustering of the learned embeddings for k = 2..5.

    Clustering ground truth for each k comes from re-partitioning the
    users' looked-up prices into k intervals.
    """
    samples, meta = load_samples(samples_path)
    check_hash(meta, cfg, "samples", force)
    meta_l, _, label_rows = read_artifact(labels_path)
    check_hash(meta_l, cfg, "labels", force)
    model = TwoBranchModel.load(checkpoint_path)
    from .config import parse_config_text

    check_hash({"config": parse_config_text(model.config_text).hash()}, cfg, "checkpoint", force)

    _, test_raw = split_train_test(samples, cfg.train_ratio, cfg.seed)
    if not test_raw:
        raise StageError("test split is empty")
    test_set = [to_labeled(s, model.cell_vocab) for s in test_raw]

    rows: list[list] = []
    truth = [s.label for s in test_set]
    pred = predict(model, test_set).tolist()
    rows.append(["classification", cfg.num_classes, "f1", f1_macro(truth, pred)])
    rows.append(["classification", cfg.num_classes, "acc", accuracy(truth, pred)])

    prices = {row[0]: float(row[2]) for row in label_rows}
    points = extract_embeddings(model, test_set)
    for k in range(2, 6):
        truth_k = Partition(
            np.array([derive_label(prices[s.user_id], cfg.price_min, cfg.price_max, k).class_index for s in test_set]),
            k=k,
        )
        part = kmeans(points, k, seed=cfg.seed)
        rows.append(["clustering", k, "ari", normalize01(ari(part, truth_k))])
        rows.append(["clustering", k, "ami", normalize01(ami(part, truth_k))])

    write_artifact(out_path, ["task", "C_or_k", "metric", "value"], rows, {"config": cfg.hash()})
    return rows


def run_predict(cfg: RunConfig, checkpoint_path: str, samples_path: str, out_path: str, force: bool = False) -> int:
    samples, meta = load_samples(samples_path)
    check_hash(meta, cfg, "samples", force)
    model = TwoBranchModel.load(checkpoint_path)
    labeled = [to_labeled(s, model.cell_vocab) for s in samples]
    pred = predict(model, labeled)
    write_artifact(
        out_path,
        ["user_id", "week_start", "predicted_class"],
        [[s.user_id, s.week_start, int(p)] for s, p in zip(samples, pred)],
        {"config": cfg.hash()},
    )
    return len(labeled)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

SYNTH_KEYS = {"n_agents", "weeks_per_agent", "schedule_noise", "sampling_period_s", "gps_noise_m",
              "grid_origin_lat", "grid_origin_lon", "grid_cell_size_m", "grid_rows", "grid_cols", "seed"}


def run_sweep(cfg: RunConfig, data_dir: str, param: str, values: list[str], out_dir: str) -> list[list]:
    """Re-run the pipeline once per parameter value; collect one metrics
    table. The synthetic world is regenerated only when the swept parameter
    affects generation."""
    os.makedirs(out_dir, exist_ok=True)
    combined: list[list] = []
    for value in values:
        sub_cfg = cfg.with_overrides({param: value})
        sub_cfg.validate()
        subdir = os.path.join(out_dir, f"{param}_{value}")
        os.makedirs(subdir, exist_ok=True)
        sub_data = data_dir
        if param in SYNTH_KEYS:
            from .synth import generate_world, write_world

            sub_data = os.path.join(subdir, "world")
            wcfg = world_config(sub_cfg)
            write_world(sub_data, generate_world(wcfg), wcfg)
        run_preprocess(sub_cfg, sub_data, subdir)
        samples_path = os.path.join(subdir, "samples.csv")
        run_featurize(sub_cfg, subdir, samples_path)
        embed_path = os.path.join(subdir, "embeddings.bin")
        run_pretrain_embed(sub_cfg, samples_path, embed_path)
        run_train(sub_cfg, samples_path, subdir, embeddings_path=embed_path)
        metrics_path = os.path.join(subdir, "metrics.csv")
        rows = run_evaluate(
            sub_cfg, os.path.join(subdir, "model.bin"), samples_path,
            os.path.join(subdir, "labels.csv"), metrics_path,
        )
        combined.extend([[param, value] + row for row in rows])
    write_artifact(
        os.path.join(out_dir, "sweep_metrics.csv"),
        ["param", "value", "task", "C_or_k", "metric", "value_metric"],
        combined, {"config": cfg.hash()},
    )
    return combined


def world_config(cfg: RunConfig):
    from .synth import WorldConfig

    return WorldConfig(
        grid=cfg.grid(),
        n_agents=cfg.n_agents,
        weeks_per_agent=cfg.weeks_per_agent,
        num_classes=cfg.num_classes,
        seed=cfg.seed,
        price_min=cfg.price_min,
        price_max=cfg.price_max,
        tz_offset_s=cfg.tz_offset_s,
        sampling_period_s=cfg.sampling_period_s,
        schedule_noise=cfg.schedule_noise,
        gps_noise_m=cfg.gps_noise_m,
    )
