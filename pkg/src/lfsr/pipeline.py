"""Command implementations behind the CLI: ingest, prepare, train, enhance,
baseline, evaluate, sweep.

Each function takes resolved paths and an :class:`ExperimentConfig`, writes
its outputs atomically and returns a JSON-friendly summary.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np

from . import container
from .angular import (
    AngularNetBundle,
    angular_sr_lightfield,
    angular_training_arrays,
    build_angular_bundle,
    load_angular_bundle,
    save_angular_bundle,
    train_angular_arrays,
)
from .architectures import SWEEPS, NetworkConfig, batched_forward, build_network, derive_seed
from .config import ExperimentConfig
from .errors import ConfigError, ContainerError, LFSRError, ShapeError
from .fsutil import atomic_dir, atomic_file
from .lightfield import LightField, downsample_angular, downsample_spatial
from .metrics import EvalReport, evaluate_lf, middle_perspectives, psnr
from .nn.modelio import load_checkpoint, save_checkpoint
from .nn.optim import SGD
from .resample import METHODS, upsample_lightfield
from .spatial import (
    SpatialNetKey,
    SpatialNetRegistry,
    build_spatial_net,
    lfsr_enhance,
    load_registry,
    save_registry,
    spatial_sr_lightfield,
    spatial_training_arrays,
    train_spatial_arrays,
)

log = logging.getLogger(__name__)

PREPARED_MANIFEST = "prepared.json"
LOWRES_SPATIAL = "lowres_spatial"   # dropped lenslets, full angular
LOWRES = "lowres"                   # dropped lenslets and lenslet pixels
ANGULAR_DIR = "angular"
SPATIAL_DIR = "spatial"
CHECKPOINT_DIR = "checkpoints"
MODES = ("angular", "spatial", "full")


def ingest(path) -> dict:
    lf = container.load_container(path)
    return {"path": str(path), "H": lf.spatial_h, "W": lf.spatial_w, "A": lf.angular,
            "channels": lf.channels, "layout": container.detect_layout(path)}


def prepare(cfg: ExperimentConfig, out_dir) -> dict:
    """Write the two low-resolution derivatives of every train/test field.

    All sources are loaded and checked before anything is written.
    """
    cfg.validate_paths()
    sources = []
    for split, paths in (("train", cfg.train_fields), ("test", cfg.test_fields)):
        for p in paths:
            lf = container.load_container(cfg.path(p))
            if lf.angular % 2:
                raise ShapeError(f"{p}: angular size A={lf.angular} is odd; cannot halve it")
            sources.append((split, p, lf))
    if not sources:
        raise ConfigError("no train_fields or test_fields configured")
    out_dir = Path(out_dir)
    entries = []
    with atomic_dir(out_dir) as tmp:
        for split, p, lf in sources:
            name = Path(p).name
            low_s = downsample_spatial(lf)
            low = downsample_angular(low_s)
            container.save_container(low_s, tmp / name / LOWRES_SPATIAL)
            container.save_container(low, tmp / name / LOWRES)
            entries.append({
                "name": name, "split": split, "ground_truth": str(p),
                "ground_truth_shape": _shape(lf),
                LOWRES_SPATIAL: f"{name}/{LOWRES_SPATIAL}", f"{LOWRES_SPATIAL}_shape": _shape(low_s),
                LOWRES: f"{name}/{LOWRES}", f"{LOWRES}_shape": _shape(low),
            })
        manifest = {"fields": entries}
        (tmp / PREPARED_MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _shape(lf: LightField) -> dict:
    return {"H": lf.spatial_h, "W": lf.spatial_w, "A": lf.angular, "channels": lf.channels}


def _prepared(data_dir) -> dict:
    path = Path(data_dir) / PREPARED_MANIFEST
    if not path.is_file():
        raise ContainerError(f"{data_dir}: no {PREPARED_MANIFEST}; run `prepare` first")
    return json.loads(path.read_text())


def _train_entries(cfg: ExperimentConfig, data_dir) -> list:
    entries = [e for e in _prepared(data_dir)["fields"] if e["split"] == "train"]
    if not entries:
        raise ConfigError("prepared data contains no training fields")
    return entries


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _write_text(path, text: str) -> None:
    with atomic_file(path, "w") as fh:
        fh.write(text)


def _read_csv(path) -> List[list]:
    path = Path(path)
    if not path.is_file():
        return []
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[1:]


def _training_summary(inputs: np.ndarray, name: str) -> dict:
    return {"model": name, "samples": int(len(inputs)), "input_elements": int(inputs.size)}


def train_angular_cmd(cfg: ExperimentConfig, data_dir, model_dir, resume: bool = False) -> dict:
    """Train the per-channel angular networks on every training field's lenslets."""
    arrays = []
    for e in _train_entries(cfg, data_dir):
        lf = container.load_container(Path(data_dir) / e[LOWRES_SPATIAL])
        arrays.append(angular_training_arrays(lf))
    shapes = {a[0].shape[1:] for a in arrays}
    if len(shapes) != 1:
        raise ShapeError(f"training fields disagree on angular size: {sorted(shapes)}")
    inputs = np.concatenate([a[0] for a in arrays])
    targets = np.concatenate([a[1] for a in arrays])
    channel = np.concatenate([a[2] for a in arrays])
    model_dir = Path(model_dir)
    ckpt_dir = model_dir / CHECKPOINT_DIR
    a = inputs.shape[-1]
    channels = int(channel.max()) + 1
    bundle = build_angular_bundle(a, channels, cfg.angular_net, cfg.train.seed, cfg.train.init_std)
    optimizers, start = {}, 0
    old_rows = []
    if resume:
        steps = set()
        for c, net in enumerate(bundle.networks):
            opt = SGD(net, cfg.train)
            path = ckpt_dir / f"angular_{c}.npz"
            if not path.is_file():
                raise ContainerError(f"cannot resume: missing checkpoint {path}")
            steps.add(load_checkpoint(path, net, opt))
            optimizers[c] = opt
        if len(steps) != 1:
            raise ContainerError(f"angular checkpoints are at different steps: {sorted(steps)}")
        start = steps.pop()
        old_rows = [r for r in _read_csv(model_dir / "angular_loss.csv") if int(r[1]) <= start]
    bundle, histories, results = train_angular_arrays(inputs, targets, channel, cfg.train, cfg.angular_net,
                                                      bundle=bundle, start_step=start, optimizers=optimizers)
    rows = [r for r in old_rows]
    for c in sorted(histories):
        rows += [[c, step, repr(loss)] for step, loss in histories[c]]
    rows.sort(key=lambda r: (int(r[0]), int(r[1])))
    save_angular_bundle(bundle, model_dir / ANGULAR_DIR)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    for c, res in results.items():
        save_checkpoint(ckpt_dir / f"angular_{c}.npz", res.network, res.optimizer, res.steps)
    _write_text(model_dir / "angular_loss.csv", _csv_text(["channel", "step", "loss"], rows))
    _check_finite(rows, "angular")
    return {**_training_summary(inputs, "angular"), "A_in": a, "channels": channels,
            "steps": cfg.train.iterations, "resumed_from": start}


def _check_finite(rows, what):
    bad = [r for r in rows if not np.isfinite(float(r[-1]))]
    if bad:
        raise LFSRError(f"{what} loss log contains non-finite values: {bad[:3]}")


def resolve_keys(cfg: ExperimentConfig, angular: int, channels: int, keys=None) -> List[SpatialNetKey]:
    spec = cfg.spatial_keys if keys is None else keys
    if isinstance(spec, str):
        if spec == "all":
            out = [SpatialNetKey(u, v, c) for u in range(angular) for v in range(angular) for c in range(channels)]
        elif spec == "middle":
            m = angular // 2
            out = [SpatialNetKey(m, m, c) for c in range(channels)]
        else:
            raise ConfigError(f"unknown key preset {spec!r}")
    else:
        out = [SpatialNetKey(*k) for k in spec]
    if not out:
        raise ConfigError("spatial training needs at least one (u, v, channel) key")
    for k in out:
        if k.u >= angular or k.v >= angular or k.channel >= channels:
            raise ConfigError(f"key {k.as_tuple()} is outside the {angular}x{angular}x{channels} grid")
    return sorted(set(out))


def train_spatial_cmd(cfg: ExperimentConfig, data_dir, model_dir, keys=None, resume: bool = False) -> dict:
    """Train spatial networks for the requested keys on the ground-truth fields."""
    fields = [container.load_container(cfg.path(e["ground_truth"])) for e in _train_entries(cfg, data_dir)]
    shapes = {(f.angular, f.channels) for f in fields}
    if len(shapes) != 1:
        raise ShapeError(f"training fields disagree on (A, channels): {sorted(shapes)}")
    a, channels = shapes.pop()
    keys = resolve_keys(cfg, a, channels, keys)
    model_dir = Path(model_dir)
    reg_dir = model_dir / SPATIAL_DIR
    ckpt_dir = model_dir / CHECKPOINT_DIR
    train_settings = {k: v for k, v in cfg.train.to_dict().items() if k != "iterations"}
    registry = SpatialNetRegistry(a, {}, cfg.spatial_net, train_settings)
    if (reg_dir / "manifest.json").is_file():
        try:
            old = load_registry(reg_dir)
        except LFSRError as exc:
            log.warning("ignoring unreadable spatial registry: %s", exc)
        else:
            if old.angular == a and old.config == cfg.spatial_net and old.train_config == train_settings:
                registry.networks.update(old.networks)
    old_rows = _read_csv(model_dir / "spatial_loss.csv")
    trained = {k.as_tuple() for k in keys}
    rows = [r for r in old_rows if tuple(int(x) for x in r[:3]) not in trained]
    total_samples = total_elements = 0
    for key in keys:
        parts = [spatial_training_arrays(f, key) for f in fields]
        x = np.concatenate([p[0] for p in parts])
        y = np.concatenate([p[1] for p in parts])
        total_samples += len(x)
        total_elements += x.size
        net = build_spatial_net(a, cfg.spatial_net, derive_seed(cfg.train.seed, "spatial", *key.as_tuple()),
                                cfg.train.init_std)
        opt, start = None, 0
        ckpt = ckpt_dir / f"spatial_{key.u}_{key.v}_{key.channel}.npz"
        if resume:
            if not ckpt.is_file():
                raise ContainerError(f"cannot resume: missing checkpoint {ckpt}")
            opt = SGD(net, cfg.train)
            start = load_checkpoint(ckpt, net, opt)
            rows += [r for r in old_rows if tuple(int(v) for v in r[:3]) == key.as_tuple() and int(r[3]) <= start]
        res = train_spatial_arrays(x, y, key, cfg.train, net=net, start_step=start, optimizer=opt)
        rows += [[key.u, key.v, key.channel, step, repr(loss)] for step, loss in res.history]
        registry.add(key, res.network)
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ckpt, res.network, res.optimizer, res.steps)
    rows.sort(key=lambda r: tuple(int(v) for v in r[:4]))
    save_registry(registry, reg_dir)
    _write_text(model_dir / "spatial_loss.csv", _csv_text(["u", "v", "channel", "step", "loss"], rows))
    _check_finite(rows, "spatial")
    return {"model": "spatial", "keys": [list(k.as_tuple()) for k in keys], "samples": total_samples,
            "input_elements": total_elements, "steps": cfg.train.iterations}


def enhance(input_path, model_dir, mode: str, out) -> dict:
    if mode not in MODES:
        raise ConfigError(f"unknown enhance mode {mode!r}; choose one of {', '.join(MODES)}")
    lf = container.load_container(input_path)
    model_dir = Path(model_dir)
    if mode == "angular":
        result = angular_sr_lightfield(load_angular_bundle(model_dir / ANGULAR_DIR), lf)
    elif mode == "spatial":
        result = spatial_sr_lightfield(lf, load_registry(model_dir / SPATIAL_DIR))
    else:
        result = lfsr_enhance(lf, load_angular_bundle(model_dir / ANGULAR_DIR), load_registry(model_dir / SPATIAL_DIR))
    container.save_container(result, out)
    return {"input": _shape(lf), "output": _shape(result), "mode": mode, "out": str(out)}


def baseline(input_path, method: str, mode: str, out) -> dict:
    if method not in METHODS:
        raise ConfigError(f"unknown baseline method {method!r}; choose one of {', '.join(METHODS)}")
    if mode not in MODES:
        raise ConfigError(f"unknown baseline mode {mode!r}; choose one of {', '.join(MODES)}")
    lf = container.load_container(input_path)
    result = upsample_lightfield(lf, method, angular=mode in ("angular", "full"), spatial=mode in ("spatial", "full"))
    container.save_container(result, out)
    return {"input": _shape(lf), "output": _shape(result), "method": method, "mode": mode, "out": str(out)}


def _perspective_set(option, angular: int):
    if option in (None, "all"):
        return None
    if option == "middle":
        return middle_perspectives(angular)
    return [tuple(p) for p in option]


def evaluate(ref_path, test_path, out, perspectives="all", method: Optional[str] = None) -> EvalReport:
    ref = container.load_container(ref_path)
    test = container.load_container(test_path)
    if ref.shape != test.shape:
        raise ShapeError(f"reference {_shape(ref)} and test {_shape(test)} light fields differ in shape")
    report = evaluate_lf(ref, test, _perspective_set(perspectives, ref.angular),
                         method=method if method is not None else Path(test_path).name)
    out = Path(out)
    with atomic_dir(out) as tmp:
        (tmp / "report.json").write_text(report.to_json())
        (tmp / "report.txt").write_text(report.table())
    return report


def sweep(cfg: ExperimentConfig, data_dir, axis: str, out, key=None) -> dict:
    """Train every spatial-net variant of one sweep axis on identical data and seed.

    Writes ``sweep_<axis>.csv`` with the training loss and the held-out PSNR
    of the predicted sub-pixels every ``log_interval`` steps.
    """
    if axis not in SWEEPS:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose one of {', '.join(SWEEPS)}")
    entries = _prepared(data_dir)["fields"]
    train = [container.load_container(cfg.path(e["ground_truth"])) for e in entries if e["split"] == "train"]
    test = [container.load_container(cfg.path(e["ground_truth"])) for e in entries if e["split"] == "test"]
    if not train:
        raise ConfigError("sweep needs at least one training field")
    a, channels = train[0].angular, train[0].channels
    key = SpatialNetKey(*(key or (a // 2, a // 2, 0)))
    variants = SWEEPS[axis]
    # build every variant up front so a bad one aborts before any training
    nets = {name: build_spatial_net(a, conf, derive_seed(cfg.train.seed, "spatial", *key.as_tuple()),
                                    cfg.train.init_std)
            for name, conf in variants.items()}
    x = np.concatenate([spatial_training_arrays(f, key)[0] for f in train])
    y = np.concatenate([spatial_training_arrays(f, key)[1] for f in train])
    eval_fields = test or train
    xt = np.concatenate([spatial_training_arrays(f, key)[0] for f in eval_fields])
    yt = np.concatenate([spatial_training_arrays(f, key)[1] for f in eval_fields])
    rows, final = [], {}
    for name, net in nets.items():
        def record(step, n, loss, name=name):
            pred = np.clip(batched_forward(n, xt), 0.0, 1.0)
            rows.append([name, step, repr(loss), repr(psnr(yt, pred))])
            return False

        train_spatial_arrays(x, y, key, cfg.train, net=net, callback=record)
        final[name] = float(rows[-1][3])
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_text(out / f"sweep_{axis}.csv", _csv_text(["variant", "step", "train_loss", "test_psnr"], rows))
    return {"axis": axis, "key": list(key.as_tuple()), "variants": list(variants), "final_psnr": final}
