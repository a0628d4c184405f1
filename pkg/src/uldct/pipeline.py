"""Pipeline stages over persisted artifacts.

Every stage reads its inputs from disk and writes its outputs next to them,
so stages can run in separate processes:

    generate  -> <data>/manifest.json, <data>/samples/<id>/{ndct,moved,uldct}.f32
    purify    -> <data>/samples/<id>/{ip_uldct,ip_ndct,cm}.f32, <data>/manifest.purified.json, <data>/psp.json
    crossing  -> <out>/crossing.csv, <out>/crossing.json
    train     -> <out>/model.ckpt, <out>/loss.csv
    sample    -> <out>/samples/<id>/denoised.f32, <out>/denoised.json
    evaluate  -> <csv>, plus a JSON twin with per-image values

Each stage appends to ``<data>/ledger.jsonl``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ExperimentConfig
from .crossing import crossing_rate, rates_csv, report_json
from .ffm import SamplerConfig, ablation_domain, load_checkpoint, sample_images, save_checkpoint, train
from .imageio import read_image, write_image
from .ledger import RunLedger, sha256_file, sha256_files
from .metrics import AggregateReport, evaluate_split, means_csv, table1_csv
from .phantom import DatasetManifest, build_dataset
from .purify import PurifiedPair, PurifySettings, TrainingPair, make_training_pairs, psp_keep_ratio, purify_pair

log = logging.getLogger(__name__)

MANIFEST = "manifest.json"
PURIFIED_MANIFEST = "manifest.purified.json"
LEDGER = "ledger.jsonl"
IP_ROLES = ("ip_uldct", "ip_ndct", "cm")


def ledger_for(manifest: DatasetManifest) -> RunLedger:
    return RunLedger(manifest.root / LEDGER)


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


# -- generate / purify -------------------------------------------------------

def generate(cfg: ExperimentConfig, out_dir, force: bool = False) -> Path:
    out = Path(out_dir)
    target = out / MANIFEST
    if target.exists() and not force:
        raise FileExistsError(f"{target} exists; pass --force to overwrite")
    pc = cfg.phantom_config()
    manifest = build_dataset(pc, out)
    RunLedger(out / LEDGER).append("generate", "ok", {}, {"manifest": sha256_file(target)}, params={"n": pc.n, "seed": pc.seed})
    return target


def load_purified(manifest_path) -> DatasetManifest:
    manifest = DatasetManifest.load(manifest_path)
    if "purify" not in manifest.config:
        raise ValueError(f"{manifest_path} is not a purified manifest; run the purify stage first")
    return manifest


def purify_dataset(manifest_path, settings: PurifySettings, psp_threshold: float = 0.85) -> Path:
    """Write CM and both IP images for every sample plus an augmented manifest."""
    manifest_path = Path(manifest_path)
    manifest = DatasetManifest.load(manifest_path)
    manifest.validate()
    raw_inputs = {"manifest": sha256_file(manifest_path)}
    with ledger_for(manifest).stage("purify", raw_inputs, asdict(settings)) as outputs:
        samples = {}
        raw_pairs, ip_pairs = [], []
        for sid in manifest.ids():
            files = {k: v for k, v in manifest.samples[sid].items() if k not in IP_ROLES}
            n = read_image(manifest.path(sid, "ndct"))
            u = read_image(manifest.path(sid, "uldct"))
            pp = purify_pair(n, u, settings, sid)
            for role, img in (("ip_uldct", pp.ip_uldct), ("ip_ndct", pp.ip_ndct), ("cm", pp.cm.astype(np.float64))):
                rel = Path("samples") / sid / role
                write_image(manifest.root / rel, img, role)
                files[role] = str(rel.with_suffix(".f32"))
            samples[sid] = files
            raw_pairs.append((n, u))
            ip_pairs.append((n, read_image(manifest.root / files["ip_uldct"])))
        config = {k: v for k, v in manifest.config.items() if k != "purify"}
        config["purify"] = asdict(settings)
        out = DatasetManifest(manifest.root, config, manifest.splits, samples)
        path = out.save(manifest.root / PURIFIED_MANIFEST)
        psp = {
            "threshold": psp_threshold,
            "keep_ratio_raw": psp_keep_ratio(raw_pairs, threshold=psp_threshold),
            "keep_ratio_ip": psp_keep_ratio(ip_pairs, threshold=psp_threshold),
        }
        psp_path = _write_text(manifest.root / "psp.json", json.dumps(psp, indent=2, sort_keys=True) + "\n")
        outputs.update(manifest=sha256_file(path), psp=sha256_file(psp_path))
    return path


def load_samples(manifest: DatasetManifest, ids: Sequence[str]) -> list[PurifiedPair]:
    t = float(manifest.config["purify"]["t"])
    out = []
    for sid in ids:
        img = {role: read_image(manifest.path(sid, role)) for role in ("ndct", "uldct", *IP_ROLES)}
        out.append(PurifiedPair(img["ndct"], img["uldct"], img["ip_uldct"], img["ip_ndct"], img["cm"] > 0.5, t, sid))
    return out


def training_pairs(manifest: DatasetManifest, split: str, combination: str, t: float | None = None) -> list[TrainingPair]:
    return make_training_pairs(load_samples(manifest, manifest.ids(split)), combination, t)


def evaluation_set(manifest: DatasetManifest, split: str) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """``(uLDCT inputs, IP(NDCT) labels)`` keyed by sample id."""
    inputs, labels = {}, {}
    for sid in manifest.ids(split):
        inputs[sid] = read_image(manifest.path(sid, "uldct"))
        labels[sid] = read_image(manifest.path(sid, "ip_ndct"))
    return inputs, labels


# -- crossing ------------------------------------------------------------------

def analyze_crossing(manifest_path, cfg: ExperimentConfig, out_dir, split: str | None = None) -> Path:
    """Crossing rates of the raw (uLDCT, NDCT) and purified (IP(uLDCT), NDCT) pair sets."""
    manifest = load_purified(manifest_path)
    split = split or cfg.crossing.split
    ccfg = cfg.crossing_config()
    out = Path(out_dir)
    with ledger_for(manifest).stage("analyze-crossing", {"manifest": sha256_file(manifest_path)}, {"split": split}) as outputs:
        samples = load_samples(manifest, manifest.ids(split))
        reports = {
            "raw": crossing_rate([(s.uldct, s.ndct) for s in samples], ccfg),
            "ip": crossing_rate([(s.ip_uldct, s.ndct) for s in samples], ccfg),
        }
        csv_path = _write_text(out / "crossing.csv", rates_csv(reports))
        _write_text(out / "crossing.json", report_json(reports))
        outputs.update(csv=sha256_file(csv_path))
    return csv_path


# -- train / sample / evaluate -----------------------------------------------

def method_name(frequency: bool) -> str:
    return "FFM" if frequency else "FM"


def run_train(manifest_path, cfg: ExperimentConfig, out_dir) -> Path:
    manifest_path = Path(manifest_path).resolve()
    manifest = load_purified(manifest_path)
    out = Path(out_dir)
    tc, nc = cfg.train_config(), cfg.net_config()
    combo, t = cfg.purify.combination, cfg.purify.t
    params = {"combination": combo, "t": t, "frequency_module": nc.frequency_module, "steps": tc.total_steps}
    with ledger_for(manifest).stage("train", {"manifest": sha256_file(manifest_path)}, params) as outputs:
        pairs = training_pairs(manifest, cfg.train.split, combo, t)
        res = train(pairs, tc, nc)
        extra = {
            "manifest": str(manifest_path),
            "combination": combo,
            "t_param": t,
            "split": cfg.train.split,
            "method": method_name(nc.frequency_module),
            "max_residue": res.max_residue,
            "order_digest": res.order_digest,
        }
        ckpt = save_checkpoint(out / "model.ckpt", res.net, res.adam, tc, extra)
        loss = _write_text(out / "loss.csv", res.loss_csv(tc.steps_per_epoch))
        outputs.update(checkpoint=sha256_file(ckpt), loss=sha256_file(loss))
    return ckpt


def run_sample(checkpoint, out_dir, sampler_cfg: SamplerConfig, manifest_path=None, split: str = "test", input_path=None) -> Path:
    """Denoise a manifest split (default) or a single image file."""
    net, _, desc = load_checkpoint(checkpoint)
    out = Path(out_dir)
    if input_path is not None:
        img = read_image(input_path)
        den = sample_images(net, img[None], sampler_cfg)[0]
        return write_image(out / (Path(input_path).stem + "_denoised"), den, "denoised")

    manifest_path = Path(manifest_path or desc.get("manifest", ""))
    if not manifest_path.is_file():
        raise FileNotFoundError(f"manifest {manifest_path} not found; pass --manifest")
    manifest = DatasetManifest.load(manifest_path)
    inputs = {"checkpoint": sha256_file(checkpoint), "manifest": sha256_file(manifest_path)}
    with ledger_for(manifest).stage("sample", inputs, {"split": split, "steps": sampler_cfg.num_steps}) as outputs:
        ids = manifest.ids(split)
        stack = np.stack([read_image(manifest.path(sid, "uldct")) for sid in ids])
        den = sample_images(net, stack, sampler_cfg)
        files = {}
        for sid, img in zip(ids, den):
            rel = Path("samples") / sid / "denoised"
            write_image(out / rel, img, "denoised")
            files[sid] = str(rel.with_suffix(".f32"))
        doc = {
            "manifest": str(manifest_path.resolve()),
            "split": split,
            "method": desc.get("method", method_name(desc["arch"]["frequency_module"])),
            "steps": sampler_cfg.num_steps,
            "samples": files,
        }
        path = _write_text(out / "denoised.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
        outputs.update(denoised=sha256_files([out / f for f in files.values()]), manifest=sha256_file(path))
    return path


def evaluate_reports(denoised: dict[str, np.ndarray], manifest: DatasetManifest, split: str, method: str) -> dict[str, AggregateReport]:
    inputs, labels = evaluation_set(manifest, split)
    if set(denoised) != set(labels):
        raise KeyError(f"denoised ids do not match split {split!r}")
    return {"uLDCT": evaluate_split(inputs, labels), method: evaluate_split(denoised, labels)}


def run_evaluate(denoised_path, out_csv) -> Path:
    """Table-1 layout CSV: the uLDCT input row and the denoiser row, both scored against IP(NDCT)."""
    denoised_path = Path(denoised_path)
    doc = json.loads(denoised_path.read_text())
    manifest_path = Path(doc["manifest"])
    manifest = load_purified(manifest_path)
    inputs = {"denoised": sha256_file(denoised_path), "manifest": sha256_file(manifest_path)}
    with ledger_for(manifest).stage("evaluate", inputs, {"split": doc["split"]}) as outputs:
        den = {sid: read_image(denoised_path.parent / rel) for sid, rel in doc["samples"].items()}
        rows = evaluate_reports(den, manifest, doc["split"], doc["method"])
        out_csv = _write_text(Path(out_csv), table1_csv(rows))
        per_image = {
            name: {"mean": agg.mean, "std": agg.std, "count": agg.count, "per_image": [r.values for r in agg.per_image]}
            for name, agg in rows.items()
        }
        _write_text(out_csv.with_suffix(".json"), json.dumps(per_image, indent=2, sort_keys=True) + "\n")
        outputs.update(csv=sha256_file(out_csv))
    return out_csv


# -- ablations -----------------------------------------------------------------

def check_t_list(t_list: Sequence[float]) -> list[float]:
    ts = [float(t) for t in t_list]
    if not ts:
        raise ValueError("empty T list")
    if len(set(ts)) != len(ts):
        raise ValueError(f"duplicate T values in {ts}")
    bad = [t for t in ts if not 0.0 <= t <= 1.0]
    if bad:
        raise ValueError(f"T values must lie in [0, 1]: {bad}")
    return ts


def ablate_t(manifest_path, cfg: ExperimentConfig, t_list: Sequence[float], out_dir) -> Path:
    """One full train + sample + evaluate per T; Table-2 layout CSV."""
    ts = check_t_list(t_list)
    manifest_path = Path(manifest_path)
    manifest = load_purified(manifest_path)
    ledger = ledger_for(manifest)
    tc, nc, sc = cfg.train_config(), cfg.net_config(), cfg.sampler_config()
    inputs, labels = evaluation_set(manifest, cfg.evaluate.split)
    ids = sorted(inputs)
    stack = np.stack([inputs[k] for k in ids])
    samples = load_samples(manifest, manifest.ids(cfg.train.split))
    rows = {}
    for t in ts:
        try:
            with ledger.stage("train", {"manifest": sha256_file(manifest_path)}, {"t": t, "combination": cfg.purify.combination}) as outputs:
                res = train(make_training_pairs(samples, cfg.purify.combination, t), tc, nc)
                outputs["order_digest"] = res.order_digest
            with ledger.stage("evaluate", {}, {"t": t}):
                den = sample_images(res.net, stack, sc)
                rows[str(t)] = evaluate_split(dict(zip(ids, den)), labels)
        except Exception as exc:
            exc.args = (f"T={t}: {exc.args[0] if exc.args else exc}", *exc.args[1:])
            raise
        log.info("T=%s SSIM %.4f", t, rows[str(t)].mean["SSIM"])
    path = _write_text(Path(out_dir) / "ablate_t.csv", means_csv("T", rows))
    ledger.append("ablate-t", "ok", {"manifest": sha256_file(manifest_path)}, {"csv": sha256_file(path)}, params={"t_list": ts})
    return path


def ablate_domain(manifest_path, cfg: ExperimentConfig, out_dir) -> Path:
    """Frequency versus image-domain rows in Table-3 layout."""
    manifest_path = Path(manifest_path)
    manifest = load_purified(manifest_path)
    ledger = ledger_for(manifest)
    with ledger.stage("ablate-domain", {"manifest": sha256_file(manifest_path)}, {"combination": cfg.purify.combination}) as outputs:
        pairs = training_pairs(manifest, cfg.train.split, cfg.purify.combination, cfg.purify.t)
        inputs, labels = evaluation_set(manifest, cfg.evaluate.split)
        result = ablation_domain(pairs, inputs, labels, cfg.train_config(), cfg.net_config(), cfg.sampler_config())
        if not result.same_data_order:
            raise RuntimeError("domain ablation runs saw different data orders")
        path = _write_text(Path(out_dir) / "ablate_domain.csv", result.csv())
        outputs.update(csv=sha256_file(path), order_digest=result.runs["Frequency"].order_digest)
    return path
