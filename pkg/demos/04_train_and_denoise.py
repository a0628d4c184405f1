"""A small end-to-end run through the stage functions the CLI uses.

generate -> purify -> train -> sample -> evaluate on 60 pairs with a small
network, finishing in well under a minute on one CPU core. The desk-scale
settings live in configs/desk.yaml.

    python3 demos/04_train_and_denoise.py [--workdir DIR]
"""
import argparse
import tempfile
from pathlib import Path

from uldct import pipeline
from uldct.config import from_dict
from uldct.ledger import RunLedger


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workdir", type=Path)
    args = ap.parse_args()
    work = args.workdir or Path(tempfile.mkdtemp(prefix="uldct_demo_"))

    cfg = from_dict(
        {
            "dataset": {"n": 60},
            "network": {"base_channels": 8},
            "train": {"epochs": 2, "steps_per_epoch": 100, "lr": 1e-3},
        }
    )
    manifest = pipeline.generate(cfg, work / "data", force=True)
    purified = pipeline.purify_dataset(manifest, cfg.purify_settings(), cfg.purify.psp_threshold)
    ckpt = pipeline.run_train(purified, cfg, work / "model")
    denoised = pipeline.run_sample(ckpt, work / "denoised", cfg.sampler_config(), purified, cfg.sample.split)
    report = pipeline.run_evaluate(denoised, work / "evaluation.csv")

    print(report.read_text(), end="")
    ledger = RunLedger(work / "data" / "ledger.jsonl")
    print(f"ledger: {ledger.verify()} records, stages {[r['stage'] for r in ledger.records()]}")
    print(f"artifacts under {work}")


if __name__ == "__main__":
    main()
