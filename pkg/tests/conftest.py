"""Shared fixtures: a small trained pipeline reused across test modules."""

from __future__ import annotations

import dataclasses

import pytest
from hypothesis import HealthCheck, settings

from semcom.config import HarnessConfig, load_config
from semcom.dataset import DatasetSpec, generate_synthetic
from semcom.dtjscc import DtjsccConfig, TrainedSystem, train_dtjscc

settings.register_profile(
    "suite", deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("suite")

EASY_SPEC = DatasetSpec(per_class_count=30, class_separation=3.0, seed=11)
SMALL_TRAIN = DtjsccConfig(k=32, epochs=8, batch_size=32, seed=7)


@pytest.fixture(scope="session")
def small_splits():
    splits_t0, _ = generate_synthetic(EASY_SPEC)
    return splits_t0


@pytest.fixture(scope="session")
def small_system(small_splits) -> TrainedSystem:
    return train_dtjscc(small_splits, train_psnr_db=8.0, cfg=SMALL_TRAIN)


def tiny_harness_cfg(master_seed: int = 0, **sections) -> HarnessConfig:
    """Default config shrunk until a full experiment takes a few seconds.

    ``sections`` maps section name to a dict of dataclass field overrides,
    e.g. ``tiny_harness_cfg(experiment={"trials": 2})``.
    """
    cfg = load_config(None, master_seed=master_seed)
    cfg = dataclasses.replace(
        cfg,
        dataset=dataclasses.replace(cfg.dataset, per_class_count=30),
        dtjscc=dataclasses.replace(cfg.dtjscc, epochs=6),
        experiment=dataclasses.replace(
            cfg.experiment,
            k_presets=(32,),
            psnr_grid_db=(0.0, 8.0),
            trials=2,
            eval_repetitions=1,
            eval_frame=4,
        ),
        csa=dataclasses.replace(cfg.csa, rounds=4),
        fedavg=dataclasses.replace(cfg.fedavg, rounds=4),
    )
    for name, fields in sections.items():
        cfg = dataclasses.replace(
            cfg, **{name: dataclasses.replace(getattr(cfg, name), **fields)}
        )
    return cfg
