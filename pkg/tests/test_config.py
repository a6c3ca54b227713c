import dataclasses

import pytest

from sceneflow.config import PipelineConfig


def test_pinned_defaults():
    cfg = PipelineConfig()
    assert cfg.subscales == 3
    assert cfg.iterations == 12
    assert cfg.consistency_tau == 1.0
    assert cfg.min_region == 150
    assert cfg.geometry_neighborhood == 160
    assert cfg.motion_neighborhood == 80
    assert cfg.alpha == 2.2
    assert cfg.kappa == 5.0
    assert cfg.gamma == 0.77
    assert cfg.lam == 10.0
    assert cfg.eps == 0.001
    assert cfg.outer_iterations == 2
    assert cfg.inner_iterations == 1
    assert cfg.sor_iterations == 30
    assert cfg.omega == 1.9
    assert cfg.tau_segment == 0.4
    assert cfg.max_depth == 35.0
    assert cfg.ransac_iterations == 500
    assert cfg.inlier_px == 1.0
    assert cfg.relaxed_px == 3.0
    assert cfg.seed_block == 3
    assert cfg.egomotion and cfg.refine
    assert cfg.edge_source == "baseline"


def test_json_round_trip_lossless():
    cfg = PipelineConfig(seed=99, gamma=0.5, egomotion=False, edge_source="file:/tmp/e.png")
    back = PipelineConfig.from_json(cfg.to_json())
    assert back == cfg
    assert dataclasses.asdict(back) == dataclasses.asdict(cfg)


def test_file_round_trip(tmp_path):
    p = str(tmp_path / "cfg.json")
    cfg = PipelineConfig(sor_iterations=12, refine=False)
    cfg.save(p)
    assert PipelineConfig.load(p) == cfg


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown"):
        PipelineConfig.from_json('{"bogus": 1}')
