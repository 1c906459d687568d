from __future__ import annotations

import json
from pathlib import Path

import pytest

from ditforge.utils.helpers import ArgumentError
from ditforge.workload.loader import load_cluster_spec, load_model_spec, load_parallelism
from ditforge.workload.shapes import assign_frame_bucket, bucket_from_string, derive_latent_shape
from ditforge.workload.types import (
    ClusterSpec,
    ModelSpec,
    NoBucketError,
    ParallelismConfig,
    SpecValidationError,
)
from ditforge.workload.validate import validate_config


def _cluster(nodes: int) -> ClusterSpec:
    return ClusterSpec.reference(nodes=nodes)


def test_image_bucket_has_one_latent_frame() -> None:
    bucket = derive_latent_shape(1, 256, 256, latent_table={1: 1}, patch=16)

    assert (bucket.latent_frames, bucket.latent_height, bucket.latent_width) == (1, 16, 16)
    assert bucket.tokens == 256


@pytest.mark.parametrize(("frames", "latent"), [(68, 12), (136, 24), (204, 36)])
def test_video_buckets_use_calibrated_latent_frames(frames: int, latent: int) -> None:
    assert derive_latent_shape(frames, 256, 256).latent_frames == latent


def test_unknown_frame_count_has_no_bucket() -> None:
    with pytest.raises(NoBucketError, match="no bucket for 100 frames"):
        derive_latent_shape(100, 256, 256)


def test_pixels_must_divide_by_patch() -> None:
    with pytest.raises(SpecValidationError, match="not divisible by patch"):
        derive_latent_shape(68, 250, 256)


def test_bucket_from_string() -> None:
    bucket = bucket_from_string("204x544x992")

    assert bucket.name == "204x544x992"
    assert (bucket.latent_height, bucket.latent_width) == (34, 62)

    with pytest.raises(ArgumentError, match="FRAMESxHEIGHTxWIDTH"):
        bucket_from_string("204-544-992")


def test_assign_frame_bucket_picks_largest_not_exceeding() -> None:
    buckets = [1, 68, 136, 204]

    assert assign_frame_bucket(150, buckets) == 136
    assert assign_frame_bucket(204, buckets) == 204
    assert assign_frame_bucket(1, buckets) == 1
    with pytest.raises(NoBucketError):
        assign_frame_bucket(40, [68, 136])


def test_valid_config_on_four_nodes() -> None:
    report = validate_config(ParallelismConfig(tp=8, dp=4), _cluster(4))

    assert report.ok


def test_tp_wider_than_node_is_reported() -> None:
    report = validate_config(ParallelismConfig(tp=16, dp=2), _cluster(4))

    assert "tp exceeds gpus_per_node" in report.names


def test_degree_product_mismatch_is_reported() -> None:
    report = validate_config(ParallelismConfig(tp=8, dp=3), _cluster(4))

    assert report.names == ["degree product mismatch"]
    with pytest.raises(SpecValidationError, match="degree product mismatch"):
        report.raise_for_errors()


def test_interleaving_accepts_any_micro_batch_count() -> None:
    cfg = ParallelismConfig(tp=2, pp=4, vpp=2, micro_batches=6)

    report = validate_config(cfg, _cluster(1))

    assert report.names == []


def test_vpp_without_pp_is_reported() -> None:
    report = validate_config(ParallelismConfig(tp=8, vpp=2), _cluster(1))

    assert "vpp requires pp" in report.names


def test_model_spec_rejects_heads_not_dividing_hidden() -> None:
    with pytest.raises(ValueError, match="not divisible by attention_heads"):
        ModelSpec(layers=48, hidden_dim=6000, attention_heads=48, param_count=30e9)


def test_loaders_reject_unknown_fields(tmp_path: Path) -> None:
    path = tmp_path / "model.json"
    path.write_text(
        json.dumps({"layers": 48, "hidden_dim": 6144, "attention_heads": 48, "param_count": 30e9, "color": "red"}),
        encoding="utf-8",
    )

    with pytest.raises(SpecValidationError, match="model.json"):
        load_model_spec(path)


def test_loaders_read_documents(tmp_path: Path) -> None:
    (tmp_path / "cluster.json").write_text(
        json.dumps(
            {
                "nodes": 2,
                "gpus_per_node": 8,
                "peak_tflops_per_gpu": 989,
                "hbm_gb": 80,
                "intra_node_bw": 400,
                "inter_node_bw": 100,
            }
        ),
        encoding="utf-8",
    )
    (tmp_path / "parallel.json").write_text(json.dumps({"tp": 8, "dp": 2}), encoding="utf-8")

    cluster = load_cluster_spec(tmp_path / "cluster.json")
    cfg = load_parallelism(tmp_path / "parallel.json")

    assert cluster.total_gpus == 16
    assert validate_config(cfg, cluster).ok


def test_loader_reports_missing_file(tmp_path: Path) -> None:
    with pytest.raises(SpecValidationError, match="cannot read"):
        load_parallelism(tmp_path / "absent.json")
