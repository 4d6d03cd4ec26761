import math

import numpy as np
import pytest

from dpcdenoise.config import DenoiseConfig
from dpcdenoise.geometry import Frame
from dpcdenoise.io import (
    ParseError,
    RunManifest,
    load_config,
    read_point_cloud,
    save_config,
    write_point_cloud,
)


def random_frame(n, seed, with_normals=False):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-10, 10, (n, 3))
    normals = None
    if with_normals:
        normals = rng.normal(size=(n, 3))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    return Frame(pts, normals)


class TestPly:
    def test_single_vertex(self, tmp_path):
        path = tmp_path / "one.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\nproperty float z\n"
            "end_header\n0 0 0\n"
        )
        frame = read_point_cloud(path)
        assert len(frame) == 1
        assert np.array_equal(frame.positions, [[0.0, 0.0, 0.0]])
        assert frame.normals is None

    def test_round_trip_positions(self, tmp_path):
        frame = random_frame(40, 1)
        path = tmp_path / "cloud.ply"
        write_point_cloud(frame, path)
        back = read_point_cloud(path)
        assert np.max(np.abs(back.positions - frame.positions)) < 1e-6

    def test_round_trip_with_normals(self, tmp_path):
        frame = random_frame(25, 2, with_normals=True)
        path = tmp_path / "cloud.ply"
        write_point_cloud(frame, path)
        back = read_point_cloud(path)
        assert back.normals is not None
        assert np.max(np.abs(back.normals - frame.normals)) < 1e-6

    def test_header_vertex_count(self, tmp_path):
        frame = random_frame(7, 3)
        path = tmp_path / "cloud.ply"
        write_point_cloud(frame, path)
        assert "element vertex 7" in path.read_text()

    def test_empty_frame_unwritable(self, tmp_path):
        with pytest.raises(ValueError, match="empty"):
            Frame(np.empty((0, 3)))

    def test_missing_magic(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_text("plyx\nformat ascii 1.0\nend_header\n")
        with pytest.raises(ParseError, match="magic"):
            read_point_cloud(path)

    def test_binary_format_rejected(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_text(
            "ply\nformat binary_little_endian 1.0\nelement vertex 0\nend_header\n"
        )
        with pytest.raises(ParseError, match="format"):
            read_point_cloud(path)

    def test_non_numeric_token_reports_line(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\nproperty float z\n"
            "end_header\n0 zero 0\n"
        )
        with pytest.raises(ParseError, match="bad.ply:8"):
            read_point_cloud(path)

    def test_wrong_column_count(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 1\n"
            "property float x\nproperty float y\nproperty float z\n"
            "end_header\n0 0\n"
        )
        with pytest.raises(ParseError, match="expected 3 values"):
            read_point_cloud(path)

    def test_short_body(self, tmp_path):
        path = tmp_path / "bad.ply"
        path.write_text(
            "ply\nformat ascii 1.0\nelement vertex 2\n"
            "property float x\nproperty float y\nproperty float z\n"
            "end_header\n0 0 0\n"
        )
        with pytest.raises(ParseError, match="expected 2 vertices"):
            read_point_cloud(path)


class TestXyz:
    def test_three_columns(self, tmp_path):
        path = tmp_path / "pts.xyz"
        path.write_text("0 0 0\n1 2 3\n")
        frame = read_point_cloud(path)
        assert np.array_equal(frame.positions, [[0, 0, 0], [1, 2, 3]])

    def test_six_columns_with_normal(self, tmp_path):
        path = tmp_path / "pts.xyz"
        path.write_text("0 0 0 0 0 1\n")
        frame = read_point_cloud(path)
        assert np.array_equal(frame.normals, [[0.0, 0.0, 1.0]])

    def test_mixed_column_count_rejected(self, tmp_path):
        path = tmp_path / "pts.xyz"
        path.write_text("0 0 0\n1 2 3 4 5 6\n")
        with pytest.raises(ParseError, match="pts.xyz:2"):
            read_point_cloud(path)

    def test_zero_length_normal_rejected(self, tmp_path):
        path = tmp_path / "pts.xyz"
        path.write_text("0 0 0 0 0 0\n")
        with pytest.raises(ParseError, match="zero-length normal"):
            read_point_cloud(path)


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        cfg = DenoiseConfig(k=12, lambda1=0.25, xi=7, seed=99)
        path = tmp_path / "run.cfg"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_comments_and_blanks(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# tuning\n\nk = 8\nlambda2 = 0.5  # strong\n")
        cfg = load_config(path)
        assert cfg.k == 8
        assert cfg.lambda2 == 0.5

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("kappa = 3\n")
        with pytest.raises(ParseError, match="unknown config key"):
            load_config(path)

    def test_bad_value_reports_line(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("k = 8\nlambda1 = much\n")
        with pytest.raises(ParseError, match="run.cfg:2"):
            load_config(path)

    def test_invalid_combination_rejected(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("lambda1 = -1\n")
        with pytest.raises(ParseError):
            load_config(path)


class TestManifest:
    def test_round_trip(self, tmp_path):
        manifest = RunManifest(
            command="denoise",
            config=DenoiseConfig().to_dict(),
            inputs=["a.ply"],
            outputs=["out/a.ply"],
            seeds={"config": 0},
            timings_s={"denoise": 1.5},
        )
        path = tmp_path / "manifest.json"
        manifest.save(path)
        back = RunManifest.load(path)
        assert back == manifest

    def test_infinite_gpsnr_serializable(self, tmp_path):
        from dpcdenoise.metrics import FrameMetrics

        fm = FrameMetrics(frame_index=0, gpsnr_db=math.inf)
        manifest = RunManifest(command="eval", frame_metrics=[fm.to_dict()])
        path = tmp_path / "manifest.json"
        manifest.save(path)
        assert RunManifest.load(path).frame_metrics[0]["gpsnr_db"] == "inf"
