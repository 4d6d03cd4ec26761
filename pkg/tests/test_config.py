import pytest

from dpcdenoise.config import DenoiseConfig


class TestDefaults:
    def test_parameter_defaults(self):
        cfg = DenoiseConfig()
        assert cfg.k == 30
        assert cfg.patch_fraction == 0.5
        assert cfg.k_s == 10
        assert cfg.xi == 10
        assert cfg.c == 5.0
        assert cfg.mprime_fraction == 0.9
        assert cfg.trace_bound == 5.0

    def test_patch_count_rule(self):
        cfg = DenoiseConfig()
        assert cfg.patch_count(100) == 50
        assert cfg.patch_count(101) == 50  # round(50.5) banker's-rounds to 50
        assert cfg.patch_count(1) == 1
        assert DenoiseConfig(patch_fraction=1.0).patch_count(64) == 64

    def test_weight_floor_rule(self):
        cfg = DenoiseConfig()
        assert cfg.weight_floor(100) == pytest.approx(90.0)


class TestValidation:
    @pytest.mark.parametrize(
        "field,value",
        [
            ("k", 0),
            ("patch_fraction", 0.0),
            ("patch_fraction", 1.5),
            ("k_s", 0),
            ("xi", 0),
            ("c", 0.0),
            ("alpha", -0.1),
            ("alpha", 1.1),
            ("lambda1", -1.0),
            ("lambda2", -0.5),
            ("mprime_fraction", 0.0),
            ("trace_bound", 0.0),
            ("k_plane", 2),
            ("cg_tol", 0.0),
            ("pg_step", -1.0),
            ("outer_max_iters", 0),
            ("seed", -1),
        ],
    )
    def test_rejects_bad_values(self, field, value):
        with pytest.raises(ValueError):
            DenoiseConfig(**{field: value})

    def test_from_dict_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            DenoiseConfig.from_dict({"k": 5, "bogus": 1})

    def test_round_trip_dict(self):
        cfg = DenoiseConfig(k=9, lambda1=0.3)
        assert DenoiseConfig.from_dict(cfg.to_dict()) == cfg
