import pytest

from labelmend.config import SimulatorConfig, SplitConfig, ToolkitConfig


class TestDefaults:
    def test_values(self):
        cfg = ToolkitConfig()
        assert cfg.acceptance_threshold == 0.5
        assert cfg.ambiguity_band == (0.2, 0.8)
        assert cfg.duplicate_candidate_iou == 0.25
        assert cfg.lease_seconds == 600.0
        assert cfg.split.target_fraction == 0.8
        assert cfg.simulator.accuracy == 1.0


class TestLoad:
    def test_roundtrip(self, tmp_path):
        cfg = ToolkitConfig(
            seed=7,
            acceptance_threshold=0.6,
            ambiguity_band=(0.3, 0.7),
            split=SplitConfig(tolerance=0.02),
            simulator=SimulatorConfig(accuracy=0.9),
        )
        path = tmp_path / "cfg.yaml"
        cfg.dump(path)
        back = ToolkitConfig.load(path)
        assert back == cfg

    def test_partial_file_keeps_defaults(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("seed: 3\nsimulator:\n  accuracy: 0.75\n")
        cfg = ToolkitConfig.load(path)
        assert cfg.seed == 3
        assert cfg.simulator.accuracy == 0.75
        assert cfg.acceptance_threshold == 0.5

    def test_empty_file_is_defaults(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("")
        assert ToolkitConfig.load(path) == ToolkitConfig()

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.yaml"
        path.write_text("acceptance_treshold: 0.4\n")  # typo must not pass silently
        with pytest.raises(KeyError):
            ToolkitConfig.load(path)

    def test_band_parsed_as_tuple(self):
        cfg = ToolkitConfig.from_dict({"ambiguity_band": [0.25, 0.75]})
        assert cfg.ambiguity_band == (0.25, 0.75)
