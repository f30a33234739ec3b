"""Configuration layering and validation."""

import logging

import pytest

from utils.config import (
    DEFAULTS,
    build_config,
    dump_config,
    parse_config_text,
    parse_range,
    read_config_file,
    setup_logging,
)
from utils.errors import ConfigurationError
from utils.network import QuantumLayerKind
from utils.quantum.circuits import Topology


class TestParseRange:
    def test_inclusive_span(self):
        assert parse_range("2:6") == [2, 3, 4, 5, 6]

    def test_list(self):
        assert parse_range("2, 4,8") == [2, 4, 8]

    def test_single_integer(self):
        assert parse_range(3) == [3]
        assert parse_range("3") == [3]

    @pytest.mark.parametrize("text", ["a:b", "", "6:2", "1,x"])
    def test_invalid(self, text):
        with pytest.raises(ConfigurationError):
            parse_range(text)


class TestBuildConfig:
    def test_defaults(self):
        config = build_config()
        assert config.model is QuantumLayerKind.ENSEMBLE
        assert config.topology is Topology.NEAREST_NEIGHBOR
        assert (config.nq, config.layers, config.digits) == (4, 4, (0, 1))
        assert config.lr == pytest.approx(1e-3)
        assert config.samples == DEFAULTS["samples"]

    def test_overrides_beat_file_values(self):
        config = build_config({"nq": "3", "layers": "2"}, {"nq": 5, "layers": None})
        assert config.nq == 5
        assert config.layers == 2

    def test_ranges(self):
        config = build_config({"nq_range": "2:4"})
        assert config.qubit_grid() == [2, 3, 4]
        assert config.layer_grid() == [config.layers]

    def test_repeat_seeds(self):
        assert build_config(overrides={"seed": 7, "repeats": 3}).repeat_seeds() == [7, 8, 9]

    @pytest.mark.parametrize("key, value", [
        ("nq", 1),
        ("nq", 9),
        ("layers", 0),
        ("lr", 0.0),
        ("batch_size", 0),
        ("digits", "3,3"),
        ("digits", "12"),
        ("model", "hybrid"),
        ("topology", "ring"),
        ("nq_range", "1:4"),
        ("samples", 1),
    ])
    def test_invalid_values(self, key, value):
        with pytest.raises(ConfigurationError):
            build_config(overrides={key: value})

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError):
            build_config({"qubits": 4})


class TestConfigFile:
    def test_comments_and_blank_lines(self):
        values = parse_config_text("# header\n\nnq = 3   # inline\nmodel=reference\n")
        assert values == {"nq": "3", "model": "reference"}

    def test_unknown_key(self):
        with pytest.raises(ConfigurationError, match="unknown setting"):
            parse_config_text("width = 3\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigurationError):
            parse_config_text("nq 3\n")

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            read_config_file(tmp_path / "absent.conf")

    def test_dump_round_trip(self, tmp_path):
        config = build_config(overrides={"model": "reference", "topology": "allpairs", "digits": "3,8",
                                         "nq_range": "2:5", "frozen": True, "lr": 0.02})
        path = tmp_path / "resolved.conf"
        path.write_text(dump_config(config))
        assert build_config(read_config_file(path)) == config


class TestLogging:
    def test_level_from_argument(self):
        setup_logging("debug")
        assert logging.getLogger().level == logging.DEBUG
        setup_logging("WARNING")
        assert logging.getLogger().level == logging.WARNING

    def test_unknown_level(self):
        with pytest.raises(ConfigurationError):
            setup_logging("chatty")
