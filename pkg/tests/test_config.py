"""Tests for configuration parsing and validation."""

import tempfile
import unittest
from pathlib import Path

import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from semantic_auction.config import parse_config, read_config_text
from semantic_auction.errors import EXIT_VALIDATION, ConfigError, exit_code_for


class TestParseConfig(unittest.TestCase):
    """Test suite for parse_config."""

    def setUp(self):
        """Set up test fixtures before each test method."""
        self.temp_dir = tempfile.TemporaryDirectory()
        self.path = Path(self.temp_dir.name) / "run.cfg"

    def tearDown(self):
        """Clean up after each test method."""
        self.temp_dir.cleanup()

    def _write(self, text: str) -> Path:
        self.path.write_text(text)
        return self.path

    def test_defaults(self):
        """Test the configuration with no file and no overrides."""
        config = parse_config()
        self.assertEqual(config.wpcn.eta, 0.8)
        self.assertEqual(config.wpcn.tau, 1.0)
        self.assertEqual(config.auction.N, 10)
        self.assertEqual(config.auction.Q, 5)
        self.assertEqual(config.auction.S, 10)
        self.assertEqual(config.auction.kappa, 1000.0)
        self.assertEqual(config.scenario.n_devices, 10)
        self.assertEqual(config.scenario.j_range, (0.6, 0.9))

    def test_file_values(self):
        """Test comments, blank lines, ranges and booleans."""
        path = self._write("# physical layer\neta = 0.9\n\ntau=1.2  # seconds\nj_range = 0.1, 0.4\njitter = false\n")
        config = parse_config(path)
        self.assertEqual(config.wpcn.eta, 0.9)
        self.assertEqual(config.wpcn.tau, 1.2)
        self.assertEqual(config.scenario.j_range, (0.1, 0.4))
        self.assertFalse(config.scenario.jitter)

    def test_shared_keys(self):
        """Test that N and seed reach both the scenario and the auction."""
        config = parse_config(overrides={"N": "6", "seed": "42"})
        self.assertEqual(config.scenario.n_devices, 6)
        self.assertEqual(config.auction.N, 6)
        self.assertEqual(config.scenario.seed, 42)
        self.assertEqual(config.auction.seed, 42)

    def test_overrides_win(self):
        """Test that command-line values replace file values."""
        path = self._write("tau = 1.2\n")
        self.assertEqual(parse_config(path, {"tau": "0.9"}).wpcn.tau, 0.9)

    def test_invalid_value_names_key_and_line(self):
        """Test that a violated invariant reports where it came from."""
        path = self._write("tau = 1.0\neta = 1.5\n")
        with self.assertRaises(ConfigError) as ctx:
            parse_config(path)
        self.assertEqual(ctx.exception.key, "eta")
        self.assertEqual(ctx.exception.line, 2)
        self.assertEqual(exit_code_for(ctx.exception), EXIT_VALIDATION)

    def test_unparsable_value(self):
        """Test a value that is not a number."""
        path = self._write("K = ten\n")
        with self.assertRaises(ConfigError) as ctx:
            parse_config(path)
        self.assertEqual((ctx.exception.key, ctx.exception.line), ("K", 1))

    def test_inverted_range(self):
        """Test that a range with lo > hi is rejected on its line."""
        path = self._write("seed = 1\nd_range = 12, 8\n")
        with self.assertRaises(ConfigError) as ctx:
            parse_config(path)
        self.assertEqual((ctx.exception.key, ctx.exception.line), ("d_range", 2))

    def test_override_errors_use_line_zero(self):
        """Test that flag values report line 0."""
        with self.assertRaises(ConfigError) as ctx:
            parse_config(overrides={"kappa": "-1"})
        self.assertEqual((ctx.exception.key, ctx.exception.line), ("kappa", 0))

    def test_unknown_key(self):
        """Test unknown keys in files and overrides."""
        with self.assertRaises(ConfigError) as ctx:
            parse_config(self._write("eta = 0.5\ngamma = 3\n"))
        self.assertEqual(ctx.exception.line, 2)
        with self.assertRaises(ConfigError):
            parse_config(overrides={"gamma": "3"})

    def test_missing_file(self):
        """Test that a missing config file is a validation error."""
        with self.assertRaises(ConfigError):
            parse_config(Path(self.temp_dir.name) / "absent.cfg")

    def test_line_without_equals(self):
        """Test that every non-comment line needs '='."""
        with self.assertRaises(ConfigError) as ctx:
            read_config_text("eta = 0.5\ntau 1.0\n")
        self.assertEqual(ctx.exception.line, 2)


if __name__ == "__main__":
    unittest.main()
