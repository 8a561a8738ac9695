import json
import math

import numpy as np
import pytest

from conftest import haar_unitary
from dgbs.cli import main
from dgbs.serialize import (canonical_json, config_hash, load_config,
                            matrix_from_json, matrix_to_json)


@pytest.fixture
def config_path(tmp_path):
    u = haar_unitary(3, seed=42)
    cfg = {
        "version": 1,
        "source": {"r": 0.35, "alpha_mag": 0.6, "phi": 0.0,
                   "squeezer_ports": [0, 1], "coherent_port": 2},
        "transfer": {"t": matrix_to_json(math.sqrt(0.6) * u)},
        "second_input_port": None,
        "phi_grid": {"start": 0.0, "stop": 4 * math.pi, "num": 32},
        "pulses_per_setting": "inf",
        "include_collisions": True,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


class TestSerialize:
    def test_matrix_round_trip(self):
        m = np.array([[1 + 2j, 0.5], [0, -1j]])
        assert np.array_equal(matrix_from_json(matrix_to_json(m)), m)

    def test_config_hash_stable_under_key_order(self):
        assert config_hash({"a": 1, "b": [2, 3]}) == \
            config_hash({"b": [2, 3], "a": 1})

    def test_version_checked(self, tmp_path):
        from dgbs.errors import SchemaError
        p = tmp_path / "bad.json"
        p.write_text('{"version": 99}')
        with pytest.raises(SchemaError):
            load_config(str(p))

    def test_canonical_json_compact(self):
        assert canonical_json({"b": 1, "a": 2}) == '{"a":2,"b":1}'


class TestProbs:
    def test_byte_identical_reruns(self, config_path, tmp_path):
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            assert main(["probs", "--config", config_path, "--n-max", "2",
                         "--out", str(out)]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_payload_structure(self, config_path, tmp_path):
        out = tmp_path / "p.json"
        main(["probs", "--config", config_path, "--n-max", "2",
              "--model", "korder(1)", "--out", str(out)])
        obj = json.loads(out.read_text())
        assert obj["model"] == "korder(1)"
        assert set(obj["distributions"]) == {"1", "2"}
        assert len(obj["config_hash"]) == 16

    def test_missing_config_is_usage_error(self):
        assert main(["probs", "--config", "/nonexistent.json"]) == 2


class TestSimulateReconstruct:
    def test_pipeline(self, config_path, tmp_path):
        recs = tmp_path / "recs.csv"
        assert main(["simulate", "--config", config_path,
                     "--out", str(recs)]) == 0
        out = tmp_path / "recon.json"
        assert main(["reconstruct", "--records", str(recs),
                     "--out", str(out)]) == 0
        obj = json.loads(out.read_text())
        assert obj["d"] == 3
        assert obj["gamma"] == sorted(obj["gamma"], key=lambda _: 0)  # list

    def test_simulate_deterministic(self, config_path, tmp_path):
        texts = []
        for name in ("r1.csv", "r2.csv"):
            out = tmp_path / name
            main(["simulate", "--config", config_path, "--seed", "5",
                  "--out", str(out)])
            texts.append(out.read_text())
        assert texts[0] == texts[1]


class TestCompare:
    def test_tvd_output(self, config_path, tmp_path):
        out = tmp_path / "cmp.json"
        assert main(["compare", "--config", config_path, "--model", "full",
                     "--model-b", "classical", "--n-max", "2",
                     "--out", str(out)]) == 0
        obj = json.loads(out.read_text())
        assert set(obj["tvd_by_total"]) == {"1", "2"}
        assert all(0 <= v <= 1 for v in obj["tvd_by_total"].values())

    def test_likelihood_from_samples(self, config_path, tmp_path):
        samples = tmp_path / "s.csv"
        main(["sample", "--config", config_path, "--pulses", "300",
              "--n-max", "2", "--out", str(samples)])
        out = tmp_path / "cmp.json"
        assert main(["compare", "--config", config_path, "--model", "full",
                     "--model-b", "korder(0)", "--n-max", "2",
                     "--samples", str(samples), "--min-photons", "2",
                     "--out", str(out)]) == 0
        obj = json.loads(out.read_text())
        assert obj["likelihood"]["samples"] >= 0


class TestLockOracle:
    def test_lock_output(self, config_path, tmp_path):
        out = tmp_path / "lock.json"
        assert main(["lock", "--config", config_path, "--duration", "20",
                     "--out", str(out)]) == 0
        obj = json.loads(out.read_text())
        assert obj["residual_std"] >= 0
        assert len(obj["trace_phi"]) == len(obj["trace_times"])

    def test_oracle_agreement(self, config_path, tmp_path):
        out = tmp_path / "oracle.json"
        assert main(["oracle", "--config", config_path,
                     "--pattern", "1,1,0", "--out", str(out)]) == 0
        obj = json.loads(out.read_text())
        assert obj["abs_diff"] < 1e-6
