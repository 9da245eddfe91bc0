import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from delta6 import io
from delta6.geometry import DesignParams
from delta6.plant import PlantConfig, TimeSeriesDataset, simulate_dataset

HEADER = "t,e1,e2,e3,e4,e5,e6,fx,fy,fz,mx,my,mz"
finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


def write_raw(path, lines):
    path.write_text("\n".join(lines) + "\n")
    return path


class TestDataset:
    def test_header(self):
        assert ",".join(io.CSV_HEADER) == HEADER

    def test_round_trip_bit_exact(self, tmp_path):
        d = simulate_dataset(PlantConfig(seed=4), 10)
        io.write_dataset(tmp_path / "d.csv", d)
        back = io.read_dataset(tmp_path / "d.csv")
        assert np.array_equal(back.t, d.t) and np.array_equal(back.theta_e, d.theta_e)
        assert np.array_equal(back.wrench, d.wrench)
        assert back.rate == 50.0 and back.meta == d.meta
        assert (tmp_path / "d.csv").read_text().splitlines()[0] == HEADER

    @settings(max_examples=30)
    @given(hnp.arrays(float, (5, 12), elements=finite))
    def test_round_trip_arbitrary(self, tmp_path_factory, vals):
        p = tmp_path_factory.mktemp("rt") / "d.csv"
        d = TimeSeriesDataset(np.arange(5) * 0.02, vals[:, :6], vals[:, 6:], 50.0)
        io.write_dataset(p, d)
        back = io.read_dataset(p)
        assert np.array_equal(back.theta_e, d.theta_e) and np.array_equal(back.wrench, d.wrench)

    def test_neutral_row_zero_wrench(self, tmp_path):
        d = TimeSeriesDataset([0.0], np.zeros((1, 6)), np.zeros((1, 6)), 50.0)
        io.write_dataset(tmp_path / "z.csv", d)
        row = (tmp_path / "z.csv").read_text().splitlines()[1].split(",")
        assert all(float(v) == 0.0 for v in row[7:])

    def test_stride_50hz(self, tmp_path):
        d = simulate_dataset(PlantConfig.ideal(), 40)
        io.write_dataset(tmp_path / "d.csv", d)
        t = io.read_table(tmp_path / "d.csv")[:, 0]
        assert np.array_equal(np.rint(t * 50), np.arange(t.size))
        assert np.abs(np.diff(t) - 0.02).max() < 1e-12

    def test_rate_inferred_without_sidecar(self, tmp_path):
        p = write_raw(tmp_path / "d.csv", [HEADER] + [",".join(["%g" % (i * 0.01)] + ["0"] * 12)
                                                      for i in range(5)])
        assert io.read_dataset(p).rate == pytest.approx(100.0)
        assert io.read_dataset(p, rate=50.0).rate == 50.0

    @pytest.mark.parametrize("line,msg", [
        ("0,1,2", "line 3: expected 13 fields"),
        ("0.02,a,0,0,0,0,0,0,0,0,0,0,0", "line 3: non-numeric"),
        ("0.02,nan,0,0,0,0,0,0,0,0,0,0,0", "line 3: non-finite"),
        ("0.02,0,5,0,0,0,0,0,0,0,0,0,0,0", "line 3: expected 13 fields"),   # comma decimal
    ])
    def test_malformed_line_numbers(self, tmp_path, line, msg):
        p = write_raw(tmp_path / "bad.csv", [HEADER, ",".join(["0"] * 13), line])
        with pytest.raises(io.FormatError, match=msg):
            io.read_table(p)

    def test_bad_header_and_empty(self, tmp_path):
        with pytest.raises(io.FormatError, match="line 1"):
            io.read_table(write_raw(tmp_path / "h.csv", ["t,a,b"]))
        (tmp_path / "e.csv").write_text("")
        with pytest.raises(io.FormatError, match="empty"):
            io.read_table(tmp_path / "e.csv")

    def test_non_monotone_time(self, tmp_path):
        p = write_raw(tmp_path / "d.csv", [HEADER, ",".join(["0"] * 13), ",".join(["0"] * 13)])
        with pytest.raises(io.FormatError):
            io.read_dataset(p, rate=50)

    def test_write_rejects_nan(self, tmp_path):
        d = TimeSeriesDataset([0.0], np.full((1, 6), np.nan), np.zeros((1, 6)), 50.0)
        with pytest.raises(ValueError):
            io.write_dataset(tmp_path / "n.csv", d)


class TestFiles:
    def test_no_overwrite(self, tmp_path):
        p = io.atomic_write_text(tmp_path / "a.txt", "one")
        with pytest.raises(io.OutputExists):
            io.atomic_write_text(p, "two", overwrite=False)
        assert p.read_text() == "one"
        io.atomic_write_text(p, "two")
        assert p.read_text() == "two"
        assert [x.name for x in tmp_path.iterdir()] == ["a.txt"]   # no temp files left

    def test_claim_paths(self, tmp_path):
        (tmp_path / "x").write_text("")
        io.claim_paths([tmp_path / "y"])
        with pytest.raises(io.OutputExists, match="--force"):
            io.claim_paths([tmp_path / "x", tmp_path / "y"])
        io.claim_paths([tmp_path / "x"], force=True)

    def test_output_dir_precedence(self, monkeypatch):
        monkeypatch.delenv("DELTA6_OUT", raising=False)
        assert str(io.output_dir(None)) == "delta6_out"
        monkeypatch.setenv("DELTA6_OUT", "/tmp/env_out")
        assert str(io.output_dir(None)) == "/tmp/env_out"
        assert str(io.output_dir("cli")) == "cli"

    def test_json_numpy(self, tmp_path):
        io.write_json(tmp_path / "j.json", {"a": np.arange(3), "b": np.float64(1.5), "c": (1, 2)})
        assert io.read_json(tmp_path / "j.json") == {"a": [0, 1, 2], "b": 1.5, "c": [1, 2]}

    def test_write_table(self, tmp_path):
        io.write_table(tmp_path / "t.csv", [{"a": 0.1, "b": "x"}, {"a": 1.0, "c": 3}])
        lines = (tmp_path / "t.csv").read_text().splitlines()
        assert lines[0] == "a,b,c" and float(lines[1].split(",")[0]) == 0.1
        assert lines[2] == "1,,3"


class TestConfig:
    def test_units(self):
        a = io.design_from_config({"a_mm": 72.0, "theta_offset_deg": 30.0})
        b = io.design_from_config({"a": 0.072, "theta_offset": math.pi / 6})
        assert a.a == pytest.approx(b.a, rel=1e-15)
        assert a.theta_offset == pytest.approx(b.theta_offset, rel=1e-15)

    @pytest.mark.parametrize("section", [{"a": 0.07, "a_mm": 70}, {"a_deg": 1.0},
                                         {"theta_offset_mm": 1.0}, {"colour": 1}])
    def test_bad_design_sections(self, section):
        with pytest.raises(io.ConfigError):
            io.design_from_config(section)

    def test_presets(self):
        names = io.preset_names()
        assert {"baseline", "variants", "ideal", "bode", "peg"} <= set(names)
        base = io.RunConfig.from_raw(io.load_config("baseline"))
        assert base.design == DesignParams()

    def test_extends_merge(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"extends": "baseline", "plant": {"noise_sigma": 0.0}}))
        raw = io.load_config(str(p))
        assert raw["plant"]["noise_sigma"] == 0.0
        assert raw["plant"].get("sample_rate", 50.0) == 50.0 and "design" in raw

    def test_missing_and_invalid(self, tmp_path):
        with pytest.raises(io.ConfigError):
            io.load_config("no_such_preset")
        with pytest.raises(io.ConfigError):
            io.load_config(str(tmp_path / "missing.json"))
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(io.ConfigError):
            io.load_config(str(tmp_path / "bad.json"))
        with pytest.raises(io.ConfigError):
            io.RunConfig.from_raw({"plant": {"noise_sigma": -1}})

    def test_hash_deterministic(self):
        a = io.RunConfig.from_raw(io.load_config("baseline"), seed=3)
        b = io.RunConfig.from_raw(io.load_config("baseline"), seed=3)
        c = io.RunConfig.from_raw(io.load_config("baseline"), seed=4)
        assert a.digest() == b.digest() != c.digest()
        assert io.config_hash({"x": 1, "y": 2}) == io.config_hash({"y": 2, "x": 1})

    def test_snapshot_reload(self, tmp_path):
        run = io.RunConfig.from_raw(io.load_config("variants"), seed=11)
        io.write_json(tmp_path / "s.json", io.snapshot(run, ["design"]))
        again = io.RunConfig.from_raw(io.load_config(str(tmp_path / "s.json")))
        assert again.resolved() == run.resolved()
        assert io.read_json(tmp_path / "s.json")["hash"] == run.digest()

    @given(st.integers(0, 2**32 - 1))
    def test_derive_seed(self, root):
        a = io.derive_seed(root, "plant")
        assert a == io.derive_seed(root, "plant") and a != io.derive_seed(root, "train")
