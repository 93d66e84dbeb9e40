import json

import numpy as np
import pytest

from anyon_afp.fieldio import dump_field, load_field
from anyon_afp.grid import make_grid
from anyon_afp.townes import sample_on_grid


class TestFieldIO:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        g = make_grid(32, 6.0)
        u = rng.normal(size=(32, 32)) + 1j * rng.normal(size=(32, 32))
        dump_field(u, g, tmp_path / "f.bin")
        v, g2 = load_field(tmp_path / "f.bin")
        assert np.array_equal(u.view(np.uint64), v.view(np.uint64))
        assert (g2.n, g2.box_length) == (32, 6.0)

    def test_sidecar_contents(self, tmp_path, rng):
        g = make_grid(16, 2.0)
        u = rng.normal(size=(16, 16)).astype(complex)
        dump_field(u, g, tmp_path / "f.bin", kind="density")
        meta = json.loads((tmp_path / "f.bin.json").read_text())
        assert meta["n"] == 16 and meta["box_length"] == 2.0 and meta["kind"] == "density"
        assert meta["norm"] == pytest.approx(np.sqrt(g.h**2 * np.sum(np.abs(u) ** 2)))

    def test_layout_little_endian_interleaved(self, tmp_path):
        g = make_grid(16, 1.0)
        u = np.zeros((16, 16), complex)
        u[0, 1] = 1.5 - 2.0j
        dump_field(u, g, tmp_path / "f.bin")
        raw = np.frombuffer((tmp_path / "f.bin").read_bytes(), dtype="<f8")
        assert raw[2] == 1.5 and raw[3] == -2.0

    def test_q0_file_size(self, tmp_path, townes_data):
        g = make_grid(256, 16.0)
        dump_field(sample_on_grid(townes_data.profile, g), g, tmp_path / "q.bin")
        assert (tmp_path / "q.bin").stat().st_size == 2 * 256**2 * 8

    def test_n_mismatch(self, tmp_path):
        g = make_grid(16, 1.0)
        dump_field(np.ones((16, 16)), g, tmp_path / "f.bin")
        side = tmp_path / "f.bin.json"
        meta = json.loads(side.read_text())
        meta["n"] = 32
        side.write_text(json.dumps(meta))
        with pytest.raises(ValueError, match="bytes"):
            load_field(tmp_path / "f.bin")

    def test_endianness_mismatch(self, tmp_path):
        g = make_grid(16, 1.0)
        dump_field(np.ones((16, 16)), g, tmp_path / "f.bin")
        side = tmp_path / "f.bin.json"
        meta = json.loads(side.read_text())
        meta["endianness"] = "big"
        side.write_text(json.dumps(meta))
        with pytest.raises(ValueError, match="endianness"):
            load_field(tmp_path / "f.bin")
