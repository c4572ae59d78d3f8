"""Command-line surface: artifacts, exit codes, manifests, replay."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from projsum import make_geometry
from projsum.cli import E_CHECK, E_OK, E_USAGE, main
from tests.conftest import P_LAW, Q_LAW

DEMO_FLAGS = [
    "--a", "0.625", "--alpha", "0", "--alpha-prime", "1",
    "--b", "0.875", "--beta", "0", "--beta-prime", "0.8",
]


def _read_csv(path: Path) -> tuple[list[str], list[list[float]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if not r[0].startswith("#")]
    return rows[0], [[float(v) for v in row] for row in rows[1:]]


def _sample(tmp_path: Path, name: str, n: int = 64, seed: int = 5) -> Path:
    prefix = tmp_path / name
    rc = main(["sample", "--n", str(n), *DEMO_FLAGS, "--seed", str(seed),
               "--out-prefix", str(prefix)])
    assert rc == E_OK
    return prefix


class TestSample:
    def test_writes_esd_and_manifest(self, tmp_path):
        prefix = _sample(tmp_path, "run", n=64, seed=5)
        header, rows = _read_csv(Path(str(prefix) + ".esd.csv"))
        assert header == ["re", "im"]
        assert len(rows) == 64
        geom = make_geometry(P_LAW, Q_LAW)
        pts = np.array([complex(re, im) for re, im in rows])
        from projsum import dist_to_hr_many

        assert np.max(dist_to_hr_many(geom, pts)) <= 1e-8
        manifest = json.loads(Path(str(prefix) + ".manifest.json").read_text())
        assert manifest["command"] == "sample"
        assert manifest["params"]["n"] == 64
        # 64 divides the atom counts evenly, so the laws realize exactly
        assert manifest["realized_laws"]["p"]["weight"] == 0.625
        assert "timings" in manifest

    def test_scalar_trivial_model(self, tmp_path):
        prefix = tmp_path / "one"
        rc = main(["sample", "--n", "1",
                   "--a", "1", "--alpha", "0.25", "--alpha-prime", "9",
                   "--b", "1", "--beta", "-0.5", "--beta-prime", "9",
                   "--out-prefix", str(prefix)])
        assert rc == E_OK
        _, rows = _read_csv(Path(str(prefix) + ".esd.csv"))
        # the 1x1 Haar rotation is a phase roundtrip, exact only to eps
        assert rows[0] == pytest.approx([0.25, -0.5], abs=1e-14)

    def test_crlf_line_endings(self, tmp_path):
        prefix = _sample(tmp_path, "crlf", n=5, seed=1)
        raw = Path(str(prefix) + ".esd.csv").read_bytes()
        assert raw.count(b"\r\n") == 6  # header + 5 rows
        assert b"\n" not in raw.replace(b"\r\n", b"")

    def test_same_seed_same_bytes(self, tmp_path):
        a = _sample(tmp_path, "a", seed=99)
        b = _sample(tmp_path, "b", seed=99)
        c = _sample(tmp_path, "c", seed=100)
        esd_a = Path(str(a) + ".esd.csv").read_bytes()
        assert esd_a == Path(str(b) + ".esd.csv").read_bytes()
        assert esd_a != Path(str(c) + ".esd.csv").read_bytes()


class TestCheck:
    def test_clean_realization_passes(self, tmp_path, capsys):
        prefix = tmp_path / "chk"
        rc = main(["check", "--n", "60", *DEMO_FLAGS, "--seed", "3",
                   "--z-grid", "10", "--out-prefix", str(prefix)])
        assert rc == E_OK
        assert "all checks passed" in capsys.readouterr().out
        payload = json.loads(Path(str(prefix) + ".check.json").read_text())
        assert payload["first_failure"] is None
        assert [c["name"] for c in payload["checks"]] == [
            "support", "normality", "re_constant", "im_bound", "sv_bound", "corner_mass",
        ]
        assert all(c["ok"] for c in payload["checks"])
        assert len(payload["sv_margins"]) == 10
        assert min(m["margin"] for m in payload["sv_margins"]) >= -1e-8

    def test_perturbation_trips_support_first(self, tmp_path, capsys):
        prefix = tmp_path / "bad"
        rc = main(["check", "--n", "60", *DEMO_FLAGS, "--seed", "3",
                   "--perturb", "1e-3", "--z-grid", "5", "--out-prefix", str(prefix)])
        assert rc == E_CHECK
        assert "support" in capsys.readouterr().err
        payload = json.loads(Path(str(prefix) + ".check.json").read_text())
        assert payload["first_failure"] == "support"
        assert payload["structure"]["support_deviation"] > 1e-8

    def test_tiny_perturbation_is_within_tolerance(self, tmp_path):
        prefix = tmp_path / "tiny"
        rc = main(["check", "--n", "60", *DEMO_FLAGS, "--seed", "3",
                   "--perturb", "1e-12", "--z-grid", "5", "--out-prefix", str(prefix)])
        assert rc == E_OK

    def test_zero_z_grid_skips_bound(self, tmp_path):
        prefix = tmp_path / "nozs"
        rc = main(["check", "--n", "40", *DEMO_FLAGS, "--z-grid", "0",
                   "--out-prefix", str(prefix)])
        assert rc == E_OK
        payload = json.loads(Path(str(prefix) + ".check.json").read_text())
        assert payload["sv_margins"] == []
        assert all(c["name"] != "sv_bound" for c in payload["checks"])

    def test_commuting_variant_also_passes(self, tmp_path):
        prefix = tmp_path / "comm"
        rc = main(["check", "--n", "16", *DEMO_FLAGS, "--commuting",
                   "--z-grid", "5", "--out-prefix", str(prefix)])
        assert rc == E_OK


class TestPotentialRecover:
    def _potential(self, tmp_path, name="pot", nx=41, ny=41,
                   window=("-0.5", "1.5", "-0.6", "1.4")) -> Path:
        prefix = tmp_path / name
        rc = main(["potential", "--n", "40", *DEMO_FLAGS, "--seed", "21",
                   "--xmin", window[0], "--xmax", window[1],
                   "--ymin", window[2], "--ymax", window[3],
                   "--nx", str(nx), "--ny", str(ny), "--samples", "2",
                   "--out-prefix", str(prefix)])
        assert rc == E_OK
        return prefix

    def test_potential_grid_csv(self, tmp_path):
        prefix = self._potential(tmp_path)
        header, rows = _read_csv(Path(str(prefix) + ".potential.csv"))
        assert header == ["re", "im", "L"]
        assert len(rows) == 41 * 41
        # first row is the (0, 0) node, last is (nx-1, ny-1)
        assert rows[0][:2] == [-0.5, -0.6]
        assert rows[-1][:2] == [1.5, 1.4]
        assert all(math.isfinite(r[2]) for r in rows)
        # the corner eigenvalues at 0 and 1 land on grid nodes here, so the
        # collision shift fires for both corners in each of the 2 samples
        manifest = json.loads(Path(str(prefix) + ".manifest.json").read_text())
        perturbed = manifest["perturbed_nodes"]
        assert len(perturbed) == 4
        originals = {complex(*p["original"]) for p in perturbed}
        assert all(min(abs(o), abs(o - 1)) < 1e-13 for o in originals)
        for p in perturbed:
            assert complex(*p["used"]) != complex(*p["original"])

    def test_recover_roundtrip(self, tmp_path):
        prefix = self._potential(tmp_path)
        out = tmp_path / "meas"
        rc = main(["recover", "--in-prefix", str(prefix), "--out-prefix", str(out)])
        assert rc == E_OK
        path = Path(str(out) + ".measure.csv")
        header, rows = _read_csv(path)
        assert header == ["re", "im", "mass"]
        assert len(rows) == 39 * 39
        footer = path.read_text().splitlines()[-1]
        assert footer.startswith("# raw_total=")
        raw_total = float(footer.split("raw_total=")[1].split()[0])
        # n=40 eigenvalues inside a window this coarse still integrate to ~1
        assert raw_total == pytest.approx(1.0, abs=0.1)

    def test_recover_requires_square_cells(self, tmp_path):
        prefix = self._potential(tmp_path, name="rect", nx=41, ny=21)
        rc = main(["recover", "--in-prefix", str(prefix), "--out-prefix",
                   str(tmp_path / "m2")])
        assert rc == E_USAGE

    def test_recover_rejects_wrong_manifest(self, tmp_path):
        prefix = _sample(tmp_path, "esdrun")
        rc = main(["recover", "--in-prefix", str(prefix), "--out-prefix",
                   str(tmp_path / "m3")])
        assert rc == E_USAGE

    def test_recover_missing_input(self, tmp_path):
        rc = main(["recover", "--in-prefix", str(tmp_path / "nope"),
                   "--out-prefix", str(tmp_path / "m4")])
        assert rc == E_USAGE


class TestConverge:
    def test_small_schedule(self, tmp_path):
        prefix = tmp_path / "conv"
        rc = main(["converge", *DEMO_FLAGS, "--schedule", "24,48",
                   "--samples", "2", "--seed", "17", "--out-prefix", str(prefix)])
        assert rc == E_OK
        report = json.loads(Path(str(prefix) + ".converge.json").read_text())
        assert report["n_schedule"] == [24, 48]
        assert report["reference_n"] == 48
        assert report["distances"][1] == 0.0
        assert report["distances"][0] > 0.0
        assert max(report["support_devs"]) <= 1e-8
        assert max(report["corner_mass_errors"]) <= 1e-9

    def test_bad_schedule_is_usage_error(self, tmp_path):
        rc = main(["converge", *DEMO_FLAGS, "--schedule", "48,24",
                   "--out-prefix", str(tmp_path / "x")])
        assert rc == E_USAGE


class TestReplay:
    def test_replay_sample_bytes(self, tmp_path):
        prefix = _sample(tmp_path, "orig", seed=42)
        rc = main(["replay", "--manifest", str(prefix) + ".manifest.json"])
        assert rc == E_OK
        replay = Path(str(prefix) + ".replay.esd.csv")
        assert replay.read_bytes() == Path(str(prefix) + ".esd.csv").read_bytes()

    def test_replay_to_explicit_prefix(self, tmp_path):
        prefix = _sample(tmp_path, "orig2", seed=7)
        out = tmp_path / "copy"
        rc = main(["replay", "--manifest", str(prefix) + ".manifest.json",
                   "--out-prefix", str(out)])
        assert rc == E_OK
        assert Path(str(out) + ".esd.csv").read_bytes() == Path(
            str(prefix) + ".esd.csv"
        ).read_bytes()

    def test_replay_check_and_converge(self, tmp_path, capsys):
        chk = tmp_path / "chk"
        assert main(["check", "--n", "40", *DEMO_FLAGS, "--z-grid", "5",
                     "--out-prefix", str(chk)]) == E_OK
        assert main(["replay", "--manifest", str(chk) + ".manifest.json"]) == E_OK
        a = json.loads(Path(str(chk) + ".check.json").read_text())
        b = json.loads(Path(str(chk) + ".replay.check.json").read_text())
        assert a == b

        conv = tmp_path / "conv"
        assert main(["converge", *DEMO_FLAGS, "--schedule", "16,32",
                     "--samples", "1", "--out-prefix", str(conv)]) == E_OK
        assert main(["replay", "--manifest", str(conv) + ".manifest.json"]) == E_OK
        assert Path(str(conv) + ".converge.json").read_bytes() == Path(
            str(conv) + ".replay.converge.json"
        ).read_bytes()

    def test_replay_unknown_manifest(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"command": "explode", "params": {}}))
        assert main(["replay", "--manifest", str(bad)]) == E_USAGE
        assert main(["replay", "--manifest", str(tmp_path / "missing.json")]) == E_USAGE


class TestThreadsEnv:
    def test_potential_bytes_independent_of_threads(self, tmp_path, monkeypatch):
        def run(name: str) -> bytes:
            prefix = tmp_path / name
            rc = main(["potential", "--n", "30", *DEMO_FLAGS, "--seed", "8",
                       "--xmin", "-0.5", "--xmax", "1.5",
                       "--ymin", "-0.5", "--ymax", "1.5",
                       "--nx", "33", "--ny", "33", "--samples", "1",
                       "--out-prefix", str(prefix)])
            assert rc == E_OK
            return Path(str(prefix) + ".potential.csv").read_bytes()

        monkeypatch.setenv("PROJSUM_THREADS", "1")
        serial = run("t1")
        monkeypatch.setenv("PROJSUM_THREADS", "4")
        threaded = run("t4")
        assert serial == threaded


class TestUsageErrors:
    def test_unknown_command(self):
        assert main(["frobnicate"]) == E_USAGE

    def test_missing_required_flag(self):
        assert main(["sample", "--n", "10"]) == E_USAGE

    def test_invalid_dimension(self, tmp_path):
        assert main(["sample", "--n", "0", *DEMO_FLAGS,
                     "--out-prefix", str(tmp_path / "z")]) == E_USAGE

    def test_degenerate_law(self, tmp_path):
        rc = main(["check", "--n", "10",
                   "--a", "0.5", "--alpha", "0.3", "--alpha-prime", "0.3",
                   "--b", "0.875", "--beta", "0", "--beta-prime", "0.8",
                   "--out-prefix", str(tmp_path / "z")])
        assert rc == E_USAGE

    def test_version_exits_zero(self, capsys):
        assert main(["--version"]) == E_OK
        assert "projsum" in capsys.readouterr().out
