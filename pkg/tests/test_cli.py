import json
import math

import pytest

from capalink import scenario
from capalink.cli import main
from capalink.scenario import scene_defaults, scene_to_dict


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


class TestGainCommand:
    def test_oracle_gap_small(self, capsys):
        code, out = run(capsys, "gain", "--oracle")
        assert code == 0
        rep = json.loads(out)
        assert rep["gap_g1"] < 1e-6
        assert rep["gap_g2"] < 1e-6

    def test_spda_close_to_planar(self, capsys):
        code, out = run(capsys, "gain", "--aperture", "spda", "--occupation", "1.0")
        assert code == 0
        spda = json.loads(out)
        code, out = run(capsys, "gain", "--aperture", "planar")
        planar = json.loads(out)
        assert spda["g1"] == pytest.approx(planar["g1"], rel=0.02)
        assert spda["g2"] == pytest.approx(planar["g2"], rel=0.02)

    def test_single_user_omits_rho(self, capsys, tmp_path):
        cfg = scene_to_dict(scene_defaults())
        cfg["users"] = cfg["users"][:1]
        del cfg["downlink_sum_snr_db"]
        path = tmp_path / "single.json"
        path.write_text(json.dumps(cfg))
        code, out = run(capsys, "gain", "--config", str(path))
        assert code == 0
        rep = json.loads(out)
        assert "rho_abs2" not in rep and "g2" not in rep


class TestCapacityCommand:
    def test_zf_dominated(self, capsys):
        _, out = run(capsys, "capacity", "--link", "ul", "--scheme", "capacity")
        cap = json.loads(out)["sum_rate"]
        _, out = run(capsys, "capacity", "--link", "ul", "--scheme", "zf")
        zf = json.loads(out)["sum_rate"]
        assert zf <= cap + 1e-12

    def test_downlink_rates_sum_to_capacity(self, capsys):
        code, out = run(capsys, "capacity", "--link", "dl", "--dual-trace")
        assert code == 0
        rep = json.loads(out)
        assert sum(rep["rates"]) == pytest.approx(rep["sum_rate"], abs=1e-12)
        assert "dual_trace" in rep

    def test_single_user_closed_form(self, capsys, tmp_path):
        cfg = scene_to_dict(scene_defaults())
        cfg["users"] = cfg["users"][:1]
        del cfg["downlink_sum_snr_db"]
        path = tmp_path / "single.json"
        path.write_text(json.dumps(cfg))
        code, out = run(capsys, "capacity", "--config", str(path))
        assert code == 0
        rep = json.loads(out)
        s = scenario.scene_from_dict(cfg)
        g = scenario.single_user_gain(s, 0)
        assert rep["capacity"] == pytest.approx(math.log2(1 + 1e3 * g))


class TestRegionCommand:
    def test_uplink_pentagon_five_vertices(self, capsys):
        code, out = run(capsys, "region", "--link", "ul")
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0] == "R1,R2"
        assert len(lines) - 1 == 5

    def test_downlink_hull_contains_endpoints(self, capsys):
        code, out = run(capsys, "region", "--link", "dl", "--splits", "41")
        assert code == 0
        rows = [tuple(map(float, ln.split(","))) for ln in out.strip().splitlines()[1:]]
        r1_max = max(r[0] for r in rows)
        r2_max = max(r[1] for r in rows)
        assert any(abs(r[0] - r1_max) < 1e-9 and r[1] == 0.0 for r in rows)
        assert any(r[0] == 0.0 and abs(r[1] - r2_max) < 1e-9 for r in rows)

    def test_area_nondecreasing_in_aperture(self, capsys, tmp_path):
        areas = []
        for side in (0.25, 0.5, 1.0):
            cfg = scene_to_dict(scene_defaults())
            cfg["aperture"]["length_x"] = side
            cfg["aperture"]["length_z"] = side
            path = tmp_path / f"s{side}.json"
            path.write_text(json.dumps(cfg))
            _, out = run(capsys, "region", "--link", "ul", "--config", str(path))
            rows = [tuple(map(float, ln.split(","))) for ln in out.strip().splitlines()[1:]]
            poly_area = 0.0
            for i in range(len(rows)):
                x0, y0 = rows[i]
                x1, y1 = rows[(i + 1) % len(rows)]
                poly_area += x0 * y1 - x1 * y0
            areas.append(poly_area / 2)
        assert areas[0] <= areas[1] <= areas[2]


class TestSweepCommand:
    def test_csv_shape_and_header(self, capsys):
        code, out = run(
            capsys, "sweep", "--param", "aperture_area",
            "--start", "0.25", "--stop", "4.0", "--steps", "3",
        )
        assert code == 0
        lines = out.strip().splitlines()
        assert lines[0].split(",")[0] == "aperture_area"
        assert len(lines) == 4
        assert all(len(ln.split(",")) == len(lines[0].split(",")) for ln in lines[1:])

    def test_occupation_sweep_monotone_and_matches_capa(self, capsys):
        code, out = run(
            capsys, "sweep", "--param", "occupation",
            "--start", "0.1", "--stop", "1.0", "--steps", "10",
        )
        assert code == 0
        lines = out.strip().splitlines()
        cols = lines[0].split(",")
        c_ul = [float(ln.split(",")[cols.index("C_ul")]) for ln in lines[1:]]
        assert all(b >= a for a, b in zip(c_ul, c_ul[1:]))
        _, out = run(capsys, "capacity", "--link", "ul")
        capa = json.loads(out)["sum_rate"]
        assert c_ul[-1] == pytest.approx(capa, rel=0.02)

    def test_large_aperture_approaches_asymptote(self, capsys):
        code, out = run(
            capsys, "sweep", "--param", "aperture_area",
            "--start", "1e6", "--stop", "1e6", "--steps", "1",
        )
        assert code == 0
        line = out.strip().splitlines()[1].split(",")
        cols = out.strip().splitlines()[0].split(",")
        c_ul = float(line[cols.index("C_ul")])
        asy = float(line[cols.index("asy_ul")])
        assert abs(c_ul - asy) / asy < 0.005


class TestVerifyCommand:
    def test_all_suites_pass(self, capsys):
        code, out = run(capsys, "verify", "--suite", "all", "--seed", "0")
        assert code == 0
        rep = json.loads(out)
        assert rep["passed"]
        assert all(c["passed"] for c in rep["checks"])

    def test_duality_suite(self, capsys):
        code, out = run(capsys, "verify", "--suite", "duality", "--seed", "42")
        assert code == 0
        rep = json.loads(out)
        names = {c["name"] for c in rep["checks"]}
        assert "duality-power-recovery" in names


class TestDeterminismAndExitCodes:
    def test_byte_identical_reruns(self, tmp_path):
        out1 = tmp_path / "a.csv"
        out2 = tmp_path / "b.csv"
        argv = ["region", "--link", "dl", "--splits", "51", "--seed", "7"]
        assert main(argv + ["--output", str(out1)]) == 0
        assert main(argv + ["--output", str(out2)]) == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_manifest_written(self, tmp_path):
        out = tmp_path / "r.csv"
        man = tmp_path / "m.json"
        code = main([
            "region", "--link", "ul", "--output", str(out), "--manifest", str(man)
        ])
        assert code == 0
        manifest = json.loads(man.read_text())
        assert manifest["command"] == "region"
        assert str(out) in manifest["outputs"]

    def test_invalid_config_exits_one(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"wavelength": 0.125, "users": [], "aperture": {}}))
        assert main(["gain", "--config", str(path)]) == 1

    def test_failed_verification_exits_two(self, capsys, monkeypatch):
        from capalink import cli

        monkeypatch.setattr(
            cli, "_verify_duality", lambda scene, seed: [cli._check("forced", 1.0, 0.5)]
        )
        assert main(["verify", "--suite", "duality"]) == 2

    def test_non_convergence_exits_three(self, capsys, monkeypatch):
        from capalink import channel, cli
        from capalink.numerics import NonConvergenceError

        def blow_up(*a, **k):
            raise NonConvergenceError("forced")

        monkeypatch.setattr(channel, "gain_planar_oracle", blow_up)
        assert main(["gain", "--oracle"]) == 3

    def test_full_precision_formatting(self, capsys):
        _, out = run(capsys, "region", "--link", "ul")
        value = out.strip().splitlines()[2].split(",")[0]
        mantissa = value.split("e")[0]
        assert len(mantissa.split(".")[1]) == 16
