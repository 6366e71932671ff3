import json

import numpy as np
import pytest

from flowlin.cli import main

SINGLE_PINCH = {
    "n": 2,
    "m": 1,
    "M": [[0, 1]],
    "S": [[["0", "1"]]],
    "C": [[[["0", "0"]]], []],
    "omega": [{"prime_scale": 2, "rational": ["1", "0"]}],
}


def run(args):
    return main(args)


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def test_catalog_list(tmp_path):
    out = tmp_path / "list.json"
    assert run(["catalog", "list", "--out", str(out)]) == 0
    rows = read_json(out)
    names = [r["name"] for r in rows]
    assert "log_radial" in names and "annulus_cubic" in names
    by_name = {r["name"]: r for r in rows}
    assert by_name["annulus_cubic"]["verdict"] == "not_linearizable"


def test_catalog_show(tmp_path):
    out = tmp_path / "show.json"
    assert run(["catalog", "show", "log_radial", "--out", str(out)]) == 0
    meta = read_json(out)
    assert meta["has_exact_embedding"] and meta["has_exact_phase"]
    assert meta["chart"]["kind"] == "polar_annulus"


def test_catalog_show_unknown_system_is_usage_error(tmp_path):
    assert run(["catalog", "show", "nope", "--out", str(tmp_path / "x.json")]) == 2


def test_verify_exact_log_radial(tmp_path):
    out = tmp_path / "verify.json"
    code = run(
        ["verify", "--system", "log_radial", "--embedding", "exact",
         "--samples", "200", "--tmax", "10", "--tol", "1e-6", "--out", str(out)]
    )
    assert code == 0
    report = read_json(out)
    assert all(c["pass"] for c in report["checks"])
    assert all("threshold" in c for c in report["checks"])


def test_verify_built_annulus_is_config_error(tmp_path):
    code = run(["verify", "--system", "annulus_cubic", "--embedding", "built",
                "--out", str(tmp_path / "x.json")])
    assert code == 2


def test_build_topological_and_smooth(tmp_path):
    for mode in ("topological", "smooth"):
        out = tmp_path / f"build_{mode}.json"
        assert run(["build", "--system", "log_radial", "--mode", mode,
                    "--out", str(out)]) == 0
        report = read_json(out)
        assert all(c["pass"] for c in report["checks"])
    smooth = read_json(tmp_path / "build_smooth.json")
    assert smooth["overlap_identity_residual"] <= 1e-7


def test_phase_command(tmp_path):
    out = tmp_path / "phase.json"
    assert run(["phase", "--system", "log_radial", "--x", "2.0,0.3",
                "--schedule", "geometric:1,2,8", "--out", str(out)]) == 0
    report = read_json(out)
    assert report["classification"] == "converged"
    assert len(report["horizons"]) == 8


def test_phase_bad_schedule(tmp_path):
    assert run(["phase", "--system", "log_radial", "--x", "2,0",
                "--schedule", "arithmetic:1,2,8", "--out", str(tmp_path / "x.json")]) == 2


def test_index_command(tmp_path):
    out = tmp_path / "index.json"
    assert run(["index", "--system", "sphere_rotation", "--equilibrium", "0,0,1",
                "--radius", "0.5", "--samples", "256", "--out", str(out)]) == 0
    report = read_json(out)
    assert report["index"] == 1


def test_verdict_command(tmp_path):
    out = tmp_path / "verdict.json"
    assert run(["verdict", "--system", "sphere_rotation", "--out", str(out)]) == 0
    report = read_json(out)
    assert report["conclusion"] == "no_obstruction_found"
    assert run(["verdict", "--system", "saddle_plane",
                "--out", str(tmp_path / "y.json")]) == 2


def test_certify_grant_and_refuse(tmp_path):
    out = tmp_path / "cert.json"
    code = run(["certify", "--system", "quasiperiodic_torus_2",
                "--omega", f"1,{np.sqrt(2):.17g}", "--Q", "50", "--out", str(out)])
    assert code == 0
    assert read_json(out)["conclusion"] == "certified_linearizable"
    code = run(["certify", "--system", "quasiperiodic_torus_2",
                "--omega", "1,2", "--Q", "50", "--out", str(out)])
    assert code == 1  # refusal is a failed check, not a usage error
    code = run(["certify", "--system", "sphere_rotation",
                "--omega", "1,2", "--Q", "50", "--out", str(out)])
    assert code == 2  # dimension mismatch is a configuration problem


def test_pinched_check_and_trajectory(tmp_path):
    spec_path = tmp_path / "pinch.json"
    spec_path.write_text(json.dumps(SINGLE_PINCH))
    out = tmp_path / "pinch_report.json"
    assert run(["pinched", "--spec", str(spec_path), "--check",
                "--samples", "150", "--out", str(out)]) == 0
    assert all(c["pass"] for c in read_json(out)["checks"])

    x0 = tmp_path / "x0.json"
    x0.write_text(json.dumps({"theta": [0.0, 0.5]}))
    csv_out = tmp_path / "orbit.csv"
    assert run(["pinched", "--spec", str(spec_path), "--emit-trajectory", str(x0),
                "--tmax", "5", "--steps", "64", "--out", str(csv_out)]) == 0
    lines = csv_out.read_text().splitlines()
    # 1 + 2 (n + m) columns
    assert lines[0] == "t,x1,x2,x3,x4,x5,x6"
    assert len(lines) == 65


def test_sphere_orbit_latitude_radius(tmp_path):
    out = tmp_path / "sphere.csv"
    z = np.sqrt(0.75)
    assert run(["catalog", "show", "sphere_rotation", "--emit-trajectory",
                "--x", f"{z:.17g},0,0.5", "--tmax", "1", "--steps", "50",
                "--out", str(out)]) == 0
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    np.testing.assert_allclose(np.hypot(data[:, 1], data[:, 2]), z, rtol=1e-12)


def test_edmd_command(tmp_path):
    out = tmp_path / "edmd.json"
    assert run(["edmd", "--system", "quasiperiodic_torus_2", "--dict", "fourier:1",
                "--pairs", "300", "--step", "0.1", "--ridge", "1e-10",
                "--seed", "3", "--out", str(out)]) == 0
    report = read_json(out)
    assert report["holdout_residual"] <= 1e-7
    assert report["spectrum_on_unit_circle_fraction"] == 1.0


def test_edmd_unknown_dictionary(tmp_path):
    assert run(["edmd", "--system", "log_radial", "--dict", "custom:missing",
                "--out", str(tmp_path / "x.json")]) == 2


@pytest.mark.parametrize(
    "args",
    [
        ["catalog", "list"],
        ["verify", "--system", "log_radial", "--samples", "60", "--seed", "5"],
        ["phase", "--system", "log_radial", "--x", "1.5,0.2", "--seed", "1"],
        ["edmd", "--system", "quasiperiodic_torus_2", "--dict", "fourier:1",
         "--pairs", "200", "--seed", "7"],
    ],
)
def test_outputs_bitwise_deterministic(tmp_path, args):
    # identical argv (including --out) run twice must produce identical bytes
    out = tmp_path / "report.json"
    full = args + ["--out", str(out)]
    first_code = run(full)
    first = out.read_bytes()
    second_code = run(full)
    assert (first_code, first) == (second_code, out.read_bytes())


def test_emit_trajectory_requires_state_and_out(tmp_path):
    assert run(["catalog", "show", "sphere_rotation", "--emit-trajectory",
                "--out", str(tmp_path / "x.csv")]) == 2
    assert run(["catalog", "show", "sphere_rotation", "--emit-trajectory",
                "--x", "0,0,1"]) == 2


def test_phase_requires_attractor_model(tmp_path):
    assert run(["phase", "--system", "sphere_rotation", "--x", "0,0,1",
                "--out", str(tmp_path / "x.json")]) == 2


def test_index_unknown_equilibrium(tmp_path):
    assert run(["index", "--system", "sphere_rotation", "--equilibrium", "1,0,0",
                "--out", str(tmp_path / "x.json")]) == 2


def test_timing_flag_adds_wall_time(tmp_path):
    out = tmp_path / "timed.json"
    assert run(["catalog", "list", "--timing", "--out", str(out)]) == 0
    # catalog list has no report wrapper; timing applies to check commands
    out2 = tmp_path / "timed2.json"
    assert run(["verify", "--system", "log_radial", "--samples", "40",
                "--timing", "--out", str(out2)]) == 0
    assert "timing_seconds" in read_json(out2)


def test_help_exits_cleanly():
    assert run(["--help"]) == 0
