"""Acceptance gate: runs the validation suite and both sweeps at their stated settings.

Each criterion prints one PASS/FAIL line in the terminal summary.  The
sweeps take several minutes; deselect with ``-m "not slow"``.
"""

from dataclasses import replace
from pathlib import Path

import pytest

from confined_qdyn.harness import fit_directory, load_config, run_e1, run_e2, run_validate

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

pytestmark = pytest.mark.slow


def _fmt(values):
    return "[" + ", ".join(f"{v:.4g}" for v in values) + "]"


@pytest.fixture(scope="module")
def validation():
    return run_validate()


@pytest.fixture(scope="module")
def e1(tmp_path_factory):
    cfg = load_config(CONFIGS / "e1.cfg")
    return run_e1(replace(cfg, output_dir=str(tmp_path_factory.mktemp("e1"))))


@pytest.fixture(scope="module")
def e2(tmp_path_factory):
    cfg = load_config(CONFIGS / "e2.cfg")
    return run_e2(replace(cfg, output_dir=str(tmp_path_factory.mktemp("e2"))))


def test_a1_oracle_gate(validation, acceptance_line):
    v = validation.verdicts["A1"]
    runtime = next(r["measured"] for r in validation.oracle_reports if r["name"] == "runtime_seconds")
    failing = [k for k, ok in v["checks"].items() if not ok]
    acceptance_line("A1", v["passed"], f"oracle checks {len(v['checks'])}, failing {failing}, runtime {runtime:.2f}s")
    assert v["passed"]


def test_a2_propagator_properties(validation, e1, e2, acceptance_line):
    verdicts = [validation.verdicts["A2"], e1.verdicts["A2"], e2.verdicts["A2"]]
    worst = {k: max(v.get(k, 0.0) for v in verdicts) for k in ("norm_drift", "energy_drift", "reversal_error")}
    ratio = validation.verdicts["A2"]["dt_halving_ratio"]
    passed = all(v["passed"] for v in verdicts)
    acceptance_line(
        "A2", passed,
        f"norm drift {worst['norm_drift']:.2e}, energy drift {worst['energy_drift']:.2e}, "
        f"reversal {worst['reversal_error']:.2e}, dt-halving ratio {ratio:.3f}",
    )
    assert passed


def test_a3_confinement_decay(e1, acceptance_line):
    v = e1.verdicts["A3"]
    acceptance_line(
        "A3", v["passed"],
        f"sup cutoff mass {_fmt(v['sup_values'])}, ratio {v['ratio']:.4g} <= {v['threshold']:.4g}, "
        f"slope {e1.rates['cutoff_mass']['slope']:.3f}, runtime {v['runtime_seconds']:.0f}s",
    )
    assert v["passed"]


def test_a4_dirichlet_comparison(e1, acceptance_line):
    v = e1.verdicts["A4"]
    acceptance_line(
        "A4", v["passed"],
        f"sup error {_fmt(v['sup_values'])}, ratio {v['ratio']:.4g} <= {v['threshold']:.4g}, "
        f"slope {e1.rates['dirichlet_error']['slope']:.3f}",
    )
    assert v["passed"]


def test_a5_effective_limit(e2, acceptance_line):
    v = e2.verdicts["A5"]
    acceptance_line(
        "A5", v["passed"],
        f"sup error {_fmt(v['sup_values'])}, ratio {v['ratio']:.4g} <= {v['threshold']:.4g}, "
        f"slope {e2.rates['err']['slope']:.3f}, runtime {v['runtime_seconds']:.0f}s",
    )
    assert v["passed"]


def test_a6_energy_transfer(e2, acceptance_line):
    v = e2.verdicts["A6"]
    acceptance_line(
        "A6", v["passed"],
        f"max q/q0 {_fmt(v['q_growth'])} spread {v['spread']:.3f} < 2, q0 {_fmt(v['q0'])} vs {v['q0_reference']:.4g} "
        f"(max rel err {max(v['q0_rel_err']):.2e})",
    )
    assert v["passed"]


def test_a7_moment_diagnostics(e2, acceptance_line):
    v = e2.verdicts["A7"]
    acceptance_line(
        "A7", v["passed"],
        f"sup y2 spread {v['y2_spread']:.3f}, sup dy spread {v['dy_spread']:.3f}, "
        f"sup dx/lambda {_fmt(v['dx_scaled_sup'])}, F3 tail {v['f3_tail_at_max_lambda']:.2e}; "
        f"(unscaled n2 spread {v['n2_spread']:.1f}, informational)",
    )
    assert v["passed"]


def test_a8_energy_hypothesis(e1, e2, acceptance_line):
    v1, v2 = e1.verdicts["A8"], e2.verdicts["A8"]
    passed = v1["passed"] and v2["passed"]
    acceptance_line(
        "A8", passed,
        f"E1 lambda^2<W> {_fmt(v1['w_scaled_sup'])} <= {v1['bound']:.4g}; "
        f"E2 |L psi0|/lambda^2 {_fmt(v2['l_psi0_scaled'])} <= {v2['bound']:.4g}",
    )
    assert passed


def test_fit_reproduces_manifest(e1, e2):
    for manifest in (e1, e2):
        directory = Path(next(iter(manifest.files.values()))).parent
        _, rates, _ = fit_directory(directory, manifest.config["noise_floor"])
        for name, rate in manifest.rates.items():
            assert rates[name]["slope"] == pytest.approx(rate["slope"], abs=1e-12)
