#!/usr/bin/env python3
"""
Confinement of a wave packet to a circle as the trap stiffens.

A packet starts in the transverse ground state of the confining potential
lambda^4 W around the unit circle.  For growing lambda we evolve it in the
plane and watch two things: the mass that leaks beyond a fixed distance
epsilon from the curve, and the gap to the same evolution with a Dirichlet
wall at distance delta.  Both shrink as lambda grows.

Runs in a few seconds; set CONFINED_QDYN_THREADS to bound the workers.
"""

import tempfile

from confined_qdyn.harness import parse_config, run_e1

with tempfile.TemporaryDirectory() as out:
    cfg = parse_config(
        {
            "experiment": "e1",
            "lambdas": "2, 3, 4",
            "tube.delta": "0.5",
            "tube.epsilon": "0.3",
            "T": "0.25",
            "output_dir": out,
        }
    )
    manifest = run_e1(cfg)

print(f"{'lambda':>7s} {'sup leaked mass':>16s} {'sup Dirichlet gap':>18s} {'grid':>6s}")
for lam in cfg.lambdas:
    key = f"{lam:g}"
    print(
        f"{lam:7g} {manifest.sup_values['cutoff_mass'][key]:16.4e} "
        f"{manifest.sup_values['dirichlet_error'][key]:18.4e} "
        f"{manifest.per_lambda[key]['grid_count']:6d}"
    )

for name, rate in manifest.rates.items():
    print(f"log-log slope of {name}: {rate['slope']:.3f}")
