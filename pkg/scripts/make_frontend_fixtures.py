#!/usr/bin/env python3
"""Produce small—but real—solver outputs used by the frontend test suite,
plus a JSON of reference slope values computed with the solver's own
diagnostics (the figure annotations must agree with these to 1e-9)."""

import json
import warnings
from pathlib import Path

import numpy as np

from heterodimer_ldg import cli, diagnostics as diag

FIXTURES = Path(__file__).resolve().parent.parent / "frontend" / "test" / "fixtures"


def main():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    refs = {}

    cfg = cli.RunConfig(testcase="tc1-h", degree=2, tau=5e-3, final_time=0.02,
                         outdir=str(FIXTURES / "hconv"))
    records = cli.run_testcase1(cfg, sweep="h", mesh_sizes=(2, 4, 8))
    (FIXTURES / "errors_hconv.csv").write_bytes(
        (FIXTURES / "hconv" / "errors.csv").read_bytes()
    )
    hs = [r.h for r in records]
    for name, attr in (("E_p", "E_p"), ("E_q", "E_q"),
                       ("E_sigp", "E_sigp"), ("E_sigq", "E_sigq")):
        errs = [getattr(r, attr) for r in records]
        refs[f"hconv_slope_{name}"] = diag.least_squares_order(hs, errs)
        refs[f"hconv_order_{name}"] = diag.observed_orders(hs, errs)[-1]

    cfg_p = cli.RunConfig(testcase="tc1-p", nx=2, ny=2, tau=5e-3,
                          final_time=0.02, outdir=str(FIXTURES / "pconv"))
    cli.run_testcase1(cfg_p, sweep="p", degrees=(1, 2, 3, 4))
    (FIXTURES / "errors_pconv.csv").write_bytes(
        (FIXTURES / "pconv" / "errors.csv").read_bytes()
    )

    cfg3 = cli.RunConfig(testcase="tc3", x0=-10, x1=10, y0=0, y1=5, nx=12, ny=3,
                         degree=1, tau=2e-2, final_time=2.0,
                         outdir=str(FIXTURES / "tc3"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cli.run_testcase3(cfg3, kinds=("focus",))
    (FIXTURES / "trajectory_focus.csv").write_bytes(
        (FIXTURES / "tc3" / "trajectory_focus.csv").read_bytes()
    )

    cfg4 = cli.RunConfig(testcase="tc4", x0=-2, x1=2, y0=-2, y1=2, nx=10, ny=10,
                         degree=2, tau=5e-3, final_time=15.0,
                         outdir=str(FIXTURES / "tc4"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        result = cli.run_testcase4(cfg4, variant=2, snapshot_times=(),
                                   stop_on_overshoot=True)
    diag.write_vtk(FIXTURES / "fields_overshoot.vtk", result.state,
                   cli.ProblemCoefficients(0.1, 0.1, 1.0, 0.1,
                                           D=cli.tc4_diffusion(2)))
    refs["overshoot_time"] = result.q_overshoot_time
    refs["overshoot_max_q"] = max(row["max_q"] for row in result.trajectory)

    # synthetic exact-order data for the trivial slope check
    hs = [0.4, 0.2, 0.1]
    with open(FIXTURES / "errors_exact_cubic.csv", "w") as f:
        f.write("h,ell,tau,E_p,E_q,E_sigp,E_sigq\n")
        for h in hs:
            f.write(f"{h},2,0.001,{2.0 * h**3:.16e},{1.5 * h**3:.16e},"
                    f"{h**2:.16e},{0.5 * h**2:.16e}\n")

    (FIXTURES / "reference.json").write_text(json.dumps(refs, indent=2))
    print(f"fixtures written to {FIXTURES}")
    for k, v in refs.items():
        print(f"  {k} = {v}")


if __name__ == "__main__":
    main()
