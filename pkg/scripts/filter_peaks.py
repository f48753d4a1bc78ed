"""Compare simulated error-filter peaks with the analytic ZX/IX predictions.

    python scripts/filter_peaks.py [--g 1.0] [--detuning 45] [--pairs 50]
"""

import argparse

import numpy as np

from dualdrag.analytics import predict_peaks
from dualdrag.model import detuning_report
from dualdrag.protocols import Pipeline, Setup, calibrate_setup, peak_times, run_error_filter
from dualdrag.units import to_mhz


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--g", type=float, default=1.0, help="coupling, MHz")
    parser.add_argument("--detuning", type=float, default=45.0, help="spectator detuning, MHz")
    parser.add_argument("--pairs", type=int, default=50)
    parser.add_argument("--drag", default="leakage_only")
    parser.add_argument("--tau-stop", type=float, default=50.0)
    args = parser.parse_args()
    setup = Setup.two_mode(g_mhz=args.g, detuning_mhz=args.detuning)
    driven, cal, _ = calibrate_setup(setup, Pipeline(drag=args.drag))
    tau = np.arange(0.0, args.tau_stop + 1e-9, 0.25)
    res = run_error_filter(driven, cal, setup.spectator, args.pairs, tau)
    d0 = detuning_report(setup.system, setup.target, setup.spectator)["dressed"]
    print(f"dressed detuning {to_mhz(d0):.4f} MHz, VZ phase {cal.vz_phase:.4f} rad")
    print("found (ns):", np.round(peak_times(res, rel_height=0.1), 3).tolist())
    for kind in ("ZX", "IX"):
        pred = predict_peaks(kind, d0, 2 * cal.t_g, tau[-1], 2 * cal.vz_phase)
        print(f"predicted {kind} (ns):", np.round(pred, 3).tolist())
    print(f"max spectator P_e {res.p_e_spectator.max():.4g}, max target leakage {res.p_leak_target.max():.3g}")


if __name__ == "__main__":
    main()
