#!/usr/bin/env python3
"""Run the dissipation experiments end to end and print their headline numbers.

Covers the viscosity-uniform decay run, the shell-size sweep, and the
correlated-velocity homogenization comparison. Use --smoke for a fast pass;
full scale takes tens of minutes.
"""

import argparse
from pathlib import Path

from shellflow.experiments import build_config, run_experiment


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--smoke", action="store_true")
    parser.add_argument("--out", type=Path, default=Path("out"))
    args = parser.parse_args()
    preset = "smoke" if args.smoke else "full"

    summary = run_experiment(build_config("transport-dissipation", preset),
                             args.out / "transport-dissipation")
    print("viscosity-uniform decay (white driver, staged shells):")
    for row in summary["per_nu"]:
        print(f"  nu={row['nu']:<8g} dissipated {row['dissipated_fraction']:.4f}  "
              f"energy defect {row['energy_defect']:.2e}")
    print(f"  spread across nu: {summary['spread']:.4f}")

    summary = run_experiment(build_config("hm1-scaling", preset), args.out / "hm1-scaling")
    print("\nshell-size sweep (terminal energy and windowed low-mode H^-1 sup):")
    for row in summary["per_shell"]:
        print(f"  kappa={row['kappa']:<5} terminal {row['terminal_mean_l2sq']:.5f}  "
              f"sup {row['window_sup_low_hm1sq']:.4e}")
    print(f"  log-log slope of sup vs kappa: {summary['loglog_slope_sup_vs_kappa']:.3f}")

    summary = run_experiment(build_config("ou-homogenization", preset),
                             args.out / "ou-homogenization")
    print("\ncorrelated-velocity terminal energies vs the white-driver reference "
          f"({summary['reference_terminal_mean_l2sq']:.5f}):")
    for row in summary["per_eps"]:
        print(f"  eps={row['eps']:<8g} terminal {row['terminal_mean_l2sq']:.5f}  "
              f"gap {row['gap_to_reference']:.2e}")


if __name__ == "__main__":
    main()
