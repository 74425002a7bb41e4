#!/usr/bin/env python3
"""
spdevol launcher

Simulates the stochastic heat equation spectrally and estimates its
volatility and curvature from discrete observations.

Examples:
    python3 run_spdevol.py gamma --tol 1e-8
    python3 run_spdevol.py simulate --n 1000 --m 9 --seed 7 -o field.csv
    python3 run_spdevol.py estimate field.csv --params params.json
    python3 run_spdevol.py mc --reps 300 --emit qq.csv,profile.csv
"""

from spdevol.cli import main

if __name__ == "__main__":
    main()
