#!/usr/bin/env python3
"""Compute the composite detection score for a few result rows.

The score blends mAP (half the weight) with three true-positive error
terms, each clamped at 1 and flipped so that smaller error means a
bigger contribution.  The rows below are representative numbers for a
camera-only detector with and without pooled depth features.

Run:  python3 demos/06_detection_scores.py
"""

import pastdepth as pd

ROWS = [
    ("camera only",   0.313, pd.TPMetrics(ate=0.605, ase=0.271, aoe=0.216)),
    ("+ depth feats", 0.370, pd.TPMetrics(ate=0.541, ase=0.264, aoe=0.125)),
]


def main():
    print(f"{'config':14s} {'mAP':>6s} {'ATE':>6s} {'ASE':>6s} {'AOE':>6s} {'score':>7s}")
    for name, m_ap, tp in ROWS:
        ds = pd.detection_score(m_ap, tp)
        print(f"{name:14s} {m_ap:6.3f} {tp.ate:6.3f} {tp.ase:6.3f} {tp.aoe:6.3f} {ds:7.4f}")

    base = pd.detection_score(ROWS[0][1], ROWS[0][2])
    best = pd.detection_score(ROWS[1][1], ROWS[1][2])
    print(f"\ndepth features are worth {best - base:+.4f} score points here")

    # Errors past 1.0 are clamped: a hopeless ATE of 3 m counts exactly
    # like an ATE of 1 m.
    clamped = pd.detection_score(0.313, pd.TPMetrics(ate=3.0, ase=0.271, aoe=0.216))
    floor = pd.detection_score(0.313, pd.TPMetrics(ate=1.0, ase=0.271, aoe=0.216))
    print(f"clamping: score(ATE=3.0) == score(ATE=1.0) -> {clamped == floor}")


if __name__ == "__main__":
    main()
