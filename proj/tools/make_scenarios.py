#!/usr/bin/env python3
"""Writes the bundled scenario files into scenarios/."""

import argparse
import json
import math
from pathlib import Path

LANE = 3.5


def comparison():
    return {
        "name": "comparison",
        "seed": 1,
        "max_steps": 600,
        "v_cruise": 10.0,
        "path": {
            "spacing": 0.2,
            "start": [0.0, 0.0],
            "heading": 0.0,
            "segments": [
                {"type": "straight", "length": 30.0},
                {"type": "arc", "radius": 40.0, "angle": math.pi / 2},
                {"type": "straight", "length": 30.0},
                {"type": "arc", "radius": 40.0, "angle": -math.pi / 2},
                {"type": "straight", "length": 40.0},
            ],
        },
        "ego": {"x": 0.0, "y": 0.0, "psi": 0.0, "v": 0.0},
        "features": [
            {"type": "speed_limit", "v_max": 6.0, "zone": [25.0, 75.0, -5.0, 45.0]},
            {"type": "speed_limit", "v_max": 8.0, "zone": [60.0, 130.0, 60.0, 120.0]},
        ],
    }


def traffic_rules():
    return {
        "name": "traffic_rules",
        "seed": 2,
        "max_steps": 600,
        "v_cruise": 10.0,
        "path": {"spacing": 0.2, "start": [0.0, 0.0], "heading": 0.0, "segments": [{"type": "straight", "length": 150.0}]},
        "ego": {"x": 0.0, "y": 0.0, "psi": 0.0, "v": 0.0},
        "features": [
            {"type": "stop_sign", "zone": [28.0, 40.0, -LANE, LANE], "stop_line": [40.0, 0.0]},
            {
                "type": "traffic_light",
                "zone": [84.0, 100.0, -LANE, LANE],
                "stop_line": [100.0, 0.0],
                "phases": [{"color": "red", "duration": 22.0}, {"color": "green", "duration": 30.0}, {"color": "yellow", "duration": 3.0}],
            },
        ],
    }


def lane_grid(lanes, per_lane, spacing, x0, speeds, first_id=1):
    """Vehicles on parallel lanes along +x; the lane at y = 0 is left to the ego."""
    vehicles = []
    vid = first_id
    for k, y in enumerate(lanes):
        v = speeds[k % len(speeds)]
        for j in range(per_lane):
            vehicles.append({"id": vid, "x": x0 + spacing * j + 3.0 * k, "y": y, "psi": 0.0, "v": v})
            vid += 1
    return vehicles


def safety(variant=False):
    lanes = [LANE * k for k in (1, -1, 2, -2, 3, -3, 4, -4)]
    vehicles = [{"id": 0, "x": 80.0, "y": 0.0, "psi": 0.0, "v": 0.0, "behavior": "stationary"}]
    vehicles += lane_grid(lanes, 20, 14.0, -40.0, [6.0, 7.0, 5.0, 8.0])
    del vehicles[-1]
    sc = {
        "name": "safety_mismatch" if variant else "safety",
        "seed": 3,
        "max_steps": 250,
        "v_cruise": 8.0,
        "path": {"spacing": 0.2, "start": [0.0, 0.0], "heading": 0.0, "segments": [{"type": "straight", "length": 200.0}]},
        "ego": {"x": 0.0, "y": 0.0, "psi": 0.0, "v": 0.0},
        "vehicles": vehicles,
    }
    if variant:
        sc["controller"] = {"model_throttle_scale": 1.3}
    return sc


def scalability():
    lanes = [LANE * k for k in (1, -1, 2, -2, 3, -3, 4, -4, 5, -5)]
    vehicles = [{"id": 0, "x": 30.0, "y": 0.0, "psi": 0.0, "v": 10.0}]
    vehicles += lane_grid(lanes, 12, 40.0, -60.0, [9.0, 7.0, 8.0, 10.0, 6.0])
    sc = {
        "name": "scalability",
        "seed": 4,
        "max_steps": 300,
        "v_cruise": 10.0,
        "path": {"spacing": 0.2, "start": [0.0, 0.0], "heading": 0.0, "segments": [{"type": "straight", "length": 250.0}]},
        "ego": {"x": 0.0, "y": 0.0, "psi": 0.0, "v": 0.0},
        "vehicles": vehicles,
        "controller": {"r_near": 40.0},
    }
    return sc


SCENARIOS = {
    "comparison": comparison,
    "traffic_rules": traffic_rules,
    "safety": safety,
    "safety_mismatch": lambda: safety(variant=True),
    "scalability": scalability,
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "scenarios"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, make in SCENARIOS.items():
        (out / f"{name}.json").write_text(json.dumps(make(), indent=2) + "\n")


if __name__ == "__main__":
    main()
