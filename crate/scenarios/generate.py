"""Regenerates the shipped scenario files.

The TOML files are the source of truth at run time; this script only records
how their waypoints were laid out. Run from the repository root:

    python3 scenarios/generate.py
"""

import math
from pathlib import Path

OUT = Path(__file__).resolve().parent

CAR = [4.5, 1.8, 1.5]
PEDESTRIAN = [0.5, 0.5, 1.8]


def fmt(v):
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0.0" if s in ("-0", "") else (s if "." in s else s + ".0")


def waypoints(rows):
    body = ",\n".join(f"    [{', '.join(fmt(x) for x in r)}]" for r in rows)
    return f"waypoints = [\n{body},\n]"


def actor(id_, kind, size, rows, note):
    return "\n".join(
        [
            f"# {note}",
            "[[actors]]",
            f"id = {id_}",
            f'kind = "{kind}"',
            f"size = [{', '.join(fmt(s) for s in size)}]",
            waypoints(rows),
            "",
        ]
    )


def path_samples(segments, speed, t0, ds=1.0):
    """Constant-speed samples along straight and arc segments.

    A segment is ("line", (x0, y0), (x1, y1)) or
    ("arc", (cx, cy), r, a0_deg, a1_deg).
    """
    rows = []
    t = t0
    for seg in segments:
        if seg[0] == "line":
            (x0, y0), (x1, y1) = seg[1], seg[2]
            length = math.hypot(x1 - x0, y1 - y0)
            yaw = math.degrees(math.atan2(y1 - y0, x1 - x0))
            n = max(1, round(length / (ds * 10)))
            for i in range(n + 1):
                if rows and i == 0:
                    continue
                f = i / n
                rows.append([t + f * length / speed, x0 + f * (x1 - x0), y0 + f * (y1 - y0), yaw])
            t += length / speed
        else:
            _, (cx, cy), r, a0, a1 = seg
            sweep = math.radians(a1 - a0)
            length = abs(sweep) * r
            n = max(2, round(length / ds))
            for i in range(n + 1):
                if rows and i == 0:
                    continue
                a = math.radians(a0) + sweep * i / n
                yaw = math.degrees(a + math.copysign(math.pi / 2, sweep))
                rows.append([t + length * i / n / speed, cx + r * math.cos(a), cy + r * math.sin(a), yaw])
            t += length / speed
    return rows


def unwrap(rows):
    """Keeps successive yaw samples within 180 degrees of each other."""
    out = []
    prev = None
    for t, x, y, yaw in rows:
        if prev is not None:
            while yaw - prev > 180:
                yaw -= 360
            while yaw - prev < -180:
                yaw += 360
        out.append([t, x, y, yaw])
        prev = yaw
    return out


def curve_range():
    v_ego, v_target = 6.0, 6.0
    ego_start_y = -CURVE["ego_back"]
    ego = path_samples(
        [
            ("line", (1.75, ego_start_y), (1.75, 0.0)),
            ("arc", (20.0, 0.0), 18.25, 180.0, 90.0),
            ("line", (20.0, 18.25), (140.0, 18.25)),
        ],
        v_ego,
        0.0,
    )
    target = path_samples(
        [
            ("line", (CURVE["target_start_x"], 21.75), (20.0, 21.75)),
            ("arc", (20.0, 0.0), 21.75, 90.0, 180.0),
            ("line", (-1.75, 0.0), (-1.75, -120.0)),
        ],
        v_target,
        0.0,
    )
    header = f"""# Curve road: the ego enters a left-hand bend while an oncoming car
# approaches from the far side. The roadside lidar inside the bend covers
# 40 m and sees the oncoming car well before the 20 m vehicle lidar does.
name = "curve_range"
description = "Oncoming car around a bend; roadside lidar extends the ego's sensing range."
tick_period_ms = 100
duration_ticks = 200
seed = 1
ego = 1
target = 2

[vehicle]
sensor_id = 1
mount = [0.0, 0.0, 2.0]

[vehicle.lidar]
max_range = 20.0

[vehicle.gnss]
noise_sigma = 0.02

[roadside]
sensor_id = 100
position = [{fmt(CURVE['road_x'])}, {fmt(CURVE['road_y'])}, 3.0]
cadence = 1

[roadside.lidar]
max_range = 40.0
elevation_min = -0.35
elevation_max = 0.05

"""
    body = actor(1, "car", CAR, unwrap(ego), "Ego, 6 m/s: north, then the bend, then east.")
    body += "\n" + actor(2, "car", CAR, unwrap(target), "Oncoming car, 6 m/s: west, then the bend, then south.")
    body += "\n" + actor(
        3, "static_obstacle", [12.0, 8.0, 6.0], [[0.0, 34.0, 5.0, 0.0]], "Building inside the bend."
    )
    return header + body


def blind_area():
    v = 30.0 / 3.6
    t_s = BLIND["t_spawn"]
    forward, right = BLIND["ped_forward"], BLIND["ped_right"]
    # Ego center at the crossing moment sits `forward` behind the crosswalk.
    ego_x_spawn = -forward
    ego_x0 = ego_x_spawn - v * t_s
    ego_end = ego_x0 + v * 12.0
    bus_front = ego_x_spawn + BLIND["bus_front_ahead"]
    bus_len = BLIND["bus_length"]
    bus_center = (bus_front - bus_len / 2.0, -(1.5 + 1.25))
    bearing = math.atan2(right, forward)
    u = v * math.tan(bearing) * BLIND["ped_speed_scale"]
    run_time = (right + 6.0) / u
    header = f"""# Blind area: a stopped bus on the ego's right hides a pedestrian who runs
# onto the zebra crossing in front of it. The roadside lidar on the far
# corner of the crossing sees the pedestrian the whole time.
name = "blind_area"
description = "Pedestrian hidden by a stopped bus; roadside lidar fills the blind area."
tick_period_ms = 100
duration_ticks = 60
seed = 1
ego = 1
target = 2

[vehicle]
sensor_id = 1
mount = [0.0, 0.0, 2.0]

[vehicle.lidar]
max_range = 20.0

[vehicle.gnss]
noise_sigma = 0.02

[roadside]
sensor_id = 100
position = [6.0, -8.0, 3.0]
cadence = 1

[roadside.lidar]
max_range = 40.0

# Measured when the pedestrian starts to cross.
[occlusion]
blocker = 3
at = {fmt(t_s)}

"""
    body = actor(1, "car", CAR, [[0.0, ego_x0, 0.0, 0.0], [12.0, ego_end, 0.0, 0.0]], "Ego at 30 km/h along +x.")
    body += "\n" + actor(
        2,
        "pedestrian",
        PEDESTRIAN,
        [[0.0, 0.0, -right, 90.0], [t_s, 0.0, -right, 90.0], [t_s + run_time, 0.0, 6.0, 90.0]],
        f"Pedestrian waits at the curb, then runs across at {u:.2f} m/s.",
    )
    body += "\n" + actor(
        3, "car", [bus_len, 2.5, 3.2], [[0.0, bus_center[0], bus_center[1], 0.0]], "Bus stopped before the crossing."
    )
    body += "\n" + actor(
        4, "static_obstacle", [14.0, 10.0, 8.0], [[0.0, 18.0, -18.0, 0.0]], "Corner building behind the roadside pole."
    )
    return header + body


def accuracy():
    v = 8.0
    target = [[0.0, -24.0, 0.0, 0.0], [6.0, -24.0 + 6.0 * v, 0.0, 0.0]]
    ego = [[0.0, -24.0 - ACC["behind"], ACC["lateral"], 0.0], [6.0, -24.0 - ACC["behind"] + 6.0 * v, ACC["lateral"], 0.0]]
    header = f"""# Accuracy: the ego follows a car in the next lane while both pass a
# roadside lidar. The ego sees the car's rear and left side, the roadside
# sees its front and right side; fusion combines the two partial views. The
# pole carries a denser unit (0.1 deg, 32 rings) than the vehicle.
name = "accuracy"
description = "Boundary overlap of vehicle, roadside and fused detections of one car."
tick_period_ms = 100
duration_ticks = 50
seed = 1
ego = 1
target = 2

[vehicle]
sensor_id = 1
mount = [0.0, 0.0, 2.0]

[vehicle.lidar]
max_range = 20.0

[vehicle.gnss]
noise_sigma = 0.02

[roadside]
sensor_id = 100
position = [{fmt(ACC['road_x'])}, {fmt(ACC['road_y'])}, 3.0]
cadence = 1

[roadside.lidar]
max_range = 40.0
horizontal_resolution = {ACC['road_res']}
channels = {ACC['road_channels']}

"""
    body = actor(1, "car", CAR, ego, "Ego, 8 m/s, one lane to the left.")
    body += "\n" + actor(2, "car", CAR, target, "Target car, 8 m/s along +x.")
    return header + body


CURVE = {"ego_back": 35.2, "target_start_x": 110.0, "road_x": 14.0, "road_y": 6.0}
BLIND = {"t_spawn": 3.0, "ped_forward": 16.5, "ped_right": 9.5, "bus_front_ahead": 8.5, "bus_length": 12.6, "ped_speed_scale": 1.0}
ACC = {"behind": 8.0, "lateral": 3.5, "road_x": 4.0, "road_y": -7.0, "road_res": 0.00175, "road_channels": 32}


if __name__ == "__main__":
    for name, build in [("curve_range", curve_range), ("blind_area", blind_area), ("accuracy", accuracy)]:
        (OUT / f"{name}.toml").write_text(build())
        print(f"wrote {name}.toml")
