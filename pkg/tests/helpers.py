"""Small scenario builders shared by several test modules."""

from mnvchan.scenario import parse_scenario


def line_scenario(speed=0.0, start=20.0, duration=2.0, walls=None, sd_sites=None, heading_deg=0.0):
    """Node 1 parked at the origin, node 2 driving along +x at ``speed``."""
    n = int(duration) + 2
    wp2 = [[float(t), start + speed * t, 0.0] for t in range(n)]
    doc = {
        "schema": 1,
        "geometry": {"walls": walls or [], "sd_sites": sd_sites or []},
        "vehicles": [
            {"id": "rx", "node": 1, "length": 4.0, "width": 1.8, "heading_deg": heading_deg,
             "waypoints": [[0.0, 0.0, 0.0], [float(n - 1), 0.0, 0.0]]},
            {"id": "tx", "node": 2, "length": 4.0, "width": 1.8, "heading_deg": heading_deg, "waypoints": wp2},
        ],
    }
    return parse_scenario(doc)
