"""Scenario builders shared by the test modules."""
import textwrap

from windconflict.ensemble_io import CorrelationSpec, WindGrid

# Scenario shared by the end-to-end checks: two aircraft on crossing routes
# inside an 11 x 13 grid, near-miss geometry under a north-easterly mean wind.
SCENARIO_GRID = dict(lat0=24.5, lat1=29.5, n_lat=11, lon0=-19.5, lon1=-13.5, n_lon=13)
SCENARIO_WIND = CorrelationSpec(length_deg=6.0, rho=0.3, sigma_u=2.5, sigma_v=2.5, mean_u=12.0, mean_v=-3.0)
AIRCRAFT_A = "25.3, -18.4", "28.6, -14.6", 230
AIRCRAFT_B = "25.3, -14.6", "28.6, -18.4", 230


def scenario_grid():
    g = SCENARIO_GRID
    return WindGrid.regular(g["lat0"], g["lat1"], g["n_lat"], g["lon0"], g["lon1"], g["n_lon"])


def aircraft_block(name, origin, destination, airspeed, altitude=11000):
    return textwrap.dedent(f"""
        [aircraft {name}]
        origin = {origin}
        destination = {destination}
        airspeed = {airspeed}
        altitude = {altitude}
        """)


def write_config(path, ensembles, aircraft, output_dir="run", **sections):
    """INI text from keyword sections; ``aircraft`` maps id -> (origin, dest, V)."""
    parts = [f"[scenario]\nensembles = {', '.join(ensembles)}\noutput_dir = {output_dir}\n"]
    sections.setdefault("expansion", {"M": 4})
    for name, body in sections.items():
        parts.append(f"[{name}]\n" + "".join(f"{k} = {v}\n" for k, v in body.items()))
    for aid, spec in aircraft.items():
        parts.append(aircraft_block(aid, *spec))
    path.write_text("\n".join(parts))
    return path
