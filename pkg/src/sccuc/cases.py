"""Constructed desk-scale study cases.

Small ring and mesh networks sized so the full solver stack (decomposition,
screening, Monte Carlo evaluation) runs in seconds.  The flagship 3-bus
ring with unit susceptances has hand-checkable shift factors: injecting at
bus 1 against reference bus 3 sends two thirds of the power down the direct
line and one third around the long way.
"""

from __future__ import annotations

import math
from dataclasses import replace

from .grid import CostBlock, Generator, GridCase, Line, StartupBlock, WindFarm


def _gen(
    name: str,
    bus: str,
    pmin: float,
    pmax: float,
    price: float,
    *,
    no_load: float = 0.0,
    reserve_price: float = 2.0,
    tertiary_price: float = 1.0,
    startup: float = 100.0,
    ramp: float | None = None,
    min_up: int = 1,
    min_down: int = 1,
    on: bool = True,
    hours_on: int = 24,
    hours_off: int = 0,
    p0: float | None = None,
    reserve_limit: float | None = None,
) -> Generator:
    """Two cost blocks (cheap base, +25% tail) and two startup blocks."""
    base = 0.6 * pmax
    return Generator(
        name=name,
        bus=bus,
        pmin=pmin,
        pmax=pmax,
        cost_blocks=(CostBlock(price, base), CostBlock(price * 1.25, pmax - base)),
        no_load_cost=no_load,
        reserve_price=reserve_price,
        tertiary_price=tertiary_price,
        startup_blocks=(
            StartupBlock(startup, 1, 2),
            StartupBlock(startup * 1.5, 3, 10),
        ),
        ramp_up=ramp if ramp is not None else pmax,
        ramp_down=ramp if ramp is not None else pmax,
        min_up=min_up,
        min_down=min_down,
        initial_on=on,
        initial_hours_on=hours_on if on else 0,
        initial_hours_off=0 if on else hours_off,
        initial_output=(p0 if p0 is not None else (pmin if on else 0.0)),
        reserve_limit=reserve_limit,
    )


def _ring3_lines(c12: float, c23: float, c13: float) -> tuple[Line, ...]:
    return (
        Line("L12", "b1", "b2", 1.0, c12),
        Line("L23", "b2", "b3", 1.0, c23),
        Line("L13", "b1", "b3", 1.0, c13),
    )


def ring3_case(
    name: str = "ring3",
    horizon: int = 1,
    loads_b3: tuple[float, ...] = (100.0,),
    wind_mu: tuple[float, ...] = (10.0,),
    wind_sigma: tuple[float, ...] = (5.0,),
    caps: tuple[float, float, float] = (80.0, 80.0, 80.0),
    generators: tuple[Generator, ...] | None = None,
    gen_contingencies: tuple[str, ...] = (),
    line_contingencies: tuple[str, ...] = (),
    reserve_limit: float = 100.0,
) -> GridCase:
    """Canonical 3-bus ring, unit susceptances, reference at bus 3."""
    if generators is None:
        generators = (
            _gen("g1", "b1", 10, 120, 10.0),
            _gen("g2", "b3", 5, 120, 40.0),
        )
    return GridCase(
        name=name,
        mva_base=100.0,
        buses=("b1", "b2", "b3"),
        reference_bus="b3",
        lines=_ring3_lines(*caps),
        generators=generators,
        wind_farms=(WindFarm("b1", wind_mu, wind_sigma),),
        loads={"b3": loads_b3},
        reserve_limit=reserve_limit,
        generator_contingencies=gen_contingencies,
        line_contingencies=line_contingencies,
        horizon=horizon,
    )


def scale_line_capacities(case: GridCase, factor: float) -> GridCase:
    """Same case with every line capacity scaled (used for stress studies)."""
    return replace(
        case,
        lines=tuple(replace(ln, capacity=ln.capacity * factor) for ln in case.lines),
    )


def calibration_case() -> GridCase:
    """One hour, one wind bus; the upper flow limit on L23 binds at optimum.

    The cheap unit g1 sits at bus 2 so its output loads L23; the expensive
    unit at the reference bus picks up the remainder.  With reserve prices
    positive, the regulation-reserve rows also bind, so both the line and
    the generator chance constraints are active for calibration studies.
    """
    generators = (
        _gen("g1", "b2", 10, 150, 10.0, reserve_price=2.0),
        _gen("g2", "b3", 5, 80, 50.0, reserve_price=2.0),
    )
    return GridCase(
        name="calibration",
        mva_base=100.0,
        buses=("b1", "b2", "b3"),
        reference_bus="b3",
        lines=_ring3_lines(60.0, 60.0, 80.0),
        generators=generators,
        wind_farms=(WindFarm("b1", (20.0,), (10.0,)),),
        loads={"b3": (120.0,)},
        reserve_limit=100.0,
        generator_contingencies=(),
        line_contingencies=(),
        horizon=1,
    )


def one_binding_contingency_case() -> GridCase:
    """Exactly one post-outage flow limit binds: losing L13 overloads L12.

    Base flows are comfortable, but with L13 out all of g1's output runs
    down the 1-2-3 chain, overloading L12 until the solver shifts output to
    the unit at the load bus.  Wind sits at g1's bus, so the participation
    response cancels the deviation locally and the margins stay clean.
    """
    generators = (
        _gen("g1", "b1", 10, 120, 10.0, p0=90.0),
        _gen("g2", "b3", 5, 120, 40.0),
    )
    return GridCase(
        name="one-binding-contingency",
        mva_base=100.0,
        buses=("b1", "b2", "b3"),
        reference_bus="b3",
        lines=_ring3_lines(55.0, 120.0, 70.0),
        generators=generators,
        wind_farms=(WindFarm("b1", (10.0,), (2.0,)),),
        loads={"b3": (100.0,)},
        reserve_limit=120.0,
        generator_contingencies=(),
        line_contingencies=("L13",),
        horizon=1,
    )


def oracle_suite() -> list[GridCase]:
    """Instances small enough for the monolithic oracle (2-4 hours)."""
    cases: list[GridCase] = []

    cases.append(
        ring3_case(
            name="oracle-ring-a",
            horizon=2,
            loads_b3=(80.0, 95.0),
            wind_mu=(10.0, 12.0),
            wind_sigma=(3.0, 4.0),
            caps=(70.0, 110.0, 70.0),
            generators=(
                _gen("g1", "b1", 10, 100, 12.0),
                _gen("g2", "b2", 5, 90, 30.0),
            ),
            gen_contingencies=("g2",),
            line_contingencies=("L13",),
        )
    )

    cases.append(
        ring3_case(
            name="oracle-ring-b",
            horizon=3,
            loads_b3=(70.0, 90.0, 100.0),
            wind_mu=(8.0, 10.0, 12.0),
            wind_sigma=(2.0, 3.0, 3.0),
            caps=(75.0, 75.0, 75.0),
            generators=(
                _gen("g1", "b1", 10, 90, 11.0, min_up=2, min_down=2),
                _gen("g2", "b2", 5, 70, 28.0),
                _gen("g3", "b3", 5, 60, 55.0, on=False, hours_off=3),
            ),
            gen_contingencies=("g1",),
            line_contingencies=("L12",),
        )
    )

    # Four-bus ring exercises a second topology.
    gens4 = (
        _gen("g1", "b1", 10, 110, 13.0),
        _gen("g2", "b2", 5, 80, 26.0),
        _gen("g3", "b3", 5, 60, 55.0, on=False, hours_off=2),
    )
    cases.append(
        GridCase(
            name="oracle-ring4",
            mva_base=100.0,
            buses=("b1", "b2", "b3", "b4"),
            reference_bus="b4",
            lines=(
                Line("L12", "b1", "b2", 1.0, 70.0),
                Line("L23", "b2", "b3", 1.0, 115.0),
                Line("L34", "b3", "b4", 1.0, 70.0),
                Line("L14", "b1", "b4", 1.0, 70.0),
            ),
            generators=gens4,
            wind_farms=(WindFarm("b4", (8.0, 9.0), (3.0, 3.0)),),
            loads={"b3": (60.0, 70.0), "b4": (30.0, 35.0)},
            reserve_limit=80.0,
            generator_contingencies=("g1",),
            line_contingencies=("L14",),
            horizon=2,
        )
    )

    # Tight headroom plus a weak line: covering g1's outage needs the unit
    # at the load bus, so masters that leave it off draw feasibility cuts.
    cases.append(
        ring3_case(
            name="oracle-feascut",
            horizon=2,
            loads_b3=(90.0, 90.0),
            wind_mu=(5.0, 5.0),
            wind_sigma=(2.0, 2.0),
            caps=(80.0, 62.0, 80.0),
            generators=(
                _gen("g1", "b1", 10, 100, 10.0),
                _gen("g2", "b2", 5, 75, 25.0),
                _gen("g3", "b3", 5, 40, 60.0),
            ),
            gen_contingencies=("g1",),
            line_contingencies=("L13",),
            reserve_limit=90.0,
        )
    )

    # Five-bus mesh with two line contingencies and four hours.
    gens5 = (
        _gen("g1", "b1", 10, 120, 12.0),
        _gen("g2", "b3", 5, 90, 24.0),
        _gen("g3", "b5", 5, 70, 50.0, on=False, hours_off=2),
    )
    cases.append(
        GridCase(
            name="oracle-mesh5",
            mva_base=100.0,
            buses=("b1", "b2", "b3", "b4", "b5"),
            reference_bus="b5",
            lines=(
                Line("L12", "b1", "b2", 1.0, 80.0),
                Line("L23", "b2", "b3", 1.0, 80.0),
                Line("L34", "b3", "b4", 1.0, 80.0),
                Line("L45", "b4", "b5", 1.0, 80.0),
                Line("L15", "b1", "b5", 1.0, 80.0),
                Line("L25", "b2", "b5", 1.0, 80.0),
            ),
            generators=gens5,
            wind_farms=(WindFarm("b2", (8.0, 10.0, 12.0, 10.0), (3.0, 3.0, 4.0, 3.0)),),
            loads={
                "b4": (50.0, 60.0, 65.0, 55.0),
                "b5": (40.0, 45.0, 50.0, 45.0),
            },
            reserve_limit=90.0,
            generator_contingencies=("g1",),
            line_contingencies=("L15", "L45"),
            horizon=4,
        )
    )
    return cases


def _daily_profile(base: float, swing: float, hours: int = 24) -> tuple[float, ...]:
    """Smooth two-peak daily shape."""
    out = []
    for t in range(hours):
        x = 2.0 * math.pi * t / hours
        out.append(base + swing * (0.6 * math.sin(x - 1.0) + 0.4 * math.sin(2 * x + 0.5)))
    return tuple(round(v, 2) for v in out)


def desk_case_24h() -> GridCase:
    """24-hour three-bus system used for the stress comparison studies.

    Wind sits at the generator-free middle bus, so its deviations load the
    lines no matter how the responding units at bus 1 share the response
    (the reference-bus peaker never participates).  L23 is sized so the
    chance-constrained optimum keeps roughly a two-sigma margin at peak:
    tight enough for measurable out-of-sample violations, slack enough
    that the tail shape of the sampling distribution decides their rate.
    """
    hours = 24
    load = _daily_profile(100.0, 25.0, hours)
    mu = tuple(round(0.20 * v, 2) for v in load)
    sigma = tuple(round(0.30 * m, 2) for m in mu)
    generators = (
        _gen("g1", "b1", 15, 95, 10.0, no_load=50.0, startup=200.0,
             ramp=60.0, min_up=2, min_down=2, p0=60.0, hours_on=4),
        _gen("g2", "b1", 10, 80, 24.0, no_load=30.0, startup=150.0,
             ramp=60.0, min_up=2, min_down=2, p0=30.0, hours_on=4),
        _gen("g3", "b3", 5, 70, 45.0, no_load=10.0, startup=80.0,
             on=False, hours_off=5),
    )
    return GridCase(
        name="desk24",
        mva_base=100.0,
        buses=("b1", "b2", "b3"),
        reference_bus="b3",
        lines=_ring3_lines(80.0, 55.8, 122.0),
        generators=generators,
        wind_farms=(WindFarm("b2", mu, sigma),),
        loads={"b3": load},
        reserve_limit=100.0,
        generator_contingencies=("g1",),
        line_contingencies=("L12",),
        horizon=hours,
    )


def stressed_case() -> GridCase:
    """The 24-hour case with line capacities cut to 90 percent."""
    return scale_line_capacities(desk_case_24h(), 0.9)


def monotone_toy() -> GridCase:
    """Fixed toy for risk-level monotonicity checks."""
    return ring3_case(
        name="monotone-toy",
        horizon=2,
        loads_b3=(80.0, 88.0),
        wind_mu=(12.0, 14.0),
        wind_sigma=(5.0, 6.0),
        caps=(70.0, 95.0, 70.0),
        generators=(
            _gen("g1", "b1", 10, 110, 12.0),
            _gen("g2", "b2", 5, 80, 30.0),
        ),
        gen_contingencies=("g1",),
        line_contingencies=("L13",),
    )


EXAMPLE_CASES = {
    "ring3": lambda: ring3_case(),
    "calibration": calibration_case,
    "one-binding-contingency": one_binding_contingency_case,
    "desk24": desk_case_24h,
    "stressed24": stressed_case,
}
