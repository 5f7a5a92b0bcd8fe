import json
import re

import pytest

from planarfab.cli import CONFIG_ERROR, INFEASIBLE, OK, main
from planarfab.core import (
    Coord,
    InstanceConfig,
    Order,
    build_layout,
    instance_to_json,
)
from planarfab.render import render_gantt, render_layout
from planarfab.routing import generate_resting_sites
from planarfab.scheduling import Schedule, schedule

from conftest import make_catalog
from test_placement import line_placement


@pytest.fixture
def instance_file(tmp_path):
    layout = build_layout("square", (4, 4), 2)
    catalog = make_catalog(5, seed=2, marg_range=(0.3, 0.7))
    config = InstanceConfig(
        n_dispensers=10, m_max=4, n_movers=2, dispensing_speed=8, seed=17
    )
    path = tmp_path / "instance.json"
    path.write_text(instance_to_json(layout, catalog, config))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_full_cli_chain(tmp_path, instance_file):
    orders = tmp_path / "orders.csv"
    assert run("gen-orders", "--instance", instance_file, "--n", "6",
               "--size-min", "1", "--size-max", "3", "--orders-out", orders) == OK
    packing = tmp_path / "packing.json"
    assert run("pack", "--instance", instance_file, "--orders", orders, "--out", packing) == OK
    placement = tmp_path / "placement.json"
    assert run("place", "--instance", instance_file, "--orders", orders,
               "--packing", packing, "--population", "8", "--max-evaluations", "60",
               "--episodes", "4", "--out", placement,
               "--trace-out", tmp_path / "trace.csv") == OK
    sched = tmp_path / "schedule.json"
    assert run("schedule", "--instance", instance_file, "--orders", orders,
               "--placement", placement, "--iterations", "20", "--warm-start",
               "--out", sched, "--csv-out", tmp_path / "schedule.csv") == OK
    assert run("lower-bound", "--instance", instance_file, "--orders", orders,
               "--placement", placement, "--out", tmp_path / "lb.json") == OK
    routed = tmp_path / "routed.json"
    assert run("route", "--instance", instance_file, "--placement", placement,
               "--schedule", sched, "--out", routed,
               "--paths-csv", tmp_path / "paths.csv") == OK
    assert run("render", "--placement", placement, "--sites",
               "--out", tmp_path / "layout.svg") == OK
    assert run("render", "--schedule", sched, "--out", tmp_path / "gantt.svg") == OK

    lb = json.loads((tmp_path / "lb.json").read_text())
    plan = json.loads(routed.read_text())
    sch = json.loads(sched.read_text())
    assert lb["value"] <= sch["makespan"] <= plan["makespan"]
    paths = (tmp_path / "paths.csv").read_text().splitlines()
    assert paths[0] == "tick,mover,x,y,state"
    states = {ln.split(",")[4] for ln in paths[1:]}
    assert states <= {"move", "dispense", "swap", "rest"}


def test_cli_exit_codes(tmp_path, instance_file):
    # missing file -> config error
    assert run("pack", "--instance", tmp_path / "nope.json",
               "--orders", tmp_path / "nope.csv", "--out", tmp_path / "p.json") == CONFIG_ERROR
    # infeasible generation (size range beyond catalog) -> infeasible
    orders = tmp_path / "orders.csv"
    assert run("gen-orders", "--instance", instance_file, "--n", "3",
               "--size-min", "1", "--size-max", "99", "--orders-out", orders) == INFEASIBLE


def test_cli_seed_env_override(tmp_path, instance_file, monkeypatch):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    c = tmp_path / "c.csv"
    run("gen-orders", "--instance", instance_file, "--n", "5",
        "--size-min", "1", "--size-max", "3", "--orders-out", a)
    monkeypatch.setenv("PLANARFAB_SEED", "999")
    run("gen-orders", "--instance", instance_file, "--n", "5",
        "--size-min", "1", "--size-max", "3", "--orders-out", b)
    run("gen-orders", "--instance", instance_file, "--n", "5",
        "--size-min", "1", "--size-max", "3", "--orders-out", c)
    assert a.read_text() != b.read_text()
    assert b.read_text() == c.read_text()


def test_cli_pipeline_and_report_consistency(tmp_path, instance_file, capsys):
    out_dir = tmp_path / "run"
    assert run("pipeline", "--instance", instance_file, "--n-orders", "5",
               "--size-min", "1", "--size-max", "3", "--population", "6",
               "--max-evaluations", "40", "--episodes", "3",
               "--iterations", "15", "--out-dir", out_dir) == OK
    report = json.loads((out_dir / "report.json").read_text())
    vals = report["stage_values"]
    pre, post = vals["makespan_scheduled"], vals["makespan_routed"]
    assert vals["routing_overhead_pct"] == pytest.approx(100.0 * (post - pre) / pre)
    for f in ["orders.csv", "packing.json", "placement.json", "schedule.json",
              "routed.json", "gantt.svg", "layout.svg", "report.json"]:
        assert (out_dir / f).exists()


def test_cli_pipeline_reproducible(tmp_path, instance_file):
    r1, r2 = tmp_path / "r1", tmp_path / "r2"
    for out in (r1, r2):
        assert run("pipeline", "--instance", instance_file, "--n-orders", "4",
                   "--size-min", "1", "--size-max", "3", "--population", "6",
                   "--max-evaluations", "30", "--episodes", "3",
                   "--iterations", "10", "--out-dir", out) == OK
    for name in ["orders.csv", "packing.json", "placement.json", "schedule.csv", "paths.csv"]:
        assert (r1 / name).read_text() == (r2 / name).read_text(), name


def test_cli_init_instance_roundtrip(tmp_path):
    out = tmp_path / "inst.json"
    assert run("init-instance", "--topology", "ring", "--size", "5",
               "--interfaces", "2", "--marginals", "0.5,0.5",
               "--dispensers", "4", "--movers", "2", "--m-max", "4",
               "--out", out) == OK
    doc = json.loads(out.read_text())
    assert doc["topology"] == "ring" and len(doc["tiles"]) == 16


def test_cli_threads_flag_validated(capsys):
    assert main(["--threads", "2", "render", "--out", "/tmp/x.svg"]) == CONFIG_ERROR
    with pytest.raises(SystemExit):
        main(["--threads", "0", "render", "--out", "/tmp/x.svg"])


# --- renders -------------------------------------------------------------------------

def test_render_gantt_structure():
    pl = line_placement(["IF", ("a",), ("b",)])
    orders = [Order(0, (("a", 5), ("b", 4),))]
    s = schedule(orders, pl, 1, eta=2)
    svg = render_gantt(s)
    assert svg.startswith("<svg")
    assert svg.count('class="dispense"') == 2
    assert svg.count('class="interface"') == 2
    assert "mover 0" in svg

    empty = Schedule((), 0)
    svg_empty = render_gantt(empty)
    assert svg_empty.startswith("<svg") and "rect" not in svg_empty.split("defs")[2]


def test_render_gantt_transit_hatching():
    from planarfab.routing import extract_transits
    from planarfab.scheduling import OperationSpec, ScheduledOp, START, DISPENSING, FINISH

    pl = line_placement(["IF", ("a",)])
    sos = (
        ScheduledOp(OperationSpec(0, 0, "interface", 2, START), 0, Coord(1, 1), 0),
        ScheduledOp(OperationSpec(1, 0, "a", 4, DISPENSING), 0, Coord(1, 2), 10),
        ScheduledOp(OperationSpec(2, 0, "interface", 2, FINISH), 0, Coord(1, 1), 15),
    )
    s = Schedule(sos, 17)
    transits = extract_transits(s, pl)
    svg = render_gantt(s, transits=transits)
    assert svg.count('class="transit"') == 1
    assert "url(#hatch)" in svg


def test_render_gantt_four_mover_rows_with_hatches():
    # four movers, one idle transit each
    from planarfab.routing import extract_transits
    from planarfab.scheduling import OperationSpec, ScheduledOp, START, DISPENSING, FINISH

    pl = line_placement(["IF", ("a",), ("b",), ("c",), ("d",), "IF"])
    iface = Coord(1, 1)
    sos = []
    op = 0
    for m, drug_tile in enumerate([Coord(1, 2), Coord(1, 3), Coord(1, 4), Coord(1, 5)]):
        drug = "abcd"[m]
        travel = m + 1
        disp_start = 30 + 3 * m
        sos.append(ScheduledOp(OperationSpec(op, m, "interface", 2, START), m, iface, 3 * m)); op += 1
        sos.append(ScheduledOp(OperationSpec(op, m, drug, 4, DISPENSING), m, drug_tile, disp_start)); op += 1
        sos.append(ScheduledOp(OperationSpec(op, m, "interface", 2, FINISH), m, iface, disp_start + 4 + travel)); op += 1
    s = Schedule(tuple(sos), max(x.end for x in sos))
    transits = extract_transits(s, pl)
    svg = render_gantt(s, transits=transits)
    assert svg.count("mover ") == 4
    assert svg.count('class="transit"') == 4


def test_render_gantt_marks_pauses():
    from test_routing import hand_crossing_fixture
    from planarfab.routing import resolve_conflicts

    pl, orders, s = hand_crossing_fixture()
    plan = resolve_conflicts(s, pl)
    svg = render_gantt(plan.schedule, interruptions=plan.interruptions)
    assert svg.count('class="pause"') == sum(1 for v in plan.interruptions.values() if v)


def test_render_layout_fig6(golden_placement):
    svg = render_layout(golden_placement)
    assert svg.count('class="cell"') == 16
    assert svg.count('class="iface"') == 2
    # one stripe per placed dispenser
    total_dispensers = sum(len(d) for d in golden_placement.drug_tiles.values())
    assert svg.count('class="stripe"') == total_dispensers


def test_render_layout_sites_and_heat(golden_placement):
    sites = generate_resting_sites(
        golden_placement.layout, golden_placement.interfaces
    ).sites
    svg = render_layout(golden_placement, sites=sites)
    assert svg.count('class="site"') == len(sites) == 9

    heat = {t: 1.0 for t in golden_placement.layout.tiles}
    svg_heat = render_layout(golden_placement, heat=heat)
    shades = set(re.findall(r'fill="rgb\(255,(\d+),\d+\)"', svg_heat))
    assert len(shades) == 1  # all-equal heat renders one uniform shade
