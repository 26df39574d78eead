import csv

import numpy as np

from lathom.io import read_lhf1, write_lattice_csv, write_lhf1, write_rows
from lathom.lattice import LatticeFunction, build_domain


def test_lhf1_round_trip_box(tmp_path):
    dom = build_domain([(-0.5, 1.0), (0, 0.75)], 0.25)
    u = LatticeFunction(dom, np.random.default_rng(0).standard_normal((dom.n_sites, 3)))
    write_lhf1(tmp_path / "u.lhf1", u)
    v = read_lhf1(tmp_path / "u.lhf1")
    assert v.domain.same_as(dom)
    assert np.array_equal(v.values, u.values)


def test_lhf1_round_trip_union(tmp_path):
    dom = build_domain([[(0, 1), (0, 0.5)], [(0, 0.5), (0, 1)]], 0.125)
    u = LatticeFunction(dom, np.linspace(-1, 1, dom.n_sites))
    write_lhf1(tmp_path / "u.lhf1", u)
    v = read_lhf1(tmp_path / "u.lhf1")
    assert v.domain.same_as(dom) and v.domain.mask is not None
    assert np.array_equal(v.values, u.values)


def test_csv_writers(tmp_path):
    dom = build_domain([(0, 1)], 0.5)
    write_lattice_csv(tmp_path / "u.csv", LatticeFunction(dom, [0.1, 0.2]))
    rows = list(csv.reader(open(tmp_path / "u.csv", encoding="utf-8")))
    assert rows == [["k0", "x0", "u0"], ["0", "0.0", "0.1"], ["1", "0.5", "0.2"]]
    write_rows(tmp_path / "r.csv", ["a", "b"], [(1 / 3, 2), (True, "x")])
    rows = list(csv.reader(open(tmp_path / "r.csv", encoding="utf-8")))
    assert float(rows[1][0]) == 1 / 3
