"""Golden-free Trojan screening for gate-level netlists."""

from .library import CellLibrary
from .netlist import Netlist, emit_netlist, parse_netlist, read_netlist
from .hypergraph import Hypergraph, build_hypergraph

__all__ = ["CellLibrary", "Netlist", "Hypergraph", "build_hypergraph", "emit_netlist",
           "parse_netlist", "read_netlist"]
