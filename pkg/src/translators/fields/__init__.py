from .analytic import AnalyticGraph, AnalyticGrid, analytic_jet
from .expression import (
    BinOp,
    Call,
    Neg,
    Num,
    Var,
    diff,
    evaluate,
    evaluate_jet,
    parse,
    parse_system,
    to_string,
)
from .grid import GridField, central_derivatives, fd_jet, fd_jets, read_grid_csv, write_grid_csv
from .taylor import Taylor2

__all__ = [
    "AnalyticGraph", "AnalyticGrid", "BinOp", "Call", "GridField", "Neg", "Num", "Taylor2", "Var",
    "analytic_jet", "central_derivatives", "diff", "evaluate", "evaluate_jet", "fd_jet",
    "fd_jets", "parse", "parse_system", "read_grid_csv", "to_string", "write_grid_csv",
]
