#!/usr/bin/env python3
"""Solve a CPLEX-LP file with HiGHS and write the result as JSON.

usage: highs_solve.py IN.lp OUT.json
       highs_solve.py --check
"""
import json
import sys


def main(argv):
    try:
        import highspy
    except ImportError as err:
        print(f"highspy unavailable: {err}", file=sys.stderr)
        return 3
    if len(argv) == 2 and argv[1] == "--check":
        return 0
    if len(argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("threads", 1)
    if h.readModel(argv[1]) != highspy.HighsStatus.kOk:
        print(f"cannot read {argv[1]}", file=sys.stderr)
        return 2
    h.run()
    status = h.getModelStatus()
    S = highspy.HighsModelStatus
    out = {"status": "error", "message": h.modelStatusToString(status)}
    if status == S.kOptimal:
        lp = h.getLp()
        sol = h.getSolution()
        out = {
            "status": "optimal",
            "objective": h.getInfo().objective_function_value,
            "values": dict(zip(lp.col_names_, sol.col_value)),
        }
    elif status == S.kInfeasible:
        out = {"status": "infeasible"}
    elif status in (S.kUnbounded, S.kUnboundedOrInfeasible):
        # Separate the two by re-solving the feasibility problem.
        if status == S.kUnboundedOrInfeasible:
            h.changeObjectiveSense(highspy.ObjSense.kMinimize)
            n = h.getLp().num_col_
            h.changeColsCost(n, list(range(n)), [0.0] * n)
            h.setOptionValue("presolve", "off")
            h.run()
            out = {"status": "unbounded" if h.getModelStatus() == S.kOptimal else "infeasible"}
        else:
            out = {"status": "unbounded"}
    elif status in (S.kIterationLimit, S.kTimeLimit):
        out = {"status": "iteration-limit"}
    with open(argv[2], "w") as f:
        json.dump(out, f)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
