#!/usr/bin/env python3
"""Solve an MPS/LP model with HiGHS and write a plain solution file.

Usage: highs_solve.py MODEL SOLUTION

The solution file holds `status <s>`, `objective <v>` and one
`<column> <value>` line per nonzero column.
"""
import sys

import highspy


def main() -> int:
    if len(sys.argv) != 3:
        print(__doc__, file=sys.stderr)
        return 2
    model, solution = sys.argv[1], sys.argv[2]
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", 0.0)
    h.setOptionValue("mip_abs_gap", 1e-9)
    if h.readModel(model) != highspy.HighsStatus.kOk:
        print(f"cannot read {model}", file=sys.stderr)
        return 1
    h.run()
    status = h.getModelStatus()
    with open(solution, "w") as out:
        if status != highspy.HighsModelStatus.kOptimal:
            out.write(f"status {h.modelStatusToString(status).replace(' ', '_')}\n")
            return 0
        out.write("status optimal\n")
        out.write(f"objective {h.getInfo().objective_function_value!r}\n")
        lp = h.getLp()
        values = h.getSolution().col_value
        for name, value in zip(lp.col_names_, values):
            if value != 0.0:
                out.write(f"{name} {value!r}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
