#!/usr/bin/env python3
"""Regenerate the bundled grammar fixtures.

Run from the repo root:  python3 tools/gen_fixtures.py

The fixtures are hand-designed; this script exists so edits stay reviewable
as Python instead of raw JSON. countdown-mini is the small desk-checkable
grammar (10 enumerable trajectories); liftoff-java is the production-scale
grammar (26 decision nodes, millions of trajectories, heavy-tailed under
the author weights).
"""

import json
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "gengrade" / "fixtures"


def lit(s):
    return {"lit": s}


def ref(n):
    return {"ref": n}


def xf(name, parts, arg=None):
    part = {"xf": name, "parts": parts}
    if arg is not None:
        part["arg"] = arg
    return part


def rule(value, weight, template, guard=None):
    r = {"value": value, "weight": weight, "template": template}
    if guard is not None:
        r["guard"] = guard
    return r


def eq(node, value):
    return {"eq": [node, value]}


def both(a, b):
    return {"all": [a, b]}


# ---------------------------------------------------------------------------
# countdown-mini: print a countdown from 10 to 1.
# Trajectories: manual (1) + while (1) + for x direction x bound x print (8).
# ---------------------------------------------------------------------------

MANUAL_BODY = "".join(f"System.out.println({i});\n" for i in range(10, 0, -1))

countdown = {
    "start": "LoopChoice",
    "max_depth": 16,
    "nodes": {
        "LoopChoice": [
            rule("for", 6, [
                lit("for (int i = "),
                ref("Direction"),
                lit(") {\n    System.out."),
                ref("PrintStyle"),
                lit("(i);\n}\n"),
            ]),
            rule("while", 3, [
                lit("int i = 10;\nwhile (i > 0) {\n    System.out.println(i);\n    i--;\n}\n"),
            ]),
            rule("manual", 1, [lit(MANUAL_BODY)]),
        ],
        "Direction": [
            rule("down", 3, [lit("10; i "), ref("Bound"), lit("; i--")]),
            rule("up", 1, [lit("1; i "), ref("Bound"), lit("; i++")]),
        ],
        "Bound": [
            rule("correct", 3, [lit(">= 1")], guard=eq("Direction", "down")),
            rule("off_by_one", 1, [lit("> 1")], guard=eq("Direction", "down")),
            rule("correct", 3, [lit("<= 10")], guard=eq("Direction", "up")),
            rule("off_by_one", 1, [lit("< 10")], guard=eq("Direction", "up")),
        ],
        "PrintStyle": [
            rule("println", 3, [lit("println")]),
            rule("print", 1, [lit("print")]),
        ],
    },
    "labels": [
        {"node": "Bound", "value": "off_by_one", "label": "off by one increment"},
        {"node": "LoopChoice", "value": "while", "label": "uses while loop"},
        {"node": "LoopChoice", "value": "manual", "label": "manually unrolled loop"},
        {"node": "PrintStyle", "value": "print", "label": "missing newline in print"},
    ],
}


# ---------------------------------------------------------------------------
# liftoff-java: print 10..1 then "Liftoff". 26 decision nodes; an ability
# node correlates mistakes; loop-header decisions condition on direction.
# ---------------------------------------------------------------------------

HIGH = eq("Ability", "high")
LOW = eq("Ability", "low")
DOWN = eq("Direction", "down")
UP = eq("Direction", "up")

PRINT_STMT = [lit("System.out."), ref("PrintCall"), lit("("), ref("PrintArg"), lit(");\n")]
UPDATE_LINE = [ref("UpdateStyle"), lit(";\n")]

FOR_HEADER_TAIL = [
    lit("; "),
    ref("LoopVarUse"),
    ref("CmpOp"),
    ref("EndValue"),
    lit("; "),
    ref("UpdateStyle"),
    lit(") {\n"),
    ref("BodyIndent"),
    lit("}\n"),
]


def manual_lines(values):
    return "".join(f"System.out.println({v});\n" for v in values)


liftoff = {
    "start": "Ability",
    "max_depth": 32,
    "nodes": {
        # Latent student ability; correlates the mistake weights below.
        "Ability": [
            rule("high", 3, [ref("MainWrapper")]),
            rule("low", 1, [ref("MainWrapper")]),
        ],
        "MainWrapper": [
            rule("plain", 12, [ref("CommentStyle"), ref("Strategy"), ref("BlankLine"),
                              ref("BoundaryPrint"), ref("TrailingNewline")]),
            rule("method", 2, [
                lit("public static void main(String[] args) {\n"),
                xf("indent", [ref("CommentStyle"), ref("Strategy"), ref("BlankLine"),
                              ref("BoundaryPrint")], arg=4),
                lit("}\n"),
                ref("TrailingNewline"),
            ]),
        ],
        "CommentStyle": [
            rule("none", 14, []),
            rule("header", 1, [lit("// countdown\n")]),
        ],
        "Strategy": [
            rule("loop", 20, [ref("LoopKind")], guard=HIGH),
            rule("loop", 6, [ref("LoopKind")], guard=LOW),
            rule("manual", 0.4, [ref("ManualDirection")], guard=HIGH),
            rule("manual", 2, [ref("ManualDirection")], guard=LOW),
        ],
        "LoopKind": [
            rule("for", 14, [ref("LoopVar"), ref("Direction"), ref("DeclareStyle")], guard=HIGH),
            rule("for", 5, [ref("LoopVar"), ref("Direction"), ref("DeclareStyle")], guard=LOW),
            rule("while", 1.4, [
                ref("LoopVar"), ref("Direction"),
                lit("int "), ref("LoopVarUse"), lit(" = "), ref("StartValue"),
                lit(";\nwhile ("), ref("LoopVarUse"), ref("CmpOp"), ref("EndValue"),
                lit(") {\n"), ref("BodyIndent"), lit("}\n"),
            ], guard=HIGH),
            rule("while", 2.5, [
                ref("LoopVar"), ref("Direction"),
                lit("int "), ref("LoopVarUse"), lit(" = "), ref("StartValue"),
                lit(";\nwhile ("), ref("LoopVarUse"), ref("CmpOp"), ref("EndValue"),
                lit(") {\n"), ref("BodyIndent"), lit("}\n"),
            ], guard=LOW),
        ],
        # Latent identifier choice; LoopVarUse repeats it wherever it occurs.
        "LoopVar": [
            rule("i", 28, []),
            rule("count", 1.2, []),
            rule("num", 0.4, []),
        ],
        "LoopVarUse": [
            rule("i", 1, [lit("i")], guard=eq("LoopVar", "i")),
            rule("count", 1, [lit("count")], guard=eq("LoopVar", "count")),
            rule("num", 1, [lit("num")], guard=eq("LoopVar", "num")),
        ],
        # Latent count direction for loops.
        "Direction": [
            rule("down", 16, [], guard=HIGH),
            rule("down", 6, [], guard=LOW),
            rule("up", 0.8, [], guard=HIGH),
            rule("up", 2, [], guard=LOW),
        ],
        "DeclareStyle": [
            rule("in_header", 16, [
                lit("for (int "), ref("LoopVarUse"), lit(" = "), ref("StartValue"),
            ] + FOR_HEADER_TAIL),
            rule("before_loop", 0.8, [
                lit("int "), ref("LoopVarUse"), lit(" = "), ref("StartValue"),
                lit(";\nfor (; "), ref("LoopVarUse"), ref("CmpOp"), ref("EndValue"),
                lit("; "), ref("UpdateStyle"), lit(") {\n"), ref("BodyIndent"), lit("}\n"),
            ]),
        ],
        "StartValue": [
            rule("ten", 30, [lit("10")], guard=DOWN),
            rule("nine", 0.8, [lit("9")], guard=DOWN),
            rule("one", 8, [lit("1")], guard=UP),
            rule("zero", 1.5, [lit("0")], guard=UP),
        ],
        "CmpOp": [
            rule("gt", 18, [lit(" > ")], guard=DOWN),
            rule("ge", 3, [lit(" >= ")], guard=DOWN),
            rule("lt_confused", 0.15, [lit(" < ")], guard=both(DOWN, HIGH)),
            rule("lt_confused", 1.2, [lit(" < ")], guard=both(DOWN, LOW)),
            rule("lt", 12, [lit(" < ")], guard=UP),
            rule("le", 3, [lit(" <= ")], guard=UP),
            rule("gt_confused", 0.15, [lit(" > ")], guard=both(UP, HIGH)),
            rule("gt_confused", 1.2, [lit(" > ")], guard=both(UP, LOW)),
        ],
        "EndValue": [
            # Countdown: for (i = 10; i > 0; i--) is right; "> 1" stops at 2.
            rule("correct", 26, [lit("0")], guard=both(DOWN, eq("CmpOp", "gt"))),
            rule("off_by_one", 0.3, [lit("1")], guard=both(both(DOWN, eq("CmpOp", "gt")), HIGH)),
            rule("off_by_one", 2.5, [lit("1")], guard=both(both(DOWN, eq("CmpOp", "gt")), LOW)),
            rule("correct", 26, [lit("1")], guard=both(DOWN, eq("CmpOp", "ge"))),
            rule("off_by_one", 0.3, [lit("2")], guard=both(both(DOWN, eq("CmpOp", "ge")), HIGH)),
            rule("off_by_one", 2.5, [lit("2")], guard=both(both(DOWN, eq("CmpOp", "ge")), LOW)),
            rule("correct", 1, [lit("0")], guard=both(DOWN, eq("CmpOp", "lt_confused"))),
            # Counting up: "i < 11" (10 + 1) is right; "< 10" stops at 9.
            rule("correct", 8, [xf("int_add", [lit("10")], arg=1)], guard=both(UP, eq("CmpOp", "lt"))),
            rule("off_by_one", 4, [lit("10")], guard=both(UP, eq("CmpOp", "lt"))),
            rule("correct", 8, [lit("10")], guard=both(UP, eq("CmpOp", "le"))),
            rule("off_by_one", 1, [lit("9")], guard=both(UP, eq("CmpOp", "le"))),
            rule("correct", 1, [lit("10")], guard=both(UP, eq("CmpOp", "gt_confused"))),
        ],
        "UpdateStyle": [
            rule("compact", 22, [ref("LoopVarUse"), lit("--")], guard=DOWN),
            rule("op_assign", 1.5, [ref("LoopVarUse"), lit(" -= 1")], guard=DOWN),
            rule("long_form", 0.7, [ref("LoopVarUse"), lit(" = "), ref("LoopVarUse"), lit(" - 1")], guard=DOWN),
            rule("compact", 22, [ref("LoopVarUse"), lit("++")], guard=UP),
            rule("op_assign", 1.5, [ref("LoopVarUse"), lit(" += 1")], guard=UP),
            rule("long_form", 0.7, [ref("LoopVarUse"), lit(" = "), ref("LoopVarUse"), lit(" + 1")], guard=UP),
        ],
        "BodyIndent": [
            rule("four", 20, [xf("indent", PRINT_STMT, arg=4)], guard=eq("LoopKind", "for")),
            rule("two", 1.6, [xf("indent", PRINT_STMT, arg=2)], guard=eq("LoopKind", "for")),
            rule("none", 0.8, PRINT_STMT, guard=eq("LoopKind", "for")),
            rule("four", 20, [xf("indent", [ref("WhileUpdatePos")], arg=4)], guard=eq("LoopKind", "while")),
            rule("two", 1.6, [xf("indent", [ref("WhileUpdatePos")], arg=2)], guard=eq("LoopKind", "while")),
            rule("none", 0.8, [ref("WhileUpdatePos")], guard=eq("LoopKind", "while")),
        ],
        "WhileUpdatePos": [
            rule("after_print", 14, PRINT_STMT + UPDATE_LINE),
            rule("before_print", 1, UPDATE_LINE + PRINT_STMT),
        ],
        "PrintCall": [
            rule("println", 18, [lit("println")], guard=HIGH),
            rule("println", 8, [lit("println")], guard=LOW),
            rule("print", 0.4, [lit("print")], guard=HIGH),
            rule("print", 2, [lit("print")], guard=LOW),
        ],
        "PrintArg": [
            rule("plain", 24, [ref("LoopVarUse")]),
            rule("concat", 0.8, [lit("\"\" + "), ref("LoopVarUse")]),
        ],
        "BlankLine": [
            rule("no", 12, []),
            rule("yes", 1.4, [lit("\n")]),
        ],
        "BoundaryPrint": [
            rule("include", 36, [
                lit("System.out."), ref("LiftoffCall"), lit("(\""),
                ref("LiftoffCase"), ref("LiftoffPunct"), lit("\");\n"),
            ], guard=HIGH),
            rule("include", 12, [
                lit("System.out."), ref("LiftoffCall"), lit("(\""),
                ref("LiftoffCase"), ref("LiftoffPunct"), lit("\");\n"),
            ], guard=LOW),
            rule("forget", 0.25, [], guard=HIGH),
            rule("forget", 1.6, [], guard=LOW),
        ],
        "LiftoffCall": [
            rule("println", 12, [lit("println")]),
            rule("print", 1.6, [lit("print")]),
        ],
        "LiftoffCase": [
            rule("title", 18, [ref("LiftoffWord")]),
            rule("upper", 0.8, [xf("upper", [ref("LiftoffWord")])]),
            rule("lower", 1.6, [xf("lower", [ref("LiftoffWord")])]),
        ],
        "LiftoffWord": [
            rule("liftoff", 22, [lit("Liftoff")]),
            rule("lift_off", 0.8, [xf("join", [lit("Lift"), lit("off")], arg=" ")]),
            rule("blastoff", 0.4, [lit("Blastoff")]),
        ],
        "LiftoffPunct": [
            rule("none", 14, []),
            rule("bang", 2.5, [lit("!")]),
        ],
        "TrailingNewline": [
            rule("no", 12, []),
            rule("yes", 1.2, [lit("\n")]),
        ],
        "ManualDirection": [
            rule("down", 6, [ref("ManualCount")]),
            rule("up", 1, [ref("ManualCount")]),
        ],
        "ManualCount": [
            rule("ten", 8, [lit(manual_lines(range(10, 0, -1)))], guard=eq("ManualDirection", "down")),
            rule("nine", 1, [lit(manual_lines(range(10, 1, -1)))], guard=eq("ManualDirection", "down")),
            rule("three", 1, [lit(manual_lines(range(10, 7, -1)))], guard=eq("ManualDirection", "down")),
            rule("ten", 8, [lit(manual_lines(range(1, 11)))], guard=eq("ManualDirection", "up")),
            rule("nine", 1, [lit(manual_lines(range(1, 10)))], guard=eq("ManualDirection", "up")),
            rule("three", 1, [lit(manual_lines(range(1, 4)))], guard=eq("ManualDirection", "up")),
        ],
    },
    "labels": [
        {"node": "CmpOp", "value": "lt_confused", "label": "confused > with <"},
        {"node": "CmpOp", "value": "gt_confused", "label": "confused > with <"},
        {"node": "EndValue", "value": "off_by_one", "label": "off by one increment"},
        {"node": "StartValue", "value": "nine", "label": "wrong start value"},
        {"node": "StartValue", "value": "zero", "label": "wrong start value"},
        {"node": "LoopKind", "value": "while", "label": "uses while loop"},
        {"node": "Strategy", "value": "manual", "label": "no loop used"},
        {"node": "PrintCall", "value": "print", "label": "missing newline in print"},
        {"node": "BoundaryPrint", "value": "forget", "label": "missing liftoff print"},
        {"node": "WhileUpdatePos", "value": "before_print", "label": "updates before printing"},
        {"node": "ManualCount", "value": "nine", "label": "off by one increment"},
        {"node": "ManualCount", "value": "three", "label": "incomplete countdown"},
    ],
}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, doc in [("countdown-mini", countdown), ("liftoff-java", liftoff)]:
        path = OUT / f"{name}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path} ({len(doc['nodes'])} nodes)")


if __name__ == "__main__":
    main()
