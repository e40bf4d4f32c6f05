"""Builds conformance.json, the interpreter conformance corpus.

Cases tagged "cpython" get their expected stdout (and, for LOGO, the final
pose and stroke count) by running the same source under CPython with small
shims for the domain primitives. Everything else carries hand-computed
expectations written below. Run from this directory: python3 make_conformance.py
"""

import datetime
import json
import math
import sys
from io import StringIO
from contextlib import redirect_stdout

from dateutil.relativedelta import relativedelta

CASES = []


def case(name, domain, program, oracle="cpython", task=None, **expect):
    c = dict(name=name, domain=domain, program=program, oracle=oracle, expect=expect)
    if task is not None:
        c["task"] = task
    CASES.append(c)


def hand(name, domain, program, **expect):
    case(name, domain, program, oracle="hand", **expect)


class Turtle:
    def __init__(self):
        self.x, self.y, self.h, self.down, self.segments = 0.0, 0.0, 0.0, True, 0

    def prims(self):
        t = self

        def forward(d):
            r = math.radians(t.h)
            t.x, t.y = t.x + d * math.cos(r), t.y + d * math.sin(r)
            t.segments += t.down

        def left(a):
            t.h = (t.h + a) % 360.0

        def right(a):
            t.h = (t.h - a) % 360.0

        def penup():
            t.down = False

        def pendown():
            t.down = True

        def teleport(x, y, theta):
            t.x, t.y, t.h = float(x), float(y), theta % 360.0

        def heading():
            return t.h

        def isdown():
            return t.down

        def embed(program, env):
            pose = (t.x, t.y, t.h, t.down)
            exec(program, {**base, **env})
            t.x, t.y, t.h, t.down = pose

        base = dict(forward=forward, left=left, right=right, penup=penup, pendown=pendown,
                    teleport=teleport, heading=heading, isdown=isdown, embed=embed,
                    HALF_INF=180, EPS_ANGLE=1.0, EPS_DIST=0.05)
        return base


def date_prims():
    return dict(date=datetime.date, relativedelta=relativedelta,
                strftime=lambda d, fmt: d.strftime(fmt))


def run_cpython(c):
    turtle = Turtle()
    env = {"none": {}, "logo": turtle.prims(), "date": date_prims()}[c["domain"]]
    out = StringIO()
    with redirect_stdout(out):
        exec(c["program"], dict(env))
    c["expect"]["status"] = "ok"
    c["expect"]["stdout"] = out.getvalue()
    if c["domain"] == "logo":
        c["expect"]["segments"] = turtle.segments
        c["expect"]["pose"] = [turtle.x, turtle.y, turtle.h]


# ---- core language, checked against CPython ----

case("arith-precedence", "none", "print(7 + 3 * 2, (7 + 3) * 2, 7 - 10, -2 ** 2)\n")
case("division-family", "none", "print(7 / 2, 7 // 2, -7 // 2, 7 % 3, -7 % 3, 7.5 // 2, 2 ** 10, 2 ** -1)\n")
case("float-repr", "none", "print(0.1 + 0.2, 1.0, 1e20, 1.5e-7, 3.0 * 2, 1 / 3, 1e16, 123456789.0 * 10)\n")
case("mixed-numeric", "none", "x = 3\ny = 1.5\nprint(x * y, x + True, x / 3, 10 / 4, 9 % 2.5)\n")
case("strings", "none", "s = \"ab\" + 'cd'\nprint(s, len(s), s * 2, s[1], s[-1])\n")
case("string-compare", "none", "print(\"a\" < \"b\", \"abc\" == \"abc\", \"x\" in \"xyz\", \"q\" not in \"xyz\", \"b\" * 0 == \"\")\n")
case("string-escapes", "none", "print(\"tab\\there\", 'it\\'s', \"line1\\nline2\", \"back\\\\slash\")\n")
case("lists", "none", "xs = [3, 1, 2]\nxs[0] = 5\nprint(xs, len(xs), sorted(xs), xs[-1], sum(xs), min(xs), max(xs))\n")
case("list-concat", "none", "ys = [1] + [2, 3]\nys += [4]\nprint(ys, 3 in ys, 9 in ys, ys * 2, [] == [])\n")
case("dicts", "none",
     "d = {\"a\": 1, \"b\": 2}\nd[\"c\"] = 3\nd[\"a\"] += 10\nprint(d, len(d), \"b\" in d, \"z\" in d)\n"
     "for k in d:\n    print(k, d[k])\n")
case("range-step", "none", "for i in range(10, 0, -3):\n    print(i)\nprint(list(range(4)), len(range(2, 11, 3)))\n")
case("while-sum", "none", "n = 0\ntotal = 0\nwhile n < 5:\n    n += 1\n    total += n * n\nprint(n, total)\n")
case("if-elif-else", "none",
     "def sign(x):\n    if x < 0:\n        return -1\n    elif x == 0:\n        return 0\n    else:\n        return 1\n"
     "print(sign(-3), sign(0), sign(4))\n")
case("recursion", "none", "def fact(n):\n    if n <= 1:\n        return 1\n    return n * fact(n - 1)\nprint(fact(10), fact(20))\n")
case("fibonacci", "none",
     "a = 0\nb = 1\nfor i in range(30):\n    c = a + b\n    a = b\n    b = c\nprint(a)\n")
case("helper-calls", "none",
     "def square(x):\n    return x * x\n\ndef sum_squares(xs):\n    total = 0\n    for x in xs:\n        total += square(x)\n"
     "    return total\n\nprint(sum_squares([1, 2, 3]), sum_squares([]))\n")
case("bool-ops", "none", "print(0 or 5, 3 and 0, not 0, None or \"d\", 1 < 2 < 3, 3 > 2 > 2, 1 < 3 != 3)\n")
case("truthiness", "none",
     "for v in [0, 1, \"\", \"a\", [], [0], {}, None, 0.0]:\n    if v:\n        print(\"T\")\n    else:\n        print(\"F\")\n")
case("conversions", "none",
     "print(int(\"42\") + 1, float(\"2.5\") * 2, str(12) + \"3\", int(3.9), int(-3.9), bool(0), bool([1]), float(3))\n")
case("abs-round", "none", "print(abs(-4), abs(-2.5), round(2.5), round(3.5), round(2.567, 2), round(-0.5), round(7))\n")
case("implicit-none", "none", "def f():\n    x = 1\nprint(f(), f() == None)\n")
case("global-read", "none", "N = 3\ndef g():\n    return N * 2\nprint(g())\n")
case("local-shadow", "none", "x = 1\ndef h(x):\n    x = x + 1\n    return x\nprint(h(5), x)\n")
case("early-return", "none",
     "def find(xs, t):\n    for i in range(len(xs)):\n        if xs[i] == t:\n            return i\n    return -1\n"
     "print(find([4, 5, 6], 5), find([4, 5, 6], 9))\n")
case("nested-loops", "none",
     "total = 0\nfor i in range(1, 4):\n    for j in range(1, 4):\n        total += i * j\nprint(total)\n")
case("string-iteration", "none", "out = \"\"\nfor c in \"abc\":\n    out = c + out\nprint(out)\n")
case("comments-blank-lines", "none",
     "# leading comment\n\ndef inc(x):\n    # bump by one\n    return x + 1  # trailing\n\n\n# between\nprint(inc(1))\n")
case("numeric-equality", "none", "print(1 == 1.0, 2 != 2.0, 3 >= 3.0, True == 1, 0.5 < 1)\n")
case("nested-lists", "none",
     "grid = [[1, 2], [3, 4]]\ngrid[1] = [7, grid[1][1]]\ntotal = 0\nfor row in grid:\n    for v in row:\n        total += v\nprint(grid[1][0], total, grid)\n")
case("string-order", "none", "names = [\"pear\", \"apple\", \"fig\"]\nprint(sorted(names), max(names), min(names), sorted([3.5, 1, 2]))\n")
case("dict-keys-list", "none", "d = {\"x\": 1, \"y\": 2}\nprint(list(d), len(list(d)), d[\"y\"])\n")
case("aug-assign", "none",
     "x = 10\nx -= 3\nx *= 2\nx //= 3\nx %= 3\nx **= 2\ny = 7\ny /= 2\nprint(x, y)\n")
case("big-ints", "none", "print(2 ** 62, -(2 ** 62) // 3, 10 ** 18 + 1)\n")
case("multiline-call", "none",
     "def add3(a,\n         b, c):\n    return a + b + c\nprint(add3(1,\n           2,\n           3))\nxs = [\n    1,\n    2,\n]\nprint(xs)\n")
case("keyword-round", "none", "print(round(3.14159, ndigits=3), round(1234.5, -2))\n")

# ---- LOGO, checked against CPython with a turtle shim ----

case("small-9gon", "logo",
     "def draw_small_9gon():\n    for i in range(9):\n        forward(2)\n        left(40.0)\n\ndraw_small_9gon()\n")
case("small-5gon", "logo",
     "def draw_small_5gon(): \n    for i in range(5):\n        forward(2)\n        left(72.0)\n\ndraw_small_5gon()\n")
case("semicircle", "logo",
     "def draw_semicircle():\n    for i in range(HALF_INF):\n        forward(EPS_DIST * 2)\n        left(EPS_ANGLE) \n\ndraw_semicircle()\n")
case("prim-forward-left-right", "logo", "forward(3)\nright(90)\nforward(2)\nprint(heading())\nleft(45)\nprint(heading())\n")
case("prim-pen", "logo", "penup()\nprint(isdown())\nforward(5)\npendown()\nprint(isdown())\nforward(1)\n")
case("prim-teleport", "logo", "forward(1)\nteleport(1, 2, 45)\nprint(heading())\nforward(2)\n")
case("prim-embed-locals", "logo",
     "s = 3\nforward(1)\nembed(\"for i in range(4):\\n    forward(s)\\n    left(90.0)\", locals())\nprint(heading())\nforward(1)\n")
case("prim-embed-dict", "logo",
     "left(30.0)\nembed(\"forward(n)\\nleft(90.0)\\npenup()\", {\"n\": 2})\nprint(heading(), isdown())\nforward(1)\n")
case("side-by-side", "logo",
     "for i in range(4):\n    forward(2)\n    left(90.0)\npenup()\nforward(3)\npendown()\nfor i in range(3):\n    forward(2)\n    left(120.0)\n")
case("circle", "logo", "for i in range(HALF_INF * 2):\n    forward(EPS_DIST * 4)\n    left(EPS_ANGLE)\n")
case("polygon-helper", "logo",
     "def draw_polygon(sides, length):\n    for i in range(sides):\n        forward(length)\n        left(360.0 / sides)\n\ndraw_polygon(7, 3)\n")
case("heading-wrap", "logo", "right(450)\nprint(heading())\nleft(-720.5)\nprint(heading())\n")
case("constants", "logo", "print(HALF_INF, EPS_ANGLE, EPS_DIST, HALF_INF * EPS_ANGLE)\n")
case("spiral", "logo", "d = 1\nwhile d < 6:\n    forward(d)\n    left(90.0)\n    d += 1\n")

# ---- Date, checked against CPython with datetime and dateutil ----

case("date-helpers", "date",
     "def get_date_today(date_obj):\n    return date_obj\ndef get_date_one_week_from_today(date_obj):\n"
     "    return date_obj + relativedelta(weeks=1)    \ndef get_date_one_week_ago(date_obj):\n"
     "    return date_obj - relativedelta(weeks=1)\n"
     "today = date(2019, 12, 28)\nprint(get_date_today(today), get_date_one_week_from_today(today), get_date_one_week_ago(today))\n")
case("date-keywords-strftime", "date",
     "d = date(year=2017, month=5, day=9)\nanswer = strftime(d, \"%m/%d/%Y\")\nprint(answer)\n")
case("month-clamp", "date",
     "print(date(2020, 1, 31) + relativedelta(months=1), date(2021, 3, 31) - relativedelta(months=1))\n")
case("leap-days", "date",
     "print(date(2019, 2, 28) + relativedelta(days=1), date(2020, 2, 28) + relativedelta(days=1), "
     "date(2000, 2, 28) + relativedelta(days=1), date(1900, 2, 28) + relativedelta(days=1))\n")
case("leap-years", "date", "print(date(2020, 2, 29) + relativedelta(years=1), date(2020, 2, 29) - relativedelta(years=4))\n")
case("weekday", "date", "print(strftime(date(2023, 10, 19), \"%A\"), strftime(date(2000, 1, 1), \"%A %d%%\"))\n")
case("eggs", "date",
     "bought = date(2017, 5, 9)\ntoday = bought + relativedelta(days=40)\n"
     "answer = strftime(today - relativedelta(days=10), \"%m/%d/%Y\")\nprint(answer)\n")
case("date-compare", "date",
     "a = date(2020, 1, 1)\nb = a + relativedelta(years=1, months=1, days=1)\nprint(a < b, a == date(2020, 1, 1), b)\n")

# ---- hand-computed: semantics that differ from CPython on purpose, errors ----

hand("copy-on-assign", "none", "a = [1]\nb = a\nb[0] = 2\nprint(a)\nprint(b)\n",
     status="ok", stdout="[1]\n[2]\n")
hand("one-year-ago-misspelled", "date",
     "def get_date_one_year_ago(date_today):\n    return date_today - relativedetla(years=1) \n"
     "print(get_date_one_year_ago(date(2020, 1, 1)))\n",
     status="runtime-error", error="relativedetla")
hand("semicircle-stray-colon", "logo",
     "def draw_semicircle():\n    for i in range(HALF_INF):\n        forward(EPS_DIST * 2): \n        left(EPS_ANGLE) \n",
     status="parse-error", error="")
hand("budget", "none", "x = 0\nwhile True:\n    x += 1\n", status="budget-exceeded", error="")
hand("unbounded-recursion", "none", "def f(n):\n    return f(n + 1)\nf(0)\n", status="runtime-error", error="recursion")
hand("undefined-name", "none", "print(y)\n", status="runtime-error", error="'y'")
hand("zero-division", "none", "x = 1 / 0\n", status="runtime-error", error="division by zero")
hand("index-range", "none", "xs = [1, 2]\nprint(xs[2])\n", status="runtime-error", error="out of range")
hand("nested-target", "none", "grid = [[1]]\ngrid[0][0] = 2\n", status="parse-error", error="assignment target")
hand("no-imports", "none", "import os\n", status="parse-error", error="")
hand("no-comprehensions", "none", "xs = [i for i in range(3)]\n", status="parse-error", error="")
hand("missing-colon", "none", "if 1 < 2\n    print(1)\n", status="parse-error", error="")
hand("bad-dedent", "none", "if True:\n        x = 1\n    y = 2\n", status="parse-error", error="")
hand("top-level-return", "none", "return 1\n", status="parse-error", error="")
hand("embed-restores-pen", "logo",
     "penup()\nembed(\"pendown()\\nforward(2)\", {})\nprint(isdown())\nforward(1)\n",
     status="ok", stdout="False\n", segments=1, pose=[1.0, 0.0, 0.0])

BEEHIVE = {"goal": "beehive", "commands": [
    "craft 4 oak planks using 1 oak log",
    "craft 1 honeycomb block using 4 honeycomb",
    "craft 1 beehive using 6 planks and 3 honeycombs",
]}

hand("craft-beehive", "textcraft",
     "get_object(\"oak log\")\nget_object(\"oak log\")\ncraft_object(\"4 oak planks\", [\"1 oak log\"])\n"
     "craft_object(\"oak planks\", [\"oak log\"])\nfor i in range(3):\n    get_object(\"honeycomb\")\n"
     "ok = craft_object(\"beehive\", [\"6 oak planks\", \"3 honeycomb\"])\nprint(ok)\nprint(check_inventory())\n",
     task=BEEHIVE, status="ok", stdout="True\n{'beehive': 1, 'oak planks': 2}\n", goal=True)
CRAFT_HELPERS = ("def craft_object_with_ingredients(target,\n    ingredients):\n    inventory = check_inventory()\n"
        "    for ingredient in ingredients:\n        if ingredient not in inventory:\n"
        "            get_object_from_env(ingredient)\n        craft_object(target, ingredients)\n"
        "def check_and_get_object(target):\n    inventory = check_inventory() \n    if target not in inventory:\n"
        "        get_object(target)\n")
hand("craft-helpers", "textcraft",
     CRAFT_HELPERS + "get_object(\"oak log\")\ncraft_object_with_ingredients(\"oak planks\", [\"oak log\"])\nprint(check_inventory())\n",
     task=BEEHIVE, status="ok", stdout="{'oak planks': 4}\n", goal=False)
hand("craft-helpers-missing", "textcraft",
     CRAFT_HELPERS + "craft_object_with_ingredients(\"oak planks\", [\"oak log\"])\n",
     task=BEEHIVE, status="runtime-error", error="get_object_from_env")
hand("check-and-get", "textcraft",
     CRAFT_HELPERS + "check_and_get_object(\"honeycomb\")\ncheck_and_get_object(\"honeycomb\")\nprint(check_inventory())\n",
     task=BEEHIVE, status="ok", stdout="{'honeycomb': 1}\n", goal=False)
hand("craft-refusals", "textcraft",
     "print(get_object(\"beehive\"), get_object(\"2 oak log\"), get_object(\"planks\"))\n"
     "print(craft_object(\"beehive\", [\"6 oak planks\", \"3 honeycomb\"]), check_inventory())\n",
     task=BEEHIVE, status="ok", stdout="False False False\nFalse {}\n", goal=False)


def main():
    for c in CASES:
        if c["oracle"] == "cpython":
            run_cpython(c)
    names = [c["name"] for c in CASES]
    assert len(names) == len(set(names)), "duplicate case names"
    with open("conformance.json", "w") as f:
        json.dump(CASES, f, indent=1)
        f.write("\n")
    print(f"{len(CASES)} cases", file=sys.stderr)


if __name__ == "__main__":
    main()
