"""Random mini-language program generator.

Used for property tests (grammar coverage) and as the seed-program source
of the synthetic clone/completion benchmark. Name choice is Zipf-skewed so
that corpus-frequency statistics look like real code: a few names such as
``i`` or ``result`` are everywhere, most are rare.
"""
from __future__ import annotations

import random

VARIABLES = (
    "i j k n x y z result total count value data items item key val idx acc out buf tmp "
    "name names row rows col cols line lines word words text size length width height "
    "score scores price prices amount rate ratio limit offset start end step left right "
    "node nodes path paths record records entry entries user users order orders cost "
    "weight weights delta diff mean median peak low high first last prev curr nxt "
    "matrix vector grid cell cells token tokens label labels query answer queue stack "
    "seen visited parent child depth level mask flag state status head tail chunk batch"
).split()

FUNCTIONS = (
    "solve compute process handle parse build load save update merge split count_items "
    "find_max find_min sum_values average normalize transform filter_rows sort_items "
    "check_valid is_prime gcd lcm fib factorial reverse_list flatten group_by read_input "
    "format_output encode decode search insert remove traverse walk collect reduce_all "
    "score_rows rank_items scale_values clip_values accumulate window_sum prefix_sum "
    "count_words unique_items top_k bucketize histogram convert evaluate simulate step_once"
).split()

PARAMETERS = (
    "a b c n m k xs ys arr nums values data items seq text s t grid matrix limit target "
    "lo hi base size width depth key default node edges weights threshold"
).split()

APIS = (
    "math.sqrt math.floor math.ceil math.log math.exp math.pow os.path.join os.path.exists "
    "os.listdir json.loads json.dumps re.match re.sub re.findall random.choice random.randint "
    "random.shuffle time.time time.sleep collections.Counter collections.deque itertools.chain "
    "itertools.product functools.reduce heapq.heappush heapq.heappop bisect.bisect_left "
    "np.array np.mean np.sum np.zeros np.dot np.argmax string.ascii_lowercase.index sys.exit "
    "logging.info logging.debug statistics.median copy.deepcopy"
).split()

METHODS = "append pop extend insert index count sort reverse get keys values items split strip join lower upper replace".split()
BUILTINS = "len print range sorted sum max min abs int str list dict set enumerate zip".split()
WORDS = "alpha beta gamma delta red green blue north south east west left right up down yes no ok err".split()


def _zipf_weights(n: int, s: float = 1.1) -> list[float]:
    return [1.0 / (r + 1) ** s for r in range(n)]


_VAR_W = _zipf_weights(len(VARIABLES))
_FUN_W = _zipf_weights(len(FUNCTIONS), 0.8)
_PAR_W = _zipf_weights(len(PARAMETERS))
_API_W = _zipf_weights(len(APIS), 0.5)


class ProgramGenerator:
    """Generate one random program per call to :meth:`program`."""

    def __init__(self, rng: random.Random, max_depth: int = 2):
        self.rng = rng
        self.max_depth = max_depth

    # naming

    def _pick(self, pool, weights, k: int, exclude: set[str]) -> list[str]:
        out: list[str] = []
        while len(out) < k:
            name = self.rng.choices(pool, weights)[0]
            if name not in exclude and name not in out:
                out.append(name)
        return out

    def literal(self) -> str:
        if self.rng.random() < 0.75:
            return str(self.rng.randint(0, 99))
        return f"'{self.rng.choice(WORDS)}'"

    # expressions

    def atom(self, names: list[str]) -> str:
        r = self.rng.random()
        if r < 0.55 and names:
            return self.rng.choice(names)
        if r < 0.85:
            return self.literal()
        return self.call(names, depth=1)

    def call(self, names: list[str], depth: int = 0) -> str:
        r = self.rng.random()
        nargs = self.rng.randint(0, 2)
        args = ", ".join(self.expr(names, depth + 1) for _ in range(nargs))
        if r < 0.45:
            api = self.rng.choice(self.apis)
            return f"{api}({args})"
        if r < 0.7 and names:
            return f"{self.rng.choice(names)}.{self.rng.choice(METHODS)}({args})"
        if r < 0.85 and self.funcs:
            return f"{self.rng.choice(self.funcs)}({args})"
        return f"{self.rng.choice(BUILTINS)}({args})"

    def expr(self, names: list[str], depth: int = 0) -> str:
        if depth >= 2:
            return self.atom(names)
        r = self.rng.random()
        if r < 0.35:
            return self.atom(names)
        if r < 0.6:
            op = self.rng.choice(["+", "-", "*", "//", "%", "/"])
            return f"{self.atom(names)} {op} {self.expr(names, depth + 1)}"
        if r < 0.8:
            return self.call(names, depth)
        if r < 0.87 and names:
            return f"{self.rng.choice(names)}[{self.atom(names)}]"
        if r < 0.94:
            return "[" + ", ".join(self.atom(names) for _ in range(self.rng.randint(0, 3))) + "]"
        return f"-{self.atom(names)}"

    def cond(self, names: list[str]) -> str:
        op = self.rng.choice(["<", ">", "<=", ">=", "==", "!=", "in", "not in"])
        base = f"{self.atom(names)} {op} {self.expr(names, 1)}"
        r = self.rng.random()
        if r < 0.15:
            return f"not {base}"
        if r < 0.3:
            return f"{base} and {self.atom(names)}"
        if r < 0.4:
            return f"{base} or {self.atom(names)}"
        return base

    # statements

    def block(self, names: list[str], indent: int, depth: int, n: int, in_loop: bool) -> list[str]:
        lines: list[str] = []
        for _ in range(n):
            lines.extend(self.statement(names, indent, depth, in_loop))
        return lines

    def statement(self, names: list[str], indent: int, depth: int, in_loop: bool) -> list[str]:
        pad = "    " * indent
        r = self.rng.random()
        if depth < self.max_depth and r < 0.12:
            lines = [f"{pad}if {self.cond(names)}:"]
            lines += self.block(names, indent + 1, depth + 1, self.rng.randint(1, 3), in_loop)
            if self.rng.random() < 0.4:
                lines.append(f"{pad}else:")
                lines += self.block(names, indent + 1, depth + 1, self.rng.randint(1, 2), in_loop)
            return lines
        if depth < self.max_depth and r < 0.2:
            var = self.rng.choice(self.loop_vars)
            src = self.rng.choice([f"range({self.atom(names)})", self.rng.choice(names) if names else "[]"])
            lines = [f"{pad}for {var} in {src}:"]
            lines += self.block(names + [var], indent + 1, depth + 1, self.rng.randint(1, 3), True)
            return lines
        if depth < self.max_depth and r < 0.24:
            lines = [f"{pad}while {self.cond(names)}:"]
            lines += self.block(names, indent + 1, depth + 1, self.rng.randint(1, 2), True)
            return lines
        if in_loop and r < 0.27:
            return [pad + self.rng.choice(["break", "continue"])]
        if r < 0.29:
            return [pad + "pass"]
        if r < 0.7:
            target = self.rng.choice(self.local_vars)
            if target not in names:
                rhs = self.expr(names)
                names.append(target)
                return [f"{pad}{target} = {rhs}"]
            op = self.rng.choice(["=", "=", "+=", "-=", "*="])
            return [f"{pad}{target} {op} {self.expr(names)}"]
        if r < 0.78 and names:
            tgt = self.rng.choice(names)
            return [f"{pad}{tgt}[{self.atom(names)}] = {self.expr(names)}"]
        return [f"{pad}{self.call(names)}"]

    def function(self, name: str) -> list[str]:
        params = self._pick(PARAMETERS, _PAR_W, self.rng.randint(0, 3), set(self.local_vars) | set(self.funcs))
        names = list(params)
        lines = [f"def {name}({', '.join(params)}):"]
        lines += self.block(names, 1, 0, self.rng.randint(2, 5), False)
        lines.append(f"    return {self.expr(names)}")
        return lines

    def program(self) -> str:
        rng = self.rng
        self.funcs = self._pick(FUNCTIONS, _FUN_W, rng.randint(1, 2), set())
        self.local_vars = self._pick(VARIABLES, _VAR_W, rng.randint(4, 8), set(self.funcs))
        self.loop_vars = self._pick(["i", "j", "k", "idx", "item", "x"], [6, 3, 2, 1, 1, 1], 2, set(self.funcs))
        self.local_vars = [v for v in self.local_vars if v not in self.loop_vars] or ["result"]
        self.apis = rng.sample(APIS, 4)
        lines: list[str] = []
        for f in self.funcs:
            lines += self.function(f)
        names: list[str] = []
        lines += self.block(names, 0, 0, rng.randint(1, 3), False)
        lines.append(f"print({self.funcs[-1]}({', '.join(self.atom(names) for _ in range(rng.randint(0, 2)))}))")
        return "\n".join(lines) + "\n"


def generate_program(seed: int, max_depth: int = 2) -> str:
    return ProgramGenerator(random.Random(seed), max_depth).program()


def generate_programs(count: int, seed: int, max_depth: int = 2) -> list[str]:
    return [generate_program(seed * 1_000_003 + i, max_depth) for i in range(count)]
