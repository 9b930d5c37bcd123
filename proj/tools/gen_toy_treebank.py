#!/usr/bin/env python3
"""Generate the bundled toy treebanks.

Writes PTB-style bracketed trees plus token-aligned CoNLL-X dependencies.
Head children are marked with '^' in the internal notation and dependencies
are read off those marks, so both files describe the same sentences.

    python3 tools/gen_toy_treebank.py data/
"""

import random
import re
import sys
from pathlib import Path

# Hand-written trees. '^' marks the head child.
HANDWRITTEN = [
    "(S (NP-SBJ (DT The) (NN luxury) (NN auto) (^NN maker)) (NP-TMP (JJ last) (^NN year))"
    " (^VP (^VBD sold) (NP (CD 1,214) (^NNS cars)) (PP-LOC (IN in) (^NP (DT the) (^NNP U.S.)))) (. .))",
    "(S (NP-SBJ (^PRP I)) (^VP (VBP am) (^VP (^VBG walking) (PP-CLR (IN on) (^NP (DT the) (^NN moon))))) (. .))",
    "(S (NP-SBJ (DT The) (^NN company)) (^VP (^VBD had) (VP (^VBN sought) (NP (^NP (^NNS increases))"
    " (VP (^VBG totaling) (NP (^NP (^QP ($ $) (CD 80.3) (^CD million))) (, ,) (CC or) (NP (CD 22) (^NN %)))))))) (. .))",
    "(S (NP-SBJ (^NP (NNP Pierre) (^NNP Vinken)) (, ,) (ADJP (NP (CD 61) (^NNS years)) (^JJ old)) (, ,))"
    " (^VP (MD will) (^VP (^VB join) (NP (DT the) (^NN board)) (PP-CLR (IN as) (^NP (DT a) (JJ nonexecutive) (^NN director)))"
    " (NP-TMP (^NNP Nov.) (CD 29)))) (. .))",
    "(S (NP-SBJ (NNP Mr.) (^NNP Vinken)) (^VP (^VBZ is) (NP-PRD (^NP (^NN chairman)) (PP (IN of) (^NP (^NP (NNP Elsevier) (^NNP N.V.))"
    " (, ,) (NP (DT the) (NNP Dutch) (VBG publishing) (^NN group)))))) (. .))",
    "(S (NP-SBJ (^NP (NNP Dale) (^NNP Lang)) (, ,) (SBAR (WHNP-1 (^WP who)) (^S (NP-SBJ (-NONE- *T*-1)) (NP-TMP (DT this) (^NN week))"
    " (^VP (^VBD completed) (NP (^NP (DT the) (^NN acquisition)) (PP (IN of) (^NP (DT the) (^NN publisher))))))) (, ,))"
    " (^VP (^VBD said) (SBAR (-NONE- 0) (^S (NP-SBJ (^PRP it)) (^VP (^VBD grew) (ADVP (^RB quickly)))))) (. .))",
    "(S (ADVP (^RB now)) (NP-SBJ (^PRP we)) (^VP (^VBP wait)) (. .))",
]

LEX = {
    "DT": ["the", "a", "every", "this", "some", "each", "no"],
    "NN": ["company", "board", "director", "market", "price", "year", "bank", "plan", "report",
           "group", "unit", "firm", "chairman", "loss", "stake", "deal", "share", "rate"],
    "NNS": ["cars", "shares", "investors", "prices", "sales", "profits", "analysts", "bonds",
            "workers", "years", "orders", "funds"],
    "NNP": ["Vinken", "Elsevier", "Boston", "Ford", "Sony", "Texas", "Smith", "Jones", "Japan", "Reuters"],
    "JJ": ["new", "big", "strong", "weak", "dutch", "federal", "annual", "recent", "nonexecutive", "major"],
    "VBD": ["sold", "bought", "reported", "acquired", "lost", "raised", "expected", "announced", "cut"],
    "VBD_intr": ["rose", "fell", "slipped", "gained", "declined"],
    "VBD_comp": ["said", "noted", "argued", "believed"],
    "VB": ["buy", "sell", "raise", "join", "cut", "acquire"],
    "MD": ["will", "would", "could", "may"],
    "IN": ["in", "of", "on", "for", "from", "with", "at", "by"],
    "RB": ["sharply", "quickly", "also", "still", "recently", "slightly"],
    "CD": ["12", "61", "1,214", "80.3", "two", "three", "29", "5,400"],
    "PRP": ["it", "they", "he", "she", "we"],
    "CC": ["and", "or", "but"],
    "WDT": ["which", "that"],
}


class Gen:
    def __init__(self, rng):
        self.rng = rng
        self.trace = 0

    def word(self, pos):
        key = pos
        return self.rng.choice(LEX[key])

    def leaf(self, pos, lexpos=None, head=False):
        w = self.word(lexpos or pos)
        return f"({'^' if head else ''}{pos} {w})"

    def np(self, depth, tag="", head=False):
        h = "^" if head else ""
        lab = "NP" + (f"-{tag}" if tag else "")
        r = self.rng.random()
        if depth <= 0 or r < 0.45:
            choice = self.rng.randrange(5)
            if choice == 0:
                return f"({h}{lab} {self.leaf('DT')} {self.leaf('NN', head=True)})"
            if choice == 1:
                return f"({h}{lab} {self.leaf('DT')} {self.leaf('JJ')} {self.leaf('NN', head=True)})"
            if choice == 2:
                return f"({h}{lab} {self.leaf('NNP')} {self.leaf('NNP', head=True)})"
            if choice == 3:
                return f"({h}{lab} {self.leaf('CD')} {self.leaf('NNS', head=True)})"
            return f"({h}{lab} {self.leaf('PRP', head=True)})"
        if r < 0.7:
            return f"({h}{lab} {self.np(depth - 1, head=True)} {self.pp(depth - 1)})"
        if r < 0.8:
            return (f"({h}{lab} {self.np(depth - 1, head=True)} (, ,) {self.leaf('CC')} "
                    f"{self.np(depth - 1)})")
        if r < 0.9:
            self.trace += 1
            t = self.trace
            return (f"({h}{lab} {self.np(depth - 1, head=True)} (SBAR (WHNP-{t} (^WDT {self.word('WDT')}))"
                    f" (^S (NP-SBJ (-NONE- *T*-{t})) {self.vp(depth - 1, head=True)})))")
        return f"({h}{lab} {self.leaf('NNS', head=True)})"

    def pp(self, depth, tag=""):
        lab = "PP" + (f"-{tag}" if tag else "")
        return f"({lab} {self.leaf('IN')} {self.np(depth, head=True)})"

    def vp(self, depth, head=False):
        h = "^" if head else ""
        r = self.rng.random()
        if depth <= 0 or r < 0.3:
            return f"({h}VP {self.leaf('VBD', head=True)} {self.np(0)})"
        if r < 0.45:
            return f"({h}VP {self.leaf('VBD', 'VBD_intr', head=True)} (ADVP (^RB {self.word('RB')})))"
        if r < 0.6:
            loc = self.rng.choice(["LOC", "TMP", "DIR", ""])
            return f"({h}VP {self.leaf('VBD', head=True)} {self.np(depth - 1)} {self.pp(depth - 1, loc)})"
        if r < 0.75:
            return f"({h}VP {self.leaf('MD')} (^VP {self.leaf('VB', head=True)} {self.np(depth - 1)}))"
        if r < 0.88:
            return (f"({h}VP {self.leaf('VBD', 'VBD_comp', head=True)} (SBAR (-NONE- 0) "
                    f"{self.s(depth - 1, head=True, punct=False)}))")
        return f"({h}VP {self.leaf('VBD', 'VBD_intr', head=True)} {self.pp(depth - 1, 'DIR')})"

    def s(self, depth, head=False, punct=True):
        h = "^" if head else ""
        parts = []
        if self.rng.random() < 0.15:
            parts.append(f"(ADVP (^RB {self.word('RB')}))")
            if punct:
                parts.append("(, ,)")
        parts.append(self.np(depth - 1, "SBJ"))
        parts.append(self.vp(depth, head=True))
        if punct:
            parts.append("(. .)")
        return f"({h}S {' '.join(parts)})"


TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")


def parse(text):
    toks = TOKEN_RE.findall(text)
    pos = 0

    def node():
        nonlocal pos
        assert toks[pos] == "("
        pos += 1
        label = toks[pos]
        pos += 1
        if toks[pos] != "(":
            word = toks[pos]
            pos += 2
            return {"label": label, "word": word}
        kids = []
        while toks[pos] == "(":
            kids.append(node())
        pos += 1
        return {"label": label, "kids": kids}

    return node()


def is_head(n):
    return n["label"].startswith("^")


def clean(label):
    return label.lstrip("^")


def to_ptb(n):
    if "word" in n:
        return f"({clean(n['label'])} {n['word']})"
    return f"({clean(n['label'])} {' '.join(to_ptb(k) for k in n['kids'])})"


def is_null(n):
    if "word" in n:
        return clean(n["label"]) == "-NONE-"
    return all(is_null(k) for k in n["kids"])


def base(label):
    lab = clean(label)
    if lab.startswith("-"):
        return lab
    return re.split(r"[-=]", lab)[0]


def relation(parent, child):
    p, c = base(parent["label"]), base(child["label"])
    full = clean(child["label"])
    if c in (",", ".", ":"):
        return "punct"
    if "word" in child:
        return {"DT": "det", "JJ": "amod", "CD": "nummod", "IN": "case", "MD": "aux", "VBP": "aux",
                "VBZ": "cop", "RB": "advmod", "CC": "cc", "NNP": "compound", "NN": "compound",
                "VBG": "amod", "$": "dep", "PRP": "nsubj", "WDT": "nsubj", "WP": "nsubj"}.get(c, "dep")
    if full.startswith("NP-SBJ"):
        return "nsubj"
    if full.startswith("NP-TMP"):
        return "obl:tmod"
    if c == "NP":
        return "obj" if p == "VP" else ("conj" if p == "NP" else "nmod")
    if c == "PP":
        return "obl" if p in ("VP", "S") else "nmod"
    if c == "SBAR":
        return "ccomp" if p == "VP" else "acl:relcl"
    if c == "WHNP":
        return "nsubj"
    if c == "ADVP":
        return "advmod"
    if c == "ADJP":
        return "amod"
    if c == "QP":
        return "nummod"
    if c in ("VP", "S"):
        return "acl" if p == "NP" else "xcomp"
    return "dep"


def dependencies(tree):
    """Return [(form, pos, head, rel)] for the non-null tokens of `tree`."""
    leaves = []

    def collect(n):
        if "word" in n:
            if clean(n["label"]) != "-NONE-":
                n["index"] = len(leaves) + 1
                leaves.append(n)
            return
        for k in n["kids"]:
            collect(k)

    collect(tree)
    heads = {}
    rels = {}

    def lexhead(n):
        if "word" in n:
            return n["index"]
        live = [k for k in n["kids"] if not is_null(k)]
        marked = [k for k in live if is_head(k)]
        h = marked[0] if marked else live[-1]
        hidx = lexhead(h)
        for k in live:
            if k is h:
                continue
            kidx = lexhead(k)
            heads[kidx] = hidx
            rels[kidx] = relation(n, k)
        return hidx

    root = lexhead(tree)
    heads[root] = 0
    rels[root] = "root"
    return [(n["word"], clean(n["label"]), heads[n["index"]], rels[n["index"]]) for n in leaves]


def write(trees, out_prefix):
    with open(f"{out_prefix}.mrg", "w") as mrg, open(f"{out_prefix}.conllx", "w") as dep:
        for t in trees:
            tree = parse(t)
            mrg.write(to_ptb(tree) + "\n")
            for i, (form, pos, head, rel) in enumerate(dependencies(tree), 1):
                dep.write(f"{i}\t{form}\t_\t{pos}\t{pos}\t_\t{head}\t{rel}\t_\t_\n")
            dep.write("\n")


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else "data")
    out.mkdir(parents=True, exist_ok=True)
    rng = random.Random(20231)
    gen = Gen(rng)
    toy = list(HANDWRITTEN)
    while len(toy) < 50:
        toy.append(gen.s(rng.randrange(2, 4)))
    write(toy, out / "toy")

    rng = random.Random(7)
    gen = Gen(rng)
    big = []
    count = 0
    while count < 2000:
        t = gen.s(rng.randrange(2, 5))
        n = len(dependencies(parse(t)))
        if count + n > 2000:
            continue
        big.append(t)
        count += n
    write(big, out / "nonce2k")


if __name__ == "__main__":
    main()
