"""Model-formula mini-language: parsing to a ModelSpec and canonical formatting.

Grammar::

    formula  := response '~' term ('+' term)*
    term     := identifier
              | '1'
              | 's(' id [',' id] ', bs=' quoted('re') ')'
              | 's(' id [', by=' id] ', bs=' quoted('mrf') [', k=' int] ')'
              | 'offset(' id ')'
              | 'offset(log(' id '))'

Whitespace-insensitive; single or double quotes around the bs value. Errors
carry the exact byte offset into the source and the set of tokens that would
have been accepted there.
"""

from __future__ import annotations

import re as _re
from dataclasses import dataclass, field


class FormulaError(ValueError):
    """Syntax or semantic error in a model formula."""

    def __init__(self, message: str, position: int | None = None, expected: tuple[str, ...] = ()):
        self.position = position
        self.expected = expected
        at = f" at byte {position}" if position is not None else ""
        want = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(f"{message}{at}{want}")


@dataclass(frozen=True)
class ModelSpec:
    """Parsed model skeleton: response, fixed terms, penalized terms, offset."""

    response: str
    family: str = "gaussian"
    fixed: tuple[str, ...] = ()
    re_intercepts: tuple[str, ...] = ()
    re_slopes: tuple[tuple[str, str], ...] = ()
    mrf_intercepts: tuple[tuple[str, int | None], ...] = ()
    mrf_slopes: tuple[tuple[str, str, int | None], ...] = ()
    offset: tuple[str, bool] | None = None  # (variable, log-wrapped)

    def __post_init__(self) -> None:
        if not self.response:
            raise FormulaError("response variable must be non-empty")
        if self.family not in ("gaussian", "poisson"):
            raise FormulaError(f"unknown family {self.family!r}: expected 'gaussian' or 'poisson'")
        covariates = list(self.fixed)
        covariates += [cov for _, cov in self.re_slopes]
        covariates += [by for _, by, _ in self.mrf_slopes]
        if self.offset is not None:
            covariates.append(self.offset[0])
        if self.response in covariates:
            raise FormulaError(f"response {self.response!r} cannot also appear as a covariate")
        keys = self.term_keys()
        dup = {k for k in keys if keys.count(k) > 1}
        if dup:
            raise FormulaError(f"duplicate term(s): {sorted(dup)}")

    def term_keys(self) -> list[tuple]:
        keys: list[tuple] = [("fixed", name) for name in self.fixed]
        keys += [("re", g, None) for g in self.re_intercepts]
        keys += [("re", g, cov) for g, cov in self.re_slopes]
        keys += [("mrf", g, None) for g, _ in self.mrf_intercepts]
        keys += [("mrf", g, by) for g, by, _ in self.mrf_slopes]
        return keys

    @property
    def n_penalized(self) -> int:
        return (
            len(self.re_intercepts)
            + len(self.re_slopes)
            + len(self.mrf_intercepts)
            + len(self.mrf_slopes)
        )


# -- tokenizer -----------------------------------------------------------------

_IDENT = _re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_INT = _re.compile(r"[0-9]+")


@dataclass
class _Token:
    kind: str  # IDENT INT STRING SYM EOF
    value: str | int
    pos: int  # character offset into src


def _byte_offset(src: str, char_pos: int) -> int:
    return len(src[:char_pos].encode("utf-8"))


def _tokenize(src: str) -> list[_Token]:
    out: list[_Token] = []
    i, n = 0, len(src)
    while i < n:
        ch = src[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "~+,()=":
            out.append(_Token("SYM", ch, i))
            i += 1
            continue
        if ch in "'\"":
            end = src.find(ch, i + 1)
            if end == -1:
                raise FormulaError(
                    "unterminated quoted string", _byte_offset(src, i), ("closing quote",)
                )
            out.append(_Token("STRING", src[i + 1 : end], i))
            i = end + 1
            continue
        m = _INT.match(src, i)
        if m:
            out.append(_Token("INT", int(m.group()), i))
            i = m.end()
            continue
        m = _IDENT.match(src, i)
        if m:
            out.append(_Token("IDENT", m.group(), i))
            i = m.end()
            continue
        raise FormulaError(
            f"unexpected character {ch!r}", _byte_offset(src, i),
            ("identifier", "integer", "punctuation"),
        )
    out.append(_Token("EOF", "", n))
    return out


# -- parser --------------------------------------------------------------------

class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.toks = _tokenize(src)
        self.at = 0

    def peek(self, ahead: int = 0) -> _Token:
        return self.toks[min(self.at + ahead, len(self.toks) - 1)]

    def take(self) -> _Token:
        tok = self.toks[self.at]
        if tok.kind != "EOF":
            self.at += 1
        return tok

    def fail(self, tok: _Token, expected: tuple[str, ...]):
        found = "end of formula" if tok.kind == "EOF" else repr(str(tok.value))
        raise FormulaError(
            f"unexpected {found}", _byte_offset(self.src, tok.pos), tuple(sorted(expected))
        )

    def expect_sym(self, sym: str, described: str | None = None) -> _Token:
        tok = self.peek()
        if tok.kind == "SYM" and tok.value == sym:
            return self.take()
        self.fail(tok, (described or f"'{sym}'",))

    def expect_ident(self, described: str = "identifier") -> _Token:
        tok = self.peek()
        if tok.kind == "IDENT":
            return self.take()
        self.fail(tok, (described,))

    # formula := response '~' term ('+' term)*
    def parse(self) -> ModelSpec:
        response = self.expect_ident("identifier (response)").value
        self.expect_sym("~")
        fixed: list[str] = []
        re_int: list[str] = []
        re_slp: list[tuple[str, str]] = []
        mrf_int: list[tuple[str, int | None]] = []
        mrf_slp: list[tuple[str, str, int | None]] = []
        offset: tuple[str, bool] | None = None
        seen: set[tuple] = set()

        while True:
            tok = self.peek()
            key = None
            if tok.kind == "INT" and tok.value == 1:
                self.take()
                key = ("intercept",)
            elif tok.kind == "IDENT" and tok.value == "s" and self.peek(1).value == "(":
                key = self._smooth(re_int, re_slp, mrf_int, mrf_slp)
            elif tok.kind == "IDENT" and tok.value == "offset" and self.peek(1).value == "(":
                if offset is not None:
                    raise FormulaError(
                        "duplicate offset term", _byte_offset(self.src, tok.pos)
                    )
                offset = self._offset()
            elif tok.kind == "IDENT":
                self.take()
                fixed.append(tok.value)
                key = ("fixed", tok.value)
            else:
                self.fail(tok, ("identifier", "'1'", "'s('", "'offset('"))

            if key is not None:
                if key in seen:
                    raise FormulaError(
                        f"duplicate term {str(tok.value)!r}", _byte_offset(self.src, tok.pos)
                    )
                seen.add(key)

            nxt = self.peek()
            if nxt.kind == "SYM" and nxt.value == "+":
                self.take()
                continue
            if nxt.kind == "EOF":
                break
            self.fail(nxt, ("'+'", "end of formula"))

        return ModelSpec(
            response=response,
            fixed=tuple(fixed),
            re_intercepts=tuple(re_int),
            re_slopes=tuple(re_slp),
            mrf_intercepts=tuple(mrf_int),
            mrf_slopes=tuple(mrf_slp),
            offset=offset,
        )

    def _smooth(self, re_int, re_slp, mrf_int, mrf_slp) -> tuple:
        self.take()  # s
        self.take()  # (
        group = self.expect_ident("identifier (grouping variable)").value
        self.expect_sym(",")

        cov: str | None = None
        by: str | None = None
        tok = self.peek()
        if tok.kind == "IDENT" and tok.value == "by" and self.peek(1).value == "=":
            self.take()
            self.take()
            by = self.expect_ident("identifier (by-covariate)").value
            self.expect_sym(",")
        elif tok.kind == "IDENT" and tok.value != "bs":
            cov = self.take().value
            self.expect_sym(",")
        elif tok.kind != "IDENT":
            self.fail(tok, ("identifier", "'by='", "'bs='"))

        bs_tok = self.expect_ident("'bs='")
        if bs_tok.value != "bs":
            self.fail(bs_tok, ("'bs='",))
        self.expect_sym("=")
        val_tok = self.peek()
        if val_tok.kind != "STRING":
            self.fail(val_tok, ("quoted basis name ('re' or 'mrf')",))
        self.take()
        bs = val_tok.value

        if bs == "re":
            if by is not None:
                raise FormulaError(
                    "'by=' grouping is only valid for bs='mrf'",
                    _byte_offset(self.src, val_tok.pos),
                )
            self.expect_sym(")")
            if cov is None:
                re_int.append(group)
                return ("re", group, None)
            re_slp.append((group, cov))
            return ("re", group, cov)

        if bs == "mrf":
            if cov is not None:
                raise FormulaError(
                    "a second positional identifier is only valid for bs='re'; "
                    "use by=<covariate> for mrf terms",
                    _byte_offset(self.src, val_tok.pos),
                )
            k: int | None = None
            nxt = self.peek()
            if nxt.kind == "SYM" and nxt.value == ",":
                self.take()
                k_tok = self.expect_ident("'k='")
                if k_tok.value != "k":
                    self.fail(k_tok, ("'k='",))
                self.expect_sym("=")
                int_tok = self.peek()
                if int_tok.kind != "INT" or int_tok.value < 1:
                    self.fail(int_tok, ("positive integer",))
                self.take()
                k = int_tok.value
            self.expect_sym(")")
            if by is None:
                mrf_int.append((group, k))
                return ("mrf", group, None)
            mrf_slp.append((group, by, k))
            return ("mrf", group, by)

        raise FormulaError(
            f"unknown bs value {bs!r}: expected 're' or 'mrf'",
            _byte_offset(self.src, val_tok.pos),
        )

    def _offset(self) -> tuple[str, bool]:
        self.take()  # offset
        self.take()  # (
        tok = self.expect_ident("identifier or 'log('")
        if tok.value == "log" and self.peek().value == "(":
            self.take()
            var = self.expect_ident("identifier (offset variable)").value
            self.expect_sym(")")
            self.expect_sym(")")
            return (var, True)
        self.expect_sym(")")
        return (tok.value, False)


def parse_formula(src: str) -> ModelSpec:
    """Parse the mini-language into a ModelSpec (family defaults to gaussian)."""
    if not src or not src.strip():
        raise FormulaError("empty formula", 0, ("identifier (response)",))
    return _Parser(src).parse()


def format_formula(spec: ModelSpec) -> str:
    """Canonical text rendering; parse_formula(format_formula(s)) == s."""
    terms: list[str] = list(spec.fixed)
    terms += [f"s({g}, bs='re')" for g in spec.re_intercepts]
    terms += [f"s({g}, {cov}, bs='re')" for g, cov in spec.re_slopes]
    for g, k in spec.mrf_intercepts:
        terms.append(f"s({g}, bs='mrf')" if k is None else f"s({g}, bs='mrf', k={k})")
    for g, by, k in spec.mrf_slopes:
        suffix = "" if k is None else f", k={k}"
        terms.append(f"s({g}, by={by}, bs='mrf'{suffix})")
    if spec.offset is not None:
        var, logged = spec.offset
        terms.append(f"offset(log({var}))" if logged else f"offset({var})")
    if not terms:
        terms = ["1"]
    return f"{spec.response} ~ " + " + ".join(terms)
