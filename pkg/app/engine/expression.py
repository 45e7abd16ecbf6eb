"""
Parser for local-function expressions.

Grammar (whitespace is ignored)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "·") unary)*
    unary  := ("+" | "-") unary | power
    power  := atom (("^" | "**") INT)?
    atom   := NUMBER ("/" NUMBER)?
            | "eta" "(" INT ("," INT)* ")"
            | "(" expr ")"
    NUMBER := digits ("." digits)?
    INT    := "-"? digits

Examples: ``eta(0)^2``, ``eta(0)*eta(1) - 1/2``, ``3``, ``(eta(0,0) - 2)^3``.
Arithmetic is exact (rationals) until the final LocalFunctionSpec is built.
"""

import re
from dataclasses import dataclass
from fractions import Fraction

from app.errors import ParseError
from app.models.local_function import LocalFunctionSpec, Monomial

_TOKEN = re.compile(r"\s*(?:(\d+(?:\.\d+)?)|(eta)\b|(\*\*|[-+*·^/(),]))")

Polynomial = dict[Monomial, Fraction]


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    position: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    position = 0
    while position < len(text):
        if text[position:].strip() == "":
            break
        match = _TOKEN.match(text, position)
        if not match:
            start = position + len(text[position:]) - len(text[position:].lstrip())
            raise ParseError(f"Unexpected character {text[start]!r}", start)
        start = match.start(match.lastindex)
        if match.group(1):
            tokens.append(Token("number", match.group(1), start))
        elif match.group(2):
            tokens.append(Token("eta", "eta", start))
        else:
            tokens.append(Token("op", match.group(3), start))
        position = match.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


def _multiply(a: Polynomial, b: Polynomial) -> Polynomial:
    out: Polynomial = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            powers = dict(ma)
            for site, e in mb:
                powers[site] = powers.get(site, 0) + e
            key = tuple(sorted(powers.items()))
            out[key] = out.get(key, Fraction(0)) + ca * cb
    return {m: c for m, c in out.items() if c != 0}


def _add(a: Polynomial, b: Polynomial, sign: int = 1) -> Polynomial:
    out = dict(a)
    for m, c in b.items():
        out[m] = out.get(m, Fraction(0)) + sign * c
    return {m: c for m, c in out.items() if c != 0}


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = tokenize(text)
        self.index = 0
        self.dimension = None

    @property
    def current(self) -> Token:
        return self.tokens[self.index]

    def advance(self) -> Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, text: str) -> Token:
        if self.current.text != text:
            found = self.current.text or "end of input"
            raise ParseError(f"Expected {text!r} but found {found!r}", self.current.position)
        return self.advance()

    def parse(self) -> Polynomial:
        if self.current.kind == "end":
            raise ParseError("Empty expression", 0)
        value = self.expr()
        if self.current.kind != "end":
            raise ParseError(f"Unexpected {self.current.text!r}", self.current.position)
        return value

    def expr(self) -> Polynomial:
        value = self.term()
        while self.current.text in ("+", "-"):
            sign = 1 if self.advance().text == "+" else -1
            value = _add(value, self.term(), sign)
        return value

    def term(self) -> Polynomial:
        value = self.unary()
        while self.current.text in ("*", "·"):
            self.advance()
            value = _multiply(value, self.unary())
        return value

    def unary(self) -> Polynomial:
        if self.current.text in ("+", "-"):
            sign = 1 if self.advance().text == "+" else -1
            return {m: sign * c for m, c in self.unary().items()}
        return self.power()

    def power(self) -> Polynomial:
        base = self.atom()
        if self.current.text in ("^", "**"):
            self.advance()
            token = self.current
            if token.kind != "number" or "." in token.text:
                raise ParseError("Exponent must be a non-negative integer", token.position)
            self.advance()
            result: Polynomial = {(): Fraction(1)}
            for _ in range(int(token.text)):
                result = _multiply(result, base)
            return result
        return base

    def integer(self) -> int:
        sign = 1
        if self.current.text == "-":
            self.advance()
            sign = -1
        token = self.current
        if token.kind != "number" or "." in token.text:
            raise ParseError("Expected an integer site coordinate", token.position)
        self.advance()
        return sign * int(token.text)

    def atom(self) -> Polynomial:
        token = self.current
        if token.kind == "number":
            self.advance()
            value = Fraction(token.text)
            if self.current.text == "/":
                self.advance()
                denominator = self.current
                if denominator.kind != "number":
                    raise ParseError("Expected a number after '/'", denominator.position)
                self.advance()
                if Fraction(denominator.text) == 0:
                    raise ParseError("Division by zero", denominator.position)
                value /= Fraction(denominator.text)
            return {(): value} if value else {}
        if token.kind == "eta":
            self.advance()
            self.expect("(")
            coords = [self.integer()]
            while self.current.text == ",":
                self.advance()
                coords.append(self.integer())
            self.expect(")")
            if self.dimension is None:
                self.dimension = len(coords)
            elif self.dimension != len(coords):
                raise ParseError(f"Site has {len(coords)} coordinates, expected {self.dimension}", token.position)
            return {((tuple(coords), 1),): Fraction(1)}
        if token.text == "(":
            self.advance()
            value = self.expr()
            self.expect(")")
            return value
        found = token.text or "end of input"
        raise ParseError(f"Unexpected {found!r}", token.position)


def parse_local_function(text: str) -> LocalFunctionSpec:
    """Parse an expression over eta(x) into a LocalFunctionSpec."""
    polynomial = _Parser(text).parse()
    return LocalFunctionSpec(terms=tuple((m, float(c)) for m, c in polynomial.items()))
