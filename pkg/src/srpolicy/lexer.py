"""Tokenizer for ``.sr`` policy source."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Any

from .diagnostics import Diagnostic, SourceSpan, error

KEYWORDS = frozenset(
    {
        "SIGNAL",
        "SIGNAL_GROUP",
        "DECISION_TREE",
        "ROUTE",
        "PRIORITY",
        "WHEN",
        "MODEL",
        "BACKEND",
        "IF",
        "ELSE",
        "AND",
        "OR",
        "NOT",
        "NETWORK",
        "AGENT",
        "DEPLOY",
        "TEST",
        "GLOBAL",
        "PLUGIN",
    }
)

PUNCT = "{}[]():,="


class Tok(enum.Enum):
    KEYWORD = "keyword"
    IDENT = "ident"
    STRING = "string"
    NUMBER = "number"
    BOOL = "bool"
    PUNCT = "punct"
    EOF = "eof"


@dataclass(frozen=True)
class Token:
    type: Tok
    text: str
    value: Any
    line: int
    col: int
    end_line: int
    end_col: int

    def span(self, file: str) -> SourceSpan:
        return SourceSpan(file, self.line, self.col, self.end_line, self.end_col)

    def is_punct(self, ch: str) -> bool:
        return self.type is Tok.PUNCT and self.text == ch

    def is_kw(self, kw: str) -> bool:
        return self.type is Tok.KEYWORD and self.text == kw


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
# Greedy run of number-ish characters; validated separately so `1.2.3` or `12ab` is one bad token.
_NUMBERISH = re.compile(r"-?[0-9][0-9A-Za-z_.]*|-\.?[0-9A-Za-z_.]*")
_DIGITS = "0123456789"
_NUMBER = re.compile(r"-?[0-9]+(\.[0-9]+)?\Z")
_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r", "/": "/"}


def tokenize(source: str, file: str = "<input>") -> tuple[list[Token], list[Diagnostic]]:
    """Split source into tokens. Comments (``#`` to end of line) are dropped.

    Lexical errors are reported and the offending text skipped, so the token
    stream is always usable for error recovery.
    """
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    i, line, col = 0, 1, 1
    n = len(source)

    def span_to(start_line: int, start_col: int, end_col: int) -> SourceSpan:
        return SourceSpan(file, start_line, start_col, start_line, max(start_col, end_col))

    while i < n:
        ch = source[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r\f\v":
            i, col = i + 1, col + 1
            continue
        if ch == "#":
            while i < n and source[i] != "\n":
                i += 1
                col += 1
            continue
        if ch == '"':
            j, buf, ok = i + 1, [], False
            while j < n and source[j] != "\n":
                c = source[j]
                if c == "\\" and j + 1 < n and source[j + 1] != "\n":
                    buf.append(_ESCAPES.get(source[j + 1], source[j + 1]))
                    j += 2
                    continue
                if c == '"':
                    ok = True
                    break
                buf.append(c)
                j += 1
            length = j - i + (1 if ok else 0)
            if not ok:
                diags.append(error("E100_UNTERMINATED_STRING", "unterminated string literal", span_to(line, col, col + length - 1)))
            else:
                tokens.append(Token(Tok.STRING, source[i : i + length], "".join(buf), line, col, line, col + length - 1))
            i += length
            col += length
            continue
        if ch in PUNCT:
            tokens.append(Token(Tok.PUNCT, ch, ch, line, col, line, col))
            i, col = i + 1, col + 1
            continue
        if ch in _DIGITS or (ch == "-" and i + 1 < n and source[i + 1] in _DIGITS + "."):
            m = _NUMBERISH.match(source, i)
            text = m.group(0)
            if _NUMBER.match(text):
                value: Any = float(text) if "." in text else int(text)
                tokens.append(Token(Tok.NUMBER, text, value, line, col, line, col + len(text) - 1))
            else:
                diags.append(error("E101_INVALID_NUMBER", f"invalid number literal {text!r}", span_to(line, col, col + len(text) - 1)))
            i += len(text)
            col += len(text)
            continue
        m = _IDENT.match(source, i)
        if m:
            text = m.group(0)
            if text in KEYWORDS:
                tokens.append(Token(Tok.KEYWORD, text, text, line, col, line, col + len(text) - 1))
            elif text in ("true", "false"):
                tokens.append(Token(Tok.BOOL, text, text == "true", line, col, line, col + len(text) - 1))
            else:
                tokens.append(Token(Tok.IDENT, text, text, line, col, line, col + len(text) - 1))
            i += len(text)
            col += len(text)
            continue
        diags.append(error("E102_UNKNOWN_CHARACTER", f"unexpected character {ch!r}", span_to(line, col, col)))
        i, col = i + 1, col + 1

    tokens.append(Token(Tok.EOF, "", None, line, col, line, col))
    return tokens, diags
