"""Lossless C tokenizer.

Input is expected to be preprocessed C. Concatenating every token's text
reproduces the input byte for byte. Preprocessor line markers (lines whose
first non-blank character is '#' followed by a digit) are tolerated as
whitespace; any other '#' line is also passed through as whitespace but
recorded as a diagnostic.
"""

from dataclasses import dataclass

KIND_IDENTIFIER = "identifier"
KIND_KEYWORD = "keyword"
KIND_NUMBER = "number"
KIND_STRING = "string"
KIND_CHAR = "char"
KIND_PUNCT = "punct"
KIND_WHITESPACE = "whitespace"
KIND_COMMENT = "comment"

KEYWORDS = frozenset(
    """auto break case char const continue default do double else enum extern
    float for goto if inline int long register restrict return short signed
    sizeof static struct switch typedef union unsigned void volatile while
    _Bool _Complex _Imaginary""".split()
)

# longest-first so the scanner can take the first prefix match
PUNCTUATORS = sorted(
    [
        "...", "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=", "==",
        "!=", "&&", "||", "*=", "/=", "%=", "+=", "-=", "&=", "^=", "|=",
        "##", "[", "]", "(", ")", "{", "}", ".", "&", "*", "+", "-", "~", "!",
        "/", "%", "<", ">", "^", "|", "?", ":", ";", "=", ",", "#",
    ],
    key=len,
    reverse=True,
)

_IDENT_START = frozenset("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ_")
_IDENT_CONT = _IDENT_START | frozenset("0123456789")
_DIGITS = frozenset("0123456789")
_SPACE = frozenset(" \t\r\n\f\v")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int

    def significant(self) -> bool:
        return self.kind not in (KIND_WHITESPACE, KIND_COMMENT)


class TokenizeError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} at line {line}, col {col}")
        self.line = line
        self.col = col


class UnterminatedString(TokenizeError):
    pass


class UnterminatedComment(TokenizeError):
    pass


def tokenize(source: str, diagnostics: list | None = None) -> list[Token]:
    tokens: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(source)
    line_blank = True  # nothing but blanks since the last newline

    def advance(text: str) -> None:
        nonlocal line, col
        for ch in text:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1

    while i < n:
        c = source[i]
        start_line, start_col = line, col

        if c == "#" and line_blank:
            end = source.find("\n", i)
            end = n if end == -1 else end
            text = source[i:end]
            rest = text[1:].lstrip()
            if not (rest and rest[0].isdigit()) and diagnostics is not None:
                diagnostics.append(
                    f"line {start_line}: unexpected '#' directive passed through"
                )
            tokens.append(Token(KIND_WHITESPACE, text, start_line, start_col))
            advance(text)
            i = end
            continue

        if c in _SPACE:
            j = i
            while j < n and source[j] in _SPACE:
                j += 1
            text = source[i:j]
            tokens.append(Token(KIND_WHITESPACE, text, start_line, start_col))
            advance(text)
            i = j
            if "\n" in text:
                line_blank = True
            continue

        line_blank = False

        if c == "/" and i + 1 < n and source[i + 1] == "/":
            end = source.find("\n", i)
            end = n if end == -1 else end
            text = source[i:end]
            tokens.append(Token(KIND_COMMENT, text, start_line, start_col))
            advance(text)
            i = end
            continue

        if c == "/" and i + 1 < n and source[i + 1] == "*":
            end = source.find("*/", i + 2)
            if end == -1:
                raise UnterminatedComment("unterminated comment", start_line, start_col)
            text = source[i : end + 2]
            tokens.append(Token(KIND_COMMENT, text, start_line, start_col))
            advance(text)
            i = end + 2
            continue

        if c in ('"', "'"):
            quote = c
            j = i + 1
            while j < n:
                if source[j] == "\\" and j + 1 < n:
                    j += 2
                    continue
                if source[j] == quote:
                    break
                if source[j] == "\n":
                    j = n
                    break
                j += 1
            if j >= n:
                raise UnterminatedString(
                    f"unterminated {'string' if quote == chr(34) else 'char'} literal",
                    start_line,
                    start_col,
                )
            text = source[i : j + 1]
            kind = KIND_STRING if quote == '"' else KIND_CHAR
            tokens.append(Token(kind, text, start_line, start_col))
            advance(text)
            i = j + 1
            continue

        if c in _IDENT_START:
            j = i + 1
            while j < n and source[j] in _IDENT_CONT:
                j += 1
            text = source[i:j]
            kind = KIND_KEYWORD if text in KEYWORDS else KIND_IDENTIFIER
            tokens.append(Token(kind, text, start_line, start_col))
            advance(text)
            i = j
            continue

        if c in _DIGITS or (c == "." and i + 1 < n and source[i + 1] in _DIGITS):
            j = i + 1
            while j < n:
                ch = source[j]
                if ch in _IDENT_CONT or ch == ".":
                    j += 1
                elif ch in "+-" and source[j - 1] in "eEpP":
                    j += 1
                else:
                    break
            text = source[i:j]
            tokens.append(Token(KIND_NUMBER, text, start_line, start_col))
            advance(text)
            i = j
            continue

        for punct in PUNCTUATORS:
            if source.startswith(punct, i):
                tokens.append(Token(KIND_PUNCT, punct, start_line, start_col))
                advance(punct)
                i += len(punct)
                break
        else:
            # unknown byte: keep it so the stream stays lossless
            tokens.append(Token(KIND_PUNCT, c, start_line, start_col))
            advance(c)
            i += 1

    return tokens
