"""Token-level declaration scanner: file-scope object definitions, extern
object declarations, function definitions with parameter names, function
statics, and typedef names.

This is deliberately a scanner with scope rules, not a C grammar. The rules
it pins down (shared with the reference rewriter):

  * a declaration starts with a storage class, qualifier, type keyword,
    struct/union/enum, or a typedef name declared in the same file;
  * an unknown identifier also starts a declaration when followed by another
    identifier (assumed external typedef), and at file scope or in parameter
    lists additionally when followed by '*';
  * anything the scanner cannot classify is skipped and reported as a
    diagnostic, never silently mangled.
"""

from dataclasses import dataclass, field

from .tokenizer import (
    KIND_IDENTIFIER,
    KIND_KEYWORD,
    Token,
)

SPEC_TYPES = frozenset(
    "void char short int long float double signed unsigned _Bool _Complex _Imaginary".split()
)
SPEC_STORAGE = frozenset("static extern register auto typedef".split())
SPEC_QUALIFIERS = frozenset("const volatile restrict inline".split())
STRUCTISH = frozenset("struct union enum".split())

_OPEN_FOR = {"(": ")", "[": "]", "{": "}"}


class Ambiguity(Exception):
    def __init__(self, message: str, token: Token):
        super().__init__(f"{message} near {token.text!r} (line {token.line})")
        self.message = message
        self.token = token


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    line: int
    col: int


@dataclass
class Declaration:
    name: str
    storage: str  # "none" | "static" | "extern"
    scope: str  # "file" | "function-static"
    is_const: bool
    pointer_depth: int
    name_index: int
    decl_start: int
    decl_end: int  # index of the terminating ';'
    spec_span: tuple[int, int]  # [start, end) token range of the specifiers
    declarator_span: tuple[int, int]  # [start, end] inclusive, initializer excluded
    dims: list[tuple[int, int]] = field(default_factory=list)
    init_span: tuple[int, int] | None = None  # ('=' index, last init token index)
    function: str | None = None
    fn_start_index: int | None = None


@dataclass
class FunctionDef:
    name: str
    start_index: int
    params_open: int
    params_close: int
    body_start: int
    body_end: int
    param_names: list[str]


@dataclass
class ScanResult:
    declarations: list[Declaration]
    functions: list[FunctionDef]
    typedefs: set[str]
    diagnostics: list[Diagnostic]


# -- token navigation ------------------------------------------------------


def next_sig(tokens: list[Token], i: int) -> int:
    n = len(tokens)
    while i < n and not tokens[i].significant():
        i += 1
    return i


def skip_balanced(tokens: list[Token], i: int) -> int:
    """With tokens[i] an opener, return the index just past its match."""
    close = _OPEN_FOR[tokens[i].text]
    opener = tokens[i].text
    depth = 0
    n = len(tokens)
    while i < n:
        t = tokens[i]
        if t.significant():
            if t.text == opener:
                depth += 1
            elif t.text == close:
                depth -= 1
                if depth == 0:
                    return i + 1
        i += 1
    raise Ambiguity(f"unbalanced {opener!r}", tokens[-1])


# -- specifier / declarator parsing ------------------------------------------


@dataclass
class SpecInfo:
    start: int
    end: int  # exclusive
    storage: str = "none"
    is_const: bool = False
    is_typedef: bool = False
    saw_type: bool = False


def parse_specifiers(tokens, i, typedefs, context: str) -> tuple[SpecInfo | None, int]:
    """Consume declaration specifiers starting at significant index i.

    `context` is "file", "block" or "param"; it controls how eagerly an
    unknown identifier is accepted as a type name.
    """
    start = i
    spec = SpecInfo(start=i, end=i)
    consumed_any = False
    while True:
        i = next_sig(tokens, i)
        if i >= len(tokens):
            break
        t = tokens[i]
        if t.kind == KIND_KEYWORD and t.text in SPEC_STORAGE:
            if t.text == "typedef":
                spec.is_typedef = True
            elif t.text in ("static", "extern"):
                spec.storage = t.text
            i += 1
            consumed_any = True
            continue
        if t.kind == KIND_KEYWORD and t.text in SPEC_QUALIFIERS:
            if t.text == "const":
                spec.is_const = True
            i += 1
            consumed_any = True
            continue
        if t.kind == KIND_KEYWORD and t.text in SPEC_TYPES:
            spec.saw_type = True
            i += 1
            consumed_any = True
            continue
        if t.kind == KIND_KEYWORD and t.text in STRUCTISH:
            i += 1
            j = next_sig(tokens, i)
            if j < len(tokens) and tokens[j].kind == KIND_IDENTIFIER:
                i = j + 1
                j = next_sig(tokens, i)
            if j < len(tokens) and tokens[j].text == "{":
                i = skip_balanced(tokens, j)
            spec.saw_type = True
            consumed_any = True
            continue
        if t.kind == KIND_IDENTIFIER and not spec.saw_type:
            if t.text in typedefs:
                spec.saw_type = True
                i += 1
                consumed_any = True
                continue
            # unknown identifier assumed to be an externally defined typedef
            j = next_sig(tokens, i + 1)
            if j < len(tokens):
                follower = tokens[j]
                ident_follows = follower.kind == KIND_IDENTIFIER
                star_follows = follower.text == "*"
                if ident_follows or (star_follows and context in ("file", "param")):
                    spec.saw_type = True
                    i += 1
                    consumed_any = True
                    continue
        break
    if not consumed_any:
        return None, start
    spec.end = i
    return spec, i


@dataclass
class DeclInfo:
    name_index: int | None
    pointer_depth: int
    is_function: bool
    dims: list[tuple[int, int]]
    start: int
    end: int  # index just past the declarator


def parse_declarator(tokens, i, allow_abstract: bool = False) -> DeclInfo:
    start = next_sig(tokens, i)
    i = start
    ptr = 0
    while True:
        i = next_sig(tokens, i)
        if i < len(tokens) and tokens[i].text == "*":
            ptr += 1
            i += 1
        elif i < len(tokens) and tokens[i].kind == KIND_KEYWORD and tokens[i].text in SPEC_QUALIFIERS:
            i += 1
        else:
            break

    inner: DeclInfo | None = None
    name_index: int | None = None
    if i < len(tokens) and tokens[i].text == "(":
        j = next_sig(tokens, i + 1)
        if j < len(tokens) and (tokens[j].text == "*" or tokens[j].kind == KIND_IDENTIFIER):
            inner = parse_declarator(tokens, i + 1, allow_abstract)
            i = next_sig(tokens, inner.end)
            if i >= len(tokens) or tokens[i].text != ")":
                raise Ambiguity("expected ')' after nested declarator", tokens[min(i, len(tokens) - 1)])
            i += 1
        elif allow_abstract:
            i = skip_balanced(tokens, i)
            return DeclInfo(None, ptr, True, [], start, i)
        else:
            raise Ambiguity("unexpected '(' in declarator", tokens[i])
    elif i < len(tokens) and tokens[i].kind == KIND_IDENTIFIER:
        name_index = i
        i += 1
    elif allow_abstract:
        return DeclInfo(None, ptr, False, [], start, i)
    else:
        tok = tokens[min(i, len(tokens) - 1)]
        raise Ambiguity("expected identifier in declarator", tok)

    dims: list[tuple[int, int]] = []
    first_suffix: str | None = None
    while True:
        i = next_sig(tokens, i)
        if i < len(tokens) and tokens[i].text == "[":
            end = skip_balanced(tokens, i)
            dims.append((i, end - 1))
            first_suffix = first_suffix or "array"
            i = end
        elif i < len(tokens) and tokens[i].text == "(":
            end = skip_balanced(tokens, i)
            first_suffix = first_suffix or "func"
            i = end
        else:
            break

    if inner is not None:
        transparent = inner.pointer_depth == 0 and not inner.dims and not inner.is_function
        is_function = first_suffix == "func" and transparent
        return DeclInfo(
            inner.name_index, ptr + inner.pointer_depth,
            is_function or inner.is_function,
            inner.dims or dims, start, i,
        )
    return DeclInfo(name_index, ptr, first_suffix == "func", dims, start, i)


def scan_initializer(tokens, i) -> tuple[tuple[int, int], int]:
    """With tokens[i] the '=', return ((eq_index, last_index), next_index)
    where next_index sits at the ',' or ';' terminating this declarator."""
    eq = i
    i += 1
    depth = 0
    last = eq
    n = len(tokens)
    while i < n:
        t = tokens[i]
        if t.significant():
            if t.text in _OPEN_FOR:
                i = skip_balanced(tokens, i)
                last = i - 1
                continue
            if t.text in (",", ";") and depth == 0:
                break
            last = i
        i += 1
    if i >= n:
        raise Ambiguity("unterminated initializer", tokens[eq])
    return (eq, last), i


@dataclass
class ParsedDeclarator:
    info: DeclInfo
    init_span: tuple[int, int] | None


@dataclass
class ParsedDecl:
    spec: SpecInfo
    declarators: list[ParsedDeclarator]
    start: int
    end: int  # index just past the terminating ';' (or the funcdef body)
    semicolon: int | None
    is_funcdef: bool = False
    funcdef: FunctionDef | None = None


def try_parse_declaration(tokens, i, typedefs, context: str) -> ParsedDecl | None:
    """Parse one declaration starting at significant index i, or return None
    when the tokens do not begin a declaration. Raises Ambiguity when they do
    but cannot be followed."""
    start = next_sig(tokens, i)
    if start >= len(tokens):
        return None
    spec, i = parse_specifiers(tokens, start, typedefs, context)
    if spec is None:
        return None
    i = next_sig(tokens, i)
    if i < len(tokens) and tokens[i].text == ";":
        # type-only declaration (struct/union/enum definition, stray specifier)
        return ParsedDecl(spec, [], start, i + 1, i)

    declarators: list[ParsedDeclarator] = []
    first = True
    while True:
        info = parse_declarator(tokens, i)
        i = next_sig(tokens, info.end)
        if i >= len(tokens):
            raise Ambiguity("declaration runs off the end", tokens[-1])
        t = tokens[i]
        if t.text == "{" and first and info.is_function:
            body_end = skip_balanced(tokens, i)
            fn = FunctionDef(
                name=tokens[info.name_index].text if info.name_index is not None else "",
                start_index=start,
                params_open=-1,
                params_close=-1,
                body_start=i,
                body_end=body_end - 1,
                param_names=[],
            )
            return ParsedDecl(spec, [], start, body_end, None, is_funcdef=True, funcdef=fn)
        init_span = None
        if t.text == "=":
            init_span, i = scan_initializer(tokens, i)
            t = tokens[i]
        declarators.append(ParsedDeclarator(info, init_span))
        if t.text == ",":
            i = next_sig(tokens, i + 1)
            first = False
            continue
        if t.text == ";":
            return ParsedDecl(spec, declarators, start, i + 1, i)
        raise Ambiguity(f"unexpected {t.text!r} in declaration", t)


# -- parameter names -----------------------------------------------------------


def find_param_list(tokens, decl_info_end, name_index) -> tuple[int, int] | None:
    """Locate the '(' ... ')' immediately following the function's name."""
    i = next_sig(tokens, name_index + 1)
    if i < len(tokens) and tokens[i].text == "(":
        return i, skip_balanced(tokens, i) - 1
    return None


def parse_param_names(tokens, open_idx, close_idx, typedefs) -> list[str]:
    names: list[str] = []
    segments: list[tuple[int, int]] = []
    seg_start = next_sig(tokens, open_idx + 1)
    i = seg_start
    while i < close_idx:
        t = tokens[i]
        if t.significant() and t.text in _OPEN_FOR:
            i = skip_balanced(tokens, i)
            continue
        if t.significant() and t.text == ",":
            segments.append((seg_start, i))
            seg_start = next_sig(tokens, i + 1)
        i += 1
    if seg_start < close_idx:
        segments.append((seg_start, close_idx))
    for seg_from, seg_to in segments:
        j = next_sig(tokens, seg_from)
        if j >= seg_to:
            continue
        if tokens[j].text in ("void", "...") and next_sig(tokens, j + 1) >= seg_to:
            continue
        spec, j2 = parse_specifiers(tokens, j, typedefs, context="param")
        if spec is None:
            # K&R style bare identifier
            if tokens[j].kind == KIND_IDENTIFIER:
                names.append(tokens[j].text)
            continue
        try:
            info = parse_declarator(tokens, j2, allow_abstract=True)
        except Ambiguity:
            continue
        if info.name_index is not None and info.name_index < seg_to:
            names.append(tokens[info.name_index].text)
    return names


# -- whole-file scan -----------------------------------------------------------


def _skip_to_recovery(tokens, i) -> int:
    """Error recovery: advance past the next ';' at depth 0."""
    n = len(tokens)
    while i < n:
        t = tokens[i]
        if t.significant():
            if t.text in _OPEN_FOR:
                i = skip_balanced(tokens, i)
                continue
            if t.text == ";":
                return i + 1
        i += 1
    return n


def _skip_statement(tokens, i, limit) -> int:
    """Advance past one statement inside a function body: stops after ';',
    or before '{' / '}' so the caller can track blocks."""
    n = min(len(tokens), limit)
    while i < n:
        t = tokens[i]
        if t.significant():
            if t.text in ("(", "["):
                i = skip_balanced(tokens, i)
                continue
            if t.text == ";":
                return i + 1
            if t.text in ("{", "}"):
                return i
        i += 1
    return i


def _scan_body(tokens, fn: FunctionDef, typedefs, declarations, diagnostics) -> None:
    i = fn.body_start + 1
    while i < fn.body_end:
        i = next_sig(tokens, i)
        if i >= fn.body_end:
            break
        t = tokens[i]
        if t.text in ("{", "}", ";", ":"):
            i += 1
            continue
        if t.kind == KIND_KEYWORD and t.text in ("case", "default"):
            while i < fn.body_end and tokens[i].text != ":":
                i += 1
            i += 1
            continue
        if t.kind == KIND_IDENTIFIER:
            j = next_sig(tokens, i + 1)
            if j < fn.body_end and tokens[j].text == ":":
                i = j + 1  # label
                continue
        pd = None
        if t.kind in (KIND_KEYWORD, KIND_IDENTIFIER):
            try:
                pd = try_parse_declaration(tokens, i, typedefs, context="block")
            except Ambiguity:
                pd = None
        if pd is not None and not pd.is_funcdef:
            if pd.spec.storage == "static":
                for pdecl in pd.declarators:
                    info = pdecl.info
                    if info.is_function or info.name_index is None:
                        continue
                    declarations.append(
                        Declaration(
                            name=tokens[info.name_index].text,
                            storage="static",
                            scope="function-static",
                            is_const=pd.spec.is_const,
                            pointer_depth=info.pointer_depth,
                            name_index=info.name_index,
                            decl_start=pd.start,
                            decl_end=pd.semicolon,
                            spec_span=(pd.spec.start, pd.spec.end),
                            declarator_span=(info.start, info.end - 1),
                            dims=info.dims,
                            init_span=pdecl.init_span,
                            function=fn.name,
                            fn_start_index=fn.start_index,
                        )
                    )
            i = pd.end
            continue
        i = _skip_statement(tokens, i, fn.body_end)


def scan(tokens: list[Token]) -> ScanResult:
    declarations: list[Declaration] = []
    functions: list[FunctionDef] = []
    typedefs: set[str] = set()
    diagnostics: list[Diagnostic] = []
    i = 0
    n = len(tokens)
    while i < n:
        i = next_sig(tokens, i)
        if i >= n:
            break
        t = tokens[i]
        if t.text == ";":
            i += 1
            continue
        try:
            pd = try_parse_declaration(tokens, i, typedefs, context="file")
        except Ambiguity as amb:
            diagnostics.append(
                Diagnostic("parse-ambiguity", amb.message, amb.token.line, amb.token.col)
            )
            i = _skip_to_recovery(tokens, i)
            continue
        if pd is None:
            diagnostics.append(
                Diagnostic(
                    "parse-ambiguity",
                    f"cannot classify {t.text!r} at file scope",
                    t.line,
                    t.col,
                )
            )
            i = _skip_to_recovery(tokens, i)
            continue
        if pd.is_funcdef:
            fn = pd.funcdef
            # recover the parameter list position from the declarator
            spec2, j = parse_specifiers(tokens, pd.start, typedefs, context="file")
            info = parse_declarator(tokens, j)
            if info.name_index is not None:
                fn.name = tokens[info.name_index].text
                params = find_param_list(tokens, info.end, info.name_index)
                if params is not None:
                    fn.params_open, fn.params_close = params
                    fn.param_names = parse_param_names(
                        tokens, params[0], params[1], typedefs
                    )
            functions.append(fn)
            _scan_body(tokens, fn, typedefs, declarations, diagnostics)
            i = pd.end
            continue
        if pd.spec.is_typedef:
            for pdecl in pd.declarators:
                if pdecl.info.name_index is not None:
                    typedefs.add(tokens[pdecl.info.name_index].text)
            i = pd.end
            continue
        for pdecl in pd.declarators:
            info = pdecl.info
            if info.is_function or info.name_index is None:
                continue
            declarations.append(
                Declaration(
                    name=tokens[info.name_index].text,
                    storage=pd.spec.storage,
                    scope="file",
                    is_const=pd.spec.is_const,
                    pointer_depth=info.pointer_depth,
                    name_index=info.name_index,
                    decl_start=pd.start,
                    decl_end=pd.semicolon,
                    spec_span=(pd.spec.start, pd.spec.end),
                    declarator_span=(info.start, info.end - 1),
                    dims=info.dims,
                    init_span=pdecl.init_span,
                )
            )
        i = pd.end
    return ScanResult(declarations, functions, typedefs, diagnostics)


def find_globals(tokens: list[Token]) -> list[Declaration]:
    """File-scope and function-static object definitions found in the stream."""
    return scan(tokens).declarations
