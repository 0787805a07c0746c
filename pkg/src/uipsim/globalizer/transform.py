"""Rewrite engine: virtualized definitions, indexed references, moved
initializers.

Definitions gain a leading per-instance dimension (`int t[10]` becomes
`int global_t[NUM_STACKS][10]`), every unshadowed reference in expression
context becomes an indexed access, and explicit initializers move into a
generated per-instance init function so the dimension can stay symbolic.
Function statics are hoisted to file scope under a documented rename scheme.
Tokens outside rewrites are emitted byte-identically.
"""

from dataclasses import dataclass, field

from .scanner import (
    Ambiguity,
    Declaration,
    ScanResult,
    next_sig,
    scan,
    skip_balanced,
    try_parse_declaration,
)
from .tokenizer import (
    KIND_IDENTIFIER,
    KIND_KEYWORD,
    KIND_STRING,
    KIND_WHITESPACE,
    Token,
    tokenize,
)

_STORAGE_WORDS = frozenset({"static", "extern", "register", "typedef", "auto"})


class TransformError(Exception):
    pass


class UnsupportedInitializer(TransformError):
    def __init__(self, name: str, line: int, col: int):
        super().__init__(
            f"initializer of {name!r} references a virtualized global "
            f"(line {line}, col {col}); static initialization cannot be kept"
        )
        self.name = name
        self.line = line
        self.col = col


@dataclass(frozen=True)
class TransformConfig:
    dim_symbol: str = "NUM_STACKS"
    accessor: str = "get_stack_id()"
    prefix: str = "global_"
    include: tuple[str, ...] | None = None
    exclude: tuple[str, ...] = ()
    init_fn_name: str = "globaliser_init_globals"

    def __post_init__(self):
        if not self.prefix:
            raise ValueError("prefix must be non-empty")


@dataclass(frozen=True)
class SkipNote:
    name: str
    reason: str
    line: int
    col: int


@dataclass
class TransformResult:
    source: str
    rewritten: dict[str, int]
    skipped: list[SkipNote]
    rewrite_sites: list[tuple[int, str]]


def _render(tokens: list[Token], indices) -> str:
    """Join significant tokens with single spaces, tightened around brackets."""
    parts: list[str] = []
    for idx in indices:
        t = tokens[idx]
        if not t.significant():
            continue
        text = t.text
        tight = (
            not parts
            or text in ")]},;["
            or text == "("
            or parts[-1][-1:] in "([{"
        )
        parts.append(text if tight else " " + text)
    return "".join(parts)


def _render_span(tokens, start, end_inclusive) -> str:
    return _render(tokens, range(start, end_inclusive + 1))


def _dim_is_empty(tokens, dim: tuple[int, int]) -> bool:
    lb, rb = dim
    return next_sig(tokens, lb + 1) >= rb


@dataclass
class _Selected:
    decl: Declaration
    new_base: str
    display: str
    template: str | None = None  # template variable name for aggregate inits


def _select(decls: list[Declaration], config: TransformConfig, tokens: list[Token]):
    selected: list[_Selected] = []
    skipped: list[SkipNote] = []
    for d in decls:
        name = d.name
        if config.include is not None and name not in config.include:
            continue
        if name in config.exclude:
            continue
        if d.is_const and config.include is None:
            continue  # read-only data is instance-safe by default
        if name.startswith(config.prefix):
            t = tokens[d.name_index]
            skipped.append(
                SkipNote(name, f"already carries prefix {config.prefix!r}", t.line, t.col)
            )
            continue
        if d.scope == "function-static":
            new_base = f"{config.prefix}{d.function}__{name}"
            display = f"{d.function}__{name}"
        else:
            new_base = f"{config.prefix}{name}"
            display = name
        selected.append(_Selected(d, new_base, display))
    return selected, skipped


def transform(tokens: list[Token], decls: list[Declaration], config: TransformConfig,
              scan_result: ScanResult | None = None) -> TransformResult:
    sr = scan_result or scan(tokens)
    selected, skipped = _select(decls, config, tokens)

    # drop unsized arrays without initializers: the element count cannot be kept
    kept: list[_Selected] = []
    for s in selected:
        if s.decl.dims and _dim_is_empty(tokens, s.decl.dims[0]) and s.decl.init_span is None:
            t = tokens[s.decl.name_index]
            skipped.append(SkipNote(s.decl.name, "unsized array without initializer",
                                    t.line, t.col))
        else:
            kept.append(s)
    selected = kept

    virtualized_names = {s.decl.name for s in selected}
    file_map = {
        s.decl.name: s.new_base for s in selected if s.decl.scope == "file"
    }
    static_by_name_index = {
        s.decl.name_index: s for s in selected if s.decl.scope == "function-static"
    }

    # reject initializers that reference virtualized objects: a legal C static
    # initializer can only do that by taking an address, which has no single
    # per-instance value
    for d_all in sr.declarations:
        if d_all.init_span is None:
            continue
        eq, last = d_all.init_span
        for idx in range(eq + 1, last + 1):
            t = tokens[idx]
            if t.significant() and t.kind == KIND_IDENTIFIER and t.text in virtualized_names:
                raise UnsupportedInitializer(d_all.name, t.line, t.col)

    replacements: dict[int, str] = {}
    insert_before: dict[int, list[str]] = {}
    insert_after: dict[int, list[str]] = {}
    deleted: set[int] = set()
    init_statements: list[str] = []

    def add_before(idx: int, text: str) -> None:
        insert_before.setdefault(idx, []).append(text)

    def delete_init(eq: int, last: int) -> None:
        k = eq - 1
        while k >= 0 and tokens[k].kind == KIND_WHITESPACE:
            deleted.add(k)
            k -= 1
        deleted.update(range(eq, last + 1))
        k = last + 1
        while k < len(tokens) and tokens[k].kind == KIND_WHITESPACE:
            deleted.add(k)
            k += 1

    def spec_text_for_template(d: Declaration) -> str:
        words = []
        for idx in range(*d.spec_span):
            t = tokens[idx]
            if not t.significant() or t.text in _STORAGE_WORDS or t.text == "const":
                continue
            words.append(idx)
        return _render(tokens, words)

    def declarator_text(d: Declaration, name_text: str, extra_dim: str | None) -> str:
        parts = []
        start, end = d.declarator_span
        idx = start
        while idx <= end:
            t = tokens[idx]
            if t.significant():
                if idx == d.name_index:
                    parts.append(name_text)
                    if extra_dim:
                        parts.append(extra_dim)
                elif d.init_span and d.init_span[0] <= idx <= d.init_span[1]:
                    pass
                else:
                    parts.append(t.text)
            idx += 1
        return "".join(parts)

    def fill_empty_dim_text(d: Declaration, template: str) -> str:
        return f"[sizeof({template}) / sizeof({template}[0])]"

    for s in selected:
        d = s.decl
        aggregate = False
        init_text = None
        if d.init_span is not None:
            eq, last = d.init_span
            first_val = next_sig(tokens, eq + 1)
            aggregate = tokens[first_val].text == "{" or (
                bool(d.dims) and tokens[first_val].kind == KIND_STRING
            )
            init_text = _render_span(tokens, first_val, last)
        if aggregate:
            s.template = f"globaliser_template_{s.display}"

        if d.scope == "file":
            replacements[d.name_index] = s.new_base
            insert_after.setdefault(d.name_index, []).append(f"[{config.dim_symbol}]")
            if d.init_span is not None:
                delete_init(*d.init_span)
            if d.dims and _dim_is_empty(tokens, d.dims[0]) and s.template:
                lb, _ = d.dims[0]
                insert_after.setdefault(lb, []).append(
                    f"sizeof({s.template}) / sizeof({s.template}[0])"
                )
            if s.template:
                add_before(
                    d.decl_start,
                    f"static const {spec_text_for_template(d)} "
                    f"{declarator_text(d, s.template, None)} = {init_text};\n",
                )
        else:
            deleted.update(range(d.decl_start, d.decl_end + 1))
            extra = f"[{config.dim_symbol}]"
            decl_text = declarator_text(d, s.new_base, extra)
            if d.dims and _dim_is_empty(tokens, d.dims[0]) and s.template:
                empty = "[]"
                filled = fill_empty_dim_text(d, s.template)
                decl_text = decl_text.replace("[]", filled, 1)
            if s.template:
                add_before(
                    d.fn_start_index,
                    f"static const {spec_text_for_template(d)} "
                    f"{declarator_text(d, s.template, None)} = {init_text};\n",
                )
            add_before(
                d.fn_start_index,
                f"static {spec_text_for_template(d)} {decl_text};\n",
            )

        if d.init_span is not None:
            if aggregate:
                t = s.template
                init_statements.append(
                    "    {\n"
                    f"        const char *globaliser_src = (const char *)&{t};\n"
                    f"        char *globaliser_dst = (char *)&{s.new_base}[id];\n"
                    "        unsigned long globaliser_i;\n"
                    f"        for (globaliser_i = 0; globaliser_i < sizeof({t}); globaliser_i++)\n"
                    "            globaliser_dst[globaliser_i] = globaliser_src[globaliser_i];\n"
                    "    }"
                )
            else:
                init_statements.append(f"    {s.new_base}[id] = {init_text};")

    rewrite_sites, site_counts = _rewrite_references(
        tokens, sr, file_map, static_by_name_index, config, deleted, replacements
    )

    pieces: list[str] = []
    for idx, token in enumerate(tokens):
        if idx in insert_before:
            pieces.extend(insert_before[idx])
        if idx in deleted:
            continue
        pieces.append(replacements.get(idx, token.text))
        if idx in insert_after:
            pieces.extend(insert_after[idx])
    if init_statements:
        body = "\n".join(init_statements)
        if pieces and not pieces[-1].endswith("\n"):
            pieces.append("\n")
        pieces.append(
            f"\nvoid {config.init_fn_name}(int id)\n{{\n{body}\n}}\n"
        )

    rewritten: dict[str, int] = {}
    for s in selected:
        rewritten[s.display] = site_counts.get(s.new_base, 0)

    return TransformResult(
        source="".join(pieces),
        rewritten=rewritten,
        skipped=skipped,
        rewrite_sites=rewrite_sites,
    )


# -- reference rewriting ---------------------------------------------------


def _rewrite_references(tokens, sr: ScanResult, file_map: dict[str, str],
                        static_by_name_index: dict, config: TransformConfig,
                        deleted: set[int], replacements: dict[int, str]):
    """Walk every function body, resolve identifiers against the innermost
    binding, and rewrite unshadowed references to virtualized objects."""
    sites: list[tuple[int, str]] = []
    counts: dict[str, int] = {}
    fn_by_body = {f.body_start: f for f in sr.functions}
    typedefs = sr.typedefs
    n = len(tokens)

    def record(idx: int, target: str, orig_name: str) -> None:
        replacements[idx] = f"{target}[{config.accessor}]"
        sites.append((idx, orig_name))
        counts[target] = counts.get(target, 0) + 1

    i = 0
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
        except Ambiguity:
            pd = None
        if pd is None:
            i += 1  # scanner already reported; stay lossless and move on
            continue
        if not pd.is_funcdef:
            i = pd.end
            continue
        fn = fn_by_body.get(pd.funcdef.body_start)
        scopes: list[dict[str, str | None]] = [
            {name: None for name in (fn.param_names if fn else [])}
        ]
        i = _walk_block(
            tokens, pd.funcdef.body_start, scopes, typedefs, file_map,
            static_by_name_index, config, record,
        )

    return sites, counts


def _walk_block(tokens, open_idx, scopes, typedefs, file_map,
                static_by_name_index, config, record) -> int:
    """Walk tokens from a '{' through its matching '}'; returns the index
    just past the closing brace. `scopes` maps names to None (plain local)
    or to a hoisted replacement base."""
    n = len(tokens)
    i = open_idx + 1
    stmt_start = True
    prev_sig: Token | None = None

    def resolve(name: str):
        for frame in reversed(scopes):
            if name in frame:
                return ("bound", frame[name])
        if name in file_map:
            return ("file", file_map[name])
        return (None, None)

    def consider(idx: int, prev: Token | None) -> None:
        tok = tokens[idx]
        if prev is not None and prev.text in (".", "->"):
            return
        if prev is not None and prev.text == "goto":
            return
        if prev is not None and prev.kind == KIND_KEYWORD and prev.text in (
            "struct", "union", "enum",
        ):
            return
        kind, target = resolve(tok.text)
        if kind == "bound" and target is not None:
            record(idx, target, tok.text)
        elif kind == "file":
            record(idx, target, tok.text)

    def walk_expr(start: int, end_inclusive: int) -> None:
        prev: Token | None = None
        j = start
        while j <= end_inclusive:
            tok = tokens[j]
            if tok.significant():
                if tok.kind == KIND_IDENTIFIER:
                    consider(j, prev)
                prev = tok
            j += 1

    while i < n:
        i0 = next_sig(tokens, i)
        if i0 >= n:
            return n
        i = i0
        t = tokens[i]

        if t.text == "{":
            scopes.append({})
            i = _walk_block(tokens, i, scopes, typedefs, file_map,
                            static_by_name_index, config, record)
            stmt_start = True
            prev_sig = tokens[i - 1] if i > 0 else None
            continue
        if t.text == "}":
            if len(scopes) > 1:
                scopes.pop()
            return i + 1
        if t.text == ";" or t.text == ":":
            stmt_start = True
            prev_sig = t
            i += 1
            continue

        if t.kind == KIND_KEYWORD and t.text in ("case", "default") and stmt_start:
            while i < n and tokens[i].text != ":":
                if tokens[i].significant() and tokens[i].kind == KIND_IDENTIFIER:
                    consider(i, prev_sig)
                if tokens[i].significant():
                    prev_sig = tokens[i]
                i += 1
            stmt_start = True
            i += 1
            continue

        if t.kind == KIND_IDENTIFIER and stmt_start:
            j = next_sig(tokens, i + 1)
            if j < n and tokens[j].text == ":":
                i = j + 1  # label definition
                stmt_start = True
                prev_sig = tokens[j]
                continue

        handled = False
        if stmt_start and t.kind in (KIND_KEYWORD, KIND_IDENTIFIER):
            handled = _maybe_declaration(
                tokens, i, scopes, typedefs, static_by_name_index, walk_expr
            )
            if handled is not None:
                i = handled
                stmt_start = True
                prev_sig = None
                continue

        if t.kind == KIND_KEYWORD and t.text == "for":
            # allow a declaration in the for-init clause; it binds in the
            # enclosing block scope (documented approximation)
            j = next_sig(tokens, i + 1)
            if j < n and tokens[j].text == "(":
                k = next_sig(tokens, j + 1)
                end = _maybe_declaration(
                    tokens, k, scopes, typedefs, static_by_name_index, walk_expr
                )
                if end is not None:
                    prev_sig = tokens[i]
                    i = end
                    stmt_start = False
                    continue

        if t.kind == KIND_IDENTIFIER:
            consider(i, prev_sig)
        prev_sig = t
        stmt_start = False
        i += 1
    return n


def _maybe_declaration(tokens, i, scopes, typedefs, static_by_name_index,
                       walk_expr) -> int | None:
    """Try to read a local declaration at index i. Binds declared names into
    the current scope frame, walks initializer expressions for references,
    and returns the index past the declaration (or None if not one)."""
    try:
        pd = try_parse_declaration(tokens, i, typedefs, context="block")
    except Ambiguity:
        return None
    if pd is None or pd.is_funcdef:
        return None
    frame = scopes[-1]
    is_static = pd.spec.storage == "static"
    for pdecl in pd.declarators:
        info = pdecl.info
        if info.name_index is None:
            continue
        name = tokens[info.name_index].text
        if is_static and info.name_index in static_by_name_index:
            frame[name] = static_by_name_index[info.name_index].new_base
        else:
            frame[name] = None
        if pdecl.init_span is not None and not is_static:
            eq, last = pdecl.init_span
            walk_expr(eq + 1, last)
    return pd.end


# -- file-level driver -------------------------------------------------------


@dataclass
class FileReport:
    transformed: dict[str, int]
    skipped: list[SkipNote]
    diagnostics: list[str]


def globalize_source(source: str, config: TransformConfig | None = None
                     ) -> tuple[str, FileReport]:
    config = config or TransformConfig()
    diagnostics: list[str] = []
    tokens = tokenize(source, diagnostics)
    sr = scan(tokens)
    for diag in sr.diagnostics:
        diagnostics.append(f"{diag.kind}: {diag.message} (line {diag.line})")
    result = transform(tokens, sr.declarations, config, scan_result=sr)
    report = FileReport(
        transformed=result.rewritten,
        skipped=result.skipped,
        diagnostics=diagnostics,
    )
    return result.source, report


def globalize_file(in_path, out_path, config: TransformConfig | None = None) -> FileReport:
    """Transform in_path into out_path; any abort-level error leaves the
    output unwritten."""
    with open(in_path, "r", encoding="utf-8") as f:
        source = f.read()
    output, report = globalize_source(source, config)
    with open(out_path, "w", encoding="utf-8") as f:
        f.write(output)
    return report
