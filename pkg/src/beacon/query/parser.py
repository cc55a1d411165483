"""Hand-written tokenizer and recursive-descent parser.

Keywords are case-insensitive; identifiers are case-sensitive and may be
backquoted.  `--` and `/* */` comments are skipped.  Statements end with an
optional semicolon.
"""

from __future__ import annotations

import re

from ..errors import QuerySyntaxError
from ..values import parse_duration
from ..schema import FieldSpec
from . import ast

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<line_comment>--[^\n]*)
  | (?P<block_comment>/\*.*?\*/)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<string>"(?:\\.|[^"\\])*")
  | (?P<qident>`[^`]+`)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct><=|>=|!=|[\^=<>+\-*/(){}\[\],;:.@?])
    """,
    re.VERBOSE | re.DOTALL,
)

_KEYWORDS = {
    "use", "create", "type", "as", "closed", "dataset", "primary", "key",
    "autogenerated", "index", "on", "btree", "rtree", "feed", "with",
    "connect", "to", "apply", "function", "start", "stop", "repetitive",
    "channel", "using", "period", "dedup", "by", "broker", "at", "procedure",
    "execute", "subscribe", "unsubscribe", "from", "select", "value", "where",
    "insert", "into", "delete", "and", "or", "not", "null", "true", "false",
}


class Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind, text, line, col):
        self.kind = kind      # number | string | ident | qident | punct | eof
        self.text = text
        self.line = line
        self.col = col

    def keyword(self) -> str | None:
        if self.kind == "ident" and self.text.lower() in _KEYWORDS:
            return self.text.lower()
        return None

    def __repr__(self):
        return f"Token({self.kind}:{self.text!r})"


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise QuerySyntaxError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        tok_text = m.group()
        if kind not in ("ws", "line_comment", "block_comment"):
            tokens.append(Token(kind, tok_text, line, m.start() - line_start + 1))
        newlines = tok_text.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + tok_text.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def _unquote(raw: str) -> str:
    out, i = [], 1
    while i < len(raw) - 1:
        ch = raw[i]
        if ch == "\\" and i + 1 < len(raw) - 1:
            nxt = raw[i + 1]
            out.append({"n": "\n", "t": "\t", "r": "\r"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


class Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    # -- cursor helpers -----------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def error(self, message: str, expected=()) -> QuerySyntaxError:
        tok = self.peek()
        shown = tok.text or "<end of input>"
        return QuerySyntaxError(f"{message}, found {shown!r}", tok.line, tok.col, expected)

    def at_keyword(self, *words: str) -> bool:
        return self.peek().keyword() in words

    def expect_keyword(self, word: str) -> Token:
        if not self.at_keyword(word):
            raise self.error(f"expected {word.upper()}", [word.upper()])
        return self.next()

    def accept_keyword(self, word: str) -> bool:
        if self.at_keyword(word):
            self.next()
            return True
        return False

    def expect_punct(self, text: str) -> Token:
        tok = self.peek()
        if tok.kind != "punct" or tok.text != text:
            raise self.error(f"expected {text!r}", [text])
        return self.next()

    def accept_punct(self, text: str) -> bool:
        tok = self.peek()
        if tok.kind == "punct" and tok.text == text:
            self.next()
            return True
        return False

    def ident(self, what: str = "identifier") -> str:
        tok = self.peek()
        if tok.kind == "qident":
            self.next()
            return tok.text[1:-1]
        if tok.kind == "ident":
            self.next()
            return tok.text
        raise self.error(f"expected {what}", ["identifier"])

    def string(self) -> str:
        tok = self.peek()
        if tok.kind != "string":
            raise self.error("expected string literal", ["string"])
        self.next()
        return _unquote(tok.text)

    def qualified_name(self) -> str:
        parts = [self.ident("name")]
        while self.peek().kind == "punct" and self.peek().text == "." and \
                self.peek(1).kind in ("ident", "qident"):
            self.next()
            parts.append(self.ident())
        return ".".join(parts)

    # -- statements -----------------------------------------------------------

    def parse_statements(self) -> list[ast.Statement]:
        out = []
        while self.peek().kind != "eof":
            out.append(self.parse_statement())
            while self.accept_punct(";"):
                pass
        return out

    def parse_statement(self) -> ast.Statement:
        kw = self.peek().keyword()
        if kw == "use":
            self.next()
            return ast.UseStmt(self.qualified_name())
        if kw == "create":
            return self._create()
        if kw == "connect":
            self.next()
            self.expect_keyword("feed")
            feed = self.ident("feed name")
            self.expect_keyword("to")
            self.expect_keyword("dataset")
            dataset = self.qualified_name()
            fn = None
            if self.accept_keyword("apply"):
                self.expect_keyword("function")
                fn = self.ident("function name")
            return ast.ConnectFeed(feed, dataset, fn)
        if kw == "start":
            self.next()
            self.expect_keyword("feed")
            return ast.StartFeed(self.ident("feed name"))
        if kw == "stop":
            self.next()
            self.expect_keyword("feed")
            return ast.StopFeed(self.ident("feed name"))
        if kw == "execute":
            self.next()
            name = self.ident("procedure name")
            args = []
            self.expect_punct("(")
            if not self.accept_punct(")"):
                args.append(self.expr())
                while self.accept_punct(","):
                    args.append(self.expr())
                self.expect_punct(")")
            return ast.ExecuteProcedure(name, args)
        if kw == "subscribe":
            self.next()
            self.expect_keyword("to")
            channel = self.ident("channel name")
            args = []
            self.expect_punct("(")
            if not self.accept_punct(")"):
                args.append(self.expr())
                while self.accept_punct(","):
                    args.append(self.expr())
                self.expect_punct(")")
            self.expect_keyword("on")
            return ast.Subscribe(channel, args, self.ident("broker name"))
        if kw == "unsubscribe":
            self.next()
            sub = self.expr()
            self.expect_keyword("from")
            return ast.Unsubscribe(sub, self.ident("channel name"))
        if kw == "insert":
            self.next()
            self.expect_keyword("into")
            dataset = self.qualified_name()
            self.expect_punct("(")
            source = self.expr_or_select()
            self.expect_punct(")")
            return ast.InsertStmt(dataset, source)
        if kw == "delete":
            self.next()
            alias = self.ident("alias")
            self.expect_keyword("from")
            dataset = self.qualified_name()
            where = self.expr() if self.accept_keyword("where") else None
            return ast.DeleteStmt(alias, dataset, where)
        if kw == "select":
            return ast.QueryStmt(self.select_expr())
        raise self.error("expected a statement", ["CREATE", "SELECT", "INSERT", "..."])

    def _create(self) -> ast.Statement:
        self.expect_keyword("create")
        kw = self.peek().keyword()
        if kw == "type":
            self.next()
            name = self.ident("type name")
            self.expect_keyword("as")
            open_type = not self.accept_keyword("closed")
            fields = self._type_fields()
            return ast.CreateType(name, fields, open_type)
        if kw == "dataset":
            self.next()
            name = self.qualified_name()
            self.expect_punct("(")
            type_name = self.ident("type name")
            self.expect_punct(")")
            self.expect_keyword("primary")
            self.expect_keyword("key")
            pk = self.ident("key field")
            auto = self.accept_keyword("autogenerated")
            return ast.CreateDataset(name, type_name, pk, auto)
        if kw == "index":
            self.next()
            name = self.ident("index name")
            self.expect_keyword("on")
            dataset = self.qualified_name()
            self.expect_punct("(")
            fieldname = self.ident("field")
            self.expect_punct(")")
            kind = "BTREE"
            if self.accept_keyword("type"):
                tok = self.peek().keyword()
                if tok not in ("btree", "rtree"):
                    raise self.error("expected BTREE or RTREE", ["BTREE", "RTREE"])
                self.next()
                kind = tok.upper()
            return ast.CreateIndex(name, dataset, fieldname, kind)
        if kw == "feed":
            self.next()
            name = self.ident("feed name")
            self.expect_keyword("with")
            config_expr = self.expr()
            if not isinstance(config_expr, ast.ObjectLit):
                raise self.error("feed configuration must be an object literal")
            config = {}
            for fname, fexpr in config_expr.fields:
                if not isinstance(fexpr, ast.Literal):
                    raise self.error("feed configuration values must be literals")
                config[fname] = fexpr.value
            return ast.CreateFeed(name, config)
        if kw == "function":
            self.next()
            name = self.ident("function name")
            params = self._param_list()
            self.expect_punct("{")
            body = self.expr_or_select()
            self.expect_punct("}")
            return ast.CreateFunction(name, params, body)
        if kw == "repetitive":
            self.next()
            self.expect_keyword("channel")
            name = self.ident("channel name")
            self.expect_keyword("using")
            fn = self.ident("function name")
            self.expect_punct("@")
            arity_tok = self.peek()
            if arity_tok.kind != "number" or "." in arity_tok.text:
                raise self.error("expected function arity", ["integer"])
            self.next()
            self.expect_keyword("period")
            period = self._duration_literal()
            dedup = None
            if self.accept_keyword("dedup"):
                self.expect_keyword("by")
                dedup = [self.ident("field")]
                while self.accept_punct("."):
                    dedup.append(self.ident("field"))
            return ast.CreateChannel(name, fn, int(arity_tok.text), period, dedup)
        if kw == "broker":
            self.next()
            name = self.ident("broker name")
            self.expect_keyword("at")
            return ast.CreateBroker(name, self.string())
        if kw == "procedure":
            self.next()
            name = self.ident("procedure name")
            params = self._param_list()
            self.expect_punct("{")
            body = self.parse_statement()
            self.accept_punct(";")
            self.expect_punct("}")
            period = self._duration_literal() if self.accept_keyword("period") else None
            return ast.CreateProcedure(name, params, body, period)
        raise self.error("expected TYPE, DATASET, INDEX, FEED, FUNCTION, "
                         "REPETITIVE CHANNEL, BROKER, or PROCEDURE")

    def _param_list(self) -> list[str]:
        params = []
        self.expect_punct("(")
        if not self.accept_punct(")"):
            params.append(self.ident("parameter"))
            while self.accept_punct(","):
                params.append(self.ident("parameter"))
            self.expect_punct(")")
        return params

    def _duration_literal(self):
        # duration("PT10S") or day_time_duration("PT10S")
        tok = self.peek()
        if tok.kind == "ident" and tok.text in ("duration", "day_time_duration"):
            self.next()
            self.expect_punct("(")
            text = self.string()
            self.expect_punct(")")
            return parse_duration(text)
        raise self.error('expected duration("...")', ["duration"])

    def _type_fields(self) -> list[FieldSpec]:
        fields = []
        self.expect_punct("{")
        while not self.accept_punct("}"):
            fname = self.ident("field name")
            self.expect_punct(":")
            kind, item = self._field_kind()
            optional = self.accept_punct("?")
            fields.append(FieldSpec(fname, kind, optional, item))
            if not self.accept_punct(","):
                self.expect_punct("}")
                break
        return fields

    def _field_kind(self) -> tuple[str, str | None]:
        if self.accept_punct("{"):
            self.expect_punct("{")
            item = self.ident("element type")
            self.expect_punct("}")
            self.expect_punct("}")
            return "multiset", item
        if self.accept_punct("["):
            item = self.ident("element type")
            self.expect_punct("]")
            return "array", item
        return self.ident("type"), None

    # -- expressions -----------------------------------------------------------

    def expr_or_select(self) -> ast.Expr:
        if self.at_keyword("select"):
            return self.select_expr()
        return self.expr()

    def select_expr(self) -> ast.SelectExpr:
        self.expect_keyword("select")
        sel = ast.SelectExpr()
        if self.accept_keyword("value"):
            sel.value = self.expr()
        else:
            sel.items.append(self._select_item())
            while self.accept_punct(","):
                sel.items.append(self._select_item())
        if self.accept_keyword("from"):
            sel.sources.append(self._from_source())
            while self.accept_punct(","):
                sel.sources.append(self._from_source())
        if self.accept_keyword("where"):
            sel.where = self.expr()
        return sel

    def _select_item(self) -> tuple[ast.Expr, str | None]:
        e = self.expr()
        alias = None
        if self.accept_keyword("as"):
            alias = self.ident("alias")
        return (e, alias)

    def _from_source(self) -> ast.FromSource:
        if self.accept_punct("("):
            sub = self.select_expr()
            self.expect_punct(")")
            alias = self.ident("alias")
            return ast.FromSource(sub, alias)
        name = self.qualified_name()
        if self.accept_keyword("as"):
            return ast.FromSource(name, self.ident("alias"))
        tok = self.peek()
        if tok.kind in ("ident", "qident") and tok.keyword() is None:
            return ast.FromSource(name, self.ident())
        return ast.FromSource(name, name.split(".")[-1])

    def expr(self) -> ast.Expr:
        return self._or()

    def _or(self) -> ast.Expr:
        left = self._and()
        while self.at_keyword("or"):
            self.next()
            left = ast.BinOp("OR", left, self._and())
        return left

    def _and(self) -> ast.Expr:
        left = self._not()
        while self.at_keyword("and"):
            self.next()
            left = ast.BinOp("AND", left, self._not())
        return left

    def _not(self) -> ast.Expr:
        if self.accept_keyword("not"):
            return ast.Not(self._not())
        return self._cmp()

    def _cmp(self) -> ast.Expr:
        left = self._add()
        tok = self.peek()
        if tok.kind == "punct" and tok.text in ("=", "!=", "<", "<=", ">", ">="):
            self.next()
            return ast.BinOp(tok.text, left, self._add())
        return left

    def _add(self) -> ast.Expr:
        left = self._mul()
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.text in ("+", "-"):
                self.next()
                left = ast.BinOp(tok.text, left, self._mul())
            else:
                return left

    def _mul(self) -> ast.Expr:
        left = self._unary()
        while True:
            tok = self.peek()
            if tok.kind == "punct" and tok.text in ("*", "/"):
                self.next()
                left = ast.BinOp(tok.text, left, self._unary())
            else:
                return left

    def _unary(self) -> ast.Expr:
        if self.accept_punct("-"):
            return ast.Neg(self._unary())
        return self._postfix()

    def _postfix(self) -> ast.Expr:
        e = self._primary()
        while self.peek().kind == "punct" and self.peek().text == ".":
            self.next()
            e = ast.FieldAccess(e, self.ident("field name"))
        return e

    def _primary(self) -> ast.Expr:
        tok = self.peek()
        if tok.kind == "number":
            self.next()
            text = tok.text
            if "." in text or "e" in text or "E" in text:
                return ast.Literal(float(text))
            return ast.Literal(int(text))
        if tok.kind == "string":
            self.next()
            return ast.Literal(_unquote(tok.text))
        kw = tok.keyword()
        if kw == "null":
            self.next()
            return ast.Literal(None)
        if kw == "true":
            self.next()
            return ast.Literal(True)
        if kw == "false":
            self.next()
            return ast.Literal(False)
        if kw == "select":
            return self.select_expr()
        if tok.kind in ("ident", "qident") and kw is None:
            name = self.ident()
            if self.accept_punct("("):
                args = []
                if not self.accept_punct(")"):
                    args.append(self.expr_or_select())
                    while self.accept_punct(","):
                        args.append(self.expr_or_select())
                    self.expect_punct(")")
                return ast.Call(name, args)
            return ast.Ident(name)
        if tok.kind == "punct" and tok.text == "(":
            self.next()
            inner = self.expr_or_select()
            self.expect_punct(")")
            return inner
        if tok.kind == "punct" and tok.text == "{":
            if self.peek(1).kind == "punct" and self.peek(1).text == "{":
                self.next()
                self.next()
                items = []
                if not self._bag_close():
                    items.append(self.expr())
                    while self.accept_punct(","):
                        items.append(self.expr())
                    if not self._bag_close():
                        raise self.error("expected }}")
                return ast.BagLit(items)
            return self._object_lit()
        if tok.kind == "punct" and tok.text == "[":
            self.next()
            items = []
            if not self.accept_punct("]"):
                items.append(self.expr())
                while self.accept_punct(","):
                    items.append(self.expr())
                self.expect_punct("]")
            return ast.ArrayLit(items)
        raise self.error("expected an expression")

    def _bag_close(self) -> bool:
        if (self.peek().kind == "punct" and self.peek().text == "}"
                and self.peek(1).kind == "punct" and self.peek(1).text == "}"):
            self.next()
            self.next()
            return True
        return False

    def _object_lit(self) -> ast.ObjectLit:
        self.expect_punct("{")
        fields = []
        if not self.accept_punct("}"):
            while True:
                tok = self.peek()
                if tok.kind == "string":
                    self.next()
                    name = _unquote(tok.text)
                else:
                    name = self.ident("field name")
                self.expect_punct(":")
                fields.append((name, self.expr_or_select()))
                if not self.accept_punct(","):
                    break
            self.expect_punct("}")
        return ast.ObjectLit(fields)


def parse(text: str) -> ast.Statement:
    """Parse exactly one statement."""
    p = Parser(text)
    stmt = p.parse_statement()
    while p.accept_punct(";"):
        pass
    if p.peek().kind != "eof":
        raise p.error("trailing input after statement")
    return stmt


def parse_all(text: str) -> list[ast.Statement]:
    return Parser(text).parse_statements()


def parse_expr(text: str) -> ast.Expr:
    p = Parser(text)
    e = p.expr_or_select()
    if p.peek().kind != "eof":
        raise p.error("trailing input after expression")
    return e
