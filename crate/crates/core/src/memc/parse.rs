//! Recursive-descent parser and pretty-printer for MemC.

use super::lex::{tokenize, Lexed, Tok};
use super::{AStmt, BinOp, Expr, FunctionDef, GlobalDecl, LValue, MemCProgram, UnOp, VarKind};
use crate::sym::Field;
use std::fmt;

#[derive(Clone, Debug)]
pub struct ParseError {
    pub msg: String,
    pub line: usize,
    pub col: usize,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.col, self.msg)
    }
}

impl std::error::Error for ParseError {}

struct P {
    toks: Vec<Lexed>,
    pos: usize,
    request_size: Option<String>,
}

type PR<T> = Result<T, ParseError>;

impl P {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|l| &l.tok)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|l| l.tok.clone());
        self.pos += 1;
        t
    }

    fn here(&self) -> (usize, usize) {
        self.toks
            .get(self.pos.min(self.toks.len().saturating_sub(1)))
            .map(|l| (l.line, l.col))
            .unwrap_or((0, 0))
    }

    fn err<T>(&self, msg: impl Into<String>) -> PR<T> {
        let (line, col) = self.here();
        Err(ParseError { msg: msg.into(), line, col })
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == Some(t) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, t: &Tok) -> PR<()> {
        if self.eat(t) {
            Ok(())
        } else {
            self.err(format!("expected {:?}, found {:?}", t, self.peek()))
        }
    }

    fn ident(&mut self) -> PR<String> {
        match self.bump() {
            Some(Tok::Ident(s)) => Ok(s),
            other => {
                self.pos -= 1;
                self.err(format!("expected identifier, found {:?}", other))
            }
        }
    }

    /// True when the upcoming tokens start a type.
    fn at_type(&self) -> bool {
        match self.peek() {
            Some(Tok::Void) | Some(Tok::Struct) => true,
            Some(Tok::Ident(s)) => {
                matches!(s.as_str(), "HDR" | "size_t" | "int" | "unsigned" | "bool")
            }
            _ => false,
        }
    }

    /// Parses a type; returns (is_void_base, pointer_depth).
    fn parse_type(&mut self) -> PR<(bool, usize)> {
        let void_base = match self.bump() {
            Some(Tok::Void) => true,
            Some(Tok::Struct) => {
                self.ident()?;
                false
            }
            Some(Tok::Ident(s))
                if matches!(s.as_str(), "HDR" | "size_t" | "int" | "unsigned" | "bool") =>
            {
                false
            }
            other => {
                self.pos -= 1;
                return self.err(format!("expected a type, found {:?}", other));
            }
        };
        let mut stars = 0;
        while self.eat(&Tok::Star) {
            stars += 1;
        }
        Ok((void_base, stars))
    }

    fn kind_of(&self, void_base: bool, stars: usize) -> PR<VarKind> {
        if stars > 0 {
            Ok(VarKind::Address)
        } else if void_base {
            self.err("void is not a value type")
        } else {
            // HDR by value is not supported; scalar types are integers
            Ok(VarKind::Integer)
        }
    }

    fn program(&mut self) -> PR<MemCProgram> {
        let mut globals = Vec::new();
        let mut functions = Vec::new();
        while self.peek().is_some() {
            match self.peek() {
                Some(Tok::Typedef) => self.typedef_hdr()?,
                _ => {
                    self.eat(&Tok::Static);
                    if !self.at_type() {
                        return self.err(format!(
                            "expected declaration or function, found {:?}",
                            self.peek()
                        ));
                    }
                    let (void_base, stars) = self.parse_type()?;
                    let name = self.ident()?;
                    if self.peek() == Some(&Tok::LParen) {
                        functions.push(self.function(void_base, stars, name)?);
                    } else {
                        // possibly a multi-declarator global list
                        let kind = self.kind_of(void_base, stars)?;
                        let mut names = vec![(name, kind)];
                        let mut inits = vec![None];
                        if self.eat(&Tok::Assign) {
                            *inits.last_mut().unwrap() = Some(self.expr()?);
                        }
                        while self.eat(&Tok::Comma) {
                            let mut st = 0;
                            while self.eat(&Tok::Star) {
                                st += 1;
                            }
                            let k = if st > 0 { VarKind::Address } else { kind };
                            names.push((self.ident()?, k));
                            inits.push(None);
                            if self.eat(&Tok::Assign) {
                                *inits.last_mut().unwrap() = Some(self.expr()?);
                            }
                        }
                        self.expect(&Tok::Semi)?;
                        for ((n, k), init) in names.into_iter().zip(inits) {
                            globals.push(GlobalDecl { name: n, kind: k, init });
                        }
                    }
                }
            }
        }
        if functions.is_empty() {
            return Err(ParseError {
                msg: "no entry function".into(),
                line: 0,
                col: 0,
            });
        }
        let entry = if functions.iter().any(|f| f.name == "main") {
            "main".to_string()
        } else {
            functions[0].name.clone()
        };
        if !globals.iter().any(|g| g.name == "hli") {
            globals.push(GlobalDecl {
                name: "hli".into(),
                kind: VarKind::Address,
                init: None,
            });
        }
        Ok(MemCProgram { globals, functions, entry, hdr_size_bytes: 8 })
    }

    /// `typedef struct hdr_s { ... } HDR;` — validates the fixed HDR model.
    fn typedef_hdr(&mut self) -> PR<()> {
        self.expect(&Tok::Typedef)?;
        self.expect(&Tok::Struct)?;
        self.ident()?;
        self.expect(&Tok::LBrace)?;
        let mut seen = Vec::new();
        while !self.eat(&Tok::RBrace) {
            let ghost = self.eat(&Tok::Ghost);
            if self.eat(&Tok::Struct) {
                self.ident()?;
            } else {
                match self.bump() {
                    Some(Tok::Ident(_)) | Some(Tok::Void) => {}
                    other => return self.err(format!("bad field type {:?}", other)),
                }
            }
            while self.eat(&Tok::Star) {}
            let fname = self.ident()?;
            self.expect(&Tok::Semi)?;
            seen.push((fname, ghost));
        }
        self.expect(&Tok::Semi.clone())
            .or_else(|_| -> PR<()> {
                // `} HDR;`
                self.ident()?;
                self.expect(&Tok::Semi)
            })?;
        let names: Vec<&str> = seen.iter().map(|(n, _)| n.as_str()).collect();
        if names != ["fnx", "size", "isfree"] {
            return self.err(format!(
                "HDR must declare fnx, size and ghost isfree (found {:?})",
                names
            ));
        }
        if !seen[2].1 {
            return self.err("isfree must be a ghost field");
        }
        Ok(())
    }

    fn function(&mut self, void_base: bool, stars: usize, name: String) -> PR<FunctionDef> {
        let ret = if stars > 0 {
            Some(VarKind::Address)
        } else if void_base {
            None
        } else {
            Some(VarKind::Integer)
        };
        self.expect(&Tok::LParen)?;
        let mut params = Vec::new();
        if !self.eat(&Tok::RParen) {
            if self.peek() == Some(&Tok::Void) && self.peek2() == Some(&Tok::RParen) {
                self.bump();
                self.expect(&Tok::RParen)?;
            } else {
                loop {
                    let (vb, st) = self.parse_type()?;
                    let kind = self.kind_of(vb, st)?;
                    let pname = self.ident()?;
                    params.push((pname, kind));
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(&Tok::RParen)?;
            }
        }
        self.request_size = None;
        self.expect(&Tok::LBrace)?;
        let body = self.block()?;
        Ok(FunctionDef {
            name,
            params,
            ret,
            body,
            request_size: self.request_size.take(),
        })
    }

    /// Statements up to (and consuming) the closing brace.
    fn block(&mut self) -> PR<Vec<AStmt>> {
        let mut out = Vec::new();
        while !self.eat(&Tok::RBrace) {
            if self.peek().is_none() {
                return self.err("unexpected end of input in block");
            }
            out.extend(self.stmt()?);
        }
        Ok(out)
    }

    fn stmt_or_block(&mut self) -> PR<Vec<AStmt>> {
        if self.eat(&Tok::LBrace) {
            self.block()
        } else {
            self.stmt()
        }
    }

    fn stmt(&mut self) -> PR<Vec<AStmt>> {
        match self.peek().cloned() {
            Some(Tok::Semi) => {
                self.bump();
                Ok(vec![])
            }
            Some(Tok::LabelMark(name)) => {
                self.bump();
                Ok(vec![AStmt::Label(name)])
            }
            Some(Tok::RequestSize(name)) => {
                self.bump();
                self.request_size = Some(name);
                Ok(vec![])
            }
            Some(Tok::Ghost) => {
                self.bump();
                let inner = self.stmt()?;
                Ok(inner
                    .into_iter()
                    .map(|s| match s {
                        AStmt::Assign { lhs, rhs, .. } => {
                            AStmt::Assign { lhs, rhs, ghost: true }
                        }
                        AStmt::Decl { name, kind, init, .. } => {
                            AStmt::Decl { name, kind, init, ghost: true }
                        }
                        other => other,
                    })
                    .collect())
            }
            Some(Tok::If) => {
                self.bump();
                self.expect(&Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(&Tok::RParen)?;
                let then_branch = self.stmt_or_block()?;
                let else_branch = if self.eat(&Tok::Else) {
                    self.stmt_or_block()?
                } else {
                    vec![]
                };
                Ok(vec![AStmt::If { cond, then_branch, else_branch }])
            }
            Some(Tok::While) => {
                self.bump();
                self.expect(&Tok::LParen)?;
                let cond = self.expr()?;
                self.expect(&Tok::RParen)?;
                let body = self.stmt_or_block()?;
                Ok(vec![AStmt::While { cond, body, label: None }])
            }
            Some(Tok::For) => {
                self.bump();
                self.expect(&Tok::LParen)?;
                let init = if self.peek() == Some(&Tok::Semi) {
                    vec![]
                } else {
                    self.assign_list()?
                };
                self.expect(&Tok::Semi)?;
                let cond = if self.peek() == Some(&Tok::Semi) {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect(&Tok::Semi)?;
                let step = if self.peek() == Some(&Tok::RParen) {
                    vec![]
                } else {
                    self.assign_list()?
                };
                self.expect(&Tok::RParen)?;
                let body = if self.eat(&Tok::Semi) {
                    vec![]
                } else {
                    self.stmt_or_block()?
                };
                Ok(vec![AStmt::For { init, cond, step, body, label: None }])
            }
            Some(Tok::Return) => {
                self.bump();
                let e = if self.peek() == Some(&Tok::Semi) {
                    None
                } else {
                    Some(self.expr()?)
                };
                self.expect(&Tok::Semi)?;
                Ok(vec![AStmt::Return(e)])
            }
            Some(Tok::Break) => {
                self.bump();
                self.expect(&Tok::Semi)?;
                Ok(vec![AStmt::Break])
            }
            _ if self.at_type() => {
                let (vb, stars) = self.parse_type()?;
                let mut out = Vec::new();
                loop {
                    let mut st = stars;
                    while self.eat(&Tok::Star) {
                        st += 1;
                    }
                    let kind = self.kind_of(vb, st)?;
                    let name = self.ident()?;
                    let init = if self.eat(&Tok::Assign) {
                        Some(self.expr()?)
                    } else {
                        None
                    };
                    out.push(AStmt::Decl { name, kind, init, ghost: false });
                    if !self.eat(&Tok::Comma) {
                        break;
                    }
                }
                self.expect(&Tok::Semi)?;
                Ok(out)
            }
            _ => {
                let s = self.simple_stmt()?;
                self.expect(&Tok::Semi)?;
                Ok(vec![s])
            }
        }
    }

    /// One assignment or call (no trailing `;`).
    fn simple_stmt(&mut self) -> PR<AStmt> {
        let e = self.expr()?;
        match self.peek() {
            Some(Tok::Assign) => {
                self.bump();
                let rhs = self.expr()?;
                let lhs = self.lvalue_of(e)?;
                Ok(AStmt::Assign { lhs, rhs, ghost: false })
            }
            Some(Tok::PlusAssign) | Some(Tok::MinusAssign) => {
                let op = if self.peek() == Some(&Tok::PlusAssign) {
                    BinOp::Add
                } else {
                    BinOp::Sub
                };
                self.bump();
                let rhs = self.expr()?;
                let lhs = self.lvalue_of(e.clone())?;
                Ok(AStmt::Assign {
                    lhs,
                    rhs: Expr::Binary(op, Box::new(e), Box::new(rhs)),
                    ghost: false,
                })
            }
            _ => Ok(AStmt::ExprStmt(e)),
        }
    }

    fn assign_list(&mut self) -> PR<Vec<AStmt>> {
        let mut out = vec![self.simple_stmt()?];
        while self.eat(&Tok::Comma) {
            out.push(self.simple_stmt()?);
        }
        Ok(out)
    }

    fn lvalue_of(&self, e: Expr) -> PR<LValue> {
        match e {
            Expr::Var(v) => Ok(LValue::Var(v)),
            Expr::FieldAcc(v, f) => Ok(LValue::FieldAcc(v, f)),
            other => self.err(format!("unsupported assignment target {:?}", other)),
        }
    }

    // precedence climbing
    fn expr(&mut self) -> PR<Expr> {
        self.lor()
    }

    fn lor(&mut self) -> PR<Expr> {
        let mut e = self.land()?;
        while self.eat(&Tok::OrOr) {
            let r = self.land()?;
            e = Expr::Binary(BinOp::LOr, Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn land(&mut self) -> PR<Expr> {
        let mut e = self.cmp()?;
        while self.eat(&Tok::AndAnd) {
            let r = self.cmp()?;
            e = Expr::Binary(BinOp::LAnd, Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn cmp(&mut self) -> PR<Expr> {
        let e = self.bitor()?;
        let op = match self.peek() {
            Some(Tok::EqEq) => Some(BinOp::Eq),
            Some(Tok::NotEq) => Some(BinOp::Ne),
            Some(Tok::Lt) => Some(BinOp::Lt),
            Some(Tok::Le) => Some(BinOp::Le),
            Some(Tok::Gt) => Some(BinOp::Gt),
            Some(Tok::Ge) => Some(BinOp::Ge),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            let r = self.bitor()?;
            Ok(Expr::Binary(op, Box::new(e), Box::new(r)))
        } else {
            Ok(e)
        }
    }

    fn bitor(&mut self) -> PR<Expr> {
        let mut e = self.bitand()?;
        while self.eat(&Tok::Pipe) {
            let r = self.bitand()?;
            e = Expr::Binary(BinOp::BitOr, Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn bitand(&mut self) -> PR<Expr> {
        let mut e = self.add()?;
        while self.eat(&Tok::Amp) {
            let r = self.add()?;
            e = Expr::Binary(BinOp::BitAnd, Box::new(e), Box::new(r));
        }
        Ok(e)
    }

    fn add(&mut self) -> PR<Expr> {
        let mut e = self.mul()?;
        loop {
            if self.eat(&Tok::Plus) {
                let r = self.mul()?;
                e = Expr::Binary(BinOp::Add, Box::new(e), Box::new(r));
            } else if self.eat(&Tok::Minus) {
                let r = self.mul()?;
                e = Expr::Binary(BinOp::Sub, Box::new(e), Box::new(r));
            } else {
                return Ok(e);
            }
        }
    }

    fn mul(&mut self) -> PR<Expr> {
        let mut e = self.unary()?;
        loop {
            if self.eat(&Tok::Star) {
                let r = self.unary()?;
                e = Expr::Binary(BinOp::Mul, Box::new(e), Box::new(r));
            } else if self.eat(&Tok::Slash) {
                let r = self.unary()?;
                e = Expr::Binary(BinOp::Div, Box::new(e), Box::new(r));
            } else if self.peek() == Some(&Tok::Percent) {
                return self.err("modulo is not supported");
            } else {
                return Ok(e);
            }
        }
    }

    fn unary(&mut self) -> PR<Expr> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.bump();
                Ok(Expr::Unary(UnOp::Neg, Box::new(self.unary()?)))
            }
            Some(Tok::Bang) => {
                self.bump();
                Ok(Expr::Unary(UnOp::Not, Box::new(self.unary()?)))
            }
            Some(Tok::Tilde) => {
                self.bump();
                Ok(Expr::Unary(UnOp::BitNot, Box::new(self.unary()?)))
            }
            Some(Tok::LParen) => {
                // cast or parenthesized expression
                let save = self.pos;
                self.bump();
                if self.at_type() {
                    let ty = self.parse_type();
                    if ty.is_ok() && self.eat(&Tok::RParen) {
                        let inner = self.unary()?;
                        return Ok(Expr::Cast(Box::new(inner)));
                    }
                }
                self.pos = save;
                self.bump();
                let e = self.expr()?;
                self.expect(&Tok::RParen)?;
                self.postfix(e)
            }
            _ => {
                let e = self.primary()?;
                self.postfix(e)
            }
        }
    }

    fn postfix(&mut self, mut e: Expr) -> PR<Expr> {
        while self.peek() == Some(&Tok::Arrow) {
            self.bump();
            let fname = self.ident()?;
            let field = match fname.as_str() {
                "fnx" => Field::Fnx,
                "size" => Field::Size,
                "isfree" => Field::IsFree,
                other => return self.err(format!("unknown HDR field {}", other)),
            };
            match e {
                Expr::Var(v) => e = Expr::FieldAcc(v, field),
                Expr::Cast(inner) => match *inner {
                    Expr::Var(v) => e = Expr::FieldAcc(v, field),
                    _ => {
                        return self.err(
                            "chained field access is not supported; introduce a temporary",
                        )
                    }
                },
                _ => {
                    return self
                        .err("chained field access is not supported; introduce a temporary")
                }
            }
        }
        Ok(e)
    }

    fn primary(&mut self) -> PR<Expr> {
        match self.bump() {
            Some(Tok::Int(v)) => Ok(Expr::Int(v)),
            Some(Tok::Str(s)) => Ok(Expr::Str(s)),
            Some(Tok::Null) => Ok(Expr::Null),
            Some(Tok::True) => Ok(Expr::Bool(true)),
            Some(Tok::False) => Ok(Expr::Bool(false)),
            Some(Tok::Sizeof) => {
                self.expect(&Tok::LParen)?;
                match self.bump() {
                    Some(Tok::Ident(s)) if s == "HDR" => {}
                    other => return self.err(format!("sizeof({:?}) is not supported", other)),
                }
                self.expect(&Tok::RParen)?;
                Ok(Expr::SizeofHdr)
            }
            Some(Tok::Ident(name)) => {
                if self.peek() == Some(&Tok::LParen) {
                    self.bump();
                    let mut args = Vec::new();
                    if !self.eat(&Tok::RParen) {
                        loop {
                            args.push(self.expr()?);
                            if !self.eat(&Tok::Comma) {
                                break;
                            }
                        }
                        self.expect(&Tok::RParen)?;
                    }
                    Ok(Expr::Call(name, args))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            other => {
                self.pos -= 1;
                self.err(format!("unexpected token {:?}", other))
            }
        }
    }
}

/// Parses MemC source text into a program (default header size 8 bytes).
pub fn parse(src: &str) -> Result<MemCProgram, ParseError> {
    let toks = tokenize(src).map_err(|e| ParseError { msg: e.msg, line: e.line, col: e.col })?;
    let mut p = P { toks, pos: 0, request_size: None };
    p.program()
}

// --- pretty printing ---------------------------------------------------------

fn pexpr(e: &Expr, out: &mut String) {
    match e {
        Expr::Int(v) => out.push_str(&v.to_string()),
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Null => out.push_str("NULL"),
        Expr::SizeofHdr => out.push_str("sizeof(HDR)"),
        Expr::Str(s) => {
            out.push('"');
            out.push_str(s);
            out.push('"');
        }
        Expr::Var(v) => out.push_str(v),
        Expr::FieldAcc(v, f) => {
            out.push_str(v);
            out.push_str("->");
            out.push_str(f.name());
        }
        Expr::Unary(op, inner) => {
            out.push_str(match op {
                UnOp::Neg => "-",
                UnOp::Not => "!",
                UnOp::BitNot => "~",
            });
            pexpr_paren(inner, out);
        }
        Expr::Binary(op, a, b) => {
            pexpr_paren(a, out);
            out.push_str(match op {
                BinOp::Add => " + ",
                BinOp::Sub => " - ",
                BinOp::Mul => " * ",
                BinOp::Div => " / ",
                BinOp::BitAnd => " & ",
                BinOp::BitOr => " | ",
                BinOp::Eq => " == ",
                BinOp::Ne => " != ",
                BinOp::Lt => " < ",
                BinOp::Le => " <= ",
                BinOp::Gt => " > ",
                BinOp::Ge => " >= ",
                BinOp::LAnd => " && ",
                BinOp::LOr => " || ",
            });
            pexpr_paren(b, out);
        }
        Expr::Call(f, args) => {
            out.push_str(f);
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                pexpr(a, out);
            }
            out.push(')');
        }
        Expr::Cast(inner) => {
            out.push_str("(HDR *)");
            pexpr_paren(inner, out);
        }
    }
}

fn pexpr_paren(e: &Expr, out: &mut String) {
    let atomic = matches!(
        e,
        Expr::Int(_)
            | Expr::Bool(_)
            | Expr::Null
            | Expr::SizeofHdr
            | Expr::Var(_)
            | Expr::FieldAcc(..)
            | Expr::Call(..)
            | Expr::Str(_)
    );
    if atomic {
        pexpr(e, out);
    } else {
        out.push('(');
        pexpr(e, out);
        out.push(')');
    }
}

fn pstmt(s: &AStmt, indent: usize, out: &mut String) {
    let pad = "    ".repeat(indent);
    match s {
        AStmt::Decl { name, kind, init, ghost } => {
            out.push_str(&pad);
            if *ghost {
                out.push_str("//@ghost ");
            }
            out.push_str(&format!("{}{}", kind, name));
            if let Some(e) = init {
                out.push_str(" = ");
                pexpr(e, out);
            }
            out.push_str(";\n");
        }
        AStmt::Assign { lhs, rhs, ghost } => {
            out.push_str(&pad);
            if *ghost {
                out.push_str("//@ghost ");
            }
            match lhs {
                LValue::Var(v) => out.push_str(v),
                LValue::FieldAcc(v, f) => out.push_str(&format!("{}->{}", v, f.name())),
            }
            out.push_str(" = ");
            pexpr(rhs, out);
            out.push_str(";\n");
        }
        AStmt::If { cond, then_branch, else_branch } => {
            out.push_str(&pad);
            out.push_str("if (");
            pexpr(cond, out);
            out.push_str(") {\n");
            for t in then_branch {
                pstmt(t, indent + 1, out);
            }
            out.push_str(&pad);
            out.push('}');
            if !else_branch.is_empty() {
                out.push_str(" else {\n");
                for t in else_branch {
                    pstmt(t, indent + 1, out);
                }
                out.push_str(&pad);
                out.push('}');
            }
            out.push('\n');
        }
        AStmt::While { cond, body, .. } => {
            out.push_str(&pad);
            out.push_str("while (");
            pexpr(cond, out);
            out.push_str(") {\n");
            for t in body {
                pstmt(t, indent + 1, out);
            }
            out.push_str(&pad);
            out.push_str("}\n");
        }
        AStmt::For { init, cond, step, body, .. } => {
            out.push_str(&pad);
            out.push_str("for (");
            for (i, s) in init.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                pinline(s, out);
            }
            out.push_str("; ");
            if let Some(c) = cond {
                pexpr(c, out);
            }
            out.push_str("; ");
            for (i, s) in step.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                pinline(s, out);
            }
            out.push_str(") {\n");
            for t in body {
                pstmt(t, indent + 1, out);
            }
            out.push_str(&pad);
            out.push_str("}\n");
        }
        AStmt::Return(e) => {
            out.push_str(&pad);
            out.push_str("return");
            if let Some(e) = e {
                out.push(' ');
                pexpr(e, out);
            }
            out.push_str(";\n");
        }
        AStmt::ExprStmt(e) => {
            out.push_str(&pad);
            pexpr(e, out);
            out.push_str(";\n");
        }
        AStmt::Break => {
            out.push_str(&pad);
            out.push_str("break;\n");
        }
        AStmt::Label(l) => {
            out.push_str(&pad);
            out.push_str(&format!("//@label {}\n", l));
        }
    }
}

fn pinline(s: &AStmt, out: &mut String) {
    match s {
        AStmt::Assign { lhs, rhs, .. } => {
            match lhs {
                LValue::Var(v) => out.push_str(v),
                LValue::FieldAcc(v, f) => out.push_str(&format!("{}->{}", v, f.name())),
            }
            out.push_str(" = ");
            pexpr(rhs, out);
        }
        AStmt::ExprStmt(e) => pexpr(e, out),
        other => out.push_str(&format!("/* {:?} */", other)),
    }
}

/// Prints a program back to parseable MemC source.
pub fn pretty(prog: &MemCProgram) -> String {
    let mut out = String::new();
    out.push_str("typedef struct hdr_s {\n");
    out.push_str("    struct hdr_s *fnx;\n");
    out.push_str("    size_t size;\n");
    out.push_str("    //@ghost bool isfree;\n");
    out.push_str("} HDR;\n\n");
    for g in &prog.globals {
        if g.name == "hli" {
            continue; // implicit ghost
        }
        out.push_str(&format!("static {}{}", g.kind, g.name));
        if let Some(e) = &g.init {
            out.push_str(" = ");
            pexpr(e, &mut out);
        }
        out.push_str(";\n");
    }
    out.push('\n');
    for f in &prog.functions {
        let ret = match f.ret {
            None => "void ".to_string(),
            Some(VarKind::Integer) => "int ".to_string(),
            Some(VarKind::Address) => "void *".to_string(),
        };
        out.push_str(&format!("{}{}(", ret, f.name));
        if f.params.is_empty() {
            out.push_str("void");
        }
        for (i, (p, k)) in f.params.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(&format!("{}{}", k, p));
        }
        out.push_str(") {\n");
        if let Some(r) = &f.request_size {
            out.push_str(&format!("    //@request_size {}\n", r));
        }
        for s in &f.body {
            pstmt(s, 1, &mut out);
        }
        out.push_str("}\n\n");
    }
    out
}
