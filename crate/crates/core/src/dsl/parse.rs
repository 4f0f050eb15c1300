//! Recursive-descent parser for the feature grammar.

use crate::error::{Error, Result};

use super::{
    Activator, AggKind, CycleSelector, Direction, FeatureExpr, Segment, SignalKind,
};

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor { text, pos: 0 }
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.text[self.pos..]
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            Err(self.err(format!("expected `{}`", token)))
        }
    }

    fn skip_ws(&mut self) {
        while self.rest().starts_with(' ') {
            self.pos += 1;
        }
    }

    /// Longest run of ASCII alphanumerics (identifiers never contain `_`
    /// except signal tokens, which are handled separately).
    fn ident(&mut self) -> Result<&'a str> {
        let rest = self.rest();
        let len = rest
            .bytes()
            .take_while(|b| b.is_ascii_alphanumeric())
            .count();
        if len == 0 {
            return Err(self.err("expected identifier"));
        }
        let out = &rest[..len];
        self.pos += len;
        Ok(out)
    }

    fn integer(&mut self) -> Result<u32> {
        let rest = self.rest();
        let len = rest.bytes().take_while(|b| b.is_ascii_digit()).count();
        if len == 0 {
            return Err(self.err("expected integer"));
        }
        let value: u32 = rest[..len]
            .parse()
            .map_err(|_| self.err("integer out of range"))?;
        self.pos += len;
        Ok(value)
    }

    fn agg(&mut self) -> Result<AggKind> {
        let start = self.pos;
        let word = self.ident()?;
        AggKind::ALL
            .iter()
            .copied()
            .find(|a| a.token() == word)
            .ok_or_else(|| Error::Parse {
                offset: start,
                message: format!("unknown aggregator `{}`", word),
            })
    }

    /// `a/b` pair inside parentheses.
    fn ratio(&mut self) -> Result<(u32, u32)> {
        self.expect("(")?;
        let a = self.integer()?;
        self.expect("/")?;
        let b = self.integer()?;
        self.expect(")")?;
        Ok((a, b))
    }

    fn cycle(&mut self) -> Result<(u32, u32)> {
        self.expect("Cycle")?;
        self.ratio()
    }

    fn selector(&mut self) -> Result<CycleSelector> {
        let (a, b) = self.cycle()?;
        let save = self.pos;
        self.skip_ws();
        if self.rest().starts_with('-') {
            self.pos += 1;
            self.skip_ws();
            let at = self.pos;
            let (c, d) = self.cycle()?;
            if b != d {
                return Err(Error::Parse {
                    offset: at,
                    message: format!(
                        "difference selector denominators must match ({} vs {})",
                        b, d
                    ),
                });
            }
            Ok(CycleSelector::Diff {
                first: a,
                second: c,
                total: b,
            })
        } else {
            self.pos = save;
            Ok(CycleSelector::Single { index: a, total: b })
        }
    }

    /// Signal token: stem, underscore, direction suffix.
    fn signal(&mut self) -> Result<(SignalKind, Direction)> {
        let start = self.pos;
        // Longest stem first so `VQ` is not read as `V`.
        let mut stems: Vec<SignalKind> = SignalKind::ALL.to_vec();
        stems.sort_by_key(|s| std::cmp::Reverse(s.stem().len()));
        for kind in stems {
            let stem = kind.stem();
            if self.rest().starts_with(stem) {
                let after = &self.rest()[stem.len()..];
                let dir = if after.starts_with("_c") {
                    Some(Direction::Charge)
                } else if after.starts_with("_d") {
                    Some(Direction::Discharge)
                } else {
                    None
                };
                if let Some(direction) = dir {
                    self.pos += stem.len() + 2;
                    return Ok((kind, direction));
                }
            }
        }
        Err(Error::Parse {
            offset: start,
            message: "expected signal token such as `VQ_d`".into(),
        })
    }

    fn activator(&mut self) -> Result<Activator> {
        let start = self.pos;
        let word = self.ident()?;
        Activator::ALL
            .iter()
            .copied()
            .find(|a| a.token() == word)
            .ok_or_else(|| Error::Parse {
                offset: start,
                message: format!("unknown activator `{}`", word),
            })
    }
}

/// Parse one feature expression. Malformed text yields
/// [`Error::Parse`] with the byte offset of the failure; structurally
/// valid text with out-of-range indices yields [`Error::Validation`].
///
/// ```
/// use cyclekit::dsl::parse;
///
/// let name = "identity(nanmax(Cycle(6/7))[nanvar(VQ_d(1/4))])";
/// let expr = parse(name).unwrap();
/// assert_eq!(expr.render(), name);
/// ```
pub fn parse(text: &str) -> Result<FeatureExpr> {
    let mut cur = Cursor::new(text);
    let activator = cur.activator()?;
    cur.expect("(")?;
    let outer = cur.agg()?;
    cur.expect("(")?;
    let selector = cur.selector()?;
    cur.expect(")")?;
    cur.expect("[")?;
    let inner = cur.agg()?;
    cur.expect("(")?;
    let (signal, direction) = cur.signal()?;
    let (seg_index, seg_total) = cur.ratio()?;
    cur.expect(")")?;
    cur.expect("]")?;
    cur.expect(")")?;
    if cur.pos != text.len() {
        return Err(cur.err("trailing characters after expression"));
    }
    let expr = FeatureExpr {
        activator,
        outer,
        selector,
        inner,
        signal,
        direction,
        segment: Segment {
            index: seg_index,
            total: seg_total,
        },
    };
    expr.validate()?;
    Ok(expr)
}
